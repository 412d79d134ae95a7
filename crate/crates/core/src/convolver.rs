//! Linear convolution: a direct time-domain reference and a uniformly
//! partitioned overlap-save engine with a frequency-domain delay line.

use std::sync::Arc;

use realfft::num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

pub const DEFAULT_BLOCK_SIZE: usize = 4096;

/// Uniform partitioning of an impulse response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionPlan {
    pub block_size: usize,
    pub ir_partitions: usize,
    pub fft_size: usize,
}

impl PartitionPlan {
    pub fn new(block_size: usize, ir_len: usize) -> Result<Self> {
        if block_size < 64 || !block_size.is_power_of_two() {
            return Err(Error::invalid(format!(
                "block size {block_size} must be a power of two >= 64"
            )));
        }
        if ir_len == 0 {
            return Err(Error::invalid("impulse response is empty"));
        }
        Ok(Self {
            block_size,
            ir_partitions: ir_len.div_ceil(block_size),
            fft_size: 2 * block_size,
        })
    }

    /// Plan with the default 4096-sample block.
    pub fn for_ir(ir_len: usize) -> Result<Self> {
        Self::new(DEFAULT_BLOCK_SIZE, ir_len)
    }
}

/// O(N·M) full linear convolution.
pub fn convolve_direct(signal: &[f64], ir: &[f64]) -> Result<Vec<f64>> {
    if signal.is_empty() || ir.is_empty() {
        return Err(Error::invalid("convolution inputs must be non-empty"));
    }
    let mut out = vec![0.0; signal.len() + ir.len() - 1];
    for (i, &s) in signal.iter().enumerate() {
        for (o, &h) in out[i..i + ir.len()].iter_mut().zip(ir) {
            *o += s * h;
        }
    }
    Ok(out)
}

/// Impulse response transformed into per-partition spectra. Immutable and
/// shareable; every call to [`PartitionedConvolver::convolve`] owns its own
/// delay line.
pub struct PartitionedConvolver {
    plan: PartitionPlan,
    ir_len: usize,
    partitions: Vec<Vec<Complex<f64>>>,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

impl PartitionedConvolver {
    pub fn new(ir: &[f64], plan: PartitionPlan) -> Result<Self> {
        if ir.is_empty() {
            return Err(Error::invalid("impulse response is empty"));
        }
        if plan.ir_partitions != ir.len().div_ceil(plan.block_size) || plan.fft_size != 2 * plan.block_size {
            return Err(Error::invalid(format!(
                "plan {plan:?} does not match impulse response of {} samples",
                ir.len()
            )));
        }
        let mut planner = RealFftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(plan.fft_size);
        let inverse = planner.plan_fft_inverse(plan.fft_size);
        let b = plan.block_size;
        let mut scratch = forward.make_input_vec();
        let partitions = ir
            .chunks(b)
            .map(|part| {
                scratch.iter_mut().for_each(|v| *v = 0.0);
                scratch[..part.len()].copy_from_slice(part);
                let mut spec = forward.make_output_vec();
                forward
                    .process(&mut scratch, &mut spec)
                    .expect("buffer sizes come from the planner");
                spec
            })
            .collect();
        Ok(Self {
            plan,
            ir_len: ir.len(),
            partitions,
            forward,
            inverse,
        })
    }

    pub fn plan(&self) -> PartitionPlan {
        self.plan
    }

    pub fn stream(&self) -> ConvolutionStream<'_> {
        let b = self.plan.block_size;
        ConvolutionStream {
            engine: self,
            window: vec![0.0; 2 * b],
            delay_line: vec![vec![Complex::new(0.0, 0.0); b + 1]; self.plan.ir_partitions],
            head: 0,
            time_buf: self.forward.make_input_vec(),
            spec_buf: self.forward.make_output_vec(),
            acc: self.forward.make_output_vec(),
        }
    }

    /// Full linear convolution, `signal.len() + ir.len() - 1` samples.
    pub fn convolve(&self, signal: &[f64]) -> Result<Vec<f64>> {
        if signal.is_empty() {
            return Err(Error::invalid("signal is empty"));
        }
        let b = self.plan.block_size;
        let out_len = signal.len() + self.ir_len - 1;
        let mut out = Vec::with_capacity(out_len.div_ceil(b) * b);
        let mut stream = self.stream();
        let mut block = vec![0.0; b];
        for j in 0..out_len.div_ceil(b) {
            let start = (j * b).min(signal.len());
            let end = ((j + 1) * b).min(signal.len());
            block[..end - start].copy_from_slice(&signal[start..end]);
            block[end - start..].iter_mut().for_each(|v| *v = 0.0);
            out.extend_from_slice(stream.process_block(&block));
        }
        out.truncate(out_len);
        Ok(out)
    }
}

/// Block-by-block overlap-save state. Single owner.
pub struct ConvolutionStream<'a> {
    engine: &'a PartitionedConvolver,
    window: Vec<f64>,
    delay_line: Vec<Vec<Complex<f64>>>,
    head: usize,
    time_buf: Vec<f64>,
    spec_buf: Vec<Complex<f64>>,
    acc: Vec<Complex<f64>>,
}

impl ConvolutionStream<'_> {
    /// Consumes exactly one block of `block_size` input samples and returns
    /// the matching block of output.
    pub fn process_block(&mut self, input: &[f64]) -> &[f64] {
        let b = self.engine.plan.block_size;
        assert_eq!(input.len(), b, "process_block takes exactly one block");
        self.window.copy_within(b.., 0);
        self.window[b..].copy_from_slice(input);

        self.time_buf.copy_from_slice(&self.window);
        self.engine
            .forward
            .process(&mut self.time_buf, &mut self.spec_buf)
            .expect("buffer sizes come from the planner");
        let p = self.delay_line.len();
        self.delay_line[self.head].copy_from_slice(&self.spec_buf);

        self.acc.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (k, h) in self.engine.partitions.iter().enumerate() {
            let x = &self.delay_line[(self.head + p - k) % p];
            for ((a, hv), xv) in self.acc.iter_mut().zip(h).zip(x) {
                *a += hv * xv;
            }
        }
        self.head = (self.head + 1) % p;

        self.acc[0].im = 0.0;
        self.acc[b].im = 0.0;
        self.engine
            .inverse
            .process(&mut self.acc, &mut self.time_buf)
            .expect("buffer sizes come from the planner");
        let norm = 1.0 / (2 * b) as f64;
        for v in &mut self.time_buf[b..] {
            *v *= norm;
        }
        &self.time_buf[b..]
    }
}

/// Partitioned FFT convolution; agrees with [`convolve_direct`] to ~1e-15
/// relative L2.
pub fn convolve_fft(signal: &[f64], ir: &[f64], plan: PartitionPlan) -> Result<Vec<f64>> {
    if signal.is_empty() || ir.is_empty() {
        return Err(Error::invalid("convolution inputs must be non-empty"));
    }
    PartitionedConvolver::new(ir, plan)?.convolve(signal)
}

/// Convolves a mono signal with each channel of a stereo impulse response.
pub fn convolve_stereo(signal: &AudioBuffer, ir: &AudioBuffer) -> Result<AudioBuffer> {
    if signal.sample_rate() != ir.sample_rate() {
        return Err(Error::SampleRateMismatch(signal.sample_rate(), ir.sample_rate()));
    }
    if signal.num_channels() != 1 {
        return Err(Error::invalid("convolve_stereo expects a mono signal"));
    }
    if ir.num_channels() != 2 {
        return Err(Error::invalid("convolve_stereo expects a stereo impulse response"));
    }
    let plan = PartitionPlan::for_ir(ir.len())?;
    let channels = ir
        .channels()
        .iter()
        .map(|h| convolve_fft(signal.channel(0), h, plan))
        .collect::<Result<Vec<_>>>()?;
    AudioBuffer::new(channels, signal.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    fn noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn direct_examples() {
        assert_eq!(
            convolve_direct(&[1.0, 0.0, 0.0], &[1.0, 0.5]).unwrap(),
            vec![1.0, 0.5, 0.0, 0.0]
        );
        assert_eq!(convolve_direct(&[0.3, -2.0], &[1.0]).unwrap(), vec![0.3, -2.0]);
        assert_eq!(convolve_direct(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), vec![3.0, 10.0, 8.0]);
        assert!(convolve_direct(&[], &[1.0]).is_err());
        assert!(convolve_direct(&[1.0], &[]).is_err());
    }

    #[test]
    fn plan_validation() {
        assert!(PartitionPlan::new(32, 10).is_err());
        assert!(PartitionPlan::new(100, 10).is_err());
        let p = PartitionPlan::new(64, 129).unwrap();
        assert_eq!((p.ir_partitions, p.fft_size), (3, 128));
        let wrong = PartitionPlan::new(64, 10).unwrap();
        assert!(matches!(
            convolve_fft(&[1.0; 10], &[1.0; 129], wrong),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn fft_delta_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = noise(&mut rng, 1000);
        let out = convolve_fft(&s, &[1.0], PartitionPlan::new(64, 1).unwrap()).unwrap();
        assert_eq!(out.len(), s.len());
        for (a, b) in out.iter().zip(&s) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fft_is_linear_in_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = noise(&mut rng, 700);
        let h = noise(&mut rng, 300);
        let plan = PartitionPlan::new(128, h.len()).unwrap();
        let base = convolve_fft(&s, &h, plan).unwrap();
        let scaled_in: Vec<f64> = s.iter().map(|v| v * 3.7).collect();
        let scaled = convolve_fft(&scaled_in, &h, plan).unwrap();
        let expect: Vec<f64> = base.iter().map(|v| v * 3.7).collect();
        assert!(rel_l2(&scaled, &expect) < 1e-12);
    }

    #[test]
    fn stereo_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = AudioBuffer::mono(noise(&mut rng, 500), 8000).unwrap();
        let deltas = AudioBuffer::new(vec![vec![1.0], vec![1.0]], 8000).unwrap();
        let out = convolve_stereo(&s, &deltas).unwrap();
        for c in 0..2 {
            for (a, b) in out.channel(c).iter().zip(s.channel(0)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let half = AudioBuffer::new(vec![vec![1.0, 0.0], vec![0.0, 0.0]], 8000).unwrap();
        let out = convolve_stereo(&s, &half).unwrap();
        assert_eq!(out.len(), 501);
        assert!(out.channel(1).iter().all(|v| *v == 0.0));

        let other_rate = AudioBuffer::new(vec![vec![1.0], vec![1.0]], 16000).unwrap();
        assert!(matches!(
            convolve_stereo(&s, &other_rate),
            Err(Error::SampleRateMismatch(8000, 16000))
        ));
    }

    #[test]
    fn stereo_one_second_against_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rate = 8000;
        let s = AudioBuffer::mono(noise(&mut rng, rate), rate as u32).unwrap();
        let ir = AudioBuffer::new(vec![noise(&mut rng, rate / 2), noise(&mut rng, rate / 2)], rate as u32).unwrap();
        let out = convolve_stereo(&s, &ir).unwrap();
        for c in 0..2 {
            let direct = convolve_direct(s.channel(0), ir.channel(c)).unwrap();
            assert_eq!(out.channel(c).len(), direct.len());
            assert!(rel_l2(out.channel(c), &direct) < 1e-9);
        }
    }

    #[test]
    fn streaming_blocks_match_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = noise(&mut rng, 200);
        let s = noise(&mut rng, 64 * 6);
        let engine = PartitionedConvolver::new(&h, PartitionPlan::new(64, 200).unwrap()).unwrap();
        let batch = engine.convolve(&s).unwrap();
        let mut stream = engine.stream();
        let mut out = Vec::new();
        for block in s.chunks(64) {
            out.extend_from_slice(stream.process_block(block));
        }
        for (a, b) in out.iter().zip(&batch) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn fft_matches_direct(seed in any::<u64>(), n in 1usize..3000, m in 1usize..700, shift in 6u32..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = noise(&mut rng, n);
            let h = noise(&mut rng, m);
            let plan = PartitionPlan::new(1 << shift, m).unwrap();
            let fast = convolve_fft(&s, &h, plan).unwrap();
            let slow = convolve_direct(&s, &h).unwrap();
            prop_assert_eq!(fast.len(), n + m - 1);
            prop_assert!(rel_l2(&fast, &slow) <= 1e-9);
        }

        #[test]
        fn direct_commutes(seed in any::<u64>(), n in 1usize..200, m in 1usize..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = noise(&mut rng, n);
            let b = noise(&mut rng, m);
            let ab = convolve_direct(&a, &b).unwrap();
            let ba = convolve_direct(&b, &a).unwrap();
            for (x, y) in ab.iter().zip(&ba) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
