//! Symmetric Toeplitz solver.

use crate::error::{Error, Result};

/// Solves `T x = rhs` where `T[i][j] = first_col[|i - j|]`, by Levinson recursion.
///
/// O(n²) time, O(n) memory. Fails if a leading principal minor is singular.
pub fn levinson_solve(first_col: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = first_col.len();
    if n == 0 || rhs.len() != n {
        return Err(Error::invalid(format!(
            "Toeplitz system of order {n} with right-hand side of length {}",
            rhs.len()
        )));
    }
    let r0 = first_col[0];
    if r0 == 0.0 || !r0.is_finite() {
        return Err(Error::invalid("singular Toeplitz system (zero diagonal)"));
    }
    // forward[k] solves T_k f = e_0; the backward vector is its reversal.
    let mut forward = vec![1.0 / r0];
    let mut x = vec![rhs[0] / r0];
    let mut next = Vec::with_capacity(n);
    for k in 1..n {
        let ef: f64 = (0..k).map(|i| first_col[k - i] * forward[i]).sum();
        let denom = 1.0 - ef * ef;
        if denom.abs() < f64::EPSILON {
            return Err(Error::invalid("singular Toeplitz system"));
        }
        next.clear();
        next.extend((0..=k).map(|i| {
            let f = if i < k { forward[i] } else { 0.0 };
            let b = if i > 0 { forward[k - i] } else { 0.0 };
            (f - ef * b) / denom
        }));
        std::mem::swap(&mut forward, &mut next);

        let ex: f64 = (0..k).map(|i| first_col[k - i] * x[i]).sum();
        let gain = rhs[k] - ex;
        x.push(0.0);
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += gain * forward[k - i];
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense(first_col: &[f64], x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|i| (0..n).map(|j| first_col[i.abs_diff(j)] * x[j]).sum())
            .collect()
    }

    #[test]
    fn solves_small_systems() {
        let r = [4.0, 1.0, 0.5];
        let x = levinson_solve(&r, &[1.0, 2.0, 3.0]).unwrap();
        let back = dense(&r, &x);
        for (a, b) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(levinson_solve(&[2.0], &[3.0]).unwrap(), vec![1.5]);
    }

    #[test]
    fn residual_is_tiny_on_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2usize, 7, 33, 64] {
            let sig: Vec<f64> = (0..4 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r: Vec<f64> = (0..n)
                .map(|l| sig.iter().zip(&sig[l..]).map(|(a, b)| a * b).sum())
                .collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = levinson_solve(&r, &y).unwrap();
            let back = dense(&r, &x);
            let err: f64 = back.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "n={n} err={err}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(levinson_solve(&[], &[]).is_err());
        assert!(levinson_solve(&[1.0, 0.0], &[1.0]).is_err());
        assert!(levinson_solve(&[0.0, 1.0], &[1.0, 1.0]).is_err());
        // singular: rank-one all-ones matrix
        assert!(levinson_solve(&[1.0, 1.0], &[1.0, 1.0]).is_err());
    }
}
