use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cadenza_core::dataset::Split;
use cadenza_core::synth::{instrument_tone, white_noise, write_synthetic_corpus};
use cadenza_core::{read_wav, write_wav, AudioBuffer, Instrument, WavEncoding};

const RATE: u32 = 8000;

fn cadenza(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cadenza"));
    cmd.args(args).env_remove("CADENZA_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn cadenza")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_mono_stems(dir: &Path, names: &[&str], secs: f64) {
    fs::create_dir_all(dir).unwrap();
    let n = (secs * RATE as f64) as usize;
    for (k, name) in names.iter().enumerate() {
        let inst = Instrument::from_stem_label(name).unwrap();
        let x: Vec<f64> = instrument_tone(inst, n, RATE, 11 + k as u64)
            .into_iter()
            .map(|v| 0.2 * v)
            .collect();
        write_wav(
            &AudioBuffer::mono(x, RATE).unwrap(),
            dir.join(format!("{name}.wav")),
            WavEncoding::Float32,
        )
        .unwrap();
    }
}

/// A short decaying four-channel impulse response.
fn write_ir(path: &Path) {
    let n = 400;
    let noise = white_noise(4 * n, 5);
    let chans: Vec<Vec<f64>> = (0..4)
        .map(|c| {
            (0..n)
                .map(|i| {
                    let direct = if i == 0 { [0.7, 1.0, 0.0, 0.0][c] } else { 0.0 };
                    direct + 0.05 * noise[c * n + i] * (-(i as f64) / 80.0).exp()
                })
                .collect()
        })
        .collect();
    write_wav(&AudioBuffer::new(chans, RATE).unwrap(), path, WavEncoding::Float32).unwrap();
}

fn wav_files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".wav"))
        .collect();
    v.sort();
    v
}

fn tree_bytes(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn spatialize_writes_five_wavs_and_metadata() {
    let tmp = tempfile::tempdir().unwrap();
    let stems = tmp.path().join("stems");
    write_mono_stems(&stems, &["violin", "clarinet", "saxophone", "bassoon"], 0.5);
    let out = tmp.path().join("scene");
    ok(&cadenza(
        &[
            "--seed",
            "9",
            "spatialize",
            "--stems-dir",
            s(&stems),
            "--out-dir",
            s(&out),
            "--order",
            "violin,clarinet,saxophone,bassoon",
        ],
        &[],
    ));
    assert_eq!(
        wav_files(&out),
        [
            "bassoon.wav",
            "clarinet.wav",
            "mixture.wav",
            "saxophone.wav",
            "violin.wav"
        ]
    );
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(out.join("scene.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 9);
    assert_eq!(meta["mode"], "anechoic");
    let az: Vec<f64> = meta["stems"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["azimuth_deg"].as_f64().unwrap())
        .collect();
    assert_eq!(az, [-15.0, -5.0, 5.0, 15.0]);
    assert_eq!(meta["stems"][0]["instrument"], "violin");

    // the mixture is the sum of the written stems
    let mix = read_wav(out.join("mixture.wav")).unwrap();
    let parts: Vec<AudioBuffer> = ["bassoon", "clarinet", "saxophone", "violin"]
        .iter()
        .map(|n| read_wav(out.join(format!("{n}.wav"))).unwrap())
        .collect();
    assert_eq!(mix.num_channels(), 2);
    let sum = AudioBuffer::sum(parts.iter()).unwrap();
    for c in 0..2 {
        for (a, b) in mix.channel(c).iter().zip(sum.channel(c)) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn reverb_without_ir_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let stems = tmp.path().join("stems");
    write_mono_stems(&stems, &["violin", "flute"], 0.2);
    let out = cadenza(
        &[
            "spatialize",
            "--stems-dir",
            s(&stems),
            "--mode",
            "reverb",
            "--out-dir",
            s(&tmp.path().join("o")),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("impulse response"), "{err}");
}

#[test]
fn bad_flags_exit_two() {
    assert_eq!(cadenza(&["spatialize", "--bogus"], &[]).status.code(), Some(2));
    assert_eq!(
        cadenza(
            &[
                "separate",
                "--model",
                "/nonexistent.cdzw",
                "--in",
                "/x.wav",
                "--out-dir",
                "/tmp/x"
            ],
            &[]
        )
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn spatialize_is_deterministic_across_runs_and_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let stems = tmp.path().join("stems");
    write_mono_stems(&stems, &["violin", "viola", "cello"], 0.4);
    let ir = tmp.path().join("ir.wav");
    write_ir(&ir);
    let run = |dir: &str, threads: &str| {
        let out = tmp.path().join(dir);
        ok(&cadenza(
            &[
                "spatialize",
                "--stems-dir",
                s(&stems),
                "--mode",
                "reverb",
                "--ir",
                s(&ir),
                "--peak",
                "0.9",
                "--out-dir",
                s(&out),
            ],
            &[("CADENZA_THREADS", threads)],
        ));
        tree_bytes(&out)
    };
    let a = run("a", "1");
    let b = run("b", "1");
    let c = run("c", "4");
    assert_eq!(a.len(), 5);
    assert_eq!(a, b);
    assert_eq!(a, c);
}

/// Corpus of mono stems plus a manifest; returns the manifest path.
fn corpus(dir: &Path) -> PathBuf {
    let ens = vec![
        vec![Instrument::Violin, Instrument::Flute],
        vec![Instrument::Cello, Instrument::Clarinet, Instrument::Violin],
    ];
    write_synthetic_corpus(dir, RATE, &[2.0, 2.0, 2.0, 3.0], &ens, Split::Eval, 4).unwrap();
    dir.join("manifest.json")
}

/// Estimate = reference + white noise at `snr_db` below it.
fn write_estimates(corpus_dir: &Path, est_dir: &Path, snr_db: impl Fn(usize, usize) -> Option<f64>) {
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(corpus_dir.join("manifest.json")).unwrap()).unwrap();
    for (k, t) in manifest["tracks"].as_array().unwrap().iter().enumerate() {
        let id = t["track_id"].as_str().unwrap();
        fs::create_dir_all(est_dir.join(id)).unwrap();
        for (j, stem) in t["stems"].as_array().unwrap().iter().enumerate() {
            let Some(db) = snr_db(k, j) else { continue };
            let r = read_wav(corpus_dir.join(stem["wav_path"].as_str().unwrap())).unwrap();
            let x = r.channel(0);
            let noise = white_noise(x.len(), (k * 10 + j) as u64);
            let px = x.iter().map(|v| v * v).sum::<f64>();
            let pn = noise.iter().map(|v| v * v).sum::<f64>();
            let g = if db.is_infinite() {
                0.0
            } else {
                (px / pn / 10f64.powf(db / 10.0)).sqrt()
            };
            let y: Vec<f64> = x.iter().zip(&noise).map(|(a, b)| a + g * b).collect();
            let inst = stem["instrument"].as_str().unwrap();
            write_wav(
                &AudioBuffer::mono(y, RATE).unwrap(),
                est_dir.join(id).join(format!("{inst}.wav")),
                WavEncoding::Float32,
            )
            .unwrap();
        }
    }
}

fn csv_rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    lines
        .map(|l| header.iter().cloned().zip(l.split(',').map(String::from)).collect())
        .collect()
}

#[test]
fn perfect_estimates_hit_the_cap_and_missing_files_are_flagged() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = corpus(&tmp.path().join("corpus"));
    let est = tmp.path().join("est");
    // drop the second stem of track 1
    write_estimates(&tmp.path().join("corpus"), &est, |k, j| {
        (k != 1 || j != 1).then_some(f64::INFINITY)
    });
    let csv = tmp.path().join("res/results.csv");
    ok(&cadenza(
        &[
            "--seed",
            "3",
            "evaluate",
            "--manifest",
            s(&manifest),
            "--estimates-dir",
            s(&est),
            "--out-csv",
            s(&csv),
            "--condition",
            "anech",
            "--causality",
            "causal",
        ],
        &[],
    ));
    let rows = csv_rows(&csv);
    assert_eq!(rows.len(), 10);
    let missing: Vec<_> = rows.iter().filter(|r| r["status"] == "missing").collect();
    assert_eq!(missing.len(), 1);
    assert_eq!(missing[0]["track"], "track01");
    assert_eq!(missing[0]["sdr_db"], "");
    for r in rows.iter().filter(|r| r["status"] == "ok") {
        assert_eq!(r["sdr_db"].parse::<f64>().unwrap(), 100.0);
        assert_eq!(r["seed"], "3");
        assert!(r["smr_db"].parse::<f64>().unwrap() < 100.0);
    }
    let table = fs::read_to_string(tmp.path().join("res/table2.md")).unwrap();
    assert!(table.contains("| flute | 100.000 | n/a | n/a | n/a |"), "{table}");
}

fn parse_table(md: &str) -> BTreeMap<String, Vec<Option<f64>>> {
    md.lines()
        .filter(|l| l.starts_with("| ") && !l.starts_with("| Instrument"))
        .map(|l| {
            let cells: Vec<&str> = l.trim_matches('|').split('|').map(str::trim).collect();
            (
                cells[0].to_string(),
                cells[1..].iter().map(|c| c.parse().ok()).collect(),
            )
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[test]
fn pivot_matches_an_independent_recomputation() {
    let tmp = tempfile::tempdir().unwrap();
    let cdir = tmp.path().join("corpus");
    let manifest = corpus(&cdir);
    let csv = tmp.path().join("results.csv");
    for (caus, base) in [("causal", 5.0), ("noncausal", 8.0)] {
        let est = tmp.path().join(caus);
        write_estimates(&cdir, &est, |k, j| Some(base + 3.0 * k as f64 + j as f64));
        ok(&cadenza(
            &[
                "evaluate",
                "--manifest",
                s(&manifest),
                "--estimates-dir",
                s(&est),
                "--out-csv",
                s(&csv),
                "--condition",
                "anech",
                "--causality",
                caus,
                "--append",
            ],
            &[],
        ));
    }
    ok(&cadenza(
        &[
            "evaluate",
            "--manifest",
            s(&manifest),
            "--out-csv",
            s(&csv),
            "--condition",
            "anech",
            "--smr-only",
            "--append",
        ],
        &[],
    ));
    let report = tmp.path().join("report");
    ok(&cadenza(
        &["report", "--results", s(&csv), "--out-dir", s(&report)],
        &[],
    ));

    let rows = csv_rows(&csv);
    assert_eq!(rows.len(), 30);
    assert_eq!(
        rows.iter()
            .filter(|r| r["causality"] == "n/a" && r["sdr_db"].is_empty())
            .count(),
        10
    );
    let mut sdr: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    let mut smr: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for r in &rows {
        if r["status"] != "ok" {
            continue;
        }
        if let Ok(v) = r["sdr_db"].parse::<f64>() {
            sdr.entry((r["instrument"].clone(), r["causality"].clone()))
                .or_default()
                .push(v);
        }
        if let Ok(v) = r["smr_db"].parse::<f64>() {
            smr.entry(r["instrument"].clone())
                .or_default()
                .insert(r["track"].clone(), v);
        }
    }
    let table = parse_table(&fs::read_to_string(report.join("table2.md")).unwrap());
    let mut col_sums = [0.0; 3];
    for inst in ["cello", "clarinet", "flute", "violin"] {
        let got = &table[inst];
        let want = [
            median(sdr[&(inst.to_string(), "causal".to_string())].clone()),
            median(sdr[&(inst.to_string(), "noncausal".to_string())].clone()),
            median(smr[inst].values().copied().collect()),
        ];
        for (c, (g, w)) in [got[0], got[2], got[4]].iter().zip(want).enumerate() {
            assert!((g.unwrap() - w).abs() <= 5e-4, "{inst} column {c}: {g:?} vs {w}");
            col_sums[c] += w;
        }
        assert_eq!((got[1], got[3], got[5]), (None, None, None));
    }
    let avg = &table["Average"];
    for (c, g) in [avg[0], avg[2], avg[4]].iter().enumerate() {
        assert!((g.unwrap() - col_sums[c] / 4.0).abs() <= 5e-4);
    }
    // flute sits in tracks 0 and 2 at 6 and 12 dB SNR
    assert!((table["flute"][0].unwrap() - 9.0).abs() < 1.0);

    let sig = fs::read_to_string(report.join("significance.md")).unwrap();
    assert!(sig.contains("| causal vs non-causal | 10 | 10 |"), "{sig}");
    assert!(sig.contains("| anech vs reverb | 20 | 0 | n/a |"), "{sig}");
}

#[test]
fn evaluate_is_thread_count_invariant() {
    let tmp = tempfile::tempdir().unwrap();
    let cdir = tmp.path().join("corpus");
    let manifest = corpus(&cdir);
    let est = tmp.path().join("est");
    write_estimates(&cdir, &est, |k, j| Some(4.0 + (k + j) as f64));
    let run = |name: &str, threads: &str| {
        let csv = tmp.path().join(name);
        ok(&cadenza(
            &[
                "--threads",
                threads,
                "evaluate",
                "--manifest",
                s(&manifest),
                "--estimates-dir",
                s(&est),
                "--out-csv",
                s(&csv),
                "--condition",
                "reverb",
                "--causality",
                "noncausal",
            ],
            &[],
        ));
        fs::read(csv).unwrap()
    };
    assert_eq!(run("one.csv", "1"), run("four.csv", "4"));
}

#[test]
fn env_threads_override_and_validation() {
    let out = cadenza(
        &[
            "--threads",
            "2",
            "report",
            "--results",
            "/nonexistent.csv",
            "--out-dir",
            "/tmp",
        ],
        &[("CADENZA_THREADS", "zero")],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("CADENZA_THREADS"));
}

#[test]
fn report_on_empty_csv_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let header = tmp.path().join("header.csv");
    fs::write(
        &header,
        "dataset,instrument,track,condition,causality,sdr_db,smr_db,status,seed\n",
    )
    .unwrap();
    for p in [&empty, &header] {
        let out = cadenza(
            &["report", "--results", s(p), "--out-dir", s(&tmp.path().join("r"))],
            &[],
        );
        assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn identical_columns_give_zero_t_and_unit_p() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("r.csv");
    let mut text = String::from("dataset,instrument,track,condition,causality,sdr_db,smr_db,status,seed\n");
    for (k, v) in [2.5, 4.0, 7.25, 3.0].iter().enumerate() {
        for c in ["causal", "noncausal"] {
            text.push_str(&format!("quartets,oboe,t{k},anech,{c},{v},-4.0,ok,0\n"));
        }
    }
    fs::write(&csv, text).unwrap();
    let out_dir = tmp.path().join("out");
    ok(&cadenza(
        &["report", "--results", s(&csv), "--out-dir", s(&out_dir)],
        &[],
    ));
    let sig = fs::read_to_string(out_dir.join("significance.md")).unwrap();
    assert!(
        sig.contains("| causal vs non-causal | 4 | 4 | 0.0000 | 6 | 1.0000 |"),
        "{sig}"
    );
    let table = fs::read_to_string(out_dir.join("table2.md")).unwrap();
    assert!(
        table.contains("| oboe | 3.500 | n/a | 3.500 | n/a | -4.000 | n/a |"),
        "{table}"
    );
}

#[test]
fn mix_materializes_a_validation_set() {
    let tmp = tempfile::tempdir().unwrap();
    let cdir = tmp.path().join("corpus");
    let ens = vec![vec![
        Instrument::Violin,
        Instrument::Viola,
        Instrument::Flute,
        Instrument::Oboe,
    ]];
    write_synthetic_corpus(&cdir, 1000, &[31.0, 46.0], &ens, Split::Valid, 2).unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        ok(&cadenza(
            &[
                "--seed",
                "5",
                "mix",
                "--manifest",
                s(&cdir.join("manifest.json")),
                "--out-dir",
                s(&out),
            ],
            &[],
        ));
        out
    };
    let a = run("a");
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(a.join("validation.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 5);
    assert_eq!(summary["quartets"], 5);
    assert_eq!(summary["random_mixes"], 10);
    assert_eq!(tree_bytes(&a), tree_bytes(&run("b")));
}

#[test]
fn train_toy_then_separate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("train.json");
    fs::write(
        &cfg,
        r#"{
  "model": {"n_filters": 8, "kernel_len": 16, "bottleneck": 4, "conv_channels": 8, "skip_channels": 4,
            "kernel": 3, "blocks_per_repeat": 2, "repeats": 1, "n_sources": 2, "in_channels": 2,
            "causal": true, "mask_activation": "sigmoid"},
  "train": {"epochs": 2, "batch_size": 2, "lr0": 0.003, "crop_s": 0.25, "target": "cello", "max_steps": 3},
  "task": {"sample_rate": 8000, "duration_s": 0.5},
  "train_samples": 2,
  "valid_samples": 1
}"#,
    )
    .unwrap();
    let model = tmp.path().join("m.cdzw");
    let hist = tmp.path().join("history.csv");
    ok(&cadenza(
        &[
            "--seed",
            "2",
            "train-toy",
            "--config",
            s(&cfg),
            "--out",
            s(&model),
            "--history",
            s(&hist),
        ],
        &[],
    ));
    let h = csv_rows(&hist);
    assert_eq!(h.len(), 2);
    assert_eq!(
        h[0].keys().cloned().collect::<Vec<_>>(),
        ["epoch", "lr", "train_loss", "valid_loss"]
    );
    let run: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("m.cdzw.run.json")).unwrap()).unwrap();
    assert_eq!(run["seed"], 2);
    assert_eq!(run["steps"], 2);

    let stems = tmp.path().join("stems");
    write_mono_stems(&stems, &["cello", "flute"], 0.3);
    let scene = tmp.path().join("scene");
    ok(&cadenza(
        &["spatialize", "--stems-dir", s(&stems), "--out-dir", s(&scene)],
        &[],
    ));
    let mix = scene.join("mixture.wav");
    let batch = tmp.path().join("batch");
    let chunked = tmp.path().join("chunked");
    ok(&cadenza(
        &[
            "separate",
            "--model",
            s(&model),
            "--in",
            s(&mix),
            "--out-dir",
            s(&batch),
        ],
        &[],
    ));
    ok(&cadenza(
        &[
            "separate",
            "--model",
            s(&model),
            "--in",
            s(&mix),
            "--out-dir",
            s(&chunked),
            "--chunk",
            "333",
        ],
        &[],
    ));
    for f in ["target.wav", "residual.wav"] {
        let a = read_wav(batch.join(f)).unwrap();
        let b = read_wav(chunked.join(f)).unwrap();
        assert_eq!(a.len(), 2400);
        for c in 0..2 {
            for (x, y) in a.channel(c).iter().zip(b.channel(c)) {
                assert!((x - y).abs() <= 1e-6);
            }
        }
    }
}
