//! Result rows, the instrument pivot table and significance tests.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use cadenza_core::bss_eval::{mean, median, t_test, TTestMethod};
use cadenza_core::Instrument;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Anech,
    Reverb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Causality {
    Causal,
    Noncausal,
    /// Mixture-as-estimate rows that carry no model output.
    #[value(skip)]
    #[serde(rename = "n/a")]
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Missing,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub instrument: Instrument,
    pub track: String,
    pub condition: Condition,
    pub causality: Causality,
    pub sdr_db: Option<f64>,
    pub smr_db: Option<f64>,
    pub status: Status,
    pub seed: u64,
}

pub fn read_rows(path: &Path) -> anyhow::Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for r in rdr.deserialize() {
        rows.push(r.with_context(|| format!("parsing {}", path.display()))?);
    }
    Ok(rows)
}

pub fn write_rows(path: &Path, rows: &[ResultRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Column order of the pivot table.
pub const SDR_COLUMNS: [(Causality, Condition); 4] = [
    (Causality::Causal, Condition::Anech),
    (Causality::Causal, Condition::Reverb),
    (Causality::Noncausal, Condition::Anech),
    (Causality::Noncausal, Condition::Reverb),
];
pub const SMR_COLUMNS: [Condition; 2] = [Condition::Anech, Condition::Reverb];

#[derive(Debug, Clone, PartialEq)]
pub struct Pivot {
    /// Instrument → 4 SDR medians followed by 2 SMR medians.
    pub rows: BTreeMap<Instrument, [Option<f64>; 6]>,
    /// Mean of the instrument medians per column.
    pub average: [Option<f64>; 6],
}

/// Medians over `ok` rows; SMR values are counted once per
/// (track, instrument, condition).
pub fn pivot(rows: &[ResultRow]) -> Pivot {
    let mut sdr: BTreeMap<(Instrument, usize), Vec<f64>> = BTreeMap::new();
    let mut smr: BTreeMap<(Instrument, usize), Vec<f64>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    let mut instruments = BTreeSet::new();
    for r in rows {
        instruments.insert(r.instrument);
        if r.status != Status::Ok {
            continue;
        }
        if let (Some(v), Some(col)) = (
            r.sdr_db,
            SDR_COLUMNS.iter().position(|c| *c == (r.causality, r.condition)),
        ) {
            sdr.entry((r.instrument, col)).or_default().push(v);
        }
        if let Some(v) = r.smr_db {
            if seen.insert((r.track.clone(), r.instrument, r.condition)) {
                let col = SMR_COLUMNS.iter().position(|c| *c == r.condition).unwrap_or(0);
                smr.entry((r.instrument, col)).or_default().push(v);
            }
        }
    }
    let mut table = BTreeMap::new();
    for inst in instruments {
        let mut cells = [None; 6];
        for (c, cell) in cells.iter_mut().enumerate().take(4) {
            *cell = sdr.get(&(inst, c)).and_then(|v| median(v));
        }
        for c in 0..2 {
            cells[4 + c] = smr.get(&(inst, c)).and_then(|v| median(v));
        }
        table.insert(inst, cells);
    }
    let mut average = [None; 6];
    for (c, avg) in average.iter_mut().enumerate() {
        let vals: Vec<f64> = table.values().filter_map(|cells| cells[c]).collect();
        *avg = mean(&vals);
    }
    Pivot { rows: table, average }
}

/// Distinct seeds of the rows, for provenance lines in rendered reports.
pub fn seeds(rows: &[ResultRow]) -> Vec<u64> {
    rows.iter()
        .map(|r| r.seed)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn seed_line(seeds: &[u64]) -> String {
    let list: Vec<String> = seeds.iter().map(u64::to_string).collect();
    format!("seed: {}\n", list.join(", "))
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"))
}

/// One pivot per dataset, in name order.
pub fn render_tables(rows: &[ResultRow]) -> String {
    let mut groups: BTreeMap<&str, Vec<ResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(&r.dataset).or_default().push(r.clone());
    }
    let mut s = String::new();
    let _ = writeln!(s, "# Median SDR (dB) per instrument\n");
    let _ = writeln!(s, "{}", seed_line(&seeds(rows)));
    for (name, group) in groups {
        let _ = writeln!(s, "## {name}\n");
        s.push_str(&render_pivot(&pivot(&group)));
        s.push('\n');
    }
    s
}

pub fn render_pivot(p: &Pivot) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "| Instrument | Causal Anech | Causal Reverb | Non-causal Anech | Non-causal Reverb | SMR Ref Anech | SMR Ref Reverb |"
    );
    let _ = writeln!(s, "|---|---:|---:|---:|---:|---:|---:|");
    let line = |name: &str, cells: &[Option<f64>; 6]| {
        let body: Vec<String> = cells.iter().map(|c| cell(*c)).collect();
        format!("| {name} | {} |", body.join(" | "))
    };
    for (inst, cells) in &p.rows {
        let _ = writeln!(s, "{}", line(inst.as_str(), cells));
    }
    let _ = writeln!(s, "{}", line("Average", &p.average));
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub name: &'static str,
    pub n_a: usize,
    pub n_b: usize,
    pub result: Option<(f64, f64, f64)>,
}

fn ok_sdr(rows: &[ResultRow], keep: impl Fn(&ResultRow) -> bool) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.status == Status::Ok && r.causality != Causality::Reference && keep(r))
        .filter_map(|r| r.sdr_db)
        .collect()
}

fn compare(name: &'static str, a: Vec<f64>, b: Vec<f64>) -> Comparison {
    let result = match t_test(&a, &b, TTestMethod::Pooled) {
        Ok(t) => Some((t.t, t.df, t.p)),
        // two constant groups: no evidence of a difference iff they coincide
        Err(cadenza_core::Error::DegenerateSamples) if mean(&a) == mean(&b) => {
            Some((0.0, (a.len() + b.len() - 2) as f64, 1.0))
        }
        Err(_) => None,
    };
    Comparison {
        name,
        n_a: a.len(),
        n_b: b.len(),
        result,
    }
}

/// Pooled t-tests over every scored row.
pub fn significance(rows: &[ResultRow]) -> Vec<Comparison> {
    vec![
        compare(
            "causal vs non-causal",
            ok_sdr(rows, |r| r.causality == Causality::Causal),
            ok_sdr(rows, |r| r.causality == Causality::Noncausal),
        ),
        compare(
            "anech vs reverb",
            ok_sdr(rows, |r| r.condition == Condition::Anech),
            ok_sdr(rows, |r| r.condition == Condition::Reverb),
        ),
    ]
}

pub fn render_significance(cmp: &[Comparison], seeds: &[u64]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Pooled two-sample t-tests on SDR\n");
    let _ = writeln!(s, "{}", seed_line(seeds));
    let _ = writeln!(s, "| Comparison | n_a | n_b | t | df | p |");
    let _ = writeln!(s, "|---|---:|---:|---:|---:|---:|");
    for c in cmp {
        let (t, df, p) = match c.result {
            Some((t, df, p)) => (format!("{t:.4}"), format!("{df:.0}"), format!("{p:.4}")),
            None => ("n/a".into(), "n/a".into(), "n/a".into()),
        };
        let _ = writeln!(s, "| {} | {} | {} | {t} | {df} | {p} |", c.name, c.n_a, c.n_b);
    }
    s
}
