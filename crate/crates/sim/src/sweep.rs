//! Parameter sweeps: each value is run over several seeds and averaged.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use svt_core::scenario::{run_scenario, RunResult, ScenarioConfig};

/// Seeds per sweep cell.
pub const SEEDS_PER_CELL: u64 = 4;

/// Environment variable capping sweep parallelism.
pub const THREADS_ENV: &str = "SVT_SIM_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "v_max")]
    VMax,
    #[serde(rename = "t_R")]
    TR,
    #[serde(rename = "d_max")]
    DMax,
    #[serde(rename = "offset")]
    Offset,
    #[serde(rename = "seed")]
    Seed,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::VMax => "v_max",
            SweepParam::TR => "t_R",
            SweepParam::DMax => "d_max",
            SweepParam::Offset => "offset",
            SweepParam::Seed => "seed",
        }
    }

    /// Copy of `base` with this parameter set to `value`.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> ScenarioConfig {
        let mut c = base.clone();
        match self {
            SweepParam::VMax => c.svt.v_max = value,
            SweepParam::TR => c.svt.t_r = value,
            SweepParam::DMax => c.svt.d_max = value,
            SweepParam::Offset => {
                c.offset = value;
                c.pursuer_init = None;
            }
            SweepParam::Seed => c.seed = value as u64,
        }
        c.resolve();
        c
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "v_max" => Ok(SweepParam::VMax),
            "t_R" | "t_r" => Ok(SweepParam::TR),
            "d_max" => Ok(SweepParam::DMax),
            "offset" => Ok(SweepParam::Offset),
            "seed" => Ok(SweepParam::Seed),
            _ => Err(format!(
                "unknown parameter `{s}` (expected v_max, t_R, d_max, offset or seed)"
            )),
        }
    }
}

/// Averages over the seeds of one sweep value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub runs: usize,
    pub ae: f64,
    pub ftv: f64,
    pub stable_fraction: f64,
    /// Mean over runs; `None` if any run had an unbounded dwell time.
    pub tau_as: Option<f64>,
    pub k: f64,
    pub d_max_observed: f64,
    /// Mean over runs, like `k`.
    pub recovery_failures: f64,
}

impl SweepRow {
    pub fn from_runs(param: SweepParam, value: f64, runs: &[RunResult]) -> SweepRow {
        let n = runs.len().max(1) as f64;
        let mean = |f: fn(&RunResult) -> f64| runs.iter().map(f).sum::<f64>() / n;
        let tau_as = runs
            .iter()
            .map(|r| r.tau_as)
            .sum::<Option<f64>>()
            .map(|s| s / n);
        SweepRow {
            param,
            value,
            runs: runs.len(),
            ae: mean(|r| r.ae),
            ftv: mean(|r| r.ftv),
            stable_fraction: mean(|r| r.stable_fraction),
            tau_as,
            k: mean(|r| r.k as f64),
            d_max_observed: mean(|r| r.d_max_observed),
            recovery_failures: runs.iter().map(|r| r.recovery_failures as f64).sum::<f64>() / n,
        }
    }
}

/// Thread count from [`THREADS_ENV`]; `None` means all cores.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .filter(|&n| n > 0)
}

/// Run every `(value, seed)` cell, `seeds` per value starting at the base
/// seed. Rows follow the order of `values` regardless of scheduling.
pub fn run_sweep(
    base: &ScenarioConfig,
    param: SweepParam,
    values: &[f64],
    seeds: u64,
    threads: Option<usize>,
) -> Result<Vec<SweepRow>, svt_core::Error> {
    let cells: Vec<(usize, ScenarioConfig)> = values
        .iter()
        .enumerate()
        .flat_map(|(i, &v)| {
            let cfg = param.apply(base, v);
            (0..seeds).map(move |s| {
                let mut c = cfg.clone();
                c.seed = cfg.seed.wrapping_add(s);
                (i, c)
            })
        })
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|_| svt_core::Error::Domain("could not start the sweep thread pool"))?;
    let results: Vec<Result<RunResult, svt_core::Error>> = pool.install(|| {
        cells
            .par_iter()
            .map(|(_, c)| run_scenario(c).map(|(_, r)| r))
            .collect()
    });
    let mut per_value: Vec<Vec<RunResult>> = vec![Vec::new(); values.len()];
    for ((i, _), r) in cells.iter().zip(results) {
        per_value[*i].push(r?);
    }
    Ok(values
        .iter()
        .zip(&per_value)
        .map(|(&v, runs)| SweepRow::from_runs(param, v, runs))
        .collect())
}

/// Write sweep rows as CSV; an unbounded dwell time is written as `inf`.
pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<(), csv::Error> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    out.write_record([
        "param",
        "value",
        "runs",
        "ae",
        "ftv",
        "stable_fraction",
        "tau_as",
        "k",
        "d_max_observed",
        "recovery_failures",
    ])?;
    for r in rows {
        out.write_record([
            r.param.name().to_string(),
            r.value.to_string(),
            r.runs.to_string(),
            r.ae.to_string(),
            r.ftv.to_string(),
            r.stable_fraction.to_string(),
            r.tau_as.map_or_else(|| "inf".into(), |t| t.to_string()),
            r.k.to_string(),
            r.d_max_observed.to_string(),
            r.recovery_failures.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_names_roundtrip() {
        for p in [
            SweepParam::VMax,
            SweepParam::TR,
            SweepParam::DMax,
            SweepParam::Offset,
            SweepParam::Seed,
        ] {
            assert_eq!(p.name().parse::<SweepParam>(), Ok(p));
        }
        assert!("gain".parse::<SweepParam>().is_err());
    }

    #[test]
    fn offset_resets_start_pose() {
        let mut base = ScenarioConfig::ellip(1.0);
        base.pursuer_init = Some(base.default_pursuer_init().unwrap());
        let c = SweepParam::Offset.apply(&base, 2.0);
        assert_eq!(c.offset, 2.0);
        assert_eq!(c.svt.offset, 2.0);
        assert!(c.pursuer_init.is_none());
    }

    #[test]
    fn single_value_matches_run_average() {
        let mut base = ScenarioConfig::ellip(1.0);
        base.duration = Some(3.0);
        let rows = run_sweep(&base, SweepParam::VMax, &[1.0], 2, Some(1)).unwrap();
        assert_eq!(rows.len(), 1);
        let runs: Vec<RunResult> = (0..2)
            .map(|s| {
                let mut c = base.clone();
                c.seed = s;
                run_scenario(&c).unwrap().1
            })
            .collect();
        assert_eq!(rows[0], SweepRow::from_runs(SweepParam::VMax, 1.0, &runs));
    }

    #[test]
    fn unbounded_dwell_propagates() {
        let mut a = run_scenario(&{
            let mut c = ScenarioConfig::ellip(1.0);
            c.duration = Some(1.0);
            c
        })
        .unwrap()
        .1;
        a.tau_as = Some(2.0);
        let mut b = a.clone();
        b.tau_as = Some(4.0);
        assert_eq!(
            SweepRow::from_runs(SweepParam::Seed, 0.0, &[a.clone(), b.clone()]).tau_as,
            Some(3.0)
        );
        b.tau_as = None;
        assert_eq!(
            SweepRow::from_runs(SweepParam::Seed, 0.0, &[a, b]).tau_as,
            None
        );
    }
}
