use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use svt_core::scenario::{run_scenario, ControllerKind, RunResult, ScenarioConfig};
use svt_core::stability::{certify, CertifyOptions, DEFAULT_MU};
use svt_sim::checks::run_violations;
use svt_sim::io::{load_scenario, read_result, read_trace, write_result, write_trace, RunRecord};
use svt_sim::sweep::{
    run_sweep, threads_from_env, write_sweep_csv, SweepParam, SweepRow, SEEDS_PER_CELL,
};

#[derive(Parser)]
#[command(
    name = "svt",
    version,
    about = "Switched visual tracker simulator and stability certifier"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one scenario and write trace.csv and result.json.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run one parameter over several values, 4 seeds each.
    Sweep {
        scenario: PathBuf,
        /// v_max, t_R, d_max, offset or seed
        #[arg(long)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Write the table as CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify a recorded trace.
    Certify {
        trace: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = DEFAULT_MU)]
        mu: f64,
        /// Tracking offset; read from a sibling result.json if omitted.
        #[arg(long)]
        offset: Option<f64>,
    },
    /// Run the switched tracker and the always-track baseline side by side.
    Compare { scenario: PathBuf },
}

/// Failure classes, each with its own exit code.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    Certify(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
            Failure::Certify(_) => 4,
        }
    }
}

fn from_core(e: svt_core::Error) -> Failure {
    match e {
        svt_core::Error::InvalidConfig { .. } => Failure::Config(e.into()),
        e => Failure::Runtime(e.into()),
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    let cfg = load_scenario(path).map_err(|e| {
        if e.is_config() {
            Failure::Config(e.into())
        } else {
            Failure::Config(anyhow::Error::new(e).context("cannot read scenario"))
        }
    })?;
    if !cfg.svt.is_overdamped() {
        eprintln!(
            "warning: svt gains underdamped (kd^2 = {} < 4 kp = {})",
            cfg.svt.kd * cfg.svt.kd,
            4.0 * cfg.svt.kp
        );
    }
    Ok(cfg)
}

fn run_cmd(path: &Path, seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let mut cfg = load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (trace, result) = run_scenario(&cfg).map_err(from_core)?;
    cfg.resolve();
    fs::create_dir_all(out)
        .with_context(|| format!("cannot create {}", out.display()))
        .map_err(Failure::Runtime)?;
    write_trace(&out.join("trace.csv"), &trace).map_err(|e| Failure::Runtime(e.into()))?;
    let violations = run_violations(&cfg, &trace, &result);
    let record = RunRecord {
        config: cfg,
        result,
    };
    write_result(&out.join("result.json"), &record).map_err(|e| Failure::Runtime(e.into()))?;
    print_header();
    print_row(&record.config.name, &record.result);
    if !violations.is_empty() {
        return Err(Failure::Runtime(anyhow::anyhow!(
            "invariant violated: {}",
            violations.join("; ")
        )));
    }
    Ok(())
}

fn fmt_tau(t: Option<f64>) -> String {
    t.map_or_else(|| "inf".into(), |t| format!("{t:.3}"))
}

fn print_header() {
    println!(
        "{:<20} {:>8} {:>8} {:>10} {:>6} {:>8} {:>9}",
        "run", "AE[m]", "FTV", "tau_as[s]", "k", "dmax[m]", "failures"
    );
}

fn print_row(name: &str, r: &RunResult) {
    println!(
        "{:<20} {:>8.3} {:>8.3} {:>10} {:>6} {:>8.3} {:>9}",
        name,
        r.ae,
        r.ftv,
        fmt_tau(r.tau_as),
        r.k,
        r.d_max_observed,
        r.recovery_failures
    );
}

fn print_sweep_row(r: &SweepRow) {
    println!(
        "{:<20} {:>8.3} {:>8.3} {:>10} {:>6.2} {:>8.3} {:>9.2}",
        format!("{}={}", r.param, r.value),
        r.ae,
        r.ftv,
        fmt_tau(r.tau_as),
        r.k,
        r.d_max_observed,
        r.recovery_failures
    );
}

fn sweep_cmd(
    path: &Path,
    param: SweepParam,
    values: &[f64],
    out: Option<&Path>,
) -> Result<(), Failure> {
    let cfg = load(path)?;
    for &v in values {
        param.apply(&cfg, v).validate().map_err(from_core)?;
    }
    let rows =
        run_sweep(&cfg, param, values, SEEDS_PER_CELL, threads_from_env()).map_err(from_core)?;
    match out {
        Some(p) => {
            let f = fs::File::create(p)
                .with_context(|| format!("cannot create {}", p.display()))
                .map_err(Failure::Runtime)?;
            write_sweep_csv(std::io::BufWriter::new(f), &rows)
                .map_err(|e| Failure::Runtime(e.into()))?;
            print_header();
            rows.iter().for_each(print_sweep_row);
        }
        None => {
            let stdout = std::io::stdout();
            write_sweep_csv(stdout.lock(), &rows).map_err(|e| Failure::Runtime(e.into()))?;
        }
    }
    Ok(())
}

fn certify_cmd(path: &Path, delta: f64, mu: f64, offset: Option<f64>) -> Result<(), Failure> {
    let offset = match offset {
        Some(o) => o,
        None => {
            let sibling = path.with_file_name("result.json");
            read_result(&sibling)
                .map(|r| r.config.offset)
                .with_context(|| "no --offset given and no readable result.json next to the trace")
                .map_err(Failure::Config)?
        }
    };
    let trace = read_trace(path, offset).map_err(|e| Failure::Config(e.into()))?;
    let opts = CertifyOptions { delta, mu, n0: 1 };
    let cert =
        certify(&trace.stability_samples(), &opts).map_err(|e| Failure::Certify(e.into()))?;
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &cert).map_err(|e| Failure::Runtime(e.into()))?;
    writeln!(out).map_err(|e| Failure::Runtime(e.into()))?;
    Ok(())
}

fn compare_cmd(path: &Path) -> Result<(), Failure> {
    let cfg = load(path)?;
    print_header();
    for (kind, name) in [
        (ControllerKind::Svt, "svt"),
        (ControllerKind::Baseline, "baseline"),
    ] {
        let mut c = cfg.clone();
        c.controller = kind;
        // A one-value sweep over an unchanged parameter is a plain seed average.
        let rows = run_sweep(
            &c,
            SweepParam::VMax,
            &[c.svt.v_max],
            SEEDS_PER_CELL,
            threads_from_env(),
        )
        .map_err(from_core)?;
        let row = rows.into_iter().next().expect("one value in, one row out");
        println!(
            "{:<20} {:>8.3} {:>8.3} {:>10} {:>6.2} {:>8.3} {:>9.2}",
            name,
            row.ae,
            row.ftv,
            fmt_tau(row.tau_as),
            row.k,
            row.d_max_observed,
            row.recovery_failures
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Run {
            scenario,
            seed,
            out,
        } => run_cmd(scenario, *seed, out),
        Cmd::Sweep {
            scenario,
            param,
            values,
            out,
        } => sweep_cmd(scenario, *param, values, out.as_deref()),
        Cmd::Certify {
            trace,
            delta,
            mu,
            offset,
        } => certify_cmd(trace, *delta, *mu, *offset),
        Cmd::Compare { scenario } => compare_cmd(scenario),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            let (Failure::Config(e) | Failure::Runtime(e) | Failure::Certify(e)) = f;
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
