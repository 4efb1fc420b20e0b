//! Scenario configuration, the fixed-step simulation loop and run metrics.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{
    baseline_step, plant_step, svt_step, Event, Mode, StepInput, SvtConfig, SvtState,
};
use crate::perception::{
    observe, visible, CameraModel, FilterConfig, NoiseModel, ObserverOutput, TargetFilter,
};
use crate::sim::{eval_trajectory, KinState, TrajectorySpec, Workspace};
use crate::stability::{self, certify, Certificate, CertifyOptions};
use crate::trace::{row_v, Trace, TraceRow};
use crate::{Error, Vec3, DEFAULT_DT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Svt,
    Baseline,
}

fn default_name() -> String {
    "ellip-1.0".into()
}
fn default_offset() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    DEFAULT_DT
}
fn default_delta() -> f64 {
    stability::DEFAULT_DELTA
}
fn default_mu() -> f64 {
    stability::DEFAULT_MU
}
fn default_controller() -> ControllerKind {
    ControllerKind::Svt
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "TrajectorySpec::ellip")]
    pub trajectory: TrajectorySpec,
    /// Desired tracking distance behind the target, m.
    #[serde(default = "default_offset")]
    pub offset: f64,
    #[serde(default = "default_controller")]
    pub controller: ControllerKind,
    #[serde(default)]
    pub svt: SvtConfig,
    #[serde(default)]
    pub camera: CameraModel,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub workspace: Workspace,
    /// Simulated time, s. Defaults to the trajectory duration.
    #[serde(default)]
    pub duration: Option<f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to `offset` behind the target's start, at rest.
    #[serde(default)]
    pub pursuer_init: Option<KinState>,
    #[serde(default = "default_delta")]
    pub stability_delta: f64,
    #[serde(default = "default_mu")]
    pub stability_mu: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig::ellip(1.0)
    }
}

impl ScenarioConfig {
    fn with(name: String, trajectory: TrajectorySpec, offset: f64) -> Self {
        ScenarioConfig {
            name,
            trajectory,
            offset,
            controller: ControllerKind::Svt,
            svt: SvtConfig::default(),
            camera: CameraModel::default(),
            noise: NoiseModel::default(),
            filter: FilterConfig::default(),
            workspace: Workspace::default(),
            duration: None,
            dt: DEFAULT_DT,
            seed: 0,
            pursuer_init: None,
            stability_delta: stability::DEFAULT_DELTA,
            stability_mu: stability::DEFAULT_MU,
        }
    }

    /// Ellip at the given tracking offset ("Ellip-1.0", ...).
    pub fn ellip(offset: f64) -> Self {
        Self::with(
            format!("ellip-{offset:.1}"),
            TrajectorySpec::ellip(),
            offset,
        )
    }

    pub fn slem(offset: f64) -> Self {
        Self::with(format!("slem-{offset:.1}"), TrajectorySpec::slem(), offset)
    }

    /// Offset behind the target's starting point, at rest.
    pub fn default_pursuer_init(&self) -> Result<KinState, Error> {
        let t0 = eval_trajectory(&self.trajectory, 0.0)?;
        Ok(KinState::at_rest(t0.pos - self.camera.facing * self.offset))
    }

    pub fn duration(&self) -> f64 {
        self.duration.unwrap_or_else(|| self.trajectory.duration())
    }

    pub fn steps(&self) -> usize {
        libm::round(self.duration() / self.dt) as usize
    }

    /// Fill in derived defaults so the config records what actually ran.
    pub fn resolve(&mut self) {
        self.duration = Some(self.duration());
        self.svt.offset = self.offset;
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.trajectory.validate()?;
        self.svt.validate()?;
        self.camera.validate()?;
        self.noise.validate()?;
        self.filter.validate()?;
        self.workspace.validate()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::config("dt", "must be > 0"));
        }
        if !(self.offset.is_finite() && self.offset > 0.0) {
            return Err(Error::config("offset", "must be > 0"));
        }
        let d = self.duration();
        if !(d.is_finite() && d > 0.0 && d <= self.trajectory.duration()) {
            return Err(Error::config(
                "duration",
                "must be in (0, trajectory.duration]",
            ));
        }
        if self.steps() == 0 {
            return Err(Error::config("duration", "shorter than one step"));
        }
        if !(self.stability_delta.is_finite() && self.stability_delta > 0.0) {
            return Err(Error::config("stability_delta", "must be > 0"));
        }
        if !(self.stability_mu.is_finite() && self.stability_mu > 1.0) {
            return Err(Error::config("stability_mu", "must be > 1"));
        }
        self.trajectory.check_workspace(&self.workspace)?;
        let p0 = match self.pursuer_init {
            Some(p) => {
                if !(p.pos.is_finite() && p.vel.is_finite()) {
                    return Err(Error::config("pursuer_init", "must be finite"));
                }
                p
            }
            None => self.default_pursuer_init()?,
        };
        let t0 = eval_trajectory(&self.trajectory, 0.0)?;
        if !visible(p0.pos, t0.pos, &self.camera) {
            return Err(Error::config(
                "pursuer_init",
                "target must be visible at t = 0",
            ));
        }
        Ok(())
    }
}

/// Metrics of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// Mean `| |x_T - x_P| - offset |`, m.
    pub ae: f64,
    /// Fraction of samples with the target geometrically in view.
    pub ftv: f64,
    /// Fraction of samples in Tracking mode.
    pub stable_fraction: f64,
    /// `None` = unbounded.
    pub tau_as: Option<f64>,
    /// Recovery -> Tracking switches.
    pub k: usize,
    /// Tracking -> Recovery switches.
    pub losses: usize,
    pub d_max_observed: f64,
    pub recovery_failures: usize,
    pub certificate: Option<Certificate>,
    pub certificate_error: Option<String>,
}

pub fn metric_ae(trace: &Trace) -> f64 {
    if trace.rows.is_empty() {
        return 0.0;
    }
    let sum: f64 = trace
        .rows
        .iter()
        .map(|r| ((r.target.pos - r.pursuer.pos).norm() - trace.offset).abs())
        .sum();
    sum / trace.rows.len() as f64
}

pub fn metric_ftv(trace: &Trace) -> f64 {
    if trace.rows.is_empty() {
        return 0.0;
    }
    trace.rows.iter().filter(|r| r.visible).count() as f64 / trace.rows.len() as f64
}

/// Largest backoff along x within one recovery episode, 0 without episodes.
pub fn metric_dmax_observed(trace: &Trace) -> f64 {
    let mut best: f64 = 0.0;
    let mut entry: Option<f64> = None;
    for r in &trace.rows {
        match (r.mode, entry) {
            (Mode::Recovery, None) => entry = Some(r.pursuer.pos.x),
            (Mode::Recovery, Some(x0)) => best = best.max(x0 - r.pursuer.pos.x),
            (Mode::Tracking, _) => entry = None,
        }
    }
    best
}

fn stable_fraction(trace: &Trace) -> f64 {
    if trace.rows.is_empty() {
        return 0.0;
    }
    trace
        .rows
        .iter()
        .filter(|r| r.mode == Mode::Tracking)
        .count() as f64
        / trace.rows.len() as f64
}

/// Run one scenario. Identical configs (including seed) give identical
/// traces.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(Trace, RunResult), Error> {
    let mut cfg = cfg.clone();
    cfg.resolve();
    cfg.validate()?;
    let trace = simulate(&cfg)?;
    let result = evaluate(&trace, &cfg);
    Ok((trace, result))
}

fn simulate(cfg: &ScenarioConfig) -> Result<Trace, Error> {
    let dt = cfg.dt;
    let svt = cfg.svt;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pursuer = match cfg.pursuer_init {
        Some(p) => p,
        None => cfg.default_pursuer_init()?,
    };
    let mut filter = TargetFilter::new(cfg.filter);
    let mut state = SvtState::default();
    let n = cfg.steps();
    let mut rows = Vec::with_capacity(n);

    for i in 0..n {
        let t = i as f64 * dt;
        let target = eval_trajectory(&cfg.trajectory, t)?;
        let obs = observe(&pursuer, &target, &cfg.camera, &cfg.noise, &mut rng);
        if i > 0 {
            filter.predict(dt);
        }
        if let ObserverOutput::Displacement(d) = obs {
            filter.update(pursuer.pos + d);
        }
        let est = filter.estimate().ok();

        let (mode, accel, events) = match cfg.controller {
            ControllerKind::Svt => {
                let input = StepInput {
                    obs,
                    estimate: est.as_ref(),
                    pursuer: &pursuer,
                    now: t,
                    dt,
                };
                let out = svt_step(&state, &input, &svt, &cfg.camera)?;
                state = out.state;
                (out.mode, out.accel, out.events)
            }
            ControllerKind::Baseline => (
                Mode::Tracking,
                baseline_step(obs, est.as_ref(), &pursuer, &svt, dt),
                [None, None],
            ),
        };

        rows.push(TraceRow {
            t,
            mode,
            visible: visible(pursuer.pos, target.pos, &cfg.camera),
            target,
            pursuer,
            estimate: est.map(|e| e.pos),
            v: row_v(&target, &pursuer, cfg.offset),
            events,
        });
        pursuer = plant_step(&pursuer, accel, &svt, dt);
        if !(pursuer.pos.is_finite() && pursuer.vel.is_finite()) {
            return Err(Error::Domain("pursuer state became non-finite"));
        }
    }
    Ok(Trace {
        dt,
        offset: cfg.offset,
        rows,
    })
}

/// Metrics and certificate for a finished trace.
pub fn evaluate(trace: &Trace, cfg: &ScenarioConfig) -> RunResult {
    let samples = trace.stability_samples();
    let switches = stability::extract_switches(&samples);
    let dwell = stability::measure_tau_as(&samples, 1);
    let opts = CertifyOptions {
        delta: cfg.stability_delta,
        mu: cfg.stability_mu,
        n0: 1,
    };
    let (certificate, certificate_error) = match certify(&samples, &opts) {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let recovery_failures = trace
        .rows
        .iter()
        .flat_map(|r| r.events.iter())
        .filter(|e| matches!(e, Some(Event::BackoffLimited { .. })))
        .count();
    RunResult {
        ae: metric_ae(trace),
        ftv: metric_ftv(trace),
        stable_fraction: stable_fraction(trace),
        tau_as: dwell.tau_as,
        k: dwell.reentries,
        losses: switches.iter().filter(|s| s.to == Mode::Recovery).count(),
        d_max_observed: metric_dmax_observed(trace),
        recovery_failures,
        certificate,
        certificate_error,
    }
}

/// Pursuer velocity along +x, used by the forward-speed-cap checks.
pub fn forward_speed(row: &TraceRow) -> f64 {
    row.pursuer.vel.dot(Vec3::X)
}
