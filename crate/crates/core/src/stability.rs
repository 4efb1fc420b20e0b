//! Average stable dwell-time certification of recorded runs.
//!
//! The tracked quantity is the error `x = (x_T - x_P) - offset e_x` with
//! `V(x) = |x|` in both modes. Tracking is the only stable mode. For a
//! switching signal that starts in Tracking and alternates, if `V` decays
//! at rate `2 lambda` while tracking and each recovery episode satisfies
//! `V(re-entry) <= mu V(exit) + c`, then with `tau_as > ln(mu + delta) / (2 lambda)`
//! the error converges to the ball of radius `c (mu + delta)^N0 / delta`.
//!
//! Time accounting is per sample: sample `i` covers `[t_i, t_i + dt)` and
//! contributes `dt` of stable time when its mode is Tracking.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::controller::Mode;
use crate::{Error, Vec3};

/// Samples with `V` at or below this are left out of rate fits.
pub const LOG_FLOOR: f64 = 1e-4;
/// Shortest decaying tracking window used to fit `lambda`, s.
pub const MIN_FIT_WINDOW: f64 = 0.5;
/// Lower bound on a fitted `lambda`.
pub const LAMBDA_FLOOR: f64 = 1e-6;
/// Added to the fitted `c` so Eq.-4-tight episodes stay strictly inside.
pub const C_FLOOR: f64 = 1e-9;
pub const DEFAULT_MU: f64 = 1.1;
pub const DEFAULT_DELTA: f64 = 0.1;
/// `mu` values reported in the certificate's sensitivity table.
pub const MU_GRID: [f64; 4] = [1.01, 1.1, 1.5, 2.0];
/// Allowance on the final-tail check, m.
pub const TAIL_SLACK: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub mode: Mode,
    pub err: Vec3,
    pub visible: bool,
}

impl TraceSample {
    pub fn v(&self) -> f64 {
        lyapunov(self.err)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchRecord {
    /// Index of the first sample in the new mode.
    pub index: usize,
    pub t: f64,
    pub from: Mode,
    pub to: Mode,
    /// `V` at the last sample of the old mode.
    pub v_before: f64,
    /// `V` at the switch sample.
    pub v_after: f64,
}

/// Lyapunov function shared by both modes.
pub fn lyapunov(err: Vec3) -> f64 {
    err.norm()
}

fn sample_dt(samples: &[TraceSample]) -> f64 {
    match samples {
        [a, b, ..] => b.t - a.t,
        _ => 0.0,
    }
}

/// `S[i]` = stable time in `[t_0, t_i)`; length `n + 1`.
fn stable_prefix(samples: &[TraceSample]) -> Vec<f64> {
    let dt = sample_dt(samples);
    let mut out = Vec::with_capacity(samples.len() + 1);
    let mut count = 0usize;
    out.push(0.0);
    for s in samples {
        if s.mode.is_stable() {
            count += 1;
        }
        out.push(count as f64 * dt);
    }
    out
}

pub fn extract_switches(samples: &[TraceSample]) -> Vec<SwitchRecord> {
    samples
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].mode != w[1].mode)
        .map(|(i, w)| SwitchRecord {
            index: i + 1,
            t: w[1].t,
            from: w[0].mode,
            to: w[1].mode,
            v_before: w[0].v(),
            v_after: w[1].v(),
        })
        .collect()
}

/// Measured average stable dwell time `T_s / (k - N0)`, `k` counting
/// Recovery -> Tracking switches.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DwellMeasurement {
    /// `None` when `k <= N0`: the run never lost the target often enough to
    /// bound the dwell time.
    pub tau_as: Option<f64>,
    pub stable_time: f64,
    pub reentries: usize,
}

impl DwellMeasurement {
    /// `tau_as` with the unbounded case mapped to `+inf`.
    pub fn value(&self) -> f64 {
        self.tau_as.unwrap_or(f64::INFINITY)
    }
}

pub fn measure_tau_as(samples: &[TraceSample], n0: u32) -> DwellMeasurement {
    let stable_time = *stable_prefix(samples).last().unwrap_or(&0.0);
    let reentries = extract_switches(samples)
        .iter()
        .filter(|s| s.to == Mode::Tracking)
        .count();
    let tau_as = (reentries > n0 as usize).then(|| stable_time / (reentries - n0 as usize) as f64);
    DwellMeasurement {
        tau_as,
        stable_time,
        reentries,
    }
}

/// Least-squares slope of `ys` against `xs`.
fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// Maximal runs of Tracking samples as `start..end` index ranges.
fn tracking_segments(samples: &[TraceSample]) -> Vec<core::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, s) in samples.iter().enumerate() {
        match (s.mode.is_stable(), start) {
            (true, None) => start = Some(i),
            (false, Some(b)) => {
                out.push(b..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(b) = start {
        out.push(b..samples.len());
    }
    out
}

/// Fitted decay rates (slope of `ln V` / -2) of every qualifying tracking
/// segment.
///
/// A segment's window runs from its first sample to the sample where `V`
/// is smallest, keeping only `V > LOG_FLOOR`. The window qualifies when it
/// spans at least [`MIN_FIT_WINDOW`] and the fitted slope is negative.
pub fn segment_rates(samples: &[TraceSample]) -> Vec<f64> {
    let dt = sample_dt(samples);
    let mut rates = Vec::new();
    for seg in tracking_segments(samples) {
        let seg = &samples[seg];
        let argmin = seg
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.v().total_cmp(&b.1.v()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let window = &seg[..=argmin];
        let (xs, ys): (Vec<f64>, Vec<f64>) = window
            .iter()
            .filter(|s| s.v() > LOG_FLOOR)
            .map(|s| (s.t, libm::log(s.v())))
            .unzip();
        if xs.len() < 2 || (xs.len() as f64) * dt < MIN_FIT_WINDOW - 1e-9 {
            continue;
        }
        let slope = ls_slope(&xs, &ys);
        if slope < 0.0 {
            rates.push(-slope / 2.0);
        }
    }
    rates
}

/// The most conservative (slowest) decay rate over qualifying segments.
pub fn estimate_lambda(samples: &[TraceSample]) -> Result<f64, Error> {
    segment_rates(samples)
        .into_iter()
        .reduce(f64::min)
        .map(|l| l.max(LAMBDA_FLOOR))
        .ok_or(Error::NoQualifyingSegment {
            min_len: MIN_FIT_WINDOW,
        })
}

/// `(V at exit, V at re-entry)` per complete recovery episode.
pub fn episodes(switches: &[SwitchRecord]) -> Vec<(f64, f64)> {
    switches
        .windows(2)
        .filter(|w| w[0].to == Mode::Recovery && w[1].to == Mode::Tracking)
        .map(|w| (w[0].v_after, w[1].v_after))
        .collect()
}

/// Smallest `c` (plus [`C_FLOOR`]) with `V_reentry <= mu V_exit + c` for
/// every episode.
pub fn estimate_mu_c(switches: &[SwitchRecord], mu: f64) -> Result<(f64, f64), Error> {
    let eps = episodes(switches);
    if eps.is_empty() {
        return Err(Error::NoCompleteEpisode);
    }
    let c = eps
        .iter()
        .map(|&(exit, reentry)| (reentry - mu * exit).max(0.0))
        .fold(0.0, f64::max);
    Ok((mu, c + C_FLOOR))
}

/// Minimal average stable dwell time `ln(mu + delta) / (2 lambda)`.
// negated comparisons so NaN is rejected too
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn dwell_threshold(mu: f64, delta: f64, lambda: f64) -> Result<f64, Error> {
    if !(mu > 1.0) {
        return Err(Error::Domain("mu must be > 1"));
    }
    if !(delta > 0.0) {
        return Err(Error::Domain("delta must be > 0"));
    }
    if !(lambda > 0.0) {
        return Err(Error::Domain("lambda must be > 0"));
    }
    Ok(libm::log(mu + delta) / (2.0 * lambda))
}

/// Radius `c (mu + delta)^N0 / delta` of the convergence ball.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn convergence_radius(c: f64, mu: f64, delta: f64, n0: u32) -> Result<f64, Error> {
    if !(c >= 0.0) {
        return Err(Error::Domain("c must be >= 0"));
    }
    if !(mu > 1.0) {
        return Err(Error::Domain("mu must be > 1"));
    }
    if !(delta > 0.0) {
        return Err(Error::Domain("delta must be > 0"));
    }
    if n0 < 1 {
        return Err(Error::Domain("N0 must be >= 1"));
    }
    Ok(c * libm::pow(mu + delta, n0 as f64) / delta)
}

/// Closed form of `sum_{k<terms} c mu^k (mu + delta)^-(k + 1 - N0)`, the
/// steady-state term when stable time before the k-th last re-entry is
/// exactly `(k + 1 - N0) tau_as` at the threshold.
pub fn steady_state_closed_form(c: f64, mu: f64, delta: f64, n0: u32, terms: u32) -> f64 {
    let q = mu / (mu + delta);
    c * (1.0 - libm::pow(q, terms as f64)) * libm::pow(mu + delta, n0 as f64) / delta
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub bound_ok: bool,
    /// `max_T V(T) - bound(T)`; negative when the bound holds strictly.
    pub max_slack: f64,
}

/// Relative tolerance of the unrolled-bound check.
pub const BOUND_RTOL: f64 = 1e-9;

/// Per-sample unrolled bound.
///
/// In Tracking with `N` switches so far (N even):
/// `mu^(N/2) V(0) e^{-2 lambda T_s(0,T)} + sum_{k=0}^{N/2} c mu^k e^{-2 lambda T_s(t_{N-2k},T)}`
/// with `t_0 = 0`. In Recovery the bound is `mu B + c`, `B` being the
/// tracking bound at the moment the episode started.
///
/// Both sums are carried incrementally: every stable sample multiplies them
/// by `e^{-2 lambda dt}` and every re-entry maps `sum -> mu sum + c`.
pub fn trace_bounds(
    samples: &[TraceSample],
    lambda: f64,
    mu: f64,
    c: f64,
) -> Result<Vec<f64>, Error> {
    let first = samples.first().ok_or(Error::EmptyTrace)?;
    if first.mode != Mode::Tracking {
        return Err(Error::StartsInRecovery);
    }
    let decay = libm::exp(-2.0 * lambda * sample_dt(samples));
    let mut transient = first.v();
    let mut steady = c;
    let mut recovery_bound = 0.0;
    let mut out = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        if i > 0 {
            let prev = &samples[i - 1];
            if prev.mode.is_stable() {
                transient *= decay;
                steady *= decay;
            }
            match (prev.mode, s.mode) {
                (Mode::Tracking, Mode::Recovery) => recovery_bound = mu * (transient + steady) + c,
                (Mode::Recovery, Mode::Tracking) => {
                    transient *= mu;
                    steady = mu * steady + c;
                }
                _ => {}
            }
        }
        out.push(match s.mode {
            Mode::Tracking => transient + steady,
            Mode::Recovery => recovery_bound,
        });
    }
    Ok(out)
}

pub fn verify_trace_bound(
    samples: &[TraceSample],
    lambda: f64,
    mu: f64,
    c: f64,
) -> Result<BoundCheck, Error> {
    let bounds = trace_bounds(samples, lambda, mu, c)?;
    let mut ok = true;
    let mut max_slack = f64::NEG_INFINITY;
    for (s, b) in samples.iter().zip(&bounds) {
        let slack = s.v() - b;
        max_slack = max_slack.max(slack);
        if slack > BOUND_RTOL * b.abs() + 1e-15 {
            ok = false;
        }
    }
    Ok(BoundCheck {
        bound_ok: ok,
        max_slack,
    })
}

/// Smallest burst `N0` for which
/// `N_s(t, t') <= N0 + T_s(t, t') / tau_as` holds on every sample-aligned
/// interval. Re-entries are counted at switch indices in `(j, m]`.
pub fn asdt_burst(samples: &[TraceSample], tau_as: f64) -> f64 {
    let prefix = stable_prefix(samples);
    let mut reentries = 0usize;
    let mut best: f64 = 0.0;
    let mut min_so_far = f64::INFINITY;
    for (m, s) in samples.iter().enumerate() {
        if m > 0 && s.mode == Mode::Tracking && samples[m - 1].mode == Mode::Recovery {
            reentries += 1;
        }
        let g = reentries as f64 - prefix[m] / tau_as;
        min_so_far = min_so_far.min(g);
        best = best.max(g - min_so_far);
    }
    best
}

/// Trace of the exact switched system: `V` decays by `e^{-2 lambda dt}`
/// per tracking sample, holds still during recovery and maps to
/// `mu V + c` at every re-entry. `schedule` lists `(mode, samples)` runs
/// and must start in Tracking.
pub fn exact_switched_trace(
    lambda: f64,
    mu: f64,
    c: f64,
    v0: f64,
    dt: f64,
    schedule: &[(Mode, usize)],
) -> Vec<TraceSample> {
    let decay = libm::exp(-2.0 * lambda * dt);
    let total = schedule.iter().map(|&(_, n)| n).sum();
    let mut out: Vec<TraceSample> = Vec::with_capacity(total);
    let mut v = v0;
    for &(mode, n) in schedule {
        for _ in 0..n {
            if let Some(prev) = out.last() {
                if prev.mode.is_stable() {
                    v *= decay;
                }
                if prev.mode == Mode::Recovery && mode == Mode::Tracking {
                    v = mu * v + c;
                }
            }
            out.push(TraceSample {
                t: out.len() as f64 * dt,
                mode,
                err: Vec3::new(v, 0.0, 0.0),
                visible: mode.is_stable(),
            });
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub delta: f64,
    pub mu: f64,
    pub n0: u32,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            delta: DEFAULT_DELTA,
            mu: DEFAULT_MU,
            n0: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub lambda: f64,
    /// False when no tracking segment qualified for the decay fit and
    /// `lambda` is the floor value.
    pub lambda_fitted: bool,
    pub mu: f64,
    pub c: f64,
    /// `None` = unbounded (fewer than two re-entries).
    pub tau_as: Option<f64>,
    pub n0: u32,
    pub delta: f64,
    pub threshold: f64,
    pub radius: f64,
    pub dwell_ok: bool,
    pub bound_ok: bool,
    pub max_bound_slack: f64,
    /// Worst `V` over the final 10% of tracking samples is within
    /// `radius + 0.1 m`.
    pub tail_ok: bool,
    pub tail_max_v: f64,
    pub episodes: usize,
    /// `(mu, c)` pairs over [`MU_GRID`].
    pub mu_c_sensitivity: Vec<(f64, f64)>,
}

/// Fit `(lambda, mu, c)`, measure `tau_as` and check every condition.
pub fn certify(samples: &[TraceSample], opts: &CertifyOptions) -> Result<Certificate, Error> {
    if samples.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let switches = extract_switches(samples);
    let dwell = measure_tau_as(samples, opts.n0);
    // A run that never switches often enough has no dwell condition to
    // meet, so a missing decay fit only weakens the bound check.
    let (lambda, lambda_fitted) = match estimate_lambda(samples) {
        Ok(l) => (l, true),
        Err(Error::NoQualifyingSegment { .. }) if dwell.tau_as.is_none() => (LAMBDA_FLOOR, false),
        Err(e) => return Err(e),
    };
    let fit = |mu| match estimate_mu_c(&switches, mu) {
        Err(Error::NoCompleteEpisode) => Ok((mu, C_FLOOR)),
        other => other,
    };
    let (mu, c) = fit(opts.mu)?;
    let mu_c_sensitivity = MU_GRID
        .iter()
        .map(|&m| fit(m))
        .collect::<Result<Vec<_>, _>>()?;
    let threshold = dwell_threshold(mu, opts.delta, lambda)?;
    let radius = convergence_radius(c, mu, opts.delta, opts.n0)?;
    let bound = verify_trace_bound(samples, lambda, mu, c)?;

    let stable: Vec<f64> = samples
        .iter()
        .filter(|s| s.mode.is_stable())
        .map(TraceSample::v)
        .collect();
    let tail_len = (stable.len() / 10).max(1);
    let tail_max_v = stable[stable.len() - tail_len..]
        .iter()
        .copied()
        .fold(0.0, f64::max);

    Ok(Certificate {
        lambda,
        lambda_fitted,
        mu,
        c,
        tau_as: dwell.tau_as,
        n0: opts.n0,
        delta: opts.delta,
        threshold,
        radius,
        dwell_ok: dwell.value() > threshold,
        bound_ok: bound.bound_ok,
        max_bound_slack: bound.max_slack,
        tail_ok: tail_max_v <= radius + TAIL_SLACK,
        tail_max_v,
        episodes: episodes(&switches).len(),
        mu_c_sensitivity,
    })
}
