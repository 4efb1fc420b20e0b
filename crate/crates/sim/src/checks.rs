//! Post-run invariant checks.

use svt_core::scenario::{RunResult, ScenarioConfig};
use svt_core::trace::Trace;

/// Backoff beyond `d_max` tolerated before an episode counts as a violation
/// (the plant can coast a little past the clamped pose).
pub const BACKOFF_TOL: f64 = 0.05;

/// Describe every violated run invariant; empty when the run is sound.
pub fn run_violations(cfg: &ScenarioConfig, trace: &Trace, res: &RunResult) -> Vec<String> {
    let mut out = Vec::new();
    if !(0.0..=1.0).contains(&res.ftv) {
        out.push(format!("ftv {} outside [0, 1]", res.ftv));
    }
    if !(res.ae >= 0.0 && res.ae.is_finite()) {
        out.push(format!(
            "ae {} is not a finite non-negative distance",
            res.ae
        ));
    }
    if res.d_max_observed > cfg.svt.d_max + BACKOFF_TOL && res.recovery_failures == 0 {
        out.push(format!(
            "observed backoff {:.3} m exceeds d_max {} m with no recovery failure recorded",
            res.d_max_observed, cfg.svt.d_max
        ));
    }
    if let Some(r) = trace
        .rows
        .iter()
        .find(|r| !(r.pursuer.pos.is_finite() && r.pursuer.vel.is_finite()))
    {
        out.push(format!("non-finite pursuer state at t = {}", r.t));
    }
    out
}
