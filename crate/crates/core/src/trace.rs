//! Recorded simulation runs.

use alloc::vec::Vec;

use crate::controller::{Event, Mode};
use crate::sim::KinState;
use crate::stability::{lyapunov, TraceSample};
use crate::Vec3;

/// One simulation step.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub mode: Mode,
    /// Geometric visibility (ignores dropouts).
    pub visible: bool,
    pub target: KinState,
    pub pursuer: KinState,
    /// Filtered target position, if the filter has been initialized.
    pub estimate: Option<Vec3>,
    /// Tracking error norm, `|(x_T - x_P) - offset e_x|`.
    pub v: f64,
    pub events: [Option<Event>; 2],
}

/// A run at fixed step `dt`, offset recorded for error reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub dt: f64,
    pub offset: f64,
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn tracking_error(&self, row: &TraceRow) -> Vec3 {
        tracking_error(&row.target, &row.pursuer, self.offset)
    }

    /// Samples for the stability analysis.
    pub fn stability_samples(&self) -> Vec<TraceSample> {
        self.rows
            .iter()
            .map(|r| TraceSample {
                t: r.t,
                mode: r.mode,
                err: self.tracking_error(r),
                visible: r.visible,
            })
            .collect()
    }
}

pub fn tracking_error(target: &KinState, pursuer: &KinState, offset: f64) -> Vec3 {
    target.pos - pursuer.pos - Vec3::new(offset, 0.0, 0.0)
}

pub(crate) fn row_v(target: &KinState, pursuer: &KinState, offset: f64) -> f64 {
    lyapunov(tracking_error(target, pursuer, offset))
}
