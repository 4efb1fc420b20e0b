//! Point-mass dynamics and scripted target trajectories.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Vec3};

/// Position/velocity of a point mass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KinState {
    pub pos: Vec3,
    pub vel: Vec3,
}

impl KinState {
    pub const fn new(pos: Vec3, vel: Vec3) -> Self {
        KinState { pos, vel }
    }

    pub const fn at_rest(pos: Vec3) -> Self {
        KinState {
            pos,
            vel: Vec3::ZERO,
        }
    }
}

/// Axis-aligned box the simulation is allowed to use.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workspace {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Default for Workspace {
    /// The 5.6 m x 5.4 m x 3 m flight arena, camera axis along +x.
    fn default() -> Self {
        Workspace {
            lo: Vec3::new(0.0, -2.7, 0.0),
            hi: Vec3::new(5.6, 2.7, 3.0),
        }
    }
}

impl Workspace {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.lo.is_finite() && self.hi.is_finite()) {
            return Err(Error::config("workspace", "bounds must be finite"));
        }
        if self.lo.x >= self.hi.x || self.lo.y >= self.hi.y || self.lo.z >= self.hi.z {
            return Err(Error::config("workspace", "lo must be < hi on every axis"));
        }
        Ok(())
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.lo.x
            && p.x <= self.hi.x
            && p.y >= self.lo.y
            && p.y <= self.hi.y
            && p.z >= self.lo.z
            && p.z <= self.hi.z
    }
}

/// A scripted target trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    /// `y = cy + ay cos(wt + phase)`, `z = cz + az sin(wt + phase)`; x fixed.
    Ellipse {
        center: Vec3,
        /// Semi-axes along y and z.
        semi_axes: [f64; 2],
        angular_rate: f64,
        duration: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Constant-speed figure-eight through 8 waypoints in the yz-plane,
    /// `width` along y and `height` along z.
    SquareLemniscate {
        center: Vec3,
        width: f64,
        height: f64,
        speed: f64,
        duration: f64,
    },
    /// Constant-speed polyline. A closed path loops back to the first point;
    /// an open path stops at the last one.
    Waypoints {
        points: Vec<Vec3>,
        speed: f64,
        duration: f64,
        #[serde(default)]
        closed: bool,
    },
}

impl TrajectorySpec {
    /// Ellip: 3 laps in 45 s, peak speed 2.0 * 0.419 = 0.838 m/s.
    pub fn ellip() -> Self {
        TrajectorySpec::Ellipse {
            center: Vec3::new(4.5, 0.0, 1.5),
            semi_axes: [2.0, 0.75],
            angular_rate: 0.419,
            duration: 45.0,
            phase: 0.0,
        }
    }

    /// SLem: 0.6 m/s figure-eight spanning 4.0 m x 1.5 m, 40 s.
    pub fn slem() -> Self {
        TrajectorySpec::SquareLemniscate {
            center: Vec3::new(4.5, 0.0, 1.5),
            width: 4.0,
            height: 1.5,
            speed: 0.6,
            duration: 40.0,
        }
    }

    pub fn duration(&self) -> f64 {
        match *self {
            TrajectorySpec::Ellipse { duration, .. }
            | TrajectorySpec::SquareLemniscate { duration, .. }
            | TrajectorySpec::Waypoints { duration, .. } => duration,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.duration()) {
            return Err(Error::config("trajectory.duration", "must be > 0"));
        }
        match self {
            TrajectorySpec::Ellipse {
                center,
                semi_axes,
                angular_rate,
                phase,
                ..
            } => {
                if !center.is_finite() || !phase.is_finite() {
                    return Err(Error::config(
                        "trajectory",
                        "center and phase must be finite",
                    ));
                }
                if !pos(*angular_rate) {
                    return Err(Error::config("trajectory.angular_rate", "must be > 0"));
                }
                if !semi_axes.iter().all(|a| a.is_finite() && *a >= 0.0) {
                    return Err(Error::config("trajectory.semi_axes", "must be >= 0"));
                }
            }
            TrajectorySpec::SquareLemniscate {
                center,
                width,
                height,
                speed,
                ..
            } => {
                if !center.is_finite() {
                    return Err(Error::config("trajectory.center", "must be finite"));
                }
                if !pos(*width) || !pos(*height) {
                    return Err(Error::config("trajectory", "width and height must be > 0"));
                }
                if !pos(*speed) {
                    return Err(Error::config("trajectory.speed", "must be > 0"));
                }
            }
            TrajectorySpec::Waypoints { points, speed, .. } => {
                if points.len() < 2 {
                    return Err(Error::config("trajectory.points", "need at least 2 points"));
                }
                if !points.iter().all(|p| p.is_finite()) {
                    return Err(Error::config("trajectory.points", "must be finite"));
                }
                if polyline_length(points, false) <= 0.0 {
                    return Err(Error::config("trajectory.points", "path has zero length"));
                }
                if !pos(*speed) {
                    return Err(Error::config("trajectory.speed", "must be > 0"));
                }
            }
        }
        Ok(())
    }

    /// Samples the path every 1 ms and fails if any point leaves `ws`.
    pub fn check_workspace(&self, ws: &Workspace) -> Result<(), Error> {
        let n = libm::ceil(self.duration() / 1e-3) as usize;
        for i in 0..=n {
            let t = (i as f64 * 1e-3).min(self.duration());
            let s = eval_trajectory(self, t)?;
            if !ws.contains(s.pos) {
                return Err(Error::config("trajectory", "leaves the workspace"));
            }
        }
        Ok(())
    }
}

fn lemniscate_points(center: Vec3, width: f64, height: f64) -> Vec<Vec3> {
    let (hw, hh) = (width / 2.0, height / 2.0);
    let yz = [
        (0.0, 0.0),
        (hw / 2.0, hh),
        (hw, 0.0),
        (hw / 2.0, -hh),
        (0.0, 0.0),
        (-hw / 2.0, hh),
        (-hw, 0.0),
        (-hw / 2.0, -hh),
    ];
    yz.iter()
        .map(|&(y, z)| center + Vec3::new(0.0, y, z))
        .collect()
}

fn polyline_length(points: &[Vec3], closed: bool) -> f64 {
    let mut len: f64 = points.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    if closed {
        len += (points[0] - points[points.len() - 1]).norm();
    }
    len
}

fn eval_polyline(points: &[Vec3], closed: bool, speed: f64, t: f64) -> KinState {
    let mut segs: Vec<(Vec3, Vec3)> = points.windows(2).map(|w| (w[0], w[1])).collect();
    if closed {
        segs.push((points[points.len() - 1], points[0]));
    }
    let total = polyline_length(points, closed);
    let mut s = speed * t;
    if closed {
        s %= total;
    } else if s >= total {
        return KinState::at_rest(points[points.len() - 1]);
    }
    for (a, b) in segs {
        let len = (b - a).norm();
        if len == 0.0 {
            continue;
        }
        if s < len {
            let dir = (b - a) / len;
            return KinState::new(a + dir * s, dir * speed);
        }
        s -= len;
    }
    // round-off at the very end of a closed lap
    let (a, b) = (points[points.len() - 1], points[0]);
    let dir = if closed {
        (b - a) / (b - a).norm()
    } else {
        Vec3::ZERO
    };
    KinState::new(
        if closed { b } else { points[points.len() - 1] },
        dir * speed,
    )
}

/// Position and analytic velocity of the scripted target at time `t`.
pub fn eval_trajectory(spec: &TrajectorySpec, t: f64) -> Result<KinState, Error> {
    let duration = spec.duration();
    if !(0.0..=duration).contains(&t) {
        return Err(Error::OutOfRange { t, duration });
    }
    Ok(match spec {
        TrajectorySpec::Ellipse {
            center,
            semi_axes: [ay, az],
            angular_rate: w,
            phase,
            ..
        } => {
            let th = w * t + phase;
            let (s, c) = (libm::sin(th), libm::cos(th));
            KinState::new(
                *center + Vec3::new(0.0, ay * c, az * s),
                Vec3::new(0.0, -ay * w * s, az * w * c),
            )
        }
        TrajectorySpec::SquareLemniscate {
            center,
            width,
            height,
            speed,
            ..
        } => eval_polyline(
            &lemniscate_points(*center, *width, *height),
            true,
            *speed,
            t,
        ),
        TrajectorySpec::Waypoints {
            points,
            speed,
            closed,
            ..
        } => eval_polyline(points, *closed, *speed, t),
    })
}

/// Exact constant-acceleration update over `dt`.
pub fn step_double_integrator(s: KinState, accel: Vec3, dt: f64) -> KinState {
    KinState {
        pos: s.pos + s.vel * dt + accel * (0.5 * dt * dt),
        vel: s.vel + accel * dt,
    }
}

/// Clamp each velocity component into `[-limit, limit]`.
pub fn clamp_velocity(s: KinState, limits: Vec3) -> KinState {
    KinState {
        pos: s.pos,
        vel: s.vel.clamp_symmetric(limits),
    }
}

/// Full period of an ellipse trajectory, if `spec` is one.
pub fn ellipse_period(spec: &TrajectorySpec) -> Option<f64> {
    match spec {
        TrajectorySpec::Ellipse { angular_rate, .. } => Some(2.0 * PI / angular_rate),
        _ => None,
    }
}

/// Speed samples of `spec` on a uniform grid, used for path statistics.
pub fn speed_profile(spec: &TrajectorySpec, step: f64) -> Result<Vec<f64>, Error> {
    let n = libm::floor(spec.duration() / step) as usize;
    let mut out = vec![0.0; n + 1];
    for (i, v) in out.iter_mut().enumerate() {
        *v = eval_trajectory(spec, i as f64 * step)?.vel.norm();
    }
    Ok(out)
}
