//! Camera visibility, the displacement observer and the target filter.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::reach::IntervalBox;
use crate::sim::KinState;
use crate::{Error, Vec3};

/// Pinhole camera reduced to a visibility cone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    /// Full apex angle of the cone, radians. The cone test uses half of it.
    pub fov: f64,
    /// Unit optical axis.
    #[serde(default = "default_facing")]
    pub facing: Vec3,
}

fn default_facing() -> Vec3 {
    Vec3::X
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            fov: 70f64.to_radians(),
            facing: Vec3::X,
        }
    }
}

impl CameraModel {
    pub fn half_angle(&self) -> f64 {
        self.fov / 2.0
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.fov > 0.0 && self.fov < core::f64::consts::PI) {
            return Err(Error::config("camera.fov", "must be in (0, pi)"));
        }
        if !self.facing.is_finite() || (self.facing.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::config("camera.facing", "must be a unit vector"));
        }
        Ok(())
    }
}

/// Is `target` inside the cone apexed at `pursuer`?
///
/// With `V = target - pursuer` and `R` the optical axis this is
/// `V.R > 0 && |V x R| <= (V.R) tan(fov / 2)`. Coincident points are not
/// visible.
pub fn visible(pursuer: Vec3, target: Vec3, cam: &CameraModel) -> bool {
    let v = target - pursuer;
    let along = v.dot(cam.facing);
    along > 0.0 && v.cross(cam.facing).norm() <= along * libm::tan(cam.half_angle())
}

/// What the observer reports for one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ObserverOutput {
    /// Target minus pursuer position, possibly noisy.
    Displacement(Vec3),
    NotVisible,
}

impl ObserverOutput {
    pub fn is_visible(&self) -> bool {
        matches!(self, ObserverOutput::Displacement(_))
    }
}

/// Detection errors: additive Gaussian noise on the displacement plus
/// random per-frame dropouts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub pos_sigma: Vec3,
    pub dropout_prob: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            pos_sigma: Vec3::splat(0.02),
            dropout_prob: 0.02,
        }
    }
}

impl NoiseModel {
    pub const NONE: NoiseModel = NoiseModel {
        pos_sigma: Vec3::ZERO,
        dropout_prob: 0.0,
    };

    pub fn validate(&self) -> Result<(), Error> {
        let s = self.pos_sigma;
        if !(s.is_finite() && s.x >= 0.0 && s.y >= 0.0 && s.z >= 0.0) {
            return Err(Error::config("noise.pos_sigma", "must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::config("noise.dropout_prob", "must be in [0, 1)"));
        }
        Ok(())
    }
}

/// One camera frame. Geometry decides first; a visible target may still be
/// dropped, otherwise the displacement is reported with additive noise.
///
/// Random draws happen only for geometrically visible frames: one uniform
/// for the dropout, then three normals.
pub fn observe<R: Rng + ?Sized>(
    pursuer: &KinState,
    target: &KinState,
    cam: &CameraModel,
    noise: &NoiseModel,
    rng: &mut R,
) -> ObserverOutput {
    if !visible(pursuer.pos, target.pos, cam) {
        return ObserverOutput::NotVisible;
    }
    let u: f64 = rng.random();
    if u < noise.dropout_prob {
        return ObserverOutput::NotVisible;
    }
    let mut n = [0.0; 3];
    for v in n.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    let noise = Vec3::from(n).zip(noise.pos_sigma, |a, s| a * s);
    ObserverOutput::Displacement(target.pos - pursuer.pos + noise)
}

/// Tuning for the per-axis constant-velocity filter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    /// Process noise, white acceleration std dev (m/s^2).
    pub accel_sigma: f64,
    /// Measurement noise std dev (m).
    pub meas_sigma: f64,
    /// Initial variances of position and velocity.
    pub init_var: [f64; 2],
    /// Half-width of the estimate boxes in standard deviations.
    pub n_sigma: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            accel_sigma: 2.0,
            meas_sigma: 0.02,
            init_var: [0.25, 1.0],
            n_sigma: 3.0,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.accel_sigma) && ok(self.init_var[0]) && ok(self.init_var[1])) {
            return Err(Error::config("filter", "variances must be finite and >= 0"));
        }
        if !(self.meas_sigma.is_finite() && self.meas_sigma > 0.0) {
            return Err(Error::config("filter.meas_sigma", "must be > 0"));
        }
        if !(self.n_sigma.is_finite() && self.n_sigma >= 0.0) {
            return Err(Error::config("filter.n_sigma", "must be >= 0"));
        }
        Ok(())
    }
}

/// Two-state (position, velocity) Kalman filter for one axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KalmanAxis {
    pub p: f64,
    pub v: f64,
    /// Symmetric covariance `[[pp, pv], [pv, vv]]`.
    pub cov: [[f64; 2]; 2],
    pub accel_sigma: f64,
    pub meas_sigma: f64,
}

impl KalmanAxis {
    pub fn new(p: f64, v: f64, cov: [[f64; 2]; 2], accel_sigma: f64, meas_sigma: f64) -> Self {
        KalmanAxis {
            p,
            v,
            cov,
            accel_sigma,
            meas_sigma,
        }
    }

    pub fn trace(&self) -> f64 {
        self.cov[0][0] + self.cov[1][1]
    }
}

/// Constant-velocity prediction with discrete white-acceleration noise.
pub fn kf_predict(kf: &KalmanAxis, dt: f64) -> KalmanAxis {
    let [[a, b], [_, d]] = kf.cov;
    let q = kf.accel_sigma * kf.accel_sigma;
    let (dt2, dt3, dt4) = (dt * dt, dt * dt * dt, dt * dt * dt * dt);
    // F P F^T with F = [[1, dt], [0, 1]]
    let pp = a + 2.0 * dt * b + dt2 * d + q * dt4 / 4.0;
    let pv = b + dt * d + q * dt3 / 2.0;
    let vv = d + q * dt2;
    KalmanAxis {
        p: kf.p + kf.v * dt,
        v: kf.v,
        cov: [[pp, pv], [pv, vv]],
        ..*kf
    }
}

/// Scalar position update (`H = [1, 0]`), Joseph form.
pub fn kf_update(kf: &KalmanAxis, z: f64) -> KalmanAxis {
    let [[a, b], [_, d]] = kf.cov;
    let r = kf.meas_sigma * kf.meas_sigma;
    let s = a + r;
    let (k0, k1) = (a / s, b / s);
    let innov = z - kf.p;
    // (I - K H) P (I - K H)^T + K r K^T
    let (m00, m10) = (1.0 - k0, -k1);
    let pp = m00 * m00 * a + k0 * k0 * r;
    let pv = m00 * (m10 * a + b) + k0 * k1 * r;
    let vv = m10 * m10 * a + 2.0 * m10 * b + d + k1 * k1 * r;
    KalmanAxis {
        p: kf.p + k0 * innov,
        v: kf.v + k1 * innov,
        cov: [[pp, pv], [pv, vv]],
        ..*kf
    }
}

/// Target estimate in world coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub pos: Vec3,
    pub vel: Vec3,
    pub pos_box: IntervalBox,
    pub vel_box: IntervalBox,
}

/// Three independent axis filters, initialized on the first measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetFilter {
    cfg: FilterConfig,
    axes: Option<[KalmanAxis; 3]>,
}

impl TargetFilter {
    pub fn new(cfg: FilterConfig) -> Self {
        TargetFilter { cfg, axes: None }
    }

    pub fn is_initialized(&self) -> bool {
        self.axes.is_some()
    }

    pub fn axes(&self) -> Option<&[KalmanAxis; 3]> {
        self.axes.as_ref()
    }

    pub fn predict(&mut self, dt: f64) {
        if let Some(axes) = self.axes.as_mut() {
            for a in axes.iter_mut() {
                *a = kf_predict(a, dt);
            }
        }
    }

    /// Fold in a world-frame position measurement.
    pub fn update(&mut self, z: Vec3) {
        let cfg = self.cfg;
        match self.axes.as_mut() {
            Some(axes) => {
                for (i, a) in axes.iter_mut().enumerate() {
                    *a = kf_update(a, z.axis(i));
                }
            }
            None => {
                let cov = [[cfg.init_var[0], 0.0], [0.0, cfg.init_var[1]]];
                let mk = |p| KalmanAxis::new(p, 0.0, cov, cfg.accel_sigma, cfg.meas_sigma);
                self.axes = Some([mk(z.x), mk(z.y), mk(z.z)]);
            }
        }
    }

    pub fn estimate(&self) -> Result<Estimate, Error> {
        kf_estimate(
            self.axes.as_ref().ok_or(Error::Uninitialized)?,
            self.cfg.n_sigma,
        )
    }
}

/// Mean and `mean +- n_sigma * std` boxes from the three axis filters.
pub fn kf_estimate(axes: &[KalmanAxis; 3], n_sigma: f64) -> Result<Estimate, Error> {
    let get = |f: fn(&KalmanAxis) -> f64| Vec3::new(f(&axes[0]), f(&axes[1]), f(&axes[2]));
    let pos = get(|a| a.p);
    let vel = get(|a| a.v);
    let pos_hw = get(|a| libm::sqrt(a.cov[0][0].max(0.0))) * n_sigma;
    let vel_hw = get(|a| libm::sqrt(a.cov[1][1].max(0.0))) * n_sigma;
    Ok(Estimate {
        pos,
        vel,
        pos_box: IntervalBox::new(pos - pos_hw, pos + pos_hw),
        vel_box: IntervalBox::new(vel - vel_hw, vel + vel_hw),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::vec::Vec;

    fn cam() -> CameraModel {
        CameraModel::default()
    }

    #[test]
    fn on_axis_and_behind() {
        assert!(visible(Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), &cam()));
        assert!(!visible(Vec3::ZERO, Vec3::new(-1.0, 0.0, 0.0), &cam()));
        assert!(!visible(Vec3::ZERO, Vec3::ZERO, &cam()));
    }

    #[test]
    fn cone_boundary() {
        let t = libm::tan(35f64.to_radians());
        assert!(visible(Vec3::ZERO, Vec3::new(1.0, t, 0.0), &cam()));
        assert!(!visible(Vec3::ZERO, Vec3::new(1.0, t + 1e-6, 0.0), &cam()));
        // direct angle check agrees on both sides
        let ang = |y: f64| libm::atan2(y, 1.0);
        assert!(ang(t - 1e-6) <= 35f64.to_radians());
        assert!(ang(t + 1e-6) > 35f64.to_radians());
    }

    #[test]
    fn noiseless_observer_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = KinState::at_rest(Vec3::new(1.0, 0.2, 1.0));
        let t = KinState::at_rest(Vec3::new(2.5, 0.1, 1.3));
        let out = observe(&p, &t, &cam(), &NoiseModel::NONE, &mut rng);
        assert_eq!(out, ObserverOutput::Displacement(t.pos - p.pos));
        let behind = KinState::at_rest(Vec3::new(0.0, 0.0, 1.0));
        let noisy = NoiseModel {
            pos_sigma: Vec3::splat(1.0),
            dropout_prob: 0.0,
        };
        assert_eq!(
            observe(&p, &behind, &cam(), &noisy, &mut rng),
            ObserverOutput::NotVisible
        );
    }

    #[test]
    fn dropout_sequence_replays_with_seed() {
        let p = KinState::at_rest(Vec3::ZERO);
        let t = KinState::at_rest(Vec3::new(1.0, 0.0, 0.0));
        let noise = NoiseModel {
            pos_sigma: Vec3::splat(0.05),
            dropout_prob: 0.5,
        };
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..200)
                .map(|_| observe(&p, &t, &cam(), &noise, &mut rng))
                .collect::<Vec<_>>()
        };
        let a = run(7);
        assert_eq!(a, run(7));
        let hits = a.iter().filter(|o| o.is_visible()).count();
        assert!(hits > 60 && hits < 140, "hits = {hits}");
    }

    #[test]
    fn dropout_of_one_is_rejected() {
        let n = NoiseModel {
            pos_sigma: Vec3::ZERO,
            dropout_prob: 1.0,
        };
        assert!(n.validate().is_err());
    }

    #[test]
    fn predict_examples() {
        let kf = KalmanAxis::new(0.0, 1.0, [[0.0; 2]; 2], 0.0, 0.02);
        let n = kf_predict(&kf, 0.01);
        assert!((n.p - 0.01).abs() < 1e-15);
        assert_eq!(n.v, 1.0);
        assert_eq!(n.cov, [[0.0; 2]; 2]);
        let kf = KalmanAxis::new(0.0, 0.0, [[0.1, 0.0], [0.0, 0.1]], 2.0, 0.02);
        assert!(kf_predict(&kf, 0.01).trace() > kf.trace());
    }

    #[test]
    fn update_limits() {
        let kf = KalmanAxis::new(0.0, 0.3, [[0.25, 0.0], [0.0, 1.0]], 2.0, 1e-12);
        let n = kf_update(&kf, 1.7);
        assert!((n.p - 1.7).abs() < 1e-6);
        let kf = KalmanAxis {
            meas_sigma: 1e12,
            ..kf
        };
        let n = kf_update(&kf, 1.7);
        assert!((n.p - kf.p).abs() < 1e-6);
        assert!((n.v - kf.v).abs() < 1e-6);
        // posterior position variance never exceeds the prior
        assert!(n.cov[0][0] <= kf.cov[0][0]);
    }

    #[test]
    fn static_target_velocity_stays_small() {
        let mut kf = KalmanAxis::new(0.4, 0.0, [[0.25, 0.0], [0.0, 1.0]], 2.0, 0.02);
        for _ in 0..200 {
            kf = kf_update(&kf_predict(&kf, 0.01), 0.5);
        }
        assert!(kf.v.abs() < 0.01, "v = {}", kf.v);
        assert!((kf.p - 0.5).abs() < 1e-3);
    }

    #[test]
    fn estimate_boxes() {
        let mut f = TargetFilter::new(FilterConfig::default());
        assert_eq!(f.estimate(), Err(Error::Uninitialized));
        f.update(Vec3::new(1.0, 2.0, 3.0));
        let axes = f.axes().unwrap();
        let mut zero = *axes;
        for a in zero.iter_mut() {
            a.cov = [[0.0; 2]; 2];
        }
        let e = kf_estimate(&zero, 3.0).unwrap();
        assert_eq!(e.pos_box.lo, e.pos_box.hi);
        assert_eq!(e.pos_box.lo, Vec3::new(1.0, 2.0, 3.0));
        zero[1].cov[0][0] = 0.01;
        let e = kf_estimate(&zero, 3.0).unwrap();
        let hw = (e.pos_box.hi - e.pos_box.lo) / 2.0;
        assert!((hw.y - 0.3).abs() < 1e-12);
        assert_eq!(hw.x, 0.0);
        assert_eq!(hw.z, 0.0);
        assert!(e.pos_box.contains(e.pos));
    }
}
