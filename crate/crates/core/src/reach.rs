//! Fixed-time forward reachable sets of a bounded-acceleration double
//! integrator.
//!
//! Per axis, position at time `t` is `p0 + v0 t + integral of (t - s) a(s) ds`,
//! which is monotone in `p0`, `v0` and `a(.)`. With `|a| <= a_max` the
//! extremes come from the box corners under constant `+-a_max`, so the box
//! below is exact, not just sound.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sim::{step_double_integrator, KinState};
use crate::{Error, Vec3};

/// Axis-aligned box `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalBox {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl IntervalBox {
    pub const fn new(lo: Vec3, hi: Vec3) -> Self {
        IntervalBox { lo, hi }
    }

    pub const fn point(p: Vec3) -> Self {
        IntervalBox { lo: p, hi: p }
    }

    pub fn is_valid(&self) -> bool {
        self.lo.is_finite()
            && self.hi.is_finite()
            && self.lo.x <= self.hi.x
            && self.lo.y <= self.hi.y
            && self.lo.z <= self.hi.z
    }

    pub fn contains(&self, p: Vec3) -> bool {
        self.contains_tol(p, 0.0)
    }

    pub fn contains_tol(&self, p: Vec3, tol: f64) -> bool {
        (0..3).all(|i| p.axis(i) >= self.lo.axis(i) - tol && p.axis(i) <= self.hi.axis(i) + tol)
    }

    /// `other` is inside `self` on every axis.
    pub fn encloses(&self, other: &IntervalBox) -> bool {
        self.contains(other.lo) && self.contains(other.hi)
    }

    pub fn center(&self) -> Vec3 {
        (self.lo + self.hi) * 0.5
    }

    /// The 8 corners, bit `i` of the index selecting `hi` on axis `i`.
    pub fn corners(&self) -> [Vec3; 8] {
        core::array::from_fn(|k| {
            Vec3::new(
                if k & 1 == 0 { self.lo.x } else { self.hi.x },
                if k & 2 == 0 { self.lo.y } else { self.hi.y },
                if k & 4 == 0 { self.lo.z } else { self.hi.z },
            )
        })
    }
}

/// Target acceleration bound and prediction horizon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReachParams {
    /// Symmetric per-axis acceleration bound, m/s^2.
    pub a_max: f64,
    /// Horizon, s.
    pub horizon: f64,
}

impl ReachParams {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.a_max.is_finite() && self.a_max >= 0.0) {
            return Err(Error::config("reach.a_max", "must be >= 0"));
        }
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(Error::config("reach.horizon", "must be >= 0"));
        }
        Ok(())
    }
}

/// Positions reachable at exactly `p.horizon` from any start in
/// `pos0 x vel0`.
pub fn reach_position_box(pos0: &IntervalBox, vel0: &IntervalBox, p: &ReachParams) -> IntervalBox {
    let t = p.horizon;
    let spread = 0.5 * p.a_max * t * t;
    IntervalBox {
        lo: pos0.lo + vel0.lo * t - Vec3::splat(spread),
        hi: pos0.hi + vel0.hi * t + Vec3::splat(spread),
    }
}

/// Center and Euclidean half-diagonal of `b`.
pub fn bounding_sphere(b: &IntervalBox) -> (Vec3, f64) {
    (b.center(), (b.hi - b.lo).norm() / 2.0)
}

/// Endpoint of the constant bang input `signs * a_max` (each sign `+-1`).
pub fn bang_endpoint(pos0: Vec3, vel0: Vec3, p: &ReachParams, signs: Vec3) -> Vec3 {
    step_double_integrator(KinState::new(pos0, vel0), signs * p.a_max, p.horizon).pos
}

/// Monte Carlo endpoints under piecewise-constant random accelerations.
///
/// Each rollout splits `[0, horizon]` at up to 4 uniform random times. Each
/// piece gets a per-axis acceleration that is `-a_max`, `+a_max` or uniform
/// in between (probabilities 1/4, 1/4, 1/2). Pieces are integrated exactly.
pub fn mc_reach_samples<R: Rng + ?Sized>(
    pos0: Vec3,
    vel0: Vec3,
    p: &ReachParams,
    n: usize,
    rng: &mut R,
) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(n);
    let mut cuts = [0.0f64; 5];
    for _ in 0..n {
        let pieces = rng.random_range(1..=5usize);
        for c in cuts.iter_mut().take(pieces - 1) {
            *c = rng.random::<f64>() * p.horizon;
        }
        cuts[..pieces - 1].sort_by(f64::total_cmp);
        cuts[pieces - 1] = p.horizon;
        let mut s = KinState::new(pos0, vel0);
        let mut t = 0.0;
        for &end in &cuts[..pieces] {
            let a = Vec3::new(
                draw_accel(rng, p.a_max),
                draw_accel(rng, p.a_max),
                draw_accel(rng, p.a_max),
            );
            if end > t {
                s = step_double_integrator(s, a, end - t);
            }
            t = end;
        }
        out.push(s.pos);
    }
    out
}

fn draw_accel<R: Rng + ?Sized>(rng: &mut R, a_max: f64) -> f64 {
    match rng.random_range(0..4u8) {
        0 => -a_max,
        1 => a_max,
        _ => (2.0 * rng.random::<f64>() - 1.0) * a_max,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> ReachParams {
        ReachParams {
            a_max: 2.0,
            horizon: 1.5,
        }
    }

    #[test]
    fn one_axis_example() {
        let b = reach_position_box(
            &IntervalBox::point(Vec3::ZERO),
            &IntervalBox::point(Vec3::new(1.0, 0.0, 0.0)),
            &params(),
        );
        assert_eq!(b.lo.x, -0.75);
        assert_eq!(b.hi.x, 3.75);
    }

    #[test]
    fn degenerate_inputs_return_start_box() {
        let pos0 = IntervalBox::new(Vec3::new(1.0, 2.0, 3.0), Vec3::new(1.5, 2.5, 3.5));
        let still = IntervalBox::point(Vec3::ZERO);
        let no_acc = ReachParams {
            a_max: 0.0,
            horizon: 1.5,
        };
        assert_eq!(reach_position_box(&pos0, &still, &no_acc), pos0);
        let vel = IntervalBox::new(Vec3::splat(-1.0), Vec3::splat(1.0));
        let no_time = ReachParams {
            a_max: 2.0,
            horizon: 0.0,
        };
        assert_eq!(reach_position_box(&pos0, &vel, &no_time), pos0);
    }

    #[test]
    fn sphere_examples() {
        let (c, r) = bounding_sphere(&IntervalBox::point(Vec3::new(1.0, 2.0, 3.0)));
        assert_eq!((c, r), (Vec3::new(1.0, 2.0, 3.0), 0.0));
        let (c, r) = bounding_sphere(&IntervalBox::new(Vec3::ZERO, Vec3::splat(1.0)));
        assert_eq!(c, Vec3::splat(0.5));
        assert!((r - 3f64.sqrt() / 2.0).abs() < 1e-15);
        let b = IntervalBox::new(Vec3::new(-0.75, 0.0, 1.5), Vec3::new(3.75, 0.0, 1.5));
        let (c, r) = bounding_sphere(&b);
        assert_eq!(c, Vec3::new(1.5, 0.0, 1.5));
        assert_eq!(r, 2.25);
    }

    #[test]
    fn bang_input_hits_corner() {
        let p = params();
        let (p0, v0) = (Vec3::new(0.3, -0.2, 1.0), Vec3::new(0.5, 0.0, -0.4));
        let b = reach_position_box(&IntervalBox::point(p0), &IntervalBox::point(v0), &p);
        assert!((bang_endpoint(p0, v0, &p, Vec3::splat(1.0)) - b.hi).norm() < 1e-12);
        assert!((bang_endpoint(p0, v0, &p, Vec3::splat(-1.0)) - b.lo).norm() < 1e-12);
    }

    #[test]
    fn samples_are_contained() {
        let p = params();
        let (p0, v0) = (Vec3::new(4.5, 1.0, 1.5), Vec3::new(0.0, -0.8, 0.3));
        let b = reach_position_box(&IntervalBox::point(p0), &IntervalBox::point(v0), &p);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in mc_reach_samples(p0, v0, &p, 2000, &mut rng) {
            assert!(b.contains_tol(s, 1e-9));
        }
    }

    #[test]
    fn zero_velocity_cloud_is_centered() {
        let p = params();
        let p0 = Vec3::new(1.0, 1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = mc_reach_samples(p0, Vec3::ZERO, &p, 20_000, &mut rng);
        let mean = pts.iter().fold(Vec3::ZERO, |a, &b| a + b) / pts.len() as f64;
        assert!((mean - p0).norm() < 0.05, "mean = {mean:?}");
    }
}
