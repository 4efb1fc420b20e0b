use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svt_core::controller::{compute_recovery_pose, Mode, SvtConfig};
use svt_core::perception::{kf_predict, kf_update, visible, CameraModel, KalmanAxis};
use svt_core::reach::{
    bang_endpoint, mc_reach_samples, reach_position_box, IntervalBox, ReachParams,
};
use svt_core::sim::{step_double_integrator, KinState, Workspace};
use svt_core::stability::{
    asdt_burst, convergence_radius, dwell_threshold, exact_switched_trace, measure_tau_as,
    steady_state_closed_form, verify_trace_bound, TraceSample,
};
use svt_core::Vec3;

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

/// Uniform point of the box `[lo, hi]` (degenerate axes allowed).
fn uniform_in<R: Rng>(rng: &mut R, lo: Vec3, hi: Vec3) -> Vec3 {
    let mut pick = |l: f64, h: f64| if h > l { rng.random_range(l..=h) } else { l };
    Vec3::new(pick(lo.x, hi.x), pick(lo.y, hi.y), pick(lo.z, hi.z))
}

/// Angle between facing and the line of sight, via atan2.
fn angle_oracle(p: Vec3, t: Vec3, cam: &CameraModel) -> f64 {
    let r = t - p;
    r.cross(cam.facing).norm().atan2(r.dot(cam.facing))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn visibility_matches_angle_oracle(p in vec3(5.0), t in vec3(5.0), fov in 0.2f64..3.0) {
        let cam = CameraModel { fov, ..CameraModel::default() };
        prop_assume!((t - p).norm() > 1e-9);
        let ang = angle_oracle(p, t, &cam);
        prop_assume!((ang - cam.half_angle()).abs() > 1e-9);
        prop_assert_eq!(visible(p, t, &cam), ang < cam.half_angle());
    }
}

proptest! {
    #[test]
    fn visibility_is_translation_invariant(p in vec3(5.0), t in vec3(5.0), s in vec3(50.0)) {
        let cam = CameraModel::default();
        let ang = angle_oracle(p, t, &cam);
        prop_assume!((ang - cam.half_angle()).abs() > 1e-6);
        prop_assert_eq!(visible(p, t, &cam), visible(p + s, t + s, &cam));
    }

    #[test]
    fn double_integrator_composes(
        p in vec3(5.0), v in vec3(2.0), a in vec3(4.0),
        t1 in 0.0f64..2.0, t2 in 0.0f64..2.0,
    ) {
        let s = KinState::new(p, v);
        let once = step_double_integrator(s, a, t1 + t2);
        let twice = step_double_integrator(step_double_integrator(s, a, t1), a, t2);
        prop_assert!((once.pos - twice.pos).norm() < 1e-9);
        prop_assert!((once.vel - twice.vel).norm() < 1e-9);
    }

    #[test]
    fn reach_box_is_sound(
        lo in vec3(3.0), span in vec3(0.5), vlo in vec3(1.0), vspan in vec3(0.5),
        a_max in 0.1f64..3.0, horizon in 0.0f64..2.0, seed in any::<u64>(),
    ) {
        let abs = |v: Vec3| v.map(f64::abs);
        let pos = IntervalBox::new(lo, lo + abs(span));
        let vel = IntervalBox::new(vlo, vlo + abs(vspan));
        let p = ReachParams { a_max, horizon };
        let b = reach_position_box(&pos, &vel, &p);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let p0 = uniform_in(&mut rng, pos.lo, pos.hi);
            let v0 = uniform_in(&mut rng, vel.lo, vel.hi);
            for x in mc_reach_samples(p0, v0, &p, 10, &mut rng) {
                prop_assert!(b.contains_tol(x, 1e-9), "{x:?} outside {b:?}");
            }
        }
    }

    #[test]
    fn reach_box_is_monotone_in_inputs(
        lo in vec3(3.0), span in vec3(0.5), grow in vec3(0.5), vel in vec3(1.0),
        a_max in 0.1f64..3.0, extra_a in 0.0f64..1.0, horizon in 0.0f64..2.0,
    ) {
        let abs = |v: Vec3| v.map(f64::abs);
        let small_pos = IntervalBox::new(lo, lo + abs(span));
        let big_pos = IntervalBox::new(lo - abs(grow), lo + abs(span) + abs(grow));
        let small_vel = IntervalBox::point(vel);
        let big_vel = IntervalBox::new(vel - abs(grow), vel + abs(grow));
        let small = reach_position_box(&small_pos, &small_vel, &ReachParams { a_max, horizon });
        let big = reach_position_box(&big_pos, &big_vel, &ReachParams { a_max: a_max + extra_a, horizon });
        prop_assert!(big.encloses(&small));
    }

    /// Growing the horizon only enlarges the box when the velocity box
    /// straddles zero; otherwise drift can carry a face inward.
    #[test]
    fn reach_box_is_monotone_in_horizon(
        lo in vec3(3.0), span in vec3(0.5), vneg in vec3(1.0), vpos in vec3(1.0),
        a_max in 0.0f64..3.0, horizon in 0.0f64..2.0, extra_t in 0.0f64..1.0,
    ) {
        let abs = |v: Vec3| v.map(f64::abs);
        let pos = IntervalBox::new(lo, lo + abs(span));
        let vel = IntervalBox::new(-abs(vneg), abs(vpos));
        let short = reach_position_box(&pos, &vel, &ReachParams { a_max, horizon });
        let long = reach_position_box(&pos, &vel, &ReachParams { a_max, horizon: horizon + extra_t });
        prop_assert!(long.encloses(&short));
    }

    #[test]
    fn kalman_covariance_stays_psd(
        q in 0.01f64..10.0, r in 0.001f64..1.0, dt in 0.001f64..0.1, seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut kf = KalmanAxis::new(0.0, 0.0, [[0.25, 0.0], [0.0, 1.0]], q, r);
        for _ in 0..200 {
            kf = kf_predict(&kf, dt);
            if rng.random::<f64>() < 0.8 {
                kf = kf_update(&kf, rng.random_range(-1.0..1.0));
            }
            let c = kf.cov;
            prop_assert!(c[0][0] >= 0.0 && c[1][1] >= 0.0);
            prop_assert!((c[0][1] - c[1][0]).abs() <= 1e-12 * (1.0 + c[0][1].abs()));
            prop_assert!(c[0][0] * c[1][1] - c[0][1] * c[1][0] >= -1e-12 * c[0][0] * c[1][1]);
        }
    }

    #[test]
    fn geometric_series_closed_form(
        c in 0.0f64..2.0, mu in 1.01f64..3.0, delta in 0.01f64..1.0, lambda in 0.1f64..3.0, terms in 0u32..60,
    ) {
        // with T_s(t_{N-2k}) = (k + 1 - N0) tau_as exactly at the threshold,
        // e^{-2 lambda tau_as} = 1 / (mu + delta)
        let n0 = 1u32;
        let tau = dwell_threshold(mu, delta, lambda).unwrap();
        let direct: f64 = (0..terms)
            .map(|k| c * mu.powi(k as i32) * (-2.0 * lambda * (k + 1 - n0) as f64 * tau).exp())
            .sum();
        let closed = steady_state_closed_form(c, mu, delta, n0, terms);
        prop_assert!((direct - closed).abs() <= 1e-9 * closed.abs().max(1e-12), "{direct} vs {closed}");
    }

    #[test]
    fn burst_matches_brute_force(runs in prop::collection::vec((any::<bool>(), 1usize..30), 1..25), tau in 0.05f64..2.0) {
        let mut schedule = vec![(Mode::Tracking, 5)];
        schedule.extend(runs.iter().map(|&(t, n)| (if t { Mode::Tracking } else { Mode::Recovery }, n)));
        let s = exact_switched_trace(1.0, 1.1, 0.1, 1.0, 0.01, &schedule);
        prop_assert!((asdt_burst(&s, tau) - brute_burst(&s, tau)).abs() < 1e-9);
    }
}

/// `max over j <= m of N_s(j, m) - T_s(j, m) / tau` by a double loop.
fn brute_burst(s: &[TraceSample], tau: f64) -> f64 {
    let dt = s[1].t - s[0].t;
    let mut best: f64 = 0.0;
    for j in 0..s.len() {
        let (mut n, mut ts) = (0usize, 0.0);
        for m in j..s.len() {
            if m > j && s[m].mode == Mode::Tracking && s[m - 1].mode == Mode::Recovery {
                n += 1;
            }
            best = best.max(n as f64 - ts / tau);
            if s[m].mode == Mode::Tracking {
                ts += dt;
            }
        }
    }
    best
}

#[test]
fn kalman_covariance_psd_over_long_run() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut kf = KalmanAxis::new(0.0, 0.0, [[0.25, 0.0], [0.0, 1.0]], 2.0, 0.02);
    for i in 0..10_000 {
        kf = kf_predict(&kf, 0.01);
        if i % 7 != 3 {
            kf = kf_update(&kf, (i as f64 * 0.01).sin() + rng.random_range(-0.02..0.02));
        }
        let c = kf.cov;
        assert!(c[0][0] >= 0.0 && c[1][1] >= 0.0, "step {i}: {c:?}");
        assert!(
            c[0][0] * c[1][1] - c[0][1] * c[0][1] >= -1e-15,
            "step {i}: {c:?}"
        );
    }
}

#[test]
fn reach_extremes_are_attained() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let p0 = Vec3::new(
            rng.random_range(0.0..5.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(0.5..2.5),
        );
        let v0 = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let p = ReachParams {
            a_max: rng.random_range(0.5..3.0),
            horizon: rng.random_range(0.5..2.0),
        };
        let b = reach_position_box(&IntervalBox::point(p0), &IntervalBox::point(v0), &p);
        let samples = mc_reach_samples(p0, v0, &p, 10_000, &mut rng);
        assert!(samples.iter().all(|&x| b.contains_tol(x, 1e-9)));
        let hi = bang_endpoint(p0, v0, &p, Vec3::splat(1.0));
        let lo = bang_endpoint(p0, v0, &p, Vec3::splat(-1.0));
        assert!((hi - b.hi).norm() < 1e-9 && (lo - b.lo).norm() < 1e-9);
    }
}

#[test]
fn recovery_pose_sees_whole_box() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ws = Workspace::default();
    let cam = CameraModel::default();
    let cfg = SvtConfig {
        d_max: 1e9,
        ..SvtConfig::default()
    };
    for _ in 0..1000 {
        let a = uniform_in(&mut rng, ws.lo, ws.hi);
        let b = uniform_in(&mut rng, ws.lo, ws.hi);
        let bx = IntervalBox::new(a.min(b), a.max(b));
        let plan = compute_recovery_pose(&bx, &cam, bx.center(), &cfg, 0.0).unwrap();
        for corner in bx.corners() {
            assert!(visible(plan.x_r, corner, &cam));
        }
        for _ in 0..100 {
            let x = uniform_in(&mut rng, bx.lo, bx.hi);
            assert!(visible(plan.x_r, x, &cam));
        }
    }
}

fn cycles(stable: usize, unstable: usize, n: usize) -> Vec<(Mode, usize)> {
    let mut s = Vec::new();
    for _ in 0..n {
        s.push((Mode::Tracking, stable));
        s.push((Mode::Recovery, unstable));
    }
    s.push((Mode::Tracking, stable));
    s
}

#[test]
fn unrolled_bound_holds_on_exact_systems() {
    let delta = 0.1;
    for lambda in [0.5, 1.0, 2.0] {
        for mu in [1.1, 1.5, 2.0] {
            for c in [0.0, 0.1, 1.0] {
                let thr = dwell_threshold(mu, delta, lambda).unwrap();
                let tau = 2.0 * thr;
                let dt = tau / 50.0;
                let s = exact_switched_trace(lambda, mu, c, 1.0, dt, &cycles(50, 20, 150));
                let check = verify_trace_bound(&s, lambda, mu, c).unwrap();
                assert!(
                    check.bound_ok && check.max_slack <= 1e-9,
                    "{lambda} {mu} {c}: {check:?}"
                );

                let tail = &s[s.len() * 4 / 5..];
                let vmax = tail.iter().map(TraceSample::v).fold(0.0, f64::max);
                let radius = convergence_radius(c, mu, delta, 1).unwrap();
                assert!(
                    vmax <= radius + 1e-6,
                    "{lambda} {mu} {c}: {vmax} > {radius}"
                );
                assert!(measure_tau_as(&s, 1).value() > thr);
            }
        }
    }
}

#[test]
fn adversarial_gain_breaks_bound() {
    // recovery gains mu V + 2c instead of mu V + c
    let (lambda, mu, c) = (1.0, 1.1, 0.2);
    let s = exact_switched_trace(lambda, mu, 2.0 * c, 1.0, 0.01, &cycles(30, 10, 5));
    assert!(!verify_trace_bound(&s, lambda, mu, c).unwrap().bound_ok);
}

#[test]
fn horizon_monotonicity_needs_zero_in_velocity_box() {
    // drifting backwards at 1 m/s with a tiny accel bound: the upper face
    // moves from 0.0 to below zero as the horizon grows
    let pos = IntervalBox::point(Vec3::ZERO);
    let vel = IntervalBox::point(Vec3::new(-1.0, 0.0, 0.0));
    let short = reach_position_box(
        &pos,
        &vel,
        &ReachParams {
            a_max: 0.1,
            horizon: 0.0,
        },
    );
    let long = reach_position_box(
        &pos,
        &vel,
        &ReachParams {
            a_max: 0.1,
            horizon: 1.0,
        },
    );
    assert!(long.hi.x < short.hi.x);
}

fn certify_exact(
    lambda: f64,
    mu: f64,
    c: f64,
    dwell_factor: f64,
) -> svt_core::stability::Certificate {
    use svt_core::stability::{certify, CertifyOptions};
    let delta = 0.1;
    let dt = 0.01;
    let thr = dwell_threshold(mu, delta, lambda).unwrap();
    let n = (dwell_factor * thr / dt).round() as usize;
    let s = exact_switched_trace(lambda, mu, c, 1.0, dt, &cycles(n, 50, 20));
    certify(&s, &CertifyOptions { delta, mu, n0: 1 }).unwrap()
}

#[test]
fn certificate_above_threshold() {
    let cert = certify_exact(0.1, 1.5, 0.1, 2.0);
    assert!((cert.lambda - 0.1).abs() < 1e-9, "{cert:?}");
    assert!((cert.c - 0.1).abs() < 1e-6, "{cert:?}");
    assert!(
        cert.lambda_fitted && cert.dwell_ok && cert.bound_ok && cert.tail_ok,
        "{cert:?}"
    );
}

#[test]
fn certificate_below_threshold() {
    let cert = certify_exact(0.1, 1.5, 0.0, 0.5);
    assert!(!cert.dwell_ok, "{cert:?}");
    assert!(!cert.tail_ok, "{cert:?}");
}
