//! The switched visual tracker and the follow-when-visible baseline.
//!
//! Two modes: `Tracking` runs a saturated PD law on the filtered target
//! displacement with the forward speed capped at `v_max`; `Recovery` drives
//! the pursuer to a pose whose camera cone contains every position the
//! target can reach within `t_r`. Loss is declared after `debounce_n`
//! consecutive missed frames and the first visible frame ends a recovery.

use serde::{Deserialize, Serialize};

use crate::perception::{visible, CameraModel, Estimate, ObserverOutput};
use crate::reach::{bounding_sphere, reach_position_box, IntervalBox, ReachParams};
use crate::sim::{clamp_velocity, step_double_integrator, KinState};
use crate::{Error, Vec3};

/// Smallest bounding radius used for a recovery pose.
pub const MIN_RECOVERY_RADIUS: f64 = 1e-3;
/// Slack added to the bounding radius so box corners on the sphere stay
/// strictly inside the cone under round-off.
const RADIUS_SLACK: f64 = 1e-10;
/// Arrival tolerance for the recoverability check.
pub const ARRIVAL_TOL: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Tracking,
    Recovery,
}

impl Mode {
    pub fn is_stable(self) -> bool {
        self == Mode::Tracking
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Tracking => "tracking",
            Mode::Recovery => "recovery",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvtConfig {
    /// Cap on |v_x| while tracking, m/s.
    pub v_max: f64,
    /// Largest backoff along the camera axis in one recovery episode, m.
    pub d_max: f64,
    /// Recovery horizon, s.
    pub t_r: f64,
    /// Desired distance behind the target along the camera axis, m. Owned
    /// by the scenario, which overwrites this on load.
    #[serde(skip)]
    pub offset: f64,
    pub kp: f64,
    pub kd: f64,
    /// Consecutive missed frames before the target is declared lost.
    pub debounce_n: u32,
    /// Per-axis acceleration limit of the pursuer, m/s^2.
    pub a_limit: f64,
    /// Per-axis velocity limit of the pursuer airframe, m/s.
    pub vel_limit: Vec3,
    /// Assumed bound on the target's per-axis acceleration, m/s^2.
    pub target_a_max: f64,
}

impl Default for SvtConfig {
    fn default() -> Self {
        SvtConfig {
            v_max: 1.0,
            d_max: 2.0,
            t_r: 1.5,
            offset: 1.0,
            kp: 25.0,
            kd: 10.0,
            debounce_n: 3,
            a_limit: 2.0,
            vel_limit: Vec3::new(2.0, 0.3, 0.5),
            target_a_max: 2.0,
        }
    }
}

impl SvtConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let checks = [
            ("svt.v_max", self.v_max),
            ("svt.d_max", self.d_max),
            ("svt.t_r", self.t_r),
            ("offset", self.offset),
            ("svt.kp", self.kp),
            ("svt.kd", self.kd),
            ("svt.a_limit", self.a_limit),
            ("svt.target_a_max", self.target_a_max),
            ("svt.vel_limit.x", self.vel_limit.x),
            ("svt.vel_limit.y", self.vel_limit.y),
            ("svt.vel_limit.z", self.vel_limit.z),
        ];
        for (field, v) in checks {
            if !pos(v) {
                return Err(Error::config(field, "must be finite and > 0"));
            }
        }
        if self.debounce_n == 0 {
            return Err(Error::config("svt.debounce_n", "must be >= 1"));
        }
        Ok(())
    }

    /// `kd^2 >= 4 kp`: the unsaturated loop does not oscillate.
    pub fn is_overdamped(&self) -> bool {
        self.kd * self.kd >= 4.0 * self.kp
    }

    pub fn reach_params(&self) -> ReachParams {
        ReachParams {
            a_max: self.target_a_max,
            horizon: self.t_r,
        }
    }

    fn accel_limits(&self) -> Vec3 {
        Vec3::splat(self.a_limit)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryPlan {
    pub x_r: Vec3,
    /// Absolute time by which the pursuer should be at `x_r`.
    pub deadline: f64,
    /// Pursuer position along the camera axis when the episode began.
    pub entry_pursuer_x: f64,
    pub reach_box: IntervalBox,
    /// False when `x_r` was pulled forward to respect `d_max`; the reach box
    /// is then not guaranteed to be in view.
    pub feasible: bool,
}

/// Recovery pose for `reach_box`: back off along the camera axis from the
/// box's bounding-sphere center until the sphere fits in the cone,
/// `x_R = c - facing * r / sin(fov / 2)`.
///
/// `entry_pose` is where the pursuer was when the recovery episode started;
/// backoff is measured from there.
pub fn compute_recovery_pose(
    reach_box: &IntervalBox,
    cam: &CameraModel,
    entry_pose: Vec3,
    cfg: &SvtConfig,
    now: f64,
) -> Result<RecoveryPlan, Error> {
    if !reach_box.is_valid() {
        return Err(Error::Domain("reach box is not a valid interval box"));
    }
    let (c, r) = bounding_sphere(reach_box);
    let r = r.max(MIN_RECOVERY_RADIUS) + RADIUS_SLACK;
    let x_r = c - cam.facing * (r / libm::sin(cam.half_angle()));
    if !reach_box.corners().iter().all(|&k| visible(x_r, k, cam)) {
        return Err(Error::VerificationFailed);
    }
    let backoff = (entry_pose - x_r).dot(cam.facing);
    if backoff > cfg.d_max {
        return Err(Error::BackoffExceedsDmax { required: backoff });
    }
    Ok(RecoveryPlan {
        x_r,
        deadline: now + cfg.t_r,
        entry_pursuer_x: entry_pose.dot(cam.facing),
        reach_box: *reach_box,
        feasible: true,
    })
}

/// Saturated PD tracking law.
///
/// `a = kp (disp - offset e_x) + kd rel_vel`, clamped per axis to
/// `a_limit`, then a_x is replaced so that the post-step `|v_x| <= v_max`.
pub fn tracking_control(
    est_disp: Vec3,
    est_rel_vel: Vec3,
    cfg: &SvtConfig,
    current_vel: Vec3,
    dt: f64,
) -> Vec3 {
    let err = est_disp - Vec3::new(cfg.offset, 0.0, 0.0);
    let mut a = (err * cfg.kp + est_rel_vel * cfg.kd).clamp_symmetric(cfg.accel_limits());
    let vx = current_vel.x + a.x * dt;
    if vx > cfg.v_max {
        a.x = (cfg.v_max - current_vel.x) / dt;
    } else if vx < -cfg.v_max {
        a.x = (-cfg.v_max - current_vel.x) / dt;
    }
    a
}

/// PD law toward the recovery pose; no forward speed cap.
pub fn recovery_control(p: &KinState, plan: &RecoveryPlan, cfg: &SvtConfig) -> Vec3 {
    ((plan.x_r - p.pos) * cfg.kp - p.vel * cfg.kd).clamp_symmetric(cfg.accel_limits())
}

/// Brake toward hover.
pub fn brake_control(p: &KinState, cfg: &SvtConfig) -> Vec3 {
    (-p.vel * cfg.kd).clamp_symmetric(cfg.accel_limits())
}

/// Advance the pursuer airframe one step: the command is saturated at
/// `a_limit` per axis, integrated exactly, then the airframe velocity
/// limits apply.
///
/// The forward-speed cap is the controller's job, so a pursuer that enters
/// tracking while backing away fast sheds the excess at `a_limit`.
pub fn plant_step(p: &KinState, accel: Vec3, cfg: &SvtConfig, dt: f64) -> KinState {
    let a = accel.clamp_symmetric(cfg.accel_limits());
    clamp_velocity(step_double_integrator(*p, a, dt), cfg.vel_limit)
}

/// Can the pursuer get within [`ARRIVAL_TOL`] of `plan.x_r` in `t_r` under
/// [`recovery_control`]? Simulated at step `dt` with the real plant limits.
pub fn check_recoverability(p: &KinState, plan: &RecoveryPlan, cfg: &SvtConfig, dt: f64) -> bool {
    let steps = libm::round(cfg.t_r / dt) as usize;
    let mut s = *p;
    for _ in 0..steps {
        let a = recovery_control(&s, plan, cfg);
        s = plant_step(&s, a, cfg, dt);
    }
    (s.pos - plan.x_r).norm() <= ARRIVAL_TOL
}

/// Notable transitions, recorded in the trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    /// Target declared lost; recovery begins.
    Lost,
    /// Target back in view; tracking resumes.
    Reacquired,
    /// Deadline passed without a sighting; new plan from the propagated set.
    Replanned,
    /// The plan needed more backoff than `d_max`; `x_r` was pulled forward.
    BackoffLimited { required: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvtState {
    pub mode: Mode,
    pub consecutive_miss: u32,
    pub plan: Option<RecoveryPlan>,
    /// Filter estimate at the last visible frame.
    pub last_seen: Option<Estimate>,
}

impl Default for SvtState {
    fn default() -> Self {
        SvtState {
            mode: Mode::Tracking,
            consecutive_miss: 0,
            plan: None,
            last_seen: None,
        }
    }
}

/// Result of one controller step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub state: SvtState,
    pub mode: Mode,
    pub accel: Vec3,
    pub events: [Option<Event>; 2],
}

/// Everything the switching logic sees at one frame.
#[derive(Clone, Copy, Debug)]
pub struct StepInput<'a> {
    pub obs: ObserverOutput,
    /// Current filter estimate (after this frame's update, if any).
    pub estimate: Option<&'a Estimate>,
    pub pursuer: &'a KinState,
    pub now: f64,
    pub dt: f64,
}

fn track_from(est: &Estimate, p: &KinState, cfg: &SvtConfig, dt: f64) -> Vec3 {
    tracking_control(est.pos - p.pos, est.vel - p.vel, cfg, p.vel, dt)
}

/// Plan a recovery from the current estimate, pulling `x_r` forward when
/// the backoff budget is exceeded.
fn plan_recovery(
    est: &Estimate,
    entry_pose: Vec3,
    cfg: &SvtConfig,
    cam: &CameraModel,
    now: f64,
) -> Result<(RecoveryPlan, Option<Event>), Error> {
    let reach = reach_position_box(&est.pos_box, &est.vel_box, &cfg.reach_params());
    match compute_recovery_pose(&reach, cam, entry_pose, cfg, now) {
        Ok(plan) => Ok((plan, None)),
        Err(Error::BackoffExceedsDmax { required }) => {
            let (c, _) = bounding_sphere(&reach);
            let along = c - cam.facing * c.dot(cam.facing);
            let x_r = along + cam.facing * (entry_pose.dot(cam.facing) - cfg.d_max);
            let plan = RecoveryPlan {
                x_r,
                deadline: now + cfg.t_r,
                entry_pursuer_x: entry_pose.dot(cam.facing),
                reach_box: reach,
                feasible: false,
            };
            Ok((plan, Some(Event::BackoffLimited { required })))
        }
        Err(e) => Err(e),
    }
}

/// One step of the switching logic.
pub fn svt_step(
    st: &SvtState,
    input: &StepInput<'_>,
    cfg: &SvtConfig,
    cam: &CameraModel,
) -> Result<StepOutput, Error> {
    let p = input.pursuer;
    let mut next = st.clone();
    let mut events = [None, None];
    let accel = match (st.mode, input.obs) {
        (_, ObserverOutput::Displacement(d)) => {
            if st.mode == Mode::Recovery {
                events[0] = Some(Event::Reacquired);
            }
            next.mode = Mode::Tracking;
            next.consecutive_miss = 0;
            next.plan = None;
            match input.estimate {
                Some(est) => {
                    next.last_seen = Some(*est);
                    track_from(est, p, cfg, input.dt)
                }
                None => tracking_control(d, -p.vel, cfg, p.vel, input.dt),
            }
        }
        (Mode::Tracking, ObserverOutput::NotVisible) => {
            next.consecutive_miss = st.consecutive_miss.saturating_add(1);
            match (next.consecutive_miss >= cfg.debounce_n, input.estimate) {
                (true, Some(est)) => {
                    let (plan, ev) = plan_recovery(est, p.pos, cfg, cam, input.now)?;
                    events = [Some(Event::Lost), ev];
                    next.mode = Mode::Recovery;
                    next.plan = Some(plan);
                    recovery_control(p, &plan, cfg)
                }
                // nothing to plan from yet
                (true, None) => brake_control(p, cfg),
                (false, _) => match st.last_seen.as_ref() {
                    Some(frozen) => track_from(frozen, p, cfg, input.dt),
                    None => brake_control(p, cfg),
                },
            }
        }
        (Mode::Recovery, ObserverOutput::NotVisible) => {
            next.consecutive_miss = st.consecutive_miss.saturating_add(1);
            let mut plan = st
                .plan
                .ok_or(Error::Domain("recovery mode without a plan"))?;
            if input.now > plan.deadline {
                if let Some(est) = input.estimate {
                    let entry = p.pos + cam.facing * (plan.entry_pursuer_x - p.pos.dot(cam.facing));
                    let (fresh, ev) = plan_recovery(est, entry, cfg, cam, input.now)?;
                    events = [Some(Event::Replanned), ev];
                    plan = fresh;
                }
            }
            next.plan = Some(plan);
            recovery_control(p, &plan, cfg)
        }
    };
    Ok(StepOutput {
        mode: next.mode,
        state: next,
        accel,
        events,
    })
}

/// Follow the target while it is visible, otherwise brake to a hover.
pub fn baseline_step(
    obs: ObserverOutput,
    estimate: Option<&Estimate>,
    p: &KinState,
    cfg: &SvtConfig,
    dt: f64,
) -> Vec3 {
    match (obs, estimate) {
        (ObserverOutput::Displacement(_), Some(est)) => track_from(est, p, cfg, dt),
        (ObserverOutput::Displacement(d), None) => tracking_control(d, -p.vel, cfg, p.vel, dt),
        (ObserverOutput::NotVisible, _) => brake_control(p, cfg),
    }
}
