//! Bang-and-ride charging: apply the largest input the constraints allow.
//!
//! Mixed constraints (those that read `u`) are checked at the current state.
//! State-only constraints are checked one lookahead step ahead, since the
//! input can only move them through the dynamics. All residuals are
//! non-increasing in `u`, so the feasible inputs form an interval
//! `[u_min, u*]` and `u*` is found by bisection.

use crate::constraints::{active_set, ConstraintKind, ConstraintSet};
use crate::dynamics::ControlSystem;
use crate::error::{Error, Result};
use crate::simulate::{time_grid, Rk4, Trajectory};

#[derive(Debug, Clone)]
pub struct BangRidePolicy {
    pub u_min: f64,
    pub u_max: f64,
    pub set: ConstraintSet,
    pub bisection_tol: f64,
    pub max_iter: usize,
    pub lookahead_dt: f64,
    /// Admissibility slack: `h >= -tol` counts as satisfied.
    pub tol: f64,
}

impl BangRidePolicy {
    /// Policy on `[u_min, u_max]`. An input upper bound `u <= u_max` is appended
    /// to the set when none is present, so the bang phase is always attributed
    /// to a constraint.
    pub fn new(mut set: ConstraintSet, u_min: f64, u_max: f64, lookahead_dt: f64) -> Result<Self> {
        if !(u_min.is_finite() && u_max.is_finite() && u_min < u_max) {
            return Err(Error::param(
                "u_min/u_max",
                format!("need u_min < u_max, got [{u_min}, {u_max}]"),
            ));
        }
        if !(lookahead_dt.is_finite() && lookahead_dt > 0.0) {
            return Err(Error::param("lookahead_dt", "must be > 0"));
        }
        if set
            .position_of_kind(|k| matches!(k, ConstraintKind::InputUpperBound { input: 0 }))
            .is_none()
        {
            set.push(crate::constraints::upper_bound_input(u_max))?;
        }
        Ok(Self {
            u_min,
            u_max,
            set,
            bisection_tol: 1e-9 * (u_max - u_min),
            max_iter: 60,
            lookahead_dt,
            tol: 1e-6,
        })
    }

    pub fn with_bisection_tol(mut self, tol: f64) -> Self {
        self.bisection_tol = tol;
        self
    }

    pub fn with_max_iter(mut self, n: usize) -> Self {
        self.max_iter = n;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.bisection_tol > 0.0 && self.tol >= 0.0 && self.max_iter > 0) {
            return Err(Error::param("policy", "tolerances must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RideDecision {
    pub u: f64,
    /// Constraints holding the input down (or the input bound during a bang phase).
    pub engaged: Vec<usize>,
}

struct Feasibility<'a> {
    sys: &'a ControlSystem,
    x: &'a [f64],
    policy: &'a BangRidePolicy,
    rk: Rk4,
    next: Vec<f64>,
    has_state_only: bool,
}

impl<'a> Feasibility<'a> {
    fn new(sys: &'a ControlSystem, x: &'a [f64], policy: &'a BangRidePolicy) -> Self {
        let has_state_only = policy.set.constraints().iter().any(|c| !c.depends_on_u());
        Self {
            sys,
            x,
            policy,
            rk: Rk4::new(sys.n_states()),
            next: vec![0.0; sys.n_states()],
            has_state_only,
        }
    }

    /// Residuals at input `u`: mixed ones now, state-only ones after one lookahead step.
    fn residuals(&mut self, u: f64) -> Vec<f64> {
        let uv = [u];
        if self.has_state_only {
            self.next.copy_from_slice(self.x);
            self.rk
                .step(self.sys, &mut self.next, &uv, self.policy.lookahead_dt);
        }
        self.policy
            .set
            .constraints()
            .iter()
            .map(|c| {
                if c.depends_on_u() {
                    c.residual(self.x, &uv)
                } else {
                    c.residual(&self.next, &uv)
                }
            })
            .collect()
    }
}

fn min_of(r: &[f64]) -> f64 {
    r.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Largest admissible input at state `x`; `time` is only used in errors.
pub fn ride_input_at(
    sys: &ControlSystem,
    x: &[f64],
    time: f64,
    policy: &BangRidePolicy,
) -> Result<RideDecision> {
    policy.validate()?;
    if sys.n_inputs() != 1 {
        return Err(Error::dim("bang-and-ride input", 1, sys.n_inputs()));
    }
    if x.len() != sys.n_states() {
        return Err(Error::dim("state", sys.n_states(), x.len()));
    }
    let set = &policy.set;
    // The current state must already satisfy the state-only constraints.
    for c in set.constraints().iter().filter(|c| !c.depends_on_u()) {
        let r = c.residual(x, &[policy.u_min]);
        if r < -policy.tol {
            return Err(Error::RideInfeasible {
                time,
                constraint: c.name().to_string(),
                residual: r,
            });
        }
    }
    let mut feas = Feasibility::new(sys, x, policy);

    let r_max = feas.residuals(policy.u_max);
    if min_of(&r_max) >= 0.0 {
        let engaged = active_set_with_overrides(set, &r_max);
        return Ok(RideDecision {
            u: policy.u_max,
            engaged,
        });
    }
    let r_min = feas.residuals(policy.u_min);
    let g_min = min_of(&r_min);
    if g_min < -policy.tol {
        let k = argmin(&r_min);
        return Err(Error::RideInfeasible {
            time,
            constraint: set.constraints()[k].name().to_string(),
            residual: r_min[k],
        });
    }
    if g_min < 0.0 {
        let engaged = (0..r_min.len()).filter(|&k| r_min[k] < 0.0).collect();
        return Ok(RideDecision {
            u: policy.u_min,
            engaged,
        });
    }

    let (mut lo, mut hi) = (policy.u_min, policy.u_max);
    let (mut r_lo, mut r_hi) = (r_min, r_max);
    let mut iter = 0;
    while hi - lo > policy.bisection_tol && iter < policy.max_iter {
        let mid = 0.5 * (lo + hi);
        let r_mid = feas.residuals(mid);
        debug_assert!(
            r_mid
                .iter()
                .zip(&r_lo)
                .all(|(m, l)| *m <= *l + 1e-9 * (1.0 + l.abs())),
            "constraint residual increased with u; bisection assumes non-increasing residuals"
        );
        if min_of(&r_mid) >= 0.0 {
            lo = mid;
            r_lo = r_mid;
        } else {
            hi = mid;
            r_hi = r_mid;
        }
        iter += 1;
    }
    let mut engaged: Vec<usize> = (0..r_lo.len())
        .filter(|&k| r_hi[k] < 0.0 || r_lo[k].abs() <= set.tol_for(k))
        .collect();
    if engaged.is_empty() {
        // bisection stopped on max_iter before either bracket reached a constraint
        engaged.push(argmin(&r_hi));
    }
    Ok(RideDecision { u: lo, engaged })
}

pub fn ride_input(sys: &ControlSystem, x: &[f64], policy: &BangRidePolicy) -> Result<RideDecision> {
    ride_input_at(sys, x, 0.0, policy)
}

fn argmin(r: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in r.iter().enumerate() {
        if *v < r[best] {
            best = k;
        }
    }
    best
}

fn active_set_with_overrides(set: &ConstraintSet, residuals: &[f64]) -> Vec<usize> {
    (0..residuals.len())
        .filter(|&k| residuals[k].abs() <= set.tol_for(k))
        .collect()
}

/// Closed loop: at each grid time pick [`ride_input_at`] and hold it for one step.
/// The input recorded at `t_f` is the policy's choice at the final state.
pub fn simulate_bang_ride(
    sys: &ControlSystem,
    x0: &[f64],
    policy: &BangRidePolicy,
    t_f: f64,
    dt: f64,
) -> Result<Trajectory> {
    let times = time_grid(t_f, dt)?;
    if x0.len() != sys.n_states() {
        return Err(Error::dim("initial state", sys.n_states(), x0.len()));
    }
    let mut rk = Rk4::new(sys.n_states());
    let mut x = x0.to_vec();
    let mut states = Vec::with_capacity(times.len());
    let mut inputs = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let d = ride_input_at(sys, &x, times[k], policy)?;
        states.push(x.clone());
        inputs.push(vec![d.u]);
        if k + 1 < times.len() {
            rk.step(sys, &mut x, &[d.u], times[k + 1] - times[k]);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::IntegrationBlowup {
                    last_good_time: times[k],
                });
            }
        }
    }
    Ok(Trajectory {
        times,
        states,
        inputs,
    })
}

/// Active constraints at every grid point.
pub fn engaged_profile(
    traj: &Trajectory,
    set: &ConstraintSet,
    tol: f64,
) -> Result<Vec<Vec<usize>>> {
    if set.is_empty() {
        return Err(Error::EmptyConstraintSet);
    }
    Ok(traj
        .states
        .iter()
        .zip(&traj.inputs)
        .map(|(x, u)| {
            let mut act = active_set(set, x, u, tol);
            for k in 0..set.len() {
                if let Some(t) = set.constraints()[k].tol_active() {
                    let inside = set.constraints()[k].residual(x, u).abs() <= t;
                    match (inside, act.contains(&k)) {
                        (true, false) => act.push(k),
                        (false, true) => act.retain(|&j| j != k),
                        _ => {}
                    }
                }
            }
            act.sort_unstable();
            act
        })
        .collect())
}

/// Human-readable phase name for a set of engaged constraints.
pub fn phase_label(set: &ConstraintSet, engaged: &[usize]) -> String {
    if engaged.is_empty() {
        return "interior".into();
    }
    engaged
        .iter()
        .map(|&k| {
            let c = &set.constraints()[k];
            match c.kind() {
                ConstraintKind::InputUpperBound { .. } => "CC".to_string(),
                ConstraintKind::Voltage => "CV".to_string(),
                ConstraintKind::Temperature { .. } => "thermal-limited".to_string(),
                ConstraintKind::StateUpperBound { state: 0 } => "SOC-capped".to_string(),
                ConstraintKind::StateUpperBound { state } => format!("x{}-capped", state + 1),
                ConstraintKind::Plating => "plating-limited".to_string(),
                ConstraintKind::Custom => c.name().to_string(),
            }
        })
        .collect::<Vec<_>>()
        .join("+")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub label: String,
    pub start: f64,
    pub end: f64,
    pub engaged: Vec<usize>,
}

/// Groups consecutive grid points with the same engaged set.
pub fn segment_phases(
    traj: &Trajectory,
    set: &ConstraintSet,
    profile: &[Vec<usize>],
) -> Vec<Phase> {
    let mut phases: Vec<Phase> = Vec::new();
    for (k, eng) in profile.iter().enumerate() {
        let t = traj.times[k];
        match phases.last_mut() {
            Some(p) if &p.engaged == eng => p.end = t,
            _ => phases.push(Phase {
                label: phase_label(set, eng),
                start: t,
                end: t,
                engaged: eng.clone(),
            }),
        }
    }
    phases
}
