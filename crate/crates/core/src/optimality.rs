//! Non-optimality certificates and a brute-force reference optimum.
//!
//! An admissible trajectory whose constraints are all strictly slack on a
//! terminal window `[t0, t_f]` cannot be optimal for a monotone problem: a
//! small nonnegative bump in that window stays admissible and strictly raises
//! the cost. [`necessity_check`] finds such a window and builds the bump.
//!
//! [`brute_force_best`] enumerates piecewise-constant controls on a level grid
//! and is the independent reference used to judge bang-and-ride.

use std::io::Write;

use rayon::prelude::*;

use crate::bangride::{simulate_bang_ride, BangRidePolicy};
use crate::constraints::ConstraintSet;
use crate::dynamics::ControlSystem;
use crate::error::{Error, Result};
use crate::sampling::{SampleBox, SamplingOptions};
use crate::simulate::{
    cost, max_violation, replay, time_grid, verify_cost_monotone, CostKind, MonotonicityClass, Rk4,
    RunningCost, Trajectory,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NecessityOptions {
    /// Residuals above this margin count as strictly slack. Per-constraint
    /// overrides on the constraint take precedence.
    pub tol_engaged: f64,
    /// Trajectories are admissible when every residual is at least `-admissibility_tol`.
    pub admissibility_tol: f64,
    /// Initial bump height; defaults to the largest input magnitude (or 1).
    pub bump_height: Option<f64>,
    /// Bump width as a fraction of the interior tail.
    pub bump_fraction: f64,
    /// Give up once the halved bump falls below this height.
    pub min_bump_height: f64,
}

impl Default for NecessityOptions {
    fn default() -> Self {
        Self {
            tol_engaged: 1e-4,
            admissibility_tol: 1e-6,
            bump_height: None,
            bump_fraction: 0.1,
            min_bump_height: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NecessityStatus {
    NotOptimal,
    PassesNecessity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteriorTail {
    pub start_index: usize,
    pub t0: f64,
    /// Smallest residual over the tail.
    pub min_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Improvement {
    /// Perturbed input samples on the original grid.
    pub inputs: Vec<Vec<f64>>,
    /// Grid indices `[start, end)` carrying the bump.
    pub start: usize,
    pub end: usize,
    pub height: f64,
    /// `J(u + bump) - J(u)`, both integrated on the same grid.
    pub delta_j: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NecessityVerdict {
    pub status: NecessityStatus,
    pub interior_tail: Option<InteriorTail>,
    pub improvement: Option<Improvement>,
}

/// Earliest grid index from which every residual stays above its margin
/// through the final time. A single final point is not a tail.
pub fn find_interior_tail(
    traj: &Trajectory,
    set: &ConstraintSet,
    tol_engaged: f64,
) -> Option<InteriorTail> {
    let margin = |k: usize| set.constraints()[k].tol_engaged().unwrap_or(tol_engaged);
    let mut start = traj.len();
    let mut min_residual = f64::INFINITY;
    for i in (0..traj.len()).rev() {
        let (x, u) = (&traj.states[i], &traj.inputs[i]);
        let mut slack = true;
        let mut point_min = f64::INFINITY;
        for (k, c) in set.constraints().iter().enumerate() {
            let r = c.residual(x, u);
            point_min = point_min.min(r);
            if r <= margin(k) {
                slack = false;
                break;
            }
        }
        if !slack {
            break;
        }
        start = i;
        min_residual = min_residual.min(point_min);
    }
    if start + 1 < traj.len() {
        Some(InteriorTail {
            start_index: start,
            t0: traj.times[start],
            min_residual,
        })
    } else {
        None
    }
}

/// Necessity test for optimality. A trajectory with an interior tail is
/// reported `NotOptimal` only together with a verified improvement.
pub fn necessity_check(
    sys: &ControlSystem,
    traj: &Trajectory,
    set: &ConstraintSet,
    l: &RunningCost,
    opts: &NecessityOptions,
) -> Result<NecessityVerdict> {
    traj.validate()?;
    let worst = max_violation(traj, set)?;
    if worst.value < -opts.admissibility_tol {
        return Err(Error::Precondition(format!(
            "trajectory is not admissible: constraint {} has residual {} at t = {}",
            set.constraints()[worst.constraint].name(),
            worst.value,
            worst.time
        )));
    }
    let Some(tail) = find_interior_tail(traj, set, opts.tol_engaged) else {
        return Ok(NecessityVerdict {
            status: NecessityStatus::PassesNecessity,
            interior_tail: None,
            improvement: None,
        });
    };
    let height = opts.bump_height.unwrap_or_else(|| {
        let m = traj
            .inputs
            .iter()
            .flatten()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        if m > 0.0 {
            m
        } else {
            1.0
        }
    });
    let width = opts.bump_fraction * (traj.t_final() - tail.t0);
    let improvement = improving_perturbation_with(sys, traj, set, l, &tail, height, width, opts)?;
    Ok(NecessityVerdict {
        status: NecessityStatus::NotOptimal,
        interior_tail: Some(tail),
        improvement: Some(improvement),
    })
}

/// Adds a rectangular bump of `bump_height` and duration `bump_width` at the
/// start of the interior tail, halving the height until the perturbed
/// trajectory is admissible. Fails if there is no tail or if no admissible
/// bump with `ΔJ > 0` is found.
pub fn improving_perturbation(
    sys: &ControlSystem,
    traj: &Trajectory,
    set: &ConstraintSet,
    l: &RunningCost,
    bump_height: f64,
    bump_width: f64,
) -> Result<Improvement> {
    let opts = NecessityOptions::default();
    traj.validate()?;
    let tail = find_interior_tail(traj, set, opts.tol_engaged).ok_or(Error::NoInteriorTail)?;
    improving_perturbation_with(sys, traj, set, l, &tail, bump_height, bump_width, &opts)
}

#[allow(clippy::too_many_arguments)]
fn improving_perturbation_with(
    sys: &ControlSystem,
    traj: &Trajectory,
    set: &ConstraintSet,
    l: &RunningCost,
    tail: &InteriorTail,
    bump_height: f64,
    bump_width: f64,
    opts: &NecessityOptions,
) -> Result<Improvement> {
    if !(bump_height.is_finite() && bump_height > 0.0) {
        return Err(Error::param("bump_height", "must be > 0"));
    }
    if !(bump_width.is_finite() && bump_width >= 0.0) {
        return Err(Error::param("bump_width", "must be >= 0"));
    }
    let start = tail.start_index;
    let t_end = tail.t0 + bump_width;
    let mut end = start + 1;
    while end < traj.len() - 1 && traj.times[end] < t_end {
        end += 1;
    }
    let x0 = traj.initial_state();
    let base = replay(sys, x0, &traj.times, &traj.inputs)?;
    let j_base = cost(&base, l);
    let mut height = bump_height;
    while height >= opts.min_bump_height {
        let mut inputs = traj.inputs.clone();
        for u in &mut inputs[start..end] {
            for v in u.iter_mut() {
                *v += height;
            }
        }
        match replay(sys, x0, &traj.times, &inputs) {
            Ok(perturbed) => {
                if max_violation(&perturbed, set)?.value >= -opts.admissibility_tol {
                    let delta_j = cost(&perturbed, l) - j_base;
                    if delta_j > 0.0 {
                        return Ok(Improvement {
                            inputs,
                            start,
                            end,
                            height,
                            delta_j,
                        });
                    }
                    return Err(Error::CertificationFailed(format!(
                        "admissible bump of height {height} gives ΔJ = {delta_j}; the cost is not strictly increasing"
                    )));
                }
            }
            Err(Error::IntegrationBlowup { .. }) => {}
            Err(e) => return Err(e),
        }
        log::debug!("bump of height {height} not admissible, halving");
        height *= 0.5;
    }
    Err(Error::CertificationFailed(format!(
        "bump collapsed below {} without becoming admissible",
        opts.min_bump_height
    )))
}

/// Discretised control problem shared by the oracle and its comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleProblem {
    pub t_f: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub levels: Vec<f64>,
}

impl OracleProblem {
    fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::param("n_steps", "must be >= 1"));
        }
        if self.levels.is_empty() {
            return Err(Error::param("levels", "need at least one level"));
        }
        if self.levels.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("levels", "must be finite"));
        }
        Ok(())
    }

    /// Largest gap between consecutive sorted levels.
    pub fn max_level_spacing(&self) -> f64 {
        let mut l = self.levels.clone();
        l.sort_by(f64::total_cmp);
        l.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub cap: u64,
    pub tol: f64,
    pub parallel: bool,
    /// Keep every enumerated sequence for CSV export. Disables pruning.
    pub record_all: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            cap: 1_000_000,
            tol: 1e-6,
            parallel: true,
            record_all: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRecord {
    pub sequence: Vec<f64>,
    pub cost: f64,
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub best_cost: f64,
    pub best_sequence: Vec<f64>,
    pub n_evaluated: u64,
    pub n_admissible: u64,
    pub records: Option<Vec<OracleRecord>>,
}

impl OracleResult {
    /// CSV `index,cost,admissible,s1..sN` of the recorded sequences, or just the best one.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let n = self.best_sequence.len();
        let mut header = vec!["index".to_string(), "cost".into(), "admissible".into()];
        header.extend((1..=n).map(|k| format!("s{k}")));
        writeln!(w, "{}", header.join(","))?;
        let best = [OracleRecord {
            sequence: self.best_sequence.clone(),
            cost: self.best_cost,
            admissible: true,
        }];
        let rows = self.records.as_deref().unwrap_or(&best);
        for (i, r) in rows.iter().enumerate() {
            write!(w, "{i},{:.16e},{}", r.cost, r.admissible)?;
            for v in &r.sequence {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Grid, segment boundaries and trapezoid weights for a discretised problem.
struct Segments {
    times: Vec<f64>,
    /// `bounds[k]..bounds[k+1]` are the grid points driven by segment `k`.
    bounds: Vec<usize>,
    weights: Vec<f64>,
}

impl Segments {
    fn new(problem: &OracleProblem) -> Result<Self> {
        problem.validate()?;
        let times = time_grid(problem.t_f, problem.dt)?;
        let n = times.len() - 1;
        if n < problem.n_steps {
            return Err(Error::param(
                "n_steps",
                format!(
                    "{} control steps need at least as many grid steps, have {n}",
                    problem.n_steps
                ),
            ));
        }
        let mut bounds: Vec<usize> = (0..problem.n_steps)
            .map(|k| (k * n).div_ceil(problem.n_steps))
            .collect();
        bounds.push(n + 1);
        let weights = (0..=n)
            .map(|i| {
                let left = if i > 0 { times[i] - times[i - 1] } else { 0.0 };
                let right = if i < n { times[i + 1] - times[i] } else { 0.0 };
                0.5 * (left + right)
            })
            .collect();
        Ok(Self {
            times,
            bounds,
            weights,
        })
    }

    fn n_segments(&self) -> usize {
        self.bounds.len() - 1
    }

    /// Input samples for a full level sequence.
    fn inputs(&self, seq: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.times.len());
        for (k, &u) in seq.iter().enumerate() {
            for _ in self.bounds[k]..self.bounds[k + 1] {
                out.push(vec![u]);
            }
        }
        out
    }

    /// Runs segment `k` from `x` (advanced in place) with input `u`.
    /// Returns the cost contribution and the smallest residual seen.
    #[allow(clippy::too_many_arguments)]
    fn run(
        &self,
        sys: &ControlSystem,
        set: &ConstraintSet,
        l: &RunningCost,
        rk: &mut Rk4,
        x: &mut [f64],
        k: usize,
        u: f64,
    ) -> (f64, f64) {
        let uv = [u];
        let last = self.times.len() - 1;
        let mut acc = 0.0;
        let mut worst = f64::INFINITY;
        for i in self.bounds[k]..self.bounds[k + 1] {
            for c in set.constraints() {
                worst = worst.min(c.residual(x, &uv));
            }
            acc += self.weights[i] * l.eval(x, &uv);
            if i < last {
                rk.step(sys, x, &uv, self.times[i + 1] - self.times[i]);
                if x.iter().any(|v| !v.is_finite()) {
                    return (acc, f64::NEG_INFINITY);
                }
            }
        }
        (acc, worst)
    }
}

struct Best {
    cost: f64,
    index: u64,
    seq: Vec<usize>,
}

struct Search<'a> {
    sys: &'a ControlSystem,
    set: &'a ConstraintSet,
    l: &'a RunningCost,
    seg: &'a Segments,
    levels: &'a [f64],
    tol: f64,
    record: bool,
    n_admissible: u64,
    best: Option<Best>,
    records: Vec<(u64, OracleRecord)>,
}

impl Search<'_> {
    fn remaining(&self, depth: usize) -> u64 {
        (self.levels.len() as u64).pow((self.seg.n_segments() - depth) as u32)
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        &mut self,
        rk: &mut Rk4,
        x: &[f64],
        depth: usize,
        acc: f64,
        admissible: bool,
        index: u64,
        seq: &mut Vec<usize>,
    ) {
        let n_seg = self.seg.n_segments();
        if depth == n_seg {
            if admissible {
                self.n_admissible += 1;
                let better = match &self.best {
                    None => true,
                    Some(b) => acc > b.cost,
                };
                if better {
                    self.best = Some(Best {
                        cost: acc,
                        index,
                        seq: seq.clone(),
                    });
                }
            }
            if self.record {
                self.records.push((
                    index,
                    OracleRecord {
                        sequence: seq.iter().map(|&i| self.levels[i]).collect(),
                        cost: acc,
                        admissible,
                    },
                ));
            }
            return;
        }
        let stride = self.remaining(depth + 1);
        let mut xs = x.to_vec();
        for li in 0..self.levels.len() {
            xs.copy_from_slice(x);
            let (c, worst) = self.seg.run(
                self.sys,
                self.set,
                self.l,
                rk,
                &mut xs,
                depth,
                self.levels[li],
            );
            let ok = admissible && worst >= -self.tol;
            if !ok && !self.record {
                continue;
            }
            seq.push(li);
            self.dfs(
                rk,
                &xs,
                depth + 1,
                acc + c,
                ok,
                index + li as u64 * stride,
                seq,
            );
            seq.pop();
        }
    }
}

/// Exhaustive search over piecewise-constant controls taking values in
/// `levels` on `n_steps` equal segments. Ties keep the first sequence in
/// lexicographic order, so serial and parallel runs agree exactly.
pub fn brute_force_best(
    sys: &ControlSystem,
    x0: &[f64],
    set: &ConstraintSet,
    l: &RunningCost,
    problem: &OracleProblem,
    opts: &OracleOptions,
) -> Result<OracleResult> {
    if sys.n_inputs() != 1 {
        return Err(Error::dim("oracle input", 1, sys.n_inputs()));
    }
    if x0.len() != sys.n_states() {
        return Err(Error::dim("initial state", sys.n_states(), x0.len()));
    }
    let seg = Segments::new(problem)?;
    let requested = (problem.levels.len() as f64).powi(problem.n_steps as i32);
    if requested > opts.cap as f64 {
        return Err(Error::OracleCapExceeded {
            requested,
            cap: opts.cap,
        });
    }
    let total = requested as u64;
    log::info!(
        "oracle: enumerating {total} sequences over {} levels",
        problem.levels.len()
    );
    let n_levels = problem.levels.len();
    let stride = (n_levels as u64).pow(problem.n_steps as u32 - 1);

    let branch = |li: usize| {
        let mut s = Search {
            sys,
            set,
            l,
            seg: &seg,
            levels: &problem.levels,
            tol: opts.tol,
            record: opts.record_all,
            n_admissible: 0,
            best: None,
            records: Vec::new(),
        };
        let mut rk = Rk4::new(sys.n_states());
        let mut x = x0.to_vec();
        let (c, worst) = seg.run(sys, set, l, &mut rk, &mut x, 0, problem.levels[li]);
        let ok = worst >= -opts.tol;
        if ok || opts.record_all {
            let mut seq = vec![li];
            s.dfs(&mut rk, &x, 1, c, ok, li as u64 * stride, &mut seq);
        }
        (s.best, s.n_admissible, s.records)
    };
    let parts: Vec<_> = if opts.parallel {
        (0..n_levels).into_par_iter().map(branch).collect()
    } else {
        (0..n_levels).map(branch).collect()
    };

    let mut best: Option<Best> = None;
    let mut n_admissible = 0;
    let mut records = Vec::new();
    for (b, n, r) in parts {
        n_admissible += n;
        records.extend(r);
        if let Some(b) = b {
            let replace = match &best {
                None => true,
                Some(cur) => b.cost > cur.cost || (b.cost == cur.cost && b.index < cur.index),
            };
            if replace {
                best = Some(b);
            }
        }
    }
    let best = best.ok_or(Error::AllInadmissible)?;
    let best_sequence: Vec<f64> = best.seq.iter().map(|&i| problem.levels[i]).collect();
    // Report the cost of the replayed sequence so it matches `cost` exactly.
    let traj = replay(sys, x0, &seg.times, &seg.inputs(&best_sequence))?;
    let best_cost = cost(&traj, l);
    debug_assert!((best_cost - best.cost).abs() <= 1e-9 * (1.0 + best_cost.abs()));
    records.sort_by_key(|(i, _)| *i);
    Ok(OracleResult {
        best_cost,
        best_sequence,
        n_evaluated: total,
        n_admissible,
        records: opts
            .record_all
            .then(|| records.into_iter().map(|(_, r)| r).collect()),
    })
}

/// Trajectory of a level sequence on the problem grid.
pub fn sequence_trajectory(
    sys: &ControlSystem,
    x0: &[f64],
    problem: &OracleProblem,
    seq: &[f64],
) -> Result<Trajectory> {
    let seg = Segments::new(problem)?;
    if seq.len() != seg.n_segments() {
        return Err(Error::dim("level sequence", seg.n_segments(), seq.len()));
    }
    replay(sys, x0, &seg.times, &seg.inputs(seq))
}

/// Restricts a trajectory's input to the oracle grid: each segment takes the
/// level nearest to the input at its first grid point, stepping down through
/// lower levels until the prefix is admissible.
pub fn project_to_levels(
    sys: &ControlSystem,
    x0: &[f64],
    set: &ConstraintSet,
    l: &RunningCost,
    source: &Trajectory,
    problem: &OracleProblem,
    tol: f64,
) -> Result<(Vec<f64>, f64)> {
    let seg = Segments::new(problem)?;
    if source.len() != seg.times.len() {
        return Err(Error::dim(
            "source trajectory grid",
            seg.times.len(),
            source.len(),
        ));
    }
    let mut order: Vec<usize> = (0..problem.levels.len()).collect();
    order.sort_by(|&a, &b| problem.levels[a].total_cmp(&problem.levels[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| problem.levels[i]).collect();

    let mut rk = Rk4::new(sys.n_states());
    let mut x = x0.to_vec();
    let mut seq = Vec::with_capacity(seg.n_segments());
    for k in 0..seg.n_segments() {
        let target = source.inputs[seg.bounds[k]][0];
        let nearest = (0..sorted.len())
            .min_by(|&a, &b| {
                (sorted[a] - target)
                    .abs()
                    .total_cmp(&(sorted[b] - target).abs())
            })
            .expect("levels are non-empty");
        let mut chosen = None;
        for idx in (0..=nearest).rev() {
            let mut xs = x.clone();
            let (_, worst) = seg.run(sys, set, l, &mut rk, &mut xs, k, sorted[idx]);
            if worst >= -tol {
                chosen = Some((sorted[idx], xs));
                break;
            }
        }
        let (u, xs) = chosen.ok_or(Error::AllInadmissible)?;
        seq.push(u);
        x = xs;
    }
    let traj = replay(sys, x0, &seg.times, &seg.inputs(&seq))?;
    Ok((seq, cost(&traj, l)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleGap {
    pub j_bangride: f64,
    pub j_oracle: f64,
    /// `j_oracle - j_bangride`; slightly negative values are expected since
    /// bang-and-ride is not confined to the level grid.
    pub gap: f64,
    /// `max level spacing * t_f / Q` when the cost is the SOC rate; `None` otherwise.
    pub grid_slack_bound: Option<f64>,
    pub projected_sequence: Vec<f64>,
    pub projected_cost: f64,
    pub oracle: OracleResult,
    pub bangride: Trajectory,
    /// Sampled check that the running cost is monotone on the visited range.
    pub cost_monotone: bool,
}

/// Runs bang-and-ride and the exhaustive oracle on the same grid and compares costs.
pub fn oracle_gap(
    sys: &ControlSystem,
    x0: &[f64],
    l: &RunningCost,
    problem: &OracleProblem,
    policy: &BangRidePolicy,
    opts: &OracleOptions,
) -> Result<OracleGap> {
    let set = &policy.set;
    let bangride = simulate_bang_ride(sys, x0, policy, problem.t_f, problem.dt)?;
    let j_bangride = cost(&bangride, l);
    let oracle = brute_force_best(sys, x0, set, l, problem, opts)?;
    let j_oracle = oracle.best_cost;
    let (projected_sequence, projected_cost) =
        project_to_levels(sys, x0, set, l, &bangride, problem, opts.tol)?;
    let grid_slack_bound = match l.kind {
        CostKind::SocRate { capacity } => {
            Some(problem.max_level_spacing() * problem.t_f / capacity)
        }
        _ => None,
    };
    let cost_monotone = l.class != MonotonicityClass::NonMonotone && {
        let n = sys.n_states();
        let states = (0..n)
            .map(|i| {
                let s = bangride.state_series(i);
                let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo - 0.5, hi + 0.5)
            })
            .collect();
        let domain = SampleBox::new(states, vec![(policy.u_min, policy.u_max)])?;
        verify_cost_monotone(l, &domain, &SamplingOptions::default())?.passed
    };
    Ok(OracleGap {
        j_bangride,
        j_oracle,
        gap: j_oracle - j_bangride,
        grid_slack_bound,
        projected_sequence,
        projected_cost,
        oracle,
        bangride,
        cost_monotone,
    })
}
