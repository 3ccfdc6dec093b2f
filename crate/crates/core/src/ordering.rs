//! Orthant order on vectors and certification of monotonicity and excitability.
//!
//! Structural checks on `(A, B)` are exact. The Kamke–Müller check for
//! nonlinear fields samples central differences over a box, so a `Monotone`
//! verdict there means "certified on the sampled box", nothing stronger.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dynamics::ControlSystem;
use crate::error::{Error, Result};
use crate::sampling::{central_diff, SampleBox, SamplingOptions};
use crate::simulate::{integrate, PiecewiseConstant};

/// Position of `x` relative to `y` in the orthant order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderRelation {
    /// `x << y`: every component strictly smaller.
    StronglyLess,
    /// `x < y`: `x <= y` and `x != y`, but not `x << y`.
    Less,
    /// `x == y`.
    Equal,
    /// `x <= y` fails.
    Incomparable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comparison {
    pub relation: OrderRelation,
    /// `x_i <= y_i` per component.
    pub le: Vec<bool>,
    /// `x_i < y_i` per component.
    pub lt: Vec<bool>,
}

impl Comparison {
    pub fn is_le(&self) -> bool {
        self.relation != OrderRelation::Incomparable
    }

    pub fn is_lt(&self) -> bool {
        matches!(
            self.relation,
            OrderRelation::Less | OrderRelation::StronglyLess
        )
    }

    pub fn is_ll(&self) -> bool {
        self.relation == OrderRelation::StronglyLess
    }
}

pub fn vec_compare(x: &[f64], y: &[f64]) -> Result<Comparison> {
    if x.len() != y.len() {
        return Err(Error::dim("compared vector", x.len(), y.len()));
    }
    let le: Vec<bool> = x.iter().zip(y).map(|(a, b)| a <= b).collect();
    let lt: Vec<bool> = x.iter().zip(y).map(|(a, b)| a < b).collect();
    let relation = if !le.iter().all(|&b| b) {
        OrderRelation::Incomparable
    } else if !x.is_empty() && lt.iter().all(|&b| b) {
        OrderRelation::StronglyLess
    } else if lt.iter().any(|&b| b) {
        OrderRelation::Less
    } else {
        OrderRelation::Equal
    };
    Ok(Comparison { relation, le, lt })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructuralCheck {
    pub holds: bool,
    /// Zero-based `(row, col)` of the first offending entry in row-major order.
    pub first_violation: Option<(usize, usize)>,
}

/// Every off-diagonal entry is at least `-tol`.
pub fn is_metzler(a: &DMatrix<f64>, tol: f64) -> Result<StructuralCheck> {
    if a.nrows() != a.ncols() {
        return Err(Error::NonSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if i != j && a[(i, j)] < -tol {
                return Ok(StructuralCheck {
                    holds: false,
                    first_violation: Some((i, j)),
                });
            }
        }
    }
    Ok(StructuralCheck {
        holds: true,
        first_violation: None,
    })
}

/// Every entry is at least `-tol`.
pub fn is_nonneg(b: &DMatrix<f64>, tol: f64) -> StructuralCheck {
    for i in 0..b.nrows() {
        for j in 0..b.ncols() {
            if b[(i, j)] < -tol {
                return StructuralCheck {
                    holds: false,
                    first_violation: Some((i, j)),
                };
            }
        }
    }
    StructuralCheck {
        holds: true,
        first_violation: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Monotone,
    NonMonotone,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coordinate {
    State(usize),
    Input(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMethod {
    /// Exact, from the linear `(A, B)` pair.
    Structural,
    /// Certified on the sampled box only.
    SampledBox,
}

/// A partial derivative `d f_target / d source` that breaks the sign condition.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianWitness {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub source: Coordinate,
    /// Zero-based state whose derivative is differentiated.
    pub target: usize,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub verdict: Verdict,
    pub method: CheckMethod,
    pub witnesses: Vec<JacobianWitness>,
    pub samples_used: usize,
    /// Smallest partial derivative seen among the sign-constrained entries.
    pub min_estimate: f64,
    pub domain: SampleBox,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KamkeMullerOptions {
    pub sampling: SamplingOptions,
    /// Linear systems go straight to `is_metzler`/`is_nonneg`.
    pub structural_shortcut: bool,
    /// Cap on recorded witnesses.
    pub max_witnesses: usize,
}

impl Default for KamkeMullerOptions {
    fn default() -> Self {
        Self {
            sampling: SamplingOptions::default(),
            structural_shortcut: true,
            max_witnesses: 16,
        }
    }
}

fn box_center(domain: &SampleBox) -> (Vec<f64>, Vec<f64>) {
    let mid = |b: &(f64, f64)| 0.5 * (b.0 + b.1);
    (
        domain.states.iter().map(mid).collect(),
        domain.inputs.iter().map(mid).collect(),
    )
}

/// Sample point and its sign-constrained partials.
type SamplePartials = (Vec<f64>, Vec<f64>, Vec<(Coordinate, usize, f64)>);

/// Sign-constrained partials at one point: `(source, target, estimate)`.
fn sign_partials(
    sys: &ControlSystem,
    x: &[f64],
    u: &[f64],
    rel: f64,
) -> Result<Vec<(Coordinate, usize, f64)>> {
    let n = sys.n_states();
    let mut out = Vec::with_capacity(n * (n + sys.n_inputs()));
    let mut buf = vec![0.0; n];
    let mut xs = x.to_vec();
    let mut us = u.to_vec();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = central_diff(&mut xs, i, rel, |xx| {
                sys.eval_into(xx, &us, &mut buf);
                buf[j]
            });
            out.push((Coordinate::State(i), j, d));
        }
    }
    for i in 0..sys.n_inputs() {
        for j in 0..n {
            let d = central_diff(&mut us, i, rel, |uu| {
                sys.eval_into(&xs, uu, &mut buf);
                buf[j]
            });
            out.push((Coordinate::Input(i), j, d));
        }
    }
    if out.iter().any(|(_, _, d)| !d.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("differentiating the vector field at x = {x:?}, u = {u:?}"),
        });
    }
    Ok(out)
}

/// Kamke–Müller sign conditions: `d f_j / d x_i >= 0` for `i != j` and
/// `d f_j / d u_i >= 0` for all `i, j`.
pub fn check_kamke_muller(
    sys: &ControlSystem,
    domain: &SampleBox,
    opts: &KamkeMullerOptions,
) -> Result<MonotonicityReport> {
    domain.check(sys.n_states(), sys.n_inputs())?;
    opts.sampling.check()?;
    let tol = opts.sampling.tol;
    if opts.structural_shortcut {
        if let Some(lin) = sys.linear_part() {
            let (cx, cu) = box_center(domain);
            let mut witnesses = Vec::new();
            let mut min_estimate = f64::INFINITY;
            for i in 0..lin.a.nrows() {
                for j in 0..lin.a.ncols() {
                    if i == j {
                        continue;
                    }
                    // a[(j, i)] = d f_j / d x_i
                    let v = lin.a[(j, i)];
                    min_estimate = min_estimate.min(v);
                    if v < -tol && witnesses.len() < opts.max_witnesses {
                        witnesses.push(JacobianWitness {
                            x: cx.clone(),
                            u: cu.clone(),
                            source: Coordinate::State(i),
                            target: j,
                            estimate: v,
                        });
                    }
                }
            }
            for i in 0..lin.b.ncols() {
                for j in 0..lin.b.nrows() {
                    let v = lin.b[(j, i)];
                    min_estimate = min_estimate.min(v);
                    if v < -tol && witnesses.len() < opts.max_witnesses {
                        witnesses.push(JacobianWitness {
                            x: cx.clone(),
                            u: cu.clone(),
                            source: Coordinate::Input(i),
                            target: j,
                            estimate: v,
                        });
                    }
                }
            }
            let metzler = is_metzler(&lin.a, tol)?.holds;
            let nonneg = is_nonneg(&lin.b, tol).holds;
            let verdict = if metzler && nonneg {
                Verdict::Monotone
            } else {
                Verdict::NonMonotone
            };
            debug_assert_eq!(verdict == Verdict::NonMonotone, !witnesses.is_empty());
            return Ok(MonotonicityReport {
                verdict,
                method: CheckMethod::Structural,
                witnesses,
                samples_used: 0,
                min_estimate,
                domain: domain.clone(),
            });
        }
    }

    let rel = opts.sampling.fd_step;
    let seed = opts.sampling.seed;
    let per_sample: Vec<Result<SamplePartials>> = (0..opts.sampling.n_samples)
        .into_par_iter()
        .map(|s| {
            let (x, u) = domain.point(s, seed);
            let partials = sign_partials(sys, &x, &u, rel)?;
            Ok((x, u, partials))
        })
        .collect();
    let mut witnesses = Vec::new();
    let mut min_estimate = f64::INFINITY;
    let mut n_negative = 0usize;
    for r in per_sample {
        let (x, u, partials) = r?;
        for (source, target, d) in partials {
            min_estimate = min_estimate.min(d);
            if d < -tol {
                n_negative += 1;
                if witnesses.len() < opts.max_witnesses {
                    witnesses.push(JacobianWitness {
                        x: x.clone(),
                        u: u.clone(),
                        source,
                        target,
                        estimate: d,
                    });
                }
            }
        }
    }
    // Negative estimates inside the tolerance band but close to it are not
    // distinguishable from finite-difference noise.
    let verdict = if n_negative > 0 {
        Verdict::NonMonotone
    } else if min_estimate < -0.5 * tol && tol > 0.0 {
        Verdict::Inconclusive
    } else {
        Verdict::Monotone
    };
    Ok(MonotonicityReport {
        verdict,
        method: CheckMethod::SampledBox,
        witnesses,
        samples_used: opts.sampling.n_samples,
        min_estimate,
        domain: domain.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcitabilityReport {
    /// Sufficient influence-graph test: every state reachable from every input.
    pub excitable: bool,
    /// Zero-based `(input, state)` pairs with no path.
    pub unreachable: Vec<(usize, usize)>,
    /// `edges[k]` lists the states directly influenced by node `k`; nodes are
    /// states `0..n` followed by inputs `n..n+m`.
    pub edges: Vec<Vec<usize>>,
}

pub fn check_excitability(
    sys: &ControlSystem,
    domain: &SampleBox,
    opts: &SamplingOptions,
) -> Result<ExcitabilityReport> {
    domain.check(sys.n_states(), sys.n_inputs())?;
    opts.check()?;
    let n = sys.n_states();
    let m = sys.n_inputs();
    let mut adj = vec![vec![false; n]; n + m];
    if let Some(lin) = sys.linear_part() {
        for i in 0..n {
            for j in 0..n {
                if i != j && lin.a[(j, i)].abs() > opts.tol {
                    adj[i][j] = true;
                }
            }
        }
        for i in 0..m {
            for j in 0..n {
                if lin.b[(j, i)].abs() > opts.tol {
                    adj[n + i][j] = true;
                }
            }
        }
    } else {
        let per_sample: Vec<Result<Vec<(Coordinate, usize, f64)>>> = (0..opts.n_samples)
            .into_par_iter()
            .map(|s| {
                let (x, u) = domain.point(s, opts.seed);
                sign_partials(sys, &x, &u, opts.fd_step)
            })
            .collect();
        for r in per_sample {
            for (source, target, d) in r? {
                if d.abs() > opts.tol {
                    let node = match source {
                        Coordinate::State(i) => i,
                        Coordinate::Input(i) => n + i,
                    };
                    adj[node][target] = true;
                }
            }
        }
    }
    let mut unreachable = Vec::new();
    for inp in 0..m {
        let mut seen = vec![false; n];
        let mut queue: VecDeque<usize> = adj[n + inp]
            .iter()
            .enumerate()
            .filter(|(_, &e)| e)
            .map(|(j, _)| j)
            .collect();
        for &j in &queue {
            seen[j] = true;
        }
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if adj[i][j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        unreachable.extend(
            seen.iter()
                .enumerate()
                .filter(|(_, &s)| !s)
                .map(|(j, _)| (inp, j)),
        );
    }
    let edges = adj
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|(_, &e)| e)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    Ok(ExcitabilityReport {
        excitable: unreachable.is_empty(),
        unreachable,
        edges,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderTestResult {
    pub ordered: bool,
    pub first_violation: Option<f64>,
    /// Smallest `(x_b - x_a)_i / scale_i` over the grid, `scale_i = max(1, max |x_i|)`.
    pub min_margin: f64,
}

/// Simulates both ordered initial-state/input pairs and checks
/// `x_a(t) <= x_b(t)` at every grid time up to `tol_order` in normalised units.
#[allow(clippy::too_many_arguments)]
pub fn trajectory_order_test(
    sys: &ControlSystem,
    x0_a: &[f64],
    x0_b: &[f64],
    u_a: &PiecewiseConstant,
    u_b: &PiecewiseConstant,
    t_f: f64,
    dt: f64,
    tol_order: f64,
) -> Result<OrderTestResult> {
    if !vec_compare(x0_a, x0_b)?.is_le() {
        return Err(Error::Precondition(
            "initial states are not ordered (x0_a <= x0_b fails)".into(),
        ));
    }
    if !u_a.le(u_b) {
        return Err(Error::Precondition(
            "inputs are not ordered (u_a <= u_b fails)".into(),
        ));
    }
    let ta = integrate(sys, x0_a, |t| u_a.at(t), t_f, dt)?;
    let tb = integrate(sys, x0_b, |t| u_b.at(t), t_f, dt)?;
    let n = sys.n_states();
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            ta.states
                .iter()
                .chain(&tb.states)
                .fold(1.0f64, |acc, x| acc.max(x[i].abs()))
        })
        .collect();
    let mut min_margin = f64::INFINITY;
    let mut first_violation = None;
    for k in 0..ta.len() {
        for i in 0..n {
            let m = (tb.states[k][i] - ta.states[k][i]) / scale[i];
            if m < min_margin {
                min_margin = m;
            }
            if m < -tol_order && first_violation.is_none() {
                first_violation = Some(ta.times[k]);
            }
        }
    }
    Ok(OrderTestResult {
        ordered: first_violation.is_none(),
        first_violation,
        min_margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{
        build_ecm, build_fd_spm, build_pade_spm, build_thermal_coupled_ecm, pade_spm_raw,
        EcmParams, ElectrodeSign, FdSpmParams, PadeSpmParams, ThermalParams,
    };

    #[test]
    fn compare_examples() {
        assert_eq!(
            vec_compare(&[1.0, 2.0], &[1.0, 3.0]).unwrap().relation,
            OrderRelation::Less
        );
        assert_eq!(
            vec_compare(&[1.0, 2.0], &[2.0, 3.0]).unwrap().relation,
            OrderRelation::StronglyLess
        );
        assert_eq!(
            vec_compare(&[1.0, 3.0], &[2.0, 2.0]).unwrap().relation,
            OrderRelation::Incomparable
        );
        assert_eq!(
            vec_compare(&[1.0, 3.0], &[1.0, 3.0]).unwrap().relation,
            OrderRelation::Equal
        );
        assert!(vec_compare(&[1.0], &[1.0, 2.0]).is_err());
        let c = vec_compare(&[1.0, 2.0], &[2.0, 3.0]).unwrap();
        assert!(c.is_ll() && c.is_lt() && c.is_le());
    }

    #[test]
    fn metzler_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -0.1]);
        assert!(is_metzler(&a, 0.0).unwrap().holds);
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, -1e-3, 0.0, -1.0]);
        let c = is_metzler(&a, 0.0).unwrap();
        assert!(!c.holds);
        assert_eq!(c.first_violation, Some((0, 1)));
        assert!(is_metzler(&DMatrix::zeros(2, 3), 0.0).is_err());
    }

    fn fd_params(n: usize) -> FdSpmParams {
        FdSpmParams {
            diffusivity: 1e-14,
            particle_radius: 5e-6,
            n_interior: n,
            faraday: crate::dynamics::FARADAY,
            surface_area: 3e5,
            collector_area: 0.1,
            thickness: 7e-5,
            electrode_sign: ElectrodeSign::Cathode,
        }
    }

    #[test]
    fn fd_spm_is_metzler_and_nonneg() {
        let (sys, _) = build_fd_spm(&fd_params(2)).unwrap();
        let lin = sys.linear_part().unwrap();
        assert!(is_metzler(&lin.a, 0.0).unwrap().holds);
        assert!(is_nonneg(&lin.b, 0.0).holds);
    }

    #[test]
    fn nonneg_examples() {
        let ecm = build_ecm(&EcmParams::default()).unwrap();
        assert!(is_nonneg(&ecm.linear_part().unwrap().b, 0.0).holds);
        let (_, b, _) = pade_spm_raw(&PadeSpmParams {
            a: [-1.0, -2.0],
            b: [0.5, 1.0, 1.0],
            c: [1.0, 1.0, 1.0],
        })
        .unwrap();
        let c = is_nonneg(&b, 0.0);
        assert!(!c.holds);
        assert_eq!(c.first_violation, Some((0, 0)));
        assert!(is_nonneg(&DMatrix::zeros(3, 2), 0.0).holds);
    }

    fn thermal_box(u_lo: f64) -> SampleBox {
        SampleBox::new(
            vec![(0.0, 1.0), (0.0, 0.25), (0.0, 8.0)],
            vec![(u_lo, 10.0)],
        )
        .unwrap()
    }

    #[test]
    fn linear_shortcut_matches_sampling() {
        let sys = build_ecm(&EcmParams::default()).unwrap();
        let domain = SampleBox::new(vec![(0.0, 1.0), (0.0, 0.25)], vec![(0.0, 10.0)]).unwrap();
        let fast = check_kamke_muller(&sys, &domain, &KamkeMullerOptions::default()).unwrap();
        assert_eq!(fast.method, CheckMethod::Structural);
        let slow = check_kamke_muller(
            &sys,
            &domain,
            &KamkeMullerOptions {
                structural_shortcut: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(slow.method, CheckMethod::SampledBox);
        assert_eq!(fast.verdict, Verdict::Monotone);
        assert_eq!(slow.verdict, Verdict::Monotone);
    }

    #[test]
    fn thermal_ecm_needs_nonnegative_current() {
        let sys =
            build_thermal_coupled_ecm(&EcmParams::default(), &ThermalParams::default()).unwrap();
        let opts = KamkeMullerOptions::default();
        let bad = check_kamke_muller(&sys, &thermal_box(-10.0), &opts).unwrap();
        assert_eq!(bad.verdict, Verdict::NonMonotone);
        let w = &bad.witnesses[0];
        assert!(w.u[0] < 0.0);
        assert_eq!(w.target, 2);
        let good = check_kamke_muller(&sys, &thermal_box(0.0), &opts).unwrap();
        assert_eq!(good.verdict, Verdict::Monotone);
        assert!(good.witnesses.is_empty());
    }

    #[test]
    fn kamke_muller_rejects_bad_box() {
        let sys = build_ecm(&EcmParams::default()).unwrap();
        let domain = SampleBox::new(vec![(0.0, 1.0)], vec![(0.0, 1.0)]).unwrap();
        assert!(check_kamke_muller(&sys, &domain, &KamkeMullerOptions::default()).is_err());
    }

    #[test]
    fn kamke_muller_reports_non_finite() {
        let sys = ControlSystem::nonlinear(2, 1, vec![], |x, _, out| {
            out[0] = x[1].ln();
            out[1] = 0.0;
        });
        let domain = SampleBox::new(vec![(0.0, 1.0), (-1.0, -0.5)], vec![(0.0, 1.0)]).unwrap();
        assert!(matches!(
            check_kamke_muller(&sys, &domain, &KamkeMullerOptions::default()),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn excitability_examples() {
        let (pade, _) = build_pade_spm(&PadeSpmParams {
            a: [-1.0, -2.0],
            b: [1.0, 1.0, 1.0],
            c: [1.0, 1.0, 1.0],
        })
        .unwrap();
        let b3 = SampleBox::new(vec![(0.0, 1.0); 3], vec![(0.0, 1.0)]).unwrap();
        assert!(
            check_excitability(&pade, &b3, &SamplingOptions::default())
                .unwrap()
                .excitable
        );

        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -0.1]);
        let b = DMatrix::from_column_slice(2, 1, &[1.0 / 3300.0, 0.0]);
        let sys = ControlSystem::linear(a, b, vec![]).unwrap();
        let b2 = SampleBox::new(vec![(0.0, 1.0); 2], vec![(0.0, 1.0)]).unwrap();
        let r = check_excitability(
            &sys,
            &b2,
            &SamplingOptions {
                tol: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!r.excitable);
        assert_eq!(r.unreachable, vec![(0, 1)]);

        let (fd, _) = build_fd_spm(&fd_params(6)).unwrap();
        let b6 = SampleBox::new(vec![(0.0, 1.0); 6], vec![(0.0, 1.0)]).unwrap();
        let r = check_excitability(
            &fd,
            &b6,
            &SamplingOptions {
                tol: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(r.excitable);
        // only the last node is driven directly
        assert_eq!(r.edges[6], vec![5]);
    }

    #[test]
    fn thermal_excitability_by_sampling() {
        let sys =
            build_thermal_coupled_ecm(&EcmParams::default(), &ThermalParams::default()).unwrap();
        let r = check_excitability(&sys, &thermal_box(0.0), &SamplingOptions::default()).unwrap();
        assert!(r.excitable);
    }

    #[test]
    fn order_test_examples() {
        let p = EcmParams::default();
        let sys = build_ecm(&p).unwrap();
        let ubar = 10.0 * p.capacity / 3600.0;
        let half = PiecewiseConstant::constant(vec![0.5 * ubar]);
        let full = PiecewiseConstant::constant(vec![ubar]);
        let r = trajectory_order_test(
            &sys,
            &[0.0, 0.0],
            &[0.0, 0.0],
            &half,
            &full,
            300.0,
            0.5,
            1e-8,
        )
        .unwrap();
        assert!(r.ordered);
        let r = trajectory_order_test(
            &sys,
            &[0.1, 0.0],
            &[0.1, 0.0],
            &full,
            &full,
            300.0,
            0.5,
            0.0,
        )
        .unwrap();
        assert!(r.ordered);
        assert_eq!(r.min_margin, 0.0);
        // precondition failures are caller errors
        assert!(matches!(
            trajectory_order_test(
                &sys,
                &[0.0, 0.0],
                &[0.0, 0.0],
                &full,
                &half,
                10.0,
                0.5,
                1e-8
            ),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            trajectory_order_test(
                &sys,
                &[0.2, 0.0],
                &[0.1, 0.0],
                &half,
                &full,
                10.0,
                0.5,
                1e-8
            ),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn toy_counterexample_fails_at_first_step() {
        let sys = ControlSystem::nonlinear(2, 1, vec![], |_, u, out| {
            out[0] = -u[0];
            out[1] = u[0];
        });
        let lo = PiecewiseConstant::constant(vec![0.0]);
        let hi = PiecewiseConstant::constant(vec![1.0]);
        let r = trajectory_order_test(&sys, &[0.0, 0.0], &[0.0, 0.0], &lo, &hi, 1.0, 0.1, 1e-8)
            .unwrap();
        assert!(!r.ordered);
        assert_eq!(r.first_violation, Some(0.1));
    }
}
