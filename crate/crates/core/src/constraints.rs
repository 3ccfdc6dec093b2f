//! Mixed constraints `h(x, u) >= 0` and the sampled check that each residual
//! is non-increasing in the input.

use std::collections::HashSet;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::dynamics::{ecm_voltage_unchecked, interp_clamped, EcmParams};
use crate::error::{Error, Result};
use crate::sampling::{central_diff, SampleBox, SamplingOptions};

pub type ResidualFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Default engagement tolerance in each constraint's own units.
pub const DEFAULT_TOL_ACTIVE: f64 = 1e-6;

/// What a constraint bounds. Used to label charging phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    InputUpperBound { input: usize },
    StateUpperBound { state: usize },
    Voltage,
    Temperature { state: usize },
    Plating,
    Custom,
}

#[derive(Clone)]
pub struct Constraint {
    name: String,
    kind: ConstraintKind,
    eval: ResidualFn,
    depends_on_u: bool,
    declared_nonincreasing_in_u: bool,
    tol_active: Option<f64>,
    tol_engaged: Option<f64>,
}

impl fmt::Debug for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Constraint")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("depends_on_u", &self.depends_on_u)
            .field(
                "declared_nonincreasing_in_u",
                &self.declared_nonincreasing_in_u,
            )
            .field("tol_active", &self.tol_active)
            .field("tol_engaged", &self.tol_engaged)
            .finish()
    }
}

impl Constraint {
    pub fn custom(
        name: impl Into<String>,
        depends_on_u: bool,
        declared_nonincreasing_in_u: bool,
        eval: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            kind: ConstraintKind::Custom,
            eval: Arc::new(eval),
            depends_on_u,
            declared_nonincreasing_in_u,
            tol_active: None,
            tol_engaged: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ConstraintKind {
        self.kind
    }

    pub fn depends_on_u(&self) -> bool {
        self.depends_on_u
    }

    pub fn declared_nonincreasing_in_u(&self) -> bool {
        self.declared_nonincreasing_in_u
    }

    pub fn tol_active(&self) -> Option<f64> {
        self.tol_active
    }

    pub fn tol_engaged(&self) -> Option<f64> {
        self.tol_engaged
    }

    #[inline]
    pub fn residual(&self, x: &[f64], u: &[f64]) -> f64 {
        (self.eval)(x, u)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Per-constraint override of the engagement tolerance used by active sets.
    pub fn with_tol_active(mut self, tol: f64) -> Self {
        self.tol_active = Some(tol);
        self
    }

    /// Per-constraint override of the strict-slack margin used by the necessity check.
    pub fn with_tol_engaged(mut self, tol: f64) -> Self {
        self.tol_engaged = Some(tol);
        self
    }
}

/// `xbar - x_i`; `state` is zero-based.
pub fn upper_bound_state(state: usize, xbar: f64) -> Constraint {
    Constraint {
        name: format!("x{}<={}", state + 1, xbar),
        kind: ConstraintKind::StateUpperBound { state },
        eval: Arc::new(move |x, _| xbar - x[state]),
        depends_on_u: false,
        declared_nonincreasing_in_u: true,
        tol_active: None,
        tol_engaged: None,
    }
}

/// `ubar - u_1`.
pub fn upper_bound_input(ubar: f64) -> Constraint {
    upper_bound_input_component(0, ubar)
}

pub fn upper_bound_input_component(input: usize, ubar: f64) -> Constraint {
    Constraint {
        name: format!("u{}<={}", input + 1, ubar),
        kind: ConstraintKind::InputUpperBound { input },
        eval: Arc::new(move |_, u| ubar - u[input]),
        depends_on_u: true,
        declared_nonincreasing_in_u: true,
        tol_active: None,
        tol_engaged: None,
    }
}

/// `vbar - v(x, u)` with the ECM terminal voltage. Works on any state vector whose
/// leading entries are the ECM states (plain or thermally coupled).
pub fn voltage_limit(params: &EcmParams, vbar: f64) -> Result<Constraint> {
    params.validate()?;
    let p = params.clone();
    Ok(Constraint {
        name: format!("v<={vbar}"),
        kind: ConstraintKind::Voltage,
        eval: Arc::new(move |x, u| vbar - ecm_voltage_unchecked(&p, x, u[0])),
        depends_on_u: true,
        declared_nonincreasing_in_u: params.series_resistance >= 0.0,
        tol_active: None,
        tol_engaged: None,
    })
}

/// `Tbar - x_T`; `temp_index` is zero-based.
pub fn temperature_limit(tbar: f64, temp_index: usize) -> Constraint {
    Constraint {
        name: format!("T<={tbar}"),
        kind: ConstraintKind::Temperature { state: temp_index },
        eval: Arc::new(move |x, _| tbar - x[temp_index]),
        depends_on_u: false,
        declared_nonincreasing_in_u: true,
        tol_active: None,
        tol_engaged: None,
    }
}

/// Maximal admissible current as a piecewise-linear function of the critical
/// surface concentration.
#[derive(Debug, Clone)]
pub struct PlatingTable {
    concentration: Vec<f64>,
    max_current: Vec<f64>,
    clamped: Arc<AtomicU64>,
}

impl PartialEq for PlatingTable {
    fn eq(&self, other: &Self) -> bool {
        self.concentration == other.concentration && self.max_current == other.max_current
    }
}

impl PlatingTable {
    pub fn new(concentration: Vec<f64>, max_current: Vec<f64>) -> Result<Self> {
        if concentration.len() != max_current.len() {
            return Err(Error::param("plating_table", "column lengths differ"));
        }
        if concentration.len() < 2 {
            return Err(Error::param(
                "plating_table",
                "need at least two breakpoints",
            ));
        }
        if concentration
            .iter()
            .chain(&max_current)
            .any(|v| !v.is_finite())
        {
            return Err(Error::param("plating_table", "entries must be finite"));
        }
        if concentration.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param(
                "plating_table.concentration",
                "must be strictly increasing",
            ));
        }
        if max_current.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::param(
                "plating_table.max_current",
                "must be non-increasing",
            ));
        }
        Ok(Self {
            concentration,
            max_current,
            clamped: Arc::new(AtomicU64::new(0)),
        })
    }

    /// Two-column CSV with header `concentration,max_current`.
    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "concentration" || &headers[1] != "max_current" {
            return Err(Error::Csv(format!(
                "plating table header must be `concentration,max_current`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let (mut c, mut m) = (Vec::new(), Vec::new());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Csv(format!("row {}: `{s}`: {e}", line + 2)))
            };
            c.push(parse(&rec[0])?);
            m.push(parse(&rec[1])?);
        }
        Self::new(c, m)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path.as_ref())
            .map_err(|e| Error::Csv(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_csv_reader(f)
    }

    pub fn concentration(&self) -> &[f64] {
        &self.concentration
    }

    pub fn max_current(&self) -> &[f64] {
        &self.max_current
    }

    /// Boundary current at concentration `c`; queries outside the table are
    /// clamped to the end values and counted.
    pub fn boundary(&self, c: f64) -> f64 {
        let lo = self.concentration[0];
        let hi = self.concentration[self.concentration.len() - 1];
        if (c < lo || c > hi) && self.clamped.fetch_add(1, Ordering::Relaxed) == 0 {
            log::warn!("plating table queried at c = {c} outside [{lo}, {hi}]; clamping");
        }
        interp_clamped(&self.concentration, &self.max_current, c)
    }

    /// Number of out-of-range queries seen so far (shared between clones).
    pub fn clamp_count(&self) -> u64 {
        self.clamped.load(Ordering::Relaxed)
    }
}

/// `u_boundary(surf(x, u)) - u`.
pub fn plating_constraint(
    table: PlatingTable,
    surf: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
) -> Constraint {
    Constraint {
        name: "plating".into(),
        kind: ConstraintKind::Plating,
        eval: Arc::new(move |x, u| table.boundary(surf(x, u)) - u[0]),
        depends_on_u: true,
        declared_nonincreasing_in_u: true,
        tol_active: None,
        tol_engaged: None,
    }
}

/// Ordered list of constraints; component `k` of `h` is `constraints[k]`.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    constraints: Vec<Constraint>,
    tol_active: f64,
}

impl ConstraintSet {
    pub fn new(constraints: Vec<Constraint>) -> Result<Self> {
        if constraints.is_empty() {
            return Err(Error::EmptyConstraintSet);
        }
        let mut seen = HashSet::new();
        for c in &constraints {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::param(
                    "constraints",
                    format!("duplicate name `{}`", c.name),
                ));
            }
        }
        Ok(Self {
            constraints,
            tol_active: DEFAULT_TOL_ACTIVE,
        })
    }

    pub fn with_tol_active(mut self, tol: f64) -> Self {
        self.tol_active = tol;
        self
    }

    pub fn tol_active(&self) -> f64 {
        self.tol_active
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn get(&self, k: usize) -> Option<&Constraint> {
        self.constraints.get(k)
    }

    pub fn names(&self) -> Vec<&str> {
        self.constraints.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.constraints.iter().position(|c| c.name == name)
    }

    pub fn position_of_kind(&self, pred: impl Fn(ConstraintKind) -> bool) -> Option<usize> {
        self.constraints.iter().position(|c| pred(c.kind))
    }

    /// Appends a constraint, keeping names unique.
    pub fn push(&mut self, c: Constraint) -> Result<()> {
        if self.position(&c.name).is_some() {
            return Err(Error::param(
                "constraints",
                format!("duplicate name `{}`", c.name),
            ));
        }
        self.constraints.push(c);
        Ok(())
    }

    /// Engagement tolerance for constraint `k`.
    pub fn tol_for(&self, k: usize) -> f64 {
        self.constraints[k].tol_active.unwrap_or(self.tol_active)
    }
}

pub fn eval_constraints(set: &ConstraintSet, x: &[f64], u: &[f64]) -> Vec<f64> {
    set.constraints.iter().map(|c| c.residual(x, u)).collect()
}

/// Every residual is at least `-tol` (boundary inclusive).
pub fn is_admissible(set: &ConstraintSet, x: &[f64], u: &[f64], tol: f64) -> bool {
    set.constraints.iter().all(|c| c.residual(x, u) >= -tol)
}

/// Indices with `|h_k| <= tol`.
pub fn active_set(set: &ConstraintSet, x: &[f64], u: &[f64], tol: f64) -> Vec<usize> {
    set.constraints
        .iter()
        .enumerate()
        .filter(|(_, c)| c.residual(x, u).abs() <= tol)
        .map(|(k, _)| k)
        .collect()
}

/// Like [`active_set`] but with each constraint's own tolerance override.
pub fn active_set_default_tol(set: &ConstraintSet, x: &[f64], u: &[f64]) -> Vec<usize> {
    (0..set.len())
        .filter(|&k| set.constraints[k].residual(x, u).abs() <= set.tol_for(k))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeWitness {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    /// Zero-based input component.
    pub input: usize,
    pub derivative: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputMonotonicityReport {
    pub name: String,
    pub passed: bool,
    /// Largest sampled `dh/du_j` over the box.
    pub max_derivative: f64,
    pub witness: Option<DerivativeWitness>,
}

/// Samples `dh_k/du_j` over the box; constraint `k` fails if any estimate exceeds `tol`.
pub fn verify_nonincreasing_in_u(
    set: &ConstraintSet,
    domain: &SampleBox,
    opts: &SamplingOptions,
) -> Result<Vec<InputMonotonicityReport>> {
    opts.check()?;
    let mut reports: Vec<InputMonotonicityReport> = set
        .constraints
        .iter()
        .map(|c| InputMonotonicityReport {
            name: c.name.clone(),
            passed: true,
            max_derivative: f64::NEG_INFINITY,
            witness: None,
        })
        .collect();
    for s in 0..opts.n_samples {
        let (x, mut u) = domain.point(s, opts.seed);
        for (c, rep) in set.constraints.iter().zip(reports.iter_mut()) {
            for j in 0..u.len() {
                let d = central_diff(&mut u, j, opts.fd_step, |uu| c.residual(&x, uu));
                if !d.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("differentiating constraint `{}`", c.name),
                    });
                }
                if d > rep.max_derivative {
                    rep.max_derivative = d;
                }
                if d > opts.tol && rep.witness.is_none() {
                    rep.passed = false;
                    rep.witness = Some(DerivativeWitness {
                        x: x.clone(),
                        u: u.clone(),
                        input: j,
                        derivative: d,
                    });
                }
            }
        }
    }
    Ok(reports)
}
