//! Battery models expressed as control systems `dx/dt = f(x, u)`.
//!
//! Every builder validates its parameter block and returns a [`ControlSystem`].
//! Linear models carry their `(A, B)` pair so structural checks can use it
//! directly. Positive current charges the cell throughout.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Vector field `f(x, u)`, writing the derivative into the output slice.
pub type FieldFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

/// `(A, B)` of a linear system `dx/dt = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPart {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

#[derive(Clone)]
pub struct ControlSystem {
    n_states: usize,
    n_inputs: usize,
    field: FieldFn,
    linear: Option<LinearPart>,
    labels: Vec<String>,
}

impl fmt::Debug for ControlSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlSystem")
            .field("n_states", &self.n_states)
            .field("n_inputs", &self.n_inputs)
            .field("linear", &self.linear)
            .field("labels", &self.labels)
            .finish()
    }
}

impl ControlSystem {
    /// Linear system from `A` (n x n) and `B` (n x m).
    pub fn linear(a: DMatrix<f64>, b: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::NonSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        let n = a.nrows();
        if n == 0 {
            return Err(Error::param("A", "must have at least one state"));
        }
        if b.nrows() != n {
            return Err(Error::dim("rows of B", n, b.nrows()));
        }
        if b.ncols() == 0 {
            return Err(Error::param("B", "must have at least one input"));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::param("A/B", "entries must be finite"));
        }
        let m = b.ncols();
        let labels = fill_labels(labels, n);
        let (am, bm) = (a.clone(), b.clone());
        let field: FieldFn = Arc::new(move |x: &[f64], u: &[f64], out: &mut [f64]| {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    let aij = am[(i, j)];
                    if aij != 0.0 {
                        acc += aij * x[j];
                    }
                }
                for j in 0..m {
                    let bij = bm[(i, j)];
                    if bij != 0.0 {
                        acc += bij * u[j];
                    }
                }
                out[i] = acc;
            }
        });
        Ok(Self {
            n_states: n,
            n_inputs: m,
            field,
            linear: Some(LinearPart { a, b }),
            labels,
        })
    }

    /// General nonlinear system.
    pub fn nonlinear(
        n_states: usize,
        n_inputs: usize,
        labels: Vec<String>,
        field: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            n_states,
            n_inputs,
            field: Arc::new(field),
            linear: None,
            labels: fill_labels(labels, n_states),
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn linear_part(&self) -> Option<&LinearPart> {
        self.linear.as_ref()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Evaluate `f(x, u)` into `out` without allocating. Lengths are not checked.
    #[inline]
    pub fn eval_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.field)(x, u, out)
    }

    /// Evaluate `f(x, u)`, checking dimensions.
    pub fn eval(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(x, u)?;
        let mut out = vec![0.0; self.n_states];
        self.eval_into(x, u, &mut out);
        Ok(out)
    }

    pub fn check_dims(&self, x: &[f64], u: &[f64]) -> Result<()> {
        if x.len() != self.n_states {
            return Err(Error::dim("state", self.n_states, x.len()));
        }
        if u.len() != self.n_inputs {
            return Err(Error::dim("input", self.n_inputs, u.len()));
        }
        Ok(())
    }
}

fn fill_labels(mut labels: Vec<String>, n: usize) -> Vec<String> {
    labels.truncate(n);
    while labels.len() < n {
        labels.push(format!("x{}", labels.len() + 1));
    }
    labels
}

/// Open-circuit voltage as a function of state of charge.
#[derive(Debug, Clone, PartialEq)]
pub enum OcvCurve {
    /// `U(s) = intercept + slope * s`
    Affine { intercept: f64, slope: f64 },
    /// Piecewise-linear through `(soc[i], volts[i])`, held constant outside the table.
    Table { soc: Vec<f64>, volts: Vec<f64> },
}

impl Default for OcvCurve {
    fn default() -> Self {
        OcvCurve::Affine {
            intercept: 3.0,
            slope: 1.2,
        }
    }
}

impl OcvCurve {
    pub fn eval(&self, soc: f64) -> f64 {
        match self {
            OcvCurve::Affine { intercept, slope } => intercept + slope * soc,
            OcvCurve::Table { soc: s, volts: v } => interp_clamped(s, v, soc),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OcvCurve::Affine { intercept, slope } => {
                if !intercept.is_finite() || !slope.is_finite() {
                    return Err(Error::param("ocv", "coefficients must be finite"));
                }
                if *slope < 0.0 {
                    return Err(Error::param("ocv.slope", "OCV must be non-decreasing"));
                }
            }
            OcvCurve::Table { soc, volts } => {
                if soc.len() != volts.len() {
                    return Err(Error::param("ocv.table", "soc and volts lengths differ"));
                }
                if soc.len() < 2 {
                    return Err(Error::param("ocv.table", "need at least two breakpoints"));
                }
                if soc.iter().chain(volts).any(|v| !v.is_finite()) {
                    return Err(Error::param("ocv.table", "entries must be finite"));
                }
                if soc.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::param(
                        "ocv.table.soc",
                        "breakpoints must be strictly increasing",
                    ));
                }
                if volts.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::param(
                        "ocv.table.volts",
                        "OCV must be non-decreasing",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Piecewise-linear interpolation with constant extension past either end.
pub(crate) fn interp_clamped(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let k = xs.partition_point(|&b| b <= x);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let (y0, y1) = (ys[k - 1], ys[k]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcPair {
    pub resistance: f64,
    pub capacitance: f64,
}

/// Equivalent circuit model: SOC integrator, RC relaxation pairs, series resistance.
#[derive(Debug, Clone, PartialEq)]
pub struct EcmParams {
    /// Capacity in A·s.
    pub capacity: f64,
    /// Series resistance R0 in ohm.
    pub series_resistance: f64,
    pub rc_pairs: Vec<RcPair>,
    pub ocv: OcvCurve,
}

impl Default for EcmParams {
    /// Repository default cell: 3.3e3 A·s capacity with one RC pair.
    /// Resistances and capacitance are illustrative, not measured values.
    fn default() -> Self {
        Self {
            capacity: 3.3e3,
            series_resistance: 0.03,
            rc_pairs: vec![RcPair {
                resistance: 0.02,
                capacitance: 2000.0,
            }],
            ocv: OcvCurve::default(),
        }
    }
}

impl EcmParams {
    pub fn n_states(&self) -> usize {
        1 + self.rc_pairs.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.capacity.is_finite() && self.capacity > 0.0) {
            return Err(Error::param("capacity", "must be finite and > 0"));
        }
        if !(self.series_resistance.is_finite() && self.series_resistance >= 0.0) {
            return Err(Error::param("series_resistance", "must be finite and >= 0"));
        }
        for (k, rc) in self.rc_pairs.iter().enumerate() {
            if !(rc.resistance.is_finite() && rc.resistance > 0.0) {
                return Err(Error::param(
                    format!("rc_pairs[{k}].resistance"),
                    "must be finite and > 0",
                ));
            }
            if !(rc.capacitance.is_finite() && rc.capacitance > 0.0) {
                return Err(Error::param(
                    format!("rc_pairs[{k}].capacitance"),
                    "must be finite and > 0",
                ));
            }
        }
        self.ocv.validate()
    }

    fn labels(&self) -> Vec<String> {
        let mut labels = vec!["soc".to_string()];
        labels.extend((1..=self.rc_pairs.len()).map(|k| format!("v_rc{k}")));
        labels
    }

    /// Sum of the RC-pair voltages in `x` (states 2..=n).
    fn rc_sum(&self, x: &[f64]) -> f64 {
        x[1..self.n_states()].iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalParams {
    /// kg
    pub mass: f64,
    /// J/(kg K)
    pub heat_capacity: f64,
    /// K/W
    pub thermal_resistance: f64,
}

impl Default for ThermalParams {
    fn default() -> Self {
        Self {
            mass: 0.045,
            heat_capacity: 1100.0,
            thermal_resistance: 1.5,
        }
    }
}

impl ThermalParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mass", self.mass),
            ("heat_capacity", self.heat_capacity),
            ("thermal_resistance", self.thermal_resistance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, "must be finite and > 0"));
            }
        }
        Ok(())
    }
}

/// Reduced-order single particle model from a third-order Padé fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PadeSpmParams {
    /// Diagonal rates a1, a2 (1/s), nonpositive.
    pub a: [f64; 2],
    /// Input gains b1..b3, nonnegative.
    pub b: [f64; 3],
    /// Output gains c1..c3, nonnegative.
    pub c: [f64; 3],
}

impl PadeSpmParams {
    pub fn validate(&self) -> Result<()> {
        for (k, v) in self.a.iter().enumerate() {
            if !(v.is_finite() && *v <= 0.0) {
                return Err(Error::param(
                    format!("a{}", k + 1),
                    "must be finite and <= 0",
                ));
            }
        }
        for (name, vals) in [("b", &self.b), ("c", &self.c)] {
            for (k, v) in vals.iter().enumerate() {
                if !(v.is_finite() && *v >= 0.0) {
                    return Err(Error::param(
                        format!("{name}{}", k + 1),
                        "must be finite and >= 0",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Sign of the flux term. `Cathode` gives `B >= 0`; `Anode` negates the input
/// column and the surface feedthrough.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElectrodeSign {
    Cathode,
    Anode,
}

impl ElectrodeSign {
    pub fn factor(self) -> f64 {
        match self {
            ElectrodeSign::Cathode => 1.0,
            ElectrodeSign::Anode => -1.0,
        }
    }
}

pub const FARADAY: f64 = 96_485.332_12;

/// Finite-difference single particle model for one electrode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSpmParams {
    /// m²/s
    pub diffusivity: f64,
    /// m
    pub particle_radius: f64,
    pub n_interior: usize,
    /// C/mol
    pub faraday: f64,
    pub surface_area: f64,
    /// Current collector area, m²
    pub collector_area: f64,
    /// Electrode thickness, m
    pub thickness: f64,
    pub electrode_sign: ElectrodeSign,
}

impl FdSpmParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("diffusivity", self.diffusivity),
            ("particle_radius", self.particle_radius),
            ("faraday", self.faraday),
            ("surface_area", self.surface_area),
            ("collector_area", self.collector_area),
            ("thickness", self.thickness),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, "must be finite and > 0"));
            }
        }
        if self.n_interior < 2 {
            return Err(Error::param("n_interior", "must be >= 2"));
        }
        Ok(())
    }

    /// Grid spacing `Rs / (n + 1)`.
    pub fn spacing(&self) -> f64 {
        self.particle_radius / (self.n_interior as f64 + 1.0)
    }

    fn transfer_denominator(&self) -> f64 {
        self.faraday * self.surface_area * self.collector_area * self.thickness
    }
}

/// Scalar output `y = row · x + feedthrough · u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOutput {
    pub row: Vec<f64>,
    pub feedthrough: Vec<f64>,
}

impl LinearOutput {
    pub fn eval(&self, x: &[f64], u: &[f64]) -> f64 {
        let sx: f64 = self.row.iter().zip(x).map(|(c, v)| c * v).sum();
        let su: f64 = self.feedthrough.iter().zip(u).map(|(c, v)| c * v).sum();
        sx + su
    }
}

pub fn build_ecm(params: &EcmParams) -> Result<ControlSystem> {
    params.validate()?;
    let n = params.n_states();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, 1);
    b[(0, 0)] = 1.0 / params.capacity;
    for (k, rc) in params.rc_pairs.iter().enumerate() {
        a[(k + 1, k + 1)] = -1.0 / (rc.resistance * rc.capacitance);
        b[(k + 1, 0)] = 1.0 / rc.capacitance;
    }
    ControlSystem::linear(a, b, params.labels())
}

/// Terminal voltage `U(x1) + sum of RC voltages + R0 u`.
pub fn ecm_voltage(params: &EcmParams, x: &[f64], u: f64) -> Result<f64> {
    let n = params.n_states();
    if x.len() < n {
        return Err(Error::dim("ECM state", n, x.len()));
    }
    Ok(ecm_voltage_unchecked(params, x, u))
}

pub(crate) fn ecm_voltage_unchecked(params: &EcmParams, x: &[f64], u: f64) -> f64 {
    params.ocv.eval(x[0]) + params.rc_sum(x) + params.series_resistance * u
}

/// Raw Padé realisation before the sign flip on state 1: `(A, B, output row)`.
/// `B` and the output row carry negative first entries, so this form is not monotone.
pub fn pade_spm_raw(params: &PadeSpmParams) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<f64>)> {
    params.validate()?;
    let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        params.a[0],
        params.a[1],
        0.0,
    ]));
    let b = DMatrix::from_column_slice(3, 1, &[-params.b[0], params.b[1], params.b[2]]);
    let row = vec![-params.c[0], params.c[1], params.c[2]];
    Ok((a, b, row))
}

/// Padé SPM after flipping the sign of state 1, so that `B >= 0` and the
/// surface-concentration row is nonnegative.
pub fn build_pade_spm(params: &PadeSpmParams) -> Result<(ControlSystem, LinearOutput)> {
    let (a, mut b, mut row) = pade_spm_raw(params)?;
    let mut flip = DMatrix::<f64>::identity(3, 3);
    flip[(0, 0)] = -1.0;
    // T A T^-1 with T = T^-1 = diag(-1, 1, 1); A is diagonal so it is unchanged.
    let a = &flip * a * &flip;
    b = &flip * b;
    row[0] = -row[0];
    let sys = ControlSystem::linear(a, b, vec!["z1".into(), "z2".into(), "z3".into()])?;
    Ok((
        sys,
        LinearOutput {
            row,
            feedthrough: vec![0.0],
        },
    ))
}

/// Finite-difference SPM on `n + 2` equally spaced radial nodes with the
/// surface node eliminated through the flux boundary condition.
///
/// The bottom-right entry `-2 + (n+1)/n` and the surface output both follow
/// from solving the discretised boundary condition for the surface node, so
/// matrix and output stay consistent with each other.
pub fn build_fd_spm(params: &FdSpmParams) -> Result<(ControlSystem, LinearOutput)> {
    params.validate()?;
    let n = params.n_interior;
    let nf = n as f64;
    let delta = params.spacing();
    let scale = params.diffusivity / (delta * delta);
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = -2.0 * scale;
        if i > 0 {
            a[(i, i - 1)] = scale;
        }
        if i + 1 < n {
            a[(i, i + 1)] = scale;
        }
    }
    a[(n - 1, n - 1)] = scale * (-2.0 + (nf + 1.0) / nf);
    let sign = params.electrode_sign.factor();
    let denom = params.transfer_denominator();
    let mut b = DMatrix::zeros(n, 1);
    b[(n - 1, 0)] = sign * (nf + 1.0).powi(2) / (nf * denom);
    let labels = (1..=n).map(|k| format!("c{k}")).collect();
    let sys = ControlSystem::linear(a, b, labels)?;
    let mut row = vec![0.0; n];
    row[n - 1] = (nf + 1.0) / nf;
    let feedthrough = sign * params.particle_radius.powi(2) / (nf * params.diffusivity * denom);
    Ok((
        sys,
        LinearOutput {
            row,
            feedthrough: vec![feedthrough],
        },
    ))
}

/// ECM electrical states coupled with a lumped thermal state `T` appended last.
pub fn build_thermal_coupled_ecm(
    ecm: &EcmParams,
    thermal: &ThermalParams,
) -> Result<ControlSystem> {
    ecm.validate()?;
    thermal.validate()?;
    let electrical = build_ecm(ecm)?;
    let n_el = ecm.n_states();
    let heat_mass = thermal.mass * thermal.heat_capacity;
    let rt = thermal.thermal_resistance;
    let r0 = ecm.series_resistance;
    let mut labels = ecm.labels();
    labels.push("temperature".into());
    let field = move |x: &[f64], u: &[f64], out: &mut [f64]| {
        electrical.eval_into(&x[..n_el], u, &mut out[..n_el]);
        let rc: f64 = x[1..n_el].iter().sum();
        let t = x[n_el];
        out[n_el] = (-t / rt + u[0] * (rc + r0 * u[0])) / heat_mass;
    };
    Ok(ControlSystem::nonlinear(n_el + 1, 1, labels, field))
}

/// Index of the temperature state in [`build_thermal_coupled_ecm`].
pub fn thermal_temperature_index(ecm: &EcmParams) -> usize {
    ecm.n_states()
}
