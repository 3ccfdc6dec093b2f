//! Fixed-step RK4 integration with zero-order-hold inputs, trajectory CSV I/O,
//! running costs and the trapezoidal cost functional.

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use crate::constraints::{ConstraintSet, ResidualFn};
use crate::dynamics::ControlSystem;
use crate::error::{Error, Result};
use crate::sampling::{central_diff, SampleBox, SamplingOptions};

/// Upper bound on the number of integration steps per run.
pub const MAX_STEPS: usize = 10_000_000;

/// Sampled `(u, x)` pair. `inputs[k]` is held over `[times[k], times[k+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_states(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn t_final(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.states[0]
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map_or(&[], Vec::as_slice)
    }

    /// Column `i` of the state samples.
    pub fn state_series(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|x| x[i]).collect()
    }

    pub fn input_series(&self, j: usize) -> Vec<f64> {
        self.inputs.iter().map(|u| u[j]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() {
            return Err(Error::Precondition("trajectory is empty".into()));
        }
        if self.states.len() != self.times.len() {
            return Err(Error::dim(
                "trajectory states",
                self.times.len(),
                self.states.len(),
            ));
        }
        if self.inputs.len() != self.times.len() {
            return Err(Error::dim(
                "trajectory inputs",
                self.times.len(),
                self.inputs.len(),
            ));
        }
        if self.times[0] != 0.0 {
            return Err(Error::Precondition("trajectory must start at t = 0".into()));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Precondition(
                "trajectory times must be strictly increasing".into(),
            ));
        }
        let (n, m) = (self.n_states(), self.n_inputs());
        for (x, u) in self.states.iter().zip(&self.inputs) {
            if x.len() != n {
                return Err(Error::dim("trajectory state row", n, x.len()));
            }
            if u.len() != m {
                return Err(Error::dim("trajectory input row", m, u.len()));
            }
        }
        let finite = self
            .times
            .iter()
            .chain(self.states.iter().flatten())
            .chain(self.inputs.iter().flatten());
        if finite.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "reading trajectory".into(),
            });
        }
        Ok(())
    }

    /// CSV with header `t,x1..xn,u1..um`, 17 significant digits, LF endings.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.n_states()).map(|i| format!("x{i}")));
        header.extend((1..=self.n_inputs()).map(|j| format!("u{j}")));
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::new();
        for k in 0..self.len() {
            line.clear();
            push_num(&mut line, self.times[k]);
            for v in self.states[k].iter().chain(&self.inputs[k]) {
                line.push(',');
                push_num(&mut line, *v);
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }

    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("t") {
            return Err(Error::Csv("trajectory header must start with `t`".into()));
        }
        let n = headers.iter().filter(|h| h.starts_with('x')).count();
        let m = headers.iter().filter(|h| h.starts_with('u')).count();
        for (i, h) in headers.iter().enumerate().skip(1) {
            let expected = if i <= n {
                format!("x{i}")
            } else {
                format!("u{}", i - n)
            };
            if h != expected {
                return Err(Error::Csv(format!(
                    "column {}: expected `{expected}`, found `{h}`",
                    i + 1
                )));
            }
        }
        if n == 0 || m == 0 {
            return Err(Error::Csv(
                "trajectory needs at least one state and one input column".into(),
            ));
        }
        let mut traj = Trajectory {
            times: Vec::new(),
            states: Vec::new(),
            inputs: Vec::new(),
        };
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| Error::Csv(format!("row {}: `{s}`: {e}", row + 2)))
                })
                .collect::<Result<Vec<_>>>()?;
            traj.times.push(vals[0]);
            traj.states.push(vals[1..=n].to_vec());
            traj.inputs.push(vals[n + 1..].to_vec());
        }
        traj.validate()?;
        Ok(traj)
    }
}

fn push_num(s: &mut String, v: f64) {
    use std::fmt::Write as _;
    write!(s, "{v:.16e}").expect("formatting into a String cannot fail");
}

/// Uniform grid `0, dt, 2dt, ...` ending exactly at `t_f` (last step may be shorter).
pub fn time_grid(t_f: f64, dt: f64) -> Result<Vec<f64>> {
    if !(t_f.is_finite() && t_f > 0.0) {
        return Err(Error::param("t_f", "must be finite and > 0"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::param("dt", "must be finite and > 0"));
    }
    let ratio = t_f / dt;
    if ratio > MAX_STEPS as f64 {
        return Err(Error::param(
            "dt",
            format!("t_f/dt = {ratio:.3e} exceeds the step cap {MAX_STEPS}"),
        ));
    }
    let mut n = (ratio - 1e-9).ceil() as usize;
    n = n.max(1);
    let mut times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    times.push(t_f);
    Ok(times)
}

/// Scratch buffers for [`Rk4::step`].
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    /// One classical RK4 step of length `h` with `u` held constant; `x` is updated in place.
    pub fn step(&mut self, sys: &ControlSystem, x: &mut [f64], u: &[f64], h: f64) {
        let n = x.len();
        sys.eval_into(x, u, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        sys.eval_into(&self.tmp, u, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        sys.eval_into(&self.tmp, u, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        sys.eval_into(&self.tmp, u, &mut self.k4);
        for i in 0..n {
            x[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Integrates from `x0` on `[0, t_f]` with step `dt`. The control is sampled
/// at the start of each step and held; the final sample is `control(t_f)`.
pub fn integrate(
    sys: &ControlSystem,
    x0: &[f64],
    control: impl Fn(f64) -> Vec<f64>,
    t_f: f64,
    dt: f64,
) -> Result<Trajectory> {
    let times = time_grid(t_f, dt)?;
    let inputs: Vec<Vec<f64>> = times.iter().map(|&t| control(t)).collect();
    replay(sys, x0, &times, &inputs)
}

/// Integrates on a given grid with `inputs[k]` held over step `k`.
pub fn replay(
    sys: &ControlSystem,
    x0: &[f64],
    times: &[f64],
    inputs: &[Vec<f64>],
) -> Result<Trajectory> {
    if times.is_empty() {
        return Err(Error::Precondition("empty time grid".into()));
    }
    if inputs.len() != times.len() {
        return Err(Error::dim("input samples", times.len(), inputs.len()));
    }
    sys.check_dims(x0, &inputs[0])?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "initial state".into(),
        });
    }
    let mut rk = Rk4::new(sys.n_states());
    let mut states = Vec::with_capacity(times.len());
    let mut x = x0.to_vec();
    states.push(x.clone());
    for k in 0..times.len() - 1 {
        let u = &inputs[k];
        if u.len() != sys.n_inputs() {
            return Err(Error::dim("input", sys.n_inputs(), u.len()));
        }
        rk.step(sys, &mut x, u, times[k + 1] - times[k]);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationBlowup {
                last_good_time: times[k],
            });
        }
        states.push(x.clone());
    }
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        inputs: inputs.to_vec(),
    })
}

/// Piecewise-constant input: `values[k]` on `[breaks[k], breaks[k+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant {
    breaks: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl PiecewiseConstant {
    pub fn new(breaks: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if breaks.is_empty() || breaks.len() != values.len() {
            return Err(Error::param(
                "piecewise input",
                "need one value per breakpoint",
            ));
        }
        if breaks[0] != 0.0 {
            return Err(Error::param(
                "piecewise input",
                "first breakpoint must be 0",
            ));
        }
        if breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param(
                "piecewise input",
                "breakpoints must be strictly increasing",
            ));
        }
        let m = values[0].len();
        if values.iter().any(|v| v.len() != m) {
            return Err(Error::param(
                "piecewise input",
                "inconsistent input dimension",
            ));
        }
        Ok(Self { breaks, values })
    }

    pub fn constant(u: Vec<f64>) -> Self {
        Self {
            breaks: vec![0.0],
            values: vec![u],
        }
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        let k = self.breaks.partition_point(|&b| b <= t).max(1) - 1;
        self.values[k].clone()
    }

    /// `self <= other` componentwise at every time.
    pub fn le(&self, other: &Self) -> bool {
        self.breaks
            .iter()
            .chain(&other.breaks)
            .all(|&t| self.at(t).iter().zip(other.at(t)).all(|(a, b)| *a <= b))
    }
}

/// Declared strictness class of a running cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonotonicityClass {
    /// Non-decreasing in `(x, u)` only.
    H2Only,
    /// Strictly increasing in the input.
    StrictInInput,
    /// Strictly increasing in the state; needs an excitable system.
    StrictInStateWithExcitability,
    /// Not monotone; kept as a negative fixture.
    NonMonotone,
}

#[derive(Clone)]
pub enum CostKind {
    /// `u / Q`: rate of change of state of charge.
    SocRate {
        capacity: f64,
    },
    /// `x_i`, e.g. the integral of the state of charge for `i = 0`.
    StateComponent {
        index: usize,
    },
    /// `x_soc + u - x_temp`, which penalises temperature.
    TemperaturePenalized {
        soc: usize,
        temperature: usize,
    },
    Custom {
        name: String,
        eval: ResidualFn,
    },
}

impl fmt::Debug for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostKind::SocRate { capacity } => write!(f, "SocRate {{ capacity: {capacity} }}"),
            CostKind::StateComponent { index } => write!(f, "StateComponent {{ index: {index} }}"),
            CostKind::TemperaturePenalized { soc, temperature } => {
                write!(
                    f,
                    "TemperaturePenalized {{ soc: {soc}, temperature: {temperature} }}"
                )
            }
            CostKind::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// Running cost `L(x, u)`; the functional is maximised.
#[derive(Debug, Clone)]
pub struct RunningCost {
    pub kind: CostKind,
    pub class: MonotonicityClass,
}

impl RunningCost {
    pub fn soc_rate(capacity: f64) -> Self {
        Self {
            kind: CostKind::SocRate { capacity },
            class: MonotonicityClass::StrictInInput,
        }
    }

    pub fn soc_integral() -> Self {
        Self::state_component(0)
    }

    pub fn state_component(index: usize) -> Self {
        Self {
            kind: CostKind::StateComponent { index },
            class: MonotonicityClass::StrictInStateWithExcitability,
        }
    }

    pub fn temperature_penalized(soc: usize, temperature: usize) -> Self {
        Self {
            kind: CostKind::TemperaturePenalized { soc, temperature },
            class: MonotonicityClass::NonMonotone,
        }
    }

    pub fn custom(
        name: impl Into<String>,
        class: MonotonicityClass,
        eval: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            kind: CostKind::Custom {
                name: name.into(),
                eval: Arc::new(eval),
            },
            class,
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], u: &[f64]) -> f64 {
        match &self.kind {
            CostKind::SocRate { capacity } => u[0] / capacity,
            CostKind::StateComponent { index } => x[*index],
            CostKind::TemperaturePenalized { soc, temperature } => x[*soc] + u[0] - x[*temperature],
            CostKind::Custom { eval, .. } => eval(x, u),
        }
    }

    pub fn is_strict(&self) -> bool {
        matches!(
            self.class,
            MonotonicityClass::StrictInInput | MonotonicityClass::StrictInStateWithExcitability
        )
    }
}

/// Trapezoidal rule over the trajectory grid.
pub fn cost(traj: &Trajectory, l: &RunningCost) -> f64 {
    let vals: Vec<f64> = traj
        .states
        .iter()
        .zip(&traj.inputs)
        .map(|(x, u)| l.eval(x, u))
        .collect();
    traj.times
        .windows(2)
        .zip(vals.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    /// `min_t min_k h_k(x(t), u(t))`; negative means inadmissible.
    pub value: f64,
    pub time: f64,
    pub constraint: usize,
}

/// Worst residual over the grid, with where and which constraint attains it.
pub fn max_violation(traj: &Trajectory, set: &ConstraintSet) -> Result<Violation> {
    if set.is_empty() {
        return Err(Error::EmptyConstraintSet);
    }
    if traj.is_empty() {
        return Err(Error::Precondition("trajectory is empty".into()));
    }
    let mut worst = Violation {
        value: f64::INFINITY,
        time: 0.0,
        constraint: 0,
    };
    for k in 0..traj.len() {
        for (i, c) in set.constraints().iter().enumerate() {
            let r = c.residual(&traj.states[k], &traj.inputs[k]);
            if r < worst.value {
                worst = Violation {
                    value: r,
                    time: traj.times[k],
                    constraint: i,
                };
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostMonotonicityReport {
    pub passed: bool,
    /// `(x, u, coordinate label, derivative)` for the first negative partial found.
    pub witness: Option<(Vec<f64>, Vec<f64>, String, f64)>,
}

/// Samples the partials of `L` over the box; passes if none falls below `-tol`.
pub fn verify_cost_monotone(
    l: &RunningCost,
    domain: &SampleBox,
    opts: &SamplingOptions,
) -> Result<CostMonotonicityReport> {
    opts.check()?;
    for s in 0..opts.n_samples {
        let (mut x, mut u) = domain.point(s, opts.seed);
        for i in 0..x.len() {
            let uu = u.clone();
            let d = central_diff(&mut x, i, opts.fd_step, |xx| l.eval(xx, &uu));
            if d < -opts.tol {
                return Ok(CostMonotonicityReport {
                    passed: false,
                    witness: Some((x, u, format!("x{}", i + 1), d)),
                });
            }
        }
        for j in 0..u.len() {
            let xx = x.clone();
            let d = central_diff(&mut u, j, opts.fd_step, |uu| l.eval(&xx, uu));
            if d < -opts.tol {
                return Ok(CostMonotonicityReport {
                    passed: false,
                    witness: Some((x, u, format!("u{}", j + 1), d)),
                });
            }
        }
    }
    Ok(CostMonotonicityReport {
        passed: true,
        witness: None,
    })
}
