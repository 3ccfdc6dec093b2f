//! Low-discrepancy sampling over state/input boxes and central differences.

use crate::error::{Error, Result};

const PRIMES: [u64; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131,
];

/// Radical inverse of `index` in `base`, in [0, 1).
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    r
}

/// Halton point `index` in `dim` dimensions. Dimensions past the prime table
/// reuse earlier bases with a shifted index.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|d| {
            let base = PRIMES[d % PRIMES.len()];
            let shift = (d / PRIMES.len()) as u64 * 7919;
            radical_inverse(index + shift, base)
        })
        .collect()
}

/// Budget and tolerances shared by the sampled derivative checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingOptions {
    pub n_samples: usize,
    /// Relative finite-difference step.
    pub fd_step: f64,
    pub tol: f64,
    pub seed: u64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self {
            n_samples: 512,
            fd_step: 1e-6,
            tol: 1e-9,
            seed: 0,
        }
    }
}

impl SamplingOptions {
    pub(crate) fn check(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::param("n_samples", "must be >= 1"));
        }
        if !(self.fd_step.is_finite() && self.fd_step > 0.0) {
            return Err(Error::param("fd_step", "must be > 0"));
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(Error::param("tol", "must be >= 0"));
        }
        Ok(())
    }
}

/// Axis-aligned sampling domain over states and inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBox {
    pub states: Vec<(f64, f64)>,
    pub inputs: Vec<(f64, f64)>,
}

impl SampleBox {
    pub fn new(states: Vec<(f64, f64)>, inputs: Vec<(f64, f64)>) -> Result<Self> {
        for (k, (lo, hi)) in states.iter().chain(inputs.iter()).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::param(
                    format!("box[{k}]"),
                    format!("bad interval [{lo}, {hi}]"),
                ));
            }
        }
        Ok(Self { states, inputs })
    }

    pub fn check(&self, n_states: usize, n_inputs: usize) -> Result<()> {
        if self.states.len() != n_states {
            return Err(Error::dim("box states", n_states, self.states.len()));
        }
        if self.inputs.len() != n_inputs {
            return Err(Error::dim("box inputs", n_inputs, self.inputs.len()));
        }
        Ok(())
    }

    /// Sample `k` of the sequence started at `seed`.
    pub fn point(&self, k: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let dim = self.states.len() + self.inputs.len();
        let h = halton(seed + k as u64 + 1, dim);
        let scale = |(lo, hi): &(f64, f64), t: f64| lo + (hi - lo) * t;
        let x = self
            .states
            .iter()
            .zip(&h)
            .map(|(b, t)| scale(b, *t))
            .collect();
        let u = self
            .inputs
            .iter()
            .zip(&h[self.states.len()..])
            .map(|(b, t)| scale(b, *t))
            .collect();
        (x, u)
    }
}

/// Finite-difference step for a coordinate with value `v`.
pub(crate) fn fd_step_for(v: f64, rel: f64) -> f64 {
    rel * v.abs().max(1.0)
}

/// Central difference of `g` along coordinate `idx` of `v`.
pub(crate) fn central_diff(
    v: &mut [f64],
    idx: usize,
    rel: f64,
    mut g: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let orig = v[idx];
    let h = fd_step_for(orig, rel);
    v[idx] = orig + h;
    let fp = g(v);
    v[idx] = orig - h;
    let fm = g(v);
    v[idx] = orig;
    (fp - fm) / (2.0 * h)
}
