//! Closed-form conditional evolution.
//!
//! Between photocounts the unnormalized state evolves as
//! `e^{−c t n̂} exp(A(t)â + B(t)â²)|ψ₀⟩` with `c = iω + Γ/2`, where `A` is a
//! decaying integral of the homodyne record and `B` is deterministic. Counts
//! only contribute a factor `â` each plus a scalar, so the `m`-count state
//! depends on the record through `(m, A, B, t)` and the count times enter the
//! scalar prefactor alone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{apply_number_exp, exp_lowering, lower_pow, StateVector, C64};
use crate::params::SimParams;

/// Largest relative truncation loss tolerated by the propagators.
pub const PROPAGATOR_LEAKAGE_LIMIT: f64 = 1e-6;

/// Values of the record integrals `A(t)` and `B(t)` at time `t`.
///
/// `t` may be `f64::INFINITY`, in which case `b` holds the limit `B(∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordAccumulators {
    pub a: C64,
    pub b: C64,
    pub t: f64,
}

impl Default for RecordAccumulators {
    fn default() -> Self {
        Self::zero()
    }
}

impl RecordAccumulators {
    pub fn zero() -> Self {
        RecordAccumulators { a: C64::new(0.0, 0.0), b: C64::new(0.0, 0.0), t: 0.0 }
    }

    /// Accumulators at time `t` with a given `A`; `B` follows from its closed form.
    pub fn at(a: C64, t: f64, params: &SimParams) -> Self {
        RecordAccumulators { a, b: b_closed_form(t, params), t }
    }

    /// `Ã = e^{(iω+Γ/2)t} A`.
    pub fn a_tilde(&self, params: &SimParams) -> C64 {
        (params.decay() * self.t).exp() * self.a
    }

    /// `B̃ = e^{(2iω+Γ)t} B`.
    pub fn b_tilde(&self, params: &SimParams) -> C64 {
        (params.decay() * 2.0 * self.t).exp() * self.b
    }
}

/// `B(t) = −(γ₂/2)(1 − e^{−(2iω+Γ)t})/(2iω+Γ)`; finite for `t = ∞`.
pub fn b_closed_form(t: f64, params: &SimParams) -> C64 {
    let lam = params.decay() * 2.0;
    if params.gamma2 == 0.0 || t == 0.0 {
        return C64::new(0.0, 0.0);
    }
    if lam.norm() == 0.0 {
        // Γ = ω = 0 can only happen with γ₂ = 0, handled above.
        return C64::new(-0.5 * params.gamma2 * t, 0.0);
    }
    if t.is_infinite() {
        return -0.5 * params.gamma2 / lam;
    }
    -0.5 * params.gamma2 * one_minus_exp(lam * t) / lam
}

/// `1 − e^{−z}` without cancellation for small `z`.
pub(crate) fn one_minus_exp(z: C64) -> C64 {
    if z.norm() < 1e-4 {
        z * (1.0 - z / 2.0 * (1.0 - z / 3.0 * (1.0 - z / 4.0)))
    } else {
        1.0 - (-z).exp()
    }
}

/// Advances the accumulators by one step of length `dt` carrying record
/// increment `dw_tilde`. The integrand is evaluated at the left end point,
/// matching the Itô convention of the record.
pub fn accumulate(
    acc: &RecordAccumulators,
    dw_tilde: f64,
    dt: f64,
    params: &SimParams,
) -> RecordAccumulators {
    let weight = (-params.decay() * acc.t).exp() * params.gamma2.sqrt();
    let t = acc.t + dt;
    RecordAccumulators { a: acc.a + weight * dw_tilde, b: b_closed_form(t, params), t }
}

/// Ordered photocount times.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CountRecord {
    times: Vec<f64>,
}

impl CountRecord {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        for w in times.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Domain(format!(
                    "count times must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if let Some(&first) = times.first() {
            if !(first >= 0.0) {
                return Err(Error::Domain(format!("count time {first} is negative")));
            }
        }
        Ok(CountRecord { times })
    }

    pub fn empty() -> Self {
        CountRecord { times: Vec::new() }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn m(&self) -> usize {
        self.times.len()
    }

    pub fn push(&mut self, t: f64) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::Domain(format!("count at {t} not after {last}")));
            }
        }
        self.times.push(t);
        Ok(())
    }
}

/// `e^{−c t n̂}` in place; at `t = ∞` only the vacuum survives.
fn apply_decay(params: &SimParams, t: f64, v: &mut [C64]) {
    if t.is_infinite() {
        if params.gamma_total() > 0.0 {
            for a in v.iter_mut().skip(1) {
                *a = C64::new(0.0, 0.0);
            }
        }
        return;
    }
    apply_number_exp(-params.decay() * t, v);
}

fn check_truncation(psi0: &StateVector) -> Result<()> {
    let leak = psi0.leakage();
    if leak > PROPAGATOR_LEAKAGE_LIMIT {
        return Err(Error::Truncation(format!(
            "initial state has top-level weight {leak:.3e} at D = {}; raise the dimension",
            psi0.dim()
        )));
    }
    Ok(())
}

/// `N̂(t,0;W̃)|ψ₀⟩ = e^{−(iω+Γ/2)tn̂} exp(Aâ + Bâ²)|ψ₀⟩`, unnormalized.
pub fn no_count_propagate(
    psi0: &StateVector,
    acc: &RecordAccumulators,
    params: &SimParams,
) -> Result<StateVector> {
    check_truncation(psi0)?;
    let mut v = exp_lowering(acc.a, acc.b, psi0.amps());
    apply_decay(params, acc.t, &mut v);
    StateVector::new(v)
}

/// Unnormalized conditional state split into a vector and a scalar kept in
/// log form: the state is `exp(log_prefactor)·vector`.
#[derive(Debug, Clone, PartialEq)]
pub struct MCountState {
    pub vector: StateVector,
    /// `(m/2) ln γ₁ − (iω+Γ/2)Σtₖ`.
    pub log_prefactor: C64,
}

impl MCountState {
    /// True when the conditional state vanishes (more counts than excitations,
    /// or `γ₁ = 0` with counts).
    pub fn is_zero(&self) -> bool {
        self.vector.is_zero() || self.log_prefactor.re == f64::NEG_INFINITY
    }
}

/// Vector part of the `m`-count state: `e^{−ctn̂} âᵐ exp(Aâ+Bâ²)|ψ₀⟩`.
pub fn m_count_vector(
    psi0: &StateVector,
    m: usize,
    acc: &RecordAccumulators,
    params: &SimParams,
) -> Result<StateVector> {
    check_truncation(psi0)?;
    let v = exp_lowering(acc.a, acc.b, psi0.amps());
    let mut v = if m >= v.len() { vec![C64::new(0.0, 0.0); v.len()] } else { lower_pow(&v, m) };
    apply_decay(params, acc.t, &mut v);
    StateVector::new(v)
}

/// The conditional `m`-count state
/// `γ₁^{m/2} e^{−cΣtₖ} e^{−ctn̂} âᵐ exp(Aâ+Bâ²)|ψ₀⟩`.
pub fn m_count_state(
    psi0: &StateVector,
    counts: &CountRecord,
    acc: &RecordAccumulators,
    params: &SimParams,
) -> Result<MCountState> {
    if let Some(&last) = counts.times().last() {
        if last > acc.t {
            return Err(Error::Domain(format!("count at {last} after record end {}", acc.t)));
        }
    }
    let m = counts.m();
    let vector = m_count_vector(psi0, m, acc, params)?;
    let sum_t: f64 = counts.times().iter().sum();
    let log_g = if m == 0 { 0.0 } else { 0.5 * m as f64 * params.gamma1.ln() };
    Ok(MCountState { vector, log_prefactor: C64::new(log_g, 0.0) - params.decay() * sum_t })
}
