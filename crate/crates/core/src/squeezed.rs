//! Squeezed-state machinery: the Q function of `D(α)S(r)|0⟩`, the
//! anti-normal reordering of `:exp(κâ + κ*â† + νâ†â):`, the disentangled
//! squeeze operator, and the Gaussian integral that combines them into a
//! closed-form normally ordered expectation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{make_creation, make_ladder, FockOperator, C64};
use crate::quadrature::GaussHermite;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Largest `|r|` accepted by [`squeeze_factorization`].
pub const MAX_FACTORIZATION_R: f64 = 2.0;

/// Gaussian Q function of `D(α)S(r)|0⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianQState {
    pub alpha: C64,
    pub r: f64,
}

impl GaussianQState {
    pub fn new(alpha: C64, r: f64) -> Self {
        GaussianQState { alpha, r }
    }

    /// Inverse widths `(a_u, a_v) = (2/(1+e^{−2r}), 2/(1+e^{2r}))` along the
    /// real and imaginary axes: `Q ∝ exp(−a_u u² − a_v v²)` for `β−α = u+iv`.
    pub fn widths(&self) -> (f64, f64) {
        (2.0 / (1.0 + (-2.0 * self.r).exp()), 2.0 / (1.0 + (2.0 * self.r).exp()))
    }

    /// `2-D` integral `∫ f(β) Q(β) d²β` by tensor Gauss–Hermite after scaling
    /// each axis to unit Gaussian weight. `f` returns the log of the
    /// integrand factor, so large exponentials stay finite.
    pub fn integrate_log(&self, nodes: usize, log_f: impl Fn(C64) -> C64) -> C64 {
        let (au, av) = self.widths();
        self.integrate_log_scaled(nodes, au, av, log_f)
    }

    /// As [`Self::integrate_log`] with axis scales `(su, sv)`: the
    /// substitution `u = s/√su`, `v = w/√sv` turns the measure into
    /// `e^{−s²−w²} ds dw/√(su sv)`, and the rest of `Q·f` is evaluated
    /// pointwise.
    fn integrate_log_scaled(&self, nodes: usize, su: f64, sv: f64, log_f: impl Fn(C64) -> C64) -> C64 {
        let gh = GaussHermite::new(nodes);
        let jac = 1.0 / (su * sv).sqrt();
        let mut total = ZERO;
        for (s, ws) in gh.nodes.iter().zip(&gh.weights) {
            let u = s / su.sqrt();
            for (w, ww) in gh.nodes.iter().zip(&gh.weights) {
                let v = w / sv.sqrt();
                let beta = self.alpha + C64::new(u, v);
                let log_q = self.log_q(beta);
                let e = log_q + s * s + w * w + log_f(beta);
                total += ws * ww * jac * e.exp();
            }
        }
        total
    }

    fn log_q(&self, beta: C64) -> f64 {
        let (au, av) = self.widths();
        let d = beta - self.alpha;
        -(PI * self.r.cosh()).ln() - au * d.re * d.re - av * d.im * d.im
    }
}

/// `Q(β) = (1/(π cosh r)) exp[−|β−α|² − (tanh r/2)((β−α)² + (β*−α*)²)]`.
pub fn q_function(state: &GaussianQState, beta: C64) -> f64 {
    let d = beta - state.alpha;
    let t = state.r.tanh();
    let e = -d.norm_sqr() - 0.5 * t * (d * d + (d * d).conj()).re;
    e.exp() / (PI * state.r.cosh())
}

/// Anti-normally ordered form
/// `:exp(κâ+κ*â†+νâ†â): = e^{log_prefactor} ⋮exp(κ′â + κ′*â† + ν′â↠)⋮`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReorderedExponential {
    pub kappa: C64,
    pub nu: C64,
    pub log_prefactor: C64,
}

impl ReorderedExponential {
    /// Anti-normal symbol `e^{log_prefactor} exp(κ′β + κ′*β* + ν′|β|²)`, in log form.
    pub fn log_symbol(&self, beta: C64) -> C64 {
        self.log_prefactor
            + self.kappa * beta
            + self.kappa.conj() * beta.conj()
            + self.nu * beta.norm_sqr()
    }
}

pub fn antinormal_reorder(kappa: C64, nu: f64) -> Result<ReorderedExponential> {
    if !(nu > -1.0) {
        return Err(Error::Domain(format!("anti-normal reordering needs ν > −1, got {nu}")));
    }
    let one_nu = 1.0 + nu;
    Ok(ReorderedExponential {
        kappa: kappa / one_nu,
        nu: C64::new(nu / one_nu, 0.0),
        log_prefactor: C64::new(-kappa.norm_sqr() / one_nu - one_nu.ln(), 0.0),
    })
}

fn diag_pow(dim: usize, base: C64, offset: i32) -> FockOperator {
    FockOperator::diagonal(dim, |k| base.powi(k as i32 + offset))
}

/// `e^{κ*â†}(1+ν)^{n̂}e^{κâ}` as a dense matrix.
pub fn normal_ordered_matrix(kappa: C64, nu: f64, dim: usize) -> Result<FockOperator> {
    let a = make_ladder(dim)?;
    let ad = make_creation(dim)?;
    let left = ad.scaled(kappa.conj()).expm_nilpotent();
    let right = a.scaled(kappa).expm_nilpotent();
    let mid = diag_pow(dim, C64::new(1.0 + nu, 0.0), 0);
    Ok(&(&left * &mid) * &right)
}

/// `e^{κ′â}(1−ν′)^{−n̂−1}e^{κ′*â†}`, the operator with anti-normal symbol
/// `exp(κ′β + κ′*β* + ν′|β|²)`. Built at a padded dimension and cut to
/// `dim`, since raising before lowering feeds levels above the block.
pub fn antinormal_matrix(re: &ReorderedExponential, dim: usize) -> Result<FockOperator> {
    let pad = dim + 80;
    let a = make_ladder(pad)?;
    let ad = make_creation(pad)?;
    let left = a.scaled(re.kappa).expm_nilpotent();
    let right = ad.scaled(re.kappa.conj()).expm_nilpotent();
    let mid = diag_pow(pad, (ONE - re.nu).inv(), 1);
    let full = &(&left * &mid) * &right;
    Ok(full.block(dim))
}

/// `S(r) = exp[(r/2)(â² − â†²)]` in disentangled form,
/// `(1/√cosh r) exp[−â†² tanh r/2] exp[−n̂ ln cosh r] exp[â² tanh r/2]`.
///
/// Matrix elements `⟨j|·|k⟩` only pass through levels `≤ min(j, k)`, so
/// every entry is exact at any dimension.
pub fn squeeze_factorization(r: f64, dim: usize) -> Result<FockOperator> {
    if !(r.abs() <= MAX_FACTORIZATION_R) {
        return Err(Error::Domain(format!(
            "squeeze factorization needs |r| <= {MAX_FACTORIZATION_R}, got {r}"
        )));
    }
    let a = make_ladder(dim)?;
    let ad = make_creation(dim)?;
    let half_t = C64::new(0.5 * r.tanh(), 0.0);
    let raise = (&ad * &ad).scaled(-half_t).expm_nilpotent();
    let lower = (&a * &a).scaled(half_t).expm_nilpotent();
    let c = r.cosh();
    let mid = FockOperator::diagonal(dim, |k| C64::new(c.powf(-(k as f64) - 0.5), 0.0));
    Ok(&(&raise * &mid) * &lower)
}

/// `⟨α,r|:exp(κâ + κ*â† + νâ†â):|α,r⟩` in closed form:
///
/// `[(1+ν(1−e^{−2r})/2)(1+ν(1−e^{2r})/2)]^{−1/2} · exp[−|κ|²/(1+ν)
///  + (a_u Reα + Reκ′)²/(a_u−ν′) − a_u(Reα)²
///  + (a_v Imα − Imκ′)²/(a_v−ν′) − a_v(Imα)²]`.
pub fn squeezed_normal_expectation(alpha: C64, r: f64, kappa: C64, nu: f64) -> Result<C64> {
    let b1 = 1.0 + nu * (1.0 - (-2.0 * r).exp()) / 2.0;
    let b2 = 1.0 + nu * (1.0 - (2.0 * r).exp()) / 2.0;
    if !(b1 > 0.0 && b2 > 0.0) {
        return Err(Error::Domain(format!(
            "squeezed generating function diverges: bracket factors {b1}, {b2}"
        )));
    }
    let re = antinormal_reorder(kappa, nu)?;
    let (au, av) = GaussianQState::new(alpha, r).widths();
    let nup = re.nu;
    let kp = re.kappa;
    let x = alpha.re;
    let y = alpha.im;
    let exponent = C64::new(-kappa.norm_sqr() / (1.0 + nu), 0.0)
        + (au * x + kp.re).powi(2) / (au - nup)
        - au * x * x
        + (av * y - kp.im).powi(2) / (av - nup)
        - av * y * y;
    Ok(exponent.exp() / (b1 * b2).sqrt())
}

/// `∫ Q(β) · symbol(β) d²β` for the reordered exponential, by 2-D
/// Gauss–Hermite quadrature with `nodes` points per axis.
pub fn q_quadrature_expectation(alpha: C64, r: f64, kappa: C64, nu: f64, nodes: usize) -> Result<C64> {
    let re = antinormal_reorder(kappa, nu)?;
    let q = GaussianQState::new(alpha, r);
    let (au, av) = q.widths();
    // Fold a growing |β|² factor into the axis scales so the remaining
    // integrand stays bounded on the nodes.
    let grow = re.nu.re.max(0.0);
    let (su, sv) = (au - grow, av - grow);
    if !(su > 0.0 && sv > 0.0) {
        return Err(Error::Domain("Q-function integral diverges".into()));
    }
    Ok(q.integrate_log_scaled(nodes, su, sv, |beta| re.log_symbol(beta)))
}
