//! Closed-form oracles: generating functions of the records, joint record
//! densities, homodyne moments for coherent input, and the homodyne
//! quadrature conditioned on photocounts.
//!
//! The generating function is
//! `M[ξ,η] = E[exp(∫ξ dA + ∫ξ* dA* + ∫η dN)]`, which factors into a Gaussian
//! prefactor and the normally ordered expectation
//! `⟨ψ₀|:exp(κâ + κ*â† + νâ†â):|ψ₀⟩` with
//! `κ = γ₂∫(e^{−(2iω+Γ)t}ξ + e^{−Γt}ξ*)dt` and `ν = γ₁∫e^{−Γt}(e^η − 1)dt`.
//! Test functions are piecewise constant, so every integral is closed-form.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{exp_lowering, StateVector, C64};
use crate::params::SimParams;
use crate::propagators::{m_count_vector, one_minus_exp, RecordAccumulators};
use crate::quadrature::GaussHermite;
use crate::states::{thermal_weights, PreparedState, StateModel};

const ZERO: C64 = C64::new(0.0, 0.0);

/// A constant value on `[start, end)`; `end` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece<T> {
    pub start: f64,
    pub end: f64,
    pub value: T,
}

/// Piecewise-constant test functions `ξ(·)` and `η(·)` on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GFQuery {
    pub xi: Vec<Piece<C64>>,
    pub eta: Vec<Piece<f64>>,
    pub horizon: f64,
}

impl GFQuery {
    pub fn new(xi: Vec<Piece<C64>>, eta: Vec<Piece<f64>>, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        fn check<T>(pieces: &[Piece<T>], horizon: f64) -> Result<()> {
            let mut last = 0.0;
            for p in pieces {
                if !(p.start >= last && p.end > p.start && p.end <= horizon) {
                    return Err(Error::Domain(format!(
                        "pieces must be ordered, non-overlapping and within [0, {horizon}]"
                    )));
                }
                last = p.end;
            }
            Ok(())
        }
        check(&xi, horizon)?;
        check(&eta, horizon)?;
        Ok(GFQuery { xi, eta, horizon })
    }

    /// `ξ` and `η` constant on `(0, t)`; `t` may be infinite.
    pub fn scalar(xi: C64, eta: f64, t: f64) -> Result<Self> {
        let xi = if xi == ZERO { vec![] } else { vec![Piece { start: 0.0, end: t, value: xi }] };
        let eta = if eta == 0.0 { vec![] } else { vec![Piece { start: 0.0, end: t, value: eta }] };
        GFQuery::new(xi, eta, t)
    }
}

/// `κ`, `ν` and the exponent of the Gaussian prefactor for one query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaNu {
    pub kappa: C64,
    pub nu: f64,
    /// `(γ₂/2)∫|ξe^{−(iω+Γ/2)t} + ξ*e^{−(−iω+Γ/2)t}|²dt`.
    pub log_gauss: f64,
}

/// `∫_s^e e^{−λt} dt`.
fn exp_integral(lambda: C64, s: f64, e: f64) -> Result<C64> {
    if lambda == ZERO {
        if e.is_infinite() {
            return Err(Error::Divergence("non-decaying integrand on an infinite interval".into()));
        }
        return Ok(C64::new(e - s, 0.0));
    }
    if e.is_infinite() {
        if lambda.re <= 0.0 {
            return Err(Error::Divergence("non-decaying integrand on an infinite interval".into()));
        }
        return Ok((-lambda * s).exp() / lambda);
    }
    Ok((-lambda * s).exp() * one_minus_exp(lambda * (e - s)) / lambda)
}

pub fn kappa_nu(q: &GFQuery, params: &SimParams) -> Result<KappaNu> {
    let g = C64::new(params.gamma_total(), 0.0);
    let two_c = params.decay() * 2.0;
    let mut kappa = ZERO;
    let mut log_gauss = ZERO;
    for p in &q.xi {
        let i2c = exp_integral(two_c, p.start, p.end)?;
        let ig = exp_integral(g, p.start, p.end)?;
        let xi = p.value;
        kappa += params.gamma2 * (xi * i2c + xi.conj() * ig);
        log_gauss += 0.5
            * params.gamma2
            * (xi * xi * i2c + (xi * xi * i2c).conj() + 2.0 * xi.norm_sqr() * ig);
    }
    let mut nu = 0.0;
    for p in &q.eta {
        nu += params.gamma1 * p.value.exp_m1() * exp_integral(g, p.start, p.end)?.re;
    }
    Ok(KappaNu { kappa, nu, log_gauss: log_gauss.re })
}

/// `M[ξ, η]` for any initial state.
pub fn generating_function(init: &dyn StateModel, q: &GFQuery, params: &SimParams) -> Result<C64> {
    let kn = kappa_nu(q, params)?;
    Ok(init.normal_expectation(kn.kappa, kn.nu)? * kn.log_gauss.exp())
}

/// `⟨ψ₀|:exp(κâ + κ*â† + νâ†â):|ψ₀⟩` evaluated in the Fock basis as
/// `⟨φ|(1+ν)^n̂|φ⟩` with `φ = e^{κâ}ψ₀`, averaged over mixture weights.
pub fn normal_expectation_dense(prep: &PreparedState, kappa: C64, nu: f64) -> C64 {
    let one = |psi: &[C64]| -> C64 {
        let phi = exp_lowering(kappa, ZERO, psi);
        let mut s = 0.0;
        let mut p = 1.0;
        for v in &phi {
            s += v.norm_sqr() * p;
            p *= 1.0 + nu;
        }
        C64::new(s, 0.0)
    };
    match prep {
        PreparedState::Pure(s) => one(s.amps()),
        PreparedState::NumberMixture { weights } => {
            let d = weights.len();
            let mut total = ZERO;
            for (n, w) in weights.iter().enumerate() {
                if *w == 0.0 {
                    continue;
                }
                let mut e = vec![ZERO; d];
                e[n] = C64::new(1.0, 0.0);
                total += one(&e) * *w;
            }
            total
        }
    }
}

/// Laguerre polynomial `Lₙ(x)` by the three-term recurrence.
pub fn laguerre(n: usize, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - x) * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Mean and variances of the homodyne integral `A(t)` for coherent input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomodyneMoments {
    pub mean: C64,
    /// `E[(A − E A)²]`.
    pub pseudo_variance: C64,
    /// `E[|A − E A|²]`.
    pub variance: f64,
}

/// Gaussian moments of `A(t)` for a coherent initial state.
pub fn coherent_homodyne_moments(alpha: C64, params: &SimParams, t: f64) -> Result<HomodyneMoments> {
    let i2c = exp_integral(params.decay() * 2.0, 0.0, t)?;
    let ig = exp_integral(C64::new(params.gamma_total(), 0.0), 0.0, t)?;
    Ok(HomodyneMoments {
        mean: params.gamma2 * (alpha * i2c + alpha.conj() * ig),
        pseudo_variance: params.gamma2 * i2c,
        variance: params.gamma2 * ig.re,
    })
}

/// Moments of the photocount number `N_t` and of `A(t)`, from derivatives of
/// the generating function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordMoments {
    pub mean_n: f64,
    pub var_n: f64,
    pub mean_a: C64,
    /// `E[|A − E A|²]`.
    pub var_a: f64,
}

/// First two moments of `N_t` and `A(t)`, by fourth-order central
/// differences of `log M` along `η`, real `ξ` and imaginary `ξ`.
pub fn record_moments(init: &dyn StateModel, t: f64, params: &SimParams) -> Result<RecordMoments> {
    let log_m = |xi: C64, eta: f64| -> Result<f64> {
        let m = generating_function(init, &GFQuery::scalar(xi, eta, t)?, params)?;
        Ok(m.re.ln())
    };
    let h = 2e-3;
    let derivs = |f: &dyn Fn(f64) -> Result<f64>| -> Result<(f64, f64)> {
        let (m2, m1, z, p1, p2) = (f(-2.0 * h)?, f(-h)?, f(0.0)?, f(h)?, f(2.0 * h)?);
        let d1 = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
        let d2 = (-p2 + 16.0 * p1 - 30.0 * z + 16.0 * m1 - m2) / (12.0 * h * h);
        Ok((d1, d2))
    };
    let (mean_n, var_n) = derivs(&|s| log_m(ZERO, s))?;
    // ξ = s gives the cumulants of 2 Re A, ξ = i s those of −2 Im A.
    let (dr, d2r) = derivs(&|s| log_m(C64::new(s, 0.0), 0.0))?;
    let (di, d2i) = derivs(&|s| log_m(C64::new(0.0, s), 0.0))?;
    Ok(RecordMoments {
        mean_n,
        var_n,
        mean_a: C64::new(dr / 2.0, -di / 2.0),
        var_a: (d2r + d2i) / 4.0,
    })
}

/// `γ₁(1 − e^{−Γt})/Γ`; equals `γ₁/Γ` at `t = ∞`.
fn count_scale(t: f64, params: &SimParams) -> f64 {
    let g = params.gamma_total();
    if g == 0.0 {
        return params.gamma1 * t;
    }
    if t.is_infinite() {
        params.gamma1 / g
    } else {
        params.gamma1 * (-(-g * t).exp_m1()) / g
    }
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// `e^{−Γt·j}`, with the `t = ∞` limit taken before multiplying.
fn decay_pow(params: &SimParams, t: f64, j: usize) -> f64 {
    if j == 0 {
        1.0
    } else if t.is_infinite() {
        if params.gamma_total() > 0.0 {
            0.0
        } else {
            1.0
        }
    } else {
        (-params.gamma_total() * t * j as f64).exp()
    }
}

/// Coefficients `c_k` of `exp(Az + Bz²) = Σ c_k z^k`.
pub fn lowering_coefficients(a: C64, b: C64, n: usize) -> Vec<C64> {
    let mut c = vec![ZERO; n];
    if n == 0 {
        return c;
    }
    c[0] = C64::new(1.0, 0.0);
    for k in 1..n {
        let mut v = a * c[k - 1];
        if k >= 2 {
            v += 2.0 * b * c[k - 2];
        }
        c[k] = v / k as f64;
    }
    c
}

/// `log p̃_m` of a pure state through the Fock-basis expression
/// `(g^m/m!) Σ_k |φ_k|² k!/(k−m)! e^{−Γt(k−m)}`, `φ = exp(Aâ+Bâ²)ψ₀`.
fn pure_density(psi0: &StateVector, m: usize, acc: &RecordAccumulators, params: &SimParams) -> f64 {
    let phi = exp_lowering(acc.a, acc.b, psi0.amps());
    let mut s = 0.0;
    let mut ratio = 1.0; // k!/((k−m)! m!)
    for (k, v) in phi.iter().enumerate().skip(m) {
        if k > m {
            ratio *= k as f64 / (k - m) as f64;
        }
        s += v.norm_sqr() * ratio * decay_pow(params, acc.t, k - m);
    }
    s * count_scale(acc.t, params).powi(m as i32)
}

fn to_log(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Truncation dimension used for the thermal mixture in density and
/// conditional evaluations: the untruncated tail stays below 1e−16.
fn thermal_dim(nbar: f64, base: usize) -> usize {
    let x = nbar / (1.0 + nbar);
    let need = ((1e-16f64).ln() / x.ln()).ceil() as usize + 2;
    base.max(need).min(2048)
}

/// `log p̃_m(t; W̃)` evaluated generically in the Fock basis from a prepared
/// state. Zero density gives `−∞`.
pub fn joint_density_prepared(
    prep: &PreparedState,
    m: usize,
    acc: &RecordAccumulators,
    params: &SimParams,
) -> Result<f64> {
    let p = match prep {
        PreparedState::Pure(s) => pure_density(s, m, acc, params),
        PreparedState::NumberMixture { weights } => {
            let d = weights.len();
            let mut total = 0.0;
            for (n, w) in weights.iter().enumerate() {
                if *w == 0.0 || n < m {
                    continue;
                }
                total += w * pure_density(&StateVector::basis(n, d)?, m, acc, params);
            }
            total
        }
    };
    Ok(to_log(p))
}

/// `log p̃_m(t; W̃)` through the generic Fock-basis path. Thermal input is
/// expanded to a dimension where its tail is negligible.
pub fn joint_density_pm(
    init: &dyn StateModel,
    m: i64,
    acc: &RecordAccumulators,
    params: &SimParams,
) -> Result<f64> {
    if m < 0 {
        return Err(Error::Domain(format!("photocount number must be >= 0, got {m}")));
    }
    let dim = match init.mean_number() {
        _ if init.name() == "thermal" => thermal_dim(init.mean_number(), params.dim),
        _ => params.dim,
    };
    let prep = init.prepare(dim)?;
    let prep = match prep {
        PreparedState::NumberMixture { .. } => {
            // Untruncated geometric weights; the tail beyond `dim` is below 1e−16.
            let x = init.mean_number() / (1.0 + init.mean_number());
            PreparedState::NumberMixture {
                weights: (0..dim).map(|n| (1.0 - x) * x.powi(n as i32)).collect(),
            }
        }
        p => p,
    };
    joint_density_prepared(&prep, m as usize, acc, params)
}

/// Generic density with the state's specialised closed form evaluated
/// alongside; fails when the two disagree beyond `rel_tol`.
pub fn joint_density_checked(
    init: &dyn StateModel,
    m: i64,
    acc: &RecordAccumulators,
    params: &SimParams,
    rel_tol: f64,
) -> Result<f64> {
    let generic = joint_density_pm(init, m, acc, params)?;
    if let Some(closed) = init.closed_form_log_density(m as usize, acc, params) {
        let closed = closed?;
        let agree = if generic == f64::NEG_INFINITY || closed == f64::NEG_INFINITY {
            generic == closed
        } else {
            (generic - closed).exp_m1().abs() <= rel_tol
        };
        if !agree {
            return Err(Error::OracleMismatch(format!(
                "density paths disagree: generic {generic}, closed form {closed}"
            )));
        }
    }
    Ok(generic)
}

/// Closed form for `|n⟩`:
/// `(g^m/m!) Σ_k |Σ_l A^{k−2l}B^l/((k−2l)! l!)|² n!/(n−m−k)! e^{−Γt(n−m−k)}`.
pub fn number_log_density_closed_form(
    n: usize,
    m: usize,
    acc: &RecordAccumulators,
    params: &SimParams,
) -> f64 {
    if m > n {
        return f64::NEG_INFINITY;
    }
    let mut s = 0.0;
    for k in 0..=(n - m) {
        let mut inner = ZERO;
        for l in 0..=k / 2 {
            let j = k - 2 * l;
            let lf = ln_factorial(j) + ln_factorial(l);
            inner += acc.a.powu(j as u32) * acc.b.powu(l as u32) / lf.exp();
        }
        let ratio = (ln_factorial(n) - ln_factorial(n - m - k)).exp();
        s += inner.norm_sqr() * ratio * decay_pow(params, acc.t, n - m - k);
    }
    to_log(s * count_scale(acc.t, params).powi(m as i32)) - ln_factorial(m)
}

/// Closed form for the thermal state, summing the number-state densities in
/// closed form over the geometric weights:
/// `(1−x)(g^m/m!) Σ_k |c_k|² x^{m+k} (m+k)!/(1−xy)^{m+k+1}`,
/// `x = n̄/(1+n̄)`, `y = e^{−Γt}`.
pub fn thermal_log_density_closed_form(
    nbar: f64,
    m: usize,
    acc: &RecordAccumulators,
    params: &SimParams,
) -> Result<f64> {
    if !(nbar > 0.0) {
        return Err(Error::Domain(format!("thermal nbar must be positive, got {nbar}")));
    }
    let x = nbar / (1.0 + nbar);
    let y = decay_pow(params, acc.t, 1);
    let one_xy = 1.0 - x * y;
    let kmax = 4000;
    let c = lowering_coefficients(acc.a, acc.b, kmax);
    let mut s = 0.0;
    // log of x^{m+k}(m+k)!/(1−xy)^{m+k+1}
    let mut log_term = (m as f64) * x.ln() + ln_factorial(m) - (m as f64 + 1.0) * one_xy.ln();
    for (k, ck) in c.iter().enumerate() {
        if k > 0 {
            log_term += x.ln() + ((m + k) as f64).ln() - one_xy.ln();
        }
        let term = ck.norm_sqr() * log_term.exp();
        s += term;
        if k > 8 && term <= 1e-18 * s && ck.norm_sqr() < 1e-300_f64.max(s * 1e-18) {
            break;
        }
    }
    Ok(to_log((1.0 - x) * s * count_scale(acc.t, params).powi(m as i32)) - ln_factorial(m))
}

/// Marginal photocount distribution `P(m) = E_μ₀[p̃_m]` at time `t`,
/// integrating the density over the Gaussian reference law of `A(t)`
/// (`E[A²] = −2B(t)`, `E|A|² = γ₂(1−e^{−Γt})/Γ`) with a 2-D Gauss–Hermite
/// rule.
pub fn marginal_count_distribution(
    prep: &PreparedState,
    t: f64,
    params: &SimParams,
    m_max: usize,
    nodes: usize,
) -> Result<Vec<f64>> {
    let b = crate::propagators::b_closed_form(t, params);
    let e_aa = -2.0 * b;
    let e_abs = params.gamma2 * exp_integral(C64::new(params.gamma_total(), 0.0), 0.0, t)?.re;
    let sxx = 0.5 * (e_abs + e_aa.re);
    let syy = 0.5 * (e_abs - e_aa.re);
    let sxy = 0.5 * e_aa.im;
    // Cholesky of the covariance of (Re A, Im A).
    let l11 = sxx.max(0.0).sqrt();
    let l21 = if l11 > 0.0 { sxy / l11 } else { 0.0 };
    let l22 = (syy - l21 * l21).max(0.0).sqrt();
    let gh = GaussHermite::new(nodes);
    let norm = std::f64::consts::PI;
    let mut out = vec![0.0; m_max + 1];
    for (z1, w1) in gh.nodes.iter().zip(&gh.weights) {
        for (z2, w2) in gh.nodes.iter().zip(&gh.weights) {
            let (u, v) = (std::f64::consts::SQRT_2 * z1, std::f64::consts::SQRT_2 * z2);
            let a = C64::new(l11 * u, l21 * u + l22 * v);
            let acc = RecordAccumulators { a, b, t };
            let w = w1 * w2 / norm;
            for (m, o) in out.iter_mut().enumerate() {
                *o += w * joint_density_prepared(prep, m, &acc, params)?.exp();
            }
        }
    }
    Ok(out)
}

/// Which side of a photocount the quadrature refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Before,
    After,
}

/// Conditional vectors (with mixture weights) sharing one overall scale.
fn conditional_components(
    prep: &PreparedState,
    m: usize,
    acc: &RecordAccumulators,
    params: &SimParams,
) -> Result<Vec<(f64, StateVector)>> {
    match prep {
        PreparedState::Pure(s) => Ok(vec![(1.0, m_count_vector(s, m, acc, params)?)]),
        PreparedState::NumberMixture { weights } => {
            let d = weights.len();
            let mut out = Vec::new();
            for (n, w) in weights.iter().enumerate() {
                if *w > 0.0 && n >= m {
                    // One spare level keeps the top number state clear of the truncation guard.
                    out.push((*w, m_count_vector(&StateVector::basis(n, d + 1)?, m, acc, params)?));
                }
            }
            Ok(out)
        }
    }
}

/// `⟨â+â†⟩` on the `m`-count conditional state (before the next count) or
/// `⟨â†(â+â†)â⟩/⟨â†â⟩` (after it), by direct expectation.
pub fn conditioned_quadrature_prepared(
    prep: &PreparedState,
    m: usize,
    acc: &RecordAccumulators,
    params: &SimParams,
    side: Side,
) -> Result<f64> {
    let comps = conditional_components(prep, m, acc, params)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (w, v) in &comps {
        let amps = v.amps();
        let d = amps.len();
        match side {
            Side::Before => {
                den += w * v.norm_sqr();
                for k in 0..d - 1 {
                    num += w * 2.0 * (amps[k].conj() * amps[k + 1]).re * ((k + 1) as f64).sqrt();
                }
            }
            Side::After => {
                // â v, then ⟨âv|(â+â†)|âv⟩ and ‖âv‖².
                let av: Vec<C64> =
                    (0..d).map(|k| if k + 1 < d { amps[k + 1] * ((k + 1) as f64).sqrt() } else { ZERO }).collect();
                for k in 0..d {
                    den += w * av[k].norm_sqr();
                    if k + 1 < d {
                        num += w * 2.0 * (av[k].conj() * av[k + 1]).re * ((k + 1) as f64).sqrt();
                    }
                }
            }
        }
    }
    if !(den > 0.0) {
        return Err(Error::UndefinedConditional(match side {
            Side::Before => format!("the {m}-count conditional state vanishes"),
            Side::After => format!("the {m}-count conditional state has no photons"),
        }));
    }
    Ok(num / den)
}

/// Conditioned quadrature for an initial state, prepared at `params.dim`
/// (thermal input at a dimension where its tail is negligible).
pub fn conditioned_quadrature(
    init: &dyn StateModel,
    m: usize,
    acc: &RecordAccumulators,
    params: &SimParams,
    side: Side,
) -> Result<f64> {
    let prep = prepare_for_oracle(init, params)?;
    conditioned_quadrature_prepared(&prep, m, acc, params, side)
}

fn prepare_for_oracle(init: &dyn StateModel, params: &SimParams) -> Result<PreparedState> {
    if init.name() == "thermal" {
        let nbar = init.mean_number();
        let d = thermal_dim(nbar, params.dim);
        Ok(PreparedState::NumberMixture { weights: thermal_weights(nbar, d) })
    } else {
        init.prepare(params.dim)
    }
}

/// Number of the form `x + j·y` with `x, y` ordinary complex numbers and a
/// second imaginary unit `j` commuting with `i`. Evaluating an analytic
/// function at `z + j·h` puts `h·f′(z)` in the `j` part to machine
/// precision, which is how the log-derivative formulas are differentiated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bicomplex {
    pub x: C64,
    pub y: C64,
}

impl Bicomplex {
    pub fn new(x: C64, y: C64) -> Self {
        Bicomplex { x, y }
    }

    pub fn real(x: C64) -> Self {
        Bicomplex { x, y: ZERO }
    }

    fn scale(self, s: C64) -> Self {
        Bicomplex { x: self.x * s, y: self.y * s }
    }
}

impl Add for Bicomplex {
    type Output = Bicomplex;
    fn add(self, o: Bicomplex) -> Bicomplex {
        Bicomplex { x: self.x + o.x, y: self.y + o.y }
    }
}

impl Sub for Bicomplex {
    type Output = Bicomplex;
    fn sub(self, o: Bicomplex) -> Bicomplex {
        Bicomplex { x: self.x - o.x, y: self.y - o.y }
    }
}

impl Mul for Bicomplex {
    type Output = Bicomplex;
    fn mul(self, o: Bicomplex) -> Bicomplex {
        Bicomplex { x: self.x * o.x - self.y * o.y, y: self.x * o.y + self.y * o.x }
    }
}

/// `âᵐ exp(u â + b â²) χ` for a bicomplex `u`.
fn lowered_exp(u: Bicomplex, b: C64, chi: &[C64], m: usize) -> Vec<Bicomplex> {
    let d = chi.len();
    let lower = |v: &[Bicomplex]| -> Vec<Bicomplex> {
        (0..d)
            .map(|k| if k + 1 < d { v[k + 1].scale(C64::new(((k + 1) as f64).sqrt(), 0.0)) } else { Bicomplex::real(ZERO) })
            .collect()
    };
    let mut term: Vec<Bicomplex> = chi.iter().map(|c| Bicomplex::real(*c)).collect();
    let mut result = term.clone();
    let bb = Bicomplex::real(b);
    for j in 1..d {
        let once = lower(&term);
        let twice = lower(&once);
        let inv = C64::new(1.0 / j as f64, 0.0);
        let mut any = false;
        for k in 0..d {
            term[k] = (u * once[k] + bb * twice[k]).scale(inv);
            any |= term[k].x != ZERO || term[k].y != ZERO;
        }
        if !any {
            break;
        }
        for k in 0..d {
            result[k] = result[k] + term[k];
        }
    }
    for _ in 0..m.min(d) {
        result = lower(&result);
    }
    if m >= d {
        return vec![Bicomplex::real(ZERO); d];
    }
    result
}

/// `(∂_u + ∂_v) log F_m(u, v)` at `u = Ã`, `v = Ã*`, where
/// `F_m(u, v) = Σ_n w_n ⟨ψ̄_m(v*)|ψ̄_m(u)⟩` is the conditional overlap with
/// the bra's record variable treated independently, and
/// `ψ̄_m(u) = âᵐ exp(u â + B̃ â²) e^{−(iω+Γ/2)tn̂}ψ₀`.
fn log_derivative(
    chis: &[(f64, Vec<C64>)],
    m: usize,
    a_tilde: C64,
    b_tilde: C64,
) -> Result<f64> {
    let h = 1e-20;
    let u = Bicomplex::new(a_tilde, C64::new(h, 0.0));
    let v = Bicomplex::new(a_tilde.conj(), C64::new(h, 0.0));
    let mut f = Bicomplex::real(ZERO);
    for (w, chi) in chis {
        let ket = lowered_exp(u, b_tilde, chi, m);
        let chi_bar: Vec<C64> = chi.iter().map(|c| c.conj()).collect();
        let bra = lowered_exp(v, b_tilde.conj(), &chi_bar, m);
        for (p, q) in bra.iter().zip(&ket) {
            f = f + (*p * *q).scale(C64::new(*w, 0.0));
        }
    }
    if f.x.norm() == 0.0 {
        return Err(Error::UndefinedConditional(format!(
            "the {m}-count conditional overlap vanishes"
        )));
    }
    Ok((f.y / (f.x * h)).re)
}

/// The conditioned quadrature through the log-derivative formulas: the
/// `Before` value is `(∂_Ã + ∂_Ã*) log F_m` and the `After` value is
/// `(∂_Ã + ∂_Ã*) log ∂_Ã∂_Ã* F_m`, using `∂_Ã∂_Ã* F_m = F_{m+1}`.
pub fn conditioned_quadrature_log_derivative(
    init: &dyn StateModel,
    m: usize,
    acc: &RecordAccumulators,
    params: &SimParams,
    side: Side,
) -> Result<f64> {
    if !acc.t.is_finite() {
        return Err(Error::Domain("log-derivative form needs a finite time".into()));
    }
    let prep = prepare_for_oracle(init, params)?;
    let decay = -params.decay() * acc.t;
    let chis: Vec<(f64, Vec<C64>)> = match &prep {
        PreparedState::Pure(s) => {
            let mut v = s.amps().to_vec();
            crate::fock::apply_number_exp(decay, &mut v);
            vec![(1.0, v)]
        }
        PreparedState::NumberMixture { weights } => weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(n, w)| {
                let mut v = vec![ZERO; weights.len()];
                v[n] = (decay * n as f64).exp();
                (*w, v)
            })
            .collect(),
    };
    let order = match side {
        Side::Before => m,
        Side::After => m + 1,
    };
    log_derivative(&chis, order, acc.a_tilde(params), acc.b_tilde(params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::InitialState;

    fn params(g1: f64, g2: f64, w: f64) -> SimParams {
        SimParams { gamma1: g1, gamma2: g2, omega: w, ..SimParams::default() }
    }

    #[test]
    fn laguerre_values() {
        assert_eq!(laguerre(0, 3.7), 1.0);
        assert_eq!(laguerre(1, 2.0), -1.0);
        // L₂(x) = (x² − 4x + 2)/2
        assert!((laguerre(2, 0.3) - (0.09 - 1.2 + 2.0) / 2.0).abs() < 1e-15);
        let (t, x) = (0.3f64, 0.7f64);
        let sum: f64 = (0..=60).map(|n| t.powi(n) * laguerre(n as usize, x)).sum();
        let want = (-x * t / (1.0 - t)).exp() / (1.0 - t);
        assert!((sum - want).abs() < 1e-10);
    }

    #[test]
    fn laguerre_matches_sum_form() {
        for n in 0..12usize {
            for &x in &[-2.5, -0.1, 0.0, 0.4, 3.0] {
                let mut s = 0.0;
                for m in 0..=n {
                    let c = (ln_factorial(n) - 2.0 * ln_factorial(m) - ln_factorial(n - m)).exp();
                    s += c * (-x as f64).powi(m as i32);
                }
                assert!((laguerre(n, x) - s).abs() < 1e-9 * s.abs().max(1.0), "n={n} x={x}");
            }
        }
    }

    #[test]
    fn kappa_nu_examples() {
        let p = params(1.0, 1.0, 0.0);
        let zero = kappa_nu(&GFQuery::scalar(ZERO, 0.0, 2.0).unwrap(), &p).unwrap();
        assert_eq!(zero.kappa, ZERO);
        assert_eq!(zero.nu, 0.0);
        assert_eq!(zero.log_gauss, 0.0);
        let eta = 0.7;
        let kn = kappa_nu(&GFQuery::scalar(ZERO, eta, f64::INFINITY).unwrap(), &p).unwrap();
        assert!((kn.nu - eta.exp_m1() / 2.0).abs() < 1e-15);
        let xi = C64::new(0.4, -0.3);
        let t = 1.3;
        let kn = kappa_nu(&GFQuery::scalar(xi, 0.0, t).unwrap(), &p).unwrap();
        let f = (1.0 - (-2.0 * t).exp()) / 2.0;
        let want = xi * f + xi.conj() * f;
        assert!((kn.kappa - want).norm() < 1e-15);
    }

    #[test]
    fn kappa_matches_quadrature() {
        let p = params(0.6, 0.8, 1.1);
        let xi = C64::new(0.3, 0.5);
        let t = 2.0;
        let kn = kappa_nu(&GFQuery::scalar(xi, 0.0, t).unwrap(), &p).unwrap();
        let n = 200_000;
        let h = t / n as f64;
        let lam = p.decay() * 2.0;
        let g = p.gamma_total();
        let mut k = ZERO;
        let mut gauss = 0.0;
        for i in 0..n {
            let s = (i as f64 + 0.5) * h;
            k += ((-lam * s).exp() * xi + (-g * s).exp() * xi.conj()) * h;
            let u = xi * (-p.decay() * s).exp();
            gauss += (u + u.conj()).norm_sqr() * h;
        }
        k *= p.gamma2;
        assert!((kn.kappa - k).norm() < 1e-9);
        assert!((kn.log_gauss - 0.5 * p.gamma2 * gauss).abs() < 1e-9);
    }

    #[test]
    fn piecewise_query_splits_additively() {
        let p = params(1.0, 0.5, 0.3);
        let xi = C64::new(0.2, 0.1);
        let whole = kappa_nu(&GFQuery::scalar(xi, 0.4, 3.0).unwrap(), &p).unwrap();
        let q = GFQuery::new(
            vec![Piece { start: 0.0, end: 1.0, value: xi }, Piece { start: 1.0, end: 3.0, value: xi }],
            vec![Piece { start: 0.0, end: 2.0, value: 0.4 }, Piece { start: 2.0, end: 3.0, value: 0.4 }],
            3.0,
        )
        .unwrap();
        let split = kappa_nu(&q, &p).unwrap();
        assert!((whole.kappa - split.kappa).norm() < 1e-14);
        assert!((whole.nu - split.nu).abs() < 1e-14);
        assert!((whole.log_gauss - split.log_gauss).abs() < 1e-14);
        assert!(GFQuery::new(vec![Piece { start: 1.0, end: 0.5, value: xi }], vec![], 3.0).is_err());
    }

    #[test]
    fn normalization_for_all_states() {
        let p = params(1.0, 1.0, 0.0);
        let q = GFQuery::scalar(ZERO, 0.0, 1.0).unwrap();
        for s in [
            InitialState::Coherent { alpha: C64::new(1.0, 0.5) },
            InitialState::Number { n: 3 },
            InitialState::Thermal { nbar: 3.0 },
            InitialState::Squeezed { alpha: C64::new(1.0, 0.0), r: 1.2 },
        ] {
            let m = generating_function(&s, &q, &p).unwrap();
            assert!((m - C64::new(1.0, 0.0)).norm() < 1e-12, "{s:?}");
        }
    }

    #[test]
    fn number_state_counts_are_binomial() {
        let p = params(1.0, 1.0, 0.0);
        let eta = 0.37;
        let q = GFQuery::scalar(ZERO, eta, f64::INFINITY).unwrap();
        let m = generating_function(&InitialState::Number { n: 3 }, &q, &p).unwrap();
        assert!((m.re - (1.0 + eta.exp_m1() / 2.0).powi(3)).abs() < 1e-13);
    }

    #[test]
    fn thermal_pole() {
        let p = params(1.0, 1.0, 0.0);
        let q = GFQuery::scalar(ZERO, 3.0, f64::INFINITY).unwrap();
        let r = generating_function(&InitialState::Thermal { nbar: 3.0 }, &q, &p);
        assert!(matches!(r, Err(Error::Divergence(_))));
    }

    #[test]
    fn closed_forms_match_dense_normal_expectation() {
        let cases = [
            InitialState::Coherent { alpha: C64::new(0.8, -0.3) },
            InitialState::Number { n: 4 },
            InitialState::Thermal { nbar: 1.5 },
        ];
        for s in cases {
            // (1+ν)ⁿ widens the thermal tail, so the mixture needs more levels.
            let d = if let InitialState::Thermal { .. } = s { 200 } else { 40 };
            let prep = match s {
                InitialState::Thermal { nbar } => {
                    let x = nbar / (1.0 + nbar);
                    PreparedState::NumberMixture {
                        weights: (0..d).map(|n| (1.0 - x) * x.powi(n as i32)).collect(),
                    }
                }
                _ => s.prepare(d).unwrap(),
            };
            for &(k, nu) in &[(C64::new(0.2, 0.1), 0.3), (C64::new(-0.1, 0.4), -0.4)] {
                let closed = s.normal_expectation(k, nu).unwrap();
                let dense = normal_expectation_dense(&prep, k, nu);
                assert!((closed - dense).norm() < 1e-10 * closed.norm(), "{s:?}: {closed} vs {dense}");
            }
        }
    }

    #[test]
    fn coherent_factorizes() {
        let p = params(1.0, 1.0, 0.4);
        let s = InitialState::Coherent { alpha: C64::new(0.7, 0.2) };
        let xi = C64::new(0.3, -0.2);
        let both = generating_function(&s, &GFQuery::scalar(xi, 0.5, 1.0).unwrap(), &p).unwrap();
        let a = generating_function(&s, &GFQuery::scalar(xi, 0.0, 1.0).unwrap(), &p).unwrap();
        let b = generating_function(&s, &GFQuery::scalar(ZERO, 0.5, 1.0).unwrap(), &p).unwrap();
        assert!((both - a * b).norm() < 1e-12 * both.norm());
    }

    #[test]
    fn coherent_moments() {
        let p = params(1.0, 1.0, 0.0);
        let m = coherent_homodyne_moments(ZERO, &p, 1.0).unwrap();
        assert_eq!(m.mean, ZERO);
        let m = coherent_homodyne_moments(C64::new(1.0, 0.0), &p, f64::INFINITY).unwrap();
        assert!((m.mean - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((m.variance - 0.5).abs() < 1e-15);
        // At ω = 0 the integral is real, so both second moments agree.
        assert!((m.pseudo_variance.re - m.variance).abs() < 1e-15);
    }

    #[test]
    fn record_moments_from_generating_function() {
        let p = params(1.0, 1.0, 0.0);
        let n = 3;
        let r = record_moments(&InitialState::Number { n }, f64::INFINITY, &p).unwrap();
        assert!((r.mean_n - 1.5).abs() < 1e-8);
        assert!((r.var_n - 0.75).abs() < 1e-6);
        let alpha = C64::new(0.6, 0.3);
        let p = params(0.5, 1.0, 0.7);
        let r = record_moments(&InitialState::Coherent { alpha }, 1.2, &p).unwrap();
        let m = coherent_homodyne_moments(alpha, &p, 1.2).unwrap();
        assert!((r.mean_a - m.mean).norm() < 1e-8);
        assert!((r.var_a - m.variance).abs() < 1e-6);
    }

    #[test]
    fn density_examples() {
        let p = params(1.0, 1.0, 0.0);
        let acc = RecordAccumulators::at(C64::new(0.3, 0.1), 0.8, &p);
        let vac = InitialState::Number { n: 0 };
        assert!(joint_density_pm(&vac, 0, &acc, &p).unwrap().abs() < 1e-15);
        let two = InitialState::Number { n: 2 };
        assert_eq!(joint_density_pm(&two, 3, &acc, &p).unwrap(), f64::NEG_INFINITY);
        assert!(matches!(joint_density_pm(&two, -1, &acc, &p), Err(Error::Domain(_))));
        let inf = RecordAccumulators::at(ZERO, f64::INFINITY, &p);
        let acc0 = RecordAccumulators { b: ZERO, ..inf };
        let one = InitialState::Number { n: 1 };
        assert_eq!(joint_density_pm(&one, 0, &acc0, &p).unwrap(), f64::NEG_INFINITY);
        assert!((joint_density_pm(&one, 1, &acc0, &p).unwrap().exp() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn number_density_paths_agree() {
        let p = params(0.7, 1.1, 0.4);
        for n in 0..=4usize {
            for (i, &(a, t)) in [(C64::new(0.3, -0.2), 0.5), (C64::new(-1.1, 0.6), 2.0), (C64::new(0.05, 0.0), f64::INFINITY)]
                .iter()
                .enumerate()
            {
                let acc = RecordAccumulators::at(a, t, &p);
                for m in 0..=5i64 {
                    let s = InitialState::Number { n };
                    let v = joint_density_checked(&s, m, &acc, &p, 1e-10);
                    assert!(v.is_ok(), "n={n} m={m} case {i}: {v:?}");
                }
            }
        }
    }

    #[test]
    fn thermal_density_paths_agree() {
        let p = params(1.0, 1.0, 0.0);
        let s = InitialState::Thermal { nbar: 2.0 };
        for &(a, t) in &[(C64::new(0.4, 0.0), 0.7), (C64::new(-0.8, 0.0), 3.0)] {
            let acc = RecordAccumulators::at(a, t, &p);
            for m in 0..4 {
                joint_density_checked(&s, m, &acc, &p, 1e-8).unwrap();
            }
        }
    }

    #[test]
    fn number_marginal_matches_generating_function() {
        let p = SimParams { dim: 8, ..params(1.0, 1.0, 0.0) };
        let n = 3;
        let prep = InitialState::Number { n }.prepare(8).unwrap();
        let t = 1.3;
        let probs = marginal_count_distribution(&prep, t, &p, 5, 12).unwrap();
        for eta in [-0.5, 0.2, 0.9] {
            let lhs: f64 = probs.iter().enumerate().map(|(m, q)| (eta * m as f64).exp() * q).sum();
            let gf = generating_function(&InitialState::Number { n }, &GFQuery::scalar(ZERO, eta, t).unwrap(), &p)
                .unwrap();
            assert!((lhs - gf.re).abs() < 1e-6, "eta={eta}: {lhs} vs {gf}");
        }
    }

    #[test]
    fn bicomplex_step_differentiates() {
        // f(z) = z³ at z = 0.3+0.2i, f′ = 3z².
        let z = C64::new(0.3, 0.2);
        let h = 1e-20;
        let u = Bicomplex::new(z, C64::new(h, 0.0));
        let f = u * u * u;
        assert!((f.y / h - 3.0 * z * z).norm() < 1e-15);
    }

    #[test]
    fn quadrature_paths_agree() {
        let p = params(1.0, 1.0, 0.3);
        let acc = RecordAccumulators::at(C64::new(0.2, -0.1), 0.6, &p);
        let states = [
            InitialState::Coherent { alpha: C64::new(0.9, 0.4) },
            InitialState::Number { n: 3 },
            InitialState::Thermal { nbar: 1.0 },
            InitialState::Squeezed { alpha: C64::new(1.0, 0.0), r: 0.5 },
        ];
        let p = SimParams { dim: 60, ..p };
        for s in states {
            for m in 0..3 {
                for side in [Side::Before, Side::After] {
                    let d = conditioned_quadrature(&s, m, &acc, &p, side);
                    let o = conditioned_quadrature_log_derivative(&s, m, &acc, &p, side);
                    match (d, o) {
                        (Ok(d), Ok(o)) => assert!((d - o).abs() < 1e-9, "{s:?} m={m} {side:?}: {d} vs {o}"),
                        (Err(_), Err(_)) => {}
                        other => panic!("{s:?} m={m} {side:?}: {other:?}"),
                    }
                }
            }
        }
    }

    #[test]
    fn quadrature_examples() {
        let p = SimParams { dim: 40, ..params(1.0, 1.0, 0.0) };
        let acc = RecordAccumulators::at(C64::new(0.4, 0.2), 0.9, &p);
        let coh = InitialState::Coherent { alpha: C64::new(1.0, 0.5) };
        for m in 0..3 {
            let b = conditioned_quadrature(&coh, m, &acc, &p, Side::Before).unwrap();
            let a = conditioned_quadrature(&coh, m, &acc, &p, Side::After).unwrap();
            assert!((a - b).abs() < 1e-10);
        }
        let zero = RecordAccumulators { t: 0.5, ..RecordAccumulators::zero() };
        let one = InitialState::Number { n: 1 };
        assert_eq!(conditioned_quadrature(&one, 0, &zero, &p, Side::Before).unwrap(), 0.0);
        let r = conditioned_quadrature(&one, 2, &zero, &p, Side::Before);
        assert!(matches!(r, Err(Error::UndefinedConditional(_))));
        let r = conditioned_quadrature(&one, 1, &zero, &p, Side::After);
        assert!(matches!(r, Err(Error::UndefinedConditional(_))));
    }
}
