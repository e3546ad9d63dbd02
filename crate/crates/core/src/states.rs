//! Initial-state families and the name-keyed registry that selects them.
//!
//! Every family implements [`StateModel`]: it knows how to build itself in a
//! truncated Fock space, its mean photon number, and the normally-ordered
//! expectation `⟨ψ₀|:exp(κâ + κ*â† + νâ†â):|ψ₀⟩` that feeds the generating
//! function. Families are registered by name so the command line can pick one
//! from a string such as `squeezed:alpha=1+0i,r=1.2`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analytics;
use crate::error::{Error, Result};
use crate::fock::{expm_apply, StateVector, C64};
use crate::params::SimParams;
use crate::propagators::RecordAccumulators;
use crate::squeezed;

/// Pre-renormalization leakage above which a constructed state is rejected.
pub const CONSTRUCTION_LEAKAGE_LIMIT: f64 = 1e-8;
/// Leakage targeted when choosing a default truncation dimension.
pub const DEFAULT_DIM_LEAKAGE: f64 = 1e-10;
const MAX_DEFAULT_DIM: usize = 512;

/// The four initial states, as plain data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialState {
    Coherent { alpha: C64 },
    Number { n: usize },
    /// Thermal state with mean occupation `nbar = 1/(e^{βω} − 1)`.
    Thermal { nbar: f64 },
    Squeezed { alpha: C64, r: f64 },
}

impl InitialState {
    /// Thermal state from the product `βω`.
    pub fn thermal_from_beta_omega(beta_omega: f64) -> Result<Self> {
        if !(beta_omega > 0.0) {
            return Err(Error::Domain(format!("βω must be positive, got {beta_omega}")));
        }
        Ok(InitialState::Thermal { nbar: 1.0 / beta_omega.exp_m1() })
    }

    /// Thermal state whose weights, truncated to `dim` levels and renormalized,
    /// have mean exactly `mean`.
    pub fn thermal_with_truncated_mean(mean: f64, dim: usize) -> Result<Self> {
        if !(mean > 0.0 && mean < (dim - 1) as f64 / 2.0) {
            return Err(Error::Domain(format!(
                "truncated thermal mean {mean} not reachable at dimension {dim}"
            )));
        }
        let truncated_mean = |nbar: f64| {
            let w = thermal_weights(nbar, dim);
            w.iter().enumerate().map(|(k, p)| k as f64 * p).sum::<f64>()
        };
        let (mut lo, mut hi) = (mean * 0.5, mean * 4.0 + 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if truncated_mean(mid) < mean {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(InitialState::Thermal { nbar: 0.5 * (lo + hi) })
    }

    pub fn model(&self) -> &dyn StateModel {
        self
    }
}

/// A state ready for simulation: either one pure vector or a classical
/// mixture of number states.
#[derive(Debug, Clone, PartialEq)]
pub enum PreparedState {
    Pure(StateVector),
    /// Weight of `|n⟩` at index `n`, summing to one.
    NumberMixture { weights: Vec<f64> },
}

impl PreparedState {
    pub fn dim(&self) -> usize {
        match self {
            PreparedState::Pure(s) => s.dim(),
            PreparedState::NumberMixture { weights } => weights.len(),
        }
    }

    pub fn mean_number(&self) -> f64 {
        match self {
            PreparedState::Pure(s) => s.mean_number(),
            PreparedState::NumberMixture { weights } => {
                weights.iter().enumerate().map(|(k, w)| k as f64 * w).sum()
            }
        }
    }

    pub fn as_pure(&self) -> Option<&StateVector> {
        match self {
            PreparedState::Pure(s) => Some(s),
            _ => None,
        }
    }
}

/// Behaviour shared by every initial-state family.
pub trait StateModel: fmt::Debug + Send + Sync {
    /// Registry name of the family.
    fn name(&self) -> &'static str;

    /// Round-trippable description, e.g. `number:n=3`.
    fn describe(&self) -> String;

    /// `⟨n̂⟩₀` of the untruncated state.
    fn mean_number(&self) -> f64;

    fn prepare(&self, dim: usize) -> Result<PreparedState>;

    /// `⟨ψ₀|:exp(κâ + κ*â† + νâ†â):|ψ₀⟩` in closed form.
    fn normal_expectation(&self, kappa: C64, nu: f64) -> Result<C64>;

    /// Smallest dimension from the rule-of-thumb formula.
    fn formula_dim(&self) -> usize {
        formula_dim(self.mean_number())
    }

    /// Default truncation dimension.
    fn default_dim(&self) -> usize {
        self.formula_dim()
    }

    /// Displacement of a coherent family, used by the Gaussian homodyne
    /// moment oracle.
    fn coherent_amplitude(&self) -> Option<C64> {
        None
    }

    /// Specialised closed form of `log p̃_m(t; W̃)`, when the family has one.
    fn closed_form_log_density(
        &self,
        _m: usize,
        _acc: &RecordAccumulators,
        _params: &SimParams,
    ) -> Option<Result<f64>> {
        None
    }
}

/// `max(32, ⌈4(⟨n⟩+1)⌉ + 8⌈√(⟨n⟩+1)⌉)`.
pub fn formula_dim(mean: f64) -> usize {
    let m = mean.max(0.0) + 1.0;
    let d = (4.0 * m).ceil() as usize + 8 * (m.sqrt().ceil() as usize);
    d.max(32)
}

/// Grows from the formula dimension until the state's truncation loss is
/// below [`DEFAULT_DIM_LEAKAGE`].
fn adaptive_dim(start: usize, leak: impl Fn(usize) -> f64) -> usize {
    let mut d = start;
    while d < MAX_DEFAULT_DIM && leak(d) > DEFAULT_DIM_LEAKAGE {
        d += 8;
    }
    d
}

impl StateModel for InitialState {
    fn name(&self) -> &'static str {
        match self {
            InitialState::Coherent { .. } => "coherent",
            InitialState::Number { .. } => "number",
            InitialState::Thermal { .. } => "thermal",
            InitialState::Squeezed { .. } => "squeezed",
        }
    }

    fn describe(&self) -> String {
        match *self {
            InitialState::Coherent { alpha } => format!("coherent:alpha={}", fmt_complex(alpha)),
            InitialState::Number { n } => format!("number:n={n}"),
            InitialState::Thermal { nbar } => format!("thermal:nbar={nbar}"),
            InitialState::Squeezed { alpha, r } => {
                format!("squeezed:alpha={},r={r}", fmt_complex(alpha))
            }
        }
    }

    fn mean_number(&self) -> f64 {
        match *self {
            InitialState::Coherent { alpha } => alpha.norm_sqr(),
            InitialState::Number { n } => n as f64,
            InitialState::Thermal { nbar } => nbar,
            InitialState::Squeezed { alpha, r } => alpha.norm_sqr() + r.sinh().powi(2),
        }
    }

    fn default_dim(&self) -> usize {
        let start = self.formula_dim();
        match *self {
            InitialState::Coherent { alpha } => {
                adaptive_dim(start, |d| coherent_raw(alpha, d).1)
            }
            InitialState::Squeezed { alpha, r } => {
                adaptive_dim(start, |d| squeezed_raw(alpha, r, d).map(|x| x.1).unwrap_or(1.0))
            }
            InitialState::Number { n } => start.max(n + 1),
            InitialState::Thermal { nbar } => {
                // Top-level weight of the renormalized truncated mixture.
                adaptive_dim(start, |d| thermal_weights(nbar, d)[d - 1])
            }
        }
    }

    fn prepare(&self, dim: usize) -> Result<PreparedState> {
        if dim < 2 {
            return Err(Error::Dimension(format!("dimension must be >= 2, got {dim}")));
        }
        match *self {
            InitialState::Coherent { alpha } => {
                let (amps, leakage) = coherent_raw(alpha, dim);
                check_leakage(leakage, dim)?;
                Ok(PreparedState::Pure(StateVector::new(amps)?.normalized()?))
            }
            InitialState::Number { n } => Ok(PreparedState::Pure(StateVector::basis(n, dim)?)),
            InitialState::Thermal { nbar } => {
                if !(nbar > 0.0 && nbar.is_finite()) {
                    return Err(Error::Domain(format!("thermal nbar must be positive, got {nbar}")));
                }
                Ok(PreparedState::NumberMixture { weights: thermal_weights(nbar, dim) })
            }
            InitialState::Squeezed { alpha, r } => {
                let (amps, leakage) = squeezed_raw(alpha, r, dim)?;
                check_leakage(leakage, dim)?;
                Ok(PreparedState::Pure(StateVector::new(amps)?.normalized()?))
            }
        }
    }

    fn normal_expectation(&self, kappa: C64, nu: f64) -> Result<C64> {
        match *self {
            InitialState::Coherent { alpha } => {
                Ok((kappa * alpha + kappa.conj() * alpha.conj() + nu * alpha.norm_sqr()).exp())
            }
            InitialState::Number { n } => {
                let one_nu = 1.0 + nu;
                if one_nu.abs() < 1e-300 {
                    // Only the fully-annihilated term survives.
                    let mut fact = 1.0;
                    for k in 1..=n {
                        fact *= k as f64;
                    }
                    return Ok(C64::new(kappa.norm_sqr().powi(n as i32) / fact, 0.0));
                }
                let lag = analytics::laguerre(n, -kappa.norm_sqr() / one_nu);
                Ok(C64::new(one_nu.powi(n as i32) * lag, 0.0))
            }
            InitialState::Thermal { nbar } => {
                let gap = 1.0 / nbar - nu;
                if gap <= 0.0 {
                    return Err(Error::Divergence(format!(
                        "thermal pole: ν = {nu} >= e^(βω) − 1 = {}",
                        1.0 / nbar
                    )));
                }
                Ok(C64::new((1.0 / nbar) / gap * (kappa.norm_sqr() / gap).exp(), 0.0))
            }
            InitialState::Squeezed { alpha, r } => {
                squeezed::squeezed_normal_expectation(alpha, r, kappa, nu)
            }
        }
    }

    fn coherent_amplitude(&self) -> Option<C64> {
        match *self {
            InitialState::Coherent { alpha } => Some(alpha),
            _ => None,
        }
    }

    fn closed_form_log_density(
        &self,
        m: usize,
        acc: &RecordAccumulators,
        params: &SimParams,
    ) -> Option<Result<f64>> {
        match *self {
            InitialState::Number { n } => {
                Some(Ok(analytics::number_log_density_closed_form(n, m, acc, params)))
            }
            InitialState::Thermal { nbar } => {
                Some(analytics::thermal_log_density_closed_form(nbar, m, acc, params))
            }
            _ => None,
        }
    }
}

fn check_leakage(leakage: f64, dim: usize) -> Result<()> {
    if leakage > CONSTRUCTION_LEAKAGE_LIMIT {
        return Err(Error::Leakage { leakage, limit: CONSTRUCTION_LEAKAGE_LIMIT, dim });
    }
    Ok(())
}

/// Truncated coherent amplitudes and the norm lost to truncation.
fn coherent_raw(alpha: C64, dim: usize) -> (Vec<C64>, f64) {
    let mut amps = Vec::with_capacity(dim);
    let mut a = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    amps.push(a);
    for k in 1..dim {
        a = a * alpha / (k as f64).sqrt();
        amps.push(a);
    }
    let kept: f64 = amps.iter().map(|x| x.norm_sqr()).sum();
    (amps, (1.0 - kept).max(0.0))
}

/// Squeezed vacuum `S(r)|0⟩` from the disentangled form of the squeeze
/// operator: only even levels, `(−tanh r / 2)^k √((2k)!)/k! / √cosh r`.
pub fn squeezed_vacuum_amplitudes(r: f64, dim: usize) -> Vec<C64> {
    let t = r.tanh();
    let mut amps = vec![C64::new(0.0, 0.0); dim];
    let mut c = 1.0 / r.cosh().sqrt();
    let mut k = 0;
    while 2 * k < dim {
        amps[2 * k] = C64::new(c, 0.0);
        // c_{k+1}/c_k = (−t/2)·√((2k+1)(2k+2))/(k+1)
        let kk = k as f64;
        c *= -0.5 * t * ((2.0 * kk + 1.0) * (2.0 * kk + 2.0)).sqrt() / (kk + 1.0);
        k += 1;
    }
    amps
}

/// `D(α)S(r)|0⟩` truncated to `dim` levels, and the norm lost to truncation.
fn squeezed_raw(alpha: C64, r: f64, dim: usize) -> Result<(Vec<C64>, f64)> {
    if !r.is_finite() || !alpha.re.is_finite() || !alpha.im.is_finite() {
        return Err(Error::Domain("squeezed-state parameters must be finite".into()));
    }
    let work = dim + (dim / 2).max(40);
    let vac = squeezed_vacuum_amplitudes(r, work);
    let sq: Vec<f64> = (0..work).map(|k| (k as f64).sqrt()).collect();
    let displaced = if alpha == C64::new(0.0, 0.0) {
        vac
    } else {
        // (α â† − α* â) as a banded action.
        let gen = |x: &[C64], out: &mut [C64]| {
            let n = x.len();
            for k in 0..n {
                let mut v = C64::new(0.0, 0.0);
                if k > 0 {
                    v += alpha * sq[k] * x[k - 1];
                }
                if k + 1 < n {
                    v -= alpha.conj() * sq[k + 1] * x[k + 1];
                }
                out[k] = v;
            }
        };
        expm_apply(gen, 2.0 * alpha.norm() * (work as f64).sqrt(), &vac)
    };
    let amps: Vec<C64> = displaced[..dim].to_vec();
    let kept: f64 = amps.iter().map(|x| x.norm_sqr()).sum();
    Ok((amps, (1.0 - kept).max(0.0)))
}

/// Geometric weights `∝ (n̄/(1+n̄))^n` on `0..dim`, renormalized.
pub fn thermal_weights(nbar: f64, dim: usize) -> Vec<f64> {
    let x = nbar / (1.0 + nbar);
    let mut w: Vec<f64> = (0..dim).map(|n| x.powi(n as i32)).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// `make_state`: builds the initial state in a `dim`-level truncation.
pub fn make_state(init: &dyn StateModel, dim: usize) -> Result<PreparedState> {
    init.prepare(dim)
}

/// Parsed `key=value` parameters of a state description.
pub type ParamMap = BTreeMap<String, String>;

/// Factory turning parameters into a state model.
pub type StateFactory = fn(&ParamMap) -> Result<Arc<dyn StateModel>>;

/// Name-keyed registry of initial-state families.
#[derive(Clone)]
pub struct StateRegistry {
    factories: BTreeMap<&'static str, StateFactory>,
}

impl Default for StateRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl StateRegistry {
    pub fn empty() -> Self {
        StateRegistry { factories: BTreeMap::new() }
    }

    /// Registry holding `coherent`, `number`, `thermal` and `squeezed`.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("coherent", |p| {
            Ok(Arc::new(InitialState::Coherent { alpha: complex_param(p, "alpha")? }))
        });
        r.register("number", |p| {
            let n = required(p, "n")?
                .parse::<usize>()
                .map_err(|e| Error::Config(format!("number: bad n: {e}")))?;
            Ok(Arc::new(InitialState::Number { n }))
        });
        r.register("thermal", |p| {
            let state = match (p.get("nbar"), p.get("beta_omega")) {
                (Some(v), None) => InitialState::Thermal { nbar: real(v, "nbar")? },
                (None, Some(v)) => InitialState::thermal_from_beta_omega(real(v, "beta_omega")?)?,
                _ => {
                    return Err(Error::Config(
                        "thermal: give exactly one of nbar= or beta_omega=".into(),
                    ))
                }
            };
            Ok(Arc::new(state))
        });
        r.register("squeezed", |p| {
            Ok(Arc::new(InitialState::Squeezed {
                alpha: complex_param(p, "alpha")?,
                r: real(required(p, "r")?, "r")?,
            }))
        });
        r
    }

    pub fn register(&mut self, name: &'static str, factory: StateFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    /// Parses `name:key=value,key=value`.
    pub fn parse(&self, spec: &str) -> Result<Arc<dyn StateModel>> {
        let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let name = name.trim().to_ascii_lowercase();
        let factory = self.factories.get(name.as_str()).ok_or_else(|| {
            Error::Config(format!(
                "unknown initial state '{name}' (known: {})",
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        let mut params = ParamMap::new();
        for kv in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got '{kv}'")))?;
            params.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
        }
        factory(&params)
    }
}

fn required<'a>(p: &'a ParamMap, key: &str) -> Result<&'a str> {
    p.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Config(format!("missing parameter '{key}'")))
}

fn real(v: &str, key: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|e| Error::Config(format!("bad value for {key}: '{v}' ({e})")))
}

fn complex_param(p: &ParamMap, key: &str) -> Result<C64> {
    parse_complex(required(p, key)?)
}

/// Parses `1`, `-0.5`, `2i`, `1+0i`, `0.3-1.2i`, `1e-3+2e-1i`.
pub fn parse_complex(s: &str) -> Result<C64> {
    let s = s.trim();
    let bad = || Error::Config(format!("cannot parse complex number '{s}'"));
    if s.is_empty() {
        return Err(bad());
    }
    let Some(body) = s.strip_suffix('i').or_else(|| s.strip_suffix('j')) else {
        return s.parse::<f64>().map(|re| C64::new(re, 0.0)).map_err(|_| bad());
    };
    // Split at the last sign that is not at the start and not part of an exponent.
    let bytes = body.as_bytes();
    let mut split = None;
    for i in (1..bytes.len()).rev() {
        if (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E') {
            split = Some(i);
            break;
        }
    }
    let imag = |t: &str| -> Result<f64> {
        match t {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => t.parse::<f64>().map_err(|_| bad()),
        }
    };
    match split {
        Some(i) => {
            let re = body[..i].parse::<f64>().map_err(|_| bad())?;
            Ok(C64::new(re, imag(&body[i..])?))
        }
        None => Ok(C64::new(0.0, imag(body)?)),
    }
}

pub fn fmt_complex(z: C64) -> String {
    if z.im < 0.0 || (z.im == 0.0 && z.im.is_sign_negative()) {
        format!("{}-{}i", z.re, -z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{expect, make_ladder, make_number};

    fn pure(s: InitialState, d: usize) -> StateVector {
        s.prepare(d).unwrap().as_pure().unwrap().clone()
    }

    #[test]
    fn coherent_zero_is_vacuum() {
        let s = pure(InitialState::Coherent { alpha: C64::new(0.0, 0.0) }, 8);
        assert_eq!(s, StateVector::vacuum(8).unwrap());
    }

    #[test]
    fn number_state_is_basis_vector() {
        let s = pure(InitialState::Number { n: 3 }, 8);
        assert_eq!(s, StateVector::basis(3, 8).unwrap());
        assert!(matches!(
            InitialState::Number { n: 8 }.prepare(8),
            Err(Error::Truncation(_))
        ));
    }

    #[test]
    fn coherent_expectations() {
        let s = pure(InitialState::Coherent { alpha: C64::new(1.0, 0.0) }, 30);
        let a = make_ladder(30).unwrap();
        let n = make_number(30).unwrap();
        assert!((expect(&s, &a).unwrap() - C64::new(1.0, 0.0)).norm() < 1e-10);
        let n2 = &n * &n;
        // ⟨n²⟩ = |α|⁴ + |α|² by normal ordering.
        assert!((expect(&s, &n2).unwrap().re - 2.0).abs() < 1e-8);
        assert!((expect(&pure(InitialState::Number { n: 3 }, 8), &make_number(8).unwrap())
            .unwrap()
            .re
            - 3.0)
            .abs()
            < 1e-15);
    }

    #[test]
    fn coherent_leakage_guard() {
        let r = InitialState::Coherent { alpha: C64::new(3.0, 0.0) }.prepare(10);
        assert!(matches!(r, Err(Error::Leakage { .. })));
    }

    #[test]
    fn squeezed_vacuum_has_only_even_levels() {
        let s = pure(InitialState::Squeezed { alpha: C64::new(0.0, 0.0), r: 1.2 }, 140);
        for (k, a) in s.amps().iter().enumerate() {
            if k % 2 == 1 {
                assert_eq!(*a, C64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn squeezed_mean_number() {
        let st = InitialState::Squeezed { alpha: C64::new(1.0, 0.0), r: 1.2 };
        let d = st.default_dim();
        let s = pure(st, d);
        assert!((s.mean_number() - st.mean_number()).abs() < 1e-8, "{}", s.mean_number());
        assert!(s.leakage() < 1e-10);
    }

    #[test]
    fn squeezed_rejects_short_truncation() {
        let st = InitialState::Squeezed { alpha: C64::new(1.0, 0.0), r: 1.2 };
        assert!(matches!(st.prepare(42), Err(Error::Leakage { .. })));
    }

    #[test]
    fn thermal_weights_geometric() {
        let w = thermal_weights(3.0, 32);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for k in 1..32 {
            assert!((w[k] / w[k - 1] - 0.75).abs() < 1e-12);
        }
        let st = InitialState::thermal_with_truncated_mean(3.0, 32).unwrap();
        let p = st.prepare(32).unwrap();
        assert!((p.mean_number() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn thermal_beta_omega() {
        let st = InitialState::thermal_from_beta_omega(2f64.ln()).unwrap();
        assert_eq!(st, InitialState::Thermal { nbar: 1.0 / (2.0 - 1.0) });
    }

    #[test]
    fn default_dim_formula() {
        assert_eq!(formula_dim(3.0), 32);
        assert_eq!(formula_dim(0.0), 32);
        assert_eq!(formula_dim(24.0), 100 + 40);
        assert_eq!(InitialState::Number { n: 3 }.default_dim(), 32);
    }

    #[test]
    fn registry_parses_cli_strings() {
        let reg = StateRegistry::builtin();
        let s = reg.parse("coherent:alpha=1+0i").unwrap();
        assert_eq!(s.describe(), "coherent:alpha=1+0i");
        assert_eq!(reg.parse("number:n=3").unwrap().mean_number(), 3.0);
        assert_eq!(reg.parse("thermal:nbar=3").unwrap().mean_number(), 3.0);
        let sq = reg.parse("squeezed:alpha=1+0i,r=1.2").unwrap();
        assert_eq!(sq.name(), "squeezed");
        assert!(matches!(reg.parse("cat:alpha=1"), Err(Error::Config(_))));
        assert!(matches!(reg.parse("number"), Err(Error::Config(_))));
        assert!(matches!(reg.parse("thermal:nbar=1,beta_omega=1"), Err(Error::Config(_))));
    }

    #[test]
    fn registry_accepts_custom_family() {
        let mut reg = StateRegistry::builtin();
        reg.register("vacuum", |_| Ok(Arc::new(InitialState::Number { n: 0 })));
        assert_eq!(reg.parse("vacuum").unwrap().mean_number(), 0.0);
        assert!(reg.names().any(|n| n == "vacuum"));
    }

    #[test]
    fn complex_parsing() {
        assert_eq!(parse_complex("1+0i").unwrap(), C64::new(1.0, 0.0));
        assert_eq!(parse_complex("0.3-1.2i").unwrap(), C64::new(0.3, -1.2));
        assert_eq!(parse_complex("2i").unwrap(), C64::new(0.0, 2.0));
        assert_eq!(parse_complex("-i").unwrap(), C64::new(0.0, -1.0));
        assert_eq!(parse_complex("-1.5").unwrap(), C64::new(-1.5, 0.0));
        assert_eq!(parse_complex("1e-3+2e-1i").unwrap(), C64::new(1e-3, 0.2));
        assert_eq!(parse_complex("1e+2-3i").unwrap(), C64::new(100.0, -3.0));
        assert!(parse_complex("abc").is_err());
        assert_eq!(parse_complex(&fmt_complex(C64::new(0.1, -0.7))).unwrap(), C64::new(0.1, -0.7));
    }
}
