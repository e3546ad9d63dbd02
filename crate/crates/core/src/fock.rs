//! Truncated Fock-space linear algebra.
//!
//! States are amplitude vectors over `|0⟩ … |D−1⟩`; operators are dense
//! row-major `D×D` complex matrices. The ladder operator, the number operator
//! and every measurement operator used by the simulator are lower-band in the
//! Fock basis (they never raise the photon number), which the helpers at the
//! bottom of this module exploit.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Complex amplitudes over a truncated Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amps: Vec<C64>,
}

impl StateVector {
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        if amps.len() < 2 {
            return Err(Error::Dimension(format!(
                "state dimension must be >= 2, got {}",
                amps.len()
            )));
        }
        Ok(StateVector { amps })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![ZERO; dim])
    }

    /// Number state `|n⟩`.
    pub fn basis(n: usize, dim: usize) -> Result<Self> {
        if n >= dim {
            return Err(Error::Truncation(format!(
                "number state |{n}> does not fit in dimension {dim}"
            )));
        }
        let mut s = Self::zeros(dim)?;
        s.amps[n] = ONE;
        Ok(s)
    }

    pub fn vacuum(dim: usize) -> Result<Self> {
        Self::basis(0, dim)
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn amps_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amps(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_sqr() - 1.0).abs() <= tol
    }

    pub fn normalize(&mut self) -> Result<f64> {
        let n2 = self.norm_sqr();
        if !(n2 > 0.0 && n2.is_finite()) {
            return Err(Error::Domain(format!("cannot normalize a state with norm² = {n2}")));
        }
        let s = 1.0 / n2.sqrt();
        self.amps.iter_mut().for_each(|a| *a *= s);
        Ok(n2)
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    /// Population of the highest retained level, relative to the norm.
    pub fn leakage(&self) -> f64 {
        let n2 = self.norm_sqr();
        if n2 == 0.0 {
            return 0.0;
        }
        self.amps[self.dim() - 1].norm_sqr() / n2
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `|⟨a|b⟩|² / (‖a‖²‖b‖²)`.
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        let d = self.norm_sqr() * other.norm_sqr();
        if d == 0.0 {
            return 0.0;
        }
        self.inner(other).norm_sqr() / d
    }

    /// Index of the highest nonzero amplitude, or 0 for the zero vector.
    pub fn top(&self) -> usize {
        self.amps.iter().rposition(|a| *a != ZERO).unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.amps.iter().all(|a| *a == ZERO)
    }

    /// `⟨n̂⟩` on the normalized state.
    pub fn mean_number(&self) -> f64 {
        let n2 = self.norm_sqr();
        self.amps
            .iter()
            .enumerate()
            .map(|(k, a)| k as f64 * a.norm_sqr())
            .sum::<f64>()
            / n2
    }

    pub fn scale(&mut self, s: C64) {
        self.amps.iter_mut().for_each(|a| *a *= s);
    }
}

/// Dense complex `D×D` operator, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    dim: usize,
    data: Vec<C64>,
}

impl FockOperator {
    pub fn zeros(dim: usize) -> Self {
        FockOperator { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(dim, |_| ONE)
    }

    pub fn diagonal(dim: usize, f: impl Fn(usize) -> C64) -> Self {
        let mut m = Self::zeros(dim);
        for k in 0..dim {
            m[(k, k)] = f(k);
        }
        m
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn scaled(&self, s: C64) -> Self {
        FockOperator { dim: self.dim, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn apply(&self, v: &StateVector) -> Result<StateVector> {
        if v.dim() != self.dim {
            return Err(Error::Dimension(format!(
                "operator dimension {} does not match state dimension {}",
                self.dim,
                v.dim()
            )));
        }
        let amps = (0..self.dim)
            .map(|i| {
                self.data[i * self.dim..(i + 1) * self.dim]
                    .iter()
                    .zip(v.amps())
                    .map(|(m, x)| m * x)
                    .sum()
            })
            .collect();
        StateVector::new(amps)
    }

    /// Largest entrywise modulus of the difference over the upper-left `block×block`.
    pub fn max_abs_diff(&self, other: &FockOperator, block: usize) -> f64 {
        let b = block.min(self.dim).min(other.dim);
        let mut worst: f64 = 0.0;
        for i in 0..b {
            for j in 0..b {
                worst = worst.max((self[(i, j)] - other[(i, j)]).norm());
            }
        }
        worst
    }

    /// Upper-left `dim×dim` block.
    pub fn block(&self, dim: usize) -> FockOperator {
        Self::from_fn(dim, |i, j| self[(i, j)])
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.dim).map(|i| self[(i, j)]).collect()
    }

    /// Induced 1-norm (max column sum).
    pub fn norm1(&self) -> f64 {
        (0..self.dim)
            .map(|j| (0..self.dim).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Matrix exponential by scaling and squaring with a Taylor kernel.
    pub fn expm(&self) -> FockOperator {
        let norm = self.norm1();
        let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
        let scaled = self.scaled(C64::new(0.5f64.powi(squarings as i32), 0.0));
        let mut result = FockOperator::identity(self.dim);
        let mut term = FockOperator::identity(self.dim);
        for k in 1..=30 {
            term = &term * &scaled;
            term = term.scaled(C64::new(1.0 / k as f64, 0.0));
            result = &result + &term;
            if term.norm1() < 1e-18 * result.norm1() {
                break;
            }
        }
        for _ in 0..squarings {
            result = &result * &result;
        }
        result
    }

    /// `exp(self)` for a strictly lower-band (nilpotent) operator: the series
    /// terminates after at most `dim` terms.
    pub fn expm_nilpotent(&self) -> FockOperator {
        let mut result = FockOperator::identity(self.dim);
        let mut term = FockOperator::identity(self.dim);
        for k in 1..self.dim {
            term = &term * self;
            term = term.scaled(C64::new(1.0 / k as f64, 0.0));
            if term.data.iter().all(|x| *x == ZERO) {
                break;
            }
            result = &result + &term;
        }
        result
    }
}

impl std::ops::Index<(usize, usize)> for FockOperator {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for FockOperator {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl<'a> Mul<&'a FockOperator> for &'a FockOperator {
    type Output = FockOperator;
    fn mul(self, rhs: &FockOperator) -> FockOperator {
        assert_eq!(self.dim, rhs.dim, "operator dimension mismatch");
        let d = self.dim;
        let mut out = FockOperator::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == ZERO {
                    continue;
                }
                let row = &rhs.data[k * d..(k + 1) * d];
                let dst = &mut out.data[i * d..(i + 1) * d];
                for (o, b) in dst.iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        out
    }
}

impl<'a> Add<&'a FockOperator> for &'a FockOperator {
    type Output = FockOperator;
    fn add(self, rhs: &FockOperator) -> FockOperator {
        assert_eq!(self.dim, rhs.dim, "operator dimension mismatch");
        FockOperator {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<'a> Sub<&'a FockOperator> for &'a FockOperator {
    type Output = FockOperator;
    fn sub(self, rhs: &FockOperator) -> FockOperator {
        assert_eq!(self.dim, rhs.dim, "operator dimension mismatch");
        FockOperator {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Annihilation operator `â` with `â[k−1,k] = √k`.
pub fn make_ladder(dim: usize) -> Result<FockOperator> {
    if dim < 2 {
        return Err(Error::Dimension(format!("ladder operator needs dimension >= 2, got {dim}")));
    }
    let mut a = FockOperator::zeros(dim);
    for k in 1..dim {
        a[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
    }
    Ok(a)
}

pub fn make_creation(dim: usize) -> Result<FockOperator> {
    Ok(make_ladder(dim)?.adjoint())
}

/// `n̂ = â†â`, diagonal `0..D−1`.
pub fn make_number(dim: usize) -> Result<FockOperator> {
    if dim < 2 {
        return Err(Error::Dimension(format!("number operator needs dimension >= 2, got {dim}")));
    }
    Ok(FockOperator::diagonal(dim, |k| C64::new(k as f64, 0.0)))
}

/// `⟨ψ|Ô|ψ⟩` for a normalized state.
pub fn expect(state: &StateVector, op: &FockOperator) -> Result<C64> {
    if !state.is_normalized(1e-9) {
        return Err(Error::Domain(format!(
            "expectation requires a normalized state (norm² = {})",
            state.norm_sqr()
        )));
    }
    let applied = op.apply(state)?;
    Ok(state.inner(&applied))
}

/// `out = â·v`; `out` and `v` must have equal length.
#[inline]
pub fn lower_into(v: &[C64], out: &mut [C64]) {
    let d = v.len();
    for k in 0..d - 1 {
        out[k] = v[k + 1] * ((k + 1) as f64).sqrt();
    }
    out[d - 1] = ZERO;
}

/// `â^m·v` without normalization.
pub fn lower_pow(v: &[C64], m: usize) -> Vec<C64> {
    let mut cur = v.to_vec();
    let mut next = vec![ZERO; v.len()];
    for _ in 0..m {
        lower_into(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// `e^{λ n̂}·v` in place.
pub fn apply_number_exp(lambda: C64, v: &mut [C64]) {
    for (k, a) in v.iter_mut().enumerate() {
        *a *= (lambda * k as f64).exp();
    }
}

/// `exp(A·â + B·â²)·v`.
///
/// The exponent strictly lowers the photon number, so the Taylor series
/// terminates after at most `D` terms and the result is exact in the
/// truncated space.
pub fn exp_lowering(a_coef: C64, b_coef: C64, v: &[C64]) -> Vec<C64> {
    let d = v.len();
    let mut result = v.to_vec();
    let mut term = v.to_vec();
    let mut once = vec![ZERO; d];
    let mut twice = vec![ZERO; d];
    for j in 1..d {
        lower_into(&term, &mut once);
        lower_into(&once, &mut twice);
        let inv = 1.0 / j as f64;
        let mut any = false;
        for k in 0..d {
            term[k] = (a_coef * once[k] + b_coef * twice[k]) * inv;
            any |= term[k] != ZERO;
        }
        if !any {
            break;
        }
        for k in 0..d {
            result[k] += term[k];
        }
    }
    result
}

/// `exp(X)·v` for an operator given by its action, with `‖X‖ ≤ norm_bound`.
///
/// Splits the exponent into substeps of norm at most one and sums each Taylor
/// series to double precision, so no large intermediate terms cancel.
pub fn expm_apply(apply: impl Fn(&[C64], &mut [C64]), norm_bound: f64, v: &[C64]) -> Vec<C64> {
    let substeps = norm_bound.ceil().max(1.0) as usize;
    let h = 1.0 / substeps as f64;
    let d = v.len();
    let mut cur = v.to_vec();
    let mut term = vec![ZERO; d];
    let mut next = vec![ZERO; d];
    for _ in 0..substeps {
        term.copy_from_slice(&cur);
        let mut acc = cur.clone();
        for k in 1..60 {
            apply(&term, &mut next);
            let s = h / k as f64;
            let mut size = 0.0;
            for i in 0..d {
                term[i] = next[i] * s;
                acc[i] += term[i];
                size += term[i].norm_sqr();
            }
            let total: f64 = acc.iter().map(|x| x.norm_sqr()).sum();
            if size <= 1e-34 * total.max(1e-300) {
                break;
            }
        }
        cur = acc;
    }
    cur
}
