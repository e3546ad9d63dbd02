//! Jump–diffusion trajectory engine.
//!
//! Each step either registers a photocount with probability `γ₁⟨n̂⟩dt` and
//! applies `â`, or draws a homodyne increment
//! `dW̃ = √γ₂⟨â+â†⟩dt + dW` and applies `1 − (iω+Γ/2)n̂dt + √γ₂ â dW̃`.
//! The state is renormalized every step.
//!
//! Both operators only lower the photon number or act diagonally, so the
//! occupied band `0..=top` never grows. The kernel works on that band in a
//! single in-place pass that also accumulates the norm and the moments
//! needed by the next step.
//!
//! A classical mixture of number states (the thermal input) is carried as a
//! set of branches conditioned on one shared record, with Bayesian weights
//! `w_j ∝ w_j‖Mφ_j‖²`. It can instead be sampled once per trajectory.

use std::cell::Cell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{StateVector, C64};
use crate::params::SimParams;
use crate::propagators::{b_closed_form, RecordAccumulators};
use crate::states::PreparedState;

/// Largest jump probability allowed in one step.
pub const MAX_JUMP_PROBABILITY: f64 = 0.05;
/// Largest top-level population tolerated at a snapshot.
pub const TRAJECTORY_LEAKAGE_LIMIT: f64 = 1e-6;
/// Levels whose relative population falls below this are dropped from the band.
const TRIM: f64 = 1e-24;
/// Mixture branches whose posterior weight falls below this are dropped.
const PRUNE: f64 = 1e-12;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Random stream of trajectory `index`: ChaCha8 seeded from `seed` with the
/// trajectory index as stream number, so trajectories are independent of
/// scheduling.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Moments of the photon number and field.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Moments {
    pub n: f64,
    pub n2: f64,
    pub a: C64,
    /// `⟨n̂â⟩`.
    pub na: C64,
}

impl Moments {
    pub fn variance(&self) -> f64 {
        self.n2 - self.n * self.n
    }

    /// Moments of a pure state.
    pub fn of(state: &StateVector) -> Self {
        let amps = state.amps();
        let norm = state.norm_sqr();
        let mut m = Moments::default();
        for k in 0..amps.len() {
            let p = amps[k].norm_sqr();
            let kf = k as f64;
            m.n += kf * p;
            m.n2 += kf * kf * p;
            if k + 1 < amps.len() {
                let t = amps[k].conj() * amps[k + 1] * ((k + 1) as f64).sqrt();
                m.a += t;
                m.na += t * kf;
            }
        }
        m.n /= norm;
        m.n2 /= norm;
        m.a /= norm;
        m.na /= norm;
        m
    }
}

/// `⟨n̂⟩` and `⟨â⟩` immediately after a photocount, from moments just before:
/// `⟨n̂⟩₊ = ⟨n̂⟩ − 1 + Var(n̂)/⟨n̂⟩` and `⟨â⟩₊ = ⟨n̂â⟩/⟨n̂⟩`.
pub fn jump_update_moments(n: f64, n2: f64, a: C64, na: C64) -> Result<(f64, C64)> {
    if !(n > 0.0) {
        return Err(Error::Domain(format!("photocount from ⟨n⟩ = {n}")));
    }
    let var = n2 - n * n;
    let cov = na - a * n;
    Ok((n - 1.0 + var / n, a + cov / n))
}

/// Coefficients of the step kernel that depend only on the parameters.
#[derive(Debug, Clone)]
pub struct StepKernel {
    /// `1 − (iω+Γ/2) k dt` for each level.
    diag: Vec<C64>,
    /// `√k` for `k = 0..=D`.
    sqrt: Vec<f64>,
    sqrt_g2: f64,
    g1_dt: f64,
    dt: f64,
    sqrt_dt: f64,
    /// Real diagonal (ω = 0): real branches stay real.
    real: bool,
}

impl StepKernel {
    pub fn new(params: &SimParams) -> Self {
        let c = params.decay();
        let dt = params.dt;
        StepKernel {
            diag: (0..params.dim).map(|k| 1.0 - c * (k as f64 * dt)).collect(),
            sqrt: (0..=params.dim).map(|k| (k as f64).sqrt()).collect(),
            sqrt_g2: params.gamma2.sqrt(),
            g1_dt: params.gamma1 * dt,
            dt,
            sqrt_dt: dt.sqrt(),
            real: params.omega == 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    norm: f64,
    n: f64,
    a: C64,
}

#[derive(Debug, Clone)]
struct Branch {
    amps: Vec<C64>,
    top: usize,
    /// Sums of the stored (unnormalized) amplitudes.
    sums: Sums,
    weight: f64,
    real: bool,
}

impl Branch {
    fn new(amps: Vec<C64>, weight: f64) -> Self {
        let real = amps.iter().all(|v| v.im == 0.0);
        let mut b = Branch { top: amps.len() - 1, amps, sums: Sums::default(), weight, real };
        b.recompute();
        b.trim();
        b
    }

    fn recompute(&mut self) {
        let mut s = Sums::default();
        let mut prev = ZERO;
        for k in 0..=self.top {
            let v = self.amps[k];
            let p = v.norm_sqr();
            let kf = k as f64;
            s.norm += p;
            s.n += kf * p;
            if k > 0 {
                s.a += prev.conj() * v * kf.sqrt();
            }
            prev = v;
        }
        self.sums = s;
    }

    fn trim(&mut self) {
        let floor = TRIM * self.sums.norm;
        while self.top > 0 && self.amps[self.top].norm_sqr() <= floor {
            self.amps[self.top] = ZERO;
            self.top -= 1;
        }
    }

    /// `⟨n̂²⟩` of the normalized branch, from the amplitudes.
    fn mean_n2(&self) -> f64 {
        let s: f64 = self.amps[..=self.top]
            .iter()
            .enumerate()
            .map(|(k, v)| (k * k) as f64 * v.norm_sqr())
            .sum();
        s / self.sums.norm
    }

    /// Applies `scale·(diag + s·â)` in place over the band.
    fn diffuse(&mut self, k: &StepKernel, s: f64, scale: f64) {
        if k.real && self.real {
            return self.diffuse_real(k, s, scale);
        }
        let top = self.top;
        let amps = &mut self.amps[..=top];
        let diag = &k.diag[..=top];
        let sq = &k.sqrt[..=top + 1];
        let (mut norm, mut n) = (0.0, 0.0);
        let (mut a_re, mut a_im) = (0.0, 0.0);
        let (mut prev_re, mut prev_im) = (0.0, 0.0);
        for i in 0..=top {
            let cur = amps[i];
            let above = if i < top { amps[i + 1] } else { ZERO };
            let d = diag[i];
            let c = s * sq[i + 1];
            let re = (d.re * cur.re - d.im * cur.im + c * above.re) * scale;
            let im = (d.re * cur.im + d.im * cur.re + c * above.im) * scale;
            amps[i] = C64::new(re, im);
            let p = re * re + im * im;
            norm += p;
            n += i as f64 * p;
            // conj(prev)·v·√i; prev is zero at i = 0.
            let w = sq[i];
            a_re += (prev_re * re + prev_im * im) * w;
            a_im += (prev_re * im - prev_im * re) * w;
            prev_re = re;
            prev_im = im;
        }
        self.sums = Sums { norm, n, a: C64::new(a_re, a_im) };
        self.trim();
    }

    fn diffuse_real(&mut self, k: &StepKernel, s: f64, scale: f64) {
        let top = self.top;
        let cells = Cell::from_mut(&mut self.amps[..=top]).as_slice_of_cells();
        let (mut norm, mut n, mut a) = (0.0, 0.0, 0.0);
        let (mut prev, mut level) = (0.0, 0.0);
        let rows = cells.windows(2).zip(&k.diag[..top]).zip(&k.sqrt[1..=top]).zip(&k.sqrt[..top]);
        for (((w, d), up), here) in rows {
            let v = (d.re * w[0].get().re + s * up * w[1].get().re) * scale;
            w[0].set(C64::new(v, 0.0));
            let p = v * v;
            norm += p;
            n += level * p;
            a += prev * v * here;
            prev = v;
            level += 1.0;
        }
        let last = &cells[top];
        let v = k.diag[top].re * last.get().re * scale;
        last.set(C64::new(v, 0.0));
        let p = v * v;
        norm += p;
        n += top as f64 * p;
        a += prev * v * k.sqrt[top];
        self.sums = Sums { norm, n, a: C64::new(a, 0.0) };
        self.trim();
    }

    /// Applies `scale·â` in place; the band shrinks by one level.
    fn lower(&mut self, k: &StepKernel, scale: f64) {
        let top = self.top;
        let mut sums = Sums::default();
        let mut prev = ZERO;
        for i in 0..top {
            let v = self.amps[i + 1] * (k.sqrt[i + 1] * scale);
            self.amps[i] = v;
            let p = v.norm_sqr();
            let f = i as f64;
            sums.norm += p;
            sums.n += f * p;
            if i > 0 {
                sums.a += prev.conj() * v * k.sqrt[i];
            }
            prev = v;
        }
        self.amps[top] = ZERO;
        self.top = top.saturating_sub(1);
        self.sums = sums;
        if self.sums.norm > 0.0 {
            self.trim();
        }
    }

    fn normalized_vector(&self) -> Vec<C64> {
        let inv = 1.0 / self.sums.norm.sqrt();
        self.amps.iter().map(|v| v * inv).collect()
    }
}

/// State of one trajectory: a pure vector or a weighted set of branches.
#[derive(Debug, Clone)]
pub struct ConditionalState {
    branches: Vec<Branch>,
    dim: usize,
    /// `⟨n̂⟩` and `⟨â⟩` of the mixture, refreshed after every update.
    mean_n: f64,
    mean_a: C64,
}

impl ConditionalState {
    fn with_branches(branches: Vec<Branch>, dim: usize) -> Self {
        let mut st = ConditionalState { branches, dim, mean_n: 0.0, mean_a: ZERO };
        st.refresh();
        st
    }

    fn refresh(&mut self) {
        let (mut n, mut a) = (0.0, ZERO);
        for b in &self.branches {
            let f = b.weight / b.sums.norm;
            n += f * b.sums.n;
            a += b.sums.a * f;
        }
        self.mean_n = n;
        self.mean_a = a;
    }

    pub fn pure(state: &StateVector) -> Self {
        Self::with_branches(vec![Branch::new(state.amps().to_vec(), 1.0)], state.dim())
    }

    /// Mixture of number states with the given weights.
    pub fn number_mixture(weights: &[f64]) -> Result<Self> {
        let dim = weights.len();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::Domain("mixture weights must be non-negative and not all zero".into()));
        }
        let mut branches = Vec::new();
        for (n, &w) in weights.iter().enumerate() {
            if w / total > PRUNE {
                let mut amps = vec![ZERO; n + 1];
                amps[n] = C64::new(1.0, 0.0);
                let mut b = Branch::new(amps, w / total);
                b.amps.resize(dim, ZERO);
                branches.push(b);
            }
        }
        Ok(Self::with_branches(branches, dim))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_pure(&self) -> bool {
        self.branches.len() == 1
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    /// Occupied amplitudes summed over branches; the per-step cost.
    pub fn band_size(&self) -> usize {
        self.branches.iter().map(|b| b.top + 1).sum()
    }

    pub fn mean_n(&self) -> f64 {
        self.mean_n
    }

    pub fn mean_a(&self) -> C64 {
        self.mean_a
    }

    pub fn variance_n(&self) -> f64 {
        let n = self.mean_n();
        let n2: f64 = self.branches.iter().map(|b| b.weight * b.mean_n2()).sum();
        n2 - n * n
    }

    /// Full moments including `⟨n̂â⟩`.
    pub fn moments(&self) -> Moments {
        let mut m = Moments::default();
        for b in &self.branches {
            let v = StateVector::new(b.amps.clone()).expect("dimension checked at construction");
            let bm = Moments::of(&v);
            m.n += b.weight * bm.n;
            m.n2 += b.weight * bm.n2;
            m.a += bm.a * b.weight;
            m.na += bm.na * b.weight;
        }
        m
    }

    /// Normalized vector of a pure state.
    pub fn state_vector(&self) -> Option<StateVector> {
        if self.is_pure() {
            StateVector::new(self.branches[0].normalized_vector()).ok()
        } else {
            None
        }
    }

    /// `(weight, normalized vector)` for every branch.
    pub fn components(&self) -> Vec<(f64, StateVector)> {
        self.branches
            .iter()
            .map(|b| {
                (b.weight, StateVector::new(b.normalized_vector()).expect("dimension checked"))
            })
            .collect()
    }

    /// Population of the top retained level in the (mixed) state.
    pub fn leakage(&self) -> f64 {
        self.branches
            .iter()
            .filter(|b| b.top + 1 == self.dim)
            .map(|b| b.weight * b.amps[self.dim - 1].norm_sqr() / b.sums.norm)
            .sum()
    }

    /// Jump probability for the coming step.
    pub fn jump_probability(&self, kernel: &StepKernel) -> f64 {
        kernel.g1_dt * self.mean_n()
    }

    fn reweight(&mut self) -> Result<()> {
        if self.branches.len() == 1 {
            self.branches[0].weight = 1.0;
            self.refresh();
            return Ok(());
        }
        let mut total = 0.0;
        for b in &mut self.branches {
            b.weight *= b.sums.norm;
            total += b.weight;
        }
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Domain("mixture lost all weight".into()));
        }
        let inv = 1.0 / total;
        let mut prune = false;
        for b in &mut self.branches {
            b.weight *= inv;
            prune |= !(b.weight > PRUNE && b.sums.norm > 0.0);
        }
        if prune {
            self.branches.retain(|b| b.weight > PRUNE && b.sums.norm > 0.0);
            let total: f64 = self.branches.iter().map(|b| b.weight).sum();
            for b in &mut self.branches {
                b.weight /= total;
            }
        }
        self.refresh();
        Ok(())
    }

    /// Applies the no-count operator for a given record increment.
    pub fn apply_diffusive(&mut self, kernel: &StepKernel, dw_tilde: f64) -> Result<()> {
        let s = kernel.sqrt_g2 * dw_tilde;
        for b in &mut self.branches {
            let scale = 1.0 / b.sums.norm.sqrt();
            b.diffuse(kernel, s, scale);
        }
        self.reweight()
    }

    /// Applies a photocount.
    pub fn apply_jump(&mut self) -> Result<()> {
        let kernel_sqrt: Vec<f64> = (0..=self.dim).map(|k| (k as f64).sqrt()).collect();
        let k = StepKernel {
            diag: Vec::new(),
            sqrt: kernel_sqrt,
            sqrt_g2: 0.0,
            g1_dt: 0.0,
            dt: 0.0,
            sqrt_dt: 0.0,
            real: true,
        };
        self.apply_jump_with(&k)
    }

    fn apply_jump_with(&mut self, kernel: &StepKernel) -> Result<()> {
        if !(self.mean_n() > 0.0) {
            return Err(Error::Domain("photocount from the vacuum".into()));
        }
        for b in &mut self.branches {
            let scale = 1.0 / b.sums.norm.sqrt();
            b.lower(kernel, scale);
        }
        self.reweight()
    }
}

/// Outcome of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Record increment; zero on a jump step.
    pub dw_tilde: f64,
    pub jumped: bool,
    /// `Var n̂` just before a photocount; zero otherwise.
    pub var_before: f64,
}

/// Advances `state` by one step of the jump–diffusion scheme.
pub fn step<R: Rng + ?Sized>(
    state: &mut ConditionalState,
    kernel: &StepKernel,
    rng: &mut R,
) -> Result<StepOutcome> {
    let n = state.mean_n();
    let p = kernel.g1_dt * n;
    if p > MAX_JUMP_PROBABILITY {
        return Err(Error::StepSize { probability: p, limit: MAX_JUMP_PROBABILITY });
    }
    let u: f64 = rng.random();
    if u < p {
        let var_before = state.variance_n();
        state.apply_jump_with(kernel)?;
        return Ok(StepOutcome { dw_tilde: 0.0, jumped: true, var_before });
    }
    let z: f64 = rng.sample(StandardNormal);
    let x = 2.0 * state.mean_a().re;
    let dw_tilde = kernel.sqrt_g2 * x * kernel.dt + z * kernel.sqrt_dt;
    state.apply_diffusive(kernel, dw_tilde)?;
    Ok(StepOutcome { dw_tilde, jumped: false, var_before: 0.0 })
}

/// One step on a pure state: returns the normalized new state, `dW̃`, and
/// whether a photocount fired.
pub fn step_pure<R: Rng + ?Sized>(
    psi: &StateVector,
    params: &SimParams,
    rng: &mut R,
) -> Result<(StateVector, f64, bool)> {
    if psi.dim() != params.dim {
        return Err(Error::Dimension(format!(
            "state has dimension {}, parameters say {}",
            psi.dim(),
            params.dim
        )));
    }
    if !psi.is_normalized(1e-9) {
        return Err(Error::Domain("step requires a normalized state".into()));
    }
    let kernel = StepKernel::new(params);
    let mut state = ConditionalState::pure(psi);
    let out = step(&mut state, &kernel, rng)?;
    Ok((state.state_vector().expect("pure"), out.dw_tilde, out.jumped))
}

/// Residuals of the no-count drift laws after one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftResidual {
    /// Measured drift of `⟨n̂⟩`.
    pub delta_n: f64,
    /// `|Δ⟨n̂⟩ − (−γ₂⟨n̂⟩ − γ₁Var n̂)dt|`.
    pub n: f64,
    /// `|Δ⟨â⟩ − (−(iω+Γ/2)⟨â⟩ − γ₁Cov(n̂,â))dt|`.
    pub a: f64,
}

/// Mean change of `⟨n̂⟩` and `⟨â⟩` over one no-count step, compared with the
/// drift laws. The mean over the Wiener increment is taken by three-point
/// Gauss–Hermite quadrature (nodes `0, ±√(3dt)`), which is exact for the
/// polynomial part and keeps the Itô contribution that a `dW = 0` step
/// would drop.
pub fn nocount_drift_check(psi: &StateVector, params: &SimParams) -> Result<DriftResidual> {
    if !psi.is_normalized(1e-9) {
        return Err(Error::Domain("drift check requires a normalized state".into()));
    }
    let kernel = StepKernel::new(params);
    let before = Moments::of(psi);
    let x = 2.0 * before.a.re;
    let dt = params.dt;
    let h = (3.0 * dt).sqrt();
    let mut dn = 0.0;
    let mut da = ZERO;
    for (node, weight) in [(0.0, 2.0 / 3.0), (h, 1.0 / 6.0), (-h, 1.0 / 6.0)] {
        let mut st = ConditionalState::pure(psi);
        st.apply_diffusive(&kernel, kernel.sqrt_g2 * x * dt + node)?;
        dn += weight * (st.mean_n() - before.n);
        da += (st.mean_a() - before.a) * weight;
    }
    let want_n = -(params.gamma2 * before.n + params.gamma1 * before.variance()) * dt;
    let cov = before.na - before.a * before.n;
    let want_a = -(params.decay() * before.a + cov * params.gamma1) * dt;
    Ok(DriftResidual { delta_n: dn, n: (dn - want_n).abs(), a: (da - want_a).norm() })
}

/// How a number-state mixture enters a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixtureMode {
    /// All branches conditioned on one record.
    #[default]
    Branches,
    /// One number state drawn per trajectory.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOptions {
    /// Steps between stored snapshots.
    pub snapshot_stride: usize,
    /// Keep every `dW̃`.
    pub keep_record: bool,
    pub mixture: MixtureMode,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        TrajectoryOptions { snapshot_stride: 1, keep_record: false, mixture: MixtureMode::Branches }
    }
}

/// A photocount together with `⟨n̂⟩` just before and after it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub t: f64,
    pub n_before: f64,
    pub n_after: f64,
    pub var_before: f64,
}

impl JumpEvent {
    pub fn delta_n(&self) -> f64 {
        self.n_after - self.n_before
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub index: u64,
    pub times: Vec<f64>,
    pub n_expect: Vec<f64>,
    pub a_expect: Vec<C64>,
    pub jumps: Vec<JumpEvent>,
    /// `dW̃` per step when requested.
    pub record: Option<Vec<f64>>,
    /// `A`, `B` at the final time.
    pub accumulators: RecordAccumulators,
    pub final_n: f64,
    /// Initial number state drawn in sampled-mixture mode.
    pub sampled_n: Option<usize>,
}

impl Trajectory {
    pub fn jump_times(&self) -> Vec<f64> {
        self.jumps.iter().map(|j| j.t).collect()
    }
}

/// Borrowed view of a running trajectory passed to observers after each step.
pub struct StepView<'a> {
    pub step: usize,
    pub t: f64,
    pub state: &'a ConditionalState,
    pub outcome: StepOutcome,
    pub accumulators: &'a RecordAccumulators,
}

/// Builds the conditional state for one trajectory.
pub fn initial_conditional<R: Rng + ?Sized>(
    prep: &PreparedState,
    mode: MixtureMode,
    rng: &mut R,
) -> Result<(ConditionalState, Option<usize>)> {
    match prep {
        PreparedState::Pure(s) => Ok((ConditionalState::pure(s), None)),
        PreparedState::NumberMixture { weights } => match mode {
            MixtureMode::Branches => Ok((ConditionalState::number_mixture(weights)?, None)),
            MixtureMode::Sampled => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut n = weights.len() - 1;
                for (k, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        n = k;
                        break;
                    }
                }
                Ok((ConditionalState::pure(&StateVector::basis(n, weights.len())?), Some(n)))
            }
        },
    }
}

/// Runs trajectory `index` from a prepared state.
pub fn run_trajectory(
    prep: &PreparedState,
    params: &SimParams,
    opts: &TrajectoryOptions,
    index: u64,
) -> Result<Trajectory> {
    run_trajectory_observed(prep, params, opts, index, |_| Ok(()))
}

/// Like [`run_trajectory`], calling `observer` after every step.
pub fn run_trajectory_observed(
    prep: &PreparedState,
    params: &SimParams,
    opts: &TrajectoryOptions,
    index: u64,
    mut observer: impl FnMut(&StepView) -> Result<()>,
) -> Result<Trajectory> {
    params.validate()?;
    if prep.dim() != params.dim {
        return Err(Error::Dimension(format!(
            "prepared state has dimension {}, parameters say {}",
            prep.dim(),
            params.dim
        )));
    }
    let stride = opts.snapshot_stride.max(1);
    let mut rng = trajectory_rng(params.seed, index);
    let (mut state, sampled_n) = initial_conditional(prep, opts.mixture, &mut rng)?;
    let kernel = StepKernel::new(params);
    let steps = params.steps();
    let dt = params.dt;
    let wrap = |t: f64, e: Error| Error::Trajectory { traj: index, time: t, source: Box::new(e) };

    let mut times = vec![0.0];
    let mut n_expect = vec![state.mean_n()];
    let mut a_expect = vec![state.mean_a()];
    let mut jumps = Vec::new();
    let mut record = opts.keep_record.then(|| Vec::with_capacity(steps));
    let check_leak = |st: &ConditionalState, t: f64| -> Result<()> {
        let leak = st.leakage();
        if leak >= TRAJECTORY_LEAKAGE_LIMIT {
            return Err(wrap(
                t,
                Error::Truncation(format!(
                    "top-level population {leak:.3e} at D = {}; raise the dimension",
                    st.dim()
                )),
            ));
        }
        Ok(())
    };
    check_leak(&state, 0.0)?;

    // A(t) = √γ₂ Σ e^{−c t_k} dW̃_k, with the decaying factor kept as a running
    // product and refreshed periodically.
    let c = params.decay();
    let step_factor = (-c * dt).exp();
    let mut phase = C64::new(params.gamma2.sqrt(), 0.0);
    let mut a_acc = ZERO;

    for k in 0..steps {
        let t_end = (k + 1) as f64 * dt;
        let n_before = state.mean_n();
        let out = step(&mut state, &kernel, &mut rng).map_err(|e| wrap(k as f64 * dt, e))?;
        if out.jumped {
            jumps.push(JumpEvent { t: t_end, n_before, n_after: state.mean_n(), var_before: out.var_before });
        } else {
            a_acc += phase * out.dw_tilde;
        }
        if let Some(r) = record.as_mut() {
            r.push(out.dw_tilde);
        }
        phase *= step_factor;
        if (k + 1) % 1024 == 0 {
            phase = (-c * t_end).exp() * params.gamma2.sqrt();
        }
        let acc = RecordAccumulators { a: a_acc, b: b_closed_form(t_end, params), t: t_end };
        let last = k + 1 == steps;
        if (k + 1) % stride == 0 || last {
            check_leak(&state, t_end)?;
            times.push(t_end);
            n_expect.push(state.mean_n());
            a_expect.push(state.mean_a());
        }
        let view = StepView { step: k + 1, t: t_end, state: &state, outcome: out, accumulators: &acc };
        observer(&view).map_err(|e| wrap(t_end, e))?;
    }
    let t_end = steps as f64 * dt;
    let accumulators = RecordAccumulators { a: a_acc, b: b_closed_form(t_end, params), t: t_end };
    Ok(Trajectory {
        index,
        times,
        n_expect,
        a_expect,
        jumps,
        record,
        accumulators,
        final_n: state.mean_n(),
        sampled_n,
    })
}
