//! Two-level states, composite (system ⊗ environment) states, the closed-form
//! single-step propagator and the partial trace.
//!
//! Basis convention: `|L⟩ = (1, 0)`, `|R⟩ = (0, 1)`, with the spin dictionary
//! `|↑⟩ ≡ |L⟩`. Units have ħ = 1.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Tolerance used when checking normalization at construction time.
pub const NORM_TOL: f64 = 1e-12;
/// Looser tolerance used for preconditions on states that went through long evolutions.
pub const PRECONDITION_TOL: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Which well of the double-well.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    L = 0,
    R = 1,
}

/// A pure state of the two-level system, `amp_l |L⟩ + amp_r |R⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelState {
    pub amp_l: Complex64,
    pub amp_r: Complex64,
}

impl TwoLevelState {
    /// Builds a state, rejecting amplitude pairs that are not normalized.
    pub fn new(amp_l: Complex64, amp_r: Complex64) -> Result<Self> {
        let s = TwoLevelState { amp_l, amp_r };
        let n2 = s.norm_sqr();
        if !n2.is_finite() || (n2 - 1.0).abs() > NORM_TOL {
            return Err(Error::Precondition(format!(
                "two-level amplitudes have squared norm {n2}, expected 1"
            )));
        }
        Ok(s)
    }

    /// Builds a state by rescaling the given amplitudes.
    pub fn normalized(amp_l: Complex64, amp_r: Complex64) -> Result<Self> {
        let n = (amp_l.norm_sqr() + amp_r.norm_sqr()).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::Data("cannot normalize a zero or non-finite state".into()));
        }
        Ok(TwoLevelState { amp_l: amp_l / n, amp_r: amp_r / n })
    }

    pub fn left() -> Self {
        TwoLevelState { amp_l: ONE, amp_r: ZERO }
    }

    pub fn right() -> Self {
        TwoLevelState { amp_l: ZERO, amp_r: ONE }
    }

    /// `(|L⟩ + |R⟩)/√2`
    pub fn plus() -> Self {
        let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        TwoLevelState { amp_l: a, amp_r: a }
    }

    /// `(|L⟩ − |R⟩)/√2`
    pub fn minus() -> Self {
        let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        TwoLevelState { amp_l: a, amp_r: -a }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp_l.norm_sqr() + self.amp_r.norm_sqr()
    }

    /// Probability of finding the particle in the left well.
    pub fn p_left(&self) -> f64 {
        self.amp_l.norm_sqr()
    }

    pub fn p_right(&self) -> f64 {
        self.amp_r.norm_sqr()
    }

    pub fn amp(&self, side: Side) -> Complex64 {
        match side {
            Side::L => self.amp_l,
            Side::R => self.amp_r,
        }
    }

    pub(crate) fn check_normalized(&self, what: &str) -> Result<()> {
        let n2 = self.norm_sqr();
        if !n2.is_finite() || (n2 - 1.0).abs() > PRECONDITION_TOL {
            return Err(Error::Precondition(format!("{what}: state has squared norm {n2}, expected 1")));
        }
        Ok(())
    }

    /// Pure-state projector `|ψ⟩⟨ψ|`.
    pub fn density(&self) -> DensityMatrix2 {
        let a = [self.amp_l, self.amp_r];
        let mut rho = [[ZERO; 2]; 2];
        for (i, row) in rho.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = a[i] * a[j].conj();
            }
        }
        DensityMatrix2 { rho }
    }
}

/// Bloch vector `(x, y, z)` of a normalized two-level state.
///
/// `x = 2 Re(a_L* a_R)`, `y = 2 Im(a_L* a_R)`, `z = |a_L|² − |a_R|²`.
pub fn bloch_vector(psi: &TwoLevelState) -> Result<[f64; 3]> {
    psi.check_normalized("bloch_vector")?;
    let c = psi.amp_l.conj() * psi.amp_r;
    Ok([2.0 * c.re, 2.0 * c.im, psi.amp_l.norm_sqr() - psi.amp_r.norm_sqr()])
}

/// A 2×2 unitary acting on the two-level system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepUnitary {
    pub u: [[Complex64; 2]; 2],
}

impl StepUnitary {
    pub fn identity() -> Self {
        StepUnitary { u: [[ONE, ZERO], [ZERO, ONE]] }
    }

    /// `exp(−i dt [(Δ/2)σx + (η/2)σz])` in closed form. No argument checks.
    #[inline]
    pub(crate) fn rotation(delta: f64, eta: f64, dt: f64) -> Self {
        let omega = delta.hypot(eta);
        if omega == 0.0 {
            return Self::identity();
        }
        let theta = 0.5 * dt * omega;
        let (s, c) = theta.sin_cos();
        let nx = delta / omega;
        let nz = eta / omega;
        // cos θ·I − i sin θ (nx σx + nz σz)
        StepUnitary {
            u: [
                [Complex64::new(c, -s * nz), Complex64::new(0.0, -s * nx)],
                [Complex64::new(0.0, -s * nx), Complex64::new(c, s * nz)],
            ],
        }
    }

    #[inline]
    pub fn apply(&self, psi: &TwoLevelState) -> TwoLevelState {
        TwoLevelState {
            amp_l: self.u[0][0] * psi.amp_l + self.u[0][1] * psi.amp_r,
            amp_r: self.u[1][0] * psi.amp_l + self.u[1][1] * psi.amp_r,
        }
    }

    /// `self · other`
    pub fn compose(&self, other: &StepUnitary) -> StepUnitary {
        let mut u = [[ZERO; 2]; 2];
        for (i, row) in u.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = self.u[i][0] * other.u[0][j] + self.u[i][1] * other.u[1][j];
            }
        }
        StepUnitary { u }
    }

    /// Largest entry of `|u†u − I|`.
    pub fn unitarity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = ZERO;
                for k in 0..2 {
                    acc += self.u[k][i].conj() * self.u[k][j];
                }
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((acc - target).norm());
            }
        }
        worst
    }
}

/// Single-step propagator for `H = (Δ/2)σx + (η/2)σz` over a step `dt`.
pub fn step_propagator(delta: f64, eta: f64, dt: f64) -> Result<StepUnitary> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("dt must be positive and finite, got {dt}")));
    }
    if !(delta.is_finite() && eta.is_finite()) {
        return Err(Error::Config("Δ and η must be finite".into()));
    }
    Ok(StepUnitary::rotation(delta, eta, dt))
}

/// Normalized state on the (two-level ⊗ environment) space.
///
/// Layout: flat index `s·dim_env + e` with `s = 0` for `L`, `s = 1` for `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeState {
    dim_env: usize,
    amplitudes: Vec<Complex64>,
}

impl CompositeState {
    pub fn new(dim_env: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        if dim_env == 0 {
            return Err(Error::Config("environment dimension must be positive".into()));
        }
        if amplitudes.len() != 2 * dim_env {
            return Err(Error::Data(format!(
                "expected {} amplitudes for dim_env = {dim_env}, got {}",
                2 * dim_env,
                amplitudes.len()
            )));
        }
        let n2 = norm_sqr(&amplitudes);
        if !n2.is_finite() || (n2 - 1.0).abs() > 2.0 * NORM_TOL {
            return Err(Error::Precondition(format!("composite state has squared norm {n2}, expected 1")));
        }
        Ok(CompositeState { dim_env, amplitudes })
    }

    pub(crate) fn from_raw(dim_env: usize, amplitudes: Vec<Complex64>) -> Self {
        debug_assert_eq!(amplitudes.len(), 2 * dim_env);
        CompositeState { dim_env, amplitudes }
    }

    pub fn dim_env(&self) -> usize {
        self.dim_env
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn amp(&self, side: Side, e: usize) -> Complex64 {
        self.amplitudes[side as usize * self.dim_env + e]
    }

    /// Environment factor attached to `side` (unnormalized).
    pub fn env_slice(&self, side: Side) -> &[Complex64] {
        let start = side as usize * self.dim_env;
        &self.amplitudes[start..start + self.dim_env]
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amplitudes).sqrt()
    }

    /// Probability of the two-level system being on `side`.
    pub fn probability(&self, side: Side) -> f64 {
        norm_sqr(self.env_slice(side))
    }
}

pub(crate) fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `|ψ⟩ ⊗ |φ⟩` with the layout documented on [`CompositeState`].
pub fn tensor_embed(psi: &TwoLevelState, phi: &[Complex64]) -> Result<CompositeState> {
    if phi.is_empty() {
        return Err(Error::Config("environment dimension must be positive".into()));
    }
    psi.check_normalized("tensor_embed")?;
    let n2 = norm_sqr(phi);
    if (n2 - 1.0).abs() > PRECONDITION_TOL {
        return Err(Error::Precondition(format!("environment vector has squared norm {n2}, expected 1")));
    }
    let amplitudes = [psi.amp_l, psi.amp_r].iter().flat_map(|&a| phi.iter().map(move |&p| a * p)).collect();
    Ok(CompositeState::from_raw(phi.len(), amplitudes))
}

/// A 2×2 density matrix on `{|L⟩, |R⟩}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix2 {
    pub rho: [[Complex64; 2]; 2],
}

impl DensityMatrix2 {
    /// Validates hermiticity, unit trace and positivity.
    pub fn new(rho: [[Complex64; 2]; 2]) -> Result<Self> {
        let d = DensityMatrix2 { rho };
        d.check()?;
        Ok(d)
    }

    pub fn check(&self) -> Result<()> {
        let herm = (self.rho[0][1] - self.rho[1][0].conj())
            .norm()
            .max(self.rho[0][0].im.abs())
            .max(self.rho[1][1].im.abs());
        if herm > 1e-12 {
            return Err(Error::Data(format!("density matrix not Hermitian (defect {herm})")));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > 1e-12 {
            return Err(Error::Data(format!("density matrix trace {tr}, expected 1")));
        }
        let [lo, _] = self.eigenvalues();
        if lo < -1e-10 {
            return Err(Error::Data(format!("density matrix has negative eigenvalue {lo}")));
        }
        Ok(())
    }

    pub fn rho_ll(&self) -> f64 {
        self.rho[0][0].re
    }

    pub fn rho_rr(&self) -> f64 {
        self.rho[1][1].re
    }

    /// Off-diagonal element `ρ_LR = Σ_e a(L,e)·conj(a(R,e))`.
    pub fn rho_lr(&self) -> Complex64 {
        self.rho[0][1]
    }

    pub fn trace(&self) -> f64 {
        self.rho[0][0].re + self.rho[1][1].re
    }

    /// `tr ρ²`
    pub fn purity(&self) -> f64 {
        let a = self.rho[0][0].re;
        let d = self.rho[1][1].re;
        a * a + d * d + 2.0 * self.rho[0][1].norm_sqr()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let a = self.rho[0][0].re;
        let d = self.rho[1][1].re;
        let mid = 0.5 * (a + d);
        let r = (0.25 * (a - d) * (a - d) + self.rho[0][1].norm_sqr()).sqrt();
        [mid - r, mid + r]
    }
}

/// Traces out the environment: `ρ[s,s′] = Σ_e a(s,e)·conj(a(s′,e))`.
pub fn reduced_density(psi: &CompositeState) -> Result<DensityMatrix2> {
    let n2 = norm_sqr(&psi.amplitudes);
    if (n2 - 1.0).abs() > PRECONDITION_TOL {
        return Err(Error::Precondition(format!("reduced_density: state has squared norm {n2}, expected 1")));
    }
    let l = psi.env_slice(Side::L);
    let r = psi.env_slice(Side::R);
    let ll: f64 = norm_sqr(l);
    let rr: f64 = norm_sqr(r);
    let lr: Complex64 = l.iter().zip(r).map(|(a, b)| a * b.conj()).sum();
    Ok(DensityMatrix2 { rho: [[Complex64::new(ll, 0.0), lr], [lr.conj(), Complex64::new(rr, 0.0)]] })
}
