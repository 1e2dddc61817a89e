//! Two-level system coupled to a finite, truncated bosonic bath.
//!
//! ```text
//! H = (Δ/2)σx + (ε/2)σz + Σ_i ω_i a_i†a_i + (σz/2) Σ_i c_i (a_i + a_i†)
//! ```
//!
//! Mode frequencies are linearly spaced, `ω_i = i·Δω` for `i = 1..=N` with
//! `Δω = 2ω_c/N`, and couplings follow the ohmic discretization
//! `c_i² = (2α/π)·ω_i·e^{−ω_i/ω_c}·Δω`.
//!
//! Environment basis states are Fock product states `|n_1 … n_N⟩`, `0 ≤ n_i ≤ n_max`,
//! encoded as a mixed-radix integer with mode 1 most significant:
//! `e = Σ_i n_i·(n_max+1)^(N−i)`. The composite index is `s·dim_env + e`
//! (see [`CompositeState`]), which coincides with the Kronecker ordering
//! `spin ⊗ mode_1 ⊗ … ⊗ mode_N`.
//!
//! The Hamiltonian is real symmetric, so evolution uses one real dense
//! eigendecomposition `H = V diag(E) Vᵀ` and `ψ(t) = V e^{−iEt} Vᵀ ψ(0)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::ensemble::{CompensatedSum, WeightedEnsemble};
use crate::error::{Error, Result};
use crate::qstate::{norm_sqr, tensor_embed, CompositeState, Side, TwoLevelState, PRECONDITION_TOL};

/// Default cap on the composite Hilbert-space dimension.
pub const DEFAULT_DIM_CAP: usize = 16384;
/// Gibbs truncation: retained states carry at least this much of the weight.
pub const GIBBS_RETAINED_WEIGHT: f64 = 1.0 - 1e-6;

/// Ohmic bath discretized into `n_modes` truncated oscillators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OhmicBathSpec {
    /// Dimensionless coupling α.
    pub alpha: f64,
    /// Cutoff frequency ω_c.
    pub omega_c: f64,
    pub n_modes: usize,
    /// Highest occupation kept per mode.
    pub fock_cutoff: usize,
    /// Inverse temperature (ħ = k_B = 1).
    pub beta: f64,
    pub dim_cap: usize,
}

impl OhmicBathSpec {
    pub fn new(alpha: f64, omega_c: f64, n_modes: usize, fock_cutoff: usize, beta: f64) -> Result<Self> {
        let s = OhmicBathSpec { alpha, omega_c, n_modes, fock_cutoff, beta, dim_cap: DEFAULT_DIM_CAP };
        s.validate()?;
        Ok(s)
    }

    /// Composite dimension `2·(n_max+1)^N`, or `None` on overflow.
    pub fn checked_dimension(&self) -> Option<usize> {
        (self.fock_cutoff + 1).checked_pow(u32::try_from(self.n_modes).ok()?).and_then(|d| d.checked_mul(2))
    }

    /// `2·(n_max+1)^N` as a float, for diagnostics when it does not fit in `usize`.
    pub fn dimension_f64(&self) -> f64 {
        2.0 * ((self.fock_cutoff + 1) as f64).powf(self.n_modes as f64)
    }

    pub fn dim_env(&self) -> usize {
        self.checked_dimension().map(|d| d / 2).unwrap_or(usize::MAX)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.omega_c > 0.0 && self.omega_c.is_finite()) {
            return Err(Error::Config(format!("omega_c must be > 0, got {}", self.omega_c)));
        }
        if !(self.beta > 0.0) || self.beta.is_nan() {
            return Err(Error::Config(format!("beta must be > 0, got {}", self.beta)));
        }
        if self.n_modes == 0 {
            return Err(Error::Config("n_modes must be >= 1".into()));
        }
        if self.fock_cutoff == 0 {
            return Err(Error::Config("fock_cutoff must be >= 1".into()));
        }
        match self.checked_dimension() {
            Some(d) if d <= self.dim_cap => Ok(()),
            _ => Err(Error::Config(format!(
                "Hilbert dimension 2*({}+1)^{} = {} exceeds the cap {}",
                self.fock_cutoff,
                self.n_modes,
                self.dimension_f64(),
                self.dim_cap
            ))),
        }
    }

    pub fn frequency_spacing(&self) -> f64 {
        2.0 * self.omega_c / self.n_modes as f64
    }

    /// `ω_i = i·Δω`, `i = 1..=N`.
    pub fn mode_frequencies(&self) -> Vec<f64> {
        let dw = self.frequency_spacing();
        (1..=self.n_modes).map(|i| i as f64 * dw).collect()
    }

    /// `c_i = √((2α/π)·ω_i·e^{−ω_i/ω_c}·Δω)`.
    pub fn couplings(&self) -> Vec<f64> {
        let dw = self.frequency_spacing();
        self.mode_frequencies()
            .iter()
            .map(|&w| (2.0 * self.alpha / std::f64::consts::PI * w * (-w / self.omega_c).exp() * dw).sqrt())
            .collect()
    }

    /// Occupation numbers of environment basis state `e`.
    pub fn occupations(&self, mut e: usize) -> Vec<usize> {
        let base = self.fock_cutoff + 1;
        let mut n = vec![0; self.n_modes];
        for slot in n.iter_mut().rev() {
            *slot = e % base;
            e /= base;
        }
        n
    }

    /// Bare bath energy `Σ ω_i n_i` of every environment basis state.
    pub fn bare_energies(&self) -> Vec<f64> {
        let w = self.mode_frequencies();
        (0..self.dim_env())
            .map(|e| self.occupations(e).iter().zip(&w).map(|(&n, &w)| n as f64 * w).sum())
            .collect()
    }
}

/// Spin-boson Hamiltonian together with its eigendecomposition.
#[derive(Debug, Clone)]
pub struct SpinBosonSystem {
    pub spec: OhmicBathSpec,
    pub delta: f64,
    pub epsilon: f64,
    pub hamiltonian: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
    /// Columns are eigenvectors; orthogonal.
    pub eigenvectors: DMatrix<f64>,
    pub mode_frequencies: Vec<f64>,
    pub couplings: Vec<f64>,
}

impl SpinBosonSystem {
    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn dim_env(&self) -> usize {
        self.dim() / 2
    }

    /// `max |H − Hᵀ|`
    pub fn hermiticity_defect(&self) -> f64 {
        (&self.hamiltonian - self.hamiltonian.transpose()).amax()
    }

    /// `max |VᵀHV − diag(E)|`
    pub fn diagonalization_defect(&self) -> f64 {
        let v = &self.eigenvectors;
        let mut d = v.transpose() * &self.hamiltonian * v;
        for (i, &e) in self.eigenvalues.iter().enumerate() {
            d[(i, i)] -= e;
        }
        d.amax()
    }

    /// `⟨ψ|H|ψ⟩`
    pub fn energy(&self, psi: &CompositeState) -> f64 {
        let (re, im) = split(psi.amplitudes());
        re.dot(&(&self.hamiltonian * &re)) + im.dot(&(&self.hamiltonian * &im))
    }
}

fn split(v: &[Complex64]) -> (DVector<f64>, DVector<f64>) {
    (
        DVector::from_iterator(v.len(), v.iter().map(|z| z.re)),
        DVector::from_iterator(v.len(), v.iter().map(|z| z.im)),
    )
}

/// Builds `H` on the composite space and diagonalizes it.
pub fn build_hamiltonian(spec: &OhmicBathSpec, delta: f64, epsilon: f64) -> Result<SpinBosonSystem> {
    spec.validate()?;
    if !(delta.is_finite() && epsilon.is_finite()) {
        return Err(Error::Config("delta and epsilon must be finite".into()));
    }
    let dim_env = spec.dim_env();
    let dim = 2 * dim_env;
    let w = spec.mode_frequencies();
    let c = spec.couplings();
    let base = spec.fock_cutoff + 1;
    let bare = spec.bare_energies();

    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for (s, sz) in [(0usize, 1.0f64), (1, -1.0)] {
        let off = s * dim_env;
        for e in 0..dim_env {
            h[(off + e, off + e)] = 0.5 * epsilon * sz + bare[e];
            // (σz/2) c_i a_i† : raises mode i by one
            let occ = spec.occupations(e);
            let mut stride = 1;
            for i in (0..spec.n_modes).rev() {
                if occ[i] < spec.fock_cutoff && c[i] != 0.0 {
                    let e2 = e + stride;
                    let amp = 0.5 * sz * c[i] * ((occ[i] + 1) as f64).sqrt();
                    h[(off + e2, off + e)] = amp;
                    h[(off + e, off + e2)] = amp;
                }
                stride *= base;
            }
        }
    }
    for e in 0..dim_env {
        h[(e, dim_env + e)] = 0.5 * delta;
        h[(dim_env + e, e)] = 0.5 * delta;
    }

    let norm = h.amax().max(f64::MIN_POSITIVE);
    let eig = SymmetricEigen::try_new(h.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let sys = SpinBosonSystem {
        spec: *spec,
        delta,
        epsilon,
        hamiltonian: h,
        eigenvalues: eig.eigenvalues,
        eigenvectors: eig.eigenvectors,
        mode_frequencies: w,
        couplings: c,
    };
    let defect = sys.diagonalization_defect();
    if !(defect <= 1e-8 * norm * dim as f64) {
        return Err(Error::Numerical(format!("eigendecomposition defect {defect} too large")));
    }
    Ok(sys)
}

/// `ψ(t) = V e^{−iEt} Vᵀ ψ(0)`.
pub fn evolve_exact(sys: &SpinBosonSystem, psi0: &CompositeState, t: f64) -> Result<CompositeState> {
    if psi0.amplitudes().len() != sys.dim() {
        return Err(Error::Data(format!(
            "state dimension {} does not match system dimension {}",
            psi0.amplitudes().len(),
            sys.dim()
        )));
    }
    if !t.is_finite() {
        return Err(Error::Config(format!("time must be finite, got {t}")));
    }
    if t == 0.0 {
        return Ok(psi0.clone());
    }
    let (re, im) = split(psi0.amplitudes());
    let v = &sys.eigenvectors;
    let cr = v.tr_mul(&re);
    let ci = v.tr_mul(&im);
    let mut rr = DVector::zeros(cr.len());
    let mut ri = DVector::zeros(cr.len());
    for k in 0..cr.len() {
        let (s, c) = (-sys.eigenvalues[k] * t).sin_cos();
        rr[k] = c * cr[k] - s * ci[k];
        ri[k] = s * cr[k] + c * ci[k];
    }
    let out_r = v * rr;
    let out_i = v * ri;
    let amps = out_r.iter().zip(out_i.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect();
    Ok(CompositeState::from_raw(sys.dim_env(), amps))
}

/// One thermally weighted reservoir basis state.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsEntry {
    pub weight: f64,
    /// Environment basis index.
    pub index: usize,
    pub occupations: Vec<usize>,
    pub bare_energy: f64,
}

/// Gibbs ensemble over bare-bath Fock states.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsEnsembleStates {
    pub dim_env: usize,
    /// Entries sorted by decreasing weight; weights sum to 1.
    pub entries: Vec<GibbsEntry>,
    /// Fraction of the full Gibbs weight kept before renormalization.
    pub retained_weight: f64,
}

impl GibbsEnsembleStates {
    /// Environment vector `|E_n⟩` of entry `n`.
    pub fn env_state(&self, n: usize) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); self.dim_env];
        v[self.entries[n].index] = Complex64::new(1.0, 0.0);
        v
    }

    pub fn effective_size(&self) -> f64 {
        1.0 / self.entries.iter().map(|e| e.weight * e.weight).sum::<f64>()
    }
}

/// Thermal weights `w_n ∝ e^{−βE_n}` of bare-bath eigenstates, truncated to
/// cumulative weight ≥ 1 − 10⁻⁶ and renormalized.
pub fn gibbs_ensemble_states(spec: &OhmicBathSpec) -> Result<GibbsEnsembleStates> {
    spec.validate()?;
    let energies = spec.bare_energies();
    let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let boltzmann: Vec<f64> = energies.iter().map(|&e| (-spec.beta * (e - e_min)).exp()).collect();
    let mut z = CompensatedSum::default();
    for &b in &boltzmann {
        z.add(b);
    }
    let z = z.value();
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&a, &b| boltzmann[b].total_cmp(&boltzmann[a]).then(a.cmp(&b)));

    let mut kept = Vec::new();
    let mut cum = CompensatedSum::default();
    for idx in order {
        cum.add(boltzmann[idx] / z);
        kept.push(idx);
        if cum.value() >= GIBBS_RETAINED_WEIGHT {
            break;
        }
    }
    let retained = cum.value();
    let entries = kept
        .into_iter()
        .map(|idx| GibbsEntry {
            weight: boltzmann[idx] / z / retained,
            index: idx,
            occupations: spec.occupations(idx),
            bare_energy: energies[idx],
        })
        .collect();
    Ok(GibbsEnsembleStates { dim_env: spec.dim_env(), entries, retained_weight: retained })
}

fn check_ensemble(sys: &SpinBosonSystem, ens: &GibbsEnsembleStates) -> Result<()> {
    if ens.dim_env != sys.dim_env() {
        return Err(Error::Data(format!(
            "ensemble environment dimension {} does not match system {}",
            ens.dim_env,
            sys.dim_env()
        )));
    }
    if ens.entries.is_empty() {
        return Err(Error::Estimation("empty Gibbs ensemble".into()));
    }
    Ok(())
}

/// Evolves `|L⟩ ⊗ |E_n⟩` to time `t` for every Gibbs entry (in entry order).
pub fn evolve_gibbs_states(
    sys: &SpinBosonSystem,
    ens: &GibbsEnsembleStates,
    t: f64,
) -> Result<Vec<CompositeState>> {
    check_ensemble(sys, ens)?;
    (0..ens.entries.len())
        .into_par_iter()
        .map(|n| {
            let psi0 = tensor_embed(&TwoLevelState::left(), &ens.env_state(n))?;
            evolve_exact(sys, &psi0, t)
        })
        .collect()
}

/// Thermal correlator at one time, together with the per-entry probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalCorrelator {
    pub time: f64,
    /// `Σ_n w_n P⁽ⁿ⁾(1 − P⁽ⁿ⁾)`
    pub value: f64,
    /// `(w_n, P⁽ⁿ⁾_{L→L}(t))`
    pub ensemble: WeightedEnsemble,
}

impl ThermalCorrelator {
    pub fn mean_probability(&self) -> f64 {
        self.ensemble.mean()
    }
}

fn correlator_from_states(
    ens: &GibbsEnsembleStates,
    states: &[CompositeState],
    t: f64,
) -> Result<ThermalCorrelator> {
    let mut value = CompensatedSum::default();
    let mut entries = Vec::with_capacity(states.len());
    for (entry, psi) in ens.entries.iter().zip(states) {
        let p = psi.probability(Side::L).clamp(0.0, 1.0);
        value.add(entry.weight * p * (1.0 - p));
        entries.push((entry.weight, p));
    }
    Ok(ThermalCorrelator {
        time: t,
        value: value.value(),
        ensemble: WeightedEnsemble::from_unnormalized(entries)?,
    })
}

/// `⟨𝒫_{L→L}(t) 𝒫_{L→R}(t)⟩_th = Σ_n w_n P⁽ⁿ⁾(t)(1 − P⁽ⁿ⁾(t))` for initial states
/// `|L⟩ ⊗ |E_n⟩`.
pub fn thermal_correlator(
    sys: &SpinBosonSystem,
    ens: &GibbsEnsembleStates,
    t: f64,
) -> Result<ThermalCorrelator> {
    let states = evolve_gibbs_states(sys, ens, t)?;
    correlator_from_states(ens, &states, t)
}

/// Same as [`thermal_correlator`] but reuses already evolved states (one per entry).
pub fn thermal_correlator_of_states(
    ens: &GibbsEnsembleStates,
    states: &[CompositeState],
    t: f64,
) -> Result<ThermalCorrelator> {
    if states.len() != ens.entries.len() {
        return Err(Error::Data("one state per Gibbs entry expected".into()));
    }
    correlator_from_states(ens, states, t)
}

/// Entangled state produced by free evolution of `|L⟩ ⊗ |env0⟩` in the symmetric system,
/// decomposed as `ν_L |L⟩⊗|P_LL⟩ + ν_R |R⟩⊗|P_LR⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperposedState {
    pub state: CompositeState,
    pub t_p: f64,
    pub nu_l: f64,
    pub nu_r: f64,
    /// Normalized conditional environment state of the left branch (None if `ν_L = 0`).
    pub env_ll: Option<Vec<Complex64>>,
    pub env_lr: Option<Vec<Complex64>>,
}

impl SuperposedState {
    /// `⟨P_LL|P_LR⟩`, when both branches are populated.
    pub fn branch_overlap(&self) -> Option<Complex64> {
        let (a, b) = (self.env_ll.as_ref()?, self.env_lr.as_ref()?);
        Some(a.iter().zip(b).map(|(x, y)| x.conj() * y).sum())
    }
}

const BRANCH_EPS: f64 = 1e-300;

/// Prepares the entangled superposed state by evolving `|L⟩ ⊗ env0` for `t_p`.
pub fn prepare_superposed(sys: &SpinBosonSystem, env0: &[Complex64], t_p: f64) -> Result<SuperposedState> {
    if sys.epsilon != 0.0 {
        return Err(Error::Precondition(format!(
            "preparation requires a symmetric Hamiltonian (epsilon = 0), got epsilon = {}",
            sys.epsilon
        )));
    }
    if env0.len() != sys.dim_env() {
        return Err(Error::Data(format!(
            "environment vector has length {}, expected {}",
            env0.len(),
            sys.dim_env()
        )));
    }
    let psi0 = tensor_embed(&TwoLevelState::left(), env0)?;
    let state = evolve_exact(sys, &psi0, t_p)?;
    let branch = |side: Side| {
        let slice = state.env_slice(side);
        let nu = norm_sqr(slice).sqrt();
        let env = (nu > BRANCH_EPS).then(|| slice.iter().map(|z| z / nu).collect::<Vec<_>>());
        (nu, env)
    };
    let (nu_l, env_ll) = branch(Side::L);
    let (nu_r, env_lr) = branch(Side::R);
    if (nu_l * nu_l + nu_r * nu_r - 1.0).abs() > PRECONDITION_TOL {
        return Err(Error::Numerical("prepared state lost normalization".into()));
    }
    Ok(SuperposedState { state, t_p, nu_l, nu_r, env_ll, env_lr })
}

/// Sample times of the window average: midpoints of `n` equal sub-intervals.
pub fn window_times(t_a: f64, t_b: f64, n_samples: usize) -> Vec<f64> {
    let h = (t_b - t_a) / n_samples as f64;
    (0..n_samples).map(|j| t_a + (j as f64 + 0.5) * h).collect()
}

fn check_window(window: (f64, f64), n_samples: usize) -> Result<()> {
    let (t_a, t_b) = window;
    if !(t_a >= 0.0 && t_b > t_a && t_b.is_finite()) {
        return Err(Error::Config(format!("need 0 <= t_a < t_b, got ({t_a}, {t_b})")));
    }
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be >= 1".into()));
    }
    Ok(())
}

/// Time average of `P_L(t) − P_R(t)` over `n_samples` midpoint-spaced times in the window.
pub fn occupational_asymmetry(
    sys: &SpinBosonSystem,
    psi_s: &CompositeState,
    window: (f64, f64),
    n_samples: usize,
) -> Result<f64> {
    check_window(window, n_samples)?;
    let mut acc = CompensatedSum::default();
    for t in window_times(window.0, window.1, n_samples) {
        let psi = evolve_exact(sys, psi_s, t)?;
        acc.add(psi.probability(Side::L) - psi.probability(Side::R));
    }
    Ok((acc.value() / n_samples as f64).clamp(-1.0, 1.0))
}

/// Gibbs average of the asymmetry for initial states `|L⟩ ⊗ |E_n⟩`.
pub fn thermal_asymmetry(
    sys: &SpinBosonSystem,
    ens: &GibbsEnsembleStates,
    window: (f64, f64),
    n_samples: usize,
) -> Result<f64> {
    check_ensemble(sys, ens)?;
    check_window(window, n_samples)?;
    let per_entry: Vec<f64> = (0..ens.entries.len())
        .into_par_iter()
        .map(|n| {
            let psi0 = tensor_embed(&TwoLevelState::left(), &ens.env_state(n))?;
            occupational_asymmetry(sys, &psi0, window, n_samples)
        })
        .collect::<Result<_>>()?;
    let mut acc = CompensatedSum::default();
    for (e, a) in ens.entries.iter().zip(per_entry) {
        acc.add(e.weight * a);
    }
    Ok(acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn spec(alpha: f64, n: usize, nmax: usize, beta: f64) -> OhmicBathSpec {
        OhmicBathSpec::new(alpha, 5.0, n, nmax, beta).unwrap()
    }

    fn vacuum(dim_env: usize) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); dim_env];
        v[0] = Complex64::new(1.0, 0.0);
        v
    }

    #[test]
    fn decoupled_spectrum_is_kronecker_sum() {
        let s = spec(0.0, 2, 1, 1.0);
        let sys = build_hamiltonian(&s, 1.0, 0.0).unwrap();
        let bare = s.bare_energies();
        let mut expected: Vec<f64> = bare.iter().flat_map(|&b| [b - 0.5, b + 0.5]).collect();
        expected.sort_by(f64::total_cmp);
        let mut got: Vec<f64> = sys.eigenvalues.iter().copied().collect();
        got.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{got:?} vs {expected:?}");
        }
        // no spin-bath terms
        for i in 0..sys.dim() {
            for j in 0..sys.dim() {
                let same_spin = (i < 4) == (j < 4);
                if same_spin && i != j {
                    assert_eq!(sys.hamiltonian[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn single_mode_no_tunneling_closed_form() {
        // Δ = 0: each spin block is [[±ε/2, ±c/2], [±c/2, ω ± ε/2]].
        let s = OhmicBathSpec::new(0.4, 2.0, 1, 1, 1.0).unwrap();
        let eps = 0.3;
        let sys = build_hamiltonian(&s, 0.0, eps).unwrap();
        let w = s.mode_frequencies()[0];
        let c = s.couplings()[0];
        let mut expected = Vec::new();
        for sz in [1.0, -1.0] {
            let (a, d, b) = (0.5 * eps * sz, w + 0.5 * eps * sz, 0.5 * c * sz);
            let mid = 0.5 * (a + d);
            let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            expected.extend([mid - r, mid + r]);
        }
        expected.sort_by(f64::total_cmp);
        let mut got: Vec<f64> = sys.eigenvalues.iter().copied().collect();
        got.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hermitian_and_diagonalized() {
        let s = OhmicBathSpec::new(0.3, 5.0, 4, 2, 1.0).unwrap();
        let sys = build_hamiltonian(&s, 1.0, 0.2).unwrap();
        assert_eq!(sys.dim(), 162);
        assert!(sys.hermiticity_defect() <= 1e-14);
        assert!(sys.diagonalization_defect() <= 1e-8 * sys.hamiltonian.amax());
    }

    #[test]
    fn dimension_cap() {
        let r = OhmicBathSpec::new(0.1, 5.0, 10, 4, 1.0);
        match r {
            Err(Error::Config(msg)) => assert!(msg.contains("19531250"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn spec_validation() {
        assert!(OhmicBathSpec::new(-0.1, 5.0, 1, 1, 1.0).is_err());
        assert!(OhmicBathSpec::new(0.1, 0.0, 1, 1, 1.0).is_err());
        assert!(OhmicBathSpec::new(0.1, 5.0, 1, 1, 0.0).is_err());
        assert!(OhmicBathSpec::new(0.1, 5.0, 0, 1, 1.0).is_err());
    }

    #[test]
    fn gibbs_zero_temperature() {
        let s = spec(0.1, 3, 2, 50.0 / 10.0 * 3.0 / 1.0);
        // min ω = 10/3, β·ω_min = 50
        let g = gibbs_ensemble_states(&s).unwrap();
        assert_eq!(g.entries.len(), 1);
        assert_eq!(g.entries[0].index, 0);
        assert_eq!(g.entries[0].weight, 1.0);
    }

    #[test]
    fn gibbs_closed_form() {
        // N = 1: ω = 10, β = 0.1
        let s = spec(0.1, 1, 2, 0.1);
        let g = gibbs_ensemble_states(&s).unwrap();
        let z = 1.0 + (-1.0f64).exp() + (-2.0f64).exp();
        let expected = [1.0 / z, (-1.0f64).exp() / z, (-2.0f64).exp() / z];
        assert_eq!(g.entries.len(), 3);
        for (e, x) in g.entries.iter().zip(expected) {
            assert!((e.weight - x).abs() < 1e-15);
        }
    }

    #[test]
    fn gibbs_retains_enough_weight() {
        for (n, nmax, beta) in [(2, 3, 0.05), (3, 2, 0.3), (4, 2, 0.02), (1, 6, 1.0), (5, 1, 0.5)] {
            let g = gibbs_ensemble_states(&spec(0.1, n, nmax, beta)).unwrap();
            assert!(g.retained_weight >= 1.0 - 1e-6);
            let total: f64 = g.entries.iter().map(|e| e.weight).sum();
            assert!((total - 1.0).abs() < 1e-10);
            let mut idx: Vec<_> = g.entries.iter().map(|e| e.index).collect();
            idx.dedup();
            assert_eq!(idx.len(), g.entries.len());
        }
    }

    #[test]
    fn evolve_identity_and_dimension_check() {
        let s = spec(0.3, 2, 2, 1.0);
        let sys = build_hamiltonian(&s, 1.0, 0.0).unwrap();
        let psi = tensor_embed(&TwoLevelState::plus(), &vacuum(sys.dim_env())).unwrap();
        let out = evolve_exact(&sys, &psi, 0.0).unwrap();
        for (a, b) in out.amplitudes().iter().zip(psi.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
        let wrong = tensor_embed(&TwoLevelState::left(), &vacuum(3)).unwrap();
        assert!(matches!(evolve_exact(&sys, &wrong, 1.0), Err(Error::Data(_))));
    }

    #[test]
    fn decoupled_rabi() {
        let s = spec(0.0, 2, 2, 1.0);
        let sys = build_hamiltonian(&s, 1.0, 0.0).unwrap();
        let psi = tensor_embed(&TwoLevelState::left(), &vacuum(sys.dim_env())).unwrap();
        for t in [0.3f64, 1.0, 2.5, 7.0] {
            let p = evolve_exact(&sys, &psi, t).unwrap().probability(Side::L);
            assert!((p - (0.5 * t).cos().powi(2)).abs() < 1e-8);
        }
    }

    #[test]
    fn composition_and_energy() {
        let s = spec(0.5, 3, 2, 1.0);
        let sys = build_hamiltonian(&s, 1.0, 0.1).unwrap();
        let dim = sys.dim();
        let raw: Vec<Complex64> = (0..dim)
            .map(|i| Complex64::new(((i * 7 + 3) % 11) as f64 - 5.0, ((i * 5 + 1) % 13) as f64 - 6.0))
            .collect();
        let n = norm_sqr(&raw).sqrt();
        let psi = CompositeState::new(dim / 2, raw.iter().map(|z| z / n).collect()).unwrap();
        let e0 = sys.energy(&psi);
        let a = evolve_exact(&sys, &psi, 1.3).unwrap();
        let b = evolve_exact(&sys, &a, 2.1).unwrap();
        let direct = evolve_exact(&sys, &psi, 3.4).unwrap();
        for (x, y) in b.amplitudes().iter().zip(direct.amplitudes()) {
            assert!((x - y).norm() < 1e-9);
        }
        assert!((direct.norm() - 1.0).abs() < 1e-10);
        assert!((sys.energy(&direct) - e0).abs() < 1e-9);
    }

    #[test]
    fn thermal_correlator_basics() {
        let s = spec(0.0, 2, 2, 0.1);
        let sys = build_hamiltonian(&s, 1.0, 0.0).unwrap();
        let g = gibbs_ensemble_states(&s).unwrap();
        assert!(g.entries.len() > 1);
        assert_eq!(thermal_correlator(&sys, &g, 0.0).unwrap().value, 0.0);
        let t = 1.7;
        let r = thermal_correlator(&sys, &g, t).unwrap();
        let p = (0.5 * t).cos().powi(2);
        assert!((r.value - p * (1.0 - p)).abs() < 1e-10);
        for &(_, pn) in r.ensemble.entries() {
            assert!((pn - p).abs() < 1e-10);
        }
    }

    #[test]
    fn thermal_correlator_composition() {
        let s = spec(0.5, 2, 2, 0.2);
        let sys = build_hamiltonian(&s, 1.0, 0.0).unwrap();
        let g = gibbs_ensemble_states(&s).unwrap();
        let t = 4.0;
        let direct = thermal_correlator(&sys, &g, t).unwrap();
        let half = evolve_gibbs_states(&sys, &g, t / 2.0).unwrap();
        let stepped: Vec<_> = half.iter().map(|p| evolve_exact(&sys, p, t / 2.0).unwrap()).collect();
        let r = thermal_correlator_of_states(&g, &stepped, t).unwrap();
        assert!((r.value - direct.value).abs() < 1e-9);
    }

    #[test]
    fn alpha_continuity() {
        let t = 6.0f64;
        let s = spec(1e-6, 2, 2, 0.2);
        let sys = build_hamiltonian(&s, 1.0, 0.0).unwrap();
        let g = gibbs_ensemble_states(&s).unwrap();
        let p = (0.5 * t).cos().powi(2);
        let v = thermal_correlator(&sys, &g, t).unwrap().value;
        assert!((v - p * (1.0 - p)).abs() < 1e-3);
    }

    #[test]
    fn preparation() {
        let s = spec(0.0, 2, 2, 1.0);
        let sys = build_hamiltonian(&s, 1.0, 0.0).unwrap();
        let env0 = vacuum(sys.dim_env());
        let p = prepare_superposed(&sys, &env0, 0.0).unwrap();
        assert!((p.nu_l - 1.0).abs() < 1e-12 && p.nu_r.abs() < 1e-12);
        for (a, b) in p.env_ll.as_ref().unwrap().iter().zip(&env0) {
            assert!((a - b).norm() < 1e-12);
        }
        let p = prepare_superposed(&sys, &env0, 1.1).unwrap();
        assert!((p.branch_overlap().unwrap().norm() - 1.0).abs() < 1e-8);
        assert!((p.nu_l.powi(2) + p.nu_r.powi(2) - 1.0).abs() < 1e-10);

        let coupled = build_hamiltonian(&spec(0.5, 2, 2, 1.0), 1.0, 0.0).unwrap();
        let p = prepare_superposed(&coupled, &env0, 2.0).unwrap();
        assert!(p.branch_overlap().unwrap().norm() < 1.0 - 1e-6);

        let biased = build_hamiltonian(&s, 1.0, 0.2).unwrap();
        assert!(matches!(prepare_superposed(&biased, &env0, 1.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn asymmetry_examples() {
        let s = spec(0.5, 2, 2, 1.0);
        let frozen = build_hamiltonian(&spec(0.0, 2, 2, 1.0), 0.0, 0.0).unwrap();
        let psi = tensor_embed(&TwoLevelState::left(), &vacuum(frozen.dim_env())).unwrap();
        assert_eq!(occupational_asymmetry(&frozen, &psi, (0.0, 10.0), 64).unwrap(), 1.0);

        let free = build_hamiltonian(&spec(0.0, 2, 2, 1.0), 1.0, 0.0).unwrap();
        // three full periods of cos(t)
        let a = occupational_asymmetry(&free, &psi, (1.0, 1.0 + 6.0 * PI), 64).unwrap();
        assert!(a.abs() < 1e-8);

        let sys = build_hamiltonian(&s, 1.0, 0.0).unwrap();
        assert!(occupational_asymmetry(&sys, &psi, (2.0, 1.0), 10).is_err());
        assert!(occupational_asymmetry(&sys, &psi, (0.0, 1.0), 0).is_err());
        let a = occupational_asymmetry(&sys, &psi, (0.0, 30.0), 64).unwrap();
        assert!((-1.0..=1.0).contains(&a));
    }
}
