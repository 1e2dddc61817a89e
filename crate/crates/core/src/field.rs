//! Two-level system driven by a classical Gaussian white-noise bias.
//!
//! The Hamiltonian is `H(t) = (Δ/2)σx + (η(t)/2)σz` with `⟨η(t)η(t′)⟩ = Γ δ(t−t′)`.
//! White noise is discretized as a piecewise-constant bias: on step `j`, `η_j` is an
//! independent normal sample of variance `Γ/dt`, and the state is advanced by the exact
//! propagator of the constant Hamiltonian over that step.
//!
//! # Random number contract
//!
//! Noise is counter-based: the generator for a trajectory is ChaCha8 (`rand_chacha` 0.9)
//! seeded with `seed_from_u64(master_seed)` on stream `trajectory_id`. Step `j` consumes
//! exactly two 64-bit words starting at word position `4·j`, turned into one standard
//! normal by Box–Muller (`u1 ∈ (0,1]`, `u2 ∈ [0,1)`, `z = √(−2 ln u1)·cos(2π u2)`).
//! Any `(master_seed, trajectory_id, step)` therefore maps to the same `η`, whatever
//! order or thread the trajectory is computed on.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::qstate::{StepUnitary, TwoLevelState};

/// Gaussian white-noise specification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseProcess {
    /// Noise strength Γ (ħ = 1).
    pub gamma: f64,
    /// Time step.
    pub dt: f64,
    pub master_seed: u64,
}

impl NoiseProcess {
    pub fn new(gamma: f64, dt: f64, master_seed: u64) -> Result<Self> {
        let p = NoiseProcess { gamma, dt, master_seed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        Ok(())
    }

    /// Per-step standard deviation `√(Γ/dt)`.
    pub fn sigma(&self) -> f64 {
        (self.gamma / self.dt).sqrt()
    }

    /// Noise stream of one trajectory positioned at `first_step`.
    pub fn stream(&self, trajectory_id: u64, first_step: u64) -> NoiseStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(trajectory_id);
        rng.set_word_pos(WORDS_PER_STEP as u128 * first_step as u128);
        NoiseStream { rng, sigma: self.sigma() }
    }
}

const WORDS_PER_STEP: u64 = 4;
const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

/// Sequential view on one trajectory's noise samples.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    sigma: f64,
}

impl NoiseStream {
    #[inline]
    fn standard_normal(&mut self) -> f64 {
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        let u1 = ((a >> 11) + 1) as f64 * TWO_POW_M53;
        let u2 = (b >> 11) as f64 * TWO_POW_M53;
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Bias for the next step.
    #[inline]
    pub fn next_eta(&mut self) -> f64 {
        let z = self.standard_normal();
        if self.sigma == 0.0 {
            0.0
        } else {
            self.sigma * z
        }
    }
}

/// Piecewise-constant bias path `η_0 … η_{n−1}` for one trajectory.
pub fn sample_noise_path(proc: &NoiseProcess, n_steps: usize, trajectory_id: u64) -> Result<Vec<f64>> {
    proc.validate()?;
    if n_steps == 0 {
        return Err(Error::Config("n_steps must be >= 1".into()));
    }
    let mut stream = proc.stream(trajectory_id, 0);
    Ok((0..n_steps).map(|_| stream.next_eta()).collect())
}

/// Recorded evolution of one noise realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub trajectory_id: u64,
    pub times: Vec<f64>,
    /// `𝒫_{L→L}` samples, i.e. `|amp_L|²` at `times`.
    pub p_ll: Vec<f64>,
    pub final_state: TwoLevelState,
}

/// Integrator state of a single trajectory, advanced step by step.
#[derive(Debug, Clone)]
pub struct Stepper {
    delta: f64,
    dt: f64,
    noise: NoiseStream,
    state: TwoLevelState,
    step: u64,
}

impl Stepper {
    pub fn new(delta: f64, proc: &NoiseProcess, psi0: TwoLevelState, trajectory_id: u64) -> Self {
        Stepper { delta, dt: proc.dt, noise: proc.stream(trajectory_id, 0), state: psi0, step: 0 }
    }

    pub fn state(&self) -> &TwoLevelState {
        &self.state
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    #[inline]
    pub fn step(&mut self) {
        let eta = self.noise.next_eta();
        self.state = StepUnitary::rotation(self.delta, eta, self.dt).apply(&self.state);
        self.step += 1;
    }

    pub fn advance(&mut self, n: u64) {
        for _ in 0..n {
            self.step();
        }
    }
}

fn check_inputs(delta: f64, psi0: &TwoLevelState, record_stride: usize) -> Result<()> {
    if !delta.is_finite() {
        return Err(Error::Config(format!("delta must be finite, got {delta}")));
    }
    if record_stride == 0 {
        return Err(Error::Config("record_stride must be >= 1".into()));
    }
    psi0.check_normalized("evolve_trajectory")
}

/// Evolves one noise realization for `n_steps` steps, recording `𝒫_{L→L}` at `t = 0`,
/// every `record_stride` steps, and at the final step.
pub fn evolve_trajectory(
    delta: f64,
    proc: &NoiseProcess,
    psi0: TwoLevelState,
    n_steps: usize,
    record_stride: usize,
    trajectory_id: u64,
) -> Result<Trajectory> {
    proc.validate()?;
    check_inputs(delta, &psi0, record_stride)?;
    let mut stepper = Stepper::new(delta, proc, psi0, trajectory_id);
    let mut times = vec![0.0];
    let mut p_ll = vec![psi0.p_left()];
    for j in 1..=n_steps {
        stepper.step();
        if j % record_stride == 0 || j == n_steps {
            times.push(j as f64 * proc.dt);
            p_ll.push(stepper.state.p_left());
        }
    }
    Ok(Trajectory { trajectory_id, times, p_ll, final_state: stepper.state })
}

/// Evolves along an explicit bias path (one `η` per step of length `dt`).
pub fn evolve_with_path(
    delta: f64,
    dt: f64,
    path: &[f64],
    psi0: TwoLevelState,
    record_stride: usize,
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("dt must be > 0, got {dt}")));
    }
    check_inputs(delta, &psi0, record_stride)?;
    let mut state = psi0;
    let mut times = vec![0.0];
    let mut p_ll = vec![psi0.p_left()];
    for (i, &eta) in path.iter().enumerate() {
        state = StepUnitary::rotation(delta, eta, dt).apply(&state);
        let j = i + 1;
        if j % record_stride == 0 || j == path.len() {
            times.push(j as f64 * dt);
            p_ll.push(state.p_left());
        }
    }
    Ok(Trajectory { trajectory_id: 0, times, p_ll, final_state: state })
}

/// Exact noise-averaged coherence decay `e^{−Γt/2}` for `Δ = 0`. Requires `Γ ≥ 0`.
pub fn dephasing_envelope(gamma: f64, times: &[f64]) -> Vec<f64> {
    debug_assert!(gamma >= 0.0);
    times.iter().map(|&t| (-0.5 * gamma * t).exp()).collect()
}

/// Default step: `0.02·min(1/Δ, 1/Γ)`.
pub fn default_dt(delta: f64, gamma: f64) -> f64 {
    let fastest = delta.abs().max(gamma);
    if fastest > 0.0 {
        0.02 / fastest
    } else {
        0.02
    }
}

/// Slowest nonzero rate among `Δ` and `Γ` (1 when both vanish).
pub fn slowest_rate(delta: f64, gamma: f64) -> f64 {
    match (delta.abs() > 0.0, gamma > 0.0) {
        (true, true) => delta.abs().min(gamma),
        (true, false) => delta.abs(),
        (false, true) => gamma,
        (false, false) => 1.0,
    }
}

/// Default hard cap on the evolution time, `500 / min(Δ, Γ)`.
pub fn default_time_cap(delta: f64, gamma: f64) -> f64 {
    500.0 / slowest_rate(delta, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    #[test]
    fn zero_gamma_gives_zero_path() {
        let p = NoiseProcess::new(0.0, 0.01, 3).unwrap();
        assert!(sample_noise_path(&p, 100, 0).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn noise_variance() {
        let p = NoiseProcess::new(1.0, 0.01, 42).unwrap();
        let path = sample_noise_path(&p, 100_000, 0).unwrap();
        let n = path.len() as f64;
        let mean = path.iter().sum::<f64>() / n;
        let var = path.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        assert!((99.0..=101.0).contains(&var), "variance {var}");
        assert!(mean.abs() < 5.0 * (100.0 / n).sqrt());
    }

    #[test]
    fn noise_is_deterministic_and_seekable() {
        let p = NoiseProcess::new(1.0, 0.01, 42).unwrap();
        let a = sample_noise_path(&p, 50, 7).unwrap();
        let b = sample_noise_path(&p, 50, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_noise_path(&p, 50, 8).unwrap();
        assert_ne!(a, c);
        let mut s = p.stream(7, 20);
        assert_eq!(s.next_eta(), a[20]);
        assert_eq!(s.next_eta(), a[21]);
    }

    #[test]
    fn bad_process_rejected() {
        assert!(matches!(NoiseProcess::new(-1.0, 0.01, 0), Err(Error::Config(_))));
        assert!(matches!(NoiseProcess::new(1.0, 0.0, 0), Err(Error::Config(_))));
        let p = NoiseProcess { gamma: -1.0, dt: 0.1, master_seed: 0 };
        assert!(sample_noise_path(&p, 1, 0).is_err());
    }

    #[test]
    fn no_tunneling_freezes_population() {
        let p = NoiseProcess::new(1.0, 0.01, 1).unwrap();
        let tr = evolve_trajectory(0.0, &p, TwoLevelState::left(), 1000, 10, 0).unwrap();
        assert!(tr.p_ll.iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rabi_without_noise() {
        let p = NoiseProcess::new(0.0, 0.001, 1).unwrap();
        let n = (PI / 0.001).round() as usize;
        let dt = PI / n as f64;
        let p = NoiseProcess { dt, ..p };
        let tr = evolve_trajectory(1.0, &p, TwoLevelState::left(), n, 100, 0).unwrap();
        for (&t, &pl) in tr.times.iter().zip(&tr.p_ll) {
            assert!((pl - (0.5 * t).cos().powi(2)).abs() < 1e-8);
        }
        assert!((*tr.times.last().unwrap() - PI).abs() < 1e-12);
        assert!(tr.p_ll.last().unwrap().abs() < 1e-8);
    }

    #[test]
    fn substep_refinement_agrees() {
        let p = NoiseProcess::new(1.0, 0.01, 42).unwrap();
        let coarse = sample_noise_path(&p, 2000, 3).unwrap();
        let fine: Vec<f64> = coarse.iter().flat_map(|&e| std::iter::repeat_n(e, 4)).collect();
        let a = evolve_with_path(1.0, 0.01, &coarse, TwoLevelState::left(), 1).unwrap();
        let b = evolve_with_path(1.0, 0.0025, &fine, TwoLevelState::left(), 4).unwrap();
        assert_eq!(a.p_ll.len(), b.p_ll.len());
        for (x, y) in a.p_ll.iter().zip(&b.p_ll) {
            assert!((x - y).abs() < 1e-6);
        }
        // same noise as the stepper
        let c = evolve_trajectory(1.0, &p, TwoLevelState::left(), 2000, 1, 3).unwrap();
        assert_eq!(a.p_ll, c.p_ll);
    }

    #[test]
    fn trajectory_invariants() {
        let p = NoiseProcess::new(1.0, 0.01, 9).unwrap();
        for id in 0..20 {
            let tr = evolve_trajectory(1.0, &p, TwoLevelState::left(), 5000, 7, id).unwrap();
            assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
            assert!(tr.p_ll.iter().all(|&x| (-1e-12..=1.0 + 1e-12).contains(&x)));
            assert!((tr.final_state.norm_sqr().sqrt() - 1.0).abs() < 1e-10);
            let s = tr.final_state;
            assert!(((1.0 - s.p_left()) - s.p_right()).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_unnormalized_initial_state() {
        let p = NoiseProcess::new(1.0, 0.01, 9).unwrap();
        let bad = TwoLevelState { amp_l: Complex64::new(2.0, 0.0), amp_r: Complex64::new(0.0, 0.0) };
        assert!(matches!(evolve_trajectory(1.0, &p, bad, 10, 1, 0), Err(Error::Precondition(_))));
    }

    #[test]
    fn envelope_values() {
        assert_eq!(dephasing_envelope(0.0, &[0.0, 1.0, 5.0]), vec![1.0; 3]);
        assert!((dephasing_envelope(2.0, &[1.0])[0] - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn defaults() {
        assert!((default_dt(1.0, 1.0) - 0.02).abs() < 1e-15);
        assert!((default_dt(2.0, 0.5) - 0.01).abs() < 1e-15);
        assert_eq!(default_time_cap(1.0, 1.0), 500.0);
        assert_eq!(default_time_cap(0.0, 2.0), 250.0);
    }
}
