//! Ensemble-level experiment drivers shared by the CLI and the test suites.
//!
//! Trajectories are processed in fixed-size chunks of consecutive ids. Each chunk
//! fills private accumulators which are then merged in chunk order, so results are
//! bit-identical for any rayon pool size.

use rayon::prelude::*;

use crate::bath::{
    build_hamiltonian, evolve_gibbs_states, gibbs_ensemble_states, occupational_asymmetry,
    prepare_superposed, thermal_asymmetry, thermal_correlator_of_states, OhmicBathSpec,
};
use crate::ensemble::{DensityAccumulator, Estimate, MomentAccumulator, MomentReport};
use crate::error::{Error, Result};
use crate::field::{NoiseProcess, Stepper};
use crate::qstate::{reduced_density, DensityMatrix2, TwoLevelState};

/// Trajectories per work unit. Part of the reproducibility contract.
pub const CHUNK: usize = 64;
/// Moments compared by the stationarity rule.
pub const STATIONARITY_K: usize = 4;
/// Absolute drift floor of the stationarity rule.
pub const STATIONARITY_FLOOR: f64 = 0.005;
/// Consecutive stationary window pairs needed before stopping.
pub const STATIONARITY_PASSES: usize = 2;

/// When to stop a fluctuating-field run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    /// Exactly this many steps.
    Fixed { n_steps: u64 },
    /// Stop at the first window end where moments have stopped drifting,
    /// or at `cap_steps`.
    Stationary { window_steps: u64, cap_steps: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldRunConfig {
    pub delta: f64,
    pub process: NoiseProcess,
    pub initial: TwoLevelState,
    pub n_trajectories: u64,
    pub k_max: usize,
    pub record_stride: u64,
    pub horizon: Horizon,
}

/// Ensemble averages at one recorded time.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordRow {
    pub t: f64,
    pub correlator: Estimate,
    pub n_eff: f64,
    pub mean_p: f64,
    pub rho: DensityMatrix2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldRunResult {
    /// Moments of `𝒫_{L→L}` over trajectories at the final time.
    pub report: MomentReport,
    pub rows: Vec<RecordRow>,
    pub final_time: f64,
    pub n_steps: u64,
    /// Time at which the stationarity rule fired, if it did.
    pub stationarity_time: Option<f64>,
    /// Largest `|⟨ψ|ψ⟩ − 1|` seen at any recorded time of any trajectory.
    pub max_norm_defect: f64,
}

#[derive(Debug, Clone)]
struct RecordAcc {
    moments: MomentAccumulator,
    rho: DensityAccumulator,
    norm_defect: f64,
}

impl RecordAcc {
    fn new() -> Self {
        RecordAcc {
            moments: MomentAccumulator::new(2, false).expect("k_max = 2"),
            rho: DensityAccumulator::default(),
            norm_defect: 0.0,
        }
    }

    fn push(&mut self, psi: &TwoLevelState) -> Result<()> {
        self.moments.push(1.0, psi.p_left())?;
        self.rho.push(1.0, psi);
        self.norm_defect = self.norm_defect.max((psi.norm_sqr() - 1.0).abs());
        Ok(())
    }

    fn merge(&mut self, other: &RecordAcc) -> Result<()> {
        self.moments.merge(&other.moments)?;
        self.rho.merge(&other.rho);
        self.norm_defect = self.norm_defect.max(other.norm_defect);
        Ok(())
    }

    fn row(&self, t: f64) -> Result<RecordRow> {
        Ok(RecordRow {
            t,
            correlator: self.moments.correlator()?,
            n_eff: self.moments.n_eff(),
            mean_p: self.moments.mean()?,
            rho: self.rho.finish()?,
        })
    }
}

impl FieldRunConfig {
    pub fn validate(&self) -> Result<()> {
        self.process.validate()?;
        if !self.delta.is_finite() {
            return Err(Error::Config("delta must be finite".into()));
        }
        self.initial.check_normalized("initial state")?;
        if self.n_trajectories < 2 {
            return Err(Error::Config("need at least 2 trajectories".into()));
        }
        if self.k_max == 0 {
            return Err(Error::Config("k_max must be >= 1".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::Config("record_stride must be >= 1".into()));
        }
        match self.horizon {
            Horizon::Fixed { n_steps: 0 } => Err(Error::Config("n_steps must be >= 1".into())),
            Horizon::Stationary { window_steps, cap_steps } if window_steps == 0 || cap_steps == 0 => {
                Err(Error::Config("stationarity window and cap must be >= 1 step".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Runs the fluctuating-field ensemble on the current rayon pool.
pub fn run_fluctuating_field(cfg: &FieldRunConfig) -> Result<FieldRunResult> {
    cfg.validate()?;
    let dt = cfg.process.dt;
    let mut steppers: Vec<Stepper> =
        (0..cfg.n_trajectories).map(|id| Stepper::new(cfg.delta, &cfg.process, cfg.initial, id)).collect();

    let mut initial = RecordAcc::new();
    for s in &steppers {
        initial.push(s.state())?;
    }
    let mut rows = vec![initial.row(0.0)?];
    let mut max_norm_defect = initial.norm_defect;

    let (segment, cap) = match cfg.horizon {
        Horizon::Fixed { n_steps } => (n_steps, n_steps),
        Horizon::Stationary { window_steps, cap_steps } => (window_steps, cap_steps),
    };
    let stationary_mode = matches!(cfg.horizon, Horizon::Stationary { .. });

    let mut step = 0u64;
    let mut previous: Option<MomentReport> = None;
    let mut passes = 0usize;
    let mut stationarity_time = None;

    while step < cap {
        let end = (step + segment).min(cap);
        let stride = cfg.record_stride;
        // record steps inside (step, end]
        let record_steps: Vec<u64> = (step / stride + 1..=end / stride).map(|j| j * stride).collect();
        let chunk_accs: Vec<Vec<RecordAcc>> = steppers
            .par_chunks_mut(CHUNK)
            .map(|chunk| -> Result<Vec<RecordAcc>> {
                let mut accs = vec![RecordAcc::new(); record_steps.len()];
                let mut at = step;
                for (acc, &target) in accs.iter_mut().zip(&record_steps) {
                    for s in chunk.iter_mut() {
                        s.advance(target - at);
                        acc.push(s.state())?;
                    }
                    at = target;
                }
                for s in chunk.iter_mut() {
                    s.advance(end - at);
                }
                Ok(accs)
            })
            .collect::<Result<_>>()?;

        let mut merged = vec![RecordAcc::new(); record_steps.len()];
        for accs in &chunk_accs {
            for (m, a) in merged.iter_mut().zip(accs) {
                m.merge(a)?;
            }
        }
        for (acc, &s) in merged.iter().zip(&record_steps) {
            max_norm_defect = max_norm_defect.max(acc.norm_defect);
            rows.push(acc.row(s as f64 * dt)?);
        }
        step = end;

        if stationary_mode {
            let report = final_report(&steppers, cfg.k_max, step as f64 * dt)?;
            if let Some(prev) = &previous {
                if is_stationary(prev, &report) {
                    passes += 1;
                } else {
                    passes = 0;
                }
            }
            previous = Some(report);
            if passes >= STATIONARITY_PASSES {
                stationarity_time = Some(step as f64 * dt);
                break;
            }
        }
    }

    let report = match previous {
        Some(r) => r,
        None => final_report(&steppers, cfg.k_max, step as f64 * dt)?,
    };
    Ok(FieldRunResult {
        report,
        rows,
        final_time: step as f64 * dt,
        n_steps: step,
        stationarity_time,
        max_norm_defect,
    })
}

fn final_report(steppers: &[Stepper], k_max: usize, t: f64) -> Result<MomentReport> {
    let mut acc = MomentAccumulator::new(k_max, true)?;
    for s in steppers {
        acc.push(1.0, s.state().p_left())?;
    }
    acc.report(Some(t))
}

/// Successive-window drift of every `⟨p^k⟩`, `k ≤ 4`, below `max(0.005, stderr)`.
pub fn is_stationary(prev: &MomentReport, now: &MomentReport) -> bool {
    prev.moments
        .iter()
        .zip(&now.moments)
        .take(STATIONARITY_K)
        .all(|(a, b)| (a.estimate - b.estimate).abs() < STATIONARITY_FLOOR.max(b.stderr))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BathRunConfig {
    pub spec: OhmicBathSpec,
    pub delta: f64,
    pub epsilon: f64,
    pub t_grid: Vec<f64>,
    pub k_max: usize,
    /// Preparation time of the superposed state.
    pub t_prep: f64,
    /// Late-time window for the asymmetry average.
    pub asymmetry_window: (f64, f64),
    pub asymmetry_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BathRow {
    pub t: f64,
    pub correlator: f64,
    pub mean_p: f64,
    pub n_eff: f64,
    pub rho: DensityMatrix2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparationSummary {
    pub t_prep: f64,
    pub nu_l: f64,
    pub nu_r: f64,
    pub branch_overlap_abs: Option<f64>,
    /// Asymmetry of the prepared state over the window.
    pub asymmetry: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BathRunResult {
    pub dimension: usize,
    pub gibbs_entries: usize,
    pub gibbs_retained_weight: f64,
    pub rows: Vec<BathRow>,
    /// Moments of `P⁽ⁿ⁾` over the Gibbs ensemble at the last grid time.
    pub report: MomentReport,
    /// `⟨𝒫_∞⟩_th` for initial states `|L⟩ ⊗ |E_n⟩`.
    pub thermal_asymmetry: f64,
    /// Preparation from the bath vacuum; computed on the symmetric (`ε = 0`) system.
    pub preparation: PreparationSummary,
}

impl BathRunConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.t_grid.is_empty() {
            return Err(Error::Config("t_grid must contain at least one time".into()));
        }
        if self.t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::Config("t_grid times must be finite and >= 0".into()));
        }
        if self.k_max == 0 {
            return Err(Error::Config("k_max must be >= 1".into()));
        }
        let (a, b) = self.asymmetry_window;
        if !(a >= 0.0 && b > a && b.is_finite()) {
            return Err(Error::Config(format!("asymmetry window needs 0 <= t_a < t_b, got ({a}, {b})")));
        }
        if self.asymmetry_samples == 0 {
            return Err(Error::Config("asymmetry samples must be >= 1".into()));
        }
        if !(self.t_prep >= 0.0 && self.t_prep.is_finite()) {
            return Err(Error::Config("t_prep must be finite and >= 0".into()));
        }
        Ok(())
    }
}

pub fn run_finite_bath(cfg: &BathRunConfig) -> Result<BathRunResult> {
    cfg.validate()?;
    let sys = build_hamiltonian(&cfg.spec, cfg.delta, cfg.epsilon)?;
    let gibbs = gibbs_ensemble_states(&cfg.spec)?;

    let mut rows = Vec::with_capacity(cfg.t_grid.len());
    let mut last = None;
    for &t in &cfg.t_grid {
        let states = evolve_gibbs_states(&sys, &gibbs, t)?;
        let corr = thermal_correlator_of_states(&gibbs, &states, t)?;
        let mut rho = DensityAccumulator::default();
        for (entry, psi) in gibbs.entries.iter().zip(&states) {
            let r = reduced_density(psi)?;
            rho.push_matrix(entry.weight, &r);
        }
        rows.push(BathRow {
            t,
            correlator: corr.value,
            mean_p: corr.mean_probability(),
            n_eff: corr.ensemble.effective_size(),
            rho: rho.finish()?,
        });
        last = Some(corr);
    }
    let last = last.expect("t_grid is non-empty");
    let mut acc = MomentAccumulator::new(cfg.k_max, true)?;
    for &(w, p) in last.ensemble.entries() {
        acc.push(w, p)?;
    }
    let report = acc.report(Some(last.time))?;

    let thermal_asym = thermal_asymmetry(&sys, &gibbs, cfg.asymmetry_window, cfg.asymmetry_samples)?;

    let symmetric =
        if cfg.epsilon == 0.0 { sys.clone() } else { build_hamiltonian(&cfg.spec, cfg.delta, 0.0)? };
    let mut vacuum = vec![num_complex::Complex64::new(0.0, 0.0); symmetric.dim_env()];
    vacuum[0] = num_complex::Complex64::new(1.0, 0.0);
    let prepared = prepare_superposed(&symmetric, &vacuum, cfg.t_prep)?;
    let asymmetry =
        occupational_asymmetry(&symmetric, &prepared.state, cfg.asymmetry_window, cfg.asymmetry_samples)?;

    Ok(BathRunResult {
        dimension: sys.dim(),
        gibbs_entries: gibbs.entries.len(),
        gibbs_retained_weight: gibbs.retained_weight,
        rows,
        report,
        thermal_asymmetry: thermal_asym,
        preparation: PreparationSummary {
            t_prep: cfg.t_prep,
            nu_l: prepared.nu_l,
            nu_r: prepared.nu_r,
            branch_overlap_abs: prepared.branch_overlap().map(|z| z.norm()),
            asymmetry,
        },
    })
}
