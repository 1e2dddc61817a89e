//! Estimators over weighted ensembles of localization probabilities.
//!
//! An ensemble is a list of `(w, p)` pairs where `p = 𝒫_{L→L}` for one member
//! (one noise realization, or one initial reservoir state with Gibbs weight `w`).
//! The key diagnostic is the localization correlator `Σ w·p·(1−p)`: it vanishes when
//! every member is localized (`p ∈ {0, 1}`) and stays finite for delocalized members,
//! even where the averaged density matrix is identical in both cases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::qstate::{DensityMatrix2, TwoLevelState};
use num_complex::Complex64;

/// Histogram resolution on `[0, 1]`.
pub const HISTOGRAM_BINS: usize = 50;
/// Minimum sample count for the Kolmogorov–Smirnov statistic.
pub const KS_MIN_SAMPLES: u64 = 100;

const P_TOL: f64 = 1e-12;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.comp += other.comp;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn check_weight(w: f64) -> Result<()> {
    if !(w >= 0.0 && w.is_finite()) {
        return Err(Error::Data(format!("weight must be finite and >= 0, got {w}")));
    }
    Ok(())
}

/// Validates a probability and clamps round-off excursions into `[0, 1]`.
fn check_probability(p: f64) -> Result<f64> {
    if !(-P_TOL..=1.0 + P_TOL).contains(&p) {
        return Err(Error::Data(format!("probability {p} outside [0, 1]")));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Normalized list of `(w, p)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedEnsemble {
    entries: Vec<(f64, f64)>,
}

impl WeightedEnsemble {
    /// Requires `Σw = 1` within 1e−10.
    pub fn new(entries: Vec<(f64, f64)>) -> Result<Self> {
        let mut total = CompensatedSum::default();
        let mut out = Vec::with_capacity(entries.len());
        for (w, p) in entries {
            check_weight(w)?;
            total.add(w);
            out.push((w, check_probability(p)?));
        }
        if out.is_empty() {
            return Err(Error::Estimation("empty ensemble".into()));
        }
        if (total.value() - 1.0).abs() > 1e-10 {
            return Err(Error::Data(format!("weights sum to {}, expected 1", total.value())));
        }
        Ok(WeightedEnsemble { entries: out })
    }

    /// Rescales arbitrary nonnegative weights to unit sum.
    pub fn from_unnormalized(entries: Vec<(f64, f64)>) -> Result<Self> {
        let mut total = CompensatedSum::default();
        for &(w, _) in &entries {
            check_weight(w)?;
            total.add(w);
        }
        let z = total.value();
        if !(z > 0.0) {
            return Err(Error::Estimation("ensemble has zero total weight".into()));
        }
        Self::new(entries.into_iter().map(|(w, p)| (w / z, p)).collect())
    }

    pub fn equal_weights(ps: &[f64]) -> Result<Self> {
        if ps.is_empty() {
            return Err(Error::Estimation("empty ensemble".into()));
        }
        let w = 1.0 / ps.len() as f64;
        Self::from_unnormalized(ps.iter().map(|&p| (w, p)).collect())
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `Σ w·p`
    pub fn mean(&self) -> f64 {
        let mut s = CompensatedSum::default();
        for &(w, p) in &self.entries {
            s.add(w * p);
        }
        s.value()
    }

    /// `(Σw)² / Σw²`
    pub fn effective_size(&self) -> f64 {
        let (mut a, mut b) = (CompensatedSum::default(), CompensatedSum::default());
        for &(w, _) in &self.entries {
            a.add(w);
            b.add(w * w);
        }
        a.value() * a.value() / b.value()
    }

    pub fn concat(mut self, other: WeightedEnsemble, self_share: f64) -> Result<Self> {
        for e in &mut self.entries {
            e.0 *= self_share;
        }
        self.entries.extend(other.entries.into_iter().map(|(w, p)| (w * (1.0 - self_share), p)));
        Self::from_unnormalized(self.entries)
    }
}

/// Estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub k: usize,
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub bins: usize,
    /// Probability density per bin (integrates to 1 over `[0, 1]`).
    pub densities: Vec<f64>,
}

impl Histogram {
    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let w = 1.0 / self.bins as f64;
        (i as f64 * w, (i + 1) as f64 * w)
    }
}

/// Summary of a probability ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    /// Evolution time the samples refer to, if any.
    pub time: Option<f64>,
    pub n_samples: u64,
    pub sum_weights: f64,
    pub n_eff: f64,
    /// `⟨p^k⟩` for `k = 1..=k_max`.
    pub moments: Vec<MomentEstimate>,
    /// `⟨p(1−p)⟩ = ⟨p⟩ − ⟨p²⟩`.
    pub correlator: Estimate,
    pub histogram: Histogram,
    /// One-sample KS distance to the uniform law, when samples were retained.
    pub ks_statistic: Option<f64>,
}

impl MomentReport {
    pub fn moment(&self, k: usize) -> Option<&MomentEstimate> {
        self.moments.iter().find(|m| m.k == k)
    }
}

/// Mergeable accumulator of weighted power sums and a histogram of `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    k_max: usize,
    /// `power_sums[j] = Σ w·p^(j+1)`, kept up to `max(2·k_max, 4)`.
    power_sums: Vec<CompensatedSum>,
    sum_w: CompensatedSum,
    sum_w2: CompensatedSum,
    bins: Vec<CompensatedSum>,
    count: u64,
    samples: Option<Vec<(f64, f64)>>,
}

impl MomentAccumulator {
    pub fn new(k_max: usize, retain_samples: bool) -> Result<Self> {
        if k_max == 0 {
            return Err(Error::Config("k_max must be >= 1".into()));
        }
        Ok(MomentAccumulator {
            k_max,
            power_sums: vec![CompensatedSum::default(); (2 * k_max).max(4)],
            sum_w: CompensatedSum::default(),
            sum_w2: CompensatedSum::default(),
            bins: vec![CompensatedSum::default(); HISTOGRAM_BINS],
            count: 0,
            samples: retain_samples.then(Vec::new),
        })
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, w: f64, p: f64) -> Result<()> {
        check_weight(w)?;
        let p = check_probability(p)?;
        let mut pk = 1.0;
        for s in &mut self.power_sums {
            pk *= p;
            s.add(w * pk);
        }
        self.sum_w.add(w);
        self.sum_w2.add(w * w);
        let bin = ((p * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        self.bins[bin].add(w);
        self.count += 1;
        if let Some(s) = &mut self.samples {
            s.push((w, p));
        }
        Ok(())
    }

    /// Folds `other` into `self`, as if its samples had been pushed after ours.
    pub fn merge(&mut self, other: &MomentAccumulator) -> Result<()> {
        if other.k_max != self.k_max {
            return Err(Error::Data(format!(
                "cannot merge accumulators with k_max {} and {}",
                self.k_max, other.k_max
            )));
        }
        for (a, b) in self.power_sums.iter_mut().zip(&other.power_sums) {
            a.merge(b);
        }
        self.sum_w.merge(&other.sum_w);
        self.sum_w2.merge(&other.sum_w2);
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            a.merge(b);
        }
        self.count += other.count;
        match (&mut self.samples, &other.samples) {
            (Some(a), Some(b)) => a.extend_from_slice(b),
            (Some(_), None) => self.samples = None,
            _ => {}
        }
        Ok(())
    }

    fn raw_moment(&self, k: usize) -> f64 {
        self.power_sums[k - 1].value() / self.sum_w.value()
    }

    pub fn n_eff(&self) -> f64 {
        let w = self.sum_w.value();
        w * w / self.sum_w2.value()
    }

    /// Standard error of a weighted mean given its first two raw moments.
    fn stderr(&self, mean: f64, second: f64) -> f64 {
        let n_eff = self.n_eff();
        if n_eff <= 1.0 {
            return f64::NAN;
        }
        let var = (second - mean * mean).max(0.0) * n_eff / (n_eff - 1.0);
        (var / n_eff).sqrt()
    }

    pub fn mean(&self) -> Result<f64> {
        self.check_ready(1)?;
        Ok(self.raw_moment(1))
    }

    /// `⟨p(1−p)⟩` with its standard error.
    pub fn correlator(&self) -> Result<Estimate> {
        self.check_ready(1)?;
        let (m1, m2, m3, m4) =
            (self.raw_moment(1), self.raw_moment(2), self.raw_moment(3), self.raw_moment(4));
        let estimate = m1 - m2;
        Ok(Estimate { estimate, stderr: self.stderr(estimate, m2 - 2.0 * m3 + m4) })
    }

    fn check_ready(&self, min_count: u64) -> Result<()> {
        if self.count < min_count || !(self.sum_w.value() > 0.0) {
            return Err(Error::Estimation(format!(
                "need at least {min_count} samples with positive total weight, have {}",
                self.count
            )));
        }
        Ok(())
    }

    pub fn report(&self, time: Option<f64>) -> Result<MomentReport> {
        self.check_ready(1)?;
        let moments = (1..=self.k_max)
            .map(|k| {
                let estimate = self.raw_moment(k);
                MomentEstimate { k, estimate, stderr: self.stderr(estimate, self.raw_moment(2 * k)) }
            })
            .collect();
        let total = self.sum_w.value();
        let width = 1.0 / HISTOGRAM_BINS as f64;
        let densities = self.bins.iter().map(|b| b.value() / (total * width)).collect();
        let ks_statistic = match &self.samples {
            Some(s) if self.count >= KS_MIN_SAMPLES => Some(ks_uniform_statistic(s)?),
            _ => None,
        };
        Ok(MomentReport {
            time,
            n_samples: self.count,
            sum_weights: total,
            n_eff: self.n_eff(),
            moments,
            correlator: self.correlator()?,
            histogram: Histogram { bins: HISTOGRAM_BINS, densities },
            ks_statistic,
        })
    }
}

/// `⟨p^k⟩ = Σw·p^k / Σw` for `k = 1..=k_max`, with standard errors from the effective
/// sample size `(Σw)²/Σw²`.
pub fn estimate_moments<I>(samples: I, k_max: usize) -> Result<MomentReport>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let mut acc = MomentAccumulator::new(k_max, true)?;
    for (w, p) in samples {
        acc.push(w, p)?;
    }
    acc.report(None)
}

/// `Σ w·p·(1−p)`, the localization correlator of the ensemble.
pub fn localization_correlator(ens: &WeightedEnsemble) -> Result<f64> {
    if ens.is_empty() {
        return Err(Error::Estimation("empty ensemble".into()));
    }
    let (mut num, mut den) = (CompensatedSum::default(), CompensatedSum::default());
    for &(w, p) in ens.entries() {
        num.add(w * p * (1.0 - p));
        den.add(w);
    }
    Ok(num.value() / den.value())
}

/// Weighted-ECDF Kolmogorov–Smirnov distance to the uniform law on `[0, 1]`.
pub fn ks_uniform_statistic(samples: &[(f64, f64)]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Estimation("no samples".into()));
    }
    let mut sorted: Vec<(f64, f64)> = samples.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut total = CompensatedSum::default();
    for &(w, _) in &sorted {
        total.add(w);
    }
    let total = total.value();
    if !(total > 0.0) {
        return Err(Error::Estimation("zero total weight".into()));
    }
    let mut cum = CompensatedSum::default();
    let mut d = 0.0f64;
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i].1.clamp(0.0, 1.0);
        let before = cum.value() / total;
        while i < sorted.len() && sorted[i].1.clamp(0.0, 1.0) == x {
            cum.add(sorted[i].0);
            i += 1;
        }
        let after = cum.value() / total;
        d = d.max((before - x).abs()).max((after - x).abs());
    }
    Ok(d)
}

/// KS statistic carried by `report`; needs at least [`KS_MIN_SAMPLES`] retained samples.
pub fn uniformity_test(report: &MomentReport) -> Result<f64> {
    if report.n_samples < KS_MIN_SAMPLES {
        return Err(Error::Estimation(format!(
            "uniformity test needs at least {KS_MIN_SAMPLES} samples, have {}",
            report.n_samples
        )));
    }
    report.ks_statistic.ok_or_else(|| Error::Estimation("report was built without retained samples".into()))
}

/// Running weighted average of pure-state projectors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DensityAccumulator {
    w: CompensatedSum,
    ll: CompensatedSum,
    rr: CompensatedSum,
    lr_re: CompensatedSum,
    lr_im: CompensatedSum,
}

impl DensityAccumulator {
    #[inline]
    pub fn push(&mut self, w: f64, psi: &TwoLevelState) {
        let lr = psi.amp_l * psi.amp_r.conj();
        self.w.add(w);
        self.ll.add(w * psi.amp_l.norm_sqr());
        self.rr.add(w * psi.amp_r.norm_sqr());
        self.lr_re.add(w * lr.re);
        self.lr_im.add(w * lr.im);
    }

    /// Adds a (possibly mixed) density matrix with weight `w`.
    pub fn push_matrix(&mut self, w: f64, rho: &DensityMatrix2) {
        let lr = rho.rho_lr();
        self.w.add(w);
        self.ll.add(w * rho.rho_ll());
        self.rr.add(w * rho.rho_rr());
        self.lr_re.add(w * lr.re);
        self.lr_im.add(w * lr.im);
    }

    pub fn merge(&mut self, other: &DensityAccumulator) {
        self.w.merge(&other.w);
        self.ll.merge(&other.ll);
        self.rr.merge(&other.rr);
        self.lr_re.merge(&other.lr_re);
        self.lr_im.merge(&other.lr_im);
    }

    pub fn finish(&self) -> Result<DensityMatrix2> {
        let w = self.w.value();
        if !(w > 0.0) {
            return Err(Error::Estimation("no states accumulated".into()));
        }
        let lr = Complex64::new(self.lr_re.value() / w, self.lr_im.value() / w);
        // trace is renormalized to absorb per-state norm round-off
        let (ll, rr) = (self.ll.value() / w, self.rr.value() / w);
        let tr = ll + rr;
        let lr = lr / tr;
        DensityMatrix2::new([[Complex64::new(ll / tr, 0.0), lr], [lr.conj(), Complex64::new(rr / tr, 0.0)]])
    }
}

/// `ρ = Σ w·|ψ⟩⟨ψ| / Σw`
pub fn averaged_density_matrix<I>(states: I) -> Result<DensityMatrix2>
where
    I: IntoIterator<Item = (f64, TwoLevelState)>,
{
    let mut acc = DensityAccumulator::default();
    for (w, psi) in states {
        check_weight(w)?;
        psi.check_normalized("averaged_density_matrix")?;
        acc.push(w, &psi);
    }
    acc.finish()
}

/// The two ways a vanishing asymmetry can arise, plus the uniform reference law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    /// Every member localized: `p ∈ {0, 1}`, alternating.
    Collapsed,
    /// Every member delocalized: `p = 1/2`.
    Delocalized,
    /// i.i.d. uniform `p`.
    Uniform,
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "collapsed" => Ok(ScenarioKind::Collapsed),
            "delocalized" => Ok(ScenarioKind::Delocalized),
            "uniform" => Ok(ScenarioKind::Uniform),
            other => Err(Error::Config(format!(
                "unknown scenario kind '{other}' (expected collapsed, delocalized or uniform)"
            ))),
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScenarioKind::Collapsed => "collapsed",
            ScenarioKind::Delocalized => "delocalized",
            ScenarioKind::Uniform => "uniform",
        })
    }
}

/// Equal-weight synthetic ensemble of `n` members.
pub fn synthetic_scenario(kind: ScenarioKind, n: usize, seed: u64) -> Result<WeightedEnsemble> {
    if n == 0 {
        return Err(Error::Config("n must be >= 1".into()));
    }
    let ps: Vec<f64> = match kind {
        ScenarioKind::Collapsed => (0..n).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect(),
        ScenarioKind::Delocalized => vec![0.5; n],
        ScenarioKind::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| rng.random::<f64>()).collect()
        }
    };
    WeightedEnsemble::equal_weights(&ps)
}

/// Lifts each `(w, p)` to a pure state `√p|L⟩ ± √(1−p)|R⟩`, alternating the sign.
pub fn lift_to_states(ens: &WeightedEnsemble) -> Vec<(f64, TwoLevelState)> {
    ens.entries()
        .iter()
        .enumerate()
        .map(|(i, &(w, p))| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let s = TwoLevelState {
                amp_l: Complex64::new(p.sqrt(), 0.0),
                amp_r: Complex64::new(sign * (1.0 - p).sqrt(), 0.0),
            };
            (w, s)
        })
        .collect()
}
