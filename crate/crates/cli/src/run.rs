//! Experiment dispatch and output assembly.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use catprobe_core::ensemble::{
    averaged_density_matrix, lift_to_states, localization_correlator, synthetic_scenario, Histogram,
    MomentAccumulator, MomentReport,
};
use catprobe_core::experiment::{
    run_finite_bath, run_fluctuating_field, BathRunConfig, FieldRunConfig, Horizon,
};
use catprobe_core::field::NoiseProcess;
use catprobe_core::qstate::{reduced_density, CompositeState, DensityMatrix2};
use catprobe_core::Complex64;
use serde_json::{json, Map, Value};

use crate::config::{
    BathParams, CounterParams, ExperimentConfig, FieldHorizon, FieldParams, Params, SyntheticParams,
};
use crate::output::{csv, json as to_json, write_atomic, WrittenFile, SCHEMA_VERSION};
use crate::CliError;

pub const MOMENTS_FILE: &str = "moments.json";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const RHO_FILE: &str = "rho_t.csv";
pub const CORRELATOR_FILE: &str = "correlator.csv";
pub const COUNTEREXAMPLE_FILE: &str = "counterexample.json";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const HISTOGRAM_HEADER: [&str; 3] = ["bin_left", "bin_right", "density"];
pub const RHO_HEADER: [&str; 4] = ["t", "rho_LL", "Re rho_LR", "Im rho_LR"];
pub const CORRELATOR_HEADER: [&str; 3] = ["t", "correlator", "n_eff"];

/// KS critical value coefficient at the 1% level.
pub const KS_C_1PCT: f64 = 1.63;

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out: PathBuf,
    /// Data files in write order; the manifest is not included.
    pub files: Vec<WrittenFile>,
    pub manifest: WrittenFile,
    /// Human-readable one-paragraph result.
    pub summary: String,
}

struct Produced {
    files: Vec<(&'static str, String)>,
    stationarity_time: Option<f64>,
    summary: String,
}

/// Runs `cfg` on a pool of `threads` workers and writes its outputs, manifest last.
pub fn run(cfg: &ExperimentConfig, threads: usize) -> Result<RunOutcome, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))?;
    let start = Instant::now();
    let produced = pool.install(|| produce(cfg))?;

    let io = |e| CliError::Io { path: cfg.out.clone(), source: e };
    fs::create_dir_all(&cfg.out).map_err(io)?;
    let mut files = Vec::with_capacity(produced.files.len());
    for (name, text) in &produced.files {
        files.push(
            write_atomic(&cfg.out, name, text.as_bytes())
                .map_err(|e| CliError::Io { path: cfg.out.join(name), source: e })?,
        );
    }
    let manifest =
        manifest_json(cfg, threads, start.elapsed().as_secs_f64(), produced.stationarity_time, &files);
    let manifest = write_atomic(&cfg.out, MANIFEST_FILE, to_json(&manifest).as_bytes())
        .map_err(|e| CliError::Io { path: cfg.out.join(MANIFEST_FILE), source: e })?;
    Ok(RunOutcome { out: cfg.out.clone(), files, manifest, summary: produced.summary })
}

fn produce(cfg: &ExperimentConfig) -> Result<Produced, CliError> {
    match &cfg.params {
        Params::Field(p) => produce_field(cfg, p),
        Params::Bath(p) => produce_bath(cfg, p),
        Params::Counterexample(p) => produce_counterexample(cfg, p),
        Params::Synthetic(p) => produce_synthetic(cfg, p),
    }
}

fn manifest_json(
    cfg: &ExperimentConfig,
    threads: usize,
    wall_clock: f64,
    stationarity_time: Option<f64>,
    files: &[WrittenFile],
) -> Value {
    let mut config = Map::new();
    config.insert("experiment".into(), cfg.family.name().into());
    for (k, v) in &cfg.echo {
        config.insert(k.clone(), v.clone());
    }
    config.insert("out".into(), cfg.out.display().to_string().into());
    json!({
        "schema_version": SCHEMA_VERSION,
        "artifact": "catprobe",
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": cfg.family.name(),
        "config": config,
        "threads": threads,
        "wall_clock_seconds": wall_clock,
        "stationarity_time": stationarity_time,
        "outputs": files.iter().map(|f| json!({
            "file": f.name,
            "bytes": f.bytes,
            "sha256": f.sha256,
        })).collect::<Vec<_>>(),
    })
}

fn header(cfg: &ExperimentConfig) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("schema_version".into(), SCHEMA_VERSION.into());
    m.insert("experiment".into(), cfg.family.name().into());
    m.insert("parameters".into(), cfg.parameters_json());
    m
}

/// The fields shared by every `moments.json`.
pub fn report_fields(report: &MomentReport, m: &mut Map<String, Value>) {
    m.insert("time".into(), report.time.into());
    m.insert("n_samples".into(), report.n_samples.into());
    m.insert("sum_weights".into(), report.sum_weights.into());
    m.insert("n_eff".into(), report.n_eff.into());
    let moments: Vec<Value> = report
        .moments
        .iter()
        .map(|e| {
            json!({
                "k": e.k,
                "estimate": e.estimate,
                "stderr": e.stderr,
                "uniform_reference": 1.0 / (1.0 + e.k as f64),
            })
        })
        .collect();
    m.insert("moments".into(), moments.into());
    m.insert(
        "correlator".into(),
        json!({
            "estimate": report.correlator.estimate,
            "stderr": report.correlator.stderr,
            "uniform_reference": 1.0 / 6.0,
        }),
    );
    let ks = report.ks_statistic.map(|d| {
        let critical = KS_C_1PCT / report.n_eff.sqrt();
        json!({ "statistic": d, "critical_1pct": critical, "uniform_at_1pct": d < critical })
    });
    m.insert("ks".into(), ks.into());
    m.insert("histogram_bins".into(), report.histogram.bins.into());
}

fn histogram_csv(h: &Histogram) -> String {
    let rows: Vec<Vec<f64>> = (0..h.bins)
        .map(|i| {
            let (a, b) = h.bin_edges(i);
            vec![a, b, h.densities[i]]
        })
        .collect();
    csv(&HISTOGRAM_HEADER, &rows)
}

fn rho_row(t: f64, rho: &DensityMatrix2) -> Vec<f64> {
    let lr = rho.rho_lr();
    vec![t, rho.rho_ll(), lr.re, lr.im]
}

fn density_json(rho: &DensityMatrix2) -> Value {
    let lr = rho.rho_lr();
    json!({
        "rho_LL": rho.rho_ll(),
        "rho_RR": rho.rho_rr(),
        "rho_LR_re": lr.re,
        "rho_LR_im": lr.im,
        "rho_LR_abs": lr.norm(),
        "purity": rho.purity(),
    })
}

fn steps_for(t: f64, dt: f64) -> u64 {
    let x = t / dt;
    let r = x.round();
    let n = if (x - r).abs() <= 1e-9 * r.max(1.0) { r } else { x.ceil() };
    (n as u64).max(1)
}

pub fn field_run_config(p: &FieldParams) -> Result<FieldRunConfig, CliError> {
    let horizon = match p.horizon {
        FieldHorizon::Fixed { n_steps } => Horizon::Fixed { n_steps },
        FieldHorizon::Stationary { window, t_cap } => {
            Horizon::Stationary { window_steps: steps_for(window, p.dt), cap_steps: steps_for(t_cap, p.dt) }
        }
    };
    Ok(FieldRunConfig {
        delta: p.delta,
        process: NoiseProcess::new(p.gamma, p.dt, p.seed)?,
        initial: p.initial.state(),
        n_trajectories: p.trajectories,
        k_max: p.kmax,
        record_stride: p.record_stride,
        horizon,
    })
}

fn moment_line(report: &MomentReport) -> String {
    let ms: Vec<String> =
        report.moments.iter().map(|m| format!("<P^{}> = {:.5} ± {:.5}", m.k, m.estimate, m.stderr)).collect();
    let ks = report
        .ks_statistic
        .map(|d| format!(", KS = {:.5} (1% critical {:.5})", d, KS_C_1PCT / report.n_eff.sqrt()))
        .unwrap_or_default();
    format!(
        "{}; correlator = {:.6} ± {:.6}{}",
        ms.join(", "),
        report.correlator.estimate,
        report.correlator.stderr,
        ks
    )
}

fn produce_field(cfg: &ExperimentConfig, p: &FieldParams) -> Result<Produced, CliError> {
    let r = run_fluctuating_field(&field_run_config(p)?)?;
    let mut m = header(cfg);
    m.insert("evaluation_time".into(), r.final_time.into());
    m.insert("n_steps".into(), r.n_steps.into());
    m.insert("stationary".into(), r.stationarity_time.is_some().into());
    m.insert("stationarity_time".into(), r.stationarity_time.into());
    m.insert("max_norm_defect".into(), r.max_norm_defect.into());
    report_fields(&r.report, &mut m);

    let rho: Vec<Vec<f64>> = r.rows.iter().map(|row| rho_row(row.t, &row.rho)).collect();
    let corr: Vec<Vec<f64>> =
        r.rows.iter().map(|row| vec![row.t, row.correlator.estimate, row.n_eff]).collect();
    let status = match r.stationarity_time {
        Some(t) => format!("stationary at t = {t}"),
        None => format!("not stationary by t = {}", r.final_time),
    };
    Ok(Produced {
        files: vec![
            (MOMENTS_FILE, to_json(&Value::Object(m))),
            (HISTOGRAM_FILE, histogram_csv(&r.report.histogram)),
            (RHO_FILE, csv(&RHO_HEADER, &rho)),
            (CORRELATOR_FILE, csv(&CORRELATOR_HEADER, &corr)),
        ],
        stationarity_time: r.stationarity_time,
        summary: format!(
            "fluctuating-field: {} trajectories, {}; {}",
            p.trajectories,
            status,
            moment_line(&r.report)
        ),
    })
}

pub fn bath_run_config(p: &BathParams) -> BathRunConfig {
    BathRunConfig {
        spec: p.spec,
        delta: p.delta,
        epsilon: p.epsilon,
        t_grid: p.t_grid.clone(),
        k_max: p.kmax,
        t_prep: p.t_prep,
        asymmetry_window: (0.8 * p.t_max, p.t_max),
        asymmetry_samples: p.asym_samples,
    }
}

fn produce_bath(cfg: &ExperimentConfig, p: &BathParams) -> Result<Produced, CliError> {
    let bc = bath_run_config(p);
    let r = run_finite_bath(&bc)?;
    let mut m = header(cfg);
    m.insert("evaluation_time".into(), r.report.time.into());
    report_fields(&r.report, &mut m);
    let prep = &r.preparation;
    m.insert(
        "bath".into(),
        json!({
            "dimension": r.dimension,
            "gibbs_states": r.gibbs_entries,
            "gibbs_retained_weight": r.gibbs_retained_weight,
            "asymmetry_window": [bc.asymmetry_window.0, bc.asymmetry_window.1],
            "asymmetry_samples": bc.asymmetry_samples,
            "thermal_asymmetry": r.thermal_asymmetry,
            "preparation": {
                "t_prep": prep.t_prep,
                "nu_L": prep.nu_l,
                "nu_R": prep.nu_r,
                "branch_overlap_abs": prep.branch_overlap_abs,
                "asymmetry": prep.asymmetry,
            },
        }),
    );
    let rho: Vec<Vec<f64>> = r.rows.iter().map(|row| rho_row(row.t, &row.rho)).collect();
    let corr: Vec<Vec<f64>> = r.rows.iter().map(|row| vec![row.t, row.correlator, row.n_eff]).collect();
    Ok(Produced {
        files: vec![
            (MOMENTS_FILE, to_json(&Value::Object(m))),
            (HISTOGRAM_FILE, histogram_csv(&r.report.histogram)),
            (RHO_FILE, csv(&RHO_HEADER, &rho)),
            (CORRELATOR_FILE, csv(&CORRELATOR_HEADER, &corr)),
        ],
        stationarity_time: None,
        summary: format!(
            "finite-bath: dimension {}, {} Gibbs states; at t = {}: {}; asymmetry {:.6} (thermal {:.6})",
            r.dimension,
            r.gibbs_entries,
            r.report.time.unwrap_or(f64::NAN),
            moment_line(&r.report),
            prep.asymmetry,
            r.thermal_asymmetry
        ),
    })
}

/// `ν_L|L⟩⊗Φ_L + ν_R|R⟩⊗Φ_R` with `Φ_L = (1, 0)` and `Φ_R = (o, √(1−o²))`.
pub fn counterexample_state(p: &CounterParams) -> Result<CompositeState, CliError> {
    let nu_l = p.nu;
    let nu_r = (1.0 - nu_l * nu_l).max(0.0).sqrt();
    let o = p.overlap;
    let phi_r1 = (1.0 - o * o).max(0.0).sqrt();
    let c = |x: f64| Complex64::new(x, 0.0);
    Ok(CompositeState::new(2, vec![c(nu_l), c(0.0), c(nu_r * o), c(nu_r * phi_r1)])?)
}

fn produce_counterexample(cfg: &ExperimentConfig, p: &CounterParams) -> Result<Produced, CliError> {
    let psi = counterexample_state(p)?;
    let rho = reduced_density(&psi)?;
    let nu_l = psi.amp(catprobe_core::qstate::Side::L, 0).re;
    let nu_r = (1.0 - nu_l * nu_l).max(0.0).sqrt();
    let mut m = header(cfg);
    m.insert("nu_L".into(), nu_l.into());
    m.insert("nu_R".into(), nu_r.into());
    m.insert("environment_overlap".into(), p.overlap.into());
    if let Value::Object(d) = density_json(&rho) {
        m.extend(d);
    }
    m.insert("expected_rho_LR_abs".into(), (nu_l * nu_r * p.overlap.abs()).into());
    let doc = to_json(&Value::Object(m));
    Ok(Produced {
        summary: doc.trim_end().to_string(),
        files: vec![(COUNTEREXAMPLE_FILE, doc)],
        stationarity_time: None,
    })
}

fn produce_synthetic(cfg: &ExperimentConfig, p: &SyntheticParams) -> Result<Produced, CliError> {
    let ens = synthetic_scenario(p.kind, p.n as usize, p.seed)?;
    let mut acc = MomentAccumulator::new(p.kmax, true)?;
    for &(w, prob) in ens.entries() {
        acc.push(w, prob)?;
    }
    let report = acc.report(None)?;
    let direct = localization_correlator(&ens)?;
    let rho = averaged_density_matrix(lift_to_states(&ens))?;
    let mut m = header(cfg);
    report_fields(&report, &mut m);
    m.insert("correlator_direct".into(), direct.into());
    m.insert("mean_p".into(), ens.mean().into());
    m.insert("averaged_density_matrix".into(), density_json(&rho));
    Ok(Produced {
        files: vec![
            (MOMENTS_FILE, to_json(&Value::Object(m))),
            (HISTOGRAM_FILE, histogram_csv(&report.histogram)),
        ],
        stationarity_time: None,
        summary: format!(
            "synthetic {}: n = {}, correlator = {}, averaged rho_LL = {}, |rho_LR| = {}",
            p.kind,
            p.n,
            direct,
            rho.rho_ll(),
            rho.rho_lr().norm()
        ),
    })
}
