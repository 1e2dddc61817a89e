use std::path::{Path, PathBuf};
use std::process::ExitCode;

use catprobe::config::RawConfig;
use catprobe::{run, CliError, ExperimentConfig, Family};
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "catprobe", version, about = "Wave-function correlator experiments for two-level systems")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "CATPROBE_THREADS", value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    #[command(flatten)]
    Family(FamilyCommand),
    /// Run an experiment family (same as invoking it directly).
    Run {
        #[command(subcommand)]
        family: FamilyCommand,
    },
    /// Parse and range-check a config file without running it.
    Validate { path: PathBuf },
}

#[derive(Subcommand, Debug)]
enum FamilyCommand {
    /// Two-level system under classical Gaussian white-noise bias.
    FluctuatingField(FieldArgs),
    /// Spin-boson model with a finite discretized Ohmic bath.
    FiniteBath(BathArgs),
    /// Exact reduced density matrix of a cat state with orthogonal environments.
    Counterexample(CounterArgs),
    /// Synthetic collapsed, delocalized or uniform ensembles.
    Synthetic(SyntheticArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Flat key = value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug)]
struct FieldArgs {
    #[command(flatten)]
    common: Common,
    /// Tunneling amplitude Δ.
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<String>,
    /// Noise strength Γ.
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<String>,
    /// Time step (default 0.02·min(1/Δ, 1/Γ)).
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    trajectories: Option<String>,
    /// Highest moment order.
    #[arg(long)]
    kmax: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// L, R, plus or minus.
    #[arg(long)]
    initial: Option<String>,
    /// Steps between recorded rows.
    #[arg(long)]
    record_stride: Option<String>,
    /// Fixed number of steps instead of the stationarity rule.
    #[arg(long)]
    n_steps: Option<String>,
    /// Stationarity check interval in time units.
    #[arg(long)]
    window: Option<String>,
    /// Longest evolution time when waiting for stationarity.
    #[arg(long)]
    t_cap: Option<String>,
}

#[derive(Args, Debug)]
struct BathArgs {
    #[command(flatten)]
    common: Common,
    /// Dimensionless coupling α.
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    /// Bath cutoff frequency (default 5Δ).
    #[arg(long)]
    omega_c: Option<String>,
    /// Number of bath modes N.
    #[arg(long)]
    n_modes: Option<String>,
    /// Highest occupation per mode.
    #[arg(long)]
    fock_cutoff: Option<String>,
    /// Inverse temperature.
    #[arg(long)]
    beta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<String>,
    /// Static bias ε.
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<String>,
    /// Largest allowed composite dimension.
    #[arg(long)]
    dim_cap: Option<String>,
    /// start:stop:count or a comma-separated list of times.
    #[arg(long)]
    t_grid: Option<String>,
    #[arg(long)]
    kmax: Option<String>,
    /// Duration of the Δ-only preparation pulse.
    #[arg(long)]
    t_prep: Option<String>,
    /// End of the late-time window [0.8·t_max, t_max].
    #[arg(long)]
    t_max: Option<String>,
    /// Samples in the late-time window.
    #[arg(long)]
    asym_samples: Option<String>,
}

#[derive(Args, Debug)]
struct CounterArgs {
    #[command(flatten)]
    common: Common,
    /// Real overlap ⟨Φ_L|Φ_R⟩.
    #[arg(long, allow_hyphen_values = true)]
    overlap: Option<String>,
    /// Amplitude ν_L; ν_R = √(1 − ν_L²).
    #[arg(long, allow_hyphen_values = true)]
    nu: Option<String>,
}

#[derive(Args, Debug)]
struct SyntheticArgs {
    #[command(flatten)]
    common: Common,
    /// collapsed, delocalized or uniform.
    #[arg(long)]
    kind: Option<String>,
    /// Ensemble size.
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    kmax: Option<String>,
}

impl FamilyCommand {
    fn family(&self) -> Family {
        match self {
            FamilyCommand::FluctuatingField(_) => Family::FluctuatingField,
            FamilyCommand::FiniteBath(_) => Family::FiniteBath,
            FamilyCommand::Counterexample(_) => Family::Counterexample,
            FamilyCommand::Synthetic(_) => Family::Synthetic,
        }
    }

    fn common(&self) -> &Common {
        match self {
            FamilyCommand::FluctuatingField(a) => &a.common,
            FamilyCommand::FiniteBath(a) => &a.common,
            FamilyCommand::Counterexample(a) => &a.common,
            FamilyCommand::Synthetic(a) => &a.common,
        }
    }

    fn flags(&self) -> Vec<(&'static str, &Option<String>)> {
        match self {
            FamilyCommand::FluctuatingField(a) => vec![
                ("delta", &a.delta),
                ("gamma", &a.gamma),
                ("dt", &a.dt),
                ("trajectories", &a.trajectories),
                ("kmax", &a.kmax),
                ("seed", &a.seed),
                ("initial", &a.initial),
                ("record_stride", &a.record_stride),
                ("n_steps", &a.n_steps),
                ("window", &a.window),
                ("t_cap", &a.t_cap),
            ],
            FamilyCommand::FiniteBath(a) => vec![
                ("alpha", &a.alpha),
                ("omega_c", &a.omega_c),
                ("n_modes", &a.n_modes),
                ("fock_cutoff", &a.fock_cutoff),
                ("beta", &a.beta),
                ("delta", &a.delta),
                ("epsilon", &a.epsilon),
                ("dim_cap", &a.dim_cap),
                ("t_grid", &a.t_grid),
                ("kmax", &a.kmax),
                ("t_prep", &a.t_prep),
                ("t_max", &a.t_max),
                ("asym_samples", &a.asym_samples),
            ],
            FamilyCommand::Counterexample(a) => vec![("overlap", &a.overlap), ("nu", &a.nu)],
            FamilyCommand::Synthetic(a) => {
                vec![("kind", &a.kind), ("n", &a.n), ("seed", &a.seed), ("kmax", &a.kmax)]
            }
        }
    }

    fn config(&self) -> Result<ExperimentConfig, CliError> {
        let common = self.common();
        let mut raw = match &common.config {
            Some(path) => RawConfig::parse_file(path)?,
            None => RawConfig::default(),
        };
        for (key, value) in self.flags() {
            if let Some(v) = value {
                raw.set_flag(key, v);
            }
        }
        if let Some(out) = &common.out {
            raw.set_flag("out", out);
        }
        Ok(ExperimentConfig::from_raw(&raw, self.family())?)
    }
}

fn validate(path: &Path) -> Result<(), CliError> {
    let raw = RawConfig::parse_file(path)?;
    let family = raw.experiment()?.ok_or_else(|| catprobe::ConfigError {
        field: Some("experiment".into()),
        origin: None,
        message: format!(
            "{} does not name an experiment (add 'experiment = fluctuating-field|finite-bath|counterexample|synthetic')",
            path.display()
        ),
    })?;
    let cfg = ExperimentConfig::from_raw(&raw, family)?;
    print!("{}", cfg.normalized_text());
    Ok(())
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let threads = cli
        .threads
        .map(usize::from)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let family = match cli.command {
        Command::Validate { path } => return validate(&path),
        Command::Family(f) | Command::Run { family: f } => f,
    };
    let cfg = family.config()?;
    let outcome = run(&cfg, threads)?;
    println!("{}", outcome.summary);
    println!(
        "wrote {} and {} to {}",
        outcome.files.iter().map(|f| f.name.as_str()).collect::<Vec<_>>().join(", "),
        outcome.manifest.name,
        outcome.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("catprobe: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
