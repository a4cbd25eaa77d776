//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 model-domain error,
//! 4 numerical divergence during training. All outputs for a command are
//! buffered and written together after success, so a failed run leaves no
//! partial files. The default output directory is `MESHSIM_OUT_DIR` if set,
//! else the current directory.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use meshsim::config::{self, Manifest};
use meshsim::engine::{self, PowerMode};
use meshsim::forecast::{self, ForecastError};
use meshsim::mesh::{self, LinkModel, Placement};
use meshsim::powerctl::{self, PowerCtlError, QFunction};
use meshsim::propagation::{self, Environment, PathLossParams};
use meshsim::sustain::{self, EventScenario};
use meshsim::traffic;

#[derive(Parser)]
#[command(name = "meshsim", version, about = "Wireless mesh network system simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a single path-loss figure.
    Pathloss(PathlossArgs),
    /// Simulate one architecture over a traffic scenario.
    Run(RunArgs),
    /// Run two architectures at matched coverage and report ratios.
    Compare(CompareArgs),
    /// Print a sustainability report for a bundled scenario preset.
    Sustain(SustainArgs),
    /// Train the load forecaster on a generated traffic series.
    TrainForecast(TrainForecastArgs),
    /// Train the transmit-power control policy.
    TrainPolicy(TrainPolicyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PathlossModel {
    Cost231,
    Fspl,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvArg {
    MediumCity,
    Metropolitan,
}

#[derive(Args)]
struct PathlossArgs {
    #[arg(long, value_enum)]
    model: PathlossModel,
    /// Carrier frequency in MHz.
    #[arg(long)]
    f_mhz: f64,
    /// Link distance in meters.
    #[arg(long)]
    d_m: f64,
    /// Base-station height in meters (COST-231 only).
    #[arg(long, default_value_t = 40.0)]
    h_bs_m: f64,
    /// Receiver height in meters (COST-231 only).
    #[arg(long, default_value_t = 1.5)]
    h_ms_m: f64,
    #[arg(long, value_enum, default_value_t = EnvArg::MediumCity)]
    env: EnvArg,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Section name of the architecture to simulate.
    #[arg(long, default_value = "mesh")]
    arch: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trained policy file, required when power_mode = policy.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "macro")]
    first: String,
    #[arg(long, default_value = "mesh")]
    second: String,
    /// Number of seeds in the sweep (0, 1, ..., n-1).
    #[arg(long, default_value_t = 3)]
    seeds: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    #[value(name = "hajj-5day")]
    Hajj5day,
    AnnualFleet,
}

#[derive(Args)]
struct SustainArgs {
    #[arg(long, value_enum)]
    preset: Preset,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainForecastArgs {
    /// Scenario file with [traffic] and [forecast] sections.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainPolicyArgs {
    /// Scenario file with a [policy] section.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum AppError {
    Config(String),
    Domain(String),
    Divergence(String),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::Domain(_) => 3,
            AppError::Divergence(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Config(m) | AppError::Domain(m) | AppError::Divergence(m) => m,
        }
    }
}

impl From<config::ConfigError> for AppError {
    fn from(e: config::ConfigError) -> Self {
        AppError::Config(e.to_string())
    }
}

impl From<propagation::PropagationError> for AppError {
    fn from(e: propagation::PropagationError) -> Self {
        AppError::Domain(e.to_string())
    }
}

impl From<traffic::InvalidScenario> for AppError {
    fn from(e: traffic::InvalidScenario) -> Self {
        AppError::Config(e.to_string())
    }
}

impl From<ForecastError> for AppError {
    fn from(e: ForecastError) -> Self {
        match e {
            ForecastError::DivergenceDetected(_) => AppError::Divergence(e.to_string()),
            _ => AppError::Config(e.to_string()),
        }
    }
}

impl From<PowerCtlError> for AppError {
    fn from(e: PowerCtlError) -> Self {
        match e {
            PowerCtlError::DivergenceDetected(_) => AppError::Divergence(e.to_string()),
            _ => AppError::Config(e.to_string()),
        }
    }
}

impl From<mesh::MeshError> for AppError {
    fn from(e: mesh::MeshError) -> Self {
        match e {
            mesh::MeshError::Link { .. } => AppError::Domain(e.to_string()),
            _ => AppError::Config(e.to_string()),
        }
    }
}

impl From<engine::EngineError> for AppError {
    fn from(e: engine::EngineError) -> Self {
        match e {
            engine::EngineError::Forecast(f) => f.into(),
            engine::EngineError::PowerCtl(p) => p.into(),
            engine::EngineError::Mesh(m) => m.into(),
            other => AppError::Config(other.to_string()),
        }
    }
}

fn out_dir(flag: &Option<PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| std::env::var_os("MESHSIM_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn read_config(path: &Path) -> Result<(String, config::Config), AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg = config::parse_config(&text)?;
    Ok((text, cfg))
}

/// Buffered outputs, flushed only after the whole command succeeded.
struct OutputSet {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl OutputSet {
    fn new(dir: PathBuf) -> OutputSet {
        OutputSet {
            dir,
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    fn flush(mut self, mut manifest: Manifest) -> Result<(), AppError> {
        for (name, contents) in &self.files {
            manifest.record(name, contents.as_bytes());
        }
        self.files
            .push(("manifest.txt".to_string(), manifest.render_text()));
        std::fs::create_dir_all(&self.dir)
            .map_err(|e| AppError::Config(format!("cannot create {}: {e}", self.dir.display())))?;
        for (name, contents) in &self.files {
            let path = self.dir.join(name);
            std::fs::write(&path, contents)
                .map_err(|e| AppError::Config(format!("cannot write {}: {e}", path.display())))?;
            println!("wrote {}", path.display());
        }
        Ok(())
    }
}

fn cmd_pathloss(args: &PathlossArgs) -> Result<(), AppError> {
    let loss = match args.model {
        PathlossModel::Fspl => propagation::fspl(args.d_m, args.f_mhz)?,
        PathlossModel::Cost231 => propagation::cost231_path_loss(&PathLossParams {
            f_mhz: args.f_mhz,
            h_bs_m: args.h_bs_m,
            h_ms_m: args.h_ms_m,
            d_km: args.d_m / 1000.0,
            environment: match args.env {
                EnvArg::MediumCity => Environment::MediumCity,
                EnvArg::Metropolitan => Environment::Metropolitan,
            },
        })?,
    };
    println!("path_loss_db={loss:.6}");
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<(), AppError> {
    let (text, cfg) = read_config(&args.config)?;
    let scenario = config::traffic_from_config(&cfg)?;
    let arch = config::arch_from_config(&cfg, &args.arch)?;
    let series = traffic::generate_demand(&scenario)?;
    let policy: Option<QFunction> = match (&args.policy, arch.power_mode) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|_| AppError::Config(format!("cannot read policy {}", path.display())))?;
            Some(QFunction::load_text(&text)?)
        }
        (None, PowerMode::AdaptivePolicy) => {
            return Err(AppError::Config(
                "power_mode = policy requires --policy with a trained policy file".into(),
            ))
        }
        (None, _) => None,
    };
    let report = engine::run_simulation(&arch, &series, policy.as_ref(), args.seed)?;

    let mut out = OutputSet::new(out_dir(&args.out));
    out.add("ticks.csv", report.to_csv());
    out.add("summary.txt", report.summary_text());
    print!("{}", report.summary_text());
    out.flush(Manifest::new("run", text.as_bytes(), &[args.seed]))
}

fn cmd_compare(args: &CompareArgs) -> Result<(), AppError> {
    if args.seeds == 0 {
        return Err(AppError::Config("--seeds must be at least 1".into()));
    }
    let (text, cfg) = read_config(&args.config)?;
    let scenario = config::traffic_from_config(&cfg)?;
    let first = config::arch_from_config(&cfg, &args.first)?;
    let second = config::arch_from_config(&cfg, &args.second)?;
    let series = traffic::generate_demand(&scenario)?;
    let seeds: Vec<u64> = (0..args.seeds as u64).collect();
    let report = engine::compare_architectures(&first, &second, &series, &seeds)?;

    println!(
        "comparison over {} seed(s): {} (first) vs {} (second)",
        seeds.len(),
        args.first,
        args.second
    );
    for stat in &report.stats {
        println!(
            "{:>16}  first {:>12.4}  second {:>12.4}  gain {:.4} +/- {:.4}",
            stat.metric, stat.first_mean, stat.second_mean, stat.ratio_mean, stat.ratio_std
        );
    }
    let mut out = OutputSet::new(out_dir(&args.out));
    out.add("comparison.csv", report.to_csv());
    out.flush(Manifest::new("compare", text.as_bytes(), &seeds))
}

fn cmd_sustain(args: &SustainArgs) -> Result<(), AppError> {
    let scenario = match args.preset {
        Preset::Hajj5day => EventScenario::hajj_5day(),
        Preset::AnnualFleet => EventScenario::annual_fleet(),
    };
    let report = sustain::event_report(&scenario);
    print!("{}", report.render_text());
    let ledger = sustain::CostLedger::reference();
    let opex = sustain::opex_report(&ledger)
        .map_err(|e| AppError::Config(e.to_string()))?;
    print!("{}", opex.render_text(&ledger));

    let mut out = OutputSet::new(out_dir(&args.out));
    out.add("sustain.csv", report.to_csv());
    out.add("sustain.txt", report.render_text());
    out.add("costs.csv", opex.to_csv(&ledger));
    out.flush(Manifest::new("sustain", scenario.name.as_bytes(), &[]))
}

fn cmd_train_forecast(args: &TrainForecastArgs) -> Result<(), AppError> {
    let (text, cfg) = read_config(&args.config)?;
    let scenario = config::traffic_from_config(&cfg)?;
    let fc = config::forecast_from_config(&cfg)?;
    let series = traffic::generate_demand(&scenario)?;
    let totals = series.total_series();
    let (model, curve) = forecast::train_forecaster(&totals, &fc)?;

    let mut curve_csv = String::from("epoch,mse\n");
    for (epoch, mse) in curve.iter().enumerate() {
        curve_csv.push_str(&format!("{epoch},{mse:.9}\n"));
    }
    println!(
        "trained: {} epochs, final mse {:.6}",
        curve.len(),
        curve.last().copied().unwrap_or(f64::NAN)
    );
    let mut out = OutputSet::new(out_dir(&args.out));
    out.add("forecaster.txt", model.save_text());
    out.add("training_curve.csv", curve_csv);
    out.flush(Manifest::new("train-forecast", text.as_bytes(), &[fc.seed]))
}

fn cmd_train_policy(args: &TrainPolicyArgs) -> Result<(), AppError> {
    let (text, cfg) = read_config(&args.config)?;
    let pc = config::policy_from_config(&cfg)?;
    let topology = mesh::generate_topology(
        pc.n_nodes,
        pc.side_m,
        pc.f_mhz,
        Placement::Grid,
        1.0,
        pc.bounds.p_max_dbm,
        pc.g_dbi,
        pc.seed,
    )?;
    let env = powerctl::PcEnv::new(topology, LinkModel::Fspl, pc.bounds, pc.k, pc.reward)?;
    let (q, curve) = powerctl::train_policy(&env, &pc.hyper, pc.seed)?;

    println!(
        "trained: {} episodes, final return {:.4}",
        curve.len(),
        curve.last().map(|c| c.1).unwrap_or(f64::NAN)
    );
    let mut out = OutputSet::new(out_dir(&args.out));
    out.add("policy.txt", q.save_text(pc.n_nodes, pc.k, &pc.bounds));
    out.add("learning_curve.csv", powerctl::curve_to_csv(&curve));
    out.flush(Manifest::new("train-policy", text.as_bytes(), &[pc.seed]))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Pathloss(a) => cmd_pathloss(a),
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Sustain(a) => cmd_sustain(a),
        Command::TrainForecast(a) => cmd_train_forecast(a),
        Command::TrainPolicy(a) => cmd_train_policy(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
