//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error (bad flags or configuration),
//! 2 runtime failure, 3 verification-suite failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::allocators::{self, DEFAULT_ESPA_BUDGET};
use crate::channel::{self, ChannelInstance};
use crate::config::SystemConfig;
use crate::error::Error;
use crate::gradcheck::{self, GradcheckSettings};
use crate::neuralnet::{self, InputTransform, NetworkArch};
use crate::rng;
use crate::trainer::{self, DataSource, Evaluation, OptimizerKind, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_VERIFICATION: i32 = 3;

pub const METHODS: [&str; 5] = ["dnn", "appa", "rpa", "espa", "contopt"];

#[derive(Parser, Debug)]
#[command(name = "pilotnet", version, about = "Pilot power allocation for distributed massive MIMO")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a large-scale fading dataset.
    GenData(GenDataArgs),
    /// Train the allocation network.
    Train(TrainArgs),
    /// Evaluate allocation methods on a dataset and write CSV reports.
    Eval(EvalArgs),
    /// Finite-difference check of the objective and network gradients.
    Gradcheck(GradcheckArgs),
    /// Forward-pass operation count of an architecture.
    Cost(CostArgs),
}

/// Scenario flags. Defaults are the paper scenario; a `--config` file is
/// applied first and individual flags override it.
#[derive(Args, Debug, Clone, Default)]
pub struct ScenarioArgs {
    /// key = value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long = "M")]
    pub m: Option<usize>,
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long)]
    pub tau: Option<usize>,
    /// Cell radius in meters.
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub zeta: Option<f64>,
    #[arg(long)]
    pub shadow_std_db: Option<f64>,
    #[arg(long, conflicts_with = "shadow_std_db")]
    pub shadow_var_db: Option<f64>,
    /// Per-user pilot power budget in watts: one value or a comma list.
    #[arg(long)]
    pub p_tot: Option<String>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub dmin: Option<f64>,
    /// Keep the RAU positions fixed across instances.
    #[arg(long)]
    pub freeze_geometry: bool,
}

impl ScenarioArgs {
    pub fn build(&self) -> crate::Result<SystemConfig> {
        let mut cfg = SystemConfig::paper_scenario();
        if let Some(path) = &self.config {
            cfg.apply_text(&fs::read_to_string(path)?)?;
        }
        let numbers: [(&str, Option<String>); 10] = [
            ("K", self.k.map(|v| v.to_string())),
            ("M", self.m.map(|v| v.to_string())),
            ("N", self.n.map(|v| v.to_string())),
            ("tau", self.tau.map(|v| v.to_string())),
            ("r", self.r.map(|v| v.to_string())),
            ("zeta", self.zeta.map(|v| v.to_string())),
            ("shadow_std_db", self.shadow_std_db.map(|v| v.to_string())),
            ("shadow_var_db", self.shadow_var_db.map(|v| v.to_string())),
            ("sigma2", self.sigma2.map(|v| v.to_string())),
            ("dmin", self.dmin.map(|v| v.to_string())),
        ];
        for (key, value) in numbers {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        if let Some(p) = &self.p_tot {
            cfg.set("p_tot", p)?;
        }
        if self.freeze_geometry {
            cfg.freeze_geometry = true;
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 2000)]
    pub count: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1000)]
    pub batch: usize,
    #[arg(long, default_value = "adam", value_parser = parse_optimizer)]
    pub optimizer: OptimizerKind,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub adam_eps: f64,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_value = "64,128,128,128,64")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value = "raw", value_parser = parse_transform)]
    pub input_transform: InputTransform,
    /// Train on this dataset file (cycled in order) instead of fresh samples.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Seed of the on-the-fly training stream.
    #[arg(long, default_value_t = 1)]
    pub data_seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub holdout_size: usize,
    #[arg(long, default_value_t = 2)]
    pub holdout_seed: u64,
    #[arg(long, default_value_t = 50)]
    pub eval_every: usize,
    #[arg(long, default_value_t = 0)]
    pub init_seed: u64,
    #[arg(long, default_value_t = trainer::DEFAULT_LOSS_SCALE)]
    pub loss_scale: f64,
    #[arg(long, default_value = "pilotnet.ckpt")]
    pub checkpoint: PathBuf,
    /// Training log CSV. Defaults to the checkpoint path with `.log.csv`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Save the final parameters instead of the best held-out ones.
    #[arg(long)]
    pub save_final: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub data: PathBuf,
    /// Required when `dnn` is among the methods.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Comma list from dnn, appa, rpa, espa, contopt.
    #[arg(long, value_delimiter = ',', default_value = "dnn,appa,rpa,espa", value_parser = clap::builder::PossibleValuesParser::new(METHODS))]
    pub methods: Vec<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Largest number of assignments ESPA may enumerate per instance.
    #[arg(long, default_value_t = DEFAULT_ESPA_BUDGET, value_parser = parse_budget)]
    pub espa_budget: u128,
    /// Run ESPA on the first N instances only.
    #[arg(long)]
    pub espa_limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub rpa_seed: u64,
    #[arg(long, default_value_t = allocators::CONTOPT_DEFAULT_STEPS)]
    pub contopt_steps: usize,
    #[arg(long, default_value_t = allocators::CONTOPT_DEFAULT_STEP_SIZE)]
    pub contopt_step_size: f64,
    /// Logit jitter of the continuous optimizer's start point.
    #[arg(long, default_value_t = 0.5)]
    pub contopt_jitter: f64,
    #[arg(long, default_value_t = 0)]
    pub contopt_seed: u64,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 5)]
    pub instances: usize,
    #[arg(long, default_value_t = 50)]
    pub coords: usize,
    #[arg(long, default_value_t = gradcheck::DEFAULT_MSE_TOLERANCE)]
    pub tol_mse: f64,
    #[arg(long, default_value_t = gradcheck::DEFAULT_NETWORK_TOLERANCE)]
    pub tol_net: f64,
    /// Sets both tolerances.
    #[arg(long, conflicts_with_all = ["tol_mse", "tol_net"])]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "64,128,128,128,64")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value = "raw", value_parser = parse_transform)]
    pub input_transform: InputTransform,
}

#[derive(Args, Debug)]
pub struct CostArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, value_delimiter = ',', default_value = "64,128,128,128,64")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    pub batch: usize,
}

fn parse_transform(s: &str) -> Result<InputTransform, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_optimizer(s: &str) -> Result<OptimizerKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_budget(s: &str) -> Result<u128, String> {
    if let Ok(v) = s.parse::<u128>() {
        return Ok(v);
    }
    let v: f64 = s.parse().map_err(|_| format!("cannot parse budget {s:?}"))?;
    if !(v.is_finite() && v >= 0.0 && v.fract() == 0.0) {
        return Err(format!("budget must be a nonnegative integer, got {s:?}"));
    }
    Ok(v as u128)
}

/// Failure of a command, mapped onto an exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::Verification(_) => EXIT_VERIFICATION,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(e) => write!(f, "error: {e}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(m) => CliError::Usage(m),
            other => CliError::Runtime(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub command_line: Vec<String>,
    pub version: String,
    pub config: SystemConfig,
    pub seeds: Vec<(String, u64)>,
    pub parameters: serde_json::Value,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    /// Every file the run wrote, this manifest included.
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    fn new(command: &str, command_line: &[String], config: &SystemConfig) -> Self {
        Self {
            command: command.to_string(),
            command_line: command_line.to_vec(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            seeds: Vec::new(),
            parameters: serde_json::Value::Null,
            started_unix_s: unix_now(),
            finished_unix_s: 0.0,
            outputs: Vec::new(),
        }
    }

    fn finish(mut self, path: &Path) -> CliResult<()> {
        self.finished_unix_s = unix_now();
        self.outputs.push(path.to_path_buf());
        let json = serde_json::to_string_pretty(&self).map_err(|e| CliError::Runtime(Error::Io(e.into())))?;
        fs::write(path, json + "\n").map_err(Error::from)?;
        Ok(())
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn require_parent_dir(path: &Path, what: &str) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(CliError::Usage(format!(
            "{what} directory {} does not exist",
            dir.display()
        ))),
        _ => Ok(()),
    }
}

/// Parse `args` (program name first) and run. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let command_line = args.iter().map(|a| a.to_string_lossy().into_owned()).collect::<Vec<_>>();
    match execute(cli.command, &command_line) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, command_line: &[String]) -> CliResult<()> {
    match command {
        Command::GenData(a) => gen_data(a, command_line),
        Command::Train(a) => train(a, command_line),
        Command::Eval(a) => eval(a, command_line),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Cost(a) => cost(a),
    }
}

fn gen_data(args: GenDataArgs, command_line: &[String]) -> CliResult<()> {
    let mut cfg = args.scenario.build()?;
    if let Some(seed) = args.seed {
        cfg.rng_seed = seed;
    }
    cfg.validate()?;
    if args.count == 0 {
        return Err(CliError::Usage("--count must be positive".into()));
    }
    require_parent_dir(&args.out, "output")?;
    let mut manifest = RunManifest::new("gen-data", command_line, &cfg);
    let data = channel::generate_dataset(&cfg, args.count)?;
    channel::write_dataset(&args.out, &data)?;
    manifest.seeds.push(("rng_seed".into(), cfg.rng_seed));
    manifest.parameters = serde_json::json!({ "count": args.count });
    manifest.outputs.push(args.out.clone());
    manifest.finish(&with_suffix(&args.out, ".manifest.json"))?;
    println!("wrote {} instances of {}x{} to {}", data.len(), cfg.num_users, cfg.num_raus, args.out.display());
    Ok(())
}

fn train(args: TrainArgs, command_line: &[String]) -> CliResult<()> {
    let cfg = args.scenario.build()?;
    cfg.validate()?;
    let arch = NetworkArch::for_scenario(&cfg, &args.hidden)?;
    let log_path = args.log.clone().unwrap_or_else(|| with_suffix(&args.checkpoint, ".log.csv"));
    require_parent_dir(&args.checkpoint, "checkpoint")?;
    require_parent_dir(&log_path, "log")?;
    let data_source = match &args.data {
        Some(path) => DataSource::FixedDataset(path.clone()),
        None => DataSource::OnTheFly { seed: args.data_seed },
    };
    let tc = TrainConfig {
        batch_size: args.batch,
        iterations: args.iterations,
        optimizer: args.optimizer,
        learning_rate: args.lr,
        adam_beta1: args.beta1,
        adam_beta2: args.beta2,
        adam_epsilon: args.adam_eps,
        data_source,
        eval_every: args.eval_every,
        holdout_size: args.holdout_size,
        holdout_seed: args.holdout_seed,
        init_seed: args.init_seed,
        loss_scale: args.loss_scale,
        input_transform: args.input_transform,
        checkpoint_path: Some(args.checkpoint.clone()),
    };
    tc.validate()?;
    let mut manifest = RunManifest::new("train", command_line, &cfg);
    println!("architecture {:?}", arch.layer_sizes);
    let outcome = trainer::train(&arch, &tc, &cfg)?;
    let saved = if args.save_final {
        neuralnet::save_params(&outcome.final_params, &args.checkpoint)?;
        "final"
    } else {
        "best"
    };
    outcome.log.write_csv(&log_path)?;
    manifest.seeds = vec![
        ("data_seed".into(), args.data_seed),
        ("holdout_seed".into(), args.holdout_seed),
        ("init_seed".into(), args.init_seed),
    ];
    manifest.parameters = serde_json::json!({
        "architecture": arch.layer_sizes,
        "iterations": args.iterations,
        "batch": args.batch,
        "optimizer": format!("{:?}", args.optimizer).to_lowercase(),
        "learning_rate": args.lr,
        "adam_beta1": args.beta1,
        "adam_beta2": args.beta2,
        "adam_epsilon": args.adam_eps,
        "input_transform": args.input_transform.to_string(),
        "data": args.data,
        "holdout_size": args.holdout_size,
        "eval_every": args.eval_every,
        "loss_scale": args.loss_scale,
        "saved_parameters": saved,
        "best_iteration": outcome.best_iteration,
        "best_holdout_mean": outcome.best_holdout_mean,
    });
    manifest.outputs = vec![args.checkpoint.clone(), log_path.clone()];
    manifest.finish(&with_suffix(&args.checkpoint, ".manifest.json"))?;
    println!(
        "best held-out mean sum MSE {:e} at iteration {}; saved {saved} parameters to {}",
        outcome.best_holdout_mean,
        outcome.best_iteration,
        args.checkpoint.display()
    );
    Ok(())
}

fn eval(mut args: EvalArgs, command_line: &[String]) -> CliResult<()> {
    let mut seen = Vec::new();
    args.methods.retain(|m| {
        let first = !seen.contains(m);
        seen.push(m.clone());
        first
    });
    let cfg = args.scenario.build()?;
    cfg.validate_basic()?;
    let wants = |m: &str| args.methods.iter().any(|x| x == m);
    if wants("espa") {
        let needed = (cfg.num_pilots as u128).checked_pow(cfg.num_users as u32).unwrap_or(u128::MAX);
        if needed > args.espa_budget {
            return Err(CliError::Runtime(Error::BudgetExceeded {
                needed,
                budget: args.espa_budget,
            }));
        }
    }
    let params = if wants("dnn") {
        let path = args
            .checkpoint
            .as_ref()
            .ok_or_else(|| CliError::Usage("method dnn needs --checkpoint".into()))?;
        let params = neuralnet::load_params(path)?;
        params.arch.check_scenario(&cfg)?;
        Some(params)
    } else {
        None
    };
    let dataset = channel::read_dataset(&args.data)?;
    if dataset.is_empty() {
        return Err(CliError::Runtime(Error::Dimension(format!(
            "dataset {} is empty",
            args.data.display()
        ))));
    }
    fs::create_dir_all(&args.out_dir).map_err(Error::from)?;
    let mut manifest = RunManifest::new("eval", command_line, &cfg);

    let mut evaluations = Vec::new();
    for method in &args.methods {
        let eval = run_method(method, &args, &cfg, &dataset, params.as_ref())?;
        println!(
            "{method}: {} instances, median {:e}, mean {:e}, {:.6} s total",
            eval.summary.count, eval.summary.median, eval.summary.mean, eval.total_seconds
        );
        evaluations.push(eval);
    }

    for eval in &evaluations {
        let per_instance = args.out_dir.join(format!("{}_per_instance.csv", eval.method));
        fs::write(&per_instance, per_instance_csv(eval)).map_err(Error::from)?;
        let cdf = args.out_dir.join(format!("{}_cdf.csv", eval.method));
        fs::write(&cdf, cdf_csv(eval)).map_err(Error::from)?;
        manifest.outputs.extend([per_instance, cdf]);
    }
    let timing = args.out_dir.join("timing.csv");
    fs::write(&timing, timing_csv(&evaluations)).map_err(Error::from)?;
    let summary = args.out_dir.join("summary.csv");
    fs::write(&summary, summary_csv(&evaluations)).map_err(Error::from)?;
    manifest.outputs.extend([timing, summary]);
    manifest.seeds = vec![
        ("rpa_seed".into(), args.rpa_seed),
        ("contopt_seed".into(), args.contopt_seed),
    ];
    manifest.parameters = serde_json::json!({
        "data": args.data,
        "checkpoint": args.checkpoint,
        "methods": args.methods,
        "espa_budget": args.espa_budget.to_string(),
        "espa_limit": args.espa_limit,
        "contopt_steps": args.contopt_steps,
        "contopt_step_size": args.contopt_step_size,
        "contopt_jitter": args.contopt_jitter,
    });
    manifest.finish(&args.out_dir.join("manifest.json"))?;
    Ok(())
}

fn run_method(
    method: &str,
    args: &EvalArgs,
    cfg: &SystemConfig,
    dataset: &[ChannelInstance],
    params: Option<&neuralnet::NetworkParams>,
) -> CliResult<Evaluation> {
    let eval = match method {
        "dnn" => trainer::evaluate(params.expect("loaded when requested"), dataset, cfg)?,
        "appa" => trainer::evaluate_method("appa", dataset, cfg, |_, _| Ok(allocators::appa(cfg)))?,
        "rpa" => trainer::evaluate_method("rpa", dataset, cfg, |i, _| {
            allocators::rpa(cfg, &mut rng::stream(args.rpa_seed, i as u64)).to_allocation(cfg)
        })?,
        "espa" => {
            let n = args.espa_limit.unwrap_or(dataset.len()).min(dataset.len());
            if n == 0 {
                return Err(CliError::Usage("--espa-limit must be positive".into()));
            }
            trainer::evaluate_method("espa", &dataset[..n], cfg, |_, inst| {
                allocators::espa(inst, cfg, args.espa_budget)?.0.to_allocation(cfg)
            })?
        }
        "contopt" => trainer::evaluate_method("contopt", dataset, cfg, |i, inst| {
            let init = allocators::jittered_uniform(cfg, args.contopt_jitter, &mut rng::stream(args.contopt_seed, i as u64));
            allocators::continuous_opt(inst, cfg, &init, args.contopt_steps, args.contopt_step_size)
        })?,
        other => return Err(CliError::Usage(format!("unknown method {other:?}"))),
    };
    Ok(eval)
}

pub fn per_instance_csv(eval: &Evaluation) -> String {
    let mut out = String::from("instance,sum_mse\n");
    for (i, v) in eval.values().iter().enumerate() {
        let _ = writeln!(out, "{i},{v:e}");
    }
    out
}

pub fn cdf_csv(eval: &Evaluation) -> String {
    let mut out = String::from("sum_mse,quantile\n");
    for (v, q) in &eval.summary.cdf {
        let _ = writeln!(out, "{v:e},{q}");
    }
    out
}

pub fn timing_csv(evals: &[Evaluation]) -> String {
    let mut out = String::from("method,instances,total_seconds,per_instance_seconds\n");
    for e in evals {
        let n = e.summary.count;
        let _ = writeln!(out, "{},{n},{:e},{:e}", e.method, e.total_seconds, e.total_seconds / n as f64);
    }
    out
}

pub fn summary_csv(evals: &[Evaluation]) -> String {
    let mut out = String::from("method,count,mean,median\n");
    for e in evals {
        let _ = writeln!(out, "{},{},{:e},{:e}", e.method, e.summary.count, e.summary.mean, e.summary.median);
    }
    out
}

fn gradcheck(args: GradcheckArgs) -> CliResult<()> {
    let cfg = args.scenario.build()?;
    cfg.validate()?;
    if args.instances < 2 || args.coords == 0 {
        return Err(CliError::Usage("need at least 2 instances and 1 coordinate".into()));
    }
    let settings = GradcheckSettings {
        instances: args.instances,
        coords: args.coords,
        mse_tolerance: args.tol.unwrap_or(args.tol_mse),
        network_tolerance: args.tol.unwrap_or(args.tol_net),
        seed: args.seed,
        hidden: args.hidden,
        input_transform: args.input_transform,
    };
    let suites = gradcheck::run_standard(&cfg, &settings)?;
    let mut failed = Vec::new();
    for s in &suites {
        let verdict = if s.passed() { "PASS" } else { "FAIL" };
        println!(
            "{verdict} {}: max relative error {:e} (tolerance {:e}, {} coordinates, {} redrawn at ReLU kinks)",
            s.name,
            s.max_rel_error(),
            s.tolerance,
            s.coordinates.len(),
            s.skipped_kinks
        );
        if !s.passed() {
            failed.push(s.name.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failed.join(", ")))
    }
}

fn cost(args: CostArgs) -> CliResult<()> {
    let cfg = args.scenario.build()?;
    cfg.validate_basic()?;
    if args.batch < 2 {
        return Err(CliError::Usage("--batch must be at least 2".into()));
    }
    let arch = NetworkArch::for_scenario(&cfg, &args.hidden)?;
    let params = neuralnet::init_params(&arch, &cfg, InputTransform::Raw, &mut rng::seeded(0))?;
    let data = channel::generate_dataset(&cfg, args.batch)?;
    let trace = params.forward(neuralnet::input_batch(&data).view(), neuralnet::Mode::Infer)?;
    let per_sample = trace.mac_count / args.batch as u64;
    println!("architecture {:?}", arch.layer_sizes);
    println!("formula MACs per sample {}", arch.forward_macs());
    println!("measured MACs per sample {per_sample}");
    println!("elementwise ops per sample {}", trace.elementwise_ops / args.batch as u64);
    println!("training MACs per iteration {}", 2 * per_sample * args.batch as u64);
    if per_sample != arch.forward_macs() {
        return Err(CliError::Verification("measured MAC count differs from the formula".into()));
    }
    Ok(())
}
