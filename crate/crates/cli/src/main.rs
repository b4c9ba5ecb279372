//! Command-line front end: file-based, reproducible runs of the simulator,
//! the characterization protocols, the analysis/fitting pipeline, and the
//! Verilog-A emitter. Every run writes a manifest alongside its primary
//! output recording the resolved configuration.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use reram_model::analysis::refine_optimizer_log;
use reram_model::fit::{extract_model, ExtractConfig};
use reram_model::io::{self, fmt_float, kv, write_atomic};
use reram_model::va::{emit_verilog_a, EmitOptions};
use reram_model::{
    AnalysisError, FileError, FitError, IntegrationMethod, MeasurementLog64, ModelError,
    ModelParams64, OptimizerConfig, ProtocolConfig, ProtocolError, ProtocolKind, RatePoint64,
    RefinementConfig, SimError, SmoothingParams64, SweeperConfig, VaError, VirtualDevice,
};

/// Compact ReRAM switching-model toolkit.
#[derive(Parser)]
#[command(name = "reram", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a voltage waveform on a virtual device and write the state trace.
    Simulate(SimulateArgs),
    /// Run the operating-state sweeper protocol.
    Sweep(SweepArgs),
    /// Run the biasing-optimizer protocol.
    Optimize(OptimizeArgs),
    /// Convert a measurement log into switching-rate points.
    Analyze(AnalyzeArgs),
    /// Extract model parameters from a sweeper and an optimizer log.
    Fit(FitArgs),
    /// Emit the Verilog-A behavioral module.
    EmitVa(EmitVaArgs),
    /// Export the switching-rate surface over a resistance/voltage grid.
    Surface(SurfaceArgs),
}

#[derive(Args)]
struct ParamsOpt {
    /// Model parameter file; the built-in device preset when omitted.
    #[arg(long)]
    params: Option<PathBuf>,
}

impl ParamsOpt {
    fn load(&self) -> Result<(ModelParams64, SmoothingParams64), CliError> {
        match &self.params {
            Some(path) => Ok(io::params::read(path)?),
            None => Ok((ModelParams64::preset(), SmoothingParams64::default())),
        }
    }

    fn describe(&self) -> String {
        match &self.params {
            Some(p) => p.display().to_string(),
            None => "builtin-preset".into(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    ClosedForm,
    Numeric,
}

impl From<MethodArg> for IntegrationMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::ClosedForm => IntegrationMethod::ClosedForm,
            MethodArg::Numeric => IntegrationMethod::Numeric,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    params: ParamsOpt,
    /// Waveform CSV (`amplitude_V,width_s`).
    #[arg(long)]
    waveform: PathBuf,
    /// Initial resistive state (ohm).
    #[arg(long, default_value_t = 13_650.0)]
    r0: f64,
    /// State integration method.
    #[arg(long, value_enum, default_value = "closed-form")]
    method: MethodArg,
    /// Output trace CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    params: ParamsOpt,
    /// Initial resistive state (ohm).
    #[arg(long, default_value_t = 13_650.0)]
    r0: f64,
    /// Pulses per train.
    #[arg(long, default_value_t = 500)]
    pulses: usize,
    /// Pulse width (s).
    #[arg(long, default_value_t = 100e-6)]
    width: f64,
    /// First amplitude magnitude (V).
    #[arg(long, default_value_t = 0.6)]
    v_start: f64,
    /// Amplitude increment every two trains (V).
    #[arg(long, default_value_t = 0.1)]
    v_step: f64,
    /// Final amplitude magnitude (V).
    #[arg(long, default_value_t = 0.8)]
    v_stop: f64,
    /// Relative read-noise sigma.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Read-noise RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output measurement-log CSV (a `.config` sidecar is written next to it).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    params: ParamsOpt,
    /// Target resistive state R_0 (ohm).
    #[arg(long)]
    target: f64,
    /// Initial resistive state; defaults to the target.
    #[arg(long)]
    r0: Option<f64>,
    /// Pulses per train.
    #[arg(long, default_value_t = 10)]
    train_pulses: usize,
    /// Pulse width (s).
    #[arg(long, default_value_t = 100e-6)]
    width: f64,
    /// Tolerance band half width (fraction of the target).
    #[arg(long, default_value_t = 0.10)]
    eps_opt: f64,
    /// First amplitude of each polarity ramp (V).
    #[arg(long, default_value_t = 0.1)]
    ramp_start: f64,
    /// Per-train amplitude increment (V).
    #[arg(long, default_value_t = 0.02)]
    ramp_step: f64,
    /// Amplitude cap (V).
    #[arg(long, default_value_t = 0.9)]
    ramp_max: f64,
    /// Run budget in trains.
    #[arg(long, default_value_t = 2000)]
    max_trains: usize,
    /// Flip on either band edge instead of only the driven side.
    #[arg(long)]
    two_sided: bool,
    /// Relative read-noise sigma.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Read-noise RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output measurement-log CSV (a `.config` sidecar is written next to it).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sweeper,
    Optimizer,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Measurement-log CSV.
    #[arg(long)]
    log: PathBuf,
    /// Which protocol produced the log.
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Refinement band half width (optimizer mode).
    #[arg(long, default_value_t = 0.05)]
    eps_ref: f64,
    /// Smoothing-derivative window (sweeper mode; odd, >= 5).
    #[arg(long, default_value_t = 11)]
    window: usize,
    /// Exclude a train amplitude (repeatable; signed volts).
    #[arg(long = "exclude-voltage", allow_negative_numbers = true)]
    exclude_voltage: Vec<f64>,
    /// Output rate-point CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Sweeper measurement-log CSV.
    #[arg(long)]
    sweeper_log: PathBuf,
    /// Optimizer measurement-log CSV.
    #[arg(long)]
    optimizer_log: PathBuf,
    /// Refinement band half width.
    #[arg(long, default_value_t = 0.05)]
    eps_ref: f64,
    /// Exclude a sweeper amplitude (repeatable; signed volts).
    #[arg(long = "exclude-voltage", allow_negative_numbers = true)]
    exclude_voltage: Vec<f64>,
    /// Read-out voltage recorded in the fitted parameters (V).
    #[arg(long, default_value_t = 0.2)]
    v_read: f64,
    /// Output parameter file.
    #[arg(long)]
    params_out: PathBuf,
    /// Output report file.
    #[arg(long)]
    report_out: PathBuf,
}

#[derive(Args)]
struct EmitVaArgs {
    #[command(flatten)]
    params: ParamsOpt,
    /// Module identifier.
    #[arg(long, default_value = "reram_model")]
    module_name: String,
    /// Initial resistive state parameter default (ohm).
    #[arg(long)]
    r_init: f64,
    /// Significant digits for numeric literals.
    #[arg(long, default_value_t = 9)]
    precision: usize,
    /// Output `.va` file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Exact,
    Smooth,
}

#[derive(Args)]
struct SurfaceArgs {
    #[command(flatten)]
    params: ParamsOpt,
    #[arg(long)]
    r_min: f64,
    #[arg(long)]
    r_max: f64,
    #[arg(long, default_value_t = 200)]
    r_count: usize,
    #[arg(long, allow_negative_numbers = true)]
    v_min: f64,
    #[arg(long, allow_negative_numbers = true)]
    v_max: f64,
    #[arg(long, default_value_t = 200)]
    v_count: usize,
    /// Model variant to sample.
    #[arg(long, value_enum, default_value = "exact")]
    variant: VariantArg,
    /// Output grid CSV (`resistance_ohm,voltage_V,rate_ohm_per_s`).
    #[arg(long)]
    out: PathBuf,
}

// ------------------------------------------------------------------ errors

#[derive(Debug)]
enum CliError {
    /// Input file could not be read (exit 3).
    Unreadable(String),
    /// Input violated a schema or carried invalid values (exit 4).
    Schema(String),
    /// A model, protocol, or fitting stage failed (exit 5).
    Stage(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Unreadable(_) => 3,
            CliError::Schema(_) => 4,
            CliError::Stage(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Unreadable(m) | CliError::Schema(m) | CliError::Stage(m) => m,
        }
    }
}

impl From<FileError> for CliError {
    fn from(e: FileError) -> Self {
        match e {
            FileError::Io(_) => CliError::Unreadable(e.to_string()),
            other => CliError::Schema(other.to_string()),
        }
    }
}

macro_rules! stage_error {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Stage(e.to_string())
            }
        }
    )*};
}
stage_error!(
    ModelError,
    SimError,
    ProtocolError,
    AnalysisError,
    FitError,
    VaError
);

// ---------------------------------------------------------------- manifest

struct Manifest {
    subcommand: &'static str,
    entries: Vec<(String, String)>,
}

impl Manifest {
    fn new(subcommand: &'static str) -> Self {
        Manifest {
            subcommand,
            entries: Vec::new(),
        }
    }

    fn put(&mut self, key: &str, value: impl Into<String>) -> &mut Self {
        self.entries.push((key.to_string(), value.into()));
        self
    }

    fn put_float(&mut self, key: &str, value: f64) -> &mut Self {
        self.put(key, fmt_float(value))
    }

    /// Writes `<out>.manifest` next to the primary output.
    fn write(&self, out: &Path) -> Result<(), CliError> {
        let mut pairs: Vec<(&str, String)> = vec![("subcommand", self.subcommand.to_string())];
        for (k, v) in &self.entries {
            pairs.push((k.as_str(), v.clone()));
        }
        let text = kv::render("run manifest", &pairs);
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest");
        write_atomic(&out.with_file_name(name), &text)?;
        Ok(())
    }
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".config");
    out.with_file_name(name)
}

// -------------------------------------------------------------- subcommands

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let (params, smoothing) = args.params.load()?;
    let waveform = io::csv::read_waveform::<f64>(&args.waveform)?;
    let mut device = VirtualDevice::new(params, smoothing, args.r0)?;
    let trace = device.run_waveform(&waveform, args.method.into())?;
    io::csv::write_trace(&args.out, &trace)?;
    let mut m = Manifest::new("simulate");
    m.put("params", args.params.describe())
        .put("waveform", args.waveform.display().to_string())
        .put_float("r0_ohm", args.r0)
        .put(
            "method",
            match args.method {
                MethodArg::ClosedForm => "closed-form",
                MethodArg::Numeric => "numeric",
            },
        )
        .put("seed", "none")
        .put("out", args.out.display().to_string());
    m.write(&args.out)
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let (params, smoothing) = args.params.load()?;
    let cfg = SweeperConfig {
        pulses_per_train: args.pulses,
        pulse_width: args.width,
        v_start: args.v_start,
        v_step: args.v_step,
        v_stop: args.v_stop,
    };
    let mut device =
        VirtualDevice::new(params, smoothing, args.r0)?.with_read_noise(args.noise, args.seed)?;
    let log = reram_model::protocol::run_sweeper(&mut device, &cfg)?;
    io::csv::write_log(&args.out, &log)?;
    io::report::write_config_sidecar(
        &sidecar_path(&args.out),
        &ProtocolConfig::Sweeper(cfg),
        args.seed,
        args.noise,
    )?;
    let mut m = Manifest::new("sweep");
    m.put("params", args.params.describe())
        .put_float("r0_ohm", args.r0)
        .put("pulses_per_train", args.pulses.to_string())
        .put_float("pulse_width_s", args.width)
        .put_float("v_start_V", args.v_start)
        .put_float("v_step_V", args.v_step)
        .put_float("v_stop_V", args.v_stop)
        .put_float("read_noise_sigma", args.noise)
        .put("seed", args.seed.to_string())
        .put("out", args.out.display().to_string());
    m.write(&args.out)
}

fn cmd_optimize(args: &OptimizeArgs) -> Result<(), CliError> {
    let (params, smoothing) = args.params.load()?;
    let cfg = OptimizerConfig {
        pulses_per_train: args.train_pulses,
        pulse_width: args.width,
        eps_opt: args.eps_opt,
        target: args.target,
        ramp_v_start: args.ramp_start,
        ramp_v_step: args.ramp_step,
        ramp_v_max: args.ramp_max,
        max_trains: args.max_trains,
        two_sided: args.two_sided,
    };
    let r0 = args.r0.unwrap_or(args.target);
    let mut device =
        VirtualDevice::new(params, smoothing, r0)?.with_read_noise(args.noise, args.seed)?;
    let log = reram_model::protocol::run_optimizer(&mut device, &cfg)?;
    io::csv::write_log(&args.out, &log)?;
    io::report::write_config_sidecar(
        &sidecar_path(&args.out),
        &ProtocolConfig::Optimizer(cfg),
        args.seed,
        args.noise,
    )?;
    let mut m = Manifest::new("optimize");
    m.put("params", args.params.describe())
        .put_float("target_ohm", args.target)
        .put_float("r0_ohm", r0)
        .put("pulses_per_train", args.train_pulses.to_string())
        .put_float("pulse_width_s", args.width)
        .put_float("eps_opt", args.eps_opt)
        .put_float("ramp_v_start_V", args.ramp_start)
        .put_float("ramp_v_step_V", args.ramp_step)
        .put_float("ramp_v_max_V", args.ramp_max)
        .put("max_trains", args.max_trains.to_string())
        .put("two_sided", args.two_sided.to_string())
        .put_float("read_noise_sigma", args.noise)
        .put("seed", args.seed.to_string())
        .put("out", args.out.display().to_string());
    m.write(&args.out)
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let points: Vec<RatePoint64> = match args.mode {
        ModeArg::Sweeper => {
            let log: MeasurementLog64 = io::csv::read_log(&args.log, ProtocolKind::Sweeper)?;
            reram_model::fit::sweeper_rate_points(&log, args.window, &args.exclude_voltage)?
        }
        ModeArg::Optimizer => {
            let log: MeasurementLog64 = io::csv::read_log(&args.log, ProtocolKind::Optimizer)?;
            let (pos, neg) = refine_optimizer_log(
                &log,
                &RefinementConfig {
                    eps_ref: args.eps_ref,
                },
            )?;
            println!(
                "refined band centers: positive {} ohm ({} points), negative {} ohm ({} points)",
                pos.band_center,
                pos.points.len(),
                neg.band_center,
                neg.points.len()
            );
            let mut all = pos.points;
            all.extend(neg.points);
            all.retain(|p| {
                !args
                    .exclude_voltage
                    .iter()
                    .any(|&ex| (ex - p.voltage).abs() <= 1e-9)
            });
            all
        }
    };
    io::csv::write_rates(&args.out, &points)?;
    let mut m = Manifest::new("analyze");
    m.put("log", args.log.display().to_string())
        .put(
            "mode",
            match args.mode {
                ModeArg::Sweeper => "sweeper",
                ModeArg::Optimizer => "optimizer",
            },
        )
        .put_float("eps_ref", args.eps_ref)
        .put("window", args.window.to_string())
        .put(
            "exclude_voltages",
            args.exclude_voltage
                .iter()
                .map(|v| fmt_float(*v))
                .collect::<Vec<_>>()
                .join(";"),
        )
        .put("seed", "none")
        .put("out", args.out.display().to_string());
    m.write(&args.out)
}

fn cmd_fit(args: &FitArgs) -> Result<(), CliError> {
    let sweeper: MeasurementLog64 = io::csv::read_log(&args.sweeper_log, ProtocolKind::Sweeper)?;
    let optimizer: MeasurementLog64 =
        io::csv::read_log(&args.optimizer_log, ProtocolKind::Optimizer)?;
    let cfg = ExtractConfig {
        eps_ref: args.eps_ref,
        v_read: args.v_read,
        exclude_voltages: args.exclude_voltage.clone(),
        ..ExtractConfig::default()
    };
    let outcome = extract_model(&sweeper, &optimizer, &cfg);
    io::report::write_fit_report(&args.report_out, &outcome)?;
    for d in &outcome.report.diagnostics {
        eprintln!("warning: [{}] {}", d.stage, d.detail);
    }
    let mut m = Manifest::new("fit");
    m.put("sweeper_log", args.sweeper_log.display().to_string())
        .put("optimizer_log", args.optimizer_log.display().to_string())
        .put_float("eps_ref", args.eps_ref)
        .put_float("v_read_V", args.v_read)
        .put(
            "exclude_voltages",
            args.exclude_voltage
                .iter()
                .map(|v| fmt_float(*v))
                .collect::<Vec<_>>()
                .join(";"),
        )
        .put("seed", "none")
        .put("params_out", args.params_out.display().to_string())
        .put("report_out", args.report_out.display().to_string());
    m.write(&args.params_out)?;
    match outcome.params {
        Some(params) => {
            io::params::write(&args.params_out, &params, &cfg.smoothing)?;
            println!(
                "extraction complete; parameters written to {}",
                args.params_out.display()
            );
            Ok(())
        }
        None => {
            let failed: Vec<&str> = outcome.report.diagnostics.iter().map(|d| d.stage).collect();
            Err(CliError::Stage(format!(
                "extraction incomplete; failing stages: {} (see {})",
                failed.join(", "),
                args.report_out.display()
            )))
        }
    }
}

fn cmd_emit_va(args: &EmitVaArgs) -> Result<(), CliError> {
    let (params, smoothing) = args.params.load()?;
    let opts = EmitOptions {
        module_name: args.module_name.clone(),
        r_init: args.r_init,
        precision: args.precision,
    };
    let text = emit_verilog_a(&params, &smoothing, &opts)?;
    write_atomic(&args.out, &text)?;
    let mut m = Manifest::new("emit-va");
    m.put("params", args.params.describe())
        .put("module_name", args.module_name.clone())
        .put_float("r_init_ohm", args.r_init)
        .put("precision", args.precision.to_string())
        .put("seed", "none")
        .put("out", args.out.display().to_string());
    m.write(&args.out)
}

fn cmd_surface(args: &SurfaceArgs) -> Result<(), CliError> {
    if args.r_count < 2 || args.v_count < 2 {
        return Err(CliError::Schema("grid counts must be >= 2".into()));
    }
    if !(args.r_min > 0.0) || args.r_min >= args.r_max || args.v_min >= args.v_max {
        return Err(CliError::Schema(
            "need 0 < r-min < r-max and v-min < v-max".into(),
        ));
    }
    let (params, smoothing) = args.params.load()?;
    let mut points = Vec::with_capacity(args.r_count * args.v_count);
    // row-major: resistance is the outer axis
    for i in 0..args.r_count {
        let fr = i as f64 / (args.r_count - 1) as f64;
        let r = args.r_min + (args.r_max - args.r_min) * fr;
        for j in 0..args.v_count {
            let fv = j as f64 / (args.v_count - 1) as f64;
            let v = args.v_min + (args.v_max - args.v_min) * fv;
            let rate = match args.variant {
                VariantArg::Exact => params.switching_rate_exact(r, v)?,
                VariantArg::Smooth => params.switching_rate_smooth(&smoothing, r, v)?,
            };
            points.push(RatePoint64 {
                resistance: r,
                voltage: v,
                rate,
            });
        }
    }
    io::csv::write_rates(&args.out, &points)?;
    let mut m = Manifest::new("surface");
    m.put("params", args.params.describe())
        .put_float("r_min_ohm", args.r_min)
        .put_float("r_max_ohm", args.r_max)
        .put("r_count", args.r_count.to_string())
        .put_float("v_min_V", args.v_min)
        .put_float("v_max_V", args.v_max)
        .put("v_count", args.v_count.to_string())
        .put(
            "variant",
            match args.variant {
                VariantArg::Exact => "exact",
                VariantArg::Smooth => "smooth",
            },
        )
        .put("seed", "none")
        .put("out", args.out.display().to_string());
    m.write(&args.out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Fit(a) => cmd_fit(a),
        Command::EmitVa(a) => cmd_emit_va(a),
        Command::Surface(a) => cmd_surface(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
