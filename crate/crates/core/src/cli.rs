//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::WorkbenchConfig;
use crate::conversion::Converter;
use crate::robust::{
    self, sgt_check, tau_sweep, write_curves_csv, write_sweep_csv, Channel, DelayWeight,
    LftInterconnect, WjForm,
};
use crate::sim::{
    self, metrics, moi_comparison, write_moi_csv, Disturbance, ScenarioConfig, Trajectory,
    DEFAULT_WINDOW,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "rotorforce", version, about = "Multirotor DOB workbench")]
pub struct Cli {
    /// Config file (defaults to $ROTORFORCE_CONFIG, then the built-in defaults)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one closed-loop scenario and write its log and metrics
    Sim(SimArgs),
    /// Robust-stability verdict for one Q-filter time constant
    Analyze(AnalyzeArgs),
    /// Sweep the time constant and locate the stability boundaries
    Sweep(SweepArgs),
    /// Converter comparison over plant inertias
    CompareMoi(CompareMoiArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChannelArg {
    Xy,
    Z,
}

impl From<ChannelArg> for Channel {
    fn from(c: ChannelArg) -> Self {
        match c {
            ChannelArg::Xy => Channel::Xy,
            ChannelArg::Z => Channel::Z,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WjFormArg {
    Pd,
    Paper,
}

impl From<WjFormArg> for WjForm {
    fn from(f: WjFormArg) -> Self {
        match f {
            WjFormArg::Pd => WjForm::Pd,
            WjFormArg::Paper => WjForm::Paper,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DelayWeightArg {
    Rational,
    Exact,
}

impl From<DelayWeightArg> for DelayWeight {
    fn from(d: DelayWeightArg) -> Self {
        match d {
            DelayWeightArg::Rational => DelayWeight::Rational,
            DelayWeightArg::Exact => DelayWeight::Exact,
        }
    }
}

fn parse_trajectory(s: &str) -> Result<Trajectory, String> {
    s.parse()
}

fn parse_converter(s: &str) -> Result<Converter, String> {
    s.parse::<Converter>().map_err(|e| e.to_string())
}

fn parse_disturbance(s: &str) -> Result<Disturbance, String> {
    s.parse()
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: '{s}'"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive, got {s}"))
    }
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// hover | circle | accel-profile
    #[arg(long, value_parser = parse_trajectory)]
    pub scenario: Trajectory,
    /// case1 | case2
    #[arg(long, value_parser = parse_converter, default_value = "case2")]
    pub converter: Converter,
    #[arg(long, value_enum, default_value = "on")]
    pub dob: OnOff,
    /// none | sinusoid[:amp[:freq]] | step[:fx,fy,fz[@start]] |
    /// pull-release[:force[:period[:axis]]]; circle defaults to sinusoid
    #[arg(long, value_parser = parse_disturbance)]
    pub disturbance: Option<Disturbance>,
    #[arg(long, value_parser = parse_positive)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Plant roll/pitch inertia override
    #[arg(long, value_parser = parse_positive)]
    pub j: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RobustArgs {
    #[arg(long, value_enum)]
    pub channel: ChannelArg,
    #[arg(long, value_enum)]
    pub wj_form: Option<WjFormArg>,
    #[arg(long, value_enum)]
    pub delay_weight: Option<DelayWeightArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: RobustArgs,
    #[arg(long, value_parser = parse_positive)]
    pub tau: f64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: RobustArgs,
    #[arg(long, value_parser = parse_positive, default_value = "0.02")]
    pub tau_min: f64,
    #[arg(long, value_parser = parse_positive, default_value = "0.5")]
    pub tau_max: f64,
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..), default_value = "25")]
    pub steps: u32,
}

#[derive(Debug, Args)]
pub struct CompareMoiArgs {
    /// Comma-separated plant roll/pitch inertias
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = parse_positive, default_value = "0.1,0.5,1.0")]
    pub j: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure of a command after argument parsing.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    std::fs::create_dir_all(dir).map_err(runtime)?;
    let f = File::create(dir.join(name)).map_err(runtime)?;
    Ok(BufWriter::new(f))
}

fn out_dir(arg: &Option<PathBuf>, cfg: &WorkbenchConfig) -> PathBuf {
    arg.clone().unwrap_or_else(|| cfg.output.dir.clone())
}

/// Parses `args` (including the program name) and runs the command,
/// writing reports to `stdout` and diagnostics to `stderr`.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    let cfg = match WorkbenchConfig::resolve(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let result = match &cli.command {
        Command::Sim(a) => cmd_sim(a, &cfg, stdout),
        Command::Analyze(a) => cmd_analyze(a, &cfg, stdout),
        Command::Sweep(a) => cmd_sweep(a, &cfg, stdout),
        Command::CompareMoi(a) => cmd_compare_moi(a, &cfg, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let (Failure::Usage(m) | Failure::Runtime(m)) = &f;
            let _ = writeln!(stderr, "error: {m}");
            f.code()
        }
    }
}

pub fn cmd_sim(a: &SimArgs, cfg: &WorkbenchConfig, out: &mut dyn Write) -> Result<(), Failure> {
    let disturbance = a.disturbance.unwrap_or(match a.scenario {
        Trajectory::Circle => Disturbance::default_sinusoid(),
        _ => Disturbance::None,
    });
    let template = cfg.scenario_template();
    let scenario = ScenarioConfig {
        converter: a.converter,
        dob: a.dob == OnOff::On,
        trajectory: a.scenario,
        disturbance,
        duration: a.duration.unwrap_or(template.duration),
        seed: a.seed.unwrap_or(template.seed),
        inertia_override: a.j,
        ..template
    };
    scenario
        .validate()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let log = sim::run(&scenario).map_err(runtime)?;

    let dir = out_dir(&a.out, cfg);
    let dob = if scenario.dob { "on" } else { "off" };
    let name = format!("{}_dob_{dob}.csv", scenario.trajectory);
    log.write_csv(create(&dir, &name)?).map_err(runtime)?;
    writeln!(out, "log={}", dir.join(&name).display()).map_err(runtime)?;

    if let Some(reason) = &log.abort {
        return Err(Failure::Runtime(format!(
            "vehicle abort ({reason}); partial log kept in {}",
            dir.join(&name).display()
        )));
    }
    let window = DEFAULT_WINDOW.min(scenario.duration / 2.0);
    let m = metrics(&log, window).map_err(runtime)?;
    m.write_csv(create(&dir, "metrics.csv")?).map_err(runtime)?;
    let mut txt = create(&dir, "metrics.txt")?;
    txt.write_all(m.to_text().as_bytes()).map_err(runtime)?;
    out.write_all(m.to_text().as_bytes()).map_err(runtime)?;
    Ok(())
}

fn uncertainty_for(common: &RobustArgs, cfg: &WorkbenchConfig) -> robust::UncertaintyModel {
    let mut u = cfg.uncertainty_model();
    if let Some(f) = common.wj_form {
        u.wj_form = f.into();
    }
    if let Some(d) = common.delay_weight {
        u.delay_weight = d.into();
    }
    u
}

fn form_name(f: WjForm) -> &'static str {
    match f {
        WjForm::Pd => "pd",
        WjForm::Paper => "paper",
    }
}

pub fn cmd_analyze(
    a: &AnalyzeArgs,
    cfg: &WorkbenchConfig,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let channel: Channel = a.common.channel.into();
    let u = uncertainty_for(&a.common, cfg);
    let zeta = cfg.q_filter.zeta;
    let grid = robust::analysis_grid();
    let lft = LftInterconnect::build(channel, a.tau, zeta, &u, &grid).map_err(runtime)?;
    let mu = robust::mu_of(&lft);
    let sgt = sgt_check(channel, a.tau, zeta, &u, &grid).map_err(runtime)?;

    let dir = out_dir(&a.common.out, cfg);
    let name = format!("analyze_{channel}_tau{}.csv", a.tau);
    write_curves_csv(create(&dir, &name)?, &mu, &sgt).map_err(runtime)?;

    let mut report = format!(
        "channel={channel}\ntau={}\nwj_form={}\nstable={}\npeak_mu={}\npeak_omega={}\npeak_sgt={}\nstable_sgt={}\nconverged={}\ncurves={}\n",
        a.tau,
        form_name(u.wj_form),
        mu.stable,
        mu.peak,
        mu.peak_omega(),
        sgt.peak,
        sgt.stable,
        mu.converged,
        dir.join(&name).display()
    );
    if !mu.converged {
        report.push_str("warning=mu upper bound hit the iteration cap at some frequency\n");
    }
    out.write_all(report.as_bytes()).map_err(runtime)
}

pub fn cmd_sweep(a: &SweepArgs, cfg: &WorkbenchConfig, out: &mut dyn Write) -> Result<(), Failure> {
    if a.tau_max <= a.tau_min {
        return Err(Failure::Usage(format!(
            "--tau-max ({}) must exceed --tau-min ({})",
            a.tau_max, a.tau_min
        )));
    }
    let channel: Channel = a.common.channel.into();
    let u = uncertainty_for(&a.common, cfg);
    let zeta = cfg.q_filter.zeta;
    let grid = robust::analysis_grid();
    let steps = a.steps as usize;
    let sweep =
        tau_sweep(channel, a.tau_min, a.tau_max, steps, zeta, &u, &grid).map_err(runtime)?;

    let dir = out_dir(&a.common.out, cfg);
    let name = format!("sweep_{channel}_{}.csv", form_name(u.wj_form));
    write_sweep_csv(create(&dir, &name)?, &sweep).map_err(runtime)?;

    let fmt = |b: Option<f64>| b.map_or("not-bracketed".to_string(), |v| v.to_string());
    let mut report = format!(
        "channel={channel}\nwj_form={}\nboundary_mu={}\nboundary_sgt={}\nconverged={}\nplot_data={}\n",
        form_name(u.wj_form),
        fmt(sweep.boundary_mu),
        fmt(sweep.boundary_sgt),
        sweep.converged,
        dir.join(&name).display()
    );
    if channel == Channel::Xy {
        let other = match u.wj_form {
            WjForm::Pd => WjForm::Paper,
            WjForm::Paper => WjForm::Pd,
        };
        let alt_u = robust::UncertaintyModel {
            wj_form: other,
            ..u
        };
        let alt = tau_sweep(channel, a.tau_min, a.tau_max, steps, zeta, &alt_u, &grid)
            .map_err(runtime)?;
        report.push_str(&format!(
            "boundary_mu_{}={}\nboundary_sgt_{}={}\n",
            form_name(other),
            fmt(alt.boundary_mu),
            form_name(other),
            fmt(alt.boundary_sgt)
        ));
    }
    out.write_all(report.as_bytes()).map_err(runtime)?;
    sweep.boundaries(a.tau_min, a.tau_max).map_err(runtime)?;
    Ok(())
}

pub fn cmd_compare_moi(
    a: &CompareMoiArgs,
    cfg: &WorkbenchConfig,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    if a.j.is_empty() {
        return Err(Failure::Usage("--j needs at least one inertia".into()));
    }
    let runs = moi_comparison(&a.j, &cfg.scenario_template()).map_err(runtime)?;
    let dir = out_dir(&a.out, cfg);
    write_moi_csv(create(&dir, "moi.csv")?, &runs).map_err(runtime)?;
    for r in &runs {
        let name = format!("moi_{}_{}_j{}.csv", r.experiment, r.converter, r.inertia);
        r.log.write_csv(create(&dir, &name)?).map_err(runtime)?;
    }
    let mut buf = Vec::new();
    write_moi_csv(&mut buf, &runs).map_err(runtime)?;
    out.write_all(&buf).map_err(runtime)
}
