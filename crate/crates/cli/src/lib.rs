//! Command-line front end: argument parsing, command dispatch, result files
//! and run manifests.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use ris_mac_core::channel::draw_channels;
use ris_mac_core::dcf::contention_cascade;
use ris_mac_core::experiment::{self, ExperimentConfig, ResultTable, Sweep};
use ris_mac_core::scenario::{validate_scenario, PopulationRatio};
use ris_mac_core::sim::{measure_fairness, simulate, BetaAlpha, Mode};
use ris_mac_core::{optimizer, Error, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

/// Environment variable capping the sweep thread count.
pub const THREADS_ENV: &str = "RIS_MAC_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ris-mac", version, about = "Hybrid scheduled/contended MAC for RIS-assisted uplink")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ScenarioArg {
    /// Scenario TOML file; the built-in default scenario when omitted.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario file and list every violation.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArg,
    },
    /// Optimize one frame and print the plan as JSON.
    Optimize {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the plan here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the contention cascade round by round as CSV.
    DcfTable {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Contending users Y.
        #[arg(long)]
        users: usize,
        /// Subchannels C; the scenario's value when omitted.
        #[arg(long)]
        channels: Option<usize>,
    },
    /// Simulate consecutive frames and print one summary line per frame.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, default_value = "proposed")]
        mode: String,
        #[arg(long, default_value_t = 1)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override beta/alpha of proposed frames.
        #[arg(long)]
        beta_alpha: Option<f64>,
        /// Contenders pick the idle subchannel with the best rate.
        #[arg(long)]
        csi_best_channel: bool,
        /// Write every frame trace as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a parameter sweep and write the aggregated table.
    Experiment {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Axis spec, e.g. `users=50:200:25;elements=0,128`.
        #[arg(long)]
        sweep: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a figure preset (fig5 to fig10) and write its table.
    Report {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        figure: String,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Comma list of modes; all three when omitted.
    #[arg(long, value_delimiter = ',')]
    pub modes: Vec<String>,
    /// Number of seeds, numbered from `seed_base`.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed_base: u64,
    #[arg(long, default_value_t = 1)]
    pub frames: usize,
    /// Population ratio used when users are swept without a ratio axis.
    #[arg(long, default_value = "5:4:1")]
    pub ratio: String,
    #[arg(long)]
    pub csi_best_channel: bool,
}

/// Everything needed to reproduce an output file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub scenario_path: Option<String>,
    /// SHA-256 of the scenario file, or of the serialized default scenario.
    pub scenario_sha256: String,
    pub seeds: Vec<u64>,
    pub sweep: String,
    pub modes: Vec<String>,
    pub frames: usize,
    /// Seconds since the epoch; `SOURCE_DATE_EPOCH` when set.
    pub timestamp: u64,
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or_else(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs())
        })
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Infeasible(_) | Error::Capacity { .. } => EXIT_INFEASIBLE,
            Error::InvalidScenario(_) | Error::DegenerateGeometry(_) | Error::Parse(_) => EXIT_INVALID,
            Error::InvalidSweep(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(EXIT_RUNTIME, e.to_string())
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Loads and validates the scenario, returning it with its path and hash.
fn load_scenario(arg: &ScenarioArg) -> std::result::Result<(Scenario, Option<String>, String), Failure> {
    let (s, path, hash) = match &arg.scenario {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::new(EXIT_RUNTIME, format!("{}: {e}", p.display())))?;
            let s = Scenario::from_toml_str(&text)
                .map_err(|e| Failure::new(EXIT_INVALID, format!("{}: {e}", p.display())))?;
            (s, Some(p.display().to_string()), sha256_hex(text.as_bytes()))
        }
        None => {
            let s = Scenario::default();
            let hash = sha256_hex(s.to_toml_string().as_bytes());
            (s, None, hash)
        }
    };
    let report = validate_scenario(&s);
    if !report.is_runnable() {
        return Err(Failure::new(EXIT_INVALID, report.violations.join("\n")));
    }
    Ok((s, path, hash))
}

fn parse_modes(names: &[String]) -> std::result::Result<Vec<Mode>, Failure> {
    if names.is_empty() {
        return Ok(Mode::ALL.to_vec());
    }
    names
        .iter()
        .map(|n| n.parse::<Mode>().map_err(|e| Failure::new(EXIT_USAGE, e.to_string())))
        .collect()
}

fn thread_pool() -> std::result::Result<rayon::ThreadPool, Failure> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::new(EXIT_USAGE, format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Failure::new(EXIT_RUNTIME, e.to_string()))
}

/// Path of the manifest written next to `out`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn write_table(table: &ResultTable, out: &Path, format: Format) -> Result<(), Error> {
    match format {
        Format::Csv => experiment::write_csv(table, out),
        Format::Json => experiment::write_json(table, out),
    }
}

fn run_sweep(
    command: &str,
    scenario: &ScenarioArg,
    sweep: Sweep,
    default_modes: Vec<Mode>,
    default_seeds: usize,
    run: &RunArgs,
    stdout: &mut dyn Write,
) -> CmdResult {
    let (mut s, path, hash) = load_scenario(scenario)?;
    if run.csi_best_channel {
        s.simulation.csi_best_channel = true;
    }
    let modes = if run.modes.is_empty() { default_modes } else { parse_modes(&run.modes)? };
    let n_seeds = run.seeds.unwrap_or(default_seeds);
    if n_seeds == 0 {
        return Err(Failure::new(EXIT_USAGE, "--seeds must be positive"));
    }
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|i| run.seed_base + i).collect();
    let ratio: PopulationRatio = run.ratio.parse().map_err(|e: Error| Failure::new(EXIT_USAGE, e.to_string()))?;
    let mut cfg = ExperimentConfig::new(sweep, modes, seeds);
    cfg.frames = run.frames;
    cfg.default_ratio = ratio;
    let table = thread_pool()?.install(|| experiment::run_experiment(&s, &cfg))?;
    write_table(&table, &run.out, run.format)?;
    let manifest = RunManifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        scenario_path: path,
        scenario_sha256: hash,
        seeds: cfg.seeds.clone(),
        sweep: cfg.sweep.to_string(),
        modes: cfg.modes.iter().map(ToString::to_string).collect(),
        frames: cfg.frames,
        timestamp: timestamp(),
        outputs: vec![run.out.display().to_string()],
    };
    let mpath = manifest_path(&run.out);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::new(EXIT_RUNTIME, e.to_string()))?;
    std::fs::write(&mpath, text + "\n")?;
    writeln!(stdout, "wrote {} rows to {} ({})", table.rows.len(), run.out.display(), mpath.display())?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> std::result::Result<String, Failure> {
    serde_json::to_string_pretty(v).map_err(|e| Failure::new(EXIT_RUNTIME, e.to_string()))
}

fn dispatch(cli: Cli, stdout: &mut dyn Write) -> CmdResult {
    match cli.command {
        Command::Validate { scenario } => {
            let (s, _, hash) = load_scenario(&scenario)?;
            let cls = s.classify();
            writeln!(
                stdout,
                "ok: K={} Z={} X={} Y={} M={} N={} sha256={hash}",
                s.population.num_existing,
                s.population.num_new_mobile,
                cls.x(),
                cls.y(),
                s.ris.num_ris,
                s.ris.elements_per_ris
            )?;
        }
        Command::Optimize { scenario, seed, out } => {
            let (s, _, _) = load_scenario(&scenario)?;
            let ch = draw_channels(&s, seed)?;
            let r = optimizer::joint_optimize(&s, &ch)?;
            let text = to_json(&r)? + "\n";
            match out {
                Some(p) => std::fs::write(p, text)?,
                None => stdout.write_all(text.as_bytes())?,
            }
        }
        Command::DcfTable { scenario, users, channels } => {
            let (s, _, _) = load_scenario(&scenario)?;
            let c = channels.unwrap_or(s.radio.num_subchannels);
            let summary = contention_cascade(users, c, &s.dcf)?;
            writeln!(stdout, "round,contenders,tau,collision_prob,success_prob_channel,cumulative_served,forced")?;
            for r in &summary.rounds {
                writeln!(
                    stdout,
                    "{},{},{},{},{},{},{}",
                    r.round_index,
                    r.contenders,
                    experiment::format_float(r.tau),
                    experiment::format_float(r.collision_prob),
                    experiment::format_float(r.success_prob_channel),
                    r.cumulative_served,
                    r.forced
                )?;
            }
            writeln!(stdout, "# n_r={} t_r_s={}", summary.n_r, experiment::format_float(summary.t_r_s))?;
        }
        Command::Simulate { scenario, mode, frames, seed, beta_alpha, csi_best_channel, trace } => {
            let (mut s, _, _) = load_scenario(&scenario)?;
            let mode: Mode = mode.parse().map_err(|e: Error| Failure::new(EXIT_USAGE, e.to_string()))?;
            if frames == 0 {
                return Err(Failure::new(EXIT_USAGE, "--frames must be positive"));
            }
            if csi_best_channel {
                s.simulation.csi_best_channel = true;
            }
            let traces = simulate(&s, mode, frames, seed, beta_alpha.map(BetaAlpha::Ratio))?;
            writeln!(stdout, "frame,mode,s_s,s_c,s_o,served,users,collisions,n_r_measured,n_r_analytic")?;
            for t in &traces {
                writeln!(
                    stdout,
                    "{},{},{},{},{},{},{},{},{},{}",
                    t.frame_index,
                    t.mode,
                    experiment::format_float(t.throughput.s_s),
                    experiment::format_float(t.throughput.s_c),
                    experiment::format_float(t.throughput.s_o),
                    t.served.iter().filter(|&&x| x).count(),
                    t.served.len(),
                    t.collisions,
                    t.n_r_measured.map_or(String::new(), |v| v.to_string()),
                    t.frame.n_r
                )?;
            }
            let f = measure_fairness(&traces)?;
            let show = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
            writeln!(
                stdout,
                "# served static={} existing_mobile={} new_mobile={} overall={:.4}",
                show(f.static_users),
                show(f.existing_mobile),
                show(f.new_mobile),
                f.overall
            )?;
            if let Some(p) = trace {
                std::fs::write(p, to_json(&traces)? + "\n")?;
            }
        }
        Command::Experiment { scenario, sweep, run } => {
            let sweep: Sweep = sweep.parse()?;
            run_sweep("experiment", &scenario, sweep, Mode::ALL.to_vec(), 1, &run, stdout)?;
        }
        Command::Report { scenario, figure, run } => {
            let (sweep, modes, seeds) = experiment::preset(&figure).map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
            run_sweep(&format!("report {figure}"), &scenario, sweep, modes, seeds, &run, stdout)?;
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}
