//! Command-line front end.
//!
//! Every invocation is first turned into a [`RunConfig`], which can be
//! dumped with `--dump-config` and replayed with `schreier run FILE`.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{export_graph, export_report, write_tower_dir, GraphFormat, Report, ReportFormat};
use crate::leaves::{
    classify_fiber_point, estimate_ends, sample_fiber_points, EndsParams, EndsVerdict, FiberPoint, Policy, Verdict,
};
use crate::towers::{Tower, TowerSpec};

/// Environment variable naming the default output directory of `build`.
pub const OUT_DIR_ENV: &str = "SCHREIER_OUT_DIR";

/// Exit status for invalid invocations.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for unstable or undetermined verdicts under `--strict`.
pub const EXIT_BUDGET: i32 = 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Build,
    #[default]
    Ends,
    Classify,
    Sample,
    Export,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Table,
    Json,
    Dot,
}

/// A fully resolved invocation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub command: Command,
    /// Tower spec such as `schori` or `generalized:2:4n`.
    pub tower: String,
    /// Declared depth `K` of the tower.
    pub levels: usize,
    /// Loop labels added at every vertex.
    pub decorate: Vec<String>,
    pub policy: String,
    pub ends: EndsParams,
    /// Classification budget in levels.
    pub budget: usize,
    /// Sample size.
    pub n: usize,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    /// Level exported by `export`.
    pub level: usize,
    pub format: Format,
    pub out: Option<String>,
    pub strict: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Command::Ends,
            tower: "schori".into(),
            levels: 6,
            decorate: Vec::new(),
            policy: "id".into(),
            ends: EndsParams::default(),
            budget: 20,
            n: 100,
            seed: None,
            threads: None,
            level: 0,
            format: Format::Table,
            out: None,
            strict: false,
        }
    }
}

impl RunConfig {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks everything that can be checked without building a tower.
    pub fn validate(&self) -> Result<()> {
        TowerSpec::parse(&self.tower)?;
        match self.command {
            Command::Ends | Command::Classify => {
                if let Policy::Random { .. } = Policy::parse(&self.policy)? {
                    if self.seed.is_some() {
                        return Err(Error::Config("give the seed inside the policy (random:SEED)".into()));
                    }
                }
            }
            Command::Sample => {
                if self.seed.is_none() {
                    return Err(Error::Config("sampling needs --seed".into()));
                }
                if self.n == 0 {
                    return Err(Error::Config("sample size must be at least 1".into()));
                }
            }
            Command::Build | Command::Export => {}
        }
        if matches!(self.command, Command::Ends | Command::Sample) {
            self.ends.validate()?;
        }
        if self.command == Command::Classify && self.budget < 4 {
            return Err(Error::Config("classification budget must be at least 4".into()));
        }
        if self.format == Format::Dot && self.command != Command::Export {
            return Err(Error::Config("dot output is only available for export".into()));
        }
        Ok(())
    }
}

#[derive(Parser, Debug)]
#[command(name = "schreier", version, about = "Towers of Schreier graphs and the ends of their leaves")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Write levels 0..=K and bonding maps as JSON files.
    Build {
        #[command(flatten)]
        common: Common,
        /// Output directory (default: $SCHREIER_OUT_DIR).
        #[arg(long)]
        out: Option<String>,
    },
    /// Estimate the number of ends of a point's leaf.
    Ends {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ends: EndsArgs,
        #[arg(long, default_value = "id")]
        policy: String,
    },
    /// Classify a point as special, dyadic or flip-flopping.
    Classify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "id")]
        policy: String,
        #[arg(long, default_value_t = 20)]
        budget: usize,
    },
    /// Classify and count ends for random points.
    Sample {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ends: EndsArgs,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 20)]
        budget: usize,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print one level as DOT or JSON.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        level: usize,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<String>,
    },
    /// Run a saved configuration.
    Run { config: PathBuf },
}

#[derive(Args, Debug)]
struct Common {
    /// dyadic, torus, rt, schori[:folding], generalized:N[:4n|:4n+2],
    /// mixed[:D,...] or dir:PATH.
    #[arg(long, default_value = "schori")]
    tower: String,
    /// Declared depth K.
    #[arg(long, default_value_t = 6)]
    levels: usize,
    /// Comma-separated loop labels added at every vertex.
    #[arg(long, value_delimiter = ',')]
    decorate: Vec<String>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Exit with status 3 on unstable or undetermined verdicts.
    #[arg(long)]
    strict: bool,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long)]
    dump_config: bool,
}

#[derive(Args, Debug)]
struct EndsArgs {
    #[arg(long = "r", value_delimiter = ',', default_value = "2,4,8,16")]
    r_schedule: Vec<u32>,
    #[arg(long = "R-factor", default_value_t = 4)]
    r_factor: u32,
    #[arg(long, default_value_t = 3)]
    window: u32,
    #[arg(long, default_value_t = 2)]
    confirm: u32,
    /// Deepest level used (default: the tower's vertex budget).
    #[arg(long)]
    max_level: Option<usize>,
}

impl EndsArgs {
    fn params(self) -> EndsParams {
        EndsParams {
            r_schedule: self.r_schedule,
            r_factor: self.r_factor,
            window: self.window,
            confirm: self.confirm,
            max_level: self.max_level,
        }
    }
}

fn resolve(cli: Cli) -> Result<(RunConfig, bool)> {
    let base = |c: &Common, command: Command| RunConfig {
        command,
        tower: c.tower.clone(),
        levels: c.levels,
        decorate: c.decorate.clone(),
        format: c.format.unwrap_or(if command == Command::Export || command == Command::Build {
            Format::Json
        } else {
            Format::Table
        }),
        strict: c.strict,
        ..RunConfig::default()
    };
    Ok(match cli.command {
        Sub::Build { common, out } => (RunConfig { out, ..base(&common, Command::Build) }, common.dump_config),
        Sub::Ends { common, ends, policy } => {
            (RunConfig { policy, ends: ends.params(), ..base(&common, Command::Ends) }, common.dump_config)
        }
        Sub::Classify { common, policy, budget } => {
            (RunConfig { policy, budget, ..base(&common, Command::Classify) }, common.dump_config)
        }
        Sub::Sample { common, ends, n, seed, budget, threads } => (
            RunConfig { n, seed, budget, threads, ends: ends.params(), ..base(&common, Command::Sample) },
            common.dump_config,
        ),
        Sub::Export { common, level, out } => {
            (RunConfig { level, out, ..base(&common, Command::Export) }, common.dump_config)
        }
        Sub::Run { config } => {
            let text =
                std::fs::read_to_string(&config).map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
            (RunConfig::from_json(&text)?, false)
        }
    })
}

fn report_format(f: Format) -> ReportFormat {
    if f == Format::Json {
        ReportFormat::Json
    } else {
        ReportFormat::Table
    }
}

/// Builds the configured tower, decorated if asked.
pub fn build_tower(cfg: &RunConfig) -> Result<Tower> {
    let spec = TowerSpec::parse(&cfg.tower)?;
    let t = Tower::build(&spec, cfg.levels)?;
    if cfg.decorate.is_empty() {
        Ok(t)
    } else {
        let names: Vec<&str> = cfg.decorate.iter().map(|s| s.as_str()).collect();
        t.decorated(&names)
    }
}

/// Result of executing a configuration: printed text and exit status.
pub struct Outcome {
    pub stdout: String,
    pub status: i32,
}

/// Runs a configuration without touching stdout.
pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    let tower = build_tower(cfg)?;
    let fmt = report_format(cfg.format);
    let strict_status = |bad: bool| if bad && cfg.strict { EXIT_BUDGET } else { 0 };
    match cfg.command {
        Command::Build => {
            let dir = cfg
                .out
                .clone()
                .or_else(|| std::env::var(OUT_DIR_ENV).ok())
                .ok_or_else(|| Error::Config(format!("build needs --out or ${OUT_DIR_ENV}")))?;
            write_tower_dir(&tower, std::path::Path::new(&dir))?;
            Ok(Outcome {
                stdout: format!("wrote levels 0..={} of {} to {dir}\n", tower.depth(), tower.name()),
                status: 0,
            })
        }
        Command::Export => {
            let gf = if cfg.format == Format::Dot { GraphFormat::Dot } else { GraphFormat::Json };
            let text = export_graph(tower.level(cfg.level)?, gf)?;
            match &cfg.out {
                Some(path) => {
                    std::fs::write(path, &text).map_err(|e| Error::Io(format!("{path}: {e}")))?;
                    Ok(Outcome { stdout: String::new(), status: 0 })
                }
                None => Ok(Outcome { stdout: text, status: 0 }),
            }
        }
        Command::Ends => {
            let mut p = FiberPoint::new(Policy::parse(&cfg.policy)?);
            match estimate_ends(&tower, &mut p, &cfg.ends) {
                Ok(r) => {
                    let bad = r.verdict == EndsVerdict::Unstable;
                    Ok(Outcome { stdout: export_report(&Report::Ends(r), fmt)?, status: strict_status(bad) })
                }
                Err(e @ (Error::Unstabilized { .. } | Error::LevelBudget { .. })) => {
                    let text = if fmt == ReportFormat::Json {
                        format!("{}\n", serde_json::json!({ "verdict": "unstable", "reason": e.to_string() }))
                    } else {
                        format!("verdict   unstable ({e})\n")
                    };
                    Ok(Outcome { stdout: text, status: strict_status(true) })
                }
                Err(e) => Err(e),
            }
        }
        Command::Classify => {
            let mut p = FiberPoint::new(Policy::parse(&cfg.policy)?);
            let t = classify_fiber_point(&tower, &mut p, cfg.budget)?;
            let bad = t.verdict == Verdict::Undetermined;
            Ok(Outcome { stdout: export_report(&Report::Classification(t), fmt)?, status: strict_status(bad) })
        }
        Command::Sample => {
            let seed = cfg.seed.expect("validated");
            let r = sample_fiber_points(&tower, cfg.n, seed, cfg.budget, &cfg.ends, cfg.threads)?;
            let bad =
                r.ends_histogram.contains_key("unstable") || r.classification_histogram.contains_key("undetermined");
            Ok(Outcome { stdout: export_report(&Report::Sample(r), fmt)?, status: strict_status(bad) })
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Policy(_) | Error::WordSyntax(_) | Error::UnknownLabel(_) | Error::Alphabet(_) => {
            EXIT_CONFIG
        }
        Error::TaxonomyUnsupported(_) => EXIT_CONFIG,
        Error::LevelBudget { .. } | Error::Unstabilized { .. } => EXIT_BUDGET,
        _ => 1,
    }
}

/// Parses `argv` (including the program name), runs it, and writes the
/// result to `out` and diagnostics to `err`. Returns the exit status.
pub fn run_cli<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let (cfg, dump) = match resolve(cli) {
        Ok(x) => x,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return exit_code(&e);
        }
    };
    if dump {
        let _ = out.write_all(cfg.to_json().as_bytes());
        return 0;
    }
    match execute(&cfg) {
        Ok(o) => {
            let _ = out.write_all(o.stdout.as_bytes());
            o.status
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
