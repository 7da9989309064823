//! Command-line flags and the optional `key=value` config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use apac_core::throttle::ThrottleStrategy;
use apac_sim::ScheduleRequest;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "apac", version, about = "Insert OpenMP task annotations into C++ sources and check them")]
pub struct Cli {
    /// File of `key = value` lines mirroring the flags; flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Machine-readable summary on stdout.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rewrite sources with task, taskwait and taskgroup pragmas.
    Transform {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output file, or directory when several inputs are given.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Print the per-function analysis.
    Analyze {
        input: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Extract the task graph of one run and estimate its makespan.
    Graph {
        input: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        sim: SimArgs,
        /// Write the graph in DOT format here.
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Simulated worker count.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Replay the annotated program under many schedules and compare each
    /// final state with the original program's.
    Check {
        input: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        sim: SimArgs,
        /// `all` or `random:K`.
        #[arg(long)]
        schedules: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Leave out syncs of a function: `fn` for all, `fn:i` for the i-th.
        #[arg(long = "drop-sync", value_name = "FN[:I]")]
        drop_sync: Vec<String>,
        /// Free promoted locals at scope end instead of in a cleanup task.
        #[arg(long)]
        early_free: bool,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// none, count:N or depth:D.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Never taskify calls to this function.
    #[arg(long)]
    pub exclude: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long)]
    pub entry: Option<String>,
    /// Charge the value of an integer argument on each call: `fn:index`.
    #[arg(long = "cost-arg", value_name = "FN:I")]
    pub cost_arg: Vec<String>,
}

const KEYS: &[&str] = &[
    "strategy", "exclude", "entry", "cost-arg", "output", "dot", "workers", "schedules", "seed", "drop-sync", "early-free", "json",
];

/// Parsed config file.
#[derive(Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        ConfigFile::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<ConfigFile> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected key = value", i + 1))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                bail!("line {}: unknown key `{k}`", i + 1);
            }
            values.insert(k.to_string(), v.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn list(&self, key: &str) -> Vec<String> {
        self.get(key)
            .map(|v| v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
            .unwrap_or_default()
    }

    fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            None | Some("false") => Ok(false),
            Some("true") => Ok(true),
            Some(v) => bail!("`{key}` must be true or false, got `{v}`"),
        }
    }
}

/// Everything a command needs, after merging flags over the config file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub strategy: ThrottleStrategy,
    pub exclude: Vec<String>,
    pub entry: String,
    pub cost_args: Vec<(String, usize)>,
    pub output: Option<PathBuf>,
    pub dot: Option<PathBuf>,
    pub workers: usize,
    pub schedules: ScheduleRequest,
    pub seed: u64,
    pub drop_syncs: Vec<(String, Option<usize>)>,
    pub early_free: bool,
    pub json: bool,
}

fn parse_cost_arg(s: &str) -> Result<(String, usize)> {
    let (f, i) = s.rsplit_once(':').ok_or_else(|| anyhow!("cost argument `{s}` is not FN:I"))?;
    Ok((f.to_string(), i.parse().with_context(|| format!("bad index in `{s}`"))?))
}

fn parse_drop_sync(s: &str) -> Result<(String, Option<usize>)> {
    match s.rsplit_once(':') {
        Some((f, i)) => Ok((f.to_string(), Some(i.parse().with_context(|| format!("bad index in `{s}`"))?))),
        None => Ok((s.to_string(), None)),
    }
}

fn pick<T>(flag: Option<T>, file: Option<&str>, parse: impl Fn(&str) -> Result<T>, default: T) -> Result<T> {
    match (flag, file) {
        (Some(v), _) => Ok(v),
        (None, Some(s)) => parse(s),
        (None, None) => Ok(default),
    }
}

fn pick_list(flags: &[String], file: &ConfigFile, key: &str) -> Vec<String> {
    if flags.is_empty() {
        file.list(key)
    } else {
        flags.to_vec()
    }
}

impl RunConfig {
    pub fn resolve(cli: &Cli, file: &ConfigFile) -> Result<RunConfig> {
        let strategy_of = |s: &str| s.parse::<ThrottleStrategy>().map_err(|e| anyhow!(e));
        let mut rc = RunConfig {
            strategy: ThrottleStrategy::default(),
            exclude: Vec::new(),
            entry: "main".into(),
            cost_args: Vec::new(),
            output: None,
            dot: None,
            workers: 4,
            schedules: ScheduleRequest::All,
            seed: 0,
            drop_syncs: Vec::new(),
            early_free: false,
            json: cli.json || file.flag("json")?,
        };
        let common = match &cli.command {
            Command::Transform { common, .. } | Command::Analyze { common, .. } => common,
            Command::Graph { common, .. } | Command::Check { common, .. } => common,
        };
        let flag_strategy = common.strategy.as_deref().map(strategy_of).transpose()?;
        rc.strategy = pick(flag_strategy, file.get("strategy"), strategy_of, rc.strategy)?;
        rc.exclude = pick_list(&common.exclude, file, "exclude");
        let sim = match &cli.command {
            Command::Graph { sim, .. } | Command::Check { sim, .. } => Some(sim),
            _ => None,
        };
        if let Some(sim) = sim {
            rc.entry = pick(sim.entry.clone(), file.get("entry"), |s| Ok(s.to_string()), rc.entry)?;
            rc.cost_args = pick_list(&sim.cost_arg, file, "cost-arg").iter().map(|s| parse_cost_arg(s)).collect::<Result<_>>()?;
        }
        match &cli.command {
            Command::Transform { output, .. } => {
                rc.output = pick(output.clone().map(Some), file.get("output"), |s| Ok(Some(PathBuf::from(s))), None)?;
            }
            Command::Analyze { .. } => {}
            Command::Graph { dot, workers, .. } => {
                rc.dot = pick(dot.clone().map(Some), file.get("dot"), |s| Ok(Some(PathBuf::from(s))), None)?;
                rc.workers = pick(*workers, file.get("workers"), |s| s.parse().context("bad `workers`"), rc.workers)?;
                if rc.workers == 0 {
                    bail!("--workers must be positive");
                }
            }
            Command::Check {
                schedules,
                seed,
                drop_sync,
                early_free,
                ..
            } => {
                let req = |s: &str| s.parse::<ScheduleRequest>().map_err(|e| anyhow!(e));
                rc.schedules = pick(schedules.as_deref().map(req).transpose()?, file.get("schedules"), req, rc.schedules)?;
                rc.seed = pick(*seed, file.get("seed"), |s| s.parse().context("bad `seed`"), rc.seed)?;
                rc.drop_syncs = pick_list(drop_sync, file, "drop-sync").iter().map(|s| parse_drop_sync(s)).collect::<Result<_>>()?;
                rc.early_free = *early_free || file.flag("early-free")?;
            }
        }
        Ok(rc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(args: &[&str], file: &str) -> Result<RunConfig> {
        let cli = Cli::try_parse_from(args).unwrap();
        RunConfig::resolve(&cli, &ConfigFile::parse(file)?)
    }

    #[test]
    fn flags_win_over_file() {
        let rc = resolve(&["apac", "check", "a.cpp", "--seed", "9"], "seed = 3\nschedules = random:5\n").unwrap();
        assert_eq!(rc.seed, 9);
        assert_eq!(rc.schedules, ScheduleRequest::Random(5));
        assert_eq!(rc.strategy, ThrottleStrategy::MaxDepth(5));
    }

    #[test]
    fn lists_from_file() {
        let rc = resolve(&["apac", "graph", "a.cpp"], "# costs\ncost-arg = partition:1, merge:2\nexclude = f,g\n").unwrap();
        assert_eq!(rc.cost_args, vec![("partition".into(), 1), ("merge".into(), 2)]);
        assert_eq!(rc.exclude, vec!["f".to_string(), "g".to_string()]);
    }

    #[test]
    fn bad_keys_and_values_are_rejected() {
        assert!(ConfigFile::parse("colour = red").is_err());
        assert!(ConfigFile::parse("no equals sign").is_err());
        assert!(resolve(&["apac", "transform", "a.cpp"], "strategy = depth").is_err());
        assert!(resolve(&["apac", "graph", "a.cpp", "--workers", "0"], "").is_err());
    }

    #[test]
    fn drop_sync_forms() {
        assert_eq!(parse_drop_sync("main").unwrap(), ("main".into(), None));
        assert_eq!(parse_drop_sync("main:2").unwrap(), ("main".into(), Some(2)));
    }
}
