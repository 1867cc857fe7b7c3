//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use alphamine_core::backtest::{cumulative_return, run_backtest, search_k, K_GRID};
use alphamine_core::panel::{compute_ic, Split};
use alphamine_core::pipeline::{quantile_sweep, Miner};
use clap::{Parser, Subcommand, ValueEnum};

use crate::checkpoint::{self, write};
use crate::config::Config;
use crate::error::Error;
use crate::{data, report};

#[derive(Debug, Parser)]
#[command(name = "alphamine", version, about = "Formulaic alpha mining with tree search and a quantile policy gradient")]
pub struct Cli {
    /// TOML config file; built-in defaults when omitted.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. --set run.iterations=5 (repeatable).
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Valid,
    Test,
}

impl SplitArg {
    fn split(self) -> Split {
        match self {
            SplitArg::Train => Split::Train,
            SplitArg::Valid => Split::Valid,
            SplitArg::Test => Split::Test,
        }
    }

    fn name(self) -> &'static str {
        match self {
            SplitArg::Train => "train",
            SplitArg::Valid => "valid",
            SplitArg::Test => "test",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the configured synthetic panel to <out>/panel.csv.
    GenData,
    /// Mine alphas; writes config.toml, report.csv, pool.txt, policy.txt and checkpoint/.
    Mine {
        /// Continue from <out>/checkpoint when it exists.
        #[arg(long)]
        resume: bool,
    },
    /// Score a pool's composite alpha on one split.
    Eval {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Run the mining pipeline once per quantile level; writes sweep.csv.
    Sweep {
        /// Comma-separated levels; defaults to sweep.levels.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
    },
    /// Trade the top-k names of a pool's composite alpha.
    Backtest {
        #[arg(long)]
        pool: PathBuf,
        /// Portfolio size; defaults to strategy.k.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Pick k from 10..=60 on the validation split, then trade the test split.
        #[arg(long, conflicts_with_all = ["k", "split"])]
        search_k: bool,
    },
    /// Summarize the output directory, or print the effective config.
    Report {
        #[arg(long)]
        dump_config: bool,
    },
}

/// Runs the command line and returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            let _ = writeln!(err, "{}", Error::Usage(first.to_string()).one_line());
            let _ = writeln!(err, "usage: alphamine [--config FILE] [--set SECTION.KEY=VALUE]... <gen-data|mine|eval|sweep|backtest|report>");
            return 2;
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", e.one_line());
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write, log: &mut dyn Write) -> Result<(), Error> {
    let config = Config::load(cli.config.as_deref(), &cli.overrides)?;
    let dir = config.output_dir();
    match &cli.command {
        Command::GenData => {
            let panel = config.synth_panel()?;
            create_dir(&dir)?;
            let path = dir.join("panel.csv");
            let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            data::write_csv(&panel, std::io::BufWriter::new(file))?;
            say(out, &format!("wrote {}", path.display()))
        }
        Command::Mine { resume } => mine(&config, &dir, *resume, out, log),
        Command::Eval { pool, split } => {
            let panel = config.panel()?;
            let days = config.split(&panel)?.range(split.split());
            let pool = checkpoint::load_pool(pool, &panel)?;
            let scores = pool.composite(0..panel.n_days())?;
            let rep = compute_ic(&scores, pool.target(), days)
                .map_err(|e| Error::Run(format!("eval: {e}")))?;
            create_dir(&dir)?;
            let name = split.name();
            write(&dir.join(format!("eval_{name}.csv")), &report::metric_days_csv(&rep, &panel))?;
            write(&dir.join(format!("eval_{name}_summary.csv")), &report::metric_summary_csv(name, &rep))?;
            say(out, &report::metric_summary_line(name, &rep))
        }
        Command::Sweep { levels } => {
            let levels = levels.clone().unwrap_or_else(|| config.sweep.levels.clone());
            if levels.is_empty() || levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
                return Err(Error::Config("sweep levels must be non-empty and inside (0, 1)".into()));
            }
            let panel = config.panel()?;
            let split = config.split(&panel)?;
            let rows = quantile_sweep(&config.run_config()?, &panel, &split, &levels)?;
            create_dir(&dir)?;
            write(&dir.join("sweep.csv"), &report::sweep_csv(&rows))?;
            say(out, &format!("wrote {}", dir.join("sweep.csv").display()))
        }
        Command::Backtest { pool, k, split, search_k: search } => {
            let panel = config.panel()?;
            let spec = config.split(&panel)?;
            let pool = checkpoint::load_pool(pool, &panel)?;
            let scores = pool.composite(0..panel.n_days())?;
            let mut strategy = config.strategy()?;
            create_dir(&dir)?;
            let name = if *search {
                let ks = search_k(&scores, &panel, &strategy, &K_GRID, spec.valid.clone(), spec.test.clone())?;
                write(&dir.join("k_search.csv"), &report::k_search_csv(&ks.valid))?;
                strategy.k = ks.best_k;
                "test"
            } else {
                if let Some(k) = k {
                    if *k == 0 {
                        return Err(Error::Usage("--k must be positive".into()));
                    }
                    strategy.k = *k;
                }
                split.name()
            };
            let days = if *search { spec.test.clone() } else { spec.range(split.split()) };
            let curve = run_backtest(&scores, &panel, &strategy, days)?;
            write(&dir.join(format!("equity_{name}.csv")), &report::equity_csv(&curve, &panel))?;
            write(&dir.join(format!("holdings_{name}.csv")), &report::holdings_csv(&curve, &panel))?;
            say(
                out,
                &format!(
                    "{{split: {name}, k: {}, cumulative_return: {}}}",
                    strategy.k,
                    cumulative_return(&curve)
                ),
            )
        }
        Command::Report { dump_config } => {
            if *dump_config {
                return out
                    .write_all(config.to_toml().as_bytes())
                    .map_err(|e| Error::Io(e.to_string()));
            }
            let pool = checkpoint::PoolFile::parse(&checkpoint::read(&dir.join("pool.txt"))?)?;
            let rows = report::parse_iterations_csv(&checkpoint::read(&dir.join("report.csv"))?)?;
            if let Some(last) = rows.last() {
                say(
                    out,
                    &format!(
                        "iterations {} | train IC {} | valid IC {} | pool {}",
                        rows.len(),
                        last.train_ic,
                        last.valid_ic,
                        last.pool_size
                    ),
                )?;
            }
            let mut members: Vec<_> = pool.members.iter().collect();
            members.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
            for (expr, w) in members {
                say(out, &format!("{w:+.6}\t{}", expr.unparse()))?;
            }
            Ok(())
        }
    }
}

fn mine(config: &Config, dir: &Path, resume: bool, out: &mut dyn Write, log: &mut dyn Write) -> Result<(), Error> {
    let run_config = config.run_config()?;
    let horizon = config.horizon()?;
    let panel = config.panel()?;
    let split = config.split(&panel)?;
    let ckpt = dir.join("checkpoint");
    create_dir(dir)?;
    let mut miner = if resume && ckpt.join("state.txt").exists() {
        let state = checkpoint::load_run(&ckpt, &panel)?;
        Miner::resume(run_config, &panel, split, state)?
    } else {
        Miner::new(run_config, &panel, split)?
    };
    write(&dir.join("config.toml"), &config.to_toml())?;
    while !miner.finished() {
        let row = miner.run_iteration()?;
        checkpoint::save_run(&ckpt, &miner.state(), horizon)?;
        let _ = writeln!(
            log,
            "iteration {}: train IC {:.4}, valid IC {:.4}, pool {}, q {:.4}",
            row.iteration, row.train_ic, row.valid_ic, row.pool_size, row.q
        );
    }
    let pool_text = checkpoint::PoolFile::of(miner.pool(), horizon).to_text();
    write(&dir.join("pool.txt"), &pool_text)?;
    write(&dir.join("policy.txt"), &checkpoint::policy_to_text(miner.policy()))?;
    write(&dir.join("report.csv"), &report::iterations_csv(miner.report()))?;
    say(out, &format!("wrote {}", dir.display()))
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn say(out: &mut dyn Write, line: &str) -> Result<(), Error> {
    writeln!(out, "{line}").map_err(|e| Error::Io(e.to_string()))
}
