//! Text checkpoints.
//!
//! Floats are written in Rust's shortest round-trip form, so every file
//! reloads bit-exactly. A run checkpoint directory holds:
//!
//! - `pool.txt`: capacity, train range, horizon, fit settings and one
//!   `alpha <weight>\t<expression>` line per member in pool order
//! - `policy.txt`: architecture, then one parameter per line
//! - `state.txt`: iteration, tracker, best validation IC, patience counter
//!   and the RNG seed, stream and word position
//! - `report.csv`: the iteration report so far

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use alphamine_core::expr::parse;
use alphamine_core::panel::Horizon;
use alphamine_core::pipeline::{IterationReport, RunState};
use alphamine_core::policy::{Policy, PolicyConfig, QuantileTracker};
use alphamine_core::pool::{AlphaPool, FitConfig};
use alphamine_core::{Expression, Panel};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::report;

const POOL_MAGIC: &str = "alphamine-pool v1";
const POLICY_MAGIC: &str = "alphamine-policy v1";
const STATE_MAGIC: &str = "alphamine-state v1";

/// Contents of a pool checkpoint, independent of any panel.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolFile {
    pub capacity: usize,
    pub train: std::ops::Range<usize>,
    pub horizon: Horizon,
    pub fit: FitConfig,
    pub members: Vec<(Expression, f64)>,
}

impl PoolFile {
    pub fn of(pool: &AlphaPool, horizon: Horizon) -> PoolFile {
        PoolFile {
            capacity: pool.capacity(),
            train: pool.train_range(),
            horizon,
            fit: *pool.fit_config(),
            members: pool.entries().iter().map(|e| (e.expr.clone(), e.weight)).collect(),
        }
    }

    /// Rebuilds the pool on `panel`.
    pub fn restore(&self, panel: &Panel) -> Result<AlphaPool, Error> {
        if self.train.end > panel.n_days() {
            return Err(Error::Checkpoint(format!(
                "pool train range {:?} exceeds the panel's {} days",
                self.train,
                panel.n_days()
            )));
        }
        AlphaPool::restore(
            self.capacity,
            self.fit,
            panel.target(self.horizon),
            self.train.clone(),
            &self.members,
            panel,
        )
        .map_err(|e| Error::Checkpoint(format!("pool: {e}")))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{POOL_MAGIC}").unwrap();
        writeln!(s, "capacity {}", self.capacity).unwrap();
        writeln!(s, "train {} {}", self.train.start, self.train.end).unwrap();
        writeln!(s, "horizon {}", self.horizon.days()).unwrap();
        writeln!(s, "fit {} {} {}", self.fit.lr, self.fit.max_iters, self.fit.tol).unwrap();
        for (expr, w) in &self.members {
            writeln!(s, "alpha {w}\t{}", expr.unparse()).unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<PoolFile, Error> {
        let mut lines = Lines::new(text, "pool");
        lines.magic(POOL_MAGIC)?;
        let capacity = lines.keyed("capacity")?.one()?;
        let train: Vec<usize> = lines.keyed("train")?.all()?;
        let horizon_days: usize = lines.keyed("horizon")?.one()?;
        let fit = lines.keyed("fit")?;
        let fit_parts = fit.words();
        if train.len() != 2 || train[0] >= train[1] || fit_parts.len() != 3 {
            return Err(lines.err("malformed train or fit line"));
        }
        let fit = FitConfig {
            lr: fit.parse_word(fit_parts[0])?,
            max_iters: fit.parse_word(fit_parts[1])?,
            tol: fit.parse_word(fit_parts[2])?,
        };
        let horizon = Horizon::from_days(horizon_days).ok_or_else(|| lines.err("horizon must be 5 or 10"))?;
        let mut members = Vec::new();
        while let Some(line) = lines.next_opt() {
            let rest = line.rest("alpha")?;
            let (w, e) = rest.text.split_once('\t').ok_or_else(|| line.err("expected weight<TAB>expression"))?;
            let weight = line.parse_word(w)?;
            let expr = parse(e).map_err(|err| line.err(&format!("expression {e:?}: {err}")))?;
            members.push((expr, weight));
        }
        Ok(PoolFile {
            capacity,
            train: train[0]..train[1],
            horizon,
            fit,
            members,
        })
    }
}

pub fn policy_to_text(policy: &Policy) -> String {
    let c = policy.config();
    let mut s = String::new();
    writeln!(s, "{POLICY_MAGIC}").unwrap();
    writeln!(s, "vocab_size {}", c.vocab_size).unwrap();
    writeln!(s, "embed_dim {}", c.embed_dim).unwrap();
    writeln!(s, "hidden {}", c.hidden).unwrap();
    writeln!(s, "layers {}", c.layers).unwrap();
    writeln!(s, "head_hidden {}", c.head_hidden).unwrap();
    writeln!(s, "parameters {}", policy.num_parameters()).unwrap();
    for p in policy.parameters() {
        writeln!(s, "{p}").unwrap();
    }
    s
}

pub fn policy_from_text(text: &str) -> Result<Policy, Error> {
    let mut lines = Lines::new(text, "policy");
    lines.magic(POLICY_MAGIC)?;
    let config = PolicyConfig {
        vocab_size: lines.keyed("vocab_size")?.one()?,
        embed_dim: lines.keyed("embed_dim")?.one()?,
        hidden: lines.keyed("hidden")?.one()?,
        layers: lines.keyed("layers")?.one()?,
        head_hidden: lines.keyed("head_hidden")?.one()?,
    };
    let count: usize = lines.keyed("parameters")?.one()?;
    let mut theta = Vec::with_capacity(count);
    while let Some(line) = lines.next_opt() {
        theta.push(line.parse_word::<f64>(line.text)?);
    }
    if theta.len() != count {
        return Err(lines.err(&format!("expected {count} parameters, found {}", theta.len())));
    }
    Policy::from_parameters(config, theta).map_err(|e| Error::Checkpoint(format!("policy: {e}")))
}

/// Iteration-boundary run state without the pool and policy payloads.
#[derive(Clone, Debug, PartialEq)]
struct StateFile {
    iteration: usize,
    tracker: QuantileTracker,
    best_valid_ic: f64,
    stale: usize,
    seed: [u8; 32],
    stream: u64,
    word_pos: u128,
}

impl StateFile {
    fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{STATE_MAGIC}").unwrap();
        writeln!(s, "iteration {}", self.iteration).unwrap();
        writeln!(s, "tracker {} {} {}", self.tracker.q, self.tracker.level, self.tracker.beta).unwrap();
        writeln!(s, "best_valid_ic {}", self.best_valid_ic).unwrap();
        writeln!(s, "stale {}", self.stale).unwrap();
        let hex: String = self.seed.iter().map(|b| format!("{b:02x}")).collect();
        writeln!(s, "rng_seed {hex}").unwrap();
        writeln!(s, "rng_stream {}", self.stream).unwrap();
        writeln!(s, "rng_word_pos {}", self.word_pos).unwrap();
        s
    }

    fn parse(text: &str) -> Result<StateFile, Error> {
        let mut lines = Lines::new(text, "state");
        lines.magic(STATE_MAGIC)?;
        let iteration = lines.keyed("iteration")?.one()?;
        let t: Vec<f64> = lines.keyed("tracker")?.all()?;
        if t.len() != 3 {
            return Err(lines.err("tracker needs q, level and beta"));
        }
        let best_valid_ic = lines.keyed("best_valid_ic")?.one()?;
        let stale = lines.keyed("stale")?.one()?;
        let hex: String = lines.keyed("rng_seed")?.one()?;
        let mut seed = [0u8; 32];
        if hex.len() != 64 {
            return Err(lines.err("rng_seed must be 64 hex digits"));
        }
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).map_err(|_| lines.err("bad rng_seed"))?;
        }
        Ok(StateFile {
            iteration,
            tracker: QuantileTracker {
                q: t[0],
                level: t[1],
                beta: t[2],
            },
            best_valid_ic,
            stale,
            seed,
            stream: lines.keyed("rng_stream")?.one()?,
            word_pos: lines.keyed("rng_word_pos")?.one()?,
        })
    }
}

pub fn save_run(dir: &Path, state: &RunState, horizon: Horizon) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let sf = StateFile {
        iteration: state.iteration,
        tracker: state.tracker,
        best_valid_ic: state.best_valid_ic,
        stale: state.stale,
        seed: state.rng.get_seed(),
        stream: state.rng.get_stream(),
        word_pos: state.rng.get_word_pos(),
    };
    write(&dir.join("pool.txt"), &PoolFile::of(&state.pool, horizon).to_text())?;
    write(&dir.join("policy.txt"), &policy_to_text(&state.policy))?;
    write(&dir.join("report.csv"), &report::iterations_csv(&state.report))?;
    // Written last: its presence marks a complete checkpoint.
    write(&dir.join("state.txt"), &sf.to_text())?;
    Ok(())
}

pub fn load_run(dir: &Path, panel: &Panel) -> Result<RunState, Error> {
    let sf = StateFile::parse(&read(&dir.join("state.txt"))?)?;
    let pool = PoolFile::parse(&read(&dir.join("pool.txt"))?)?.restore(panel)?;
    let policy = policy_from_text(&read(&dir.join("policy.txt"))?)?;
    let report: Vec<IterationReport> = report::parse_iterations_csv(&read(&dir.join("report.csv"))?)?;
    let mut rng = ChaCha8Rng::from_seed(sf.seed);
    rng.set_stream(sf.stream);
    rng.set_word_pos(sf.word_pos);
    Ok(RunState {
        iteration: sf.iteration,
        pool,
        policy,
        tracker: sf.tracker,
        rng,
        best_valid_ic: sf.best_valid_ic,
        stale: sf.stale,
        report,
    })
}

pub fn load_pool(path: &Path, panel: &Panel) -> Result<AlphaPool, Error> {
    PoolFile::parse(&read(path)?)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?
        .restore(panel)
}

pub fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Line cursor with numbered errors.
struct Lines<'a> {
    what: &'static str,
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

struct Line<'a> {
    what: &'static str,
    number: usize,
    text: &'a str,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str, what: &'static str) -> Self {
        Lines {
            what,
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    fn err(&self, msg: &str) -> Error {
        Error::Checkpoint(format!("{} line {}: {msg}", self.what, self.last))
    }

    fn next_opt(&mut self) -> Option<Line<'a>> {
        let (i, text) = self.inner.by_ref().find(|(_, l)| !l.trim().is_empty())?;
        self.last = i + 1;
        Some(Line {
            what: self.what,
            number: i + 1,
            text: text.trim_end(),
        })
    }

    fn next(&mut self) -> Result<Line<'a>, Error> {
        self.next_opt()
            .ok_or_else(|| Error::Checkpoint(format!("{}: unexpected end of file", self.what)))
    }

    fn magic(&mut self, magic: &str) -> Result<(), Error> {
        let line = self.next()?;
        if line.text != magic {
            return Err(line.err(&format!("expected header {magic:?}")));
        }
        Ok(())
    }

    fn keyed(&mut self, key: &str) -> Result<Line<'a>, Error> {
        self.next()?.rest(key)
    }
}

impl<'a> Line<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::Checkpoint(format!("{} line {}: {msg}", self.what, self.number))
    }

    /// The text after `key `.
    fn rest(&self, key: &str) -> Result<Line<'a>, Error> {
        match self.text.strip_prefix(key).and_then(|r| r.strip_prefix(' ')) {
            Some(r) => Ok(Line {
                what: self.what,
                number: self.number,
                text: r,
            }),
            None => Err(self.err(&format!("expected {key:?}"))),
        }
    }

    fn words(&self) -> Vec<&'a str> {
        self.text.split_whitespace().collect()
    }

    fn parse_word<T: FromStr>(&self, word: &str) -> Result<T, Error> {
        word.trim()
            .parse()
            .map_err(|_| self.err(&format!("cannot parse {word:?}")))
    }

    fn one<T: FromStr>(&self) -> Result<T, Error> {
        self.parse_word(self.text)
    }

    fn all<T: FromStr>(&self) -> Result<Vec<T>, Error> {
        self.words().into_iter().map(|w| self.parse_word(w)).collect()
    }
}
