//! Acceptance criteria as functions, shared by the integration tests and the
//! `acceptance` harness.

use std::time::{Duration, Instant};

use alphamine_core::backtest::{run_backtest, StrategyConfig};
use alphamine_core::env::{
    intermediate_reward, AlphaEnv, EnvConfig, Environment, MdpState, RewardFnEnv, Trajectory,
};
use alphamine_core::expr::{evaluate, parse, Token, Vocabulary};
use alphamine_core::mcts::{
    path_returns, puct_score, rollout, select_edge, Edge, ReplayBuffer, SearchTree, MctsConfig,
};
use alphamine_core::panel::{
    compute_ic, compute_mut_ic, synth_panel, Horizon, Planted, SplitSpec,
};
use alphamine_core::pipeline::{run, RunConfig};
use alphamine_core::policy::{
    train_epoch, ActionPolicy, ParamClass, Policy, PolicyConfig, QuantileTracker, UniformPolicy,
    UpdateMode,
};
use alphamine_core::pool::{AlphaPool, FitConfig};
use alphamine_core::{AlphaMatrix, Expression};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::textbook::{self, gaussian, joint, mean_ir, noise_matrix, pearson_sums, spearman_no_ties};
use super::tree::{eval, random_tree};

#[derive(Debug)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Outcome {
        Outcome { pass, detail }
    }
}

fn within(elapsed: Duration, budget_s: f64) -> bool {
    elapsed.as_secs_f64() < budget_s
}

fn tokens(names: &[&str]) -> Vec<Token> {
    names.iter().map(|n| Token::from_name(n).expect("known token")).collect()
}

/// Deterministic rng for environment steps whose rewards ignore it.
fn dummy_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

/// The first recorded problem, if any, as a detail suffix.
fn first_problem<T: core::fmt::Debug>(problems: &[T]) -> String {
    problems.first().map(|p| format!("; first: {p:?}")).unwrap_or_default()
}

// ---------------------------------------------------------------- expressions

pub fn expression_oracle(n_exprs: usize, seed: u64) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (panel, data) = textbook::random_panel(&mut rng, 20, 60);
    let mut max_diff = 0.0f64;
    let mut mismatched_missing = 0usize;
    let mut text_errors = Vec::new();
    let mut valid_cells = 0usize;
    for _ in 0..n_exprs {
        let tree = random_tree(&mut rng, alphamine_core::expr::MAX_EXPR_LEN, 0);
        let text = tree.text();
        let expr = match parse(&text) {
            Ok(e) => e,
            Err(e) => {
                text_errors.push(format!("{text}: {e}"));
                continue;
            }
        };
        if expr.len() != tree.len() || expr.unparse() != text {
            text_errors.push(format!("{text}: round trip gave {}", expr.unparse()));
        }
        let got = evaluate(&expr, &panel);
        let want = eval(&tree, &data);
        for (i, row) in want.iter().enumerate() {
            for (t, &w) in row.iter().enumerate() {
                let g = got.value(i, t);
                match (g.is_nan(), w.is_nan()) {
                    (true, true) => {}
                    (false, false) => {
                        valid_cells += 1;
                        max_diff = max_diff.max((g - w).abs());
                    }
                    _ => mismatched_missing += 1,
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = text_errors.is_empty() && mismatched_missing == 0 && max_diff <= 1e-9 && within(elapsed, 5.0);
    Outcome::new(
        pass,
        format!(
            "{n_exprs} exprs, {valid_cells} valid cells, max |diff| {max_diff:.3e}, \
             missing mismatches {mismatched_missing}, text errors {}{}, {elapsed:.2?}",
            text_errors.len(),
            first_problem(&text_errors)
        ),
    )
}

// -------------------------------------------------------------------- metrics

pub fn metric_oracle(panels: usize, seed: u64) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_diff = 0.0f64;
    let mut failures: Vec<String> = Vec::new();
    let note = |failures: &mut Vec<String>, max_diff: &mut f64, what: &str, got: f64, want: f64| {
        let d = (got - want).abs();
        if !(d <= 1e-12) {
            failures.push(format!("{what}: {got} vs {want}"));
        }
        *max_diff = max_diff.max(d);
    };
    for _ in 0..panels {
        let a = noise_matrix(&mut rng, 10, 50, 0.05);
        let b = noise_matrix(&mut rng, 10, 50, 0.05);
        let rep = compute_ic(&a, &b, 0..50).expect("overlapping days");
        let mut ics = Vec::new();
        let mut rics = Vec::new();
        let mut k = 0;
        for t in 0..50 {
            let (x, y) = joint(&a, &b, t);
            if x.len() < 2 {
                continue;
            }
            let ic = pearson_sums(&x, &y);
            let ric = spearman_no_ties(&x, &y);
            let day = &rep.per_day[k];
            if day.day != t {
                failures.push(format!("day {t} missing from report"));
                break;
            }
            note(&mut failures, &mut max_diff, "daily ic", day.ic, ic);
            note(&mut failures, &mut max_diff, "daily rank ic", day.rank_ic, ric);
            ics.push(ic);
            rics.push(ric);
            k += 1;
        }
        let (ic, icir) = mean_ir(&ics);
        let (ric, ricir) = mean_ir(&rics);
        note(&mut failures, &mut max_diff, "ic", rep.ic, ic);
        note(&mut failures, &mut max_diff, "icir", rep.icir, icir);
        note(&mut failures, &mut max_diff, "rank ic", rep.rank_ic, ric);
        note(&mut failures, &mut max_diff, "rank icir", rep.rank_icir, ricir);
        let m_ab = compute_mut_ic(&a, &b, 0..50).expect("overlap");
        let m_ba = compute_mut_ic(&b, &a, 0..50).expect("overlap");
        note(&mut failures, &mut max_diff, "mutIC", m_ab, ic);
        if m_ab != m_ba {
            failures.push(format!("mutIC asymmetric: {m_ab} vs {m_ba}"));
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        failures.is_empty() && within(elapsed, 1.0),
        format!(
            "{panels} panels of 10x50, max |diff| {max_diff:.3e}, failures {}{}, {elapsed:.2?}",
            failures.len(),
            first_problem(&failures)
        ),
    )
}

// ----------------------------------------------------------------------- pool

fn dummy_expr(k: usize) -> Expression {
    let c = alphamine_core::expr::CONSTANTS[k % 13];
    parse(&format!("Add(close, {c:?})")).expect("valid")
}

fn correlated_cache<R: Rng>(rng: &mut R, target: &AlphaMatrix, signal: f64) -> AlphaMatrix {
    let raw = target.map(|v| if v.is_nan() { 0.0 } else { v });
    let noisy = AlphaMatrix::from_fn(raw.n_stocks(), raw.n_days(), |i, t| {
        if rng.random_bool(0.03) {
            f64::NAN
        } else {
            signal * raw.value(i, t) + gaussian(rng)
        }
    });
    noisy.standardize_daily()
}

pub fn pool_fitting(seed: u64) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut problems = Vec::new();
    let mut worst = 0.0f64;
    for p in 0..5 {
        let target = noise_matrix(&mut rng, 20, 60, 0.05);
        let caches: Vec<AlphaMatrix> = (0..3)
            .map(|_| {
                let s = rng.random_range(0.2..1.0);
                correlated_cache(&mut rng, &target, s)
            })
            .collect();
        let mut pool = AlphaPool::new(3, FitConfig::default(), target.clone(), 0..60).expect("pool");
        for (k, c) in caches.iter().enumerate() {
            pool.add_standardized(dummy_expr(k), c.clone(), &mut rng).expect("add");
        }
        let oracle = textbook::normal_equations(&caches.iter().collect::<Vec<_>>(), &target);
        let d = pool
            .weights()
            .iter()
            .zip(&oracle)
            .map(|(w, o)| (w - o).abs())
            .fold(0.0, f64::max);
        worst = worst.max(d);
        if !(d <= 1e-2) {
            problems.push(format!("problem {p}: {:?} vs {oracle:?}", pool.weights()));
        }
    }

    // Eviction: the K = 3 pool must drop the argmin |w| of the refitted
    // four-alpha pool built from the same draws.
    let mut evictions_ok = 0;
    for trial in 0..5 {
        let target = noise_matrix(&mut rng, 20, 60, 0.05);
        let signals = [1.0, 0.05, 0.6, 0.3];
        let caches: Vec<AlphaMatrix> = signals.iter().map(|&s| correlated_cache(&mut rng, &target, s)).collect();
        let add_seed: u64 = rng.random();
        let mut small = AlphaPool::new(3, FitConfig::default(), target.clone(), 0..60).expect("pool");
        let mut large = AlphaPool::new(4, FitConfig::default(), target.clone(), 0..60).expect("pool");
        let (mut r1, mut r2) = (ChaCha8Rng::seed_from_u64(add_seed), ChaCha8Rng::seed_from_u64(add_seed));
        let mut evicted = None;
        for (k, c) in caches.iter().enumerate() {
            let out = small.add_standardized(dummy_expr(k), c.clone(), &mut r1).expect("add");
            large.add_standardized(dummy_expr(k), c.clone(), &mut r2).expect("add");
            if out.evicted.is_some() {
                evicted = out.evicted;
            }
        }
        let w = large.weights();
        let argmin = (0..4).min_by(|&a, &b| w[a].abs().total_cmp(&w[b].abs())).expect("4 weights");
        if evicted.as_ref() == Some(&dummy_expr(argmin)) && small.len() == 3 {
            evictions_ok += 1;
        } else {
            problems.push(format!("eviction trial {trial}: evicted {evicted:?}, refitted {w:?}"));
        }
    }

    let target = noise_matrix(&mut rng, 20, 60, 0.05);
    let mut pool = AlphaPool::new(10, FitConfig::default(), target.clone(), 0..60).expect("pool");
    let mut max_len = 0;
    for k in 0..40 {
        let s = rng.random_range(0.0..1.0);
        let c = correlated_cache(&mut rng, &target, s);
        pool.add_standardized(dummy_expr(k), c, &mut rng).expect("add");
        max_len = max_len.max(pool.len());
    }
    if max_len > 10 {
        problems.push(format!("pool grew to {max_len} > 10"));
    }
    let elapsed = start.elapsed();
    Outcome::new(
        problems.is_empty() && within(elapsed, 5.0),
        format!(
            "max |w - normal eq| {worst:.2e} over 5 problems, evictions {evictions_ok}/5 match argmin, \
             max len {max_len} at K=10 over 40 adds, {elapsed:.2?}{}",
            first_problem(&problems)
        ),
    )
}

// --------------------------------------------------------------------- reward

pub fn reward_arithmetic() -> Outcome {
    let mut problems = Vec::new();
    let r1 = intermediate_reward(0.05, &[], 0.1);
    if r1 != 0.05 {
        problems.push(format!("empty pool: {r1}"));
    }
    let r2 = intermediate_reward(0.06, &[0.5, 0.3], 0.1);
    if r2 != 0.06 - 0.1 * 0.4 || (r2 - 0.02).abs() > 1e-15 {
        problems.push(format!("two mutICs: {r2}"));
    }

    let planted = parse("Div(Mean(close, 5), close)").expect("valid");
    let panel = synth_panel(30, 200, 11, Some(&Planted { expr: planted.clone(), weight: 0.8 })).expect("panel");
    let target = panel.target(Horizon::Days5);
    let fresh = || AlphaPool::new(10, FitConfig::default(), target.clone(), 0..120).expect("pool");
    let mut env = AlphaEnv::new(&panel, fresh(), Vocabulary::full(), EnvConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut direct_rng = rng.clone();
    let mut state = MdpState::initial();
    for &t in planted.tokens() {
        state = env.step(&state, t, &mut rng).expect("legal").next_state;
    }
    let end = env.step(&state, Token::End, &mut rng).expect("END");
    let direct = fresh().add_alpha(planted, &panel, &mut direct_rng).expect("add").composite_ic;
    if end.reward.to_bits() != direct.to_bits() {
        problems.push(format!("END reward {} vs direct add {direct}", end.reward));
    }
    let lambda = EnvConfig::default().lambda;
    if lambda != 0.1 || RunConfig::default().lambda != 0.1 {
        problems.push(format!("default lambda {lambda}"));
    }
    Outcome::new(
        problems.is_empty(),
        format!(
            "0.05 -> {r1}, 0.06 - 0.1*0.4 -> {r2}, END {} = pool add {direct}, lambda {lambda}{}",
            end.reward,
            first_problem(&problems)
        ),
    )
}

// ----------------------------------------------------------------------- mcts

pub fn mcts_bookkeeping(cycles: usize, seed: u64) -> Outcome {
    let start = Instant::now();
    let mut problems = Vec::new();

    let edges = vec![
        Edge { n: 3, q: 0.5, ..Edge::new(0, 0.3) },
        Edge { n: 1, q: 0.2, ..Edge::new(1, 0.7) },
    ];
    let s: Vec<f64> = edges.iter().map(|e| puct_score(e, 4, 1.0)).collect();
    if (s[0] - 0.65).abs() > 1e-12 || (s[1] - 0.9).abs() > 1e-12 || select_edge(&edges, 1.0) != Some(1) {
        problems.push(format!("PUCT scores {s:?}"));
    }
    let fresh = vec![Edge::new(0, 0.2), Edge::new(1, 0.5), Edge::new(2, 0.3)];
    if select_edge(&fresh, 1.0) != Some(1) {
        problems.push("unvisited tie did not pick the largest prior".into());
    }

    // Backups through a real tree: root has the single edge `close`.
    let vocab = Vocabulary::from_tokens(&tokens(&["close", "Abs"]));
    let mut env = RewardFnEnv::new(vocab.clone(), 8, |_: &[Token], end: bool| if end { 0.0 } else { 0.02 });
    let mut tree = SearchTree::new(MctsConfig::default());
    let uniform = UniformPolicy { vocab_size: vocab.len() };
    tree.expand(0, &uniform, &env).expect("expand");
    let mut rng = dummy_rng();
    let (path, _) = tree.select(&mut env, &mut rng).expect("select");
    tree.backpropagate(&path, 0.3);
    let e1 = tree.root().edges[0].clone();
    let (path, _) = tree.select(&mut env, &mut rng).expect("select");
    tree.backpropagate(&path, 0.08);
    let e2 = tree.root().edges[0].clone();
    if path.len() != 1 || (e1.q - 0.32).abs() > 1e-12 || e1.n != 1 || (e2.q - 0.21).abs() > 1e-12 || e2.n != 2 {
        problems.push(format!("backups: ({}, {}) then ({}, {})", e1.q, e1.n, e2.q, e2.n));
    }
    let g = path_returns(&[0.0, 0.02, 0.0], 0.5, 1.0);
    if g.len() != 3 || [0.52, 0.52, 0.5].iter().zip(&g).any(|(a, b)| (a - b).abs() > 1e-12) {
        problems.push(format!("3-step returns {g:?}"));
    }

    // Visit conservation on a micro task.
    let vocab = Vocabulary::from_tokens(&tokens(&["close", "vwap", "5", "Sub", "Abs", "Mean"]));
    let mut env = RewardFnEnv::new(vocab.clone(), 8, |body: &[Token], end: bool| {
        let h: usize = body.iter().enumerate().map(|(k, t)| (k + 1) * (t.vocab_index() + 3)).sum();
        if end {
            (h % 17) as f64 / 17.0
        } else {
            0.01 * (h % 3) as f64
        }
    });
    let mut prng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = PolicyConfig { vocab_size: vocab.len(), embed_dim: 8, hidden: 8, layers: 2, head_hidden: 8 };
    let policy = Policy::new(cfg, &mut prng);
    let mut tree = SearchTree::new(MctsConfig::default());
    let mut buffer = ReplayBuffer::new(cycles);
    for _ in 0..cycles {
        tree.search_cycle(&policy, &mut env, &mut buffer, &mut prng).expect("cycle");
    }
    let root_visits = tree.root().visits() as usize;
    let mut violations = 0;
    for node in &tree.nodes()[1..] {
        let (p, e) = node.parent.expect("non-root has a parent");
        let incoming = tree.node(p).edges[e].n;
        let ok = if node.is_terminal() { incoming >= 1 && node.edges.is_empty() } else { node.expanded && incoming == node.visits() + 1 };
        if !ok {
            violations += 1;
        }
    }
    if root_visits != cycles || violations > 0 {
        problems.push(format!("root visits {root_visits}, violations {violations}"));
    }
    let elapsed = start.elapsed();
    Outcome::new(
        problems.is_empty() && within(elapsed, 10.0),
        format!(
            "PUCT {:.2}/{:.2}, backups Q {:.2} N {} then Q {:.2} N {}, returns {g:?}, \
             {cycles} cycles over {} nodes conserve visits, {elapsed:.2?}{}",
            s[0],
            s[1],
            e1.q,
            e1.n,
            e2.q,
            e2.n,
            tree.len(),
            first_problem(&problems)
        ),
    )
}

// ------------------------------------------------------------------- recovery

pub const PLANTED: &str = "Div(Mean(close, 5), close)";
pub const MICRO_VOCAB: [&str; 10] = ["open", "close", "vwap", "5", "10", "Mean", "Std", "Div", "Sub", "Abs"];

/// Runs the pipeline on `seeds` planted panels; returns per-seed
/// (oracle IC, composite train IC).
pub fn recovery_runs(seeds: std::ops::Range<u64>, iterations: usize) -> Vec<(f64, f64)> {
    let planted = Planted { expr: parse(PLANTED).expect("valid"), weight: 0.8 };
    seeds
        .map(|seed| {
            let panel = synth_panel(30, 300, 100 + seed, Some(&planted)).expect("panel");
            let split = SplitSpec::by_fraction(300, 0.6, 0.2).expect("split");
            let alpha = evaluate(&planted.expr, &panel);
            let oracle = compute_ic(&alpha, &panel.target(Horizon::Days5), split.train.clone()).expect("ic").ic;
            let cfg = RunConfig {
                iterations,
                cycles_per_iteration: 200,
                seed,
                vocabulary: Some(tokens(&MICRO_VOCAB)),
                ..RunConfig::default()
            };
            let out = run(&cfg, &panel, &split).expect("run");
            (oracle, out.report.last().expect("one iteration").train_ic)
        })
        .collect()
}

pub fn planted_recovery() -> Outcome {
    let start = Instant::now();
    let runs = recovery_runs(0..10, 5);
    let hits = runs.iter().filter(|(o, ic)| *o >= 0.5 && *ic >= 0.5 * o).count();
    let oracle_ok = runs.iter().all(|(o, _)| *o >= 0.5);
    let elapsed = start.elapsed();
    let cells: Vec<String> = runs.iter().map(|(o, ic)| format!("{ic:.3}/{o:.3}")).collect();
    Outcome::new(
        oracle_ok && hits >= 8 && within(elapsed, 600.0),
        format!("{hits}/10 seeds reach half the oracle IC (train/oracle: {}), {elapsed:.1?}", cells.join(" ")),
    )
}

// -------------------------------------------------------------- risk gradient

/// Every trajectory of `env` from `[BEG]`.
pub fn enumerate<E: Environment>(env: &mut E) -> Vec<Trajectory> {
    fn walk<E: Environment>(env: &mut E, state: MdpState, prefix: Trajectory, out: &mut Vec<Trajectory>) {
        if state.done() {
            out.push(prefix);
            return;
        }
        for a in env.legal_actions(&state).expect("live state") {
            let token = env.vocabulary().token(a);
            let tr = env.step(&state, token, &mut dummy_rng()).expect("legal");
            let next = tr.next_state.clone();
            let mut t = prefix.clone();
            t.push(tr);
            walk(env, next, t, out);
        }
    }
    let mut out = Vec::new();
    walk(env, MdpState::initial(), Trajectory::new(), &mut out);
    out
}

fn toy_return(body: &[Token], end: bool) -> f64 {
    if !end {
        return 0.0;
    }
    let s: usize = body.iter().enumerate().map(|(k, t)| (t.vocab_index() * 7 + k * 3) % 11).sum();
    s as f64 / 10.0
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

pub fn risk_gradient_direction() -> Outcome {
    let start = Instant::now();
    let vocab = Vocabulary::from_tokens(&tokens(&["open", "close", "vwap", "Abs", "Sign"]));
    let mut env = RewardFnEnv::new(vocab.clone(), 4, toy_return);
    let trajs = enumerate(&mut env);
    let mut returns: Vec<f64> = trajs.iter().map(|t| t.cumulative_reward).collect();
    returns.sort_by(f64::total_cmp);
    let q = returns[returns.len() / 2];
    let cfg = PolicyConfig { vocab_size: vocab.len(), embed_dim: 3, hidden: 4, layers: 2, head_hidden: 5 };
    let cdf = |p: &Policy| -> f64 {
        trajs
            .iter()
            .filter(|t| t.cumulative_reward <= q)
            .map(|t| p.log_prob(t).exp())
            .sum()
    };
    let mut cosines = Vec::new();
    let mut total_prob = 0.0f64;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut policy = Policy::new(cfg, &mut rng);
        policy.parameters_mut().iter_mut().for_each(|v| *v *= 3.0);
        let mut expected = vec![0.0; policy.num_parameters()];
        total_prob = 0.0;
        for t in &trajs {
            let p = policy.log_prob(t).exp();
            total_prob += p;
            for (e, d) in expected.iter_mut().zip(&policy.risk_gradient(t, q).d) {
                *e += p * d;
            }
        }
        let h = 1e-5;
        let mut neg_grad = vec![0.0; policy.num_parameters()];
        for j in 0..policy.num_parameters() {
            let base = policy.parameters()[j];
            policy.parameters_mut()[j] = base + h;
            let up = cdf(&policy);
            policy.parameters_mut()[j] = base - h;
            let down = cdf(&policy);
            policy.parameters_mut()[j] = base;
            neg_grad[j] = -(up - down) / (2.0 * h);
        }
        cosines.push(cosine(&expected, &neg_grad));
    }
    let elapsed = start.elapsed();
    let worst = cosines.iter().copied().fold(f64::INFINITY, f64::min);
    Outcome::new(
        worst >= 0.999 && (total_prob - 1.0).abs() < 1e-9 && within(elapsed, 30.0),
        format!(
            "{} trajectories (total probability {total_prob:.12}), q {q}, min cosine {worst:.9} over 5 seeds, {elapsed:.2?}",
            trajs.len()
        ),
    )
}

// ------------------------------------------------------------------- quantile

/// Tracks `samples` draws of N(mu, sigma) from q = 0 with beta = 0.01;
/// returns per level (|q - empirical quantile|, 0.05 * IQR).
pub fn quantile_errors(seed: u64, samples: usize, mu: f64, sigma: f64) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<f64> = (0..samples).map(|_| mu + sigma * gaussian(&mut rng)).collect();
    let mut sorted = draws.clone();
    sorted.sort_by(f64::total_cmp);
    let quantile = |l: f64| {
        let pos = l * (samples - 1) as f64;
        let (lo, frac) = (pos.floor() as usize, pos - pos.floor());
        sorted[lo] + frac * (sorted[(lo + 1).min(samples - 1)] - sorted[lo])
    };
    let iqr = quantile(0.75) - quantile(0.25);
    [0.6, 0.85, 0.95]
        .iter()
        .map(|&l| {
            let mut tr = QuantileTracker::new(l, 0.01);
            for &r in &draws {
                tr.update(r);
            }
            (l, (tr.q - quantile(l)).abs(), 0.05 * iqr)
        })
        .collect()
}

pub fn quantile_tracking() -> Outcome {
    let start = Instant::now();
    let errs = quantile_errors(0, 10_000, -4.0, 4.0);
    let pass = errs.iter().all(|(_, e, tol)| e < tol);
    let seeds = 200;
    let robust = (1..=seeds)
        .filter(|&s| quantile_errors(s, 10_000, -4.0, 4.0).iter().all(|(_, e, tol)| e < tol))
        .count();
    let elapsed = start.elapsed();
    let cells: Vec<String> = errs.iter().map(|(l, e, tol)| format!("l={l}: {e:.4} < {tol:.4}")).collect();
    Outcome::new(
        pass && within(elapsed, 1.0),
        format!(
            "N(-4, 4), seed 0: {}; all levels pass on {robust}/{seeds} other seeds; {elapsed:.2?}",
            cells.join(", ")
        ),
    )
}

// --------------------------------------------------------------------- bandit

/// Trains on a two-armed bandit (`close` pays 1, `open` pays 0) and returns
/// the update count at which pi(close) first reaches 0.99, with the
/// probability trace.
pub fn bandit(seed: u64, level: f64, lr: f64, max_updates: usize) -> (Option<usize>, Vec<f64>) {
    let vocab = Vocabulary::from_tokens(&tokens(&["open", "close"]));
    let close = vocab.index_of(Token::from_name("close").expect("token")).expect("in vocab");
    let beg = vocab.beg_index();
    let mut env = RewardFnEnv::new(vocab.clone(), 3, |body: &[Token], end: bool| {
        if end && body == [Token::from_name("close").expect("token")] {
            1.0
        } else {
            0.0
        }
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = Policy::new(PolicyConfig::new(vocab.len()), &mut rng);
    let mut tracker = QuantileTracker::new(level, 0.01);
    let legal = env.legal_actions(&MdpState::initial()).expect("root");
    let p_close = |p: &Policy| p.probabilities(&[beg], &legal)[close];
    let mut trace = vec![p_close(&policy)];
    for u in 1..=max_updates {
        let (tail, _) = rollout(&MdpState::initial(), &policy, &mut env, &mut rng).expect("rollout");
        let mut traj = Trajectory::new();
        tail.into_iter().for_each(|t| traj.push(t));
        train_epoch(&mut policy, &[traj], &mut tracker, lr, UpdateMode::PerTrajectory).expect("update");
        trace.push(p_close(&policy));
        if trace[u] >= 0.99 {
            return (Some(u), trace);
        }
    }
    (None, trace)
}

pub const BANDIT_LR: f64 = 0.05;

pub fn risk_seeking_bandit() -> Outcome {
    let start = Instant::now();
    let (hit, trace) = bandit(0, 0.85, BANDIT_LR, 5000);
    let drops = trace.windows(2).filter(|w| w[1] < w[0]).count();
    let others = (1..10).filter(|&s| bandit(s, 0.85, BANDIT_LR, 5000).0.is_some()).count();
    let elapsed = start.elapsed();
    Outcome::new(
        hit.is_some() && within(elapsed, 30.0),
        format!(
            "pi(best) {:.4} -> {:.4}, reaches 0.99 at update {hit:?} (lr {BANDIT_LR}, level 0.85), \
             {drops} of {} updates lowered it, seeds 1-9 reach it: {others}/9, {elapsed:.2?}",
            trace[0],
            trace.last().expect("non-empty"),
            trace.len() - 1
        ),
    )
}

// ------------------------------------------------------------ gradient check

pub fn gradient_check(seed: u64) -> Outcome {
    let start = Instant::now();
    let vocab = Vocabulary::full();
    let mut env = RewardFnEnv::new(vocab.clone(), 30, |_: &[Token], _: bool| 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = UniformPolicy { vocab_size: vocab.len() };
    let traj = (0..40)
        .map(|_| {
            let (tail, _) = rollout(&MdpState::initial(), &uniform, &mut env, &mut rng).expect("rollout");
            let mut t = Trajectory::new();
            tail.into_iter().for_each(|x| t.push(x));
            t
        })
        .max_by_key(|t| t.len())
        .expect("rollouts");
    let mut policy = Policy::new(PolicyConfig::new(vocab.len()), &mut rng);
    let grad = policy.log_prob_gradient(&traj);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = [0usize; 3];
    for (ci, class) in [ParamClass::Embedding, ParamClass::Recurrent, ParamClass::Head].iter().enumerate() {
        let mut pool: Vec<usize> = (0..policy.num_parameters())
            .filter(|&j| policy.param_class(j) == *class && grad[j].abs() > 1e-4)
            .collect();
        pool.shuffle(&mut rng);
        for &j in pool.iter().take(50) {
            let base = policy.parameters()[j];
            policy.parameters_mut()[j] = base + h;
            let up = policy.log_prob(&traj);
            policy.parameters_mut()[j] = base - h;
            let down = policy.log_prob(&traj);
            policy.parameters_mut()[j] = base;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((grad[j] - fd).abs() / grad[j].abs().max(fd.abs()));
            checked[ci] += 1;
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        worst <= 1e-4 && checked.iter().all(|&c| c >= 50) && within(elapsed, 60.0),
        format!(
            "{} params, trajectory of {} steps, checked embedding/recurrent/head {checked:?}, \
             max relative error {worst:.3e}, {elapsed:.2?}",
            policy.num_parameters(),
            traj.len()
        ),
    )
}

// ------------------------------------------------------------------- backtest

const SCENARIO: &str = include_str!("../data/backtest_scenario.csv");
const GOLDEN: &str = include_str!("../data/backtest_golden.csv");

pub fn backtest_golden(seed: u64) -> Outcome {
    let start = Instant::now();
    let (n, d) = (3, 10);
    let mut close = vec![vec![f64::NAN; d]; n];
    let mut tradable = vec![vec![false; d]; n];
    let mut score = vec![vec![f64::NAN; d]; n];
    for line in SCENARIO.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let t: usize = f[0].parse().expect("day");
        let i = (f[1].as_bytes()[0] - b'A') as usize;
        close[i][t] = if f[2].is_empty() { f64::NAN } else { f[2].parse().expect("close") };
        tradable[i][t] = f[3] == "1";
        score[i][t] = f[4].parse().expect("score");
    }
    let panel = textbook::close_only_panel(&close, &tradable);
    let scores = AlphaMatrix::from_fn(n, d, |i, t| score[i][t]);
    let cfg = StrategyConfig { k: 2, rebalance_every: 3, cost_bps: 10.0, strict: false };
    let curve = run_backtest(&scores, &panel, &cfg, 0..d).expect("backtest");
    let mut worst = 0.0f64;
    let mut problems = Vec::new();
    let mut reb = curve.rebalances.iter();
    for (t, line) in GOLDEN.lines().skip(1).enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let v: f64 = f[1].parse().expect("value");
        let x: f64 = f[2].parse().expect("turnover");
        worst = worst.max((curve.values[t] - v).abs()).max((curve.turnover[t] - x).abs());
        if !f[3].is_empty() {
            let held: Vec<&str> = reb
                .next()
                .map(|r| r.stocks.iter().map(|&i| panel.symbols()[i].as_str()).collect())
                .unwrap_or_default();
            if held.join(" ") != f[3] {
                problems.push(format!("day {t}: held {held:?}, expected {}", f[3]));
            }
        }
    }
    if !(worst <= 1e-12) {
        problems.push(format!("ledger mismatch {worst:e}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (panel, _) = textbook::random_panel(&mut rng, 30, 80);
    let mut broken = 0;
    for _ in 0..100 {
        let scores = noise_matrix(&mut rng, 30, 80, 0.05);
        let cfg = StrategyConfig {
            k: rng.random_range(1..12),
            rebalance_every: rng.random_range(1..8),
            cost_bps: rng.random_range(0.0..30.0),
            strict: false,
        };
        let days = rng.random_range(0..20)..rng.random_range(40..80);
        let (a, b) = (rng.random_range(0.1..10.0), rng.random_range(-5.0..5.0));
        let s = rng.random_range(0.1..1.0);
        let transformed = match rng.random_range(0..4) {
            0 => scores.map(|x| a * x + b),
            1 => scores.map(|x| x * x * x + x),
            2 => scores.map(|x| (s * x).exp()),
            _ => scores.map(|x| (a * x).atan() + b),
        };
        let base = run_backtest(&scores, &panel, &cfg, days.clone()).expect("backtest");
        let moved = run_backtest(&transformed, &panel, &cfg, days).expect("backtest");
        if base != moved {
            broken += 1;
        }
    }
    if broken > 0 {
        problems.push(format!("{broken} transforms changed the curve"));
    }
    let elapsed = start.elapsed();
    Outcome::new(
        problems.is_empty() && within(elapsed, 1.0),
        format!(
            "ledger max |diff| {worst:.2e}, final value {:.12}, rank invariance {}/100, {elapsed:.2?}{}",
            curve.values[d - 1],
            100 - broken,
            first_problem(&problems)
        ),
    )
}
