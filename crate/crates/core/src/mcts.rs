//! PUCT tree search over token sequences.
//!
//! Each cycle selects down the tree by `Q + c * P * sqrt(sum N) / (1 + N)`,
//! expands the reached leaf with masked policy priors, rolls the policy out to
//! END without growing the tree, and backs the returns up the selected path.
//! Every cycle yields one complete BEG..END trajectory.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use rand::Rng;

use crate::env::{EnvError, Environment, MdpState, Trajectory, Transition};
use crate::expr::{Token, TypeStack};
use crate::policy::ActionPolicy;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MctsConfig {
    /// Exploration weight multiplying the prior term.
    pub c_puct: f64,
    /// Discount applied to rewards inside the backed-up returns.
    pub discount: f64,
}

impl Default for MctsConfig {
    fn default() -> Self {
        MctsConfig {
            c_puct: 1.0,
            discount: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    /// Vocabulary index of the action.
    pub action: usize,
    pub n: u32,
    pub p: f64,
    pub q: f64,
    /// Latest reward observed on this edge.
    pub r: f64,
    pub child: Option<usize>,
}

impl Edge {
    pub fn new(action: usize, prior: f64) -> Edge {
        Edge {
            action,
            n: 0,
            p: prior,
            q: 0.0,
            r: 0.0,
            child: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub state: MdpState,
    pub edges: Vec<Edge>,
    pub expanded: bool,
    /// (parent node, edge index within the parent).
    pub parent: Option<(usize, usize)>,
}

impl Node {
    pub fn is_terminal(&self) -> bool {
        self.state.done()
    }

    pub fn visits(&self) -> u32 {
        self.edges.iter().map(|e| e.n).sum()
    }
}

/// One step of a selected path: the node left, the edge taken and the
/// transition it produced.
#[derive(Clone, Debug, PartialEq)]
pub struct PathStep {
    pub node: usize,
    pub edge: usize,
    pub transition: Transition,
}

/// Arena-allocated search tree rooted at `[BEG]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchTree {
    nodes: Vec<Node>,
    config: MctsConfig,
}

/// PUCT score of `edge` given the parent's total visits.
pub fn puct_score(edge: &Edge, total_visits: u32, c_puct: f64) -> f64 {
    edge.q + c_puct * edge.p * libm::sqrt(total_visits as f64) / (1.0 + edge.n as f64)
}

/// Index of the edge maximising the PUCT score; ties go to the higher prior,
/// then the lower action index.
pub fn select_edge(edges: &[Edge], c_puct: f64) -> Option<usize> {
    let total: u32 = edges.iter().map(|e| e.n).sum();
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in edges.iter().enumerate() {
        let s = puct_score(e, total, c_puct);
        let better = match best {
            None => true,
            Some((j, bs)) => {
                let b = &edges[j];
                s > bs || (s == bs && (e.p > b.p || (e.p == b.p && e.action < b.action)))
            }
        };
        if better {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Edges for `legal` actions with priors renormalised over the legal set.
pub fn masked_edges(priors: &[f64], legal: &[usize]) -> Vec<Edge> {
    let mass: f64 = legal.iter().map(|&a| priors[a].max(0.0)).sum();
    legal
        .iter()
        .map(|&a| {
            let p = if mass > 0.0 {
                priors[a].max(0.0) / mass
            } else {
                1.0 / legal.len() as f64
            };
            Edge::new(a, p)
        })
        .collect()
}

/// Returns backed up along a path: `G_k = sum_i gamma^i r_{k+1+i} + v` for
/// `k = 0..rewards.len()`, `rewards[k]` being `r_{k+1}`.
pub fn path_returns(rewards: &[f64], v: f64, discount: f64) -> Vec<f64> {
    let mut out = alloc::vec![0.0; rewards.len()];
    for k in 0..rewards.len() {
        let mut g = 0.0;
        let mut w = 1.0;
        for r in &rewards[k..] {
            g += w * r;
            w *= discount;
        }
        out[k] = g + v;
    }
    out
}

/// Fixed-capacity FIFO of trajectories.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplayBuffer {
    items: VecDeque<Trajectory>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        ReplayBuffer {
            items: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
        }
    }

    pub fn push(&mut self, t: Trajectory) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    pub fn iter(&self) -> impl Iterator<Item = &Trajectory> {
        self.items.iter()
    }

    /// Contents in insertion order.
    pub fn to_vec(&self) -> Vec<Trajectory> {
        self.items.iter().cloned().collect()
    }
}

fn indices(state: &MdpState, vocab: &crate::expr::Vocabulary) -> Vec<usize> {
    state
        .tokens()
        .iter()
        .map(|&t| vocab.index_of(t).expect("state tokens come from the vocabulary"))
        .collect()
}

/// Samples an index from `probs` using one uniform draw.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], legal: &[usize], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &a in legal {
        acc += probs[a];
        if u < acc {
            return a;
        }
    }
    *legal
        .iter()
        .rev()
        .find(|&&a| probs[a] > 0.0)
        .unwrap_or(&legal[legal.len() - 1])
}

/// Rolls `policy` out from `state` to END. Returns the transitions taken and
/// their reward sum.
pub fn rollout<E, P, R>(
    state: &MdpState,
    policy: &P,
    env: &mut E,
    rng: &mut R,
) -> Result<(Vec<Transition>, f64), EnvError>
where
    E: Environment,
    P: ActionPolicy,
    R: Rng + ?Sized,
{
    let mut cursor = policy.start();
    for i in indices(state, env.vocabulary()) {
        policy.advance(&mut cursor, i);
    }
    let mut s = state.clone();
    let mut tail = Vec::new();
    let mut v = 0.0;
    while !s.done() {
        let legal = env.legal_actions(&s)?;
        let probs = policy.distribution(&cursor, &legal);
        let a = sample_index(&probs, &legal, rng);
        let token = env.vocabulary().token(a);
        let tr = env.step_lenient(&s, token, rng)?;
        v += tr.reward;
        policy.advance(&mut cursor, a);
        s = tr.next_state.clone();
        tail.push(tr);
    }
    Ok((tail, v))
}

impl SearchTree {
    /// A tree holding only the unexpanded root `[BEG]`.
    pub fn new(config: MctsConfig) -> SearchTree {
        SearchTree {
            nodes: alloc::vec![Node {
                state: MdpState::initial(),
                edges: Vec::new(),
                expanded: false,
                parent: None,
            }],
            config,
        }
    }

    pub fn config(&self) -> &MctsConfig {
        &self.config
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn node_mut(&mut self, id: usize) -> &mut Node {
        &mut self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Creates edges for the legal actions of node `id` from masked,
    /// renormalised priors.
    pub fn expand<E: Environment, P: ActionPolicy>(
        &mut self,
        id: usize,
        policy: &P,
        env: &E,
    ) -> Result<(), EnvError> {
        let node = &self.nodes[id];
        if node.expanded || node.is_terminal() {
            return Ok(());
        }
        let legal = env.legal_actions(&node.state)?;
        let prefix = indices(&node.state, env.vocabulary());
        let priors = policy.probabilities(&prefix, &legal);
        let node = &mut self.nodes[id];
        node.edges = masked_edges(&priors, &legal);
        node.expanded = true;
        Ok(())
    }

    /// Descends from the root by PUCT, stepping the environment along each
    /// chosen edge, until an edge leads to a new or terminal node. Returns the
    /// path and the id of the reached node.
    pub fn select<E: Environment, R: Rng + ?Sized>(
        &mut self,
        env: &mut E,
        rng: &mut R,
    ) -> Result<(Vec<PathStep>, usize), EnvError> {
        let mut path = Vec::new();
        let mut id = 0;
        loop {
            let node = &self.nodes[id];
            if !node.expanded || node.is_terminal() {
                return Ok((path, id));
            }
            let e = select_edge(&node.edges, self.config.c_puct).expect("expanded nodes have edges");
            let action = env.vocabulary().token(node.edges[e].action);
            let state = node.state.clone();
            let tr = env.step_lenient(&state, action, rng)?;
            let child = match self.nodes[id].edges[e].child {
                Some(c) => c,
                None => {
                    let c = self.nodes.len();
                    self.nodes.push(Node {
                        state: tr.next_state.clone(),
                        edges: Vec::new(),
                        expanded: false,
                        parent: Some((id, e)),
                    });
                    self.nodes[id].edges[e].child = Some(c);
                    c
                }
            };
            path.push(PathStep {
                node: id,
                edge: e,
                transition: tr,
            });
            id = child;
        }
    }

    /// Running-mean update of every path edge with its backed-up return.
    pub fn backpropagate(&mut self, path: &[PathStep], v: f64) {
        let rewards: Vec<f64> = path.iter().map(|s| s.transition.reward).collect();
        let returns = path_returns(&rewards, v, self.config.discount);
        for (step, g) in path.iter().zip(returns) {
            let edge = &mut self.nodes[step.node].edges[step.edge];
            edge.q = (edge.n as f64 * edge.q + g) / (edge.n as f64 + 1.0);
            edge.n += 1;
            let next = &step.transition.next_state;
            let valid = next.done()
                || TypeStack::from_tokens(next.body()).is_some_and(|s| s.is_complete());
            if valid {
                edge.r = step.transition.reward;
            }
        }
    }

    /// One select / expand / rollout / backpropagate cycle. The complete
    /// trajectory is pushed to `buffer` and returned.
    pub fn search_cycle<E, P, R>(
        &mut self,
        policy: &P,
        env: &mut E,
        buffer: &mut ReplayBuffer,
        rng: &mut R,
    ) -> Result<Trajectory, EnvError>
    where
        E: Environment,
        P: ActionPolicy,
        R: Rng + ?Sized,
    {
        if !self.nodes[0].expanded {
            self.expand(0, policy, env)?;
        }
        let (path, leaf) = self.select(env, rng)?;
        let mut traj = Trajectory::new();
        for s in &path {
            traj.push(s.transition.clone());
        }
        let v = if self.nodes[leaf].is_terminal() {
            0.0
        } else {
            self.expand(leaf, policy, env)?;
            let state = self.nodes[leaf].state.clone();
            let (tail, v) = rollout(&state, policy, env, rng)?;
            for t in tail {
                traj.push(t);
            }
            v
        };
        self.backpropagate(&path, v);
        buffer.push(traj.clone());
        Ok(traj)
    }

    /// Follows the most-visited edge from the root (ties to the lower action
    /// index) and returns the tokens passed, BEG excluded.
    pub fn most_visited_path(&self, vocab: &crate::expr::Vocabulary) -> Vec<Token> {
        let mut out = Vec::new();
        let mut id = 0;
        loop {
            let node = &self.nodes[id];
            let Some(best) = node
                .edges
                .iter()
                .filter(|e| e.n > 0)
                .max_by(|a, b| a.n.cmp(&b.n).then(b.action.cmp(&a.action)))
            else {
                return out;
            };
            out.push(vocab.token(best.action));
            match best.child {
                Some(c) => id = c,
                None => return out,
            }
        }
    }

    /// Text dump, one line per edge with at least one visit:
    ///
    /// `<depth>\t<prefix tokens>\t<action>\tN=<n>\tP=<p>\tQ=<q>\tR=<r>`
    ///
    /// Prefix tokens are space separated and start at BEG. Lines follow a
    /// depth-first walk with edges in action order.
    pub fn dump(&self, vocab: &crate::expr::Vocabulary) -> String {
        let mut out = String::new();
        let mut stack = alloc::vec![(0usize, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            let node = &self.nodes[id];
            let prefix: Vec<String> = node.state.tokens().iter().map(|t| alloc::format!("{t}")).collect();
            let prefix = prefix.join(" ");
            let mut children = Vec::new();
            for e in node.edges.iter().filter(|e| e.n > 0) {
                let _ = writeln!(
                    out,
                    "{depth}\t{prefix}\t{}\tN={}\tP={}\tQ={}\tR={}",
                    vocab.token(e.action),
                    e.n,
                    e.p,
                    e.q,
                    e.r
                );
                if let Some(c) = e.child {
                    children.push((c, depth + 1));
                }
            }
            stack.extend(children.into_iter().rev());
        }
        out
    }
}
