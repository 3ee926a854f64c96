//! Sequential coloring of a complement graph. Nodes are colored in
//! ascending index order, one per step, so every state has exactly one parent.

use rand::Rng;
use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::graph::{greedy_color_bound_repeated, max_degree_bound, CommutGraph, Coloring};
use crate::variance::{RewardEvaluator, RewardOutcome, VarianceError};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("the environment colors a complement graph")]
    NotComplement,
    #[error("color bound must be at least 1, got {0}")]
    BadBound(u32),
    #[error("color {color} outside 1..={k}")]
    ColorOutOfRange { color: u32, k: u32 },
    #[error("state is already finished")]
    Finished,
    #[error("policy returned {found} log-probabilities, expected {expected}")]
    PolicyShape { expected: usize, found: usize },
    #[error("policy put no mass on any legal color")]
    AllMasked,
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Reward(#[from] VarianceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    /// Random-sequential greedy coloring; the smallest `K` over `repeats` seeded runs.
    Greedy { seed: u64, repeats: usize },
    /// Maximum node degree, lifted to at least 1.
    MaxDegree,
    Fixed(u32),
}

impl BoundMode {
    pub fn resolve(&self, g: &CommutGraph) -> Result<u32, EnvError> {
        match *self {
            BoundMode::Greedy { seed, repeats } => Ok(greedy_color_bound_repeated(g, seed, repeats.max(1)).0),
            BoundMode::MaxDegree => Ok(max_degree_bound(g).max(1)),
            BoundMode::Fixed(k) if k < 1 => Err(EnvError::BadBound(k)),
            BoundMode::Fixed(k) => Ok(k),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    InProgress,
    Terminal,
    DeadEnd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub coloring: Coloring,
    /// Index of the next node to color.
    pub step: usize,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionMask {
    allowed: Vec<bool>,
}

impl ActionMask {
    /// Whether color `c` (1-based) is legal.
    pub fn allows(&self, c: u32) -> bool {
        c >= 1 && self.allowed.get(c as usize - 1).copied().unwrap_or(false)
    }

    /// Flags indexed by `color - 1`.
    pub fn as_slice(&self) -> &[bool] {
        &self.allowed
    }

    pub fn count(&self) -> usize {
        self.allowed.iter().filter(|&&a| a).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.allowed.iter().any(|&a| a)
    }
}

#[derive(Debug, Clone)]
pub struct ColoringEnv<'g> {
    graph: &'g CommutGraph,
    k: u32,
    symmetry_breaking: bool,
}

impl<'g> ColoringEnv<'g> {
    pub fn new(graph: &'g CommutGraph, bound: BoundMode) -> Result<Self, EnvError> {
        if !graph.is_complement() {
            return Err(EnvError::NotComplement);
        }
        let k = bound.resolve(graph)?;
        Ok(ColoringEnv { graph, k, symmetry_breaking: false })
    }

    /// Restricts each step to colors at most one above the largest color used so far.
    pub fn with_symmetry_breaking(mut self, on: bool) -> Self {
        self.symmetry_breaking = on;
        self
    }

    pub fn graph(&self) -> &'g CommutGraph {
        self.graph
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn reset(&self) -> EnvState {
        let status = if self.graph.n_nodes() == 0 { Status::Terminal } else { Status::InProgress };
        EnvState { coloring: Coloring::uncolored(self.graph.n_nodes(), self.k), step: 0, status }
    }

    pub fn legal_mask(&self, s: &EnvState) -> Result<ActionMask, EnvError> {
        if s.status != Status::InProgress {
            return Err(EnvError::Finished);
        }
        Ok(self.mask_at(&s.coloring, s.step))
    }

    fn mask_at(&self, coloring: &Coloring, node: usize) -> ActionMask {
        let k = self.k as usize;
        let mut allowed = vec![true; k];
        let colors = coloring.colors();
        for &j in self.graph.neighbors(node) {
            let c = colors[j as usize] as usize;
            if c > 0 && c <= k {
                allowed[c - 1] = false;
            }
        }
        if self.symmetry_breaking {
            let top = colors[..node].iter().copied().max().unwrap_or(0) as usize;
            allowed.iter_mut().skip(top + 1).for_each(|a| *a = false);
        }
        ActionMask { allowed }
    }

    /// Colors node `s.step`. An illegal color ends the episode as a dead end;
    /// so does reaching a node with no legal color.
    pub fn step(&self, s: &EnvState, color: u32) -> Result<EnvState, EnvError> {
        let mut next = s.clone();
        self.step_in_place(&mut next, color)?;
        Ok(next)
    }

    pub fn step_in_place(&self, s: &mut EnvState, color: u32) -> Result<(), EnvError> {
        if s.status != Status::InProgress {
            return Err(EnvError::Finished);
        }
        if color < 1 || color > self.k {
            return Err(EnvError::ColorOutOfRange { color, k: self.k });
        }
        let legal = self.mask_at(&s.coloring, s.step).allows(color);
        s.coloring.set(s.step, color);
        s.step += 1;
        s.status = if !legal {
            Status::DeadEnd
        } else if s.step == self.n_nodes() {
            Status::Terminal
        } else if self.mask_at(&s.coloring, s.step).is_empty() {
            Status::DeadEnd
        } else {
            Status::InProgress
        };
        Ok(())
    }
}

/// A forward policy over colors `1..=K`.
pub trait ColorPolicy {
    /// Log-probabilities indexed by `color - 1`; masked colors must be `-inf`.
    fn log_probs(&mut self, env: &ColoringEnv, s: &EnvState, mask: &ActionMask) -> Result<Vec<f64>, EnvError>;

    /// Called once the color at index `action` (0-based) has been sampled
    /// from the distribution returned by the last [`ColorPolicy::log_probs`].
    fn commit(&mut self, _action: usize) -> Result<(), EnvError> {
        Ok(())
    }

    /// `log P_B(s | s')` for the transition just taken. Zero for the
    /// fixed-order tree, where every state has one parent.
    fn log_pb(&mut self, _env: &ColoringEnv, _after: &EnvState) -> Result<f64, EnvError> {
        Ok(0.0)
    }
}

/// Picks uniformly among legal colors.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPolicy;

impl ColorPolicy for UniformPolicy {
    fn log_probs(&mut self, _env: &ColoringEnv, _s: &EnvState, mask: &ActionMask) -> Result<Vec<f64>, EnvError> {
        let lp = -(mask.count() as f64).ln();
        Ok(mask.as_slice().iter().map(|&a| if a { lp } else { f64::NEG_INFINITY }).collect())
    }
}

pub trait TerminalReward {
    fn score(&self, c: &Coloring) -> Result<RewardOutcome, VarianceError>;
    /// Reward assigned to dead ends and invalid terminals.
    fn floor(&self) -> f64;
}

impl TerminalReward for RewardEvaluator<'_> {
    fn score(&self, c: &Coloring) -> Result<RewardOutcome, VarianceError> {
        self.evaluate(c)
    }

    fn floor(&self) -> f64 {
        self.params.reward_floor
    }
}

/// Reward from an arbitrary function of the terminal coloring.
pub struct FnReward<F> {
    f: F,
    floor: f64,
}

impl<F: Fn(&Coloring) -> f64> FnReward<F> {
    pub fn new(f: F, floor: f64) -> Self {
        FnReward { f, floor }
    }
}

impl<F: Fn(&Coloring) -> f64> TerminalReward for FnReward<F> {
    fn score(&self, c: &Coloring) -> Result<RewardOutcome, VarianceError> {
        let reward = (self.f)(c).max(self.floor);
        Ok(RewardOutcome { reward, r_m: 0.0, r_g: 0.0, eps2m: None, n_groups: c.n_groups(), valid: true })
    }

    fn floor(&self) -> f64 {
        self.floor
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Digest of the state the action was taken from.
    pub state_digest: u64,
    pub action: u32,
    pub log_pf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub steps: Vec<StepRecord>,
    pub terminal: Coloring,
    pub status: Status,
    pub outcome: RewardOutcome,
    pub log_pb_total: f64,
}

impl TrajectoryRecord {
    pub fn log_pf_total(&self) -> f64 {
        self.steps.iter().map(|s| s.log_pf).sum()
    }

    pub fn valid(&self) -> bool {
        self.outcome.valid
    }

    pub fn reward(&self) -> f64 {
        self.outcome.reward
    }
}

const DIGEST_SEED: u64 = 0xcbf2_9ce4_8422_2325;
const DIGEST_PRIME: u64 = 0x0000_0100_0000_01b3;

fn extend_digest(d: u64, color: u32) -> u64 {
    (d ^ color as u64).wrapping_mul(DIGEST_PRIME)
}

/// Digest of a colored prefix; equal prefixes give equal digests.
pub fn state_digest(colors: &[u32]) -> u64 {
    colors.iter().fold(DIGEST_SEED, |d, &c| extend_digest(d, c))
}

/// Draws an index from normalized log-probabilities.
pub fn sample_categorical<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> Option<usize> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (i, &lp) in log_probs.iter().enumerate() {
        if lp == f64::NEG_INFINITY {
            continue;
        }
        acc += lp.exp();
        last = Some(i);
        if u < acc {
            return Some(i);
        }
    }
    last
}

/// Samples one trajectory from `policy` until a terminal state or dead end.
pub fn rollout<P, W, R>(
    env: &ColoringEnv,
    policy: &mut P,
    reward: &W,
    rng: &mut R,
) -> Result<TrajectoryRecord, EnvError>
where
    P: ColorPolicy + ?Sized,
    W: TerminalReward + ?Sized,
    R: Rng + ?Sized,
{
    let mut s = env.reset();
    let mut steps = Vec::with_capacity(env.n_nodes());
    let mut digest = DIGEST_SEED;
    let mut log_pb_total = 0.0;
    let k = env.k() as usize;
    while s.status == Status::InProgress {
        let mask = env.legal_mask(&s)?;
        let lp = policy.log_probs(env, &s, &mask)?;
        if lp.len() != k {
            return Err(EnvError::PolicyShape { expected: k, found: lp.len() });
        }
        let legal_lp: Vec<f64> =
            lp.iter().zip(mask.as_slice()).map(|(&v, &a)| if a { v } else { f64::NEG_INFINITY }).collect();
        let idx = sample_categorical(&legal_lp, rng).ok_or(EnvError::AllMasked)?;
        if !legal_lp[idx].is_finite() {
            return Err(EnvError::AllMasked);
        }
        policy.commit(idx)?;
        let color = idx as u32 + 1;
        steps.push(StepRecord { state_digest: digest, action: color, log_pf: legal_lp[idx] });
        env.step_in_place(&mut s, color)?;
        digest = extend_digest(digest, color);
        log_pb_total += policy.log_pb(env, &s)?;
    }
    let outcome = match s.status {
        Status::Terminal => reward.score(&s.coloring)?,
        _ => RewardOutcome::invalid(reward.floor(), s.coloring.n_groups()),
    };
    Ok(TrajectoryRecord { steps, terminal: s.coloring, status: s.status, outcome, log_pb_total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Scheme;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn graph(n: usize, edges: &[(usize, usize)]) -> CommutGraph {
        CommutGraph::from_edges(n, edges, Scheme::Fc, true)
    }

    fn triangle() -> CommutGraph {
        graph(3, &[(0, 1), (1, 2), (0, 2)])
    }

    #[test]
    fn bound_modes() {
        let g = triangle();
        assert_eq!(ColoringEnv::new(&g, BoundMode::Greedy { seed: 3, repeats: 1 }).unwrap().k(), 3);
        assert_eq!(ColoringEnv::new(&g, BoundMode::MaxDegree).unwrap().k(), 2);
        assert!(matches!(ColoringEnv::new(&g, BoundMode::Fixed(0)), Err(EnvError::BadBound(0))));
        let empty = graph(4, &[]);
        assert_eq!(ColoringEnv::new(&empty, BoundMode::MaxDegree).unwrap().k(), 1);
        let commut = CommutGraph::from_edges(3, &[], Scheme::Fc, false);
        assert!(matches!(ColoringEnv::new(&commut, BoundMode::MaxDegree), Err(EnvError::NotComplement)));
    }

    #[test]
    fn masks_follow_colored_neighbors() {
        let g = triangle();
        let env = ColoringEnv::new(&g, BoundMode::Fixed(3)).unwrap();
        let s = env.reset();
        assert_eq!(env.legal_mask(&s).unwrap().count(), 3);
        let s = env.step(&s, 1).unwrap();
        let s = env.step(&s, 2).unwrap();
        let m = env.legal_mask(&s).unwrap();
        assert_eq!(m.as_slice(), &[false, false, true]);
        let s = env.step(&s, 3).unwrap();
        assert_eq!(s.status, Status::Terminal);
        assert!(matches!(env.legal_mask(&s), Err(EnvError::Finished)));
        assert!(matches!(env.step(&s, 1), Err(EnvError::Finished)));

        let square = graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let env = ColoringEnv::new(&square, BoundMode::Fixed(2)).unwrap();
        let mut s = env.reset();
        for c in [1, 2, 1] {
            s = env.step(&s, c).unwrap();
            assert_eq!(s.status, Status::InProgress);
        }
        assert_eq!(env.legal_mask(&s).unwrap().as_slice(), &[false, true]);
    }

    #[test]
    fn dead_end_is_detected_eagerly() {
        let g = triangle();
        let env = ColoringEnv::new(&g, BoundMode::Fixed(2)).unwrap();
        let s = env.step(&env.reset(), 1).unwrap();
        let s = env.step(&s, 2).unwrap();
        assert_eq!(s.status, Status::DeadEnd);
        assert_eq!(s.step, 2);
        assert!(matches!(env.step(&env.reset(), 3), Err(EnvError::ColorOutOfRange { color: 3, k: 2 })));
    }

    #[test]
    fn illegal_color_ends_in_dead_end() {
        let g = triangle();
        let env = ColoringEnv::new(&g, BoundMode::Fixed(3)).unwrap();
        let s = env.step(&env.reset(), 2).unwrap();
        let s = env.step(&s, 2).unwrap();
        assert_eq!(s.status, Status::DeadEnd);
    }

    #[test]
    fn symmetry_breaking_limits_new_colors() {
        let g = graph(3, &[]);
        let env = ColoringEnv::new(&g, BoundMode::Fixed(3)).unwrap().with_symmetry_breaking(true);
        let s = env.reset();
        assert_eq!(env.legal_mask(&s).unwrap().as_slice(), &[true, false, false]);
        let s = env.step(&s, 1).unwrap();
        assert_eq!(env.legal_mask(&s).unwrap().as_slice(), &[true, true, false]);
    }

    #[test]
    fn uniform_triangle_gives_each_coloring_one_sixth() {
        let g = triangle();
        let env = ColoringEnv::new(&g, BoundMode::Fixed(3)).unwrap();
        let reward = FnReward::new(|_| 1.0, 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts: HashMap<Vec<u32>, usize> = HashMap::new();
        let draws = 60_000;
        for _ in 0..draws {
            let t = rollout(&env, &mut UniformPolicy, &reward, &mut rng).unwrap();
            assert_eq!(t.status, Status::Terminal);
            assert!((t.log_pf_total() - (1.0f64 / 6.0).ln()).abs() < 1e-12);
            *counts.entry(t.terminal.colors().to_vec()).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        for &c in counts.values() {
            assert!((c as f64 / draws as f64 - 1.0 / 6.0).abs() < 0.01);
        }
    }

    #[test]
    fn single_node_trajectory() {
        let g = graph(1, &[]);
        let env = ColoringEnv::new(&g, BoundMode::Greedy { seed: 0, repeats: 1 }).unwrap();
        let reward = FnReward::new(|_| 2.0, 1e-12);
        let t = rollout(&env, &mut UniformPolicy, &reward, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(t.steps.len(), 1);
        assert!(t.valid());
        assert_eq!(t.reward(), 2.0);
        assert_eq!(t.log_pb_total, 0.0);
    }

    #[test]
    fn dead_end_rollout_gets_floor() {
        let g = triangle();
        let env = ColoringEnv::new(&g, BoundMode::Fixed(2)).unwrap();
        let reward = FnReward::new(|_| 5.0, 1e-12);
        let t = rollout(&env, &mut UniformPolicy, &reward, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(t.status, Status::DeadEnd);
        assert!(!t.valid());
        assert_eq!(t.reward(), 1e-12);
    }

    #[test]
    fn digests_track_prefixes() {
        let g = graph(3, &[]);
        let env = ColoringEnv::new(&g, BoundMode::Fixed(2)).unwrap();
        let reward = FnReward::new(|_| 1.0, 1e-12);
        let t = rollout(&env, &mut UniformPolicy, &reward, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let colors = t.terminal.colors();
        for (i, s) in t.steps.iter().enumerate() {
            assert_eq!(s.state_digest, state_digest(&colors[..i]));
        }
    }
}
