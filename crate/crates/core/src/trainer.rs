//! Trajectory-balance training: on-policy rollouts from a frozen snapshot,
//! mean TB loss over `n_update` trajectories, one Adam step per iteration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Var};
use crate::env::{rollout, state_digest, ColoringEnv, EnvError, TerminalReward, TrajectoryRecord};
use crate::graph::Coloring;
use crate::optim::{Adam, AdamConfig};
use crate::policy::{
    backward_on_tape, forward_on_tape, Checkpoint, GnnPolicy, PolicyConfig, PolicyError, PolicyInput,
    PolicyParams, RngState,
};
use crate::variance::RewardParams;

/// Parameters larger than this in magnitude abort the run.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite loss at iteration {iter}")]
    NonFinite { iter: u64 },
    #[error("parameters diverged at iteration {iter} (max |θ| = {max:.3e})")]
    Diverged { iter: u64, max: f64 },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("output error: {0}")]
    Sink(String),
}

impl TrainError {
    /// Numeric failures, as opposed to bad input or i/o.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            TrainError::NonFinite { .. }
                | TrainError::Diverged { .. }
                | TrainError::Autodiff(AutodiffError::NonFinite { .. })
                | TrainError::Env(EnvError::Autodiff(AutodiffError::NonFinite { .. }))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidMode {
    /// Dead ends enter the loss with the floor reward.
    Floor,
    /// Dead ends are logged but left out of the loss.
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackwardMode {
    Deterministic,
    Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub total_samples: usize,
    pub n_update: usize,
    pub adam: AdamConfig,
    /// Learning rate for `log Z`; `None` uses `adam.lr`.
    pub lr_log_z: Option<f64>,
    /// Before the first update, set `log Z` to the batch mean of
    /// `log R - log P_F + log P_B` instead of keeping its initial value.
    pub warm_start_log_z: bool,
    pub seed: u64,
    pub reward: RewardParams,
    pub invalid_mode: InvalidMode,
    pub backward_mode: BackwardMode,
    pub emb_d: usize,
    pub hidden_d: usize,
    pub use_weights: bool,
    pub symmetry_breaking: bool,
    /// Iterations between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub top_k: usize,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_samples: 5000,
            n_update: 10,
            adam: AdamConfig::default(),
            lr_log_z: None,
            warm_start_log_z: false,
            seed: 0,
            reward: RewardParams::default(),
            invalid_mode: InvalidMode::Floor,
            backward_mode: BackwardMode::Deterministic,
            emb_d: 2,
            hidden_d: 64,
            use_weights: true,
            symmetry_breaking: false,
            checkpoint_every: 50,
            top_k: 10,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.n_update < 1 || self.total_samples < self.n_update {
            return Err(TrainError::Config("need total_samples >= n_update >= 1".into()));
        }
        if !(self.adam.lr > 0.0) || self.lr_log_z.is_some_and(|v| !(v > 0.0)) {
            return Err(TrainError::Config("learning rates must be positive".into()));
        }
        if self.top_k < 1 || self.workers < 1 {
            return Err(TrainError::Config("top_k and workers must be at least 1".into()));
        }
        self.reward.validate().map_err(TrainError::Config)
    }

    pub fn policy_config(&self, k: u32) -> PolicyConfig {
        PolicyConfig {
            emb_d: self.emb_d,
            hidden_d: self.hidden_d,
            k,
            use_weights: self.use_weights,
            learned_backward: self.backward_mode == BackwardMode::Learned,
        }
    }

    pub fn iterations(&self) -> usize {
        self.total_samples.div_ceil(self.n_update)
    }
}

/// `(log Z + Σ log P_F − log R − Σ log P_B)²`.
pub fn tb_loss(log_z: f64, log_pf: f64, log_reward: f64, log_pb: f64) -> Result<f64, TrainError> {
    let d = log_z + log_pf - log_reward - log_pb;
    if !d.is_finite() {
        return Err(TrainError::NonFinite { iter: 0 });
    }
    Ok(d * d)
}

/// The TB loss of a fixed action sequence built end to end on one tape, so
/// it can be differentiated (and finite-differenced) as a whole.
pub fn tb_loss_on_tape(
    tape: &mut Tape,
    params: &PolicyParams,
    coeffs: &[f64],
    env: &ColoringEnv,
    actions: &[u32],
    log_reward: f64,
) -> Result<Var, TrainError> {
    let mut s = env.reset();
    let mut terms = Vec::with_capacity(actions.len() + 1);
    let lz = params.layout().log_z;
    terms.push(tape.param(lz.offset, 1, 1));
    for &a in actions {
        let mask = env.legal_mask(&s)?;
        let input = PolicyInput { colors: s.coloring.colors(), current: s.step, coeffs, mask: mask.as_slice() };
        let lp = forward_on_tape(tape, params, &input)?;
        terms.push(tape.pick(lp, a as usize - 1));
        env.step_in_place(&mut s, a)?;
        if let Some(pb) = backward_on_tape(tape, params) {
            terms.push(tape.scale(pb, -1.0));
        }
    }
    let total = tape.sum(&terms);
    let delta = tape.add_const(total, -log_reward);
    Ok(tape.square(delta))
}

/// One row of the sample log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub iter: u64,
    pub idx: u64,
    pub colors: Vec<u32>,
    pub n_groups: usize,
    #[serde(rename = "eps2M")]
    pub eps2m: Option<f64>,
    pub reward: f64,
    pub valid: bool,
    pub logpf: f64,
}

impl SampleRecord {
    pub fn from_trajectory(iter: u64, idx: u64, t: &TrajectoryRecord) -> Self {
        SampleRecord {
            iter,
            idx,
            colors: t.terminal.colors().to_vec(),
            n_groups: t.outcome.n_groups,
            eps2m: t.outcome.eps2m,
            reward: t.outcome.reward,
            valid: t.outcome.valid,
            logpf: t.log_pf_total(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopEntry {
    pub eps2m: f64,
    pub n_groups: usize,
    pub digest: u64,
    pub sample_idx: u64,
}

impl TopEntry {
    /// Ranking key: `ε²M` rounded to 1e-9 so numerically equal partitions tie, then `N_G`, then arrival.
    fn key(&self) -> (i64, usize, u64) {
        ((self.eps2m * 1e9).round() as i64, self.n_groups, self.sample_idx)
    }
}

/// The best `k` distinct partitions seen so far (color relabelings count as one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKTracker {
    k: usize,
    entries: Vec<TopEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopKSummary {
    pub mean: f64,
    pub std: f64,
    pub best: f64,
    pub len: usize,
}

/// Digest of the partition a coloring induces, independent of color ids.
pub fn partition_digest(c: &Coloring) -> u64 {
    state_digest(&c.canonical())
}

impl TopKTracker {
    pub fn new(k: usize) -> Self {
        TopKTracker { k, entries: Vec::new() }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Offers a valid sample; returns whether it entered the top-k.
    pub fn offer(&mut self, entry: TopEntry) -> bool {
        if self.entries.iter().any(|e| e.digest == entry.digest) {
            return false;
        }
        let pos = self.entries.partition_point(|e| e.key() <= entry.key());
        if pos >= self.k {
            return false;
        }
        self.entries.insert(pos, entry);
        self.entries.truncate(self.k);
        true
    }

    pub fn offer_coloring(&mut self, c: &Coloring, eps2m: f64, sample_idx: u64) -> bool {
        self.offer(TopEntry { eps2m, n_groups: c.n_groups(), digest: partition_digest(c), sample_idx })
    }

    pub fn entries(&self) -> &[TopEntry] {
        &self.entries
    }

    pub fn best(&self) -> Option<&TopEntry> {
        self.entries.first()
    }

    pub fn summary(&self) -> Option<TopKSummary> {
        if self.entries.is_empty() {
            return None;
        }
        let n = self.entries.len() as f64;
        let mean = self.entries.iter().map(|e| e.eps2m).sum::<f64>() / n;
        let var = self.entries.iter().map(|e| (e.eps2m - mean).powi(2)).sum::<f64>() / n;
        Some(TopKSummary { mean, std: var.sqrt(), best: self.entries[0].eps2m, len: self.entries.len() })
    }
}

/// Indices of the points not dominated when minimizing both coordinates,
/// ordered by `ε²M` then `N_G` then index.
pub fn pareto_front(points: &[(f64, usize)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].0.total_cmp(&points[b].0).then(points[a].1.cmp(&points[b].1)).then(a.cmp(&b)));
    let mut front = Vec::new();
    // Smallest N_G among points strictly before the current one in (ε²M, N_G) order.
    let mut min_before = usize::MAX;
    let mut i = 0;
    while i < order.len() {
        let p = points[order[i]];
        let mut j = i;
        while j < order.len() && points[order[j]].0 == p.0 && points[order[j]].1 == p.1 {
            j += 1;
        }
        if p.1 < min_before {
            front.extend_from_slice(&order[i..j]);
        }
        min_before = min_before.min(p.1);
        i = j;
    }
    front
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iter: u64,
    pub loss: f64,
    pub log_z: f64,
    pub valid_frac: f64,
    pub top_k: Option<TopKSummary>,
}

/// Receives run output as it is produced.
pub trait TrainSink {
    fn on_sample(&mut self, _rec: &SampleRecord) -> Result<(), TrainError> {
        Ok(())
    }
    fn on_iteration(&mut self, _stats: &IterationStats) -> Result<(), TrainError> {
        Ok(())
    }
    fn on_checkpoint(&mut self, _ck: &Checkpoint) -> Result<(), TrainError> {
        Ok(())
    }
}

/// Keeps everything in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub samples: Vec<SampleRecord>,
    pub iterations: Vec<IterationStats>,
    pub checkpoints: Vec<Checkpoint>,
}

impl TrainSink for MemorySink {
    fn on_sample(&mut self, rec: &SampleRecord) -> Result<(), TrainError> {
        self.samples.push(rec.clone());
        Ok(())
    }
    fn on_iteration(&mut self, stats: &IterationStats) -> Result<(), TrainError> {
        self.iterations.push(*stats);
        Ok(())
    }
    fn on_checkpoint(&mut self, ck: &Checkpoint) -> Result<(), TrainError> {
        self.checkpoints.push(ck.clone());
        Ok(())
    }
}

/// Discards everything.
pub struct NullSink;

impl TrainSink for NullSink {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub tracker: TopKTracker,
    pub n_samples: u64,
    pub n_valid: u64,
    pub final_loss: f64,
}

impl TrainOutcome {
    pub fn valid_frac(&self) -> f64 {
        if self.n_samples == 0 {
            0.0
        } else {
            self.n_valid as f64 / self.n_samples as f64
        }
    }
}

/// Generator for global sample `idx`: one ChaCha stream per sample, so the
/// draw does not depend on which worker runs it.
pub fn sample_rng(seed: u64, idx: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(idx);
    rng
}

pub struct Trainer {
    pub config: TrainConfig,
    pub params: PolicyParams,
    pub adam: Adam,
    pub iteration: u64,
    pub next_sample: u64,
}

impl Trainer {
    pub fn new(config: TrainConfig, k: u32) -> Result<Self, TrainError> {
        config.validate()?;
        let params = PolicyParams::init(config.policy_config(k), config.seed)?;
        let adam = make_adam(&config, &params);
        Ok(Trainer { config, params, adam, iteration: 0, next_sample: 0 })
    }

    /// Resumes from a checkpoint written by a run with the same configuration.
    pub fn from_checkpoint(config: TrainConfig, ck: &Checkpoint) -> Result<Self, TrainError> {
        config.validate()?;
        let params = ck.params()?;
        if *params.config() != config.policy_config(params.config().k) {
            return Err(TrainError::Config("checkpoint architecture differs from the configuration".into()));
        }
        let adam = ck.optimizer.clone().unwrap_or_else(|| make_adam(&config, &params));
        let next_sample = ck.rng.map_or(ck.iteration * config.n_update as u64, |r| r.next_sample);
        Ok(Trainer { config, params, adam, iteration: ck.iteration, next_sample })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let rng = RngState { seed: self.config.seed, next_sample: self.next_sample };
        Checkpoint::new(&self.params, Some(&self.adam), self.iteration, Some(rng))
    }

    fn collect<W: TerminalReward + Sync>(
        &self,
        env: &ColoringEnv,
        coeffs: &[f64],
        reward: &W,
        n: usize,
    ) -> Result<Vec<(TrajectoryRecord, Vec<f64>)>, TrainError> {
        let adjacency = env.graph().neighbor_lists();
        let one = |idx: u64| -> Result<(TrajectoryRecord, Vec<f64>), TrainError> {
            let mut policy = GnnPolicy::new(&self.params, adjacency, coeffs).with_gradients();
            let mut rng = sample_rng(self.config.seed, idx);
            let t = rollout(env, &mut policy, reward, &mut rng)?;
            let g = policy.take_gradient().expect("gradient tracking is on");
            Ok((t, g))
        };
        let first = self.next_sample;
        let workers = self.config.workers.min(n);
        if workers <= 1 {
            return (0..n as u64).map(|i| one(first + i)).collect();
        }
        let mut slots: Vec<Option<Result<(TrajectoryRecord, Vec<f64>), TrainError>>> = (0..n).map(|_| None).collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let one = &one;
                    scope.spawn(move || {
                        (w..n).step_by(workers).map(|i| (i, one(first + i as u64))).collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("rollout worker panicked") {
                    slots[i] = Some(r);
                }
            }
        });
        slots.into_iter().map(|s| s.expect("every slot filled")).collect()
    }

    /// Runs until `total_samples` trajectories have been drawn.
    pub fn run<W: TerminalReward + Sync>(
        &mut self,
        env: &ColoringEnv,
        coeffs: &[f64],
        reward: &W,
        sink: &mut dyn TrainSink,
    ) -> Result<TrainOutcome, TrainError> {
        if env.k() != self.params.config().k {
            return Err(TrainError::Config(format!(
                "policy has {} colors, environment {}",
                self.params.config().k,
                env.k()
            )));
        }
        let total = self.config.total_samples as u64;
        let mut tracker = TopKTracker::new(self.config.top_k);
        let (mut n_samples, mut n_valid) = (0u64, 0u64);
        let mut final_loss = f64::NAN;
        while self.next_sample < total {
            let n = (self.config.n_update as u64).min(total - self.next_sample) as usize;
            let batch = self.collect(env, coeffs, reward, n)?;
            let iter = self.iteration;

            if self.iteration == 0 && self.config.warm_start_log_z {
                let kept: Vec<f64> = batch
                    .iter()
                    .filter(|(t, _)| t.valid() || self.config.invalid_mode == InvalidMode::Floor)
                    .map(|(t, _)| t.reward().ln() - t.log_pf_total() + t.log_pb_total)
                    .collect();
                if !kept.is_empty() {
                    self.params.set_log_z(kept.iter().sum::<f64>() / kept.len() as f64);
                }
            }
            let mut included = 0usize;
            let mut loss = 0.0;
            let mut coef = Vec::with_capacity(n);
            for (i, (t, _)) in batch.iter().enumerate() {
                let idx = self.next_sample + i as u64;
                let rec = SampleRecord::from_trajectory(iter, idx, t);
                sink.on_sample(&rec)?;
                n_samples += 1;
                if t.valid() {
                    n_valid += 1;
                    if let Some(e) = t.outcome.eps2m {
                        tracker.offer_coloring(&t.terminal, e, idx);
                    }
                }
                if !t.valid() && self.config.invalid_mode == InvalidMode::Skip {
                    coef.push(0.0);
                    continue;
                }
                let delta = self.params.log_z() + t.log_pf_total() - t.reward().ln() - t.log_pb_total;
                if !delta.is_finite() {
                    sink.on_checkpoint(&self.checkpoint())?;
                    return Err(TrainError::NonFinite { iter });
                }
                loss += delta * delta;
                coef.push(delta);
                included += 1;
            }

            let valid_frac = batch.iter().filter(|(t, _)| t.valid()).count() as f64 / n as f64;
            if included > 0 {
                let scale = 2.0 / included as f64;
                let mut grad = vec![0.0; self.params.len()];
                for ((_, g), &d) in batch.iter().zip(&coef) {
                    if d != 0.0 {
                        grad.iter_mut().zip(g).for_each(|(a, b)| *a += scale * d * b);
                    }
                }
                grad[self.params.log_z_index()] += scale * coef.iter().sum::<f64>();
                loss /= included as f64;
                self.adam.step(self.params.values_mut(), &grad);
                let max = self.params.max_abs();
                if !max.is_finite() || max > DIVERGENCE_LIMIT {
                    sink.on_checkpoint(&self.checkpoint())?;
                    return Err(TrainError::Diverged { iter, max });
                }
            } else {
                loss = f64::NAN;
            }
            final_loss = loss;
            self.next_sample += n as u64;
            self.iteration += 1;
            sink.on_iteration(&IterationStats {
                iter,
                loss,
                log_z: self.params.log_z(),
                valid_frac,
                top_k: tracker.summary(),
            })?;
            let every = self.config.checkpoint_every as u64;
            if (every > 0 && self.iteration.is_multiple_of(every)) || self.next_sample >= total {
                sink.on_checkpoint(&self.checkpoint())?;
            }
        }
        Ok(TrainOutcome { params: self.params.clone(), tracker, n_samples, n_valid, final_loss })
    }
}

fn make_adam(config: &TrainConfig, params: &PolicyParams) -> Adam {
    let adam = Adam::new(params.len(), config.adam);
    match config.lr_log_z {
        Some(lr) => adam.with_lr_override(params.log_z_index(), lr),
        None => adam,
    }
}

/// Convenience wrapper: fresh trainer, full run.
pub fn train<W: TerminalReward + Sync>(
    config: &TrainConfig,
    env: &ColoringEnv,
    coeffs: &[f64],
    reward: &W,
    sink: &mut dyn TrainSink,
) -> Result<TrainOutcome, TrainError> {
    Trainer::new(config.clone(), env.k())?.run(env, coeffs, reward, sink)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{BoundMode, FnReward};
    use crate::graph::{CommutGraph, Scheme};

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            total_samples: 10,
            n_update: 10,
            emb_d: 2,
            hidden_d: 4,
            use_weights: false,
            ..Default::default()
        }
    }

    #[test]
    fn tb_loss_examples() {
        assert_eq!(tb_loss(2.0f64.ln(), 0.0, 2.0f64.ln(), 0.0).unwrap(), 0.0);
        assert!(tb_loss(0.0, -3.0, 1e-12f64.ln(), 0.0).unwrap().is_finite());
        assert!(tb_loss(0.0, f64::NEG_INFINITY, 0.0, 0.0).is_err());
    }

    #[test]
    fn single_update_logs_every_sample() {
        let g = CommutGraph::from_edges(3, &[(0, 1)], Scheme::Fc, true);
        let env = ColoringEnv::new(&g, BoundMode::Fixed(2)).unwrap();
        let reward = FnReward::new(|_| 1.0, 1e-12);
        let mut sink = MemorySink::default();
        let out = train(&tiny_config(), &env, &[0.0; 3], &reward, &mut sink).unwrap();
        assert_eq!(sink.samples.len(), 10);
        assert_eq!(sink.iterations.len(), 1);
        assert_eq!(sink.checkpoints.len(), 1);
        assert_eq!(out.n_samples, 10);
        let idx: Vec<u64> = sink.samples.iter().map(|s| s.idx).collect();
        assert_eq!(idx, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn partial_last_iteration() {
        let g = CommutGraph::from_edges(2, &[], Scheme::Fc, true);
        let env = ColoringEnv::new(&g, BoundMode::Fixed(2)).unwrap();
        let reward = FnReward::new(|_| 1.0, 1e-12);
        let mut sink = MemorySink::default();
        let cfg = TrainConfig { total_samples: 25, ..tiny_config() };
        train(&cfg, &env, &[0.0; 2], &reward, &mut sink).unwrap();
        assert_eq!(sink.samples.len(), 25);
        assert_eq!(sink.iterations.len(), 3);
    }

    #[test]
    fn runs_are_reproducible_and_worker_count_does_not_matter() {
        let g = CommutGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3)], Scheme::Fc, true);
        let env = ColoringEnv::new(&g, BoundMode::Fixed(3)).unwrap();
        let reward = FnReward::new(|c: &Coloring| 1.0 + c.colors()[0] as f64, 1e-12);
        let cfg = TrainConfig { total_samples: 40, seed: 17, ..tiny_config() };
        let run = |workers| {
            let mut sink = MemorySink::default();
            train(&TrainConfig { workers, ..cfg.clone() }, &env, &[0.0; 4], &reward, &mut sink).unwrap();
            sink.samples
        };
        let a = run(1);
        assert_eq!(a, run(1));
        assert_eq!(a, run(3));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { n_update: 0, ..tiny_config() }.validate().is_err());
        assert!(TrainConfig { total_samples: 5, ..tiny_config() }.validate().is_err());
        assert!(TrainConfig { lr_log_z: Some(-1.0), ..tiny_config() }.validate().is_err());
        assert!(tiny_config().validate().is_ok());
    }

    #[test]
    fn resume_continues_the_same_stream() {
        let g = CommutGraph::from_edges(3, &[(0, 1), (1, 2)], Scheme::Fc, true);
        let env = ColoringEnv::new(&g, BoundMode::Fixed(2)).unwrap();
        let reward = FnReward::new(|c: &Coloring| 1.0 + c.colors()[1] as f64, 1e-12);
        let cfg = TrainConfig { total_samples: 30, checkpoint_every: 1, ..tiny_config() };
        let mut full = MemorySink::default();
        train(&cfg, &env, &[0.0; 3], &reward, &mut full).unwrap();

        let ck = full.checkpoints[0].clone();
        let mut rest = MemorySink::default();
        Trainer::from_checkpoint(cfg, &ck).unwrap().run(&env, &[0.0; 3], &reward, &mut rest).unwrap();
        assert_eq!(&full.samples[10..], &rest.samples[..]);
    }

    #[test]
    fn warm_start_sets_log_z_to_the_batch_estimate() {
        let g = CommutGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3)], Scheme::Fc, true);
        let env = ColoringEnv::new(&g, BoundMode::Fixed(3)).unwrap();
        let reward = FnReward::new(|c: &Coloring| 2.0 + c.colors()[0] as f64, 1e-12);
        let lr = 1e-9;
        let cfg = TrainConfig { warm_start_log_z: true, lr_log_z: Some(lr), ..tiny_config() };
        let mut sink = MemorySink::default();
        let out = train(&cfg, &env, &[0.0; 4], &reward, &mut sink).unwrap();
        let mean = sink.samples.iter().map(|r| r.reward.ln() - r.logpf).sum::<f64>() / sink.samples.len() as f64;
        assert!((out.params.log_z() - mean).abs() <= 2.0 * lr);
    }

    #[test]
    fn top_k_keeps_distinct_partitions_in_order() {
        let mut t = TopKTracker::new(2);
        let a = Coloring::from_colors(vec![1, 2]);
        let a_relabel = Coloring::from_colors(vec![2, 1]);
        let b = Coloring::from_colors(vec![1, 1]);
        assert!(t.offer_coloring(&a, 0.5, 0));
        assert!(!t.offer_coloring(&a_relabel, 0.5, 1));
        assert!(t.offer_coloring(&b, 0.7, 2));
        assert_eq!(t.entries().len(), 2);
        assert_eq!(t.best().unwrap().eps2m, 0.5);
        let c = Coloring::from_colors(vec![1, 3]);
        // Same partition as `a`, different ids.
        assert!(!t.offer_coloring(&c, 0.5, 3));
        let s = t.summary().unwrap();
        assert!((s.mean - 0.6).abs() < 1e-12);
        assert!((s.std - 0.1).abs() < 1e-12);
    }

    #[test]
    fn pareto_examples() {
        assert_eq!(pareto_front(&[(1.0, 3), (2.0, 2), (3.0, 1)]), vec![0, 1, 2]);
        assert_eq!(pareto_front(&[(2.0, 2), (1.0, 1)]), vec![1]);
        assert!(pareto_front(&[]).is_empty());
        assert_eq!(pareto_front(&[(1.0, 2), (1.0, 2), (1.0, 3)]), vec![0, 1]);
        assert_eq!(pareto_front(&[(1.0, 2), (1.0, 1)]), vec![1]);
    }
}
