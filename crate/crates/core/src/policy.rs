//! GINE flow policy: color embedding (plus the term coefficient for the
//! weighted variant and a current-node indicator), two GINE layers with
//! edge feature −1, global add pooling and a two-layer MLP over `K` colors.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Var};
use crate::env::{ActionMask, ColorPolicy, ColoringEnv, EnvError, EnvState};
use crate::optim::Adam;

/// Scalar edge feature broadcast over channels.
pub const EDGE_FEATURE: f64 = -1.0;
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("checkpoint block `{name}` has shape {found:?}, expected {expected:?}")]
    Shape { name: String, expected: (usize, usize), found: (usize, usize) },
    #[error("checkpoint blocks {found:?} do not match the architecture {expected:?}")]
    Blocks { expected: Vec<String>, found: Vec<String> },
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("invalid policy configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub emb_d: usize,
    pub hidden_d: usize,
    /// Number of colors, the width of the output layer.
    pub k: u32,
    /// Append each term's coefficient to its node features.
    pub use_weights: bool,
    /// Allocate backward-policy parameters.
    pub learned_backward: bool,
}

impl PolicyConfig {
    pub fn new(k: u32) -> Self {
        PolicyConfig { emb_d: 2, hidden_d: 64, k, use_weights: true, learned_backward: false }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.emb_d == 0 || self.hidden_d == 0 || self.k == 0 {
            return Err(PolicyError::Config("emb_d, hidden_d and k must be positive".into()));
        }
        Ok(())
    }

    /// Width of the input node features.
    pub fn input_d(&self) -> usize {
        self.emb_d + usize::from(self.use_weights) + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mlp {
    pub w1: Block,
    pub b1: Block,
    pub w2: Block,
    pub b2: Block,
}

/// Offsets of every parameter block inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub embedding: Block,
    pub gine: [Mlp; 2],
    pub head: Mlp,
    pub log_z: Block,
    pub backward: Option<Block>,
    pub total: usize,
}

impl Layout {
    pub fn new(c: &PolicyConfig) -> Self {
        let mut offset = 0;
        let mut block = |rows: usize, cols: usize| {
            let b = Block { offset, rows, cols };
            offset += rows * cols;
            b
        };
        let (h, k) = (c.hidden_d, c.k as usize);
        let embedding = block(k + 1, c.emb_d);
        let mut mlp = |inp: usize, out: usize| Mlp {
            w1: block(inp, h),
            b1: block(1, h),
            w2: block(h, out),
            b2: block(1, out),
        };
        let gine = [mlp(c.input_d(), h), mlp(h, h)];
        let head = mlp(h, k);
        let log_z = block(1, 1);
        let backward = c.learned_backward.then(|| block(1, 1));
        Layout { embedding, gine, head, log_z, backward, total: offset }
    }

    /// Block names and shapes in declaration order.
    pub fn named_blocks(&self) -> Vec<(String, Block)> {
        let mut out = vec![("embedding".to_string(), self.embedding)];
        let mlps = [("gine0", &self.gine[0]), ("gine1", &self.gine[1]), ("head", &self.head)];
        for (prefix, m) in mlps {
            for (name, b) in [("w1", m.w1), ("b1", m.b1), ("w2", m.w2), ("b2", m.b2)] {
                out.push((format!("{prefix}.{name}"), b));
            }
        }
        out.push(("log_z".to_string(), self.log_z));
        if let Some(b) = self.backward {
            out.push(("backward".to_string(), b));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    config: PolicyConfig,
    layout: Layout,
    values: Vec<f64>,
}

impl PolicyParams {
    /// Affine weights uniform in `±1/√fan_in`, biases zero, embedding
    /// standard normal, `log Z = 0`.
    pub fn init(config: PolicyConfig, seed: u64) -> Result<Self, PolicyError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut values = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut values[layout.embedding.range()] {
            *v = StandardNormal.sample(&mut rng);
        }
        for m in layout.gine.iter().chain(std::iter::once(&layout.head)) {
            for w in [m.w1, m.w2] {
                let a = 1.0 / (w.rows as f64).sqrt();
                let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
                for v in &mut values[w.range()] {
                    *v = dist.sample(&mut rng);
                }
            }
        }
        Ok(PolicyParams { config, layout, values })
    }

    pub fn from_values(config: PolicyConfig, values: Vec<f64>) -> Result<Self, PolicyError> {
        config.validate()?;
        let layout = Layout::new(&config);
        if values.len() != layout.total {
            return Err(PolicyError::Shape {
                name: "flat".into(),
                expected: (layout.total, 1),
                found: (values.len(), 1),
            });
        }
        Ok(PolicyParams { config, layout, values })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn log_z(&self) -> f64 {
        self.values[self.layout.log_z.offset]
    }

    pub fn set_log_z(&mut self, v: f64) {
        self.values[self.layout.log_z.offset] = v;
    }

    pub fn log_z_index(&self) -> usize {
        self.layout.log_z.offset
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Everything the network sees about a state.
#[derive(Debug, Clone, Copy)]
pub struct PolicyInput<'a> {
    pub colors: &'a [u32],
    /// Node being colored at this step.
    pub current: usize,
    /// Term coefficients, used when `use_weights` is set.
    pub coeffs: &'a [f64],
    /// Legal colors, indexed by `color - 1`.
    pub mask: &'a [bool],
}

fn mlp_on_tape(tape: &mut Tape, x: Var, m: &Mlp) -> Result<Var, AutodiffError> {
    let w1 = tape.param(m.w1.offset, m.w1.rows, m.w1.cols);
    let b1 = tape.param(m.b1.offset, 1, m.b1.cols);
    let w2 = tape.param(m.w2.offset, m.w2.rows, m.w2.cols);
    let b2 = tape.param(m.b2.offset, 1, m.b2.cols);
    let h = tape.matmul(x, w1)?;
    let h = tape.add_row(h, b1)?;
    let h = tape.relu(h);
    let o = tape.matmul(h, w2)?;
    tape.add_row(o, b2)
}

/// One GINE update, `h_θ(x_i + Σ_{j∈N(i)} relu(x_j + e))`, on the tape's graph.
pub fn gine_layer(tape: &mut Tape, x: Var, m: &Mlp, edge: f64) -> Result<Var, AutodiffError> {
    let agg = tape.gine_aggregate(x, edge)?;
    mlp_on_tape(tape, agg, m)
}

/// Builds the forward pass on `tape` (which must carry the graph) and
/// returns the `1 × K` masked log-probabilities.
pub fn forward_on_tape(tape: &mut Tape, params: &PolicyParams, input: &PolicyInput) -> Result<Var, AutodiffError> {
    let c = &params.config;
    let l = &params.layout;
    let n = input.colors.len();
    let emb = tape.param(l.embedding.offset, l.embedding.rows, l.embedding.cols);
    let x = tape.gather(emb, input.colors);
    let extra_d = usize::from(c.use_weights) + 1;
    let mut extra = Vec::with_capacity(n * extra_d);
    for i in 0..n {
        if c.use_weights {
            extra.push(input.coeffs[i]);
        }
        extra.push(if i == input.current { 1.0 } else { 0.0 });
    }
    let extra = tape.constant(n, extra_d, extra);
    let x = tape.concat_cols(x, extra)?;
    let x = gine_layer(tape, x, &l.gine[0], EDGE_FEATURE)?;
    let x = tape.relu(x);
    let x = gine_layer(tape, x, &l.gine[1], EDGE_FEATURE)?;
    let pooled = tape.sum_rows(x);
    let logits = mlp_on_tape(tape, pooled, &l.head)?;
    tape.masked_log_softmax(logits, input.mask)
}

/// Log-probabilities without gradient bookkeeping.
pub fn forward_log_probs(
    params: &PolicyParams,
    adjacency: &[Vec<u32>],
    input: &PolicyInput,
) -> Result<Vec<f64>, AutodiffError> {
    let mut tape = Tape::with_graph(params.values(), adjacency);
    let out = forward_on_tape(&mut tape, params, input)?;
    Ok(tape.value(out).to_vec())
}

/// Log-probability of the single parent under the learned backward policy.
/// The fixed node order leaves exactly one parent per state, so this is a
/// log-softmax over one score and is identically zero.
pub fn backward_on_tape(tape: &mut Tape, params: &PolicyParams) -> Option<Var> {
    let b = params.layout.backward?;
    let score = tape.param(b.offset, 1, 1);
    let lp = tape.masked_log_softmax(score, &[true]).expect("one unmasked parent");
    Some(tape.pick(lp, 0))
}

/// [`ColorPolicy`] backed by a [`PolicyParams`] snapshot. When gradient
/// tracking is on, it accumulates `∇(Σ log P_F − Σ log P_B)` of the
/// trajectory being sampled.
pub struct GnnPolicy<'a> {
    params: &'a PolicyParams,
    adjacency: &'a [Vec<u32>],
    coeffs: &'a [f64],
    grad: Option<Vec<f64>>,
    pending: Option<(Tape<'a>, Var)>,
}

impl<'a> GnnPolicy<'a> {
    pub fn new(params: &'a PolicyParams, adjacency: &'a [Vec<u32>], coeffs: &'a [f64]) -> Self {
        GnnPolicy { params, adjacency, coeffs, grad: None, pending: None }
    }

    pub fn with_gradients(mut self) -> Self {
        self.grad = Some(vec![0.0; self.params.len()]);
        self
    }

    pub fn take_gradient(&mut self) -> Option<Vec<f64>> {
        let n = self.params.len();
        self.grad.as_mut().map(|g| std::mem::replace(g, vec![0.0; n]))
    }
}

impl ColorPolicy for GnnPolicy<'_> {
    fn log_probs(&mut self, _env: &ColoringEnv, s: &EnvState, mask: &ActionMask) -> Result<Vec<f64>, EnvError> {
        let input = PolicyInput {
            colors: s.coloring.colors(),
            current: s.step,
            coeffs: self.coeffs,
            mask: mask.as_slice(),
        };
        let mut tape = Tape::with_graph(self.params.values(), self.adjacency);
        let out = forward_on_tape(&mut tape, self.params, &input)?;
        let lp = tape.value(out).to_vec();
        if self.grad.is_some() {
            self.pending = Some((tape, out));
        }
        Ok(lp)
    }

    fn commit(&mut self, action: usize) -> Result<(), EnvError> {
        if let (Some((mut tape, out)), Some(grad)) = (self.pending.take(), self.grad.as_mut()) {
            let picked = tape.pick(out, action);
            tape.backward(picked, 1.0, grad)?;
        }
        Ok(())
    }

    fn log_pb(&mut self, _env: &ColoringEnv, _after: &EnvState) -> Result<f64, EnvError> {
        let mut tape = Tape::new(self.params.values());
        let Some(lp) = backward_on_tape(&mut tape, self.params) else { return Ok(0.0) };
        if let Some(grad) = self.grad.as_mut() {
            tape.backward(lp, -1.0, grad)?;
        }
        Ok(tape.scalar(lp))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

/// Where sampling resumes: per-sample generators are derived from the run
/// seed and the global sample index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub next_sample: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: PolicyConfig,
    pub blocks: Vec<NamedBlock>,
    pub log_z: f64,
    pub optimizer: Option<Adam>,
    pub iteration: u64,
    pub rng: Option<RngState>,
}

impl Checkpoint {
    pub fn new(params: &PolicyParams, optimizer: Option<&Adam>, iteration: u64, rng: Option<RngState>) -> Self {
        let blocks = params
            .layout
            .named_blocks()
            .into_iter()
            .map(|(name, b)| NamedBlock {
                name,
                rows: b.rows,
                cols: b.cols,
                values: params.values[b.range()].to_vec(),
            })
            .collect();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: params.config,
            blocks,
            log_z: params.log_z(),
            optimizer: optimizer.cloned(),
            iteration,
            rng,
        }
    }

    /// Rebuilds the parameters, rejecting any block whose name or shape
    /// differs from the configured architecture.
    pub fn params(&self) -> Result<PolicyParams, PolicyError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(PolicyError::Version(self.version));
        }
        self.config.validate()?;
        let layout = Layout::new(&self.config);
        let expected = layout.named_blocks();
        if expected.len() != self.blocks.len() || expected.iter().zip(&self.blocks).any(|((n, _), b)| *n != b.name) {
            return Err(PolicyError::Blocks {
                expected: expected.into_iter().map(|(n, _)| n).collect(),
                found: self.blocks.iter().map(|b| b.name.clone()).collect(),
            });
        }
        let mut values = vec![0.0; layout.total];
        for ((name, b), stored) in expected.iter().zip(&self.blocks) {
            let found = (stored.rows, stored.cols);
            if found != (b.rows, b.cols) || stored.values.len() != b.len() {
                return Err(PolicyError::Shape { name: name.clone(), expected: (b.rows, b.cols), found });
            }
            values[b.range()].copy_from_slice(&stored.values);
        }
        if let Some(opt) = &self.optimizer {
            if opt.m.len() != layout.total || opt.v.len() != layout.total {
                return Err(PolicyError::Shape {
                    name: "optimizer".into(),
                    expected: (layout.total, 1),
                    found: (opt.m.len(), 1),
                });
            }
        }
        PolicyParams::from_values(self.config, values)
    }

    pub fn to_json(&self) -> Result<String, PolicyError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, PolicyError> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        ck.params()?;
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PolicyError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PolicyError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Samples a color index from the policy for a standalone state (used by the demo and tools).
pub fn sample_color<R: Rng + ?Sized>(
    params: &PolicyParams,
    adjacency: &[Vec<u32>],
    input: &PolicyInput,
    rng: &mut R,
) -> Result<usize, AutodiffError> {
    let lp = forward_log_probs(params, adjacency, input)?;
    crate::env::sample_categorical(&lp, rng).ok_or(AutodiffError::AllMasked)
}
