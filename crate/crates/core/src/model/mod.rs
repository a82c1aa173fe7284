//! SPOTER: a Transformer encoder over flattened pose frames and a decoder
//! driven by a single learnable classification query, followed by an MLP
//! head producing class logits.
//!
//! Layer layout (post-norm, as in the classic Transformer):
//!
//! ```text
//! h = x + pos[0..T]
//! encoder layer:  h = LN(h + MHA(h, h));  h = LN(h + FF(h))
//! memory = LN_enc(h)
//! q = class_query
//! decoder layer:  q = LN(q + MHA(q, memory));  q = LN(q + FF(q))
//! q = LN_dec(q)
//! logits = W2 · relu(W1 · q + b1) + b2
//! ```
//!
//! The decoder has no self-attention: with one query token it reduces to a
//! fixed linear map of the query.

mod checkpoint;

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, Checkpoint, MAGIC};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::{DiffError, Graph, Tensor, Var};
use crate::pose_data::FRAME_DIM;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("sequence has {len} frames, model supports at most {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("input rows have width {found}, model expects {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("k = {k} outside 1..={n}")]
    InvalidK { k: usize, n: usize },
    #[error("parameter {name}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error("checkpoint truncated: {0}")]
    Truncated(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpoterConfig {
    pub input_dim: usize,
    pub num_classes: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub max_frames: usize,
    pub dropout_rate: f64,
    pub layer_norm_eps: f64,
}

impl SpoterConfig {
    /// Default architecture for `num_classes` classes over 242-dim frames.
    pub fn new(num_classes: usize) -> Self {
        Self {
            input_dim: FRAME_DIM,
            num_classes,
            encoder_layers: 6,
            decoder_layers: 6,
            heads: 11,
            ff_dim: 1024,
            max_frames: 256,
            dropout_rate: 0.0,
            layer_norm_eps: 1e-5,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.input_dim / self.heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.input_dim == 0 {
            return bad("input_dim must be positive".into());
        }
        if self.num_classes < 2 {
            return bad(format!("num_classes must be >= 2, got {}", self.num_classes));
        }
        if self.heads == 0 || self.input_dim % self.heads != 0 {
            return bad(format!("heads ({}) must divide input_dim ({})", self.heads, self.input_dim));
        }
        if self.ff_dim == 0 {
            return bad("ff_dim must be positive".into());
        }
        if self.max_frames == 0 {
            return bad("max_frames must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if !(self.layer_norm_eps > 0.0) {
            return bad("layer_norm_eps must be positive".into());
        }
        Ok(())
    }

    /// Ordered `(name, shape)` list of every learnable array.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let d = self.input_dim;
        let mut specs = vec![
            ParamSpec::new("pos_encoding", &[self.max_frames, d], ParamKind::Embedding),
            ParamSpec::new("class_query", &[1, d], ParamKind::Embedding),
        ];
        let attn = |specs: &mut Vec<ParamSpec>, p: &str| {
            for proj in ["q", "k", "v", "o"] {
                specs.push(ParamSpec::new(&format!("{p}.w{proj}"), &[d, d], ParamKind::Weight));
                specs.push(ParamSpec::new(&format!("{p}.b{proj}"), &[d], ParamKind::Bias));
            }
        };
        let norm = |specs: &mut Vec<ParamSpec>, p: &str| {
            specs.push(ParamSpec::new(&format!("{p}.gain"), &[d], ParamKind::NormGain));
            specs.push(ParamSpec::new(&format!("{p}.bias"), &[d], ParamKind::Bias));
        };
        let ff = |specs: &mut Vec<ParamSpec>, p: &str| {
            specs.push(ParamSpec::new(&format!("{p}.w1"), &[d, self.ff_dim], ParamKind::Weight));
            specs.push(ParamSpec::new(&format!("{p}.b1"), &[self.ff_dim], ParamKind::Bias));
            specs.push(ParamSpec::new(&format!("{p}.w2"), &[self.ff_dim, d], ParamKind::Weight));
            specs.push(ParamSpec::new(&format!("{p}.b2"), &[d], ParamKind::Bias));
        };
        for l in 0..self.encoder_layers {
            attn(&mut specs, &format!("encoder.{l}.attn"));
            norm(&mut specs, &format!("encoder.{l}.norm1"));
            ff(&mut specs, &format!("encoder.{l}.ff"));
            norm(&mut specs, &format!("encoder.{l}.norm2"));
        }
        norm(&mut specs, "encoder.norm");
        for l in 0..self.decoder_layers {
            attn(&mut specs, &format!("decoder.{l}.cross_attn"));
            norm(&mut specs, &format!("decoder.{l}.norm1"));
            ff(&mut specs, &format!("decoder.{l}.ff"));
            norm(&mut specs, &format!("decoder.{l}.norm2"));
        }
        norm(&mut specs, "decoder.norm");
        specs.push(ParamSpec::new("head.w1", &[d, d], ParamKind::Weight));
        specs.push(ParamSpec::new("head.b1", &[d], ParamKind::Bias));
        specs.push(ParamSpec::new("head.w2", &[d, self.num_classes], ParamKind::Weight));
        specs.push(ParamSpec::new("head.b2", &[self.num_classes], ParamKind::Bias));
        specs
    }

    /// `param_specs().len()` without building the list; `None` on overflow.
    pub fn param_array_count(&self) -> Option<usize> {
        // per layer: 8 attention arrays, 4 feed-forward, 2 × 2 norm
        self.encoder_layers
            .checked_add(self.decoder_layers)?
            .checked_mul(16)?
            .checked_add(10)
    }

    pub fn param_count(&self) -> usize {
        self.param_specs().iter().map(|s| s.shape.iter().product::<usize>()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Embedding,
    Weight,
    Bias,
    NormGain,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
}

impl ParamSpec {
    fn new(name: &str, shape: &[usize], kind: ParamKind) -> Self {
        Self {
            name: name.to_owned(),
            shape: shape.to_vec(),
            kind,
        }
    }
}

/// Weight initialization scheme.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// Every learnable value i.i.d. from U[0, 1), layer-norm parameters included.
    #[default]
    Faithful,
    /// Xavier-uniform weights, zero biases, unit norm gains, U(-0.1, 0.1)
    /// positional encoding and query.
    Standard,
}

impl std::str::FromStr for InitMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "faithful" => Ok(Self::Faithful),
            "standard" => Ok(Self::Standard),
            other => Err(format!("unknown init mode {other:?} (expected faithful|standard)")),
        }
    }
}

/// All learnable arrays, in [`SpoterConfig::param_specs`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct SpoterParams {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl SpoterParams {
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &mut self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

#[derive(Clone, Debug)]
pub struct Spoter {
    cfg: SpoterConfig,
    params: SpoterParams,
}

/// Parameter handles on a graph, resolved by position.
struct Bound<'a> {
    vars: &'a [Var],
    next: usize,
}

impl Bound<'_> {
    fn take(&mut self) -> Var {
        let v = self.vars[self.next];
        self.next += 1;
        v
    }
}

struct AttnVars {
    wq: Var,
    bq: Var,
    wk: Var,
    bk: Var,
    wv: Var,
    bv: Var,
    wo: Var,
    bo: Var,
}

impl AttnVars {
    fn take(b: &mut Bound<'_>) -> Self {
        Self {
            wq: b.take(),
            bq: b.take(),
            wk: b.take(),
            bk: b.take(),
            wv: b.take(),
            bv: b.take(),
            wo: b.take(),
            bo: b.take(),
        }
    }
}

impl Spoter {
    pub fn init<R: Rng + ?Sized>(cfg: SpoterConfig, mode: InitMode, rng: &mut R) -> Result<Self, ModelError> {
        cfg.validate()?;
        let specs = cfg.param_specs();
        let mut names = Vec::with_capacity(specs.len());
        let mut tensors = Vec::with_capacity(specs.len());
        for spec in specs {
            let n: usize = spec.shape.iter().product();
            let data: Vec<f64> = match (mode, spec.kind) {
                (InitMode::Faithful, _) => (0..n).map(|_| rng.gen::<f64>()).collect(),
                (InitMode::Standard, ParamKind::Weight) => {
                    let a = (6.0 / (spec.shape[0] + spec.shape[1]) as f64).sqrt();
                    (0..n).map(|_| rng.gen_range(-a..a)).collect()
                }
                (InitMode::Standard, ParamKind::Embedding) => (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect(),
                (InitMode::Standard, ParamKind::Bias) => vec![0.0; n],
                (InitMode::Standard, ParamKind::NormGain) => vec![1.0; n],
            };
            tensors.push(Tensor::new(spec.shape, data)?);
            names.push(spec.name);
        }
        Ok(Self {
            cfg,
            params: SpoterParams { names, tensors },
        })
    }

    /// Assembles a model from explicit tensors, checking every shape.
    pub fn from_tensors(cfg: SpoterConfig, tensors: Vec<Tensor>) -> Result<Self, ModelError> {
        cfg.validate()?;
        let specs = cfg.param_specs();
        if specs.len() != tensors.len() {
            return Err(ModelError::Format(format!(
                "expected {} parameter arrays, found {}",
                specs.len(),
                tensors.len()
            )));
        }
        for (spec, t) in specs.iter().zip(&tensors) {
            if spec.shape != t.shape() {
                return Err(ModelError::ShapeMismatch {
                    name: spec.name.clone(),
                    expected: spec.shape.clone(),
                    found: t.shape().to_vec(),
                });
            }
            if !t.is_finite() {
                return Err(ModelError::Format(format!("parameter {} has non-finite values", spec.name)));
            }
        }
        let names = specs.into_iter().map(|s| s.name).collect();
        Ok(Self {
            cfg,
            params: SpoterParams { names, tensors },
        })
    }

    pub fn config(&self) -> &SpoterConfig {
        &self.cfg
    }

    pub fn params(&self) -> &SpoterParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut SpoterParams {
        &mut self.params
    }

    fn check_input(&self, x: &Tensor) -> Result<(), ModelError> {
        let shape = x.shape();
        if shape.len() != 2 || shape[1] != self.cfg.input_dim {
            return Err(ModelError::WidthMismatch {
                expected: self.cfg.input_dim,
                found: *shape.last().unwrap_or(&0),
            });
        }
        if shape[0] > self.cfg.max_frames {
            return Err(ModelError::SequenceTooLong {
                len: shape[0],
                max: self.cfg.max_frames,
            });
        }
        Ok(())
    }

    fn bind<'a>(&'a self, g: &mut Graph<'a>, requires_grad: bool) -> Result<Vec<Var>, DiffError> {
        self.params
            .tensors
            .iter()
            .map(|t| g.leaf_ref(t, requires_grad))
            .collect()
    }

    /// Logits for a `T × input_dim` sequence.
    pub fn forward(&self, x: &Tensor, train_mode: bool, rng: Option<&mut dyn RngCore>) -> Result<Vec<f64>, ModelError> {
        self.check_input(x)?;
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false)?;
        let xv = g.leaf_ref(x, false)?;
        let logits = self.forward_with(&mut g, &vars, xv, train_mode, rng)?;
        Ok(g.value(logits).data().to_vec())
    }

    /// Cross-entropy loss and the gradient of every parameter, in parameter order.
    pub fn loss_and_grads(
        &self,
        x: &Tensor,
        target: usize,
        train_mode: bool,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<(f64, Vec<Tensor>), ModelError> {
        self.check_input(x)?;
        let mut g = Graph::new();
        let vars = self.bind(&mut g, true)?;
        let xv = g.leaf_ref(x, false)?;
        let logits = self.forward_with(&mut g, &vars, xv, train_mode, rng)?;
        let loss = g.cross_entropy(logits, target)?;
        let loss_value = g.value(loss).item();
        let mut grads = g.backward(loss)?;
        let out = vars
            .iter()
            .map(|&v| grads.take(v).expect("parameter leaves carry gradients"))
            .collect();
        Ok((loss_value, out))
    }

    /// Records the forward pass on `g` using `vars` as the parameter leaves
    /// (in parameter order). Returns a `1 × num_classes` logits node.
    pub fn forward_with(
        &self,
        g: &mut Graph,
        vars: &[Var],
        x: Var,
        train_mode: bool,
        mut rng: Option<&mut dyn RngCore>,
    ) -> Result<Var, DiffError> {
        let cfg = &self.cfg;
        let frames = g.value(x).shape()[0];
        let dropout = if train_mode { cfg.dropout_rate } else { 0.0 };
        let mut b = Bound { vars, next: 0 };

        let pos = b.take();
        let query = b.take();
        let pos_t = g.slice_rows(pos, 0, frames)?;
        let mut h = g.add(x, pos_t)?;

        for _ in 0..cfg.encoder_layers {
            let attn = AttnVars::take(&mut b);
            let (n1g, n1b) = (b.take(), b.take());
            let ff = [b.take(), b.take(), b.take(), b.take()];
            let (n2g, n2b) = (b.take(), b.take());

            let a = self.attention(g, &attn, h, h)?;
            let a = apply_dropout(g, a, dropout, &mut rng)?;
            let r = g.add(h, a)?;
            h = g.layer_norm(r, n1g, n1b, cfg.layer_norm_eps)?;
            let f = feed_forward(g, &ff, h)?;
            let f = apply_dropout(g, f, dropout, &mut rng)?;
            let r = g.add(h, f)?;
            h = g.layer_norm(r, n2g, n2b, cfg.layer_norm_eps)?;
        }
        let (eg, eb) = (b.take(), b.take());
        let memory = g.layer_norm(h, eg, eb, cfg.layer_norm_eps)?;

        let mut q = query;
        for _ in 0..cfg.decoder_layers {
            let attn = AttnVars::take(&mut b);
            let (n1g, n1b) = (b.take(), b.take());
            let ff = [b.take(), b.take(), b.take(), b.take()];
            let (n2g, n2b) = (b.take(), b.take());

            let a = self.attention(g, &attn, q, memory)?;
            let a = apply_dropout(g, a, dropout, &mut rng)?;
            let r = g.add(q, a)?;
            q = g.layer_norm(r, n1g, n1b, cfg.layer_norm_eps)?;
            let f = feed_forward(g, &ff, q)?;
            let f = apply_dropout(g, f, dropout, &mut rng)?;
            let r = g.add(q, f)?;
            q = g.layer_norm(r, n2g, n2b, cfg.layer_norm_eps)?;
        }
        let (dg, db) = (b.take(), b.take());
        let q = g.layer_norm(q, dg, db, cfg.layer_norm_eps)?;

        let (w1, b1, w2, b2) = (b.take(), b.take(), b.take(), b.take());
        let hidden = g.linear(q, w1, b1)?;
        let hidden = g.relu(hidden)?;
        g.linear(hidden, w2, b2)
    }

    fn attention(&self, g: &mut Graph, p: &AttnVars, query: Var, kv: Var) -> Result<Var, DiffError> {
        let heads = self.cfg.heads;
        let hd = self.cfg.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let q = g.linear(query, p.wq, p.bq)?;
        let k = g.linear(kv, p.wk, p.bk)?;
        let v = g.linear(kv, p.wv, p.bv)?;
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (q, k, v)
            } else {
                let (s, e) = (h * hd, (h + 1) * hd);
                (g.slice_cols(q, s, e)?, g.slice_cols(k, s, e)?, g.slice_cols(v, s, e)?)
            };
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, scale)?;
            let weights = g.softmax(scores, 1)?;
            outs.push(g.matmul(weights, vh)?);
        }
        let merged = if heads == 1 { outs[0] } else { g.concat(&outs, 1)? };
        g.linear(merged, p.wo, p.bo)
    }
}

fn feed_forward(g: &mut Graph, p: &[Var; 4], x: Var) -> Result<Var, DiffError> {
    let h = g.linear(x, p[0], p[1])?;
    let h = g.relu(h)?;
    g.linear(h, p[2], p[3])
}

fn apply_dropout(g: &mut Graph, x: Var, rate: f64, rng: &mut Option<&mut dyn RngCore>) -> Result<Var, DiffError> {
    match rng {
        Some(r) if rate > 0.0 => g.dropout(x, rate, r),
        _ => Ok(x),
    }
}

/// Ids of the `k` largest logits, descending; ties go to the lower id.
pub fn predict_topk(logits: &[f64], k: usize) -> Result<Vec<usize>, ModelError> {
    if k == 0 || k > logits.len() {
        return Err(ModelError::InvalidK { k, n: logits.len() });
    }
    let mut ids: Vec<usize> = (0..logits.len()).collect();
    // stable sort keeps ascending ids among equal logits
    ids.sort_by(|&a, &b| logits[b].partial_cmp(&logits[a]).unwrap_or(std::cmp::Ordering::Equal));
    ids.truncate(k);
    Ok(ids)
}
