//! Multi-task scorer: a shared embedding + ReLU MLP trunk feeding three
//! sigmoid heads (relevance, revenue propensity, risk), with exact reverse-mode
//! gradients.
//!
//! All parameters live in one flat vector; [`ModelShape`] fixes the layout
//! (embedding table, then each trunk layer's weights and biases, then the
//! head weights and biases). Gradients share that layout so optimizers and
//! finite-difference checks can treat parameters as a plain slice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::simulator::{sigmoid, Example};

pub const N_TASKS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Relevance,
    Revenue,
    Risk,
}

impl Task {
    pub const ALL: [Task; N_TASKS] = [Task::Relevance, Task::Revenue, Task::Risk];

    pub fn index(self) -> usize {
        match self {
            Task::Relevance => 0,
            Task::Revenue => 1,
            Task::Risk => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Relevance => "rel",
            Task::Revenue => "rev",
            Task::Risk => "risk",
        }
    }
}

/// Per-task probabilities emitted by the heads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskScores {
    pub rel: f64,
    pub rev: f64,
    pub risk: f64,
}

impl TaskScores {
    pub fn get(&self, task: Task) -> f64 {
        match task {
            Task::Relevance => self.rel,
            Task::Revenue => self.rev,
            Task::Risk => self.risk,
        }
    }

    fn from_array(a: [f64; N_TASKS]) -> Self {
        TaskScores {
            rel: a[0],
            rev: a[1],
            risk: a[2],
        }
    }
}

/// Weights of the linear combiner producing the final ranking score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Combiner {
    pub rel: f64,
    pub rev: f64,
    pub risk: f64,
}

impl Default for Combiner {
    fn default() -> Self {
        Combiner {
            rel: 1.0,
            rev: 1.0,
            risk: 1.0,
        }
    }
}

impl Combiner {
    /// Partial derivatives of the final score w.r.t. `(s_rel, s_rev, s_risk)`.
    pub fn partials(&self) -> [f64; N_TASKS] {
        [self.rel, self.rev, -self.risk]
    }
}

/// `w_rel * s_rel + w_rev * s_rev - w_risk * s_risk`.
pub fn final_ranking_score(scores: &TaskScores, combiner: &Combiner) -> f64 {
    combiner.rel * scores.rel + combiner.rev * scores.rev - combiner.risk * scores.risk
}

/// Indices sorted by descending score, ties broken by ascending id.
pub fn rank_order(scores: &[f64], ids: &[u64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(ids[a].cmp(&ids[b])));
    order
}

/// Borrowed model input.
#[derive(Debug, Clone, Copy)]
pub struct Features<'a> {
    pub dense: &'a [f64],
    pub cats: &'a [u32],
}

impl<'a> From<&'a Example> for Features<'a> {
    fn from(e: &'a Example) -> Self {
        Features {
            dense: &e.dense,
            cats: &e.cats,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelShape {
    pub n_dense: usize,
    pub n_cats: usize,
    /// Ids per categorical slot; each slot gets its own block of rows.
    pub vocab: usize,
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
}

impl Default for ModelShape {
    fn default() -> Self {
        ModelShape {
            n_dense: 8,
            n_cats: 6,
            vocab: 100,
            embed_dim: 16,
            hidden: vec![32, 16],
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    inputs: usize,
    outputs: usize,
    weights: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    embedding: usize,
    trunk: Vec<Dense>,
    head: Dense,
    len: usize,
}

impl ModelShape {
    pub fn input_dim(&self) -> usize {
        self.n_dense + self.n_cats * self.embed_dim
    }

    fn layout(&self) -> Layout {
        let mut offset = self.n_cats * self.vocab * self.embed_dim;
        let mut inputs = self.input_dim();
        let mut trunk = Vec::with_capacity(self.hidden.len());
        for &outputs in &self.hidden {
            let weights = offset;
            let bias = weights + outputs * inputs;
            offset = bias + outputs;
            trunk.push(Dense {
                inputs,
                outputs,
                weights,
                bias,
            });
            inputs = outputs;
        }
        let head = Dense {
            inputs,
            outputs: N_TASKS,
            weights: offset,
            bias: offset + N_TASKS * inputs,
        };
        Layout {
            embedding: 0,
            trunk,
            head,
            len: head.bias + N_TASKS,
        }
    }

    pub fn num_params(&self) -> usize {
        self.layout().len
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_dense + self.n_cats == 0 {
            return Err(Error::config("model", "needs at least one feature"));
        }
        if self.n_cats > 0 && (self.vocab == 0 || self.embed_dim == 0) {
            return Err(Error::config("model.vocab", "vocab and embed_dim must be positive"));
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::config("model.hidden", "layer widths must be positive"));
        }
        Ok(())
    }
}

/// All learnable parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    shape: ModelShape,
    values: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(shape: ModelShape) -> Result<Self> {
        shape.validate()?;
        let layout = shape.layout();
        Ok(ModelParams {
            values: vec![0.0; layout.len],
            shape,
        })
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for every dense layer;
    /// embedding rows use `fan_in = embed_dim`.
    pub fn init(shape: ModelShape, seed: u64) -> Result<Self> {
        use rand::Rng;
        let mut p = Self::zeros(shape)?;
        let mut rng = rng::stream(seed, "model-init");
        let layout = p.shape.layout();
        let emb_len = p.shape.n_cats * p.shape.vocab * p.shape.embed_dim;
        let bound = 1.0 / (p.shape.embed_dim.max(1) as f64).sqrt();
        for v in &mut p.values[layout.embedding..layout.embedding + emb_len] {
            *v = rng.gen_range(-bound..=bound);
        }
        for layer in layout.trunk.iter().chain(std::iter::once(&layout.head)) {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            let end = layer.bias + layer.outputs;
            for v in &mut p.values[layer.weights..end] {
                *v = rng.gen_range(-bound..=bound);
            }
        }
        Ok(p)
    }

    pub fn from_values(shape: ModelShape, values: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        let layout = shape.layout();
        if values.len() != layout.len {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters for shape, found {}",
                layout.len,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(ModelParams { shape, values })
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
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

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Names the parameter group owning flat index `i`.
    pub fn describe_index(&self, i: usize) -> String {
        let layout = self.shape.layout();
        for (l, layer) in layout.trunk.iter().enumerate() {
            if (layer.weights..layer.bias).contains(&i) {
                return format!("trunk[{l}].weight");
            }
            if (layer.bias..layer.bias + layer.outputs).contains(&i) {
                return format!("trunk[{l}].bias");
            }
        }
        if (layout.head.weights..layout.head.bias).contains(&i) {
            return "head.weight".into();
        }
        if i >= layout.head.bias {
            return "head.bias".into();
        }
        "embedding".into()
    }

    fn check_input(&self, f: &Features<'_>) -> Result<()> {
        if f.dense.len() != self.shape.n_dense {
            return Err(Error::FeatureShape {
                what: "dense features",
                expected: self.shape.n_dense,
                got: f.dense.len(),
            });
        }
        if f.cats.len() != self.shape.n_cats {
            return Err(Error::FeatureShape {
                what: "categorical features",
                expected: self.shape.n_cats,
                got: f.cats.len(),
            });
        }
        if let Some((slot, &id)) = f
            .cats
            .iter()
            .enumerate()
            .find(|(_, &id)| id as usize >= self.shape.vocab)
        {
            return Err(Error::OutOfVocab {
                slot,
                id,
                vocab: self.shape.vocab,
            });
        }
        Ok(())
    }
}

/// Logits and sigmoid scores of the three heads for one row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadOutput {
    pub logits: [f64; N_TASKS],
    pub scores: [f64; N_TASKS],
}

impl HeadOutput {
    pub fn task_scores(&self) -> TaskScores {
        TaskScores::from_array(self.scores)
    }
}

/// A scalar loss over a batch of head outputs, returning the gradient with
/// respect to each row's logits.
pub trait BatchLoss {
    fn evaluate(&self, outputs: &[HeadOutput]) -> Result<(f64, Vec<[f64; N_TASKS]>)>;
}

impl<F> BatchLoss for F
where
    F: Fn(&[HeadOutput]) -> Result<(f64, Vec<[f64; N_TASKS]>)>,
{
    fn evaluate(&self, outputs: &[HeadOutput]) -> Result<(f64, Vec<[f64; N_TASKS]>)> {
        self(outputs)
    }
}

/// Per-parameter partial derivatives, laid out like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub values: Vec<f64>,
}

impl GradientBundle {
    pub fn zeros_like(params: &ModelParams) -> Self {
        GradientBundle {
            values: vec![0.0; params.len()],
        }
    }

    pub fn add_assign(&mut self, other: &GradientBundle) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Activations kept for the backward pass, one flat buffer per layer.
struct Tape {
    inputs: Vec<f64>,
    hidden: Vec<Vec<f64>>,
    outputs: Vec<HeadOutput>,
}

fn check_finite(values: &[f64], layer: impl FnOnce() -> String) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(layer()))
    }
}

fn run_forward(params: &ModelParams, rows: &[Features<'_>]) -> Result<Tape> {
    let shape = &params.shape;
    let layout = params.shape.layout();
    let v = &params.values;
    let in_dim = shape.input_dim();
    let n = rows.len();

    let mut inputs = vec![0.0; n * in_dim];
    for (r, f) in rows.iter().enumerate() {
        params.check_input(f)?;
        let x = &mut inputs[r * in_dim..(r + 1) * in_dim];
        x[..shape.n_dense].copy_from_slice(f.dense);
        for (slot, &id) in f.cats.iter().enumerate() {
            let row = (slot * shape.vocab + id as usize) * shape.embed_dim;
            let dst = shape.n_dense + slot * shape.embed_dim;
            x[dst..dst + shape.embed_dim]
                .copy_from_slice(&v[layout.embedding + row..layout.embedding + row + shape.embed_dim]);
        }
    }
    check_finite(&inputs, || "input layer (features or embedding)".into())?;

    let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(layout.trunk.len());
    for (l, layer) in layout.trunk.iter().enumerate() {
        let prev: &[f64] = if l == 0 { &inputs } else { &hidden[l - 1] };
        let mut out = vec![0.0; n * layer.outputs];
        for r in 0..n {
            let x = &prev[r * layer.inputs..(r + 1) * layer.inputs];
            let y = &mut out[r * layer.outputs..(r + 1) * layer.outputs];
            for (j, yj) in y.iter_mut().enumerate() {
                let w = &v[layer.weights + j * layer.inputs..layer.weights + (j + 1) * layer.inputs];
                let z = v[layer.bias + j] + dot(w, x);
                *yj = z.max(0.0);
            }
        }
        check_finite(&out, || format!("trunk layer {l}"))?;
        hidden.push(out);
    }

    let head = layout.head;
    let last: &[f64] = hidden.last().map(|h| h.as_slice()).unwrap_or(&inputs);
    let mut outputs = Vec::with_capacity(n);
    for r in 0..n {
        let x = &last[r * head.inputs..(r + 1) * head.inputs];
        let mut logits = [0.0; N_TASKS];
        let mut scores = [0.0; N_TASKS];
        for t in 0..N_TASKS {
            let w = &v[head.weights + t * head.inputs..head.weights + (t + 1) * head.inputs];
            logits[t] = v[head.bias + t] + dot(w, x);
            scores[t] = sigmoid(logits[t]);
        }
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("output heads".into()));
        }
        outputs.push(HeadOutput { logits, scores });
    }
    Ok(Tape {
        inputs,
        hidden,
        outputs,
    })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Head outputs for a batch of rows.
pub fn forward_batch(params: &ModelParams, rows: &[Features<'_>]) -> Result<Vec<HeadOutput>> {
    Ok(run_forward(params, rows)?.outputs)
}

/// Scores for one row.
pub fn forward(params: &ModelParams, features: Features<'_>) -> Result<TaskScores> {
    Ok(forward_batch(params, &[features])?[0].task_scores())
}

/// Loss value and exact gradient of `loss` composed with the network.
pub fn backward(
    params: &ModelParams,
    rows: &[Features<'_>],
    loss: &impl BatchLoss,
) -> Result<(f64, GradientBundle)> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("backward batch"));
    }
    let tape = run_forward(params, rows)?;
    let (value, dlogits) = loss.evaluate(&tape.outputs)?;
    if !value.is_finite() {
        return Err(Error::NonFinite("loss value".into()));
    }
    if dlogits.len() != rows.len() {
        return Err(Error::LengthMismatch {
            what: "logit gradients vs rows",
            left: dlogits.len(),
            right: rows.len(),
        });
    }
    let grad = backprop(params, rows, &tape, &dlogits)?;
    Ok((value, grad))
}

fn backprop(
    params: &ModelParams,
    rows: &[Features<'_>],
    tape: &Tape,
    dlogits: &[[f64; N_TASKS]],
) -> Result<GradientBundle> {
    let shape = &params.shape;
    let layout = params.shape.layout();
    let v = &params.values;
    let mut g = vec![0.0; v.len()];
    let n = rows.len();
    let head = layout.head;
    let last: &[f64] = tape.hidden.last().map(|h| h.as_slice()).unwrap_or(&tape.inputs);

    let mut delta = vec![0.0; head.inputs];
    let mut next_delta: Vec<f64> = Vec::new();
    for r in 0..n {
        let d = &dlogits[r];
        if d.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("loss gradient at row {r}")));
        }
        let x = &last[r * head.inputs..(r + 1) * head.inputs];
        delta.iter_mut().for_each(|x| *x = 0.0);
        for t in 0..N_TASKS {
            if d[t] == 0.0 {
                continue;
            }
            g[head.bias + t] += d[t];
            let base = head.weights + t * head.inputs;
            for i in 0..head.inputs {
                g[base + i] += d[t] * x[i];
                delta[i] += d[t] * v[base + i];
            }
        }

        for l in (0..layout.trunk.len()).rev() {
            let layer = layout.trunk[l];
            let out = &tape.hidden[l][r * layer.outputs..(r + 1) * layer.outputs];
            let prev: &[f64] = if l == 0 {
                &tape.inputs[r * layer.inputs..(r + 1) * layer.inputs]
            } else {
                &tape.hidden[l - 1][r * layer.inputs..(r + 1) * layer.inputs]
            };
            next_delta.clear();
            next_delta.resize(layer.inputs, 0.0);
            for j in 0..layer.outputs {
                // ReLU derivative: active iff the output is positive.
                if out[j] <= 0.0 {
                    continue;
                }
                let dz = delta[j];
                if dz == 0.0 {
                    continue;
                }
                g[layer.bias + j] += dz;
                let base = layer.weights + j * layer.inputs;
                for i in 0..layer.inputs {
                    g[base + i] += dz * prev[i];
                    next_delta[i] += dz * v[base + i];
                }
            }
            std::mem::swap(&mut delta, &mut next_delta);
        }

        for (slot, &id) in rows[r].cats.iter().enumerate() {
            let row = layout.embedding + (slot * shape.vocab + id as usize) * shape.embed_dim;
            let src = shape.n_dense + slot * shape.embed_dim;
            for c in 0..shape.embed_dim {
                g[row + c] += delta[src + c];
            }
        }
    }
    if g.iter().any(|x| !x.is_finite()) {
        let i = g.iter().position(|x| !x.is_finite()).unwrap();
        return Err(Error::NonFinite(format!("gradient of {}", params.describe_index(i))));
    }
    Ok(GradientBundle { values: g })
}

/// Self-describing checkpoint document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub num_params: usize,
    pub shape: ModelShape,
    pub values: Vec<f64>,
}

pub const CHECKPOINT_FORMAT: &str = "calicausal-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

impl ModelParams {
    pub fn to_checkpoint_json(&self) -> Result<String> {
        if !self.is_finite() {
            return Err(Error::NonFinite("model parameters".into()));
        }
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            num_params: self.values.len(),
            shape: self.shape.clone(),
            values: self.values.clone(),
        };
        Ok(serde_json::to_string(&ck)?)
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        if ck.num_params != ck.values.len() {
            return Err(Error::Checkpoint("num_params does not match values".into()));
        }
        Self::from_values(ck.shape, ck.values)
    }
}
