//! Dual-head message-passing classifier.
//!
//! The feature extractor is two rounds of symmetric-normalized aggregation
//! with self-loops:
//!
//! ```text
//! rep = Â · relu(Â · X · W_in) · W_hidden
//! ```
//!
//! followed by two independent affine heads over `rep`: the main head, used
//! for inference, and the pseudo head, which only ever sees leftover
//! candidate nodes during training and feeds gradients back into the
//! extractor.

use alloc::vec;
use alloc::vec::Vec;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::graph::{AdjacencyView, NormalizedAdjacency};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelParams {
    pub input_dim: usize,
    pub hidden: usize,
    pub classes: usize,
    pub seed: u64,
    /// `input_dim × hidden`
    pub w_in: Array2<f64>,
    /// `hidden × hidden`
    pub w_hidden: Array2<f64>,
    pub main_weight: Array2<f64>,
    pub main_bias: Array1<f64>,
    pub pseudo_weight: Array2<f64>,
    pub pseudo_bias: Array1<f64>,
}

/// Gradient of the training objective, shaped like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w_in: Array2<f64>,
    pub w_hidden: Array2<f64>,
    pub main_weight: Array2<f64>,
    pub main_bias: Array1<f64>,
    pub pseudo_weight: Array2<f64>,
    pub pseudo_bias: Array1<f64>,
}

macro_rules! tensor_slices {
    ($s:expr, $as:ident) => {
        [
            $s.w_in.$as().expect("contiguous"),
            $s.w_hidden.$as().expect("contiguous"),
            $s.main_weight.$as().expect("contiguous"),
            $s.main_bias.$as().expect("contiguous"),
            $s.pseudo_weight.$as().expect("contiguous"),
            $s.pseudo_bias.$as().expect("contiguous"),
        ]
    };
}

// indices into the tensor arrays
const PSEUDO_TENSORS: [usize; 2] = [4, 5];

impl ModelParams {
    pub fn tensors(&self) -> [&[f64]; 6] {
        tensor_slices!(self, as_slice)
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        tensor_slices!(self, as_slice_mut)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn check(&self) -> Result<()> {
        if self.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(())
    }
}

impl Gradients {
    fn zeros_like(p: &ModelParams) -> Self {
        Self {
            w_in: Array2::zeros(p.w_in.raw_dim()),
            w_hidden: Array2::zeros(p.w_hidden.raw_dim()),
            main_weight: Array2::zeros(p.main_weight.raw_dim()),
            main_bias: Array1::zeros(p.main_bias.raw_dim()),
            pseudo_weight: Array2::zeros(p.pseudo_weight.raw_dim()),
            pseudo_bias: Array1::zeros(p.pseudo_bias.raw_dim()),
        }
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        tensor_slices!(self, as_slice)
    }
}

/// Seeded Glorot-uniform weights, zero biases.
pub fn init_params(input_dim: usize, hidden: usize, classes: usize, seed: u64) -> Result<ModelParams> {
    if input_dim == 0 || hidden == 0 || classes == 0 {
        return Err(Error::InvalidConfig(alloc::format!(
            "model dimensions must be positive (d={input_dim}, hidden={hidden}, c={classes})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut glorot = |rows: usize, cols: usize| {
        let limit = libm::sqrt(6.0 / (rows + cols) as f64);
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        Array2::from_shape_simple_fn((rows, cols), || dist.sample(&mut rng))
    };
    let w_in = glorot(input_dim, hidden);
    let w_hidden = glorot(hidden, hidden);
    let main_weight = glorot(hidden, classes);
    let pseudo_weight = glorot(hidden, classes);
    Ok(ModelParams {
        input_dim,
        hidden,
        classes,
        seed,
        w_in,
        w_hidden,
        main_weight,
        main_bias: Array1::zeros(classes),
        pseudo_weight,
        pseudo_bias: Array1::zeros(classes),
    })
}

/// Normalized adjacency plus the cached first aggregation `Â · X`, which does
/// not depend on the parameters.
#[derive(Debug, Clone)]
pub struct Propagation {
    adjacency: NormalizedAdjacency,
    aggregated_input: Array2<f64>,
}

impl Propagation {
    pub fn new(view: &AdjacencyView, features: &Array2<f64>) -> Result<Self> {
        if view.node_count() != features.nrows() {
            return Err(Error::DimensionMismatch(alloc::format!(
                "adjacency has {} nodes, features have {} rows",
                view.node_count(),
                features.nrows()
            )));
        }
        let adjacency = view.normalized();
        let aggregated_input = adjacency.propagate(features);
        Ok(Self {
            adjacency,
            aggregated_input,
        })
    }

    pub fn node_count(&self) -> usize {
        self.aggregated_input.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Extractor output, `n × hidden`.
    pub hidden: Array2<f64>,
    /// Main-head logits `Z`.
    pub logits: Array2<f64>,
    pub pseudo_logits: Array2<f64>,
    /// Row-wise softmax of the main logits.
    pub soft: Array2<f64>,
}

struct Activations {
    pre_relu: Array2<f64>,
    aggregated_hidden: Array2<f64>,
    rep: Array2<f64>,
    logits: Array2<f64>,
}

fn check_dims(params: &ModelParams, prop: &Propagation) -> Result<()> {
    if prop.aggregated_input.ncols() != params.input_dim {
        return Err(Error::DimensionMismatch(alloc::format!(
            "features have {} columns, model expects {}",
            prop.aggregated_input.ncols(),
            params.input_dim
        )));
    }
    Ok(())
}

fn affine(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut out = x.dot(w);
    out += b;
    out
}

fn activations(params: &ModelParams, prop: &Propagation) -> Activations {
    let pre_relu = prop.aggregated_input.dot(&params.w_in);
    let relu = pre_relu.mapv(|v| v.max(0.0));
    let aggregated_hidden = prop.adjacency.propagate(&relu);
    let rep = aggregated_hidden.dot(&params.w_hidden);
    let logits = affine(&rep, &params.main_weight, &params.main_bias);
    Activations {
        pre_relu,
        aggregated_hidden,
        rep,
        logits,
    }
}

pub fn forward(params: &ModelParams, prop: &Propagation) -> Result<ForwardOutput> {
    check_dims(params, prop)?;
    let act = activations(params, prop);
    let pseudo_logits = affine(&act.rep, &params.pseudo_weight, &params.pseudo_bias);
    let soft = softmax_rows(&act.logits)?;
    Ok(ForwardOutput {
        hidden: act.rep,
        logits: act.logits,
        pseudo_logits,
        soft,
    })
}

/// Convenience wrapper building the propagation on the fly.
pub fn forward_view(params: &ModelParams, view: &AdjacencyView, features: &Array2<f64>) -> Result<ForwardOutput> {
    forward(params, &Propagation::new(view, features)?)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Result<Array2<f64>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| libm::exp(v - max));
        let sum = row.sum();
        row /= sum;
    }
    Ok(out)
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Main-head class predictions for every node.
pub fn predict(params: &ModelParams, prop: &Propagation) -> Result<Vec<usize>> {
    check_dims(params, prop)?;
    let act = activations(params, prop);
    Ok(act.logits.rows().into_iter().map(argmax).collect())
}

/// Terms of the dual-head objective: mean cross-entropy of the main head on
/// clean plus consistent pseudo nodes, `lambda_dual` times the mean
/// cross-entropy of the pseudo head on leftover candidates, and an L2 penalty
/// `weight_decay / 2 · ‖W‖²` on the weight matrices of every head in use.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub main: &'a [(usize, usize)],
    pub leftover: &'a [(usize, usize)],
    pub lambda_dual: f64,
    pub weight_decay: f64,
}

impl Objective<'_> {
    /// Whether the pseudo head takes part in the objective at all.
    pub fn pseudo_active(&self) -> bool {
        self.lambda_dual > 0.0 && !self.leftover.is_empty()
    }

    fn validate(&self, n: usize, classes: usize) -> Result<()> {
        if self.main.is_empty() {
            return Err(Error::EmptyCleanSet);
        }
        for &(node, label) in self.main.iter().chain(self.leftover) {
            if node >= n {
                return Err(Error::NodeOutOfRange(node));
            }
            if label >= classes {
                return Err(Error::LabelOutOfRange {
                    index: node,
                    label,
                    classes,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub main: f64,
    pub pseudo: f64,
    pub regularization: f64,
    pub total: f64,
}

/// Mean cross-entropy over `set`; writes `d loss / d logits` scaled by
/// `weight` into `grad` when given.
fn cross_entropy(logits: &Array2<f64>, set: &[(usize, usize)], weight: f64, mut grad: Option<&mut Array2<f64>>) -> f64 {
    let inv = 1.0 / set.len() as f64;
    let mut loss = 0.0;
    for &(node, label) in set {
        let row = logits.row(node);
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = row.iter().map(|&v| libm::exp(v - max)).sum();
        let log_z = max + libm::log(sum);
        loss += log_z - row[label];
        if let Some(g) = grad.as_deref_mut() {
            let mut g_row = g.row_mut(node);
            for (j, &v) in row.iter().enumerate() {
                let p = libm::exp(v - log_z);
                let target = if j == label { 1.0 } else { 0.0 };
                g_row[j] += weight * inv * (p - target);
            }
        }
    }
    loss * inv
}

fn squared_norm(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

fn objective_value(params: &ModelParams, act: &Activations, obj: &Objective<'_>) -> LossParts {
    let main = cross_entropy(&act.logits, obj.main, 1.0, None);
    let mut reg = squared_norm(&params.w_in) + squared_norm(&params.w_hidden) + squared_norm(&params.main_weight);
    let pseudo = if obj.pseudo_active() {
        reg += squared_norm(&params.pseudo_weight);
        let logits = affine(&act.rep, &params.pseudo_weight, &params.pseudo_bias);
        cross_entropy(&logits, obj.leftover, 1.0, None)
    } else {
        0.0
    };
    let regularization = 0.5 * obj.weight_decay * reg;
    LossParts {
        main,
        pseudo,
        regularization,
        total: main + obj.lambda_dual * pseudo + regularization,
    }
}

/// Objective value without gradients.
pub fn loss(params: &ModelParams, prop: &Propagation, obj: &Objective<'_>) -> Result<LossParts> {
    check_dims(params, prop)?;
    obj.validate(prop.node_count(), params.classes)?;
    Ok(objective_value(params, &activations(params, prop), obj))
}

/// Objective value and its exact gradient. Also returns the main logits of
/// the evaluated parameters so callers can score validation nodes.
pub fn loss_and_gradients(
    params: &ModelParams,
    prop: &Propagation,
    obj: &Objective<'_>,
) -> Result<(LossParts, Gradients, Array2<f64>)> {
    check_dims(params, prop)?;
    obj.validate(prop.node_count(), params.classes)?;
    let act = activations(params, prop);
    let n = prop.node_count();
    let mut grads = Gradients::zeros_like(params);

    let mut d_logits = Array2::zeros((n, params.classes));
    let main = cross_entropy(&act.logits, obj.main, 1.0, Some(&mut d_logits));
    grads.main_weight = act.rep.t().dot(&d_logits);
    grads.main_bias = d_logits.sum_axis(Axis(0));
    let mut d_rep = d_logits.dot(&params.main_weight.t());

    let mut reg = squared_norm(&params.w_in) + squared_norm(&params.w_hidden) + squared_norm(&params.main_weight);
    let pseudo = if obj.pseudo_active() {
        reg += squared_norm(&params.pseudo_weight);
        let logits = affine(&act.rep, &params.pseudo_weight, &params.pseudo_bias);
        let mut d_pseudo = Array2::zeros((n, params.classes));
        let value = cross_entropy(&logits, obj.leftover, obj.lambda_dual, Some(&mut d_pseudo));
        grads.pseudo_weight = act.rep.t().dot(&d_pseudo);
        grads.pseudo_bias = d_pseudo.sum_axis(Axis(0));
        grads.pseudo_weight.scaled_add(obj.weight_decay, &params.pseudo_weight);
        d_rep += &d_pseudo.dot(&params.pseudo_weight.t());
        value
    } else {
        0.0
    };

    grads.w_hidden = act.aggregated_hidden.t().dot(&d_rep);
    let d_agg = d_rep.dot(&params.w_hidden.t());
    // Â is symmetric, so the adjoint of propagation is propagation
    let mut d_pre = prop.adjacency.propagate(&d_agg);
    ndarray::Zip::from(&mut d_pre).and(&act.pre_relu).for_each(|g, &z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
    grads.w_in = prop.aggregated_input.t().dot(&d_pre);

    grads.w_in.scaled_add(obj.weight_decay, &params.w_in);
    grads.w_hidden.scaled_add(obj.weight_decay, &params.w_hidden);
    grads.main_weight.scaled_add(obj.weight_decay, &params.main_weight);

    let regularization = 0.5 * obj.weight_decay * reg;
    let parts = LossParts {
        main,
        pseudo,
        regularization,
        total: main + obj.lambda_dual * pseudo + regularization,
    };
    Ok((parts, grads, act.logits))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub lambda_dual: f64,
    pub weight_decay: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 0.001,
            lambda_dual: 0.09,
            weight_decay: 5e-4,
            hidden: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if !(self.lambda_dual >= 0.0) {
            return Err(Error::InvalidConfig("dual-head weight must be non-negative".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("weight decay must be non-negative".into()));
        }
        if self.hidden == 0 {
            return Err(Error::InvalidConfig("hidden width must be positive".into()));
        }
        Ok(())
    }
}

/// Accuracy and mean main-head cross-entropy on a labeled node set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationScore {
    pub accuracy: f64,
    pub loss: f64,
}

impl ValidationScore {
    /// Higher accuracy wins; equal accuracy falls back to lower loss.
    pub fn better_than(&self, other: &Self) -> bool {
        self.accuracy > other.accuracy || (self.accuracy == other.accuracy && self.loss < other.loss)
    }
}

pub fn validation_score(logits: &Array2<f64>, set: &[(usize, usize)]) -> Option<ValidationScore> {
    if set.is_empty() {
        return None;
    }
    let correct = set.iter().filter(|&&(v, y)| argmax(logits.row(v)) == y).count();
    Some(ValidationScore {
        accuracy: correct as f64 / set.len() as f64,
        loss: cross_entropy(logits, set, 1.0, None),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Epoch (0 = initial parameters) whose parameters were kept.
    pub best_epoch: usize,
    pub validation: Option<ValidationScore>,
    /// Training objective evaluated before each update.
    pub losses: Vec<f64>,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    fn update(&mut self, params: &mut ModelParams, grads: &Gradients, lr: f64, skip: &[usize]) {
        self.step += 1;
        let c1 = 1.0 - libm::pow(Self::BETA1, self.step as f64);
        let c2 = 1.0 - libm::pow(Self::BETA2, self.step as f64);
        for (t, (p, g)) in params.tensors_mut().into_iter().zip(grads.tensors()).enumerate() {
            if skip.contains(&t) {
                continue;
            }
            let (m, v) = (&mut self.m[t], &mut self.v[t]);
            for i in 0..p.len() {
                m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * g[i];
                v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (libm::sqrt(v_hat) + Self::EPS);
            }
        }
    }
}

/// Full-batch Adam on the dual-head objective. The main head sees
/// `clean ∪ consistent`, the pseudo head sees `leftover` with weight
/// `cfg.lambda_dual`. When the pseudo term is inactive (zero weight or no
/// leftovers) the pseudo head is left untouched.
///
/// Returns the parameters of the epoch with the best validation score; with
/// an empty validation set the final parameters are returned.
pub fn train_dual(
    init: ModelParams,
    prop: &Propagation,
    clean: &[(usize, usize)],
    consistent: &[(usize, usize)],
    leftover: &[(usize, usize)],
    validation: &[(usize, usize)],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if clean.is_empty() {
        return Err(Error::EmptyCleanSet);
    }
    init.check()?;
    let mut main = Vec::with_capacity(clean.len() + consistent.len());
    main.extend_from_slice(clean);
    main.extend_from_slice(consistent);
    let obj = Objective {
        main: &main,
        leftover,
        lambda_dual: cfg.lambda_dual,
        weight_decay: cfg.weight_decay,
    };
    let skip: &[usize] = if obj.pseudo_active() { &[] } else { &PSEUDO_TENSORS };

    let mut params = init;
    let mut adam = Adam::new(&params);
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    let mut best: Option<(ValidationScore, usize, ModelParams)> = None;
    for epoch in 0..=cfg.epochs {
        let (parts, grads, logits) = loss_and_gradients(&params, prop, &obj)?;
        if !parts.total.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        losses.push(parts.total);
        if let Some(score) = validation_score(&logits, validation) {
            if best.as_ref().is_none_or(|(b, _, _)| score.better_than(b)) {
                best = Some((score, epoch, params.clone()));
            }
        }
        if epoch < cfg.epochs {
            adam.update(&mut params, &grads, cfg.learning_rate, skip);
        }
    }
    params.check()?;
    Ok(match best {
        Some((score, epoch, kept)) => TrainOutcome {
            params: kept,
            best_epoch: epoch,
            validation: Some(score),
            losses,
        },
        None => TrainOutcome {
            params,
            best_epoch: cfg.epochs,
            validation: None,
            losses,
        },
    })
}

/// Single-head training on labeled nodes only.
pub fn train_supervised(
    init: ModelParams,
    prop: &Propagation,
    clean: &[(usize, usize)],
    validation: &[(usize, usize)],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_dual(init, prop, clean, &[], &[], validation, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
}

/// Relative error `|a - b| / max(|a|, |b|, floor)`; the floor keeps
/// vanishing gradients from amplifying finite-difference round-off.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    libm::fabs(analytic - numeric) / libm::fabs(analytic).max(libm::fabs(numeric)).max(floor)
}

/// Compares the analytic gradient of the objective with central finite
/// differences over every parameter entry.
pub fn gradient_check(
    params: &ModelParams,
    prop: &Propagation,
    obj: &Objective<'_>,
    step: f64,
) -> Result<GradientCheckReport> {
    let (_, grads, _) = loss_and_gradients(params, prop, obj)?;
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (t, tensor) in analytic.iter().enumerate() {
        for (i, &a) in tensor.iter().enumerate() {
            let orig = probe.tensors()[t][i];
            probe.tensors_mut()[t][i] = orig + step;
            let up = loss(&probe, prop, obj)?.total;
            probe.tensors_mut()[t][i] = orig - step;
            let down = loss(&probe, prop, obj)?.total;
            probe.tensors_mut()[t][i] = orig;
            let numeric = (up - down) / (2.0 * step);
            worst = worst.max(relative_error(a, numeric, 1e-6));
            checked += 1;
        }
    }
    Ok(GradientCheckReport {
        max_relative_error: worst,
        checked,
    })
}
