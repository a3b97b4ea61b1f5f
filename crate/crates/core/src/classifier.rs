//! Weighted-average spatial LSTM.
//!
//! Each sample is replicated and shuffled, cut to its focal zone, and the
//! resulting scalars are read as a sequence along the dimension axis (one
//! scalar per step). Every step passes through a shared sigmoid dense
//! stack, then a stack of LSTM layers. The classifier output is
//! `w1 * O[K-1] + w2 * O[K]` over the top layer's last two hidden states,
//! followed by a linear layer and softmax.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{compute_metrics, Dataset, Metrics};
use crate::error::{check_len, Error, Result};
use crate::nn::{
    adam_update, clip_global_norm, softmax, softmax_cross_entropy, Activation, AdamState, DenseLayer, Differentiable,
    Gate, LstmCellParams, LstmStepCache, Parameterized, UniformInit,
};
use crate::rs::RsMap;
use crate::sam::FocalState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierArch {
    pub hidden: usize,
    pub dense_layers: usize,
    pub lstm_layers: usize,
    pub class_count: usize,
    pub forget_bias: f64,
}

impl Default for ClassifierArch {
    fn default() -> Self {
        Self {
            hidden: 164,
            dense_layers: 3,
            lstm_layers: 2,
            class_count: 6,
            forget_bias: 0.3,
        }
    }
}

/// How the `l2_lambda` penalty reaches the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightDecay {
    /// `2 lambda W` is added to the gradient before the Adam step.
    Coupled,
    /// Weights are multiplied by `max(0, 1 - lr * lambda)` after each Adam step.
    Decoupled,
}

impl std::str::FromStr for WeightDecay {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coupled" => Ok(Self::Coupled),
            "decoupled" => Ok(Self::Decoupled),
            _ => Err(Error::validation(format!("unknown weight decay mode `{s}` (coupled, decoupled)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub weight_decay: WeightDecay,
    pub batch_size: usize,
    pub iterations: usize,
    pub grad_clip: f64,
    pub w1: f64,
    pub w2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            l2_lambda: 0.001,
            weight_decay: WeightDecay::Decoupled,
            batch_size: 9,
            iterations: 1000,
            grad_clip: 5.0,
            w1: 0.5,
            w2: 0.5,
            seed: 0,
        }
    }
}

/// Dense stack init: variance-preserving for the sigmoid's 1/4 slope,
/// with biases spread over the same range.
pub const DENSE_INIT: UniformInit = UniformInit {
    gain: 6.928203230275509,
    random_bias: true,
};

pub const LSTM_INIT: UniformInit = UniformInit {
    gain: 5.0,
    random_bias: true,
};

/// Added to the initial forget-gate biases. The constant per-step offset
/// is separate and stays in the cell.
pub const FORGET_BIAS_INIT: f64 = -2.0;

/// Shift biases so that rows see zero-mean input when their input is a
/// sigmoid output centred on 0.5. `stride` is the row length of `weights`
/// and only its first `width` columns are fed by the sigmoid.
fn center_sigmoid_inputs(weights: &[f64], biases: &mut [f64], stride: usize, width: usize) {
    for (o, b) in biases.iter_mut().enumerate() {
        let row = &weights[o * stride..o * stride + width];
        *b -= 0.5 * row.iter().sum::<f64>();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WasLstmParams {
    pub dense: Vec<DenseLayer>,
    pub lstm: Vec<LstmCellParams>,
    pub output: DenseLayer,
}

impl WasLstmParams {
    pub fn new(arch: &ClassifierArch, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = arch.hidden;
        let mut dense = (0..arch.dense_layers)
            .map(|i| DenseLayer::with_init(if i == 0 { 1 } else { h }, h, Activation::Sigmoid, DENSE_INIT, &mut rng))
            .collect::<Vec<_>>();
        let lstm_in = if arch.dense_layers == 0 { 1 } else { h };
        let mut lstm = (0..arch.lstm_layers)
            .map(|i| LstmCellParams::with_init(if i == 0 { lstm_in } else { h }, h, arch.forget_bias, LSTM_INIT, &mut rng))
            .collect::<Vec<_>>();
        let output = DenseLayer::new(h, arch.class_count, Activation::Linear, &mut rng);

        for layer in dense.iter_mut().skip(1) {
            let n = layer.in_dim();
            center_sigmoid_inputs(&layer.weights, &mut layer.biases, n, n);
        }
        for cell in &mut lstm {
            cell.biases[Gate::Forget as usize].iter_mut().for_each(|b| *b += FORGET_BIAS_INIT);
        }
        if !dense.is_empty() {
            if let Some(cell) = lstm.first_mut() {
                let stride = cell.input_dim() + cell.hidden_dim();
                let width = cell.input_dim();
                for g in Gate::ALL {
                    let g = g as usize;
                    center_sigmoid_inputs(&cell.weights[g], &mut cell.biases[g], stride, width);
                }
            }
        }
        Self { dense, lstm, output }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            dense: self.dense.iter().map(DenseLayer::zeros_like).collect(),
            lstm: self.lstm.iter().map(LstmCellParams::zeros_like).collect(),
            output: self.output.zeros_like(),
        }
    }

    fn hidden(&self) -> usize {
        self.output.in_dim()
    }

    /// `sum ||W||^2` over weight matrices only.
    fn weight_sq_norm(&self) -> f64 {
        let mut s = 0.0;
        self.visit_params(&mut |name, p| {
            if name.ends_with("weights") {
                s += p.iter().map(|v| v * v).sum::<f64>();
            }
        });
        s
    }

    fn scale_weights(&mut self, factor: f64) {
        self.visit_params_mut(&mut |name, p| {
            if name.ends_with("weights") {
                p.iter_mut().for_each(|v| *v *= factor);
            }
        });
    }

    fn add_weight_decay(&self, grads: &mut WasLstmParams, lambda: f64) {
        let mut weights = Vec::new();
        self.visit_params(&mut |name, p| {
            if name.ends_with("weights") {
                weights.push(p.to_vec());
            } else {
                weights.push(Vec::new());
            }
        });
        let mut i = 0;
        grads.visit_params_mut(&mut |_, g| {
            for (gv, w) in g.iter_mut().zip(&weights[i]) {
                *gv += 2.0 * lambda * w;
            }
            i += 1;
        });
    }
}

impl Parameterized for WasLstmParams {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &[f64])) {
        for (i, l) in self.dense.iter().enumerate() {
            l.visit_params(&mut |n, p| f(&format!("dense.{i}.{n}"), p));
        }
        for (i, l) in self.lstm.iter().enumerate() {
            l.visit_params(&mut |n, p| f(&format!("lstm.{i}.{n}"), p));
        }
        self.output.visit_params(&mut |n, p| f(&format!("output.{n}"), p));
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (i, l) in self.dense.iter_mut().enumerate() {
            l.visit_params_mut(&mut |n, p| f(&format!("dense.{i}.{n}"), p));
        }
        for (i, l) in self.lstm.iter_mut().enumerate() {
            l.visit_params_mut(&mut |n, p| f(&format!("lstm.{i}.{n}"), p));
        }
        self.output.visit_params_mut(&mut |n, p| f(&format!("output.{n}"), p));
    }
}

/// `w1 * prev + w2 * last`.
pub fn weighted_average(w1: f64, w2: f64, prev: &[f64], last: &[f64]) -> Vec<f64> {
    prev.iter().zip(last).map(|(a, b)| w1 * a + w2 * b).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub arch: ClassifierArch,
    pub params: WasLstmParams,
    pub w1: f64,
    pub w2: f64,
    pub l2_lambda: f64,
    pub rs_map: RsMap,
    pub focal: FocalState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub probs: Vec<f64>,
    /// Top LSTM layer hidden state at every focal-zone step.
    pub step_outputs: Vec<Vec<f64>>,
}

/// Activations of a batched forward pass kept for backpropagation.
struct ForwardCache {
    batch: usize,
    steps: usize,
    /// `[step][layer]`, each `batch x out`; layer 0 is the scalar input.
    dense: Vec<Vec<Vec<f64>>>,
    /// `[layer][step]`.
    lstm: Vec<Vec<LstmStepCache>>,
    averaged: Vec<f64>,
    logits: Vec<f64>,
}

impl ClassifierModel {
    pub fn new(arch: ClassifierArch, rs_map: RsMap, focal: FocalState, cfg: &TrainConfig) -> Result<Self> {
        if focal.end_idx > rs_map.k_prime() || focal.len() < 2 {
            return Err(Error::validation(format!(
                "focal zone {focal} must hold >= 2 steps inside K' = {}",
                rs_map.k_prime()
            )));
        }
        if arch.hidden == 0 || arch.lstm_layers == 0 || arch.class_count < 2 {
            return Err(Error::validation("classifier needs hidden > 0, >= 1 LSTM layer, >= 2 classes"));
        }
        Ok(Self {
            params: WasLstmParams::new(&arch, cfg.seed),
            arch,
            w1: cfg.w1,
            w2: cfg.w2,
            l2_lambda: cfg.l2_lambda,
            rs_map,
            focal,
        })
    }

    pub fn focal_len(&self) -> usize {
        self.focal.len()
    }

    pub fn class_count(&self) -> usize {
        self.arch.class_count
    }

    /// Replicate, shuffle and cut one raw sample to its focal sequence.
    pub fn focal_sequence(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.rs_map.apply_window(x, self.focal.start_idx, self.focal.end_idx)
    }

    fn focal_sequences<'a>(&self, xs: impl IntoIterator<Item = &'a [f64]>) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for x in xs {
            out.extend(self.focal_sequence(x)?);
        }
        Ok(out)
    }

    /// Batched forward over `batch x steps` focal sequences. Returns logits
    /// and, when `keep` is set, everything backpropagation needs.
    fn run(&self, seqs: &[f64], keep: bool) -> (Vec<f64>, Option<ForwardCache>, Vec<Vec<f64>>) {
        let steps = self.focal_len();
        let batch = seqs.len() / steps;
        let h = self.params.hidden();
        let nl = self.params.lstm.len();
        let mut hs: Vec<Vec<f64>> = vec![vec![0.0; batch * h]; nl];
        let mut cs: Vec<Vec<f64>> = vec![vec![0.0; batch * h]; nl];
        let mut dense_cache = Vec::new();
        let mut lstm_cache: Vec<Vec<LstmStepCache>> = (0..nl).map(|_| Vec::new()).collect();
        let mut top_outputs = Vec::with_capacity(steps);

        for t in 0..steps {
            let mut acts = vec![(0..batch).map(|b| seqs[b * steps + t]).collect::<Vec<f64>>()];
            for layer in &self.params.dense {
                let mut out = vec![0.0; batch * layer.out_dim()];
                layer.forward_batch(acts.last().unwrap(), &mut out);
                acts.push(out);
            }
            for (l, cell) in self.params.lstm.iter().enumerate() {
                let step = {
                    let input: &[f64] = if l == 0 { acts.last().unwrap() } else { &hs[l - 1] };
                    cell.step_batch(input, &hs[l], &cs[l])
                };
                hs[l].copy_from_slice(&step.h);
                cs[l].copy_from_slice(&step.c);
                if keep {
                    lstm_cache[l].push(step);
                }
            }
            top_outputs.push(hs[nl - 1].clone());
            if keep {
                dense_cache.push(acts);
            }
        }

        let averaged = weighted_average(self.w1, self.w2, &top_outputs[steps - 2], &top_outputs[steps - 1]);
        let mut logits = vec![0.0; batch * self.arch.class_count];
        self.params.output.forward_batch(&averaged, &mut logits);
        let cache = keep.then(|| ForwardCache {
            batch,
            steps,
            dense: dense_cache,
            lstm: lstm_cache,
            averaged,
            logits: logits.clone(),
        });
        (logits, cache, top_outputs)
    }

    /// Mean cross-entropy plus `lambda * sum ||W||^2`, with gradients
    /// accumulated into `grads` when given. `penalty_grad` controls whether
    /// the penalty's own gradient is included.
    fn loss_and_grad(
        &self,
        seqs: &[f64],
        labels: &[usize],
        grads: Option<&mut WasLstmParams>,
        penalty_grad: bool,
    ) -> Result<f64> {
        let nc = self.arch.class_count;
        let (logits, cache, _) = self.run(seqs, grads.is_some());
        let batch = labels.len();
        let mut ce = 0.0;
        let mut dlogits = vec![0.0; batch * nc];
        for (b, &y) in labels.iter().enumerate() {
            let (loss, probs) = softmax_cross_entropy(&logits[b * nc..(b + 1) * nc], y)?;
            ce += loss;
            for c in 0..nc {
                dlogits[b * nc + c] = (probs[c] - if c == y { 1.0 } else { 0.0 }) / batch as f64;
            }
        }
        let loss = ce / batch as f64 + self.l2_lambda * self.params.weight_sq_norm();
        if let (Some(grads), Some(cache)) = (grads, cache) {
            self.backward(&cache, dlogits, grads);
            if penalty_grad {
                self.params.add_weight_decay(grads, self.l2_lambda);
            }
        }
        Ok(loss)
    }

    fn backward(&self, cache: &ForwardCache, mut dlogits: Vec<f64>, grads: &mut WasLstmParams) {
        let (batch, steps) = (cache.batch, cache.steps);
        let h = self.params.hidden();
        let nl = self.params.lstm.len();
        let mut d_avg = vec![0.0; batch * h];
        self.params.output.backward_batch(
            &cache.averaged,
            &cache.logits,
            &mut dlogits,
            &mut grads.output,
            Some(&mut d_avg),
        );

        // Gradient arriving at each step's output of the current layer.
        let mut d_ext: Vec<Vec<f64>> = vec![vec![0.0; batch * h]; steps];
        d_ext[steps - 2] = d_avg.iter().map(|g| self.w1 * g).collect();
        d_ext[steps - 1] = d_avg.iter().map(|g| self.w2 * g).collect();

        for l in (0..nl).rev() {
            let cell = &self.params.lstm[l];
            let in_dim = cell.input_dim();
            let mut dh_next = vec![0.0; batch * h];
            let mut dc_next = vec![0.0; batch * h];
            let mut d_below: Vec<Vec<f64>> = vec![Vec::new(); steps];
            let mut dh_prev = vec![0.0; batch * h];
            let mut dc_prev = vec![0.0; batch * h];
            for t in (0..steps).rev() {
                let dh: Vec<f64> = d_ext[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
                let mut dx = vec![0.0; batch * in_dim];
                cell.backward_step(
                    &cache.lstm[l][t],
                    &dh,
                    &dc_next,
                    &mut grads.lstm[l],
                    &mut dx,
                    &mut dh_prev,
                    &mut dc_prev,
                );
                std::mem::swap(&mut dh_next, &mut dh_prev);
                std::mem::swap(&mut dc_next, &mut dc_prev);
                d_below[t] = dx;
            }
            d_ext = d_below;
        }

        let nd = self.params.dense.len();
        for t in 0..steps {
            let acts = &cache.dense[t];
            let mut grad = std::mem::take(&mut d_ext[t]);
            for i in (0..nd).rev() {
                let layer = &self.params.dense[i];
                let need_input = i > 0;
                let mut gin = vec![0.0; if need_input { batch * layer.in_dim() } else { 0 }];
                layer.backward_batch(
                    &acts[i],
                    &acts[i + 1],
                    &mut grad,
                    &mut grads.dense[i],
                    need_input.then_some(gin.as_mut_slice()),
                );
                grad = gin;
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardOutput> {
        check_len("classifier input", self.rs_map.k(), x.len())?;
        let seq = self.focal_sequence(x)?;
        let (logits, _, step_outputs) = self.run(&seq, false);
        Ok(ForwardOutput {
            probs: softmax(&logits),
            step_outputs,
        })
    }

    /// Class probabilities for many samples, batched.
    pub fn predict_proba_batch(&self, xs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let nc = self.arch.class_count;
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(64) {
            for x in chunk {
                check_len("classifier input", self.rs_map.k(), x.len())?;
            }
            let seqs = self.focal_sequences(chunk.iter().copied())?;
            let (logits, _, _) = self.run(&seqs, false);
            out.extend(logits.chunks_exact(nc).map(softmax));
        }
        Ok(out)
    }

    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let probs = self.forward(x)?.probs;
        Ok((argmax(&probs), probs))
    }

    pub fn predict_batch(&self, xs: &[&[f64]]) -> Result<Vec<usize>> {
        Ok(self.predict_proba_batch(xs)?.iter().map(|p| argmax(p)).collect())
    }

    pub fn evaluate(&self, ds: &Dataset) -> Result<Metrics> {
        let xs: Vec<&[f64]> = ds.samples.iter().map(|s| s.features.as_slice()).collect();
        let predicted = self.predict_batch(&xs)?;
        compute_metrics(&predicted, &ds.labels(), self.arch.class_count.max(ds.class_count))
    }
}

/// Lowest index among the maxima.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

pub fn predict(model: &ClassifierModel, x: &[f64]) -> Result<(usize, Vec<f64>)> {
    model.predict(x)
}

pub fn train_classifier(
    train: &Dataset,
    rs_map: &RsMap,
    focal: FocalState,
    arch: &ClassifierArch,
    cfg: &TrainConfig,
) -> Result<ClassifierModel> {
    train_classifier_with_progress(train, rs_map, focal, arch, cfg, &mut |_, _| {})
}

/// As [`train_classifier`], reporting `(iteration, loss)` after every update.
pub fn train_classifier_with_progress(
    train: &Dataset,
    rs_map: &RsMap,
    focal: FocalState,
    arch: &ClassifierArch,
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<ClassifierModel> {
    let mut model = ClassifierModel::new(*arch, rs_map.clone(), focal, cfg)?;
    fit_model(&mut model, train, cfg, progress)?;
    Ok(model)
}

/// Continues training `model` in place for `cfg.iterations` minibatch updates.
pub fn fit_model(
    model: &mut ClassifierModel,
    train: &Dataset,
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<()> {
    if train.is_empty() {
        return Err(Error::validation("training set is empty"));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::validation("batch size and learning rate must be positive"));
    }
    let lambda = model.l2_lambda;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::validation(format!("l2 lambda {lambda} must be finite and >= 0")));
    }
    let shrink = (1.0 - cfg.learning_rate * lambda).max(0.0);
    check_len("training sample channels", model.rs_map.k(), train.channel_count)?;
    if let Some(s) = train.samples.iter().find(|s| s.label >= model.arch.class_count) {
        return Err(Error::validation(format!("label {} >= class count {}", s.label, model.arch.class_count)));
    }
    let steps = model.focal_len();
    let seqs = model.focal_sequences(train.samples.iter().map(|s| s.features.as_slice()))?;
    let labels = train.labels();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_ba7c4);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();
    let mut adam = AdamState::for_params(&model.params);
    let mut batch_seqs = Vec::with_capacity(cfg.batch_size * steps);
    let mut batch_labels = Vec::with_capacity(cfg.batch_size);

    for iteration in 0..cfg.iterations {
        batch_seqs.clear();
        batch_labels.clear();
        while batch_labels.len() < cfg.batch_size.min(train.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let i = order[cursor];
            cursor += 1;
            batch_seqs.extend_from_slice(&seqs[i * steps..(i + 1) * steps]);
            batch_labels.push(labels[i]);
        }
        let mut grads = model.params.zeros_like();
        let coupled = cfg.weight_decay == WeightDecay::Coupled;
        let loss = model.loss_and_grad(&batch_seqs, &batch_labels, Some(&mut grads), coupled)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("training loss at iteration {iteration}")));
        }
        clip_global_norm(&mut grads, cfg.grad_clip);
        adam_update(&mut model.params, &grads, &mut adam, cfg.learning_rate)
            .map_err(|e| Error::Numeric(format!("iteration {iteration}: {e}")))?;
        if !coupled {
            model.params.scale_weights(shrink);
        }
        progress(iteration, loss);
    }
    Ok(())
}

/// Training objective over a fixed batch, for gradient checking.
pub struct ClassifierObjective {
    pub model: ClassifierModel,
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl ClassifierObjective {
    fn seqs(&self) -> Result<Vec<f64>> {
        self.model.focal_sequences(self.inputs.iter().map(Vec::as_slice))
    }
}

impl Parameterized for ClassifierObjective {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &[f64])) {
        self.model.params.visit_params(f)
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.model.params.visit_params_mut(f)
    }
}

impl Differentiable for ClassifierObjective {
    fn loss(&self) -> Result<f64> {
        self.model.loss_and_grad(&self.seqs()?, &self.labels, None, true)
    }

    fn gradient(&self) -> Result<Vec<Vec<f64>>> {
        let mut g = self.model.params.zeros_like();
        self.model.loss_and_grad(&self.seqs()?, &self.labels, Some(&mut g), true)?;
        Ok(g.flatten_groups())
    }
}
