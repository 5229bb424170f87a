//! Feedforward multilayer perceptron: parameter layout, forward pass, loss,
//! backprop gradient and the diagonal of the empirical Fisher matrix.
//!
//! Parameters live in one flat `Vec<f64>`. For each layer `l` (0-based, mapping
//! `dims[l] → dims[l+1]`) the layout is the weight matrix `W` (row-major,
//! `dims[l+1] × dims[l]`) followed by the bias vector `b` (`dims[l+1]`).
//!
//! Batches are processed in fixed-size chunks of row-major activation
//! matrices; chunk results are summed in order, so every batch quantity is a
//! deterministic function of the batch contents and order.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::{gemm_nn, gemm_nt, gemm_tn};
use crate::error::{KsdError, Result};

/// Samples per dense chunk.
pub(crate) const CHUNK: usize = 128;

const LOGISTIC_CLAMP: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Logistic,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, h: f64) -> f64 {
        match self {
            Activation::Logistic => 1.0 / (1.0 + (-h.clamp(-LOGISTIC_CLAMP, LOGISTIC_CLAMP)).exp()),
            Activation::Linear => h,
        }
    }

    /// φ' expressed through the output `v = φ(h)`.
    #[inline]
    pub(crate) fn d1(self, v: f64) -> f64 {
        match self {
            Activation::Logistic => v * (1.0 - v),
            Activation::Linear => 1.0,
        }
    }

    /// φ'' expressed through the output `v = φ(h)`.
    #[inline]
    pub(crate) fn d2(self, v: f64) -> f64 {
        match self {
            Activation::Logistic => v * (1.0 - v) * (1.0 - 2.0 * v),
            Activation::Linear => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `‖v − y‖²`
    SquaredError,
    /// Softmax folded into the loss: `−v_y + log Σ_j exp(v_j)`.
    SoftmaxCrossEntropy,
}

/// Layer sizes, nonlinearities and loss of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    layer_dims: Vec<usize>,
    activations: Vec<Activation>,
    loss: LossKind,
}

/// Index ranges of one layer's weights and biases inside the flat vector.
#[derive(Debug, Clone)]
pub struct LayerSlices {
    pub weights: Range<usize>,
    pub biases: Range<usize>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl NetworkSpec {
    pub fn new(layer_dims: Vec<usize>, activations: Vec<Activation>, loss: LossKind) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(KsdError::InvalidInput("a network needs at least an input and an output layer".into()));
        }
        if layer_dims.iter().any(|&d| d == 0) {
            return Err(KsdError::InvalidInput("layer dimensions must be positive".into()));
        }
        if activations.len() != layer_dims.len() - 1 {
            return Err(KsdError::InvalidInput(format!(
                "{} nonlinearities given for {} layers",
                activations.len(),
                layer_dims.len() - 1
            )));
        }
        if loss == LossKind::SoftmaxCrossEntropy && *activations.last().unwrap() != Activation::Linear {
            return Err(KsdError::InvalidInput(
                "softmax cross-entropy needs a linear output layer (softmax lives in the loss)".into(),
            ));
        }
        Ok(NetworkSpec { layer_dims, activations, loss })
    }

    /// Logistic hidden layers, linear output, softmax cross-entropy.
    pub fn classifier(layer_dims: Vec<usize>) -> Result<Self> {
        let n = layer_dims.len().saturating_sub(1);
        let mut acts = vec![Activation::Logistic; n];
        if let Some(last) = acts.last_mut() {
            *last = Activation::Linear;
        }
        Self::new(layer_dims, acts, LossKind::SoftmaxCrossEntropy)
    }

    /// Logistic layers except the coding layer (the narrowest hidden layer),
    /// which is linear; logistic output; squared reconstruction error.
    pub fn autoencoder(layer_dims: Vec<usize>) -> Result<Self> {
        let n = layer_dims.len().saturating_sub(1);
        let mut acts = vec![Activation::Logistic; n];
        if layer_dims.len() > 2 {
            let hidden = &layer_dims[1..layer_dims.len() - 1];
            let coding = hidden
                .iter()
                .enumerate()
                .min_by_key(|&(_, d)| *d)
                .map(|(i, _)| i)
                .unwrap();
            acts[coding] = Activation::Linear;
        }
        Self::new(layer_dims, acts, LossKind::SquaredError)
    }

    /// Parses `"784-500-10"`.
    pub fn parse_dims(s: &str) -> Result<Vec<usize>> {
        let dims: std::result::Result<Vec<usize>, _> = s.trim().split('-').map(|p| p.trim().parse::<usize>()).collect();
        match dims {
            Ok(d) if d.len() >= 2 && d.iter().all(|&x| x > 0) => Ok(d),
            _ => Err(KsdError::InvalidInput(format!("cannot parse model string {s:?}"))),
        }
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn num_layers(&self) -> usize {
        self.activations.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layer_dims.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    pub fn layer(&self, l: usize) -> LayerSlices {
        let mut offset = 0;
        for w in self.layer_dims.windows(2).take(l) {
            offset += w[1] * (w[0] + 1);
        }
        let (fan_in, fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
        LayerSlices {
            weights: offset..offset + fan_in * fan_out,
            biases: offset + fan_in * fan_out..offset + fan_out * (fan_in + 1),
            fan_in,
            fan_out,
        }
    }

    pub fn layers(&self) -> impl Iterator<Item = LayerSlices> + '_ {
        (0..self.num_layers()).map(|l| self.layer(l))
    }

    /// `½ Σ_weights θ²`; biases are not regularized.
    pub fn half_weight_norm_sq(&self, params: &[f64]) -> f64 {
        self.layers().map(|ls| params[ls.weights].iter().map(|w| w * w).sum::<f64>()).sum::<f64>() * 0.5
    }

    /// `coeff · ½ Σ_weights θ²`, exactly zero when `coeff` is zero (so huge
    /// weights cannot turn an unregularized objective into NaN).
    pub fn weight_penalty(&self, coeff: f64, params: &[f64]) -> f64 {
        if coeff == 0.0 {
            return 0.0;
        }
        coeff * self.half_weight_norm_sq(params)
    }

    /// `out += coeff · x` restricted to weight entries.
    pub fn add_weight_term(&self, coeff: f64, x: &[f64], out: &mut [f64]) {
        if coeff == 0.0 {
            return;
        }
        for ls in self.layers() {
            for i in ls.weights {
                out[i] += coeff * x[i];
            }
        }
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(KsdError::InvalidInput(format!(
                "parameter vector has length {}, network needs {}",
                params.len(),
                self.num_params()
            )));
        }
        Ok(())
    }
}

/// Supervision for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target<'a> {
    Class(usize),
    Values(&'a [f64]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<'a> {
    pub input: &'a [f64],
    pub target: Target<'a>,
}

/// Pre-activations `h` (one per layer) and outputs `v` (input first) of a
/// single forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    pub pre: Vec<Vec<f64>>,
    pub out: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.out.last().unwrap()
    }
}

/// Uniform weights on `[−scale/√fan_in, scale/√fan_in]`, zero biases.
pub fn init_params(spec: &NetworkSpec, seed: u64, scale: f64) -> Vec<f64> {
    assert!(scale > 0.0, "init scale must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = vec![0.0; spec.num_params()];
    for ls in spec.layers() {
        let s = 1.0 / (ls.fan_in as f64).sqrt();
        for w in &mut params[ls.weights] {
            let u: f64 = rng.gen();
            *w = scale * (s * (2.0 * u - 1.0));
        }
    }
    params
}

/// Forward pass for one input.
pub fn forward(spec: &NetworkSpec, params: &[f64], x: &[f64]) -> Result<Activations> {
    spec.check_params(params)?;
    if x.len() != spec.input_dim() {
        return Err(KsdError::InvalidInput(format!("input has length {}, expected {}", x.len(), spec.input_dim())));
    }
    let pass = forward_pass(spec, params, x.to_vec(), 1)?;
    Ok(Activations { pre: pass.pre, out: pass.out })
}

/// Per-sample loss on the network output.
pub fn loss(spec: &NetworkSpec, output: &[f64], target: Target<'_>) -> Result<f64> {
    if output.len() != spec.output_dim() {
        return Err(KsdError::InvalidInput("output length does not match the network".into()));
    }
    sample_loss(spec.loss, output, target)
}

/// Gradient of `(1/|batch|) Σ loss + (l2/2)‖θ_weights‖²`.
pub fn gradient(spec: &NetworkSpec, params: &[f64], batch: &[Sample<'_>], l2: f64) -> Result<Vec<f64>> {
    value_and_gradient(spec, params, batch, l2).map(|(_, g)| g)
}

/// Regularized mean objective on a batch.
pub fn objective_value(spec: &NetworkSpec, params: &[f64], batch: &[Sample<'_>], l2: f64) -> Result<f64> {
    spec.check_params(params)?;
    check_batch(spec, batch)?;
    let mut total = 0.0;
    for chunk in batch.chunks(CHUNK) {
        let pass = forward_pass(spec, params, gather_inputs(chunk), chunk.len())?;
        let out = pass.out.last().unwrap();
        for (row, s) in out.chunks(spec.output_dim()).zip(chunk) {
            total += sample_loss(spec.loss, row, s.target)?;
        }
    }
    Ok(total / batch.len() as f64 + spec.weight_penalty(l2, params))
}

pub fn value_and_gradient(spec: &NetworkSpec, params: &[f64], batch: &[Sample<'_>], l2: f64) -> Result<(f64, Vec<f64>)> {
    let (loss_sum, mut grad, _) = accumulate(spec, params, batch, false)?;
    let inv = 1.0 / batch.len() as f64;
    crate::vecops::scale(inv, &mut grad);
    spec.add_weight_term(l2, params, &mut grad);
    Ok((loss_sum * inv + spec.weight_penalty(l2, params), grad))
}

/// Objective, gradient and Fisher diagonal from a single sweep.
pub fn value_gradient_fisher(
    spec: &NetworkSpec,
    params: &[f64],
    batch: &[Sample<'_>],
    l2: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (loss_sum, mut grad, fisher) = accumulate(spec, params, batch, true)?;
    let inv = 1.0 / batch.len() as f64;
    crate::vecops::scale(inv, &mut grad);
    spec.add_weight_term(l2, params, &mut grad);
    let mut fisher = fisher.unwrap();
    crate::vecops::scale(inv, &mut fisher);
    Ok((loss_sum * inv + spec.weight_penalty(l2, params), grad, fisher))
}

/// `(1/|batch|) Σ_i g_i ⊙ g_i` with `g_i` the per-sample loss gradient.
pub fn fisher_diagonal(spec: &NetworkSpec, params: &[f64], batch: &[Sample<'_>]) -> Result<Vec<f64>> {
    value_gradient_fisher(spec, params, batch, 0.0).map(|(_, _, f)| f)
}

/// Index of the largest output.
pub fn predicted_class(output: &[f64]) -> usize {
    output
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Network outputs for a batch, row-major `|batch| × output_dim`.
pub fn outputs(spec: &NetworkSpec, params: &[f64], batch: &[Sample<'_>]) -> Result<Vec<f64>> {
    spec.check_params(params)?;
    check_batch(spec, batch)?;
    let mut all = Vec::with_capacity(batch.len() * spec.output_dim());
    for chunk in batch.chunks(CHUNK) {
        let pass = forward_pass(spec, params, gather_inputs(chunk), chunk.len())?;
        all.extend_from_slice(pass.out.last().unwrap());
    }
    Ok(all)
}

// ---------------------------------------------------------------------------
// batched engine, shared with the curvature products

pub(crate) struct Pass {
    pub n: usize,
    /// `pre[l]`: `n × dims[l+1]`
    pub pre: Vec<Vec<f64>>,
    /// `out[l]`: `n × dims[l]`; `out[0]` is the input.
    pub out: Vec<Vec<f64>>,
}

pub(crate) fn check_batch(spec: &NetworkSpec, batch: &[Sample<'_>]) -> Result<()> {
    if batch.is_empty() {
        return Err(KsdError::InvalidInput("empty batch".into()));
    }
    for s in batch {
        if s.input.len() != spec.input_dim() {
            return Err(KsdError::InvalidInput(format!(
                "sample input has length {}, expected {}",
                s.input.len(),
                spec.input_dim()
            )));
        }
    }
    Ok(())
}

pub(crate) fn gather_inputs(chunk: &[Sample<'_>]) -> Vec<f64> {
    let mut buf = Vec::with_capacity(chunk.len() * chunk.first().map_or(0, |s| s.input.len()));
    for s in chunk {
        buf.extend_from_slice(s.input);
    }
    buf
}

pub(crate) fn forward_pass(spec: &NetworkSpec, params: &[f64], inputs: Vec<f64>, n: usize) -> Result<Pass> {
    let mut pre = Vec::with_capacity(spec.num_layers());
    let mut out = Vec::with_capacity(spec.num_layers() + 1);
    out.push(inputs);
    for (l, ls) in spec.layers().enumerate() {
        let w = &params[ls.weights.clone()];
        let b = &params[ls.biases.clone()];
        let mut h = vec![0.0; n * ls.fan_out];
        gemm_nt(n, ls.fan_in, ls.fan_out, &out[l], w, 0.0, &mut h);
        for row in h.chunks_mut(ls.fan_out) {
            for (x, bi) in row.iter_mut().zip(b) {
                *x += bi;
            }
        }
        let act = spec.activations[l];
        let v: Vec<f64> = h.iter().map(|&x| act.apply(x)).collect();
        if !crate::vecops::all_finite(&v) {
            return Err(KsdError::NumericalOverflow(format!("non-finite activation in layer {}", l + 1)));
        }
        pre.push(h);
        out.push(v);
    }
    Ok(Pass { n, pre, out })
}

/// Backpropagates `dout` (`n × output_dim`, the derivative w.r.t. the network
/// output) and accumulates parameter derivatives into `grad`. With `fisher`,
/// also accumulates per-sample squared parameter derivatives.
pub(crate) fn backward(
    spec: &NetworkSpec,
    params: &[f64],
    pass: &Pass,
    dout: Vec<f64>,
    grad: &mut [f64],
    mut fisher: Option<&mut [f64]>,
) {
    let n = pass.n;
    let mut dv = dout;
    for l in (0..spec.num_layers()).rev() {
        let ls = spec.layer(l);
        let act = spec.activations[l];
        let dh: Vec<f64> = dv.iter().zip(&pass.out[l + 1]).map(|(d, &v)| d * act.d1(v)).collect();
        accumulate_layer(&ls, n, &dh, &pass.out[l], grad);
        if let Some(f) = fisher.as_deref_mut() {
            let dh2: Vec<f64> = dh.iter().map(|x| x * x).collect();
            let v2: Vec<f64> = pass.out[l].iter().map(|x| x * x).collect();
            accumulate_layer(&ls, n, &dh2, &v2, f);
        }
        if l > 0 {
            let mut next = vec![0.0; n * ls.fan_in];
            gemm_nn(n, ls.fan_out, ls.fan_in, &dh, &params[ls.weights.clone()], 0.0, &mut next);
            dv = next;
        }
    }
}

/// `dW += dhᵀ · v_prev`, `db += Σ_rows dh`.
pub(crate) fn accumulate_layer(ls: &LayerSlices, n: usize, dh: &[f64], v_prev: &[f64], acc: &mut [f64]) {
    gemm_tn(ls.fan_out, n, ls.fan_in, dh, v_prev, 1.0, &mut acc[ls.weights.clone()]);
    let db = &mut acc[ls.biases.clone()];
    for row in dh.chunks(ls.fan_out) {
        for (b, x) in db.iter_mut().zip(row) {
            *b += x;
        }
    }
}

fn accumulate(
    spec: &NetworkSpec,
    params: &[f64],
    batch: &[Sample<'_>],
    want_fisher: bool,
) -> Result<(f64, Vec<f64>, Option<Vec<f64>>)> {
    spec.check_params(params)?;
    check_batch(spec, batch)?;
    let p = spec.num_params();
    let mut grad = vec![0.0; p];
    let mut fisher = want_fisher.then(|| vec![0.0; p]);
    let mut loss_sum = 0.0;
    let od = spec.output_dim();
    for chunk in batch.chunks(CHUNK) {
        let pass = forward_pass(spec, params, gather_inputs(chunk), chunk.len())?;
        let out = pass.out.last().unwrap();
        let mut dout = vec![0.0; chunk.len() * od];
        for ((row, drow), s) in out.chunks(od).zip(dout.chunks_mut(od)).zip(chunk) {
            loss_sum += sample_loss(spec.loss, row, s.target)?;
            loss_gradient(spec.loss, row, s.target, drow)?;
        }
        backward(spec, params, &pass, dout, &mut grad, fisher.as_deref_mut());
    }
    Ok((loss_sum, grad, fisher))
}

pub(crate) fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn class_of(target: Target<'_>, dim: usize) -> Result<usize> {
    match target {
        Target::Class(c) if c < dim => Ok(c),
        Target::Class(c) => Err(KsdError::InvalidInput(format!("class index {c} out of range for {dim} outputs"))),
        Target::Values(_) => Err(KsdError::InvalidInput("cross-entropy needs a class target".into())),
    }
}

fn values_of<'a>(target: Target<'a>, dim: usize) -> Result<&'a [f64]> {
    match target {
        Target::Values(y) if y.len() == dim => Ok(y),
        Target::Values(y) => Err(KsdError::InvalidInput(format!("target has length {}, expected {dim}", y.len()))),
        Target::Class(_) => Err(KsdError::InvalidInput("squared error needs a vector target".into())),
    }
}

pub(crate) fn sample_loss(kind: LossKind, v: &[f64], target: Target<'_>) -> Result<f64> {
    match kind {
        LossKind::SquaredError => {
            let y = values_of(target, v.len())?;
            Ok(v.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum())
        }
        LossKind::SoftmaxCrossEntropy => {
            let c = class_of(target, v.len())?;
            let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            Ok(lse - v[c])
        }
    }
}

/// Derivative of the per-sample loss w.r.t. the network output.
pub(crate) fn loss_gradient(kind: LossKind, v: &[f64], target: Target<'_>, out: &mut [f64]) -> Result<()> {
    match kind {
        LossKind::SquaredError => {
            let y = values_of(target, v.len())?;
            for ((o, a), b) in out.iter_mut().zip(v).zip(y) {
                *o = 2.0 * (a - b);
            }
        }
        LossKind::SoftmaxCrossEntropy => {
            let c = class_of(target, v.len())?;
            out.copy_from_slice(&softmax(v));
            out[c] -= 1.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_net(loss: LossKind) -> NetworkSpec {
        match loss {
            LossKind::SquaredError => NetworkSpec::new(
                vec![4, 3, 2],
                vec![Activation::Logistic, Activation::Logistic],
                LossKind::SquaredError,
            )
            .unwrap(),
            LossKind::SoftmaxCrossEntropy => NetworkSpec::classifier(vec![4, 3, 2]).unwrap(),
        }
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize, s: f64) -> Vec<f64> {
        (0..n).map(|_| s * (2.0 * rng.gen::<f64>() - 1.0)).collect()
    }

    #[test]
    fn spec_validation() {
        assert!(NetworkSpec::new(vec![3, 2], vec![Activation::Logistic], LossKind::SoftmaxCrossEntropy).is_err());
        assert!(NetworkSpec::new(vec![3, 2], vec![], LossKind::SquaredError).is_err());
        assert!(NetworkSpec::new(vec![3, 0], vec![Activation::Linear], LossKind::SquaredError).is_err());
        let s = NetworkSpec::classifier(vec![784, 500, 500, 2000, 10]).unwrap();
        assert_eq!(s.num_params(), 500 * 785 + 500 * 501 + 2000 * 501 + 10 * 2001);
        assert_eq!(s.activations().last(), Some(&Activation::Linear));
    }

    #[test]
    fn zero_l2_ignores_overflowing_weight_norm() {
        let spec = NetworkSpec::classifier(vec![2, 2]).unwrap();
        let params = vec![1e200, -1e200, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(spec.weight_penalty(0.0, &params), 0.0);
        assert_eq!(spec.weight_penalty(1.0, &params), f64::INFINITY);
        let input = [0.0, 0.0];
        let batch = [Sample { input: &input, target: Target::Class(1) }];
        assert!((objective_value(&spec, &params, &batch, 0.0).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn autoencoder_coding_layer_is_linear() {
        let s = NetworkSpec::autoencoder(vec![784, 400, 30, 400, 784]).unwrap();
        assert_eq!(
            s.activations(),
            &[Activation::Logistic, Activation::Linear, Activation::Logistic, Activation::Logistic]
        );
    }

    #[test]
    fn parse_model_string() {
        assert_eq!(NetworkSpec::parse_dims("784-500-500-2000-10").unwrap(), vec![784, 500, 500, 2000, 10]);
        assert!(NetworkSpec::parse_dims("784").is_err());
        assert!(NetworkSpec::parse_dims("784-x-10").is_err());
        assert!(NetworkSpec::parse_dims("784-0-10").is_err());
    }

    #[test]
    fn init_is_deterministic_and_scaled() {
        let spec = small_net(LossKind::SquaredError);
        let a = init_params(&spec, 7, 1.0);
        let b = init_params(&spec, 7, 1.0);
        assert_eq!(a, b);
        let c = init_params(&spec, 7, 2.0);
        for (x, y) in a.iter().zip(&c) {
            assert_eq!(2.0 * x, *y);
        }
        for ls in spec.layers() {
            assert!(a[ls.biases].iter().all(|&b| b == 0.0));
            let bound = 1.0 / (ls.fan_in as f64).sqrt();
            assert!(a[ls.weights].iter().all(|w| w.abs() <= bound));
        }
        assert_ne!(init_params(&spec, 8, 1.0), a);
    }

    #[test]
    fn forward_single_linear_layer() {
        let spec = NetworkSpec::new(vec![2, 1], vec![Activation::Linear], LossKind::SquaredError).unwrap();
        let act = forward(&spec, &[1.0, 2.0, 0.0], &[3.0, 4.0]).unwrap();
        assert_eq!(act.output(), &[11.0]);
        assert_eq!(act.pre[0], vec![11.0]);
    }

    #[test]
    fn forward_zero_params_gives_half() {
        let spec = small_net(LossKind::SquaredError);
        let act = forward(&spec, &vec![0.0; spec.num_params()], &[0.3, -1.0, 2.0, 5.0]).unwrap();
        assert!(act.pre.iter().flatten().all(|&h| h == 0.0));
        assert!(act.out[1..].iter().flatten().all(|&v| v == 0.5));
    }

    #[test]
    fn forward_overflow_on_linear_blowup() {
        let spec = NetworkSpec::new(vec![1, 1], vec![Activation::Linear], LossKind::SquaredError).unwrap();
        let err = forward(&spec, &[f64::MAX, f64::MAX], &[10.0]).unwrap_err();
        assert!(matches!(err, KsdError::NumericalOverflow(_)));
    }

    #[test]
    fn logistic_saturates_without_nan() {
        assert_eq!(Activation::Logistic.apply(0.0), 0.5);
        assert!(Activation::Logistic.apply(-1e6).is_finite());
        assert!(Activation::Logistic.apply(1e6) <= 1.0);
    }

    #[test]
    fn loss_examples() {
        let ae = small_net(LossKind::SquaredError);
        assert_eq!(loss(&ae, &[0.2, 0.7], Target::Values(&[0.2, 0.7])).unwrap(), 0.0);
        let cl = small_net(LossKind::SoftmaxCrossEntropy);
        let l = loss(&cl, &[0.0, 0.0], Target::Class(0)).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        let a = loss(&cl, &[1.0, -2.0], Target::Class(1)).unwrap();
        let b = loss(&cl, &[1001.0, 998.0], Target::Class(1)).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(matches!(loss(&cl, &[0.0, 0.0], Target::Class(2)), Err(KsdError::InvalidInput(_))));
    }

    #[test]
    fn softmax_ce_at_uniform_logits_is_log_classes() {
        let spec = NetworkSpec::classifier(vec![2, 5]).unwrap();
        let l = loss(&spec, &[3.0; 5], Target::Class(4)).unwrap();
        assert!((l - 5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn duplicated_batch_gives_same_gradient() {
        let spec = small_net(LossKind::SoftmaxCrossEntropy);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = random_vec(&mut rng, spec.num_params(), 0.8);
        let xs: Vec<Vec<f64>> = (0..3).map(|_| random_vec(&mut rng, 4, 1.0)).collect();
        let single: Vec<Sample> =
            xs.iter().enumerate().map(|(i, x)| Sample { input: x, target: Target::Class(i % 2) }).collect();
        let doubled: Vec<Sample> = single.iter().flat_map(|s| [*s, *s]).collect();
        let g1 = gradient(&spec, &params, &single, 0.0).unwrap();
        let g2 = gradient(&spec, &params, &doubled, 0.0).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
    }

    #[test]
    fn pure_l2_gradient() {
        let spec = NetworkSpec::new(vec![3, 2], vec![Activation::Linear], LossKind::SquaredError).unwrap();
        let mut params = vec![0.0; spec.num_params()];
        // Zero input: the loss no longer depends on the weights; biases stay zero.
        for (i, w) in params[spec.layer(0).weights].iter_mut().enumerate() {
            *w = i as f64 - 2.5;
        }
        let x = [0.0; 3];
        let y = [0.0; 2];
        let batch = [Sample { input: &x, target: Target::Values(&y) }];
        let g = gradient(&spec, &params, &batch, 0.3).unwrap();
        let ls = spec.layer(0);
        for i in ls.weights {
            assert!((g[i] - 0.3 * params[i]).abs() < 1e-15);
        }
        assert!(g[ls.biases].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn empty_batch_rejected() {
        let spec = small_net(LossKind::SquaredError);
        let params = vec![0.0; spec.num_params()];
        assert!(matches!(gradient(&spec, &params, &[], 0.0), Err(KsdError::InvalidInput(_))));
        assert!(matches!(fisher_diagonal(&spec, &params, &[]), Err(KsdError::InvalidInput(_))));
    }

    #[test]
    fn fisher_single_sample_is_squared_gradient() {
        let spec = small_net(LossKind::SquaredError);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = random_vec(&mut rng, spec.num_params(), 1.0);
        let x = random_vec(&mut rng, 4, 1.0);
        let y = random_vec(&mut rng, 2, 1.0);
        let batch = [Sample { input: &x, target: Target::Values(&y) }];
        let g = gradient(&spec, &params, &batch, 0.0).unwrap();
        let f = fisher_diagonal(&spec, &params, &batch).unwrap();
        for (gi, fi) in g.iter().zip(&f) {
            assert!((gi * gi - fi).abs() <= 1e-15 * fi.max(1e-300).max(gi * gi) + 1e-300);
        }
    }

    #[test]
    fn fisher_matches_explicit_outer_products() {
        let spec = small_net(LossKind::SoftmaxCrossEntropy);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = random_vec(&mut rng, spec.num_params(), 1.0);
        let xs: Vec<Vec<f64>> = (0..6).map(|_| random_vec(&mut rng, 4, 1.0)).collect();
        let batch: Vec<Sample> =
            xs.iter().enumerate().map(|(i, x)| Sample { input: x, target: Target::Class(i % 2) }).collect();
        let p = spec.num_params();
        // Explicit Σ g_i g_iᵀ / n, then take the diagonal.
        let mut explicit = vec![vec![0.0; p]; p];
        for s in &batch {
            let gi = gradient(&spec, &params, std::slice::from_ref(s), 0.0).unwrap();
            for a in 0..p {
                for b in 0..p {
                    explicit[a][b] += gi[a] * gi[b] / batch.len() as f64;
                }
            }
        }
        let f = fisher_diagonal(&spec, &params, &batch).unwrap();
        for j in 0..p {
            assert!(f[j] >= 0.0);
            assert!((f[j] - explicit[j][j]).abs() <= 1e-14 * explicit[j][j].max(1e-12));
        }
    }

    #[test]
    fn large_batches_span_multiple_chunks() {
        let spec = small_net(LossKind::SquaredError);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = random_vec(&mut rng, spec.num_params(), 1.0);
        let xs: Vec<Vec<f64>> = (0..CHUNK * 2 + 7).map(|_| random_vec(&mut rng, 4, 1.0)).collect();
        let ys: Vec<Vec<f64>> = (0..xs.len()).map(|_| random_vec(&mut rng, 2, 1.0)).collect();
        let batch: Vec<Sample> =
            xs.iter().zip(&ys).map(|(x, y)| Sample { input: x, target: Target::Values(y) }).collect();
        let (v, g) = value_and_gradient(&spec, &params, &batch, 0.0).unwrap();
        let mut g_ref = vec![0.0; g.len()];
        let mut v_ref = 0.0;
        for s in &batch {
            let (vi, gi) = value_and_gradient(&spec, &params, std::slice::from_ref(s), 0.0).unwrap();
            v_ref += vi / batch.len() as f64;
            crate::vecops::axpy(1.0 / batch.len() as f64, &gi, &mut g_ref);
        }
        assert!((v - v_ref).abs() < 1e-12);
        for (a, b) in g.iter().zip(&g_ref) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
