//! Matrix-free curvature products: the Gauss-Newton product `G θ₁` with
//! `G = Jᵀ H_E J`, and the exact Hessian product via the R-operator.
//!
//! Both run one forward pass plus a directional (R) forward pass. The
//! Gauss-Newton product then backpropagates `H_E · R{v_L}` through the
//! unperturbed network; the Hessian product also differentiates the
//! ordinary backward pass along `θ₁`, which brings in φ'' and the direction's
//! weights.

use crate::dense::{gemm_nn, gemm_nt, gemm_tn};
use crate::error::{KsdError, Result};
use crate::network::{
    accumulate_layer, backward, check_batch, forward_pass, gather_inputs, loss_gradient, softmax, LossKind,
    NetworkSpec, Pass, Sample, Target, CHUNK,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurvatureKind {
    GaussNewton,
    Hessian,
}

impl std::str::FromStr for CurvatureKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "gauss_newton" | "gn" => Ok(CurvatureKind::GaussNewton),
            "hessian" => Ok(CurvatureKind::Hessian),
            other => Err(format!("unknown curvature kind {other:?} (expected gauss_newton or hessian)")),
        }
    }
}

/// Second derivative of the per-sample loss w.r.t. the output, applied to `u`.
///
/// Squared error has the constant Hessian `2I`. For softmax cross-entropy the
/// Hessian is `diag(p) − p pᵀ`, applied as `p ⊙ u − p (pᵀu)`.
pub fn loss_hessian_action(kind: LossKind, output: &[f64], _target: Target<'_>, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    hessian_action_into(kind, output, u, &mut out);
    out
}

fn hessian_action_into(kind: LossKind, v: &[f64], u: &[f64], out: &mut [f64]) {
    match kind {
        LossKind::SquaredError => {
            for (o, x) in out.iter_mut().zip(u) {
                *o = 2.0 * x;
            }
        }
        LossKind::SoftmaxCrossEntropy => {
            let p = softmax(v);
            let pu: f64 = p.iter().zip(u).map(|(a, b)| a * b).sum();
            for ((o, pi), ui) in out.iter_mut().zip(&p).zip(u) {
                *o = pi * ui - pi * pu;
            }
        }
    }
}

/// Gauss-Newton product for one sample (not averaged).
pub fn multiply_g(spec: &NetworkSpec, params: &[f64], direction: &[f64], sample: &Sample<'_>) -> Result<Vec<f64>> {
    summed_products(spec, params, direction, std::slice::from_ref(sample), CurvatureKind::GaussNewton)
}

/// Exact Hessian product for one sample (not averaged).
pub fn multiply_h(spec: &NetworkSpec, params: &[f64], direction: &[f64], sample: &Sample<'_>) -> Result<Vec<f64>> {
    summed_products(spec, params, direction, std::slice::from_ref(sample), CurvatureKind::Hessian)
}

/// `(1/|batch|) Σ_i B_i θ₁ + l2 · θ₁` with the L2 part on weight entries only.
pub fn batch_curvature_product(
    spec: &NetworkSpec,
    params: &[f64],
    direction: &[f64],
    batch: &[Sample<'_>],
    kind: CurvatureKind,
    l2: f64,
) -> Result<Vec<f64>> {
    let mut out = summed_products(spec, params, direction, batch, kind)?;
    crate::vecops::scale(1.0 / batch.len() as f64, &mut out);
    spec.add_weight_term(l2, direction, &mut out);
    Ok(out)
}

fn summed_products(
    spec: &NetworkSpec,
    params: &[f64],
    direction: &[f64],
    batch: &[Sample<'_>],
    kind: CurvatureKind,
) -> Result<Vec<f64>> {
    let p = spec.num_params();
    if params.len() != p || direction.len() != p {
        return Err(KsdError::InvalidInput(format!(
            "parameter/direction lengths {}/{} do not match network size {p}",
            params.len(),
            direction.len()
        )));
    }
    check_batch(spec, batch)?;
    let mut acc = vec![0.0; p];
    for chunk in batch.chunks(CHUNK) {
        let pass = forward_pass(spec, params, gather_inputs(chunk), chunk.len())?;
        let (r_pre, r_out) = r_forward(spec, params, direction, &pass);
        match kind {
            CurvatureKind::GaussNewton => gauss_newton_chunk(spec, params, &pass, &r_out, &mut acc),
            CurvatureKind::Hessian => hessian_chunk(spec, params, direction, chunk, &pass, &r_pre, &r_out, &mut acc)?,
        }
    }
    if !crate::vecops::all_finite(&acc) {
        return Err(KsdError::NumericalOverflow("non-finite curvature product".into()));
    }
    Ok(acc)
}

/// Directional derivatives `R{h_l}` and `R{v_l}` along `direction`.
/// `r_out[l]` is `R{v_{l+1}}` (the input has no directional derivative).
fn r_forward(spec: &NetworkSpec, params: &[f64], direction: &[f64], pass: &Pass) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = pass.n;
    let mut r_pre: Vec<Vec<f64>> = Vec::with_capacity(spec.num_layers());
    let mut r_out: Vec<Vec<f64>> = Vec::with_capacity(spec.num_layers());
    for (l, ls) in spec.layers().enumerate() {
        let mut rh = vec![0.0; n * ls.fan_out];
        gemm_nt(n, ls.fan_in, ls.fan_out, &pass.out[l], &direction[ls.weights.clone()], 0.0, &mut rh);
        if l > 0 {
            gemm_nt(n, ls.fan_in, ls.fan_out, &r_out[l - 1], &params[ls.weights.clone()], 1.0, &mut rh);
        }
        let rb = &direction[ls.biases.clone()];
        for row in rh.chunks_mut(ls.fan_out) {
            for (x, b) in row.iter_mut().zip(rb) {
                *x += b;
            }
        }
        let act = spec.activations()[l];
        let rv: Vec<f64> = rh.iter().zip(&pass.out[l + 1]).map(|(r, &v)| act.d1(v) * r).collect();
        r_pre.push(rh);
        r_out.push(rv);
    }
    (r_pre, r_out)
}

fn gauss_newton_chunk(spec: &NetworkSpec, params: &[f64], pass: &Pass, r_out: &[Vec<f64>], acc: &mut [f64]) {
    let od = spec.output_dim();
    let out = pass.out.last().unwrap();
    let rv = r_out.last().unwrap();
    let mut hat = vec![0.0; pass.n * od];
    for ((v, u), h) in out.chunks(od).zip(rv.chunks(od)).zip(hat.chunks_mut(od)) {
        hessian_action_into(spec.loss(), v, u, h);
    }
    backward(spec, params, pass, hat, acc, None);
}

#[allow(clippy::too_many_arguments)]
fn hessian_chunk(
    spec: &NetworkSpec,
    params: &[f64],
    direction: &[f64],
    chunk: &[Sample<'_>],
    pass: &Pass,
    r_pre: &[Vec<f64>],
    r_out: &[Vec<f64>],
    acc: &mut [f64],
) -> Result<()> {
    let n = pass.n;
    let od = spec.output_dim();
    let out = pass.out.last().unwrap();
    let rv_last = r_out.last().unwrap();
    let mut dv = vec![0.0; n * od];
    let mut rdv = vec![0.0; n * od];
    for (i, s) in chunk.iter().enumerate() {
        let rows = i * od..(i + 1) * od;
        loss_gradient(spec.loss(), &out[rows.clone()], s.target, &mut dv[rows.clone()])?;
        hessian_action_into(spec.loss(), &out[rows.clone()], &rv_last[rows.clone()], &mut rdv[rows]);
    }
    for l in (0..spec.num_layers()).rev() {
        let ls = spec.layer(l);
        let act = spec.activations()[l];
        let v = &pass.out[l + 1];
        let rh = &r_pre[l];
        let mut dh = vec![0.0; dv.len()];
        let mut rdh = vec![0.0; dv.len()];
        for i in 0..dv.len() {
            let d1 = act.d1(v[i]);
            dh[i] = dv[i] * d1;
            rdh[i] = rdv[i] * d1 + dv[i] * act.d2(v[i]) * rh[i];
        }
        // R{dW} = R{dh}ᵀ v_prev + dhᵀ R{v_prev};  R{db} = Σ R{dh}
        accumulate_layer(&ls, n, &rdh, &pass.out[l], acc);
        if l > 0 {
            gemm_tn(ls.fan_out, n, ls.fan_in, &dh, &r_out[l - 1], 1.0, &mut acc[ls.weights.clone()]);
            // R{dv_prev} = R{dh} W + dh W₁;  dv_prev = dh W
            let w = &params[ls.weights.clone()];
            let w1 = &direction[ls.weights.clone()];
            let mut next_dv = vec![0.0; n * ls.fan_in];
            let mut next_rdv = vec![0.0; n * ls.fan_in];
            gemm_nn(n, ls.fan_out, ls.fan_in, &dh, w, 0.0, &mut next_dv);
            gemm_nn(n, ls.fan_out, ls.fan_in, &rdh, w, 0.0, &mut next_rdv);
            gemm_nn(n, ls.fan_out, ls.fan_in, &dh, w1, 1.0, &mut next_rdv);
            dv = next_dv;
            rdv = next_rdv;
        }
    }
    Ok(())
}
