//! Forward propagation, the regularised MSE loss and integer-order
//! backpropagation. Fractional factors are applied later, at update time.

use super::arch::{ArchSpec, PostOp};
use super::ops::{
    avgpool, avgpool_backward, col2im, conv_forward, flatten, im2col, relu, relu_backward,
    unflatten, upsample, upsample_backward,
};
use super::params::NetworkParams;
use crate::error::{ensure, Result};
use crate::fractional::{frac_update, FracConfig};
use crate::linalg::{matmul, matmul_nt, matmul_tn, matvec, Matrix};

/// Activations cached for one convolution block.
#[derive(Clone, Debug)]
pub struct LayerTape {
    /// `I_col` of the block input.
    pub icol: Matrix,
    /// Pre-activation `S`.
    pub pre: Matrix,
}

/// Everything backpropagation needs from one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTape {
    pub layers: Vec<LayerTape>,
    /// Flattened input of the FC layer.
    pub flat: Vec<f64>,
}

/// Runs the full chain CONV → ReLU → pool/upsample ... → flatten → FC.
pub fn forward(
    params: &NetworkParams,
    arch: &ArchSpec,
    input: &[f64],
) -> Result<(Vec<f64>, ForwardTape)> {
    let (flat, layers) = conv_stack_forward(params, arch, input)?;
    let mut out = matvec(&params.fc_weight, &flat)?;
    for (o, b) in out.iter_mut().zip(&params.fc_bias) {
        *o += b;
    }
    Ok((out, ForwardTape { layers, flat }))
}

fn conv_stack_forward(
    params: &NetworkParams,
    arch: &ArchSpec,
    input: &[f64],
) -> Result<(Vec<f64>, Vec<LayerTape>)> {
    ensure!(
        input.len() == arch.input_len,
        "network input has length {}, architecture expects {}",
        input.len(),
        arch.input_len
    );
    ensure!(
        params.conv.len() == arch.conv_layers.len(),
        "parameter set has {} conv layers, architecture has {}",
        params.conv.len(),
        arch.conv_layers.len()
    );
    let mut x = unflatten(input.to_vec(), 1, input.len())?;
    let mut layers = Vec::with_capacity(arch.conv_layers.len());
    for (spec, p) in arch.conv_layers.iter().zip(&params.conv) {
        ensure!(
            x.rows() == spec.channels,
            "layer expects {} channels, got {}",
            spec.channels,
            x.rows()
        );
        let icol = im2col(&x, spec.kernel_width, spec.padding);
        let pre = conv_forward(&icol, p.kernel.matrix(), &p.bias)?;
        let act = relu(&pre);
        x = match spec.post {
            PostOp::None => act,
            PostOp::AvgPool => avgpool(&act),
            PostOp::Upsample => upsample(&act),
        };
        layers.push(LayerTape { icol, pre });
    }
    Ok((flatten(&x), layers))
}

/// Output only.
pub fn predict(params: &NetworkParams, arch: &ArchSpec, input: &[f64]) -> Result<Vec<f64>> {
    forward(params, arch, input).map(|(out, _)| out)
}

/// Backpropagates `d_out = ∂L/∂output` through one forward pass and adds the
/// data-term partials into `grads`. Returns `∂L/∂input`.
pub fn backward_into(
    tape: &ForwardTape,
    params: &NetworkParams,
    arch: &ArchSpec,
    d_out: &[f64],
    grads: &mut NetworkParams,
) -> Result<Vec<f64>> {
    ensure!(
        tape.layers.len() == arch.conv_layers.len() && params.conv.len() == arch.conv_layers.len(),
        "tape/parameter/architecture layer counts disagree"
    );
    ensure!(
        d_out.len() == params.fc_bias.len(),
        "output gradient length {} does not match FC size {}",
        d_out.len(),
        params.fc_bias.len()
    );
    ensure!(
        tape.flat.len() == params.fc_weight.cols(),
        "tape flatten size {} does not match FC input {}",
        tape.flat.len(),
        params.fc_weight.cols()
    );

    // FC: dB = d_out, dW = d_out ⊗ F, dF = Wᵀ d_out.
    let mut d_flat = vec![0.0; tape.flat.len()];
    for (i, &g) in d_out.iter().enumerate() {
        grads.fc_bias[i] += g;
        if g == 0.0 {
            continue;
        }
        let wrow = params.fc_weight.row(i);
        for (df, w) in d_flat.iter_mut().zip(wrow) {
            *df += g * w;
        }
        let grow = grads.fc_weight.row_mut(i);
        for (gw, f) in grow.iter_mut().zip(&tape.flat) {
            *gw += g * f;
        }
    }

    conv_stack_backward(&tape.layers, params, arch, d_flat, grads)
}

fn conv_stack_backward(
    layers: &[LayerTape],
    params: &NetworkParams,
    arch: &ArchSpec,
    d_flat: Vec<f64>,
    grads: &mut NetworkParams,
) -> Result<Vec<f64>> {
    let widths = arch.widths();
    let last = arch.conv_layers.len() - 1;
    let mut d_x = unflatten(d_flat, arch.conv_layers[last].filters, widths[last].output)?;
    for i in (0..arch.conv_layers.len()).rev() {
        let spec = &arch.conv_layers[i];
        let layer = &layers[i];
        let d_act = match spec.post {
            PostOp::None => d_x,
            PostOp::AvgPool => avgpool_backward(&d_x, widths[i].conv)?,
            PostOp::Upsample => upsample_backward(&d_x)?,
        };
        let d_pre = relu_backward(&d_act, &layer.pre)?;
        let d_kernel = matmul_nt(&d_pre, &layer.icol)?;
        let g = &mut grads.conv[i];
        for (a, b) in g
            .kernel
            .matrix_mut()
            .as_mut_slice()
            .iter_mut()
            .zip(d_kernel.as_slice())
        {
            *a += b;
        }
        for (m, gb) in g.bias.iter_mut().enumerate() {
            *gb += d_pre.row(m).iter().sum::<f64>();
        }
        let d_icol = matmul_tn(params.conv[i].kernel.matrix(), &d_pre)?;
        d_x = col2im(
            &d_icol,
            spec.channels,
            widths[i].input,
            spec.kernel_width,
            spec.padding,
        )?;
    }
    Ok(d_x.into_vec())
}

/// Data-term gradients of a single pass, plus the input gradient.
pub fn backward(
    tape: &ForwardTape,
    params: &NetworkParams,
    arch: &ArchSpec,
    d_out: &[f64],
) -> Result<(NetworkParams, Vec<f64>)> {
    let mut grads = NetworkParams::zeros(arch);
    let d_in = backward_into(tape, params, arch, d_out, &mut grads)?;
    Ok((grads, d_in))
}

/// `1/(2M) Σ_i ‖pred_i - target_i‖²`.
pub fn data_loss(preds: &[Vec<f64>], targets: &[&[f64]]) -> Result<f64> {
    ensure!(
        preds.len() == targets.len() && !preds.is_empty(),
        "need equally many (>0) predictions and targets"
    );
    let mut total = 0.0;
    for (p, t) in preds.iter().zip(targets) {
        ensure!(p.len() == t.len(), "prediction/target length mismatch");
        total += p
            .iter()
            .zip(t.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total / (2.0 * preds.len() as f64))
}

/// Full objective: data term plus `(λ/2)(Σ‖K‖² + ‖W‖²)`.
pub fn loss(
    preds: &[Vec<f64>],
    targets: &[&[f64]],
    params: &NetworkParams,
    lambda: f64,
) -> Result<f64> {
    Ok(data_loss(preds, targets)? + 0.5 * lambda * params.l2_sum())
}

/// Batch result: data-term loss at the current parameters and its gradient.
#[derive(Clone, Debug)]
pub struct BatchGradients {
    pub data_loss: f64,
    pub grads: NetworkParams,
}

/// Mean data-term loss and gradient over a batch. The FC layer is evaluated
/// for the whole batch at once; every reduction runs in a fixed order, so the
/// result is deterministic.
pub fn batch_gradients(
    params: &NetworkParams,
    arch: &ArchSpec,
    inputs: &[&[f64]],
    targets: &[&[f64]],
) -> Result<BatchGradients> {
    ensure!(
        inputs.len() == targets.len() && !inputs.is_empty(),
        "batch needs equally many (>0) inputs and targets"
    );
    let batch = inputs.len();
    let m = batch as f64;
    let dim = params.fc_weight.cols();
    let out_len = params.fc_weight.rows();
    let mut tapes = Vec::with_capacity(batch);
    let mut flats = Matrix::zeros(batch, dim);
    for (b, x) in inputs.iter().enumerate() {
        let (flat, layers) = conv_stack_forward(params, arch, x)?;
        ensure!(
            flat.len() == dim,
            "flatten size {} does not match FC input {}",
            flat.len(),
            dim
        );
        flats.row_mut(b).copy_from_slice(&flat);
        tapes.push(layers);
    }
    let outs = matmul_nt(&flats, &params.fc_weight)?;

    // d_out stored transposed: row i holds output unit i across the batch.
    let mut d_out_t = Matrix::zeros(out_len, batch);
    let mut sq = 0.0;
    for (b, t) in targets.iter().enumerate() {
        ensure!(
            t.len() == out_len,
            "target length {} does not match output length {}",
            t.len(),
            out_len
        );
        for (i, (o, y)) in outs.row(b).iter().zip(t.iter()).enumerate() {
            let e = o + params.fc_bias[i] - y;
            sq += e * e;
            d_out_t.set(i, b, e / m);
        }
    }

    let mut grads = NetworkParams::zeros(arch);
    grads.fc_weight = matmul(&d_out_t, &flats)?;
    for (i, gb) in grads.fc_bias.iter_mut().enumerate() {
        *gb = d_out_t.row(i).iter().sum();
    }
    let d_flats = matmul_tn(&d_out_t, &params.fc_weight)?;
    for (b, layers) in tapes.iter().enumerate() {
        conv_stack_backward(layers, params, arch, d_flats.row(b).to_vec(), &mut grads)?;
    }
    Ok(BatchGradients {
        data_loss: sq / (2.0 * m),
        grads,
    })
}

/// Applies the fractional update to every tensor; the L2 term only touches
/// kernels and the FC weight.
pub fn apply_update(
    params: &mut NetworkParams,
    grads: &NetworkParams,
    cfg: &FracConfig,
) -> Result<()> {
    for id in params.tensor_ids() {
        frac_update(
            params.tensor_mut(id),
            grads.tensor(id),
            cfg,
            id.regularized(),
        )?;
    }
    Ok(())
}

/// One forward/backward/update step. Returns the full objective evaluated
/// before the update.
pub fn train_step(
    params: &mut NetworkParams,
    arch: &ArchSpec,
    inputs: &[&[f64]],
    targets: &[&[f64]],
    cfg: &FracConfig,
) -> Result<f64> {
    let batch = batch_gradients(params, arch, inputs, targets)?;
    let objective = batch.data_loss + 0.5 * cfg.lambda * params.l2_sum();
    apply_update(params, &batch.grads, cfg)?;
    Ok(objective)
}
