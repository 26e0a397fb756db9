use crate::tensor::{axpy, dot, Tensor};

use super::NnError;

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

fn check_shapes(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(), NnError> {
    if input.rank() != 2 || weight.rank() != 2 || bias.rank() != 1 {
        return Err(NnError::Shape(format!(
            "dense expects input [batch, in], weight [in, out], bias [out]; got {:?}, {:?}, {:?}",
            input.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    if input.dim(1) != weight.dim(0) || weight.dim(1) != bias.len() {
        return Err(NnError::Shape(format!(
            "dense dimensions disagree: input {:?}, weight {:?}, bias {:?}",
            input.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    Ok(())
}

/// Batch rows processed per weight sweep. Each weight row is then loaded
/// once per block instead of once per batch member, which keeps the large
/// dense weights out of the memory bottleneck.
const ROW_BLOCK: usize = 6;

/// Affine map `y = x W + b` for a batch of row vectors.
///
/// The weight is stored `[in, out]` so both this pass and the backward pass
/// stream through it row-contiguously.
pub fn dense_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor, NnError> {
    check_shapes(input, weight, bias)?;
    let (batch, n_in, n_out) = (input.dim(0), weight.dim(0), weight.dim(1));
    let mut out = Tensor::zeros(&[batch, n_out]);
    let mut b0 = 0;
    while b0 < batch {
        let nb = (batch - b0).min(ROW_BLOCK);
        for bb in 0..nb {
            out.row2_mut(b0 + bb).copy_from_slice(bias.data());
        }
        for i in 0..n_in {
            let wrow = weight.row2(i);
            for bb in 0..nb {
                let xi = input.row2(b0 + bb)[i];
                if xi != 0.0 {
                    axpy(out.row2_mut(b0 + bb), xi, wrow);
                }
            }
        }
        b0 += nb;
    }
    Ok(out)
}

/// Gradients of [`dense_forward`] with respect to input, weight, and bias.
pub fn dense_backward(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    grad_output: &Tensor,
) -> Result<DenseGrads, NnError> {
    check_shapes(input, weight, bias)?;
    let (batch, n_in, n_out) = (input.dim(0), weight.dim(0), weight.dim(1));
    if grad_output.shape() != [batch, n_out] {
        return Err(NnError::Shape(format!(
            "grad_output {:?} does not match output [{batch}, {n_out}]",
            grad_output.shape()
        )));
    }
    let mut d_input = Tensor::zeros(&[batch, n_in]);
    let mut d_weight = Tensor::zeros(&[n_in, n_out]);
    let mut d_bias = Tensor::zeros(&[n_out]);
    for b in 0..batch {
        axpy(d_bias.data_mut(), 1.0, grad_output.row2(b));
    }
    let mut b0 = 0;
    while b0 < batch {
        let nb = (batch - b0).min(ROW_BLOCK);
        for i in 0..n_in {
            let wrow = weight.row2(i);
            for bb in 0..nb {
                d_input.row2_mut(b0 + bb)[i] = dot(wrow, grad_output.row2(b0 + bb));
            }
        }
        for i in 0..n_in {
            for bb in 0..nb {
                let xi = input.row2(b0 + bb)[i];
                if xi != 0.0 {
                    axpy(d_weight.row2_mut(i), xi, grad_output.row2(b0 + bb));
                }
            }
        }
        b0 += nb;
    }
    Ok(DenseGrads {
        input: d_input,
        weight: d_weight,
        bias: d_bias,
    })
}
