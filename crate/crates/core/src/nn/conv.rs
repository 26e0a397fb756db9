//! 1-D convolution with "same" zero padding over masked batches.

use crate::tensor::{Mask, Tensor};

use super::NnError;

/// Parameters of one convolution block: the kernel and bias of the
/// convolution itself plus the per-channel normalization state that
/// follows it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayerParams {
    /// `[out_channels, in_channels, window]`
    pub kernel: Tensor,
    /// `[out_channels]`
    pub bias: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
}

impl ConvLayerParams {
    /// Fresh parameters with zero kernel/bias and identity normalization.
    pub fn zeros(out_channels: usize, in_channels: usize, window: usize) -> Self {
        assert!(window >= 1, "window must be positive");
        ConvLayerParams {
            kernel: Tensor::zeros(&[out_channels, in_channels, window]),
            bias: Tensor::zeros(&[out_channels]),
            gamma: Tensor::filled(&[out_channels], 1.0),
            beta: Tensor::zeros(&[out_channels]),
            running_mean: Tensor::zeros(&[out_channels]),
            running_var: Tensor::filled(&[out_channels], 1.0),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.dim(0)
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.dim(1)
    }

    pub fn window(&self) -> usize {
        self.kernel.dim(2)
    }
}

/// Gradients produced by [`conv1d_backward`].
#[derive(Debug, Clone)]
pub struct Conv1dGrads {
    pub input: Tensor,
    pub kernel: Tensor,
    pub bias: Tensor,
}

/// Left pad for "same" output length: `floor((window - 1) / 2)`.
/// The remaining `ceil((window - 1) / 2)` implicit zeros sit on the right.
#[inline]
pub(crate) fn left_pad(window: usize) -> usize {
    (window - 1) / 2
}

fn check_shapes(input: &Tensor, params: &ConvLayerParams, mask: &Mask) -> Result<(), NnError> {
    if input.rank() != 3 {
        return Err(NnError::Shape(format!(
            "conv1d expects [batch, channels, length] input, got {:?}",
            input.shape()
        )));
    }
    if input.dim(1) != params.in_channels() {
        return Err(NnError::ChannelMismatch {
            input: input.dim(1),
            kernel: params.in_channels(),
        });
    }
    if mask.batch() != input.dim(0) || mask.max_len() != input.dim(2) {
        return Err(NnError::Shape(format!(
            "mask [{}, {}] does not cover input {:?}",
            mask.batch(),
            mask.max_len(),
            input.shape()
        )));
    }
    Ok(())
}

/// Positions processed per accumulator tile of the blocked kernel below.
const POS_TILE: usize = 8;

/// One register tile of the convolution: `NB` output channels × `POS_TILE`
/// positions, accumulated entirely in locals so each input value is loaded
/// once per channel block instead of once per channel.
///
/// `rows` must be padded so that `rows[c][l0 .. l0 + window - 1 + POS_TILE]`
/// is always in bounds; `row_stride` is the padded row length and `weights`
/// is laid out `[NB output channels][c_in][window]` starting at `w0`.
#[inline(always)]
fn conv_tile<const NB: usize>(
    rows: &[f64],
    row_stride: usize,
    c_in: usize,
    weights: &[f64],
    w0: usize,
    window: usize,
    l0: usize,
    init: &[f64; NB],
) -> [[f64; POS_TILE]; NB] {
    let mut acc = [[0.0; POS_TILE]; NB];
    for (a, &v) in acc.iter_mut().zip(init) {
        *a = [v; POS_TILE];
    }
    for c in 0..c_in {
        let xrow = &rows[c * row_stride + l0..];
        for w in 0..window {
            let xs = &xrow[w..w + POS_TILE];
            for oo in 0..NB {
                let k = weights[w0 + (oo * c_in + c) * window + w];
                for t in 0..POS_TILE {
                    acc[oo][t] += k * xs[t];
                }
            }
        }
    }
    acc
}

/// Runs the blocked convolution of one batch member over every output
/// channel and valid position, writing into `out_rows` (`c_out` rows of
/// `out_len`, preceding values preserved beyond `valid`).
fn conv_rows(
    rows: &[f64],
    row_stride: usize,
    c_in: usize,
    weights: &[f64],
    window: usize,
    init: &[f64],
    out_rows: &mut [f64],
    out_len: usize,
    valid: usize,
) {
    let c_out = init.len();
    let mut o0 = 0;
    while o0 < c_out {
        let nb = (c_out - o0).min(4);
        let mut l0 = 0;
        while l0 < valid {
            let pl = (valid - l0).min(POS_TILE);
            let w0 = o0 * c_in * window;
            // Monomorphized per block width so the accumulator tile stays
            // in registers.
            let tile: [[f64; POS_TILE]; 4] = match nb {
                4 => conv_tile::<4>(rows, row_stride, c_in, weights, w0, window, l0, &[
                    init[o0], init[o0 + 1], init[o0 + 2], init[o0 + 3],
                ]),
                3 => {
                    let t = conv_tile::<3>(rows, row_stride, c_in, weights, w0, window, l0, &[
                        init[o0], init[o0 + 1], init[o0 + 2],
                    ]);
                    [t[0], t[1], t[2], [0.0; POS_TILE]]
                }
                2 => {
                    let t = conv_tile::<2>(rows, row_stride, c_in, weights, w0, window, l0, &[
                        init[o0], init[o0 + 1],
                    ]);
                    [t[0], t[1], [0.0; POS_TILE], [0.0; POS_TILE]]
                }
                _ => {
                    let t = conv_tile::<1>(rows, row_stride, c_in, weights, w0, window, l0, &[
                        init[o0],
                    ]);
                    [t[0], [0.0; POS_TILE], [0.0; POS_TILE], [0.0; POS_TILE]]
                }
            };
            for oo in 0..nb {
                let at = (o0 + oo) * out_len + l0;
                out_rows[at..at + pl].copy_from_slice(&tile[oo][..pl]);
            }
            l0 += POS_TILE;
        }
        o0 += nb;
    }
}

/// One kernel-gradient tile: `NW` adjacent taps of one `(out, in)` channel
/// pair, accumulated in lane-wise partial sums over the valid positions.
///
/// `g_row` starts at the first valid position and is zero past `valid`;
/// `x_row` starts at the staged position of the chunk's first tap, so tap
/// `w`'s series is `x_row[l + w]`.
#[inline(always)]
fn dkernel_tile<const NW: usize>(g_row: &[f64], x_row: &[f64], valid: usize) -> [f64; NW] {
    let mut acc = [[0.0; POS_TILE]; NW];
    let mut l = 0;
    while l < valid {
        let gs = &g_row[l..l + POS_TILE];
        for w in 0..NW {
            let xs = &x_row[l + w..l + w + POS_TILE];
            for t in 0..POS_TILE {
                acc[w][t] += gs[t] * xs[t];
            }
        }
        l += POS_TILE;
    }
    let mut out = [0.0; NW];
    for w in 0..NW {
        out[w] = acc[w].iter().sum();
    }
    out
}

/// Same-length 1-D convolution. Output positions past each row's valid
/// length are forced to zero.
pub fn conv1d_forward(
    input: &Tensor,
    params: &ConvLayerParams,
    mask: &Mask,
) -> Result<Tensor, NnError> {
    check_shapes(input, params, mask)?;
    let (batch, c_in, len) = (input.dim(0), input.dim(1), input.dim(2));
    let c_out = params.out_channels();
    let window = params.window();
    let pad = left_pad(window);

    // Staging buffer with the implicit zero padding made explicit (plus
    // tile slop on the right), so the blocked kernel needs no bounds logic.
    // The pad cells are zeroed once here and never overwritten.
    let row_stride = len + window - 1 + POS_TILE;
    let mut rows = vec![0.0; c_in * row_stride];

    let mut out = Tensor::zeros(&[batch, c_out, len]);
    for b in 0..batch {
        let valid = mask.valid_len(b);
        if valid == 0 {
            continue;
        }
        for c in 0..c_in {
            rows[c * row_stride + pad..c * row_stride + pad + len]
                .copy_from_slice(input.row3(b, c));
        }
        let out_block = &mut out.data_mut()[b * c_out * len..(b + 1) * c_out * len];
        conv_rows(
            &rows,
            row_stride,
            c_in,
            params.kernel.data(),
            window,
            params.bias.data(),
            out_block,
            len,
            valid,
        );
    }
    Ok(out)
}

/// Gradients of a masked same-length convolution.
///
/// `grad_output` contributions at padded positions are ignored (the forward
/// pass pinned those outputs to zero). The input gradient covers every cell
/// of the raw input tensor, including padded cells that valid windows read.
pub fn conv1d_backward(
    input: &Tensor,
    params: &ConvLayerParams,
    mask: &Mask,
    grad_output: &Tensor,
) -> Result<Conv1dGrads, NnError> {
    check_shapes(input, params, mask)?;
    if grad_output.shape() != [input.dim(0), params.out_channels(), input.dim(2)] {
        return Err(NnError::Shape(format!(
            "grad_output {:?} does not match conv output shape",
            grad_output.shape()
        )));
    }
    let (batch, c_in, len) = (input.dim(0), input.dim(1), input.dim(2));
    let c_out = params.out_channels();
    let window = params.window();
    let pad = left_pad(window);

    let mut d_input = Tensor::zeros(&[batch, c_in, len]);
    let mut d_kernel = Tensor::zeros(&[c_out, c_in, window]);
    let mut d_bias = Tensor::zeros(&[c_out]);

    // dX[c][j] = sum_{o,w} K[o,c,w] * g[o][j + pad - w] is itself a
    // same-padded correlation: flip the kernel taps, swap the channel axes,
    // and use the complementary left pad. That lets the blocked forward
    // kernel compute it.
    let flip_pad = window - 1 - pad;
    let mut flipped = vec![0.0; c_in * c_out * window];
    for o in 0..c_out {
        for c in 0..c_in {
            for w in 0..window {
                flipped[(c * c_out + o) * window + w] =
                    params.kernel.get3(o, c, window - 1 - w);
            }
        }
    }
    let row_stride = len + window - 1 + POS_TILE;
    let mut g_rows = vec![0.0; c_out * row_stride];
    let mut x_rows = vec![0.0; c_in * row_stride];
    let zero_init = vec![0.0; c_in];

    for b in 0..batch {
        let valid = mask.valid_len(b);
        if valid == 0 {
            continue;
        }
        // Stage the input rows exactly as the forward pass does, and the
        // gradient rows zero-extended past `valid` so padded output
        // positions contribute nothing to either gradient.
        for c in 0..c_in {
            x_rows[c * row_stride + pad..c * row_stride + pad + len]
                .copy_from_slice(input.row3(b, c));
        }
        for o in 0..c_out {
            let at = o * row_stride + flip_pad;
            g_rows[at..at + valid].copy_from_slice(&grad_output.row3(b, o)[..valid]);
            g_rows[at + valid..at + len].fill(0.0);
        }

        for o in 0..c_out {
            let g = &grad_output.row3(b, o)[..valid];
            d_bias.data_mut()[o] += g.iter().sum::<f64>();
            // With the staging above, dK[o,c,w] = sum_l g[l] * x[l + w - pad]
            // becomes a plain lane product of the staged rows at offset w.
            let g_row = &g_rows[o * row_stride + flip_pad..];
            for c in 0..c_in {
                let base = (o * c_in + c) * window;
                let mut w0 = 0;
                while w0 < window {
                    let nw = (window - w0).min(4);
                    let x_row = &x_rows[c * row_stride + w0..];
                    let dk = &mut d_kernel.data_mut()[base + w0..base + w0 + nw];
                    match nw {
                        4 => {
                            let t = dkernel_tile::<4>(g_row, x_row, valid);
                            for (d, v) in dk.iter_mut().zip(t) {
                                *d += v;
                            }
                        }
                        3 => {
                            let t = dkernel_tile::<3>(g_row, x_row, valid);
                            for (d, v) in dk.iter_mut().zip(t) {
                                *d += v;
                            }
                        }
                        2 => {
                            let t = dkernel_tile::<2>(g_row, x_row, valid);
                            for (d, v) in dk.iter_mut().zip(t) {
                                *d += v;
                            }
                        }
                        _ => {
                            let t = dkernel_tile::<1>(g_row, x_row, valid);
                            for (d, v) in dk.iter_mut().zip(t) {
                                *d += v;
                            }
                        }
                    }
                    w0 += nw;
                }
            }
        }
        let dx_block = &mut d_input.data_mut()[b * c_in * len..(b + 1) * c_in * len];
        conv_rows(
            &g_rows, row_stride, c_out, &flipped, window, &zero_init, dx_block, len, len,
        );
    }
    Ok(Conv1dGrads {
        input: d_input,
        kernel: d_kernel,
        bias: d_bias,
    })
}
