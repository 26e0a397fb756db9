use crate::tensor::Tensor;

/// Elementwise max(x, 0).
pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Gates the incoming gradient by the sign of the forward input: positions
/// with `input > 0` pass through, everything else (including exact zeros)
/// gets zero gradient.
pub fn relu_backward(input: &Tensor, grad_output: &Tensor) -> Tensor {
    assert_eq!(
        input.shape(),
        grad_output.shape(),
        "relu_backward shape mismatch"
    );
    let mut out = grad_output.clone();
    for (g, &x) in out.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
    out
}
