use rand::Rng;

use crate::tensor::Tensor;

use super::NnError;

/// A sampled dropout decision: one multiplicative factor per element, either
/// `0` (dropped) or `1/(1-rate)` (kept, rescaled so the expected value of
/// the output matches the input). Sampling once and replaying the same plan
/// in the backward pass keeps the two passes consistent.
#[derive(Debug, Clone)]
pub struct DropoutPlan {
    factors: Vec<f64>,
}

impl DropoutPlan {
    /// Draws a keep/drop decision for `len` elements at the given drop rate.
    pub fn sample<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Result<Self, NnError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::InvalidDropoutRate(rate));
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let factors = (0..len)
            .map(|_| {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    keep_scale
                }
            })
            .collect();
        Ok(Self { factors })
    }

    /// A plan that keeps everything unscaled (used when dropout is disabled).
    pub fn identity(len: usize) -> Self {
        Self {
            factors: vec![1.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }
}

/// Applies the plan's factors elementwise.
pub fn dropout(input: &Tensor, plan: &DropoutPlan) -> Result<Tensor, NnError> {
    if input.len() != plan.factors.len() {
        return Err(NnError::Shape(format!(
            "dropout plan of {} factors does not cover input {:?}",
            plan.factors.len(),
            input.shape()
        )));
    }
    let mut out = input.clone();
    for (v, f) in out.data_mut().iter_mut().zip(&plan.factors) {
        *v *= f;
    }
    Ok(out)
}

/// The map is elementwise linear, so the gradient is scaled by the same
/// factors that were applied in the forward pass.
pub fn dropout_backward(plan: &DropoutPlan, grad_output: &Tensor) -> Result<Tensor, NnError> {
    dropout(grad_output, plan)
}
