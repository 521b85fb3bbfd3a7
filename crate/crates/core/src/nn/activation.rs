use super::Tensor2;

pub fn relu(input: &Tensor2) -> Tensor2 {
    input.mapv(|x| x.max(0.0))
}

/// Passes `grad` through where the pre-activation was strictly positive.
/// The subgradient at exactly zero is taken as zero.
pub fn relu_backward(pre_activation: &Tensor2, grad: &Tensor2) -> Tensor2 {
    let mut out = grad.clone();
    out.zip_mut_with(pre_activation, |g, &x| {
        if x <= 0.0 {
            *g = 0.0
        }
    });
    out
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Tensor2) -> Tensor2 {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}
