use ndarray::{Array2, ArrayView2};

/// Numerically stable row-wise softmax.
pub fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Label distribution per token from hidden states and a linear head.
pub fn classify_tokens(hidden: ArrayView2<f64>, weight: ArrayView2<f64>, bias: ArrayView2<f64>) -> Array2<f64> {
    softmax_rows((hidden.dot(&weight) + bias).view())
}

/// Index of the largest entry per row, lowest index on ties.
pub fn argmax_rows(matrix: ArrayView2<f64>) -> Vec<usize> {
    matrix
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
