//! Exact linear-chain CRF: path scores, forward/backward log-partition,
//! negative log-likelihood with gradients, and Viterbi decoding.
//!
//! Emissions are an `n x L` matrix. Transition `(i, j)` scores label `i`
//! followed by label `j`. Start and end vectors score the first and last
//! labels.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::tags::{BioTag, Label};
use crate::{Error, Result};

/// Score used for forbidden transitions during constrained decoding.
const FORBIDDEN: f64 = f64::NEG_INFINITY;

#[derive(Clone, Debug, PartialEq)]
pub struct CrfParams {
    pub transitions: Array2<f64>,
    pub start: Array1<f64>,
    pub end: Array1<f64>,
}

impl CrfParams {
    pub fn zeros(labels: usize) -> Self {
        CrfParams {
            transitions: Array2::zeros((labels, labels)),
            start: Array1::zeros(labels),
            end: Array1::zeros(labels),
        }
    }

    pub fn labels(&self) -> usize {
        self.start.len()
    }

    fn check(&self, emissions: &ArrayView2<f64>) -> Result<()> {
        let l = self.labels();
        if emissions.ncols() != l || self.transitions.dim() != (l, l) || self.end.len() != l {
            return Err(Error::Shape(format!(
                "emissions {:?} vs {l} labels",
                emissions.dim()
            )));
        }
        if emissions.nrows() == 0 {
            return Err(Error::Shape("empty emission matrix".into()));
        }
        Ok(())
    }
}

/// Decode-time structural constraints.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Constraints {
    None,
    /// Forbid starting with I and the transition O -> I. Needs the BIO label set.
    Bio,
}

/// Gradient of the NLL with respect to emissions and CRF parameters.
#[derive(Clone, Debug)]
pub struct CrfGradients {
    pub emissions: Array2<f64>,
    pub transitions: Array2<f64>,
    pub start: Array1<f64>,
    pub end: Array1<f64>,
}

pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn check_tags(tags: &[usize], n: usize, labels: usize) -> Result<()> {
    if tags.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: tags.len(),
        });
    }
    if let Some(&tag) = tags.iter().find(|&&t| t >= labels) {
        return Err(Error::TagOutOfRange { tag, labels });
    }
    Ok(())
}

/// Unnormalized score of one label path.
pub fn score_sequence(emissions: ArrayView2<f64>, params: &CrfParams, tags: &[usize]) -> Result<f64> {
    params.check(&emissions)?;
    check_tags(tags, emissions.nrows(), params.labels())?;
    let mut score = params.start[tags[0]] + params.end[tags[tags.len() - 1]];
    for (k, &tag) in tags.iter().enumerate() {
        score += emissions[[k, tag]];
        if k > 0 {
            score += params.transitions[[tags[k - 1], tag]];
        }
    }
    Ok(score)
}

/// Forward log-messages: `alpha[k][j]` = log-sum of all prefixes ending in `j` at `k`.
fn forward(emissions: &ArrayView2<f64>, params: &CrfParams) -> Array2<f64> {
    let (n, l) = emissions.dim();
    let mut alpha = Array2::zeros((n, l));
    for j in 0..l {
        alpha[[0, j]] = params.start[j] + emissions[[0, j]];
    }
    for k in 1..n {
        for j in 0..l {
            let lse = log_sum_exp((0..l).map(|i| alpha[[k - 1, i]] + params.transitions[[i, j]]));
            alpha[[k, j]] = lse + emissions[[k, j]];
        }
    }
    alpha
}

/// Backward log-messages: `beta[k][i]` = log-sum of all suffixes after `k` given `i` at `k`.
fn backward(emissions: &ArrayView2<f64>, params: &CrfParams) -> Array2<f64> {
    let (n, l) = emissions.dim();
    let mut beta = Array2::zeros((n, l));
    for i in 0..l {
        beta[[n - 1, i]] = params.end[i];
    }
    for k in (0..n - 1).rev() {
        for i in 0..l {
            beta[[k, i]] = log_sum_exp(
                (0..l).map(|j| params.transitions[[i, j]] + emissions[[k + 1, j]] + beta[[k + 1, j]]),
            );
        }
    }
    beta
}

/// log of the sum over all `L^n` paths of `exp(score)`, via the forward recursion.
pub fn log_partition(emissions: ArrayView2<f64>, params: &CrfParams) -> Result<f64> {
    params.check(&emissions)?;
    let alpha = forward(&emissions, params);
    let last = alpha.row(alpha.nrows() - 1);
    Ok(log_sum_exp(last.iter().zip(params.end.iter()).map(|(a, e)| a + e)))
}

/// Same quantity through the backward recursion.
pub fn log_partition_backward(emissions: ArrayView2<f64>, params: &CrfParams) -> Result<f64> {
    params.check(&emissions)?;
    let beta = backward(&emissions, params);
    Ok(log_sum_exp(
        (0..params.labels()).map(|j| params.start[j] + emissions[[0, j]] + beta[[0, j]]),
    ))
}

/// Per-position label marginals `P(y_k = j | x)`.
pub fn marginals(emissions: ArrayView2<f64>, params: &CrfParams) -> Result<Array2<f64>> {
    params.check(&emissions)?;
    let alpha = forward(&emissions, params);
    let beta = backward(&emissions, params);
    let log_z = log_sum_exp(
        alpha
            .row(alpha.nrows() - 1)
            .iter()
            .zip(params.end.iter())
            .map(|(a, e)| a + e),
    );
    Ok((&alpha + &beta).mapv(|v| (v - log_z).exp()))
}

/// `log Z - score(gold)` and its gradient via forward-backward marginals.
pub fn nll_loss(
    emissions: ArrayView2<f64>,
    params: &CrfParams,
    gold: &[usize],
) -> Result<(f64, CrfGradients)> {
    params.check(&emissions)?;
    let (n, l) = emissions.dim();
    check_tags(gold, n, l)?;
    let alpha = forward(&emissions, params);
    let beta = backward(&emissions, params);
    let log_z = log_sum_exp((0..l).map(|j| alpha[[n - 1, j]] + params.end[j]));
    let gold_score = score_sequence(emissions, params, gold)?;
    let loss = log_z - gold_score;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }

    let mut g_emit = (&alpha + &beta).mapv(|v| (v - log_z).exp());
    let mut g_start = g_emit.row(0).to_owned();
    let mut g_end = g_emit.row(n - 1).to_owned();
    let mut g_trans = Array2::zeros((l, l));
    for k in 1..n {
        for i in 0..l {
            for j in 0..l {
                let log_p = alpha[[k - 1, i]]
                    + params.transitions[[i, j]]
                    + emissions[[k, j]]
                    + beta[[k, j]]
                    - log_z;
                g_trans[[i, j]] += log_p.exp();
            }
        }
    }
    for (k, &tag) in gold.iter().enumerate() {
        g_emit[[k, tag]] -= 1.0;
        if k > 0 {
            g_trans[[gold[k - 1], tag]] -= 1.0;
        }
    }
    g_start[gold[0]] -= 1.0;
    g_end[gold[n - 1]] -= 1.0;
    Ok((
        loss,
        CrfGradients {
            emissions: g_emit,
            transitions: g_trans,
            start: g_start,
            end: g_end,
        },
    ))
}

fn constrained(params: &CrfParams, constraints: Constraints) -> (Array2<f64>, Array1<f64>) {
    let mut trans = params.transitions.clone();
    let mut start = params.start.clone();
    if constraints == Constraints::Bio && params.labels() == BioTag::COUNT {
        let (o, i) = (BioTag::O.index(), BioTag::I.index());
        trans[[o, i]] = FORBIDDEN;
        start[i] = FORBIDDEN;
    }
    (trans, start)
}

/// Highest-scoring path and its score (under the constrained parameters).
///
/// Ties resolve to the lowest label index, both at each backpointer and
/// for the final label.
pub fn viterbi(
    emissions: ArrayView2<f64>,
    params: &CrfParams,
    constraints: Constraints,
) -> Result<(Vec<usize>, f64)> {
    params.check(&emissions)?;
    let (n, l) = emissions.dim();
    let (trans, start) = constrained(params, constraints);
    let argmax = |values: ArrayView1<f64>| -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, &v) in values.iter().enumerate() {
            if v > best.1 {
                best = (i, v);
            }
        }
        best
    };

    let mut score: Array1<f64> = &start + &emissions.row(0);
    let mut backptr = Array2::<usize>::zeros((n, l));
    let mut candidates = Array1::zeros(l);
    for k in 1..n {
        let mut next = Array1::zeros(l);
        for j in 0..l {
            for i in 0..l {
                candidates[i] = score[i] + trans[[i, j]];
            }
            let (best_i, best) = argmax(candidates.view());
            backptr[[k, j]] = best_i;
            next[j] = best + emissions[[k, j]];
        }
        score = next;
    }
    let final_scores = &score + &params.end;
    let (mut tag, best) = argmax(final_scores.view());
    let mut path = vec![0; n];
    path[n - 1] = tag;
    for k in (1..n).rev() {
        tag = backptr[[k, tag]];
        path[k - 1] = tag;
    }
    Ok((path, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn two_by_two() -> (Array2<f64>, CrfParams) {
        (array![[1.0, 0.0], [0.0, 1.0]], CrfParams::zeros(2))
    }

    #[test]
    fn zero_scores_everywhere() {
        let e = Array2::zeros((3, 3));
        let p = CrfParams::zeros(3);
        assert_eq!(score_sequence(e.view(), &p, &[0, 2, 1]).unwrap(), 0.0);
    }

    #[test]
    fn hand_sum_score() {
        let (e, p) = two_by_two();
        assert_eq!(score_sequence(e.view(), &p, &[0, 1]).unwrap(), 2.0);
    }

    #[test]
    fn constant_emission_shift_is_linear() {
        let (e, mut p) = two_by_two();
        p.transitions[[0, 1]] = 0.7;
        let shifted = &e + 0.25;
        for tags in [[0, 1], [1, 1], [1, 0]] {
            let a = score_sequence(e.view(), &p, &tags).unwrap();
            let b = score_sequence(shifted.view(), &p, &tags).unwrap();
            assert!((b - a - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_partition_is_log_l_pow_n() {
        let e = Array2::zeros((2, 3));
        let z = log_partition(e.view(), &CrfParams::zeros(3)).unwrap();
        assert!((z - 9f64.ln()).abs() < 1e-12);
        assert!((z - 2.1972).abs() < 1e-4);
    }

    #[test]
    fn enumerated_partition() {
        let (e, p) = two_by_two();
        let expected = (1f64.exp() + 2f64.exp() + 1.0 + 1f64.exp()).ln();
        let z = log_partition(e.view(), &p).unwrap();
        assert!((z - expected).abs() < 1e-12);
        assert!((z - 2.6265).abs() < 1e-4);
        let zb = log_partition_backward(e.view(), &p).unwrap();
        assert!((z - zb).abs() < 1e-12);
    }

    #[test]
    fn nll_examples() {
        let e = Array2::zeros((1, 3));
        let (loss, _) = nll_loss(e.view(), &CrfParams::zeros(3), &[1]).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);

        let (e, p) = two_by_two();
        let (loss, _) = nll_loss(e.view(), &p, &[0, 1]).unwrap();
        assert!((loss - 0.6265).abs() < 1e-4);
    }

    #[test]
    fn viterbi_examples() {
        let (e, p) = two_by_two();
        let (path, score) = viterbi(e.view(), &p, Constraints::None).unwrap();
        assert_eq!(path, vec![0, 1]);
        assert_eq!(score, 2.0);

        let e = Array2::zeros((4, 3));
        let (path, _) = viterbi(e.view(), &CrfParams::zeros(3), Constraints::None).unwrap();
        assert_eq!(path, vec![0; 4]);
    }

    #[test]
    fn bio_constraints_block_orphan_inside() {
        let (i, o) = (BioTag::I.index(), BioTag::O.index());
        let mut e = Array2::zeros((3, 3));
        e[[0, i]] = 5.0;
        e[[1, o]] = 5.0;
        e[[2, i]] = 5.0;
        let p = CrfParams::zeros(3);
        let (free, _) = viterbi(e.view(), &p, Constraints::None).unwrap();
        assert_eq!(free, vec![i, o, i]);
        let (path, _) = viterbi(e.view(), &p, Constraints::Bio).unwrap();
        assert!(crate::tags::is_valid_bio(&crate::tags::from_indices::<BioTag>(&path)));
    }

    #[test]
    fn errors() {
        let (e, p) = two_by_two();
        assert!(matches!(score_sequence(e.view(), &p, &[0, 2]), Err(Error::TagOutOfRange { .. })));
        assert!(matches!(score_sequence(e.view(), &p, &[0]), Err(Error::LengthMismatch { .. })));
        assert!(nll_loss(e.view(), &p, &[3, 0]).is_err());
    }
}
