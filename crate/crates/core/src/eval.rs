//! Segmentation-point P/R/F1, character ROUGE-L and the combined score.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::OutlineAnnotation;
use crate::extraction::PredictionRecord;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

impl Prf {
    pub const ZERO: Prf = Prf {
        precision: 0.0,
        recall: 0.0,
        f: 0.0,
    };
}

/// Weighted harmonic mean; `beta < 1` favours precision. Zero when the
/// denominator vanishes.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = b2 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / denom
    }
}

fn prf_from_counts(correct: usize, predicted: usize, gold: usize) -> Prf {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(correct, predicted);
    let recall = ratio(correct, gold);
    Prf {
        precision,
        recall,
        f: f_beta(precision, recall, 1.0),
    }
}

fn distinct(points: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for &p in points {
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

/// Points of one video, compared by exact equality after collapsing
/// duplicates.
pub fn segmentation_prf(pred: &[f64], gold: &[f64]) -> Prf {
    let pred = distinct(pred);
    let gold = distinct(gold);
    let correct = pred.iter().filter(|p| gold.contains(p)).count();
    prf_from_counts(correct, pred.len(), gold.len())
}

/// Longest common subsequence length, O(|a|·|b|) time, O(|b|) memory.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { above.max(row[j]) };
            diag = above;
        }
    }
    row[b.len()]
}

/// Character ROUGE-L of a candidate against one reference, with F0.5.
pub fn rouge_l(candidate: &str, reference: &str) -> Prf {
    let c: Vec<char> = candidate.chars().collect();
    let r: Vec<char> = reference.chars().collect();
    if c.is_empty() || r.is_empty() {
        return Prf::ZERO;
    }
    let l = lcs_len(&c, &r) as f64;
    let precision = l / c.len() as f64;
    let recall = l / r.len() as f64;
    Prf {
        precision,
        recall,
        f: f_beta(precision, recall, 0.5),
    }
}

/// Segmentation F1 times ROUGE-L F0.5, from unrounded inputs.
pub fn overall_score(seg_f1: f64, rouge_f05: f64) -> f64 {
    seg_f1 * rouge_f05
}

/// How per-heading ROUGE scores are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RougeAggregation {
    /// Mean of per-heading P, R and F0.5.
    #[default]
    Macro,
    /// LCS and lengths pooled over headings, then P, R, F0.5.
    Micro,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seg_precision: f64,
    pub seg_recall: f64,
    pub seg_f1: f64,
    pub rouge_p: f64,
    pub rouge_r: f64,
    pub rouge_f05: f64,
    pub overall: f64,
    pub matched_points: usize,
    pub predicted_points: usize,
    pub gold_points: usize,
    pub scored_headings: usize,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialization cannot fail")
    }

    /// Percentages with one decimal, in the column order of the usual
    /// results table.
    pub fn table(&self) -> String {
        let pct = |v: f64| format!("{:.1}", 100.0 * v);
        let header = ["Seg-P", "Seg-R", "Seg-F1", "RL-P", "RL-R", "RL-F0.5", "Overall"];
        let values = [
            self.seg_precision,
            self.seg_recall,
            self.seg_f1,
            self.rouge_p,
            self.rouge_r,
            self.rouge_f05,
            self.overall,
        ];
        let row: Vec<String> = values.iter().map(|&v| pct(v)).collect();
        format!(
            "| {} |\n|{}|\n| {} |\npoints: matched={} predicted={} gold={} scored_headings={}\n",
            header.join(" | "),
            header.iter().map(|h| "-".repeat(h.len() + 2)).collect::<Vec<_>>().join("|"),
            row.iter().zip(header).map(|(v, h)| format!("{v:>w$}", w = h.len())).collect::<Vec<_>>().join(" | "),
            self.matched_points,
            self.predicted_points,
            self.gold_points,
            self.scored_headings
        )
    }
}

/// Scores predictions against gold annotations over all videos present on
/// either side. A repeated (video, time) prediction keeps its first heading.
pub fn evaluate_corpus(
    predictions: &[PredictionRecord],
    gold: &[OutlineAnnotation],
    aggregation: RougeAggregation,
) -> EvalReport {
    let mut pred_by_video: BTreeMap<&str, Vec<(f64, &str)>> = BTreeMap::new();
    for p in predictions {
        let points = pred_by_video.entry(&p.video_id).or_default();
        if points.iter().any(|&(t, _)| t == p.t) {
            log::warn!("duplicate prediction for video {} at t={}; keeping the first", p.video_id, p.t);
        } else {
            points.push((p.t, &p.heading));
        }
    }
    let mut gold_by_video: BTreeMap<&str, Vec<(f64, &str)>> = BTreeMap::new();
    for g in gold {
        let points = gold_by_video.entry(&g.video_id).or_default();
        if !points.iter().any(|&(t, _)| t == g.segmentation_time) {
            points.push((g.segmentation_time, &g.rewritten));
        }
    }

    let (mut matched, mut predicted, mut gold_points) = (0, 0, 0);
    let mut scores: Vec<Prf> = Vec::new();
    let (mut lcs_total, mut cand_total, mut ref_total) = (0usize, 0usize, 0usize);
    for (video, preds) in &pred_by_video {
        predicted += preds.len();
        let Some(golds) = gold_by_video.get(video) else { continue };
        for &(t, heading) in preds {
            if let Some(&(_, reference)) = golds.iter().find(|&&(g, _)| g == t) {
                matched += 1;
                scores.push(rouge_l(heading, reference));
                let (c, r): (Vec<char>, Vec<char>) = (heading.chars().collect(), reference.chars().collect());
                lcs_total += lcs_len(&c, &r);
                cand_total += c.len();
                ref_total += r.len();
            }
        }
    }
    for golds in gold_by_video.values() {
        gold_points += golds.len();
    }

    let seg = prf_from_counts(matched, predicted, gold_points);
    let rouge = if scores.is_empty() {
        Prf::ZERO
    } else {
        match aggregation {
            RougeAggregation::Macro => {
                let n = scores.len() as f64;
                Prf {
                    precision: scores.iter().map(|s| s.precision).sum::<f64>() / n,
                    recall: scores.iter().map(|s| s.recall).sum::<f64>() / n,
                    f: scores.iter().map(|s| s.f).sum::<f64>() / n,
                }
            }
            RougeAggregation::Micro => {
                let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
                let (p, r) = (ratio(lcs_total, cand_total), ratio(lcs_total, ref_total));
                Prf {
                    precision: p,
                    recall: r,
                    f: f_beta(p, r, 0.5),
                }
            }
        }
    };
    EvalReport {
        seg_precision: seg.precision,
        seg_recall: seg.recall,
        seg_f1: seg.f,
        rouge_p: rouge.precision,
        rouge_r: rouge.recall,
        rouge_f05: rouge.f,
        overall: overall_score(seg.f, rouge.f),
        matched_points: matched,
        predicted_points: predicted,
        gold_points,
        scored_headings: scores.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn segmentation_counts() {
        let s = segmentation_prf(&[10.0, 45.0, 99.0], &[10.0, 45.0, 80.0]);
        assert!(close(s.precision, 2.0 / 3.0) && close(s.recall, 2.0 / 3.0) && close(s.f, 2.0 / 3.0));
        let same = segmentation_prf(&[1.0, 2.0], &[1.0, 2.0]);
        assert_eq!(same.f, 1.0);
        assert_eq!(segmentation_prf(&[], &[1.0]), Prf::ZERO);
        assert_eq!(segmentation_prf(&[1.0, 1.0], &[1.0]).precision, 1.0);
    }

    #[test]
    fn rouge_examples() {
        let r = rouge_l("ABDF", "ABCDEF");
        assert_eq!(r.precision, 1.0);
        assert!(close(r.recall, 2.0 / 3.0));
        // 1.25 * (2/3) / (0.25 + 2/3) = 10/11
        assert!(close(r.f, 10.0 / 11.0));
        let same = rouge_l("abc", "abc");
        assert_eq!((same.precision, same.recall, same.f), (1.0, 1.0, 1.0));
        assert_eq!(rouge_l("abc", "xyz"), Prf::ZERO);
        assert_eq!(rouge_l("", "xyz"), Prf::ZERO);
    }

    #[test]
    fn rouge_swaps_roles() {
        let (a, b) = ("abcab", "bcbba");
        assert_eq!(rouge_l(a, b).precision, rouge_l(b, a).recall);
    }

    #[test]
    fn multiplied_score() {
        assert!((overall_score(0.771, 0.850) - 0.65535).abs() < 1e-12);
    }

    fn pred(v: &str, t: f64, h: &str) -> PredictionRecord {
        PredictionRecord {
            video_id: v.into(),
            t,
            span_start: 0,
            span_end: 0,
            span_text: h.into(),
            heading: h.into(),
        }
    }

    fn gold(v: &str, t: f64, h: &str) -> OutlineAnnotation {
        OutlineAnnotation {
            video_id: v.into(),
            segmentation_time: t,
            span_start: 0,
            span_end: 0,
            rewritten: h.into(),
        }
    }

    #[test]
    fn corpus_scoring() {
        let golds = vec![gold("a", 1.0, "abc"), gold("a", 5.0, "de"), gold("b", 2.0, "xy")];
        let perfect: Vec<_> = golds.iter().map(|g| pred(&g.video_id, g.segmentation_time, &g.rewritten)).collect();
        let r = evaluate_corpus(&perfect, &golds, RougeAggregation::Macro);
        assert_eq!(r.overall, 1.0);
        assert_eq!(r.scored_headings, 3);

        let none = evaluate_corpus(&[pred("a", 9.0, "zz")], &golds, RougeAggregation::Macro);
        assert_eq!((none.rouge_f05, none.scored_headings, none.overall), (0.0, 0, 0.0));

        let preds = vec![pred("a", 1.0, "ab"), pred("a", 1.0, "zzz"), pred("b", 3.0, "xy")];
        let r = evaluate_corpus(&preds, &golds, RougeAggregation::Macro);
        assert_eq!((r.matched_points, r.predicted_points, r.gold_points), (1, 2, 3));
        assert!(close(r.rouge_p, 1.0) && close(r.rouge_r, 2.0 / 3.0));
        assert!(r.overall <= r.seg_f1.min(r.rouge_f05));
    }

    #[test]
    fn micro_pools_lengths() {
        let golds = vec![gold("a", 1.0, "abcd"), gold("a", 2.0, "x")];
        let preds = vec![pred("a", 1.0, "ab"), pred("a", 2.0, "y")];
        let macro_r = evaluate_corpus(&preds, &golds, RougeAggregation::Macro);
        let micro_r = evaluate_corpus(&preds, &golds, RougeAggregation::Micro);
        assert!(close(macro_r.rouge_p, 0.5));
        assert!(close(micro_r.rouge_p, 2.0 / 3.0));
        assert!(close(micro_r.rouge_r, 2.0 / 5.0));
    }

    #[test]
    fn report_renders() {
        let r = evaluate_corpus(&[pred("a", 1.0, "ab")], &[gold("a", 1.0, "ab")], RougeAggregation::Macro);
        assert!(r.table().contains("100.0"));
        let back: EvalReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
