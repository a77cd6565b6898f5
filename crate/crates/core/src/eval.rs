//! Point-adjusted evaluation and best-F1 threshold search.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
    pub adjusted: bool,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl EvalReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, threshold: f64, adjusted: bool) -> Self {
        let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
        let precision = ratio(tp, fp);
        let recall = ratio(tp, fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
            threshold,
            adjusted,
            tp,
            fp,
            fn_,
        }
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "precision={:.6} recall={:.6} f1={:.6} threshold={} adjusted={} tp={} fp={} fn={}",
            self.precision, self.recall, self.f1, self.threshold, self.adjusted, self.tp, self.fp, self.fn_
        )
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Data(format!(
            "length mismatch: {a} predictions/scores vs {b} labels"
        )));
    }
    Ok(())
}

/// Maximal runs `[start, end)` of true labels.
pub fn label_segments(labels: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (t, &l) in labels.iter().enumerate() {
        match (l, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                out.push((s, t));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, labels.len()));
    }
    out
}

/// Marks a whole labeled segment as detected when any of its timestamps is.
pub fn point_adjust(pred: &[bool], labels: &[bool]) -> Result<Vec<bool>> {
    check_len(pred.len(), labels.len())?;
    let mut out = pred.to_vec();
    for (s, e) in label_segments(labels) {
        if pred[s..e].iter().any(|&p| p) {
            out[s..e].fill(true);
        }
    }
    Ok(out)
}

/// Metrics of `score >= threshold` predictions.
pub fn evaluate_at(scores: &[f64], labels: &[bool], threshold: f64, adjusted: bool) -> Result<EvalReport> {
    check_len(scores.len(), labels.len())?;
    let pred: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
    let pred = if adjusted { point_adjust(&pred, labels)? } else { pred };
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &l) in pred.iter().zip(labels) {
        match (p, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    Ok(EvalReport::from_counts(tp, fp, fn_, threshold, adjusted))
}

/// Best F1 over thresholds drawn from the distinct score values.
pub fn best_f1(scores: &[f64], labels: &[bool], adjusted: bool) -> Result<EvalReport> {
    best_f1_multi(&[(scores, labels)], adjusted)
}

/// Best F1 with one threshold shared by several entities. Label segments
/// never span two entities, so adjustment happens per entity.
///
/// Runs in `O(n log n)`: lowering the threshold past a value adds its
/// negatives to the false positives and its positives (or, when adjusted,
/// whole segments whose maximum it is) to the true positives.
pub fn best_f1_multi(entities: &[(&[f64], &[bool])], adjusted: bool) -> Result<EvalReport> {
    // (value, positives gained, negatives gained)
    let mut events: Vec<(f64, usize, usize)> = Vec::new();
    let mut n_pos = 0;
    for &(scores, labels) in entities {
        check_len(scores.len(), labels.len())?;
        if let Some(t) = scores.iter().position(|s| s.is_nan()) {
            return Err(Error::Data(format!("NaN score at timestamp {t}")));
        }
        n_pos += labels.iter().filter(|&&l| l).count();
        for (&s, &l) in scores.iter().zip(labels) {
            if !l {
                events.push((s, 0, 1));
            } else if !adjusted {
                events.push((s, 1, 0));
            }
        }
        if adjusted {
            for (s, e) in label_segments(labels) {
                let max = scores[s..e].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                events.push((max, e - s, 0));
            }
        }
    }
    events.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best: Option<EvalReport> = None;
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < events.len() {
        let v = events[i].0;
        while i < events.len() && events[i].0 == v {
            tp += events[i].1;
            fp += events[i].2;
            i += 1;
        }
        let r = EvalReport::from_counts(tp, fp, n_pos - tp, v, adjusted);
        if best.as_ref().is_none_or(|b| r.f1 > b.f1) {
            best = Some(r);
        }
    }
    Ok(best.unwrap_or_else(|| EvalReport::from_counts(0, 0, n_pos, 0.0, adjusted)))
}

/// Text report: an overall line followed by one line per entity.
pub fn format_report(overall: &EvalReport, per_entity: &[(String, EvalReport)]) -> String {
    let mut s = format!("overall {overall}\n");
    for (id, r) in per_entity {
        s.push_str(&format!("entity {id} {r}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn b(xs: &[u8]) -> Vec<bool> {
        xs.iter().map(|&x| x == 1).collect()
    }

    #[test]
    fn adjusts_one_segment() {
        let out = point_adjust(&b(&[0, 0, 1, 0, 0]), &b(&[0, 1, 1, 1, 0])).unwrap();
        assert_eq!(out, b(&[0, 1, 1, 1, 0]));
        let none = b(&[0, 0, 0, 0, 0]);
        assert_eq!(point_adjust(&none, &b(&[0, 1, 1, 1, 0])).unwrap(), none);
        assert!(point_adjust(&none, &b(&[0, 1])).is_err());
    }

    #[test]
    fn segments() {
        assert_eq!(label_segments(&b(&[1, 1, 0, 1, 0, 0, 1])), vec![(0, 2), (3, 4), (6, 7)]);
        assert!(label_segments(&[]).is_empty());
    }

    #[test]
    fn separable_toy() {
        let r = best_f1(&[0.1, 0.9, 0.2], &b(&[0, 1, 0]), false).unwrap();
        assert_eq!(r.f1, 1.0);
        assert!(r.threshold > 0.2 && r.threshold <= 0.9);
    }

    #[test]
    fn no_positives_gives_zero() {
        for adj in [false, true] {
            let r = best_f1(&[0.3, 0.1], &b(&[0, 0]), adj).unwrap();
            assert_eq!(r.f1, 0.0);
            let at = evaluate_at(&[0.3, 0.1], &b(&[0, 0]), r.threshold, adj).unwrap();
            assert_eq!((at.tp, at.fp, at.fn_), (r.tp, r.fp, r.fn_));
        }
    }

    #[test]
    fn ties_count_as_anomalous() {
        let r = evaluate_at(&[0.5, 0.5], &b(&[1, 0]), 0.5, false).unwrap();
        assert_eq!((r.tp, r.fp), (1, 1));
    }

    #[test]
    fn adjusted_never_lower() {
        let mut rng = crate::rng::seeded(4);
        for _ in 0..300 {
            let n = rng.random_range(1..40);
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
            let raw = best_f1(&scores, &labels, false).unwrap();
            let adj = best_f1(&scores, &labels, true).unwrap();
            assert!(adj.f1 >= raw.f1);
        }
    }

    #[test]
    fn multi_entity_segments_do_not_merge() {
        // a segment ending entity A and one starting entity B stay separate
        let s1 = [0.0, 0.9];
        let l1 = b(&[0, 1]);
        let s2 = [0.1, 0.2, 0.2, 0.2];
        let l2 = b(&[1, 0, 0, 0]);
        let r = best_f1_multi(&[(&s1, &l1), (&s2, &l2)], true).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (1, 0, 1));
        let joined = best_f1(&[0.0, 0.9, 0.1, 0.2, 0.2, 0.2], &b(&[0, 1, 1, 0, 0, 0]), true).unwrap();
        assert_eq!(joined.tp, 2);
    }

    #[test]
    fn report_text() {
        let r = EvalReport::from_counts(1, 1, 0, 0.5, true);
        let text = format_report(&r, &[("a".into(), r)]);
        assert!(text.starts_with("overall precision=0.500000 recall=1.000000 f1=0.666667 threshold=0.5"));
        assert_eq!(text.lines().count(), 2);
    }
}
