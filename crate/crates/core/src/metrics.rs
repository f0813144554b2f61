//! Classification metrics and the majority vote.
//!
//! Forged is the positive class. Rates are percentages; a rate whose
//! denominator is zero is NaN and its name is listed in `undefined`.

use crate::preprocess::Label;
use crate::{invalid, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tnr: f64,
    /// TP / (TP + FN).
    pub tpr: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub undefined: Vec<&'static str>,
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        100.0 * num as f64 / den as f64
    }
}

pub fn compute_metrics(predicted: &[Label], truth: &[Label]) -> Result<MetricsReport> {
    if predicted.is_empty() {
        return invalid("no predictions to score");
    }
    if predicted.len() != truth.len() {
        return invalid(format!("{} predictions for {} labels", predicted.len(), truth.len()));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (Label::Forged, Label::Forged) => tp += 1,
            (Label::Original, Label::Original) => tn += 1,
            (Label::Forged, Label::Original) => fp += 1,
            (Label::Original, Label::Forged) => fn_ += 1,
        }
    }
    Ok(from_counts(tp, tn, fp, fn_))
}

pub fn from_counts(tp: usize, tn: usize, fp: usize, fn_: usize) -> MetricsReport {
    let tnr = pct(tn, tn + fp);
    let tpr = pct(tp, tp + fn_);
    let precision = pct(tp, tp + fp);
    let recall = tpr;
    let f1 = if precision.is_nan() || recall.is_nan() || precision + recall == 0.0 {
        f64::NAN
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let mut undefined = Vec::new();
    for (name, v) in [
        ("tnr", tnr),
        ("tpr", tpr),
        ("precision", precision),
        ("recall", recall),
        ("f1", f1),
    ] {
        if v.is_nan() {
            undefined.push(name);
        }
    }
    MetricsReport {
        tp,
        tn,
        fp,
        fn_,
        tnr,
        tpr,
        precision,
        recall,
        f1,
        accuracy: pct(tp + tn, tp + tn + fp + fn_),
        undefined,
    }
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "tp,tn,fp,fn,tnr,tpr,precision,recall,f1,accuracy";

    pub fn csv_row(&self) -> String {
        let f = |v: f64| {
            if v.is_nan() {
                "NaN".to_string()
            } else {
                format!("{v:.2}")
            }
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.tp,
            self.tn,
            self.fp,
            self.fn_,
            f(self.tnr),
            f(self.tpr),
            f(self.precision),
            f(self.recall),
            f(self.f1),
            f(self.accuracy)
        )
    }
}

/// Forged when forged votes are at least half; an even split counts as forged.
pub fn majority_vote(votes: &[Label]) -> Result<Label> {
    if votes.is_empty() {
        return invalid("majority vote over no votes");
    }
    let forged = votes.iter().filter(|&&v| v == Label::Forged).count();
    Ok(if 2 * forged >= votes.len() {
        Label::Forged
    } else {
        Label::Original
    })
}

/// Class with the larger probability; equal probabilities go to forged.
pub fn argmax_label(p_original: f32, p_forged: f32) -> Label {
    if p_forged >= p_original {
        Label::Forged
    } else {
        Label::Original
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Forged as F, Original as O};

    #[test]
    fn worked_example() {
        let m = from_counts(9, 8, 2, 1);
        assert!((m.tnr - 80.0).abs() < 1e-9);
        assert!((m.recall - 90.0).abs() < 1e-9);
        assert_eq!(format!("{:.2}", m.precision), "81.82");
        assert_eq!(format!("{:.2}", m.f1), "85.71");
        assert!(m.undefined.is_empty());
    }

    #[test]
    fn perfect_and_undefined() {
        let m = compute_metrics(&[F, O, F], &[F, O, F]).unwrap();
        assert_eq!((m.tnr, m.tpr, m.f1), (100.0, 100.0, 100.0));
        let m = compute_metrics(&[O, O], &[O, O]).unwrap();
        assert!(m.tpr.is_nan());
        assert!(m.undefined.contains(&"tpr"));
        assert!(m.csv_row().contains("NaN"));
        assert!(compute_metrics(&[], &[]).is_err());
        assert!(compute_metrics(&[O], &[O, F]).is_err());
    }

    #[test]
    fn votes() {
        let six_three = [F, F, F, F, F, F, O, O, O];
        assert_eq!(majority_vote(&six_three).unwrap(), F);
        assert_eq!(majority_vote(&[O, F]).unwrap(), F);
        assert_eq!(majority_vote(&[O, O, F]).unwrap(), O);
        assert!(majority_vote(&[]).is_err());
    }
}
