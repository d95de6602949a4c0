//! Per-pixel segmentation metrics with foreground as the positive class.
//!
//! Binary metrics score the foreground only. Micro metrics treat every pixel
//! as a single-label decision over {foreground, background} and pool the
//! per-class counts; for two classes every misclassified pixel is one false
//! positive and one false negative, so micro precision, recall and F1 all
//! equal accuracy and micro Jaccard is `(tp+tn) / (tp+tn + 2(fp+fn))`.
//!
//! When both masks are empty dice, Jaccard, sensitivity and F1 are 1; when
//! exactly one is empty they are 0.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{ensure_same_dims, BinaryMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts> {
    ensure_same_dims(pred.dims(), gt.dims())?;
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// One image's scores. Field order is the CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricRow {
    pub jaccard_micro: f64,
    pub jaccard_binary: f64,
    pub accuracy_binary: f64,
    pub sensitivity: f64,
    pub f1_micro: f64,
    pub f1_binary: f64,
    pub recall_micro: f64,
    pub recall_binary: f64,
    pub dice: f64,
}

const FIELDS: [&str; 9] = [
    "jaccard_micro",
    "jaccard_binary",
    "accuracy_binary",
    "sensitivity",
    "f1_micro",
    "f1_binary",
    "recall_micro",
    "recall_binary",
    "dice",
];

impl MetricRow {
    pub fn from_counts(c: &ConfusionCounts) -> Self {
        let ratio = |num: u64, den: u64| {
            if den == 0 {
                1.0
            } else {
                num as f64 / den as f64
            }
        };
        let correct = c.tp + c.tn;
        let wrong = c.fp + c.fn_;
        let dice = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_);
        let recall = if c.tp + c.fn_ == 0 && c.fp > 0 {
            0.0
        } else {
            ratio(c.tp, c.tp + c.fn_)
        };
        let accuracy = ratio(correct, c.total());
        Self {
            jaccard_micro: ratio(correct, correct + 2 * wrong),
            jaccard_binary: ratio(c.tp, c.tp + c.fp + c.fn_),
            accuracy_binary: accuracy,
            sensitivity: recall,
            f1_micro: accuracy,
            // 2PR/(P+R) reduces to the dice ratio; computing it the same way
            // keeps the two bit-identical
            f1_binary: dice,
            recall_micro: accuracy,
            recall_binary: recall,
            dice,
        }
    }

    pub fn values(&self) -> [f64; 9] {
        [
            self.jaccard_micro,
            self.jaccard_binary,
            self.accuracy_binary,
            self.sensitivity,
            self.f1_micro,
            self.f1_binary,
            self.recall_micro,
            self.recall_binary,
            self.dice,
        ]
    }

    fn from_values(v: [f64; 9]) -> Self {
        Self {
            jaccard_micro: v[0],
            jaccard_binary: v[1],
            accuracy_binary: v[2],
            sensitivity: v[3],
            f1_micro: v[4],
            f1_binary: v[5],
            recall_micro: v[6],
            recall_binary: v[7],
            dice: v[8],
        }
    }
}

pub fn evaluate_pair(pred: &BinaryMask, gt: &BinaryMask) -> Result<MetricRow> {
    Ok(MetricRow::from_counts(&confusion(pred, gt)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub name: String,
    pub counts: ConfusionCounts,
    #[serde(flatten)]
    pub metrics: MetricRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<ImageMetrics>,
    /// Unweighted per-image means.
    pub mean: MetricRow,
}

/// Scores every `(name, pred, gt)` triple; rows keep input order.
pub fn evaluate_batch(pairs: &[(String, BinaryMask, BinaryMask)]) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let rows = pairs
        .par_iter()
        .map(|(name, pred, gt)| {
            let counts = confusion(pred, gt)?;
            Ok(ImageMetrics {
                name: name.clone(),
                counts,
                metrics: MetricRow::from_counts(&counts),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sums = [0.0; 9];
    for r in &rows {
        for (s, v) in sums.iter_mut().zip(r.metrics.values()) {
            *s += v;
        }
    }
    let n = rows.len() as f64;
    let mean = MetricRow::from_values(sums.map(|s| s / n));
    Ok(MetricsReport { rows, mean })
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// One row per image plus a trailing `mean` row.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["name", "tp", "fp", "fn", "tn"];
        header.extend(FIELDS);
        w.write_record(&header)?;
        for r in &self.rows {
            let c = &r.counts;
            let mut rec = vec![
                r.name.clone(),
                c.tp.to_string(),
                c.fp.to_string(),
                c.fn_.to_string(),
                c.tn.to_string(),
            ];
            rec.extend(r.metrics.values().iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        let mut rec = vec![
            "mean".to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ];
        rec.extend(self.mean.values().iter().map(f64::to_string));
        w.write_record(&rec)?;
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}
