use serde::{Deserialize, Serialize};

use super::dataset::Sample;
use crate::error::{Error, Result};
use crate::gan::{Classification, Discriminator};
use crate::nn::Tensor;
use crate::parallel;
use crate::video_io::Label;

/// Anything that maps network inputs to flame probabilities.
pub trait Scorer: Sync {
    fn score_batch(&self, inputs: &[&Tensor]) -> Result<Vec<f32>>;
}

impl Scorer for Discriminator {
    fn score_batch(&self, inputs: &[&Tensor]) -> Result<Vec<f32>> {
        self.score(&Tensor::stack(inputs)?)
    }
}

/// Adapter for per-input scoring closures.
pub struct FnScorer<F>(pub F);

impl<F: Fn(&Tensor) -> f32 + Sync> Scorer for FnScorer<F> {
    fn score_batch(&self, inputs: &[&Tensor]) -> Result<Vec<f32>> {
        Ok(inputs.iter().map(|x| (self.0)(x)).collect())
    }
}

/// How block decisions are tallied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Accounting {
    /// Each block decision counts once per frame of the block.
    #[default]
    Frames,
    /// Each block decision counts once.
    Blocks,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn add(&mut self, truth: Label, predicted: Label, weight: u64) {
        match (truth, predicted) {
            (Label::Flame, Label::Flame) => self.tp += weight,
            (Label::Flame, _) => self.fn_ += weight,
            (_, Label::Flame) => self.fp += weight,
            _ => self.tn += weight,
        }
    }

    pub fn merge(self, other: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + other.tp,
            tn: self.tn + other.tn,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
        }
    }

    /// `TN / (TN + FP)`, or `None` without negatives.
    pub fn tnr(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }

    /// `TP / (TP + FN)`, or `None` without positives.
    pub fn tpr(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn false_positive_rate(&self) -> Option<f64> {
        ratio(self.fp, self.tn + self.fp)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

const EVAL_CHUNK: usize = 16;

/// Classify every sample at `threshold` and tally the decisions.
pub fn evaluate(scorer: &dyn Scorer, samples: &[Sample], threshold: f32, accounting: Accounting) -> Result<ConfusionCounts> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("empty test set".into()));
    }
    if let Some(s) = samples.iter().find(|s| s.label == Label::Unlabeled) {
        return Err(Error::Config(format!("sample from {} has no label", s.source_id)));
    }
    let chunks: Vec<&[Sample]> = samples.chunks(EVAL_CHUNK).collect();
    let partial = parallel::map_indexed(chunks.len(), |i| -> Result<ConfusionCounts> {
        let chunk = chunks[i];
        let inputs: Vec<&Tensor> = chunk.iter().map(|s| &s.input).collect();
        let scores = scorer.score_batch(&inputs)?;
        let mut c = ConfusionCounts::default();
        for (s, score) in chunk.iter().zip(scores) {
            let weight = match accounting {
                Accounting::Frames => s.frames as u64,
                Accounting::Blocks => 1,
            };
            c.add(s.label, Classification::from_score(score, threshold).label, weight);
        }
        Ok(c)
    });
    partial.into_iter().try_fold(ConfusionCounts::default(), |acc, c| Ok(acc.merge(c?)))
}

/// One row of the report; rates are percentages and absent when undefined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub mode: String,
    pub threshold: f32,
    #[serde(rename = "TP")]
    pub tp: u64,
    #[serde(rename = "TN")]
    pub tn: u64,
    #[serde(rename = "FP")]
    pub fp: u64,
    #[serde(rename = "FN")]
    pub fn_: u64,
    #[serde(rename = "TNR")]
    pub tnr: Option<f64>,
    #[serde(rename = "TPR")]
    pub tpr: Option<f64>,
    pub seed: u64,
    pub config_hash: String,
}

impl MetricsRow {
    pub fn new(mode: impl Into<String>, threshold: f32, counts: ConfusionCounts, seed: u64, config_hash: String) -> Self {
        MetricsRow {
            mode: mode.into(),
            threshold,
            tp: counts.tp,
            tn: counts.tn,
            fp: counts.fp,
            fn_: counts.fn_,
            tnr: counts.tnr().map(|r| 100.0 * r),
            tpr: counts.tpr().map(|r| 100.0 * r),
            seed,
            config_hash,
        }
    }

    pub fn counts(&self) -> ConfusionCounts {
        ConfusionCounts { tp: self.tp, tn: self.tn, fp: self.fp, fn_: self.fn_ }
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"))
}

/// Fixed-width text table of metrics rows.
pub fn format_table(rows: &[MetricsRow]) -> String {
    let mut out = format!(
        "{:<16} {:>9} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
        "mode", "threshold", "TP", "TN", "FP", "FN", "TNR%", "TPR%"
    );
    for r in rows {
        out += &format!(
            "{:<16} {:>9.3} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
            r.mode,
            r.threshold,
            r.tp,
            r.tn,
            r.fp,
            r.fn_,
            pct(r.tnr),
            pct(r.tpr)
        );
    }
    out
}
