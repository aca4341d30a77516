use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SampleFeatures;
use crate::nn::train::{predict, LABEL_FAKE};
use crate::nn::Detector;

/// Confusion counts with fake as the positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: usize,
    pub accuracy: f64,
    /// Absent when the set holds no fakes.
    pub recall: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Samples predicted fake because no ridge could be traced.
    pub no_ridges: usize,
    pub param_count: usize,
}

impl EvalReport {
    pub fn from_predictions(preds: &[usize], labels: &[usize], no_ridges: usize, param_count: usize) -> Result<Self> {
        if preds.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if preds.len() != labels.len() {
            return Err(Error::dims(labels.len(), preds.len()));
        }
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for (&p, &l) in preds.iter().zip(labels) {
            match (p == LABEL_FAKE, l == LABEL_FAKE) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
        let total = preds.len();
        let recall = (tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64);
        Ok(Self { total, accuracy: (tp + tn) as f64 / total as f64, recall, tp, fp, tn, fn_, no_ridges, param_count })
    }

    pub fn to_table(&self) -> String {
        let recall = self.recall.map_or("n/a".to_string(), |r| format!("{:.4}", r));
        format!(
            "samples     {}\naccuracy    {:.4}\nrecall      {}\nTP {}  FP {}  TN {}  FN {}\nno ridges   {}\nparameters  {}\n",
            self.total, self.accuracy, recall, self.tp, self.fp, self.tn, self.fn_, self.no_ridges, self.param_count
        )
    }
}

/// Eval-mode predictions over `samples`; see [`predict`] for the policy on
/// images without ridges.
pub fn evaluate(model: &mut Detector, samples: &[(&SampleFeatures, usize)], batch_size: usize) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let feats: Vec<_> = samples.iter().map(|(f, _)| *f).collect();
    let labels: Vec<_> = samples.iter().map(|(_, l)| *l).collect();
    let preds = predict(model, &feats, batch_size)?;
    let no_ridges = if model.mode().uses_ridge() { feats.iter().filter(|f| f.no_ridges()).count() } else { 0 };
    EvalReport::from_predictions(&preds, &labels, no_ridges, model.param_count())
}
