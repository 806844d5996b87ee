use serde::{Deserialize, Serialize};

use crate::data::DomainDataset;
use crate::error::Result;
use crate::kernel::{hardness_value, KernelConfig};
use crate::model::Model;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Discriminator margin at or below which a sample counts as confused.
pub const CONFUSION_MARGIN: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub source_accuracy: f64,
    /// Absent when the dataset carries no held-out target labels.
    pub target_accuracy: Option<f64>,
    /// Share of pooled samples with `max(p, 1 - p) <= 0.6` under the
    /// last-stage discriminator.
    pub confusion_degree: f64,
    /// Average hardness over consecutive, unshuffled batch pairs.
    pub mean_hardness: f64,
}

/// Fraction of probabilities whose larger class margin is at most
/// [`CONFUSION_MARGIN`].
pub fn confusion_degree(probs: &[f64]) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    let confused = probs
        .iter()
        .filter(|&&p| p.max(1.0 - p) <= CONFUSION_MARGIN)
        .count();
    confused as f64 / probs.len() as f64
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len().max(1) as f64
}

/// Source probabilities of the last-stage discriminator for each row.
pub fn discriminator_probabilities(model: &Model, x: &Tensor) -> Result<Vec<f64>> {
    let tape = Tape::new();
    let params = model.bind_constants(&tape);
    let feats = model.features(&params, tape.constant(x.clone()))?;
    let module = model.modules.last().expect("at least one stage");
    let last = *feats.last().expect("at least one stage");
    Ok(module.discriminate(&params, last)?.value().into_data())
}

/// Per-stage hardness of the model's features for one batch pair.
pub fn stage_hardness_values(
    model: &Model,
    source: &Tensor,
    target: &Tensor,
    kernel: &KernelConfig,
) -> Result<Vec<f64>> {
    let tape = Tape::new();
    let params = model.bind_constants(&tape);
    let fs = model.features(&params, tape.constant(source.clone()))?;
    let ft = model.features(&params, tape.constant(target.clone()))?;
    fs.iter()
        .zip(&ft)
        .map(|(s, t)| hardness_value(&s.value(), &t.value(), kernel))
        .collect()
}

/// Scores `model` on both domains. Reads the held-out target labels once.
pub fn evaluate(
    model: &Model,
    dataset: &DomainDataset,
    kernel: &KernelConfig,
    batch_size: usize,
) -> Result<EvalReport> {
    let source_x = &dataset.source.x;
    let target_x = dataset.target.features();
    let source_accuracy = accuracy(&model.predict(source_x)?, &dataset.source.y);
    let target_accuracy = match dataset.target.evaluation_labels() {
        Some(labels) => Some(accuracy(&model.predict(target_x)?, labels)),
        None => None,
    };
    let pooled = Tensor::vstack(&[source_x, target_x])?;
    let confusion = confusion_degree(&discriminator_probabilities(model, &pooled)?);

    let n = source_x.rows().min(target_x.rows());
    let batch = batch_size.clamp(1, n.max(1));
    let mut total = 0.0;
    let mut count = 0usize;
    for start in (0..n).step_by(batch) {
        let end = (start + batch).min(n);
        if end - start < batch && count > 0 {
            break;
        }
        let idx: Vec<usize> = (start..end).collect();
        let g = stage_hardness_values(
            model,
            &source_x.select_rows(&idx),
            &target_x.select_rows(&idx),
            kernel,
        )?;
        total += g.iter().sum::<f64>() / g.len() as f64;
        count += 1;
    }
    Ok(EvalReport {
        source_accuracy,
        target_accuracy,
        confusion_degree: confusion,
        mean_hardness: if count > 0 { total / count as f64 } else { 0.0 },
    })
}
