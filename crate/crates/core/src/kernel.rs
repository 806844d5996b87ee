//! RBF-kernel maximum mean discrepancy, used as the per-stage hardness
//! of aligning a source batch with a target batch.
//!
//! The estimate is the biased (V-statistic) form with diagonal terms:
//!
//! ```text
//! mmd^2 = mean K(S,S) + mean K(T,T) - 2 mean K(S,T)
//! hardness = sqrt(max(mmd^2, 0))
//! ```
//!
//! so it is never negative, is exactly zero for identical batches, and is
//! bounded by `sqrt(2)` because every kernel value lies in `(0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{squared_distances, Tape, Var};
use crate::tensor::Tensor;

/// How the RBF bandwidth is chosen for each batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "bandwidth", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelConfig {
    /// Recomputed per batch from the pooled, detached features.
    #[default]
    MedianHeuristic,
    Fixed {
        sigma: f64,
    },
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelConfig::Fixed { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(Error::Config(
                format!("kernel sigma must be positive, got {sigma}"),
            )),
            _ => Ok(()),
        }
    }

    /// Bandwidth for a particular source/target pair.
    pub fn sigma_for(&self, source: &Tensor, target: &Tensor) -> Result<f64> {
        match *self {
            KernelConfig::MedianHeuristic => median_heuristic_sigma(source, target),
            KernelConfig::Fixed { sigma } => {
                self.validate()?;
                Ok(sigma)
            }
        }
    }
}

/// Hardness of every stage for one batch pair, plus their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardnessReport {
    pub per_stage: Vec<f64>,
    pub avg: f64,
}

impl HardnessReport {
    pub fn from_stages(per_stage: Vec<f64>) -> Result<Self> {
        if per_stage.is_empty() {
            return Err(Error::EmptyInput("hardness report"));
        }
        let avg = per_stage.iter().sum::<f64>() / per_stage.len() as f64;
        Ok(HardnessReport { per_stage, avg })
    }
}

/// `K[i][j] = exp(-|a_i - b_j|^2 / (2 sigma^2))`.
pub fn rbf_kernel_matrix<'t>(a: Var<'t>, b: Var<'t>, sigma: f64) -> Result<Var<'t>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!(
            "kernel sigma must be positive, got {sigma}"
        )));
    }
    a.sq_dist(b)?.scale(-1.0 / (2.0 * sigma * sigma))?.exp()
}

/// `sqrt(median squared pairwise distance / 2)` over the pooled rows of both
/// batches, or `1.0` when that median is zero.
pub fn median_heuristic_sigma(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols() {
        return Err(Error::shape("median_heuristic_sigma", a.shape(), b.shape()));
    }
    let pooled = Tensor::vstack(&[a, b])?;
    let n = pooled.rows();
    if n < 2 {
        return Err(Error::Config(format!(
            "median heuristic needs at least 2 pooled points, got {n}"
        )));
    }
    let dists = squared_distances(&pooled, &pooled);
    let mut upper = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            upper.push(dists.data()[i * n + j]);
        }
    }
    let med = median(&mut upper).expect("at least one pair");
    if med > 0.0 {
        Ok((med / 2.0).sqrt())
    } else {
        Ok(1.0)
    }
}

/// Median of a non-empty slice; even lengths average the middle pair.
/// Sorts the slice in place.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Differentiable hardness between a source and a target feature batch.
///
/// The bandwidth is resolved on detached values, so it is a constant of
/// the recorded graph.
pub fn mmd_hardness<'t>(source: Var<'t>, target: Var<'t>, cfg: &KernelConfig) -> Result<Var<'t>> {
    let (s, t) = (source.value(), target.value());
    let sigma = cfg.sigma_for(&s, &t)?;
    mmd_hardness_with_sigma(source, target, sigma)
}

/// [`mmd_hardness`] with an explicit bandwidth.
pub fn mmd_hardness_with_sigma<'t>(source: Var<'t>, target: Var<'t>, sigma: f64) -> Result<Var<'t>> {
    let (s, t) = (source.value(), target.value());
    if s.rank() != 2 || t.rank() != 2 || s.cols() != t.cols() {
        return Err(Error::shape("mmd_hardness", s.shape(), t.shape()));
    }
    if s.rows() == 0 || t.rows() == 0 {
        return Err(Error::EmptyInput("mmd_hardness"));
    }
    let within_s = rbf_kernel_matrix(source, source, sigma)?.mean()?;
    let within_t = rbf_kernel_matrix(target, target, sigma)?.mean()?;
    // The cross term is always evaluated in one canonical orientation, which
    // makes the estimate bit-for-bit symmetric in its arguments.
    let (x, y) = if canonical_first(&s, &t) {
        (source, target)
    } else {
        (target, source)
    };
    let cross = rbf_kernel_matrix(x, y, sigma)?.mean()?;
    within_s.add(within_t)?.sub(cross.scale(2.0)?)?.sqrt_clamped()
}

fn canonical_first(a: &Tensor, b: &Tensor) -> bool {
    let key = |t: &Tensor| (t.rows(), t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    key(a) <= key(b)
}

/// Hardness of one pair of plain tensors, evaluated on a scratch tape.
pub fn hardness_value(source: &Tensor, target: &Tensor, cfg: &KernelConfig) -> Result<f64> {
    let tape = Tape::new();
    let s = tape.constant(source.clone());
    let t = tape.constant(target.clone());
    mmd_hardness(s, t, cfg)?.item()
}

/// Per-stage hardness variables, in stage order. Errors carry the stage index.
pub fn stage_hardness<'t>(stages: &[(Var<'t>, Var<'t>)], cfg: &KernelConfig) -> Result<Vec<Var<'t>>> {
    if stages.is_empty() {
        return Err(Error::EmptyInput("multi_stage_hardness"));
    }
    stages
        .iter()
        .enumerate()
        .map(|(stage, &(s, t))| {
            mmd_hardness(s, t, cfg).map_err(|e| Error::Stage {
                stage,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn multi_stage_hardness(stages: &[(Var<'_>, Var<'_>)], cfg: &KernelConfig) -> Result<HardnessReport> {
    let vars = stage_hardness(stages, cfg)?;
    let values = vars.iter().map(Var::item).collect::<Result<Vec<_>>>()?;
    HardnessReport::from_stages(values)
}
