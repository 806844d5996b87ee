//! Self-guided progressive sampling.
//!
//! Every iteration records the average hardness of its batch pair. Once a
//! threshold exists, only iterations whose average hardness is at most the
//! threshold update the model. At each epoch end the threshold becomes the
//! median of that epoch's records and the record buffer is cleared.
//!
//! The very first epoch (the pre-epoch) runs ungated; its median seeds the
//! threshold, after which training optionally restarts from the initial
//! parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::median;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpsMode {
    PreEpoch,
    Gated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpsState {
    alpha: Option<f64>,
    records: Vec<f64>,
    epoch: usize,
}

impl Default for SpsState {
    fn default() -> Self {
        SpsState::new()
    }
}

/// Outcome of testing one iteration against the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub selected: bool,
    pub avg_gamma: f64,
    pub alpha: f64,
}

impl SpsState {
    pub fn new() -> Self {
        SpsState {
            alpha: None,
            records: Vec::new(),
            epoch: 0,
        }
    }

    pub fn mode(&self) -> SpsMode {
        if self.alpha.is_some() {
            SpsMode::Gated
        } else {
            SpsMode::PreEpoch
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    /// Hardness values recorded so far in the current epoch.
    pub fn records(&self) -> &[f64] {
        &self.records
    }

    /// Number of completed epochs, the pre-epoch included.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn record(&mut self, avg_gamma: f64) -> Result<()> {
        if !(avg_gamma >= 0.0 && avg_gamma.is_finite()) {
            return Err(Error::Data(format!(
                "recorded hardness must be finite and >= 0, got {avg_gamma}"
            )));
        }
        self.records.push(avg_gamma);
        Ok(())
    }

    /// `selected` iff `avg_gamma <= alpha`; ties are selected.
    pub fn gate(&self, avg_gamma: f64) -> Result<GateDecision> {
        let alpha = self
            .alpha
            .ok_or_else(|| Error::State("gate called before the pre-epoch finished".into()))?;
        Ok(GateDecision {
            selected: avg_gamma <= alpha,
            avg_gamma,
            alpha,
        })
    }

    /// Sets the threshold to the median of this epoch's records and starts a
    /// new epoch. Returns the new threshold.
    pub fn epoch_end(&mut self) -> Result<f64> {
        let alpha = median(&mut self.records)
            .ok_or_else(|| Error::State(format!("epoch {} recorded no iterations", self.epoch)))?;
        self.alpha = Some(alpha);
        self.records.clear();
        self.epoch += 1;
        Ok(alpha)
    }
}

/// What a training loop must provide for [`run_pre_epoch`] and
/// [`run_gated_epoch`] to drive it.
pub trait ProgressiveTrainer {
    /// Prepares epoch `epoch` and returns its number of steps.
    fn begin_epoch(&mut self, epoch: usize) -> Result<usize>;
    /// Forward pass for one step; returns the average hardness over stages.
    fn forward(&mut self, step: usize) -> Result<f64>;
    /// Finishes the step just measured. `update` says whether to backpropagate
    /// and apply the optimizer; `decision` is `None` in the pre-epoch.
    fn finish(&mut self, update: bool, decision: Option<GateDecision>) -> Result<()>;
    /// Restores the initial parameters, optimizer state and data order.
    fn reset(&mut self) -> Result<()>;
}

/// What to do with the model after the pre-epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AfterPreEpoch {
    #[default]
    Reset,
    Continue,
}

/// Runs the ungated pre-epoch and sets the initial threshold.
pub fn run_pre_epoch<T: ProgressiveTrainer>(
    trainer: &mut T,
    state: &mut SpsState,
    after: AfterPreEpoch,
) -> Result<f64> {
    if state.mode() != SpsMode::PreEpoch || !state.records.is_empty() {
        return Err(Error::State("pre-epoch needs a fresh scheduler".into()));
    }
    let steps = trainer.begin_epoch(state.epoch)?;
    for step in 0..steps {
        let avg = trainer.forward(step)?;
        state.record(avg)?;
        trainer.finish(true, None)?;
    }
    let alpha = state.epoch_end()?;
    if after == AfterPreEpoch::Reset {
        trainer.reset()?;
    }
    Ok(alpha)
}

/// Runs one gated epoch and moves the threshold to its median.
/// Returns the number of iterations that updated the model.
pub fn run_gated_epoch<T: ProgressiveTrainer>(trainer: &mut T, state: &mut SpsState) -> Result<usize> {
    let steps = trainer.begin_epoch(state.epoch)?;
    let mut selected = 0;
    for step in 0..steps {
        let avg = trainer.forward(step)?;
        // Recorded before the gate test, so skipped iterations still count.
        state.record(avg)?;
        let decision = state.gate(avg)?;
        if decision.selected {
            selected += 1;
        }
        trainer.finish(decision.selected, Some(decision))?;
    }
    if steps > 0 && selected == 0 {
        log::warn!(
            "epoch {}: every iteration was above alpha={:?}; nothing was trained",
            state.epoch,
            state.alpha
        );
    }
    state.epoch_end()?;
    Ok(selected)
}
