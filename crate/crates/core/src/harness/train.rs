use std::path::{Path, PathBuf};

use crate::adversarial::{batch_loss, DomainBatch, LossOptions};
use crate::data::{batch_iterator, epoch_seed, DomainDataset};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::optim::Sgd;
use crate::sps::{self, GateDecision, ProgressiveTrainer, SpsState};
use crate::tape::{NodeId, Tape};

use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::eval::{evaluate, EvalReport};
use super::log::{
    EpochRecord, IterationRecord, LogHeader, LogLine, MetricsWriter, Phase, METRICS_SCHEMA, METRICS_VERSION,
};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_FILE: &str = "model.json";
pub const EVAL_FILE: &str = "eval.json";

/// Result of one training run.
#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub records: Vec<IterationRecord>,
    pub epochs: Vec<EpochRecord>,
    /// Evaluation after the last epoch, when per-epoch evaluation is on.
    pub final_eval: Option<EvalReport>,
    pub log_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
}

impl TrainOutcome {
    /// Iteration records from the training phase only (no pre-epoch).
    pub fn train_records(&self) -> impl Iterator<Item = &IterationRecord> {
        self.records.iter().filter(|r| r.phase == Phase::Train)
    }
}

/// Trains per `config`, writing `metrics.jsonl` and `model.json` into
/// `out_dir` when one is given.
pub fn train(config: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    config.validate()?;
    let dataset = config.data.resolve()?;
    train_on(config, &dataset, out_dir)
}

/// [`train`] on an already materialized dataset.
pub fn train_on(
    config: &TrainConfig,
    dataset: &DomainDataset,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let arch = config.architecture(dataset.dim(), dataset.classes);
    let model = Model::new(arch, config.seed)?;
    let steps_per_epoch = batch_iterator(dataset, config.batch_size, 0)?.steps();

    let writer = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let header = LogHeader {
                schema: METRICS_SCHEMA.into(),
                version: METRICS_VERSION,
                label: config.label(),
                variant: config.variant.name().into(),
                seed: config.seed,
            };
            Some(MetricsWriter::create(&dir.join(METRICS_FILE), &header)?)
        }
        None => None,
    };

    let mut trainer = Trainer {
        cfg: config,
        dataset,
        opts: config.loss_options(),
        initial: model.clone(),
        model,
        phase: Phase::Train,
        data_epoch: 0,
        display_epoch: 0,
        batches: Vec::new(),
        total_steps: config.epochs * steps_per_epoch,
        global_step: 0,
        pending: None,
        optimizer: Sgd::new(config.momentum)?,
        writer,
        records: Vec::new(),
        epochs: Vec::new(),
        epoch_sum: 0.0,
        epoch_steps: 0,
        epoch_updates: 0,
    };

    if config.variant.progressive_sampling() {
        let mut state = SpsState::new();
        trainer.phase = Phase::PreEpoch;
        sps::run_pre_epoch(&mut trainer, &mut state, config.after_pre_epoch)?;
        trainer.close_epoch(state.alpha())?;
        trainer.phase = Phase::Train;
        for _ in 0..config.epochs {
            sps::run_gated_epoch(&mut trainer, &mut state)?;
            trainer.close_epoch(state.alpha())?;
        }
    } else {
        for epoch in 0..config.epochs {
            let steps = trainer.begin_epoch(epoch)?;
            for step in 0..steps {
                trainer.forward(step)?;
                trainer.finish(true, None)?;
            }
            trainer.close_epoch(None)?;
        }
    }

    let Trainer {
        model,
        writer,
        records,
        epochs,
        ..
    } = trainer;
    let final_eval = epochs.last().and_then(|e| e.eval.clone());
    let (mut log_path, mut checkpoint_path) = (None, None);
    if let (Some(w), Some(dir)) = (writer, out_dir) {
        w.finish()?;
        log_path = Some(dir.join(METRICS_FILE));
        let ck = dir.join(CHECKPOINT_FILE);
        Checkpoint::from_model(&model, config).save(&ck)?;
        checkpoint_path = Some(ck);
        if let Some(report) = &final_eval {
            let path = dir.join(EVAL_FILE);
            std::fs::write(&path, serde_json::to_string_pretty(report)?).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(TrainOutcome {
        model,
        records,
        epochs,
        final_eval,
        log_path,
        checkpoint_path,
    })
}

struct Pending {
    tape: Tape,
    total: NodeId,
    params: Vec<NodeId>,
    record: IterationRecord,
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    dataset: &'a DomainDataset,
    opts: LossOptions,
    initial: Model,
    model: Model,
    phase: Phase,
    /// Index into the data-order seed sequence; restarts on reset.
    data_epoch: usize,
    display_epoch: usize,
    batches: Vec<DomainBatch>,
    total_steps: usize,
    global_step: usize,
    pending: Option<Pending>,
    optimizer: Sgd,
    writer: Option<MetricsWriter>,
    records: Vec<IterationRecord>,
    epochs: Vec<EpochRecord>,
    epoch_sum: f64,
    epoch_steps: usize,
    epoch_updates: usize,
}

impl Trainer<'_> {
    fn learning_rate(&self) -> f64 {
        match self.phase {
            Phase::PreEpoch => self.cfg.lr.initial,
            Phase::Train => self.cfg.lr.rate(self.global_step, self.total_steps),
        }
    }

    fn emit(&mut self, line: LogLine) -> Result<()> {
        if let Some(w) = &mut self.writer {
            w.write(&line)?;
        }
        match line {
            LogLine::Iteration(r) => self.records.push(r),
            LogLine::Epoch(e) => self.epochs.push(e),
        }
        Ok(())
    }

    fn close_epoch(&mut self, alpha: Option<f64>) -> Result<()> {
        let eval = if self.phase == Phase::Train && self.cfg.evaluate_each_epoch {
            Some(evaluate(
                &self.model,
                self.dataset,
                &self.cfg.kernel,
                self.cfg.batch_size,
            )?)
        } else {
            None
        };
        let record = EpochRecord {
            phase: self.phase,
            epoch: self.display_epoch,
            steps: self.epoch_steps,
            updated_steps: self.epoch_updates,
            recorded_hardness: self.epoch_sum / self.epoch_steps.max(1) as f64,
            alpha,
            eval,
        };
        self.epoch_sum = 0.0;
        self.epoch_steps = 0;
        self.epoch_updates = 0;
        self.emit(LogLine::Epoch(record))
    }

    fn aborted(record: IterationRecord, source: Error) -> Error {
        Error::Aborted {
            record: Box::new(record),
            source: Box::new(source),
        }
    }
}

impl ProgressiveTrainer for Trainer<'_> {
    fn begin_epoch(&mut self, _epoch: usize) -> Result<usize> {
        if self.phase == Phase::Train {
            self.display_epoch += 1;
        }
        let seed = epoch_seed(self.cfg.seed, self.data_epoch);
        self.data_epoch += 1;
        self.batches = batch_iterator(self.dataset, self.cfg.batch_size, seed)?.collect();
        Ok(self.batches.len())
    }

    fn forward(&mut self, step: usize) -> Result<f64> {
        let mut record = IterationRecord {
            phase: self.phase,
            epoch: self.display_epoch,
            step,
            gamma: Vec::new(),
            avg_gamma: 0.0,
            alpha: None,
            selected: None,
            updated: false,
            focal_exponents: None,
            loss: None,
            lr: self.learning_rate(),
        };
        let tape = Tape::new();
        let (total, params) = {
            let params = self.model.bind(&tape);
            let out = match batch_loss(&tape, &self.model, &params, &self.batches[step], &self.opts, None) {
                Ok(out) => out,
                Err(e) => return Err(Self::aborted(record, e)),
            };
            record.gamma = out.hardness.per_stage.clone();
            record.avg_gamma = out.hardness.avg;
            record.focal_exponents = out.constants.focal_exponents.clone();
            record.loss = Some(out.breakdown.clone());
            (
                out.total.node(),
                params.iter().map(|p| p.node()).collect::<Vec<_>>(),
            )
        };
        let avg = record.avg_gamma;
        self.pending = Some(Pending {
            tape,
            total,
            params,
            record,
        });
        Ok(avg)
    }

    fn finish(&mut self, update: bool, decision: Option<GateDecision>) -> Result<()> {
        let Pending {
            tape,
            total,
            params,
            mut record,
        } = self
            .pending
            .take()
            .ok_or_else(|| Error::State("finish called without a forward pass".into()))?;
        record.alpha = decision.map(|d| d.alpha);
        record.selected = decision.map(|d| d.selected);
        record.updated = update;
        if update {
            let grads = match tape.backward(tape.var(total)) {
                Ok(g) => g,
                Err(e) => return Err(Self::aborted(record, e)),
            };
            let grads: Vec<_> = params.iter().map(|&p| grads.get_or_zeros(tape.var(p))).collect();
            if let Err(e) = self
                .optimizer
                .step(self.model.params.tensors_mut(), &grads, record.lr)
            {
                return Err(Self::aborted(record, e));
            }
            self.epoch_updates += 1;
        }
        if self.phase == Phase::Train {
            self.global_step += 1;
        }
        self.epoch_sum += record.avg_gamma;
        self.epoch_steps += 1;
        self.emit(LogLine::Iteration(record))
    }

    fn reset(&mut self) -> Result<()> {
        self.model = self.initial.clone();
        self.optimizer.reset();
        self.data_epoch = 0;
        self.global_step = 0;
        Ok(())
    }
}
