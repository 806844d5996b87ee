//! Domain discriminators behind gradient reversal, the hardness-guided
//! focal domain loss, and assembly of the per-batch training loss.
//!
//! Sign convention: both domain terms use the minimization form
//! `-(1 - p_t)^gamma * ln(p_t)`, where `p_t` is the probability the
//! discriminator assigns to the true domain. Minimizing it trains the
//! discriminator to tell the domains apart. The generator sees the same
//! gradient through a reversal node, so the same minimization pushes it to
//! confuse the discriminator.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{self, HardnessReport, KernelConfig};
use crate::model::{Linear, Model};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Lower clamp on probabilities before any logarithm.
pub const PROB_EPS: f64 = 1e-12;

/// Domain label: source is 1, target is 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Source,
    Target,
}

/// One discriminator head bound to one generator stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgaModule {
    pub stage: usize,
    pub hidden: Linear,
    pub output: Linear,
    pub grl_lambda: f64,
}

impl SgaModule {
    /// Probability that each row came from the source domain, shape `[n, 1]`.
    pub fn discriminate<'t>(&self, params: &[Var<'t>], features: Var<'t>) -> Result<Var<'t>> {
        let h = self.hidden.forward(params, features)?.relu()?;
        self.output.forward(params, h)?.sigmoid()
    }
}

/// A paired mini-batch: labelled source rows and unlabelled target rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBatch {
    pub source_x: Tensor,
    pub source_y: Vec<usize>,
    pub target_x: Tensor,
}

/// Component values of one batch loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_det: f64,
    /// Absent when the variant has no adversarial term.
    pub l_adv: Option<f64>,
    /// Absent when the variant has no hardness term.
    pub l_gamma: Option<f64>,
    pub beta: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// `l_det + l_adv + beta * l_gamma`, treating absent terms as zero.
    pub fn recomposed(&self) -> f64 {
        self.l_det + self.l_adv.unwrap_or(0.0) + self.beta * self.l_gamma.unwrap_or(0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.l_det.is_finite()
            && self.l_adv.is_none_or(f64::is_finite)
            && self.l_gamma.is_none_or(f64::is_finite)
            && self.total.is_finite()
    }
}

impl fmt::Display for LossBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "l_det={} l_adv={:?} l_gamma={:?} beta={} total={}",
            self.l_det, self.l_adv, self.l_gamma, self.beta, self.total
        )
    }
}

/// `-(1 - p_t)^gamma * ln(p_t)` averaged over the batch, with
/// `p_t = p` for source and `1 - p` for target.
pub fn focal_domain_loss<'t>(p: Var<'t>, domain: Domain, gamma: f64) -> Result<Var<'t>> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::Config(format!("focal exponent must be >= 0, got {gamma}")));
    }
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS)?;
    let p_t = match domain {
        Domain::Source => p,
        Domain::Target => p.neg()?.shift(1.0)?,
    };
    let modulator = p_t.neg()?.shift(1.0)?.powf(gamma)?;
    modulator.mul(p_t.log()?)?.mean()?.neg()
}

/// How the discriminator exponent is chosen for each stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FocalMode {
    /// Plain binary cross-entropy (exponent 0).
    CrossEntropy,
    /// The same exponent for every stage and iteration.
    Fixed(f64),
    /// The stage's own detached hardness.
    Hardness,
}

/// Whether per-stage terms are summed or averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageReduction {
    #[default]
    Sum,
    Mean,
}

/// Focal domain loss on both domains for one stage, with features passed
/// through the module's gradient reversal.
pub fn adversarial_stage_loss<'t>(
    module: &SgaModule,
    params: &[Var<'t>],
    source: Var<'t>,
    target: Var<'t>,
    gamma: f64,
) -> Result<Var<'t>> {
    let source = source.gradient_reverse(module.grl_lambda)?;
    let target = target.gradient_reverse(module.grl_lambda)?;
    adversarial_stage_loss_without_reversal(module, params, source, target, gamma)
}

/// Same as [`adversarial_stage_loss`] but without the reversal node.
/// Only useful for auditing the reversal itself.
pub fn adversarial_stage_loss_without_reversal<'t>(
    module: &SgaModule,
    params: &[Var<'t>],
    source: Var<'t>,
    target: Var<'t>,
    gamma: f64,
) -> Result<Var<'t>> {
    let ps = module.discriminate(params, source)?;
    let pt = module.discriminate(params, target)?;
    focal_domain_loss(ps, Domain::Source, gamma)?.add(focal_domain_loss(pt, Domain::Target, gamma)?)
}

/// Mean softmax cross-entropy of `logits` (`[n, c]`) against class labels.
pub fn detection_stand_in_loss<'t>(logits: Var<'t>, labels: &[usize]) -> Result<Var<'t>> {
    let shape = logits.shape();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(Error::shape("detection_stand_in_loss", &shape, &[labels.len()]));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("detection_stand_in_loss"));
    }
    let classes = shape[1];
    let mut onehot = Tensor::zeros(&shape);
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::Data(format!(
                "label {y} at row {i} is outside [0, {classes})"
            )));
        }
        onehot.data_mut()[i * classes + y] = 1.0;
    }
    let onehot = logits.tape().constant(onehot);
    logits
        .log_softmax()?
        .mul(onehot)?
        .sum()?
        .scale(-1.0 / labels.len() as f64)
}

/// Which terms of the batch loss are active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossOptions {
    /// `None` disables the adversarial term.
    pub focal: Option<FocalMode>,
    pub hardness_loss: bool,
    pub beta: f64,
    pub kernel: KernelConfig,
    pub reduction: StageReduction,
}

impl Default for LossOptions {
    fn default() -> Self {
        LossOptions {
            focal: Some(FocalMode::Hardness),
            hardness_loss: true,
            beta: 0.25,
            kernel: KernelConfig::default(),
            reduction: StageReduction::Sum,
        }
    }
}

/// Values that are constants of one iteration's graph: the kernel bandwidth
/// and the focal exponent of every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationConstants {
    pub sigmas: Vec<f64>,
    /// Absent when the adversarial term is disabled.
    pub focal_exponents: Option<Vec<f64>>,
}

/// Output of [`batch_loss`].
pub struct BatchLoss<'t> {
    pub total: Var<'t>,
    pub breakdown: LossBreakdown,
    pub hardness: HardnessReport,
    pub constants: IterationConstants,
}

/// Builds the full batch loss on `tape`.
///
/// `params` must come from [`Model::bind`] on the same tape. Passing
/// `frozen` reuses bandwidths and focal exponents from an earlier call
/// instead of deriving them from this batch.
pub fn batch_loss<'t>(
    tape: &'t Tape,
    model: &Model,
    params: &[Var<'t>],
    batch: &DomainBatch,
    opts: &LossOptions,
    frozen: Option<&IterationConstants>,
) -> Result<BatchLoss<'t>> {
    let stages = model.generator.len();
    if model.modules.len() != stages {
        return Err(Error::Config(format!(
            "{} discriminators for {stages} generator stages",
            model.modules.len()
        )));
    }
    let xs = tape.constant(batch.source_x.clone());
    let xt = tape.constant(batch.target_x.clone());
    let fs = model.features(params, xs)?;
    let ft = model.features(params, xt)?;

    let sigmas = match frozen {
        Some(c) => c.sigmas.clone(),
        None => fs
            .iter()
            .zip(&ft)
            .enumerate()
            .map(|(stage, (s, t))| {
                opts.kernel
                    .sigma_for(&s.value(), &t.value())
                    .map_err(|e| Error::Stage {
                        stage,
                        source: Box::new(e),
                    })
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let gammas = fs
        .iter()
        .zip(&ft)
        .zip(&sigmas)
        .enumerate()
        .map(|(stage, ((&s, &t), &sigma))| {
            kernel::mmd_hardness_with_sigma(s, t, sigma).map_err(|e| Error::Stage {
                stage,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let gamma_values = gammas.iter().map(Var::item).collect::<Result<Vec<_>>>()?;
    let hardness = HardnessReport::from_stages(gamma_values.clone())?;

    let last = *fs.last().expect("validated stage count");
    let l_det = detection_stand_in_loss(model.logits(params, last)?, &batch.source_y)?;

    let reduce = |terms: Vec<Var<'t>>| -> Result<Var<'t>> {
        let n = terms.len() as f64;
        let mut acc = terms[0];
        for t in &terms[1..] {
            acc = acc.add(*t)?;
        }
        match opts.reduction {
            StageReduction::Sum => Ok(acc),
            StageReduction::Mean => acc.scale(1.0 / n),
        }
    };

    let focal_exponents =
        opts.focal.map(
            |mode| match (frozen.and_then(|c| c.focal_exponents.clone()), mode) {
                (Some(e), _) => e,
                (None, FocalMode::CrossEntropy) => vec![0.0; stages],
                (None, FocalMode::Fixed(g)) => vec![g; stages],
                (None, FocalMode::Hardness) => gamma_values.clone(),
            },
        );
    let l_adv = match &focal_exponents {
        None => None,
        Some(exps) => {
            let terms = model
                .modules
                .iter()
                .zip(fs.iter().zip(&ft))
                .zip(exps)
                .map(|((m, (&s, &t)), &g)| adversarial_stage_loss(m, params, s, t, g))
                .collect::<Result<Vec<_>>>()?;
            Some(reduce(terms)?)
        }
    };
    let l_gamma = if opts.hardness_loss {
        Some(reduce(gammas)?)
    } else {
        None
    };

    let mut total = l_det;
    if let Some(adv) = l_adv {
        total = total.add(adv)?;
    }
    if let Some(lg) = l_gamma {
        total = total.add(lg.scale(opts.beta)?)?;
    }
    let breakdown = LossBreakdown {
        l_det: l_det.item()?,
        l_adv: l_adv.map(|v| v.item()).transpose()?,
        l_gamma: l_gamma.map(|v| v.item()).transpose()?,
        beta: opts.beta,
        total: total.item()?,
    };
    if !breakdown.is_finite() {
        return Err(Error::NonFiniteLoss { breakdown });
    }
    Ok(BatchLoss {
        total,
        breakdown,
        hardness,
        constants: IterationConstants {
            sigmas,
            focal_exponents,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn probs<'t>(tape: &'t Tape, p: &[f64]) -> Var<'t> {
        tape.constant(Tensor::new(vec![p.len(), 1], p.to_vec()).unwrap())
    }

    fn bce(p: f64, domain: Domain) -> f64 {
        let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
        match domain {
            Domain::Source => -p.ln(),
            Domain::Target => -(1.0 - p).ln(),
        }
    }

    #[test]
    fn zero_exponent_is_cross_entropy() {
        let tape = Tape::new();
        let l = focal_domain_loss(probs(&tape, &[0.3]), Domain::Source, 0.0).unwrap();
        assert_eq!(l.item().unwrap(), bce(0.3, Domain::Source));
        let l = focal_domain_loss(probs(&tape, &[0.3]), Domain::Target, 0.0).unwrap();
        assert_eq!(l.item().unwrap(), bce(0.3, Domain::Target));
    }

    #[test]
    fn confident_correct_is_near_zero() {
        let tape = Tape::new();
        for gamma in [0.0, 0.5, 2.0, 5.0] {
            let l = focal_domain_loss(probs(&tape, &[1.0 - 1e-9]), Domain::Source, gamma).unwrap();
            assert!(l.item().unwrap() < 1e-8);
        }
    }

    #[test]
    fn half_probability_with_exponent_two() {
        let tape = Tape::new();
        let l = focal_domain_loss(probs(&tape, &[0.5]), Domain::Source, 2.0).unwrap();
        let want = 0.25 * 2f64.ln();
        assert!((l.item().unwrap() - want).abs() < 1e-15);
        assert!((want - 0.1733).abs() < 1e-4);
    }

    #[test]
    fn negative_exponent_rejected() {
        let tape = Tape::new();
        assert!(matches!(
            focal_domain_loss(probs(&tape, &[0.5]), Domain::Source, -1.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn saturated_probabilities_stay_finite() {
        let tape = Tape::new();
        for domain in [Domain::Source, Domain::Target] {
            let l = focal_domain_loss(probs(&tape, &[0.0, 1.0]), domain, 1.5).unwrap();
            assert!(l.item().unwrap().is_finite());
        }
    }

    proptest! {
        #[test]
        fn focal_is_nonincreasing_in_exponent(p in 0.001f64..0.999, g1 in 0.0f64..6.0, dg in 0.0f64..6.0, source in any::<bool>()) {
            let tape = Tape::new();
            let d = if source { Domain::Source } else { Domain::Target };
            let a = focal_domain_loss(probs(&tape, &[p]), d, g1).unwrap().item().unwrap();
            let b = focal_domain_loss(probs(&tape, &[p]), d, g1 + dg).unwrap().item().unwrap();
            prop_assert!(b <= a);
        }
    }

    #[test]
    fn cross_entropy_cases() {
        let tape = Tape::new();
        let uniform = tape.constant(Tensor::zeros(&[3, 2]));
        let l = detection_stand_in_loss(uniform, &[0, 1, 1]).unwrap();
        assert!((l.item().unwrap() - 2f64.ln()).abs() < 1e-15);

        let sat = tape.constant(Tensor::from_rows(&[vec![50.0, -50.0], vec![-50.0, 50.0]]).unwrap());
        assert!(detection_stand_in_loss(sat, &[0, 1]).unwrap().item().unwrap() < 1e-40);

        let bad = tape.constant(Tensor::zeros(&[1, 2]));
        assert!(matches!(detection_stand_in_loss(bad, &[2]), Err(Error::Data(_))));
    }

    #[test]
    fn cross_entropy_matches_hand_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let labels = [2, 0, 1, 1];
        let mut want = 0.0;
        for (row, &y) in rows.iter().zip(&labels) {
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            want -= (row[y].exp() / z).ln();
        }
        want /= 4.0;
        let tape = Tape::new();
        let l = detection_stand_in_loss(tape.constant(Tensor::from_rows(&rows).unwrap()), &labels).unwrap();
        assert!((l.item().unwrap() - want).abs() <= 1e-12);
    }

    fn toy_batch(seed: u64, n: usize) -> DomainBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = |shift: f64| {
            let d = (0..n * 2).map(|_| rng.gen_range(-1.0..1.0) + shift).collect();
            Tensor::new(vec![n, 2], d).unwrap()
        };
        let source_x = m(0.0);
        let target_x = m(0.8);
        DomainBatch {
            source_x,
            source_y: (0..n).map(|i| i % 2).collect(),
            target_x,
        }
    }

    #[test]
    fn discriminator_at_half_gives_symmetric_terms() {
        let model = Model::new(Architecture::default(), 0).unwrap();
        let mut zeroed = model.clone();
        // Zero output layers make every probability exactly 0.5.
        for m in &model.modules {
            for idx in [m.output.weight, m.output.bias] {
                zeroed.params.tensors_mut()[idx]
                    .data_mut()
                    .iter_mut()
                    .for_each(|x| *x = 0.0);
            }
        }
        let tape = Tape::new();
        let p = zeroed.bind(&tape);
        let b = toy_batch(1, 4);
        let fs = zeroed.features(&p, tape.constant(b.source_x.clone())).unwrap();
        let ft = zeroed.features(&p, tape.constant(b.target_x.clone())).unwrap();
        let l = adversarial_stage_loss(&zeroed.modules[0], &p, fs[0], ft[0], 2.0).unwrap();
        let want = 2.0 * 0.25 * 2f64.ln();
        assert!((l.item().unwrap() - want).abs() < 1e-15);
        assert!((want - 0.3466).abs() < 1e-4);
    }

    #[test]
    fn breakdown_recomposes_and_beta_zero_ignores_hardness() {
        let model = Model::new(Architecture::default(), 3).unwrap();
        let batch = toy_batch(2, 6);
        let tape = Tape::new();
        let p = model.bind(&tape);
        let out = batch_loss(&tape, &model, &p, &batch, &LossOptions::default(), None).unwrap();
        assert!((out.breakdown.total - out.breakdown.recomposed()).abs() <= 1e-12);
        assert!(out.breakdown.l_gamma.unwrap() > 0.0);

        let opts = LossOptions {
            beta: 0.0,
            ..LossOptions::default()
        };
        let tape = Tape::new();
        let p = model.bind(&tape);
        let zero = batch_loss(&tape, &model, &p, &batch, &opts, None).unwrap();
        let expected = zero.breakdown.l_det + zero.breakdown.l_adv.unwrap();
        assert_eq!(zero.breakdown.total, expected);
    }

    #[test]
    fn identical_domains_collapse_to_plain_cross_entropy() {
        let model = Model::new(Architecture::default(), 4).unwrap();
        let mut batch = toy_batch(3, 5);
        batch.target_x = batch.source_x.clone();
        let tape = Tape::new();
        let p = model.bind(&tape);
        let out = batch_loss(&tape, &model, &p, &batch, &LossOptions::default(), None).unwrap();
        assert_eq!(out.breakdown.l_gamma, Some(0.0));
        assert_eq!(out.constants.focal_exponents, Some(vec![0.0; 3]));

        let ce = LossOptions {
            focal: Some(FocalMode::CrossEntropy),
            hardness_loss: false,
            ..LossOptions::default()
        };
        let tape2 = Tape::new();
        let p2 = model.bind(&tape2);
        let plain = batch_loss(&tape2, &model, &p2, &batch, &ce, None).unwrap();
        assert_eq!(out.breakdown.l_adv, plain.breakdown.l_adv);
    }

    #[test]
    fn mean_reduction_divides_by_stage_count() {
        let model = Model::new(Architecture::default(), 5).unwrap();
        let batch = toy_batch(4, 4);
        let run = |reduction| {
            let tape = Tape::new();
            let p = model.bind(&tape);
            let opts = LossOptions {
                reduction,
                ..LossOptions::default()
            };
            batch_loss(&tape, &model, &p, &batch, &opts, None)
                .unwrap()
                .breakdown
        };
        let sum = run(StageReduction::Sum);
        let mean = run(StageReduction::Mean);
        assert!((sum.l_gamma.unwrap() / 3.0 - mean.l_gamma.unwrap()).abs() < 1e-14);
        assert!((sum.l_adv.unwrap() / 3.0 - mean.l_adv.unwrap()).abs() < 1e-14);
    }
}
