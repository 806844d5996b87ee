//! Parameter storage and the networks trained by the harness: a multi-stage
//! feed-forward feature generator, a classification head on the last stage,
//! and one domain discriminator per stage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversarial::SgaModule;
use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Shape hyper-parameters of a [`Model`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub input_dim: usize,
    pub classes: usize,
    /// Width of every generator stage.
    pub width: usize,
    pub stages: usize,
    pub disc_hidden: usize,
    pub grl_lambda: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            input_dim: 2,
            classes: 2,
            width: 16,
            stages: 3,
            disc_hidden: 32,
            grl_lambda: 1.0,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("input_dim", self.input_dim),
            ("width", self.width),
            ("stages", self.stages),
            ("disc_hidden", self.disc_hidden),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.classes < 2 {
            return Err(Error::Config(format!(
                "classes must be at least 2, got {}",
                self.classes
            )));
        }
        if !(self.grl_lambda > 0.0 && self.grl_lambda.is_finite()) {
            return Err(Error::Config(format!(
                "grl_lambda must be positive, got {}",
                self.grl_lambda
            )));
        }
        Ok(())
    }
}

/// Named parameter tensors, in a fixed order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    fn linear(&mut self, name: &str, inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Linear {
        let bound = 1.0 / (inputs as f64).sqrt();
        let w = (0..inputs * outputs)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        let weight = self.push(
            format!("{name}.weight"),
            Tensor::new(vec![inputs, outputs], w).expect("inputs * outputs"),
        );
        let bias = self.push(format!("{name}.bias"), Tensor::zeros(&[outputs]));
        Linear {
            weight,
            bias,
            inputs,
            outputs,
        }
    }
}

/// Affine layer `x W + b`, holding indices into a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: usize,
    pub bias: usize,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn forward<'t>(&self, params: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>> {
        x.matmul(params[self.weight])?.bias_add(params[self.bias])
    }
}

/// Generator, task head and per-stage discriminators sharing one store.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub params: ParamStore,
    pub generator: Vec<Linear>,
    pub head: Linear,
    pub modules: Vec<SgaModule>,
}

impl Model {
    /// Fresh model; identical `(arch, seed)` give identical parameters.
    pub fn new(arch: Architecture, seed: u64) -> Result<Model> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::default();
        let mut generator = Vec::with_capacity(arch.stages);
        let mut inputs = arch.input_dim;
        for k in 0..arch.stages {
            generator.push(params.linear(&format!("generator.{k}"), inputs, arch.width, &mut rng));
            inputs = arch.width;
        }
        let head = params.linear("head", arch.width, arch.classes, &mut rng);
        let modules = (0..arch.stages)
            .map(|k| SgaModule {
                stage: k,
                hidden: params.linear(
                    &format!("disc.{k}.hidden"),
                    arch.width,
                    arch.disc_hidden,
                    &mut rng,
                ),
                output: params.linear(&format!("disc.{k}.output"), arch.disc_hidden, 1, &mut rng),
                grl_lambda: arch.grl_lambda,
            })
            .collect();
        Ok(Model {
            arch,
            params,
            generator,
            head,
            modules,
        })
    }

    /// Records every parameter as a leaf on `tape`, in store order.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.params
            .tensors()
            .iter()
            .map(|t| tape.leaf(t.clone()))
            .collect()
    }

    /// Features of every stage, first to last.
    pub fn features<'t>(&self, params: &[Var<'t>], x: Var<'t>) -> Result<Vec<Var<'t>>> {
        let mut out = Vec::with_capacity(self.generator.len());
        let mut h = x;
        for layer in &self.generator {
            h = layer.forward(params, h)?.tanh()?;
            out.push(h);
        }
        Ok(out)
    }

    /// Class logits from last-stage features.
    pub fn logits<'t>(&self, params: &[Var<'t>], last_stage: Var<'t>) -> Result<Var<'t>> {
        self.head.forward(params, last_stage)
    }

    /// Predicted class per row of `x`, without recording gradients.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let tape = Tape::new();
        let params = self.bind_constants(&tape);
        let feats = self.features(&params, tape.constant(x.clone()))?;
        let logits = self
            .logits(&params, *feats.last().expect("at least one stage"))?
            .value();
        Ok((0..logits.rows())
            .map(|i| {
                let row = logits.row(i);
                (0..row.len()).fold(0, |best, c| if row[c] > row[best] { c } else { best })
            })
            .collect())
    }

    /// Parameters recorded as constants, for forward-only evaluation.
    pub fn bind_constants<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.params
            .tensors()
            .iter()
            .map(|t| tape.constant(t.clone()))
            .collect()
    }

    /// Indices of the generator's parameters in the store.
    pub fn generator_param_indices(&self) -> Vec<usize> {
        self.generator.iter().flat_map(|l| [l.weight, l.bias]).collect()
    }
}
