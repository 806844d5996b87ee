//! Synthetic two-domain datasets, their CSV form, and paired mini-batches.
//!
//! Target labels are generated (and may be stored on disk) so that
//! adaptation can be scored, but they sit behind
//! [`TargetDomain::evaluation_labels`], which counts every read. Training
//! code only ever touches [`TargetDomain::features`].

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::adversarial::DomainBatch;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    GaussianBlobs,
    TwoMoons,
}

/// How the target domain differs from the source domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shift {
    /// Rotation of the first two coordinates about the target centroid.
    #[serde(default)]
    pub rotation_degrees: f64,
    /// Added after rotation; empty means no translation.
    #[serde(default)]
    pub translation: Vec<f64>,
    /// Noise level of the target domain.
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub family: Family,
    pub classes: usize,
    pub points_per_domain: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Noise level of the source domain.
    pub noise: f64,
    pub shift: Shift,
    pub seed: u64,
}

fn default_dim() -> usize {
    2
}

impl DatasetSpec {
    /// Rotated two-moons with matching noise in both domains.
    pub fn two_moons(points_per_domain: usize, rotation_degrees: f64, noise: f64, seed: u64) -> Self {
        DatasetSpec {
            family: Family::TwoMoons,
            classes: 2,
            points_per_domain,
            dim: 2,
            noise,
            shift: Shift {
                rotation_degrees,
                translation: Vec::new(),
                noise_sigma: noise,
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::Config(format!("dataset.{field}: {why}")));
        if self.classes < 2 {
            return bad("classes", format!("need at least 2, got {}", self.classes));
        }
        if self.family == Family::TwoMoons && self.classes != 2 {
            return bad(
                "classes",
                format!("two-moons has exactly 2 classes, got {}", self.classes),
            );
        }
        if self.points_per_domain < 2 * self.classes {
            return bad(
                "points_per_domain",
                format!(
                    "need at least {} points, got {}",
                    2 * self.classes,
                    self.points_per_domain
                ),
            );
        }
        if self.dim < 2 {
            return bad("dim", format!("need at least 2 dimensions, got {}", self.dim));
        }
        if !(0.0..=180.0).contains(&self.shift.rotation_degrees) {
            return bad(
                "shift.rotation_degrees",
                format!("must lie in [0, 180], got {}", self.shift.rotation_degrees),
            );
        }
        if !self.shift.translation.is_empty() && self.shift.translation.len() != self.dim {
            return bad(
                "shift.translation",
                format!(
                    "length {} does not match dim {}",
                    self.shift.translation.len(),
                    self.dim
                ),
            );
        }
        if self.shift.translation.iter().any(|v| !v.is_finite()) {
            return bad("shift.translation", "must be finite".into());
        }
        for (field, v) in [
            ("noise", self.noise),
            ("shift.noise_sigma", self.shift.noise_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(field, format!("must be finite and >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// Labelled source-domain samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceDomain {
    pub x: Tensor,
    pub y: Vec<usize>,
}

/// Unlabelled target-domain samples, with held-out labels for scoring only.
#[derive(Debug)]
pub struct TargetDomain {
    x: Tensor,
    held_out: Option<Vec<usize>>,
    label_reads: AtomicUsize,
}

impl TargetDomain {
    pub fn new(x: Tensor, held_out: Option<Vec<usize>>) -> Self {
        TargetDomain {
            x,
            held_out,
            label_reads: AtomicUsize::new(0),
        }
    }

    pub fn features(&self) -> &Tensor {
        &self.x
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Held-out labels. For evaluation only; every call is counted.
    pub fn evaluation_labels(&self) -> Option<&[usize]> {
        self.label_reads.fetch_add(1, Ordering::Relaxed);
        self.held_out.as_deref()
    }

    pub fn has_labels(&self) -> bool {
        self.held_out.is_some()
    }

    /// How many times [`Self::evaluation_labels`] has been called.
    pub fn label_reads(&self) -> usize {
        self.label_reads.load(Ordering::Relaxed)
    }
}

impl Clone for TargetDomain {
    fn clone(&self) -> Self {
        TargetDomain::new(self.x.clone(), self.held_out.clone())
    }
}

impl PartialEq for TargetDomain {
    fn eq(&self, other: &Self) -> bool {
        self.x == other.x && self.held_out == other.held_out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub classes: usize,
    pub source: SourceDomain,
    pub target: TargetDomain,
}

impl DomainDataset {
    pub fn dim(&self) -> usize {
        self.source.x.cols()
    }
}

/// Deterministic dataset for `spec`.
pub fn generate(spec: &DatasetSpec) -> Result<DomainDataset> {
    spec.validate()?;
    let mut source_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    source_rng.set_stream(0);
    let mut target_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    target_rng.set_stream(1);

    let (sx, sy) = sample_family(spec, spec.noise, &mut source_rng)?;
    let (mut tx, ty) = sample_family(spec, spec.shift.noise_sigma, &mut target_rng)?;
    rotate_about_centroid(&mut tx, spec.shift.rotation_degrees);
    if !spec.shift.translation.is_empty() {
        let d = tx.cols();
        for row in tx.data_mut().chunks_mut(d) {
            for (v, t) in row.iter_mut().zip(&spec.shift.translation) {
                *v += t;
            }
        }
    }
    Ok(DomainDataset {
        classes: spec.classes,
        source: SourceDomain { x: sx, y: sy },
        target: TargetDomain::new(tx, Some(ty)),
    })
}

fn sample_family(spec: &DatasetSpec, noise: f64, rng: &mut ChaCha8Rng) -> Result<(Tensor, Vec<usize>)> {
    let n = spec.points_per_domain;
    let d = spec.dim;
    let jitter = Normal::new(0.0, noise).map_err(|e| Error::Config(format!("noise: {e}")))?;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % spec.classes;
        let (cx, cy) = match spec.family {
            Family::TwoMoons => {
                let t = rng.gen_range(0.0..PI);
                if label == 0 {
                    (t.cos(), t.sin())
                } else {
                    (1.0 - t.cos(), 0.5 - t.sin())
                }
            }
            Family::GaussianBlobs => {
                let angle = 2.0 * PI * label as f64 / spec.classes as f64;
                (2.0 * angle.cos(), 2.0 * angle.sin())
            }
        };
        data.push(cx + jitter.sample(rng));
        data.push(cy + jitter.sample(rng));
        for _ in 2..d {
            data.push(jitter.sample(rng));
        }
        labels.push(label);
    }
    Ok((Tensor::new(vec![n, d], data)?, labels))
}

fn rotate_about_centroid(x: &mut Tensor, degrees: f64) {
    if degrees == 0.0 {
        return;
    }
    let n = x.rows();
    let d = x.cols();
    let (mut mx, mut my) = (0.0, 0.0);
    for i in 0..n {
        mx += x.row(i)[0];
        my += x.row(i)[1];
    }
    mx /= n as f64;
    my /= n as f64;
    let (sin, cos) = degrees.to_radians().sin_cos();
    for row in x.data_mut().chunks_mut(d) {
        let (px, py) = (row[0] - mx, row[1] - my);
        row[0] = mx + cos * px - sin * py;
        row[1] = my + sin * px + cos * py;
    }
}

/// Writes `domain,label,f0,f1,...` rows with 17 significant digits.
pub fn save(dataset: &DomainDataset, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv(dataset)).map_err(|e| Error::io(path, e))
}

pub fn to_csv(dataset: &DomainDataset) -> String {
    let d = dataset.dim();
    let mut out = String::from("domain,label");
    for k in 0..d {
        let _ = write!(out, ",f{k}");
    }
    out.push('\n');
    let mut row = |domain: &str, label: Option<usize>, values: &[f64]| {
        out.push_str(domain);
        out.push(',');
        if let Some(l) = label {
            let _ = write!(out, "{l}");
        }
        for v in values {
            let _ = write!(out, ",{v:.16e}");
        }
        out.push('\n');
    };
    for i in 0..dataset.source.x.rows() {
        row("source", Some(dataset.source.y[i]), dataset.source.x.row(i));
    }
    let held_out = dataset.target.held_out.as_deref();
    for i in 0..dataset.target.len() {
        row("target", held_out.map(|l| l[i]), dataset.target.x.row(i));
    }
    out
}

pub fn load(path: &Path) -> Result<DomainDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_csv(&text)
}

pub fn from_csv(text: &str) -> Result<DomainDataset> {
    let parse_err = |line: usize, detail: String| Error::Parse { line, detail };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "domain" || cols[1] != "label" {
        return Err(parse_err(
            1,
            format!("expected `domain,label,f0,...`, got `{header}`"),
        ));
    }
    for (k, c) in cols[2..].iter().enumerate() {
        if *c != format!("f{k}") {
            return Err(parse_err(1, format!("feature column {k} is named `{c}`")));
        }
    }
    let d = cols.len() - 2;

    let (mut sx, mut sy) = (Vec::new(), Vec::new());
    let (mut tx, mut ty) = (Vec::new(), Vec::<Option<usize>>::new());
    for (no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 2 {
            return Err(parse_err(
                no,
                format!("expected {} fields, found {}", d + 2, fields.len()),
            ));
        }
        let label = if fields[1].is_empty() {
            None
        } else {
            Some(
                fields[1]
                    .parse::<usize>()
                    .map_err(|e| parse_err(no, format!("label `{}`: {e}", fields[1])))?,
            )
        };
        let mut values = Vec::with_capacity(d);
        for f in &fields[2..] {
            let v: f64 = f
                .parse()
                .map_err(|e| parse_err(no, format!("value `{f}`: {e}")))?;
            if !v.is_finite() {
                return Err(parse_err(no, format!("value `{f}` is not finite")));
            }
            values.push(v);
        }
        match fields[0] {
            "source" => {
                sy.push(label.ok_or_else(|| parse_err(no, "source row without a label".into()))?);
                sx.extend(values);
            }
            "target" => {
                ty.push(label);
                tx.extend(values);
            }
            other => return Err(parse_err(no, format!("unknown domain `{other}`"))),
        }
    }
    if sy.is_empty() || ty.is_empty() {
        return Err(Error::Data(
            "dataset needs at least one source and one target row".into(),
        ));
    }
    let held_out = if ty.iter().all(Option::is_some) {
        Some(ty.iter().map(|l| l.expect("checked")).collect::<Vec<_>>())
    } else if ty.iter().all(Option::is_none) {
        None
    } else {
        return Err(Error::Data("some target rows have labels and some do not".into()));
    };
    let max_label = sy
        .iter()
        .chain(held_out.iter().flatten())
        .copied()
        .max()
        .unwrap_or(0);
    let n_source = sy.len();
    let n_target = ty.len();
    Ok(DomainDataset {
        classes: (max_label + 1).max(2),
        source: SourceDomain {
            x: Tensor::new(vec![n_source, d], sx)?,
            y: sy,
        },
        target: TargetDomain::new(Tensor::new(vec![n_target, d], tx)?, held_out),
    })
}

/// Mixes a base seed with an epoch index.
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (epoch as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One pass of paired mini-batches. Source and target are shuffled
/// independently, so pairs are random.
pub struct BatchIter<'a> {
    dataset: &'a DomainDataset,
    source_order: Vec<usize>,
    target_order: Vec<usize>,
    batch_size: usize,
    next: usize,
    steps: usize,
}

pub fn batch_iterator(dataset: &DomainDataset, batch_size: usize, seed: u64) -> Result<BatchIter<'_>> {
    let n_source = dataset.source.x.rows();
    let n_target = dataset.target.len();
    let smallest = n_source.min(n_target);
    if batch_size == 0 || batch_size > smallest {
        return Err(Error::Config(format!(
            "batch size {batch_size} must lie in [1, {smallest}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut source_order: Vec<usize> = (0..n_source).collect();
    source_order.shuffle(&mut rng);
    rng.set_stream(1);
    let mut target_order: Vec<usize> = (0..n_target).collect();
    target_order.shuffle(&mut rng);
    Ok(BatchIter {
        dataset,
        source_order,
        target_order,
        batch_size,
        next: 0,
        steps: smallest / batch_size,
    })
}

impl BatchIter<'_> {
    pub fn steps(&self) -> usize {
        self.steps
    }
}

impl Iterator for BatchIter<'_> {
    type Item = DomainBatch;

    fn next(&mut self) -> Option<DomainBatch> {
        if self.next >= self.steps {
            return None;
        }
        let range = self.next * self.batch_size..(self.next + 1) * self.batch_size;
        self.next += 1;
        let s_idx = &self.source_order[range.clone()];
        let t_idx = &self.target_order[range];
        Some(DomainBatch {
            source_x: self.dataset.source.x.select_rows(s_idx),
            source_y: s_idx.iter().map(|&i| self.dataset.source.y[i]).collect(),
            target_x: self.dataset.target.features().select_rows(t_idx),
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.steps - self.next;
        (left, Some(left))
    }
}

impl ExactSizeIterator for BatchIter<'_> {}
