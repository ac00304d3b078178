use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Shape3;
use crate::rng::derived;
use crate::tensor::FloatTensor;

/// Labelled samples of one shape, stored contiguously.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub shape: Shape3,
    pub classes: usize,
    data: Vec<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(shape: Shape3, classes: usize, data: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        let size: usize = shape.iter().product();
        if size == 0 {
            return Err(Error::Dataset(format!("sample shape {shape:?} is empty")));
        }
        if data.len() != size * labels.len() {
            return Err(Error::Dataset(format!(
                "{} values for {} samples of shape {shape:?}",
                data.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Dataset(format!("label {bad} outside {classes} classes")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dataset("non-finite sample value".into()));
        }
        Ok(Self { shape, classes, data, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_size(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let s = self.sample_size();
        &self.data[i * s..(i + 1) * s]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Stacks the listed samples into an NCHW batch.
    pub fn batch(&self, idx: &[usize]) -> Result<(FloatTensor, Vec<usize>)> {
        let s = self.sample_size();
        let mut data = Vec::with_capacity(idx.len() * s);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            if i >= self.len() {
                return Err(Error::Dataset(format!("sample {i} outside {} samples", self.len())));
            }
            data.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
        }
        let [c, h, w] = self.shape;
        Ok((FloatTensor::new(vec![idx.len(), c, h, w], data)?, labels))
    }
}

/// Parameters of a seeded pair of related classification tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferTaskConfig {
    pub shape: Shape3,
    pub classes: usize,
    pub train_per_class_a: usize,
    pub train_per_class_b: usize,
    pub test_per_class: usize,
    /// Per-pixel Gaussian noise added to every sample.
    pub noise: f64,
    /// Largest circular shift, in pixels, applied to a sample.
    pub max_shift: usize,
    /// Weight of the task-A template inside each task-B template; the rest is
    /// a fresh pattern.
    pub overlap: f64,
    pub seed: u64,
}

impl Default for TransferTaskConfig {
    fn default() -> Self {
        Self {
            shape: [3, 8, 8],
            classes: 4,
            train_per_class_a: 128,
            train_per_class_b: 64,
            test_per_class: 64,
            noise: 0.6,
            max_shift: 1,
            overlap: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferTask {
    pub a_train: Dataset,
    pub a_test: Dataset,
    pub b_train: Dataset,
    pub b_test: Dataset,
}

fn smooth_pattern(shape: Shape3, rng: &mut impl Rng) -> Vec<f64> {
    let [c, h, w] = shape;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let raw: Vec<f64> = (0..c * h * w).map(|_| normal.sample(rng)).collect();
    let mut out = vec![0.0; raw.len()];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for dy in [h - 1, 0, 1] {
                    for dx in [w - 1, 0, 1] {
                        s += raw[(ch * h + (y + dy) % h) * w + (x + dx) % w];
                    }
                }
                out[(ch * h + y) * w + x] = s;
            }
        }
    }
    let rms = libm::sqrt(out.iter().map(|v| v * v).sum::<f64>() / out.len() as f64);
    out.iter().map(|v| v / rms).collect()
}

fn render(templates: &[Vec<f64>], cfg: &TransferTaskConfig, per_class: usize, rng: &mut impl Rng) -> Result<Dataset> {
    let [c, h, w] = cfg.shape;
    let normal = Normal::new(0.0, cfg.noise.max(0.0)).map_err(|e| Error::Dataset(format!("noise: {e}")))?;
    let mut data = Vec::with_capacity(templates.len() * per_class * c * h * w);
    let mut labels = Vec::with_capacity(templates.len() * per_class);
    let span = 2 * cfg.max_shift + 1;
    for _ in 0..per_class {
        for (k, t) in templates.iter().enumerate() {
            let sy = (rng.random_range(0..span) + h * span - cfg.max_shift) % h;
            let sx = (rng.random_range(0..span) + w * span - cfg.max_shift) % w;
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        let v = t[(ch * h + (y + sy) % h) * w + (x + sx) % w];
                        data.push(v + normal.sample(rng));
                    }
                }
            }
            labels.push(k);
        }
    }
    Dataset::new(cfg.shape, templates.len(), data, labels)
}

impl TransferTask {
    /// Task A uses one random smooth template per class. Task B mixes each
    /// A template, class order rotated by one, with a fresh template:
    /// `overlap·A + sqrt(1 − overlap²)·new`.
    pub fn generate(cfg: &TransferTaskConfig) -> Result<Self> {
        if cfg.classes < 2 || !(0.0..=1.0).contains(&cfg.overlap) {
            return Err(Error::Dataset("transfer task needs at least 2 classes and overlap in [0, 1]".into()));
        }
        let mut trng = derived(cfg.seed, "templates");
        let ta: Vec<Vec<f64>> = (0..cfg.classes).map(|_| smooth_pattern(cfg.shape, &mut trng)).collect();
        let fresh = libm::sqrt(1.0 - cfg.overlap * cfg.overlap);
        let tb: Vec<Vec<f64>> = (0..cfg.classes)
            .map(|k| {
                let new = smooth_pattern(cfg.shape, &mut trng);
                let old = &ta[(k + 1) % cfg.classes];
                old.iter().zip(&new).map(|(o, n)| cfg.overlap * o + fresh * n).collect()
            })
            .collect();
        let mut rng = derived(cfg.seed, "samples");
        Ok(Self {
            a_train: render(&ta, cfg, cfg.train_per_class_a, &mut rng)?,
            a_test: render(&ta, cfg, cfg.test_per_class, &mut rng)?,
            b_train: render(&tb, cfg, cfg.train_per_class_b, &mut rng)?,
            b_test: render(&tb, cfg, cfg.test_per_class, &mut rng)?,
        })
    }
}
