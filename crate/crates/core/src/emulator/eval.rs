use alloc::vec::Vec;

use super::{infer, Backend, CompiledModel, InferenceMode, Shape};
use crate::adc::RefScheme;
use crate::{Error, Result};

/// Images with pixel values in `[0, 1]` and their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub shape: Shape,
    pixels: Vec<f32>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(shape: Shape, pixels: Vec<f32>, labels: Vec<u8>) -> Result<Self> {
        let n = shape.0 * shape.1 * shape.2;
        if n == 0 || pixels.len() != n * labels.len() {
            return Err(Error::ShapeMismatch("pixel buffer does not match shape × labels"));
        }
        Ok(Self { shape, pixels, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.shape.0 * self.shape.1 * self.shape.2;
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// The first `n` samples.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        let px = self.shape.0 * self.shape.1 * self.shape.2;
        Self {
            shape: self.shape,
            pixels: self.pixels[..n * px].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }
}

/// Accuracy of one run over the whole dataset.
pub fn evaluate_run(model: &CompiledModel, data: &Dataset, backend: &Backend, seed: u64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    for i in 0..data.len() {
        let r = infer(model, backend, data.image(i), seed, i as u64)?;
        correct += usize::from(r.class == usize::from(data.label(i)));
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Runs one evaluation per seed, building each run's backend with
/// `backend_for(seed)`.
pub fn evaluate(
    model: &CompiledModel,
    data: &Dataset,
    seeds: &[u64],
    scheme: Option<RefScheme>,
    mut backend_for: impl FnMut(u64) -> Result<Backend>,
) -> Result<EvalReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidLayer("at least one seed is required"));
    }
    let mut mode = InferenceMode::IdealDigital;
    let mut accuracies = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let backend = backend_for(seed)?;
        mode = backend.mode();
        accuracies.push(evaluate_run(model, data, &backend, seed)?);
    }
    EvalReport::from_runs(mode, scheme, seeds.to_vec(), accuracies)
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty list");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Box-plot statistics of per-run accuracies.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub mode: InferenceMode,
    pub scheme: Option<RefScheme>,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub p25: f64,
    pub p75: f64,
    pub min: f64,
    pub max: f64,
}

impl EvalReport {
    pub fn from_runs(
        mode: InferenceMode,
        scheme: Option<RefScheme>,
        seeds: Vec<u64>,
        accuracies: Vec<f64>,
    ) -> Result<Self> {
        if accuracies.is_empty() || accuracies.len() != seeds.len() {
            return Err(Error::ShapeMismatch("one accuracy per seed"));
        }
        let mut sorted = accuracies.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            mode,
            scheme,
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            p25: percentile(&sorted, 0.25),
            p75: percentile(&sorted, 0.75),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            seeds,
            accuracies,
        })
    }
}
