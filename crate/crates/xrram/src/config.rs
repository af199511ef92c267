//! Run configuration. Every section has defaults; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xrram_core::adc::{CalibrationParams, QuantizerSpec, RefScheme, DEFAULT_OFFSET_SIGMA, LEVELS};
use xrram_core::array::{HeaderConfig, ProgrammingOptions, DEFAULT_TRANSFER_SAMPLES, DEFAULT_VDD, FIT_STRENGTH, NOMINAL_HRS, NOMINAL_LRS};
use xrram_core::device::DeviceModelParams;
use xrram_core::emulator::{BankOptions, InferenceMode};
use xrram_core::perf::PerfParams;

use crate::error::{CliError, Result};
use crate::formats::read_json;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeaderSection {
    pub strength: u8,
    /// Pull-up resistance per strength 1..8 (Ω). Absent: the table fitted
    /// to nominal 6 kΩ / 3 MΩ cells.
    pub pullup_table: Option<[f64; 8]>,
}

impl Default for HeaderSection {
    fn default() -> Self {
        Self { strength: FIT_STRENGTH, pullup_table: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QuantizerKind {
    Confined,
    FullRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizerSection {
    pub kind: QuantizerKind,
    /// Full-range precision (3..=5).
    pub bits: u32,
}

impl Default for QuantizerSection {
    fn default() -> Self {
        Self { kind: QuantizerKind::Confined, bits: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdcSection {
    pub offset_sigma: f64,
    pub scheme: RefScheme,
    pub calibration: CalibrationParams,
    pub quantizer: QuantizerSection,
}

impl Default for AdcSection {
    fn default() -> Self {
        Self {
            offset_sigma: DEFAULT_OFFSET_SIGMA,
            scheme: RefScheme::PerAdc8,
            calibration: CalibrationParams::default(),
            quantizer: QuantizerSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PadPolicy {
    /// Pad rows spread evenly over a layer's row-tiles.
    Spread,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapperSection {
    pub pad_policy: PadPolicy,
}

impl Default for MapperSection {
    fn default() -> Self {
        Self { pad_policy: PadPolicy::Spread }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmulatorSection {
    pub mode: InferenceMode,
    /// Apply the configured quantizer in IDEAL_DIGITAL mode.
    pub quantize_ideal: bool,
    pub runs: usize,
    /// Explicit run seeds; otherwise `seed, seed + 1, …`.
    pub seeds: Option<Vec<u64>>,
    /// Evaluate only the first `limit` samples.
    pub limit: Option<usize>,
    /// Histogram for STOCHASTIC_HISTOGRAM; defaults to `<out>/histogram.csv`.
    pub histogram: Option<PathBuf>,
}

impl Default for EmulatorSection {
    fn default() -> Self {
        Self {
            mode: InferenceMode::IdealDigital,
            quantize_ideal: false,
            runs: 20,
            seeds: None,
            limit: None,
            histogram: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DatasetKind {
    Mnist,
    Cifar10,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub kind: DatasetKind,
    /// MNIST: the IDX image file. CIFAR-10: binary batch files.
    pub images: Vec<PathBuf>,
    /// MNIST only.
    #[serde(default)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProgramSection {
    /// Minimum fraction of cells whose write-verify converged.
    pub min_yield: f64,
    /// Random weight tiles to program when no model is configured.
    pub random_macros: usize,
}

impl Default for ProgramSection {
    fn default() -> Self {
        Self { min_yield: 0.99, random_macros: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CharacterizeSection {
    /// Random input vectors applied to every column for the histogram.
    pub vectors: usize,
    pub samples_per_bitcount: usize,
    pub column: usize,
    /// Which programmed macro to characterize.
    pub macro_id: usize,
}

impl Default for CharacterizeSection {
    fn default() -> Self {
        Self {
            vectors: 2000,
            samples_per_bitcount: DEFAULT_TRANSFER_SAMPLES,
            column: 0,
            macro_id: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
    pub vdd: f64,
    pub device: DeviceModelParams,
    pub programming: ProgrammingOptions,
    pub header: HeaderSection,
    pub adc: AdcSection,
    pub mapper: MapperSection,
    pub emulator: EmulatorSection,
    pub dataset: Option<DatasetSection>,
    /// Model manifest.
    pub model: Option<PathBuf>,
    pub program: ProgramSection,
    pub characterize: CharacterizeSection,
    pub perf: PerfParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            threads: None,
            out_dir: PathBuf::from("out"),
            vdd: DEFAULT_VDD,
            device: DeviceModelParams::default(),
            programming: ProgrammingOptions::default(),
            header: HeaderSection::default(),
            adc: AdcSection::default(),
            mapper: MapperSection::default(),
            emulator: EmulatorSection::default(),
            dataset: None,
            model: None,
            program: ProgramSection::default(),
            characterize: CharacterizeSection::default(),
            perf: PerfParams::default(),
        }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    /// Loads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = read_json(path).map_err(|e| match e {
            CliError::Format { path, msg } => bad(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        if let Some(m) = self.model.as_mut() {
            fix(m);
        }
        if let Some(h) = self.emulator.histogram.as_mut() {
            fix(h);
        }
        if let Some(d) = self.dataset.as_mut() {
            d.images.iter_mut().for_each(fix);
            if let Some(l) = d.labels.as_mut() {
                fix(l);
            }
        }
    }

    /// Fail-fast checks of every section.
    pub fn validate(&self) -> Result<()> {
        self.device.validate().map_err(|e| bad(e.to_string()))?;
        self.adc.calibration.validate().map_err(|e| bad(e.to_string()))?;
        self.perf.validate().map_err(|e| bad(e.to_string()))?;
        self.header()?;
        let q = self.quantizer()?;
        match self.emulator.mode {
            InferenceMode::AnalogSim if q.edges() != self.adc.calibration.reference_bitcounts => {
                return Err(bad("ANALOG_SIM needs quantizer edges equal to adc.calibration.reference_bitcounts"));
            }
            InferenceMode::StochasticHistogram if q.levels() != LEVELS => {
                return Err(bad("STOCHASTIC_HISTOGRAM needs an 8-level quantizer"));
            }
            _ => {}
        }
        if !(0.9..=1.2).contains(&self.vdd) {
            return Err(bad("vdd must lie in [0.9, 1.2] V"));
        }
        if !(self.adc.offset_sigma >= 0.0) {
            return Err(bad("adc.offset_sigma must be non-negative"));
        }
        let p = &self.programming;
        if !(p.lrs_target_lo < p.lrs_target_hi) || p.max_iter == 0 || !(p.hrs_threshold > 0.0) {
            return Err(bad("programming window must be non-empty with max_iter ≥ 1"));
        }
        if !(0.0..=1.0).contains(&self.program.min_yield) {
            return Err(bad("program.min_yield must lie in [0, 1]"));
        }
        if self.emulator.runs == 0 && self.emulator.seeds.as_ref().is_none_or(|s| s.is_empty()) {
            return Err(bad("emulator.runs must be at least 1"));
        }
        if self.characterize.column >= 64 || self.characterize.vectors == 0 {
            return Err(bad("characterize.column must be < 64 and vectors ≥ 1"));
        }
        if self.threads == Some(0) {
            return Err(bad("threads must be at least 1"));
        }
        if let Some(d) = &self.dataset {
            match d.kind {
                DatasetKind::Mnist if d.images.len() != 1 || d.labels.is_none() => {
                    return Err(bad("MNIST needs exactly one image file and a label file"));
                }
                DatasetKind::Cifar10 if d.images.is_empty() || d.labels.is_some() => {
                    return Err(bad("CIFAR-10 needs batch files and no label file"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn header(&self) -> Result<HeaderConfig> {
        let h = match self.header.pullup_table {
            Some(t) => HeaderConfig::new(self.header.strength, t),
            None => HeaderConfig::fitted(FIT_STRENGTH, NOMINAL_LRS, NOMINAL_HRS)
                .and_then(|h| h.with_strength(self.header.strength)),
        };
        h.map_err(|e| bad(e.to_string()))
    }

    pub fn quantizer(&self) -> Result<QuantizerSpec> {
        match self.adc.quantizer.kind {
            QuantizerKind::Confined => Ok(QuantizerSpec::confined()),
            QuantizerKind::FullRange => {
                QuantizerSpec::full_range(self.adc.quantizer.bits).map_err(|e| bad(e.to_string()))
            }
        }
    }

    pub fn bank_options(&self) -> BankOptions {
        BankOptions {
            device: self.device.clone(),
            programming: self.programming,
            vdd: self.vdd,
            scheme: self.adc.scheme,
            offset_sigma: self.adc.offset_sigma,
            calibration: self.adc.calibration.clone(),
        }
    }

    pub fn run_seeds(&self) -> Vec<u64> {
        match &self.emulator.seeds {
            Some(s) if !s.is_empty() => s.clone(),
            _ => (0..self.emulator.runs as u64).map(|i| self.seed.wrapping_add(i)).collect(),
        }
    }

    pub fn histogram_path(&self) -> PathBuf {
        self.emulator.histogram.clone().unwrap_or_else(|| self.out_dir.join("histogram.csv"))
    }
}
