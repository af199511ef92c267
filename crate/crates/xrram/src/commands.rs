//! The six pipeline commands. Each reads a validated [`RunConfig`] and
//! writes its artifacts under `out_dir`:
//!
//! ```text
//! snapshots/macro_NNNN.bin   program
//! traces/macro_NNNN.csv      program
//! yield.json, tiling.json    program
//! adc/macro_NNNN.json        calibrate
//! transfer.csv               characterize
//! histogram.csv              characterize
//! predictions.csv            infer
//! eval.json, eval.csv        evaluate
//! perf.json, comparison.csv  perf
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use xrram_core::adc::{calibrate_all, draw_offsets, AdcConfig, ConditionalHistogram};
use xrram_core::array::{
    ideal_bitcount, HeaderConfig, InputVector, MacroArray, ProgrammingReport, WeightTile, YieldStats, COLS,
    HEADER_STRENGTHS,
};
use xrram_core::device::DeviceModelParams;
use xrram_core::emulator::{Backend, CompiledModel, Dataset, EvalReport, InferenceMode, MacroBank};
use xrram_core::perf::{comparison_table, estimate_power, perf_report, BitcountDistribution, PerfReport};
use xrram_core::rng::{domain, stream};

use crate::config::{DatasetKind, RunConfig};
use crate::datasets::{read_cifar, read_mnist};
use crate::error::{CliError, Result};
use crate::formats::{
    read_histogram_csv, read_json, read_snapshot, write_histogram_csv, write_json, write_snapshot,
    write_trace_csv, write_transfer_csv, TilingJson,
};
use crate::model_io::read_model;
use crate::parallel;

pub fn snapshot_path(out: &Path, id: usize) -> PathBuf {
    out.join("snapshots").join(format!("macro_{id:04}.bin"))
}

pub fn trace_path(out: &Path, id: usize) -> PathBuf {
    out.join("traces").join(format!("macro_{id:04}.csv"))
}

pub fn adc_path(out: &Path, id: usize) -> PathBuf {
    out.join("adc").join(format!("macro_{id:04}.json"))
}

/// Macro ids with a snapshot under `out`, ascending.
pub fn snapshot_ids(out: &Path) -> Result<Vec<usize>> {
    let dir = out.join("snapshots");
    let entries = fs::read_dir(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut ids = Vec::new();
    for e in entries {
        let e = e.map_err(|e| CliError::io(&dir, e))?;
        let name = e.file_name();
        let id = name
            .to_str()
            .and_then(|n| n.strip_prefix("macro_"))
            .and_then(|n| n.strip_suffix(".bin"))
            .and_then(|n| n.parse().ok());
        if let Some(id) = id {
            ids.push(id);
        }
    }
    ids.sort_unstable();
    if ids.is_empty() {
        return Err(CliError::io(
            &dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no macro snapshots; run `program` first"),
        ));
    }
    Ok(ids)
}

fn load_model(cfg: &RunConfig) -> Result<CompiledModel> {
    let path = cfg.model.as_ref().ok_or_else(|| CliError::Config("no model manifest configured".into()))?;
    Ok(CompiledModel::new(read_model(path)?)?)
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let d = cfg.dataset.as_ref().ok_or_else(|| CliError::Config("no dataset configured".into()))?;
    let data = match d.kind {
        DatasetKind::Mnist => read_mnist(&d.images[0], d.labels.as_ref().expect("validated"))?,
        DatasetKind::Cifar10 => read_cifar(&d.images)?,
    };
    Ok(match cfg.emulator.limit {
        Some(n) => data.truncated(n),
        None => data,
    })
}

fn device(cfg: &RunConfig, seed: u64) -> DeviceModelParams {
    DeviceModelParams { seed, ..cfg.device.clone() }
}

// ---- program ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroYield {
    pub macro_id: usize,
    /// `(layer, tile)` when the macro holds a model tile.
    pub tile: Option<(usize, usize)>,
    pub converged_fraction: f64,
    pub failures: usize,
    pub stats: YieldStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldReport {
    pub seed: u64,
    pub min_yield: f64,
    pub converged_fraction: f64,
    pub macros: Vec<MacroYield>,
}

/// Macro id, `(layer, tile)` if any, weights.
type Job = (usize, Option<(usize, usize)>, WeightTile);

pub fn program(cfg: &RunConfig) -> Result<YieldReport> {
    let out = &cfg.out_dir;
    let jobs: Vec<Job> = match &cfg.model {
        Some(_) => {
            let model = load_model(cfg)?;
            let tiling: Vec<TilingJson> = model.plans.iter().map(TilingJson::from).collect();
            write_json(&out.join("tiling.json"), &tiling)?;
            model
                .tile_weights
                .iter()
                .enumerate()
                .flat_map(|(l, ts)| ts.iter().enumerate().map(move |(t, w)| (l, t, w.clone())))
                .map(|(l, t, w)| (model.global_macro_id(l, t), Some((l, t)), w))
                .collect()
        }
        None => (0..cfg.program.random_macros)
            .map(|id| (id, None, WeightTile::random(&mut stream(cfg.seed, &[domain::WEIGHTS, id as u64]))))
            .collect(),
    };
    let dev = device(cfg, cfg.seed);
    let programmed = jobs
        .par_iter()
        .map(|(id, _, w)| {
            let mut array = MacroArray::new(cfg.vdd)?;
            let report = array.program_weights(w, &dev, &cfg.programming, *id as u64)?;
            Ok((array, report))
        })
        .collect::<Result<Vec<(MacroArray, ProgrammingReport)>>>()?;

    let mut macros = Vec::with_capacity(jobs.len());
    let (mut cells, mut ok) = (0usize, 0usize);
    for ((id, tile, _), (array, report)) in jobs.iter().zip(&programmed) {
        write_snapshot(&snapshot_path(out, *id), array)?;
        write_trace_csv(&trace_path(out, *id), report)?;
        cells += report.records.len();
        ok += report.records.len() - report.failures();
        macros.push(MacroYield {
            macro_id: *id,
            tile: *tile,
            converged_fraction: report.converged_fraction(),
            failures: report.failures(),
            stats: array.yield_stats(),
        });
    }
    let report = YieldReport {
        seed: cfg.seed,
        min_yield: cfg.program.min_yield,
        converged_fraction: if cells == 0 { 1.0 } else { ok as f64 / cells as f64 },
        macros,
    };
    write_json(&out.join("yield.json"), &report)?;
    if report.converged_fraction < cfg.program.min_yield {
        return Err(CliError::Yield(format!(
            "{:.4} of cells converged, floor is {}",
            report.converged_fraction, cfg.program.min_yield
        )));
    }
    Ok(report)
}

// ---- calibrate ----

/// Calibrates the ADCs of one stored macro. Offsets and calibration streams
/// match those of an in-memory bank programmed with the same seed.
pub fn calibrate_macro(cfg: &RunConfig, header: &HeaderConfig, array: &MacroArray, id: usize) -> Result<AdcConfig> {
    let offsets = draw_offsets(cfg.adc.offset_sigma, &mut stream(cfg.seed, &[domain::OFFSETS, id as u64]));
    Ok(calibrate_all(array, cfg.adc.scheme, offsets, &cfg.adc.calibration, header, cfg.seed, id as u64)?)
}

pub fn calibrate(cfg: &RunConfig) -> Result<Vec<(usize, AdcConfig)>> {
    let out = &cfg.out_dir;
    let header = cfg.header()?;
    let ids = snapshot_ids(out)?;
    let arrays = ids
        .iter()
        .map(|&id| read_snapshot(&snapshot_path(out, id), cfg.vdd))
        .collect::<Result<Vec<_>>>()?;
    let configs = ids
        .par_iter()
        .zip(&arrays)
        .map(|(&id, a)| calibrate_macro(cfg, &header, a, id).map(|c| (id, c)))
        .collect::<Result<Vec<_>>>()?;
    for (id, c) in &configs {
        write_json(&adc_path(out, *id), c)?;
    }
    Ok(configs)
}

// ---- characterize ----

#[derive(Debug, Clone, PartialEq)]
pub struct Characterization {
    pub pairs: u64,
    pub histogram: ConditionalHistogram,
}

pub fn characterize(cfg: &RunConfig) -> Result<Characterization> {
    let out = &cfg.out_dir;
    let ch = &cfg.characterize;
    let header = cfg.header()?;
    let array = read_snapshot(&snapshot_path(out, ch.macro_id), cfg.vdd)?;
    let adc: AdcConfig = read_json(&adc_path(out, ch.macro_id))?;
    adc.validate(Some(cfg.vdd))?;

    let curves = (1..=HEADER_STRENGTHS as u8)
        .into_par_iter()
        .map(|s| {
            let h = header.with_strength(s)?;
            let mut rng = stream(cfg.seed, &[domain::CHARACTERIZE, 0, u64::from(s)]);
            Ok((s, array.transfer_curve(ch.column, &h, ch.samples_per_bitcount, &mut rng)?))
        })
        .collect::<Result<Vec<_>>>()?;
    write_transfer_csv(&out.join("transfer.csv"), &curves)?;

    let observations = (0..ch.vectors as u64)
        .into_par_iter()
        .map(|v| {
            let x = InputVector::from_bits(stream(cfg.seed, &[domain::CHARACTERIZE, 1, v]).random());
            let weights = array.weights().ok_or(xrram_core::Error::UnprogrammedColumn(0))?;
            (0..COLS)
                .map(|c| {
                    let vb = array.evaluate_bitline(c, x, &header)?.voltage;
                    Ok((ideal_bitcount(x, weights.column(c)), adc.digitize_column(c, vb)))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs = observations.iter().map(|o| o.len() as u64).sum();
    let histogram = ConditionalHistogram::build(observations.into_iter().flatten())?;
    write_histogram_csv(&out.join("histogram.csv"), &histogram)?;
    Ok(Characterization { pairs, histogram })
}

// ---- infer / evaluate ----

/// Backend for one run seed of the configured mode.
pub fn backend(cfg: &RunConfig, model: &CompiledModel, seed: u64, hist: Option<&ConditionalHistogram>) -> Result<Backend> {
    let q = cfg.quantizer()?;
    Ok(match cfg.emulator.mode {
        InferenceMode::IdealDigital => Backend::Ideal { quantizer: cfg.emulator.quantize_ideal.then_some(q) },
        InferenceMode::AnalogSim => {
            let (bank, _) = parallel::program_bank(model, &cfg.bank_options(), &cfg.header()?, seed)?;
            Backend::Analog { bank, quantizer: q }
        }
        InferenceMode::StochasticHistogram => Backend::Stochastic {
            histogram: hist.cloned().ok_or_else(|| CliError::Config("histogram not loaded".into()))?,
            quantizer: q,
        },
    })
}

fn histogram_for(cfg: &RunConfig) -> Result<Option<ConditionalHistogram>> {
    match cfg.emulator.mode {
        InferenceMode::StochasticHistogram => read_histogram_csv(&cfg.histogram_path()).map(Some),
        _ => Ok(None),
    }
}

/// A bank built from stored snapshots and ADC configs, if every tile has one.
fn stored_bank(cfg: &RunConfig, model: &CompiledModel) -> Result<Option<MacroBank>> {
    let out = &cfg.out_dir;
    let mut layers = Vec::with_capacity(model.plans.len());
    for (l, tiles) in model.tile_weights.iter().enumerate() {
        let mut units = Vec::with_capacity(tiles.len());
        for t in 0..tiles.len() {
            let id = model.global_macro_id(l, t);
            let (s, a) = (snapshot_path(out, id), adc_path(out, id));
            if !s.exists() || !a.exists() {
                return Ok(None);
            }
            let array = read_snapshot(&s, cfg.vdd)?;
            let adc: AdcConfig = read_json(&a)?;
            units.push(xrram_core::emulator::MacroUnit { array, adc });
        }
        layers.push(units);
    }
    let bank = MacroBank { header: cfg.header()?, layers };
    bank.check(model)?;
    Ok(Some(bank))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub index: usize,
    pub label: u8,
    pub predicted: usize,
}

/// Classifies the dataset once with `seed`. In ANALOG_SIM mode the macros
/// stored by `program`/`calibrate` are used when present.
pub fn infer(cfg: &RunConfig) -> Result<(Vec<Prediction>, f64)> {
    let model = load_model(cfg)?;
    let data = load_dataset(cfg)?;
    let hist = histogram_for(cfg)?;
    let backend = match (cfg.emulator.mode, stored_bank(cfg, &model)?) {
        (InferenceMode::AnalogSim, Some(bank)) => Backend::Analog { bank, quantizer: cfg.quantizer()? },
        _ => backend(cfg, &model, cfg.seed, hist.as_ref())?,
    };
    let preds: Vec<Prediction> = parallel::infer_all(&model, &backend, &data, cfg.seed)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| Prediction { index: i, label: data.label(i), predicted: r.class })
        .collect();
    let correct = preds.iter().filter(|p| p.predicted == usize::from(p.label)).count();
    let acc = correct as f64 / preds.len().max(1) as f64;
    let path = cfg.out_dir.join("predictions.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in &preds {
        w.serialize(p).map_err(|e| CliError::format(&path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::format(&path, e))?;
    crate::formats::write_bytes(&path, &bytes)?;
    Ok((preds, acc))
}

/// One run per configured seed. ANALOG_SIM re-programs and re-calibrates
/// every tile for each seed.
pub fn evaluate(cfg: &RunConfig) -> Result<EvalReport> {
    let model = load_model(cfg)?;
    let data = load_dataset(cfg)?;
    let hist = histogram_for(cfg)?;
    let scheme = (cfg.emulator.mode == InferenceMode::AnalogSim).then_some(cfg.adc.scheme);
    let seeds = cfg.run_seeds();
    let report = parallel::evaluate(&model, &data, &seeds, scheme, |s| backend(cfg, &model, s, hist.as_ref()))?;
    write_json(&cfg.out_dir.join("eval.json"), &report)?;
    let path = cfg.out_dir.join("eval.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    let fmt = |e: csv::Error| CliError::format(&path, e);
    w.write_record(["seed", "accuracy"]).map_err(fmt)?;
    for (s, a) in report.seeds.iter().zip(&report.accuracies) {
        w.write_record([s.to_string(), a.to_string()]).map_err(fmt)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::format(&path, e))?;
    crate::formats::write_bytes(&path, &bytes)?;
    Ok(report)
}

// ---- perf ----

/// Throughput and FoM report. The divider power estimate uses a macro of
/// nominal exact resistances under binomial bitcounts.
pub fn perf(cfg: &RunConfig) -> Result<PerfReport> {
    let header = cfg.header()?;
    let w = WeightTile::random(&mut stream(cfg.seed, &[domain::WEIGHTS]));
    let array = MacroArray::with_exact_resistances(
        &w,
        xrram_core::array::NOMINAL_LRS,
        xrram_core::array::NOMINAL_HRS,
        cfg.perf.vdd,
    )?;
    let power = estimate_power(&array, &header, &BitcountDistribution::binomial(), &cfg.perf)?;
    let report = perf_report(&cfg.perf, Some(power))?;
    write_json(&cfg.out_dir.join("perf.json"), &report)?;
    let path = cfg.out_dir.join("comparison.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in comparison_table(&cfg.perf)? {
        w.serialize(e).map_err(|e| CliError::format(&path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::format(&path, e))?;
    crate::formats::write_bytes(&path, &bytes)?;
    Ok(report)
}
