//! Data-parallel drivers. Every work item draws from its own keyed stream,
//! so results do not depend on the thread count.

use rayon::prelude::*;
use xrram_core::array::{HeaderConfig, ProgrammingReport};
use xrram_core::emulator::{
    infer, program_macro, Backend, BankOptions, CompiledModel, Dataset, EvalReport, Inference, MacroBank,
};
use xrram_core::adc::RefScheme;

use crate::error::Result;

/// Programs and calibrates every tile of `model`; same result as
/// [`MacroBank::program`].
pub fn program_bank(
    model: &CompiledModel,
    opts: &BankOptions,
    header: &HeaderConfig,
    seed: u64,
) -> Result<(MacroBank, Vec<ProgrammingReport>)> {
    let jobs: Vec<(usize, usize)> = model
        .tile_weights
        .iter()
        .enumerate()
        .flat_map(|(l, ts)| (0..ts.len()).map(move |t| (l, t)))
        .collect();
    let done = jobs
        .par_iter()
        .map(|&(l, t)| {
            let id = model.global_macro_id(l, t) as u64;
            program_macro(&model.tile_weights[l][t], opts, header, seed, id)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut layers: Vec<Vec<_>> = model.tile_weights.iter().map(|t| Vec::with_capacity(t.len())).collect();
    let mut reports = Vec::with_capacity(done.len());
    for ((l, _), (unit, report)) in jobs.into_iter().zip(done) {
        layers[l].push(unit);
        reports.push(report);
    }
    Ok((MacroBank { header: header.clone(), layers }, reports))
}

/// Inference on every sample of `data`.
pub fn infer_all(model: &CompiledModel, backend: &Backend, data: &Dataset, seed: u64) -> Result<Vec<Inference>> {
    (0..data.len())
        .into_par_iter()
        .map(|i| infer(model, backend, data.image(i), seed, i as u64).map_err(Into::into))
        .collect()
}

pub fn accuracy(model: &CompiledModel, backend: &Backend, data: &Dataset, seed: u64) -> Result<f64> {
    if data.is_empty() {
        return Err(xrram_core::Error::EmptyDataset.into());
    }
    let preds = infer_all(model, backend, data, seed)?;
    let correct = preds
        .iter()
        .zip(data.labels())
        .filter(|(p, &l)| p.class == usize::from(l))
        .count();
    Ok(correct as f64 / data.len() as f64)
}

/// Parallel counterpart of `xrram_core::emulator::evaluate`: runs are
/// sequential, samples within a run are parallel.
pub fn evaluate(
    model: &CompiledModel,
    data: &Dataset,
    seeds: &[u64],
    scheme: Option<RefScheme>,
    mut backend_for: impl FnMut(u64) -> Result<Backend>,
) -> Result<EvalReport> {
    let mut mode = None;
    let mut accs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let backend = backend_for(seed)?;
        mode = Some(backend.mode());
        accs.push(accuracy(model, &backend, data, seed)?);
    }
    let mode = mode.unwrap_or(xrram_core::emulator::InferenceMode::IdealDigital);
    Ok(EvalReport::from_runs(mode, scheme, seeds.to_vec(), accs)?)
}
