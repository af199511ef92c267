use alloc::vec;
use alloc::vec::Vec;

use super::model::CompiledModel;
use crate::adc::{
    calibrate_all, draw_offsets, midpoint_refs, AdcConfig, CalibrationParams, RefScheme, DEFAULT_OFFSET_SIGMA,
};
use crate::array::{
    HeaderConfig, MacroArray, ProgrammingOptions, ProgrammingReport, WeightTile, DEFAULT_VDD, NOMINAL_HRS,
    NOMINAL_LRS,
};
use crate::device::DeviceModelParams;
use crate::rng::{domain, stream};
use crate::{Error, Result};

/// How the macros of a bank are programmed and calibrated.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct BankOptions {
    pub device: DeviceModelParams,
    pub programming: ProgrammingOptions,
    pub vdd: f64,
    pub scheme: RefScheme,
    pub offset_sigma: f64,
    pub calibration: CalibrationParams,
}

impl Default for BankOptions {
    fn default() -> Self {
        Self {
            device: DeviceModelParams::default(),
            programming: ProgrammingOptions::default(),
            vdd: DEFAULT_VDD,
            scheme: RefScheme::PerAdc8,
            offset_sigma: DEFAULT_OFFSET_SIGMA,
            calibration: CalibrationParams::default(),
        }
    }
}

/// A programmed macro with its calibrated ADCs.
#[derive(Debug, Clone)]
pub struct MacroUnit {
    pub array: MacroArray,
    pub adc: AdcConfig,
}

/// Programs one macro with `weights`, draws its comparator offsets and
/// calibrates its references. `seed` drives device variation, offsets and
/// calibration; `macro_id` separates the streams of different macros.
pub fn program_macro(
    weights: &WeightTile,
    opts: &BankOptions,
    header: &HeaderConfig,
    seed: u64,
    macro_id: u64,
) -> Result<(MacroUnit, ProgrammingReport)> {
    let mut array = MacroArray::new(opts.vdd)?;
    let device = DeviceModelParams { seed, ..opts.device.clone() };
    let report = array.program_weights(weights, &device, &opts.programming, macro_id)?;
    let offsets = draw_offsets(opts.offset_sigma, &mut stream(seed, &[domain::OFFSETS, macro_id]));
    let adc = calibrate_all(&array, opts.scheme, offsets, &opts.calibration, header, seed, macro_id)?;
    Ok((MacroUnit { array, adc }, report))
}

/// All macros of a compiled model, indexed `[layer][tile]`.
#[derive(Debug, Clone)]
pub struct MacroBank {
    pub header: HeaderConfig,
    pub layers: Vec<Vec<MacroUnit>>,
}

impl MacroBank {
    /// Programs and calibrates every tile of `model` sequentially.
    pub fn program(
        model: &CompiledModel,
        opts: &BankOptions,
        header: &HeaderConfig,
        seed: u64,
    ) -> Result<(Self, Vec<ProgrammingReport>)> {
        let mut layers = Vec::with_capacity(model.plans.len());
        let mut reports = Vec::with_capacity(model.macro_count());
        for (l, tiles) in model.tile_weights.iter().enumerate() {
            let mut units = Vec::with_capacity(tiles.len());
            for (t, w) in tiles.iter().enumerate() {
                let id = model.global_macro_id(l, t) as u64;
                let (unit, report) = program_macro(w, opts, header, seed, id)?;
                units.push(unit);
                reports.push(report);
            }
            layers.push(units);
        }
        Ok((Self { header: header.clone(), layers }, reports))
    }

    /// Ideal macros: nominal exact resistances, zero offsets and references
    /// at the voltage midpoints of `reference_bitcounts`.
    pub fn ideal(
        model: &CompiledModel,
        header: &HeaderConfig,
        vdd: f64,
        calibration: &CalibrationParams,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(model.plans.len());
        let mut refs = None;
        for tiles in &model.tile_weights {
            let mut units = Vec::with_capacity(tiles.len());
            for w in tiles {
                let array = MacroArray::with_exact_resistances(w, NOMINAL_LRS, NOMINAL_HRS, vdd)?;
                // every column of an exact array has the same transfer curve
                let r = match refs {
                    Some(r) => r,
                    None => *refs.insert(midpoint_refs(&array, 0, header, &calibration.reference_bitcounts)?),
                };
                let adc = AdcConfig::new(RefScheme::Unified1, vec![r], [[0.0; 7]; 8])?;
                units.push(MacroUnit { array, adc });
            }
            layers.push(units);
        }
        Ok(Self { header: header.clone(), layers })
    }

    /// Checks that the bank holds one programmed macro per tile of `model`.
    pub fn check(&self, model: &CompiledModel) -> Result<()> {
        if self.layers.len() != model.plans.len()
            || self.layers.iter().zip(&model.plans).any(|(u, p)| u.len() != p.tiles.len())
        {
            return Err(Error::ShapeMismatch("macro bank does not match the model tiling"));
        }
        for (units, weights) in self.layers.iter().zip(&model.tile_weights) {
            for (u, w) in units.iter().zip(weights) {
                if u.array.weights() != Some(w) {
                    return Err(Error::ShapeMismatch("macro holds different weights than its tile"));
                }
            }
        }
        Ok(())
    }
}
