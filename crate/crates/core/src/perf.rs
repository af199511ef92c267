//! Throughput, figures of merit and static divider power.
//!
//! Units: delays in ns, throughput in GOPS (ops/ns), efficiency in TOPS/W,
//! which equals GOPS/mW, power in mW.

use alloc::vec::Vec;

use crate::array::{achievable_bitcounts, HeaderConfig, InputVector, MacroArray, BITCOUNT_LEVELS, COLS, MIN_BITCOUNT};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PerfParams {
    pub rows_1t1r: usize,
    pub xnor_rows: usize,
    pub adcs: usize,
    pub columns: usize,
    /// One column evaluation including the ADC, in ns.
    pub read_delay: f64,
    pub vdd: f64,
    /// Energy efficiency used for the figures of merit, TOPS/W.
    pub energy_eff: f64,
    pub ops_per_column_eval: usize,
    /// ADC and periphery power added to the divider estimate, mW.
    pub periphery_power: f64,
}

impl Default for PerfParams {
    fn default() -> Self {
        Self {
            rows_1t1r: 128,
            xnor_rows: 64,
            adcs: 8,
            columns: 64,
            read_delay: 6.5,
            vdd: 1.2,
            energy_eff: 24.1,
            ops_per_column_eval: 128,
            periphery_power: DEFAULT_PERIPHERY_POWER,
        }
    }
}

/// ADC + periphery power at 1.2 V, mW.
pub const DEFAULT_PERIPHERY_POWER: f64 = 0.0;

impl PerfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.read_delay > 0.0) {
            return Err(Error::InvalidPerfParams("read delay must be positive"));
        }
        if self.ops_per_column_eval != 2 * self.xnor_rows || self.rows_1t1r != 2 * self.xnor_rows {
            return Err(Error::InvalidPerfParams("ops per column and 1T1R rows must be twice the XNOR rows"));
        }
        if self.adcs == 0 || !self.columns.is_multiple_of(self.adcs) {
            return Err(Error::InvalidPerfParams("columns must divide evenly among ADCs"));
        }
        if !(self.energy_eff > 0.0) || !(self.periphery_power >= 0.0) {
            return Err(Error::InvalidPerfParams("efficiency must be positive and periphery power non-negative"));
        }
        Ok(())
    }

    /// Clock frequency implied by the read delay, MHz.
    pub fn frequency_mhz(&self) -> f64 {
        1e3 / self.read_delay
    }
}

/// `(per_adc, total)` in GOPS.
pub fn throughput(params: &PerfParams) -> Result<(f64, f64)> {
    if !(params.read_delay > 0.0) {
        return Err(Error::InvalidPerfParams("read delay must be positive"));
    }
    let per_adc = params.ops_per_column_eval as f64 / params.read_delay;
    Ok((per_adc, params.adcs as f64 * per_adc))
}

/// `(fom1, fom2) = (eff · per_adc, eff · per_adc²)`.
pub fn fom(energy_eff: f64, per_adc: f64) -> Result<(f64, f64)> {
    if !(energy_eff > 0.0 && per_adc > 0.0) {
        return Err(Error::InvalidPerfParams("figures of merit need positive inputs"));
    }
    Ok((energy_eff * per_adc, energy_eff * per_adc * per_adc))
}

/// Probability of each achievable bitcount, indexed `(b + 64) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BitcountDistribution {
    probs: Vec<f64>,
}

impl BitcountDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() != BITCOUNT_LEVELS {
            return Err(Error::InvalidDistribution("need one probability per achievable bitcount"));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidDistribution("probabilities must lie in [0, 1]"));
        }
        if (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution("probabilities must sum to 1"));
        }
        Ok(Self { probs })
    }

    pub fn point(bitcount: i32) -> Result<Self> {
        let i = crate::array::bitcount_index(bitcount)?;
        let mut probs = alloc::vec![0.0; BITCOUNT_LEVELS];
        probs[i] = 1.0;
        Ok(Self { probs })
    }

    /// Bitcounts of uniformly random ±1 inputs and weights: binomial(64, ½).
    pub fn binomial() -> Self {
        let mut probs = Vec::with_capacity(BITCOUNT_LEVELS);
        let mut c = 1.0f64;
        for m in 0..BITCOUNT_LEVELS {
            probs.push(c);
            c = c * (64 - m) as f64 / (m + 1) as f64;
        }
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Static divider power of one column, mW, averaged over `dist`.
pub fn column_power(vdd: f64, r_pullup: f64, r_pulldown: impl Fn(i32) -> Result<f64>, dist: &BitcountDistribution) -> Result<f64> {
    let mut p = 0.0;
    for (b, &prob) in achievable_bitcounts().zip(dist.probs()) {
        if prob > 0.0 {
            p += prob * vdd * vdd / (r_pullup + r_pulldown(b)?);
        }
    }
    Ok(p * 1e3)
}

/// Average power while 8 columns (one per ADC) are read at once: the
/// divider power of an average column times `adcs`, plus the periphery.
pub fn estimate_power(
    array: &MacroArray,
    header: &HeaderConfig,
    dist: &BitcountDistribution,
    params: &PerfParams,
) -> Result<f64> {
    params.validate()?;
    let weights = array.weights().ok_or(Error::UnprogrammedColumn(0))?;
    let mut total = 0.0;
    for col in 0..COLS {
        let wc = weights.column(col);
        let r_pd = |b: i32| -> Result<f64> {
            let m = ((b - MIN_BITCOUNT) / 2) as u32;
            let mask = if m == 64 { u64::MAX } else { (1u64 << m) - 1 };
            let x = InputVector::from_bits((wc & mask) | (!wc & !mask));
            Ok(array.evaluate_bitline(col, x, header)?.r_pulldown)
        };
        total += column_power(array.vdd(), header.pullup(), r_pd, dist)?;
    }
    Ok(total / COLS as f64 * params.adcs as f64 + params.periphery_power)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PerfReport {
    pub throughput_total: f64,
    pub throughput_per_adc: f64,
    pub fom1: f64,
    pub fom2: f64,
    /// Present when a power estimate was made.
    pub est_power: Option<f64>,
    /// `throughput_total / est_power`, TOPS/W.
    pub derived_energy_eff: Option<f64>,
}

pub fn perf_report(params: &PerfParams, est_power: Option<f64>) -> Result<PerfReport> {
    params.validate()?;
    let (per_adc, total) = throughput(params)?;
    let (fom1, fom2) = fom(params.energy_eff, per_adc)?;
    Ok(PerfReport {
        throughput_total: total,
        throughput_per_adc: per_adc,
        fom1,
        fom2,
        est_power,
        derived_energy_eff: est_power.map(|p| total / p),
    })
}

/// One column of the comparison table.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ComparisonEntry {
    pub design: &'static str,
    pub rows_on: usize,
    pub ops_per_adc: usize,
    pub energy_eff: f64,
    pub read_delay: f64,
    pub throughput_per_adc: f64,
    pub fom1: f64,
    pub fom2: f64,
}

impl ComparisonEntry {
    pub fn compute(design: &'static str, rows_on: usize, ops_per_adc: usize, energy_eff: f64, read_delay: f64) -> Result<Self> {
        if !(read_delay > 0.0) {
            return Err(Error::InvalidPerfParams("read delay must be positive"));
        }
        let per_adc = ops_per_adc as f64 / read_delay;
        let (fom1, fom2) = fom(energy_eff, per_adc)?;
        Ok(Self {
            design,
            rows_on,
            ops_per_adc,
            energy_eff,
            read_delay,
            throughput_per_adc: per_adc,
            fom1,
            fom2,
        })
    }
}

/// This design next to the published 55 nm embedded-RRAM reference point
/// (ternary-weight mode: 9 rows, 36 ops, 10.2 ns, 53.17 TOPS/W).
pub fn comparison_table(params: &PerfParams) -> Result<Vec<ComparisonEntry>> {
    params.validate()?;
    Ok(alloc::vec![
        ComparisonEntry::compute("55nm-eRRAM-ternary", 9, 36, 53.17, 10.2)?,
        ComparisonEntry::compute(
            "xnor-rram",
            params.rows_1t1r,
            params.ops_per_column_eval,
            params.energy_eff,
            params.read_delay,
        )?,
    ])
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn power_monotone_in_resistances(r_pu in 50.0f64..5000.0, d_pu in 1.0f64..1000.0,
                                         r_pd in 50.0f64..5000.0, d_pd in 1.0f64..1000.0,
                                         b in -32i32..=32) {
            let dist = BitcountDistribution::point(2 * b).unwrap();
            let base = column_power(1.2, r_pu, |_| Ok(r_pd), &dist).unwrap();
            prop_assert!(column_power(1.2, r_pu + d_pu, |_| Ok(r_pd), &dist).unwrap() < base);
            prop_assert!(column_power(1.2, r_pu, |_| Ok(r_pd + d_pd), &dist).unwrap() < base);
        }
    }
}
