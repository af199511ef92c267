//! 3-bit flash ADC: seven voltage-mode sense amplifiers with static offsets,
//! ones-count thermometer decode, reference calibration and quantizers.
//!
//! Polarity convention: a comparator outputs 1 when the bitline sits above
//! its threshold. Because the bitline voltage falls as the bitcount rises,
//! a 1 means "bitcount below this comparator's reference bitcount".

mod calibrate;
mod histogram;
mod quantize;

pub use calibrate::{
    calibrate_all, calibrate_comparator, calibrate_comparator_traced, draw_offsets,
    midpoint_refs, CalibrationParams, CalibrationSample, CalibrationTrace,
};
pub use histogram::{stochastic_quantize, ConditionalHistogram, HistogramRow};
pub use quantize::{confined_quantize, full_range_quantize, QuantizerSpec};

use alloc::vec;
use alloc::vec::Vec;

use crate::array::COLS;
use crate::{Error, Result};

pub const COMPARATORS: usize = 7;
pub const LEVELS: usize = COMPARATORS + 1;
pub const ADCS: usize = 8;
pub const COLUMNS_PER_ADC: usize = COLS / ADCS;

pub const DEFAULT_OFFSET_SIGMA: f64 = 0.010;

pub type RefSet = [f64; COMPARATORS];
/// Per-ADC, per-comparator static offsets (volts).
pub type AdcOffsets = [[f64; COMPARATORS]; ADCS];

/// `v_in + offset > v_ref`; ties resolve low.
#[inline]
pub fn compare(v_in: f64, v_ref: f64, offset: f64) -> bool {
    v_in + offset > v_ref
}

/// Level `0..=7` as `7 − (number of comparators reading 1)`. Counting ones
/// rather than locating the thermometer edge tolerates bubbles from
/// non-monotone calibrated reference sets.
#[inline]
pub fn digitize(v_rbl: f64, refs: &RefSet, offsets: &[f64; COMPARATORS]) -> u8 {
    let ones = refs
        .iter()
        .zip(offsets)
        .filter(|(r, o)| compare(v_rbl, **r, **o))
        .count();
    (COMPARATORS - ones) as u8
}

/// Column `c` is read through ADC `c / 8`.
#[inline]
pub fn adc_of_column(col: usize) -> usize {
    col / COLUMNS_PER_ADC
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum RefScheme {
    /// One reference set shared by all 8 ADCs.
    #[cfg_attr(feature = "serde", serde(rename = "UNIFIED_1"))]
    Unified1,
    /// One reference set per ADC.
    #[cfg_attr(feature = "serde", serde(rename = "PER_ADC_8"))]
    PerAdc8,
    /// One reference set per column.
    #[cfg_attr(feature = "serde", serde(rename = "PER_COLUMN_64"))]
    PerColumn64,
}

impl RefScheme {
    pub const ALL: [RefScheme; 3] = [RefScheme::Unified1, RefScheme::PerAdc8, RefScheme::PerColumn64];

    pub fn set_count(self) -> usize {
        match self {
            RefScheme::Unified1 => 1,
            RefScheme::PerAdc8 => ADCS,
            RefScheme::PerColumn64 => COLS,
        }
    }

    pub fn set_of_column(self, col: usize) -> usize {
        match self {
            RefScheme::Unified1 => 0,
            RefScheme::PerAdc8 => adc_of_column(col),
            RefScheme::PerColumn64 => col,
        }
    }

    /// Columns whose bitlines feed the calibration of reference set `set`.
    pub fn columns_of_set(self, set: usize) -> Vec<usize> {
        match self {
            RefScheme::Unified1 => (0..COLS).collect(),
            RefScheme::PerAdc8 => (set * COLUMNS_PER_ADC..(set + 1) * COLUMNS_PER_ADC).collect(),
            RefScheme::PerColumn64 => vec![set],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RefScheme::Unified1 => "UNIFIED_1",
            RefScheme::PerAdc8 => "PER_ADC_8",
            RefScheme::PerColumn64 => "PER_COLUMN_64",
        }
    }
}

/// Reference sets and comparator offsets of the 8 ADCs of one macro.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct AdcConfig {
    pub scheme: RefScheme,
    pub ref_sets: Vec<RefSet>,
    pub offsets: AdcOffsets,
}

impl AdcConfig {
    pub fn new(scheme: RefScheme, ref_sets: Vec<RefSet>, offsets: AdcOffsets) -> Result<Self> {
        let cfg = Self {
            scheme,
            ref_sets,
            offsets,
        };
        cfg.validate(None)?;
        Ok(cfg)
    }

    /// Checks the set count and, given `vdd`, that every reference is in (0, vdd).
    pub fn validate(&self, vdd: Option<f64>) -> Result<()> {
        if self.ref_sets.len() != self.scheme.set_count() {
            return Err(Error::RefSetCount {
                expected: self.scheme.set_count(),
                found: self.ref_sets.len(),
            });
        }
        if let Some(vdd) = vdd {
            if self.ref_sets.iter().flatten().any(|r| !(*r > 0.0 && *r < vdd)) {
                return Err(Error::InvalidCalibration("reference voltages must lie in (0, vdd)"));
            }
        }
        Ok(())
    }

    pub fn refs_for_column(&self, col: usize) -> &RefSet {
        &self.ref_sets[self.scheme.set_of_column(col)]
    }

    pub fn offsets_for_column(&self, col: usize) -> &[f64; COMPARATORS] {
        &self.offsets[adc_of_column(col)]
    }

    /// Digitizes a bitline voltage read from column `col`.
    pub fn digitize_column(&self, col: usize, v_rbl: f64) -> u8 {
        digitize(v_rbl, self.refs_for_column(col), self.offsets_for_column(col))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comparator_cases() {
        assert!(compare(0.7, 0.6, 0.0));
        assert!(!compare(0.6, 0.6, 0.0));
        assert!(compare(0.59, 0.6, 0.02));
        assert!(!compare(0.59, 0.6, 0.0));
    }

    #[test]
    fn digitize_extremes() {
        let refs = [0.67, 0.65, 0.63, 0.61, 0.59, 0.57, 0.55];
        let zero = [0.0; COMPARATORS];
        assert_eq!(digitize(1.1, &refs, &zero), 0);
        assert_eq!(digitize(0.1, &refs, &zero), 7);
        assert_eq!(digitize(0.60, &refs, &zero), 4);
    }

    #[test]
    fn digitize_counts_ones_through_bubbles() {
        // non-monotone refs: 0.60 clears refs 1 and 3 only
        let refs = [0.62, 0.58, 0.63, 0.59, 0.64, 0.65, 0.66];
        assert_eq!(digitize(0.60, &refs, &[0.0; COMPARATORS]), 5);
    }

    #[test]
    fn scheme_bookkeeping() {
        assert_eq!(RefScheme::Unified1.set_count(), 1);
        assert_eq!(RefScheme::PerAdc8.set_count(), 8);
        assert_eq!(RefScheme::PerColumn64.set_count(), 64);
        assert_eq!(RefScheme::PerAdc8.set_of_column(17), 2);
        assert_eq!(RefScheme::PerAdc8.columns_of_set(2), (16..24).collect::<Vec<_>>());
        assert_eq!(adc_of_column(63), 7);
    }

    #[test]
    fn config_checks_set_count_and_range() {
        let sets = vec![[0.6; COMPARATORS]; 8];
        assert!(AdcConfig::new(RefScheme::PerAdc8, sets.clone(), [[0.0; 7]; 8]).is_ok());
        assert!(matches!(
            AdcConfig::new(RefScheme::Unified1, sets, [[0.0; 7]; 8]),
            Err(Error::RefSetCount { expected: 1, found: 8 })
        ));
        let cfg = AdcConfig::new(RefScheme::Unified1, vec![[1.3; 7]], [[0.0; 7]; 8]).unwrap();
        assert!(cfg.validate(Some(1.2)).is_err());
    }
}
