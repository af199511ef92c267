//! Reference-voltage calibration with an exponentially decaying step.
//!
//! For the comparator sitting at reference bitcount `r`, random inputs that
//! produce `r − 1` or `r + 1` on a column served by that comparator are
//! applied. The ideal output is 1 for `r − 1` (higher voltage) and 0 for
//! `r + 1`. Every miss moves the reference by `α·βⁿ·(Qa − Qi)`: a 1 read on
//! an `r + 1` probe means the reference is too low and it rises, a 0 read on
//! an `r − 1` probe means it is too high and it falls.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{compare, AdcConfig, AdcOffsets, RefScheme, RefSet, ADCS, COMPARATORS};
use crate::array::{input_with_bitcount, HeaderConfig, InputVector, MacroArray, COLS, MAX_BITCOUNT, MIN_BITCOUNT};
use crate::rng::{domain, stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct CalibrationParams {
    /// Initial correction step (volts).
    pub alpha: f64,
    /// Per-iteration step decay, `0 < beta < 1`.
    pub beta: f64,
    pub n_vectors: usize,
    pub v_init: f64,
    pub reference_bitcounts: [i32; COMPARATORS],
}

impl Default for CalibrationParams {
    fn default() -> Self {
        Self {
            alpha: 0.005,
            beta: 0.995,
            n_vectors: 1000,
            v_init: 0.6,
            reference_bitcounts: super::quantize::CONFINED_EDGES,
        }
    }
}

impl CalibrationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidCalibration("alpha must be positive"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidCalibration("beta must lie in (0, 1)"));
        }
        if self.n_vectors == 0 {
            return Err(Error::InvalidCalibration("n_vectors must be at least 1"));
        }
        if self.reference_bitcounts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidCalibration("reference bitcounts must be strictly increasing"));
        }
        for &r in &self.reference_bitcounts {
            check_reference(r)?;
        }
        Ok(())
    }

    /// Upper bound on how far the reference can still move after iteration `n`.
    pub fn remaining_budget(&self, n: usize) -> f64 {
        self.alpha * libm::pow(self.beta, n as f64) / (1.0 - self.beta)
    }
}

fn check_reference(r: i32) -> Result<()> {
    if r.rem_euclid(2) != 1 || r - 1 < MIN_BITCOUNT || r + 1 > MAX_BITCOUNT {
        return Err(Error::InvalidReferenceBitcount(r));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CalibrationSample {
    pub target_bitcount: i32,
    pub probe_bitcount: i32,
    pub column: usize,
    pub q_ideal: bool,
    pub q_actual: bool,
    /// Signed change applied to the reference in this iteration.
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTrace {
    /// Reference voltage before iteration 0 and after every iteration.
    pub v_refs: Vec<f64>,
    pub samples: Vec<CalibrationSample>,
}

impl CalibrationTrace {
    pub fn final_ref(&self) -> f64 {
        *self.v_refs.last().expect("trace holds the initial value")
    }
}

/// Gaussian static offsets for the 56 comparators of one macro.
pub fn draw_offsets<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> AdcOffsets {
    let mut out = [[0.0; COMPARATORS]; ADCS];
    if sigma == 0.0 {
        return out;
    }
    for adc in out.iter_mut() {
        for o in adc.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *o = sigma * z;
        }
    }
    out
}

/// Calibrates comparator `k` against bitlines drawn at random from
/// `columns`, returning the whole trajectory.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_comparator_traced<R: Rng + ?Sized>(
    array: &MacroArray,
    columns: &[usize],
    offsets: &AdcOffsets,
    k: usize,
    params: &CalibrationParams,
    header: &HeaderConfig,
    rng: &mut R,
) -> Result<CalibrationTrace> {
    params.validate()?;
    if k >= COMPARATORS {
        return Err(Error::IndexOutOfRange { index: k, limit: COMPARATORS });
    }
    if columns.is_empty() {
        return Err(Error::InvalidCalibration("no columns to calibrate against"));
    }
    if let Some(&c) = columns.iter().find(|&&c| c >= COLS) {
        return Err(Error::IndexOutOfRange { index: c, limit: COLS });
    }
    let r = params.reference_bitcounts[k];
    let weights = array.weights().ok_or(Error::UnprogrammedColumn(columns[0]))?;

    let mut v_ref = params.v_init;
    let mut v_refs = Vec::with_capacity(params.n_vectors + 1);
    let mut samples = Vec::with_capacity(params.n_vectors);
    v_refs.push(v_ref);
    let mut decay = 1.0;
    for _ in 0..params.n_vectors {
        let column = if columns.len() == 1 {
            columns[0]
        } else {
            columns[rng.random_range(0..columns.len())]
        };
        let below = rng.random_bool(0.5);
        let probe = if below { r - 1 } else { r + 1 };
        let input = input_with_bitcount(weights.column(column), probe, rng)?;
        let v = array.evaluate_bitline(column, input, header)?.voltage;
        let offset = offsets[super::adc_of_column(column)][k];
        let q_actual = compare(v, v_ref, offset);
        let q_ideal = below;
        let step = params.alpha * decay * (f64::from(u8::from(q_actual)) - f64::from(u8::from(q_ideal)));
        v_ref += step;
        decay *= params.beta;
        v_refs.push(v_ref);
        samples.push(CalibrationSample {
            target_bitcount: r,
            probe_bitcount: probe,
            column,
            q_ideal,
            q_actual,
            step,
        });
    }
    Ok(CalibrationTrace { v_refs, samples })
}

/// Calibrated reference voltage for comparator `k`.
pub fn calibrate_comparator<R: Rng + ?Sized>(
    array: &MacroArray,
    columns: &[usize],
    offsets: &AdcOffsets,
    k: usize,
    params: &CalibrationParams,
    header: &HeaderConfig,
    rng: &mut R,
) -> Result<f64> {
    calibrate_comparator_traced(array, columns, offsets, k, params, header, rng).map(|t| t.final_ref())
}

/// Calibrates every reference set required by `scheme` for one macro whose
/// comparators carry `offsets`. Each (set, comparator) pair runs on its own
/// stream keyed by `(seed, macro_id, set, k)`.
pub fn calibrate_all(
    array: &MacroArray,
    scheme: RefScheme,
    offsets: AdcOffsets,
    params: &CalibrationParams,
    header: &HeaderConfig,
    seed: u64,
    macro_id: u64,
) -> Result<AdcConfig> {
    params.validate()?;
    let mut ref_sets = Vec::with_capacity(scheme.set_count());
    for set in 0..scheme.set_count() {
        let columns = scheme.columns_of_set(set);
        let mut refs: RefSet = [0.0; COMPARATORS];
        for (k, slot) in refs.iter_mut().enumerate() {
            let mut rng = stream(seed, &[domain::CALIBRATE, macro_id, set as u64, k as u64]);
            *slot = calibrate_comparator(array, &columns, &offsets, k, params, header, &mut rng)?;
        }
        ref_sets.push(refs);
    }
    AdcConfig::new(scheme, ref_sets, offsets)
}

/// References placed halfway between the bitline voltages of the two
/// bitcounts neighbouring each reference bitcount, read on `column`.
/// Meaningful for arrays whose voltage depends only on the bitcount.
pub fn midpoint_refs(
    array: &MacroArray,
    column: usize,
    header: &HeaderConfig,
    reference_bitcounts: &[i32; COMPARATORS],
) -> Result<RefSet> {
    let weights = array.weights().ok_or(Error::UnprogrammedColumn(column))?;
    let wc = weights.column(column);
    // deterministic inputs: the first m rows match
    let at = |b: i32| -> Result<f64> {
        let m = ((b - MIN_BITCOUNT) / 2) as u32;
        let mask = if m == 64 { u64::MAX } else { (1u64 << m) - 1 };
        let input = InputVector::from_bits((wc & mask) | (!wc & !mask));
        Ok(array.evaluate_bitline(column, input, header)?.voltage)
    };
    let mut refs = [0.0; COMPARATORS];
    for (slot, &r) in refs.iter_mut().zip(reference_bitcounts) {
        check_reference(r)?;
        *slot = 0.5 * (at(r - 1)? + at(r + 1)?);
    }
    Ok(refs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adc::{digitize, QuantizerSpec};
    use crate::array::{achievable_bitcounts, ideal_bitcount, WeightTile, NOMINAL_HRS, NOMINAL_LRS};

    fn exact_array(seed: u64) -> MacroArray {
        let w = WeightTile::random(&mut stream(seed, &[]));
        MacroArray::with_exact_resistances(&w, NOMINAL_LRS, NOMINAL_HRS, 1.2).unwrap()
    }

    #[test]
    fn params_validation() {
        CalibrationParams::default().validate().unwrap();
        let bad_beta = CalibrationParams { beta: 1.0, ..Default::default() };
        assert!(bad_beta.validate().is_err());
        let even = CalibrationParams {
            reference_bitcounts: [-12, -9, -5, -1, 3, 7, 11],
            ..Default::default()
        };
        assert!(even.validate().is_err());
        let edge = CalibrationParams {
            reference_bitcounts: [-13, -9, -5, -1, 3, 7, 65],
            ..Default::default()
        };
        assert_eq!(edge.validate(), Err(Error::InvalidReferenceBitcount(65)));
    }

    #[test]
    fn first_correction_is_alpha() {
        let a = exact_array(1);
        let h = HeaderConfig::default();
        let params = CalibrationParams::default();
        let offsets = [[0.0; COMPARATORS]; ADCS];
        // comparator 0 sits far above v_init, so the first r+1 probe misses
        let t = calibrate_comparator_traced(&a, &[0], &offsets, 0, &params, &h, &mut stream(2, &[])).unwrap();
        let first_miss = t.samples.iter().position(|s| s.q_ideal != s.q_actual).unwrap();
        let s = t.samples[first_miss];
        let expected = 0.005 * libm::pow(0.995, first_miss as f64);
        assert!((s.step.abs() - expected).abs() < 1e-15);
        if first_miss == 0 {
            assert_eq!(s.step.abs(), 0.005);
        }
        // a miss at n = 0 moves by exactly α
        let t = (0..64)
            .map(|seed| calibrate_comparator_traced(&a, &[0], &offsets, 0, &params, &h, &mut stream(seed, &[9])).unwrap())
            .find(|t| t.samples[0].q_ideal != t.samples[0].q_actual)
            .expect("some stream opens with an r+1 probe");
        assert_eq!(t.samples[0].step, 0.005);
        assert!((t.v_refs[1] - t.v_refs[0] - 0.005).abs() < 1e-15);
    }

    #[test]
    fn no_correction_when_correct() {
        let a = exact_array(3);
        let h = HeaderConfig::default();
        let params = CalibrationParams::default();
        let offsets = [[0.0; COMPARATORS]; ADCS];
        let t = calibrate_comparator_traced(&a, &[4], &offsets, 3, &params, &h, &mut stream(4, &[])).unwrap();
        for (i, s) in t.samples.iter().enumerate() {
            if s.q_actual == s.q_ideal {
                assert_eq!(s.step, 0.0);
                assert_eq!(t.v_refs[i + 1], t.v_refs[i]);
            }
        }
    }

    #[test]
    fn midpoint_refs_reproduce_confined_quantizer() {
        let a = exact_array(5);
        let h = HeaderConfig::default();
        let q = QuantizerSpec::confined();
        let params = CalibrationParams::default();
        let w = a.weights().unwrap().clone();
        for col in [0usize, 17, 63] {
            let refs = midpoint_refs(&a, col, &h, &params.reference_bitcounts).unwrap();
            let mut rng = stream(6, &[col as u64]);
            for b in achievable_bitcounts() {
                let x = input_with_bitcount(w.column(col), b, &mut rng).unwrap();
                assert_eq!(ideal_bitcount(x, w.column(col)), b);
                let v = a.evaluate_bitline(col, x, &h).unwrap().voltage;
                assert_eq!(digitize(v, &refs, &[0.0; COMPARATORS]), q.quantize(b), "b={b}");
            }
        }
    }

    #[test]
    fn scheme_set_counts() {
        let a = exact_array(7);
        let h = HeaderConfig::default();
        let params = CalibrationParams { n_vectors: 50, ..Default::default() };
        for (scheme, n) in [(RefScheme::Unified1, 1), (RefScheme::PerAdc8, 8), (RefScheme::PerColumn64, 64)] {
            let cfg = calibrate_all(&a, scheme, [[0.0; 7]; 8], &params, &h, 1, 0).unwrap();
            assert_eq!(cfg.ref_sets.len(), n);
        }
    }

    #[test]
    fn rejects_unprogrammed_or_bad_index() {
        let blank = MacroArray::new(1.2).unwrap();
        let h = HeaderConfig::default();
        let p = CalibrationParams::default();
        let o = [[0.0; 7]; 8];
        assert!(calibrate_comparator(&blank, &[0], &o, 0, &p, &h, &mut stream(0, &[])).is_err());
        let a = exact_array(8);
        assert!(calibrate_comparator(&a, &[0], &o, 7, &p, &h, &mut stream(0, &[])).is_err());
        assert!(calibrate_comparator(&a, &[64], &o, 0, &p, &h, &mut stream(0, &[])).is_err());
        assert!(calibrate_comparator(&a, &[], &o, 0, &p, &h, &mut stream(0, &[])).is_err());
    }

    #[test]
    fn offsets_are_seeded() {
        let a = draw_offsets(0.01, &mut stream(1, &[]));
        let b = draw_offsets(0.01, &mut stream(1, &[]));
        assert_eq!(a, b);
        assert_eq!(draw_offsets(0.0, &mut stream(1, &[])), [[0.0; 7]; 8]);
    }
}
