//! Stochastic 1T1R RRAM cell model.
//!
//! A SET pulse lands the cell in LRS with a resistance drawn from a
//! lognormal whose mean is an affine function of the access-transistor gate
//! voltage (higher gate, lower resistance). A RESET pulse redraws an HRS
//! resistance from a lognormal around a fixed median. The write-verify
//! loops wrap those pulses into the program/read/adjust procedure used to
//! tighten the LRS population around 6 kΩ and push HRS above 1 MΩ.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Resistance reported for a cell that was never formed.
pub const PRISTINE_RESISTANCE: f64 = 1.0e9;

pub const SET_WIDTH_NS: f64 = 100.0;
pub const SET_AMPLITUDE_V: f64 = 2.1;
pub const RESET_WIDTH_NS: f64 = 200.0;
pub const RESET_AMPLITUDE_V: f64 = 4.0;
pub const RESET_GATE_V: f64 = 3.8;

pub const DEFAULT_LRS_TARGET_LO: f64 = 5_900.0;
pub const DEFAULT_LRS_TARGET_HI: f64 = 6_100.0;
pub const DEFAULT_HRS_THRESHOLD: f64 = 1.0e6;
pub const DEFAULT_MAX_ITER: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CellState {
    Pristine,
    Lrs,
    Hrs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceState {
    state: CellState,
    resistance: f64,
}

impl Default for DeviceState {
    fn default() -> Self {
        Self::pristine()
    }
}

impl DeviceState {
    pub const fn pristine() -> Self {
        Self {
            state: CellState::Pristine,
            resistance: PRISTINE_RESISTANCE,
        }
    }

    /// A cell in a known state, e.g. restored from a snapshot.
    pub fn new(state: CellState, resistance: f64) -> Result<Self> {
        if !(resistance > 0.0) || !resistance.is_finite() {
            return Err(Error::InvalidDeviceParams("resistance must be positive and finite"));
        }
        Ok(Self { state, resistance })
    }

    pub fn state(&self) -> CellState {
        self.state
    }

    /// Stored resistance regardless of state.
    pub fn resistance(&self) -> f64 {
        self.resistance
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PulseKind {
    Set,
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PulseSpec {
    pub kind: PulseKind,
    pub width_ns: f64,
    pub amplitude: f64,
    pub gate_voltage: f64,
}

impl PulseSpec {
    pub fn set(gate_voltage: f64) -> Self {
        Self {
            kind: PulseKind::Set,
            width_ns: SET_WIDTH_NS,
            amplitude: SET_AMPLITUDE_V,
            gate_voltage,
        }
    }

    pub fn reset() -> Self {
        Self {
            kind: PulseKind::Reset,
            width_ns: RESET_WIDTH_NS,
            amplitude: RESET_AMPLITUDE_V,
            gate_voltage: RESET_GATE_V,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DeviceModelParams {
    /// Mean LRS resistance at 0 V gate (ohms); the affine model is
    /// `lrs_intercept + lrs_slope * gate_voltage`.
    pub lrs_intercept: f64,
    /// Ohms per volt, negative.
    pub lrs_slope: f64,
    pub lrs_sigma_rel: f64,
    pub lrs_min: f64,
    pub lrs_max: f64,
    pub hrs_log_median: f64,
    pub hrs_log_sigma: f64,
    pub hrs_floor: f64,
    pub gate_step: f64,
    pub gate_init: f64,
    pub gate_min: f64,
    pub gate_max: f64,
    pub seed: u64,
}

impl Default for DeviceModelParams {
    fn default() -> Self {
        Self {
            lrs_intercept: 9_000.0,
            lrs_slope: -1_300.0,
            lrs_sigma_rel: 0.02,
            lrs_min: 3_000.0,
            lrs_max: 20_000.0,
            hrs_log_median: 3.0e6,
            hrs_log_sigma: 0.6,
            hrs_floor: 1.0e5,
            gate_step: 0.05,
            gate_init: 2.3,
            gate_min: 1.5,
            gate_max: 3.5,
            seed: 0,
        }
    }
}

impl DeviceModelParams {
    /// Deterministic model: every draw returns its distribution centre.
    pub fn zero_sigma() -> Self {
        Self {
            lrs_sigma_rel: 0.0,
            hrs_log_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lrs_slope < 0.0) {
            return Err(Error::InvalidDeviceParams("lrs_slope must be negative"));
        }
        if !(self.lrs_sigma_rel >= 0.0) || !(self.hrs_log_sigma >= 0.0) {
            return Err(Error::InvalidDeviceParams("sigmas must be non-negative"));
        }
        if !(self.lrs_min > 0.0 && self.lrs_min < self.lrs_max) {
            return Err(Error::InvalidDeviceParams("LRS support must be 0 < min < max"));
        }
        if !(self.hrs_floor > 0.0 && self.hrs_log_median > 0.0) {
            return Err(Error::InvalidDeviceParams("HRS floor and median must be positive"));
        }
        if !(self.gate_step > 0.0) {
            return Err(Error::InvalidDeviceParams("gate_step must be positive"));
        }
        if !(self.gate_min < self.gate_max)
            || !(self.gate_min..=self.gate_max).contains(&self.gate_init)
        {
            return Err(Error::InvalidDeviceParams("gate_init must lie in [gate_min, gate_max]"));
        }
        Ok(())
    }

    pub fn lrs_mean(&self, gate_voltage: f64) -> f64 {
        self.lrs_intercept + self.lrs_slope * gate_voltage
    }
}

/// SET pulse at `gate_voltage`: the cell lands in LRS.
pub fn apply_set<R: Rng + ?Sized>(
    _cell: DeviceState,
    gate_voltage: f64,
    params: &DeviceModelParams,
    rng: &mut R,
) -> Result<DeviceState> {
    if !(params.gate_min..=params.gate_max).contains(&gate_voltage) {
        return Err(Error::GateVoltageOutOfRange(
            gate_voltage,
            params.gate_min,
            params.gate_max,
        ));
    }
    let mean = params.lrs_mean(gate_voltage);
    let s = params.lrs_sigma_rel;
    let resistance = if s == 0.0 {
        mean
    } else {
        let z: f64 = rng.sample(StandardNormal);
        // mean-preserving lognormal
        mean * libm::exp(s * z - 0.5 * s * s)
    };
    Ok(DeviceState {
        state: CellState::Lrs,
        resistance: resistance.clamp(params.lrs_min, params.lrs_max),
    })
}

/// RESET pulse: the cell lands in HRS.
pub fn apply_reset<R: Rng + ?Sized>(
    _cell: DeviceState,
    params: &DeviceModelParams,
    rng: &mut R,
) -> DeviceState {
    DeviceState {
        state: CellState::Hrs,
        resistance: draw_hrs(params, rng),
    }
}

/// Forming: a pristine cell becomes an ordinary HRS cell.
pub fn form<R: Rng + ?Sized>(cell: DeviceState, params: &DeviceModelParams, rng: &mut R) -> DeviceState {
    match cell.state {
        CellState::Pristine => apply_reset(cell, params, rng),
        _ => cell,
    }
}

fn draw_hrs<R: Rng + ?Sized>(params: &DeviceModelParams, rng: &mut R) -> f64 {
    let s = params.hrs_log_sigma;
    let r = if s == 0.0 {
        params.hrs_log_median
    } else {
        let z: f64 = rng.sample(StandardNormal);
        params.hrs_log_median * libm::exp(s * z)
    };
    r.max(params.hrs_floor)
}

/// Ideal 0.2 V read; no disturb.
pub fn read_resistance(cell: &DeviceState) -> Result<f64> {
    match cell.state {
        CellState::Pristine => Err(Error::UnprogrammedCell),
        _ => Ok(cell.resistance),
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WriteVerifyReport {
    pub iterations_used: usize,
    pub converged: bool,
    pub final_resistance: f64,
    /// Every pulse applied, with the resistance read after it.
    pub trace: Vec<(PulseSpec, f64)>,
}

/// LRS write-verify: SET at the initial gate voltage, then RESET + SET with
/// the gate nudged by one step (down if too low, up if too high) until the
/// read lands in `[target_lo, target_hi]` or `max_iter` SETs were spent.
pub fn write_verify_lrs<R: Rng + ?Sized>(
    cell: &mut DeviceState,
    target_lo: f64,
    target_hi: f64,
    max_iter: usize,
    params: &DeviceModelParams,
    rng: &mut R,
) -> Result<WriteVerifyReport> {
    if !(target_lo < target_hi) {
        return Err(Error::InvalidDeviceParams("LRS target window must have lo < hi"));
    }
    if max_iter == 0 {
        return Err(Error::InvalidDeviceParams("max_iter must be at least 1"));
    }
    let mut trace = Vec::new();
    let mut step: i64 = 0;
    let mut iterations_used = 0;
    let mut converged = false;
    for iter in 0..max_iter {
        if iter > 0 {
            *cell = apply_reset(*cell, params, rng);
            trace.push((PulseSpec::reset(), cell.resistance));
        }
        let gate = (params.gate_init + step as f64 * params.gate_step)
            .clamp(params.gate_min, params.gate_max);
        *cell = apply_set(*cell, gate, params, rng)?;
        trace.push((PulseSpec::set(gate), cell.resistance));
        iterations_used = iter + 1;
        let r = read_resistance(cell)?;
        if r < target_lo {
            step -= 1;
        } else if r > target_hi {
            step += 1;
        } else {
            converged = true;
            break;
        }
    }
    Ok(WriteVerifyReport {
        iterations_used,
        converged,
        final_resistance: cell.resistance,
        trace,
    })
}

/// HRS write-verify: repeat the same RESET pulse until the read exceeds
/// `threshold` or `max_iter` pulses were spent.
pub fn write_verify_hrs<R: Rng + ?Sized>(
    cell: &mut DeviceState,
    threshold: f64,
    max_iter: usize,
    params: &DeviceModelParams,
    rng: &mut R,
) -> Result<WriteVerifyReport> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidDeviceParams("HRS threshold must be positive"));
    }
    if max_iter == 0 {
        return Err(Error::InvalidDeviceParams("max_iter must be at least 1"));
    }
    let mut trace = Vec::new();
    let mut iterations_used = 0;
    let mut converged = false;
    for iter in 0..max_iter {
        *cell = apply_reset(*cell, params, rng);
        trace.push((PulseSpec::reset(), cell.resistance));
        iterations_used = iter + 1;
        if read_resistance(cell)? > threshold {
            converged = true;
            break;
        }
    }
    Ok(WriteVerifyReport {
        iterations_used,
        converged,
        final_resistance: cell.resistance,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;

    fn lrs_cell(r: f64) -> DeviceState {
        DeviceState::new(CellState::Lrs, r).unwrap()
    }

    #[test]
    fn set_is_affine_under_zero_sigma() {
        let p = DeviceModelParams::zero_sigma();
        let mut rng = stream(1, &[]);
        let c = apply_set(DeviceState::pristine(), 2.3, &p, &mut rng).unwrap();
        assert_eq!(c.state(), CellState::Lrs);
        assert_abs_diff_eq!(c.resistance(), 6010.0, epsilon = 1e-9);
        let c = apply_set(c, 2.35, &p, &mut rng).unwrap();
        assert_abs_diff_eq!(c.resistance(), 5945.0, epsilon = 1e-9);
    }

    #[test]
    fn set_rejects_gate_out_of_range() {
        let p = DeviceModelParams::default();
        let mut rng = stream(1, &[]);
        assert!(matches!(
            apply_set(DeviceState::pristine(), 1.49, &p, &mut rng),
            Err(Error::GateVoltageOutOfRange(..))
        ));
        assert!(apply_set(DeviceState::pristine(), 3.51, &p, &mut rng).is_err());
        assert!(apply_set(DeviceState::pristine(), 3.5, &p, &mut rng).is_ok());
    }

    #[test]
    fn seeded_draws_repeat() {
        let p = DeviceModelParams::default();
        let a = apply_set(DeviceState::pristine(), 2.3, &p, &mut stream(9, &[4])).unwrap();
        let b = apply_set(DeviceState::pristine(), 2.3, &p, &mut stream(9, &[4])).unwrap();
        assert_eq!(a, b);
        let a = apply_reset(DeviceState::pristine(), &p, &mut stream(9, &[5]));
        let b = apply_reset(DeviceState::pristine(), &p, &mut stream(9, &[5]));
        assert_eq!(a, b);
    }

    #[test]
    fn reset_zero_sigma_is_median() {
        let p = DeviceModelParams::zero_sigma();
        let c = apply_reset(lrs_cell(6000.0), &p, &mut stream(0, &[]));
        assert_eq!(c.state(), CellState::Hrs);
        assert_eq!(c.resistance(), 3.0e6);
    }

    #[test]
    fn read_identity_and_pristine_error() {
        assert_eq!(read_resistance(&lrs_cell(6000.0)), Ok(6000.0));
        let h = DeviceState::new(CellState::Hrs, 3.0e6).unwrap();
        assert_eq!(read_resistance(&h), Ok(3.0e6));
        assert_eq!(read_resistance(&DeviceState::pristine()), Err(Error::UnprogrammedCell));
    }

    #[test]
    fn forming_moves_pristine_to_hrs() {
        let p = DeviceModelParams::zero_sigma();
        let c = form(DeviceState::pristine(), &p, &mut stream(0, &[]));
        assert_eq!(c.state(), CellState::Hrs);
        let l = lrs_cell(6000.0);
        assert_eq!(form(l, &p, &mut stream(0, &[])), l);
    }

    #[test]
    fn lrs_verify_first_shot() {
        let p = DeviceModelParams::zero_sigma();
        let mut c = DeviceState::pristine();
        let rep = write_verify_lrs(&mut c, 5900.0, 6100.0, 10, &p, &mut stream(0, &[])).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations_used, 1);
        assert_eq!(rep.trace.len(), 1);
    }

    #[test]
    fn lrs_verify_steps_gate_up() {
        // mean(2.3) = 6200 with slope -1300
        let p = DeviceModelParams {
            lrs_intercept: 6200.0 + 1300.0 * 2.3,
            ..DeviceModelParams::zero_sigma()
        };
        let mut c = DeviceState::pristine();
        let rep = write_verify_lrs(&mut c, 5900.0, 6100.0, 10, &p, &mut stream(0, &[])).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations_used, 3);
        let sets: Vec<_> = rep.trace.iter().filter(|(p, _)| p.kind == PulseKind::Set).collect();
        assert_abs_diff_eq!(sets[0].1, 6200.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sets[1].1, 6135.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sets[2].1, 6070.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sets[2].0.gate_voltage, 2.4, epsilon = 1e-12);
        // RESET precedes every retry
        assert_eq!(rep.trace.len(), 5);
        assert_eq!(rep.trace[1].0.kind, PulseKind::Reset);
    }

    #[test]
    fn lrs_verify_reports_non_convergence() {
        let p = DeviceModelParams {
            lrs_intercept: 12_000.0 + 1300.0 * 2.3,
            ..DeviceModelParams::zero_sigma()
        };
        let mut c = DeviceState::pristine();
        let rep = write_verify_lrs(&mut c, 5900.0, 6100.0, 4, &p, &mut stream(0, &[])).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations_used, 4);
        assert_eq!(rep.final_resistance, c.resistance());
    }

    #[test]
    fn hrs_verify_single_pulse() {
        let p = DeviceModelParams::zero_sigma();
        let mut c = lrs_cell(6000.0);
        let rep = write_verify_hrs(&mut c, 1e6, 10, &p, &mut stream(0, &[])).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations_used, 1);
        assert_eq!(c.state(), CellState::Hrs);
    }

    #[test]
    fn hrs_retry_matches_closed_form() {
        // threshold at the median: single-pulse success p = 1/2 exactly
        let p = DeviceModelParams {
            hrs_log_median: 1.0e6,
            hrs_log_sigma: 0.6,
            ..DeviceModelParams::default()
        };
        for max_iter in [1usize, 2, 3, 10] {
            let trials = 10_000;
            let mut ok = 0;
            for t in 0..trials {
                let mut c = lrs_cell(6000.0);
                let mut rng = stream(11, &[max_iter as u64, t]);
                if write_verify_hrs(&mut c, 1.0e6, max_iter, &p, &mut rng).unwrap().converged {
                    ok += 1;
                }
            }
            let expected = 1.0 - libm::pow(0.5, max_iter as f64);
            let observed = ok as f64 / trials as f64;
            assert!(
                (observed - expected).abs() < 0.01,
                "max_iter={max_iter}: observed {observed}, expected {expected}"
            );
        }
    }

    #[test]
    fn rejects_bad_loop_arguments() {
        let p = DeviceModelParams::default();
        let mut c = DeviceState::pristine();
        let mut rng = stream(0, &[]);
        assert!(write_verify_lrs(&mut c, 6100.0, 5900.0, 10, &p, &mut rng).is_err());
        assert!(write_verify_lrs(&mut c, 5900.0, 6100.0, 0, &p, &mut rng).is_err());
        assert!(write_verify_hrs(&mut c, 0.0, 10, &p, &mut rng).is_err());
    }

    #[test]
    fn default_params_validate() {
        DeviceModelParams::default().validate().unwrap();
        let bad = DeviceModelParams {
            lrs_slope: 10.0,
            ..DeviceModelParams::default()
        };
        assert!(bad.validate().is_err());
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn loops_terminate_within_budget(seed in any::<u64>(), max_iter in 1usize..15, sigma in 0.0f64..0.2) {
            let p = DeviceModelParams { lrs_sigma_rel: sigma, ..DeviceModelParams::default() };
            let mut rng = stream(seed, &[]);
            let mut c = DeviceState::pristine();
            let rep = write_verify_lrs(&mut c, 5900.0, 6100.0, max_iter, &p, &mut rng).unwrap();
            prop_assert!(rep.iterations_used <= max_iter);
            if rep.converged {
                prop_assert!((5900.0..=6100.0).contains(&rep.final_resistance));
            }
            let rep = write_verify_hrs(&mut c, 1e6, max_iter, &p, &mut rng).unwrap();
            prop_assert!(rep.iterations_used <= max_iter);
            prop_assert!(c.resistance() > 0.0);
        }

        #[test]
        fn zero_sigma_loop_approaches_window(start in 5000.0f64..7400.0) {
            // initial mean anywhere in a band reachable inside the gate range
            let p = DeviceModelParams {
                lrs_intercept: start + 1300.0 * 2.3,
                ..DeviceModelParams::zero_sigma()
            };
            let mut c = DeviceState::pristine();
            let rep = write_verify_lrs(&mut c, 5900.0, 6100.0, 40, &p, &mut stream(0, &[])).unwrap();
            prop_assert!(rep.converged);
            let dist: Vec<f64> = rep.trace.iter()
                .filter(|(p, _)| p.kind == PulseKind::Set)
                .map(|(_, r)| (r - 6000.0).abs())
                .collect();
            for w in dist.windows(2) {
                prop_assert!(w[1] < w[0]);
            }
        }

        #[test]
        fn states_keep_their_support(seed in any::<u64>()) {
            let p = DeviceModelParams { lrs_sigma_rel: 0.5, hrs_log_sigma: 3.0, ..DeviceModelParams::default() };
            let mut rng = stream(seed, &[]);
            let l = apply_set(DeviceState::pristine(), 2.3, &p, &mut rng).unwrap();
            prop_assert!(l.resistance() >= p.lrs_min && l.resistance() <= p.lrs_max);
            let h = apply_reset(l, &p, &mut rng);
            prop_assert!(h.resistance() >= p.hrs_floor);
        }
    }
}
