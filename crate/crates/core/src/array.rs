//! The 64×64 XNOR bitcell array and its bitline model.
//!
//! Each XNOR bitcell is a pair of 1T1R cells on differential wordlines. A
//! +1 weight stores LRS in the positive cell and HRS in the negative one;
//! the activation selects which of the two cells sits on the bitline, so the
//! selected cell is LRS exactly when activation and weight agree. With all
//! 64 rows asserted, the selected cells form the pull-down half of a static
//! divider against the PMOS header.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::device::{
    self, read_resistance, CellState, DeviceModelParams, DeviceState, WriteVerifyReport,
};
use crate::rng::{domain, stream};
use crate::{Error, Result, Sign};

pub const ROWS: usize = 64;
pub const COLS: usize = 64;
pub const MIN_BITCOUNT: i32 = -(ROWS as i32);
pub const MAX_BITCOUNT: i32 = ROWS as i32;
/// Number of achievable bitcounts (-64, -62, ..., 64).
pub const BITCOUNT_LEVELS: usize = ROWS + 1;

pub const DEFAULT_VDD: f64 = 1.2;
pub const VDD_MIN: f64 = 0.9;
pub const VDD_MAX: f64 = 1.2;

pub const NOMINAL_LRS: f64 = 6_000.0;
pub const NOMINAL_HRS: f64 = 3.0e6;

/// 64 binary activations packed as bits; bit `i` set means row `i` is +1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct InputVector(u64);

impl InputVector {
    pub const fn from_bits(bits: u64) -> Self {
        Self(bits)
    }

    pub fn from_signs(signs: &[Sign]) -> Result<Self> {
        if signs.len() != ROWS {
            return Err(Error::ShapeMismatch("input vector must have 64 entries"));
        }
        Ok(Self(pack(signs.iter().map(|s| s.is_plus()))))
    }

    pub const fn all_plus() -> Self {
        Self(u64::MAX)
    }

    pub const fn all_minus() -> Self {
        Self(0)
    }

    pub const fn bits(self) -> u64 {
        self.0
    }

    pub fn get(self, row: usize) -> Sign {
        Sign::from_bool(self.0 >> row & 1 == 1)
    }
}

impl core::ops::Neg for InputVector {
    type Output = InputVector;

    fn neg(self) -> InputVector {
        InputVector(!self.0)
    }
}

fn pack(bits: impl Iterator<Item = bool>) -> u64 {
    bits.enumerate()
        .fold(0u64, |acc, (i, b)| acc | (u64::from(b) << i))
}

/// A 64×64 ±1 weight sub-matrix, stored column-wise as bitmasks over rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightTile {
    columns: [u64; COLS],
}

impl WeightTile {
    pub fn from_fn(mut f: impl FnMut(usize, usize) -> Sign) -> Self {
        let mut columns = [0u64; COLS];
        for (c, col) in columns.iter_mut().enumerate() {
            *col = pack((0..ROWS).map(|r| f(r, c).is_plus()));
        }
        Self { columns }
    }

    pub fn from_columns(columns: [u64; COLS]) -> Self {
        Self { columns }
    }

    pub fn uniform(sign: Sign) -> Self {
        Self::from_fn(|_, _| sign)
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut columns = [0u64; COLS];
        for c in columns.iter_mut() {
            *c = rng.random();
        }
        Self { columns }
    }

    pub fn get(&self, row: usize, col: usize) -> Sign {
        Sign::from_bool(self.columns[col] >> row & 1 == 1)
    }

    /// Bitmask of column `col` (bit `r` set means weight +1).
    pub fn column(&self, col: usize) -> u64 {
        self.columns[col]
    }

    pub fn columns(&self) -> &[u64; COLS] {
        &self.columns
    }
}

impl core::ops::Neg for &WeightTile {
    type Output = WeightTile;

    fn neg(self) -> WeightTile {
        let mut columns = self.columns;
        for c in columns.iter_mut() {
            *c = !*c;
        }
        WeightTile { columns }
    }
}

/// Σᵢ XNOR(inputᵢ, weightᵢ) over the 64 rows, i.e. `2m − 64`.
pub fn ideal_bitcount(input: InputVector, weight_column: u64) -> i32 {
    let matches = (!(input.0 ^ weight_column)).count_ones() as i32;
    2 * matches - ROWS as i32
}

pub fn is_achievable(bitcount: i32) -> bool {
    (MIN_BITCOUNT..=MAX_BITCOUNT).contains(&bitcount) && bitcount % 2 == 0
}

/// Index of an achievable bitcount in `0..65`.
pub fn bitcount_index(bitcount: i32) -> Result<usize> {
    if !is_achievable(bitcount) {
        return Err(Error::UnachievableBitcount(bitcount));
    }
    Ok(((bitcount - MIN_BITCOUNT) / 2) as usize)
}

/// All achievable bitcounts in increasing order.
pub fn achievable_bitcounts() -> impl Iterator<Item = i32> + Clone {
    (MIN_BITCOUNT..=MAX_BITCOUNT).step_by(2)
}

/// A uniformly random input that produces `bitcount` against `weight_column`.
pub fn input_with_bitcount<R: Rng + ?Sized>(
    weight_column: u64,
    bitcount: i32,
    rng: &mut R,
) -> Result<InputVector> {
    bitcount_index(bitcount)?;
    let matches = ((bitcount + ROWS as i32) / 2) as usize;
    let mut rows: [u8; ROWS] = core::array::from_fn(|i| i as u8);
    rows.shuffle(rng);
    // start from the exact complement (no matches) and flip `matches` rows
    let mut bits = !weight_column;
    for &r in &rows[..matches] {
        bits ^= 1u64 << r;
    }
    Ok(InputVector(bits))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct XnorBitcell {
    pub pos: DeviceState,
    pub neg: DeviceState,
}

/// Which of the two 1T1R cells of a bitcell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Polarity {
    Pos,
    Neg,
}

impl Polarity {
    /// Row of this cell in the physical 128×64 1T1R array.
    pub fn physical_row(self, xnor_row: usize) -> usize {
        2 * xnor_row + usize::from(self == Polarity::Neg)
    }
}

pub const HEADER_STRENGTHS: usize = 8;
/// Strength whose curve the default table is fitted around.
pub const FIT_STRENGTH: u8 = 4;

/// PMOS pull-up header, modelled as a linear resistor per strength setting.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HeaderConfig {
    strength: u8,
    pullup_table: [f64; HEADER_STRENGTHS],
}

impl Default for HeaderConfig {
    fn default() -> Self {
        Self::fitted(FIT_STRENGTH, NOMINAL_LRS, NOMINAL_HRS)
            .expect("nominal fit is valid")
    }
}

impl HeaderConfig {
    pub fn new(strength: u8, pullup_table: [f64; HEADER_STRENGTHS]) -> Result<Self> {
        if !(1..=HEADER_STRENGTHS as u8).contains(&strength) {
            return Err(Error::InvalidHeaderStrength(strength));
        }
        if pullup_table.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidHeaderTable("resistances must be positive"));
        }
        if pullup_table.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidHeaderTable("must be strictly decreasing in strength"));
        }
        Ok(Self {
            strength,
            pullup_table,
        })
    }

    /// Unscaled table `8 kΩ / s`.
    pub fn nominal_table() -> [f64; HEADER_STRENGTHS] {
        core::array::from_fn(|i| 8_000.0 / (i + 1) as f64)
    }

    /// The nominal table scaled so that the strength-4 curve is as steep as
    /// possible at bitcount 0 for a column of nominal resistances.
    ///
    /// For a linear pull-up `R` and pull-down conductance `G`, the slope
    /// `dV/dG = -vdd·R / (1 + R·G)²` peaks at `R = 1/G`, so the fitted
    /// strength-4 resistance equals the pull-down resistance at bitcount 0.
    pub fn fitted(strength: u8, r_lrs: f64, r_hrs: f64) -> Result<Self> {
        let half = (ROWS / 2) as f64;
        let g0 = half / r_lrs + half / r_hrs;
        let nominal = Self::nominal_table();
        let scale = (1.0 / g0) / nominal[usize::from(FIT_STRENGTH) - 1];
        Self::new(strength, nominal.map(|r| r * scale))
    }

    pub fn strength(&self) -> u8 {
        self.strength
    }

    pub fn with_strength(&self, strength: u8) -> Result<Self> {
        Self::new(strength, self.pullup_table)
    }

    pub fn table(&self) -> &[f64; HEADER_STRENGTHS] {
        &self.pullup_table
    }

    pub fn pullup(&self) -> f64 {
        self.pullup_table[usize::from(self.strength) - 1]
    }
}

/// Divider output for a pull-down resistance.
pub fn divider_voltage(vdd: f64, r_pulldown: f64, r_pullup: f64) -> f64 {
    vdd * r_pulldown / (r_pulldown + r_pullup)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitlineResult {
    pub voltage: f64,
    pub selected_lrs_count: u32,
    pub ideal_bitcount: i32,
    /// Parallel resistance of the 64 selected cells.
    pub r_pulldown: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransferPoint {
    pub bitcount: i32,
    pub mean_v: f64,
    pub std_v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ProgrammingOptions {
    pub lrs_target_lo: f64,
    pub lrs_target_hi: f64,
    pub hrs_threshold: f64,
    pub max_iter: usize,
}

impl Default for ProgrammingOptions {
    fn default() -> Self {
        Self {
            lrs_target_lo: device::DEFAULT_LRS_TARGET_LO,
            lrs_target_hi: device::DEFAULT_LRS_TARGET_HI,
            hrs_threshold: device::DEFAULT_HRS_THRESHOLD,
            max_iter: device::DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub row: usize,
    pub col: usize,
    pub polarity: Polarity,
    pub target: CellState,
    pub round: u32,
    pub report: WriteVerifyReport,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProgrammingReport {
    pub records: Vec<CellRecord>,
}

impl ProgrammingReport {
    pub fn converged_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 1.0;
        }
        let ok = self.records.iter().filter(|r| r.report.converged).count();
        ok as f64 / self.records.len() as f64
    }

    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| !r.report.converged).count()
    }
}

/// Yield statistics of one programmed array.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct YieldStats {
    pub lrs_cells: usize,
    pub hrs_cells: usize,
    pub lrs_mean: f64,
    pub lrs_std: f64,
    pub lrs_in_5k7_6k3: f64,
    pub lrs_below_5k9: f64,
    pub lrs_above_6k1: f64,
    pub hrs_below_1m: f64,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

fn fraction(xs: &[f64], pred: impl Fn(f64) -> bool) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().filter(|&&x| pred(x)).count() as f64 / xs.len() as f64
}

/// One 64×64 XNOR macro: 128×64 1T1R cells plus the programmed weights.
#[derive(Debug, Clone)]
pub struct MacroArray {
    cells: Vec<XnorBitcell>,
    weights: Option<WeightTile>,
    vdd: f64,
    // column-major selected-cell conductances: [col][row] -> (pos, neg)
    conductance: Vec<[f64; 2]>,
}

impl MacroArray {
    pub fn new(vdd: f64) -> Result<Self> {
        check_vdd(vdd)?;
        let mut m = Self {
            cells: vec![XnorBitcell::default(); ROWS * COLS],
            weights: None,
            vdd,
            conductance: vec![[0.0; 2]; ROWS * COLS],
        };
        m.refresh_conductance();
        Ok(m)
    }

    /// An idealised array: every LRS cell at `r_lrs`, every HRS cell at `r_hrs`.
    pub fn with_exact_resistances(weights: &WeightTile, r_lrs: f64, r_hrs: f64, vdd: f64) -> Result<Self> {
        let lrs = DeviceState::new(CellState::Lrs, r_lrs)?;
        let hrs = DeviceState::new(CellState::Hrs, r_hrs)?;
        let mut m = Self::new(vdd)?;
        for r in 0..ROWS {
            for c in 0..COLS {
                let cell = &mut m.cells[r * COLS + c];
                if weights.get(r, c).is_plus() {
                    *cell = XnorBitcell { pos: lrs, neg: hrs };
                } else {
                    *cell = XnorBitcell { pos: hrs, neg: lrs };
                }
            }
        }
        m.weights = Some(weights.clone());
        m.refresh_conductance();
        Ok(m)
    }

    /// Rebuilds an array from cell states (e.g. a snapshot). Weights are
    /// inferred from which cell of each pair holds LRS; the array counts as
    /// programmed only if every pair is complementary.
    pub fn from_cells(cells: Vec<XnorBitcell>, vdd: f64) -> Result<Self> {
        check_vdd(vdd)?;
        if cells.len() != ROWS * COLS {
            return Err(Error::ShapeMismatch("array must hold 64×64 bitcells"));
        }
        let mut complementary = true;
        let weights = WeightTile::from_fn(|r, c| {
            let cell = &cells[r * COLS + c];
            match (cell.pos.state(), cell.neg.state()) {
                (CellState::Lrs, CellState::Hrs) => Sign::Plus,
                (CellState::Hrs, CellState::Lrs) => Sign::Minus,
                _ => {
                    complementary = false;
                    Sign::Plus
                }
            }
        });
        let mut m = Self {
            cells,
            weights: complementary.then_some(weights),
            vdd,
            conductance: vec![[0.0; 2]; ROWS * COLS],
        };
        m.refresh_conductance();
        Ok(m)
    }

    pub fn vdd(&self) -> f64 {
        self.vdd
    }

    pub fn set_vdd(&mut self, vdd: f64) -> Result<()> {
        check_vdd(vdd)?;
        self.vdd = vdd;
        Ok(())
    }

    pub fn weights(&self) -> Option<&WeightTile> {
        self.weights.as_ref()
    }

    pub fn cell(&self, row: usize, col: usize) -> &XnorBitcell {
        &self.cells[row * COLS + col]
    }

    /// Row-major bitcells.
    pub fn cells(&self) -> &[XnorBitcell] {
        &self.cells
    }

    fn refresh_conductance(&mut self) {
        for r in 0..ROWS {
            for c in 0..COLS {
                let cell = &self.cells[r * COLS + c];
                self.conductance[c * ROWS + r] =
                    [1.0 / cell.pos.resistance(), 1.0 / cell.neg.resistance()];
            }
        }
    }

    /// Programs every bitcell with the write-verify loops: LRS on the cell
    /// matching the weight sign, HRS on the other. Cells start by forming if
    /// pristine. Non-convergence is recorded, not raised.
    pub fn program_weights(
        &mut self,
        weights: &WeightTile,
        params: &DeviceModelParams,
        opts: &ProgrammingOptions,
        macro_id: u64,
    ) -> Result<ProgrammingReport> {
        params.validate()?;
        let mut report = ProgrammingReport::default();
        for r in 0..ROWS {
            for c in 0..COLS {
                let plus = weights.get(r, c).is_plus();
                for polarity in [Polarity::Pos, Polarity::Neg] {
                    let lrs = plus == (polarity == Polarity::Pos);
                    let rec = self.program_cell(r, c, polarity, lrs, 0, params, opts, macro_id)?;
                    report.records.push(rec);
                }
            }
        }
        self.weights = Some(weights.clone());
        self.refresh_conductance();
        Ok(report)
    }

    /// A verify-then-program pass over an already programmed array: every
    /// cell is read and only those outside their target (LRS window or HRS
    /// threshold) go through write-verify again.
    pub fn reprogram_pass(
        &mut self,
        round: u32,
        params: &DeviceModelParams,
        opts: &ProgrammingOptions,
        macro_id: u64,
    ) -> Result<ProgrammingReport> {
        let weights = self
            .weights
            .clone()
            .ok_or(Error::UnprogrammedColumn(0))?;
        let mut report = ProgrammingReport::default();
        for r in 0..ROWS {
            for c in 0..COLS {
                let plus = weights.get(r, c).is_plus();
                for polarity in [Polarity::Pos, Polarity::Neg] {
                    let lrs = plus == (polarity == Polarity::Pos);
                    let cell = self.cell_mut(r, c, polarity);
                    let value = read_resistance(cell)?;
                    let ok = if lrs {
                        cell.state() == CellState::Lrs
                            && (opts.lrs_target_lo..=opts.lrs_target_hi).contains(&value)
                    } else {
                        cell.state() == CellState::Hrs && value > opts.hrs_threshold
                    };
                    if !ok {
                        let rec = self.program_cell(r, c, polarity, lrs, round, params, opts, macro_id)?;
                        report.records.push(rec);
                    }
                }
            }
        }
        self.refresh_conductance();
        Ok(report)
    }

    fn cell_mut(&mut self, row: usize, col: usize, polarity: Polarity) -> &mut DeviceState {
        let bc = &mut self.cells[row * COLS + col];
        match polarity {
            Polarity::Pos => &mut bc.pos,
            Polarity::Neg => &mut bc.neg,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn program_cell(
        &mut self,
        row: usize,
        col: usize,
        polarity: Polarity,
        lrs: bool,
        round: u32,
        params: &DeviceModelParams,
        opts: &ProgrammingOptions,
        macro_id: u64,
    ) -> Result<CellRecord> {
        let cell_index = (polarity.physical_row(row) * COLS + col) as u64;
        let mut rng = stream(
            params.seed,
            &[domain::PROGRAM, macro_id, cell_index, u64::from(round)],
        );
        let cell = self.cell_mut(row, col, polarity);
        *cell = device::form(*cell, params, &mut rng);
        let (target, report) = if lrs {
            let rep = device::write_verify_lrs(
                cell,
                opts.lrs_target_lo,
                opts.lrs_target_hi,
                opts.max_iter,
                params,
                &mut rng,
            )?;
            (CellState::Lrs, rep)
        } else {
            let rep = device::write_verify_hrs(cell, opts.hrs_threshold, opts.max_iter, params, &mut rng)?;
            (CellState::Hrs, rep)
        };
        Ok(CellRecord {
            row,
            col,
            polarity,
            target,
            round,
            report,
        })
    }

    /// Resistances of all LRS cells and all HRS cells.
    pub fn populations(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lrs = Vec::with_capacity(ROWS * COLS);
        let mut hrs = Vec::with_capacity(ROWS * COLS);
        for bc in &self.cells {
            for c in [bc.pos, bc.neg] {
                match c.state() {
                    CellState::Lrs => lrs.push(c.resistance()),
                    CellState::Hrs => hrs.push(c.resistance()),
                    CellState::Pristine => {}
                }
            }
        }
        (lrs, hrs)
    }

    pub fn yield_stats(&self) -> YieldStats {
        let (lrs, hrs) = self.populations();
        let (lrs_mean, lrs_std) = mean_std(&lrs);
        YieldStats {
            lrs_cells: lrs.len(),
            hrs_cells: hrs.len(),
            lrs_mean,
            lrs_std,
            lrs_in_5k7_6k3: fraction(&lrs, |r| (5_700.0..=6_300.0).contains(&r)),
            lrs_below_5k9: fraction(&lrs, |r| r < 5_900.0),
            lrs_above_6k1: fraction(&lrs, |r| r > 6_100.0),
            hrs_below_1m: fraction(&hrs, |r| r < 1.0e6),
        }
    }

    /// Static divider evaluation of one column for one input vector.
    pub fn evaluate_bitline(&self, col: usize, input: InputVector, header: &HeaderConfig) -> Result<BitlineResult> {
        if col >= COLS {
            return Err(Error::IndexOutOfRange { index: col, limit: COLS });
        }
        let weights = self.weights.as_ref().ok_or(Error::UnprogrammedColumn(col))?;
        let g = &self.conductance[col * ROWS..(col + 1) * ROWS];
        let bits = input.bits();
        let mut g_total = 0.0;
        for (r, pair) in g.iter().enumerate() {
            g_total += pair[usize::from(bits >> r & 1 == 0)];
        }
        let r_pd = 1.0 / g_total;
        let ideal = ideal_bitcount(input, weights.column(col));
        Ok(BitlineResult {
            voltage: divider_voltage(self.vdd, r_pd, header.pullup()),
            selected_lrs_count: ((ideal + ROWS as i32) / 2) as u32,
            ideal_bitcount: ideal,
            r_pulldown: r_pd,
        })
    }

    /// Mean and spread of the bitline voltage at every achievable bitcount,
    /// over `samples` random inputs per bitcount.
    pub fn transfer_curve<R: Rng + ?Sized>(
        &self,
        col: usize,
        header: &HeaderConfig,
        samples: usize,
        rng: &mut R,
    ) -> Result<Vec<TransferPoint>> {
        let weights = self.weights.as_ref().ok_or(Error::UnprogrammedColumn(col))?;
        let wc = weights.column(col);
        let mut out = Vec::with_capacity(BITCOUNT_LEVELS);
        let mut vs = Vec::with_capacity(samples);
        for b in achievable_bitcounts() {
            vs.clear();
            for _ in 0..samples.max(1) {
                let x = input_with_bitcount(wc, b, rng)?;
                vs.push(self.evaluate_bitline(col, x, header)?.voltage);
            }
            let (mean_v, std_v) = mean_std(&vs);
            out.push(TransferPoint {
                bitcount: b,
                mean_v,
                std_v,
            });
        }
        Ok(out)
    }
}

fn check_vdd(vdd: f64) -> Result<()> {
    if !(VDD_MIN..=VDD_MAX).contains(&vdd) {
        return Err(Error::InvalidDeviceParams("vdd must lie in [0.9, 1.2] V"));
    }
    Ok(())
}

pub const DEFAULT_TRANSFER_SAMPLES: usize = 100;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn header_2k() -> HeaderConfig {
        let mut t = HeaderConfig::nominal_table();
        t[3] = 2_000.0;
        HeaderConfig::new(4, t).unwrap()
    }

    fn exact(weights: &WeightTile) -> MacroArray {
        MacroArray::with_exact_resistances(weights, 6_000.0, 1.0e6, 1.2).unwrap()
    }

    #[test]
    fn ideal_bitcount_extremes() {
        let all_plus = u64::MAX;
        assert_eq!(ideal_bitcount(InputVector::all_plus(), all_plus), 64);
        assert_eq!(ideal_bitcount(InputVector::all_plus(), 0), -64);
        let w = 0x0123_4567_89ab_cdefu64;
        assert_eq!(ideal_bitcount(InputVector::from_bits(w), w), 64);
        assert_eq!(ideal_bitcount(-InputVector::from_bits(w), w), -64);
    }

    #[test]
    fn divider_closed_form() {
        // pull-down resistances from the closed form, not from the array
        let h = header_2k();
        let m = exact(&WeightTile::uniform(Sign::Plus));
        let cases = [(0u32, 15_625.0, 1.063_829_787), (64, 93.75, 0.053_731_343), (32, 186.381_710, 0.102_295_976)];
        for (matches, r_pd, v) in cases {
            let input = InputVector::from_bits(if matches == 64 { u64::MAX } else { (1u64 << matches) - 1 });
            let res = m.evaluate_bitline(0, input, &h).unwrap();
            assert_eq!(res.selected_lrs_count, matches);
            assert_eq!(res.ideal_bitcount, 2 * matches as i32 - 64);
            assert_abs_diff_eq!(res.r_pulldown, r_pd, epsilon = 1e-3);
            assert_abs_diff_eq!(res.voltage, v, epsilon = 1e-6);
        }
    }

    #[test]
    fn unprogrammed_column_errors() {
        let m = MacroArray::new(1.2).unwrap();
        let h = HeaderConfig::default();
        assert_eq!(
            m.evaluate_bitline(3, InputVector::all_plus(), &h),
            Err(Error::UnprogrammedColumn(3))
        );
        assert!(m.evaluate_bitline(64, InputVector::all_plus(), &h).is_err());
    }

    #[test]
    fn programming_follows_truth_table() {
        let p = DeviceModelParams::default();
        let opts = ProgrammingOptions::default();
        let mut m = MacroArray::new(1.2).unwrap();
        m.program_weights(&WeightTile::uniform(Sign::Plus), &p, &opts, 0).unwrap();
        assert!(m.cells().iter().all(|bc| bc.pos.state() == CellState::Lrs && bc.neg.state() == CellState::Hrs));

        let checker = WeightTile::from_fn(|r, c| Sign::from_bool((r + c) % 2 == 0));
        m.program_weights(&checker, &p, &opts, 1).unwrap();
        for r in 0..ROWS {
            for c in 0..COLS {
                let bc = m.cell(r, c);
                let expect_pos_lrs = (r + c) % 2 == 0;
                assert_eq!(bc.pos.state() == CellState::Lrs, expect_pos_lrs);
                assert_eq!(bc.neg.state() == CellState::Lrs, !expect_pos_lrs);
            }
        }
        assert_eq!(m.weights(), Some(&checker));
    }

    #[test]
    fn from_cells_recovers_weights() {
        let w = WeightTile::random(&mut stream(3, &[]));
        let m = exact(&w);
        let back = MacroArray::from_cells(m.cells().to_vec(), 1.2).unwrap();
        assert_eq!(back.weights(), Some(&w));
        let blank = MacroArray::from_cells(vec![XnorBitcell::default(); ROWS * COLS], 1.2).unwrap();
        assert!(blank.weights().is_none());
    }

    #[test]
    fn exact_transfer_curve_has_no_spread() {
        let w = WeightTile::random(&mut stream(4, &[]));
        let m = exact(&w);
        let curve = m.transfer_curve(5, &HeaderConfig::default(), 20, &mut stream(5, &[])).unwrap();
        assert_eq!(curve.len(), 65);
        for p in &curve {
            assert!(p.std_v.abs() < 1e-12, "{p:?}");
        }
        for w in curve.windows(2) {
            assert!(w[1].mean_v < w[0].mean_v);
        }
    }

    #[test]
    fn header_table_validation() {
        assert!(HeaderConfig::new(0, HeaderConfig::nominal_table()).is_err());
        assert!(HeaderConfig::new(9, HeaderConfig::nominal_table()).is_err());
        let mut t = HeaderConfig::nominal_table();
        t[5] = t[4];
        assert!(HeaderConfig::new(4, t).is_err());
    }

    #[test]
    fn fitted_header_maximizes_slope_at_zero() {
        // brute-force scan of table scales: the fitted one must be steepest
        // between bitcounts -2 and +2 at strength 4
        let fitted = HeaderConfig::default();
        let g = |m: f64| m / NOMINAL_LRS + (64.0 - m) / NOMINAL_HRS;
        let slope = |r_pu: f64| {
            divider_voltage(1.2, 1.0 / g(31.0), r_pu) - divider_voltage(1.2, 1.0 / g(33.0), r_pu)
        };
        let best = slope(fitted.pullup());
        for k in 1..200 {
            let scale = 0.05 * k as f64;
            assert!(slope(fitted.pullup() * scale) <= best + 1e-12, "scale {scale}");
        }
        assert_abs_diff_eq!(divider_voltage(1.2, 1.0 / g(32.0), fitted.pullup()), 0.6, epsilon = 1e-12);
    }

    #[test]
    fn input_with_bitcount_hits_target() {
        let mut rng = stream(6, &[]);
        let w: u64 = rng.random();
        for b in achievable_bitcounts() {
            let x = input_with_bitcount(w, b, &mut rng).unwrap();
            assert_eq!(ideal_bitcount(x, w), b);
        }
        assert!(input_with_bitcount(w, 1, &mut rng).is_err());
        assert!(input_with_bitcount(w, 66, &mut rng).is_err());
    }

    #[test]
    fn vdd_range_enforced() {
        assert!(MacroArray::new(0.8).is_err());
        assert!(MacroArray::new(1.3).is_err());
        assert!(MacroArray::new(0.9).is_ok());
    }
}
