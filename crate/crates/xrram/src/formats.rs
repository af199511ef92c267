//! On-disk formats: array snapshots, CSV tables and JSON documents.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use xrram_core::adc::{ConditionalHistogram, HistogramRow, LEVELS};
use xrram_core::array::{MacroArray, TransferPoint, XnorBitcell, COLS, ROWS};
use xrram_core::device::{CellState, DeviceState, PulseKind, PRISTINE_RESISTANCE};
use xrram_core::array::ProgrammingReport;
use xrram_core::mapper::TilingPlan;

use crate::error::{CliError, Result};

pub const SNAPSHOT_BYTES: usize = ROWS * COLS * 2 * 8;

/// Resistances at or below this are read back as LRS. It separates the LRS
/// support (≤ 20 kΩ) from the HRS floor (≥ 100 kΩ).
pub const SNAPSHOT_LRS_CEILING: f64 = 50_000.0;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| CliError::io(path, e))?;
    Ok(buf)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::format(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::format(path, e))
}

/// 64×64×2 little-endian f64 resistances, row-major, positive cell first.
pub fn snapshot_bytes(array: &MacroArray) -> Vec<u8> {
    let mut out = Vec::with_capacity(SNAPSHOT_BYTES);
    for bc in array.cells() {
        out.extend_from_slice(&bc.pos.resistance().to_le_bytes());
        out.extend_from_slice(&bc.neg.resistance().to_le_bytes());
    }
    out
}

fn state_of(r: f64) -> CellState {
    if r == PRISTINE_RESISTANCE {
        CellState::Pristine
    } else if r <= SNAPSHOT_LRS_CEILING {
        CellState::Lrs
    } else {
        CellState::Hrs
    }
}

pub fn array_from_snapshot(bytes: &[u8], vdd: f64) -> std::result::Result<MacroArray, String> {
    if bytes.len() != SNAPSHOT_BYTES {
        return Err(format!("snapshot must be {SNAPSHOT_BYTES} bytes, found {}", bytes.len()));
    }
    let mut cells = Vec::with_capacity(ROWS * COLS);
    for chunk in bytes.chunks_exact(16) {
        let pos = f64::from_le_bytes(chunk[..8].try_into().unwrap());
        let neg = f64::from_le_bytes(chunk[8..].try_into().unwrap());
        let cell = |r: f64| DeviceState::new(state_of(r), r).map_err(|e| e.to_string());
        cells.push(XnorBitcell { pos: cell(pos)?, neg: cell(neg)? });
    }
    MacroArray::from_cells(cells, vdd).map_err(|e| e.to_string())
}

pub fn write_snapshot(path: &Path, array: &MacroArray) -> Result<()> {
    write_bytes(path, &snapshot_bytes(array))
}

pub fn read_snapshot(path: &Path, vdd: f64) -> Result<MacroArray> {
    array_from_snapshot(&read_bytes(path)?, vdd).map_err(|e| CliError::format(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::format(path, e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// Physical 1T1R row: `2·xnor_row` for the positive cell, `+1` for the negative.
    pub cell_row: usize,
    pub cell_col: usize,
    /// 1-based pulse index within the cell's write-verify run.
    pub iteration: usize,
    pub pulse_kind: String,
    pub gate_v: f64,
    pub resistance_ohms: f64,
}

pub fn trace_rows(report: &ProgrammingReport) -> Vec<TraceRow> {
    let mut rows = Vec::new();
    for rec in &report.records {
        for (i, (pulse, r)) in rec.report.trace.iter().enumerate() {
            rows.push(TraceRow {
                cell_row: rec.polarity.physical_row(rec.row),
                cell_col: rec.col,
                iteration: i + 1,
                pulse_kind: match pulse.kind {
                    PulseKind::Set => "SET".into(),
                    PulseKind::Reset => "RESET".into(),
                },
                gate_v: pulse.gate_voltage,
                resistance_ohms: *r,
            });
        }
    }
    rows
}

pub fn write_trace_csv(path: &Path, report: &ProgrammingReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    for row in trace_rows(report) {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub bitcount: i32,
    pub mean_v: f64,
    pub std_v: f64,
    pub strength: u8,
}

pub fn write_transfer_csv(path: &Path, curves: &[(u8, Vec<TransferPoint>)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for (strength, curve) in curves {
        for p in curve {
            w.serialize(TransferRow {
                bitcount: p.bitcount,
                mean_v: p.mean_v,
                std_v: p.std_v,
                strength: *strength,
            })
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_transfer_csv(path: &Path) -> Result<Vec<TransferRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err(path))
}

/// `bitcount,p0,…,p7,count`, one row per achievable bitcount.
pub fn write_histogram_csv(path: &Path, hist: &ConditionalHistogram) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["bitcount".to_string()];
    header.extend((0..LEVELS).map(|l| format!("p{l}")));
    header.push("count".into());
    w.write_record(&header).map_err(csv_err(path))?;
    for (i, row) in hist.rows().iter().enumerate() {
        let mut rec = vec![ConditionalHistogram::bitcount_of_row(i).to_string()];
        rec.extend(row.probs.iter().map(|p| p.to_string()));
        rec.push(row.count.to_string());
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_histogram_csv(path: &Path) -> Result<ConditionalHistogram> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        if rec.len() != LEVELS + 2 {
            return Err(CliError::format(path, format!("row {i}: expected {} fields", LEVELS + 2)));
        }
        let bad = |f: &str| CliError::format(path, format!("row {i}: bad value {f:?}"));
        let b: i32 = rec[0].parse().map_err(|_| bad(&rec[0]))?;
        if b != ConditionalHistogram::bitcount_of_row(i) {
            return Err(CliError::format(path, format!("row {i}: bitcount {b} out of order")));
        }
        let mut probs = [0.0; LEVELS];
        for (l, p) in probs.iter_mut().enumerate() {
            *p = rec[l + 1].parse().map_err(|_| bad(&rec[l + 1]))?;
        }
        let count = rec[LEVELS + 1].parse().map_err(|_| bad(&rec[LEVELS + 1]))?;
        rows.push(HistogramRow { probs, count });
    }
    ConditionalHistogram::from_rows(rows).map_err(|e| CliError::format(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileJson {
    pub macro_id: usize,
    pub row_lo: usize,
    pub row_hi: usize,
    pub col_lo: usize,
    pub col_hi: usize,
    pub kpos: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilingJson {
    pub layer: String,
    pub tiles: Vec<TileJson>,
    pub pad_rows: usize,
    pub pad_correction: i32,
}

impl From<&TilingPlan> for TilingJson {
    fn from(p: &TilingPlan) -> Self {
        Self {
            layer: p.layer.clone(),
            tiles: p
                .tiles
                .iter()
                .map(|t| TileJson {
                    macro_id: t.macro_id,
                    row_lo: t.row_lo,
                    row_hi: t.row_hi,
                    col_lo: t.col_lo,
                    col_hi: t.col_hi,
                    kpos: t.kpos,
                })
                .collect(),
            pad_rows: p.pad_rows,
            pad_correction: p.pad_correction,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use xrram_core::array::{HeaderConfig, ProgrammingOptions, WeightTile};
    use xrram_core::device::DeviceModelParams;
    use xrram_core::rng::stream;

    fn programmed() -> (MacroArray, ProgrammingReport) {
        let w = WeightTile::random(&mut stream(1, &[]));
        let mut a = MacroArray::new(1.2).unwrap();
        let rep = a
            .program_weights(&w, &DeviceModelParams::default(), &ProgrammingOptions::default(), 0)
            .unwrap();
        (a, rep)
    }

    #[test]
    fn snapshot_round_trip_is_byte_identical() {
        let (a, _) = programmed();
        let bytes = snapshot_bytes(&a);
        assert_eq!(bytes.len(), SNAPSHOT_BYTES);
        let b = array_from_snapshot(&bytes, 1.2).unwrap();
        assert_eq!(snapshot_bytes(&b), bytes);
        assert_eq!(b.weights(), a.weights());
        let h = HeaderConfig::default();
        let x = xrram_core::array::InputVector::from_bits(0xdead_beef);
        assert_eq!(a.evaluate_bitline(3, x, &h).unwrap(), b.evaluate_bitline(3, x, &h).unwrap());
    }

    #[test]
    fn snapshot_layout() {
        let (a, _) = programmed();
        let bytes = snapshot_bytes(&a);
        // row 1, column 2, negative cell
        let off = ((COLS + 2) * 2 + 1) * 8;
        let r = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        assert_eq!(r, a.cell(1, 2).neg.resistance());
        assert!(array_from_snapshot(&bytes[1..], 1.2).is_err());
    }

    #[test]
    fn unformed_snapshot_has_no_weights() {
        let a = MacroArray::new(1.2).unwrap();
        let b = array_from_snapshot(&snapshot_bytes(&a), 1.2).unwrap();
        assert!(b.weights().is_none());
        assert_eq!(b.cell(0, 0).pos.state(), CellState::Pristine);
    }

    #[test]
    fn trace_rows_follow_pulses() {
        let (_, rep) = programmed();
        let rows = trace_rows(&rep);
        let pulses: usize = rep.records.iter().map(|r| r.report.trace.len()).sum();
        assert_eq!(rows.len(), pulses);
        assert!(rows.iter().all(|r| r.cell_row < 128 && r.cell_col < 64));
        assert!(rows.iter().any(|r| r.pulse_kind == "SET"));
        assert!(rows.iter().any(|r| r.pulse_kind == "RESET"));
    }
}
