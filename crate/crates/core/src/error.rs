use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("gate voltage {0} V outside the physical range [{1}, {2}] V")]
    GateVoltageOutOfRange(f64, f64, f64),
    #[error("invalid device parameters: {0}")]
    InvalidDeviceParams(&'static str),
    #[error("cell has not been formed or programmed")]
    UnprogrammedCell,
    #[error("column {0} has not been programmed")]
    UnprogrammedColumn(usize),
    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },
    #[error("bitcount {0} is not achievable on a 64-row column")]
    UnachievableBitcount(i32),
    #[error("reference bitcount {0} has no achievable neighbours on both sides")]
    InvalidReferenceBitcount(i32),
    #[error("invalid calibration parameters: {0}")]
    InvalidCalibration(&'static str),
    #[error("invalid quantizer: {0}")]
    InvalidQuantizer(&'static str),
    #[error("unsupported quantizer precision: {0} bits")]
    UnsupportedPrecision(u32),
    #[error("header strength {0} outside 1..=8")]
    InvalidHeaderStrength(u8),
    #[error("invalid header table: {0}")]
    InvalidHeaderTable(&'static str),
    #[error("ADC configuration has {found} reference sets, scheme requires {expected}")]
    RefSetCount { expected: usize, found: usize },
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("invalid layer: {0}")]
    InvalidLayer(&'static str),
    #[error("missing partial sum for output {output}, tile {tile}")]
    MissingTileOutput { output: usize, tile: usize },
    #[error("fixed-point accumulator overflow at output {0}")]
    AccumulatorOverflow(usize),
    #[error("batch-norm gamma is zero for channel {0}")]
    DegenerateChannel(usize),
    #[error("inference mode is missing its configuration: {0}")]
    MissingModeConfig(&'static str),
    #[error("invalid bitcount distribution: {0}")]
    InvalidDistribution(&'static str),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid performance parameters: {0}")]
    InvalidPerfParams(&'static str),
}
