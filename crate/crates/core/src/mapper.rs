//! Layer-to-macro tiling and digital partial-sum accumulation.
//!
//! A layer's `in × out` binary weight matrix (one per kernel position for a
//! convolution) is cut into 64×64 tiles. When `in` is not a multiple of 64
//! the missing rows are pad rows with activation +1 and weight +1, so each
//! adds exactly +1 to its tile's bitcount; the known total is subtracted
//! after dequantization. Pad rows are spread evenly over the row-tiles so
//! every tile's bitcount stays centred.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::array::{InputVector, WeightTile, COLS, ROWS};
use crate::{Error, Result, Sign};

/// Dense ±1 matrix, row-major, rows = inputs, columns = outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    bits: Vec<u64>,
}

impl BinaryMatrix {
    pub fn filled(rows: usize, cols: usize, sign: Sign) -> Self {
        let words_per_row = cols.div_ceil(64);
        let fill = if sign.is_plus() { u64::MAX } else { 0 };
        Self {
            rows,
            cols,
            words_per_row,
            bits: vec![fill; rows * words_per_row],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Sign) -> Self {
        let mut m = Self::filled(rows, cols, Sign::Minus);
        for r in 0..rows {
            for c in 0..cols {
                m.set(r, c, f(r, c));
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Sign {
        assert!(row < self.rows && col < self.cols, "matrix index out of range");
        let w = self.bits[row * self.words_per_row + col / 64];
        Sign::from_bool(w >> (col % 64) & 1 == 1)
    }

    pub fn set(&mut self, row: usize, col: usize, sign: Sign) {
        assert!(row < self.rows && col < self.cols, "matrix index out of range");
        let w = &mut self.bits[row * self.words_per_row + col / 64];
        let mask = 1u64 << (col % 64);
        if sign.is_plus() {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum LayerKind {
    Fc {
        in_dim: usize,
        out_dim: usize,
    },
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
    },
}

impl LayerKind {
    pub fn in_dim(&self) -> usize {
        match *self {
            LayerKind::Fc { in_dim, .. } => in_dim,
            LayerKind::Conv { in_channels, .. } => in_channels,
        }
    }

    pub fn out_dim(&self) -> usize {
        match *self {
            LayerKind::Fc { out_dim, .. } => out_dim,
            LayerKind::Conv { out_channels, .. } => out_channels,
        }
    }

    pub fn kernel_positions(&self) -> usize {
        match *self {
            LayerKind::Fc { .. } => 1,
            LayerKind::Conv { kernel_h, kernel_w, .. } => kernel_h * kernel_w,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim() == 0 || self.out_dim() == 0 {
            return Err(Error::InvalidLayer("layer dimensions must be positive"));
        }
        if let LayerKind::Conv { kernel_h, kernel_w, stride, .. } = *self {
            if kernel_h == 0 || kernel_w == 0 || stride == 0 {
                return Err(Error::InvalidLayer("kernel size and stride must be positive"));
            }
        }
        Ok(())
    }

    /// Output spatial size for an `h × w` input map.
    pub fn conv_output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        match *self {
            LayerKind::Fc { .. } => Err(Error::InvalidLayer("not a convolution")),
            LayerKind::Conv { kernel_h, kernel_w, stride, padding, .. } => {
                let (hp, wp) = (h + 2 * padding, w + 2 * padding);
                if hp < kernel_h || wp < kernel_w {
                    return Err(Error::ShapeMismatch("kernel larger than padded input"));
                }
                Ok(((hp - kernel_h) / stride + 1, (wp - kernel_w) / stride + 1))
            }
        }
    }
}

/// One 64×64 macro's share of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tile {
    pub macro_id: usize,
    /// Input rows `[row_lo, row_hi)` held by this tile; the rest are pads.
    pub row_lo: usize,
    pub row_hi: usize,
    /// Output columns `[col_lo, col_hi)`; unused columns are ignored.
    pub col_lo: usize,
    pub col_hi: usize,
    pub kpos: usize,
}

impl Tile {
    pub fn real_rows(&self) -> usize {
        self.row_hi - self.row_lo
    }

    pub fn pad_rows(&self) -> usize {
        ROWS - self.real_rows()
    }

    /// Activation vector for this tile from a full `in`-length activation
    /// slice; pad rows are +1.
    pub fn input_vector(&self, activations: &[Sign]) -> InputVector {
        let mut bits = u64::MAX;
        for (i, a) in activations[self.row_lo..self.row_hi].iter().enumerate() {
            if !a.is_plus() {
                bits &= !(1u64 << i);
            }
        }
        InputVector::from_bits(bits)
    }

    /// The tile's weights cut from `matrix`; pad rows and unused columns are +1.
    pub fn weight_tile(&self, matrix: &BinaryMatrix) -> WeightTile {
        WeightTile::from_fn(|r, c| {
            let (row, col) = (self.row_lo + r, self.col_lo + c);
            if row < self.row_hi && col < self.col_hi {
                matrix.get(row, col)
            } else {
                Sign::Plus
            }
        })
    }
}

/// Assignment of a layer to macro tiles.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TilingPlan {
    pub layer: String,
    pub tiles: Vec<Tile>,
    /// Pad rows per kernel position (`padded_in_dim − in_dim`).
    pub pad_rows: usize,
    /// Constant added to every output by the pads of all tiles.
    pub pad_correction: i32,
    pub in_dim: usize,
    pub out_dim: usize,
    pub kernel_positions: usize,
    pub row_tiles: usize,
    pub col_tiles: usize,
}

impl TilingPlan {
    fn build(layer: &str, in_dim: usize, out_dim: usize, kernel_positions: usize) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 || kernel_positions == 0 {
            return Err(Error::InvalidLayer("layer dimensions must be positive"));
        }
        let row_tiles = in_dim.div_ceil(ROWS);
        let col_tiles = out_dim.div_ceil(COLS);
        let pad_rows = row_tiles * ROWS - in_dim;
        let mut tiles = Vec::with_capacity(kernel_positions * row_tiles * col_tiles);
        for kpos in 0..kernel_positions {
            for rt in 0..row_tiles {
                // even split: the first `in_dim % row_tiles` tiles take one extra row
                let (base, extra) = (in_dim / row_tiles, in_dim % row_tiles);
                let row_lo = rt * base + rt.min(extra);
                let row_hi = row_lo + base + usize::from(rt < extra);
                for ct in 0..col_tiles {
                    tiles.push(Tile {
                        macro_id: tiles.len(),
                        row_lo,
                        row_hi,
                        col_lo: ct * COLS,
                        col_hi: ((ct + 1) * COLS).min(out_dim),
                        kpos,
                    });
                }
            }
        }
        let pad_correction = i32::try_from(pad_rows * kernel_positions)
            .map_err(|_| Error::InvalidLayer("layer too large"))?;
        Ok(Self {
            layer: String::from(layer),
            tiles,
            pad_rows,
            pad_correction,
            in_dim,
            out_dim,
            kernel_positions,
            row_tiles,
            col_tiles,
        })
    }

    pub fn padded_in_dim(&self) -> usize {
        self.row_tiles * ROWS
    }

    pub fn tile_index(&self, kpos: usize, row_tile: usize, col_tile: usize) -> usize {
        (kpos * self.row_tiles + row_tile) * self.col_tiles + col_tile
    }

    /// Tiles whose columns cover output `o`, with the column inside each tile.
    pub fn tiles_for_output(&self, o: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (ct, col) = (o / COLS, o % COLS);
        (0..self.kernel_positions)
            .flat_map(move |k| (0..self.row_tiles).map(move |rt| (k, rt)))
            .map(move |(k, rt)| (self.tile_index(k, rt, ct), col))
    }

    pub fn schedule(&self) -> AccumulationSchedule {
        AccumulationSchedule {
            terms: (0..self.out_dim).map(|o| self.tiles_for_output(o).collect()).collect(),
        }
    }
}

pub fn tile_fc(layer: &str, in_dim: usize, out_dim: usize) -> Result<TilingPlan> {
    TilingPlan::build(layer, in_dim, out_dim, 1)
}

pub fn tile_conv(layer: &str, kind: &LayerKind) -> Result<TilingPlan> {
    kind.validate()?;
    match *kind {
        LayerKind::Conv { .. } => {
            TilingPlan::build(layer, kind.in_dim(), kind.out_dim(), kind.kernel_positions())
        }
        LayerKind::Fc { .. } => Err(Error::InvalidLayer("tile_conv needs a convolution")),
    }
}

pub fn tile_layer(layer: &str, kind: &LayerKind) -> Result<TilingPlan> {
    kind.validate()?;
    match *kind {
        LayerKind::Fc { in_dim, out_dim } => tile_fc(layer, in_dim, out_dim),
        LayerKind::Conv { .. } => tile_conv(layer, kind),
    }
}

/// Per output, the fixed order of `(tile, column)` partial sums to add.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccumulationSchedule {
    pub terms: Vec<Vec<(usize, usize)>>,
}

/// Binary feature map in channel-major (CHW) order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<Sign>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<Sign>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::ShapeMismatch("feature map data length"));
        }
        Ok(Self { channels, height, width, data })
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> Sign {
        self.data[(c * self.height + y) * self.width + x]
    }
}

/// Activations routed to one kernel position at one output location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelSlice {
    pub kpos: usize,
    /// The tap falls in the zero-padding border. Its activations are all +1
    /// (the pad convention); the emulator drops such taps entirely so the
    /// border contributes nothing, as zero-padding would.
    pub out_of_bounds: bool,
    pub activations: Vec<Sign>,
}

/// Gathers, for every output location (row-major) and kernel position, the
/// `in_channels` activations feeding that position's weight matrix.
pub fn im2col_inputs(map: &FeatureMap, kind: &LayerKind) -> Result<Vec<Vec<KernelSlice>>> {
    let LayerKind::Conv { in_channels, kernel_h, kernel_w, stride, padding, .. } = *kind else {
        return Err(Error::InvalidLayer("im2col needs a convolution"));
    };
    if map.channels != in_channels {
        return Err(Error::ShapeMismatch("feature map channels differ from layer input"));
    }
    let (oh, ow) = kind.conv_output_size(map.height, map.width)?;
    let mut out = Vec::with_capacity(oh * ow);
    for oy in 0..oh {
        for ox in 0..ow {
            let mut slices = Vec::with_capacity(kernel_h * kernel_w);
            for ky in 0..kernel_h {
                for kx in 0..kernel_w {
                    let y = (oy * stride + ky) as isize - padding as isize;
                    let x = (ox * stride + kx) as isize - padding as isize;
                    let inside = y >= 0 && x >= 0 && (y as usize) < map.height && (x as usize) < map.width;
                    let activations = if inside {
                        (0..in_channels).map(|c| map.get(c, y as usize, x as usize)).collect()
                    } else {
                        vec![Sign::Plus; in_channels]
                    };
                    slices.push(KernelSlice {
                        kpos: ky * kernel_w + kx,
                        out_of_bounds: !inside,
                        activations,
                    });
                }
            }
            out.push(slices);
        }
    }
    Ok(out)
}

/// Dequantized outputs of one tile (64 columns), or `None` when the tile was
/// not evaluated.
pub type TileOutput = Option<[i32; COLS]>;

/// Sums dequantized tile outputs per output in `i16` fixed point and removes
/// the pad contribution of every tile that took part. Tiles of kernel
/// positions flagged in `skipped_kpos` are left out together with their pads.
pub fn accumulate(plan: &TilingPlan, outputs: &[TileOutput], skipped_kpos: &[bool]) -> Result<Vec<i16>> {
    if outputs.len() != plan.tiles.len() {
        return Err(Error::ShapeMismatch("one output slot per tile"));
    }
    let mut sums = Vec::with_capacity(plan.out_dim);
    for o in 0..plan.out_dim {
        let mut acc: i16 = 0;
        for (t, col) in plan.tiles_for_output(o) {
            let tile = &plan.tiles[t];
            if skipped_kpos.get(tile.kpos).copied().unwrap_or(false) {
                continue;
            }
            let vals = outputs[t].as_ref().ok_or(Error::MissingTileOutput { output: o, tile: t })?;
            let term = vals[col] - tile.pad_rows() as i32;
            acc = i16::try_from(term)
                .ok()
                .and_then(|v| acc.checked_add(v))
                .ok_or(Error::AccumulatorOverflow(o))?;
        }
        sums.push(acc);
    }
    Ok(sums)
}
