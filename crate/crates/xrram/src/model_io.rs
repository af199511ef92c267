//! Model manifest (JSON) and bit-packed weight files.
//!
//! Weight files hold, per kernel position, an `in × out` ±1 matrix in
//! row-major order. Each row is packed LSB-first (column `c` is bit `c % 8`
//! of byte `c / 8`), bit 1 meaning +1, and padded to a whole byte.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xrram_core::emulator::{Activation, BatchNorm, BnnLayer, BnnModel, FoldedThreshold};
use xrram_core::mapper::{BinaryMatrix, LayerKind};
use xrram_core::Sign;

use crate::error::{CliError, Result};
use crate::formats::{read_bytes, read_json, write_bytes, write_json};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocessing {
    pub binarize_threshold: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BnJson {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    pub eps: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum KindJson {
    Fc,
    Conv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActivationJson {
    SignBinarize,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerJson {
    pub name: String,
    pub kind: KindJson,
    /// FC: `[in, out]`; CONV: `[in_channels, out_channels, kernel_h, kernel_w]`.
    pub shape: Vec<usize>,
    /// Relative to the manifest's directory.
    pub weight_file: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bn: Option<BnJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<Vec<f32>>,
    /// Defaults to SIGN_BINARIZE for hidden layers and NONE for the last.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<ActivationJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub preprocessing: Preprocessing,
    /// `[channels, height, width]`; defaults to `[in, 1, 1]` of the first layer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_shape: Option<[usize; 3]>,
    pub layers: Vec<LayerJson>,
}

pub fn row_bytes(cols: usize) -> usize {
    cols.div_ceil(8)
}

pub fn pack_matrix(m: &BinaryMatrix, out: &mut Vec<u8>) {
    let rb = row_bytes(m.cols());
    for r in 0..m.rows() {
        let start = out.len();
        out.resize(start + rb, 0);
        for c in 0..m.cols() {
            if m.get(r, c).is_plus() {
                out[start + c / 8] |= 1 << (c % 8);
            }
        }
    }
}

pub fn unpack_matrix(bytes: &[u8], rows: usize, cols: usize) -> BinaryMatrix {
    let rb = row_bytes(cols);
    BinaryMatrix::from_fn(rows, cols, |r, c| Sign::from_bool(bytes[r * rb + c / 8] >> (c % 8) & 1 == 1))
}

fn layer_kind(l: &LayerJson) -> std::result::Result<LayerKind, String> {
    match (l.kind, l.shape.as_slice()) {
        (KindJson::Fc, &[in_dim, out_dim]) => {
            if l.stride.is_some() || l.padding.is_some() {
                return Err(format!("layer {}: stride/padding apply to CONV only", l.name));
            }
            Ok(LayerKind::Fc { in_dim, out_dim })
        }
        (KindJson::Conv, &[in_channels, out_channels, kernel_h, kernel_w]) => Ok(LayerKind::Conv {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            stride: l.stride.unwrap_or(1),
            padding: l.padding.unwrap_or(0),
        }),
        _ => Err(format!("layer {}: shape {:?} does not fit kind {:?}", l.name, l.shape, l.kind)),
    }
}

fn widen(xs: &[f32]) -> Vec<f64> {
    xs.iter().map(|&x| f64::from(x)).collect()
}

fn batch_norm(bn: &BnJson) -> BatchNorm {
    BatchNorm {
        gamma: widen(&bn.gamma),
        beta: widen(&bn.beta),
        mean: widen(&bn.mean),
        var: widen(&bn.var),
        eps: f64::from(bn.eps),
    }
}

/// Converts a parsed manifest plus the bytes of each layer's weight file.
pub fn model_from_parts(manifest: &Manifest, weights: &[Vec<u8>]) -> std::result::Result<BnnModel, String> {
    if manifest.format_version != FORMAT_VERSION {
        return Err(format!("unsupported format_version {}", manifest.format_version));
    }
    if manifest.layers.is_empty() || weights.len() != manifest.layers.len() {
        return Err("one weight file per layer is required".into());
    }
    let n = manifest.layers.len();
    let mut layers = Vec::with_capacity(n);
    for (i, (l, bytes)) in manifest.layers.iter().zip(weights).enumerate() {
        let kind = layer_kind(l)?;
        let (rows, cols, kpos) = (kind.in_dim(), kind.out_dim(), kind.kernel_positions());
        let per = rows * row_bytes(cols);
        if bytes.len() != per * kpos {
            return Err(format!(
                "layer {}: weight file has {} bytes, expected {}",
                l.name,
                bytes.len(),
                per * kpos
            ));
        }
        let matrices = bytes.chunks_exact(per).map(|b| unpack_matrix(b, rows, cols)).collect();
        let last = i + 1 == n;
        let act = l.activation.unwrap_or(if last { ActivationJson::None } else { ActivationJson::SignBinarize });
        let activation = match (act, &l.bn, &l.threshold) {
            (_, Some(_), Some(_)) => return Err(format!("layer {}: give either bn or threshold", l.name)),
            (ActivationJson::SignBinarize, Some(bn), None) => {
                Activation::Sign(batch_norm(bn).fold().map_err(|e| format!("layer {}: {e}", l.name))?)
            }
            (ActivationJson::SignBinarize, None, Some(t)) => {
                Activation::Sign(t.iter().map(|&t| FoldedThreshold::at_least(f64::from(t))).collect())
            }
            (ActivationJson::SignBinarize, None, None) => {
                Activation::Sign(vec![FoldedThreshold::at_least(0.0); cols])
            }
            (ActivationJson::None, bn, None) => Activation::Scores(bn.as_ref().map(batch_norm)),
            (ActivationJson::None, _, Some(_)) => {
                return Err(format!("layer {}: thresholds need SIGN_BINARIZE", l.name))
            }
        };
        layers.push(BnnLayer {
            name: l.name.clone(),
            kind,
            weights: matrices,
            activation,
            pool: l.pool,
        });
    }
    let input_shape = match manifest.input_shape {
        Some([c, h, w]) => (c, h, w),
        None => (layers[0].kind.in_dim(), 1, 1),
    };
    let model = BnnModel {
        input_shape,
        binarize_threshold: f64::from(manifest.preprocessing.binarize_threshold),
        layers,
    };
    model.validate().map_err(|e| e.to_string())?;
    Ok(model)
}

pub fn read_model(manifest_path: &Path) -> Result<BnnModel> {
    let manifest: Manifest = read_json(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let weights = manifest
        .layers
        .iter()
        .map(|l| read_bytes(&dir.join(&l.weight_file)))
        .collect::<Result<Vec<_>>>()?;
    model_from_parts(&manifest, &weights).map_err(|e| CliError::format(manifest_path, e))
}

/// Writes `manifest` and the weight matrices of each layer next to it.
pub fn write_model(manifest_path: &Path, manifest: &Manifest, weights: &[Vec<BinaryMatrix>]) -> Result<()> {
    if weights.len() != manifest.layers.len() {
        return Err(CliError::Usage("one weight list per layer".into()));
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    for (l, ms) in manifest.layers.iter().zip(weights) {
        let mut bytes = Vec::new();
        for m in ms {
            pack_matrix(m, &mut bytes);
        }
        write_bytes(&dir.join(&l.weight_file), &bytes)?;
    }
    write_json(manifest_path, manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn packing_is_lsb_first_with_row_padding() {
        let m = BinaryMatrix::from_fn(2, 10, |r, c| Sign::from_bool(r == 0 && (c == 0 || c == 9)));
        let mut out = Vec::new();
        pack_matrix(&m, &mut out);
        assert_eq!(out, [0b0000_0001, 0b0000_0010, 0, 0]);
    }

    #[test]
    fn shapes_and_activations_are_checked() {
        let fc = |name: &str, shape: Vec<usize>| LayerJson {
            name: name.into(),
            kind: KindJson::Fc,
            shape,
            weight_file: "w.bin".into(),
            bn: None,
            threshold: None,
            activation: None,
            stride: None,
            padding: None,
            pool: None,
        };
        let manifest = Manifest {
            format_version: 1,
            preprocessing: Preprocessing { binarize_threshold: 0.5 },
            input_shape: None,
            layers: vec![fc("a", vec![16, 8]), fc("b", vec![8, 3])],
        };
        let w = vec![vec![0u8; 16], vec![0u8; 8]];
        let m = model_from_parts(&manifest, &w).unwrap();
        assert!(matches!(m.layers[1].activation, Activation::Scores(None)));
        assert!(model_from_parts(&manifest, &[vec![0u8; 15], vec![0u8; 8]]).is_err());
        let mut bad = manifest.clone();
        bad.layers[0].shape = vec![16, 8, 3];
        assert!(model_from_parts(&bad, &w).is_err());
        let mut bad = manifest;
        bad.format_version = 2;
        assert!(model_from_parts(&bad, &w).is_err());
    }

    proptest! {
        #[test]
        fn pack_unpack_identity(rows in 1usize..20, cols in 1usize..40, seed in any::<u64>()) {
            let mut s = seed;
            let m = BinaryMatrix::from_fn(rows, cols, |_, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                Sign::from_bool(s >> 63 == 1)
            });
            let mut bytes = Vec::new();
            pack_matrix(&m, &mut bytes);
            prop_assert_eq!(bytes.len(), rows * cols.div_ceil(8));
            prop_assert_eq!(unpack_matrix(&bytes, rows, cols), m);
        }
    }
}
