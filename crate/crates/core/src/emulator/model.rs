use alloc::string::String;
use alloc::vec::Vec;

use crate::array::WeightTile;
use crate::mapper::{tile_layer, BinaryMatrix, LayerKind, TilingPlan};
use crate::{Error, Result, Sign};

/// Per-channel batch-norm parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub eps: f64,
}

impl BatchNorm {
    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.gamma.len();
        if self.beta.len() != n || self.mean.len() != n || self.var.len() != n {
            return Err(Error::ShapeMismatch("batch-norm vectors differ in length"));
        }
        if self.var.iter().any(|v| !(*v >= 0.0)) || !(self.eps >= 0.0) {
            return Err(Error::InvalidLayer("batch-norm variance and eps must be non-negative"));
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, ch: usize, x: f64) -> f64 {
        self.gamma[ch] * (x - self.mean[ch]) / libm::sqrt(self.var[ch] + self.eps) + self.beta[ch]
    }

    /// Binarized batch-norm output computed directly, with sign(0) = +1.
    pub fn sign_direct(&self, ch: usize, x: f64) -> Sign {
        Sign::from_bool(self.apply(ch, x) >= 0.0)
    }

    pub fn fold(&self) -> Result<Vec<FoldedThreshold>> {
        self.validate()?;
        (0..self.channels())
            .map(|c| {
                batchnorm_fold(self.gamma[c], self.beta[c], self.mean[c], self.var[c], self.eps)
                    .map_err(|_| Error::DegenerateChannel(c))
            })
            .collect()
    }
}

/// `sign(bn(x))` as a single comparison against `threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FoldedThreshold {
    pub threshold: f64,
    /// Negative gamma: +1 when `x ≤ threshold` instead of `x ≥ threshold`.
    pub flipped: bool,
}

impl FoldedThreshold {
    pub const fn at_least(threshold: f64) -> Self {
        Self { threshold, flipped: false }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> Sign {
        Sign::from_bool(if self.flipped { x <= self.threshold } else { x >= self.threshold })
    }
}

/// `t = mean − beta·sqrt(var + eps)/gamma`; the comparison flips for
/// negative gamma.
pub fn batchnorm_fold(gamma: f64, beta: f64, mean: f64, var: f64, eps: f64) -> Result<FoldedThreshold> {
    if gamma == 0.0 {
        return Err(Error::DegenerateChannel(0));
    }
    if !(var >= 0.0) {
        return Err(Error::InvalidLayer("batch-norm variance must be non-negative"));
    }
    Ok(FoldedThreshold {
        threshold: mean - beta * libm::sqrt(var + eps) / gamma,
        flipped: gamma < 0.0,
    })
}

/// What follows the accumulation of a layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Activation {
    /// Per-channel threshold binarization (hidden layers).
    Sign(Vec<FoldedThreshold>),
    /// Real-valued scores (output layer), optionally batch-normalized.
    Scores(Option<BatchNorm>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnnLayer {
    pub name: String,
    pub kind: LayerKind,
    /// One `in × out` matrix per kernel position (a single one for FC).
    pub weights: Vec<BinaryMatrix>,
    pub activation: Activation,
    /// Max-pool window applied after binarization.
    pub pool: Option<usize>,
}

/// Channel/height/width of a layer's input.
pub type Shape = (usize, usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct BnnModel {
    pub input_shape: Shape,
    pub binarize_threshold: f64,
    pub layers: Vec<BnnLayer>,
}

impl BnnModel {
    /// Checks weights, activations and shape chaining; returns the input
    /// shape of every layer.
    pub fn validate(&self) -> Result<Vec<Shape>> {
        if self.layers.is_empty() {
            return Err(Error::InvalidLayer("model has no layers"));
        }
        let mut shape = self.input_shape;
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            layer.kind.validate()?;
            shapes.push(shape);
            let (c, h, w) = shape;
            if layer.weights.len() != layer.kind.kernel_positions() {
                return Err(Error::ShapeMismatch("one weight matrix per kernel position"));
            }
            for m in &layer.weights {
                if m.rows() != layer.kind.in_dim() || m.cols() != layer.kind.out_dim() {
                    return Err(Error::ShapeMismatch("weight matrix does not match layer shape"));
                }
            }
            let out = layer.kind.out_dim();
            match &layer.activation {
                Activation::Sign(t) if t.len() != out => {
                    return Err(Error::ShapeMismatch("one threshold per output channel"));
                }
                Activation::Scores(Some(bn)) => {
                    bn.validate()?;
                    if bn.channels() != out {
                        return Err(Error::ShapeMismatch("one batch-norm channel per output"));
                    }
                }
                Activation::Scores(_) if i + 1 != self.layers.len() => {
                    return Err(Error::InvalidLayer("only the last layer may output scores"));
                }
                Activation::Sign(_) if i + 1 == self.layers.len() => {
                    return Err(Error::InvalidLayer("the last layer must output scores"));
                }
                _ => {}
            }
            shape = match layer.kind {
                LayerKind::Fc { in_dim, out_dim } => {
                    if c * h * w != in_dim {
                        return Err(Error::ShapeMismatch("FC input size does not match previous layer"));
                    }
                    (out_dim, 1, 1)
                }
                LayerKind::Conv { in_channels, out_channels, .. } => {
                    if c != in_channels {
                        return Err(Error::ShapeMismatch("conv input channels do not match previous layer"));
                    }
                    let (oh, ow) = layer.kind.conv_output_size(h, w)?;
                    (out_channels, oh, ow)
                }
            };
            if let Some(p) = layer.pool {
                if p == 0 {
                    return Err(Error::InvalidLayer("pool size must be positive"));
                }
                if matches!(layer.activation, Activation::Scores(_)) {
                    return Err(Error::InvalidLayer("pooling needs binary activations"));
                }
                shape = (shape.0, shape.1.div_ceil(p), shape.2.div_ceil(p));
            }
        }
        Ok(shapes)
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.kind.out_dim())
    }

    pub fn input_len(&self) -> usize {
        let (c, h, w) = self.input_shape;
        c * h * w
    }
}

/// A validated model with its tiling plans and per-tile weights.
#[derive(Debug, Clone)]
pub struct CompiledModel {
    pub model: BnnModel,
    pub input_shapes: Vec<Shape>,
    pub plans: Vec<TilingPlan>,
    /// `tile_weights[layer][tile]`.
    pub tile_weights: Vec<Vec<WeightTile>>,
    macro_offsets: Vec<usize>,
}

impl CompiledModel {
    pub fn new(model: BnnModel) -> Result<Self> {
        let input_shapes = model.validate()?;
        let mut plans = Vec::with_capacity(model.layers.len());
        let mut tile_weights = Vec::with_capacity(model.layers.len());
        let mut macro_offsets = Vec::with_capacity(model.layers.len());
        let mut next = 0;
        for layer in &model.layers {
            let plan = tile_layer(&layer.name, &layer.kind)?;
            let tiles = plan
                .tiles
                .iter()
                .map(|t| t.weight_tile(&layer.weights[t.kpos]))
                .collect();
            macro_offsets.push(next);
            next += plan.tiles.len();
            plans.push(plan);
            tile_weights.push(tiles);
        }
        Ok(Self {
            model,
            input_shapes,
            plans,
            tile_weights,
            macro_offsets,
        })
    }

    pub fn macro_count(&self) -> usize {
        self.plans.iter().map(|p| p.tiles.len()).sum()
    }

    /// Model-wide macro index of `tile` in `layer`.
    pub fn global_macro_id(&self, layer: usize, tile: usize) -> usize {
        self.macro_offsets[layer] + tile
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn identity_normalization_folds_to_zero() {
        let t = batchnorm_fold(1.0, 0.0, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(t, FoldedThreshold::at_least(0.0));
        assert_eq!(t.apply(0.0), Sign::Plus);
        assert_eq!(t.apply(-1.0), Sign::Minus);
    }

    #[test]
    fn worked_fold() {
        let t = batchnorm_fold(2.0, 1.0, 3.0, 4.0, 0.0).unwrap();
        assert_eq!(t.threshold, 2.0);
        let bn = BatchNorm {
            gamma: vec![2.0],
            beta: vec![1.0],
            mean: vec![3.0],
            var: vec![4.0],
            eps: 0.0,
        };
        for x in -20..=20 {
            let x = f64::from(x) * 0.25;
            assert_eq!(t.apply(x), bn.sign_direct(0, x), "x={x}");
        }
        assert_eq!(bn.sign_direct(0, 1.75), Sign::Minus);
        assert_eq!(bn.sign_direct(0, 2.0), Sign::Plus);
    }

    #[test]
    fn negative_gamma_flips() {
        let bn = BatchNorm {
            gamma: vec![-1.0],
            beta: vec![0.5],
            mean: vec![2.0],
            var: vec![1.0],
            eps: 1e-5,
        };
        let t = bn.fold().unwrap()[0];
        assert!(t.flipped);
        for x in -64..=64 {
            assert_eq!(t.apply(f64::from(x)), bn.sign_direct(0, f64::from(x)), "x={x}");
        }
    }

    #[test]
    fn zero_gamma_is_degenerate() {
        let bn = BatchNorm {
            gamma: vec![1.0, 0.0],
            beta: vec![0.0; 2],
            mean: vec![0.0; 2],
            var: vec![1.0; 2],
            eps: 0.0,
        };
        assert_eq!(bn.fold(), Err(Error::DegenerateChannel(1)));
    }

    fn fc(name: &str, i: usize, o: usize, act: Activation) -> BnnLayer {
        BnnLayer {
            name: name.into(),
            kind: LayerKind::Fc { in_dim: i, out_dim: o },
            weights: vec![BinaryMatrix::filled(i, o, Sign::Plus)],
            activation: act,
            pool: None,
        }
    }

    #[test]
    fn shape_chaining_is_checked() {
        let ok = BnnModel {
            input_shape: (1, 28, 28),
            binarize_threshold: 0.5,
            layers: vec![
                fc("a", 784, 100, Activation::Sign(vec![FoldedThreshold::at_least(0.0); 100])),
                fc("b", 100, 10, Activation::Scores(None)),
            ],
        };
        assert_eq!(ok.validate().unwrap(), vec![(1, 28, 28), (100, 1, 1)]);
        let mut bad = ok.clone();
        bad.layers[1] = fc("b", 99, 10, Activation::Scores(None));
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.layers[0].activation = Activation::Sign(vec![]);
        assert!(bad.validate().is_err());
        let mut bad = ok;
        bad.layers.swap(0, 1);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn compiled_macro_ids_are_global() {
        let m = BnnModel {
            input_shape: (1, 28, 28),
            binarize_threshold: 0.5,
            layers: vec![
                fc("a", 784, 512, Activation::Sign(vec![FoldedThreshold::at_least(0.0); 512])),
                fc("b", 512, 512, Activation::Sign(vec![FoldedThreshold::at_least(0.0); 512])),
                fc("c", 512, 10, Activation::Scores(None)),
            ],
        };
        let c = CompiledModel::new(m).unwrap();
        assert_eq!(c.macro_count(), 104 + 64 + 8);
        assert_eq!(c.global_macro_id(1, 0), 104);
        assert_eq!(c.global_macro_id(2, 7), 175);
    }
}
