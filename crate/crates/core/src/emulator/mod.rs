//! Binarized-network inference on tiled XNOR macros.
//!
//! Three backends compute per-tile partial sums: exact digital bitcounts
//! (optionally quantized), the full analog divider + flash ADC path on
//! programmed macros, and sampling from a characterized
//! `P(level | bitcount)` histogram. Accumulation, batch-norm thresholds,
//! max-pooling and the final argmax are digital and shared.

mod bank;
mod eval;
mod model;

pub use bank::{program_macro, BankOptions, MacroBank, MacroUnit};
pub use eval::{evaluate, evaluate_run, percentile, Dataset, EvalReport};
pub use model::{
    batchnorm_fold, Activation, BatchNorm, BnnLayer, BnnModel, CompiledModel, FoldedThreshold, Shape,
};

use alloc::vec;
use alloc::vec::Vec;

use crate::adc::{stochastic_quantize, ConditionalHistogram, QuantizerSpec};
use crate::array::{ideal_bitcount, InputVector, COLS};
use crate::mapper::{accumulate, im2col_inputs, FeatureMap, LayerKind, TileOutput};
use crate::rng::{domain, stream};
use crate::{Error, Result, Sign};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum InferenceMode {
    #[cfg_attr(feature = "serde", serde(rename = "IDEAL_DIGITAL"))]
    IdealDigital,
    #[cfg_attr(feature = "serde", serde(rename = "ANALOG_SIM"))]
    AnalogSim,
    #[cfg_attr(feature = "serde", serde(rename = "STOCHASTIC_HISTOGRAM"))]
    StochasticHistogram,
}

impl InferenceMode {
    pub fn name(self) -> &'static str {
        match self {
            InferenceMode::IdealDigital => "IDEAL_DIGITAL",
            InferenceMode::AnalogSim => "ANALOG_SIM",
            InferenceMode::StochasticHistogram => "STOCHASTIC_HISTOGRAM",
        }
    }
}

/// A mode together with the state it needs.
#[derive(Debug, Clone)]
pub enum Backend {
    /// Exact bitcounts, or their quantize→dequantize image.
    Ideal { quantizer: Option<QuantizerSpec> },
    Analog { bank: MacroBank, quantizer: QuantizerSpec },
    Stochastic {
        histogram: ConditionalHistogram,
        quantizer: QuantizerSpec,
    },
}

impl Backend {
    /// Assembles a backend, failing if `mode` lacks its configuration.
    pub fn from_parts(
        mode: InferenceMode,
        quantizer: Option<QuantizerSpec>,
        bank: Option<MacroBank>,
        histogram: Option<ConditionalHistogram>,
    ) -> Result<Self> {
        Ok(match mode {
            InferenceMode::IdealDigital => Backend::Ideal { quantizer },
            InferenceMode::AnalogSim => Backend::Analog {
                bank: bank.ok_or(Error::MissingModeConfig("ANALOG_SIM needs programmed macros"))?,
                quantizer: quantizer.unwrap_or_default(),
            },
            InferenceMode::StochasticHistogram => Backend::Stochastic {
                histogram: histogram.ok_or(Error::MissingModeConfig("STOCHASTIC_HISTOGRAM needs a histogram"))?,
                quantizer: quantizer.unwrap_or_default(),
            },
        })
    }

    pub fn mode(&self) -> InferenceMode {
        match self {
            Backend::Ideal { .. } => InferenceMode::IdealDigital,
            Backend::Analog { .. } => InferenceMode::AnalogSim,
            Backend::Stochastic { .. } => InferenceMode::StochasticHistogram,
        }
    }
}

/// Predicted class and the output-layer scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub class: usize,
    pub scores: Vec<f64>,
}

/// `+1` iff `pixel > threshold`.
pub fn binarize_input(pixels: &[f32], threshold: f64) -> Vec<Sign> {
    pixels.iter().map(|&p| Sign::from_bool(f64::from(p) > threshold)).collect()
}

/// Max-pooling on ±1 values: +1 iff any +1 in the window. Windows running
/// past the edge see −1 there.
pub fn maxpool_binary(map: &FeatureMap, size: usize) -> Result<FeatureMap> {
    if size == 0 {
        return Err(Error::InvalidLayer("pool size must be positive"));
    }
    let (oh, ow) = (map.height.div_ceil(size), map.width.div_ceil(size));
    let mut data = Vec::with_capacity(map.channels * oh * ow);
    for c in 0..map.channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let any = (oy * size..((oy + 1) * size).min(map.height))
                    .flat_map(|y| (ox * size..((ox + 1) * size).min(map.width)).map(move |x| (y, x)))
                    .any(|(y, x)| map.get(c, y, x).is_plus());
                data.push(Sign::from_bool(any));
            }
        }
    }
    FeatureMap::new(map.channels, oh, ow, data)
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

struct TileCtx<'a> {
    backend: &'a Backend,
    seed: u64,
    sample: u64,
    layer: usize,
}

impl TileCtx<'_> {
    /// Dequantized partial sums of the used columns of one tile.
    fn partials(
        &self,
        model: &CompiledModel,
        tile_idx: usize,
        x: InputVector,
        location: u64,
    ) -> Result<[i32; COLS]> {
        let tile = &model.plans[self.layer].tiles[tile_idx];
        let w = &model.tile_weights[self.layer][tile_idx];
        let used = tile.col_hi - tile.col_lo;
        let mut out = [0i32; COLS];
        match self.backend {
            Backend::Ideal { quantizer } => {
                for (c, o) in out.iter_mut().enumerate().take(used) {
                    let b = ideal_bitcount(x, w.column(c));
                    *o = match quantizer {
                        Some(q) => q.dequantize(q.quantize(b)),
                        None => b,
                    };
                }
            }
            Backend::Analog { bank, quantizer } => {
                let unit = &bank.layers[self.layer][tile_idx];
                for (c, o) in out.iter_mut().enumerate().take(used) {
                    let v = unit.array.evaluate_bitline(c, x, &bank.header)?.voltage;
                    *o = quantizer.dequantize(unit.adc.digitize_column(c, v));
                }
            }
            Backend::Stochastic { histogram, quantizer } => {
                let mut rng = stream(
                    self.seed,
                    &[domain::INFER, self.sample, self.layer as u64, tile_idx as u64, location],
                );
                for (c, o) in out.iter_mut().enumerate().take(used) {
                    let b = ideal_bitcount(x, w.column(c));
                    *o = quantizer.dequantize(stochastic_quantize(b, histogram, &mut rng)?);
                }
            }
        }
        Ok(out)
    }
}

/// Runs one sample through the network. `seed` and `sample` key the random
/// streams of the stochastic backend; the others ignore them.
pub fn infer(model: &CompiledModel, backend: &Backend, pixels: &[f32], seed: u64, sample: u64) -> Result<Inference> {
    if pixels.len() != model.model.input_len() {
        return Err(Error::ShapeMismatch("input length does not match the model"));
    }
    if let Backend::Analog { bank, .. } = backend {
        bank.check(model)?;
    }
    let (c0, h0, w0) = model.model.input_shape;
    let mut map = FeatureMap::new(c0, h0, w0, binarize_input(pixels, model.model.binarize_threshold))?;
    let last = model.model.layers.len() - 1;
    for (l, layer) in model.model.layers.iter().enumerate() {
        let ctx = TileCtx {
            backend,
            seed,
            sample,
            layer: l,
        };
        let plan = &model.plans[l];
        // pre-activations, channel-major
        let (sums, oh, ow) = match layer.kind {
            LayerKind::Fc { .. } => {
                let outputs = plan
                    .tiles
                    .iter()
                    .enumerate()
                    .map(|(t, tile)| ctx.partials(model, t, tile.input_vector(&map.data), 0).map(Some))
                    .collect::<Result<Vec<TileOutput>>>()?;
                (accumulate(plan, &outputs, &[])?, 1, 1)
            }
            LayerKind::Conv { out_channels, .. } => {
                let (oh, ow) = layer.kind.conv_output_size(map.height, map.width)?;
                let cols = im2col_inputs(&map, &layer.kind)?;
                let mut sums = vec![0i16; out_channels * oh * ow];
                for (loc, slices) in cols.iter().enumerate() {
                    let skipped: Vec<bool> = slices.iter().map(|s| s.out_of_bounds).collect();
                    let outputs = plan
                        .tiles
                        .iter()
                        .enumerate()
                        .map(|(t, tile)| {
                            if skipped[tile.kpos] {
                                return Ok(None);
                            }
                            let x = tile.input_vector(&slices[tile.kpos].activations);
                            ctx.partials(model, t, x, loc as u64).map(Some)
                        })
                        .collect::<Result<Vec<TileOutput>>>()?;
                    let acc = accumulate(plan, &outputs, &skipped)?;
                    for (ch, v) in acc.into_iter().enumerate() {
                        sums[ch * oh * ow + loc] = v;
                    }
                }
                (sums, oh, ow)
            }
        };
        let channels = layer.kind.out_dim();
        match &layer.activation {
            Activation::Sign(thresholds) => {
                let data = sums
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| thresholds[i / (oh * ow)].apply(f64::from(s)))
                    .collect();
                map = FeatureMap::new(channels, oh, ow, data)?;
                if let Some(p) = layer.pool {
                    map = maxpool_binary(&map, p)?;
                }
            }
            Activation::Scores(bn) => {
                debug_assert_eq!(l, last);
                let scores: Vec<f64> = if oh * ow == 1 {
                    sums.iter()
                        .enumerate()
                        .map(|(i, &s)| match bn {
                            Some(bn) => bn.apply(i, f64::from(s)),
                            None => f64::from(s),
                        })
                        .collect()
                } else {
                    return Err(Error::InvalidLayer("output layer must produce one score per class"));
                };
                return Ok(Inference {
                    class: argmax(&scores),
                    scores,
                });
            }
        }
    }
    unreachable!("validated models end in a score layer")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::HeaderConfig;
    use crate::mapper::BinaryMatrix;
    use rand::Rng;

    #[test]
    fn binarize_conventions() {
        assert!(binarize_input(&[0.0; 4], 0.5).iter().all(|s| !s.is_plus()));
        assert!(binarize_input(&[1.0; 4], 0.5).iter().all(|s| s.is_plus()));
        assert_eq!(binarize_input(&[0.5], 0.5), [Sign::Minus]);
    }

    #[test]
    fn pooling_is_or() {
        use Sign::{Minus as M, Plus as P};
        let m = FeatureMap::new(1, 2, 2, vec![M, M, M, M]).unwrap();
        assert_eq!(maxpool_binary(&m, 2).unwrap().data, [M]);
        let m = FeatureMap::new(1, 2, 2, vec![M, P, M, M]).unwrap();
        assert_eq!(maxpool_binary(&m, 2).unwrap().data, [P]);
        let m = FeatureMap::new(1, 4, 4, vec![P; 16]).unwrap();
        let p = maxpool_binary(&m, 2).unwrap();
        assert_eq!((p.height, p.width), (2, 2));
        assert!(p.data.iter().all(|s| s.is_plus()));
        // 3×3 with size 2: the ragged edge is padded with −1
        let mut d = vec![M; 9];
        d[8] = P;
        let p = maxpool_binary(&FeatureMap::new(1, 3, 3, d).unwrap(), 2).unwrap();
        assert_eq!(p.data, [M, M, M, P]);
    }

    fn single_fc(rng: &mut impl Rng) -> CompiledModel {
        let w = BinaryMatrix::from_fn(64, 1, |_, _| Sign::from_bool(rng.random_bool(0.5)));
        CompiledModel::new(BnnModel {
            input_shape: (64, 1, 1),
            binarize_threshold: 0.5,
            layers: vec![BnnLayer {
                name: "fc".into(),
                kind: LayerKind::Fc { in_dim: 64, out_dim: 1 },
                weights: vec![w],
                activation: Activation::Scores(None),
                pool: None,
            }],
        })
        .unwrap()
    }

    #[test]
    fn ideal_single_tile_equals_popcount() {
        let mut rng = stream(1, &[]);
        let m = single_fc(&mut rng);
        let be = Backend::Ideal { quantizer: None };
        for s in 0..200 {
            let px: Vec<f32> = (0..64).map(|_| rng.random::<f32>()).collect();
            let x = binarize_input(&px, 0.5);
            let w = &m.model.layers[0].weights[0];
            let dense: i32 = (0..64).map(|i| x[i].xnor(w.get(i, 0)).value()).sum();
            let r = infer(&m, &be, &px, 0, s).unwrap();
            assert_eq!(r.scores, [f64::from(dense)]);
        }
    }

    #[test]
    fn point_mass_histogram_matches_confined_ideal() {
        use crate::adc::{ConditionalHistogram, QuantizerSpec};
        use crate::array::achievable_bitcounts;
        let q = QuantizerSpec::confined();
        let hist = ConditionalHistogram::build(achievable_bitcounts().map(|b| (b, q.quantize(b)))).unwrap();
        let mut rng = stream(2, &[]);
        let m = single_fc(&mut rng);
        let ideal = Backend::Ideal { quantizer: Some(q.clone()) };
        let stoch = Backend::Stochastic { histogram: hist, quantizer: q };
        for s in 0..200 {
            let px: Vec<f32> = (0..64).map(|_| rng.random::<f32>()).collect();
            assert_eq!(infer(&m, &ideal, &px, 3, s).unwrap(), infer(&m, &stoch, &px, 3, s).unwrap());
        }
    }

    #[test]
    fn missing_mode_config() {
        assert!(matches!(
            Backend::from_parts(InferenceMode::AnalogSim, None, None, None),
            Err(Error::MissingModeConfig(_))
        ));
        assert!(matches!(
            Backend::from_parts(InferenceMode::StochasticHistogram, None, None, None),
            Err(Error::MissingModeConfig(_))
        ));
        assert!(Backend::from_parts(InferenceMode::IdealDigital, None, None, None).is_ok());
    }

    #[test]
    fn analog_bank_must_match_model() {
        let mut rng = stream(4, &[]);
        let a = single_fc(&mut rng);
        let b = single_fc(&mut rng);
        let h = HeaderConfig::default();
        let bank = MacroBank::ideal(&a, &h, 1.2, &Default::default()).unwrap();
        let be = Backend::Analog { bank, quantizer: QuantizerSpec::confined() };
        assert!(infer(&a, &be, &[0.0; 64], 0, 0).is_ok());
        assert!(infer(&b, &be, &[0.0; 64], 0, 0).is_err());
    }

    #[test]
    fn argmax_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[-1.0]), 0);
    }
}
