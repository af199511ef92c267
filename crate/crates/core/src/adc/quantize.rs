use alloc::vec::Vec;

use crate::{Error, Result};

pub const CONFINED_EDGES: [i32; 7] = [-13, -9, -5, -1, 3, 7, 11];
pub const CONFINED_DEQUANT: [i32; 8] = [-15, -11, -7, -3, 1, 5, 9, 13];

/// Bitcount thresholds and the value each level dequantizes to.
///
/// Level `ℓ` is the number of edges strictly below the bitcount, so bins are
/// `(-∞, e₀], (e₀, e₁], …, (e₆, +∞)`.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct QuantizerSpec {
    edges: Vec<i32>,
    dequant: Vec<i32>,
}

impl Default for QuantizerSpec {
    fn default() -> Self {
        Self::confined()
    }
}

impl QuantizerSpec {
    pub fn new(edges: Vec<i32>, dequant: Vec<i32>) -> Result<Self> {
        if edges.is_empty() || dequant.len() != edges.len() + 1 {
            return Err(Error::InvalidQuantizer("need n edges and n+1 dequantization values"));
        }
        if edges.len() + 1 > usize::from(u8::MAX) {
            return Err(Error::InvalidQuantizer("too many levels"));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidQuantizer("edges must be strictly increasing"));
        }
        if dequant.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidQuantizer("dequantization values must be strictly increasing"));
        }
        Ok(Self { edges, dequant })
    }

    /// Confined-range 3-bit quantizer around bitcount 0.
    pub fn confined() -> Self {
        Self {
            edges: CONFINED_EDGES.to_vec(),
            dequant: CONFINED_DEQUANT.to_vec(),
        }
    }

    /// Uniform bins over [-64, 64] with `2^bits` levels, dequantized at
    /// bin centres.
    pub fn full_range(bits: u32) -> Result<Self> {
        if !(3..=5).contains(&bits) {
            return Err(Error::UnsupportedPrecision(bits));
        }
        let levels = 1i32 << bits;
        let step = 128 / levels;
        let edges = (1..levels).map(|k| -64 + k * step).collect();
        let dequant = (0..levels).map(|l| -64 + step / 2 + l * step).collect();
        Ok(Self { edges, dequant })
    }

    pub fn edges(&self) -> &[i32] {
        &self.edges
    }

    pub fn dequant_values(&self) -> &[i32] {
        &self.dequant
    }

    pub fn levels(&self) -> usize {
        self.dequant.len()
    }

    #[inline]
    pub fn quantize(&self, bitcount: i32) -> u8 {
        self.edges.iter().filter(|&&e| bitcount > e).count() as u8
    }

    #[inline]
    pub fn dequantize(&self, level: u8) -> i32 {
        self.dequant[usize::from(level).min(self.dequant.len() - 1)]
    }

    /// Voltage-domain reference bitcounts: the edges themselves.
    pub fn reference_bitcounts(&self) -> Vec<i32> {
        self.edges.clone()
    }
}

pub fn confined_quantize(bitcount: i32, spec: &QuantizerSpec) -> u8 {
    spec.quantize(bitcount)
}

pub fn full_range_quantize(bitcount: i32, bits: u32) -> Result<u8> {
    Ok(QuantizerSpec::full_range(bits)?.quantize(bitcount))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::achievable_bitcounts;
    use alloc::vec;

    #[test]
    fn confined_examples() {
        let q = QuantizerSpec::confined();
        assert_eq!(confined_quantize(-64, &q), 0);
        assert_eq!(confined_quantize(0, &q), 4);
        assert_eq!(q.dequantize(4), 1);
        assert_eq!(confined_quantize(64, &q), 7);
        assert_eq!(q.dequantize(7), 13);
        // bin edges belong to the lower bin
        assert_eq!(confined_quantize(-13, &q), 0);
        assert_eq!(confined_quantize(-12, &q), 1);
    }

    #[test]
    fn dequant_error_law() {
        let q = QuantizerSpec::confined();
        for b in achievable_bitcounts() {
            let d = q.dequantize(q.quantize(b));
            if (-14..=12).contains(&b) {
                assert_eq!((d - b).abs(), 1, "b={b}");
            } else if b < -14 {
                assert_eq!(d, -15);
            } else {
                assert_eq!(d, 13);
            }
        }
    }

    #[test]
    fn full_range_examples() {
        assert_eq!(full_range_quantize(-64, 3).unwrap(), 0);
        let q3 = QuantizerSpec::full_range(3).unwrap();
        assert_eq!(q3.edges(), &[-48, -32, -16, 0, 16, 32, 48]);
        assert_eq!(q3.dequant_values(), &[-56, -40, -24, -8, 8, 24, 40, 56]);
        assert_eq!(full_range_quantize(1, 3).unwrap(), 4);
        assert_eq!(full_range_quantize(0, 3).unwrap(), 3);
        assert_eq!(full_range_quantize(63, 5).unwrap(), 31);
        assert_eq!(QuantizerSpec::full_range(4).unwrap().levels(), 16);
        assert!(full_range_quantize(0, 2).is_err());
        assert!(full_range_quantize(0, 6).is_err());
    }

    #[test]
    fn rejects_malformed_specs() {
        assert!(QuantizerSpec::new(vec![1, 1], vec![0, 1, 2]).is_err());
        assert!(QuantizerSpec::new(vec![1, 2], vec![0, 1]).is_err());
        assert!(QuantizerSpec::new(vec![1, 2], vec![0, 3, 3]).is_err());
        assert!(QuantizerSpec::new(vec![0], vec![-1, 1]).is_ok());
    }

    #[test]
    fn confined_beats_full_range_on_centered_data() {
        // binomial bitcounts of random ±1 inputs: centred, σ = 8
        let mut weight = [0f64; 65];
        let mut c = 1.0f64;
        for (m, w) in weight.iter_mut().enumerate() {
            *w = c;
            c = c * (64 - m) as f64 / (m + 1) as f64;
        }
        let total: f64 = weight.iter().sum();
        let mse = |q: &QuantizerSpec| {
            achievable_bitcounts()
                .zip(weight.iter())
                .map(|(b, w)| {
                    let e = (q.dequantize(q.quantize(b)) - b) as f64;
                    w * e * e
                })
                .sum::<f64>()
                / total
        };
        let confined = mse(&QuantizerSpec::confined());
        let full3 = mse(&QuantizerSpec::full_range(3).unwrap());
        assert!(confined < full3, "confined {confined} vs full-range {full3}");
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn quantize_is_monotone(a in -64i32..=64, b in -64i32..=64) {
            let q = QuantizerSpec::confined();
            if a <= b {
                prop_assert!(q.quantize(a) <= q.quantize(b));
            }
            for bits in 3..=5 {
                let f = QuantizerSpec::full_range(bits).unwrap();
                if a <= b {
                    prop_assert!(f.quantize(a) <= f.quantize(b));
                }
                prop_assert!(usize::from(f.quantize(a)) < f.levels());
            }
        }
    }
}
