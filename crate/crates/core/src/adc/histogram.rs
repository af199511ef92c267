use alloc::vec::Vec;

use rand::Rng;

use super::LEVELS;
use crate::array::{bitcount_index, BITCOUNT_LEVELS, MIN_BITCOUNT};
use crate::{Error, Result};

/// Empirical `P(level | bitcount)` for one achievable bitcount.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HistogramRow {
    pub probs: [f64; LEVELS],
    pub count: u64,
}

impl HistogramRow {
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

/// Output-level distribution of a characterized macro, one row per
/// achievable bitcount (`-64, -62, …, 64`).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConditionalHistogram {
    rows: Vec<HistogramRow>,
}

impl ConditionalHistogram {
    /// Builds from observed `(bitcount, level)` pairs.
    pub fn build(observations: impl IntoIterator<Item = (i32, u8)>) -> Result<Self> {
        let mut counts = [[0u64; LEVELS]; BITCOUNT_LEVELS];
        for (b, level) in observations {
            let i = bitcount_index(b)?;
            let l = usize::from(level);
            if l >= LEVELS {
                return Err(Error::IndexOutOfRange { index: l, limit: LEVELS });
            }
            counts[i][l] += 1;
        }
        let rows = counts
            .iter()
            .map(|c| {
                let n: u64 = c.iter().sum();
                let mut probs = [0.0; LEVELS];
                if n > 0 {
                    for (p, &k) in probs.iter_mut().zip(c) {
                        *p = k as f64 / n as f64;
                    }
                }
                HistogramRow { probs, count: n }
            })
            .collect();
        Self::from_rows(rows)
    }

    /// Rows must number 65; non-empty rows must sum to 1 within 1e-6.
    pub fn from_rows(rows: Vec<HistogramRow>) -> Result<Self> {
        if rows.len() != BITCOUNT_LEVELS {
            return Err(Error::ShapeMismatch("histogram needs 65 rows"));
        }
        for row in &rows {
            if row.probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidDistribution("probabilities must lie in [0, 1]"));
            }
            if row.count > 0 {
                let s: f64 = row.probs.iter().sum();
                if (s - 1.0).abs() > 1e-6 {
                    return Err(Error::InvalidDistribution("row probabilities must sum to 1"));
                }
            }
        }
        if rows.iter().all(HistogramRow::is_empty) {
            return Err(Error::EmptyHistogram);
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[HistogramRow] {
        &self.rows
    }

    pub fn row(&self, bitcount: i32) -> Result<&HistogramRow> {
        Ok(&self.rows[bitcount_index(bitcount)?])
    }

    /// The row used to sample `bitcount`: its own if observed, otherwise the
    /// nearest observed one (ties go to the lower bitcount).
    pub fn effective_row(&self, bitcount: i32) -> Result<&HistogramRow> {
        let i = bitcount_index(bitcount)?;
        if !self.rows[i].is_empty() {
            return Ok(&self.rows[i]);
        }
        for d in 1..BITCOUNT_LEVELS {
            if let Some(r) = i.checked_sub(d).map(|j| &self.rows[j]).filter(|r| !r.is_empty()) {
                return Ok(r);
            }
            if let Some(r) = self.rows.get(i + d).filter(|r| !r.is_empty()) {
                return Ok(r);
            }
        }
        Err(Error::EmptyHistogram)
    }

    pub fn bitcount_of_row(index: usize) -> i32 {
        MIN_BITCOUNT + 2 * index as i32
    }
}

/// Draws an output level for `bitcount` from the characterized distribution.
pub fn stochastic_quantize<R: Rng + ?Sized>(
    bitcount: i32,
    hist: &ConditionalHistogram,
    rng: &mut R,
) -> Result<u8> {
    let row = hist.effective_row(bitcount)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (l, &p) in row.probs.iter().enumerate() {
        if p > 0.0 {
            last = l;
            acc += p;
            if u < acc {
                return Ok(l as u8);
            }
        }
    }
    // rounding left u above the cumulative sum
    Ok(last as u8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use alloc::vec;

    #[test]
    fn build_normalizes_and_counts() {
        let h = ConditionalHistogram::build([(0, 4), (0, 4), (0, 5), (2, 4)]).unwrap();
        let r = h.row(0).unwrap();
        assert_eq!(r.count, 3);
        assert!((r.probs[4] - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.probs[5] - 1.0 / 3.0).abs() < 1e-12);
        assert!(h.row(-64).unwrap().is_empty());
        assert!(h.row(1).is_err());
    }

    #[test]
    fn empty_is_rejected() {
        assert_eq!(
            ConditionalHistogram::build(core::iter::empty()),
            Err(Error::EmptyHistogram)
        );
        assert!(ConditionalHistogram::from_rows(vec![HistogramRow::default(); 3]).is_err());
    }

    #[test]
    fn bad_level_is_rejected() {
        assert!(ConditionalHistogram::build([(0, 8)]).is_err());
    }

    #[test]
    fn nearest_row_fallback() {
        let h = ConditionalHistogram::build([(-10, 1), (10, 6)]).unwrap();
        let mut rng = stream(1, &[]);
        assert_eq!(stochastic_quantize(-64, &h, &mut rng).unwrap(), 1);
        assert_eq!(stochastic_quantize(64, &h, &mut rng).unwrap(), 6);
        assert_eq!(stochastic_quantize(2, &h, &mut rng).unwrap(), 6);
        // equidistant: lower wins
        assert_eq!(stochastic_quantize(0, &h, &mut rng).unwrap(), 1);
    }

    #[test]
    fn sampling_frequencies_follow_row() {
        let mut obs = Vec::new();
        obs.extend(core::iter::repeat_n((0, 3), 30));
        obs.extend(core::iter::repeat_n((0, 4), 70));
        let h = ConditionalHistogram::build(obs).unwrap();
        let mut rng = stream(2, &[]);
        let n = 20_000;
        let fours = (0..n)
            .filter(|_| stochastic_quantize(0, &h, &mut rng).unwrap() == 4)
            .count();
        let p = fours as f64 / n as f64;
        // 5σ for binomial(20000, 0.7)
        assert!((p - 0.7).abs() < 5.0 * libm::sqrt(0.7 * 0.3 / n as f64), "p={p}");
    }
}
