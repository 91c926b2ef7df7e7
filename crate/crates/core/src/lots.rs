//! Lot-type universes generated from per-size value sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LotType, SizeSet};

fn default_true() -> bool {
    true
}

/// Compact description of a lot universe: the Cartesian product of the
/// allowed piece counts per size, optionally filtered by total pieces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LotGeneratorSpec {
    pub per_size_values: Vec<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_pieces_bounds: Option<(u64, u64)>,
    #[serde(default = "default_true")]
    pub exclude_zero_lot: bool,
}

impl LotGeneratorSpec {
    /// The same value set for every one of `sizes` sizes.
    pub fn uniform(values: &[u32], sizes: usize) -> Self {
        LotGeneratorSpec {
            per_size_values: vec![values.to_vec(); sizes],
            total_pieces_bounds: None,
            exclude_zero_lot: true,
        }
    }

    /// `{1,2,3}` on five sizes: 3^5 = 243 lot-types, none with an empty size.
    pub fn table1() -> Self {
        Self::uniform(&[1, 2, 3], 5)
    }

    pub fn with_total_bounds(mut self, min_total: u64, max_total: u64) -> Self {
        self.total_pieces_bounds = Some((min_total, max_total));
        self
    }

    fn check(&self, sizes: &SizeSet) -> Result<()> {
        if self.per_size_values.len() != sizes.len() {
            return Err(Error::DimensionMismatch {
                expected: sizes.len(),
                actual: self.per_size_values.len(),
            });
        }
        if let Some(i) = self.per_size_values.iter().position(Vec::is_empty) {
            return Err(Error::Schema(format!("no allowed piece counts for size {i}")));
        }
        if let Some((lo, hi)) = self.total_pieces_bounds {
            if lo > hi {
                return Err(Error::Schema(format!("total pieces bounds [{lo}, {hi}] are inverted")));
            }
            if self.exclude_zero_lot && lo == 0 {
                return Err(Error::Schema(
                    "minimum total must be at least 1 when the zero lot is excluded".into(),
                ));
            }
        }
        Ok(())
    }

    fn admits(&self, total: u64) -> bool {
        if self.exclude_zero_lot && total == 0 {
            return false;
        }
        self.total_pieces_bounds
            .is_none_or(|(lo, hi)| (lo..=hi).contains(&total))
    }
}

/// All lot-types admitted by `spec`, in lexicographic order of their piece
/// vectors.
pub fn enumerate_lots(spec: &LotGeneratorSpec, sizes: &SizeSet) -> Result<Vec<LotType>> {
    spec.check(sizes)?;
    let values: Vec<Vec<u32>> = spec
        .per_size_values
        .iter()
        .map(|v| {
            let mut v = v.clone();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();

    let mut lots = Vec::new();
    let mut digits = vec![0usize; values.len()];
    'outer: loop {
        let lot: Vec<u32> = digits.iter().zip(&values).map(|(&d, v)| v[d]).collect();
        let total: u64 = lot.iter().map(|&p| u64::from(p)).sum();
        if spec.admits(total) {
            lots.push(LotType::new(lot));
        }
        // Odometer: the last size varies fastest, giving lexicographic order.
        for pos in (0..digits.len()).rev() {
            digits[pos] += 1;
            if digits[pos] < values[pos].len() {
                continue 'outer;
            }
            digits[pos] = 0;
        }
        break;
    }

    if lots.is_empty() {
        return Err(Error::EmptyLotUniverse);
    }
    Ok(lots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::lot_pieces;

    fn sizes(n: usize) -> SizeSet {
        SizeSet::new((0..n).map(|i| format!("s{i}")))
    }

    #[test]
    fn table1_has_243_lots() {
        let lots = enumerate_lots(&LotGeneratorSpec::table1(), &sizes(5)).unwrap();
        assert_eq!(lots.len(), 243);
        assert_eq!(lots[0].pieces_per_size(), &[1, 1, 1, 1, 1]);
        assert_eq!(lots[242].pieces_per_size(), &[3, 3, 3, 3, 3]);
        assert!(lots.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn zero_lot_excluded() {
        let lots = enumerate_lots(&LotGeneratorSpec::uniform(&[0, 1], 2), &sizes(2)).unwrap();
        let vecs: Vec<&[u32]> = lots.iter().map(LotType::pieces_per_size).collect();
        assert_eq!(vecs, vec![&[0, 1][..], &[1, 0], &[1, 1]]);
    }

    #[test]
    fn total_bounds_filter() {
        let spec = LotGeneratorSpec::uniform(&[0, 1, 2], 3).with_total_bounds(2, 3);
        let lots = enumerate_lots(&spec, &sizes(3)).unwrap();
        // Brute force over the 27 tuples.
        let mut expected = 0;
        for a in 0..3u64 {
            for b in 0..3 {
                for c in 0..3 {
                    if (2..=3).contains(&(a + b + c)) {
                        expected += 1;
                    }
                }
            }
        }
        assert_eq!(lots.len(), expected);
        assert_eq!(expected, 13);
    }

    #[test]
    fn empty_universe_is_an_error() {
        let spec = LotGeneratorSpec::uniform(&[1], 2).with_total_bounds(5, 9);
        assert!(matches!(enumerate_lots(&spec, &sizes(2)), Err(Error::EmptyLotUniverse)));
        let spec = LotGeneratorSpec::uniform(&[0], 2);
        assert!(matches!(enumerate_lots(&spec, &sizes(2)), Err(Error::EmptyLotUniverse)));
    }

    #[test]
    fn malformed_specs_rejected() {
        assert!(enumerate_lots(&LotGeneratorSpec::uniform(&[1], 3), &sizes(2)).is_err());
        let mut spec = LotGeneratorSpec::uniform(&[1], 2);
        spec.per_size_values[1].clear();
        assert!(enumerate_lots(&spec, &sizes(2)).is_err());
    }

    #[test]
    fn pieces_sum_sizes() {
        assert_eq!(lot_pieces(&LotType::new(vec![2, 2, 2, 2, 2])), 10);
        assert_eq!(lot_pieces(&LotType::new(vec![1, 0, 0])), 1);
        assert_eq!(lot_pieces(&LotType::new(vec![3, 1, 2, 1, 3])), 10);
    }
}
