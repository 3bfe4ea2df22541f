//! Normal x-positions per (strip, item) and the column coverage sets built on them.

use thiserror::Error;

use crate::instance::Instance;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CoverageError {
    #[error("item {item} does not fit on strip {strip}")]
    Infeasible { strip: usize, item: usize },
    #[error("column {column} outside strip {strip} of width {width}")]
    ColumnOutOfRange { strip: usize, column: usize, width: usize },
}

/// `positions[i][j]` is the sorted set of normal positions of item `j` on
/// strip `i`; empty when the item does not fit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalPositionTable {
    positions: Vec<Vec<Vec<usize>>>,
    strip_widths: Vec<usize>,
    item_widths: Vec<usize>,
}

/// Sorted subset sums of `widths` that do not exceed `cap`.
pub fn subset_sums(widths: impl IntoIterator<Item = usize>, cap: usize) -> Vec<usize> {
    let mut reach = vec![false; cap + 1];
    reach[0] = true;
    for w in widths {
        if w > cap {
            continue;
        }
        for s in (w..=cap).rev() {
            if reach[s - w] {
                reach[s] = true;
            }
        }
    }
    reach
        .iter()
        .enumerate()
        .filter_map(|(s, &ok)| ok.then_some(s))
        .collect()
}

impl NormalPositionTable {
    pub fn build(inst: &Instance) -> Self {
        let n = inst.n_items();
        let strip_widths: Vec<usize> = inst.strips.iter().map(|s| s.width).collect();
        let item_widths: Vec<usize> = inst.items.iter().map(|it| it.w).collect();
        let mut positions = vec![vec![Vec::new(); n]; strip_widths.len()];
        let max_w = inst.max_strip_width();
        for j in 0..n {
            let wj = item_widths[j];
            // One DP per item at the widest strip; narrower strips take a prefix.
            let sums = subset_sums(
                item_widths.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, &w)| w),
                max_w - wj,
            );
            for (i, &wi) in strip_widths.iter().enumerate() {
                if wj <= wi {
                    let cap = wi - wj;
                    positions[i][j] = sums.iter().copied().take_while(|&p| p <= cap).collect();
                }
            }
        }
        Self { positions, strip_widths, item_widths }
    }

    pub fn n_strips(&self) -> usize {
        self.strip_widths.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_widths.len()
    }

    pub fn strip_width(&self, i: usize) -> usize {
        self.strip_widths[i]
    }

    pub fn item_width(&self, j: usize) -> usize {
        self.item_widths[j]
    }

    pub fn positions(&self, i: usize, j: usize) -> &[usize] {
        &self.positions[i][j]
    }

    /// Index of `p` within `positions(i, j)`.
    pub fn position_index(&self, i: usize, j: usize, p: usize) -> Option<usize> {
        self.positions[i][j].binary_search(&p).ok()
    }

    /// Normal positions at which item `j` covers column `q` of strip `i`.
    pub fn coverage(&self, i: usize, j: usize, q: usize) -> Result<&[usize], CoverageError> {
        let width = self.strip_widths[i];
        if q >= width {
            return Err(CoverageError::ColumnOutOfRange { strip: i, column: q, width });
        }
        let wj = self.item_widths[j];
        if wj > width {
            return Err(CoverageError::Infeasible { strip: i, item: j });
        }
        Ok(self.coverage_range(i, j, q))
    }

    pub(crate) fn coverage_range(&self, i: usize, j: usize, q: usize) -> &[usize] {
        let ps = &self.positions[i][j];
        let lo = (q + 1).saturating_sub(self.item_widths[j]);
        let start = ps.partition_point(|&p| p < lo);
        let end = ps.partition_point(|&p| p <= q);
        &ps[start..end]
    }

    /// Normal positions of item `j` on strip `i` within `[lo, hi]`.
    pub fn positions_in(&self, i: usize, j: usize, lo: usize, hi: usize) -> &[usize] {
        let ps = &self.positions[i][j];
        let start = ps.partition_point(|&p| p < lo);
        let end = ps.partition_point(|&p| p <= hi);
        &ps[start..end.max(start)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Item, Strip};
    use crate::Rational;
    use num_traits::One;
    use proptest::prelude::*;

    fn inst(widths: &[usize], strips: &[usize]) -> Instance {
        Instance::new(
            "t",
            widths.iter().map(|&w| Item::new(w, 1)).collect(),
            strips.iter().map(|&w| Strip::new(w, Rational::one())).collect(),
        )
        .unwrap()
    }

    /// Enumerates every subset of the other items directly.
    fn brute_positions(widths: &[usize], j: usize, strip_w: usize) -> Vec<usize> {
        let others: Vec<usize> = widths.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, &w)| w).collect();
        let mut out = std::collections::BTreeSet::new();
        for mask in 0u32..(1 << others.len()) {
            let s: usize = others.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &w)| w).sum();
            if s + widths[j] <= strip_w {
                out.insert(s);
            }
        }
        out.into_iter().collect()
    }

    #[test]
    fn two_items() {
        let t = NormalPositionTable::build(&inst(&[3, 4], &[10]));
        assert_eq!(t.positions(0, 0), &[0, 4]);
    }

    #[test]
    fn single_item_only_origin() {
        let t = NormalPositionTable::build(&inst(&[5], &[10]));
        assert_eq!(t.positions(0, 0), &[0]);
    }

    #[test]
    fn repeated_widths() {
        let t = NormalPositionTable::build(&inst(&[2, 2, 3], &[7]));
        assert_eq!(t.positions(0, 2), &[0, 2, 4]);
        assert_eq!(brute_positions(&[2, 2, 3], 2, 7), vec![0, 2, 4]);
    }

    #[test]
    fn infeasible_pairs_are_empty() {
        let t = NormalPositionTable::build(&inst(&[6, 2], &[5, 8]));
        assert!(t.positions(0, 0).is_empty());
        assert_eq!(t.positions(1, 0), &[0, 2]);
        assert!(matches!(t.coverage(0, 0, 1), Err(CoverageError::Infeasible { .. })));
    }

    #[test]
    fn coverage_examples() {
        let t = NormalPositionTable::build(&inst(&[3, 4], &[10]));
        assert_eq!(t.coverage(0, 0, 5).unwrap(), &[4]);
        assert_eq!(t.coverage(0, 0, 9).unwrap(), &[] as &[usize]);
        assert!(matches!(t.coverage(0, 0, 10), Err(CoverageError::ColumnOutOfRange { .. })));

        let t = NormalPositionTable::build(&inst(&[2, 2, 3], &[7]));
        assert_eq!(t.coverage(0, 2, 3).unwrap(), &[2]);
        assert_eq!(t.coverage(0, 2, 4).unwrap(), &[2, 4]);
    }

    proptest! {
        #[test]
        fn matches_brute_force(widths in proptest::collection::vec(1usize..8, 1..10), extra in 0usize..15) {
            let maxw = *widths.iter().max().unwrap();
            let strips = [maxw + extra / 2, maxw + extra];
            let t = NormalPositionTable::build(&inst(&widths, &strips));
            for (i, &sw) in strips.iter().enumerate() {
                for j in 0..widths.len() {
                    prop_assert_eq!(t.positions(i, j).to_vec(), brute_positions(&widths, j, sw));
                }
            }
        }

        #[test]
        fn wider_strips_contain_narrower(widths in proptest::collection::vec(1usize..8, 1..10), a in 0usize..6, b in 0usize..6) {
            let maxw = *widths.iter().max().unwrap();
            let (lo, hi) = (maxw + a.min(b), maxw + a.max(b));
            let t = NormalPositionTable::build(&inst(&widths, &[lo, hi]));
            for j in 0..widths.len() {
                for p in t.positions(0, j) {
                    prop_assert!(t.positions(1, j).contains(p));
                }
            }
        }

        #[test]
        fn each_position_covers_exactly_its_columns(widths in proptest::collection::vec(1usize..6, 1..8), extra in 0usize..8) {
            let maxw = *widths.iter().max().unwrap();
            let sw = maxw + extra;
            let t = NormalPositionTable::build(&inst(&widths, &[sw]));
            for j in 0..widths.len() {
                for &p in t.positions(0, j) {
                    let cols: Vec<usize> = (0..sw).filter(|&q| t.coverage(0, j, q).unwrap().contains(&p)).collect();
                    let expected: Vec<usize> = (p..p + widths[j]).collect();
                    prop_assert_eq!(cols, expected);
                }
            }
        }
    }
}
