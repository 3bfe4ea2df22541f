//! Single-strip y-check: given fixed x-positions and a height limit, find
//! non-overlapping integer y-coordinates or prove none exist.
//!
//! The search fills the lowest skyline niche first. Feasibility depends only
//! on the column-sharing graph and the heights, so the preprocessing steps
//! (lifting, shrinking) are restricted to transformations that keep that
//! graph unchanged.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normal_positions::subset_sums;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedItem {
    pub j: usize,
    pub p: usize,
    pub w: usize,
    pub h: usize,
}

impl PlacedItem {
    pub fn new(j: usize, p: usize, w: usize, h: usize) -> Self {
        Self { j, p, w, h }
    }

    pub fn right(&self) -> usize {
        self.p + self.w
    }
}

/// Two items share a column iff their half-open x-intervals intersect.
pub fn shares_column(a: &PlacedItem, b: &PlacedItem) -> bool {
    a.p < b.right() && b.p < a.right()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct YCheckInstance {
    #[serde(rename = "W")]
    pub width: usize,
    #[serde(rename = "H")]
    pub height: usize,
    pub items: Vec<PlacedItem>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum YCheckError {
    #[error("item {j} has a zero dimension")]
    DegenerateItem { j: usize },
    #[error("item {j} at {p} with width {w} exceeds strip width {width}")]
    OutsideStrip { j: usize, p: usize, w: usize, width: usize },
    #[error("item id {0} appears twice")]
    DuplicateItem(usize),
    #[error("undecided: node limit {0} reached")]
    NodeLimit(u64),
    #[error("oracle supports at most {max} items, got {n}")]
    TooManyItems { n: usize, max: usize },
}

impl YCheckInstance {
    pub fn new(width: usize, height: usize, items: Vec<PlacedItem>) -> Result<Self, YCheckError> {
        let yc = Self { width, height, items };
        yc.validate()?;
        Ok(yc)
    }

    pub fn validate(&self) -> Result<(), YCheckError> {
        let mut seen = std::collections::HashSet::new();
        for it in &self.items {
            if it.w == 0 || it.h == 0 {
                return Err(YCheckError::DegenerateItem { j: it.j });
            }
            if it.right() > self.width {
                return Err(YCheckError::OutsideStrip { j: it.j, p: it.p, w: it.w, width: self.width });
            }
            if !seen.insert(it.j) {
                return Err(YCheckError::DuplicateItem(it.j));
            }
        }
        Ok(())
    }

    /// Same placement restricted to the items whose ids are in `keep`.
    pub fn restricted(&self, keep: &[usize]) -> Self {
        let items = self.items.iter().filter(|it| keep.contains(&it.j)).copied().collect();
        Self { width: self.width, height: self.height, items }
    }

    pub fn with_height(&self, height: usize) -> Self {
        Self { height, ..self.clone() }
    }
}

/// `y` per item id.
pub type Witness = BTreeMap<usize, usize>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Feasible(Witness),
    Infeasible,
}

impl Verdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Verdict::Feasible(_))
    }
}

/// Independent check of a y-assignment against the original placement.
pub fn verify_witness(yc: &YCheckInstance, y: &Witness) -> bool {
    if y.len() != yc.items.len() {
        return false;
    }
    let mut ys = Vec::with_capacity(yc.items.len());
    for it in &yc.items {
        match y.get(&it.j) {
            Some(&v) if v + it.h <= yc.height => ys.push(v),
            _ => return false,
        }
    }
    for a in 0..yc.items.len() {
        for b in a + 1..yc.items.len() {
            let (ia, ib) = (&yc.items[a], &yc.items[b]);
            if shares_column(ia, ib) && ys[a] < ys[b] + ib.h && ys[b] < ys[a] + ia.h {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PruneConfig {
    pub column_load: bool,
    pub area: bool,
    pub free_space: bool,
    pub symmetry: bool,
    pub dominance: bool,
    pub lift: bool,
    pub shrink: bool,
    pub node_limit: Option<u64>,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            column_load: true,
            area: true,
            free_space: true,
            symmetry: true,
            dominance: true,
            lift: true,
            shrink: true,
            node_limit: Some(50_000_000),
        }
    }
}

impl PruneConfig {
    /// No pruning and no preprocessing.
    pub fn none() -> Self {
        Self::from_mask(0).with_preprocessing(false)
    }

    /// Bits 0..5 enable column-load, area, free-space, symmetry, dominance.
    pub fn from_mask(mask: u8) -> Self {
        Self {
            column_load: mask & 1 != 0,
            area: mask & 2 != 0,
            free_space: mask & 4 != 0,
            symmetry: mask & 8 != 0,
            dominance: mask & 16 != 0,
            ..Self::default()
        }
    }

    pub fn with_preprocessing(self, on: bool) -> Self {
        Self { lift: on, shrink: on, ..self }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct YCheckStats {
    pub nodes: u64,
    pub pruned_column_load: u64,
    pub pruned_area: u64,
    pub pruned_free_space: u64,
    pub pruned_symmetry: u64,
    pub pruned_dominance: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct YCheckResult {
    pub verdict: Verdict,
    pub stats: YCheckStats,
}

/// Column-sharing-preserving widening of every item's interval.
///
/// Left edges move to the largest original right edge among items entirely
/// to the left; right edges then move to the smallest lifted left edge among
/// items entirely to the right. Returns half-open `[a, b)` per item in input
/// order.
pub fn width_lift(yc: &YCheckInstance) -> Vec<(usize, usize)> {
    let items = &yc.items;
    let left: Vec<usize> = items
        .iter()
        .map(|j| items.iter().filter(|k| k.right() <= j.p).map(|k| k.right()).max().unwrap_or(0))
        .collect();
    items
        .iter()
        .enumerate()
        .map(|(a, j)| {
            let right = items
                .iter()
                .enumerate()
                .filter(|(_, k)| k.p >= j.right())
                .map(|(b, _)| left[b])
                .min()
                .unwrap_or(yc.width);
            (left[a], right)
        })
        .collect()
}

/// Instance whose items occupy their lifted intervals.
pub fn lifted_instance(yc: &YCheckInstance) -> YCheckInstance {
    let items = yc
        .items
        .iter()
        .zip(width_lift(yc))
        .map(|(it, (a, b))| PlacedItem::new(it.j, a, b - a, it.h))
        .collect();
    YCheckInstance { width: yc.width, height: yc.height, items }
}

/// Drops every column that is no item's left border. `kept[q']` is the
/// original index of new column `q'`.
pub fn shrink_strip(yc: &YCheckInstance) -> (YCheckInstance, Vec<usize>) {
    let mut kept: Vec<usize> = yc.items.iter().map(|it| it.p).collect();
    kept.sort_unstable();
    kept.dedup();
    let rank = |q: usize| kept.partition_point(|&c| c < q);
    let items = yc
        .items
        .iter()
        .map(|it| {
            let a = rank(it.p);
            PlacedItem::new(it.j, a, rank(it.right()) - a, it.h)
        })
        .collect();
    (YCheckInstance { width: kept.len(), height: yc.height, items }, kept)
}

pub fn ycheck(yc: &YCheckInstance, cfg: &PruneConfig) -> Result<YCheckResult, YCheckError> {
    yc.validate()?;
    let mut work = yc.clone();
    if cfg.lift {
        work = lifted_instance(&work);
    }
    if cfg.shrink {
        work = shrink_strip(&work).0;
    }
    let mut search = Search::new(&work, cfg);
    let found = search.run()?;
    let verdict = if found {
        let y: Witness = work.items.iter().zip(&search.y).map(|(it, &v)| (it.j, v)).collect();
        debug_assert!(verify_witness(yc, &y));
        Verdict::Feasible(y)
    } else {
        Verdict::Infeasible
    };
    Ok(YCheckResult { verdict, stats: search.stats })
}

struct Search<'a> {
    cfg: &'a PruneConfig,
    cap: usize,
    a: Vec<usize>,
    b: Vec<usize>,
    h: Vec<usize>,
    w: Vec<usize>,
    /// Branch order: decreasing height, decreasing width, increasing id.
    order: Vec<usize>,
    /// Lowest-id identical twin, if any.
    twin_before: Vec<Option<usize>>,
    skyline: Vec<usize>,
    placed: Vec<bool>,
    y: Vec<usize>,
    remaining: usize,
    stats: YCheckStats,
}

impl<'a> Search<'a> {
    fn new(yc: &YCheckInstance, cfg: &'a PruneConfig) -> Self {
        let n = yc.items.len();
        let a: Vec<usize> = yc.items.iter().map(|it| it.p).collect();
        let b: Vec<usize> = yc.items.iter().map(|it| it.right()).collect();
        let h: Vec<usize> = yc.items.iter().map(|it| it.h).collect();
        let w: Vec<usize> = yc.items.iter().map(|it| it.w).collect();
        let id: Vec<usize> = yc.items.iter().map(|it| it.j).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &z| h[z].cmp(&h[x]).then(w[z].cmp(&w[x])).then(id[x].cmp(&id[z])));
        // Identical height and interval: interchangeable in every packing.
        let twin_before = (0..n)
            .map(|k| {
                (0..n)
                    .filter(|&o| o != k && id[o] < id[k] && a[o] == a[k] && b[o] == b[k] && h[o] == h[k])
                    .max_by_key(|&o| id[o])
            })
            .collect();
        Self {
            cfg,
            cap: yc.height,
            a,
            b,
            h,
            w,
            order,
            twin_before,
            skyline: vec![0; yc.width],
            placed: vec![false; n],
            y: vec![0; n],
            remaining: n,
            stats: YCheckStats::default(),
        }
    }

    fn run(&mut self) -> Result<bool, YCheckError> {
        if self.h.iter().any(|&h| h > self.cap) {
            return Ok(false);
        }
        self.node()
    }

    fn bounds_fail(&mut self) -> bool {
        let cfg = self.cfg;
        if !(cfg.column_load || cfg.area || cfg.free_space) {
            return false;
        }
        let mut demand = vec![0usize; self.skyline.len()];
        let mut area = 0;
        for k in 0..self.h.len() {
            if !self.placed[k] {
                area += self.w[k] * self.h[k];
                for d in &mut demand[self.a[k]..self.b[k]] {
                    *d += self.h[k];
                }
            }
        }
        if cfg.column_load && self.skyline.iter().zip(&demand).any(|(&s, &d)| s + d > self.cap) {
            self.stats.pruned_column_load += 1;
            return true;
        }
        if cfg.area {
            let free: usize = self.skyline.iter().map(|&s| self.cap - s).sum();
            if area > free {
                self.stats.pruned_area += 1;
                return true;
            }
        }
        if cfg.free_space {
            // Free cells in columns no remaining item covers are wasted.
            let usable: usize =
                self.skyline.iter().zip(&demand).filter(|(_, &d)| d > 0).map(|(&s, _)| self.cap - s).sum();
            if area > usable {
                self.stats.pruned_free_space += 1;
                return true;
            }
        }
        false
    }

    fn node(&mut self) -> Result<bool, YCheckError> {
        self.stats.nodes += 1;
        if let Some(limit) = self.cfg.node_limit {
            if self.stats.nodes > limit {
                return Err(YCheckError::NodeLimit(limit));
            }
        }
        if self.remaining == 0 {
            return Ok(true);
        }
        if self.bounds_fail() {
            return Ok(false);
        }

        let width = self.skyline.len();
        let (lo, hi, level) = {
            let level = *self.skyline.iter().min().expect("nonempty strip");
            let lo = self.skyline.iter().position(|&s| s == level).unwrap();
            let hi = (lo..width).find(|&q| self.skyline[q] != level).unwrap_or(width);
            (lo, hi, level)
        };
        let neighbor = |q: Option<usize>| q.map_or(self.cap, |q| self.skyline[q]);
        let raise = neighbor(lo.checked_sub(1)).min(neighbor((hi < width).then_some(hi)));

        let mut candidates = Vec::new();
        for &k in &self.order {
            if self.placed[k] || self.a[k] < lo || self.b[k] > hi || level + self.h[k] > self.cap {
                continue;
            }
            if self.cfg.symmetry && self.twin_before[k].is_some_and(|t| !self.placed[t]) {
                self.stats.pruned_symmetry += 1;
                continue;
            }
            candidates.push(k);
        }

        for &k in &candidates {
            let (a, b) = (self.a[k], self.b[k]);
            self.placed[k] = true;
            self.remaining -= 1;
            self.y[k] = level;
            for s in &mut self.skyline[a..b] {
                *s = level + self.h[k];
            }
            let found = self.node()?;
            for s in &mut self.skyline[a..b] {
                *s = level;
            }
            self.placed[k] = false;
            self.remaining += 1;
            if found {
                return Ok(true);
            }
        }

        // Closing is dominated by placing any candidate that stays below the raise.
        if self.cfg.dominance && candidates.iter().any(|&k| level + self.h[k] <= raise) {
            self.stats.pruned_dominance += 1;
            return Ok(false);
        }
        if raise <= level {
            return Ok(false);
        }
        for s in &mut self.skyline[lo..hi] {
            *s = raise;
        }
        let found = self.node()?;
        for s in &mut self.skyline[lo..hi] {
            *s = level;
        }
        Ok(found)
    }
}

pub const ORACLE_MAX_ITEMS: usize = 8;

/// Exhaustive reference decision over compacted y-positions.
pub fn oracle_ycheck(yc: &YCheckInstance) -> Result<Verdict, YCheckError> {
    yc.validate()?;
    let n = yc.items.len();
    if n > ORACLE_MAX_ITEMS {
        return Err(YCheckError::TooManyItems { n, max: ORACLE_MAX_ITEMS });
    }
    let mut domains = Vec::with_capacity(n);
    for (k, it) in yc.items.iter().enumerate() {
        if it.h > yc.height {
            return Ok(Verdict::Infeasible);
        }
        let others = yc.items.iter().enumerate().filter(|&(o, _)| o != k).map(|(_, o)| o.h);
        domains.push(subset_sums(others, yc.height - it.h));
    }
    let mut y = vec![0; n];
    fn assign(k: usize, yc: &YCheckInstance, domains: &[Vec<usize>], y: &mut [usize]) -> bool {
        if k == yc.items.len() {
            return true;
        }
        let it = &yc.items[k];
        for &v in &domains[k] {
            let clash = (0..k).any(|o| {
                let other = &yc.items[o];
                shares_column(it, other) && v < y[o] + other.h && y[o] < v + it.h
            });
            if !clash {
                y[k] = v;
                if assign(k + 1, yc, domains, y) {
                    return true;
                }
            }
        }
        false
    }
    if assign(0, yc, &domains, &mut y) {
        Ok(Verdict::Feasible(yc.items.iter().zip(y).map(|(it, v)| (it.j, v)).collect()))
    } else {
        Ok(Verdict::Infeasible)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn yc(width: usize, height: usize, items: &[(usize, usize, usize)]) -> YCheckInstance {
        let items = items.iter().enumerate().map(|(j, &(p, w, h))| PlacedItem::new(j, p, w, h)).collect();
        YCheckInstance::new(width, height, items).unwrap()
    }

    fn verdict(yc: &YCheckInstance, cfg: &PruneConfig) -> Verdict {
        let res = ycheck(yc, cfg).unwrap();
        if let Verdict::Feasible(y) = &res.verdict {
            assert!(verify_witness(yc, y), "bad witness {y:?} for {yc:?}");
        }
        res.verdict
    }

    #[test]
    fn stacked_full_width_items() {
        let inst = yc(10, 6, &[(0, 10, 3), (0, 10, 4)]);
        assert_eq!(verdict(&inst, &PruneConfig::default()), Verdict::Infeasible);
        assert!(verdict(&inst.with_height(7), &PruneConfig::default()).is_feasible());
        assert!(verdict(&inst.with_height(7), &PruneConfig::none()).is_feasible());
    }

    #[test]
    fn disjoint_columns() {
        let inst = yc(10, 4, &[(0, 5, 4), (5, 5, 4)]);
        assert!(verdict(&inst, &PruneConfig::default()).is_feasible());
        assert!(verdict(&inst, &PruneConfig::none()).is_feasible());
    }

    #[test]
    fn empty_and_too_tall() {
        let empty = yc(5, 0, &[]);
        assert!(verdict(&empty, &PruneConfig::default()).is_feasible());
        assert!(oracle_ycheck(&empty).unwrap().is_feasible());
        let tall = yc(5, 3, &[(0, 2, 4)]);
        assert_eq!(verdict(&tall, &PruneConfig::default()), Verdict::Infeasible);
        assert_eq!(oracle_ycheck(&tall).unwrap(), Verdict::Infeasible);
    }

    #[test]
    fn interlocking_staircase_needs_gap_below() {
        // Item 2 bridges items 0 and 1; item 3 can only sit under item 1.
        let inst = yc(6, 5, &[(0, 3, 2), (3, 3, 3), (1, 4, 2), (4, 2, 1)]);
        let expect = oracle_ycheck(&inst).unwrap();
        for mask in 0..32 {
            assert_eq!(verdict(&inst, &PruneConfig::from_mask(mask)).is_feasible(), expect.is_feasible());
        }
    }

    #[test]
    fn validation_errors() {
        let bad = YCheckInstance { width: 4, height: 3, items: vec![PlacedItem::new(0, 2, 3, 1)] };
        assert!(matches!(ycheck(&bad, &PruneConfig::default()), Err(YCheckError::OutsideStrip { .. })));
        let dup = YCheckInstance {
            width: 4,
            height: 3,
            items: vec![PlacedItem::new(0, 0, 1, 1), PlacedItem::new(0, 1, 1, 1)],
        };
        assert_eq!(dup.validate(), Err(YCheckError::DuplicateItem(0)));
        let many = yc(20, 9, &[(0, 1, 1); 9]);
        assert!(matches!(oracle_ycheck(&many), Err(YCheckError::TooManyItems { .. })));
    }

    #[test]
    fn node_limit_is_an_error() {
        let inst = yc(4, 10, &[(0, 4, 1); 6]);
        let cfg = PruneConfig { node_limit: Some(2), ..PruneConfig::none() };
        assert_eq!(ycheck(&inst, &cfg).unwrap_err(), YCheckError::NodeLimit(2));
    }

    #[test]
    fn lift_examples() {
        // Lone item widens to the full strip; conflicting neighbours stay inside.
        let alone = yc(10, 9, &[(2, 6, 1), (0, 7, 1), (3, 7, 1)]);
        assert_eq!(width_lift(&alone), vec![(0, 10), (0, 10), (0, 10)]);
        let pair = yc(10, 9, &[(0, 5, 1), (5, 5, 1)]);
        assert_eq!(width_lift(&pair), vec![(0, 5), (5, 10)]);
        // Gap between disjoint items goes to exactly one side.
        let gap = yc(10, 9, &[(0, 3, 1), (5, 3, 1)]);
        assert_eq!(width_lift(&gap), vec![(0, 3), (3, 10)]);
    }

    #[test]
    fn shrink_examples() {
        let single = yc(10, 5, &[(3, 4, 2)]);
        let (s, kept) = shrink_strip(&single);
        assert_eq!(s.items[0], PlacedItem::new(0, 0, 1, 2));
        assert_eq!((s.width, kept), (1, vec![3]));
        let unit = yc(3, 5, &[(0, 1, 2), (1, 1, 2), (2, 1, 1)]);
        assert_eq!(shrink_strip(&unit).0, unit);
    }

    #[test]
    fn monotone_in_height() {
        let inst = yc(6, 0, &[(0, 3, 2), (2, 3, 3), (3, 3, 1), (1, 2, 2)]);
        let feasible: Vec<bool> =
            (0..10).map(|h| verdict(&inst.with_height(h), &PruneConfig::default()).is_feasible()).collect();
        let first = feasible.iter().position(|&f| f).unwrap();
        assert!(feasible[first..].iter().all(|&f| f));
        assert!(feasible[..first].iter().all(|&f| !f));
    }

    fn conflicts(yc: &YCheckInstance) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..yc.items.len() {
            for b in a + 1..yc.items.len() {
                if shares_column(&yc.items[a], &yc.items[b]) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    pub(crate) fn arb_config() -> impl Strategy<Value = YCheckInstance> {
        (1usize..=10, 1usize..=8).prop_flat_map(|(width, n)| {
            let item = (1usize..=width, 1usize..=5).prop_flat_map(move |(w, h)| (0..=width - w, Just(w), Just(h)));
            (Just(width), 0usize..=14, prop::collection::vec(item, n)).prop_map(|(width, height, items)| {
                let items = items.into_iter().enumerate().map(|(j, (p, w, h))| PlacedItem::new(j, p, w, h)).collect();
                YCheckInstance { width, height, items }
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn agrees_with_oracle(inst in arb_config()) {
            let expect = oracle_ycheck(&inst).unwrap();
            if let Verdict::Feasible(y) = &expect {
                prop_assert!(verify_witness(&inst, y));
            }
            prop_assert_eq!(verdict(&inst, &PruneConfig::default()).is_feasible(), expect.is_feasible());
            prop_assert_eq!(verdict(&inst, &PruneConfig::none()).is_feasible(), expect.is_feasible());
        }

        #[test]
        fn preprocessing_keeps_conflicts_and_verdict(inst in arb_config()) {
            let lifted = lifted_instance(&inst);
            prop_assert!(lifted.validate().is_ok());
            for (it, l) in inst.items.iter().zip(&lifted.items) {
                prop_assert!(l.p <= it.p && it.right() <= l.right());
            }
            prop_assert_eq!(conflicts(&lifted), conflicts(&inst));
            let (shrunk, kept) = shrink_strip(&inst);
            prop_assert!(shrunk.validate().is_ok());
            prop_assert_eq!(conflicts(&shrunk), conflicts(&inst));
            prop_assert_eq!(shrunk.width, kept.len());
            let expect = oracle_ycheck(&inst).unwrap().is_feasible();
            prop_assert_eq!(oracle_ycheck(&lifted).unwrap().is_feasible(), expect);
            prop_assert_eq!(oracle_ycheck(&shrunk).unwrap().is_feasible(), expect);
            let lift_only = PruneConfig { shrink: false, ..PruneConfig::none() };
            prop_assert_eq!(verdict(&inst, &lift_only).is_feasible(), expect);
        }

        #[test]
        fn every_toggle_subset_is_exact(inst in arb_config(), mask in 0u8..32) {
            let expect = oracle_ycheck(&inst).unwrap().is_feasible();
            prop_assert_eq!(verdict(&inst, &PruneConfig::from_mask(mask)).is_feasible(), expect);
        }

        #[test]
        fn pruning_never_adds_nodes_to_default_search(inst in arb_config()) {
            let bare = ycheck(&inst, &PruneConfig::from_mask(0)).unwrap().stats.nodes;
            let full = ycheck(&inst, &PruneConfig::from_mask(31)).unwrap().stats.nodes;
            prop_assert!(full <= bare);
        }
    }
}
