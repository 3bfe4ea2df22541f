//! Benders cuts for a strip whose y-check failed: the standard no-good, the
//! combinatorial cut over a minimal infeasible subset, and its lifted form.

use std::collections::BTreeSet;
use std::fmt;

use num_traits::One;
use thiserror::Error;

use crate::formulations::MasterVarMap;
use crate::mip::{solve_lp, Constraint, LinearModel, LpStatus, Sense};
use crate::normal_positions::NormalPositionTable;
use crate::ycheck::{oracle_ycheck, shares_column, ycheck, PlacedItem, PruneConfig, YCheckError, YCheckInstance, ORACLE_MAX_ITEMS};
use crate::Rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CutStage {
    Standard,
    Combinatorial,
    Lifted,
}

impl CutStage {
    pub fn tag(&self) -> &'static str {
        match self {
            CutStage::Standard => "standard",
            CutStage::Combinatorial => "combinatorial",
            CutStage::Lifted => "lifted",
        }
    }
}

impl fmt::Display for CutStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CutTerms {
    /// `(j, p)`: item `j` at exactly `p`.
    Points(Vec<(usize, usize)>),
    /// `(j, l, r)`: item `j` anywhere in `[l, r]`.
    Intervals(Vec<(usize, usize, usize)>),
}

impl CutTerms {
    pub fn len(&self) -> usize {
        match self {
            CutTerms::Points(t) => t.len(),
            CutTerms::Intervals(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inclusive ranges per item.
    pub fn ranges(&self) -> Vec<(usize, usize, usize)> {
        match self {
            CutTerms::Points(t) => t.iter().map(|&(j, p)| (j, p, p)).collect(),
            CutTerms::Intervals(t) => t.clone(),
        }
    }
}

/// `threshold * sum(term vars) - H_strip <= threshold * (|terms| - 1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BendersCut {
    pub strip: usize,
    pub threshold: usize,
    pub terms: CutTerms,
    pub stage: CutStage,
}

impl BendersCut {
    /// Master variables with their `(j, p)` keys.
    pub fn support(&self, table: &NormalPositionTable) -> BTreeSet<(usize, usize)> {
        let mut out = BTreeSet::new();
        for (j, l, r) in self.terms.ranges() {
            for &p in table.positions_in(self.strip, j, l, r) {
                out.insert((j, p));
            }
        }
        out
    }

    pub fn to_constraint(&self, name: impl Into<String>, table: &NormalPositionTable, map: &MasterVarMap) -> Constraint {
        let t = Rational::from_integer(self.threshold as i64);
        let mut terms: Vec<_> = self
            .support(table)
            .into_iter()
            .map(|(j, p)| (map.x_var(table, self.strip, j, p).expect("normal position"), t))
            .collect();
        terms.push((map.height[self.strip], -Rational::one()));
        let rhs = t * Rational::from_integer(self.terms.len() as i64 - 1);
        Constraint::new(name, terms, Sense::Le, rhs)
    }

    /// `strip,stage,threshold,|C|,items,positions_or_intervals`.
    pub fn log_line(&self) -> String {
        let ranges = self.terms.ranges();
        let items: Vec<String> = ranges.iter().map(|t| t.0.to_string()).collect();
        let spans: Vec<String> = match &self.terms {
            CutTerms::Points(t) => t.iter().map(|(_, p)| p.to_string()).collect(),
            CutTerms::Intervals(t) => t.iter().map(|(_, l, r)| format!("{l}-{r}")).collect(),
        };
        format!(
            "{},{},{},{},{},{}",
            self.strip,
            self.stage,
            self.threshold,
            ranges.len(),
            items.join(";"),
            spans.join(";")
        )
    }
}

pub const CUT_LOG_HEADER: &str = "strip,stage,threshold,n_items,items,positions_or_intervals";

/// No-good on the full strip content. `height` is the failed target.
pub fn standard_cut(strip: usize, items: &[PlacedItem], height: usize) -> BendersCut {
    BendersCut {
        strip,
        threshold: height + 1,
        terms: CutTerms::Points(items.iter().map(|it| (it.j, it.p)).collect()),
        stage: CutStage::Standard,
    }
}

pub fn combinatorial_cut(strip: usize, core: &[PlacedItem], height: usize) -> BendersCut {
    BendersCut { stage: CutStage::Combinatorial, ..standard_cut(strip, core, height) }
}

/// Greedy single-removal reduction of an infeasible item set. Removal is
/// tried by increasing area, then id. Returns the kept items in input order.
pub fn minimal_infeasible_subset(yc: &YCheckInstance, cfg: &PruneConfig) -> Result<Vec<PlacedItem>, YCheckError> {
    let mut order: Vec<&PlacedItem> = yc.items.iter().collect();
    order.sort_by_key(|it| (it.w * it.h, it.j));
    let mut keep: Vec<usize> = yc.items.iter().map(|it| it.j).collect();
    for it in order {
        let trial: Vec<usize> = keep.iter().copied().filter(|&j| j != it.j).collect();
        if !ycheck(&yc.restricted(&trial), cfg)?.verdict.is_feasible() {
            keep = trial;
        }
    }
    Ok(yc.restricted(&keep).items)
}

/// Column-sharing partners, by index into the item slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictGraph {
    pub adjacent: Vec<Vec<usize>>,
}

impl ConflictGraph {
    pub fn is_empty(&self) -> bool {
        self.adjacent.iter().all(Vec::is_empty)
    }

    pub fn edges(&self) -> usize {
        self.adjacent.iter().map(Vec::len).sum::<usize>() / 2
    }
}

pub fn build_conflicts(items: &[PlacedItem]) -> ConflictGraph {
    let adjacent = items
        .iter()
        .enumerate()
        .map(|(a, ia)| (0..items.len()).filter(|&b| b != a && shares_column(ia, &items[b])).collect())
        .collect();
    ConflictGraph { adjacent }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftIntervals {
    /// `(j, l, r)` per item, inclusive, in input order.
    pub intervals: Vec<(usize, usize, usize)>,
    /// `sum (r - l)` at the LP optimum before rounding.
    pub lp_objective: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LiftError {
    #[error("no two items share a column")]
    NoConflicts,
    #[error("lifting LP ended with status {0:?}")]
    Lp(LpStatus),
}

/// Widest intervals around the current positions that keep every original
/// column-sharing pair sharing a column. Ties between LP optima go to the
/// smallest left ends.
pub fn lift_intervals(items: &[PlacedItem], strip_width: usize) -> Result<LiftIntervals, LiftError> {
    let graph = build_conflicts(items);
    if graph.is_empty() {
        return Err(LiftError::NoConflicts);
    }
    let n = items.len();
    let int = |v: usize| Rational::from_integer(v as i64);
    let one = Rational::one();
    // Primary optimum is integral, so a left-end penalty below 1 in total
    // only breaks ties.
    let eps = Rational::new(1, (n * strip_width + 1) as i64);
    let mut model = LinearModel::new("lift");
    let mut vars = Vec::with_capacity(n);
    for (a, it) in items.iter().enumerate() {
        let max_pos = strip_width - it.w;
        let (lo_l, hi_r) = if graph.adjacent[a].is_empty() { (it.p, it.p) } else { (0, max_pos) };
        let l = model.add_var(format!("l_{}", it.j), int(lo_l), Some(int(it.p)), false, one + eps).expect("unique");
        let r = model.add_var(format!("r_{}", it.j), int(it.p), Some(int(hi_r)), false, -one).expect("unique");
        vars.push((l, r));
    }
    for (a, it) in items.iter().enumerate() {
        for &b in &graph.adjacent[a] {
            // l_a + w_a >= r_b + 1
            let row = Constraint::new(
                format!("keep_{}_{}", it.j, items[b].j),
                vec![(vars[a].0, one), (vars[b].1, -one)],
                Sense::Ge,
                Rational::one() - int(it.w),
            );
            model.add_constraint(row).expect("unique");
        }
    }
    let res = solve_lp(&model);
    if res.status != LpStatus::Optimal {
        return Err(LiftError::Lp(res.status));
    }
    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    let mut lp_objective = 0.0;
    for (a, it) in items.iter().enumerate() {
        let (lf, rf) = (res.values[vars[a].0], res.values[vars[a].1]);
        lp_objective += rf - lf;
        let max_pos = strip_width - it.w;
        left.push(((lf - 1e-7).ceil().max(0.0) as usize).min(it.p));
        right.push(((rf + 1e-7).floor().max(0.0) as usize).clamp(it.p, max_pos));
    }
    // Repair: shrink the right end first, raise the left end only if needed.
    let mut changed = true;
    while changed {
        changed = false;
        for a in 0..n {
            for &b in &graph.adjacent[a] {
                if left[a] + items[a].w < right[b] + 1 {
                    right[b] = (left[a] + items[a].w - 1).max(items[b].p);
                    if left[a] + items[a].w < right[b] + 1 {
                        left[a] = right[b] + 1 - items[a].w;
                    }
                    changed = true;
                }
            }
        }
    }
    let intervals = items.iter().enumerate().map(|(a, it)| (it.j, left[a], right[a])).collect();
    Ok(LiftIntervals { intervals, lp_objective })
}

pub fn lifted_cut(strip: usize, lift: &LiftIntervals, height: usize) -> BendersCut {
    BendersCut {
        strip,
        threshold: height + 1,
        terms: CutTerms::Intervals(lift.intervals.clone()),
        stage: CutStage::Lifted,
    }
}

/// Outcome of checking a cut against every placement it constrains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CutCheck {
    Valid,
    /// Items at these positions pack below the threshold.
    Invalid { positions: Vec<(usize, usize)> },
}

/// Checks that the term items cannot pack below the cut threshold at any
/// integer positions inside their terms. `items[j]` is `(w_j, h_j)`. Other items only add height, so
/// this implies the cut holds for every feasible packing.
pub fn validate_cut(cut: &BendersCut, items: &[(usize, usize)], strip_width: usize) -> Result<CutCheck, YCheckError> {
    let ranges = cut.terms.ranges();
    let dims: Vec<(usize, usize)> = ranges
        .iter()
        .map(|&(j, _, _)| items[j])
        .collect();
    if cut.threshold == 0 {
        return Ok(CutCheck::Invalid { positions: Vec::new() });
    }
    let target = cut.threshold - 1;
    let mut pos = vec![0; ranges.len()];
    fn rec(
        k: usize,
        ranges: &[(usize, usize, usize)],
        dims: &[(usize, usize)],
        width: usize,
        target: usize,
        pos: &mut Vec<usize>,
    ) -> Result<Option<Vec<(usize, usize)>>, YCheckError> {
        if k == ranges.len() {
            let placed: Vec<PlacedItem> =
                ranges.iter().zip(dims).zip(pos.iter()).map(|((r, d), &p)| PlacedItem::new(r.0, p, d.0, d.1)).collect();
            let yc = YCheckInstance::new(width, target, placed)?;
            let feasible = if yc.items.len() <= ORACLE_MAX_ITEMS {
                oracle_ycheck(&yc)?.is_feasible()
            } else {
                ycheck(&yc, &PruneConfig::default())?.verdict.is_feasible()
            };
            return Ok(feasible.then(|| ranges.iter().map(|r| r.0).zip(pos.iter().copied()).collect()));
        }
        let (_, l, r) = ranges[k];
        let hi = r.min(width.saturating_sub(dims[k].0));
        for p in l..=hi {
            pos[k] = p;
            if let Some(found) = rec(k + 1, ranges, dims, width, target, pos)? {
                return Ok(Some(found));
            }
        }
        Ok(None)
    }
    Ok(match rec(0, &ranges, &dims, strip_width, target, &mut pos)? {
        Some(positions) => CutCheck::Invalid { positions },
        None => CutCheck::Valid,
    })
}

/// Degenerate intervals collapse to point terms.
pub fn as_points(cut: &BendersCut) -> Option<Vec<(usize, usize)>> {
    let ranges = cut.terms.ranges();
    ranges.iter().all(|r| r.1 == r.2).then(|| ranges.iter().map(|r| (r.0, r.1)).collect())
}
