//! Brute-force reference solver for tiny instances.
//!
//! Strips interact only through the assignment, so the optimum is the best
//! assignment under per-strip minimal heights. Each strip height comes from
//! enumerating x-vectors and binary-searching the exhaustive y-check.

use std::collections::HashMap;

use thiserror::Error;

use crate::bendm::{verify_packing, Packing, Placement};
use crate::instance::Instance;
use crate::normal_positions::subset_sums;
use crate::ycheck::{oracle_ycheck, PlacedItem, Verdict, YCheckError, YCheckInstance};
use crate::Rational;

pub const MAX_ITEMS: usize = 7;
pub const MAX_STRIPS: usize = 3;
/// Full integer-x enumeration is limited further.
pub const MAX_ITEMS_FULL: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("oracle supports at most {max_items} items and {max_strips} strips, got {n} and {m}")]
    TooLarge { n: usize, m: usize, max_items: usize, max_strips: usize },
    #[error(transparent)]
    YCheck(#[from] YCheckError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    pub objective: Rational,
    pub packing: Packing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XDomain {
    /// Subset sums of the other items on the same strip.
    Normal,
    /// Every integer position.
    Full,
}

pub fn solve_exact(inst: &Instance) -> Result<OracleResult, OracleError> {
    solve_with(inst, XDomain::Normal, MAX_ITEMS)
}

/// Same search over every integer x-position; for checking that the
/// normal-position restriction loses nothing.
pub fn solve_exact_full(inst: &Instance) -> Result<OracleResult, OracleError> {
    solve_with(inst, XDomain::Full, MAX_ITEMS_FULL)
}

/// Minimal height and `(j, x, y)` for one item set on one strip.
type StripBest = (usize, Vec<(usize, usize, usize)>);

fn strip_min_height(
    inst: &Instance,
    width: usize,
    items: &[usize],
    domain: XDomain,
) -> Result<StripBest, OracleError> {
    if items.is_empty() {
        return Ok((0, Vec::new()));
    }
    let total: usize = items.iter().map(|&j| inst.items[j].h).sum();
    let domains: Vec<Vec<usize>> = items
        .iter()
        .map(|&j| {
            let cap = width - inst.items[j].w;
            match domain {
                XDomain::Full => (0..=cap).collect(),
                XDomain::Normal => {
                    subset_sums(items.iter().filter(|&&k| k != j).map(|&k| inst.items[k].w), cap)
                }
            }
        })
        .collect();
    // Stacking everything at x = 0 is always feasible.
    let mut best: StripBest = {
        let mut y = 0;
        let pl = items
            .iter()
            .map(|&j| {
                let at = (j, 0, y);
                y += inst.items[j].h;
                at
            })
            .collect();
        (total, pl)
    };
    let mut idx = vec![0usize; items.len()];
    loop {
        let placed: Vec<PlacedItem> = items
            .iter()
            .enumerate()
            .map(|(k, &j)| PlacedItem::new(j, domains[k][idx[k]], inst.items[j].w, inst.items[j].h))
            .collect();
        let mut load = vec![0usize; width];
        for it in &placed {
            for l in &mut load[it.p..it.right()] {
                *l += it.h;
            }
        }
        let lo = *load.iter().max().unwrap_or(&0);
        if lo < best.0 {
            // Smallest feasible height in [lo, best - 1], if any.
            let yc = YCheckInstance::new(width, best.0 - 1, placed)?;
            if let Verdict::Feasible(_) = oracle_ycheck(&yc)? {
                let (mut a, mut b) = (lo, best.0 - 1);
                while a < b {
                    let mid = (a + b) / 2;
                    if oracle_ycheck(&yc.with_height(mid))?.is_feasible() {
                        b = mid;
                    } else {
                        a = mid + 1;
                    }
                }
                let Verdict::Feasible(ys) = oracle_ycheck(&yc.with_height(a))? else {
                    unreachable!("height {a} was shown feasible");
                };
                best = (a, yc.items.iter().map(|it| (it.j, it.p, ys[&it.j])).collect());
            }
        }
        let mut k = 0;
        while k < idx.len() {
            idx[k] += 1;
            if idx[k] < domains[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == idx.len() {
            break;
        }
    }
    Ok(best)
}

fn solve_with(inst: &Instance, domain: XDomain, max_items: usize) -> Result<OracleResult, OracleError> {
    let (n, m) = (inst.n_items(), inst.n_strips());
    if n > max_items || m > MAX_STRIPS {
        return Err(OracleError::TooLarge { n, m, max_items, max_strips: MAX_STRIPS });
    }
    let feasible: Vec<Vec<usize>> = (0..n).map(|j| inst.feasible_strips(j)).collect();
    let mut memo: HashMap<(usize, u32), StripBest> = HashMap::new();
    let mut choice = vec![0usize; n];
    let mut best: Option<(Rational, Vec<usize>)> = None;
    loop {
        let strip_of: Vec<usize> = (0..n).map(|j| feasible[j][choice[j]]).collect();
        let mut heights = vec![0usize; m];
        for (i, h) in heights.iter_mut().enumerate() {
            let mask = (0..n).filter(|&j| strip_of[j] == i).fold(0u32, |acc, j| acc | 1 << j);
            if mask == 0 {
                continue;
            }
            if !memo.contains_key(&(i, mask)) {
                let items: Vec<usize> = (0..n).filter(|&j| mask >> j & 1 == 1).collect();
                let r = strip_min_height(inst, inst.strips[i].width, &items, domain)?;
                memo.insert((i, mask), r);
            }
            *h = memo[&(i, mask)].0;
        }
        let obj = inst.objective(&heights);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, strip_of));
        }
        // Lexicographic odometer, item 0 slowest.
        let mut k = n;
        let done = loop {
            if k == 0 {
                break true;
            }
            k -= 1;
            choice[k] += 1;
            if choice[k] < feasible[k].len() {
                break false;
            }
            choice[k] = 0;
        };
        if done {
            break;
        }
    }
    let (objective, strip_of) = best.expect("at least one assignment");
    let mut placements = vec![Placement { strip: 0, x: 0, y: 0 }; n];
    for i in 0..m {
        let mask = (0..n).filter(|&j| strip_of[j] == i).fold(0u32, |acc, j| acc | 1 << j);
        if let Some((_, pl)) = memo.get(&(i, mask)) {
            for &(j, x, y) in pl {
                placements[j] = Placement { strip: i, x, y };
            }
        }
    }
    let packing = Packing::new(inst, placements);
    debug_assert_eq!(verify_packing(inst, &packing), Ok(objective));
    Ok(OracleResult { objective, packing })
}
