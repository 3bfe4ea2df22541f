//! Solve drivers: the big-M MIP (plain and with the LP-PC bound injected)
//! and the Benders decomposition over the normal-position master.

use std::fmt;
use std::time::{Duration, Instant};

use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cuts::{
    combinatorial_cut, lift_intervals, lifted_cut, minimal_infeasible_subset, standard_cut, BendersCut, CutStage,
};
use crate::formulations::{build_bigm, build_master, inject_lower_bound, lp_pc_bound, BigMVarMap, BoundError, MasterVarMap};
use crate::instance::{format_rational, Instance};
use crate::mip::{solve_mip, Candidate, Constraint, LazyConstraints, LinearModel, MipError, MipOptions, MipStatus};
use crate::normal_positions::NormalPositionTable;
use crate::ycheck::{ycheck, PlacedItem, PruneConfig, Verdict, YCheckError, YCheckInstance};
use crate::Rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    BigM,
    BigMLe,
    BendM,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::BigM, Method::BigMLe, Method::BendM];

    pub fn tag(&self) -> &'static str {
        match self {
            Method::BigM => "BigM",
            Method::BigMLe => "BigM-LE",
            Method::BendM => "BendM",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method {s:?} (expected BigM, BigM-LE or BendM)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub strip: usize,
    pub x: usize,
    pub y: usize,
}

/// Complete packing with heights and objective derived from coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packing {
    pub placements: Vec<Placement>,
    pub heights: Vec<usize>,
    pub objective: Rational,
}

impl Packing {
    pub fn new(inst: &Instance, placements: Vec<Placement>) -> Self {
        let mut heights = vec![0; inst.n_strips()];
        for (j, pl) in placements.iter().enumerate() {
            if let Some(h) = heights.get_mut(pl.strip) {
                *h = (*h).max(pl.y + inst.items[j].h);
            }
        }
        let objective = inst.objective(&heights);
        Self { placements, heights, objective }
    }

    pub fn to_solution(&self) -> SolutionJson {
        let strips = self
            .heights
            .iter()
            .enumerate()
            .map(|(i, &height)| SolutionStrip {
                i,
                height,
                items: self
                    .placements
                    .iter()
                    .enumerate()
                    .filter(|(_, pl)| pl.strip == i)
                    .map(|(j, pl)| SolutionItem { j, x: pl.x, y: pl.y })
                    .collect(),
            })
            .collect();
        SolutionJson { objective: format_rational(&self.objective), strips }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionItem {
    pub j: usize,
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionStrip {
    pub i: usize,
    #[serde(rename = "H")]
    pub height: usize,
    pub items: Vec<SolutionItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionJson {
    pub objective: String,
    pub strips: Vec<SolutionStrip>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    ItemCount { expected: usize, got: usize },
    UnknownStrip { j: usize, strip: usize },
    TooWide { j: usize, strip: usize },
    Overlap { strip: usize, j: usize, k: usize },
    HeightMismatch { strip: usize, stored: usize, actual: usize },
    ObjectiveMismatch { stored: Rational, actual: Rational },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ItemCount { expected, got } => write!(f, "expected {expected} placements, got {got}"),
            Violation::UnknownStrip { j, strip } => write!(f, "item {j} on unknown strip {strip}"),
            Violation::TooWide { j, strip } => write!(f, "item {j} crosses the right border of strip {strip}"),
            Violation::Overlap { strip, j, k } => write!(f, "items {j} and {k} overlap on strip {strip}"),
            Violation::HeightMismatch { strip, stored, actual } => {
                write!(f, "strip {strip} height {stored} but items reach {actual}")
            }
            Violation::ObjectiveMismatch { stored, actual } => {
                write!(f, "objective {stored} but coordinates give {actual}")
            }
        }
    }
}

/// Recomputes everything from coordinates. Returns the exact objective.
pub fn verify_packing(inst: &Instance, packing: &Packing) -> Result<Rational, Vec<Violation>> {
    let mut bad = Vec::new();
    let pls = &packing.placements;
    if pls.len() != inst.n_items() {
        return Err(vec![Violation::ItemCount { expected: inst.n_items(), got: pls.len() }]);
    }
    let mut heights = vec![0; inst.n_strips()];
    for (j, pl) in pls.iter().enumerate() {
        let it = inst.items[j];
        match inst.strips.get(pl.strip) {
            None => bad.push(Violation::UnknownStrip { j, strip: pl.strip }),
            Some(s) => {
                if pl.x + it.w > s.width {
                    bad.push(Violation::TooWide { j, strip: pl.strip });
                }
                heights[pl.strip] = heights[pl.strip].max(pl.y + it.h);
            }
        }
    }
    for j in 0..pls.len() {
        for k in j + 1..pls.len() {
            let (a, b) = (pls[j], pls[k]);
            let (ia, ib) = (inst.items[j], inst.items[k]);
            if a.strip == b.strip
                && a.x < b.x + ib.w
                && b.x < a.x + ia.w
                && a.y < b.y + ib.h
                && b.y < a.y + ia.h
            {
                bad.push(Violation::Overlap { strip: a.strip, j, k });
            }
        }
    }
    for (strip, (&stored, &actual)) in packing.heights.iter().zip(&heights).enumerate() {
        if stored != actual {
            bad.push(Violation::HeightMismatch { strip, stored, actual });
        }
    }
    let actual = inst.objective(&heights);
    if packing.heights.len() != heights.len() || packing.objective != actual {
        bad.push(Violation::ObjectiveMismatch { stored: packing.objective, actual });
    }
    if bad.is_empty() {
        Ok(actual)
    } else {
        Err(bad)
    }
}

#[derive(Debug, Clone)]
pub struct SolveConfig {
    /// Wall-clock budget covering model construction and search.
    pub time_limit: Option<Duration>,
    pub node_limit: Option<u64>,
    /// Strongest cut stage BendM may add.
    pub cut_stage: CutStage,
    pub prune: PruneConfig,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self { time_limit: None, node_limit: None, cut_stage: CutStage::Lifted, prune: PruneConfig::default() }
    }
}

impl SolveConfig {
    pub fn with_time_limit(limit: Duration) -> Self {
        Self { time_limit: Some(limit), ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CutCounts {
    pub standard: usize,
    pub combinatorial: usize,
    pub lifted: usize,
}

impl CutCounts {
    fn add(&mut self, stage: CutStage) {
        match stage {
            CutStage::Standard => self.standard += 1,
            CutStage::Combinatorial => self.combinatorial += 1,
            CutStage::Lifted => self.lifted += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.standard + self.combinatorial + self.lifted
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub method: Method,
    pub status: MipStatus,
    pub packing: Option<Packing>,
    pub lower_bound: f64,
    pub elapsed: Duration,
    pub nodes: u64,
    pub cut_counts: CutCounts,
    pub cuts: Vec<BendersCut>,
    pub ycheck_calls: u64,
    pub ycheck_time: Duration,
}

impl SolveReport {
    pub fn objective(&self) -> Option<Rational> {
        self.packing.as_ref().map(|p| p.objective)
    }

    /// `(obj - lb) / obj`; `None` without an incumbent or with a zero objective.
    pub fn gap(&self) -> Option<f64> {
        let obj = crate::mip::to_f64(self.objective()?);
        (obj > 0.0).then(|| ((obj - self.lower_bound) / obj).max(0.0))
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Mip(#[from] MipError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    YCheck(#[from] YCheckError),
    #[error("strip {strip} height {value} at an integral candidate is not integral")]
    FractionalHeight { strip: usize, value: f64 },
    #[error("decoded packing is invalid: {0}")]
    Decode(String),
    #[error("time budget exhausted before the search started")]
    BudgetExhausted,
}

fn remaining(start: Instant, limit: Option<Duration>) -> Result<Option<Duration>, SolveError> {
    match limit {
        None => Ok(None),
        Some(l) => match l.checked_sub(start.elapsed()) {
            Some(r) if !r.is_zero() => Ok(Some(r)),
            _ => Err(SolveError::BudgetExhausted),
        },
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 { a.abs() } else { gcd(b, a % b) }
}

/// Largest value dividing every `C_i W_i`. With the binaries fixed, the
/// least heights in both formulations are integral, so every subtree attains
/// its optimum on multiples of this value.
pub fn objective_step(inst: &Instance) -> Rational {
    inst.strips.iter().map(|s| s.height_cost()).fold(Rational::zero(), |acc, c| {
        if acc.is_zero() {
            return c;
        }
        let (a, b) = (acc.numer() * c.denom(), c.numer() * acc.denom());
        Rational::new(gcd(a, b), acc.denom() * c.denom())
    })
}

fn mip_options(inst: &Instance, cfg: &SolveConfig, time_limit: Option<Duration>) -> MipOptions {
    let step = crate::mip::to_f64(objective_step(inst));
    MipOptions { time_limit, node_limit: cfg.node_limit, objective_step: Some(step), ..Default::default() }
}

fn bound_of(status: MipStatus, bound: f64, packing: &Option<Packing>) -> f64 {
    match (status, packing) {
        (MipStatus::Optimal, Some(p)) => crate::mip::to_f64(p.objective),
        _ => bound,
    }
}

/// Integer coordinates from the big-M relative-position binaries: longest
/// paths over the left-of and below relations on each strip.
fn decode_bigm(inst: &Instance, map: &BigMVarMap, values: &[f64]) -> Result<Packing, SolveError> {
    let n = inst.n_items();
    let strip: Vec<usize> = (0..n)
        .map(|j| {
            (0..inst.n_strips())
                .find(|&i| map.z[j][i].is_some_and(|v| values[v] > 0.5))
                .ok_or_else(|| SolveError::Decode(format!("item {j} is not assigned")))
        })
        .collect::<Result<_, _>>()?;
    let longest = |rel: &Vec<Vec<Option<usize>>>, size: &dyn Fn(usize) -> usize| -> Result<Vec<usize>, SolveError> {
        let mut coord = vec![0usize; n];
        // Relation is acyclic on each strip; n passes reach the fixpoint.
        for _ in 0..=n {
            let mut changed = false;
            for j in 0..n {
                for k in 0..n {
                    if j != k && strip[j] == strip[k] && rel[j][k].is_some_and(|v| values[v] > 0.5) {
                        let need = coord[j] + size(j);
                        if coord[k] < need {
                            coord[k] = need;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                return Ok(coord);
            }
        }
        Err(SolveError::Decode("cyclic relative positions".into()))
    };
    let xs = longest(&map.left, &|j| inst.items[j].w)?;
    let ys = longest(&map.below, &|j| inst.items[j].h)?;
    let placements = (0..n).map(|j| Placement { strip: strip[j], x: xs[j], y: ys[j] }).collect();
    let packing = Packing::new(inst, placements);
    verify_packing(inst, &packing).map_err(|v| SolveError::Decode(format!("{v:?}")))?;
    Ok(packing)
}

fn run_bigm(
    inst: &Instance,
    cfg: &SolveConfig,
    method: Method,
    start: Instant,
    injected: Option<Rational>,
) -> Result<SolveReport, SolveError> {
    let (mut model, map) = build_bigm(inst);
    if let Some(lb) = injected {
        model = inject_lower_bound(&model, lb);
    }
    let res = solve_mip(&model, None, &mip_options(inst, cfg, remaining(start, cfg.time_limit)?))?;
    let packing = match &res.values {
        Some(v) => Some(decode_bigm(inst, &map, v)?),
        None => None,
    };
    let mut lower_bound = bound_of(res.status, res.bound, &packing);
    if let Some(lb) = injected {
        lower_bound = lower_bound.max(crate::mip::to_f64(lb));
    }
    Ok(SolveReport {
        method,
        status: res.status,
        packing,
        lower_bound,
        elapsed: start.elapsed(),
        nodes: res.nodes,
        cut_counts: CutCounts::default(),
        cuts: Vec::new(),
        ycheck_calls: 0,
        ycheck_time: Duration::ZERO,
    })
}

pub fn solve_bigm(inst: &Instance, cfg: &SolveConfig) -> Result<SolveReport, SolveError> {
    run_bigm(inst, cfg, Method::BigM, Instant::now(), None)
}

/// Big-M with `objective >= LP-PC` added. One budget covers both phases.
pub fn solve_bigm_le(inst: &Instance, cfg: &SolveConfig) -> Result<SolveReport, SolveError> {
    let start = Instant::now();
    let table = NormalPositionTable::build(inst);
    let lb = lp_pc_bound(inst, &table)?;
    run_bigm(inst, cfg, Method::BigMLe, start, Some(lb))
}

pub fn solve(method: Method, inst: &Instance, cfg: &SolveConfig) -> Result<SolveReport, SolveError> {
    match method {
        Method::BigM => solve_bigm(inst, cfg),
        Method::BigMLe => solve_bigm_le(inst, cfg),
        Method::BendM => solve_bendm(inst, cfg),
    }
}

const HEIGHT_TOL: f64 = 1e-6;

/// Per-strip content of an integral master point.
fn strip_contents(
    inst: &Instance,
    table: &NormalPositionTable,
    map: &MasterVarMap,
    values: &[f64],
) -> Result<Vec<(usize, Vec<PlacedItem>)>, SolveError> {
    let mut items = vec![Vec::new(); inst.n_strips()];
    for (j, pl) in map.placements(table, values).into_iter().enumerate() {
        let (i, p) = pl.ok_or_else(|| SolveError::Decode(format!("item {j} has no position")))?;
        items[i].push(PlacedItem::new(j, p, inst.items[j].w, inst.items[j].h));
    }
    items
        .into_iter()
        .enumerate()
        .map(|(i, its)| {
            let value = values[map.height[i]];
            let rounded = value.round();
            if (value - rounded).abs() > HEIGHT_TOL || rounded < 0.0 {
                return Err(SolveError::FractionalHeight { strip: i, value });
            }
            Ok((rounded as usize, its))
        })
        .collect()
}

struct BendersSeparator<'a> {
    inst: &'a Instance,
    table: &'a NormalPositionTable,
    map: &'a MasterVarMap,
    cfg: &'a SolveConfig,
    cuts: Vec<BendersCut>,
    counts: CutCounts,
    ycheck_calls: u64,
    ycheck_time: Duration,
}

impl BendersSeparator<'_> {
    fn check(&mut self, yc: &YCheckInstance) -> Result<bool, YCheckError> {
        let t = Instant::now();
        let res = ycheck(yc, &self.cfg.prune);
        self.ycheck_calls += 1;
        self.ycheck_time += t.elapsed();
        Ok(res?.verdict.is_feasible())
    }

    fn cut_for(&mut self, strip: usize, yc: &YCheckInstance) -> Result<BendersCut, YCheckError> {
        if self.cfg.cut_stage == CutStage::Standard {
            return Ok(standard_cut(strip, &yc.items, yc.height));
        }
        let t = Instant::now();
        let core = minimal_infeasible_subset(yc, &self.cfg.prune);
        self.ycheck_calls += yc.items.len() as u64;
        self.ycheck_time += t.elapsed();
        let core = core?;
        if self.cfg.cut_stage == CutStage::Lifted {
            if let Ok(lift) = lift_intervals(&core, yc.width) {
                return Ok(lifted_cut(strip, &lift, yc.height));
            }
        }
        Ok(combinatorial_cut(strip, &core, yc.height))
    }

    fn separate_inner(&mut self, values: &[f64]) -> Result<Vec<Constraint>, SolveError> {
        let mut rows = Vec::new();
        for (i, (height, items)) in strip_contents(self.inst, self.table, self.map, values)?.into_iter().enumerate() {
            if items.is_empty() {
                continue;
            }
            let yc = YCheckInstance::new(self.inst.strips[i].width, height, items)?;
            if self.check(&yc)? {
                continue;
            }
            let cut = self.cut_for(i, &yc)?;
            log::debug!("cut {}", cut.log_line());
            self.counts.add(cut.stage);
            rows.push(cut.to_constraint(format!("cut_{}", self.cuts.len()), self.table, self.map));
            self.cuts.push(cut);
        }
        Ok(rows)
    }
}

impl LazyConstraints for BendersSeparator<'_> {
    fn separate(&mut self, candidate: Candidate<'_>) -> Result<Vec<Constraint>, String> {
        self.separate_inner(candidate.values).map_err(|e| e.to_string())
    }
}

/// Benders decomposition: master over normal positions, y-check per strip
/// at every integral candidate, one cut per failing strip.
pub fn solve_bendm(inst: &Instance, cfg: &SolveConfig) -> Result<SolveReport, SolveError> {
    let start = Instant::now();
    let table = NormalPositionTable::build(inst);
    let (model, map) = build_master(inst, &table);
    let mut sep = BendersSeparator {
        inst,
        table: &table,
        map: &map,
        cfg,
        cuts: Vec::new(),
        counts: CutCounts::default(),
        ycheck_calls: 0,
        ycheck_time: Duration::ZERO,
    };
    let opts = mip_options(inst, cfg, remaining(start, cfg.time_limit)?);
    let res = solve_mip(&model, Some(&mut sep), &opts)?;

    let packing = match &res.values {
        None => None,
        Some(values) => {
            let mut placements = vec![Placement { strip: 0, x: 0, y: 0 }; inst.n_items()];
            for (i, (height, items)) in strip_contents(inst, &table, &map, values)?.into_iter().enumerate() {
                let yc = YCheckInstance::new(inst.strips[i].width, height, items)?;
                let Verdict::Feasible(ys) = ycheck(&yc, &cfg.prune)?.verdict else {
                    return Err(SolveError::Decode(format!("accepted strip {i} fails its y-check")));
                };
                for it in &yc.items {
                    placements[it.j] = Placement { strip: i, x: it.p, y: ys[&it.j] };
                }
            }
            let packing = Packing::new(inst, placements);
            verify_packing(inst, &packing).map_err(|v| SolveError::Decode(format!("{v:?}")))?;
            let master = res.objective.unwrap_or(f64::NAN);
            let realized = crate::mip::to_f64(packing.objective);
            if (master - realized).abs() > 1e-6 * realized.abs().max(1.0) {
                return Err(SolveError::Decode(format!("master objective {master} but packing gives {realized}")));
            }
            Some(packing)
        }
    };
    let lower_bound = bound_of(res.status, res.bound, &packing);
    Ok(SolveReport {
        method: Method::BendM,
        status: res.status,
        packing,
        lower_bound,
        elapsed: start.elapsed(),
        nodes: res.nodes,
        cut_counts: sep.counts,
        cuts: sep.cuts,
        ycheck_calls: sep.ycheck_calls,
        ycheck_time: sep.ycheck_time,
    })
}

/// The master together with the cuts of a finished run, for handing the
/// final model to an external solver.
pub fn master_with_cuts(inst: &Instance, cuts: &[BendersCut]) -> LinearModel {
    let table = NormalPositionTable::build(inst);
    let (mut model, map) = build_master(inst, &table);
    for (k, cut) in cuts.iter().enumerate() {
        model
            .add_constraint(cut.to_constraint(format!("cut_{k}"), &table, &map))
            .expect("cut rows use master variables and fresh names");
    }
    model
}
