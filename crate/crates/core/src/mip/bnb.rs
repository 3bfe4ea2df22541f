//! Best-bound branch and bound with a lazy-constraint hook.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::{Duration, Instant};

use thiserror::Error;

use super::model::{to_f64, Constraint, LinearModel};
use super::simplex::{Basis, LpProblem, LpRow, LpSolver, LpStatus, SimplexOptions};

pub const INTEGRALITY_TOL: f64 = 1e-6;
const VIOLATION_TOL: f64 = 1e-6;

/// An integral point handed to a lazy-constraint separator.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    /// Integer variables are rounded exactly; continuous ones are as solved.
    pub values: &'a [f64],
    pub objective: f64,
}

/// Separates constraints missing from the model at integral candidates.
///
/// Every returned constraint must be violated by the candidate and valid for
/// every solution of the underlying problem. A candidate becomes the incumbent
/// only when nothing is returned.
pub trait LazyConstraints {
    fn separate(&mut self, candidate: Candidate<'_>) -> Result<Vec<Constraint>, String>;
}

impl<F> LazyConstraints for F
where
    F: FnMut(Candidate<'_>) -> Result<Vec<Constraint>, String>,
{
    fn separate(&mut self, candidate: Candidate<'_>) -> Result<Vec<Constraint>, String> {
        self(candidate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MipStatus {
    Optimal,
    /// Stopped on the node limit with an incumbent.
    Feasible,
    Infeasible,
    TimeLimit,
}

#[derive(Debug, Clone)]
pub struct MipResult {
    pub status: MipStatus,
    pub values: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub bound: f64,
    pub nodes: u64,
    pub elapsed: Duration,
    /// All rows appended by the separator, in order.
    pub lazy_constraints: Vec<Constraint>,
}

impl MipResult {
    /// `(obj - bound) / obj` when an incumbent with positive objective exists.
    pub fn gap(&self) -> Option<f64> {
        self.objective.filter(|&o| o > 0.0).map(|o| ((o - self.bound) / o).max(0.0))
    }
}

#[derive(Debug, Error)]
pub enum MipError {
    #[error("time limit must be positive")]
    NonPositiveTimeLimit,
    #[error("LP relaxation is unbounded")]
    Unbounded,
    #[error("LP iteration limit reached at node {0}")]
    IterationLimit(u64),
    #[error("separator returned row {name:?} that the candidate satisfies (violation {violation})")]
    CutNotViolated { name: String, violation: f64 },
    #[error("separator failed: {0}")]
    Callback(String),
}

#[derive(Debug, Clone, Default)]
pub struct MipOptions {
    pub time_limit: Option<Duration>,
    pub node_limit: Option<u64>,
    /// Only a value strictly below this can become the incumbent.
    pub cutoff: Option<f64>,
    /// Every subtree attains its optimum on multiples of this value, so node
    /// bounds may be rounded up to the next multiple.
    pub objective_step: Option<f64>,
    pub simplex: SimplexOptions,
}

impl MipOptions {
    pub fn with_time_limit(limit: Duration) -> Self {
        Self { time_limit: Some(limit), ..Default::default() }
    }
}

#[derive(Debug)]
struct Node {
    bound: f64,
    seq: u64,
    changes: Vec<(usize, f64, f64)>,
    /// Node whose final LP produced this one, with that LP's basis.
    parent: Option<(u64, Rc<Basis>)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Max-heap: lowest bound first, then the most recently created node.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(self.seq.cmp(&other.seq))
    }
}

fn prune_tol(incumbent: f64) -> f64 {
    1e-6 + 1e-9 * incumbent.abs()
}

fn round_bound(bound: f64, step: Option<f64>) -> f64 {
    match step {
        Some(g) if g > 0.0 && bound.is_finite() => (((bound - prune_tol(bound)) / g).ceil() * g).max(bound),
        _ => bound,
    }
}

/// Solves `model` by LP-based branch and bound. Lazily separated rows are
/// added globally and the node that produced them is solved again.
pub fn solve_mip(
    model: &LinearModel,
    mut callback: Option<&mut dyn LazyConstraints>,
    options: &MipOptions,
) -> Result<MipResult, MipError> {
    let start = Instant::now();
    if options.time_limit.is_some_and(|t| t.is_zero()) {
        return Err(MipError::NonPositiveTimeLimit);
    }
    let prob = LpProblem::from_model(model);
    let integer: Vec<bool> = model.vars().iter().map(|v| v.integer).collect();
    let base_lower = prob.lower.clone();
    let base_upper = prob.upper.clone();
    let mut lp = LpSolver::new(prob, options.simplex);
    // Node whose last LP basis the solver currently holds.
    let mut loaded: Option<u64> = None;

    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Node { bound: f64::NEG_INFINITY, seq, changes: Vec::new(), parent: None });

    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut lazy = Vec::new();
    let mut nodes = 0u64;
    let mut stopped: Option<(MipStatus, f64)> = None;

    let cutoff = |inc: &Option<(Vec<f64>, f64)>| {
        let from_inc = inc.as_ref().map_or(f64::INFINITY, |(_, o)| *o);
        from_inc.min(options.cutoff.unwrap_or(f64::INFINITY))
    };

    while let Some(node) = heap.pop() {
        let best = cutoff(&incumbent);
        if node.bound >= best - prune_tol(best) {
            heap.clear();
            break;
        }
        if options.time_limit.is_some_and(|t| start.elapsed() >= t) {
            stopped = Some((MipStatus::TimeLimit, node.bound));
            heap.push(node);
            break;
        }
        if options.node_limit.is_some_and(|l| nodes >= l) {
            stopped = Some((MipStatus::Feasible, node.bound));
            heap.push(node);
            break;
        }
        nodes += 1;

        let mut lower = base_lower.clone();
        let mut upper = base_upper.clone();
        for &(v, lo, hi) in &node.changes {
            lower[v] = lo;
            upper[v] = hi;
        }
        // Any optimal basis stays dual feasible under new bounds, so a child
        // of the loaded node continues from it; others get their parent's
        // basis back.
        if let Some((pid, basis)) = &node.parent {
            if loaded != Some(*pid) {
                lp.restore(basis);
            }
        }
        for v in 0..lower.len() {
            lp.set_bounds(v, lower[v], upper[v]);
        }
        loaded = Some(node.seq);

        // Re-solve this node until the separator is satisfied or it branches.
        loop {
            let sol = lp.solve();
            match sol.status {
                LpStatus::Optimal => {}
                LpStatus::Infeasible => break,
                LpStatus::Unbounded => return Err(MipError::Unbounded),
                LpStatus::IterationLimit => return Err(MipError::IterationLimit(nodes)),
            }
            let node_bound = round_bound(sol.objective, options.objective_step);
            let best = cutoff(&incumbent);
            if node_bound >= best - prune_tol(best) {
                break;
            }

            // Most fractional integer variable, lowest index on ties.
            let mut branch: Option<(usize, f64)> = None;
            for (v, &x) in sol.values.iter().enumerate() {
                if !integer[v] {
                    continue;
                }
                let frac = (x - x.floor()).min(x.ceil() - x);
                if frac > INTEGRALITY_TOL && branch.is_none_or(|(_, f)| frac > f + 1e-12) {
                    branch = Some((v, frac));
                }
            }

            if let Some((v, _)) = branch {
                let x = sol.values[v];
                let basis = Rc::new(lp.basis());
                let mut down = node.changes.clone();
                down.push((v, lower[v], x.floor()));
                let mut up = node.changes.clone();
                up.push((v, x.ceil(), upper[v]));
                seq += 1;
                heap.push(Node { bound: node_bound, seq, changes: down, parent: Some((node.seq, basis.clone())) });
                seq += 1;
                heap.push(Node { bound: node_bound, seq, changes: up, parent: Some((node.seq, basis)) });
                break;
            }

            let mut values = sol.values.clone();
            for (v, x) in values.iter_mut().enumerate() {
                if integer[v] {
                    *x = x.round();
                }
            }
            let objective = model.objective_value(&values);
            let cuts = match callback.as_deref_mut() {
                Some(cb) => cb.separate(Candidate { values: &values, objective }).map_err(MipError::Callback)?,
                None => Vec::new(),
            };
            if cuts.is_empty() {
                if objective < cutoff(&incumbent) {
                    incumbent = Some((values, objective));
                }
                break;
            }
            for cut in cuts {
                let violation = cut.violation(&values);
                if violation <= VIOLATION_TOL {
                    return Err(MipError::CutNotViolated { name: cut.name, violation });
                }
                lp.add_row(LpRow {
                    terms: cut.terms.iter().map(|&(v, a)| (v, to_f64(a))).collect(),
                    sense: cut.sense,
                    rhs: to_f64(cut.rhs),
                });
                lazy.push(cut);
            }
        }
    }

    let elapsed = start.elapsed();
    let open_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let (status, bound) = match (stopped, &incumbent) {
        (Some((s, b)), Some((_, obj))) => (s, b.min(open_bound).min(*obj)),
        (Some((_, b)), None) => (MipStatus::TimeLimit, b.min(open_bound)),
        (None, Some((_, obj))) => (MipStatus::Optimal, *obj),
        (None, None) => (MipStatus::Infeasible, f64::INFINITY),
    };
    let (values, objective) = match incumbent {
        Some((v, o)) => (Some(v), Some(o)),
        None => (None, None),
    };
    Ok(MipResult { status, values, objective, bound, nodes, elapsed, lazy_constraints: lazy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mip::model::Sense;
    use crate::Rational;
    use proptest::prelude::*;

    fn r(n: i64) -> Rational {
        Rational::from_integer(n)
    }

    #[test]
    fn binary_knapsack() {
        // max 3a + 2b s.t. a + b <= 1, as a minimization.
        let mut m = LinearModel::new("k");
        let a = m.add_binary("a", r(-3)).unwrap();
        let b = m.add_binary("b", r(-2)).unwrap();
        m.add_constraint(Constraint::new("c", vec![(a, r(1)), (b, r(1))], Sense::Le, r(1))).unwrap();
        let res = solve_mip(&m, None, &MipOptions::default()).unwrap();
        assert_eq!(res.status, MipStatus::Optimal);
        assert_eq!(res.objective, Some(-3.0));
        assert_eq!(res.values.unwrap()[a], 1.0);
    }

    #[test]
    fn rejects_zero_time_limit() {
        let m = LinearModel::new("e");
        let opts = MipOptions::with_time_limit(Duration::ZERO);
        assert!(matches!(solve_mip(&m, None, &opts), Err(MipError::NonPositiveTimeLimit)));
    }

    #[test]
    fn infeasible_integer_program() {
        // 2x = 1 with x integer.
        let mut m = LinearModel::new("i");
        let x = m.add_var("x", r(0), Some(r(3)), true, r(1)).unwrap();
        m.add_constraint(Constraint::new("c", vec![(x, r(2))], Sense::Eq, r(1))).unwrap();
        let res = solve_mip(&m, None, &MipOptions::default()).unwrap();
        assert_eq!(res.status, MipStatus::Infeasible);
    }

    #[test]
    fn callback_cuts_first_candidate() {
        // min -a - b over binaries; the separator forbids a = b = 1.
        let mut m = LinearModel::new("lazy");
        let a = m.add_binary("a", r(-2)).unwrap();
        let b = m.add_binary("b", r(-1)).unwrap();
        let mut seen = Vec::new();
        let mut cb = |c: Candidate<'_>| -> Result<Vec<Constraint>, String> {
            seen.push(c.values.to_vec());
            if c.values[a] + c.values[b] > 1.5 {
                Ok(vec![Constraint::new("nogood", vec![(a, r(1)), (b, r(1))], Sense::Le, r(1))])
            } else {
                Ok(vec![])
            }
        };
        let res = solve_mip(&m, Some(&mut cb), &MipOptions::default()).unwrap();
        assert_eq!(res.status, MipStatus::Optimal);
        assert_eq!(res.objective, Some(-2.0));
        assert_eq!(seen[0], vec![1.0, 1.0]);
        assert_eq!(res.lazy_constraints.len(), 1);
        assert!(res.lazy_constraints[0].violation(res.values.as_ref().unwrap()) <= 0.0);
    }

    #[test]
    fn rejects_cut_that_is_not_violated() {
        let mut m = LinearModel::new("bad");
        let a = m.add_binary("a", r(-1)).unwrap();
        let mut cb = |_: Candidate<'_>| -> Result<Vec<Constraint>, String> {
            Ok(vec![Constraint::new("loose", vec![(a, r(1))], Sense::Le, r(1))])
        };
        assert!(matches!(
            solve_mip(&m, Some(&mut cb), &MipOptions::default()),
            Err(MipError::CutNotViolated { .. })
        ));
    }

    /// Exhaustive minimum over all binary vectors; `None` when infeasible.
    fn brute_force(m: &LinearModel) -> Option<f64> {
        let n = m.n_vars();
        (0u32..1 << n)
            .map(|mask| (0..n).map(|v| (mask >> v & 1) as f64).collect::<Vec<_>>())
            .filter(|x| m.is_feasible(x, 1e-9))
            .map(|x| m.objective_value(&x))
            .min_by(f64::total_cmp)
    }

    fn random_ip(n: usize, objs: &[i8], rows: &[(Vec<i8>, i8, u8)]) -> LinearModel {
        let mut m = LinearModel::new("rand");
        for v in 0..n {
            m.add_binary(format!("x{v}"), r(objs[v] as i64)).unwrap();
        }
        for (k, (coefs, rhs, sense)) in rows.iter().enumerate() {
            let terms = coefs.iter().take(n).enumerate().map(|(v, &c)| (v, r(c as i64))).collect();
            let sense = [Sense::Le, Sense::Ge, Sense::Eq][*sense as usize % 3];
            m.add_constraint(Constraint::new(format!("c{k}"), terms, sense, r(*rhs as i64))).unwrap();
        }
        m
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn matches_enumeration(
            n in 1usize..=12,
            objs in proptest::collection::vec(-9i8..10, 12),
            rows in proptest::collection::vec((proptest::collection::vec(-4i8..5, 12), -3i8..8, 0u8..5), 1..5),
        ) {
            let m = random_ip(n, &objs, &rows);
            let res = solve_mip(&m, None, &MipOptions::default()).unwrap();
            match brute_force(&m) {
                None => prop_assert_eq!(res.status, MipStatus::Infeasible),
                Some(best) => {
                    prop_assert_eq!(res.status, MipStatus::Optimal);
                    prop_assert!((res.objective.unwrap() - best).abs() < 1e-6);
                    prop_assert!(m.is_feasible(res.values.as_ref().unwrap(), 1e-6));
                }
            }
        }

        #[test]
        fn deterministic(
            objs in proptest::collection::vec(-9i8..10, 12),
            rows in proptest::collection::vec((proptest::collection::vec(-4i8..5, 12), -3i8..8, 0u8..5), 1..4),
        ) {
            let m = random_ip(10, &objs, &rows);
            let a = solve_mip(&m, None, &MipOptions::default()).unwrap();
            let b = solve_mip(&m, None, &MipOptions::default()).unwrap();
            prop_assert_eq!(a.values, b.values);
            prop_assert_eq!(a.nodes, b.nodes);
        }
    }
}
