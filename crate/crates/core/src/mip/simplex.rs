//! Bounded-variable simplex with an explicit dense basis inverse and sparse
//! columns.
//!
//! A cold solve gives every row a logical column (slack, or a fixed zero
//! column for equalities) and an artificial column, minimizes the sum of the
//! artificials, then fixes them at zero and minimizes the real costs. After
//! bound changes or appended rows the last basis stays dual feasible, so
//! re-solves run the dual simplex from it and fall back to a cold start only
//! when that fails.

use super::model::{to_f64, LinearModel, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct LpResult {
    pub status: LpStatus,
    pub objective: f64,
    /// Structural variable values; meaningful when `status` is `Optimal`.
    pub values: Vec<f64>,
    /// Row duals `c_B B^-1`; nonpositive on `<=` rows and nonnegative on `>=` rows.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub feasibility_tol: f64,
    pub pivot_tol: f64,
    pub optimality_tol: f64,
    pub max_iterations: Option<usize>,
    pub refactor_every: usize,
    pub bland_after: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-7,
            pivot_tol: 1e-9,
            optimality_tol: 1e-9,
            max_iterations: None,
            refactor_every: 400,
            bland_after: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpRow {
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Floating-point working copy of a model's relaxation.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<LpRow>,
}

impl LpProblem {
    pub fn from_model(model: &LinearModel) -> Self {
        let vars = model.vars();
        Self {
            cost: vars.iter().map(|v| to_f64(v.objective)).collect(),
            lower: vars.iter().map(|v| to_f64(v.lower)).collect(),
            upper: vars.iter().map(|v| v.upper.map_or(f64::INFINITY, to_f64)).collect(),
            rows: model
                .constraints()
                .iter()
                .map(|c| LpRow {
                    terms: c.terms.iter().map(|&(v, a)| (v, to_f64(a))).collect(),
                    sense: c.sense,
                    rhs: to_f64(c.rhs),
                })
                .collect(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.cost.len()
    }
}

/// Solves the LP relaxation of `model` (integrality ignored).
pub fn solve_lp(model: &LinearModel) -> LpResult {
    solve(&LpProblem::from_model(model), &SimplexOptions::default())
}

/// One cold solve.
pub fn solve(prob: &LpProblem, opts: &SimplexOptions) -> LpResult {
    LpSolver::new(prob.clone(), *opts).solve()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Basic,
    Lower,
    Upper,
}

/// A basis saved from an [`LpSolver`]. Restorable into the same solver as
/// long as it has not been rebuilt cold since; rows appended after the
/// snapshot come back with their slacks basic.
#[derive(Debug, Clone)]
pub struct Basis {
    layout: u64,
    basis: Vec<usize>,
    status: Vec<Status>,
}

/// An LP that can be modified and re-solved from its last basis.
pub struct LpSolver {
    prob: LpProblem,
    opts: SimplexOptions,
    t: Tableau,
    layout: u64,
    /// The tableau holds a phase-two basis with the artificials fixed.
    warm: bool,
}

impl LpSolver {
    pub fn new(prob: LpProblem, opts: SimplexOptions) -> Self {
        let t = Tableau::new(&prob, opts);
        Self { prob, opts, t, layout: 0, warm: false }
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        if self.prob.lower[j] == lower && self.prob.upper[j] == upper {
            return;
        }
        self.prob.lower[j] = lower;
        self.prob.upper[j] = upper;
        self.t.set_bounds(j, lower, upper);
    }

    pub fn add_row(&mut self, row: LpRow) {
        self.t.add_row(&row);
        self.prob.rows.push(row);
    }

    pub fn solve(&mut self) -> LpResult {
        if self.warm {
            if let Some(res) = self.t.warm_solve(&self.prob.cost) {
                return res;
            }
        }
        self.layout += 1;
        self.t = Tableau::new(&self.prob, self.opts);
        let res = self.t.two_phase(&self.prob.cost);
        self.warm = res.status == LpStatus::Optimal;
        res
    }

    pub fn basis(&self) -> Basis {
        Basis {
            layout: self.layout,
            basis: self.t.basis.clone(),
            status: self.t.status.clone(),
        }
    }

    /// Loads `basis`; returns false (leaving the current basis) when it does
    /// not fit this solver or is singular.
    pub fn restore(&mut self, basis: &Basis) -> bool {
        if !self.warm || basis.layout != self.layout {
            return false;
        }
        self.t.restore(basis)
    }
}

struct Tableau {
    opts: SimplexOptions,
    n: usize,
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    /// The structural part again, by row.
    rows: Vec<Vec<(usize, f64)>>,
    /// `(row, coefficient)` of each logical column `n + k`.
    logical: Vec<(usize, f64)>,
    slack_of: Vec<usize>,
    artificial: Vec<usize>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    x: Vec<f64>,
    status: Vec<Status>,
    basis: Vec<usize>,
    /// Row `k` maps row activities to the value of basic position `k`.
    binv: Vec<f64>,
    /// Squared norms of the rows of `binv`, for dual steepest-edge pricing.
    weights: Vec<f64>,
    rhs: Vec<f64>,
    /// Nonbasic moves `(j, delta)` not yet applied to the basic values.
    shifted: Vec<(usize, f64)>,
    iterations: usize,
    since_refactor: usize,
}

enum Step {
    Optimal,
    Unbounded,
    Pivoted,
}

impl Tableau {
    fn new(prob: &LpProblem, opts: SimplexOptions) -> Self {
        let n = prob.n_vars();
        let m = prob.rows.len();
        let mut cols = vec![Vec::new(); n];
        let mut rows = vec![Vec::new(); m];
        for (r, row) in prob.rows.iter().enumerate() {
            for &(v, a) in &row.terms {
                if a != 0.0 {
                    cols[v].push((r, a));
                    rows[r].push((v, a));
                }
            }
        }
        let total = n + 2 * m;
        let mut lb = vec![0.0; total];
        let mut ub = vec![f64::INFINITY; total];
        lb[..n].copy_from_slice(&prob.lower);
        ub[..n].copy_from_slice(&prob.upper);
        let mut logical = Vec::with_capacity(2 * m);
        for (r, row) in prob.rows.iter().enumerate() {
            let coef = match row.sense {
                Sense::Le => 1.0,
                Sense::Ge => -1.0,
                Sense::Eq => {
                    ub[n + r] = 0.0;
                    1.0
                }
            };
            logical.push((r, coef));
        }
        for r in 0..m {
            logical.push((r, 1.0));
        }
        let mut x = vec![0.0; total];
        let mut status = vec![Status::Lower; total];
        for j in 0..n {
            // Nonbasic structurals start at their finite lower bound, or the
            // upper bound when only that one is finite.
            x[j] = if lb[j].is_finite() { lb[j] } else if ub[j].is_finite() { ub[j] } else { 0.0 };
            if !lb[j].is_finite() && ub[j].is_finite() {
                status[j] = Status::Upper;
            }
        }
        let rhs: Vec<f64> = prob.rows.iter().map(|r| r.rhs).collect();
        let mut resid = rhs.clone();
        for (j, col) in cols.iter().enumerate() {
            if x[j] != 0.0 {
                for &(r, a) in col {
                    resid[r] -= a * x[j];
                }
            }
        }
        let mut basis = vec![0; m];
        let mut binv = vec![0.0; m * m];
        for r in 0..m {
            let s = n + r;
            let a = n + m + r;
            let slack_coef = logical[r].1;
            let slack_value = resid[r] * slack_coef;
            if slack_value >= 0.0 && slack_value <= ub[s] {
                basis[r] = s;
                status[s] = Status::Basic;
                x[s] = slack_value;
                binv[r * m + r] = slack_coef;
                ub[a] = 0.0;
            } else {
                let art_coef = if resid[r] >= 0.0 { 1.0 } else { -1.0 };
                logical[m + r].1 = art_coef;
                basis[r] = a;
                status[a] = Status::Basic;
                x[a] = resid[r].abs();
                binv[r * m + r] = art_coef;
            }
        }
        Self {
            opts,
            n,
            m,
            cols,
            rows,
            logical,
            slack_of: (n..n + m).collect(),
            artificial: (n + m..n + 2 * m).collect(),
            lb,
            ub,
            x,
            status,
            basis,
            binv,
            weights: vec![1.0; m],
            rhs,
            shifted: Vec::new(),
            iterations: 0,
            since_refactor: 0,
        }
    }

    fn n_cols(&self) -> usize {
        self.x.len()
    }

    fn column(&self, j: usize) -> ColumnIter<'_> {
        if j < self.n {
            ColumnIter::Sparse(self.cols[j].iter())
        } else {
            ColumnIter::Unit(Some(self.logical[j - self.n]))
        }
    }

    fn full_cost(&self, cost: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_cols()];
        full[..self.n].copy_from_slice(cost);
        full
    }

    fn default_iteration_cap(&self) -> usize {
        self.opts.max_iterations.unwrap_or(100_000 + 50 * (self.m + self.n_cols()))
    }

    fn two_phase(&mut self, cost: &[f64]) -> LpResult {
        let max_iter = self.default_iteration_cap();
        let mut phase1 = vec![0.0; self.n_cols()];
        for &a in &self.artificial {
            phase1[a] = 1.0;
        }
        match self.run(&phase1, max_iter) {
            Some(Step::Optimal) => {}
            _ => return self.failure(LpStatus::IterationLimit),
        }
        self.refactor();
        let infeas: f64 = self.artificial.iter().map(|&j| self.x[j].max(0.0)).sum();
        let scale = 1.0 + self.rhs.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if infeas > self.opts.feasibility_tol * scale {
            return self.failure(LpStatus::Infeasible);
        }
        for k in 0..self.artificial.len() {
            let j = self.artificial[k];
            self.ub[j] = 0.0;
            if self.status[j] != Status::Basic {
                self.x[j] = 0.0;
                self.status[j] = Status::Lower;
            }
        }
        let full = self.full_cost(cost);
        match self.run(&full, max_iter) {
            Some(Step::Optimal) => {}
            Some(Step::Unbounded) => return self.failure(LpStatus::Unbounded),
            _ => return self.failure(LpStatus::IterationLimit),
        }
        self.refactor();
        self.optimal(cost, &full)
    }

    /// Re-solve from the current basis; `None` asks for a cold start.
    fn warm_solve(&mut self, cost: &[f64]) -> Option<LpResult> {
        let full = self.full_cost(cost);
        self.apply_shifts();
        if self.dual_feasible(&full) {
            let perturbed = self.perturbed(&full);
            let cap = self.iterations + 2_000 + 20 * self.m;
            if !self.dual(&perturbed, cap)? {
                return Some(self.failure(LpStatus::Infeasible));
            }
        } else if !self.primal_feasible() {
            return None;
        }
        let cap = self.iterations + 2_000 + 20 * self.m;
        match self.run(&full, cap)? {
            Step::Optimal => Some(self.optimal(cost, &full)),
            Step::Unbounded => Some(self.failure(LpStatus::Unbounded)),
            Step::Pivoted => None,
        }
    }

    /// Costs with small distinct shifts on the nonbasic columns that keep
    /// the basis dual feasible; breaks the ties that make the dual simplex
    /// cycle on degenerate duals.
    fn perturbed(&self, cost: &[f64]) -> Vec<f64> {
        let mut out = cost.to_vec();
        for (j, c) in out.iter_mut().enumerate() {
            if self.status[j] == Status::Basic || self.lb[j] == self.ub[j] || self.is_free(j) {
                continue;
            }
            // Knuth multiplicative hash to a fraction in [0.5, 1.5).
            let frac = 0.5 + (j as u32).wrapping_mul(2_654_435_761) as f64 / 4_294_967_296.0;
            let delta = 1e-6 * frac * (1.0 + c.abs());
            *c += if self.status[j] == Status::Lower { delta } else { -delta };
        }
        out
    }

    fn failure(&self, status: LpStatus) -> LpResult {
        LpResult {
            status,
            objective: f64::NAN,
            values: self.x[..self.n].to_vec(),
            duals: vec![0.0; self.m],
            iterations: self.iterations,
        }
    }

    fn optimal(&self, cost: &[f64], full: &[f64]) -> LpResult {
        let duals = self.duals(full);
        let mut values = self.x[..self.n].to_vec();
        for (j, v) in values.iter_mut().enumerate() {
            // Clip round-off against the bounds.
            *v = v.max(self.lb[j]).min(self.ub[j]);
        }
        let objective = values.iter().zip(cost).map(|(x, c)| x * c).sum();
        LpResult { status: LpStatus::Optimal, objective, values, duals, iterations: self.iterations }
    }

    fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lb[j] = lower;
        self.ub[j] = upper;
        if self.status[j] != Status::Basic {
            let old = self.x[j];
            self.place_nonbasic(j);
            if self.x[j] != old {
                self.shifted.push((j, self.x[j] - old));
            }
        }
    }

    /// Brings the basic values in line with pending nonbasic moves.
    fn apply_shifts(&mut self) {
        let m = self.m;
        if self.shifted.len() * 8 > m {
            self.recompute_basics();
            return;
        }
        for (j, delta) in std::mem::take(&mut self.shifted) {
            let col: Vec<(usize, f64)> = self.column(j).collect();
            for (r, a) in col {
                let f = a * delta;
                for k in 0..m {
                    let b = self.binv[k * m + r];
                    if b != 0.0 {
                        self.x[self.basis[k]] -= b * f;
                    }
                }
            }
        }
    }

    /// Puts a nonbasic column on the bound its status names, switching sides
    /// when that bound is infinite.
    fn place_nonbasic(&mut self, j: usize) {
        let (lo, hi) = (self.lb[j], self.ub[j]);
        if self.status[j] == Status::Upper && !hi.is_finite() {
            self.status[j] = Status::Lower;
        } else if self.status[j] == Status::Lower && !lo.is_finite() && hi.is_finite() {
            self.status[j] = Status::Upper;
        }
        self.x[j] = match self.status[j] {
            Status::Upper => hi,
            _ if lo.is_finite() => lo,
            _ => 0.0,
        };
    }

    /// Appends a row with its slack basic; the basis stays dual feasible.
    fn add_row(&mut self, row: &LpRow) {
        self.apply_shifts();
        let (m, r) = (self.m, self.m);
        let mut coef_of = std::collections::HashMap::new();
        let mut by_row = Vec::new();
        for &(v, a) in &row.terms {
            if a != 0.0 {
                self.cols[v].push((r, a));
                by_row.push((v, a));
                *coef_of.entry(v).or_insert(0.0) += a;
            }
        }
        self.rows.push(by_row);
        let (coef, upper) = match row.sense {
            Sense::Le => (1.0, f64::INFINITY),
            Sense::Ge => (-1.0, f64::INFINITY),
            Sense::Eq => (1.0, 0.0),
        };
        let s = self.n_cols();
        self.logical.push((r, coef));
        self.slack_of.push(s);
        self.lb.push(0.0);
        self.ub.push(upper);
        self.status.push(Status::Basic);
        let activity: f64 = row.terms.iter().map(|&(v, a)| a * self.x[v]).sum();
        self.x.push((row.rhs - activity) / coef);
        self.rhs.push(row.rhs);

        // [[B, 0], [u, coef]]^-1 = [[B^-1, 0], [-u B^-1 / coef, 1 / coef]].
        let m1 = m + 1;
        let mut binv = vec![0.0; m1 * m1];
        for k in 0..m {
            binv[k * m1..k * m1 + m].copy_from_slice(&self.binv[k * m..(k + 1) * m]);
        }
        for (k, &b) in self.basis.iter().enumerate() {
            if let Some(&u) = coef_of.get(&b) {
                let src = &self.binv[k * m..(k + 1) * m];
                for (dst, &v) in binv[m * m1..m * m1 + m].iter_mut().zip(src) {
                    *dst -= u * v / coef;
                }
            }
        }
        binv[m * m1 + m] = 1.0 / coef;
        self.weights.push(binv[m * m1..].iter().map(|v| v * v).sum());
        self.binv = binv;
        self.basis.push(s);
        self.m = m1;
    }

    fn restore(&mut self, saved: &Basis) -> bool {
        if saved.basis.len() > self.m || saved.status.len() > self.n_cols() {
            return false;
        }
        let old = (self.basis.clone(), self.status.clone(), self.x.clone());
        let k = saved.basis.len();
        self.basis[..k].copy_from_slice(&saved.basis);
        for r in k..self.m {
            self.basis[r] = self.slack_of[r];
        }
        let k = saved.status.len();
        self.status[..k].copy_from_slice(&saved.status);
        for s in &mut self.status[k..] {
            *s = Status::Basic;
        }
        for j in 0..self.n_cols() {
            if self.status[j] != Status::Basic {
                self.place_nonbasic(j);
            }
        }
        if self.refactor() {
            true
        } else {
            (self.basis, self.status, self.x) = old;
            self.refactor();
            false
        }
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (r, &b) in self.basis.iter().enumerate() {
            let c = cost[b];
            if c != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (yk, &bk) in y.iter_mut().zip(row) {
                    *yk += c * bk;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, cost: &[f64], y: &[f64], j: usize) -> f64 {
        cost[j] - self.column(j).map(|(r, a)| y[r] * a).sum::<f64>()
    }

    fn is_free(&self, j: usize) -> bool {
        !self.lb[j].is_finite() && !self.ub[j].is_finite()
    }

    fn dual_feasible(&self, cost: &[f64]) -> bool {
        let tol = 1e-7;
        let y = self.duals(cost);
        (0..self.n_cols()).all(|j| {
            if self.status[j] == Status::Basic || self.lb[j] == self.ub[j] {
                return true;
            }
            let d = self.reduced_cost(cost, &y, j);
            if self.is_free(j) {
                d.abs() <= tol
            } else if self.status[j] == Status::Lower {
                d >= -tol
            } else {
                d <= tol
            }
        })
    }

    fn bound_violation(&self, b: usize) -> Option<(f64, bool)> {
        let tol = self.opts.feasibility_tol;
        let v = self.x[b];
        if v < self.lb[b] - tol * (1.0 + self.lb[b].abs()) {
            Some((self.lb[b] - v, false))
        } else if v > self.ub[b] + tol * (1.0 + self.ub[b].abs()) {
            Some((v - self.ub[b], true))
        } else {
            None
        }
    }

    fn primal_feasible(&self) -> bool {
        self.basis.iter().all(|&b| self.bound_violation(b).is_none())
    }

    /// Dual simplex from a dual feasible basis. `Some(true)` once primal
    /// feasible, `Some(false)` when the LP is infeasible, `None` on the
    /// iteration cap or a numerically unusable pivot.
    fn dual(&mut self, cost: &[f64], max_iter: usize) -> Option<bool> {
        let m = self.m;
        let ncols = self.n_cols();
        let mut d = self.reduced_costs(cost);
        let mut row_alpha = vec![0.0; ncols];
        loop {
            if self.iterations >= max_iter {
                return None;
            }
            let mut leave: Option<(usize, bool)> = None;
            let mut worst = 0.0;
            for (r, &b) in self.basis.iter().enumerate() {
                if let Some((amount, to_upper)) = self.bound_violation(b) {
                    let score = amount * amount / self.weights[r].max(1e-12);
                    if score > worst {
                        worst = score;
                        leave = Some((r, to_upper));
                    }
                }
            }
            let Some((r, to_upper)) = leave else {
                return Some(true);
            };

            // Pivot row e_r B^-1 A, accumulated over the nonzeros of e_r B^-1.
            row_alpha.iter_mut().for_each(|v| *v = 0.0);
            let rho = &self.binv[r * m..(r + 1) * m];
            for (i, &ri) in rho.iter().enumerate() {
                if ri != 0.0 {
                    for &(j, a) in &self.rows[i] {
                        row_alpha[j] += ri * a;
                    }
                }
            }
            for (k, &(i, coef)) in self.logical.iter().enumerate() {
                row_alpha[self.n + k] = rho[i] * coef;
            }

            // Ratio test.
            let mut enter: Option<(usize, f64, f64)> = None;
            for j in 0..ncols {
                let alpha = row_alpha[j];
                if alpha.abs() <= self.opts.pivot_tol || self.status[j] == Status::Basic || self.lb[j] == self.ub[j] {
                    continue;
                }
                // Sign of the move of x_j that pushes the leaving value
                // toward the violated bound.
                let dir = if to_upper { alpha.signum() } else { -alpha.signum() };
                let movable = self.is_free(j)
                    || (dir > 0.0 && self.status[j] == Status::Lower)
                    || (dir < 0.0 && self.status[j] == Status::Upper);
                if !movable {
                    continue;
                }
                let ratio = (d[j] * dir).max(0.0) / alpha.abs();
                let better = match enter {
                    None => true,
                    Some((_, best, piv)) => {
                        ratio < best - 1e-12 || (ratio <= best + 1e-12 && alpha.abs() > piv)
                    }
                };
                if better {
                    enter = Some((j, ratio, alpha.abs()));
                }
            }
            let Some((q, _, _)) = enter else {
                return Some(false);
            };

            let alpha = self.ftran(q);
            let piv = alpha[r];
            if piv.abs() <= self.opts.pivot_tol || (piv - row_alpha[q]).abs() > 1e-6 * (1.0 + piv.abs()) {
                return None;
            }
            let out = self.basis[r];
            let theta = d[q] / row_alpha[q];
            for j in 0..ncols {
                if row_alpha[j] != 0.0 && self.status[j] != Status::Basic {
                    d[j] -= theta * row_alpha[j];
                }
            }
            d[q] = 0.0;
            d[out] = -theta;

            let target = if to_upper { self.ub[out] } else { self.lb[out] };
            let step = (self.x[out] - target) / piv;
            self.x[q] += step;
            for (k, &al) in alpha.iter().enumerate() {
                if al != 0.0 {
                    let b = self.basis[k];
                    self.x[b] -= step * al;
                }
            }
            self.iterations += 1;
            self.pivot(r, q, &alpha, to_upper);
            if self.since_refactor == 0 {
                d = self.reduced_costs(cost);
            }
        }
    }

    /// Reduced costs of every column, zero on the basic ones.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let y = self.duals(cost);
        (0..self.n_cols())
            .map(|j| if self.status[j] == Status::Basic { 0.0 } else { self.reduced_cost(cost, &y, j) })
            .collect()
    }

    /// `B^-1 a_q`.
    fn ftran(&self, q: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for (r, a) in self.column(q) {
            for (k, al) in alpha.iter_mut().enumerate() {
                *al += self.binv[k * m + r] * a;
            }
        }
        alpha
    }

    /// Swaps `q` into basic position `r`; the leaving column goes to the
    /// bound named by `to_upper`.
    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64], to_upper: bool) {
        let m = self.m;
        let out = self.basis[r];
        self.status[out] = if to_upper { Status::Upper } else { Status::Lower };
        self.x[out] = if to_upper { self.ub[out] } else { self.lb[out] };
        self.basis[r] = q;
        self.status[q] = Status::Basic;
        let piv = alpha[r];
        let (head, rest) = self.binv.split_at_mut(r * m);
        let (prow, tail) = rest.split_at_mut(m);
        for v in prow.iter_mut() {
            *v /= piv;
        }
        let pnorm: f64 = prow.iter().map(|v| v * v).sum();
        self.weights[r] = pnorm;
        let nz: Vec<usize> = (0..m).filter(|&i| prow[i] != 0.0).collect();
        let sparse = nz.len() * 4 < m;
        for (k, &al) in alpha.iter().enumerate() {
            if k == r || al == 0.0 {
                continue;
            }
            let row = if k < r { &mut head[k * m..(k + 1) * m] } else { &mut tail[(k - r - 1) * m..(k - r) * m] };
            if sparse {
                // |row - al p|^2 = |row|^2 - 2 al (row . p) + al^2 |p|^2.
                let mut dot = 0.0;
                for &i in &nz {
                    dot += row[i] * prow[i];
                    row[i] -= al * prow[i];
                }
                self.weights[k] = (self.weights[k] - 2.0 * al * dot + al * al * pnorm).max(1e-12);
            } else {
                let mut norm = 0.0;
                for (v, &p) in row.iter_mut().zip(prow.iter()) {
                    *v -= al * p;
                    norm += *v * *v;
                }
                self.weights[k] = norm;
            }
        }
        self.since_refactor += 1;
        if self.since_refactor >= self.opts.refactor_every {
            self.refactor();
        }
    }

    /// Iterates until optimal or unbounded for `cost`; `None` on iteration cap.
    fn run(&mut self, cost: &[f64], max_iter: usize) -> Option<Step> {
        let mut degenerate_streak = 0usize;
        loop {
            if self.iterations >= max_iter {
                return None;
            }
            let bland = degenerate_streak >= self.opts.bland_after;
            match self.iterate(cost, bland) {
                (Step::Pivoted, step_len) => {
                    if step_len <= 1e-12 {
                        degenerate_streak += 1;
                    } else {
                        degenerate_streak = 0;
                    }
                }
                (other, _) => return Some(other),
            }
        }
    }

    fn iterate(&mut self, cost: &[f64], bland: bool) -> (Step, f64) {
        let tol = self.opts.optimality_tol;
        let y = self.duals(cost);

        // Pricing.
        let mut entering: Option<(usize, f64)> = None;
        for j in 0..self.n_cols() {
            if self.status[j] == Status::Basic || self.lb[j] == self.ub[j] {
                continue;
            }
            let d = self.reduced_cost(cost, &y, j);
            let eligible = match self.status[j] {
                _ if self.is_free(j) => d.abs() > tol,
                Status::Lower => d < -tol,
                Status::Upper => d > tol,
                Status::Basic => false,
            };
            if !eligible {
                continue;
            }
            if bland {
                entering = Some((j, d));
                break;
            }
            if entering.is_none_or(|(_, best)| d.abs() > best.abs()) {
                entering = Some((j, d));
            }
        }
        let Some((q, d)) = entering else {
            return (Step::Optimal, 0.0);
        };

        let alpha = self.ftran(q);
        let dir = if d < 0.0 { 1.0 } else { -1.0 };

        // Ratio test.
        let mut step = self.ub[q] - self.lb[q];
        let mut leave: Option<(usize, bool)> = None;
        let mut leave_pivot = 0.0f64;
        for (r, &al) in alpha.iter().enumerate() {
            let rate = dir * al;
            if rate.abs() <= self.opts.pivot_tol {
                continue;
            }
            let b = self.basis[r];
            let (limit, to_upper) = if rate > 0.0 {
                if !self.lb[b].is_finite() {
                    continue;
                }
                (((self.x[b] - self.lb[b]) / rate).max(0.0), false)
            } else {
                if !self.ub[b].is_finite() {
                    continue;
                }
                (((self.ub[b] - self.x[b]) / -rate).max(0.0), true)
            };
            let better = if limit < step - 1e-12 {
                true
            } else if limit <= step + 1e-12 && leave.is_some() {
                if bland {
                    b < self.basis[leave.unwrap().0]
                } else {
                    al.abs() > leave_pivot
                }
            } else {
                false
            };
            if better {
                step = limit;
                leave = Some((r, to_upper));
                leave_pivot = al.abs();
            }
        }
        if !step.is_finite() {
            return (Step::Unbounded, f64::INFINITY);
        }

        self.iterations += 1;
        self.x[q] += dir * step;
        for (r, &al) in alpha.iter().enumerate() {
            if al != 0.0 {
                let b = self.basis[r];
                self.x[b] -= dir * step * al;
            }
        }
        match leave {
            None => {
                // Bound flip.
                self.status[q] = if self.status[q] == Status::Lower { Status::Upper } else { Status::Lower };
                self.x[q] = if self.status[q] == Status::Lower { self.lb[q] } else { self.ub[q] };
            }
            Some((r, to_upper)) => self.pivot(r, q, &alpha, to_upper),
        }
        (Step::Pivoted, step)
    }

    /// Recomputes the inverse from scratch and the basic values from the
    /// nonbasic ones; false when the basis is singular.
    fn refactor(&mut self) -> bool {
        self.since_refactor = 0;
        let m = self.m;
        if m == 0 {
            self.recompute_basics();
            return true;
        }
        let Some((free_rows, own)) = self.factor() else {
            return false;
        };
        // Row k of the fresh inverse is nonzero only on the uncovered rows
        // and, for a logical column, on the row it covers.
        let resid = self.residual();
        self.shifted.clear();
        for k in 0..m {
            let row = &self.binv[k * m..(k + 1) * m];
            let (mut norm, mut value) = (0.0, 0.0);
            for &c in &free_rows {
                norm += row[c] * row[c];
                value += row[c] * resid[c];
            }
            if let Some(c) = own[k] {
                norm += row[c] * row[c];
                value += row[c] * resid[c];
            }
            self.weights[k] = norm;
            self.x[self.basis[k]] = value;
        }
        true
    }

    /// `b - N x_N`.
    fn residual(&self) -> Vec<f64> {
        let mut resid = self.rhs.clone();
        for j in 0..self.n_cols() {
            if self.status[j] != Status::Basic && self.x[j] != 0.0 {
                let xj = self.x[j];
                for (r, v) in self.column(j) {
                    resid[r] -= v * xj;
                }
            }
        }
        resid
    }

    fn recompute_basics(&mut self) {
        self.shifted.clear();
        let m = self.m;
        let resid = self.residual();
        for k in 0..m {
            let row = &self.binv[k * m..(k + 1) * m];
            let v: f64 = row.iter().zip(&resid).map(|(b, r)| b * r).sum();
            self.x[self.basis[k]] = v;
        }
    }

    /// Rebuilds the basis inverse in place; returns the rows no logical
    /// column covers and, per basic position, the row its logical covers.
    /// Logical columns are unit vectors, so only the block of structural
    /// columns on the uncovered rows needs a dense inverse; the logical rows
    /// follow by substitution. Leaves the inverse untouched when singular.
    fn factor(&mut self) -> Option<(Vec<usize>, Vec<Option<usize>>)> {
        let m = self.m;
        const NONE: usize = usize::MAX;
        let mut covered = vec![NONE; m];
        let mut own = vec![None; m];
        let mut structural = Vec::new();
        for (k, &b) in self.basis.iter().enumerate() {
            if b < self.n {
                structural.push(k);
            } else {
                let (r, _) = self.logical[b - self.n];
                if covered[r] != NONE {
                    return None;
                }
                covered[r] = k;
                own[k] = Some(r);
            }
        }
        let free_rows: Vec<usize> = (0..m).filter(|&r| covered[r] == NONE).collect();
        let s = structural.len();
        if free_rows.len() != s {
            return None;
        }
        let mut slot = vec![NONE; m];
        for (i, &r) in free_rows.iter().enumerate() {
            slot[r] = i;
        }
        let mut block = vec![0.0; s * s];
        for (c, &k) in structural.iter().enumerate() {
            for &(r, v) in &self.cols[self.basis[k]] {
                if slot[r] != NONE {
                    block[slot[r] * s + c] = v;
                }
            }
        }
        let block_inv = invert(block, s)?;
        let binv = &mut self.binv;
        binv.clear();
        binv.resize(m * m, 0.0);
        for (c, &k) in structural.iter().enumerate() {
            for (i, &r) in free_rows.iter().enumerate() {
                binv[k * m + r] = block_inv[c * s + i];
            }
        }
        for r in 0..m {
            let k = covered[r];
            if k != NONE {
                binv[k * m + r] = 1.0 / self.logical[self.basis[k] - self.n].1;
            }
        }
        for &kc in &structural {
            for &(r, v) in &self.cols[self.basis[kc]] {
                let k = covered[r];
                if k == NONE {
                    continue;
                }
                let f = v / self.logical[self.basis[k] - self.n].1;
                for &fr in &free_rows {
                    binv[k * m + fr] -= f * binv[kc * m + fr];
                }
            }
        }
        Some((free_rows, own))
    }
}

enum ColumnIter<'c> {
    Sparse(std::slice::Iter<'c, (usize, f64)>),
    Unit(Option<(usize, f64)>),
}

impl Iterator for ColumnIter<'_> {
    type Item = (usize, f64);

    fn next(&mut self) -> Option<(usize, f64)> {
        match self {
            ColumnIter::Sparse(it) => it.next().copied(),
            ColumnIter::Unit(v) => v.take(),
        }
    }
}

/// Gauss-Jordan inverse with partial pivoting; `None` when singular.
fn invert(mut a: Vec<f64>, m: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; m * m];
    for k in 0..m {
        inv[k * m + k] = 1.0;
    }
    for c in 0..m {
        let piv_row = (c..m).max_by(|&p, &q| a[p * m + c].abs().total_cmp(&a[q * m + c].abs()))?;
        if a[piv_row * m + c].abs() < 1e-12 {
            return None;
        }
        if piv_row != c {
            for k in 0..m {
                a.swap(piv_row * m + k, c * m + k);
                inv.swap(piv_row * m + k, c * m + k);
            }
        }
        let p = a[c * m + c];
        for k in 0..m {
            a[c * m + k] /= p;
            inv[c * m + k] /= p;
        }
        // Columns left of `c` are already unit vectors; only the nonzeros of
        // the pivot rows matter.
        let a_nz: Vec<usize> = (c..m).filter(|&k| a[c * m + k] != 0.0).collect();
        let inv_nz: Vec<usize> = (0..m).filter(|&k| inv[c * m + k] != 0.0).collect();
        for r in 0..m {
            if r == c {
                continue;
            }
            let f = a[r * m + c];
            if f == 0.0 {
                continue;
            }
            for &k in &a_nz {
                a[r * m + k] -= f * a[c * m + k];
            }
            for &k in &inv_nz {
                inv[r * m + k] -= f * inv[c * m + k];
            }
        }
    }
    Some(inv)
}
