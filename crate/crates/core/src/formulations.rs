//! Model builders: the big-M MIP, the normal-position master, and the LP
//! bounds derived from them.

use num_traits::{One, Zero};
use thiserror::Error;

use crate::instance::Instance;
use crate::mip::{solve_lp, Constraint, LinearModel, LpStatus, Sense, VarId};
use crate::normal_positions::NormalPositionTable;
use crate::Rational;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BoundError {
    #[error("LP relaxation ended with status {0:?}")]
    Lp(LpStatus),
}

fn int(v: usize) -> Rational {
    Rational::from_integer(v as i64)
}

/// Variable handles of the big-M model. Per-item vectors are indexed `[j][i]`.
#[derive(Debug, Clone)]
pub struct BigMVarMap {
    pub x: Vec<Vec<Option<VarId>>>,
    pub y: Vec<Vec<Option<VarId>>>,
    pub z: Vec<Vec<Option<VarId>>>,
    /// `left[j][k]`: item `j` lies left of item `k`. `None` on the diagonal.
    pub left: Vec<Vec<Option<VarId>>>,
    /// `below[j][k]`: item `j` lies below item `k`.
    pub below: Vec<Vec<Option<VarId>>>,
    pub height: Vec<VarId>,
    pub big_m_x: usize,
    pub big_m_y: usize,
}

pub fn build_bigm(inst: &Instance) -> (LinearModel, BigMVarMap) {
    let n = inst.n_items();
    let m = inst.n_strips();
    let mx = inst.max_strip_width();
    let my = inst.total_height();
    let mut model = LinearModel::new(format!("{}_bigm", inst.name));
    let zero = Rational::zero();

    let height: Vec<VarId> = inst
        .strips
        .iter()
        .enumerate()
        .map(|(i, s)| model.add_var(format!("H_{i}"), zero, None, false, s.height_cost()).expect("unique"))
        .collect();

    let mut x = vec![vec![None; m]; n];
    let mut y = vec![vec![None; m]; n];
    let mut z = vec![vec![None; m]; n];
    for j in 0..n {
        for i in inst.feasible_strips(j) {
            x[j][i] = Some(model.add_var(format!("x_{i}_{j}"), zero, None, false, zero).expect("unique"));
            y[j][i] = Some(model.add_var(format!("y_{i}_{j}"), zero, None, false, zero).expect("unique"));
            z[j][i] = Some(model.add_binary(format!("z_{i}_{j}"), zero).expect("unique"));
        }
    }
    let mut left = vec![vec![None; n]; n];
    let mut below = vec![vec![None; n]; n];
    for j in 0..n {
        for k in 0..n {
            if j != k {
                left[j][k] = Some(model.add_binary(format!("l_{j}_{k}"), zero).expect("unique"));
                below[j][k] = Some(model.add_binary(format!("b_{j}_{k}"), zero).expect("unique"));
            }
        }
    }

    let one = Rational::one();
    let add = |model: &mut LinearModel, name: String, terms: Vec<(VarId, Rational)>, sense, rhs| {
        model.add_constraint(Constraint::new(name, terms, sense, rhs)).expect("valid row");
    };

    for j in 0..n {
        let it = inst.items[j];
        for i in inst.feasible_strips(j) {
            let (xv, yv, zv) = (x[j][i].unwrap(), y[j][i].unwrap(), z[j][i].unwrap());
            let wi = inst.strips[i].width;
            // x + w_j <= W_i
            add(&mut model, format!("fit_{i}_{j}"), vec![(xv, one)], Sense::Le, int(wi - it.w));
            // y + h_j <= H_i + h_j (1 - z)
            add(
                &mut model,
                format!("top_{i}_{j}"),
                vec![(yv, one), (height[i], -one), (zv, int(it.h))],
                Sense::Le,
                zero,
            );
            // x <= W_i z and y <= M_y z
            add(&mut model, format!("xon_{i}_{j}"), vec![(xv, one), (zv, -int(wi))], Sense::Le, zero);
            add(&mut model, format!("yon_{i}_{j}"), vec![(yv, one), (zv, -int(my))], Sense::Le, zero);
        }
        let terms = inst.feasible_strips(j).into_iter().map(|i| (z[j][i].unwrap(), one)).collect();
        add(&mut model, format!("assign_{j}"), terms, Sense::Eq, one);
    }

    for j in 0..n {
        for k in 0..n {
            if j == k {
                continue;
            }
            let (wj, hj) = (inst.items[j].w, inst.items[j].h);
            let (l, b) = (left[j][k].unwrap(), below[j][k].unwrap());
            for i in 0..m {
                let (Some(zj), Some(zk)) = (z[j][i], z[k][i]) else { continue };
                // x_ij + w_j <= x_ik + M_x (3 - l_jk - z_ij - z_ik)
                add(
                    &mut model,
                    format!("sepx_{i}_{j}_{k}"),
                    vec![
                        (x[j][i].unwrap(), one),
                        (x[k][i].unwrap(), -one),
                        (l, int(mx)),
                        (zj, int(mx)),
                        (zk, int(mx)),
                    ],
                    Sense::Le,
                    int(3 * mx) - int(wj),
                );
                add(
                    &mut model,
                    format!("sepy_{i}_{j}_{k}"),
                    vec![
                        (y[j][i].unwrap(), one),
                        (y[k][i].unwrap(), -one),
                        (b, int(my)),
                        (zj, int(my)),
                        (zk, int(my)),
                    ],
                    Sense::Le,
                    int(3 * my) - int(hj),
                );
            }
            if j < k {
                let terms = vec![
                    (l, one),
                    (left[k][j].unwrap(), one),
                    (b, one),
                    (below[k][j].unwrap(), one),
                ];
                add(&mut model, format!("disj_{j}_{k}"), terms, Sense::Eq, one);
            }
        }
    }

    let map = BigMVarMap { x, y, z, left, below, height, big_m_x: mx, big_m_y: my };
    (model, map)
}

/// Variable handles of the master model.
#[derive(Debug, Clone)]
pub struct MasterVarMap {
    /// `x[i][j][k]` is the variable for the `k`-th normal position of item `j` on strip `i`.
    pub x: Vec<Vec<Vec<VarId>>>,
    pub height: Vec<VarId>,
}

impl MasterVarMap {
    pub fn x_var(&self, table: &NormalPositionTable, i: usize, j: usize, p: usize) -> Option<VarId> {
        table.position_index(i, j, p).map(|k| self.x[i][j][k])
    }

    /// `z_ij = sum_p x_ijp` evaluated at `values`.
    pub fn assignment(&self, values: &[f64], i: usize, j: usize) -> f64 {
        self.x[i][j].iter().map(|&v| values[v]).sum()
    }

    /// Strip and position of every item at an integral point.
    pub fn placements(&self, table: &NormalPositionTable, values: &[f64]) -> Vec<Option<(usize, usize)>> {
        let n = table.n_items();
        let mut out = vec![None; n];
        for (i, per_item) in self.x.iter().enumerate() {
            for (j, vars) in per_item.iter().enumerate() {
                for (k, &v) in vars.iter().enumerate() {
                    if values[v] > 0.5 {
                        out[j] = Some((i, table.positions(i, j)[k]));
                    }
                }
            }
        }
        out
    }
}

/// Assignment and column-load master without any Benders rows.
pub fn build_master(inst: &Instance, table: &NormalPositionTable) -> (LinearModel, MasterVarMap) {
    let n = inst.n_items();
    let zero = Rational::zero();
    let one = Rational::one();
    let mut model = LinearModel::new(format!("{}_master", inst.name));
    let height: Vec<VarId> = inst
        .strips
        .iter()
        .enumerate()
        .map(|(i, s)| model.add_var(format!("H_{i}"), zero, None, false, s.height_cost()).expect("unique"))
        .collect();
    let mut x = vec![vec![Vec::new(); n]; inst.n_strips()];
    for (i, per_item) in x.iter_mut().enumerate() {
        for (j, vars) in per_item.iter_mut().enumerate() {
            for &p in table.positions(i, j) {
                vars.push(model.add_binary(format!("x_{i}_{j}_{p}"), zero).expect("unique"));
            }
        }
    }
    for j in 0..n {
        let terms = (0..inst.n_strips()).flat_map(|i| x[i][j].iter().map(|&v| (v, one))).collect();
        model.add_constraint(Constraint::new(format!("assign_{j}"), terms, Sense::Eq, one)).expect("valid row");
    }
    for (i, strip) in inst.strips.iter().enumerate() {
        for q in 0..strip.width {
            let mut terms = Vec::new();
            for j in 0..n {
                if !inst.is_feasible(i, j) {
                    continue;
                }
                let hj = int(inst.items[j].h);
                for &p in table.coverage_range(i, j, q) {
                    let k = table.position_index(i, j, p).expect("normal position");
                    terms.push((x[i][j][k], hj));
                }
            }
            if terms.is_empty() {
                continue;
            }
            terms.push((height[i], -one));
            model
                .add_constraint(Constraint::new(format!("load_{i}_{q}"), terms, Sense::Le, zero))
                .expect("valid row");
        }
    }
    (model, MasterVarMap { x, height })
}

/// Best rational with a small denominator within round-off of `value`;
/// otherwise a value rounded down at 1e-6 resolution.
pub fn rationalize(value: f64) -> Rational {
    let tol = 1e-9 * value.abs().max(1.0);
    // Stern-Brocot style continued fraction expansion.
    let (mut h0, mut h1, mut k0, mut k1) = (0i64, 1i64, 1i64, 0i64);
    let mut rest = value;
    for _ in 0..20 {
        let a = rest.floor();
        if a.abs() > 1e15 {
            break;
        }
        let a = a as i64;
        let (h2, k2) = (a.saturating_mul(h1).saturating_add(h0), a.saturating_mul(k1).saturating_add(k0));
        if k2 > 10_000 {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if (h1 as f64 / k1 as f64 - value).abs() <= tol {
            return Rational::new(h1, k1);
        }
        let frac = rest - rest.floor();
        if frac == 0.0 {
            break;
        }
        rest = 1.0 / frac;
    }
    Rational::new((value * 1e6).floor() as i64, 1_000_000)
}

/// Value of the LP relaxation of the master (no cuts).
pub fn lp_pc_bound(inst: &Instance, table: &NormalPositionTable) -> Result<Rational, BoundError> {
    let (model, _) = build_master(inst, table);
    let res = solve_lp(&model);
    match res.status {
        LpStatus::Optimal => Ok(rationalize(res.objective)),
        s => Err(BoundError::Lp(s)),
    }
}

/// Value of the LP relaxation of the big-M model.
pub fn lp_bigm_bound(inst: &Instance) -> Result<f64, BoundError> {
    let (model, _) = build_bigm(inst);
    let res = solve_lp(&model);
    match res.status {
        LpStatus::Optimal => Ok(res.objective),
        s => Err(BoundError::Lp(s)),
    }
}

/// Adds `sum_j c_j x_j >= value` using the model's own objective.
pub fn inject_lower_bound(model: &LinearModel, value: Rational) -> LinearModel {
    let mut out = model.clone();
    let terms = model.objective_terms();
    out.add_constraint(Constraint::new("objective_lower_bound", terms, Sense::Ge, value))
        .expect("fresh row name");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Item, Strip};
    use crate::mip::{solve_mip, MipOptions, MipStatus};

    fn inst(items: &[(usize, usize)], strips: &[(usize, i64)]) -> Instance {
        Instance::new(
            "t",
            items.iter().map(|&(w, h)| Item::new(w, h)).collect(),
            strips.iter().map(|&(w, c)| Strip::new(w, Rational::from_integer(c))).collect(),
        )
        .unwrap()
    }

    fn mip_obj(model: &LinearModel) -> f64 {
        let res = solve_mip(model, None, &MipOptions::default()).unwrap();
        assert_eq!(res.status, MipStatus::Optimal);
        res.objective.unwrap()
    }

    #[test]
    fn bigm_single_item() {
        let (model, _) = build_bigm(&inst(&[(3, 4)], &[(5, 1)]));
        assert!((mip_obj(&model) - 20.0).abs() < 1e-6);
    }

    #[test]
    fn bigm_full_width_items_stack() {
        let (model, _) = build_bigm(&inst(&[(5, 2), (5, 3)], &[(5, 1)]));
        assert!((mip_obj(&model) - 25.0).abs() < 1e-6);
    }

    #[test]
    fn bigm_variable_counts() {
        let i = inst(&[(3, 1), (6, 2), (2, 2)], &[(5, 1), (6, 1)]);
        let (model, map) = build_bigm(&i);
        let pairs: usize = (0..3).map(|j| i.feasible_strips(j).len()).sum();
        assert_eq!(pairs, 5);
        let count = |prefix: &str| model.vars().iter().filter(|v| v.name.starts_with(prefix)).count();
        assert_eq!(count("x_"), pairs);
        assert_eq!(count("y_"), pairs);
        assert_eq!(count("z_"), pairs);
        assert_eq!(count("l_"), 6);
        assert_eq!(count("b_"), 6);
        assert_eq!(count("H_"), 2);
        assert_eq!(model.n_vars(), 3 * pairs + 12 + 2);
        assert_eq!((map.big_m_x, map.big_m_y), (6, 5));
    }

    #[test]
    fn master_single_item() {
        let i = inst(&[(3, 4)], &[(5, 1)]);
        let table = NormalPositionTable::build(&i);
        let (model, map) = build_master(&i, &table);
        let res = solve_mip(&model, None, &MipOptions::default()).unwrap();
        assert!((res.objective.unwrap() - 20.0).abs() < 1e-6);
        assert_eq!(res.values.unwrap()[map.x_var(&table, 0, 0, 0).unwrap()], 1.0);
        assert_eq!(lp_pc_bound(&i, &table).unwrap(), Rational::from_integer(20));
    }

    #[test]
    fn master_two_items_must_stack() {
        // Positions {0, 3}... capped at W - w = 2, so only {0}: both at 0.
        let i = inst(&[(3, 2), (3, 2)], &[(5, 1)]);
        let table = NormalPositionTable::build(&i);
        assert_eq!(table.positions(0, 0), &[0]);
        let (model, _) = build_master(&i, &table);
        assert!((mip_obj(&model) - 20.0).abs() < 1e-6);
    }

    #[test]
    fn injected_bound_keeps_optimum() {
        let i = inst(&[(2, 3), (3, 2), (2, 2)], &[(4, 1), (5, 1)]);
        let (model, _) = build_bigm(&i);
        let plain = mip_obj(&model);
        let table = NormalPositionTable::build(&i);
        let lb = lp_pc_bound(&i, &table).unwrap();
        assert!(crate::mip::solve_lp(&model).objective <= plain + 1e-6);
        let injected = inject_lower_bound(&model, lb);
        assert!((mip_obj(&injected) - plain).abs() < 1e-6);
        let zero = inject_lower_bound(&model, Rational::zero());
        assert!((mip_obj(&zero) - plain).abs() < 1e-6);
    }

    #[test]
    fn rationalize_recovers_simple_values() {
        assert_eq!(rationalize(40000.000000001), Rational::from_integer(40000));
        assert_eq!(rationalize(39999.99999999), Rational::from_integer(40000));
        assert_eq!(rationalize(52.8), Rational::new(264, 5));
        assert_eq!(rationalize(1.0 / 3.0), Rational::new(1, 3));
    }
}
