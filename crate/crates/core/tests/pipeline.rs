//! End-to-end runs through the public API: base file to instances to solvers,
//! checked against the oracle and the independent packing checker.

use std::time::Duration;

use gmspp_core::bench::{read_csv, write_csv, BenchRow};
use gmspp_core::bendm::{master_with_cuts, solve, verify_packing, Method, SolveConfig};
use gmspp_core::formulations::{lp_bigm_bound, lp_pc_bound};
use gmspp_core::instance::{generate_gmspp, load_instance, parse_spp, save_instance, CostScheme, Instance, Item, Strip};
use gmspp_core::mip::{to_f64, write_mps, MipStatus};
use gmspp_core::normal_positions::NormalPositionTable;
use gmspp_core::oracle::solve_exact;
use gmspp_core::Rational;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BASE: &str = "6\n6\n1 3 2\n2 2 3\n3 4 1\n4 1 4\n5 2 2\n6 3 3\n";

#[test]
fn derived_instances_solve_to_the_oracle_optimum() {
    let base = parse_spp("tiny", BASE).unwrap();
    for m in [2, 3] {
        for scheme in CostScheme::ALL {
            let inst = generate_gmspp(&base, m, scheme).unwrap();
            let inst = load_instance(&save_instance(&inst)).unwrap();
            let opt = solve_exact(&inst).unwrap().objective;
            let rep = solve(Method::BendM, &inst, &SolveConfig::default()).unwrap();
            assert_eq!(rep.status, MipStatus::Optimal, "{}", inst.name);
            assert_eq!(rep.objective(), Some(opt), "{}", inst.name);
            assert_eq!(verify_packing(&inst, rep.packing.as_ref().unwrap()), Ok(opt));
            assert!(lp_pc_bound(&inst, &NormalPositionTable::build(&inst)).unwrap() <= opt);
            assert!(lp_bigm_bound(&inst).unwrap() <= to_f64(opt) + 1e-6);
        }
    }
}

#[test]
fn bench_rows_survive_a_csv_round_trip() {
    let base = parse_spp("tiny", BASE).unwrap();
    let inst = generate_gmspp(&base, 2, CostScheme::Economies).unwrap();
    let rows: Vec<BenchRow> = [Method::BigMLe, Method::BendM]
        .into_iter()
        .map(|m| BenchRow::from_report(&inst, &solve(m, &inst, &SolveConfig::default()).unwrap()))
        .collect();
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).unwrap();
    let back = read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(back[0].obj_value(), back[1].obj_value());
    assert_eq!(back[1].gap_value(), Some(0.0));
}

/// Cuts a square into `n` rectangles by random guillotine splits.
fn perfect_packing(rng: &mut ChaCha8Rng, side: usize, n: usize) -> Vec<(usize, usize)> {
    let mut parts = vec![(side, side)];
    while parts.len() < n {
        let k = rng.gen_range(0..parts.len());
        let (w, h) = parts[k];
        if w < 20 && h < 20 {
            continue;
        }
        let vertical = if w < 20 { false } else if h < 20 { true } else { rng.gen_bool(0.5) };
        parts.swap_remove(k);
        if vertical {
            let c = rng.gen_range(10..=w - 10);
            parts.extend([(c, h), (w - c, h)]);
        } else {
            let c = rng.gen_range(10..=h - 10);
            parts.extend([(w, c), (w, h - c)]);
        }
    }
    parts
}

#[test]
fn perfect_packing_of_a_square_is_found_at_its_area_bound() {
    // 17 items exactly tiling 200 x 200; two strips (200 and 240 wide) at unit cost.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let parts = perfect_packing(&mut rng, 200, 17);
    let text: String = std::iter::once("17\n200\n".to_string())
        .chain(parts.iter().enumerate().map(|(j, (w, h))| format!("{j} {w} {h}\n")))
        .collect();
    let inst = generate_gmspp(&parse_spp("square", &text).unwrap(), 2, CostScheme::Proportional).unwrap();
    let area = Rational::from_integer(40000);
    assert_eq!(lp_pc_bound(&inst, &NormalPositionTable::build(&inst)).unwrap(), area);
    let rep = solve(Method::BendM, &inst, &SolveConfig::with_time_limit(Duration::from_secs(300))).unwrap();
    assert_eq!(rep.status, MipStatus::Optimal);
    assert_eq!(rep.objective(), Some(area));
    assert_eq!(verify_packing(&inst, rep.packing.as_ref().unwrap()), Ok(area));
    let mps = write_mps(&master_with_cuts(&inst, &rep.cuts));
    assert!(mps.starts_with("NAME") && mps.trim_end().ends_with("ENDATA"));
}

fn small_instance() -> impl Strategy<Value = Instance> {
    (1usize..=2, 3usize..=8, prop::collection::vec((1usize..=4, 1usize..=4), 2..=4), 0usize..3).prop_map(
        |(m, base, dims, scheme)| {
            let widths = if m == 1 { vec![base] } else { vec![base, base + 2] };
            let costs = CostScheme::ALL[scheme].costs(m);
            let strips = widths.iter().zip(costs).map(|(&w, c)| Strip::new(w, c)).collect();
            let items = dims.iter().map(|&(w, h)| Item::new(w.min(base), h)).collect();
            Instance::new("prop", items, strips).unwrap()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_method_reaches_the_oracle(inst in small_instance()) {
        let opt = solve_exact(&inst).unwrap().objective;
        for method in [Method::BendM, Method::BigM, Method::BigMLe] {
            let rep = solve(method, &inst, &SolveConfig::default()).unwrap();
            prop_assert_eq!(rep.objective(), Some(opt), "{}", method.tag());
            prop_assert!(rep.lower_bound <= to_f64(opt) + 1e-6);
        }
    }
}
