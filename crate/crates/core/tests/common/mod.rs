#![allow(dead_code)]

use lotdesign::{DemandTable, Instance, LotType, Norm, SizeSet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Bounds for [`random_instance`].
#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub branches: usize,
    pub sizes: usize,
    pub lots: usize,
    pub max_m: u32,
    pub max_k: usize,
    pub max_piece: u32,
}

pub const TINY: Shape = Shape { branches: 5, sizes: 3, lots: 6, max_m: 3, max_k: 3, max_piece: 3 };

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random instance within `shape`. The capacity interval is drawn inside the
/// range of achievable totals, so most instances are feasible.
pub fn random_instance(rng: &mut impl Rng, shape: Shape, norm: Norm) -> Instance {
    let branches = rng.random_range(1..=shape.branches);
    let sizes = rng.random_range(1..=shape.sizes);
    let target_lots = rng.random_range(1..=shape.lots);

    let base = shape.max_piece + 1;
    let mut all: Vec<Vec<u32>> = (1..base.pow(sizes as u32))
        .map(|mut code| {
            let mut lot = vec![0u32; sizes];
            for slot in lot.iter_mut().rev() {
                *slot = code % base;
                code /= base;
            }
            lot
        })
        .collect();
    all.shuffle(rng);
    let lots: Vec<LotType> = all.into_iter().take(target_lots).map(LotType::new).collect();

    let max_m = rng.random_range(1..=shape.max_m);
    let k = rng.random_range(1..=shape.max_k);
    let rows: Vec<Vec<f64>> = (0..branches)
        .map(|_| {
            (0..sizes)
                .map(|_| {
                    // Mix of integral, one-decimal and zero demands.
                    match rng.random_range(0..4) {
                        0 => 0.0,
                        1 => f64::from(rng.random_range(0..=6u32)),
                        _ => f64::from(rng.random_range(0..=60u32)) / 10.0,
                    }
                })
                .collect()
        })
        .collect();

    let min_lot = lots.iter().map(LotType::pieces).min().unwrap();
    let max_lot = lots.iter().map(LotType::pieces).max().unwrap();
    let lo_bound = branches as u64 * min_lot;
    let hi_bound = branches as u64 * u64::from(max_m) * max_lot;
    let a = rng.random_range(lo_bound..=hi_bound);
    let b = rng.random_range(lo_bound..=hi_bound);
    let (cap_lo, cap_hi) = if a <= b { (a, b) } else { (b, a) };

    Instance {
        branches: (0..branches).map(|b| format!("b{b}")).collect(),
        sizes: SizeSet::new((0..sizes).map(|s| format!("s{s}"))),
        demand: DemandTable::from_rows(rows).unwrap(),
        lots,
        k,
        max_multiplicity: max_m,
        cap_lo,
        cap_hi,
        norm,
    }
}

/// Independent objective: plain triple loop over branches and sizes.
pub fn naive_objective(instance: &Instance, plan: &lotdesign::Plan) -> f64 {
    let mut total = 0.0;
    for (b, a) in plan.assignments().iter().enumerate() {
        let lot = instance.lots[a.lot].pieces_per_size();
        let diffs: Vec<f64> = instance
            .demand
            .row(b)
            .iter()
            .zip(lot)
            .map(|(&d, &l)| (d - f64::from(a.multiplicity) * f64::from(l)).abs())
            .collect();
        total += match instance.norm {
            Norm::L1 => diffs.iter().sum::<f64>(),
            Norm::L2 => diffs.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::Linf => diffs.iter().cloned().fold(0.0, f64::max),
        };
    }
    total
}

/// Checks every model constraint on a solver's output.
pub fn assert_conforms(instance: &Instance, solution: &lotdesign::Solution) {
    let eval = lotdesign::evaluate_plan(instance, &solution.plan).expect("plan evaluates");
    assert_eq!(solution.plan.len(), instance.branch_count(), "one assignment per branch");
    assert!(eval.capacity_ok, "capacity: {} not in [{}, {}]", eval.total_pieces, instance.cap_lo, instance.cap_hi);
    assert!(eval.lot_budget_ok, "{} lot-types used, k = {}", eval.distinct_lots, instance.k);
    for a in solution.plan.assignments() {
        assert!((1..=instance.max_multiplicity).contains(&a.multiplicity));
    }
    assert_eq!(eval.objective, solution.objective);
    assert_eq!(eval.total_pieces, solution.total_pieces);
}

/// Proptest settings without on-disk failure persistence.
pub fn config(cases: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config { failure_persistence: None, ..proptest::test_runner::Config::with_cases(cases) }
}
