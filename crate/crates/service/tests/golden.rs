//! The golden solution of the tiny fixture is the brute-force optimum, and
//! that optimum is unique.

use lotdesign::io::{parse_instance, SolutionDocument};
use lotdesign::model::approx_eq;
use lotdesign::{brute_force, evaluate_plan, Assignment, Plan};
use serde::{Deserialize, Serialize};

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct GoldenBranch {
    branch_id: String,
    lot_index: usize,
    multiplicity: u32,
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct Golden {
    objective: f64,
    total_pieces: u64,
    branches: Vec<GoldenBranch>,
}

const GOLDEN_PATH: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/tiny.golden.json");

#[test]
fn golden_is_the_unique_brute_force_optimum() {
    let instance = parse_instance(include_str!("fixtures/tiny.json")).unwrap();
    let best = brute_force(&instance).unwrap();
    let doc = SolutionDocument::new(&instance, &best).unwrap();
    let golden = Golden {
        objective: doc.objective,
        total_pieces: doc.total_pieces,
        branches: doc
            .branches
            .iter()
            .map(|b| GoldenBranch { branch_id: b.branch_id.clone(), lot_index: b.lot_index, multiplicity: b.multiplicity })
            .collect(),
    };
    if std::env::var_os("REGENERATE_GOLDEN").is_some() {
        std::fs::write(GOLDEN_PATH, serde_json::to_string_pretty(&golden).unwrap() + "\n").unwrap();
    }
    let stored: Golden = serde_json::from_str(&std::fs::read_to_string(GOLDEN_PATH).unwrap()).unwrap();
    assert_eq!(stored, golden);

    // Count optimal plans over every (lot, multiplicity) choice per branch.
    let options: Vec<(usize, u32)> = (0..instance.lots.len())
        .flat_map(|l| (1..=instance.max_multiplicity).map(move |m| (l, m)))
        .collect();
    let n = options.len();
    let mut optimal = 0;
    for code in 0..n.pow(instance.branch_count() as u32) {
        let mut c = code;
        let plan = Plan::new(
            (0..instance.branch_count())
                .map(|_| {
                    let (l, m) = options[c % n];
                    c /= n;
                    Assignment::new(l, m)
                })
                .collect(),
        );
        let eval = evaluate_plan(&instance, &plan).unwrap();
        if eval.feasible() && approx_eq(eval.objective, best.objective) {
            optimal += 1;
        }
    }
    assert_eq!(optimal, 1, "the fixture should have a unique optimum");
}
