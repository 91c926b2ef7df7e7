mod common;

use std::collections::HashMap;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use lotdesign::demand::{
    build_histories, estimate_demand, export_sales, ingest_deliveries, ingest_sales, normalize_history,
    scale_to_capacity, Alignment, EstimateOptions, NormalizeIssue, ProductHistory, SaleEvent, SalesRecord,
    Weighting,
};
use lotdesign::model::approx_eq;
use lotdesign::{DemandTable, SizeSet};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

const FIXTURE_SALES: &str = include_str!("fixtures/three_products_sales.csv");
const FIXTURE_DELIVERIES: &str = include_str!("fixtures/three_products_deliveries.csv");

fn fixture() -> (Vec<ProductHistory>, Vec<String>, SizeSet) {
    let sales = ingest_sales(FIXTURE_SALES.as_bytes()).unwrap();
    assert!(sales.rejects.is_empty());
    let deliveries = ingest_deliveries(FIXTURE_DELIVERIES.as_bytes()).unwrap();
    (build_histories(&sales.records, &deliveries), vec!["A".into(), "B".into()], SizeSet::new(["S", "M"]))
}

// Truncated tables, rows A and B, columns S and M:
//   P1 (cut when 5 of 10 sold, on 03-03): A = (2, 2), B = (0, 1)
//   P2 (cut when 2 of 4 sold):            A = (0, 0), B = (2, 0)
//   P3 (no delivery row, 2 of 4 sold):    A = (1, 1), B = (0, 0)
//   P4 never reaches half of 20 and is excluded.
#[test]
fn three_product_fixture_unweighted() {
    let (histories, branches, sizes) = fixture();
    let est = estimate_demand(&histories, &branches, &sizes, EstimateOptions::default()).unwrap();
    assert_eq!(est.demand.row(0), &[1.0, 1.0]);
    assert_eq!(est.demand.row(1), &[2.0 / 3.0, 1.0 / 3.0]);
    assert_eq!(est.used_products, ["P1", "P2", "P3"]);
    assert_eq!(est.observed_total_fallbacks, ["P3"]);
    assert_eq!(est.excluded.len(), 1);
    assert_eq!(est.excluded[0].product_id, "P4");
    assert_eq!(est.excluded[0].issue, NormalizeIssue::NeverHalfSold { sold: 3, delivered: 20 });
    assert_eq!(est.unmatched_quantity, 0);
}

#[test]
fn three_product_fixture_quantity_weighted() {
    // Weights are the truncated quantities 5, 2 and 2.
    let (histories, branches, sizes) = fixture();
    let options = EstimateOptions { weighting: Weighting::QuantityWeighted, ..Default::default() };
    let est = estimate_demand(&histories, &branches, &sizes, options).unwrap();
    assert_eq!(est.demand.row(0), &[12.0 / 9.0, 12.0 / 9.0]);
    assert_eq!(est.demand.row(1), &[4.0 / 9.0, 5.0 / 9.0]);
}

#[test]
fn three_product_fixture_daily_rates() {
    // Periods: P1 two days, P2 one day, P3 one day.
    let (histories, branches, sizes) = fixture();
    let options = EstimateOptions { alignment: Alignment::DailyRates, ..Default::default() };
    let est = estimate_demand(&histories, &branches, &sizes, options).unwrap();
    assert_eq!(est.demand.row(0), &[(1.0 + 0.0 + 1.0) / 3.0, (1.0 + 0.0 + 1.0) / 3.0]);
    assert_eq!(est.demand.row(1), &[2.0 / 3.0, 0.5 / 3.0]);
}

fn day(n: i64) -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2024, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap() + Duration::hours(n)
}

fn history_strategy() -> impl Strategy<Value = ProductHistory> {
    (prop::collection::vec((0i64..200, 1u32..10), 1..40), prop::option::of(1u64..400)).prop_map(
        |(events, delivered)| {
            let mut events: Vec<SaleEvent> = events
                .into_iter()
                .map(|(t, q)| SaleEvent { timestamp: day(t), branch_id: "b".into(), size: "s".into(), quantity: q })
                .collect();
            events.sort_by_key(|e| e.timestamp);
            ProductHistory { product_id: "p".into(), delivered_total: delivered, events }
        },
    )
}

proptest! {
    #![proptest_config(common::config(512))]

    #[test]
    fn half_point_prefix_property(history in history_strategy()) {
        let sold = history.sold();
        match normalize_history(&history) {
            Ok(norm) => {
                let delivered = history.delivered_total.unwrap_or(sold);
                let n = norm.events.len();
                prop_assert_eq!(&norm.events[..], &history.events[..n]);
                let cumulative = norm.quantity();
                prop_assert!(2 * cumulative >= delivered);
                let before = cumulative - u64::from(norm.events[n - 1].quantity);
                prop_assert!(2 * before < delivered);
                prop_assert_eq!(norm.half_point, norm.events[n - 1].timestamp);
                prop_assert_eq!(norm.used_observed_total, history.delivered_total.is_none());
            }
            Err(NormalizeIssue::NeverHalfSold { sold: s, delivered }) => {
                prop_assert_eq!(s, sold);
                prop_assert!(2 * sold < delivered);
            }
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn scaling_hits_interval_center(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..100.0, 3), 1..20),
        lo in 1u64..100_000,
        width in 0u64..10_000,
    ) {
        let table = DemandTable::from_rows(rows).unwrap();
        prop_assume!(table.total() > 0.0);
        let scaled = scale_to_capacity(&table, lo, lo + width).unwrap();
        let center = (2 * lo + width) as f64 / 2.0;
        prop_assert!((scaled.total() - center).abs() <= 1e-9 * center);
    }
}

fn random_records(n: usize, seed: u64) -> Vec<SalesRecord> {
    let mut r = common::rng(seed);
    (0..n)
        .map(|_| SalesRecord {
            product_id: format!("P{:03}", r.random_range(0..50)),
            branch_id: format!("B{:02}", r.random_range(0..30)),
            size: ["XS", "S", "M", "L", "XL"][r.random_range(0..5)].to_string(),
            timestamp: day(r.random_range(0..2000)) + Duration::seconds(r.random_range(0..3600)),
            quantity: r.random_range(1..6),
        })
        .collect()
}

#[test]
fn ten_thousand_row_round_trip() {
    let records = random_records(10_000, 42);
    let mut csv = Vec::new();
    export_sales(&mut csv, &records).unwrap();
    let back = ingest_sales(csv.as_slice()).unwrap();
    assert!(back.rejects.is_empty());
    assert_eq!(back.records, records);
}

#[test]
fn malformed_rows_are_rejected_with_line_numbers() {
    let text = "product_id,branch_id,size,timestamp,quantity\nP,A,S,2024-01-01,1\nP,A,S,not-a-date,1\nP,A,S,2024-01-01,0\nP,A\n";
    let ingest = ingest_sales(text.as_bytes()).unwrap();
    assert_eq!(ingest.records.len(), 1);
    let lines: Vec<u64> = ingest.rejects.iter().map(|r| r.line).collect();
    assert_eq!(lines, [3, 4, 5]);
}

#[test]
fn estimate_is_invariant_under_record_order() {
    let mut records = random_records(3_000, 7);
    let deliveries: HashMap<String, u64> = (0..50).map(|p| (format!("P{p:03}"), 90)).collect();
    let branches: Vec<String> = (0..30).map(|b| format!("B{b:02}")).collect();
    let sizes = SizeSet::new(["XS", "S", "M", "L", "XL"]);
    let estimate = |records: &[SalesRecord]| {
        estimate_demand(&build_histories(records, &deliveries), &branches, &sizes, EstimateOptions::default()).unwrap()
    };
    let base = estimate(&records);
    // Equal timestamps within a product would make the cut order-dependent.
    let mut seen = std::collections::HashSet::new();
    records.retain(|r| seen.insert((r.product_id.clone(), r.timestamp)));
    let base_unique = estimate(&records);
    records.shuffle(&mut common::rng(8));
    assert_eq!(estimate(&records), base_unique);
    assert!(base.used_products.len() + base.excluded.len() == 50);
}

#[test]
fn group1_center() {
    let table = DemandTable::from_rows(vec![vec![3.0, 1.0], vec![0.5, 7.25]]).unwrap();
    let scaled = scale_to_capacity(&table, 10_630, 11_749).unwrap();
    assert!(approx_eq(scaled.total(), 11_189.5));
}
