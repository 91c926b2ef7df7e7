//! Mean demand from historic sales.
//!
//! Each product's sales history is cut at the moment half of its delivered
//! quantity has sold, which removes the effect of a product selling out early
//! or lingering on the shelf. The truncated per-(branch, size) totals are then
//! averaged over all products of a commodity group, and the table is finally
//! scaled so its total sits at the center of the capacity interval.
//!
//! CSV schemas:
//!
//! - sales: `product_id,branch_id,size,timestamp,quantity` (ISO-8601 timestamps)
//! - deliveries: `product_id,delivered_total`

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{approx_eq, DemandTable, SizeSet};

pub const SALES_HEADER: [&str; 5] = ["product_id", "branch_id", "size", "timestamp", "quantity"];
pub const DELIVERIES_HEADER: [&str; 2] = ["product_id", "delivered_total"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SalesRecord {
    pub product_id: String,
    pub branch_id: String,
    pub size: String,
    pub timestamp: NaiveDateTime,
    pub quantity: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// 1-based line number in the source, header included.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SalesIngest {
    pub records: Vec<SalesRecord>,
    pub rejects: Vec<RejectedRow>,
}

/// Accepts RFC 3339, `YYYY-MM-DDTHH:MM:SS[.f]`, `YYYY-MM-DD HH:MM:SS` and
/// plain dates. Offsets are converted to UTC.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_utc());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

fn format_timestamp(ts: &NaiveDateTime) -> String {
    ts.format("%Y-%m-%dT%H:%M:%S%.f").to_string()
}

fn check_header(headers: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Schema(format!(
            "expected header `{}`, found `{}`",
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

/// Parse a sales CSV. Malformed rows go to the reject list.
pub fn ingest_sales(source: impl Read) -> Result<SalesIngest> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    check_header(rdr.headers()?, &SALES_HEADER)?;
    let mut out = SalesIngest::default();
    for (i, row) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                out.rejects.push(RejectedRow { line, reason: e.to_string() });
                continue;
            }
        };
        match parse_sales_row(&row) {
            Ok(record) => out.records.push(record),
            Err(reason) => out.rejects.push(RejectedRow { line, reason }),
        }
    }
    Ok(out)
}

fn parse_sales_row(row: &csv::StringRecord) -> std::result::Result<SalesRecord, String> {
    if row.len() != SALES_HEADER.len() {
        return Err(format!("expected {} fields, found {}", SALES_HEADER.len(), row.len()));
    }
    let field = |i: usize| row[i].trim();
    for (i, name) in SALES_HEADER.iter().enumerate().take(3) {
        if field(i).is_empty() {
            return Err(format!("empty {name}"));
        }
    }
    let timestamp = parse_timestamp(field(3)).ok_or_else(|| format!("bad timestamp `{}`", field(3)))?;
    let quantity: u32 = field(4)
        .parse()
        .map_err(|_| format!("bad quantity `{}`", field(4)))?;
    if quantity == 0 {
        return Err("quantity must be at least 1".into());
    }
    Ok(SalesRecord {
        product_id: field(0).to_string(),
        branch_id: field(1).to_string(),
        size: field(2).to_string(),
        timestamp,
        quantity,
    })
}

pub fn export_sales(writer: impl Write, records: &[SalesRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(SALES_HEADER)?;
    for r in records {
        wtr.write_record([
            r.product_id.as_str(),
            r.branch_id.as_str(),
            r.size.as_str(),
            &format_timestamp(&r.timestamp),
            &r.quantity.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parse a deliveries CSV into `product_id → delivered_total`.
pub fn ingest_deliveries(source: impl Read) -> Result<HashMap<String, u64>> {
    let mut rdr = csv::Reader::from_reader(source);
    check_header(rdr.headers()?, &DELIVERIES_HEADER)?;
    let mut out = HashMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let total = row[1]
            .trim()
            .parse::<u64>()
            .map_err(|_| Error::Schema(format!("line {}: bad delivered_total `{}`", i + 2, &row[1])))?;
        out.insert(row[0].trim().to_string(), total);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaleEvent {
    pub timestamp: NaiveDateTime,
    pub branch_id: String,
    pub size: String,
    pub quantity: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductHistory {
    pub product_id: String,
    pub delivered_total: Option<u64>,
    /// Chronological; same-time events keep their input order.
    pub events: Vec<SaleEvent>,
}

impl ProductHistory {
    pub fn sold(&self) -> u64 {
        self.events.iter().map(|e| u64::from(e.quantity)).sum()
    }
}

/// Group records per product (sorted by id) and attach delivered totals.
pub fn build_histories(records: &[SalesRecord], deliveries: &HashMap<String, u64>) -> Vec<ProductHistory> {
    let mut grouped: BTreeMap<&str, Vec<SaleEvent>> = BTreeMap::new();
    for r in records {
        grouped.entry(&r.product_id).or_default().push(SaleEvent {
            timestamp: r.timestamp,
            branch_id: r.branch_id.clone(),
            size: r.size.clone(),
            quantity: r.quantity,
        });
    }
    grouped
        .into_iter()
        .map(|(id, mut events)| {
            events.sort_by_key(|e| e.timestamp);
            ProductHistory {
                product_id: id.to_string(),
                delivered_total: deliveries.get(id).copied(),
                events,
            }
        })
        .collect()
}

/// Sorted branch ids and first-seen size labels of a record set.
pub fn observed_labels(records: &[SalesRecord]) -> (Vec<String>, SizeSet) {
    let mut branches: Vec<String> = records.iter().map(|r| r.branch_id.clone()).collect();
    branches.sort();
    branches.dedup();
    let mut sizes: Vec<String> = Vec::new();
    for r in records {
        if !sizes.contains(&r.size) {
            sizes.push(r.size.clone());
        }
    }
    (branches, SizeSet::new(sizes))
}

/// Why a product was left out of the estimate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormalizeIssue {
    #[error("no sales")]
    NoSales,
    #[error("delivered total is zero")]
    ZeroDelivered,
    #[error("sold {sold} of {delivered}, never reached half")]
    NeverHalfSold { sold: u64, delivered: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedHistory {
    pub product_id: String,
    /// Prefix of the input events ending with the half-crossing event.
    pub events: Vec<SaleEvent>,
    pub half_point: NaiveDateTime,
    /// The delivered total was missing and observed sales were used instead.
    pub used_observed_total: bool,
}

impl NormalizedHistory {
    pub fn quantity(&self) -> u64 {
        self.events.iter().map(|e| u64::from(e.quantity)).sum()
    }

    /// Length of the truncated period in days, at least one.
    pub fn period_days(&self) -> f64 {
        let first = self.events.first().map_or(self.half_point, |e| e.timestamp);
        let secs = (self.half_point - first).num_seconds() as f64;
        (secs / 86_400.0).max(1.0)
    }
}

/// Cut `history` at the first event where cumulative sales reach half the
/// delivered total. The crossing event is kept whole.
pub fn normalize_history(history: &ProductHistory) -> std::result::Result<NormalizedHistory, NormalizeIssue> {
    if history.events.is_empty() {
        return Err(NormalizeIssue::NoSales);
    }
    let (delivered, used_observed_total) = match history.delivered_total {
        Some(0) => return Err(NormalizeIssue::ZeroDelivered),
        Some(total) => (total, false),
        None => (history.sold(), true),
    };
    let mut cumulative = 0u64;
    for (i, event) in history.events.iter().enumerate() {
        cumulative += u64::from(event.quantity);
        if 2 * cumulative >= delivered {
            return Ok(NormalizedHistory {
                product_id: history.product_id.clone(),
                events: history.events[..=i].to_vec(),
                half_point: event.timestamp,
                used_observed_total,
            });
        }
    }
    Err(NormalizeIssue::NeverHalfSold { sold: cumulative, delivered })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Every usable product counts once.
    #[default]
    Unweighted,
    /// Products weighted by their truncated sales volume.
    QuantityWeighted,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// Truncated totals.
    #[default]
    Totals,
    /// Truncated totals divided by the truncated period length in days.
    DailyRates,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimateOptions {
    #[serde(default)]
    pub weighting: Weighting,
    #[serde(default)]
    pub alignment: Alignment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedProduct {
    pub product_id: String,
    pub issue: NormalizeIssue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandEstimate {
    pub demand: DemandTable,
    pub used_products: Vec<String>,
    pub excluded: Vec<ExcludedProduct>,
    /// Products whose half point came from observed sales.
    pub observed_total_fallbacks: Vec<String>,
    /// Truncated quantity at branches or sizes outside the requested lists.
    pub unmatched_quantity: u64,
}

/// Average the half-sold truncated sales of `histories` into a
/// `branches × sizes` table.
pub fn estimate_demand(
    histories: &[ProductHistory],
    branches: &[String],
    sizes: &SizeSet,
    options: EstimateOptions,
) -> Result<DemandEstimate> {
    let mut normalized: Vec<(String, std::result::Result<NormalizedHistory, NormalizeIssue>)> = histories
        .par_iter()
        .map(|h| (h.product_id.clone(), normalize_history(h)))
        .collect();
    // Fixed summation order keeps the result independent of input order.
    normalized.sort_by(|a, b| a.0.cmp(&b.0));

    let branch_index: HashMap<&str, usize> = branches.iter().enumerate().map(|(i, b)| (b.as_str(), i)).collect();
    let mut sum = DemandTable::zeros(branches.len(), sizes.len());
    let mut weight_total = 0.0;
    let mut used_products = Vec::new();
    let mut excluded = Vec::new();
    let mut observed_total_fallbacks = Vec::new();
    let mut unmatched_quantity = 0;

    for (product_id, result) in normalized {
        let history = match result {
            Ok(h) => h,
            Err(issue) => {
                excluded.push(ExcludedProduct { product_id, issue });
                continue;
            }
        };
        if history.used_observed_total {
            observed_total_fallbacks.push(product_id.clone());
        }
        let mut cells = DemandTable::zeros(branches.len(), sizes.len());
        for e in &history.events {
            match (branch_index.get(e.branch_id.as_str()), sizes.position(&e.size)) {
                (Some(&b), Some(s)) => cells.row_mut(b)[s] += f64::from(e.quantity),
                _ => unmatched_quantity += u64::from(e.quantity),
            }
        }
        if options.alignment == Alignment::DailyRates {
            let days = history.period_days();
            cells = cells.map(|v| v / days);
        }
        let weight = match options.weighting {
            Weighting::Unweighted => 1.0,
            Weighting::QuantityWeighted => history.quantity() as f64,
        };
        for b in 0..branches.len() {
            for (acc, v) in sum.row_mut(b).iter_mut().zip(cells.row(b)) {
                *acc += weight * v;
            }
        }
        weight_total += weight;
        used_products.push(product_id);
    }

    if used_products.is_empty() {
        return Err(Error::NoUsableHistories);
    }
    Ok(DemandEstimate {
        demand: sum.map(|v| v / weight_total),
        used_products,
        excluded,
        observed_total_fallbacks,
        unmatched_quantity,
    })
}

/// Scale `demand` so its total is `(cap_lo + cap_hi) / 2`.
pub fn scale_to_capacity(demand: &DemandTable, cap_lo: u64, cap_hi: u64) -> Result<DemandTable> {
    let total = demand.total();
    if !(total > 0.0) {
        return Err(Error::ZeroDemand);
    }
    let center = (cap_lo as f64 + cap_hi as f64) / 2.0;
    if approx_eq(total, center) {
        return Ok(demand.clone());
    }
    let factor = center / total;
    Ok(demand.map(|v| v * factor))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(day: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2024, 1, day).unwrap().and_hms_opt(12, 0, 0).unwrap()
    }

    fn event(day: u32, branch: &str, size: &str, quantity: u32) -> SaleEvent {
        SaleEvent { timestamp: ts(day), branch_id: branch.into(), size: size.into(), quantity }
    }

    #[test]
    fn ingest_three_rows() {
        let csv = "product_id,branch_id,size,timestamp,quantity\n\
                   p1,b1,S,2024-01-01,1\n\
                   p1,b2,M,2024-01-02T10:30:00,2\n\
                   p2,b1,S,2024-01-03T08:00:00+02:00,3\n";
        let got = ingest_sales(csv.as_bytes()).unwrap();
        assert_eq!(got.records.len(), 3);
        assert!(got.rejects.is_empty());
        assert_eq!(got.records[2].timestamp.to_string(), "2024-01-03 06:00:00");
    }

    #[test]
    fn zero_quantity_and_malformed_rows_rejected() {
        let csv = "product_id,branch_id,size,timestamp,quantity\n\
                   p1,b1,S,2024-01-01,0\n\
                   p1,b1,S,yesterday,1\n\
                   p1,b1,S\n\
                   p1,b1,S,2024-01-01,4\n";
        let got = ingest_sales(csv.as_bytes()).unwrap();
        assert_eq!(got.records.len(), 1);
        let lines: Vec<u64> = got.rejects.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![2, 3, 4]);
        assert!(got.rejects[0].reason.contains("quantity"));
    }

    #[test]
    fn wrong_header_is_an_error() {
        let csv = "product,branch,size,timestamp,quantity\n";
        assert!(matches!(ingest_sales(csv.as_bytes()), Err(Error::Schema(_))));
    }

    #[test]
    fn deliveries_parse() {
        let d = ingest_deliveries("product_id,delivered_total\np1,10\np2,4\n".as_bytes()).unwrap();
        assert_eq!(d["p1"], 10);
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn half_point_one_per_day() {
        let h = ProductHistory {
            product_id: "p".into(),
            delivered_total: Some(10),
            events: (1..=10).map(|d| event(d, "b", "S", 1)).collect(),
        };
        let n = normalize_history(&h).unwrap();
        assert_eq!(n.events.len(), 5);
        assert_eq!(n.half_point, ts(5));
        assert!(!n.used_observed_total);
    }

    #[test]
    fn half_point_single_large_sale() {
        let h = ProductHistory {
            product_id: "p".into(),
            delivered_total: Some(10),
            events: vec![event(3, "b", "S", 10), event(4, "b", "S", 1)],
        };
        let n = normalize_history(&h).unwrap();
        assert_eq!(n.events, vec![event(3, "b", "S", 10)]);
    }

    #[test]
    fn never_half_sold_and_fallback() {
        let mut h = ProductHistory {
            product_id: "p".into(),
            delivered_total: Some(100),
            events: vec![event(1, "b", "S", 3), event(2, "b", "S", 3), event(3, "b", "S", 4)],
        };
        assert_eq!(normalize_history(&h), Err(NormalizeIssue::NeverHalfSold { sold: 10, delivered: 100 }));
        h.delivered_total = None;
        let n = normalize_history(&h).unwrap();
        assert!(n.used_observed_total);
        assert_eq!(n.events.len(), 2);
        h.delivered_total = Some(0);
        assert_eq!(normalize_history(&h), Err(NormalizeIssue::ZeroDelivered));
    }

    #[test]
    fn identical_products_do_not_change_the_mean() {
        let h = ProductHistory {
            product_id: "p1".into(),
            delivered_total: Some(4),
            events: vec![event(1, "b1", "S", 1), event(2, "b2", "M", 1), event(3, "b1", "M", 1)],
        };
        let mut h2 = h.clone();
        h2.product_id = "p2".into();
        let branches = vec!["b1".to_string(), "b2".to_string()];
        let sizes = SizeSet::new(["S", "M"]);
        let one = estimate_demand(std::slice::from_ref(&h), &branches, &sizes, EstimateOptions::default()).unwrap();
        let two = estimate_demand(&[h, h2], &branches, &sizes, EstimateOptions::default()).unwrap();
        assert_eq!(one.demand, two.demand);
        assert_eq!(one.demand.row(0), &[1.0, 0.0]);
        assert_eq!(one.demand.row(1), &[0.0, 1.0]);
    }

    #[test]
    fn no_usable_histories() {
        let h = ProductHistory { product_id: "p".into(), delivered_total: Some(5), events: vec![] };
        let got = estimate_demand(&[h], &["b".into()], &SizeSet::new(["S"]), EstimateOptions::default());
        assert!(matches!(got, Err(Error::NoUsableHistories)));
    }

    #[test]
    fn daily_rates_and_weighting() {
        let h1 = ProductHistory {
            product_id: "p1".into(),
            delivered_total: Some(4),
            events: vec![event(1, "b", "S", 1), event(5, "b", "S", 1)],
        };
        let h2 = ProductHistory {
            product_id: "p2".into(),
            delivered_total: Some(2),
            events: vec![event(1, "b", "S", 1)],
        };
        let branches = vec!["b".to_string()];
        let sizes = SizeSet::new(["S"]);
        let rates = EstimateOptions { alignment: Alignment::DailyRates, ..Default::default() };
        let got = estimate_demand(&[h1.clone(), h2.clone()], &branches, &sizes, rates).unwrap();
        // p1: 2 pieces over 4 days; p2: 1 piece over the one-day minimum.
        assert!((got.demand.row(0)[0] - (0.5 + 1.0) / 2.0).abs() < 1e-12);
        let weighted = EstimateOptions { weighting: Weighting::QuantityWeighted, ..Default::default() };
        let got = estimate_demand(&[h1, h2], &branches, &sizes, weighted).unwrap();
        assert!((got.demand.row(0)[0] - (2.0 * 2.0 + 1.0 * 1.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn scaling_centers_total() {
        let d = DemandTable::from_rows(vec![vec![60.0, 40.0]]).unwrap();
        let s = scale_to_capacity(&d, 10_630, 11_749).unwrap();
        assert!((s.total() - 11_189.5).abs() <= 1e-9 * 11_189.5);
        assert!((s.row(0)[0] / s.row(0)[1] - 1.5).abs() < 1e-12);
        let again = scale_to_capacity(&s, 10_630, 11_749).unwrap();
        assert_eq!(again, s);
        let point = scale_to_capacity(&d, 500, 500).unwrap();
        assert!((point.total() - 500.0).abs() < 1e-9);
        assert!(matches!(
            scale_to_capacity(&DemandTable::zeros(2, 2), 1, 2),
            Err(Error::ZeroDemand)
        ));
    }
}
