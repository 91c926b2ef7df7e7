//! Domain types shared by every solver: sizes, lot-types, demand, instances,
//! plans and solutions, together with the deviation cost and plan evaluation.
//!
//! Demand is fractional and held as `f64`; piece counts are integers. All
//! floating comparisons go through [`approx_eq`] / [`definitely_less`], which
//! use an absolute tolerance of [`TOLERANCE`] scaled up for magnitudes above 1.

use std::collections::HashSet;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute comparison tolerance for costs and demand totals.
pub const TOLERANCE: f64 = 1e-9;

fn scaled_tolerance(a: f64, b: f64) -> f64 {
    TOLERANCE * 1f64.max(a.abs()).max(b.abs())
}

/// `a` and `b` agree within [`TOLERANCE`] (relative once either exceeds 1).
pub fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= scaled_tolerance(a, b)
}

/// `a` is smaller than `b` by more than the comparison tolerance.
pub fn definitely_less(a: f64, b: f64) -> bool {
    a < b - scaled_tolerance(a, b)
}

/// The norm used to measure a branch's supply against its demand.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Norm {
    #[default]
    L1,
    L2,
    #[serde(rename = "LINF")]
    Linf,
}

impl Norm {
    pub const ALL: [Norm; 3] = [Norm::L1, Norm::L2, Norm::Linf];
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::L1 => "L1",
            Norm::L2 => "L2",
            Norm::Linf => "LINF",
        })
    }
}

impl std::str::FromStr for Norm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "L1" => Ok(Norm::L1),
            "L2" => Ok(Norm::L2),
            "LINF" => Ok(Norm::Linf),
            other => Err(format!("unknown norm `{other}` (expected L1, L2 or LINF)")),
        }
    }
}

/// Ordered size labels. Lot-type vectors and demand rows align to this order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SizeSet(Vec<String>);

impl SizeSet {
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SizeSet(labels.into_iter().map(Into::into).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.0
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.0.iter().position(|l| l == label)
    }
}

/// Pieces per size contained in one pre-pack.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LotType(Vec<u32>);

impl LotType {
    pub fn new(pieces_per_size: Vec<u32>) -> Self {
        LotType(pieces_per_size)
    }

    pub fn pieces_per_size(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total number of pieces in one lot of this type.
    pub fn pieces(&self) -> u64 {
        self.0.iter().map(|&p| u64::from(p)).sum()
    }
}

impl From<Vec<u32>> for LotType {
    fn from(v: Vec<u32>) -> Self {
        LotType(v)
    }
}

impl fmt::Display for LotType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, ")")
    }
}

/// Sum over sizes of the pieces in `lot`.
pub fn lot_pieces(lot: &LotType) -> u64 {
    lot.pieces()
}

/// Branch x size matrix of mean demand, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct DemandTable {
    sizes: usize,
    values: Vec<f64>,
}

impl DemandTable {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let sizes = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * sizes);
        for row in rows {
            if row.len() != sizes {
                return Err(Error::DimensionMismatch {
                    expected: sizes,
                    actual: row.len(),
                });
            }
            values.extend(row);
        }
        Ok(DemandTable { sizes, values })
    }

    pub fn zeros(branches: usize, sizes: usize) -> Self {
        DemandTable {
            sizes,
            values: vec![0.0; branches * sizes],
        }
    }

    pub fn branch_count(&self) -> usize {
        if self.sizes == 0 {
            0
        } else {
            self.values.len() / self.sizes
        }
    }

    pub fn size_count(&self) -> usize {
        self.sizes
    }

    pub fn row(&self, branch: usize) -> &[f64] {
        &self.values[branch * self.sizes..(branch + 1) * self.sizes]
    }

    pub fn row_mut(&mut self, branch: usize) -> &mut [f64] {
        &mut self.values[branch * self.sizes..(branch + 1) * self.sizes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.sizes.max(1))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        DemandTable {
            sizes: self.sizes,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl TryFrom<Vec<Vec<f64>>> for DemandTable {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        DemandTable::from_rows(rows)
    }
}

impl From<DemandTable> for Vec<Vec<f64>> {
    fn from(table: DemandTable) -> Self {
        table.rows().map(<[f64]>::to_vec).collect()
    }
}

/// A complete problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub branches: Vec<String>,
    pub sizes: SizeSet,
    pub demand: DemandTable,
    /// The lot-type universe; plans refer to lots by index into this list.
    pub lots: Vec<LotType>,
    /// Maximum number of distinct lot-types in a plan.
    pub k: usize,
    /// Maximum multiplicity per branch.
    #[serde(rename = "M")]
    pub max_multiplicity: u32,
    pub cap_lo: u64,
    pub cap_hi: u64,
    #[serde(default)]
    pub norm: Norm,
}

/// A broken instance or plan rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NoSizes,
    DuplicateSize { label: String },
    DuplicateBranch { id: String },
    DemandShape { rows: usize, columns: usize, branches: usize, sizes: usize },
    NegativeDemand { branch: usize, size: usize, value: f64 },
    NonFiniteDemand { branch: usize, size: usize },
    NoLots,
    LotLength { lot: usize, len: usize, sizes: usize },
    ZeroLot { lot: usize },
    DuplicateLot { lot: usize, first: usize },
    ZeroK,
    ZeroMultiplicity,
    InvertedInterval { cap_lo: u64, cap_hi: u64 },
    PlanLength { assignments: usize, branches: usize },
    LotIndex { branch: usize, lot: usize, lots: usize },
    Multiplicity { branch: usize, multiplicity: u32, max: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoSizes => write!(f, "at least one size required"),
            Violation::DuplicateSize { label } => write!(f, "duplicate size label `{label}`"),
            Violation::DuplicateBranch { id } => write!(f, "duplicate branch id `{id}`"),
            Violation::DemandShape { rows, columns, branches, sizes } => write!(
                f,
                "demand table is {rows}x{columns}, expected {branches}x{sizes}"
            ),
            Violation::NegativeDemand { branch, size, value } => {
                write!(f, "negative demand {value} at branch {branch}, size {size}")
            }
            Violation::NonFiniteDemand { branch, size } => {
                write!(f, "non-finite demand at branch {branch}, size {size}")
            }
            Violation::NoLots => write!(f, "lot universe is empty"),
            Violation::LotLength { lot, len, sizes } => {
                write!(f, "lot {lot} has {len} entries, expected {sizes}")
            }
            Violation::ZeroLot { lot } => write!(f, "lot {lot} contains no pieces"),
            Violation::DuplicateLot { lot, first } => {
                write!(f, "lot {lot} duplicates lot {first}")
            }
            Violation::ZeroK => write!(f, "k ≥ 1 required"),
            Violation::ZeroMultiplicity => write!(f, "M ≥ 1 required"),
            Violation::InvertedInterval { cap_lo, cap_hi } => {
                write!(f, "capacity interval [{cap_lo}, {cap_hi}] is inverted")
            }
            Violation::PlanLength { assignments, branches } => {
                write!(f, "plan has {assignments} assignments for {branches} branches")
            }
            Violation::LotIndex { branch, lot, lots } => {
                write!(f, "branch {branch} uses lot {lot} but only {lots} lots exist")
            }
            Violation::Multiplicity { branch, multiplicity, max } => {
                write!(f, "branch {branch} has multiplicity {multiplicity} outside [1, {max}]")
            }
        }
    }
}

/// Non-fatal findings from [`validate_instance`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// No plan can land inside the capacity interval.
    UnreachableInterval { min_total: u64, max_total: u64 },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::UnreachableInterval { min_total, max_total } => write!(
                f,
                "capacity interval is unreachable: plans supply between {min_total} and {max_total} pieces"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Warning>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check every instance rule. Never aborts; problems are collected.
pub fn validate_instance(instance: &Instance) -> ValidationReport {
    let mut violations = Vec::new();
    let mut warnings = Vec::new();
    let sizes = instance.sizes.len();

    if sizes == 0 {
        violations.push(Violation::NoSizes);
    }
    let mut seen = HashSet::new();
    for label in instance.sizes.labels() {
        if !seen.insert(label.as_str()) {
            violations.push(Violation::DuplicateSize { label: label.clone() });
        }
    }
    let mut seen = HashSet::new();
    for id in &instance.branches {
        if !seen.insert(id.as_str()) {
            violations.push(Violation::DuplicateBranch { id: id.clone() });
        }
    }

    let demand = &instance.demand;
    let shape_ok = demand.branch_count() == instance.branches.len()
        && (demand.size_count() == sizes || instance.branches.is_empty());
    if !shape_ok {
        violations.push(Violation::DemandShape {
            rows: demand.branch_count(),
            columns: demand.size_count(),
            branches: instance.branches.len(),
            sizes,
        });
    }
    for (b, row) in demand.rows().enumerate() {
        for (s, &value) in row.iter().enumerate() {
            if !value.is_finite() {
                violations.push(Violation::NonFiniteDemand { branch: b, size: s });
            } else if value < 0.0 {
                violations.push(Violation::NegativeDemand { branch: b, size: s, value });
            }
        }
    }

    if instance.lots.is_empty() {
        violations.push(Violation::NoLots);
    }
    let mut first_seen = std::collections::HashMap::new();
    for (i, lot) in instance.lots.iter().enumerate() {
        if lot.len() != sizes {
            violations.push(Violation::LotLength { lot: i, len: lot.len(), sizes });
        }
        if lot.pieces() == 0 {
            violations.push(Violation::ZeroLot { lot: i });
        }
        if let Some(&first) = first_seen.get(lot) {
            violations.push(Violation::DuplicateLot { lot: i, first });
        } else {
            first_seen.insert(lot, i);
        }
    }

    if instance.k == 0 {
        violations.push(Violation::ZeroK);
    }
    if instance.max_multiplicity == 0 {
        violations.push(Violation::ZeroMultiplicity);
    }
    if instance.cap_lo > instance.cap_hi {
        violations.push(Violation::InvertedInterval {
            cap_lo: instance.cap_lo,
            cap_hi: instance.cap_hi,
        });
    }

    let min_lot = instance.lots.iter().map(LotType::pieces).min();
    let max_lot = instance.lots.iter().map(LotType::pieces).max();
    if let (Some(min_lot), Some(max_lot)) = (min_lot, max_lot) {
        let branches = instance.branches.len() as u64;
        let min_total = branches.saturating_mul(min_lot);
        let max_total = branches
            .saturating_mul(u64::from(instance.max_multiplicity))
            .saturating_mul(max_lot);
        if instance.cap_hi < min_total || instance.cap_lo > max_total {
            warnings.push(Warning::UnreachableInterval { min_total, max_total });
        }
    }

    ValidationReport { violations, warnings }
}

impl Instance {
    pub fn validate(&self) -> ValidationReport {
        validate_instance(self)
    }

    /// Validate and turn violations into an error.
    pub fn check(&self) -> Result<ValidationReport> {
        let report = self.validate();
        if report.is_ok() {
            Ok(report)
        } else {
            Err(Error::Validation(report.violations))
        }
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    /// Deviation of branch `branch` from `m` lots of lot `lot`.
    pub fn cost(&self, branch: usize, lot: usize, m: u32) -> f64 {
        deviation(self.demand.row(branch), &self.lots[lot], m, self.norm)
    }
}

/// `‖demand_row − m·lot‖` under `norm`.
pub fn deviation_cost(demand_row: &[f64], lot: &LotType, m: u32, norm: Norm) -> Result<f64> {
    if demand_row.len() != lot.len() {
        return Err(Error::DimensionMismatch {
            expected: demand_row.len(),
            actual: lot.len(),
        });
    }
    if m == 0 {
        return Err(Error::Validation(vec![Violation::ZeroMultiplicity]));
    }
    Ok(deviation(demand_row, lot, m, norm))
}

/// Unchecked form of [`deviation_cost`] for solver inner loops.
#[inline]
pub(crate) fn deviation(demand_row: &[f64], lot: &LotType, m: u32, norm: Norm) -> f64 {
    let m = f64::from(m);
    let diffs = demand_row
        .iter()
        .zip(lot.pieces_per_size())
        .map(|(&d, &l)| (d - m * f64::from(l)).abs());
    match norm {
        Norm::L1 => diffs.sum(),
        Norm::L2 => diffs.map(|x| x * x).sum::<f64>().sqrt(),
        Norm::Linf => diffs.fold(0.0, f64::max),
    }
}

/// One branch's delivery: `multiplicity` lots of `lots[lot]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Assignment {
    pub lot: usize,
    pub multiplicity: u32,
}

impl Assignment {
    pub fn new(lot: usize, multiplicity: u32) -> Self {
        Assignment { lot, multiplicity }
    }
}

/// A lot-type and multiplicity for every branch, in branch order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Plan(pub Vec<Assignment>);

impl Plan {
    pub fn new(assignments: Vec<Assignment>) -> Self {
        Plan(assignments)
    }

    pub fn assignments(&self) -> &[Assignment] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Sorted, deduplicated lot indices used by the plan.
    pub fn lots_used(&self) -> Vec<usize> {
        let mut lots: Vec<usize> = self.0.iter().map(|a| a.lot).collect();
        lots.sort_unstable();
        lots.dedup();
        lots
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEvaluation {
    pub objective: f64,
    pub total_pieces: u64,
    pub distinct_lots: usize,
    pub capacity_ok: bool,
    pub lot_budget_ok: bool,
}

impl PlanEvaluation {
    pub fn feasible(&self) -> bool {
        self.capacity_ok && self.lot_budget_ok
    }
}

/// Objective, supply and constraint status of `plan`.
pub fn evaluate_plan(instance: &Instance, plan: &Plan) -> Result<PlanEvaluation> {
    let branches = instance.branch_count();
    let mut violations = Vec::new();
    if plan.len() != branches {
        violations.push(Violation::PlanLength { assignments: plan.len(), branches });
    }
    for (b, a) in plan.assignments().iter().enumerate() {
        if a.lot >= instance.lots.len() {
            violations.push(Violation::LotIndex { branch: b, lot: a.lot, lots: instance.lots.len() });
        }
        if a.multiplicity == 0 || a.multiplicity > instance.max_multiplicity {
            violations.push(Violation::Multiplicity {
                branch: b,
                multiplicity: a.multiplicity,
                max: instance.max_multiplicity,
            });
        }
    }
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }

    let mut objective = 0.0;
    let mut total_pieces = 0u64;
    for (b, a) in plan.assignments().iter().enumerate() {
        objective += instance.cost(b, a.lot, a.multiplicity);
        total_pieces += u64::from(a.multiplicity) * instance.lots[a.lot].pieces();
    }
    let distinct_lots = plan.lots_used().len();
    Ok(PlanEvaluation {
        objective,
        total_pieces,
        distinct_lots,
        capacity_ok: (instance.cap_lo..=instance.cap_hi).contains(&total_pieces),
        lot_budget_ok: distinct_lots <= instance.k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Optimal,
    Feasible,
    Infeasible,
    TimeoutBestKnown,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Optimal => "OPTIMAL",
            Status::Feasible => "FEASIBLE",
            Status::Infeasible => "INFEASIBLE",
            Status::TimeoutBestKnown => "TIMEOUT_BEST_KNOWN",
        })
    }
}

/// Which solver produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Exact,
    Sfa,
    BruteForce,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Exact => "exact",
            SolverKind::Sfa => "sfa",
            SolverKind::BruteForce => "brute_force",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub plan: Plan,
    pub objective: f64,
    pub total_pieces: u64,
    pub status: Status,
    pub solver: SolverKind,
    #[serde(with = "duration_secs")]
    pub wall_time: Duration,
}

impl Solution {
    /// Build a solution whose objective and supply come from [`evaluate_plan`].
    pub fn from_plan(
        instance: &Instance,
        plan: Plan,
        status: Status,
        solver: SolverKind,
        wall_time: Duration,
    ) -> Result<Self> {
        let eval = evaluate_plan(instance, &plan)?;
        Ok(Solution {
            plan,
            objective: eval.objective,
            total_pieces: eval.total_pieces,
            status,
            solver,
            wall_time,
        })
    }

    /// Re-evaluate against `instance` and confirm the recorded fields and
    /// constraint status hold.
    pub fn verify(&self, instance: &Instance) -> Result<PlanEvaluation> {
        let eval = evaluate_plan(instance, &self.plan)?;
        let consistent = eval.objective == self.objective && eval.total_pieces == self.total_pieces;
        let feasible_claim = matches!(
            self.status,
            Status::Optimal | Status::Feasible | Status::TimeoutBestKnown
        );
        if !consistent || (feasible_claim && !eval.feasible()) {
            return Err(Error::Schema(format!(
                "solution disagrees with its plan: objective {} vs {}, pieces {} vs {}, capacity_ok {}, lot_budget_ok {}",
                self.objective, eval.objective, self.total_pieces, eval.total_pieces,
                eval.capacity_ok, eval.lot_budget_ok
            )));
        }
        Ok(eval)
    }
}

pub(crate) mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

pub(crate) mod optional_duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        match d {
            Some(d) => s.serialize_some(&d.as_secs_f64()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        Option::<f64>::deserialize(d)?
            .map(|secs| Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lot(v: &[u32]) -> LotType {
        LotType::new(v.to_vec())
    }

    fn two_branch() -> Instance {
        Instance {
            branches: vec!["a".into(), "b".into()],
            sizes: SizeSet::new(["S", "M"]),
            demand: DemandTable::from_rows(vec![vec![2.0, 2.0], vec![4.0, 4.0]]).unwrap(),
            lots: vec![lot(&[1, 1]), lot(&[2, 2])],
            k: 2,
            max_multiplicity: 2,
            cap_lo: 0,
            cap_hi: 100,
            norm: Norm::L1,
        }
    }

    #[test]
    fn l1_cost_of_mixed_row() {
        let d = [1.2, 2.5, 3.1, 2.4, 0.8];
        let c = deviation_cost(&d, &lot(&[1, 2, 3, 2, 1]), 1, Norm::L1).unwrap();
        assert!((c - 1.4).abs() < 1e-12);
    }

    #[test]
    fn exact_supply_costs_nothing_in_every_norm() {
        let l = lot(&[3, 0, 2]);
        let d = [9.0, 0.0, 6.0];
        for norm in Norm::ALL {
            assert_eq!(deviation_cost(&d, &l, 3, norm).unwrap(), 0.0);
        }
    }

    #[test]
    fn multiplicity_changes_cost() {
        let l = lot(&[1, 1]);
        assert_eq!(deviation_cost(&[2.0, 2.0], &l, 2, Norm::L1).unwrap(), 0.0);
        assert_eq!(deviation_cost(&[2.0, 2.0], &l, 1, Norm::L1).unwrap(), 2.0);
    }

    #[test]
    fn l2_and_linf() {
        let l = lot(&[1, 1]);
        assert_eq!(deviation_cost(&[4.0, 1.0], &l, 1, Norm::L2).unwrap(), 3.0);
        assert_eq!(deviation_cost(&[4.0, 2.0], &l, 1, Norm::Linf).unwrap(), 3.0);
    }

    #[test]
    fn cost_rejects_mismatched_lengths_and_zero_m() {
        assert!(matches!(
            deviation_cost(&[1.0], &lot(&[1, 1]), 1, Norm::L1),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(deviation_cost(&[1.0], &lot(&[1]), 0, Norm::L1).is_err());
    }

    #[test]
    fn evaluate_exact_match_plan() {
        let inst = two_branch();
        let plan = Plan::new(vec![Assignment::new(0, 2), Assignment::new(1, 2)]);
        let eval = evaluate_plan(&inst, &plan).unwrap();
        assert_eq!(eval.objective, 0.0);
        assert_eq!(eval.total_pieces, 12);
        assert_eq!(eval.distinct_lots, 2);
        assert!(eval.capacity_ok && eval.lot_budget_ok);
    }

    #[test]
    fn evaluate_single_lot_plan() {
        let inst = two_branch();
        let plan = Plan::new(vec![Assignment::new(0, 1), Assignment::new(0, 1)]);
        let eval = evaluate_plan(&inst, &plan).unwrap();
        assert_eq!(eval.objective, 8.0);
        assert_eq!(eval.total_pieces, 4);
        assert_eq!(eval.distinct_lots, 1);
    }

    #[test]
    fn evaluate_flags_budget_and_capacity() {
        let mut inst = two_branch();
        inst.k = 1;
        inst.cap_lo = 13;
        let plan = Plan::new(vec![Assignment::new(0, 2), Assignment::new(1, 2)]);
        let eval = evaluate_plan(&inst, &plan).unwrap();
        assert!(!eval.lot_budget_ok);
        assert!(!eval.capacity_ok);
    }

    #[test]
    fn evaluate_rejects_bad_indices() {
        let inst = two_branch();
        let bad_lot = Plan::new(vec![Assignment::new(5, 1), Assignment::new(0, 1)]);
        let bad_m = Plan::new(vec![Assignment::new(0, 3), Assignment::new(0, 0)]);
        let short = Plan::new(vec![Assignment::new(0, 1)]);
        for plan in [bad_lot, bad_m, short] {
            assert!(matches!(evaluate_plan(&inst, &plan), Err(Error::Validation(_))));
        }
    }

    #[test]
    fn validation_reports_each_rule() {
        let mut inst = two_branch();
        inst.k = 0;
        let report = inst.validate();
        assert_eq!(report.violations, vec![Violation::ZeroK]);
        assert_eq!(report.violations[0].to_string(), "k ≥ 1 required");

        let mut inst = two_branch();
        inst.max_multiplicity = 0;
        inst.cap_lo = 200;
        inst.lots.push(lot(&[0, 0]));
        inst.lots.push(lot(&[1, 1]));
        inst.branches[1] = "a".into();
        let report = inst.validate();
        assert!(report.violations.contains(&Violation::ZeroMultiplicity));
        assert!(report.violations.contains(&Violation::InvertedInterval { cap_lo: 200, cap_hi: 100 }));
        assert!(report.violations.contains(&Violation::ZeroLot { lot: 2 }));
        assert!(report.violations.contains(&Violation::DuplicateLot { lot: 3, first: 0 }));
        assert!(report.violations.contains(&Violation::DuplicateBranch { id: "a".into() }));
    }

    #[test]
    fn unreachable_interval_is_a_warning() {
        let mut inst = two_branch();
        inst.lots = vec![lot(&[5, 5])];
        inst.cap_lo = 1_000_000;
        inst.cap_hi = 1_000_000;
        let report = inst.validate();
        assert!(report.is_ok());
        assert_eq!(
            report.warnings,
            vec![Warning::UnreachableInterval { min_total: 20, max_total: 40 }]
        );
    }

    #[test]
    fn negative_and_nan_demand_rejected() {
        let mut inst = two_branch();
        inst.demand = DemandTable::from_rows(vec![vec![-1.0, 2.0], vec![f64::NAN, 1.0]]).unwrap();
        let report = inst.validate();
        assert_eq!(report.violations.len(), 2);
    }

    #[test]
    fn solution_roundtrips_through_json() {
        let inst = two_branch();
        let plan = Plan::new(vec![Assignment::new(0, 2), Assignment::new(1, 2)]);
        let sol = Solution::from_plan(
            &inst,
            plan,
            Status::Optimal,
            SolverKind::Exact,
            Duration::from_millis(5),
        )
        .unwrap();
        let json = serde_json::to_string(&sol).unwrap();
        assert!(json.contains("\"OPTIMAL\""));
        let back: Solution = serde_json::from_str(&json).unwrap();
        assert_eq!(back, sol);
        sol.verify(&inst).unwrap();
    }
}
