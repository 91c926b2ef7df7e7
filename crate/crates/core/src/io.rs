//! On-disk and on-wire documents.
//!
//! - Instance documents (JSON): `{sizes, branches, demand, lots | lot_generator,
//!   k, M, cap_lo, cap_hi, norm}` with `demand` as row-major nested arrays.
//!   Explicit `lots` win over `lot_generator`.
//! - Demand CSV: header `branch_id,<size labels…>`, one row per branch.
//! - Solution documents (JSON): summary fields plus one record per branch
//!   `{branch_id, lot, lot_index, multiplicity, pieces, cost}`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lots::{enumerate_lots, LotGeneratorSpec};
use crate::model::{
    duration_secs, evaluate_plan, Assignment, DemandTable, Instance, LotType, Norm, Plan, SizeSet,
    Solution, SolverKind, Status,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDocument {
    pub sizes: SizeSet,
    pub branches: Vec<String>,
    pub demand: DemandTable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lots: Option<Vec<LotType>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lot_generator: Option<LotGeneratorSpec>,
    pub k: usize,
    #[serde(rename = "M")]
    pub max_multiplicity: u32,
    pub cap_lo: u64,
    pub cap_hi: u64,
    #[serde(default)]
    pub norm: Norm,
}

impl InstanceDocument {
    /// Resolve the lot universe. Does not validate the result.
    pub fn into_instance(self) -> Result<Instance> {
        let lots = match (self.lots, &self.lot_generator) {
            (Some(lots), _) => lots,
            (None, Some(spec)) => enumerate_lots(spec, &self.sizes)?,
            (None, None) => return Err(Error::Schema("instance needs `lots` or `lot_generator`".into())),
        };
        Ok(Instance {
            branches: self.branches,
            sizes: self.sizes,
            demand: self.demand,
            lots,
            k: self.k,
            max_multiplicity: self.max_multiplicity,
            cap_lo: self.cap_lo,
            cap_hi: self.cap_hi,
            norm: self.norm,
        })
    }
}

impl From<&Instance> for InstanceDocument {
    fn from(inst: &Instance) -> Self {
        InstanceDocument {
            sizes: inst.sizes.clone(),
            branches: inst.branches.clone(),
            demand: inst.demand.clone(),
            lots: Some(inst.lots.clone()),
            lot_generator: None,
            k: inst.k,
            max_multiplicity: inst.max_multiplicity,
            cap_lo: inst.cap_lo,
            cap_hi: inst.cap_hi,
            norm: inst.norm,
        }
    }
}

pub fn read_instance(reader: impl Read) -> Result<Instance> {
    let doc: InstanceDocument = serde_json::from_reader(reader)?;
    doc.into_instance()
}

pub fn parse_instance(json: &str) -> Result<Instance> {
    read_instance(json.as_bytes())
}

pub fn write_instance(writer: impl Write, instance: &Instance) -> Result<()> {
    serde_json::to_writer_pretty(writer, &InstanceDocument::from(instance))?;
    Ok(())
}

/// Branch ids, size labels and the demand matrix of a demand CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandCsv {
    pub branches: Vec<String>,
    pub sizes: SizeSet,
    pub demand: DemandTable,
}

pub fn read_demand_csv(reader: impl Read) -> Result<DemandCsv> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("branch_id") {
        return Err(Error::Schema("demand CSV must start with a `branch_id` column".into()));
    }
    let sizes = SizeSet::new(headers.iter().skip(1));
    if sizes.is_empty() {
        return Err(Error::Schema("demand CSV has no size columns".into()));
    }
    let mut branches = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        branches.push(record[0].to_string());
        let row = record
            .iter()
            .skip(1)
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Schema(format!("row {}: `{v}`: {e}", i + 2)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let demand = if rows.is_empty() {
        DemandTable::zeros(0, sizes.len())
    } else {
        DemandTable::from_rows(rows)?
    };
    Ok(DemandCsv { branches, sizes, demand })
}

pub fn write_demand_csv(writer: impl Write, branches: &[String], sizes: &SizeSet, demand: &DemandTable) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["branch_id".to_string()];
    header.extend(sizes.labels().iter().cloned());
    wtr.write_record(&header)?;
    for (id, row) in branches.iter().zip(demand.rows()) {
        let mut record = vec![id.clone()];
        record.extend(row.iter().map(f64::to_string));
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub branch_id: String,
    pub lot: LotType,
    pub lot_index: usize,
    pub multiplicity: u32,
    pub pieces: u64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDocument {
    pub status: Status,
    pub solver: SolverKind,
    pub objective: f64,
    pub total_pieces: u64,
    pub distinct_lots: usize,
    #[serde(with = "duration_secs")]
    pub wall_time: Duration,
    pub branches: Vec<BranchRecord>,
}

impl SolutionDocument {
    pub fn new(instance: &Instance, solution: &Solution) -> Result<Self> {
        let eval = evaluate_plan(instance, &solution.plan)?;
        let branches = solution
            .plan
            .assignments()
            .iter()
            .enumerate()
            .map(|(b, a)| BranchRecord {
                branch_id: instance.branches[b].clone(),
                lot: instance.lots[a.lot].clone(),
                lot_index: a.lot,
                multiplicity: a.multiplicity,
                pieces: u64::from(a.multiplicity) * instance.lots[a.lot].pieces(),
                cost: instance.cost(b, a.lot, a.multiplicity),
            })
            .collect();
        Ok(SolutionDocument {
            status: solution.status,
            solver: solution.solver,
            objective: solution.objective,
            total_pieces: solution.total_pieces,
            distinct_lots: eval.distinct_lots,
            wall_time: solution.wall_time,
            branches,
        })
    }

    pub fn plan(&self) -> Plan {
        Plan::new(
            self.branches
                .iter()
                .map(|r| Assignment::new(r.lot_index, r.multiplicity))
                .collect(),
        )
    }

    pub fn to_solution(&self) -> Solution {
        Solution {
            plan: self.plan(),
            objective: self.objective,
            total_pieces: self.total_pieces,
            status: self.status,
            solver: self.solver,
            wall_time: self.wall_time,
        }
    }
}

/// One branch that differs between two solutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchDiff {
    pub branch_id: String,
    pub a: BranchRecord,
    pub b: BranchRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanComparison {
    pub diff: Vec<BranchDiff>,
    /// `b − a`.
    pub objective_delta: f64,
    pub total_pieces_delta: i64,
    pub distinct_lots: (usize, usize),
}

/// Per-branch differences between two solutions of instances with the same
/// branch set. Branches are matched by id.
pub fn compare_solutions(a: &SolutionDocument, b: &SolutionDocument) -> Result<PlanComparison> {
    let by_id: HashMap<&str, &BranchRecord> = b.branches.iter().map(|r| (r.branch_id.as_str(), r)).collect();
    if by_id.len() != a.branches.len() || b.branches.len() != a.branches.len() {
        return Err(Error::Schema("solutions cover different branch sets".into()));
    }
    let mut diff = Vec::new();
    for ra in &a.branches {
        let rb = by_id
            .get(ra.branch_id.as_str())
            .ok_or_else(|| Error::Schema(format!("branch `{}` missing from second solution", ra.branch_id)))?;
        if ra.lot != rb.lot || ra.multiplicity != rb.multiplicity {
            diff.push(BranchDiff { branch_id: ra.branch_id.clone(), a: ra.clone(), b: (*rb).clone() });
        }
    }
    Ok(PlanComparison {
        diff,
        objective_delta: b.objective - a.objective,
        total_pieces_delta: b.total_pieces as i64 - a.total_pieces as i64,
        distinct_lots: (a.distinct_lots, b.distinct_lots),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{
        "sizes": ["S", "M"],
        "branches": ["north", "south"],
        "demand": [[2.0, 2.0], [4.0, 4.0]],
        "lot_generator": {"per_size_values": [[0, 1, 2], [0, 1, 2]]},
        "k": 2, "M": 2, "cap_lo": 4, "cap_hi": 12, "norm": "L1"
    }"#;

    #[test]
    fn generator_expands() {
        let inst = parse_instance(DOC).unwrap();
        assert_eq!(inst.lots.len(), 8);
        assert!(inst.validate().is_ok());
        assert_eq!(inst.max_multiplicity, 2);
    }

    #[test]
    fn explicit_lots_override_generator() {
        let json = DOC.replace("\"lot_generator\"", "\"lots\": [[1, 1]], \"lot_generator\"");
        let inst = parse_instance(&json).unwrap();
        assert_eq!(inst.lots, vec![LotType::new(vec![1, 1])]);
    }

    #[test]
    fn missing_lots_rejected() {
        let json = DOC.replace("\"lot_generator\"", "\"unused\"");
        assert!(matches!(parse_instance(&json), Err(Error::Schema(_))));
    }

    #[test]
    fn ragged_demand_rejected() {
        let json = DOC.replace("[4.0, 4.0]", "[4.0]");
        assert!(parse_instance(&json).is_err());
    }

    #[test]
    fn demand_csv_roundtrip() {
        let inst = parse_instance(DOC).unwrap();
        let mut buf = Vec::new();
        write_demand_csv(&mut buf, &inst.branches, &inst.sizes, &inst.demand).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("branch_id,S,M\nnorth,2,2\n"));
        let back = read_demand_csv(buf.as_slice()).unwrap();
        assert_eq!(back.branches, inst.branches);
        assert_eq!(back.sizes, inst.sizes);
        assert_eq!(back.demand, inst.demand);
    }

    #[test]
    fn demand_csv_requires_branch_column() {
        assert!(read_demand_csv("id,S\nx,1\n".as_bytes()).is_err());
        assert!(read_demand_csv("branch_id,S\nx,abc\n".as_bytes()).is_err());
    }

    #[test]
    fn comparison_reports_changed_branches() {
        let inst = parse_instance(DOC).unwrap();
        let lot11 = inst.lots.iter().position(|l| l.pieces_per_size() == [1, 1]).unwrap();
        let lot22 = inst.lots.iter().position(|l| l.pieces_per_size() == [2, 2]).unwrap();
        let make = |plan: Vec<Assignment>| {
            let sol = Solution::from_plan(&inst, Plan::new(plan), Status::Feasible, SolverKind::Sfa, Duration::ZERO).unwrap();
            SolutionDocument::new(&inst, &sol).unwrap()
        };
        let a = make(vec![Assignment::new(lot11, 2), Assignment::new(lot22, 2)]);
        let b = make(vec![Assignment::new(lot11, 2), Assignment::new(lot11, 2)]);
        let same = compare_solutions(&a, &a).unwrap();
        assert!(same.diff.is_empty());
        assert_eq!(same.objective_delta, 0.0);
        let cmp = compare_solutions(&a, &b).unwrap();
        assert_eq!(cmp.diff.len(), 1);
        assert_eq!(cmp.diff[0].branch_id, "south");
        assert_eq!(cmp.objective_delta, 4.0);
        assert_eq!(cmp.total_pieces_delta, -4);
        assert_eq!(cmp.distinct_lots, (2, 1));

        let mut c = b.clone();
        c.branches[0].branch_id = "east".into();
        assert!(compare_solutions(&a, &c).is_err());
    }
}
