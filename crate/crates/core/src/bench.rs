//! Synthetic instances and heuristic-vs-exact gap reports.
//!
//! Demand is drawn per branch as a log-normal volume times a Dirichlet size
//! mix, then scaled so the total sits at the center of the capacity interval.
//! `(profile, seed)` fully determines the instance.

use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal};
use serde::{Deserialize, Serialize};

use crate::demand::scale_to_capacity;
use crate::error::{Error, Result};
use crate::exact::{solve_exact, subset_count, ExactLimits};
use crate::lots::{enumerate_lots, LotGeneratorSpec};
use crate::model::{approx_eq, DemandTable, Instance, Norm, SizeSet, Status, TOLERANCE};
use crate::sfa::{solve_sfa, SfaParams};

/// Rows of the published parameter table: branches, capacity interval, M.
const TABLE1: [(usize, u64, u64, u32); 9] = [
    (1119, 10_630, 11_749, 10),
    (1091, 10_000, 12_000, 10),
    (1030, 9_785, 10_815, 10),
    (1119, 10_573, 11_686, 9),
    (1175, 16_744, 18_506, 15),
    (1030, 11_000, 13_000, 9),
    (1098, 15_646, 17_293, 9),
    (989, 11_274, 12_461, 9),
    (808, 9_211, 10_181, 10),
];

/// Branch count of the desk-scale profiles.
pub const DESK_BRANCHES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceProfile {
    pub name: String,
    pub branch_count: usize,
    pub sizes: Vec<String>,
    pub cap_lo: u64,
    pub cap_hi: u64,
    pub lot_generator: LotGeneratorSpec,
    #[serde(rename = "M")]
    pub max_multiplicity: u32,
    pub k: usize,
    /// `(mu, sigma)` of the per-branch volume.
    pub volume_lognormal: (f64, f64),
    /// Concentration of the per-branch size mix, one entry per size.
    pub size_dirichlet: Vec<f64>,
    pub seed: u64,
}

fn five_sizes() -> Vec<String> {
    ["S", "M", "L", "XL", "XXL"].map(String::from).to_vec()
}

impl InstanceProfile {
    pub fn size_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Commodity group `group` (1..=9) at full size with the 243-lot universe.
    pub fn table1(group: usize) -> Self {
        let (branches, lo, hi, m) = TABLE1[group - 1];
        InstanceProfile {
            name: format!("table1-g{group}-full"),
            branch_count: branches,
            sizes: five_sizes(),
            cap_lo: lo,
            cap_hi: hi,
            lot_generator: LotGeneratorSpec::table1(),
            max_multiplicity: m,
            k: 5,
            volume_lognormal: (0.0, 0.6),
            size_dirichlet: vec![4.0, 10.0, 12.0, 8.0, 4.0],
            seed: group as u64,
        }
    }

    /// [`Self::table1`] shrunk to [`DESK_BRANCHES`] branches with the capacity
    /// interval scaled by the same factor.
    pub fn table1_desk(group: usize) -> Self {
        let full = Self::table1(group);
        let factor = DESK_BRANCHES as f64 / full.branch_count as f64;
        InstanceProfile {
            name: format!("table1-g{group}"),
            branch_count: DESK_BRANCHES,
            cap_lo: (full.cap_lo as f64 * factor).round() as u64,
            cap_hi: (full.cap_hi as f64 * factor).round() as u64,
            ..full
        }
    }

    /// Desk profile with a 16-lot universe (`{1,2}` per size, 5 to 7 pieces),
    /// small enough for the exact solver at `k ≤ 3`.
    pub fn desk_small_universe(group: usize) -> Self {
        InstanceProfile {
            name: format!("desk16-g{group}"),
            lot_generator: LotGeneratorSpec::uniform(&[1, 2], 5).with_total_bounds(5, 7),
            ..Self::table1_desk(group)
        }
    }

    fn check(&self) -> Result<()> {
        if self.size_dirichlet.len() != self.sizes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.sizes.len(),
                actual: self.size_dirichlet.len(),
            });
        }
        if self.branch_count == 0 {
            return Err(Error::Schema("profile needs at least one branch".into()));
        }
        Ok(())
    }
}

/// Draw an instance from `profile`.
pub fn generate_instance(profile: &InstanceProfile) -> Result<Instance> {
    profile.check()?;
    let sizes = SizeSet::new(profile.sizes.iter().cloned());
    let lots = enumerate_lots(&profile.lot_generator, &sizes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let (mu, sigma) = profile.volume_lognormal;
    let volume = LogNormal::new(mu, sigma).map_err(|e| Error::Schema(format!("volume distribution: {e}")))?;
    let mix = profile
        .size_dirichlet
        .iter()
        .map(|&a| Gamma::new(a, 1.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Schema(format!("size distribution: {e}")))?;

    let rows: Vec<Vec<f64>> = (0..profile.branch_count)
        .map(|_| {
            let v = volume.sample(&mut rng);
            let draws: Vec<f64> = mix.iter().map(|g| g.sample(&mut rng)).collect();
            let total: f64 = draws.iter().sum();
            draws.into_iter().map(|x| v * x / total).collect()
        })
        .collect();
    let demand = scale_to_capacity(&DemandTable::from_rows(rows)?, profile.cap_lo, profile.cap_hi)?;

    Ok(Instance {
        branches: (1..=profile.branch_count).map(|b| format!("B{b:04}")).collect(),
        sizes,
        demand,
        lots,
        k: profile.k,
        max_multiplicity: profile.max_multiplicity,
        cap_lo: profile.cap_lo,
        cap_hi: profile.cap_hi,
        norm: Norm::L1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapFlag {
    /// Gap measured against a proven optimum.
    Optimal,
    /// Exact search was truncated; gap is against the best known plan.
    BestKnown,
    /// Optimum is zero while the heuristic is not.
    UndefinedZeroOptimum,
    /// Exact column not available for this cell.
    NoExact,
    /// Heuristic produced no plan.
    NoHeuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub profile: String,
    pub seed: u64,
    pub k: usize,
    pub branches: usize,
    pub lots: usize,
    pub heuristic_objective: Option<f64>,
    pub exact_objective: Option<f64>,
    pub exact_status: Option<Status>,
    pub gap_percent: Option<f64>,
    pub flag: GapFlag,
    pub heuristic_seconds: f64,
    pub exact_seconds: f64,
    /// Failure messages of either solver.
    pub note: Option<String>,
}

/// `(heuristic − exact) / exact · 100`; zero optimum gives 0 only for a zero
/// heuristic.
pub fn gap_percent(heuristic: f64, exact: f64) -> Option<f64> {
    if approx_eq(exact, 0.0) {
        (heuristic.abs() <= TOLERANCE).then_some(0.0)
    } else {
        Some((heuristic - exact) / exact * 100.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    /// Skip the exact column when the subset lattice is larger than this.
    pub exact_subset_limit: u128,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions { exact_subset_limit: 50_000 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub rows: Vec<GapRow>,
}

fn run_cell(
    profile: &InstanceProfile,
    k: usize,
    sfa: &SfaParams,
    exact: &ExactLimits,
    options: &BenchOptions,
) -> GapRow {
    let mut row = GapRow {
        profile: profile.name.clone(),
        seed: profile.seed,
        k,
        branches: profile.branch_count,
        lots: 0,
        heuristic_objective: None,
        exact_objective: None,
        exact_status: None,
        gap_percent: None,
        flag: GapFlag::NoExact,
        heuristic_seconds: 0.0,
        exact_seconds: 0.0,
        note: None,
    };
    let mut notes = Vec::new();
    let instance = match generate_instance(&InstanceProfile { k, ..profile.clone() }) {
        Ok(i) => i,
        Err(e) => {
            row.note = Some(format!("generation failed: {e}"));
            row.flag = GapFlag::NoHeuristic;
            return row;
        }
    };
    row.lots = instance.lots.len();

    let t = Instant::now();
    match solve_sfa(&instance, sfa) {
        Ok(sol) => row.heuristic_objective = Some(sol.objective),
        Err(e) => notes.push(format!("sfa: {e}")),
    }
    row.heuristic_seconds = t.elapsed().as_secs_f64();

    if subset_count(instance.lots.len(), k) <= options.exact_subset_limit {
        let t = Instant::now();
        match solve_exact(&instance, exact) {
            Ok(sol) => {
                row.exact_objective = Some(sol.objective);
                row.exact_status = Some(sol.status);
            }
            Err(e) => notes.push(format!("exact: {e}")),
        }
        row.exact_seconds = t.elapsed().as_secs_f64();
    } else {
        notes.push("exact: subset lattice too large".into());
    }

    row.flag = match (row.heuristic_objective, row.exact_objective) {
        (None, _) => GapFlag::NoHeuristic,
        (Some(_), None) => GapFlag::NoExact,
        (Some(h), Some(x)) => {
            row.gap_percent = gap_percent(h, x);
            if row.gap_percent.is_none() {
                GapFlag::UndefinedZeroOptimum
            } else if row.exact_status == Some(Status::Optimal) {
                GapFlag::Optimal
            } else {
                GapFlag::BestKnown
            }
        }
    };
    if !notes.is_empty() {
        row.note = Some(notes.join("; "));
    }
    row
}

/// Run SFA and the exact solver on every `(profile, k)` cell. Failures are
/// recorded in the row and the run continues.
pub fn run_benchmark(
    profiles: &[InstanceProfile],
    k_values: &[usize],
    sfa: &SfaParams,
    exact: &ExactLimits,
    options: &BenchOptions,
) -> GapReport {
    let rows = profiles
        .iter()
        .flat_map(|p| k_values.iter().map(move |&k| (p, k)))
        .map(|(p, k)| run_cell(p, k, sfa, exact, options))
        .collect();
    GapReport { rows }
}

fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

impl GapReport {
    /// Median of the defined gaps of rows matching `filter`.
    pub fn median_gap(&self, filter: impl Fn(&GapRow) -> bool) -> Option<f64> {
        median(
            self.rows
                .iter()
                .filter(|r| filter(r))
                .filter_map(|r| r.gap_percent)
                .collect(),
        )
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([
            "profile",
            "seed",
            "k",
            "branches",
            "lots",
            "heuristic_objective",
            "exact_objective",
            "exact_status",
            "gap_percent",
            "flag",
            "heuristic_seconds",
            "exact_seconds",
            "note",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            wtr.write_record([
                r.profile.clone(),
                r.seed.to_string(),
                r.k.to_string(),
                r.branches.to_string(),
                r.lots.to_string(),
                opt(r.heuristic_objective),
                opt(r.exact_objective),
                r.exact_status.map(|s| s.to_string()).unwrap_or_default(),
                opt(r.gap_percent),
                serde_json::to_value(r.flag)?.as_str().unwrap_or_default().to_string(),
                format!("{:.6}", r.heuristic_seconds),
                format!("{:.6}", r.exact_seconds),
                r.note.clone().unwrap_or_default(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Text table: one row per profile, one column per `k`, each cell the
    /// median gap over seeds in percent (`-` where undefined).
    pub fn to_table(&self) -> String {
        let mut profiles: Vec<&str> = Vec::new();
        let mut ks: Vec<usize> = Vec::new();
        for r in &self.rows {
            if !profiles.contains(&r.profile.as_str()) {
                profiles.push(&r.profile);
            }
            if !ks.contains(&r.k) {
                ks.push(r.k);
            }
        }
        ks.sort_unstable();
        let width = profiles.iter().map(|p| p.len()).max().unwrap_or(7).max(7);
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "profile");
        for k in &ks {
            let _ = write!(out, "  {:>10}", format!("k={k}"));
        }
        out.push('\n');
        for p in profiles {
            let _ = write!(out, "{p:<width$}");
            for &k in &ks {
                let cell = self
                    .median_gap(|r| r.profile == p && r.k == k)
                    .map_or_else(|| "-".to_string(), |g| format!("{g:.3} %"));
                let _ = write!(out, "  {cell:>10}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_profile_shape() {
        let p = InstanceProfile::table1_desk(1);
        assert_eq!(p.branch_count, 100);
        assert_eq!((p.cap_lo, p.cap_hi), (950, 1050));
        let inst = generate_instance(&p).unwrap();
        assert!(inst.validate().is_ok());
        assert_eq!(inst.lots.len(), 243);
        assert_eq!(inst.max_multiplicity, 10);
        let center = (p.cap_lo + p.cap_hi) as f64 / 2.0;
        assert!((inst.demand.total() - center).abs() <= 1e-9 * center);
    }

    #[test]
    fn generation_is_deterministic() {
        let p = InstanceProfile::desk_small_universe(3).with_seed(17);
        assert_eq!(generate_instance(&p).unwrap(), generate_instance(&p).unwrap());
        let q = p.clone().with_seed(18);
        assert_ne!(generate_instance(&p).unwrap().demand, generate_instance(&q).unwrap().demand);
    }

    #[test]
    fn small_universe_has_16_lots() {
        let inst = generate_instance(&InstanceProfile::desk_small_universe(1)).unwrap();
        assert_eq!(inst.lots.len(), 16);
    }

    #[test]
    fn gap_definition() {
        assert_eq!(gap_percent(110.0, 100.0), Some(10.0));
        assert_eq!(gap_percent(0.0, 0.0), Some(0.0));
        assert_eq!(gap_percent(1.0, 0.0), None);
    }

    #[test]
    fn tiny_benchmark_gaps_are_nonnegative() {
        let profile = InstanceProfile {
            name: "tiny".into(),
            branch_count: 10,
            lot_generator: LotGeneratorSpec::uniform(&[1, 2], 3),
            sizes: vec!["S".into(), "M".into(), "L".into()],
            size_dirichlet: vec![2.0, 3.0, 2.0],
            cap_lo: 60,
            cap_hi: 70,
            max_multiplicity: 4,
            ..InstanceProfile::table1_desk(1)
        };
        let report = run_benchmark(
            &[profile],
            &[1, 2],
            &SfaParams::with_subset_budget(1000),
            &ExactLimits::default(),
            &BenchOptions::default(),
        );
        assert_eq!(report.rows.len(), 2);
        for r in &report.rows {
            assert_eq!(r.lots, 8);
            assert_eq!(r.flag, GapFlag::Optimal, "{r:?}");
            assert!(r.gap_percent.unwrap() >= -1e-7);
        }
        assert!(report.rows[0].gap_percent.unwrap().abs() < 1e-7);
        let table = report.to_table();
        assert!(table.contains("k=1") && table.contains("tiny"));
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 3);
    }

    #[test]
    fn exact_column_skipped_for_large_lattices() {
        let profile = InstanceProfile {
            branch_count: 20,
            cap_lo: 190,
            cap_hi: 210,
            ..InstanceProfile::table1_desk(2)
        };
        let report = run_benchmark(
            &[profile],
            &[5],
            &SfaParams::with_subset_budget(5),
            &ExactLimits::default(),
            &BenchOptions::default(),
        );
        assert_eq!(report.rows[0].flag, GapFlag::NoExact);
        assert!(report.rows[0].note.as_deref().unwrap().contains("too large"));
    }
}
