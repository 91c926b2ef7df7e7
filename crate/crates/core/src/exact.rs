//! Exact solver.
//!
//! Fixing the set of lot-types a plan may use turns the problem into a
//! multiple-choice knapsack: every branch picks exactly one (lot, multiplicity)
//! option, and the total piece count must land in `[cap_lo, cap_hi]`. That
//! restricted problem is solved exactly by a dynamic program over the running
//! piece total. Enumerating every subset of at most `k` lot-types and keeping
//! the best restricted optimum is equivalent to the integer program with
//! assignment, lot-budget, linking and capacity constraints.
//!
//! Subsets are visited in order of a capacity-free lower bound (the sum over
//! branches of the best option in the subset), so once the bound exceeds the
//! incumbent the remaining subsets can be skipped without losing optimality.
//!
//! Per subset the DP does `O(|B| · cap_hi · |subset| · M)` work and stores one
//! choice index per reachable (branch, total) state.

use std::time::{Duration, Instant};

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{CancelToken, StopCheck};
use crate::error::{Error, Result};
use crate::model::{
    approx_eq, optional_duration_secs, definitely_less, Assignment, Instance, Plan, Solution, SolverKind, Status,
};

/// Largest subset count that is materialised and sorted by lower bound.
/// Larger lattices are streamed in lexicographic order with per-subset pruning.
const SORTED_SUBSET_LIMIT: u128 = 1 << 18;

/// Subsets handed to the worker pool at once. Pruning uses the incumbent from
/// completed batches only, so results do not depend on thread scheduling.
const BATCH: usize = 64;

/// Guard for [`brute_force`].
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExactLimits {
    /// Maximum number of subsets whose DP is actually run.
    #[serde(default)]
    pub max_subsets: Option<u64>,
    #[serde(default, with = "optional_duration_secs")]
    pub deadline: Option<Duration>,
    #[serde(skip)]
    pub cancel: Option<CancelToken>,
}

impl ExactLimits {
    pub fn unlimited() -> Self {
        Self::default()
    }

    /// Upper end of the DP's piece axis.
    pub fn dp_piece_cap(instance: &Instance) -> u64 {
        instance.cap_hi
    }
}

/// One (lot, multiplicity) choice available to a branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchOption {
    pub lot: usize,
    pub multiplicity: u32,
    pub pieces: u64,
    pub cost: f64,
}

/// The problem restricted to a fixed set of lot-types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSubproblem {
    pub lot_subset: Vec<usize>,
    /// Per branch, options ordered by (lot, multiplicity).
    pub options: Vec<Vec<BranchOption>>,
}

impl SubsetSubproblem {
    /// Options with more pieces than `cap_hi` are dropped. Fails with
    /// [`Error::Infeasible`] if a branch is left without any option.
    pub fn build(instance: &Instance, lot_subset: &[usize]) -> Result<Self> {
        let mut lot_subset = lot_subset.to_vec();
        lot_subset.sort_unstable();
        lot_subset.dedup();
        if let Some(&bad) = lot_subset.iter().find(|&&l| l >= instance.lots.len()) {
            return Err(Error::Schema(format!("lot index {bad} out of range")));
        }
        let mut options = Vec::with_capacity(instance.branch_count());
        for b in 0..instance.branch_count() {
            let mut row = Vec::with_capacity(lot_subset.len() * instance.max_multiplicity as usize);
            for &l in &lot_subset {
                let lot_pieces = instance.lots[l].pieces();
                for m in 1..=instance.max_multiplicity {
                    let pieces = u64::from(m) * lot_pieces;
                    if pieces > instance.cap_hi {
                        break;
                    }
                    row.push(BranchOption { lot: l, multiplicity: m, pieces, cost: instance.cost(b, l, m) });
                }
            }
            if row.is_empty() {
                return Err(Error::Infeasible);
            }
            options.push(row);
        }
        Ok(SubsetSubproblem { lot_subset, options })
    }

    /// Minimum-cost plan with total pieces in `[cap_lo, cap_hi]`, if any.
    pub fn solve(&self, cap_lo: u64, cap_hi: u64) -> Option<Plan> {
        let branches = self.options.len();
        let range = |row: &[BranchOption]| {
            let min = row.iter().map(|o| o.pieces).min().unwrap_or(0);
            let max = row.iter().map(|o| o.pieces).max().unwrap_or(0);
            (min, max)
        };
        let mut suffix_min = vec![0u64; branches + 1];
        let mut suffix_max = vec![0u64; branches + 1];
        for b in (0..branches).rev() {
            let (min, max) = range(&self.options[b]);
            suffix_min[b] = suffix_min[b + 1] + min;
            suffix_max[b] = suffix_max[b + 1] + max;
        }
        if suffix_min[0] > cap_hi || suffix_max[0] < cap_lo {
            return None;
        }

        // Layer b holds costs for totals in [lo, lo + len) after branches < b.
        let mut lo = 0u64;
        let mut prev = vec![0.0f64];
        let mut layers: Vec<(u64, Vec<u32>)> = Vec::with_capacity(branches);
        for b in 0..branches {
            let (min, max) = range(&self.options[b]);
            let hi = lo + prev.len() as u64 - 1;
            let new_lo = (lo + min).max(cap_lo.saturating_sub(suffix_max[b + 1]));
            let new_hi = (hi + max).min(cap_hi - suffix_min[b + 1]);
            if new_lo > new_hi {
                return None;
            }
            let width = (new_hi - new_lo + 1) as usize;
            let mut cur = vec![f64::INFINITY; width];
            let mut choice = vec![u32::MAX; width];
            for (offset, &base) in prev.iter().enumerate() {
                if base.is_infinite() {
                    continue;
                }
                let t = lo + offset as u64;
                for (oi, opt) in self.options[b].iter().enumerate() {
                    let nt = t + opt.pieces;
                    if nt < new_lo || nt > new_hi {
                        continue;
                    }
                    let slot = (nt - new_lo) as usize;
                    let value = base + opt.cost;
                    if cur[slot].is_infinite() || definitely_less(value, cur[slot]) {
                        cur[slot] = value;
                        choice[slot] = oi as u32;
                    }
                }
            }
            layers.push((new_lo, choice));
            lo = new_lo;
            prev = cur;
        }

        let mut best: Option<(u64, f64)> = None;
        for (offset, &value) in prev.iter().enumerate() {
            let t = lo + offset as u64;
            if value.is_infinite() || t < cap_lo || t > cap_hi {
                continue;
            }
            if best.is_none_or(|(_, v)| definitely_less(value, v)) {
                best = Some((t, value));
            }
        }
        let (mut t, _) = best?;

        let mut assignments = vec![Assignment::new(0, 0); branches];
        for b in (0..branches).rev() {
            let (layer_lo, choice) = &layers[b];
            let oi = choice[(t - layer_lo) as usize] as usize;
            let opt = self.options[b][oi];
            assignments[b] = Assignment::new(opt.lot, opt.multiplicity);
            t -= opt.pieces;
        }
        debug_assert_eq!(t, 0);
        Some(Plan::new(assignments))
    }
}

/// Optimal plan using only lot-types from `lot_subset`.
pub fn solve_subset(instance: &Instance, lot_subset: &[usize]) -> Result<Solution> {
    let start = Instant::now();
    instance.check()?;
    if lot_subset.len() > instance.k {
        return Err(Error::Schema(format!(
            "subset of {} lot-types exceeds k = {}",
            lot_subset.len(),
            instance.k
        )));
    }
    let sub = SubsetSubproblem::build(instance, lot_subset)?;
    let plan = sub.solve(instance.cap_lo, instance.cap_hi).ok_or(Error::Infeasible)?;
    Solution::from_plan(instance, plan, Status::Optimal, SolverKind::Exact, start.elapsed())
}

/// One line of the exact solver's search log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub ordinal: u64,
    pub subset: Vec<usize>,
    pub lower_bound: f64,
    /// `None` when the subset has no feasible plan.
    pub objective: Option<f64>,
    pub best_objective: Option<f64>,
}

#[derive(Debug, Clone)]
struct Candidate {
    objective: f64,
    subset: Vec<usize>,
    plan: Plan,
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        // Near-ties prefer the smaller key but never raise the incumbent.
        if approx_eq(self.objective, other.objective) {
            self.objective <= other.objective && (&self.subset, &self.plan) < (&other.subset, &other.plan)
        } else {
            self.objective < other.objective
        }
    }
}

fn binomial(n: usize, r: usize) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Number of nonempty subsets of at most `k` out of `n` lot-types.
pub fn subset_count(n: usize, k: usize) -> u128 {
    (1..=k.min(n)).map(|s| binomial(n, s)).fold(0u128, u128::saturating_add)
}

/// Optimal solution over all subsets of at most `k` lot-types.
pub fn solve_exact(instance: &Instance, limits: &ExactLimits) -> Result<Solution> {
    solve_exact_with_log(instance, limits, |_| {})
}

/// [`solve_exact`], reporting every subset whose DP was run.
pub fn solve_exact_with_log(
    instance: &Instance,
    limits: &ExactLimits,
    mut log: impl FnMut(&SearchRecord),
) -> Result<Solution> {
    let start = Instant::now();
    instance.check()?;
    let stop = StopCheck::new(start, limits.deadline, limits.cancel.clone());
    let lots = instance.lots.len();
    let k = instance.k.min(lots);

    // Capacity-free best cost of each (branch, lot) pair.
    let best_by_lot: Vec<Vec<f64>> = (0..instance.branch_count())
        .into_par_iter()
        .map(|b| {
            (0..lots)
                .map(|l| {
                    (1..=instance.max_multiplicity)
                        .map(|m| instance.cost(b, l, m))
                        .fold(f64::INFINITY, f64::min)
                })
                .collect()
        })
        .collect();
    let lower_bound = |subset: &[usize]| -> f64 {
        best_by_lot
            .iter()
            .map(|row| subset.iter().map(|&l| row[l]).fold(f64::INFINITY, f64::min))
            .sum()
    };

    let all_subsets = || (1..=k).flat_map(move |size| (0..lots).combinations(size));
    let sorted = subset_count(lots, k) <= SORTED_SUBSET_LIMIT;
    let mut source: Box<dyn Iterator<Item = (f64, Vec<usize>)>> = if sorted {
        let mut v: Vec<(f64, Vec<usize>)> = all_subsets().map(|s| (lower_bound(&s), s)).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        Box::new(v.into_iter())
    } else {
        Box::new(all_subsets().map(|s| (lower_bound(&s), s)))
    };

    let mut best: Option<Candidate> = None;
    let mut solved = 0u64;
    let mut truncated = false;
    let mut exhausted = false;
    while !exhausted {
        if stop.should_stop(Duration::ZERO) {
            truncated = true;
            break;
        }
        let room = limits.max_subsets.map_or(BATCH as u64, |max| (max - solved).min(BATCH as u64));
        if room == 0 {
            // Budget spent; finished only if nothing unpruned remains.
            truncated = source.any(|(lb, _)| !pruned(lb, best.as_ref()));
            break;
        }
        let mut batch = Vec::with_capacity(room as usize);
        while batch.len() < room as usize {
            match source.next() {
                None => {
                    exhausted = true;
                    break;
                }
                Some((lb, subset)) => {
                    if pruned(lb, best.as_ref()) {
                        if sorted {
                            // Bounds are ascending; everything left is pruned too.
                            exhausted = true;
                            break;
                        }
                        continue;
                    }
                    batch.push((lb, subset));
                }
            }
        }

        let results: Vec<Option<Plan>> = batch
            .par_iter()
            .map(|(_, subset)| {
                SubsetSubproblem::build(instance, subset)
                    .ok()
                    .and_then(|sub| sub.solve(instance.cap_lo, instance.cap_hi))
            })
            .collect();

        for ((lb, subset), plan) in batch.into_iter().zip(results) {
            solved += 1;
            let objective = match plan {
                Some(plan) => {
                    let eval = crate::model::evaluate_plan(instance, &plan)?;
                    let cand = Candidate { objective: eval.objective, subset: subset.clone(), plan };
                    if best.as_ref().is_none_or(|b| cand.beats(b)) {
                        best = Some(cand);
                    }
                    Some(eval.objective)
                }
                None => None,
            };
            log(&SearchRecord {
                ordinal: solved,
                subset,
                lower_bound: lb,
                objective,
                best_objective: best.as_ref().map(|b| b.objective),
            });
        }
    }

    let status = if truncated { Status::TimeoutBestKnown } else { Status::Optimal };
    match best {
        Some(best) => Solution::from_plan(instance, best.plan, status, SolverKind::Exact, start.elapsed()),
        None if truncated => Err(Error::Timeout),
        None => Err(Error::Infeasible),
    }
}

fn pruned(lower_bound: f64, best: Option<&Candidate>) -> bool {
    best.is_some_and(|b| definitely_less(b.objective, lower_bound))
}

/// Exhaustive search over every (lot, multiplicity) assignment. Only meant as
/// a test oracle for tiny instances.
pub fn brute_force(instance: &Instance) -> Result<Solution> {
    let start = Instant::now();
    instance.check()?;
    let branches = instance.branch_count();
    let m_max = instance.max_multiplicity as usize;
    let per_branch = instance.lots.len() * m_max;
    let combinations = (per_branch as f64).powi(branches as i32);
    if combinations > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge { combinations, limit: BRUTE_FORCE_LIMIT });
    }

    let option = |idx: usize| Assignment::new(idx / m_max, (idx % m_max) as u32 + 1);
    let costs: Vec<Vec<f64>> = (0..branches)
        .map(|b| {
            (0..per_branch)
                .map(|i| {
                    let a = option(i);
                    instance.cost(b, a.lot, a.multiplicity)
                })
                .collect()
        })
        .collect();
    let pieces: Vec<u64> = (0..per_branch)
        .map(|i| {
            let a = option(i);
            u64::from(a.multiplicity) * instance.lots[a.lot].pieces()
        })
        .collect();

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut digits = vec![0usize; branches];
    let mut used = Vec::with_capacity(branches);
    'outer: loop {
        let total: u64 = digits.iter().map(|&d| pieces[d]).sum();
        if (instance.cap_lo..=instance.cap_hi).contains(&total) {
            used.clear();
            used.extend(digits.iter().map(|&d| d / m_max));
            used.sort_unstable();
            used.dedup();
            if used.len() <= instance.k {
                let cost: f64 = digits.iter().enumerate().map(|(b, &d)| costs[b][d]).sum();
                // Lexicographic enumeration: the first of equal plans wins.
                if best.as_ref().is_none_or(|(c, _)| definitely_less(cost, *c)) {
                    best = Some((cost, digits.clone()));
                }
            }
        }
        for pos in (0..branches).rev() {
            digits[pos] += 1;
            if digits[pos] < per_branch {
                continue 'outer;
            }
            digits[pos] = 0;
        }
        break;
    }

    let (_, digits) = best.ok_or(Error::Infeasible)?;
    let plan = Plan::new(digits.into_iter().map(option).collect());
    Solution::from_plan(instance, plan, Status::Optimal, SolverKind::BruteForce, start.elapsed())
}
