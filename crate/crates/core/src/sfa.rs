//! Score-Fix-Adjust, the anytime heuristic.
//!
//! 1. **Score.** For every branch, rank all lot-types by the deviation they
//!    reach at their best multiplicity (capacity ignored). A lot-type at rank
//!    `r` earns `rank_weights[r]`; scores are summed over branches.
//! 2. **Fix.** Visit `k`-subsets of lot-types in non-increasing order of
//!    their score sums ([`SubsetStream`]).
//! 3. **Adjust.** Give each branch its cheapest option inside the fixed
//!    subset, then repair the capacity interval with greedy single-branch
//!    moves ([`adjust`]).
//!
//! The best plan seen so far is kept, so the search can be stopped at any time
//! by a subset budget, a wall-clock budget or a [`CancelToken`].
//!
//! With `k = 1` and every lot-type visited the result is optimal for any of
//! the supported norms: per-branch costs are convex in the multiplicity, so
//! greedy unit steps of least marginal cost solve each single-lot
//! subproblem exactly.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{CancelToken, StopCheck};
use crate::error::{Error, Result};
use crate::model::{
    approx_eq, definitely_less, deviation, evaluate_plan, optional_duration_secs, Assignment, Instance, LotType, Norm, Plan,
    Solution, SolverKind, Status,
};

/// How adjust moves are ranked.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveMetric {
    /// Cost increase per piece moved toward the interval.
    #[default]
    PerPiece,
    /// Plain cost increase.
    Absolute,
}

/// Which changes adjust may make to a branch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjustScope {
    /// Any lot-type of the fixed subset and any multiplicity.
    #[default]
    LotAndMultiplicity,
    /// Keep the branch's lot-type, change only the multiplicity.
    MultiplicityOnly,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjustOptions {
    #[serde(default)]
    pub metric: MoveMetric,
    #[serde(default)]
    pub scope: AdjustScope,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SfaParams {
    /// Weight earned by the lot-type at each rank; its length is the rank
    /// depth. Must be non-negative and non-increasing with a positive head.
    pub rank_weights: Vec<f64>,
    /// Maximum number of subsets to fix.
    pub subset_budget: u64,
    #[serde(default, with = "optional_duration_secs")]
    pub time_budget: Option<Duration>,
    #[serde(default)]
    pub adjust: AdjustOptions,
    #[serde(skip)]
    pub cancel: Option<CancelToken>,
}

impl Default for SfaParams {
    fn default() -> Self {
        SfaParams {
            rank_weights: borda_weights(5),
            subset_budget: 1000,
            time_budget: Some(Duration::from_secs(1)),
            adjust: AdjustOptions::default(),
            cancel: None,
        }
    }
}

impl SfaParams {
    /// Reproducible configuration: stops only on the subset budget.
    pub fn with_subset_budget(subset_budget: u64) -> Self {
        SfaParams { subset_budget, time_budget: None, ..Default::default() }
    }

    pub fn rank_depth(&self) -> usize {
        self.rank_weights.len()
    }

    fn check(&self) -> Result<()> {
        let w = &self.rank_weights;
        let ok = w.first().is_some_and(|&h| h > 0.0)
            && w.iter().all(|&x| x.is_finite() && x >= 0.0)
            && w.windows(2).all(|p| p[0] >= p[1]);
        if ok {
            Ok(())
        } else {
            Err(Error::Schema(
                "rank weights must be non-negative, non-increasing and start positive".into(),
            ))
        }
    }
}

/// `(depth, depth − 1, …, 1)`.
pub fn borda_weights(depth: usize) -> Vec<f64> {
    (1..=depth).rev().map(|w| w as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedOption {
    pub lot: usize,
    pub multiplicity: u32,
    pub cost: f64,
}

/// Best multiplicity of every lot for one demand row, cheapest first.
///
/// Multiplicity ties go to the smaller `m`; cost ties to the smaller lot index.
pub fn rank_options(demand_row: &[f64], lots: &[LotType], max_m: u32, norm: Norm) -> Vec<RankedOption> {
    let mut ranked: Vec<RankedOption> = lots
        .iter()
        .enumerate()
        .map(|(l, lot)| {
            let mut best = RankedOption { lot: l, multiplicity: 1, cost: deviation(demand_row, lot, 1, norm) };
            for m in 2..=max_m {
                let cost = deviation(demand_row, lot, m, norm);
                if definitely_less(cost, best.cost) {
                    best = RankedOption { lot: l, multiplicity: m, cost };
                }
            }
            best
        })
        .collect();
    ranked.sort_by(|a, b| a.cost.total_cmp(&b.cost).then(a.lot.cmp(&b.lot)));
    ranked
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    /// Total score per lot-type.
    pub scores: Vec<f64>,
    /// Per branch, the full ranking from [`rank_options`].
    pub rankings: Vec<Vec<RankedOption>>,
}

impl ScoreTable {
    /// Best (multiplicity, cost) of every lot, indexed `[branch][lot]`.
    fn best_by_lot(&self, lots: usize) -> Vec<Vec<(u32, f64)>> {
        self.rankings
            .iter()
            .map(|ranking| {
                let mut row = vec![(0, f64::INFINITY); lots];
                for r in ranking {
                    row[r.lot] = (r.multiplicity, r.cost);
                }
                row
            })
            .collect()
    }
}

pub fn score_lots(instance: &Instance, params: &SfaParams) -> Result<ScoreTable> {
    instance.check()?;
    params.check()?;
    Ok(score_unchecked(instance, &params.rank_weights))
}

fn score_unchecked(instance: &Instance, weights: &[f64]) -> ScoreTable {
    let rankings: Vec<Vec<RankedOption>> = (0..instance.branch_count())
        .into_par_iter()
        .map(|b| rank_options(instance.demand.row(b), &instance.lots, instance.max_multiplicity, instance.norm))
        .collect();
    let mut scores = vec![0.0; instance.lots.len()];
    for ranking in &rankings {
        for (r, opt) in ranking.iter().take(weights.len()).enumerate() {
            scores[opt.lot] += weights[r];
        }
    }
    ScoreTable { scores, rankings }
}

/// A fixed subset of lot indices (ascending) and its score sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedSubset {
    pub lots: Vec<usize>,
    pub score_sum: f64,
}

#[derive(Debug)]
struct Frontier {
    score_sum: f64,
    lots: Vec<usize>,
    positions: Vec<usize>,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    // Max-heap: larger sum first, then lexicographically smaller lot tuple.
    fn cmp(&self, other: &Self) -> Ordering {
        self.score_sum
            .total_cmp(&other.score_sum)
            .then_with(|| other.lots.cmp(&self.lots))
    }
}

/// Lazy best-first stream of `k`-subsets in non-increasing score-sum order.
///
/// Lots are sorted by score (descending, index ascending) and subsets are
/// tuples of positions in that order. Advancing one position by one step
/// never raises the sum, so popping a max-heap and pushing the single-step
/// successors yields every subset exactly once in order. Equal sums come out
/// in lexicographic order of their sorted lot indices.
#[derive(Debug)]
pub struct SubsetStream {
    scores: Vec<f64>,
    order: Vec<usize>,
    heap: BinaryHeap<Frontier>,
    seen: HashSet<Vec<usize>>,
    remaining: u64,
}

impl SubsetStream {
    pub fn new(scores: &[f64], k: usize, budget: u64) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut stream = SubsetStream {
            scores: scores.to_vec(),
            order,
            heap: BinaryHeap::new(),
            seen: HashSet::new(),
            remaining: budget,
        };
        if k >= 1 && k <= scores.len() {
            stream.push((0..k).collect());
        }
        stream
    }

    fn push(&mut self, positions: Vec<usize>) {
        if !self.seen.insert(positions.clone()) {
            return;
        }
        let mut lots: Vec<usize> = positions.iter().map(|&p| self.order[p]).collect();
        lots.sort_unstable();
        // Summed in lot-index order so equal sets always get equal sums.
        let score_sum = lots.iter().map(|&l| self.scores[l]).sum();
        self.heap.push(Frontier { score_sum, lots, positions });
    }
}

impl Iterator for SubsetStream {
    type Item = FixedSubset;

    fn next(&mut self) -> Option<FixedSubset> {
        if self.remaining == 0 {
            return None;
        }
        let top = self.heap.pop()?;
        self.remaining -= 1;
        let n = self.order.len();
        let k = top.positions.len();
        for i in 0..k {
            let limit = if i + 1 < k { top.positions[i + 1] } else { n };
            if top.positions[i] + 1 < limit {
                let mut next = top.positions.clone();
                next[i] += 1;
                self.push(next);
            }
        }
        Some(FixedSubset { lots: top.lots, score_sum: top.score_sum })
    }
}

/// `k`-subsets of the scored lots in decreasing score-sum order, at most
/// `subset_budget` of them.
pub fn fix_subsets(scores: &ScoreTable, k: usize, subset_budget: u64) -> SubsetStream {
    SubsetStream::new(&scores.scores, k, subset_budget)
}

/// Capacity-ignorant cheapest option per branch within `subset`.
pub fn initial_assignment(instance: &Instance, subset: &[usize]) -> Plan {
    Plan::new(
        (0..instance.branch_count())
            .map(|b| {
                let ranked = rank_options(instance.demand.row(b), &instance.lots, instance.max_multiplicity, instance.norm);
                cheapest_in(subset, |l| {
                    let r = ranked.iter().find(|r| r.lot == l).expect("every lot is ranked");
                    (r.multiplicity, r.cost)
                })
            })
            .collect(),
    )
}

fn cheapest_in(subset: &[usize], best: impl Fn(usize) -> (u32, f64)) -> Assignment {
    let mut sorted = subset.to_vec();
    sorted.sort_unstable();
    let mut choice: Option<(Assignment, f64)> = None;
    for l in sorted {
        let (m, cost) = best(l);
        if choice.is_none_or(|(_, c)| definitely_less(cost, c)) {
            choice = Some((Assignment::new(l, m), cost));
        }
    }
    choice.expect("subset is nonempty").0
}

/// Adjust could not reach the capacity interval within this subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("capacity interval unreachable within the fixed subset")]
pub struct InfeasibleSubset;

#[derive(Debug, Clone, Copy)]
struct Move {
    branch: usize,
    lot: usize,
    multiplicity: u32,
    rate: f64,
    gain: u64,
}

impl Move {
    fn better_than(&self, other: &Move) -> bool {
        if approx_eq(self.rate, other.rate) {
            (self.gain, self.branch, self.lot, self.multiplicity)
                < (other.gain, other.branch, other.lot, other.multiplicity)
        } else {
            self.rate < other.rate
        }
    }
}

fn distance(total: u64, lo: u64, hi: u64) -> u64 {
    if total < lo {
        lo - total
    } else {
        total.saturating_sub(hi)
    }
}

/// Greedily repair the capacity interval.
///
/// While the total is below `cap_lo`, apply the single-branch move that adds
/// pieces at the least cost per piece; above `cap_hi`, the move that removes
/// pieces at the least cost per piece. Only moves that strictly shrink the
/// distance to the interval are eligible, so the loop terminates. Ties go to
/// the smaller piece change, then the lower branch index.
pub fn adjust(
    instance: &Instance,
    subset: &[usize],
    initial: &Plan,
    options: AdjustOptions,
) -> std::result::Result<Plan, InfeasibleSubset> {
    let (lo, hi) = (instance.cap_lo, instance.cap_hi);
    let mut plan = initial.clone();
    let pieces = |a: &Assignment| u64::from(a.multiplicity) * instance.lots[a.lot].pieces();
    let mut total: u64 = plan.assignments().iter().map(pieces).sum();

    loop {
        let dist = distance(total, lo, hi);
        if dist == 0 {
            return Ok(plan);
        }
        let raise = total < lo;
        let mut best: Option<Move> = None;
        for (b, current) in plan.assignments().iter().enumerate() {
            let current_pieces = pieces(current);
            let current_cost = instance.cost(b, current.lot, current.multiplicity);
            let single = [current.lot];
            let lots: &[usize] = match options.scope {
                AdjustScope::LotAndMultiplicity => subset,
                AdjustScope::MultiplicityOnly => &single,
            };
            for &l in lots {
                let lot_pieces = instance.lots[l].pieces();
                for m in 1..=instance.max_multiplicity {
                    let p = u64::from(m) * lot_pieces;
                    let gain = if raise {
                        if p <= current_pieces {
                            continue;
                        }
                        p - current_pieces
                    } else {
                        if p >= current_pieces {
                            continue;
                        }
                        current_pieces - p
                    };
                    let new_total = if raise { total + gain } else { total - gain };
                    if distance(new_total, lo, hi) >= dist {
                        continue;
                    }
                    let delta = instance.cost(b, l, m) - current_cost;
                    let rate = match options.metric {
                        MoveMetric::PerPiece => delta / gain as f64,
                        MoveMetric::Absolute => delta,
                    };
                    let mv = Move { branch: b, lot: l, multiplicity: m, rate, gain };
                    if best.as_ref().is_none_or(|cur| mv.better_than(cur)) {
                        best = Some(mv);
                    }
                }
            }
        }
        let mv = best.ok_or(InfeasibleSubset)?;
        let old = plan.0[mv.branch];
        total = total - pieces(&old) + u64::from(mv.multiplicity) * instance.lots[mv.lot].pieces();
        plan.0[mv.branch] = Assignment::new(mv.lot, mv.multiplicity);
    }
}

/// One line of the anytime trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub ordinal: u64,
    pub subset: Vec<usize>,
    pub score_sum: f64,
    /// `None` when adjust found the subset infeasible.
    pub objective: Option<f64>,
    pub best_so_far: Option<f64>,
}

pub fn solve_sfa(instance: &Instance, params: &SfaParams) -> Result<Solution> {
    solve_sfa_with_trace(instance, params, |_| {})
}

/// [`solve_sfa`], reporting every processed subset.
pub fn solve_sfa_with_trace(
    instance: &Instance,
    params: &SfaParams,
    mut trace: impl FnMut(&TraceRecord),
) -> Result<Solution> {
    let start = Instant::now();
    instance.check()?;
    params.check()?;
    let stop = StopCheck::new(start, params.time_budget, params.cancel.clone());

    let table = score_unchecked(instance, &params.rank_weights);
    let best_by_lot = table.best_by_lot(instance.lots.len());
    let k = instance.k.min(instance.lots.len());

    let mut best: Option<(f64, Vec<usize>, Plan)> = None;
    let mut last_subset_time = Duration::ZERO;
    for (i, fixed) in fix_subsets(&table, k, params.subset_budget).enumerate() {
        if stop.should_stop(last_subset_time) {
            break;
        }
        let subset_start = Instant::now();
        let initial = Plan::new(
            best_by_lot
                .iter()
                .map(|row| cheapest_in(&fixed.lots, |l| row[l]))
                .collect(),
        );
        let objective = match adjust(instance, &fixed.lots, &initial, params.adjust) {
            Ok(plan) => {
                let eval = evaluate_plan(instance, &plan)?;
                debug_assert!(eval.feasible());
                let replace = match &best {
                    None => true,
                    Some((obj, subset, incumbent)) => {
                        if approx_eq(eval.objective, *obj) {
                            eval.objective <= *obj && (&fixed.lots, &plan) < (subset, incumbent)
                        } else {
                            eval.objective < *obj
                        }
                    }
                };
                if replace {
                    best = Some((eval.objective, fixed.lots.clone(), plan));
                }
                Some(eval.objective)
            }
            Err(InfeasibleSubset) => None,
        };
        trace(&TraceRecord {
            ordinal: i as u64 + 1,
            subset: fixed.lots,
            score_sum: fixed.score_sum,
            objective,
            best_so_far: best.as_ref().map(|b| b.0),
        });
        last_subset_time = subset_start.elapsed();
    }

    let (_, _, plan) = best.ok_or(Error::Infeasible)?;
    Solution::from_plan(instance, plan, Status::Feasible, SolverKind::Sfa, start.elapsed())
}
