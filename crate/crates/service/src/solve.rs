//! Solver dispatch shared by the CLI and the HTTP service.

use std::time::Duration;

use lotdesign::exact::solve_exact_with_log;
use lotdesign::io::SolutionDocument;
use lotdesign::sfa::solve_sfa_with_trace;
use lotdesign::{CancelToken, Error, ExactLimits, Instance, SfaParams, Solution, Status};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    Exact,
    Sfa,
}

#[derive(Debug, Clone)]
pub enum SolverParams {
    Exact(ExactLimits),
    Sfa(SfaParams),
}

impl SolverParams {
    /// Parse solver-specific parameters; `null` or absent gives defaults.
    pub fn parse(solver: SolverChoice, params: Option<serde_json::Value>) -> serde_json::Result<Self> {
        let value = params.unwrap_or(serde_json::Value::Null);
        let value = if value.is_null() { serde_json::json!({}) } else { value };
        Ok(match solver {
            SolverChoice::Exact => SolverParams::Exact(serde_json::from_value(value)?),
            SolverChoice::Sfa => SolverParams::Sfa(serde_json::from_value(value)?),
        })
    }

    pub fn choice(&self) -> SolverChoice {
        match self {
            SolverParams::Exact(_) => SolverChoice::Exact,
            SolverParams::Sfa(_) => SolverChoice::Sfa,
        }
    }

    /// Heuristic wall-clock budget, if any.
    pub fn time_budget(&self) -> Option<Duration> {
        match self {
            SolverParams::Exact(l) => l.deadline,
            SolverParams::Sfa(p) => p.time_budget,
        }
    }

    pub fn set_cancel(&mut self, token: CancelToken) {
        match self {
            SolverParams::Exact(l) => l.cancel = Some(token),
            SolverParams::Sfa(p) => p.cancel = Some(token),
        }
    }
}

/// Fields of the instance a caller may override per solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub k: Option<usize>,
    #[serde(rename = "M")]
    pub max_multiplicity: Option<u32>,
    pub cap_lo: Option<u64>,
    pub cap_hi: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, instance: &mut Instance) {
        if let Some(k) = self.k {
            instance.k = k;
        }
        if let Some(m) = self.max_multiplicity {
            instance.max_multiplicity = m;
        }
        if let Some(lo) = self.cap_lo {
            instance.cap_lo = lo;
        }
        if let Some(hi) = self.cap_hi {
            instance.cap_hi = hi;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub solution: Solution,
    pub document: SolutionDocument,
    pub subsets_examined: u64,
}

/// Run the chosen solver, passing each trace record to `trace` as one JSON
/// line. The solution is verified against the instance before it is returned.
pub fn run(instance: &Instance, params: &SolverParams, mut trace: impl FnMut(String)) -> Result<Outcome, Error> {
    let mut subsets_examined = 0u64;
    let mut solution = match params {
        SolverParams::Exact(limits) => solve_exact_with_log(instance, limits, |r| {
            subsets_examined += 1;
            trace(serde_json::to_string(r).expect("record serializes"));
        })?,
        SolverParams::Sfa(p) => solve_sfa_with_trace(instance, p, |r| {
            subsets_examined += 1;
            trace(serde_json::to_string(r).expect("record serializes"));
        })?,
    };
    let cancelled = match params {
        SolverParams::Exact(l) => l.cancel.as_ref(),
        SolverParams::Sfa(p) => p.cancel.as_ref(),
    }
    .is_some_and(CancelToken::is_cancelled);
    if cancelled && solution.status == Status::Feasible {
        solution.status = Status::TimeoutBestKnown;
    }
    solution.verify(instance)?;
    let document = SolutionDocument::new(instance, &solution)?;
    Ok(Outcome { solution, document, subsets_examined })
}
