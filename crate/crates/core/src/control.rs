use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

/// Shared flag for cooperative cancellation. Solvers poll it between subsets.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::Relaxed);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::Relaxed)
    }
}

/// Wall-clock budget plus optional cancellation.
#[derive(Debug, Clone)]
pub(crate) struct StopCheck {
    start: Instant,
    budget: Option<Duration>,
    cancel: Option<CancelToken>,
}

impl StopCheck {
    pub(crate) fn new(start: Instant, budget: Option<Duration>, cancel: Option<CancelToken>) -> Self {
        StopCheck { start, budget, cancel }
    }

    pub(crate) fn cancelled(&self) -> bool {
        self.cancel.as_ref().is_some_and(CancelToken::is_cancelled)
    }

    /// True when `upcoming` more work would overrun the budget, or when
    /// cancelled.
    pub(crate) fn should_stop(&self, upcoming: Duration) -> bool {
        if self.cancelled() {
            return true;
        }
        self.budget
            .is_some_and(|budget| self.start.elapsed() + upcoming > budget)
    }
}
