use std::collections::VecDeque;
use std::time::Duration;

pub const DEFAULT_LIMIT: usize = 180;
pub const DEFAULT_WINDOW: Duration = Duration::from_secs(15 * 60);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Proceed,
    Wait(Duration),
}

/// Sliding-window request budget over a monotonic clock. A request at `t`
/// stops counting at `t + window`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateBudget {
    limit: usize,
    window: Duration,
    ledger: VecDeque<Duration>,
}

impl Default for RateBudget {
    fn default() -> Self {
        Self::new(DEFAULT_LIMIT, DEFAULT_WINDOW)
    }
}

impl RateBudget {
    pub fn new(limit: usize, window: Duration) -> Self {
        assert!(limit > 0, "rate limit must be positive");
        Self {
            limit,
            window,
            ledger: VecDeque::with_capacity(limit),
        }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn window(&self) -> Duration {
        self.window
    }

    /// Timestamps of requests still inside the window as of the last call.
    pub fn ledger(&self) -> impl Iterator<Item = Duration> + '_ {
        self.ledger.iter().copied()
    }

    fn prune(&mut self, now: Duration) {
        while let Some(&t) = self.ledger.front() {
            if now.saturating_sub(t) >= self.window {
                self.ledger.pop_front();
            } else {
                break;
            }
        }
    }

    /// Records a request at `now` if the trailing window has room, otherwise
    /// reports how long until the oldest request leaves it.
    pub fn acquire(&mut self, now: Duration) -> Decision {
        self.prune(now);
        if self.ledger.len() < self.limit {
            self.ledger.push_back(now);
            Decision::Proceed
        } else {
            let oldest = self.ledger[0];
            Decision::Wait(oldest + self.window - now)
        }
    }
}
