use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};

use crate::time::Clock;

/// At most `max_requests` issued in any window of length `window`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RateBudget {
    pub max_requests: u32,
    pub window: Duration,
}

impl RateBudget {
    pub fn per_minute(max_requests: u32) -> Self {
        Self {
            max_requests,
            window: Duration::from_secs(60),
        }
    }

    pub fn per_hour(max_requests: u32) -> Self {
        Self {
            max_requests,
            window: Duration::from_secs(3600),
        }
    }
}

/// Sliding-window limiter shared by all workers talking to one host.
pub struct RateLimiter {
    budget: RateBudget,
    clock: Arc<dyn Clock>,
    issued: Mutex<VecDeque<DateTime<Utc>>>,
}

impl RateLimiter {
    pub fn new(budget: RateBudget, clock: Arc<dyn Clock>) -> Self {
        assert!(budget.max_requests > 0, "rate budget must allow at least one request");
        Self {
            budget,
            clock,
            issued: Mutex::new(VecDeque::new()),
        }
    }

    pub fn budget(&self) -> RateBudget {
        self.budget
    }

    /// Blocks (via the clock) until a request may be issued, then records it.
    /// Returns the instant the request was admitted.
    pub fn acquire(&self) -> DateTime<Utc> {
        let window = chrono::Duration::from_std(self.budget.window).expect("window in range");
        loop {
            let wait = {
                let mut issued = self.issued.lock().unwrap();
                let now = self.clock.now();
                while issued.front().is_some_and(|&t| t <= now - window) {
                    issued.pop_front();
                }
                if issued.len() < self.budget.max_requests as usize {
                    issued.push_back(now);
                    return now;
                }
                let oldest = *issued.front().expect("non-empty when over budget");
                (oldest + window - now).to_std().unwrap_or(Duration::ZERO)
            };
            self.clock.sleep(wait.max(Duration::from_millis(1)));
        }
    }
}
