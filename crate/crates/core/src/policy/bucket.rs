use super::{Decision, DenyReason, PolicySet, ProtocolClass};
use crate::time::VirtualTime;

/// Classic token bucket over virtual time. Starts full.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBucket {
    rate_per_sec: f64,
    burst: f64,
    tokens: f64,
    last: VirtualTime,
}

// Refill is computed in floating point; this slack keeps a bucket that is
// refilled at exactly its rate from rounding itself into a denial.
const EPSILON: f64 = 1e-9;

impl TokenBucket {
    pub fn new(rate_per_sec: f64, burst: f64) -> Self {
        TokenBucket {
            rate_per_sec,
            burst,
            tokens: burst,
            last: VirtualTime::ZERO,
        }
    }

    pub fn from_policy(policy: &PolicySet) -> Option<Self> {
        policy
            .bandwidth
            .as_ref()
            .map(|bw| TokenBucket::new(bw.rate_per_sec, bw.burst))
    }

    /// Takes one token at `now` if available. Times earlier than the last
    /// call are treated as the last call.
    pub fn admit(&mut self, now: VirtualTime) -> bool {
        if now > self.last {
            let elapsed = (now - self.last).as_secs_f64();
            self.tokens = (self.tokens + elapsed * self.rate_per_sec).min(self.burst);
            self.last = now;
        }
        if self.tokens + EPSILON >= 1.0 {
            self.tokens = (self.tokens - 1.0).max(0.0);
            true
        } else {
            false
        }
    }

    pub fn tokens(&self) -> f64 {
        self.tokens
    }
}

/// Charges `class` traffic against the bucket when the policy's bandwidth
/// limit covers it.
pub fn bandwidth_admit(
    policy: &PolicySet,
    bucket: &mut TokenBucket,
    now: VirtualTime,
    class: ProtocolClass,
) -> Decision {
    let covered = match &policy.bandwidth {
        None => false,
        Some(bw) => bw.applies_to.as_ref().is_none_or(|set| set.contains(&class)),
    };
    if !covered || bucket.admit(now) {
        Decision::Allow
    } else {
        Decision::deny(DenyReason::RateExceeded)
    }
}
