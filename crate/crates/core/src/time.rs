use std::fmt;
use std::ops::{Add, Sub};

use serde::{Serialize, Serializer};

/// A point or span in simulated time, kept as integer nanoseconds so queue
/// arithmetic is exact. Configuration and reports speak milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct VirtualTime(pub u64);

impl VirtualTime {
    pub const ZERO: VirtualTime = VirtualTime(0);
    pub const NANOS_PER_MS: u64 = 1_000_000;
    pub const NANOS_PER_SEC: u64 = 1_000_000_000;

    /// Rounds to the nearest nanosecond; negative or non-finite input is zero.
    pub fn from_ms(ms: f64) -> Self {
        if ms.is_finite() && ms > 0.0 {
            VirtualTime((ms * Self::NANOS_PER_MS as f64).round() as u64)
        } else {
            VirtualTime::ZERO
        }
    }

    pub fn from_secs(secs: u64) -> Self {
        VirtualTime(secs * Self::NANOS_PER_SEC)
    }

    pub fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_ms(self) -> f64 {
        self.0 as f64 / Self::NANOS_PER_MS as f64
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / Self::NANOS_PER_SEC as f64
    }

    pub fn saturating_sub(self, other: VirtualTime) -> VirtualTime {
        VirtualTime(self.0.saturating_sub(other.0))
    }
}

impl Add for VirtualTime {
    type Output = VirtualTime;

    fn add(self, rhs: VirtualTime) -> VirtualTime {
        VirtualTime(self.0 + rhs.0)
    }
}

impl Sub for VirtualTime {
    type Output = VirtualTime;

    fn sub(self, rhs: VirtualTime) -> VirtualTime {
        VirtualTime(self.0 - rhs.0)
    }
}

impl fmt::Display for VirtualTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.as_ms())
    }
}

impl Serialize for VirtualTime {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.as_ms())
    }
}
