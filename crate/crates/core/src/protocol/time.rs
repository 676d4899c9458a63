use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ProtocolError;

/// Whole seconds since 1970-01-01T00:00:00Z.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct EpochTime(pub u64);

impl EpochTime {
    pub const ZERO: EpochTime = EpochTime(0);

    pub fn secs(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, other: EpochTime) -> u64 {
        self.0.saturating_sub(other.0)
    }
}

impl Add<u64> for EpochTime {
    type Output = EpochTime;
    fn add(self, rhs: u64) -> EpochTime {
        EpochTime(self.0 + rhs)
    }
}

impl Sub for EpochTime {
    type Output = i64;
    fn sub(self, rhs: EpochTime) -> i64 {
        self.0 as i64 - rhs.0 as i64
    }
}

impl fmt::Display for EpochTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for EpochTime {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ProtocolError::BadTime(s.to_string()));
        }
        s.parse::<u64>()
            .map(EpochTime)
            .map_err(|_| ProtocolError::BadTime(s.to_string()))
    }
}
