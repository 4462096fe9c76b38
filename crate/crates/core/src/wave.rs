//! Follow-up waves and graph time stamps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// One of the four follow-up points of the longitudinal survey.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Wave {
    M3,
    M6,
    M12,
    M24,
}

impl Wave {
    pub const ALL: [Wave; 4] = [Wave::M3, Wave::M6, Wave::M12, Wave::M24];

    /// Months since baseline.
    pub fn months(self) -> u32 {
        match self {
            Wave::M3 => 3,
            Wave::M6 => 6,
            Wave::M12 => 12,
            Wave::M24 => 24,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Wave::M3 => "3m",
            Wave::M6 => "6m",
            Wave::M12 => "12m",
            Wave::M24 => "24m",
        }
    }

    pub fn next(self) -> Option<Wave> {
        match self {
            Wave::M3 => Some(Wave::M6),
            Wave::M6 => Some(Wave::M12),
            Wave::M12 => Some(Wave::M24),
            Wave::M24 => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown wave `{0}` (expected one of 3m, 6m, 12m, 24m)")]
pub struct UnknownWave(pub String);

impl FromStr for Wave {
    type Err = UnknownWave;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "3m" | "m3" | "3" => Ok(Wave::M3),
            "6m" | "m6" | "6" => Ok(Wave::M6),
            "12m" | "m12" | "12" => Ok(Wave::M12),
            "24m" | "m24" | "24" => Ok(Wave::M24),
            _ => Err(UnknownWave(s.to_string())),
        }
    }
}

impl fmt::Display for Wave {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Wave {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Wave {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A point on the graph timeline: the static scaffold (`T0`) precedes every wave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stamp {
    Scaffold,
    At(Wave),
}

impl Stamp {
    pub fn next(self) -> Option<Stamp> {
        match self {
            Stamp::Scaffold => Some(Stamp::At(Wave::M3)),
            Stamp::At(w) => w.next().map(Stamp::At),
        }
    }

    pub fn wave(self) -> Option<Wave> {
        match self {
            Stamp::Scaffold => None,
            Stamp::At(w) => Some(w),
        }
    }
}

impl From<Wave> for Stamp {
    fn from(w: Wave) -> Self {
        Stamp::At(w)
    }
}

impl fmt::Display for Stamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stamp::Scaffold => f.write_str("T0"),
            Stamp::At(w) => w.fmt(f),
        }
    }
}

impl FromStr for Stamp {
    type Err = UnknownWave;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("t0") {
            Ok(Stamp::Scaffold)
        } else {
            s.parse().map(Stamp::At)
        }
    }
}

impl Serialize for Stamp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Stamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
