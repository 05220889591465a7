use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Spatial label of an occasion. Grid sites print as `row,col`, plain cell
/// indices as a bare integer, macro-occasions (units of a coarse automaton)
/// as `u<k>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Site {
    Cell(u32),
    Grid { row: i32, col: i32 },
    Unit(u32),
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Site::Cell(i) => write!(f, "{i}"),
            Site::Grid { row, col } => write!(f, "{row},{col}"),
            Site::Unit(u) => write!(f, "u{u}"),
        }
    }
}

impl FromStr for Site {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("bad site label `{s}`"));
        if let Some((r, c)) = s.split_once(',') {
            let row = r.trim().parse().map_err(|_| bad())?;
            let col = c.trim().parse().map_err(|_| bad())?;
            Ok(Site::Grid { row, col })
        } else if let Some(u) = s.strip_prefix('u') {
            Ok(Site::Unit(u.parse().map_err(|_| bad())?))
        } else {
            Ok(Site::Cell(s.parse().map_err(|_| bad())?))
        }
    }
}

/// A spacetime coordinate: one vertex of an occasion graph.
///
/// Canonical textual form is `site@time`, e.g. `3,4@-20` or `7@2`; it
/// round-trips losslessly through [`FromStr`]/[`fmt::Display`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OccasionId {
    pub site: Site,
    pub time: i32,
}

impl OccasionId {
    pub fn new(site: Site, time: i32) -> Self {
        OccasionId { site, time }
    }

    pub fn grid(row: i32, col: i32, time: i32) -> Self {
        OccasionId::new(Site::Grid { row, col }, time)
    }

    pub fn cell(index: u32, time: i32) -> Self {
        OccasionId::new(Site::Cell(index), time)
    }
}

// Time-major ordering: matches topological order for ordinary (t-1 -> t)
// automata and keeps serialized listings readable.
impl Ord for OccasionId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.site).cmp(&(other.time, other.site))
    }
}

impl PartialOrd for OccasionId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for OccasionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.site, self.time)
    }
}

impl FromStr for OccasionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (site, time) = s
            .rsplit_once('@')
            .ok_or_else(|| Error::Parse(format!("occasion id `{s}` missing `@`")))?;
        Ok(OccasionId {
            site: site.parse()?,
            time: time
                .parse()
                .map_err(|_| Error::Parse(format!("bad time in occasion id `{s}`")))?,
        })
    }
}

impl Serialize for OccasionId {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OccasionId {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
