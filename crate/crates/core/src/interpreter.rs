//! Supported interpreter series and their release windows.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::version::Version;

const WINDOWS_TABLE: &str = include_str!("../data/interpreter_windows.csv");

/// Series used when a model reply names nothing usable.
pub const DEFAULT_SERIES: InterpreterVersion = InterpreterVersion { major: 3, minor: 6 };

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unsupported interpreter series {0:?}")]
pub struct UnsupportedInterpreter(pub String);

/// A `major.minor` interpreter series from the supported set (2.7, 3.4 ... 3.12).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InterpreterVersion {
    major: u8,
    minor: u8,
}

const SUPPORTED: [InterpreterVersion; 10] = [
    InterpreterVersion { major: 2, minor: 7 },
    InterpreterVersion { major: 3, minor: 4 },
    InterpreterVersion { major: 3, minor: 5 },
    InterpreterVersion { major: 3, minor: 6 },
    InterpreterVersion { major: 3, minor: 7 },
    InterpreterVersion { major: 3, minor: 8 },
    InterpreterVersion { major: 3, minor: 9 },
    InterpreterVersion { major: 3, minor: 10 },
    InterpreterVersion { major: 3, minor: 11 },
    InterpreterVersion { major: 3, minor: 12 },
];

impl InterpreterVersion {
    pub const PY27: InterpreterVersion = InterpreterVersion { major: 2, minor: 7 };

    /// All supported series, ascending.
    pub fn supported() -> &'static [InterpreterVersion] {
        &SUPPORTED
    }

    /// Supported 3.x series, ascending.
    pub fn supported_py3() -> &'static [InterpreterVersion] {
        &SUPPORTED[1..]
    }

    pub fn new(major: u8, minor: u8) -> Result<Self, UnsupportedInterpreter> {
        let v = InterpreterVersion { major, minor };
        if SUPPORTED.contains(&v) {
            Ok(v)
        } else {
            Err(UnsupportedInterpreter(format!("{major}.{minor}")))
        }
    }

    /// Strict parse of an exact `major.minor` series.
    pub fn parse(series: &str) -> Result<Self, UnsupportedInterpreter> {
        let err = || UnsupportedInterpreter(series.to_string());
        let (major, minor) = series.trim().split_once('.').ok_or_else(err)?;
        let major = major.parse().map_err(|_| err())?;
        let minor = minor.parse().map_err(|_| err())?;
        Self::new(major, minor)
    }

    /// Total mapping from free-form interpreter text to a supported series.
    ///
    /// `"2"` maps to 2.7, `"3"` to 3.6, patch levels and a leading `python` are dropped, and any
    /// other 3.x maps to the nearest supported series. Returns a warning when the input was not
    /// already an exact supported series.
    pub fn normalize(text: &str) -> (Self, Option<String>) {
        let cleaned = text
            .trim()
            .trim_start_matches(|c: char| c.is_ascii_alphabetic() || c == ' ' || c == ':')
            .trim();
        let mut parts = cleaned.split('.').map(|p| {
            p.chars()
                .take_while(char::is_ascii_digit)
                .collect::<String>()
                .parse::<u32>()
                .ok()
        });
        let major = parts.next().flatten();
        let minor = parts.next().flatten();
        let warn = |to: InterpreterVersion| {
            Some(format!("interpreter {text:?} normalized to {to}"))
        };
        match (major, minor) {
            (Some(2), _) => {
                let warning = if minor == Some(7) && cleaned.split('.').count() == 2 {
                    None
                } else {
                    warn(Self::PY27)
                };
                (Self::PY27, warning)
            }
            (Some(3), None) => (DEFAULT_SERIES, warn(DEFAULT_SERIES)),
            (Some(3), Some(minor)) => {
                let py3 = Self::supported_py3();
                let lo = py3[0].minor as u32;
                let hi = py3[py3.len() - 1].minor as u32;
                let clamped = minor.clamp(lo, hi) as u8;
                let v = InterpreterVersion { major: 3, minor: clamped };
                let exact = clamped as u32 == minor && cleaned.split('.').count() == 2;
                (v, if exact { None } else { warn(v) })
            }
            _ => (DEFAULT_SERIES, warn(DEFAULT_SERIES)),
        }
    }

    pub fn major(&self) -> u8 {
        self.major
    }

    pub fn minor(&self) -> u8 {
        self.minor
    }

    pub fn series(&self) -> String {
        self.to_string()
    }

    pub fn window(&self) -> InterpreterWindow {
        windows()
            .iter()
            .find(|w| w.interpreter == *self)
            .cloned()
            .expect("every supported series has a window row")
    }
}

impl fmt::Display for InterpreterVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.major, self.minor)
    }
}

impl FromStr for InterpreterVersion {
    type Err = UnsupportedInterpreter;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for InterpreterVersion {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for InterpreterVersion {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// The period during which a series was current, used to bound plausible releases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterpreterWindow {
    pub interpreter: InterpreterVersion,
    pub window_start: DateTime<Utc>,
    pub window_end: DateTime<Utc>,
    /// Concrete interpreter release used when evaluating `requires_python` constraints.
    pub final_patch: Version,
}

impl InterpreterWindow {
    pub fn contains(&self, at: DateTime<Utc>) -> bool {
        self.window_start <= at && at <= self.window_end
    }
}

fn windows() -> &'static [InterpreterWindow] {
    static TABLE: OnceLock<Vec<InterpreterWindow>> = OnceLock::new();
    TABLE.get_or_init(|| {
        // both table dates are inclusive calendar days
        let date = |s: &str, h, m, sec| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .expect("window table date")
                .and_hms_opt(h, m, sec)
                .expect("valid time")
                .and_utc()
        };
        let rows: Vec<InterpreterWindow> = WINDOWS_TABLE
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|line| {
                let cols: Vec<&str> = line.split(',').collect();
                InterpreterWindow {
                    interpreter: InterpreterVersion::parse(cols[0]).expect("window table series"),
                    window_start: date(cols[1], 0, 0, 0),
                    window_end: date(cols[2], 23, 59, 59),
                    final_patch: Version::parse(cols[3]).expect("window table patch"),
                }
            })
            .collect();
        debug_assert!(rows.iter().all(|w| w.window_start < w.window_end));
        rows
    })
}
