use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Instrument vocabulary of the benchmark, plus a catch-all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Instrument {
    Bassoon,
    Cello,
    Clarinet,
    Flute,
    Oboe,
    Saxophone,
    Viola,
    Violin,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Strings,
    Woodwind,
    Other,
}

impl Instrument {
    /// The eight target instruments, in table order.
    pub const TARGETS: [Instrument; 8] = [
        Instrument::Bassoon,
        Instrument::Cello,
        Instrument::Clarinet,
        Instrument::Flute,
        Instrument::Oboe,
        Instrument::Saxophone,
        Instrument::Viola,
        Instrument::Violin,
    ];

    pub fn family(self) -> Family {
        match self {
            Instrument::Cello | Instrument::Viola | Instrument::Violin => Family::Strings,
            Instrument::Bassoon
            | Instrument::Clarinet
            | Instrument::Flute
            | Instrument::Oboe
            | Instrument::Saxophone => Family::Woodwind,
            Instrument::Other => Family::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Instrument::Bassoon => "bassoon",
            Instrument::Cello => "cello",
            Instrument::Clarinet => "clarinet",
            Instrument::Flute => "flute",
            Instrument::Oboe => "oboe",
            Instrument::Saxophone => "saxophone",
            Instrument::Viola => "viola",
            Instrument::Violin => "violin",
            Instrument::Other => "other",
        }
    }

    /// Parses a stem label such as `violin_2` or `alto_sax`. Line numbers are
    /// dropped so that parts of the same instrument share one label.
    pub fn from_stem_label(label: &str) -> Result<Self> {
        let lower = label.trim().to_ascii_lowercase();
        let base = match lower.rsplit_once(['_', '-', ' ']) {
            Some((head, tail)) if !tail.is_empty() && tail.chars().all(|c| c.is_ascii_digit()) => head.to_string(),
            _ => lower.trim_end_matches(|c: char| c.is_ascii_digit()).to_string(),
        };
        base.parse()
    }
}

impl FromStr for Instrument {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "bassoon" => Instrument::Bassoon,
            "cello" => Instrument::Cello,
            "clarinet" => Instrument::Clarinet,
            "flute" => Instrument::Flute,
            "oboe" => Instrument::Oboe,
            "saxophone" | "sax" | "alto_sax" | "alto_saxophone" | "altosax" => Instrument::Saxophone,
            "viola" => Instrument::Viola,
            "violin" => Instrument::Violin,
            "other" => Instrument::Other,
            other => return Err(Error::UnknownInstrument(other.to_string())),
        })
    }
}

impl fmt::Display for Instrument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
