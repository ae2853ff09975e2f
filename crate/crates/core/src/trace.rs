//! Time-stamped heart-rate traces.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// How a trace entry was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tag {
    /// Strongest fundamental peak passed the harmonic credibility test.
    #[serde(rename = "reliable-1st-peak")]
    Reliable1st,
    /// Second-strongest fundamental peak passed the credibility test.
    #[serde(rename = "reliable-2nd-peak")]
    Reliable2nd,
    /// Output of the narrowed search around the stable-history mean.
    Refined,
    /// Window failed; previous estimate carried forward.
    Held,
    /// Both candidates failed before any stable history existed; the
    /// strongest fundamental peak is reported as-is.
    Unverified,
    /// Plain strongest-peak estimate (no credibility logic).
    Peak,
    /// Ground truth.
    Reference,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Reliable1st => "reliable-1st-peak",
            Tag::Reliable2nd => "reliable-2nd-peak",
            Tag::Refined => "refined",
            Tag::Held => "held",
            Tag::Unverified => "unverified",
            Tag::Peak => "peak",
            Tag::Reference => "reference",
        }
    }

    pub fn is_reliable(self) -> bool {
        matches!(self, Tag::Reliable1st | Tag::Reliable2nd)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "reliable-1st-peak" => Tag::Reliable1st,
            "reliable-2nd-peak" => Tag::Reliable2nd,
            "refined" => Tag::Refined,
            "held" => Tag::Held,
            "unverified" => Tag::Unverified,
            "peak" => Tag::Peak,
            "reference" => Tag::Reference,
            other => return Err(invalid("tag", format!("unknown tag `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// Centre of the analysis window, in seconds.
    pub time_s: f64,
    pub hr_bpm: f64,
    pub tag: Tag,
    /// Credibility deviation `|2 f_fund - f_harm|` in Hz; infinite when no
    /// harmonic pair was found, absent when not applicable.
    pub delta_hz: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HrTrace {
    pub entries: Vec<TraceEntry>,
    /// Frozen mean of the first stable estimates, when the tracker got that
    /// far.
    pub h_bar_hz: Option<f64>,
    /// Windows that produced no entry at all.
    pub failed_windows: usize,
}

impl HrTrace {
    pub fn new(entries: Vec<TraceEntry>) -> Self {
        Self {
            entries,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.time_s)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.hr_bpm)
    }

    /// Median spacing between consecutive time stamps.
    pub fn median_step(&self) -> Option<f64> {
        let mut d: Vec<f64> = self
            .entries
            .windows(2)
            .map(|w| w[1].time_s - w[0].time_s)
            .collect();
        if d.is_empty() {
            return None;
        }
        d.sort_by(f64::total_cmp);
        Some(d[d.len() / 2])
    }

    /// Writes `time_s,hr_bpm,tag,delta_hz`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "time_s,hr_bpm,tag,delta_hz")?;
        for e in &self.entries {
            let delta = match e.delta_hz {
                None => String::new(),
                Some(d) if d.is_infinite() => "inf".to_string(),
                Some(d) => format!("{d:.6}"),
            };
            writeln!(out, "{},{:.4},{},{}", e.time_s, e.hr_bpm, e.tag, delta)?;
        }
        Ok(())
    }
}
