//! Delinquency state taxonomy and the days-past-due bucketing rule.
//!
//! The chain runs over seven states. Six of them are ordered by severity
//! (`Current` < `X` < `D30` < `D60` < `D90` < `WriteOff`); `Closed` sits
//! outside that order and is treated as better than any delinquent state
//! when asking whether an account "stayed or improved".

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DelinquencyState {
    Current,
    X,
    D30,
    D60,
    D90,
    WriteOff,
    Closed,
}

impl DelinquencyState {
    /// All states, transient ones first in severity order, then `WriteOff`, `Closed`.
    pub const ALL: [DelinquencyState; 7] = [
        DelinquencyState::Current,
        DelinquencyState::X,
        DelinquencyState::D30,
        DelinquencyState::D60,
        DelinquencyState::D90,
        DelinquencyState::WriteOff,
        DelinquencyState::Closed,
    ];

    pub const TRANSIENT: [DelinquencyState; 5] = [
        DelinquencyState::Current,
        DelinquencyState::X,
        DelinquencyState::D30,
        DelinquencyState::D60,
        DelinquencyState::D90,
    ];

    pub const COUNT: usize = 7;

    /// Position in [`DelinquencyState::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// `None` for `Closed`, which has no place on the severity scale.
    pub fn severity_rank(self) -> Option<u8> {
        match self {
            DelinquencyState::Current => Some(0),
            DelinquencyState::X => Some(1),
            DelinquencyState::D30 => Some(2),
            DelinquencyState::D60 => Some(3),
            DelinquencyState::D90 => Some(4),
            DelinquencyState::WriteOff => Some(5),
            DelinquencyState::Closed => None,
        }
    }

    pub fn is_absorbing(self) -> bool {
        matches!(self, DelinquencyState::WriteOff | DelinquencyState::Closed)
    }

    pub fn is_transient(self) -> bool {
        !self.is_absorbing()
    }

    /// True for `X` and anything more severe.
    pub fn is_delinquent(self) -> bool {
        self.severity_rank().is_some_and(|r| r >= 1)
    }

    /// Whether moving from `self` to `to` counts as staying put or improving.
    /// `Closed` is better than every delinquent state.
    pub fn stays_or_improves_to(self, to: DelinquencyState) -> bool {
        match (self.severity_rank(), to.severity_rank()) {
            (_, None) => true,
            (Some(from), Some(to)) => to <= from,
            (None, Some(_)) => false,
        }
    }

    /// Human label used in summaries, e.g. `"60 DPD"`.
    pub fn dpd_label(self) -> &'static str {
        match self {
            DelinquencyState::Current => "Current",
            DelinquencyState::X => "X DPD",
            DelinquencyState::D30 => "30 DPD",
            DelinquencyState::D60 => "60 DPD",
            DelinquencyState::D90 => "90 DPD",
            DelinquencyState::WriteOff => "120+ DPD (write-off)",
            DelinquencyState::Closed => "Closed",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DelinquencyState::Current => "Current",
            DelinquencyState::X => "X",
            DelinquencyState::D30 => "D30",
            DelinquencyState::D60 => "D60",
            DelinquencyState::D90 => "D90",
            DelinquencyState::WriteOff => "WriteOff",
            DelinquencyState::Closed => "Closed",
        }
    }
}

impl fmt::Display for DelinquencyState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DelinquencyState {
    type Err = Error;

    /// Accepts the canonical names plus the bare bucket labels
    /// (`30`, `60`, `90`, `120+`, `Write off`) common in reporting tables.
    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .trim()
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_' && *c != '-')
            .collect::<String>()
            .to_ascii_lowercase();
        let state = match norm.as_str() {
            "current" => DelinquencyState::Current,
            "x" => DelinquencyState::X,
            "d30" | "30" | "30dpd" => DelinquencyState::D30,
            "d60" | "60" | "60dpd" => DelinquencyState::D60,
            "d90" | "90" | "90dpd" => DelinquencyState::D90,
            "writeoff" | "120+" | "120" | "120+(writeoff)" | "d120" => DelinquencyState::WriteOff,
            "closed" => DelinquencyState::Closed,
            _ => return Err(Error::InvalidArgument(format!("unknown delinquency state {s:?}"))),
        };
        Ok(state)
    }
}

/// Account status column of the panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccountStatus {
    #[default]
    Open,
    Closed,
    WriteOff,
}

impl fmt::Display for AccountStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccountStatus::Open => "open",
            AccountStatus::Closed => "closed",
            AccountStatus::WriteOff => "writeoff",
        })
    }
}

impl FromStr for AccountStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "" | "open" => Ok(AccountStatus::Open),
            "closed" => Ok(AccountStatus::Closed),
            "writeoff" | "write_off" | "write-off" => Ok(AccountStatus::WriteOff),
            other => Err(Error::InvalidArgument(format!("unknown status {other:?}"))),
        }
    }
}

/// DPD thresholds for the `X`, `D30`, `D60`, `D90` and `WriteOff` buckets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub bucket_edges: Vec<u32>,
    pub writeoff_dpd: u32,
}

impl Default for StateConfig {
    fn default() -> Self {
        StateConfig {
            bucket_edges: vec![1, 30, 60, 90, 120],
            writeoff_dpd: 120,
        }
    }
}

impl StateConfig {
    pub fn new(bucket_edges: Vec<u32>, writeoff_dpd: u32) -> Result<Self> {
        let config = StateConfig {
            bucket_edges,
            writeoff_dpd,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let edges = &self.bucket_edges;
        if edges.len() != 5 {
            return Err(Error::InvalidConfig(format!(
                "bucket_edges needs one edge per delinquent state (5), got {}",
                edges.len()
            )));
        }
        if edges[0] == 0 {
            return Err(Error::InvalidConfig("bucket edges must be positive".into()));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(format!(
                "bucket_edges must be strictly ascending, got {edges:?}"
            )));
        }
        if *edges.last().unwrap() != self.writeoff_dpd {
            return Err(Error::InvalidConfig(format!(
                "writeoff_dpd {} must equal the last bucket edge {}",
                self.writeoff_dpd,
                edges.last().unwrap()
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: StateConfig = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Lowest DPD value that maps to `state`; the inverse used by the simulator.
    pub fn lower_edge(&self, state: DelinquencyState) -> u32 {
        match state.severity_rank() {
            Some(0) | None => 0,
            Some(r) => self.bucket_edges[r as usize - 1],
        }
    }
}

/// Map a raw observation onto the state space.
pub fn state_from_observation(dpd: u32, status: AccountStatus, config: &StateConfig) -> DelinquencyState {
    match status {
        AccountStatus::Closed => return DelinquencyState::Closed,
        AccountStatus::WriteOff => return DelinquencyState::WriteOff,
        AccountStatus::Open => {}
    }
    if dpd >= config.writeoff_dpd {
        return DelinquencyState::WriteOff;
    }
    let passed = config.bucket_edges.iter().take_while(|&&edge| dpd >= edge).count();
    DelinquencyState::TRANSIENT[passed.min(4)]
}
