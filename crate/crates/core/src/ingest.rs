//! Account-month panel ingestion and transition counting.
//!
//! Input is a CSV with header `account_id,period,dpd,status` where `period`
//! is `YYYY-MM` and `status` (`open`, `closed`, `writeoff`) may be omitted or
//! left blank. Rows are grouped per account and sorted by period; months on
//! book are counted from the earliest period observed for the account.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::states::{state_from_observation, AccountStatus, DelinquencyState, StateConfig};

/// A calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Period {
    pub year: i32,
    pub month: u8,
}

impl Period {
    pub fn new(year: i32, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidArgument(format!("month {month} out of range")));
        }
        Ok(Period { year, month })
    }

    fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    /// Whole months from `self` to `later` (negative if `later` is earlier).
    pub fn months_until(self, later: Period) -> i64 {
        later.ordinal() - self.ordinal()
    }

    pub fn add_months(self, n: u32) -> Period {
        let o = self.ordinal() + n as i64;
        Period {
            year: o.div_euclid(12) as i32,
            month: (o.rem_euclid(12) + 1) as u8,
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Period {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidArgument(format!("period {s:?} is not YYYY-MM"));
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u8 = m.parse().map_err(|_| bad())?;
        Period::new(year, month).map_err(|_| bad())
    }
}

impl Serialize for Period {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Period {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One raw row of the panel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccountRecord {
    pub account_id: String,
    pub period: Period,
    pub dpd: u32,
    pub status: AccountStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub month_on_book: u32,
    pub state: DelinquencyState,
    pub dpd: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountHistory {
    pub account_id: String,
    pub open_period: Period,
    pub observations: Vec<Observation>,
}

impl AccountHistory {
    pub fn last_month_on_book(&self) -> u32 {
        self.observations.last().map_or(0, |o| o.month_on_book)
    }

    /// Whether the history ends in `Closed` or `WriteOff`.
    pub fn is_absorbed(&self) -> bool {
        self.observations.last().is_some_and(|o| o.state.is_absorbing())
    }

    pub fn ever_delinquent(&self) -> bool {
        self.observations.iter().any(|o| o.state.is_delinquent())
    }

    /// Observations with `month_on_book <= months`.
    pub fn within(&self, months: u32) -> &[Observation] {
        let end = self.observations.partition_point(|o| o.month_on_book <= months);
        &self.observations[..end]
    }

    /// Number of transitions between observations one month apart.
    pub fn transition_pairs(&self) -> usize {
        self.observations
            .windows(2)
            .filter(|w| w[1].month_on_book == w[0].month_on_book + 1)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Panel {
    pub histories: Vec<AccountHistory>,
    pub state_config: StateConfig,
}

impl Panel {
    pub fn len(&self) -> usize {
        self.histories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.histories.is_empty()
    }

    /// Rebuild raw records in account then period order.
    pub fn records(&self) -> impl Iterator<Item = AccountRecord> + '_ {
        self.histories.iter().flat_map(|h| {
            h.observations.iter().map(move |o| AccountRecord {
                account_id: h.account_id.clone(),
                period: h.open_period.add_months(o.month_on_book - 1),
                dpd: o.dpd,
                status: match o.state {
                    DelinquencyState::Closed => AccountStatus::Closed,
                    DelinquencyState::WriteOff => AccountStatus::WriteOff,
                    _ => AccountStatus::Open,
                },
            })
        })
    }
}

#[derive(Debug, Clone)]
pub struct LoadedPanel {
    pub panel: Panel,
    pub warnings: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct RawRow {
    account_id: String,
    period: String,
    dpd: String,
    #[serde(default)]
    status: Option<String>,
}

/// Parse a panel CSV.
pub fn load_panel<R: Read>(source: R, config: &StateConfig) -> Result<LoadedPanel> {
    config.validate()?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);

    let headers = reader.headers()?.clone();
    for required in ["account_id", "period", "dpd"] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::MalformedRow {
                line: 1,
                message: format!("missing required column {required:?}"),
            });
        }
    }

    let mut by_account: BTreeMap<String, Vec<(Period, u32, AccountStatus, u64)>> = BTreeMap::new();
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        let row: RawRow = record.deserialize(Some(&headers))?;
        let malformed = |message: String| Error::MalformedRow { line, message };
        if row.account_id.is_empty() {
            return Err(malformed("empty account_id".into()));
        }
        let period: Period = row
            .period
            .parse()
            .map_err(|_| malformed(format!("period {:?} is not YYYY-MM", row.period)))?;
        let dpd: u32 = row
            .dpd
            .parse()
            .map_err(|_| malformed(format!("dpd {:?} is not a non-negative integer", row.dpd)))?;
        let status: AccountStatus = row
            .status
            .as_deref()
            .unwrap_or("")
            .parse()
            .map_err(|e: Error| malformed(e.to_string()))?;
        by_account
            .entry(row.account_id)
            .or_default()
            .push((period, dpd, status, line));
    }

    let mut warnings = Vec::new();
    let mut histories = Vec::with_capacity(by_account.len());
    for (account_id, mut rows) in by_account {
        rows.sort_by_key(|r| (r.0, r.3));
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateObservation {
                line: w[1].3,
                account_id,
                period: w[1].0.to_string(),
            });
        }
        let open_period = rows[0].0;
        let mut observations = Vec::with_capacity(rows.len());
        for (i, &(period, dpd, status, _)) in rows.iter().enumerate() {
            let state = state_from_observation(dpd, status, config);
            observations.push(Observation {
                month_on_book: open_period.months_until(period) as u32 + 1,
                state,
                dpd,
            });
            if state.is_absorbing() && i + 1 < rows.len() {
                warnings.push(format!(
                    "account {account_id}: dropped {} observation(s) after {state} in {period}",
                    rows.len() - i - 1
                ));
                break;
            }
        }
        histories.push(AccountHistory {
            account_id,
            open_period,
            observations,
        });
    }

    Ok(LoadedPanel {
        panel: Panel {
            histories,
            state_config: config.clone(),
        },
        warnings,
    })
}

/// Write a panel in the same CSV format [`load_panel`] reads.
pub fn write_panel_csv<W: Write>(panel: &Panel, sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(["account_id", "period", "dpd", "status"])?;
    for r in panel.records() {
        writer.write_record([
            r.account_id.as_str(),
            &r.period.to_string(),
            &r.dpd.to_string(),
            &r.status.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub retained: usize,
    pub removed: usize,
}

/// Keep only accounts that were ever `X` or worse.
pub fn filter_never_delinquent(panel: &Panel) -> (Panel, FilterSummary) {
    let histories: Vec<AccountHistory> = panel
        .histories
        .iter()
        .filter(|h| h.ever_delinquent())
        .cloned()
        .collect();
    let summary = FilterSummary {
        retained: histories.len(),
        removed: panel.histories.len() - histories.len(),
    };
    (
        Panel {
            histories,
            state_config: panel.state_config.clone(),
        },
        summary,
    )
}

/// Month-to-month transition counts over [`DelinquencyState::ALL`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionCounts {
    pub counts: [[u64; DelinquencyState::COUNT]; DelinquencyState::COUNT],
}

impl Default for TransitionCounts {
    fn default() -> Self {
        TransitionCounts {
            counts: [[0; DelinquencyState::COUNT]; DelinquencyState::COUNT],
        }
    }
}

impl TransitionCounts {
    pub fn get(&self, from: DelinquencyState, to: DelinquencyState) -> u64 {
        self.counts[from.index()][to.index()]
    }

    pub fn row_total(&self, from: DelinquencyState) -> u64 {
        self.counts[from.index()].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn add_history(&mut self, history: &AccountHistory) {
        for w in history.observations.windows(2) {
            if w[1].month_on_book == w[0].month_on_book + 1 && w[0].state.is_transient() {
                self.counts[w[0].state.index()][w[1].state.index()] += 1;
            }
        }
    }

    pub fn merge(mut self, other: &TransitionCounts) -> TransitionCounts {
        for (row, other_row) in self.counts.iter_mut().zip(other.counts.iter()) {
            for (c, o) in row.iter_mut().zip(other_row) {
                *c += o;
            }
        }
        self
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(sink);
        let mut header = vec!["state".to_string()];
        header.extend(DelinquencyState::ALL.iter().map(|s| s.to_string()));
        writer.write_record(&header)?;
        for from in DelinquencyState::ALL {
            let mut row = vec![from.to_string()];
            row.extend(self.counts[from.index()].iter().map(|c| c.to_string()));
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Count one-month transitions across every account in the panel.
pub fn count_transitions(panel: &Panel) -> TransitionCounts {
    panel
        .histories
        .par_iter()
        .fold(TransitionCounts::default, |mut acc, h| {
            acc.add_history(h);
            acc
        })
        .reduce(TransitionCounts::default, |a, b| a.merge(&b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use DelinquencyState::*;

    fn load(text: &str) -> Result<LoadedPanel> {
        load_panel(text.as_bytes(), &StateConfig::default())
    }

    fn history(states: &[(u32, DelinquencyState)]) -> AccountHistory {
        let c = StateConfig::default();
        AccountHistory {
            account_id: "a".into(),
            open_period: Period::new(2020, 1).unwrap(),
            observations: states
                .iter()
                .map(|&(m, s)| Observation {
                    month_on_book: m,
                    state: s,
                    dpd: c.lower_edge(s),
                })
                .collect(),
        }
    }

    #[test]
    fn period_parse_and_arithmetic() {
        let p: Period = "2020-11".parse().unwrap();
        assert_eq!(p.add_months(3).to_string(), "2021-02");
        assert_eq!(p.months_until("2021-02".parse().unwrap()), 3);
        assert!("2020-13".parse::<Period>().is_err());
        assert!("2020/01".parse::<Period>().is_err());
        assert!("20-01".parse::<Period>().is_err());
    }

    #[test]
    fn consecutive_months_on_book() {
        let loaded =
            load("account_id,period,dpd,status\nA,2020-01,0,open\nA,2020-02,5,open\nA,2020-03,31,open\n").unwrap();
        let h = &loaded.panel.histories[0];
        let mobs: Vec<u32> = h.observations.iter().map(|o| o.month_on_book).collect();
        assert_eq!(mobs, vec![1, 2, 3]);
        assert_eq!(h.open_period.to_string(), "2020-01");
        assert_eq!(h.observations[2].state, D30);
    }

    #[test]
    fn rows_are_sorted_and_status_optional() {
        let loaded = load("account_id,period,dpd\nA,2020-03,0\nA,2020-01,0\nA,2020-02,0\n").unwrap();
        let mobs: Vec<u32> = loaded.panel.histories[0]
            .observations
            .iter()
            .map(|o| o.month_on_book)
            .collect();
        assert_eq!(mobs, vec![1, 2, 3]);
        let loaded = load("account_id,period,dpd,status\nA,2020-01,0,\n").unwrap();
        assert_eq!(loaded.panel.histories[0].observations[0].state, Current);
    }

    #[test]
    fn bad_dpd_names_line() {
        let err = load("account_id,period,dpd,status\nA,2020-01,0,open\nA,2020-02,abc,open\n").unwrap_err();
        match err {
            Error::MalformedRow { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_period_and_status_rejected() {
        assert!(matches!(
            load("account_id,period,dpd\nA,2020-1,0\n"),
            Err(Error::MalformedRow { line: 2, .. })
        ));
        assert!(matches!(
            load("account_id,period,dpd,status\nA,2020-01,0,frozen\n"),
            Err(Error::MalformedRow { .. })
        ));
        assert!(matches!(
            load("account_id,period,dpd\nA,2020-01,-3\n"),
            Err(Error::MalformedRow { .. })
        ));
        assert!(matches!(
            load("account_id,dpd\nA,0\n"),
            Err(Error::MalformedRow { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_period_rejected() {
        let err = load("account_id,period,dpd\nA,2020-01,0\nB,2020-01,0\nA,2020-01,3\n").unwrap_err();
        assert!(matches!(err, Error::DuplicateObservation { line: 4, .. }), "{err:?}");
    }

    #[test]
    fn truncates_after_absorption_with_warning() {
        let loaded =
            load("account_id,period,dpd,status\nA,2020-01,0,open\nA,2020-02,0,closed\nA,2020-03,0,open\n").unwrap();
        assert_eq!(loaded.panel.histories[0].observations.len(), 2);
        assert_eq!(loaded.warnings.len(), 1);
        assert!(loaded.warnings[0].contains("account A"));
    }

    #[test]
    fn gap_months_on_book() {
        let loaded = load("account_id,period,dpd\nA,2020-01,0\nA,2020-03,0\n").unwrap();
        let h = &loaded.panel.histories[0];
        assert_eq!(h.observations[1].month_on_book, 3);
        assert_eq!(count_transitions(&loaded.panel).total(), 0);
    }

    #[test]
    fn hand_counted_transitions() {
        let h = history(&[(1, Current), (2, X), (3, X)]);
        let mut c = TransitionCounts::default();
        c.add_history(&h);
        assert_eq!(c.get(Current, X), 1);
        assert_eq!(c.get(X, X), 1);
        assert_eq!(c.total(), 2);
    }

    #[test]
    fn filter_rules() {
        let panel = Panel {
            histories: vec![
                AccountHistory {
                    account_id: "clean".into(),
                    ..history(&[(1, Current), (2, Current), (3, Closed)])
                },
                AccountHistory {
                    account_id: "x".into(),
                    ..history(&[(1, Current), (2, X), (3, Current)])
                },
            ],
            state_config: StateConfig::default(),
        };
        let (filtered, summary) = filter_never_delinquent(&panel);
        assert_eq!(
            summary,
            FilterSummary {
                retained: 1,
                removed: 1
            }
        );
        assert_eq!(filtered.histories[0].account_id, "x");
        let (again, s2) = filter_never_delinquent(&filtered);
        assert_eq!(again, filtered);
        assert_eq!(s2.removed, 0);
    }

    #[test]
    fn csv_round_trip() {
        let text = "account_id,period,dpd,status\nA,2020-01,0,open\nA,2020-02,35,open\nA,2020-03,0,closed\nB,2019-12,130,open\n";
        let loaded = load(text).unwrap();
        let mut out = Vec::new();
        write_panel_csv(&loaded.panel, &mut out).unwrap();
        let reloaded = load(std::str::from_utf8(&out).unwrap()).unwrap();
        assert_eq!(reloaded.panel, loaded.panel);
    }

    #[test]
    fn counts_csv_has_headers() {
        let mut c = TransitionCounts::default();
        c.add_history(&history(&[(1, Current), (2, X)]));
        let mut out = Vec::new();
        c.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "state,Current,X,D30,D60,D90,WriteOff,Closed");
        assert_eq!(lines.next().unwrap(), "Current,0,1,0,0,0,0,0");
    }
}
