//! Ever-DPD vintage curves, roll rates and portfolio bad rates.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baddef::BadDefinition;
use crate::error::{Error, Result};
use crate::ingest::{AccountHistory, Panel, Period};
use crate::states::DelinquencyState;

pub const DEFAULT_FLATTENING_EPSILON: f64 = 0.002;
pub const DEFAULT_FLATTENING_K: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub month_on_book: u32,
    pub ever_bad_rate: f64,
    pub n_accounts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VintageCurve {
    pub vintage: Period,
    pub dpd_threshold: u32,
    pub points: Vec<CurvePoint>,
}

/// Month on book at which an account first reaches `threshold` DPD.
fn first_hit(history: &AccountHistory, threshold: u32) -> Option<u32> {
    history
        .observations
        .iter()
        .find(|o| o.dpd >= threshold)
        .map(|o| o.month_on_book)
}

/// Ever-`threshold`+ rate by vintage and month on book.
///
/// Each vintage's curve runs to the shortest horizon among its accounts that
/// are still open at the end of their history; closed and written-off
/// accounts keep their final status beyond their last observation. Every
/// point therefore has the vintage's full account count as denominator.
pub fn ever_dpd_curves(panel: &Panel, dpd_threshold: u32) -> Result<Vec<VintageCurve>> {
    if dpd_threshold == 0 {
        return Err(Error::InvalidArgument("dpd threshold must be at least 1".into()));
    }
    let mut by_vintage: BTreeMap<Period, Vec<&AccountHistory>> = BTreeMap::new();
    for h in panel.histories.iter().filter(|h| !h.observations.is_empty()) {
        by_vintage.entry(h.open_period).or_default().push(h);
    }
    let groups: Vec<(Period, Vec<&AccountHistory>)> = by_vintage.into_iter().collect();
    Ok(groups
        .par_iter()
        .map(|(vintage, accounts)| {
            let censored = accounts
                .iter()
                .filter(|h| !h.is_absorbed())
                .map(|h| h.last_month_on_book())
                .min();
            let horizon =
                censored.unwrap_or_else(|| accounts.iter().map(|h| h.last_month_on_book()).max().unwrap_or(0));
            let mut hits_at = vec![0usize; horizon as usize + 1];
            for h in accounts {
                if let Some(m) = first_hit(h, dpd_threshold) {
                    if m <= horizon {
                        hits_at[m as usize] += 1;
                    }
                }
            }
            let n = accounts.len();
            let mut cumulative = 0;
            let points = (1..=horizon)
                .map(|m| {
                    cumulative += hits_at[m as usize];
                    CurvePoint {
                        month_on_book: m,
                        ever_bad_rate: cumulative as f64 / n as f64,
                        n_accounts: n,
                    }
                })
                .collect();
            VintageCurve {
                vintage: *vintage,
                dpd_threshold,
                points,
            }
        })
        .collect())
}

/// Smallest month `m` such that each of the `k` one-month increments after
/// `m` is at most `epsilon`. `Ok(None)` means the curve never levels off
/// within its horizon.
pub fn detect_flattening(curve: &VintageCurve, epsilon: f64, k: u32) -> Result<Option<u32>> {
    if epsilon.is_nan() || epsilon < 0.0 || k == 0 {
        return Err(Error::InvalidArgument(format!(
            "flattening needs epsilon >= 0 and k >= 1 (got {epsilon}, {k})"
        )));
    }
    let k = k as usize;
    let points = &curve.points;
    if points.len() < k + 1 {
        return Err(Error::InsufficientData {
            needed: k + 1,
            available: points.len(),
        });
    }
    let increments: Vec<f64> = points
        .windows(2)
        .map(|w| w[1].ever_bad_rate - w[0].ever_bad_rate)
        .collect();
    Ok(increments
        .windows(k)
        .position(|w| w.iter().all(|&d| d <= epsilon))
        .map(|i| points[i].month_on_book))
}

pub fn write_curves_csv<W: Write>(curves: &[VintageCurve], sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record([
        "vintage",
        "dpd_threshold",
        "month_on_book",
        "ever_bad_rate",
        "n_accounts",
    ])?;
    for c in curves {
        for p in &c.points {
            writer.write_record([
                c.vintage.to_string(),
                c.dpd_threshold.to_string(),
                p.month_on_book.to_string(),
                p.ever_bad_rate.to_string(),
                p.n_accounts.to_string(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct RollRateRow {
    /// Mature accounts in the bucket (the rate's denominator).
    pub n_accounts: usize,
    pub n_defaulted: usize,
    /// Accounts without a complete outcome window, excluded from the rate.
    pub n_immature: usize,
    pub default_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollRateTable {
    pub x_months: u32,
    pub y_months: u32,
    pub rows: BTreeMap<DelinquencyState, RollRateRow>,
}

impl RollRateTable {
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(sink);
        writer.write_record(["worst_state", "n_accounts", "n_defaulted", "n_immature", "default_rate"])?;
        for (state, row) in &self.rows {
            writer.write_record([
                state.to_string(),
                row.n_accounts.to_string(),
                row.n_defaulted.to_string(),
                row.n_immature.to_string(),
                row.default_rate.map_or(String::new(), |r| r.to_string()),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Defaulted,
    Survived,
    Immature,
}

fn roll_outcome(h: &AccountHistory, x: u32, y: u32) -> (DelinquencyState, Outcome) {
    let (early, later) = h.observations.split_at(h.within(x).len());
    let worst = early
        .iter()
        .map(|o| o.state)
        .filter(|s| s.severity_rank().is_some())
        .max_by_key(|s| s.severity_rank())
        .unwrap_or(DelinquencyState::Current);
    if worst == DelinquencyState::WriteOff {
        return (worst, Outcome::Defaulted);
    }
    let defaulted = later
        .iter()
        .take_while(|o| o.month_on_book <= x + y)
        .any(|o| o.state == DelinquencyState::WriteOff);
    let outcome = if defaulted {
        Outcome::Defaulted
    } else if h.is_absorbed() || h.last_month_on_book() >= x + y {
        Outcome::Survived
    } else {
        Outcome::Immature
    };
    (worst, outcome)
}

/// Bucket accounts by their worst state in months `1..=x` and measure the
/// share written off in months `x+1..=x+y`. Accounts written off within the
/// first window sit in the `WriteOff` bucket and count as defaulted; closed
/// accounts have a known (non-default) outcome. Open accounts observed for
/// fewer than `x + y` months are immature.
pub fn roll_rate(panel: &Panel, x_months: u32, y_months: u32) -> Result<RollRateTable> {
    if x_months == 0 || y_months == 0 {
        return Err(Error::InvalidArgument(
            "roll-rate windows must be at least 1 month".into(),
        ));
    }
    let mut rows: BTreeMap<DelinquencyState, RollRateRow> = BTreeMap::new();
    for h in panel.histories.iter().filter(|h| !h.observations.is_empty()) {
        let (bucket, outcome) = roll_outcome(h, x_months, y_months);
        let row = rows.entry(bucket).or_default();
        match outcome {
            Outcome::Defaulted => {
                row.n_accounts += 1;
                row.n_defaulted += 1;
            }
            Outcome::Survived => row.n_accounts += 1,
            Outcome::Immature => row.n_immature += 1,
        }
    }
    for row in rows.values_mut() {
        row.default_rate = (row.n_accounts > 0).then(|| row.n_defaulted as f64 / row.n_accounts as f64);
    }
    Ok(RollRateTable {
        x_months,
        y_months,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BadRate {
    /// `None` when no account is mature.
    pub rate: Option<f64>,
    pub n_bad: usize,
    pub n_mature: usize,
    pub n_immature: usize,
}

/// An account is mature when it was observed through the whole window or its
/// history ended in an absorbing state.
pub fn is_mature(h: &AccountHistory, window_months: u32) -> bool {
    h.is_absorbed() || h.last_month_on_book() >= window_months
}

pub fn bad_rate(panel: &Panel, def: &BadDefinition) -> BadRate {
    let (n_bad, n_mature, n_immature) = panel
        .histories
        .par_iter()
        .map(|h| {
            if is_mature(h, def.window_months) {
                (def.evaluate(h) as usize, 1, 0)
            } else {
                (0, 0, 1)
            }
        })
        .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    BadRate {
        rate: (n_mature > 0).then(|| n_bad as f64 / n_mature as f64),
        n_bad,
        n_mature,
        n_immature,
    }
}
