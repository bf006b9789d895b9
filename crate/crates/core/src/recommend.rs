//! Point of no return and performance period.
//!
//! The point of no return is the least severe transient state from which the
//! one-month probability of staying put or improving (moving to a less severe
//! state or closing) falls strictly below a threshold, 50% by default. The
//! performance period is the expected number of months an account starting in
//! `Current` spends in states up to and including that state, rounded half-up.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::baddef::{BadDefinition, Threshold};
use crate::error::{Error, Result, Stage};
use crate::ingest::{count_transitions, filter_never_delinquent, FilterSummary, Panel, TransitionCounts};
use crate::markov::{
    fundamental_matrix_with, normalize_counts, occupancy_row_sum, to_canonical, validate_stochastic, CanonicalChain,
    Diagnostic, FundamentalMatrix, SolveOptions, TransitionMatrix, DEFAULT_CONDITION_BOUND, DEFAULT_MIN_ROW_COUNT,
    STOCHASTIC_TOLERANCE,
};
use crate::states::{DelinquencyState, StateConfig};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecommendParams {
    pub threshold: f64,
    pub min_row_count: u64,
    pub row_tolerance: f64,
    pub condition_bound: f64,
}

impl Default for RecommendParams {
    fn default() -> Self {
        RecommendParams {
            threshold: DEFAULT_THRESHOLD,
            min_row_count: DEFAULT_MIN_ROW_COUNT,
            row_tolerance: STOCHASTIC_TOLERANCE,
            condition_bound: DEFAULT_CONDITION_BOUND,
        }
    }
}

/// `p(s)` for every transient state of `matrix`, in severity order. `None`
/// marks rows with no observations.
pub fn stay_or_improve_table(matrix: &TransitionMatrix) -> Vec<(DelinquencyState, Option<f64>)> {
    let mut rows: Vec<(usize, DelinquencyState)> = matrix
        .states
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, s)| s.is_transient())
        .collect();
    rows.sort_by_key(|&(_, s)| s);
    rows.into_iter()
        .map(|(i, from)| {
            let p = matrix.row_observed(i).then(|| {
                matrix
                    .states
                    .iter()
                    .zip(&matrix.probs[i])
                    .filter(|(to, _)| from.stays_or_improves_to(**to))
                    .map(|(_, p)| p)
                    .sum()
            });
            (from, p)
        })
        .collect()
}

pub fn point_of_no_return(matrix: &TransitionMatrix, threshold: f64) -> Result<DelinquencyState> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let table = stay_or_improve_table(matrix);
    table
        .iter()
        .find(|(_, p)| p.is_some_and(|p| p < threshold))
        .map(|&(s, _)| s)
        .ok_or(Error::NoPointOfNoReturn { table })
}

/// Round half-up, never below one month.
pub fn round_months(raw: f64) -> u32 {
    ((raw + 0.5).floor()).max(1.0) as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformancePeriod {
    pub raw: f64,
    pub months: u32,
}

pub fn performance_period(
    m: &FundamentalMatrix,
    start: DelinquencyState,
    target: DelinquencyState,
) -> Result<PerformancePeriod> {
    let raw = occupancy_row_sum(m, start, target)?;
    Ok(PerformancePeriod {
        raw,
        months: round_months(raw),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub point_of_no_return: DelinquencyState,
    pub stay_or_improve_probs: BTreeMap<DelinquencyState, f64>,
    pub performance_period_months_raw: f64,
    pub performance_period_months: u32,
    pub bad_definition_text: String,
    pub warnings: Vec<String>,
    pub start_state: DelinquencyState,
    pub params: RecommendParams,
    pub filter: Option<FilterSummary>,
    pub counts: Option<TransitionCounts>,
    pub matrix: TransitionMatrix,
    pub diagnostics: Vec<Diagnostic>,
    pub canonical: CanonicalChain,
    pub fundamental: FundamentalMatrix,
}

impl Recommendation {
    pub fn bad_definition(&self, config: &StateConfig) -> Result<BadDefinition> {
        crate::baddef::parse_bad_definition_with(&self.bad_definition_text, config)
    }
}

/// Full pipeline from a raw panel.
pub fn recommend(panel: &Panel, params: &RecommendParams) -> Result<Recommendation> {
    let (filtered, summary) = filter_never_delinquent(panel);
    if filtered.is_empty() {
        return Err(Error::EmptyPanel.at(Stage::Filter));
    }
    let counts = count_transitions(&filtered);
    let matrix = normalize_counts(&counts).map_err(|e| e.at(Stage::Normalize))?;
    let mut rec = analyze_matrix(matrix, params, &panel.state_config)?;
    rec.filter = Some(summary);
    rec.counts = Some(counts);
    Ok(rec)
}

/// Pipeline from an already estimated or externally supplied matrix.
pub fn recommend_from_matrix(
    matrix: &TransitionMatrix,
    params: &RecommendParams,
    config: &StateConfig,
) -> Result<Recommendation> {
    analyze_matrix(matrix.clone(), params, config)
}

fn analyze_matrix(matrix: TransitionMatrix, params: &RecommendParams, config: &StateConfig) -> Result<Recommendation> {
    let diagnostics = validate_stochastic(&matrix, params.row_tolerance, params.min_row_count);
    let canonical = to_canonical(&matrix).map_err(|e| e.at(Stage::Canonicalize))?;
    let ponr = point_of_no_return(&matrix, params.threshold).map_err(|e| e.at(Stage::PointOfNoReturn))?;
    let options = SolveOptions {
        condition_bound: params.condition_bound,
        ..SolveOptions::default()
    };
    let fundamental = fundamental_matrix_with(&canonical, options).map_err(|e| e.at(Stage::FundamentalMatrix))?;
    let start = DelinquencyState::Current;
    let period = performance_period(&fundamental, start, ponr).map_err(|e| e.at(Stage::PerformancePeriod))?;

    let threshold = match ponr {
        DelinquencyState::X => Threshold::X,
        s => Threshold::Days(config.lower_edge(s)),
    };
    let bad_definition_text = BadDefinition::ever(threshold, period.months).to_string();

    Ok(Recommendation {
        point_of_no_return: ponr,
        stay_or_improve_probs: stay_or_improve_table(&matrix)
            .into_iter()
            .filter_map(|(s, p)| p.map(|p| (s, p)))
            .collect(),
        performance_period_months_raw: period.raw,
        performance_period_months: period.months,
        bad_definition_text,
        warnings: diagnostics.iter().map(|d| d.to_string()).collect(),
        start_state: start,
        params: *params,
        filter: None,
        counts: None,
        matrix,
        diagnostics,
        canonical,
        fundamental,
    })
}
