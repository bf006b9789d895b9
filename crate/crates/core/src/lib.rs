//! Choose a credit scorecard's bad definition and performance period from an
//! absorbing Markov chain fitted to account-level delinquency data.
//!
//! The pipeline in [`recommend::recommend`]:
//!
//! 1. drop accounts that were never delinquent ([`ingest::filter_never_delinquent`]),
//! 2. count month-to-month state transitions ([`ingest::count_transitions`]),
//! 3. normalise to a transition matrix and put it in canonical form
//!    ([`markov::normalize_counts`], [`markov::to_canonical`]),
//! 4. find the point of no return ([`recommend::point_of_no_return`]),
//! 5. solve for the fundamental matrix and sum occupancy up to that state
//!    ([`markov::fundamental_matrix`], [`recommend::performance_period`]).
//!
//! ```
//! use delinq_chain::{recommend_from_matrix, DelinquencyState, RecommendParams, StateConfig, TransitionMatrix};
//! use DelinquencyState::*;
//!
//! let states = vec![Current, X, D30, D60, D90, WriteOff, Closed];
//! let probs = vec![
//!     vec![0.66, 0.31, 0.01, 0.00, 0.00, 0.00, 0.02],
//!     vec![0.17, 0.71, 0.07, 0.00, 0.00, 0.00, 0.04],
//!     vec![0.04, 0.15, 0.45, 0.30, 0.03, 0.00, 0.04],
//!     vec![0.01, 0.02, 0.03, 0.33, 0.49, 0.06, 0.06],
//!     vec![0.02, 0.01, 0.01, 0.02, 0.26, 0.66, 0.03],
//!     vec![0.00, 0.00, 0.00, 0.00, 0.00, 1.00, 0.00],
//!     vec![0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 1.00],
//! ];
//! let matrix = TransitionMatrix::from_rows(states, probs, 0.015)?;
//! let rec = recommend_from_matrix(&matrix, &RecommendParams::default(), &StateConfig::default())?;
//! assert_eq!(rec.point_of_no_return, D60);
//! assert!(rec.bad_definition_text.starts_with("Ever 60+ DPD in "));
//! # Ok::<(), delinq_chain::Error>(())
//! ```
//!
//! The `book/` directory at the repository root walks through each step in
//! more detail; its code blocks are compiled and run as doc-tests.

pub mod baddef;
pub mod baselines;
pub mod error;
pub mod ingest;
pub mod linalg;
pub mod markov;
pub mod recommend;
pub mod simulate;
pub mod states;

pub use baddef::{
    evaluate_bad_definition, format_bad_definition, parse_bad_definition, parse_bad_definition_with, BadDefinition,
    Clause, ClauseMode, Threshold,
};
pub use baselines::{
    bad_rate, detect_flattening, ever_dpd_curves, roll_rate, BadRate, CurvePoint, RollRateRow, RollRateTable,
    VintageCurve,
};
pub use error::{Error, ErrorKind, Result, Stage};
pub use ingest::{
    count_transitions, filter_never_delinquent, load_panel, write_panel_csv, AccountHistory, AccountRecord,
    FilterSummary, LoadedPanel, Observation, Panel, Period, TransitionCounts,
};
pub use markov::{
    fundamental_matrix, fundamental_matrix_with, normalize_counts, occupancy_row_sum, to_canonical,
    validate_stochastic, CanonicalChain, Diagnostic, FundamentalMatrix, SolveOptions, TransitionMatrix,
};
pub use recommend::{
    performance_period, point_of_no_return, recommend, recommend_from_matrix, stay_or_improve_table, PerformancePeriod,
    RecommendParams, Recommendation,
};
pub use simulate::{
    estimate_occupancy, simulate_account, simulate_occupancy, simulate_panel, OccupancyEstimate, SimulationSpec,
};
pub use states::{state_from_observation, AccountStatus, DelinquencyState, StateConfig};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/states.md")]
    mod states {}
    #[doc = include_str!("../../../book/src/ingestion.md")]
    mod ingestion {}
    #[doc = include_str!("../../../book/src/fundamental-matrix.md")]
    mod fundamental_matrix {}
    #[doc = include_str!("../../../book/src/recommendation.md")]
    mod recommendation {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
