use std::fmt;

use crate::states::DelinquencyState;

pub type Result<T> = std::result::Result<T, Error>;

/// Pipeline stage names attached to errors raised inside [`crate::recommend::recommend`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Filter,
    Count,
    Normalize,
    Canonicalize,
    PointOfNoReturn,
    FundamentalMatrix,
    PerformancePeriod,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Filter => "filter_never_delinquent",
            Stage::Count => "count_transitions",
            Stage::Normalize => "normalize_counts",
            Stage::Canonicalize => "to_canonical",
            Stage::PointOfNoReturn => "point_of_no_return",
            Stage::FundamentalMatrix => "fundamental_matrix",
            Stage::PerformancePeriod => "performance_period",
        };
        f.write_str(name)
    }
}

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
    Io,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid state config: {0}")]
    InvalidConfig(String),

    #[error("syntax error at position {position}: expected {expected}, found {found}")]
    Syntax {
        position: usize,
        expected: String,
        found: String,
    },

    #[error("invalid bad definition: {0}")]
    Semantic(String),

    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("line {line}: duplicate observation for account {account_id} in {period}")]
    DuplicateObservation {
        line: u64,
        account_id: String,
        period: String,
    },

    #[error("csv: {0}")]
    Csv(String),

    #[error("panel is empty after filtering never-delinquent accounts")]
    EmptyPanel,

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("row {state} is not stochastic (sum {sum:.6})")]
    NotStochastic { state: DelinquencyState, sum: f64 },

    #[error("cannot build canonical form: {0}")]
    Canonicalization(String),

    #[error("(I - Q) is singular or ill-conditioned (condition estimate {condition:.3e}); transient states that fail to absorb: {}", state_list(.states))]
    Singular {
        states: Vec<DelinquencyState>,
        condition: f64,
    },

    #[error("no point of no return: {}", prob_table(.table))]
    NoPointOfNoReturn {
        table: Vec<(DelinquencyState, Option<f64>)>,
    },

    #[error("insufficient data: need at least {needed} points, have {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("no simulated paths start from {0}")]
    NoPaths(DelinquencyState),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at(self, stage: Stage) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self.root() {
            Error::InvalidConfig(_) | Error::Syntax { .. } | Error::Semantic(_) | Error::InvalidArgument(_) => {
                ErrorKind::Usage
            }
            Error::Singular { .. } => ErrorKind::Numerical,
            Error::Io(_) => ErrorKind::Io,
            _ => ErrorKind::Data,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        match err.position() {
            Some(pos) => Error::MalformedRow {
                line: pos.line(),
                message: err.to_string(),
            },
            None => Error::Csv(err.to_string()),
        }
    }
}

fn state_list(states: &[DelinquencyState]) -> String {
    states.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
}

fn prob_table(table: &[(DelinquencyState, Option<f64>)]) -> String {
    table
        .iter()
        .map(|(s, p)| match p {
            Some(p) => format!("p({s})={p:.4}"),
            None => format!("p({s})=unobserved"),
        })
        .collect::<Vec<_>>()
        .join(", ")
}
