//! Transition matrices, canonical (transient-first) form and the fundamental
//! matrix `M = (I − Q)⁻¹`.
//!
//! `M[i][j]` is the expected number of months spent in transient state `j`
//! by an account that starts in transient state `i`, counting the starting
//! month. It satisfies `M = I + QM`, and is obtained here by solving
//! `(I − Q) M = I` with a pivoted LU factorisation rather than by forming an
//! inverse explicitly.

use std::collections::VecDeque;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::TransitionCounts;
use crate::linalg::{identity, inf_norm, inf_norm_diff, mat_mul, Lu, Matrix};
use crate::states::DelinquencyState;

/// Rows outside this tolerance are rejected as non-stochastic after normalisation.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-9;
/// `(I − Q)` is rejected when its condition estimate exceeds this.
pub const DEFAULT_CONDITION_BOUND: f64 = 1e12;
pub const DEFAULT_MIN_ROW_COUNT: u64 = 30;
/// Matrices quoted in whole percent have rows summing to anywhere from 99 to 101%.
pub const ROUNDED_ROW_TOLERANCE: f64 = 0.015;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub states: Vec<DelinquencyState>,
    pub probs: Matrix,
    /// Observations behind each row, when the matrix was estimated from counts.
    pub row_counts: Option<Vec<u64>>,
}

impl TransitionMatrix {
    /// Raw matrix with no checks or renormalisation.
    pub fn from_raw(states: Vec<DelinquencyState>, probs: Matrix) -> Result<Self> {
        check_shape(&states, &probs)?;
        Ok(TransitionMatrix {
            states,
            probs,
            row_counts: None,
        })
    }

    /// Build from entered probabilities. Every row must sum to 1 within
    /// `tolerance`; rows are then renormalised exactly and absorbing rows
    /// must already be (approximately) the identity.
    pub fn from_rows(states: Vec<DelinquencyState>, probs: Matrix, tolerance: f64) -> Result<Self> {
        check_shape(&states, &probs)?;
        let mut probs = probs;
        for (i, row) in probs.iter_mut().enumerate() {
            let state = states[i];
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "row {state} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tolerance {
                return Err(Error::NotStochastic { state, sum });
            }
            if state.is_absorbing() {
                if (row[i] - sum).abs() > tolerance {
                    return Err(Error::InvalidArgument(format!(
                        "absorbing state {state} must only transition to itself"
                    )));
                }
                row.iter_mut().for_each(|p| *p = 0.0);
                row[i] = 1.0;
            } else {
                row.iter_mut().for_each(|p| *p /= sum);
            }
        }
        Ok(TransitionMatrix {
            states,
            probs,
            row_counts: None,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, state: DelinquencyState) -> Option<usize> {
        self.states.iter().position(|&s| s == state)
    }

    /// Probability `from → to`; zero when either state is absent.
    pub fn prob(&self, from: DelinquencyState, to: DelinquencyState) -> f64 {
        match (self.index_of(from), self.index_of(to)) {
            (Some(i), Some(j)) => self.probs[i][j],
            _ => 0.0,
        }
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.probs[i].iter().sum()
    }

    /// Whether row `i` carries any information (has a positive sum and, when
    /// counts are known, at least one observation).
    pub fn row_observed(&self, i: usize) -> bool {
        let counted = self.row_counts.as_ref().is_none_or(|c| c[i] > 0);
        counted && self.row_sum(i) > 0.0
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        write_labeled_matrix(sink, &self.states, &self.states, &self.probs)
    }

    /// Read a square matrix with a `state,<names...>` header and one row per
    /// state. Rows may appear in any order; they are re-ordered to match the
    /// header columns. The result is validated with `tolerance` and
    /// renormalised as in [`TransitionMatrix::from_rows`].
    pub fn read_csv<R: Read>(source: R, tolerance: f64) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
        let headers = reader.headers()?.clone();
        let states = headers
            .iter()
            .skip(1)
            .map(|h| h.parse::<DelinquencyState>())
            .collect::<Result<Vec<_>>>()?;
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; states.len()];
        let mut record = csv::StringRecord::new();
        while reader.read_record(&mut record)? {
            let line = record.position().map_or(0, |p| p.line());
            let malformed = |message: String| Error::MalformedRow { line, message };
            let state: DelinquencyState = record[0].parse().map_err(|e: Error| malformed(e.to_string()))?;
            let idx = states
                .iter()
                .position(|&s| s == state)
                .ok_or_else(|| malformed(format!("row {state} has no matching column")))?;
            if rows[idx].is_some() {
                return Err(malformed(format!("row {state} appears twice")));
            }
            let values = record
                .iter()
                .skip(1)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| malformed(format!("{v:?} is not a number")))
                })
                .collect::<Result<Vec<_>>>()?;
            if values.len() != states.len() {
                return Err(malformed(format!(
                    "expected {} values, got {}",
                    states.len(),
                    values.len()
                )));
            }
            rows[idx] = Some(values);
        }
        let probs = rows
            .into_iter()
            .zip(&states)
            .map(|(r, s)| r.ok_or_else(|| Error::Csv(format!("missing row for {s}"))))
            .collect::<Result<Matrix>>()?;
        Self::from_rows(states, probs, tolerance)
    }
}

fn check_shape(states: &[DelinquencyState], probs: &[Vec<f64>]) -> Result<()> {
    if probs.len() != states.len() || probs.iter().any(|r| r.len() != states.len()) {
        return Err(Error::InvalidArgument(format!(
            "matrix must be {0}x{0} to match its states",
            states.len()
        )));
    }
    let mut sorted = states.to_vec();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("states must be unique".into()));
    }
    Ok(())
}

pub(crate) fn write_labeled_matrix<W: Write>(
    sink: W,
    rows: &[DelinquencyState],
    cols: &[DelinquencyState],
    values: &[Vec<f64>],
) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    let mut header = vec!["state".to_string()];
    header.extend(cols.iter().map(|s| s.to_string()));
    writer.write_record(&header)?;
    for (state, row) in rows.iter().zip(values) {
        let mut record = vec![state.to_string()];
        record.extend(row.iter().map(|v| v.to_string()));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Divide each row of `counts` by its total. Absorbing rows become the
/// identity; transient rows with no observations are left at zero and show
/// up as [`Diagnostic::Unobserved`] in [`validate_stochastic`].
pub fn normalize_counts(counts: &TransitionCounts) -> Result<TransitionMatrix> {
    let states = DelinquencyState::ALL.to_vec();
    let row_counts: Vec<u64> = states.iter().map(|&s| counts.row_total(s)).collect();
    if states.iter().zip(&row_counts).all(|(s, &n)| s.is_absorbing() || n == 0) {
        return Err(Error::Estimation(
            "no transitions observed out of any transient state".into(),
        ));
    }
    let probs = states
        .iter()
        .zip(&row_counts)
        .map(|(&from, &total)| {
            if from.is_absorbing() {
                states.iter().map(|&to| if to == from { 1.0 } else { 0.0 }).collect()
            } else if total == 0 {
                vec![0.0; states.len()]
            } else {
                states
                    .iter()
                    .map(|&to| counts.get(from, to) as f64 / total as f64)
                    .collect()
            }
        })
        .collect();
    Ok(TransitionMatrix {
        states,
        probs,
        row_counts: Some(row_counts),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    RowSum {
        state: DelinquencyState,
        sum: f64,
    },
    NegativeEntry {
        from: DelinquencyState,
        to: DelinquencyState,
        value: f64,
    },
    LowSupport {
        state: DelinquencyState,
        count: u64,
        minimum: u64,
    },
    Unobserved {
        state: DelinquencyState,
    },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::RowSum { state, sum } => write!(f, "row {state} sums to {sum:.6}"),
            Diagnostic::NegativeEntry { from, to, value } => {
                write!(f, "negative probability {value} for {from} -> {to}")
            }
            Diagnostic::LowSupport { state, count, minimum } => write!(
                f,
                "row {state} is estimated from {count} transitions (minimum {minimum})"
            ),
            Diagnostic::Unobserved { state } => {
                write!(f, "no transitions observed out of {state}")
            }
        }
    }
}

/// Report rows that are not stochastic within `tolerance`, negative entries,
/// and rows estimated from fewer than `min_row_count` transitions.
pub fn validate_stochastic(matrix: &TransitionMatrix, tolerance: f64, min_row_count: u64) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for (i, &state) in matrix.states.iter().enumerate() {
        for (j, &value) in matrix.probs[i].iter().enumerate() {
            if value < 0.0 {
                out.push(Diagnostic::NegativeEntry {
                    from: state,
                    to: matrix.states[j],
                    value,
                });
            }
        }
        if state.is_transient() && !matrix.row_observed(i) {
            out.push(Diagnostic::Unobserved { state });
            continue;
        }
        let sum = matrix.row_sum(i);
        if (sum - 1.0).abs() > tolerance {
            out.push(Diagnostic::RowSum { state, sum });
        }
        if let Some(counts) = &matrix.row_counts {
            if state.is_transient() && counts[i] < min_row_count {
                out.push(Diagnostic::LowSupport {
                    state,
                    count: counts[i],
                    minimum: min_row_count,
                });
            }
        }
    }
    out
}

/// Matrix with transient states (in severity order) ahead of absorbing ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalChain {
    pub transient_states: Vec<DelinquencyState>,
    pub absorbing_states: Vec<DelinquencyState>,
    /// Transient-to-transient block.
    pub q: Matrix,
    /// Transient-to-absorbing block.
    pub r: Matrix,
    /// Full matrix in canonical order.
    pub probs: Matrix,
    /// `permutation[k]` is the original index of canonical position `k`.
    pub permutation: Vec<usize>,
    pub row_counts: Option<Vec<u64>>,
}

impl CanonicalChain {
    pub fn states(&self) -> impl Iterator<Item = DelinquencyState> + '_ {
        self.transient_states.iter().chain(&self.absorbing_states).copied()
    }

    pub fn transient_index(&self, state: DelinquencyState) -> Option<usize> {
        self.transient_states.iter().position(|&s| s == state)
    }

    /// Undo the permutation.
    pub fn to_matrix(&self) -> TransitionMatrix {
        let n = self.permutation.len();
        let states: Vec<DelinquencyState> = self.states().collect();
        let mut original_states = vec![DelinquencyState::Current; n];
        let mut probs = vec![vec![0.0; n]; n];
        for (ci, &oi) in self.permutation.iter().enumerate() {
            original_states[oi] = states[ci];
            for (cj, &oj) in self.permutation.iter().enumerate() {
                probs[oi][oj] = self.probs[ci][cj];
            }
        }
        let row_counts = self.row_counts.as_ref().map(|c| {
            let mut out = vec![0; n];
            for (ci, &oi) in self.permutation.iter().enumerate() {
                out[oi] = c[ci];
            }
            out
        });
        TransitionMatrix {
            states: original_states,
            probs,
            row_counts,
        }
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let states: Vec<DelinquencyState> = self.states().collect();
        write_labeled_matrix(sink, &states, &states, &self.probs)
    }
}

pub fn to_canonical(matrix: &TransitionMatrix) -> Result<CanonicalChain> {
    let mut order: Vec<usize> = (0..matrix.len()).collect();
    // DelinquencyState's Ord is already transient-by-severity, then WriteOff, Closed.
    order.sort_by_key(|&i| matrix.states[i]);
    let (transient, absorbing): (Vec<usize>, Vec<usize>) =
        order.iter().partition(|&&i| matrix.states[i].is_transient());
    if transient.is_empty() {
        return Err(Error::Canonicalization("matrix has no transient states".into()));
    }
    if absorbing.is_empty() {
        return Err(Error::Canonicalization("matrix has no absorbing states".into()));
    }
    let block = |rows: &[usize], cols: &[usize]| -> Matrix {
        rows.iter()
            .map(|&i| cols.iter().map(|&j| matrix.probs[i][j]).collect())
            .collect()
    };
    let q = block(&transient, &transient);
    let r = block(&transient, &absorbing);
    if r.iter().flatten().all(|&p| p == 0.0) {
        return Err(Error::Canonicalization(
            "no absorbing state is reachable from any transient state".into(),
        ));
    }
    Ok(CanonicalChain {
        transient_states: transient.iter().map(|&i| matrix.states[i]).collect(),
        absorbing_states: absorbing.iter().map(|&i| matrix.states[i]).collect(),
        q,
        r,
        probs: block(&order, &order),
        row_counts: matrix
            .row_counts
            .as_ref()
            .map(|c| order.iter().map(|&i| c[i]).collect()),
        permutation: order,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundamentalMatrix {
    pub states: Vec<DelinquencyState>,
    pub m: Matrix,
    /// `‖I − Q‖∞ · ‖M‖∞`, when computed from a chain.
    pub condition: Option<f64>,
    /// `‖(I − Q)M − I‖∞`, when computed from a chain.
    pub residual: Option<f64>,
}

impl FundamentalMatrix {
    /// Wrap externally supplied values, e.g. a table copied from a report.
    pub fn from_rows(states: Vec<DelinquencyState>, m: Matrix) -> Result<Self> {
        if m.len() != states.len() || m.iter().any(|r| r.len() != states.len()) {
            return Err(Error::InvalidArgument("fundamental matrix shape mismatch".into()));
        }
        if let Some(s) = states.iter().find(|s| s.is_absorbing()) {
            return Err(Error::InvalidArgument(format!("{s} is not transient")));
        }
        Ok(FundamentalMatrix {
            states,
            m,
            condition: None,
            residual: None,
        })
    }

    pub fn index_of(&self, state: DelinquencyState) -> Option<usize> {
        self.states.iter().position(|&s| s == state)
    }

    pub fn row(&self, state: DelinquencyState) -> Option<&[f64]> {
        self.index_of(state).map(|i| self.m[i].as_slice())
    }

    /// Expected months before absorption, starting from each transient state.
    pub fn expected_time_to_absorption(&self) -> Vec<f64> {
        self.m.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        write_labeled_matrix(sink, &self.states, &self.states, &self.m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub condition_bound: f64,
    pub residual_bound: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            condition_bound: DEFAULT_CONDITION_BOUND,
            residual_bound: 1e-9,
        }
    }
}

pub fn fundamental_matrix(chain: &CanonicalChain) -> Result<FundamentalMatrix> {
    fundamental_matrix_with(chain, SolveOptions::default())
}

pub fn fundamental_matrix_with(chain: &CanonicalChain, options: SolveOptions) -> Result<FundamentalMatrix> {
    let t = chain.transient_states.len();
    for (i, &state) in chain.transient_states.iter().enumerate() {
        let exits: f64 = chain.q[i].iter().chain(&chain.r[i]).sum();
        let counted = chain.row_counts.as_ref().is_none_or(|c| c[i] > 0);
        if exits == 0.0 || !counted {
            return Err(Error::Estimation(format!(
                "transient state {state} has no observed transitions"
            )));
        }
    }

    let mut a = identity(t);
    for (i, row) in a.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v -= chain.q[i][j];
        }
    }

    let singular = |condition: f64| Error::Singular {
        states: non_absorbing_states(chain),
        condition,
    };
    let lu = Lu::factor(&a).ok_or_else(|| singular(f64::INFINITY))?;
    let m = lu.solve_matrix(&identity(t));
    let condition = inf_norm(&a) * inf_norm(&m);
    if !condition.is_finite() || condition > options.condition_bound {
        return Err(singular(condition));
    }
    let residual = inf_norm_diff(&mat_mul(&a, &m), &identity(t));
    if residual > options.residual_bound {
        return Err(Error::Singular {
            states: non_absorbing_states(chain),
            condition,
        });
    }
    Ok(FundamentalMatrix {
        states: chain.transient_states.clone(),
        m,
        condition: Some(condition),
        residual: Some(residual),
    })
}

/// Transient states from which no absorbing state can be reached; falls back
/// to every transient state when absorption is reachable from all of them but
/// the system is still numerically singular.
fn non_absorbing_states(chain: &CanonicalChain) -> Vec<DelinquencyState> {
    let t = chain.transient_states.len();
    let mut reaches = vec![false; t];
    let mut queue: VecDeque<usize> = (0..t).filter(|&i| chain.r[i].iter().any(|&p| p > 0.0)).collect();
    for &i in &queue {
        reaches[i] = true;
    }
    while let Some(j) = queue.pop_front() {
        for (i, reached) in reaches.iter_mut().enumerate() {
            if !*reached && chain.q[i][j] > 0.0 {
                *reached = true;
                queue.push_back(i);
            }
        }
    }
    let stuck: Vec<DelinquencyState> = (0..t)
        .filter(|&i| !reaches[i])
        .map(|i| chain.transient_states[i])
        .collect();
    if stuck.is_empty() {
        chain.transient_states.clone()
    } else {
        stuck
    }
}

/// Sum of `M[start][j]` over transient `j` up to and including `target` in
/// severity. Counts the months spent in `target` itself, so it is an
/// occupancy total rather than a strict first-hitting time.
pub fn occupancy_row_sum(m: &FundamentalMatrix, start: DelinquencyState, target: DelinquencyState) -> Result<f64> {
    let not_transient =
        |s: DelinquencyState| Error::InvalidArgument(format!("{s} is not a transient state of the fundamental matrix"));
    let row = m.row(start).ok_or_else(|| not_transient(start))?;
    let target_rank = match (m.index_of(target), target.severity_rank()) {
        (Some(_), Some(rank)) => rank,
        _ => return Err(not_transient(target)),
    };
    if start.severity_rank() > Some(target_rank) {
        return Err(Error::InvalidArgument(format!(
            "target {target} is less severe than start {start}"
        )));
    }
    Ok(m.states
        .iter()
        .zip(row)
        .filter(|(s, _)| s.severity_rank().is_some_and(|r| r <= target_rank))
        .map(|(_, v)| v)
        .sum())
}
