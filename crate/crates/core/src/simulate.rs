//! Synthetic panels drawn from a known transition matrix.
//!
//! Each account `i` draws from its own ChaCha8 stream `(seed, i)`, so a panel
//! is identical no matter how the accounts are scheduled across threads.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AccountHistory, Observation, Panel, Period};
use crate::markov::{TransitionMatrix, STOCHASTIC_TOLERANCE};
use crate::states::{DelinquencyState, StateConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub matrix: TransitionMatrix,
    pub n_accounts: usize,
    pub max_months: u32,
    pub start_state: DelinquencyState,
    /// Opening month and number of accounts for each vintage, in account order.
    pub vintages: Vec<(Period, usize)>,
    pub seed: u64,
    pub state_config: StateConfig,
}

impl SimulationSpec {
    /// One vintage opening in January 2020, starting in `Current`.
    pub fn new(matrix: TransitionMatrix, n_accounts: usize, max_months: u32, seed: u64) -> Self {
        SimulationSpec {
            matrix,
            n_accounts,
            max_months,
            start_state: DelinquencyState::Current,
            vintages: vec![(Period { year: 2020, month: 1 }, n_accounts)],
            seed,
            state_config: StateConfig::default(),
        }
    }

    /// Split the accounts as evenly as possible over `count` consecutive
    /// opening months starting at `first`.
    pub fn with_vintages(mut self, first: Period, count: usize) -> Self {
        let count = count.max(1);
        let base = self.n_accounts / count;
        let extra = self.n_accounts % count;
        self.vintages = (0..count)
            .map(|i| (first.add_months(i as u32), base + usize::from(i < extra)))
            .collect();
        self
    }

    pub fn with_start_state(mut self, state: DelinquencyState) -> Self {
        self.start_state = state;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_accounts == 0 {
            return Err(Error::InvalidArgument("n_accounts must be at least 1".into()));
        }
        if self.max_months == 0 {
            return Err(Error::InvalidArgument("max_months must be at least 1".into()));
        }
        let allocated: usize = self.vintages.iter().map(|v| v.1).sum();
        if allocated != self.n_accounts {
            return Err(Error::InvalidArgument(format!(
                "vintages allocate {allocated} accounts but n_accounts is {}",
                self.n_accounts
            )));
        }
        self.state_config.validate()?;
        if self.matrix.index_of(self.start_state).is_none() {
            return Err(Error::InvalidArgument(format!(
                "start state {} is not in the matrix",
                self.start_state
            )));
        }
        for (i, &state) in self.matrix.states.iter().enumerate() {
            let sum = self.matrix.row_sum(i);
            if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE || self.matrix.probs[i].iter().any(|&p| p < 0.0) {
                return Err(Error::NotStochastic { state, sum });
            }
        }
        Ok(())
    }
}

struct Sampler<'a> {
    spec: &'a SimulationSpec,
    cumulative: Vec<Vec<f64>>,
    start: usize,
    vintage_ends: Vec<usize>,
}

impl<'a> Sampler<'a> {
    fn new(spec: &'a SimulationSpec) -> Result<Self> {
        spec.validate()?;
        let cumulative = spec
            .matrix
            .probs
            .iter()
            .map(|row| {
                row.iter()
                    .scan(0.0, |acc, p| {
                        *acc += p;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        let vintage_ends = spec
            .vintages
            .iter()
            .scan(0, |acc, v| {
                *acc += v.1;
                Some(*acc)
            })
            .collect();
        Ok(Sampler {
            spec,
            cumulative,
            start: spec.matrix.index_of(spec.start_state).unwrap(),
            vintage_ends,
        })
    }

    fn next_state(&self, from: usize, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random();
        let row = &self.cumulative[from];
        // Lands on the last positive-probability column if rounding leaves u above the final sum.
        row.iter().position(|&c| u < c).unwrap_or_else(|| {
            self.spec.matrix.probs[from]
                .iter()
                .rposition(|&p| p > 0.0)
                .unwrap_or(from)
        })
    }

    fn history(&self, index: usize) -> AccountHistory {
        let spec = self.spec;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(index as u64);
        let vintage = self.vintage_ends.partition_point(|&end| end <= index);
        let states = &spec.matrix.states;
        let mut current = self.start;
        let mut observations = Vec::new();
        for month in 1..=spec.max_months {
            if month > 1 {
                current = self.next_state(current, &mut rng);
            }
            let state = states[current];
            observations.push(Observation {
                month_on_book: month,
                state,
                dpd: spec.state_config.lower_edge(state),
            });
            if state.is_absorbing() {
                break;
            }
        }
        AccountHistory {
            account_id: account_id(index),
            open_period: spec.vintages[vintage].0,
            observations,
        }
    }
}

pub fn account_id(index: usize) -> String {
    format!("ACC{index:08}")
}

/// Path of a single account; identical to the corresponding entry of
/// [`simulate_panel`].
pub fn simulate_account(spec: &SimulationSpec, index: usize) -> Result<AccountHistory> {
    if index >= spec.n_accounts {
        return Err(Error::InvalidArgument(format!("account index {index} out of range")));
    }
    Ok(Sampler::new(spec)?.history(index))
}

pub fn simulate_panel(spec: &SimulationSpec) -> Result<Panel> {
    let sampler = Sampler::new(spec)?;
    let histories = (0..spec.n_accounts)
        .into_par_iter()
        .map(|i| sampler.history(i))
        .collect();
    Ok(Panel {
        histories,
        state_config: spec.state_config.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyEstimate {
    pub start: DelinquencyState,
    /// Mean months spent in each transient state per path.
    pub mean_months: BTreeMap<DelinquencyState, f64>,
    pub n_paths: usize,
    /// Paths that had not been absorbed by the end of their history.
    pub n_censored: usize,
}

impl OccupancyEstimate {
    pub fn censored_fraction(&self) -> f64 {
        self.n_censored as f64 / self.n_paths as f64
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct OccupancyTotals {
    months: [u64; DelinquencyState::COUNT],
    paths: usize,
    censored: usize,
}

impl OccupancyTotals {
    fn add(mut self, h: &AccountHistory) -> Self {
        for o in &h.observations {
            if o.state.is_transient() {
                self.months[o.state.index()] += 1;
            }
        }
        self.paths += 1;
        self.censored += usize::from(!h.is_absorbed());
        self
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.months.iter_mut().zip(other.months) {
            *a += b;
        }
        self.paths += other.paths;
        self.censored += other.censored;
        self
    }

    fn finish(self, start: DelinquencyState) -> Result<OccupancyEstimate> {
        if self.paths == 0 {
            return Err(Error::NoPaths(start));
        }
        Ok(OccupancyEstimate {
            start,
            mean_months: DelinquencyState::TRANSIENT
                .iter()
                .map(|&s| (s, self.months[s.index()] as f64 / self.paths as f64))
                .collect(),
            n_paths: self.paths,
            n_censored: self.censored,
        })
    }
}

/// Average months per path spent in each transient state, over the paths
/// whose first observation is `start`.
pub fn estimate_occupancy(panel: &Panel, start: DelinquencyState) -> Result<OccupancyEstimate> {
    panel
        .histories
        .par_iter()
        .filter(|h| h.observations.first().is_some_and(|o| o.state == start))
        .fold(OccupancyTotals::default, |t, h| t.add(h))
        .reduce(OccupancyTotals::default, OccupancyTotals::merge)
        .finish(start)
}

/// Same as `estimate_occupancy(&simulate_panel(spec)?, spec.start_state)`
/// without materialising the panel.
pub fn simulate_occupancy(spec: &SimulationSpec) -> Result<OccupancyEstimate> {
    let sampler = Sampler::new(spec)?;
    (0..spec.n_accounts)
        .into_par_iter()
        .fold(OccupancyTotals::default, |t, i| t.add(&sampler.history(i)))
        .reduce(OccupancyTotals::default, OccupancyTotals::merge)
        .finish(spec.start_state)
}
