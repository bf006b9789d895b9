//! Reference tables and brute-force oracles shared by the integration tests.
//! The oracles re-derive results with plain loops over raw DPD values and do
//! not call the library routines they are checking.
#![allow(dead_code)]

use delinq_chain::{
    AccountHistory, DelinquencyState, FundamentalMatrix, Panel, Period, SimulationSpec, TransitionMatrix,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use DelinquencyState::*;

/// Reference portfolio matrix, closed state first, as whole percent.
pub const REFERENCE_ORDER: [DelinquencyState; 7] = [Closed, Current, X, D30, D60, D90, WriteOff];
pub const REFERENCE_PERCENT: [[f64; 7]; 7] = [
    [100.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [2.0, 66.0, 31.0, 1.0, 0.0, 0.0, 0.0],
    [4.0, 17.0, 71.0, 7.0, 0.0, 0.0, 0.0],
    [4.0, 4.0, 15.0, 45.0, 30.0, 3.0, 0.0],
    [6.0, 1.0, 2.0, 3.0, 33.0, 49.0, 6.0],
    [3.0, 2.0, 1.0, 1.0, 2.0, 26.0, 66.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 100.0],
];

/// The same matrix laid out transient-first (Current..D90, WriteOff, Closed).
pub const CANONICAL_PERCENT: [[f64; 7]; 7] = [
    [66.0, 31.0, 1.0, 0.0, 0.0, 0.0, 2.0],
    [17.0, 71.0, 7.0, 0.0, 0.0, 0.0, 4.0],
    [4.0, 15.0, 45.0, 30.0, 3.0, 0.0, 4.0],
    [1.0, 2.0, 3.0, 33.0, 49.0, 6.0, 6.0],
    [2.0, 1.0, 1.0, 2.0, 26.0, 66.0, 3.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 100.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 100.0],
];

/// Reference mean-occupancy table over Current, X, D30, D60, D90, rounded to 0.1.
pub const REFERENCE_OCCUPANCY: [[f64; 5]; 5] = [
    [5.9, 7.6, 1.2, 0.6, 0.4],
    [6.2, 10.0, 1.7, 0.8, 0.6],
    [1.4, 2.5, 1.2, 0.6, 0.5],
    [0.9, 1.4, 0.8, 0.9, 0.6],
    [0.4, 0.7, 0.2, 0.9, 0.9],
];

pub const DEFINITION_EXAMPLES: [&str; 8] = [
    "Ever X+ DPD in 3 Months",
    "Ever 30+ DPD in 6 Months",
    "Ever 60+ DPD in 9 Months",
    "Ever 90+ DPD in 12 Months",
    "2 Times X+ DPD in 4 Months",
    "6 Times 30+ DPD in 12 Months",
    "2 Times 30+ DPD and 4 Times X+ DPD in 10 Months",
    "2 Times Consecutive 30+ DPD in 12 Months",
];

fn decimals<const N: usize>(percent: &[[f64; N]; N]) -> Vec<Vec<f64>> {
    percent.iter().map(|r| r.iter().map(|p| p / 100.0).collect()).collect()
}

/// Reference matrix as decimals, rows not renormalised.
pub fn reference_raw() -> TransitionMatrix {
    TransitionMatrix::from_raw(REFERENCE_ORDER.to_vec(), decimals(&REFERENCE_PERCENT)).unwrap()
}

/// Reference matrix as decimals, rows renormalised.
pub fn reference_matrix() -> TransitionMatrix {
    TransitionMatrix::from_rows(REFERENCE_ORDER.to_vec(), decimals(&REFERENCE_PERCENT), 0.015).unwrap()
}

/// Canonical-layout matrix, renormalised; used as the simulation generator.
pub fn canonical_generator() -> TransitionMatrix {
    TransitionMatrix::from_rows(DelinquencyState::ALL.to_vec(), decimals(&CANONICAL_PERCENT), 0.015).unwrap()
}

/// `Q` block of the canonical matrix, renormalised rows.
pub fn canonical_q() -> Vec<Vec<f64>> {
    let g = canonical_generator();
    g.probs[..5].iter().map(|r| r[..5].to_vec()).collect()
}

pub fn reference_occupancy() -> FundamentalMatrix {
    FundamentalMatrix::from_rows(
        DelinquencyState::TRANSIENT.to_vec(),
        REFERENCE_OCCUPANCY.iter().map(|r| r.to_vec()).collect(),
    )
    .unwrap()
}

/// Σ_k Q^k, stopping once ‖Q^k‖∞ < 1e-12.
pub fn neumann_series(q: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = q.len();
    let mut sum: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect())
        .collect();
    let mut power = sum.clone();
    for _ in 0..1_000_000 {
        let mut next = vec![vec![0.0; n]; n];
        for i in 0..n {
            for k in 0..n {
                let a = power[i][k];
                if a != 0.0 {
                    for j in 0..n {
                        next[i][j] += a * q[k][j];
                    }
                }
            }
        }
        power = next;
        for i in 0..n {
            for j in 0..n {
                sum[i][j] += power[i][j];
            }
        }
        let norm = power
            .iter()
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        if norm < 1e-12 {
            return sum;
        }
    }
    panic!("Neumann series did not converge");
}

/// Random substochastic matrix with every row sum at most `max_row_sum`.
pub fn random_substochastic(rng: &mut ChaCha8Rng, n: usize, max_row_sum: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            let target = rng.random::<f64>() * max_row_sum;
            raw.iter().map(|x| x / total * target).collect()
        })
        .collect()
}

/// Simulated panel from the reference generator with DPD jittered inside
/// each bucket so thresholds are not only hit on exact edges.
pub fn seeded_panel(n_accounts: usize, months: u32, seed: u64) -> Panel {
    let spec = SimulationSpec::new(canonical_generator(), n_accounts, months, seed)
        .with_vintages(Period::new(2019, 1).unwrap(), 6);
    let mut panel = delinq_chain::simulate_panel(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for h in &mut panel.histories {
        for o in &mut h.observations {
            let width = match o.state {
                X => 29,
                D30 | D60 | D90 => 30,
                WriteOff => 60,
                _ => 1,
            };
            o.dpd += rng.random_range(0..width);
        }
    }
    panel
}

/// DPD by month on book for months 1..=window; `None` where unobserved.
fn dpd_by_month(h: &AccountHistory, window: u32) -> Vec<Option<u32>> {
    let mut months = vec![None; window as usize];
    for o in &h.observations {
        if o.month_on_book >= 1 && o.month_on_book <= window {
            months[o.month_on_book as usize - 1] = Some(o.dpd);
        }
    }
    months
}

/// Parse-free definition used by the naive evaluator.
#[derive(Debug, Clone)]
pub enum NaiveClause {
    Ever(u32),
    Times(u32, u32),
    Consecutive(u32, u32),
}

/// Hand translation of each entry of [`DEFINITION_EXAMPLES`].
pub fn naive_examples() -> Vec<(Vec<NaiveClause>, u32)> {
    use NaiveClause::*;
    vec![
        (vec![Ever(1)], 3),
        (vec![Ever(30)], 6),
        (vec![Ever(60)], 9),
        (vec![Ever(90)], 12),
        (vec![Times(2, 1)], 4),
        (vec![Times(6, 30)], 12),
        (vec![Times(2, 30), Times(4, 1)], 10),
        (vec![Consecutive(2, 30)], 12),
    ]
}

pub fn naive_evaluate(clauses: &[NaiveClause], window: u32, h: &AccountHistory) -> bool {
    let months = dpd_by_month(h, window);
    clauses.iter().all(|c| match *c {
        NaiveClause::Ever(th) => months.iter().any(|m| matches!(m, Some(d) if *d >= th)),
        NaiveClause::Times(k, th) => months.iter().filter(|m| matches!(m, Some(d) if *d >= th)).count() >= k as usize,
        NaiveClause::Consecutive(k, th) => {
            let mut best = 0;
            let mut run = 0;
            for m in &months {
                if matches!(m, Some(d) if *d >= th) {
                    run += 1;
                    best = best.max(run);
                } else {
                    run = 0;
                }
            }
            best >= k
        }
    })
}

fn severity(s: DelinquencyState) -> i32 {
    match s {
        Current => 0,
        X => 1,
        D30 => 2,
        D60 => 3,
        D90 => 4,
        WriteOff => 5,
        Closed => -1,
    }
}

/// (bucket, mature denominator, defaulted, immature) per bucket by brute force.
pub fn naive_roll_rate(panel: &Panel, x: u32, y: u32) -> Vec<(DelinquencyState, usize, usize, usize)> {
    let mut table: Vec<(DelinquencyState, usize, usize, usize)> = Vec::new();
    for h in &panel.histories {
        let mut worst = Current;
        for o in &h.observations {
            if o.month_on_book <= x && severity(o.state) > severity(worst) {
                worst = o.state;
            }
        }
        let mut defaulted = worst == WriteOff;
        let mut last = 0;
        let mut absorbed = false;
        for o in &h.observations {
            if o.month_on_book > x && o.month_on_book <= x + y && o.state == WriteOff {
                defaulted = true;
            }
            last = last.max(o.month_on_book);
            absorbed = o.state == WriteOff || o.state == Closed;
        }
        let mature = defaulted || absorbed || last >= x + y;
        let idx = match table.iter().position(|r| r.0 == worst) {
            Some(i) => i,
            None => {
                table.push((worst, 0, 0, 0));
                table.len() - 1
            }
        };
        if mature {
            table[idx].1 += 1;
            table[idx].2 += defaulted as usize;
        } else {
            table[idx].3 += 1;
        }
    }
    table.sort_by_key(|r| r.0);
    table
}

/// Ever-threshold rate of a vintage at month `m` by rescanning every account.
pub fn naive_ever_rate(accounts: &[&AccountHistory], threshold: u32, m: u32) -> f64 {
    let mut hits = 0;
    for h in accounts {
        let mut max_dpd = 0;
        for o in &h.observations {
            if o.month_on_book <= m {
                max_dpd = max_dpd.max(o.dpd);
            }
        }
        if max_dpd >= threshold {
            hits += 1;
        }
    }
    hits as f64 / accounts.len() as f64
}

/// Single-vintage panel whose ever-30+ curve rises by 4 points a month through
/// month `flat_from`, then by 0.1 point a month out to `months`.
pub fn flattening_fixture(n_accounts: usize, flat_from: u32, months: u32) -> Panel {
    let open_period = Period::new(2018, 1).unwrap();
    let steep = n_accounts * 4 / 100;
    let slow = n_accounts / 1000;
    let mut first_hits = Vec::new();
    for m in 2..=flat_from {
        first_hits.extend(std::iter::repeat_n(m, steep));
    }
    for m in flat_from + 1..=months {
        first_hits.extend(std::iter::repeat_n(m, slow));
    }
    assert!(first_hits.len() <= n_accounts);
    let histories = (0..n_accounts)
        .map(|i| {
            let hit = first_hits.get(i).copied();
            AccountHistory {
                account_id: format!("F{i:05}"),
                open_period,
                observations: (1..=months)
                    .map(|m| {
                        let dpd = if Some(m) == hit { 30 } else { 0 };
                        delinq_chain::Observation {
                            month_on_book: m,
                            state: if dpd > 0 { D30 } else { Current },
                            dpd,
                        }
                    })
                    .collect(),
            }
        })
        .collect();
    Panel {
        histories,
        state_config: Default::default(),
    }
}
