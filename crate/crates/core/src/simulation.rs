// SPDX-License-Identifier: Apache-2.0

//! Paired simulations of the knapsack-only and leverage procedures.
//!
//! A scenario fixes the fee rate, batch size and boost factor. For each
//! repetition a fresh UTXO pool and payment pool are sampled, and the chosen
//! procedure runs a fixed number of iterations on them. Both modes derive
//! their samples from the same seeds, so a `NoLeverage` and a `Leverage`
//! report for one config are directly comparable.

use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{derive_seed, rng_from_seed, sample_payments, sample_utxo_pool, Datasets, SampleError};
use crate::decimal::{self, format_decimal, Rational};
use crate::model::{dust_threshold, Amount, FeeParams};
use crate::orchestrator::{
    run, IterationRecord, MethodCounts, OrchestratorError, Procedure, WorldState, DEFAULT_CANDIDATE_WINDOW,
};
use crate::selection::{LeverageParams, SelectionError};
use crate::solver::SolveLimits;

const SAT_PER_BTC: i128 = 100_000_000;

/// Fee rates and batch sizes of the default grid.
pub const GRID_GAMMAS: [u64; 5] = [22, 60, 200, 400, 900];
pub const GRID_BATCHES: [usize; 4] = [2, 3, 5, 10];

/// Boost factor per (γ, M) cell, in hundredths.
const BOOST_TABLE: [(u64, usize, i128); 20] = [
    (22, 2, 94),
    (22, 3, 96),
    (22, 5, 100),
    (22, 10, 100),
    (60, 2, 78),
    (60, 3, 96),
    (60, 5, 94),
    (60, 10, 98),
    (200, 2, 54),
    (200, 3, 64),
    (200, 5, 84),
    (200, 10, 96),
    (400, 2, 52),
    (400, 3, 52),
    (400, 5, 66),
    (400, 10, 86),
    (900, 2, 22),
    (900, 3, 44),
    (900, 5, 64),
    (900, 10, 82),
];

/// Default boost factor for a grid cell, if the cell is on the grid.
pub fn default_beta(gamma: u64, batch: usize) -> Option<Rational> {
    BOOST_TABLE
        .iter()
        .find(|(g, m, _)| *g == gamma && *m == batch)
        .map(|(_, _, hundredths)| Rational::new(*hundredths, 100))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    NoLeverage,
    Leverage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Fee rate, satoshi per byte.
    pub gamma: u64,
    /// Batch size; the leverage program uses `m1 = m2 = m`.
    pub m: usize,
    #[serde(with = "decimal::serde_decimal")]
    pub beta: Rational,
    pub utxo_pool_size: usize,
    pub payment_pool_size: usize,
    /// Smallest sampled payment; the dust threshold at `gamma` when unset.
    pub min_payment: Option<Amount>,
    /// Make-change threshold; the dust threshold at `gamma` when unset.
    pub make_change: Option<Amount>,
    pub iterations_per_sample: usize,
    pub repetitions: usize,
    pub rng_seed: u64,
    pub budget_ms: u64,
    pub node_limit: Option<u64>,
    pub candidate_window: usize,
    #[serde(with = "decimal::serde_decimal")]
    pub btc_usd: Rational,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            gamma: 22,
            m: 2,
            beta: default_beta(22, 2).expect("grid cell"),
            utxo_pool_size: 2_500,
            payment_pool_size: 250,
            min_payment: None,
            make_change: None,
            iterations_per_sample: 5,
            repetitions: 10,
            rng_seed: 0,
            budget_ms: 1_000,
            node_limit: Some(2_000_000),
            candidate_window: DEFAULT_CANDIDATE_WINDOW,
            btc_usd: Rational::from_integer(8_582),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |msg: String| Err(SimulationError::InvalidConfig(msg));
        if self.m == 0 {
            return bad("m must be at least 1".into());
        }
        if self.utxo_pool_size == 0 || self.payment_pool_size == 0 {
            return bad("pool sizes must be at least 1".into());
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.budget_ms == 0 {
            return bad("budget_ms must be positive".into());
        }
        if self.btc_usd <= Rational::from_integer(0) {
            return bad("btc_usd must be positive".into());
        }
        self.leverage_params().map(|_| ()).map_err(|e| SimulationError::InvalidConfig(e.to_string()))
    }

    pub fn fees(&self) -> FeeParams {
        let fees = FeeParams::new(self.gamma);
        match self.make_change {
            Some(h) => fees.with_make_change(h),
            None => fees,
        }
    }

    pub fn min_payment(&self) -> Amount {
        self.min_payment.unwrap_or_else(|| dust_threshold(self.gamma))
    }

    pub fn limits(&self) -> SolveLimits {
        SolveLimits::new(Duration::from_millis(self.budget_ms), self.node_limit)
    }

    pub fn leverage_params(&self) -> Result<LeverageParams, SelectionError> {
        LeverageParams::new(self.m, self.m, self.beta)
    }

    pub fn procedure(&self, mode: Mode) -> Result<Procedure, SimulationError> {
        let mut procedure = match mode {
            Mode::NoLeverage => Procedure::knapsack(self.m),
            Mode::Leverage => Procedure::with_leverage(
                self.m,
                self.leverage_params().map_err(|e| SimulationError::InvalidConfig(e.to_string()))?,
            ),
        };
        procedure.candidate_window = self.candidate_window;
        Ok(procedure)
    }

    /// Satoshi amount in USD at this config's BTC price.
    pub fn to_usd(&self, sat: Rational) -> Rational {
        sat * self.btc_usd / Rational::from_integer(SAT_PER_BTC)
    }
}

/// The default 20-cell grid, with every other field taken from `base`.
pub fn default_grid(base: &ScenarioConfig) -> Vec<ScenarioConfig> {
    GRID_GAMMAS
        .iter()
        .flat_map(|&gamma| GRID_BATCHES.iter().map(move |&m| (gamma, m)))
        .map(|(gamma, m)| ScenarioConfig { gamma, m, beta: default_beta(gamma, m).expect("grid cell"), ..base.clone() })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimulationError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("baseline cost per payment is zero")]
    ZeroBaseline,
    #[error(transparent)]
    Sample(#[from] SampleError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepetitionReport {
    pub index: usize,
    pub utxo_seed: u64,
    pub payment_seed: u64,
    pub records: Vec<IterationRecord>,
    /// Set when sampling failed or the pool ran dry; `records` then holds
    /// whatever completed before.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "ScenarioReportWire")]
pub struct ScenarioReport {
    pub config: ScenarioConfig,
    pub mode: Mode,
    pub iterations: u64,
    pub methods: MethodCounts,
    pub payments_processed: u64,
    pub total_cost: Amount,
    pub failed_repetitions: u64,
    pub repetitions: Vec<RepetitionReport>,
}

impl ScenarioReport {
    fn rate(&self, count: u64) -> Rational {
        if self.iterations == 0 {
            return Rational::from_integer(0);
        }
        Rational::new(i128::from(count), i128::from(self.iterations))
    }

    pub fn fallback_rate(&self) -> Rational {
        self.rate(self.methods.fallback)
    }

    pub fn knapsack_rate(&self) -> Rational {
        self.rate(self.methods.knapsack)
    }

    pub fn leverage_rate(&self) -> Rational {
        self.rate(self.methods.leverage)
    }

    /// Total cost in satoshi per processed payment.
    pub fn cost_per_payment_sat(&self) -> Rational {
        if self.payments_processed == 0 {
            return Rational::from_integer(0);
        }
        Rational::new(i128::from(self.total_cost.to_sat()), i128::from(self.payments_processed))
    }

    pub fn cost_per_payment_usd(&self) -> Rational {
        self.config.to_usd(self.cost_per_payment_sat())
    }
}

/// Serialized form of a report: the stored fields plus derived decimals.
#[derive(Serialize)]
struct ScenarioReportWire {
    config: ScenarioConfig,
    mode: Mode,
    iterations: u64,
    methods: MethodCounts,
    fallback_rate: String,
    knapsack_rate: String,
    leverage_rate: String,
    payments_processed: u64,
    total_cost: Amount,
    cost_per_payment_usd: String,
    failed_repetitions: u64,
    repetitions: Vec<RepetitionReport>,
}

impl From<ScenarioReport> for ScenarioReportWire {
    fn from(r: ScenarioReport) -> Self {
        ScenarioReportWire {
            fallback_rate: format_decimal(&r.fallback_rate(), 6),
            knapsack_rate: format_decimal(&r.knapsack_rate(), 6),
            leverage_rate: format_decimal(&r.leverage_rate(), 6),
            cost_per_payment_usd: format_decimal(&r.cost_per_payment_usd(), 6),
            config: r.config,
            mode: r.mode,
            iterations: r.iterations,
            methods: r.methods,
            payments_processed: r.payments_processed,
            total_cost: r.total_cost,
            failed_repetitions: r.failed_repetitions,
            repetitions: r.repetitions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SavingsSummary {
    pub percent_savings_per_payment: Rational,
    pub usd_savings_per_payment: Rational,
}

/// Savings of the leverage run relative to the knapsack-only run, per
/// processed payment.
pub fn summarize(
    no_lev: &ScenarioReport,
    lev: &ScenarioReport,
    config: &ScenarioConfig,
) -> Result<SavingsSummary, SimulationError> {
    let base = config.to_usd(no_lev.cost_per_payment_sat());
    let with = config.to_usd(lev.cost_per_payment_sat());
    if decimal::is_zero(&base) {
        return Err(SimulationError::ZeroBaseline);
    }
    Ok(SavingsSummary {
        percent_savings_per_payment: (base - with) * Rational::from_integer(100) / base,
        usd_savings_per_payment: base - with,
    })
}

fn run_repetition(config: &ScenarioConfig, procedure: &Procedure, data: &Datasets, index: usize) -> RepetitionReport {
    let utxo_seed = derive_seed(config.rng_seed, index as u64, "utxo");
    let payment_seed = derive_seed(config.rng_seed, index as u64, "pay");
    let mut report = RepetitionReport { index, utxo_seed, payment_seed, records: Vec::new(), error: None };

    let sampled =
        sample_utxo_pool(&data.utxos, config.utxo_pool_size, &mut rng_from_seed(utxo_seed)).and_then(|pool| {
            let payments = sample_payments(
                &data.payments,
                config.payment_pool_size,
                config.min_payment(),
                &mut rng_from_seed(payment_seed),
            )?;
            Ok((pool, payments))
        });
    let (pool, payments) = match sampled {
        Ok(s) => s,
        Err(e) => {
            report.error = Some(e.to_string());
            return report;
        }
    };

    let state = WorldState::new(pool, payments);
    match run(state, procedure, &config.fees(), config.limits(), Some(config.iterations_per_sample)) {
        Ok(result) => report.records = result.records,
        Err(err) => {
            report.error = Some(err.to_string());
            if let OrchestratorError::Exhausted { partial, .. } = err {
                report.records = partial.records;
            }
        }
    }
    report
}

/// Runs every repetition of `config` under `mode`.
pub fn run_scenario(config: &ScenarioConfig, mode: Mode, data: &Datasets) -> Result<ScenarioReport, SimulationError> {
    config.validate()?;
    let procedure = config.procedure(mode)?;
    let repetitions: Vec<RepetitionReport> =
        (0..config.repetitions).into_par_iter().map(|index| run_repetition(config, &procedure, data, index)).collect();

    let mut methods = MethodCounts::default();
    let mut payments_processed = 0;
    let mut total_cost = Amount::ZERO;
    for record in repetitions.iter().flat_map(|r| &r.records) {
        methods.record(record.method);
        payments_processed += record.processed_ids.len() as u64;
        total_cost += record.cost;
    }
    Ok(ScenarioReport {
        config: config.clone(),
        mode,
        iterations: methods.total(),
        methods,
        payments_processed,
        total_cost,
        failed_repetitions: repetitions.iter().filter(|r| r.error.is_some()).count() as u64,
        repetitions,
    })
}

/// Both modes of one config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "CellResultWire")]
pub struct CellResult {
    pub no_leverage: ScenarioReport,
    pub leverage: ScenarioReport,
}

impl CellResult {
    pub fn config(&self) -> &ScenarioConfig {
        &self.no_leverage.config
    }

    pub fn savings(&self) -> Result<SavingsSummary, SimulationError> {
        summarize(&self.no_leverage, &self.leverage, self.config())
    }
}

#[derive(Serialize)]
struct SavingsWire {
    percent_savings_per_payment: String,
    usd_savings_per_payment: String,
}

/// Serialized form of a cell: both reports plus the savings between them.
#[derive(Serialize)]
struct CellResultWire {
    gamma: u64,
    m: usize,
    savings: Option<SavingsWire>,
    no_leverage: ScenarioReport,
    leverage: ScenarioReport,
}

impl From<CellResult> for CellResultWire {
    fn from(cell: CellResult) -> Self {
        CellResultWire {
            gamma: cell.config().gamma,
            m: cell.config().m,
            savings: cell.savings().ok().map(|s| SavingsWire {
                percent_savings_per_payment: format_decimal(&s.percent_savings_per_payment, 6),
                usd_savings_per_payment: format_decimal(&s.usd_savings_per_payment, 6),
            }),
            no_leverage: cell.no_leverage,
            leverage: cell.leverage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFailure {
    pub gamma: u64,
    pub m: usize,
    pub error: String,
}

/// A sweep's results as written to and read back from a JSON report.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepReport {
    pub cells: Vec<CellResult>,
    #[serde(default)]
    pub failures: Vec<CellFailure>,
}

impl SweepReport {
    pub fn from_results(results: Vec<Result<CellResult, CellFailure>>) -> Self {
        let mut report = SweepReport::default();
        for r in results {
            match r {
                Ok(cell) => report.cells.push(cell),
                Err(failure) => report.failures.push(failure),
            }
        }
        report
    }
}

pub fn run_cell(config: &ScenarioConfig, data: &Datasets) -> Result<CellResult, SimulationError> {
    Ok(CellResult {
        no_leverage: run_scenario(config, Mode::NoLeverage, data)?,
        leverage: run_scenario(config, Mode::Leverage, data)?,
    })
}

/// Runs both modes for every config. Cells are independent; a failing cell
/// does not affect the others.
pub fn sweep(configs: &[ScenarioConfig], data: &Datasets) -> Vec<Result<CellResult, CellFailure>> {
    configs
        .par_iter()
        .map(|config| {
            run_cell(config, data).map_err(|e| CellFailure { gamma: config.gamma, m: config.m, error: e.to_string() })
        })
        .collect()
}
