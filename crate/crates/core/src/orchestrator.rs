// SPDX-License-Identifier: Apache-2.0

//! Iterative processing of a payment queue.
//!
//! Each iteration takes the `M` most urgent pending requests and tries, in
//! order, a knapsack transaction, optionally a leverage pair, and finally the
//! fallback. The UTXO pool and the payment queues are then updated: spent
//! inputs leave the pool, and only a fallback's change output joins it (a
//! leverage pair spends its intermediate change internally).

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Amount, FeeParams, PaymentRequest, Transaction, Utxo, UtxoPool};
use crate::selection::{
    fallback_select, knapsack_select, leverage_select, BasicOutcome, LeverageParams, Method, SelectionError,
    SolveSummary, LEVERAGE_CHANGE_ID,
};
use crate::solver::SolveLimits;

/// Default cap on how many pending requests beyond the batch are offered to
/// the leverage program.
pub const DEFAULT_CANDIDATE_WINDOW: usize = 64;

/// UTXO pool, payment pool and the requests still to be processed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    pub utxo_pool: UtxoPool,
    pub payment_pool: Vec<PaymentRequest>,
    /// Requests that must be processed, most urgent first.
    pub pending: Vec<PaymentRequest>,
    pub iteration: usize,
}

impl WorldState {
    /// Every payment in `payments` is pending.
    pub fn new(utxo_pool: UtxoPool, payments: Vec<PaymentRequest>) -> Self {
        let mut pending = payments.clone();
        pending.sort_by_key(|p| p.urgency_rank);
        WorldState { utxo_pool, payment_pool: payments, pending, iteration: 0 }
    }

    /// Only the payments whose ids are listed are pending.
    pub fn with_pending(utxo_pool: UtxoPool, payments: Vec<PaymentRequest>, pending_ids: &HashSet<String>) -> Self {
        let mut state = WorldState::new(utxo_pool, payments);
        state.pending.retain(|p| pending_ids.contains(&p.id));
        state
    }
}

/// How each iteration is attempted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Procedure {
    /// Requests per batch (`M`).
    pub batch: usize,
    /// When set, a leverage pair is tried between knapsack and fallback.
    pub leverage: Option<LeverageParams>,
    pub candidate_window: usize,
}

impl Procedure {
    pub fn knapsack(batch: usize) -> Self {
        Procedure { batch, leverage: None, candidate_window: DEFAULT_CANDIDATE_WINDOW }
    }

    pub fn with_leverage(batch: usize, lev: LeverageParams) -> Self {
        Procedure { batch, leverage: Some(lev), candidate_window: DEFAULT_CANDIDATE_WINDOW }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub method: Method,
    pub transactions: Vec<Transaction>,
    pub processed_ids: Vec<String>,
    pub cost: Amount,
    /// Fallback change returned to the pool.
    pub change_output: Option<Utxo>,
    /// One entry per solver run this iteration, failed attempts included.
    pub solver_stats: Vec<SolveSummary>,
}

impl IterationRecord {
    /// Pool UTXOs spent by this iteration.
    pub fn spent(&self) -> impl Iterator<Item = &Utxo> {
        self.transactions.iter().flat_map(|tx| &tx.inputs).filter(|u| u.id != LEVERAGE_CHANGE_ID)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodCounts {
    pub fallback: u64,
    pub knapsack: u64,
    pub leverage: u64,
}

impl MethodCounts {
    pub fn record(&mut self, method: Method) {
        match method {
            Method::Fallback => self.fallback += 1,
            Method::Knapsack => self.knapsack += 1,
            Method::Leverage => self.leverage += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.fallback + self.knapsack + self.leverage
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FullRunResult {
    pub records: Vec<IterationRecord>,
    pub processed: u64,
    pub total_cost: Amount,
    pub methods: MethodCounts,
    pub final_state: WorldState,
}

impl FullRunResult {
    fn start(state: WorldState) -> Self {
        FullRunResult {
            records: Vec::new(),
            processed: 0,
            total_cost: Amount::ZERO,
            methods: MethodCounts::default(),
            final_state: state,
        }
    }

    fn push(&mut self, record: IterationRecord) -> Result<(), OrchestratorError> {
        self.final_state = apply_update(&self.final_state, &record)?;
        self.processed += record.processed_ids.len() as u64;
        self.total_cost += record.cost;
        self.methods.record(record.method);
        self.records.push(record);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrchestratorError {
    #[error("iteration {iteration}: the pool cannot fund the batch ({source})")]
    Exhausted { iteration: usize, source: SelectionError, partial: Box<FullRunResult> },
    #[error("input {0} is not in the UTXO pool")]
    UnknownUtxo(String),
}

impl OrchestratorError {
    pub fn partial(&self) -> Option<&FullRunResult> {
        match self {
            OrchestratorError::Exhausted { partial, .. } => Some(partial),
            OrchestratorError::UnknownUtxo(_) => None,
        }
    }
}

/// Id under which a fallback change output re-enters the pool.
pub fn change_id(iteration: usize) -> String {
    format!("change#{iteration}")
}

/// Runs one iteration on `state` without updating it.
///
/// Returns `Ok(None)` when nothing is pending.
pub fn step(
    state: &WorldState,
    procedure: &Procedure,
    fees: &FeeParams,
    limits: SolveLimits,
) -> Result<Option<IterationRecord>, SelectionError> {
    if state.pending.is_empty() {
        return Ok(None);
    }
    let batch = procedure.batch.max(1).min(state.pending.len());
    let j_star = &state.pending[..batch];
    let mut solver_stats = Vec::new();

    let outcome = match knapsack_select(&state.utxo_pool, j_star, fees, limits) {
        Ok(out) => Some(out),
        Err(err) => {
            solver_stats.extend(err.solver_summary());
            None
        }
    };
    let outcome = match (outcome, &procedure.leverage) {
        (Some(out), _) => Some(out),
        (None, Some(lev)) => {
            let rest = &state.pending[batch..];
            let candidates = &rest[..rest.len().min(procedure.candidate_window)];
            match leverage_select(&state.utxo_pool, j_star, candidates, fees, lev, limits) {
                Ok(out) => Some(out),
                Err(err) => {
                    solver_stats.extend(err.solver_summary());
                    None
                }
            }
        }
        (None, None) => None,
    };
    let outcome = match outcome {
        Some(out) => out,
        None => fallback_select(&state.utxo_pool, j_star, fees)?,
    };
    Ok(Some(record_from(state.iteration, outcome, fees, solver_stats)))
}

fn record_from(
    iteration: usize,
    outcome: BasicOutcome,
    fees: &FeeParams,
    mut solver_stats: Vec<SolveSummary>,
) -> IterationRecord {
    solver_stats.extend(outcome.solver);
    let change_output = (outcome.method == Method::Fallback && outcome.primary.has_change())
        .then(|| Utxo { id: change_id(iteration), value: outcome.primary.change });
    let transactions: Vec<Transaction> = outcome.transactions().cloned().collect();
    let processed_ids = transactions.iter().flat_map(|tx| tx.payments.iter().map(|p| p.id.clone())).collect();
    let cost = transactions.iter().map(|tx| tx.cost(fees)).sum();
    IterationRecord {
        iteration,
        method: outcome.method,
        transactions,
        processed_ids,
        cost,
        change_output,
        solver_stats,
    }
}

/// The state after `record`: spent inputs removed, fallback change added,
/// processed requests dropped from both queues.
pub fn apply_update(state: &WorldState, record: &IterationRecord) -> Result<WorldState, OrchestratorError> {
    let mut next = state.clone();
    for utxo in record.spent() {
        next.utxo_pool.remove(&utxo.id).ok_or_else(|| OrchestratorError::UnknownUtxo(utxo.id.clone()))?;
    }
    if let Some(change) = &record.change_output {
        next.utxo_pool.insert(change.clone());
    }
    let done: HashSet<&str> = record.processed_ids.iter().map(String::as_str).collect();
    next.payment_pool.retain(|p| !done.contains(p.id.as_str()));
    next.pending.retain(|p| !done.contains(p.id.as_str()));
    next.iteration += 1;
    Ok(next)
}

/// Runs `procedure` until nothing is pending, or for at most `max_iterations`
/// iterations when given.
pub fn run(
    state: WorldState,
    procedure: &Procedure,
    fees: &FeeParams,
    limits: SolveLimits,
    max_iterations: Option<usize>,
) -> Result<FullRunResult, OrchestratorError> {
    let mut result = FullRunResult::start(state);
    while max_iterations.is_none_or(|max| result.records.len() < max) {
        match step(&result.final_state, procedure, fees, limits) {
            Ok(Some(record)) => result.push(record)?,
            Ok(None) => break,
            Err(source) => {
                let iteration = result.final_state.iteration;
                return Err(OrchestratorError::Exhausted { iteration, source, partial: Box::new(result) });
            }
        }
    }
    Ok(result)
}

/// Knapsack first, fallback otherwise, until every pending request is
/// processed.
pub fn run_full_knapsack(
    state: WorldState,
    batch: usize,
    fees: &FeeParams,
    limits: impl Into<SolveLimits>,
) -> Result<FullRunResult, OrchestratorError> {
    run(state, &Procedure::knapsack(batch), fees, limits.into(), None)
}

/// Knapsack, then leverage, then fallback, until every pending request is
/// processed.
pub fn run_full_leverage(
    state: WorldState,
    batch: usize,
    fees: &FeeParams,
    lev: &LeverageParams,
    limits: impl Into<SolveLimits>,
) -> Result<FullRunResult, OrchestratorError> {
    run(state, &Procedure::with_leverage(batch, lev.clone()), fees, limits.into(), None)
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;
    use crate::decimal::Rational;

    fn pool(values: &[u64]) -> UtxoPool {
        UtxoPool::new(values.iter().enumerate().map(|(i, v)| Utxo::new(format!("u{i}"), *v)).collect())
    }

    fn pays(values: &[u64]) -> Vec<PaymentRequest> {
        values.iter().enumerate().map(|(i, v)| PaymentRequest::new(format!("p{i}"), *v, i as u32)).collect()
    }

    const BUDGET: Duration = Duration::from_secs(5);

    #[test]
    fn nothing_pending() {
        let state = WorldState::new(pool(&[5]), vec![]);
        let out = run_full_knapsack(state, 2, &FeeParams::new(0), BUDGET).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.total_cost, Amount::ZERO);

        let lev = LeverageParams::new(1, 1, Rational::from_integer(1)).unwrap();
        let state = WorldState::new(pool(&[5]), vec![]);
        assert!(run_full_leverage(state, 2, &FeeParams::new(0), &lev, BUDGET).unwrap().records.is_empty());
    }

    #[test]
    fn fallback_returns_change() {
        let fees = FeeParams::new(0).with_make_change(Amount::ZERO);
        let out = run_full_knapsack(WorldState::new(pool(&[5, 3]), pays(&[4])), 1, &fees, BUDGET).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].method, Method::Fallback);
        let final_pool: Vec<u64> = out.final_state.utxo_pool.as_slice().iter().map(|u| u.value.to_sat()).collect();
        assert_eq!(final_pool, vec![3, 1]);
        assert!(out.final_state.utxo_pool.contains(&change_id(0)));
    }

    #[test]
    fn leverage_pair_in_run() {
        let fees = FeeParams::new(0).with_make_change(Amount::ZERO);
        let lev = LeverageParams::new(1, 1, Rational::from_integer(1)).unwrap();
        let out = run_full_leverage(WorldState::new(pool(&[10]), pays(&[7, 3])), 1, &fees, &lev, BUDGET).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].method, Method::Leverage);
        assert_eq!(out.processed, 2);
        assert_eq!(out.total_cost, Amount::ZERO);
        assert!(out.final_state.utxo_pool.is_empty());
        assert!(out.final_state.pending.is_empty());
    }

    #[test]
    fn exhaustion_keeps_partial() {
        let fees = FeeParams::new(0);
        let err = run_full_knapsack(WorldState::new(pool(&[5]), pays(&[5, 4])), 1, &fees, BUDGET).unwrap_err();
        let OrchestratorError::Exhausted { iteration, partial, .. } = err else {
            panic!("expected exhaustion");
        };
        assert_eq!(iteration, 1);
        assert_eq!(partial.records.len(), 1);
        assert_eq!(partial.processed, 1);
    }

    #[test]
    fn update_bookkeeping() {
        let fees = FeeParams::new(0);
        let state = WorldState::new(pool(&[5, 3, 2]), pays(&[4, 1]));
        let fallback = step(&state, &Procedure { batch: 1, leverage: None, candidate_window: 8 }, &fees, BUDGET.into())
            .unwrap()
            .unwrap();
        // h = d = 0 at gamma 0, and no single UTXO equals 4.
        assert_eq!(fallback.method, Method::Fallback);
        let next = apply_update(&state, &fallback).unwrap();
        assert_eq!(next.utxo_pool.len(), state.utxo_pool.len() - fallback.transactions[0].inputs.len() + 1);
        assert_eq!(next.pending.len(), 1);
        assert!(next.utxo_pool.is_sorted());

        let knap = step(&next, &Procedure::knapsack(1), &fees, BUDGET.into()).unwrap().unwrap();
        assert_eq!(knap.method, Method::Knapsack);
        let after = apply_update(&next, &knap).unwrap();
        assert_eq!(after.utxo_pool.len(), next.utxo_pool.len() - 1);
        assert!(after.pending.is_empty());
        assert!(after.payment_pool.is_empty());

        let mut bogus = knap.clone();
        bogus.transactions[0].inputs[0].id = "nope".into();
        assert_eq!(apply_update(&next, &bogus), Err(OrchestratorError::UnknownUtxo("nope".into())));
    }

    #[test]
    fn leverage_update_drops_both_input_sets() {
        let fees = FeeParams::new(0).with_make_change(Amount::ZERO);
        let lev = LeverageParams::new(1, 1, Rational::from_integer(1)).unwrap();
        // Batch 7 from the 10 leaves 3; the second pays 4 with 3 + 1.
        let state = WorldState::new(pool(&[10, 1, 50]), pays(&[7, 4]));
        let mut procedure = Procedure::with_leverage(1, lev);
        procedure.candidate_window = 4;
        let rec = step(&state, &procedure, &fees, BUDGET.into()).unwrap().unwrap();
        assert_eq!(rec.method, Method::Leverage);
        let next = apply_update(&state, &rec).unwrap();
        let used = rec.spent().count();
        assert_eq!(next.utxo_pool.len(), state.utxo_pool.len() - used);
        assert!(rec.change_output.is_none());
    }
}
