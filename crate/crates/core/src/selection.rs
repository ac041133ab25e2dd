// SPDX-License-Identifier: Apache-2.0

//! The three ways of funding one batch of payments.
//!
//! * [`fallback_select`]: the top `opt(J)` UTXOs, with change unless they
//!   happen to match exactly.
//! * [`knapsack_select`]: a change-free transaction with exactly `opt(J)`
//!   inputs and the smallest overpayment within the make-change threshold.
//! * [`leverage_select`]: a transaction with change for the batch, plus a
//!   second change-free transaction for extra requests funded by that change
//!   and as few additional inputs as possible.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decimal::{self, Rational};
use crate::model::{
    opt, opt_with_fit, tx_size, Amount, FeeParams, ModelError, PaymentRequest, PrefixFit, Transaction, Utxo, UtxoPool,
    INPUT_BYTES, OUTPUT_BYTES, TX_OVERHEAD_BYTES,
};
use crate::solver::{solve, BlpProblem, Relation, SolveLimits, SolveOutcome, SolveStatus, SolverError};

/// Id given to the first leverage transaction's change when it is spent as
/// an input of the second. It never enters a UTXO pool.
pub const LEVERAGE_CHANGE_ID: &str = "<leverage-change>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Fallback,
    Knapsack,
    Leverage,
}

/// Bounds on the number of extra requests and the boost factor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeverageParams {
    pub m1: usize,
    pub m2: usize,
    #[serde(with = "decimal::serde_decimal")]
    pub beta: Rational,
}

impl LeverageParams {
    pub fn new(m1: usize, m2: usize, beta: Rational) -> Result<Self, SelectionError> {
        let params = LeverageParams { m1, m2, beta };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), SelectionError> {
        if self.m1 == 0 || self.m1 > self.m2 {
            return Err(SelectionError::InvalidLeverageParams(format!(
                "need 1 <= m1 <= m2, got m1={} m2={}",
                self.m1, self.m2
            )));
        }
        if self.beta < Rational::from_integer(0) || self.beta > Rational::from_integer(1) {
            return Err(SelectionError::InvalidLeverageParams(format!(
                "beta must lie in [0, 1], got {}",
                decimal::to_decimal_string(&self.beta)
            )));
        }
        Ok(())
    }

    /// Largest overpayment allowed on the second transaction: `⌊β·h⌋`.
    pub fn slack(&self, fees: &FeeParams) -> Amount {
        let scaled = self.beta * Rational::from_integer(i128::from(fees.make_change.to_sat()));
        Amount::from_signed(scaled.floor().to_integer()).expect("beta and h are non-negative")
    }
}

/// Solver statistics kept with each attempt. Wall-clock time is left out so
/// that reports are reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub status: SolveStatus,
    pub nodes: u64,
}

impl From<&SolveOutcome> for SolveSummary {
    fn from(out: &SolveOutcome) -> Self {
        SolveSummary { status: out.status, nodes: out.nodes_explored }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasicOutcome {
    pub method: Method,
    pub primary: Transaction,
    /// The change-funded second transaction of a leverage pair.
    pub secondary: Option<Transaction>,
    pub solver: Option<SolveSummary>,
}

impl BasicOutcome {
    pub fn transactions(&self) -> impl Iterator<Item = &Transaction> {
        std::iter::once(&self.primary).chain(self.secondary.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectionError {
    #[error("no prefix of the pool admits a good transaction")]
    NoGoodPrefix,
    #[error("payment set is empty")]
    EmptyPayments,
    #[error("no feasible selection exists")]
    Infeasible(SolveSummary),
    #[error("no feasible selection found within the solver budget")]
    NoIncumbentInBudget(SolveSummary),
    #[error("{available} candidate requests, at least {required} needed")]
    TooFewCandidates { available: usize, required: usize },
    #[error("candidate requests overlap the batch: {0}")]
    OverlappingCandidates(String),
    #[error("invalid leverage parameters: {0}")]
    InvalidLeverageParams(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

impl SelectionError {
    /// Statistics of the solve that failed, if one ran.
    pub fn solver_summary(&self) -> Option<SolveSummary> {
        match self {
            SelectionError::Infeasible(s) | SelectionError::NoIncumbentInBudget(s) => Some(*s),
            _ => None,
        }
    }
}

impl From<ModelError> for SelectionError {
    fn from(err: ModelError) -> Self {
        match err {
            ModelError::NoGoodPrefix => SelectionError::NoGoodPrefix,
            ModelError::EmptyPayments => SelectionError::EmptyPayments,
        }
    }
}

fn total(payments: &[PaymentRequest]) -> Amount {
    payments.iter().map(|p| p.value).sum()
}

fn sat(amount: Amount) -> i128 {
    i128::from(amount.to_sat())
}

fn fee(fees: &FeeParams, bytes: u64) -> i128 {
    sat(fees.fee_for(bytes))
}

/// Largest-first selection of `opt(J)` inputs.
pub fn fallback_select(
    pool: &UtxoPool,
    payments: &[PaymentRequest],
    fees: &FeeParams,
) -> Result<BasicOutcome, SelectionError> {
    let (k, fit) = opt_with_fit(pool, payments, fees)?;
    let change = match fit {
        PrefixFit::Exact => Amount::ZERO,
        PrefixFit::Change(c) => c,
    };
    let primary = Transaction {
        inputs: pool.as_slice()[..k].to_vec(),
        payments: payments.to_vec(),
        change,
        overpayment: Amount::ZERO,
    };
    debug_assert!(primary.is_good(fees));
    Ok(BasicOutcome { method: Method::Fallback, primary, secondary: None, solver: None })
}

fn outcome_or_failure(out: SolveOutcome) -> Result<(Vec<bool>, SolveSummary), SelectionError> {
    let summary = SolveSummary::from(&out);
    match out.status {
        SolveStatus::Optimal | SolveStatus::FeasibleIncumbent => {
            Ok((out.assignment.expect("feasible outcome carries an assignment"), summary))
        }
        SolveStatus::Infeasible => Err(SelectionError::Infeasible(summary)),
        SolveStatus::TimedOut => Err(SelectionError::NoIncumbentInBudget(summary)),
    }
}

/// Builds the change-free knapsack program. Variable `i` selects
/// `eligible[i]`; UTXOs that alone exceed the upper bound are left out.
/// The objective's constant offset makes its value equal the overpayment.
pub(crate) fn knapsack_program<'a>(
    pool: &'a UtxoPool,
    payments: &[PaymentRequest],
    fees: &FeeParams,
    k: usize,
) -> (BlpProblem, Vec<&'a Utxo>) {
    let need = sat(total(payments)) + fee(fees, tx_size(k, payments.len(), false));
    let upper = need + sat(fees.make_change);
    let eligible: Vec<&Utxo> = pool.as_slice().iter().filter(|u| sat(u.value) <= upper).collect();

    let mut p = BlpProblem::new(eligible.len());
    p.objective = eligible.iter().map(|u| sat(u.value)).collect();
    p.offset = -need;
    let all: Vec<(usize, i128)> = (0..eligible.len()).map(|i| (i, 1)).collect();
    let values: Vec<(usize, i128)> = eligible.iter().enumerate().map(|(i, u)| (i, sat(u.value))).collect();
    p.add_row(all, Relation::Eq, k as i128);
    p.add_row(values.clone(), Relation::Ge, need);
    p.add_row(values, Relation::Le, upper);
    (p, eligible)
}

/// Change-free selection of exactly `opt(J)` inputs minimizing overpayment.
pub fn knapsack_select(
    pool: &UtxoPool,
    payments: &[PaymentRequest],
    fees: &FeeParams,
    limits: impl Into<SolveLimits>,
) -> Result<BasicOutcome, SelectionError> {
    let k = opt(pool, payments, fees)?;
    let (problem, eligible) = knapsack_program(pool, payments, fees, k);
    let (x, summary) = outcome_or_failure(solve(&problem, limits)?)?;

    let inputs: Vec<Utxo> = eligible.iter().zip(&x).filter(|(_, on)| **on).map(|(u, _)| (*u).clone()).collect();
    let overpayment = Amount::from_signed(problem.objective_value(&x)).expect("overpayment row keeps r >= 0");
    let primary = Transaction { inputs, payments: payments.to_vec(), change: Amount::ZERO, overpayment };
    debug_assert!(primary.is_good(fees));
    Ok(BasicOutcome { method: Method::Knapsack, primary, secondary: None, solver: Some(summary) })
}

/// Variable layout of the leverage program: first-transaction inputs,
/// second-transaction inputs, then candidate requests.
pub(crate) struct LeverageLayout {
    pub n: usize,
    pub c: usize,
}

impl LeverageLayout {
    pub fn x1(&self, j: usize) -> usize {
        j
    }
    pub fn x2(&self, j: usize) -> usize {
        self.n + j
    }
    pub fn y(&self, j: usize) -> usize {
        2 * self.n + j
    }
    pub fn len(&self) -> usize {
        2 * self.n + self.c
    }
}

/// Builds the leverage program.
///
/// With `A` the first transaction's payments plus fee (with change) and
/// `E = Σx1·u + Σx2·(u − 148γ) − Σy·(p + 34γ) − A − 158γ`, the second
/// transaction's overpayment is exactly `E`. Rows:
/// each UTXO used at most once; `opt` inputs in the first transaction;
/// `m1 ≤ |J2| ≤ m2`; the first transaction covers `A`; the second's own
/// inputs fall short of its need; `0 ≤ E ≤ ⌊β·h⌋`; the first change is at
/// least dust.
///
/// The objective is `(⌊β·h⌋ + 1)·|I2| + E`: fewest extra inputs first, and
/// among those the smallest overpayment.
pub(crate) fn leverage_program(
    pool: &UtxoPool,
    j_star: &[PaymentRequest],
    candidates: &[PaymentRequest],
    fees: &FeeParams,
    lev: &LeverageParams,
    k: usize,
) -> (BlpProblem, LeverageLayout) {
    let layout = LeverageLayout { n: pool.len(), c: candidates.len() };
    let g = i128::from(fees.gamma);
    let input_fee = i128::from(INPUT_BYTES) * g;
    let output_fee = i128::from(OUTPUT_BYTES) * g;
    // Overhead plus the change input of the second transaction.
    let tx2_base = i128::from(TX_OVERHEAD_BYTES + INPUT_BYTES) * g;
    let spend1 = sat(total(j_star)) + fee(fees, tx_size(k, j_star.len(), true));
    let slack = sat(lev.slack(fees));

    let utxos = pool.as_slice();
    let mut p = BlpProblem::new(layout.len());
    for j in 0..layout.n {
        p.add_row(vec![(layout.x1(j), 1), (layout.x2(j), 1)], Relation::Le, 1);
    }
    p.add_row((0..layout.n).map(|j| (layout.x1(j), 1)).collect(), Relation::Eq, k as i128);
    let ys: Vec<(usize, i128)> = (0..layout.c).map(|j| (layout.y(j), 1)).collect();
    p.add_row(ys.clone(), Relation::Ge, lev.m1 as i128);
    p.add_row(ys, Relation::Le, lev.m2 as i128);

    let x1_values: Vec<(usize, i128)> = (0..layout.n).map(|j| (layout.x1(j), sat(utxos[j].value))).collect();
    p.add_row(x1_values.clone(), Relation::Ge, spend1);
    p.add_row(x1_values.clone(), Relation::Ge, spend1 + sat(fees.min_change()));

    let x2_terms: Vec<(usize, i128)> = (0..layout.n).map(|j| (layout.x2(j), sat(utxos[j].value) - input_fee)).collect();
    let y_terms: Vec<(usize, i128)> =
        (0..layout.c).map(|j| (layout.y(j), -(sat(candidates[j].value) + output_fee))).collect();

    let mut short: Vec<(usize, i128)> = x2_terms.clone();
    short.extend(&y_terms);
    p.add_row(short, Relation::Le, tx2_base);

    let mut excess: Vec<(usize, i128)> = x1_values;
    excess.extend(&x2_terms);
    excess.extend(&y_terms);
    p.add_row(excess.clone(), Relation::Ge, spend1 + tx2_base);
    p.add_row(excess.clone(), Relation::Le, spend1 + tx2_base + slack);

    for &(v, c) in &excess {
        p.objective[v] = c;
    }
    for j in 0..layout.n {
        p.objective[layout.x2(j)] += slack + 1;
    }
    p.offset = -(spend1 + tx2_base);
    (p, layout)
}

/// Solves the leverage program in two stages: first with no extra inputs
/// in the second transaction, then, only if that is infeasible, with at
/// least one, on whatever budget remains. The optimum is the same as a
/// single solve, but the common zero-extra-input case is found without
/// searching the much larger space of `x2` assignments.
fn solve_staged(
    problem: &BlpProblem,
    layout: &LeverageLayout,
    limits: SolveLimits,
) -> Result<(Vec<bool>, SolveSummary), SelectionError> {
    let x2: Vec<(usize, i128)> = (0..layout.n).map(|j| (layout.x2(j), 1)).collect();
    let mut first = problem.clone();
    first.add_row(x2.clone(), Relation::Le, 0);
    let out = solve(&first, limits)?;
    if out.status != SolveStatus::Infeasible {
        return outcome_or_failure(out);
    }

    let spent = SolveSummary::from(&out);
    let rest = SolveLimits {
        time: limits.time.saturating_sub(out.elapsed),
        node_limit: limits.node_limit.map(|n| n.saturating_sub(out.nodes_explored)),
    };
    if rest.time.is_zero() || rest.node_limit == Some(0) {
        return Err(SelectionError::NoIncumbentInBudget(spent));
    }
    let mut second = problem.clone();
    second.add_row(x2, Relation::Ge, 1);
    let out = solve(&second, rest)?;
    let merged = SolveSummary { status: out.status, nodes: spent.nodes + out.nodes_explored };
    outcome_or_failure(out).map(|(x, _)| (x, merged)).map_err(|e| match e {
        SelectionError::Infeasible(_) => SelectionError::Infeasible(merged),
        SelectionError::NoIncumbentInBudget(_) => SelectionError::NoIncumbentInBudget(merged),
        other => other,
    })
}

/// Pair of transactions where the first's change funds the second.
///
/// `candidates` are the requests eligible for the second transaction, in
/// urgency order; they must not overlap `j_star`.
pub fn leverage_select(
    pool: &UtxoPool,
    j_star: &[PaymentRequest],
    candidates: &[PaymentRequest],
    fees: &FeeParams,
    lev: &LeverageParams,
    limits: impl Into<SolveLimits>,
) -> Result<BasicOutcome, SelectionError> {
    lev.validate()?;
    if j_star.is_empty() {
        return Err(SelectionError::EmptyPayments);
    }
    let batch: HashSet<&str> = j_star.iter().map(|p| p.id.as_str()).collect();
    if let Some(dup) = candidates.iter().find(|p| batch.contains(p.id.as_str())) {
        return Err(SelectionError::OverlappingCandidates(dup.id.clone()));
    }
    if candidates.len() < lev.m1 {
        return Err(SelectionError::TooFewCandidates { available: candidates.len(), required: lev.m1 });
    }
    let k = opt(pool, j_star, fees)?;
    let (problem, layout) = leverage_program(pool, j_star, candidates, fees, lev, k);
    let (x, summary) = solve_staged(&problem, &layout, limits.into())?;

    let utxos = pool.as_slice();
    let inputs1: Vec<Utxo> = (0..layout.n).filter(|&j| x[layout.x1(j)]).map(|j| utxos[j].clone()).collect();
    let mut inputs2: Vec<Utxo> = (0..layout.n).filter(|&j| x[layout.x2(j)]).map(|j| utxos[j].clone()).collect();
    let j2: Vec<PaymentRequest> = (0..layout.c).filter(|&j| x[layout.y(j)]).map(|j| candidates[j].clone()).collect();

    let in1: Amount = inputs1.iter().map(|u| u.value).sum();
    let change1 = in1 - total(j_star) - fees.fee_for(tx_size(k, j_star.len(), true));
    let primary =
        Transaction { inputs: inputs1, payments: j_star.to_vec(), change: change1, overpayment: Amount::ZERO };

    inputs2.push(Utxo { id: LEVERAGE_CHANGE_ID.to_string(), value: change1 });
    let in2: Amount = inputs2.iter().map(|u| u.value).sum();
    let overpayment2 = in2 - total(&j2) - fees.fee_for(tx_size(inputs2.len(), j2.len(), false));
    let secondary = Transaction { inputs: inputs2, payments: j2, change: Amount::ZERO, overpayment: overpayment2 };

    debug_assert!(primary.is_good(fees) && secondary.is_good(fees));
    debug_assert!(overpayment2 <= lev.slack(fees));
    Ok(BasicOutcome { method: Method::Leverage, primary, secondary: Some(secondary), solver: Some(summary) })
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;

    fn pool(values: &[u64]) -> UtxoPool {
        UtxoPool::new(values.iter().enumerate().map(|(i, v)| Utxo::new(format!("u{i}"), *v)).collect())
    }

    fn pays(prefix: &str, values: &[u64], first_rank: u32) -> Vec<PaymentRequest> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| PaymentRequest::new(format!("{prefix}{i}"), *v, first_rank + i as u32))
            .collect()
    }

    fn values(tx: &Transaction) -> Vec<u64> {
        tx.inputs.iter().map(|u| u.value.to_sat()).collect()
    }

    fn free() -> FeeParams {
        FeeParams::new(0)
    }

    fn one() -> Rational {
        Rational::from_integer(1)
    }

    const BUDGET: Duration = Duration::from_secs(5);

    #[test]
    fn fallback_with_change() {
        let out = fallback_select(&pool(&[5, 3]), &pays("p", &[4], 0), &free()).unwrap();
        assert_eq!(values(&out.primary), vec![5]);
        assert_eq!(out.primary.change.to_sat(), 1);
        assert_eq!(out.primary.overpayment, Amount::ZERO);
    }

    #[test]
    fn fallback_exact() {
        let out = fallback_select(&pool(&[5]), &pays("p", &[5], 0), &free()).unwrap();
        assert_eq!(out.primary.change, Amount::ZERO);
        assert!(out.primary.is_good(&free()));
    }

    #[test]
    fn fallback_no_prefix() {
        assert_eq!(fallback_select(&pool(&[1, 1]), &pays("p", &[5], 0), &free()), Err(SelectionError::NoGoodPrefix));
    }

    #[test]
    fn knapsack_exact_subset() {
        let fees = free().with_make_change(Amount::ZERO);
        let out = knapsack_select(&pool(&[5, 3, 2]), &pays("p", &[5], 0), &fees, BUDGET).unwrap();
        assert_eq!(values(&out.primary), vec![5]);
        assert_eq!(out.primary.overpayment, Amount::ZERO);
        assert_eq!(out.solver.unwrap().status, SolveStatus::Optimal);
    }

    #[test]
    fn knapsack_no_cover_at_opt() {
        let fees = free().with_make_change(Amount::ZERO);
        let err = knapsack_select(&pool(&[5, 3, 2]), &pays("p", &[9], 0), &fees, BUDGET).unwrap_err();
        assert!(matches!(err, SelectionError::Infeasible(_)), "{err:?}");
    }

    #[test]
    fn knapsack_prefers_smaller_overpayment() {
        // opt = 1 (the 100 covers with change); 52 leaves 2 over, 51 leaves 1.
        let fees = free().with_make_change(Amount::from_sat(5));
        let out = knapsack_select(&pool(&[100, 52, 51, 10]), &pays("p", &[50], 0), &fees, BUDGET).unwrap();
        assert_eq!(values(&out.primary), vec![51]);
        assert_eq!(out.primary.overpayment.to_sat(), 1);
    }

    #[test]
    fn leverage_trivial_pair() {
        let fees = free().with_make_change(Amount::ZERO);
        let lev = LeverageParams::new(1, 1, one()).unwrap();
        let out = leverage_select(&pool(&[10]), &pays("a", &[7], 0), &pays("b", &[3], 1), &fees, &lev, BUDGET).unwrap();
        assert_eq!(out.method, Method::Leverage);
        assert_eq!(values(&out.primary), vec![10]);
        assert_eq!(out.primary.change.to_sat(), 3);
        let second = out.secondary.unwrap();
        assert_eq!(second.inputs.len(), 1);
        assert_eq!(second.inputs[0].id, LEVERAGE_CHANGE_ID);
        assert_eq!(second.inputs[0].value.to_sat(), 3);
        assert_eq!(second.payments[0].value.to_sat(), 3);
        assert_eq!(second.overpayment, Amount::ZERO);
    }

    #[test]
    fn leverage_needs_candidates() {
        let lev = LeverageParams::new(1, 1, one()).unwrap();
        let err = leverage_select(&pool(&[10]), &pays("a", &[7], 0), &[], &free(), &lev, BUDGET).unwrap_err();
        assert_eq!(err, SelectionError::TooFewCandidates { available: 0, required: 1 });
    }

    #[test]
    fn leverage_rejects_overlap() {
        let lev = LeverageParams::new(1, 1, one()).unwrap();
        let batch = pays("a", &[7], 0);
        let err = leverage_select(&pool(&[10]), &batch, &batch, &free(), &lev, BUDGET).unwrap_err();
        assert!(matches!(err, SelectionError::OverlappingCandidates(_)));
    }

    #[test]
    fn leverage_params_checked() {
        assert!(LeverageParams::new(0, 1, one()).is_err());
        assert!(LeverageParams::new(2, 1, one()).is_err());
        assert!(LeverageParams::new(1, 1, Rational::new(3, 2)).is_err());
        let lev = LeverageParams::new(1, 2, Rational::new(27, 50)).unwrap();
        assert_eq!(lev.slack(&FeeParams::new(200)).to_sat(), 19_656);
        assert_eq!(lev.slack(&FeeParams::new(22)).to_sat(), 2_162);
    }

    #[test]
    fn leverage_beta_zero_needs_perfect_fit() {
        // gamma = 1: tx1 1-in/1-out with change is 226 bytes, tx2 with the
        // change input only and one payment is 192 bytes.
        let fees = FeeParams::new(1);
        let lev = LeverageParams::new(1, 1, Rational::from_integer(0)).unwrap();
        let batch = pays("a", &[10_000], 0);
        let target = 10_000 + 226 + 5_000 + 192;
        let cands = pays("b", &[5_001, 5_000, 4_999], 1);
        let out = leverage_select(&pool(&[target]), &batch, &cands, &fees, &lev, BUDGET).unwrap();
        let second = out.secondary.unwrap();
        assert_eq!(second.overpayment, Amount::ZERO);
        assert_eq!(second.payments[0].value.to_sat(), 5_000);

        let off = pool(&[target + 1]);
        let lone = pays("b", &[5_000], 1);
        let err = leverage_select(&off, &batch, &lone, &fees, &lev, BUDGET).unwrap_err();
        assert!(matches!(err, SelectionError::Infeasible(_)));
    }
}
