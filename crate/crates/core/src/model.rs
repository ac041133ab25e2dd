// SPDX-License-Identifier: Apache-2.0

//! Transaction algebra for P2PKH-style coin selection.
//!
//! Everything here works in whole satoshis. A [`Transaction`] is the tuple
//! of inputs, payments, change and overpayment; its byte size, fee and cost
//! follow from the fixed per-input and per-output byte counts below.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bytes of transaction metadata/overhead.
pub const TX_OVERHEAD_BYTES: u64 = 10;
/// Bytes per P2PKH input.
pub const INPUT_BYTES: u64 = 148;
/// Bytes per P2PKH output (payments and change alike).
pub const OUTPUT_BYTES: u64 = 34;

/// A non-negative quantity of satoshis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Amount(u64);

impl Amount {
    pub const ZERO: Amount = Amount(0);

    pub const fn from_sat(sat: u64) -> Self {
        Amount(sat)
    }

    pub const fn to_sat(self) -> u64 {
        self.0
    }

    pub fn checked_sub(self, rhs: Amount) -> Option<Amount> {
        self.0.checked_sub(rhs.0).map(Amount)
    }

    /// Converts a signed satoshi quantity, rejecting negatives.
    pub fn from_signed(sat: i128) -> Option<Amount> {
        u64::try_from(sat).ok().map(Amount)
    }

    pub(crate) fn signed(self) -> i128 {
        i128::from(self.0)
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} sat", self.0)
    }
}

impl Add for Amount {
    type Output = Amount;
    fn add(self, rhs: Amount) -> Amount {
        Amount(self.0.checked_add(rhs.0).expect("amount overflow"))
    }
}

impl AddAssign for Amount {
    fn add_assign(&mut self, rhs: Amount) {
        *self = *self + rhs;
    }
}

impl Sub for Amount {
    type Output = Amount;
    fn sub(self, rhs: Amount) -> Amount {
        Amount(self.0.checked_sub(rhs.0).expect("amount underflow"))
    }
}

impl Sum for Amount {
    fn sum<I: Iterator<Item = Amount>>(iter: I) -> Amount {
        iter.fold(Amount::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Amount> for Amount {
    fn sum<I: Iterator<Item = &'a Amount>>(iter: I) -> Amount {
        iter.copied().sum()
    }
}

/// Fee rate, dust threshold and make-change threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeeParams {
    /// Satoshi per byte.
    pub gamma: u64,
    /// Smallest acceptable change output.
    pub dust: Amount,
    /// Largest overpayment tolerated on a change-free transaction.
    pub make_change: Amount,
}

impl FeeParams {
    /// Fee parameters at `gamma` with the standard dust threshold and the
    /// make-change threshold set equal to it.
    pub fn new(gamma: u64) -> Self {
        let dust = dust_threshold(gamma);
        FeeParams { gamma, dust, make_change: dust }
    }

    pub fn with_dust(mut self, dust: Amount) -> Self {
        self.dust = dust;
        self
    }

    pub fn with_make_change(mut self, make_change: Amount) -> Self {
        self.make_change = make_change;
        self
    }

    /// Smallest change value a good transaction may carry. A zero-valued
    /// change output is never emitted, even when the dust threshold is zero.
    pub fn min_change(&self) -> Amount {
        self.dust.max(Amount::from_sat(1))
    }

    /// Fee in satoshi for a transaction of `bytes` bytes.
    pub fn fee_for(&self, bytes: u64) -> Amount {
        Amount::from_sat(bytes.checked_mul(self.gamma).expect("fee overflow"))
    }
}

/// Byte size of a transaction with the given input and payment counts, plus
/// one more output when `change` is set.
pub fn tx_size(n_inputs: usize, n_outputs: usize, change: bool) -> u64 {
    TX_OVERHEAD_BYTES
        + INPUT_BYTES * n_inputs as u64
        + OUTPUT_BYTES * n_outputs as u64
        + if change { OUTPUT_BYTES } else { 0 }
}

/// Dust threshold at fee rate `gamma`: the cost of creating and later
/// spending one output.
pub fn dust_threshold(gamma: u64) -> Amount {
    Amount::from_sat((INPUT_BYTES + OUTPUT_BYTES) * gamma)
}

/// An unspent output available to the wallet.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Utxo {
    pub id: String,
    pub value: Amount,
}

impl Utxo {
    pub fn new(id: impl Into<String>, value: u64) -> Self {
        Utxo { id: id.into(), value: Amount::from_sat(value) }
    }
}

/// A payment the wallet has to make. Lower `urgency_rank` is more urgent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PaymentRequest {
    pub id: String,
    pub value: Amount,
    pub urgency_rank: u32,
}

impl PaymentRequest {
    pub fn new(id: impl Into<String>, value: u64, urgency_rank: u32) -> Self {
        PaymentRequest { id: id.into(), value: Amount::from_sat(value), urgency_rank }
    }
}

/// UTXOs kept sorted by value, largest first. Equal values are ordered by id
/// so that the order is fully determined by the pool's contents.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<Utxo>", into = "Vec<Utxo>")]
pub struct UtxoPool {
    utxos: Vec<Utxo>,
}

fn pool_order(a: &Utxo, b: &Utxo) -> std::cmp::Ordering {
    b.value.cmp(&a.value).then_with(|| a.id.cmp(&b.id))
}

impl UtxoPool {
    pub fn new(mut utxos: Vec<Utxo>) -> Self {
        utxos.sort_by(pool_order);
        UtxoPool { utxos }
    }

    pub fn insert(&mut self, utxo: Utxo) {
        let at = self.utxos.partition_point(|u| pool_order(u, &utxo).is_lt());
        self.utxos.insert(at, utxo);
    }

    /// Removes the UTXO with the given id, returning it if present.
    pub fn remove(&mut self, id: &str) -> Option<Utxo> {
        let at = self.utxos.iter().position(|u| u.id == id)?;
        Some(self.utxos.remove(at))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.utxos.iter().any(|u| u.id == id)
    }

    pub fn as_slice(&self) -> &[Utxo] {
        &self.utxos
    }

    pub fn len(&self) -> usize {
        self.utxos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utxos.is_empty()
    }

    pub fn total(&self) -> Amount {
        self.utxos.iter().map(|u| u.value).sum()
    }

    pub fn is_sorted(&self) -> bool {
        self.utxos.windows(2).all(|w| pool_order(&w[0], &w[1]).is_le())
    }
}

impl From<Vec<Utxo>> for UtxoPool {
    fn from(utxos: Vec<Utxo>) -> Self {
        UtxoPool::new(utxos)
    }
}

impl From<UtxoPool> for Vec<Utxo> {
    fn from(pool: UtxoPool) -> Self {
        pool.utxos
    }
}

/// A transaction: inputs, payments, change and overpayment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub inputs: Vec<Utxo>,
    pub payments: Vec<PaymentRequest>,
    pub change: Amount,
    pub overpayment: Amount,
}

impl Transaction {
    pub fn has_change(&self) -> bool {
        self.change > Amount::ZERO
    }

    pub fn size_bytes(&self) -> u64 {
        tx_size(self.inputs.len(), self.payments.len(), self.has_change())
    }

    pub fn input_total(&self) -> Amount {
        self.inputs.iter().map(|u| u.value).sum()
    }

    pub fn payment_total(&self) -> Amount {
        self.payments.iter().map(|p| p.value).sum()
    }

    pub fn fee(&self, fees: &FeeParams) -> Amount {
        fees.fee_for(self.size_bytes())
    }

    /// Fee plus overpayment.
    pub fn cost(&self, fees: &FeeParams) -> Amount {
        self.fee(fees) + self.overpayment
    }

    /// Inputs exactly cover payments, change, overpayment and fee.
    pub fn conserves(&self, fees: &FeeParams) -> bool {
        self.input_total().signed()
            == self.payment_total().signed()
                + self.change.signed()
                + self.overpayment.signed()
                + self.fee(fees).signed()
    }

    pub fn is_valid(&self, fees: &FeeParams) -> bool {
        self.input_total().signed() >= self.payment_total().signed() + self.fee(fees).signed() && self.conserves(fees)
    }

    /// Valid, and either change-free with overpayment at most the make-change
    /// threshold, or with change at or above dust and no overpayment.
    pub fn is_good(&self, fees: &FeeParams) -> bool {
        if !self.is_valid(fees) {
            return false;
        }
        let change_free = self.change == Amount::ZERO && self.overpayment <= fees.make_change;
        let with_change = self.overpayment == Amount::ZERO && self.change >= fees.dust;
        change_free || with_change
    }
}

/// Fee plus overpayment of `tx`.
pub fn tx_cost(tx: &Transaction, fees: &FeeParams) -> Amount {
    tx.cost(fees)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("no prefix of the pool admits a good transaction for the payments")]
    NoGoodPrefix,
    #[error("payment set is empty")]
    EmptyPayments,
}

/// Input total minus payments and fee, for `n_inputs` inputs and the given
/// change flag. Negative when the inputs do not cover the transaction.
pub(crate) fn surplus(
    input_total: Amount,
    payment_total: Amount,
    n_inputs: usize,
    n_payments: usize,
    change: bool,
    fees: &FeeParams,
) -> i128 {
    input_total.signed() - payment_total.signed() - fees.fee_for(tx_size(n_inputs, n_payments, change)).signed()
}

/// How the top `k` UTXOs can pay for a payment set with no overpayment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum PrefixFit {
    /// Inputs match payments plus fee exactly; no change output.
    Exact,
    /// A change output of the given value, at or above dust.
    Change(Amount),
}

pub(crate) fn prefix_fit(
    input_total: Amount,
    payment_total: Amount,
    k: usize,
    n_payments: usize,
    fees: &FeeParams,
) -> Option<PrefixFit> {
    if surplus(input_total, payment_total, k, n_payments, false, fees) == 0 {
        return Some(PrefixFit::Exact);
    }
    let with_change = surplus(input_total, payment_total, k, n_payments, true, fees);
    if with_change >= fees.min_change().signed() {
        return Amount::from_signed(with_change).map(PrefixFit::Change);
    }
    None
}

/// Fewest largest-first UTXOs that admit a good transaction with zero
/// overpayment for `payments`.
///
/// A prefix whose surplus falls between zero and the dust threshold does not
/// qualify and the scan moves on to the next prefix.
pub fn opt(pool: &UtxoPool, payments: &[PaymentRequest], fees: &FeeParams) -> Result<usize, ModelError> {
    opt_with_fit(pool, payments, fees).map(|(k, _)| k)
}

pub(crate) fn opt_with_fit(
    pool: &UtxoPool,
    payments: &[PaymentRequest],
    fees: &FeeParams,
) -> Result<(usize, PrefixFit), ModelError> {
    if payments.is_empty() {
        return Err(ModelError::EmptyPayments);
    }
    let payment_total: Amount = payments.iter().map(|p| p.value).sum();
    let mut input_total = Amount::ZERO;
    for (i, utxo) in pool.as_slice().iter().enumerate() {
        input_total += utxo.value;
        if let Some(fit) = prefix_fit(input_total, payment_total, i + 1, payments.len(), fees) {
            return Ok((i + 1, fit));
        }
    }
    Err(ModelError::NoGoodPrefix)
}
