// SPDX-License-Identifier: Apache-2.0

//! Bundled synthetic datasets and seeded sampling from datasets.
//!
//! The bundled UTXO values are log-normal in satoshis with median
//! 2,000,000 sat (`μ = ln 2e6`, `σ = 2.3`), floored at 546 sat. Payment
//! values are log-normal in USD with median $68 (`μ = ln 68`, `σ = 1.0`),
//! clamped to [$0.25, $30,000] and converted at 8,582 USD/BTC. Both files
//! under `data/` were written by [`generate_utxos`] and
//! [`generate_payments`] with [`SYNTHETIC_SEED`].

use rand::seq::index;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::io::{parse_payments, parse_utxos};
use crate::model::{Amount, PaymentRequest, Utxo, UtxoPool};

pub const SYNTHETIC_SEED: u64 = 20191001;
pub const SYNTHETIC_UTXO_COUNT: usize = 20_000;
pub const SYNTHETIC_PAYMENT_COUNT: usize = 10_000;

const UTXO_MEDIAN_SAT: f64 = 2_000_000.0;
const UTXO_SIGMA: f64 = 2.3;
const UTXO_FLOOR_SAT: u64 = 546;
const UTXO_CAP_SAT: u64 = 2_100_000_000_000_000;
const PAYMENT_MEDIAN_USD: f64 = 68.0;
const PAYMENT_SIGMA: f64 = 1.0;
const PAYMENT_MIN_USD: f64 = 0.25;
const PAYMENT_MAX_USD: f64 = 30_000.0;
const GENERATOR_BTC_USD: f64 = 8_582.0;

static BUNDLED_UTXOS: &str = include_str!("../data/utxos.csv");
static BUNDLED_PAYMENTS: &str = include_str!("../data/payments.csv");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SampleError {
    #[error("dataset has {available} usable entries, {requested} requested")]
    DatasetTooSmall { available: usize, requested: usize },
}

/// Source values for sampling UTXO and payment pools.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Datasets {
    pub utxos: Vec<Utxo>,
    pub payments: Vec<PaymentRequest>,
}

impl Datasets {
    pub fn bundled() -> Self {
        Datasets {
            utxos: parse_utxos(BUNDLED_UTXOS.as_bytes()).expect("bundled UTXO dataset parses"),
            payments: parse_payments(BUNDLED_PAYMENTS.as_bytes()).expect("bundled payment dataset parses"),
        }
    }
}

pub fn generate_utxos(count: usize, seed: u64) -> Vec<Utxo> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = LogNormal::new(UTXO_MEDIAN_SAT.ln(), UTXO_SIGMA).expect("valid log-normal");
    (0..count)
        .map(|i| {
            let v = (dist.sample(&mut rng).round() as u64).clamp(UTXO_FLOOR_SAT, UTXO_CAP_SAT);
            Utxo::new(format!("u{i:05}"), v)
        })
        .collect()
}

pub fn generate_payments(count: usize, seed: u64) -> Vec<PaymentRequest> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7061_796d_656e_7473);
    let dist = LogNormal::new(PAYMENT_MEDIAN_USD.ln(), PAYMENT_SIGMA).expect("valid log-normal");
    (0..count)
        .map(|i| {
            let usd = dist.sample(&mut rng).clamp(PAYMENT_MIN_USD, PAYMENT_MAX_USD);
            let sat = (usd / GENERATOR_BTC_USD * 1e8).round() as u64;
            PaymentRequest::new(format!("p{i:05}"), sat, i as u32)
        })
        .collect()
}

/// Stable 64-bit seed for one repetition: the first eight bytes (little
/// endian) of SHA-256 over `base` (LE), `repetition` (LE) and `tag`.
pub fn derive_seed(base: u64, repetition: u64, tag: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update(repetition.to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` UTXOs drawn without replacement, as a sorted pool.
pub fn sample_utxo_pool(source: &[Utxo], n: usize, rng: &mut impl RngCore) -> Result<UtxoPool, SampleError> {
    if n > source.len() {
        return Err(SampleError::DatasetTooSmall { available: source.len(), requested: n });
    }
    let picked = index::sample(rng, source.len(), n).into_iter().map(|i| source[i].clone()).collect();
    Ok(UtxoPool::new(picked))
}

/// `m` payments of at least `min_value` drawn without replacement. Urgency
/// follows draw order.
pub fn sample_payments(
    source: &[PaymentRequest],
    m: usize,
    min_value: Amount,
    rng: &mut impl RngCore,
) -> Result<Vec<PaymentRequest>, SampleError> {
    let eligible: Vec<&PaymentRequest> = source.iter().filter(|p| p.value >= min_value).collect();
    if m > eligible.len() {
        return Err(SampleError::DatasetTooSmall { available: eligible.len(), requested: m });
    }
    Ok(index::sample(rng, eligible.len(), m)
        .into_iter()
        .enumerate()
        .map(|(rank, i)| PaymentRequest { urgency_rank: rank as u32, ..eligible[i].clone() })
        .collect())
}
