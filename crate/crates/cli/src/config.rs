// SPDX-License-Identifier: Apache-2.0

//! Scenario configuration from a JSON file, command-line overrides and the
//! `COINLEVER_SEED` environment variable.

use std::path::PathBuf;

use clap::Args;
use coinlever::decimal::{parse_decimal, Rational};
use coinlever::model::Amount;
use coinlever::simulation::{default_beta, ScenarioConfig};

pub const SEED_ENV: &str = "COINLEVER_SEED";

fn decimal_arg(s: &str) -> Result<Rational, String> {
    parse_decimal(s).map_err(|e| e.to_string())
}

/// Overrides for every scenario field; unset flags keep the file or
/// default value.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// JSON file with scenario fields
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Fee rate in satoshi per byte
    #[arg(long)]
    pub gamma: Option<u64>,
    /// Batch size
    #[arg(long)]
    pub m: Option<usize>,
    /// Boost factor in [0, 1]; defaults to the grid value for (gamma, m)
    #[arg(long, value_parser = decimal_arg)]
    pub beta: Option<Rational>,
    #[arg(long)]
    pub utxo_pool_size: Option<usize>,
    #[arg(long)]
    pub payment_pool_size: Option<usize>,
    /// Smallest sampled payment in satoshi
    #[arg(long, value_name = "SAT")]
    pub min_payment: Option<u64>,
    /// Make-change threshold in satoshi
    #[arg(long, value_name = "SAT")]
    pub make_change: Option<u64>,
    #[arg(long)]
    pub iterations_per_sample: Option<usize>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Base seed; falls back to the file, then COINLEVER_SEED, then 0
    #[arg(long)]
    pub seed: Option<u64>,
    /// Solver wall-clock budget per program
    #[arg(long)]
    pub budget_ms: Option<u64>,
    /// Solver node budget per program; 0 removes the limit
    #[arg(long)]
    pub node_limit: Option<u64>,
    /// Number of later requests offered to the leverage program
    #[arg(long)]
    pub candidate_window: Option<usize>,
    #[arg(long, value_parser = decimal_arg)]
    pub btc_usd: Option<Rational>,
}

impl Overrides {
    /// Resolves the final config. `env_seed` is the raw COINLEVER_SEED value.
    pub fn resolve(&self, env_seed: Option<String>) -> Result<ScenarioConfig, String> {
        let (mut config, file_keys) = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
                let value: serde_json::Value =
                    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
                let keys: Vec<String> = value.as_object().map(|o| o.keys().cloned().collect()).unwrap_or_default();
                let config: ScenarioConfig =
                    serde_json::from_value(value).map_err(|e| format!("{}: {e}", path.display()))?;
                (config, keys)
            }
            None => (ScenarioConfig::default(), Vec::new()),
        };
        let in_file = |key: &str| file_keys.iter().any(|k| k == key);

        if let Some(v) = self.gamma {
            config.gamma = v;
        }
        if let Some(v) = self.m {
            config.m = v;
        }
        match self.beta {
            Some(v) => config.beta = v,
            None if !in_file("beta") => {
                config.beta = default_beta(config.gamma, config.m).ok_or_else(|| {
                    format!("no default beta for gamma {} and m {}; pass --beta", config.gamma, config.m)
                })?;
            }
            None => {}
        }
        if let Some(v) = self.utxo_pool_size {
            config.utxo_pool_size = v;
        }
        if let Some(v) = self.payment_pool_size {
            config.payment_pool_size = v;
        }
        if let Some(v) = self.min_payment {
            config.min_payment = Some(Amount::from_sat(v));
        }
        if let Some(v) = self.make_change {
            config.make_change = Some(Amount::from_sat(v));
        }
        if let Some(v) = self.iterations_per_sample {
            config.iterations_per_sample = v;
        }
        if let Some(v) = self.repetitions {
            config.repetitions = v;
        }
        if let Some(v) = self.budget_ms {
            config.budget_ms = v;
        }
        if let Some(v) = self.node_limit {
            config.node_limit = (v > 0).then_some(v);
        }
        if let Some(v) = self.candidate_window {
            config.candidate_window = v;
        }
        if let Some(v) = self.btc_usd {
            config.btc_usd = v;
        }
        match (self.seed, in_file("rng_seed"), env_seed) {
            (Some(seed), _, _) => config.rng_seed = seed,
            (None, true, _) => {}
            (None, false, Some(raw)) => {
                config.rng_seed =
                    raw.trim().parse().map_err(|_| format!("{SEED_ENV} is not a 64-bit integer: {raw:?}"))?;
            }
            (None, false, None) => {}
        }
        config.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }
}
