// SPDX-License-Identifier: Apache-2.0

//! Coin selection with leverage.
//!
//! Selects UTXOs for batches of payment requests by solving small binary
//! linear programs: a change-free knapsack, a two-transaction "leverage"
//! program whose first change output exactly funds a second change-free
//! transaction, and a largest-first fallback. The [`orchestrator`] chains
//! these over a payment queue and the [`simulation`] module compares the two
//! strategies on sampled pools.

pub mod dataset;
pub mod decimal;
pub mod io;
pub mod model;
pub mod orchestrator;
pub mod selection;
pub mod simulation;
pub mod solver;
