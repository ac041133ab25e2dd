// SPDX-License-Identifier: Apache-2.0

//! Brute-force reference implementations. These work on plain integers and
//! enumerate every candidate, so they share no code with the library beyond
//! the input types.

#![allow(dead_code)]

use coinlever::model::{FeeParams, PaymentRequest, Transaction, Utxo, UtxoPool};
use coinlever::solver::{BlpProblem, Relation};
use rand::Rng;

pub fn size(n_in: usize, n_out: usize, change: bool) -> i128 {
    10 + 148 * n_in as i128 + 34 * n_out as i128 + if change { 34 } else { 0 }
}

pub fn sum_payments(p: &[PaymentRequest]) -> i128 {
    p.iter().map(|p| i128::from(p.value.to_sat())).sum()
}

pub fn sum_utxos(u: &[Utxo]) -> i128 {
    u.iter().map(|u| i128::from(u.value.to_sat())).sum()
}

pub struct Fees {
    pub gamma: i128,
    pub dust: i128,
    pub h: i128,
}

impl Fees {
    pub fn of(f: &FeeParams) -> Self {
        Fees { gamma: i128::from(f.gamma), dust: i128::from(f.dust.to_sat()), h: i128::from(f.make_change.to_sat()) }
    }

    pub fn min_change(&self) -> i128 {
        self.dust.max(1)
    }
}

/// Values sorted largest first.
pub fn sorted_values(pool: &UtxoPool) -> Vec<i128> {
    let mut v: Vec<i128> = pool.as_slice().iter().map(|u| i128::from(u.value.to_sat())).collect();
    v.sort_unstable_by(|a, b| b.cmp(a));
    v
}

/// Smallest `k` whose top-`k` prefix pays exactly with no change, or leaves
/// a change of at least `max(dust, 1)`. Returns `(k, change)`.
pub fn oracle_opt(pool: &UtxoPool, payments: &[PaymentRequest], fees: &FeeParams) -> Option<(usize, i128)> {
    let f = Fees::of(fees);
    let values = sorted_values(pool);
    let total = sum_payments(payments);
    let m = payments.len();
    for k in 1..=values.len() {
        let input: i128 = values[..k].iter().sum();
        if input - total - size(k, m, false) * f.gamma == 0 {
            return Some((k, 0));
        }
        let change = input - total - size(k, m, true) * f.gamma;
        if change >= f.min_change() {
            return Some((k, change));
        }
    }
    None
}

/// Calls `visit` with every subset of `0..n` of exactly `k` elements.
pub fn for_each_subset(n: usize, k: usize, visit: &mut impl FnMut(&[usize])) {
    fn go(start: usize, n: usize, k: usize, acc: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
        if acc.len() == k {
            visit(acc);
            return;
        }
        for i in start..n {
            if n - i < k - acc.len() {
                break;
            }
            acc.push(i);
            go(i + 1, n, k, acc, visit);
            acc.pop();
        }
    }
    go(0, n, k, &mut Vec::new(), visit);
}

/// Minimal overpayment of a change-free transaction with exactly `k` inputs
/// and overpayment in `[0, h]`.
pub fn oracle_knapsack(pool: &UtxoPool, payments: &[PaymentRequest], fees: &FeeParams, k: usize) -> Option<i128> {
    let f = Fees::of(fees);
    let values = sorted_values(pool);
    let need = sum_payments(payments) + size(k, payments.len(), false) * f.gamma;
    let mut best: Option<i128> = None;
    for_each_subset(values.len(), k, &mut |s| {
        let r: i128 = s.iter().map(|&i| values[i]).sum::<i128>() - need;
        if (0..=f.h).contains(&r) && best.is_none_or(|b| r < b) {
            best = Some(r);
        }
    });
    best
}

/// Best leverage pair by (fewest extra inputs, then smallest second
/// overpayment), with `bounds = (m1, m2, slack)`. Returns `(|I2|, r2)`.
pub fn oracle_leverage(
    pool: &UtxoPool,
    j_star: &[PaymentRequest],
    candidates: &[PaymentRequest],
    fees: &FeeParams,
    (m1, m2, slack): (usize, usize, i128),
    k: usize,
) -> Option<(usize, i128)> {
    let f = Fees::of(fees);
    let values = sorted_values(pool);
    let n = values.len();
    let spend1 = sum_payments(j_star) + size(k, j_star.len(), true) * f.gamma;
    let cand: Vec<i128> = candidates.iter().map(|p| i128::from(p.value.to_sat())).collect();

    // Candidate subsets of admissible size, as (count, total).
    let mut j2_options = Vec::new();
    for mask in 0u32..(1 << cand.len()) {
        let count = mask.count_ones() as usize;
        if (m1..=m2).contains(&count) {
            let total: i128 = (0..cand.len()).filter(|i| mask >> i & 1 == 1).map(|i| cand[i]).sum();
            j2_options.push((count, total));
        }
    }

    let mut best: Option<(usize, i128)> = None;
    // Each UTXO is unused, in the first transaction, or in the second.
    let mut assign = vec![0u8; n];
    loop {
        let in1: Vec<usize> = (0..n).filter(|&j| assign[j] == 1).collect();
        if in1.len() == k {
            let c1 = in1.iter().map(|&j| values[j]).sum::<i128>() - spend1;
            if c1 >= f.min_change() {
                let in2: Vec<usize> = (0..n).filter(|&j| assign[j] == 2).collect();
                let own: i128 = in2.iter().map(|&j| values[j]).sum();
                for &(count, total) in &j2_options {
                    let need2 = total + size(in2.len() + 1, count, false) * f.gamma;
                    let r2 = own + c1 - need2;
                    if own <= need2 && (0..=slack).contains(&r2) {
                        let key = (in2.len(), r2);
                        if best.is_none_or(|b| key < b) {
                            best = Some(key);
                        }
                    }
                }
            }
        }
        // Next ternary assignment.
        let mut i = 0;
        while i < n && assign[i] == 2 {
            assign[i] = 0;
            i += 1;
        }
        if i == n {
            break;
        }
        assign[i] += 1;
    }
    best
}

/// Minimum objective over all feasible assignments, by full enumeration.
pub fn oracle_blp(p: &BlpProblem) -> Option<i128> {
    assert!(p.n_vars <= 20, "enumeration is for small programs");
    let mut best: Option<i128> = None;
    let mut x = vec![false; p.n_vars];
    for mask in 0u64..(1 << p.n_vars) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = mask >> i & 1 == 1;
        }
        let feasible = p.rows.iter().all(|row| {
            let lhs: i128 = row.terms.iter().filter(|(v, _)| x[*v]).map(|(_, c)| *c).sum();
            match row.relation {
                Relation::Le => lhs <= row.rhs,
                Relation::Eq => lhs == row.rhs,
                Relation::Ge => lhs >= row.rhs,
            }
        });
        if feasible {
            let obj = p.offset + p.objective.iter().zip(&x).filter(|(_, on)| **on).map(|(c, _)| *c).sum::<i128>();
            if best.is_none_or(|b| obj < b) {
                best = Some(obj);
            }
        }
    }
    best
}

/// Random program with `n` variables, up to `max_rows` rows, and
/// coefficients in `[-range, range]`.
pub fn random_blp(rng: &mut impl Rng, n: usize, max_rows: usize, range: i128) -> BlpProblem {
    let mut p = BlpProblem::new(n);
    for c in p.objective.iter_mut() {
        *c = rng.random_range(-range..=range);
    }
    p.offset = rng.random_range(-range..=range);
    let rows = rng.random_range(0..=max_rows);
    for _ in 0..rows {
        let mut terms = Vec::new();
        for v in 0..n {
            if rng.random_bool(0.6) {
                let c = if rng.random_bool(0.3) { 1 } else { rng.random_range(-range..=range) };
                terms.push((v, c));
            }
        }
        let relation = match rng.random_range(0..3) {
            0 => Relation::Le,
            1 => Relation::Eq,
            _ => Relation::Ge,
        };
        let span: i128 = terms.iter().map(|(_, c)| c.abs()).sum::<i128>().max(1);
        let rhs = rng.random_range(-span / 2..=span / 2 + 1);
        p.add_row(terms, relation, rhs);
    }
    p
}

pub fn random_pool(rng: &mut impl Rng, n: usize, lo: u64, hi: u64) -> UtxoPool {
    UtxoPool::new((0..n).map(|i| Utxo::new(format!("u{i}"), rng.random_range(lo..=hi))).collect())
}

pub fn random_payments(
    rng: &mut impl Rng,
    prefix: &str,
    m: usize,
    lo: u64,
    hi: u64,
    first_rank: u32,
) -> Vec<PaymentRequest> {
    (0..m)
        .map(|i| PaymentRequest::new(format!("{prefix}{i}"), rng.random_range(lo..=hi), first_rank + i as u32))
        .collect()
}

/// Exact money identity of one transaction, checked without the library.
pub fn conserves(tx: &Transaction, fees: &FeeParams) -> bool {
    let fee = size(tx.inputs.len(), tx.payments.len(), tx.change.to_sat() > 0) * i128::from(fees.gamma);
    sum_utxos(&tx.inputs)
        == sum_payments(&tx.payments) + i128::from(tx.change.to_sat()) + i128::from(tx.overpayment.to_sat()) + fee
}
