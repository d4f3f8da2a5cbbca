//! On-chain transaction counts for settling `N` off-chain interactions.
//!
//! One channel settlement carries all interactions as receipts folded into a
//! single lock per chain. The baseline settles each interaction as its own
//! hashed-timelock payment.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::orchestrator::{PathSpec, PaymentConfig, Protocol, Scenario, WorldSettings};

use super::atomicity::base_spec;

/// Value moved by each interaction on the first chain.
pub const UNIT: u64 = 100;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRow {
    pub interactions: u64,
    pub ccn_txs: u64,
    pub htlc_txs: u64,
}

fn settings(interactions: u64) -> WorldSettings {
    WorldSettings {
        funds: 10 * interactions * UNIT + 1_000,
        ..WorldSettings::default()
    }
}

fn spec(interactions: u64) -> PathSpec {
    let mut s = base_spec(1);
    s.principal = interactions * UNIT;
    s.lock_delays = Vec::new();
    s
}

/// Transactions executed across all chains for one channel settlement of `n` interactions.
pub fn ccn_txs(interactions: u64, seed: u64) -> u64 {
    let mut cfg = PaymentConfig::new(spec(interactions), Protocol::Ccn);
    cfg.channels = true;
    cfg.interactions = interactions;
    cfg.channel_deposit = 2 * interactions * UNIT;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut sc = Scenario::new(vec![cfg], settings(interactions), &mut rng).expect("valid cost path");
    sc.run();
    assert!(sc.reports()[0].hops.iter().all(|h| h.settled), "settlement incomplete");
    sc.world.chains.iter().map(|c| c.executed_total()).sum()
}

/// Transactions executed for `n` independent hashed-timelock payments of one unit each.
pub fn htlc_txs(interactions: u64, seed: u64) -> u64 {
    (0..interactions)
        .into_par_iter()
        .map(|k| {
            let cfg = PaymentConfig::new(spec(1), Protocol::Htlc);
            let mut rng = ChaCha20Rng::seed_from_u64(seed ^ k);
            let mut sc = Scenario::new(vec![cfg], settings(1), &mut rng).expect("valid cost path");
            sc.run();
            sc.world.chains.iter().map(|c| c.executed_total()).sum::<u64>()
        })
        .sum()
}

pub fn cost_table(ns: &[u64], seed: u64) -> Vec<CostRow> {
    ns.iter()
        .map(|&n| CostRow {
            interactions: n,
            ccn_txs: ccn_txs(n, seed),
            htlc_txs: htlc_txs(n, seed),
        })
        .collect()
}

/// Constant channel cost and exactly linear baseline cost across the table.
pub fn scaling_holds(rows: &[CostRow]) -> bool {
    let Some(first) = rows.first() else { return true };
    rows.iter().all(|r| {
        r.ccn_txs == first.ccn_txs && r.htlc_txs * first.interactions == first.htlc_txs * r.interactions
    })
}
