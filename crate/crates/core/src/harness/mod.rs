//! Scenario configuration, metrics and the property drivers built on the
//! orchestrator.

pub mod atomicity;
pub mod cost;
pub mod unlink;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainParams, RefundPath, TraceRecord, TxKind, DEFAULT_APPEAL_WINDOW};
use crate::channel::DEFAULT_DISPUTE_WINDOW;
use crate::crypto::sha256;
use crate::error::ConfigError;
use crate::escrow::EscrowState;
use crate::orchestrator::{
    default_min_gap, CheckOrder, Fault, HopChain, OfflineSchedule, PathSpec, PaymentConfig,
    PaymentReport, Protocol, Rate, Scenario, Strategy, WorldSettings,
};

/// Background intra-chain receipts per channel: `receipts` draws uniform in `min..=max`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficModel {
    #[serde(default)]
    pub receipts: u32,
    #[serde(default)]
    pub min: u64,
    #[serde(default)]
    pub max: u64,
}

impl TrafficModel {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<u64> {
        if self.max == 0 {
            return Vec::new();
        }
        (0..self.receipts)
            .map(|_| rng.gen_range(self.min.max(1)..=self.max))
            .collect()
    }
}

fn default_watchers() -> usize {
    1
}
fn default_appeal() -> u64 {
    DEFAULT_APPEAL_WINDOW
}
fn default_dispute() -> u64 {
    DEFAULT_DISPUTE_WINDOW
}
fn default_delay() -> u64 {
    crate::chain::DEFAULT_VISIBILITY_DELAY
}
fn default_funds() -> u64 {
    10_000
}
fn default_interactions() -> u64 {
    1
}

/// One human-editable TOML scenario.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_watchers")]
    pub watchers: usize,
    #[serde(default = "default_appeal")]
    pub appeal_window: u64,
    #[serde(default = "default_dispute")]
    pub dispute_window: u64,
    #[serde(default = "default_delay")]
    pub visibility_delay: u64,
    #[serde(default = "default_funds")]
    pub funds: u64,
    pub principal: u64,
    pub parties: Vec<String>,
    pub rates: Vec<Rate>,
    #[serde(default)]
    pub lock_delays: Vec<u64>,
    #[serde(default = "default_min_gap")]
    pub min_gap: u64,
    #[serde(default = "default_interactions")]
    pub interactions: u64,
    #[serde(default)]
    pub channels: bool,
    #[serde(default)]
    pub channel_deposit: u64,
    #[serde(default)]
    pub traffic: TrafficModel,
    pub chains: Vec<HopChain>,
    #[serde(default)]
    pub faults: Vec<Fault>,
    #[serde(default)]
    pub strategies: BTreeMap<String, Strategy>,
    #[serde(default)]
    pub checks: Vec<CheckOrder>,
}

impl ScenarioConfig {
    pub fn from_toml(s: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn spec(&self) -> PathSpec {
        PathSpec {
            chains: self.chains.clone(),
            parties: self.parties.clone(),
            rates: self.rates.clone(),
            principal: self.principal,
            lock_delays: self.lock_delays.clone(),
            min_gap: self.min_gap,
        }
    }

    pub fn schedule(&self) -> OfflineSchedule {
        OfflineSchedule {
            faults: self.faults.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let spec = self.spec();
        spec.validate(self.visibility_delay)?;
        self.schedule().validate(&spec)?;
        if self.traffic.max < self.traffic.min {
            return Err(ConfigError::Invalid("traffic max below min".into()));
        }
        if self.interactions == 0 {
            return Err(ConfigError::Invalid("interactions must be at least 1".into()));
        }
        for name in self.strategies.keys() {
            if !self.parties.contains(name) {
                return Err(ConfigError::Invalid(format!("strategy for unknown party {name}")));
            }
        }
        if self.channels {
            let need = self.principal + u64::from(self.traffic.receipts) * self.traffic.max;
            if self.channel_deposit < need {
                return Err(ConfigError::Invalid(format!(
                    "channel_deposit {} cannot carry {need}",
                    self.channel_deposit
                )));
            }
        }
        Ok(())
    }

    pub fn settings(&self) -> WorldSettings {
        WorldSettings {
            params: ChainParams {
                appeal_window: self.appeal_window,
                dispute_window: self.dispute_window,
            },
            watchers: self.watchers,
            visibility_delay: self.visibility_delay,
            funds: self.funds,
        }
    }

    /// Payment configuration with background traffic drawn from `rng`.
    pub fn payment<R: Rng>(&self, rng: &mut R) -> PaymentConfig {
        let mut p = PaymentConfig::new(self.spec(), self.protocol);
        p.schedule = self.schedule();
        p.strategies = self.strategies.clone();
        p.checks = self.checks.clone();
        p.background = self.chains.iter().map(|_| self.traffic.sample(rng)).collect();
        p.interactions = self.interactions;
        p.channels = self.channels;
        p.channel_deposit = self.channel_deposit;
        p
    }

    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        self.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        let payment = self.payment(&mut rng);
        Scenario::new(vec![payment], self.settings(), &mut rng)
    }

    /// Two-chain, three-party scenario with the exchange rate 1:2 used throughout the tests.
    pub fn walkthrough() -> Self {
        ScenarioConfig::from_toml(include_str!("../../../../configs/walkthrough.toml")).expect("bundled config")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscrowOutcome {
    pub chain_id: String,
    pub escrow: u64,
    pub outcome: String,
}

/// Per-chain transaction counts and final escrow outcomes, rebuilt from a trace alone.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub tx_counts: BTreeMap<String, BTreeMap<TxKind, u64>>,
    pub outcomes: Vec<EscrowOutcome>,
}

impl TraceSummary {
    pub fn from_records(records: &[TraceRecord]) -> Result<Self, ConfigError> {
        let mut tx_counts: BTreeMap<String, BTreeMap<TxKind, u64>> = BTreeMap::new();
        let mut last: BTreeMap<(String, u64), String> = BTreeMap::new();
        for r in records {
            let kind = match r.label.as_str() {
                "Locked" => Some(TxKind::Lock),
                "CommitmentIssued" => Some(TxKind::Check),
                "Unlocked" => Some(TxKind::Unlock),
                "HtlcClaimed" => Some(TxKind::HtlcClaim),
                "Refund2Posted" => Some(TxKind::Refund2),
                "Appealed" => Some(TxKind::Appeal),
                "Refunded" => Some(match refund_path(&r.payload)? {
                    RefundPath::AfterUnlock => TxKind::Refund1,
                    RefundPath::Finalized => TxKind::Finalize,
                    RefundPath::Assisted => TxKind::Refund3,
                }),
                "ChannelOpened" => Some(TxKind::ChannelOpen),
                "ChannelClosing" => Some(TxKind::ChannelClose),
                "ChannelDisputed" => Some(TxKind::ChannelDispute),
                "StateClosed" => None,
                other => return Err(ConfigError::Parse(format!("unknown trace label {other}"))),
            };
            if let Some(k) = kind {
                *tx_counts.entry(r.chain_id.clone()).or_default().entry(k).or_default() += 1;
            }
            if let crate::chain::Subject::Escrow(id) = r.subject {
                let label = match (r.label.as_str(), kind) {
                    ("Refunded", Some(TxKind::Refund1)) => "refund1",
                    ("Refunded", Some(TxKind::Finalize)) => "finalized",
                    ("Refunded", _) => "assisted",
                    ("Locked", _) => "lock",
                    ("Unlocked", _) => "unlock",
                    ("HtlcClaimed", _) => "claimed",
                    ("Refund2Posted", _) => "refund2_pending",
                    ("Appealed", _) => "appealed",
                    _ => continue,
                };
                last.insert((r.chain_id.clone(), id), label.to_string());
            }
        }
        let outcomes = last
            .into_iter()
            .map(|((chain_id, escrow), outcome)| EscrowOutcome {
                chain_id,
                escrow,
                outcome,
            })
            .collect();
        Ok(TraceSummary { tx_counts, outcomes })
    }

    pub fn from_jsonl(s: &str) -> Result<Self, ConfigError> {
        let records = s
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| ConfigError::Parse(e.to_string())))
            .collect::<Result<Vec<TraceRecord>, _>>()?;
        Self::from_records(&records)
    }

    pub fn total(&self) -> u64 {
        self.tx_counts.values().flat_map(|m| m.values()).sum()
    }
}

fn refund_path(payload: &str) -> Result<RefundPath, ConfigError> {
    let bytes = hex::decode(payload).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let v: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| ConfigError::Parse(e.to_string()))?;
    serde_json::from_value(v["path"].clone()).map_err(|e| ConfigError::Parse(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub protocol: Protocol,
    pub seed: u64,
    pub trace_hash: String,
    pub final_height: u64,
    /// chain id → party → balance.
    pub balances: BTreeMap<String, BTreeMap<String, u64>>,
    /// party → `(height, accessible units)`.
    pub availability: BTreeMap<String, Vec<(u64, u64)>>,
    #[serde(flatten)]
    pub summary: TraceSummary,
    pub payments: Vec<PaymentReport>,
    pub conserved: bool,
    pub rejected_submissions: u64,
}

impl MetricsReport {
    /// Every escrow settled and every chain conserved at every block.
    pub fn clean(&self) -> bool {
        self.conserved
            && self
                .payments
                .iter()
                .flat_map(|p| &p.hops)
                .all(|h| h.escrow.is_none() || h.settled)
    }

    pub fn availability_csv(&self) -> String {
        let mut out = String::from("party,height,accessible\n");
        for (party, series) in &self.availability {
            for (h, v) in series {
                out.push_str(&format!("{party},{h},{v}\n"));
            }
        }
        out
    }
}

/// Completed run: its trace and the metrics computed from it.
pub struct RunOutput {
    pub trace: String,
    pub report: MetricsReport,
    pub scenario: Scenario,
}

pub fn trace_hash(trace: &str) -> String {
    hex::encode(sha256(trace.as_bytes()))
}

pub fn run_config(cfg: &ScenarioConfig) -> Result<RunOutput, ConfigError> {
    let mut sc = cfg.scenario()?;
    sc.run();
    Ok(finish(sc, cfg.protocol, cfg.seed))
}

pub fn finish(sc: Scenario, protocol: Protocol, seed: u64) -> RunOutput {
    let trace = sc.world.trace_jsonl(&protocol.to_string());
    let summary = TraceSummary::from_jsonl(&trace).expect("own trace parses");
    let balances = sc
        .world
        .chains
        .iter()
        .map(|c| (c.id.clone(), c.accounts().clone()))
        .collect();
    let mut availability = BTreeMap::new();
    for p in &sc.payments {
        for (party, series) in &p.accessible {
            availability.insert(party.clone(), series.clone());
        }
    }
    let report = MetricsReport {
        protocol,
        seed,
        trace_hash: trace_hash(&trace),
        final_height: sc.world.height(),
        balances,
        availability,
        summary,
        payments: sc.reports(),
        conserved: sc.conservation_failures.is_empty() && sc.world.is_conserved(),
        rejected_submissions: sc.rejected_submissions,
    };
    RunOutput {
        trace,
        report,
        scenario: sc,
    }
}

/// Whether every escrow in a terminal state paid out exactly what it held.
pub fn payouts_complete(sc: &Scenario) -> bool {
    sc.world.chains.iter().flat_map(|c| c.escrows()).all(|e| match e.state {
        EscrowState::Refund => e.held() == 0 && e.credits.total() == e.locked,
        _ => e.credits.total() <= e.locked,
    })
}
