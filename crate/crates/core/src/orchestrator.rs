//! Multi-hop payment driver.
//!
//! A path spans chains `0..=n`. On chain `i` party `i` locks and party `i + 1`
//! is the beneficiary, so party `0` is the sender, parties `1..=n` are
//! intermediaries and party `n + 1` is the receiver, who generates the
//! secret chain.
//!
//! The driver is block-stepped: each block every [`Payment`] looks at the
//! world, emits the transactions its online agents want, and the world
//! executes them in the next block. Phases overlap naturally: locks cascade
//! forward, amounts are confirmed hop by hop, unlocks cascade backward and
//! refunds run once a timelock passes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::RngCore;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainParams, EventLabel, RefundPath, Subject, TxEnvelope, TxPayload, World};
use crate::channel::{Channel, ChannelId, ChannelStatus, Receipt, ReceiptKind};
use crate::crypto::{
    amount_digest, prepare_instance, prove, unlock_intermediary_instance,
    unlock_terminal_instance, verify_proof, CircuitKind, HashLock, KeyPair, Proof, Secret256,
    SecretChain, Signature, Statement,
};
use crate::error::ConfigError;
use crate::escrow::{Credits, EscrowId, EscrowMode, EscrowState, LockParams};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    #[default]
    Ccn,
    Htlc,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Ccn => "ccn",
            Protocol::Htlc => "htlc",
        })
    }
}

impl FromStr for Protocol {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ccn" => Ok(Protocol::Ccn),
            "htlc" => Ok(Protocol::Htlc),
            other => Err(ConfigError::Invalid(format!("unknown protocol {other}"))),
        }
    }
}

/// Exchange rate as an exact fraction: units on the next chain per unit here.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Rate {
    pub num: u64,
    pub den: u64,
}

impl Rate {
    pub const ONE: Rate = Rate { num: 1, den: 1 };

    /// Converts an amount, rounding down.
    pub fn apply(&self, amount: u64) -> u64 {
        ((amount as u128 * self.num as u128) / self.den as u128) as u64
    }
}

impl FromStr for Rate {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConfigError::Invalid(format!("bad rate {s:?}"));
        let (num, den) = match s.split_once('/') {
            Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
            None => (s.trim().parse().map_err(|_| bad())?, 1),
        };
        if num == 0 || den == 0 {
            return Err(bad());
        }
        Ok(Rate { num, den })
    }
}

impl TryFrom<String> for Rate {
    type Error = ConfigError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Rate> for String {
    fn from(r: Rate) -> String {
        if r.den == 1 {
            r.num.to_string()
        } else {
            format!("{}/{}", r.num, r.den)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopChain {
    pub id: String,
    pub drain_rate: u64,
    pub timelock: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSpec {
    pub chains: Vec<HopChain>,
    pub parties: Vec<String>,
    pub rates: Vec<Rate>,
    pub principal: u64,
    /// Blocks each locker waits after its upstream lock becomes visible.
    #[serde(default)]
    pub lock_delays: Vec<u64>,
    #[serde(default = "default_min_gap")]
    pub min_gap: u64,
}

pub fn default_min_gap() -> u64 {
    3
}

impl PathSpec {
    pub fn hops(&self) -> usize {
        self.chains.len().saturating_sub(1)
    }

    pub fn lock_delay(&self, chain: usize) -> u64 {
        self.lock_delays.get(chain).copied().unwrap_or(0)
    }

    pub fn validate(&self, visibility_delay: u64) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let n = self.hops();
        if self.chains.len() < 2 {
            return bad("a path needs at least two chains".into());
        }
        if self.parties.len() != self.chains.len() + 1 {
            return bad(format!(
                "{} chains need {} parties, got {}",
                self.chains.len(),
                self.chains.len() + 1,
                self.parties.len()
            ));
        }
        if self.rates.len() != n {
            return bad(format!("{n} hops need {n} rates, got {}", self.rates.len()));
        }
        if self.principal == 0 {
            return bad("principal must be positive".into());
        }
        if !self.lock_delays.is_empty() && self.lock_delays.len() != self.chains.len() {
            return bad("lock_delays needs one entry per chain".into());
        }
        let mut names = self.parties.clone();
        names.sort();
        names.dedup();
        if names.len() != self.parties.len() {
            return bad("party names must be distinct".into());
        }
        let gap = self.min_gap.max(visibility_delay + 2);
        for w in self.chains.windows(2) {
            if w[0].timelock < w[1].timelock + gap {
                return bad(format!(
                    "timelock of {} must exceed that of {} by at least {gap}",
                    w[0].id, w[1].id
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    Active,
    Passive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Lock,
    Unlock,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fault {
    pub party: String,
    pub kind: FaultKind,
    pub trigger: Step,
    /// Blocks offline; `None` is permanent.
    #[serde(default)]
    pub duration: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfflineSchedule {
    #[serde(default)]
    pub faults: Vec<Fault>,
}

impl OfflineSchedule {
    pub fn validate(&self, spec: &PathSpec) -> Result<(), ConfigError> {
        let n = spec.hops();
        for f in &self.faults {
            let Some(j) = spec.parties.iter().position(|p| *p == f.party) else {
                return Err(ConfigError::Invalid(format!("fault on unknown party {}", f.party)));
            };
            let has_step = match f.trigger {
                Step::Lock => j <= n,
                Step::Unlock => j >= 1,
            };
            if !has_step {
                return Err(ConfigError::Invalid(format!(
                    "{} has no {:?} step",
                    f.party, f.trigger
                )));
            }
            match (f.kind, f.trigger, f.duration) {
                (FaultKind::Passive, Step::Lock, _) => {
                    return Err(ConfigError::Invalid("passive faults trigger at unlock".into()))
                }
                (FaultKind::Passive, _, None) => {
                    return Err(ConfigError::Invalid("passive faults need a duration".into()))
                }
                (FaultKind::Active, _, Some(_)) => {
                    return Err(ConfigError::Invalid("active faults are permanent".into()))
                }
                _ => {}
            }
        }
        let mut parties: Vec<_> = self.faults.iter().map(|f| &f.party).collect();
        parties.sort();
        parties.dedup();
        if parties.len() != self.faults.len() {
            return Err(ConfigError::Invalid("at most one fault per party".into()));
        }
        Ok(())
    }
}

/// How a locker settles an escrow whose beneficiary never unlocked although
/// the downstream secret is public.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Assisted refund crediting the beneficiary.
    #[default]
    Honest,
    /// Secondary-lock refund, hoping nobody appeals.
    Refund2,
    /// Never settles.
    Abstain,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckOrder {
    /// Path chain index.
    pub chain: usize,
    pub at: u64,
    pub rcv: String,
    pub amount: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentConfig {
    pub spec: PathSpec,
    pub protocol: Protocol,
    pub schedule: OfflineSchedule,
    pub strategies: BTreeMap<String, Strategy>,
    pub checks: Vec<CheckOrder>,
    /// Intra-chain receipt amounts per chain, settled through that chain's escrow.
    pub background: Vec<Vec<u64>>,
    /// Off-chain interactions folded into one settlement.
    pub interactions: u64,
    /// Open and close real channels around the settlement.
    pub channels: bool,
    pub channel_deposit: u64,
    pub start: u64,
}

impl PaymentConfig {
    pub fn new(spec: PathSpec, protocol: Protocol) -> Self {
        PaymentConfig {
            spec,
            protocol,
            schedule: OfflineSchedule::default(),
            strategies: BTreeMap::new(),
            checks: Vec::new(),
            background: Vec::new(),
            interactions: 1,
            channels: false,
            channel_deposit: 0,
            start: 0,
        }
    }

    pub fn background_total(&self, chain: usize) -> u64 {
        self.background.get(chain).map_or(0, |v| v.iter().sum())
    }
}

/// What one participant receives from the receiver during prepare.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub party: usize,
    pub proofs: Vec<(CircuitKind, Statement, Proof)>,
    /// `(s_i2, z_i)` for the chain this party locks, if it has a secondary lock.
    pub refund_pair: Option<(Secret256, Secret256)>,
}

impl Bundle {
    pub fn verify(&self) -> bool {
        self.proofs
            .iter()
            .all(|(kind, st, proof)| verify_proof(*kind, st, proof))
    }
}

/// Receiver-side prepare: one bundle per participant except the receiver.
pub fn run_prepare(chain: &SecretChain) -> Vec<Bundle> {
    let n = chain.hops();
    let instance = |hop: usize, intermediary: bool| {
        let (st, w) = prepare_instance(chain, hop, intermediary);
        let proof = prove(st.kind, &st, &w).expect("honest prepare witness");
        (st.kind, st, proof)
    };
    let mut bundles = vec![Bundle {
        party: 0,
        proofs: vec![instance(0, false)],
        refund_pair: Some((chain.secondary(0), chain.offset(0))),
    }];
    for j in 1..=n {
        let mut b = Bundle {
            party: j,
            proofs: vec![instance(j - 1, true)],
            refund_pair: None,
        };
        if j < n {
            b.proofs.push(instance(j, false));
            b.refund_pair = Some((chain.secondary(j), chain.offset(j)));
        }
        bundles.push(b);
    }
    bundles
}

#[derive(Clone, Debug, Default)]
struct Knowledge {
    primary: BTreeMap<usize, HashLock>,
    secondary: BTreeMap<usize, HashLock>,
    offsets: BTreeMap<usize, Secret256>,
    refund_pair: Option<(Secret256, Secret256)>,
}

impl Knowledge {
    fn learn(&mut self, b: &Bundle) {
        for (_, st, _) in &b.proofs {
            let hop = match st.kind {
                CircuitKind::PrepareIntermediary => b.party - 1,
                _ => b.party,
            };
            if let Some(l) = st.digest("lock") {
                self.primary.insert(hop, l);
            }
            if let Some(l) = st.digest("lock_next") {
                self.primary.insert(hop + 1, l);
            }
            if let Some(l) = st.digest("lock_secondary") {
                self.secondary.insert(hop, l);
            }
            if let Some(z) = st.secret("offset") {
                self.offsets.insert(hop, z);
            }
        }
        if let Some((s2, z)) = b.refund_pair {
            self.offsets.insert(b.party, z);
            self.refund_pair = Some((s2, z));
        }
    }
}

#[derive(Clone, Debug)]
struct Agent {
    name: String,
    /// Key per path chain the agent holds an account on.
    keys: BTreeMap<usize, KeyPair>,
    strategy: Strategy,
    fault: Option<Fault>,
    fault_fired: bool,
    offline_from: Option<u64>,
    offline_until: Option<u64>,
    knows: Knowledge,
}

impl Agent {
    fn online(&self, h: u64) -> bool {
        match (self.offline_from, self.offline_until) {
            (Some(from), Some(until)) => !(from..until).contains(&h),
            (Some(from), None) => h < from,
            _ => true,
        }
    }

    /// Fires the agent's fault if it is tied to `step`. Returns whether the
    /// agent is online for that step now.
    fn reach(&mut self, step: Step, h: u64) -> bool {
        if let Some(f) = &self.fault {
            if !self.fault_fired && f.trigger == step {
                self.fault_fired = true;
                self.offline_from = Some(h);
                self.offline_until = f.duration.map(|d| h + d);
            }
        }
        self.online(h)
    }

    fn key(&self, chain: usize) -> &KeyPair {
        &self.keys[&chain]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confirmation {
    pub height: u64,
    pub amount: u64,
    pub locker_sig: Signature,
    pub beneficiary_sig: Signature,
}

#[derive(Clone, Debug, Default)]
struct Hop {
    escrow: Option<EscrowId>,
    lock_seen_at: Option<u64>,
    lock_submitted: bool,
    locked: u64,
    confirmation: Option<Confirmation>,
    reveal: Option<Secret256>,
    channel: Option<Channel>,
    channel_id: Option<ChannelId>,
    channel_open_submitted: bool,
    channel_close_submitted: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub party: String,
    pub locks: Vec<HashLock>,
    pub offsets: Vec<Secret256>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopReport {
    pub chain_id: String,
    pub locker: String,
    pub beneficiary: String,
    pub escrow: Option<EscrowId>,
    pub locked: u64,
    pub confirmed: Option<u64>,
    pub state: Option<EscrowState>,
    pub credits: Credits,
    pub settled: bool,
    pub reveal_height: Option<u64>,
    pub appealed_by: Option<String>,
    pub refund_path: Option<RefundPath>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentReport {
    pub id: u64,
    pub protocol: Protocol,
    pub halted: Option<String>,
    pub hops: Vec<HopReport>,
    pub reveal_order_ok: bool,
    pub distinct_locks: bool,
}

#[derive(Clone, Debug)]
pub struct Payment {
    pub id: u64,
    pub cfg: PaymentConfig,
    /// World chain index of every path chain.
    pub chains: Vec<usize>,
    agents: Vec<Agent>,
    secrets: Option<SecretChain>,
    htlc_secret: Option<Secret256>,
    hops: Vec<Hop>,
    checks_done: Vec<bool>,
    pub halted: Option<String>,
    /// Accessible funds of each locker over time: `(height, units)`.
    pub accessible: BTreeMap<String, Vec<(u64, u64)>>,
}

impl Payment {
    pub fn new<R: RngCore>(id: u64, cfg: PaymentConfig, chains: Vec<usize>, rng: &mut R) -> Self {
        let spec = &cfg.spec;
        let n = spec.hops();
        let agents = spec
            .parties
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let mut keys = BTreeMap::new();
                for c in [j.checked_sub(1), (j <= n).then_some(j)].into_iter().flatten() {
                    keys.insert(c, KeyPair::generate(rng));
                }
                Agent {
                    name: name.clone(),
                    keys,
                    strategy: cfg.strategies.get(name).copied().unwrap_or_default(),
                    fault: cfg.schedule.faults.iter().find(|f| f.party == *name).cloned(),
                    fault_fired: false,
                    offline_from: None,
                    offline_until: None,
                    knows: Knowledge::default(),
                }
            })
            .collect();
        let mut p = Payment {
            id,
            chains,
            agents,
            secrets: None,
            htlc_secret: None,
            hops: vec![Hop::default(); n + 1],
            checks_done: vec![false; cfg.checks.len()],
            halted: None,
            accessible: BTreeMap::new(),
            cfg,
        };
        match p.cfg.protocol {
            Protocol::Ccn => {
                let chain = SecretChain::derive(n, rng).expect("validated hop count");
                let bundles = run_prepare(&chain);
                p.distribute(&chain, &bundles);
                p.secrets = Some(chain);
            }
            Protocol::Htlc => {
                let s = Secret256::random(rng);
                let lock = HashLock::of_secret(&s);
                for a in &mut p.agents {
                    for c in 0..=n {
                        a.knows.primary.insert(c, lock);
                    }
                }
                p.htlc_secret = Some(s);
            }
        }
        p
    }

    /// Hands bundles to their parties; any verification failure aborts before any lock.
    pub fn distribute(&mut self, chain: &SecretChain, bundles: &[Bundle]) {
        let receiver = self.agents.len() - 1;
        let locks = chain.locks();
        let r = &mut self.agents[receiver].knows;
        for (i, l) in locks.primary.iter().enumerate() {
            r.primary.insert(i, *l);
        }
        for (i, l) in locks.secondary.iter().enumerate() {
            r.secondary.insert(i, *l);
        }
        for (i, z) in chain.offsets().iter().enumerate() {
            r.offsets.insert(i, *z);
        }
        for b in bundles {
            if !b.verify() {
                self.halted = Some(format!("prepare proof rejected by {}", self.agents[b.party].name));
                return;
            }
            self.agents[b.party].knows.learn(b);
        }
    }

    pub fn n(&self) -> usize {
        self.cfg.spec.hops()
    }

    pub fn party(&self, j: usize) -> &str {
        &self.agents[j].name
    }

    pub fn secret_chain(&self) -> Option<&SecretChain> {
        self.secrets.as_ref()
    }

    pub fn confirmation(&self, chain: usize) -> Option<&Confirmation> {
        self.hops[chain].confirmation.as_ref()
    }

    pub fn escrow_id(&self, chain: usize) -> Option<EscrowId> {
        self.hops[chain].escrow
    }

    /// Everything party `j` learned during prepare: lock digests it knows to
    /// belong to this payment, and the offsets it holds.
    pub fn transcript(&self, j: usize) -> Transcript {
        let k = &self.agents[j].knows;
        let mut locks: Vec<HashLock> = k.primary.values().chain(k.secondary.values()).copied().collect();
        locks.sort();
        locks.dedup();
        Transcript {
            party: self.agents[j].name.clone(),
            locks,
            offsets: k.offsets.values().copied().collect(),
        }
    }

    pub fn channel(&self, chain: usize) -> Option<&Channel> {
        self.hops[chain].channel.as_ref()
    }

    fn prepare_failed(&self) -> bool {
        self.halted
            .as_deref()
            .is_some_and(|h| h.starts_with("prepare"))
    }

    fn timelock(&self, chain: usize) -> u64 {
        self.cfg.spec.chains[chain].timelock
    }

    /// Transactions this payment's agents submit at the world's current height.
    pub fn act(&mut self, world: &World) -> Vec<(usize, TxEnvelope)> {
        let mut out = Vec::new();
        if self.prepare_failed() {
            return out;
        }
        let h = world.height();
        self.observe(world, h);
        if self.cfg.channels {
            self.channel_actions(world, h, &mut out);
        }
        self.lock_actions(world, h, &mut out);
        self.check_actions(world, h, &mut out);
        if self.cfg.protocol == Protocol::Ccn {
            self.confirm(world, h);
        }
        self.unlock_actions(world, h, &mut out);
        self.refund_actions(world, h, &mut out);
        out
    }

    fn observe(&mut self, world: &World, h: u64) {
        for i in 0..self.hops.len() {
            let wc = self.chains[i];
            let locker = self.agents[i].name.clone();
            let beneficiary = self.agents[i + 1].name.clone();
            let expected = self.agents[i + 1].knows.primary.get(&i).copied();
            if self.hops[i].escrow.is_none() {
                for e in world.visible_events(wc) {
                    if let (Subject::Escrow(id), EventLabel::Locked { locker: l, beneficiary: b, primary_lock, .. }) =
                        (e.subject, &e.label)
                    {
                        if *l == locker && *b == beneficiary && Some(*primary_lock) == expected {
                            self.hops[i].escrow = Some(id);
                            self.hops[i].lock_seen_at = Some(h);
                            break;
                        }
                    }
                }
            }
            if let (Some(id), None) = (self.hops[i].escrow, self.hops[i].reveal) {
                self.hops[i].reveal = world
                    .visible_events(wc)
                    .filter(|e| e.subject == Subject::Escrow(id))
                    .find_map(|e| e.label.revealed_secret());
            }
            if self.cfg.channels && self.hops[i].channel_id.is_none() {
                for e in world.visible_events(wc) {
                    if let (Subject::Channel(cid), EventLabel::ChannelOpened { party_a, party_b, deposit_a, deposit_b }) =
                        (e.subject, &e.label)
                    {
                        let ka = self.agents[i].key(i);
                        let kb = self.agents[i + 1].key(i);
                        let ours = world.chains[wc]
                            .channel(cid)
                            .is_some_and(|r| r.pk_a == ka.public() && r.pk_b == kb.public());
                        if *party_a == locker && *party_b == beneficiary && ours {
                            self.hops[i].channel_id = Some(cid);
                            self.hops[i].channel = Some(Channel::open(
                                cid,
                                &world.chains[wc].id,
                                (party_a, ka, *deposit_a),
                                (party_b, kb, *deposit_b),
                            ));
                            break;
                        }
                    }
                }
            }
        }
    }

    fn channel_actions(&mut self, world: &World, h: u64, out: &mut Vec<(usize, TxEnvelope)>) {
        for i in 0..self.hops.len() {
            let wc = self.chains[i];
            if !self.hops[i].channel_open_submitted && h >= self.cfg.start {
                self.hops[i].channel_open_submitted = true;
                let d = self.cfg.channel_deposit;
                out.push((
                    wc,
                    TxEnvelope::new(
                        &self.agents[i].name,
                        TxPayload::ChannelOpen {
                            counterparty: self.agents[i + 1].name.clone(),
                            pk_a: self.agents[i].key(i).public(),
                            pk_b: self.agents[i + 1].key(i).public(),
                            deposit_a: d,
                            deposit_b: d,
                        },
                    ),
                ));
            }
            let settled = self.hops[i]
                .escrow
                .and_then(|id| world.chains[wc].escrow(id))
                .is_some_and(|e| e.is_settled());
            let halted_early = self.halted.is_some() && self.hops[i].escrow.is_none();
            if (settled || halted_early)
                && !self.hops[i].channel_close_submitted
                && self.agents[i].online(h)
            {
                if let (Some(ch), Some(cid)) = (&self.hops[i].channel, self.hops[i].channel_id) {
                    if world.chains[wc].channel(cid).map(|r| r.status) == Some(ChannelStatus::Open) {
                        let latest = ch.latest.clone();
                        self.hops[i].channel_close_submitted = true;
                        out.push((
                            wc,
                            TxEnvelope::new(
                                &self.agents[i].name,
                                TxPayload::ChannelClose {
                                    channel: cid,
                                    state: latest,
                                },
                            ),
                        ));
                    }
                }
            }
        }
    }

    fn channels_ready(&self) -> bool {
        !self.cfg.channels || self.hops.iter().all(|hop| hop.channel.is_some())
    }

    /// Receipts for chain `i` plus the fold that hands their aggregate to the escrow.
    fn route_off_chain(&mut self, i: usize, cross: u64) -> Result<u64, String> {
        let path = self.id;
        let snd = self.agents[i].name.clone();
        let rcv = self.agents[i + 1].name.clone();
        let ka = self.agents[i].key(i).clone();
        let kb = self.agents[i + 1].key(i).clone();
        let background = self.cfg.background.get(i).cloned().unwrap_or_default();
        let interactions = self.cfg.interactions.max(1);
        let ch = self.hops[i].channel.as_mut().expect("channels ready");
        let send = |kind: ReceiptKind, amount: u64, ch: &mut Channel| {
            let r = Receipt::signed(ch.id, kind, &snd, &rcv, amount, ch.seq + 1, Some(path), &ka);
            ch.pay_receipt(r, &ka, &kb).map(|_| ()).map_err(|e| e.to_string())
        };
        for v in background {
            send(ReceiptKind::IntraChain, v, ch)?;
        }
        let base = cross / interactions;
        for k in 0..interactions {
            let v = if k + 1 == interactions {
                cross - base * (interactions - 1)
            } else {
                base
            };
            if v > 0 {
                send(ReceiptKind::CrossChain, v, ch)?;
            }
        }
        ch.fold_path(path, &snd, &ka, &kb).map_err(|e| e.to_string())
    }

    fn lock_actions(&mut self, world: &World, h: u64, out: &mut Vec<(usize, TxEnvelope)>) {
        if self.halted.is_some() || !self.channels_ready() {
            return;
        }
        let n = self.n();
        for i in 0..=n {
            if self.hops[i].lock_submitted {
                continue;
            }
            let ready = if i == 0 {
                h >= self.cfg.start + self.cfg.spec.lock_delay(0)
            } else {
                match (self.hops[i - 1].escrow, self.hops[i - 1].lock_seen_at) {
                    (Some(id), Some(seen)) => {
                        if !self.upstream_lock_ok(world, i - 1, id) {
                            self.halted = Some(format!("{} rejected the lock on chain {}", self.agents[i].name, i - 1));
                            return;
                        }
                        h >= seen + self.cfg.spec.lock_delay(i)
                    }
                    _ => false,
                }
            };
            if !ready {
                return;
            }
            if !self.agents[i].reach(Step::Lock, h) {
                self.halted = Some(format!("{} offline at lock", self.agents[i].name));
                return;
            }
            let remaining = (n - i) as u64;
            if h + 1 + 2 * remaining + 2 >= self.timelock(i) {
                self.halted = Some(format!("no timelock slack for chain {i}"));
                return;
            }
            let cross = if i == 0 {
                self.cfg.spec.principal
            } else {
                let wc = self.chains[i - 1];
                let up = world.chains[wc]
                    .escrow(self.hops[i - 1].escrow.expect("checked"))
                    .expect("visible escrow");
                let basis = match self.cfg.protocol {
                    Protocol::Ccn => up.frozen_at(h),
                    Protocol::Htlc => up.locked,
                };
                self.cfg.spec.rates[i - 1].apply(basis.saturating_sub(self.cfg.background_total(i - 1)))
            };
            let mut amount = cross + self.cfg.background_total(i);
            if self.cfg.channels {
                match self.route_off_chain(i, cross) {
                    Ok(folded) => amount = folded,
                    Err(e) => {
                        self.halted = Some(format!("off-chain routing failed on chain {i}: {e}"));
                        return;
                    }
                }
            }
            if amount == 0 {
                self.halted = Some(format!("nothing left to forward on chain {i}"));
                return;
            }
            let locker = &self.agents[i];
            let beneficiary = &self.agents[i + 1];
            let (secondary, drain, mode) = match self.cfg.protocol {
                Protocol::Ccn => (
                    locker.knows.secondary.get(&i).copied(),
                    self.cfg.spec.chains[i].drain_rate,
                    EscrowMode::DualLock,
                ),
                Protocol::Htlc => (None, 0, EscrowMode::Htlc),
            };
            let params = LockParams {
                locker: locker.name.clone(),
                beneficiary: beneficiary.name.clone(),
                locker_pk: locker.key(i).public(),
                beneficiary_pk: beneficiary.key(i).public(),
                amount,
                primary_lock: locker.knows.primary[&i],
                secondary_lock: if i < n { secondary } else { None },
                drain_rate: drain,
                timelock: self.timelock(i),
                mode,
            };
            self.hops[i].lock_submitted = true;
            self.hops[i].locked = amount;
            out.push((self.chains[i], TxEnvelope::new(&locker.name, TxPayload::Lock(params))));
        }
    }

    /// The beneficiary's check of an upstream lock before locking downstream.
    fn upstream_lock_ok(&self, world: &World, chain: usize, id: EscrowId) -> bool {
        let Some(e) = world.chains[self.chains[chain]].escrow(id) else {
            return false;
        };
        let me = &self.agents[chain + 1];
        let secondary_ok = match self.cfg.protocol {
            Protocol::Ccn => e.secondary_lock == me.knows.secondary.get(&chain).copied(),
            Protocol::Htlc => e.secondary_lock.is_none(),
        };
        e.beneficiary == me.name
            && Some(e.primary_lock) == me.knows.primary.get(&chain).copied()
            && secondary_ok
            && e.timelock == self.timelock(chain)
            && e.beneficiary_pk == me.key(chain).public()
    }

    fn check_actions(&mut self, world: &World, h: u64, out: &mut Vec<(usize, TxEnvelope)>) {
        for k in 0..self.cfg.checks.len() {
            if self.checks_done[k] || h < self.cfg.checks[k].at {
                continue;
            }
            let order = self.cfg.checks[k].clone();
            let i = order.chain;
            let Some(id) = self.hops.get(i).and_then(|hop| hop.escrow) else {
                continue;
            };
            if !self.agents[i].online(h) {
                continue;
            }
            self.checks_done[k] = true;
            let e = world.chains[self.chains[i]].escrow(id).expect("visible escrow");
            if !matches!(e.state, EscrowState::Lock | EscrowState::Unlock) {
                continue;
            }
            let reserve = match (&self.hops[i].confirmation, e.state) {
                (Some(c), EscrowState::Lock) => c.amount,
                _ => 0,
            };
            let spendable = (e.frozen + e.available()).saturating_sub(reserve).min(e.available());
            if order.amount == 0 || order.amount > spendable {
                continue;
            }
            out.push((
                self.chains[i],
                TxEnvelope::new(
                    &self.agents[i].name,
                    TxPayload::Check {
                        escrow: id,
                        rcv: order.rcv,
                        amount: order.amount,
                    },
                ),
            ));
        }
    }

    /// The locker's own view of its escrow on chain `i`, without visibility delay.
    fn own_escrow<'w>(&self, world: &'w World, i: usize) -> Option<&'w crate::escrow::Escrow> {
        let lock = self.agents[i].knows.primary.get(&i).copied()?;
        let name = &self.agents[i].name;
        world.chains[self.chains[i]]
            .escrows()
            .find(|e| e.locker == *name && e.primary_lock == lock)
    }

    /// Off-chain amount confirmation, one hop per block from the first chain on.
    /// An intermediary confirms upstream only once its own downstream lock is in place.
    fn confirm(&mut self, world: &World, h: u64) {
        for i in 0..self.hops.len() {
            if self.hops[i].escrow.is_none() {
                return;
            }
            if i + 1 < self.hops.len() && self.own_escrow(world, i + 1).is_none() {
                return;
            }
            if let Some(c) = &self.hops[i].confirmation {
                if c.height == h {
                    return;
                }
                continue;
            }
            if !(self.agents[i].online(h) && self.agents[i + 1].online(h)) {
                return;
            }
            let id = self.hops[i].escrow.expect("all visible");
            let e = world.chains[self.chains[i]].escrow(id).expect("visible escrow");
            if e.state != EscrowState::Lock {
                return;
            }
            let v = e.frozen;
            if v == 0 || v > e.unlock_bound() {
                return;
            }
            let lock = self.agents[i].knows.primary[&i];
            let digest = amount_digest(&lock, v);
            self.hops[i].confirmation = Some(Confirmation {
                height: h,
                amount: v,
                beneficiary_sig: self.agents[i + 1].key(i).sign(&digest),
                locker_sig: self.agents[i].key(i).sign(&digest),
            });
            return;
        }
    }

    fn unlock_actions(&mut self, world: &World, h: u64, out: &mut Vec<(usize, TxEnvelope)>) {
        let n = self.n();
        for i in 0..=n {
            let Some(id) = self.hops[i].escrow else { continue };
            let e = world.chains[self.chains[i]].escrow(id).expect("visible escrow");
            if e.state != EscrowState::Lock || h + 1 >= self.timelock(i) {
                continue;
            }
            let beneficiary = i + 1;
            let secret = match (self.cfg.protocol, i == n) {
                (Protocol::Htlc, true) => self.htlc_secret,
                (Protocol::Htlc, false) => self.hops[i + 1].reveal,
                (Protocol::Ccn, true) => {
                    if self.hops[i].confirmation.is_none() {
                        continue;
                    }
                    self.secrets.as_ref().map(|c| c.primary(n))
                }
                (Protocol::Ccn, false) => {
                    if self.hops[i].confirmation.is_none() {
                        continue;
                    }
                    let z = self.agents[beneficiary].knows.offsets.get(&i).copied();
                    self.hops[i + 1].reveal.zip(z).map(|(s, z)| s ^ z)
                }
            };
            let Some(secret) = secret else { continue };
            if HashLock::of_secret(&secret) != e.primary_lock {
                continue;
            }
            if self.cfg.protocol == Protocol::Htlc && i == n && self.hops.iter().any(|hop| hop.escrow.is_none()) {
                continue;
            }
            if !self.agents[beneficiary].reach(Step::Unlock, h) {
                continue;
            }
            let name = self.agents[beneficiary].name.clone();
            let tx = match self.cfg.protocol {
                Protocol::Htlc => TxPayload::HtlcClaim { escrow: id, secret },
                Protocol::Ccn => {
                    let c = self.hops[i].confirmation.clone().expect("checked");
                    let (st, proof) = self.unlock_proof(i, secret, c.amount, c.locker_sig, false);
                    TxPayload::Unlock {
                        escrow: id,
                        statement: st,
                        proof,
                    }
                }
            };
            out.push((self.chains[i], TxEnvelope::new(&name, tx)));
        }
    }

    /// Unlock statement and proof for chain `i`. With `assisted` the locker
    /// builds it from the beneficiary's signature.
    fn unlock_proof(
        &self,
        i: usize,
        secret: Secret256,
        amount: u64,
        sig: Signature,
        assisted: bool,
    ) -> (Statement, Proof) {
        let n = self.n();
        let lock = HashLock::of_secret(&secret);
        let signer = if assisted {
            self.agents[i + 1].key(i).public()
        } else {
            self.agents[i].key(i).public()
        };
        let (st, w) = if i == n {
            unlock_terminal_instance(lock, secret, amount, sig, signer)
        } else {
            let actor = if assisted { i } else { i + 1 };
            let z = self.agents[actor].knows.offsets[&i];
            unlock_intermediary_instance(lock, secret, amount, sig, signer, secret ^ z, z)
        };
        let proof = prove(st.kind, &st, &w).expect("honest unlock witness");
        (st, proof)
    }

    fn refund_actions(&mut self, world: &World, h: u64, out: &mut Vec<(usize, TxEnvelope)>) {
        let n = self.n();
        for i in 0..=n {
            let Some(id) = self.hops[i].escrow else { continue };
            if h < self.timelock(i) || !self.agents[i].online(h) {
                continue;
            }
            let e = world.chains[self.chains[i]].escrow(id).expect("visible escrow");
            let locker = self.agents[i].name.clone();
            let tx = match e.state {
                EscrowState::Unlock if e.held() > 0 => TxPayload::Refund1 { escrow: id },
                EscrowState::Lock if e.secondary_lock.is_none() => TxPayload::Refund1 { escrow: id },
                EscrowState::Lock => {
                    let (s2, z) = self.agents[i].knows.refund_pair.expect("non-terminal locker");
                    let case2 = TxPayload::Refund2 {
                        escrow: id,
                        secret_and: s2,
                        offset: z,
                    };
                    match (self.hops[i + 1].reveal, self.agents[i].strategy) {
                        (None, Strategy::Abstain) | (Some(_), Strategy::Abstain) => continue,
                        (None, _) | (Some(_), Strategy::Refund2) => case2,
                        (Some(next), Strategy::Honest) => match &self.hops[i].confirmation {
                            Some(c) => {
                                let (st, proof) =
                                    self.unlock_proof(i, next ^ z, c.amount, c.beneficiary_sig.clone(), true);
                                TxPayload::Refund3 {
                                    escrow: id,
                                    statement: st,
                                    proof,
                                }
                            }
                            None => case2,
                        },
                    }
                }
                EscrowState::Refund2Pending if h >= e.appeal_deadline.unwrap_or(u64::MAX) => {
                    TxPayload::Finalize { escrow: id }
                }
                _ => continue,
            };
            out.push((self.chains[i], TxEnvelope::new(&locker, tx)));
        }
    }

    /// Accessible funds of each locker: available plus committed while the
    /// hourglass runs, whatever came back once settled.
    pub fn sample(&mut self, world: &World) {
        let h = world.height();
        for i in 0..self.hops.len() {
            let wc = self.chains[i];
            let name = self.agents[i].name.clone();
            let value = world.chains[wc]
                .escrows()
                .find(|e| Some(e.id) == self.hops[i].escrow || (self.hops[i].escrow.is_none() && e.locker == name && e.primary_lock == self.agents[i].knows.primary.get(&i).copied().unwrap_or_default()))
                .map(|e| match e.state {
                    EscrowState::Lock | EscrowState::Unlock => e.available() + e.committed,
                    _ => e.credits.locker + e.credits.commitments,
                });
            if let Some(v) = value {
                self.accessible.entry(name).or_default().push((h, v));
            }
        }
    }

    /// Final per-hop outcome, read from the full (not delay-limited) chain state.
    pub fn report(&self, world: &World) -> PaymentReport {
        let n = self.n();
        let mut hops = Vec::new();
        let mut reveal_heights = Vec::new();
        let mut locks = Vec::new();
        for i in 0..=n {
            let chain = &world.chains[self.chains[i]];
            let locker = self.agents[i].name.clone();
            let expected = self.agents[i].knows.primary.get(&i).copied();
            let escrow = chain
                .escrows()
                .find(|e| e.locker == locker && Some(e.primary_lock) == expected);
            let id = escrow.map(|e| e.id);
            let mut reveal_height = None;
            let mut appealed_by = None;
            let mut refund_path = None;
            if let Some(id) = id {
                for e in chain.events().iter().filter(|e| e.subject == Subject::Escrow(id)) {
                    if reveal_height.is_none() && e.label.revealed_secret().is_some() {
                        reveal_height = Some(e.height);
                    }
                    match &e.label {
                        EventLabel::Appealed { appellant, .. } => appealed_by = Some(appellant.clone()),
                        EventLabel::Refunded { path, .. } => refund_path = Some(*path),
                        _ => {}
                    }
                }
            }
            if let Some(e) = escrow {
                locks.push(e.primary_lock);
                locks.extend(e.secondary_lock);
            }
            reveal_heights.push(reveal_height);
            hops.push(HopReport {
                chain_id: chain.id.clone(),
                locker,
                beneficiary: self.agents[i + 1].name.clone(),
                escrow: id,
                locked: escrow.map_or(0, |e| e.locked),
                confirmed: self.hops[i].confirmation.as_ref().map(|c| c.amount),
                state: escrow.map(|e| e.state),
                credits: escrow.map(|e| e.credits.clone()).unwrap_or_default(),
                settled: escrow.is_some_and(|e| e.is_settled()),
                reveal_height,
                appealed_by,
                refund_path,
            });
        }
        let reveal_order_ok = (0..n).all(|i| match (reveal_heights[i], reveal_heights[i + 1]) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(up), Some(down)) => down < up,
        });
        let total = locks.len();
        locks.sort();
        locks.dedup();
        PaymentReport {
            id: self.id,
            protocol: self.cfg.protocol,
            halted: self.halted.clone(),
            hops,
            reveal_order_ok: self.cfg.protocol == Protocol::Htlc || reveal_order_ok,
            distinct_locks: locks.len() == total,
        }
    }
}

/// Shared settings of the world a scenario runs in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldSettings {
    pub params: ChainParams,
    pub watchers: usize,
    pub visibility_delay: u64,
    /// Genesis balance of every party on each chain it touches.
    pub funds: u64,
}

impl Default for WorldSettings {
    fn default() -> Self {
        WorldSettings {
            params: ChainParams::default(),
            watchers: 1,
            visibility_delay: crate::chain::DEFAULT_VISIBILITY_DELAY,
            funds: 1_000,
        }
    }
}

/// Several payments over one world, stepped together.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub world: World,
    pub payments: Vec<Payment>,
    pub settings: WorldSettings,
    shuffle: Option<ChaCha20Rng>,
    pub rejected_submissions: u64,
    /// Heights at which some chain's supply was not conserved.
    pub conservation_failures: Vec<u64>,
}

impl Scenario {
    pub fn new(
        configs: Vec<PaymentConfig>,
        settings: WorldSettings,
        rng: &mut ChaCha20Rng,
    ) -> Result<Self, ConfigError> {
        let mut ids: Vec<String> = Vec::new();
        for cfg in &configs {
            cfg.spec.validate(settings.visibility_delay)?;
            cfg.schedule.validate(&cfg.spec)?;
            for c in &cfg.spec.chains {
                if !ids.contains(&c.id) {
                    ids.push(c.id.clone());
                }
            }
        }
        let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let mut world = World::new(&id_refs, settings.params, settings.watchers, settings.visibility_delay);
        let mut payments = Vec::new();
        for (pid, cfg) in configs.into_iter().enumerate() {
            let chains: Vec<usize> = cfg
                .spec
                .chains
                .iter()
                .map(|c| world.index_of(&c.id).expect("registered"))
                .collect();
            for (j, party) in cfg.spec.parties.iter().enumerate() {
                for c in [j.checked_sub(1), (j < chains.len()).then_some(j)].into_iter().flatten() {
                    let chain = &mut world.chains[chains[c]];
                    if chain.balance(party) == 0 {
                        chain.fund(party, settings.funds);
                    }
                }
            }
            for order in &cfg.checks {
                let idx = *chains
                    .get(order.chain)
                    .ok_or_else(|| ConfigError::Invalid(format!("check on unknown chain {}", order.chain)))?;
                world.chains[idx].register(&order.rcv);
            }
            payments.push(Payment::new(pid as u64, cfg, chains, rng));
        }
        Ok(Scenario {
            world,
            payments,
            settings,
            shuffle: None,
            rejected_submissions: 0,
            conservation_failures: Vec::new(),
        })
    }

    /// Randomizes the order of same-block submissions on each chain.
    pub fn shuffle_submissions(&mut self, rng: ChaCha20Rng) {
        self.shuffle = Some(rng);
    }

    pub fn step(&mut self) {
        let mut per_chain: BTreeMap<usize, Vec<TxEnvelope>> = BTreeMap::new();
        for p in &mut self.payments {
            for (c, tx) in p.act(&self.world) {
                per_chain.entry(c).or_default().push(tx);
            }
        }
        for (c, mut txs) in per_chain {
            if let Some(rng) = &mut self.shuffle {
                txs.shuffle(rng);
            }
            for tx in txs {
                if self.world.chains[c].submit(tx).is_err() {
                    self.rejected_submissions += 1;
                }
            }
        }
        self.world.step();
        if !self.world.is_conserved() {
            self.conservation_failures.push(self.world.height());
        }
        for p in &mut self.payments {
            p.sample(&self.world);
        }
    }

    /// Height after which no agent has anything left to do.
    pub fn end_height(&self) -> u64 {
        let s = &self.settings;
        self.payments
            .iter()
            .map(|p| {
                let top = p.cfg.spec.chains.first().map_or(0, |c| c.timelock);
                let outage = p
                    .cfg
                    .schedule
                    .faults
                    .iter()
                    .filter_map(|f| f.duration)
                    .max()
                    .unwrap_or(0);
                top + outage + s.params.appeal_window + s.params.dispute_window + 4 * s.visibility_delay + 8
            })
            .max()
            .unwrap_or(0)
    }

    pub fn run(&mut self) {
        let end = self.end_height();
        self.run_until(end);
    }

    pub fn run_until(&mut self, height: u64) {
        while self.world.height() < height {
            self.step();
        }
    }

    pub fn reports(&self) -> Vec<PaymentReport> {
        self.payments.iter().map(|p| p.report(&self.world)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    pub(crate) fn walkthrough_spec() -> PathSpec {
        PathSpec {
            chains: vec![
                HopChain { id: "alpha".into(), drain_rate: 1, timelock: 40 },
                HopChain { id: "beta".into(), drain_rate: 2, timelock: 30 },
            ],
            parties: vec!["alice".into(), "bob".into(), "carol".into()],
            rates: vec![Rate { num: 2, den: 1 }],
            principal: 30,
            lock_delays: vec![0, 2],
            min_gap: 3,
        }
    }

    #[test]
    fn rate_parsing() {
        assert_eq!("2".parse::<Rate>().unwrap(), Rate { num: 2, den: 1 });
        assert_eq!("3/2".parse::<Rate>().unwrap().apply(5), 7);
        assert!("0".parse::<Rate>().is_err());
    }

    #[test]
    fn spec_validation() {
        let mut s = walkthrough_spec();
        s.lock_delays = vec![];
        assert!(s.validate(1).is_ok());
        s.chains[1].timelock = 38;
        assert!(s.validate(1).is_err());
        let mut s = walkthrough_spec();
        s.parties.pop();
        assert!(s.validate(1).is_err());
    }

    #[test]
    fn prepare_bundles_for_one_hop() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let chain = SecretChain::derive(1, &mut rng).unwrap();
        let bundles = run_prepare(&chain);
        assert_eq!(bundles.len(), 2);
        assert_eq!(bundles[0].proofs[0].0, CircuitKind::PrepareEndpoint);
        assert_eq!(bundles[1].proofs.len(), 1);
        assert_eq!(bundles[1].proofs[0].0, CircuitKind::PrepareIntermediary);
        assert_eq!(bundles[1].proofs[0].1.secret("offset"), Some(chain.offset(0)));
        assert!(bundles[1].refund_pair.is_none());
        assert!(bundles.iter().all(Bundle::verify));
    }

    #[test]
    fn tampered_prepare_aborts_before_locks() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut sc = Scenario::new(
            vec![PaymentConfig::new(walkthrough_spec(), Protocol::Ccn)],
            WorldSettings::default(),
            &mut rng,
        )
        .unwrap();
        let chain = sc.payments[0].secret_chain().unwrap().clone();
        let mut bundles = run_prepare(&chain);
        bundles[1].proofs[0].2.bytes[5] ^= 1;
        sc.payments[0].distribute(&chain, &bundles);
        sc.run_until(10);
        assert!(sc.payments[0].halted.as_deref().unwrap().starts_with("prepare"));
        assert!(sc.world.chains.iter().all(|c| c.escrows().count() == 0));
    }

    #[test]
    fn walkthrough_amounts() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let mut sc = Scenario::new(
            vec![PaymentConfig::new(walkthrough_spec(), Protocol::Ccn)],
            WorldSettings::default(),
            &mut rng,
        )
        .unwrap();
        sc.run();
        let r = &sc.reports()[0];
        assert_eq!(r.hops[0].locked, 30);
        assert_eq!(r.hops[1].locked, 56);
        assert_eq!(r.hops[0].confirmed, Some(27));
        assert_eq!(r.hops[1].confirmed, Some(54));
        assert_eq!(r.hops[1].credits.beneficiary, 54);
        assert_eq!(r.hops[0].credits.beneficiary, 27);
        assert_eq!(r.hops[0].credits.locker, 3);
        assert_eq!(r.hops[1].credits.locker, 2);
        assert!(r.reveal_order_ok && r.distinct_locks);
    }

    fn run(cfg: PaymentConfig, seed: u64) -> (Scenario, PaymentReport) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut sc = Scenario::new(vec![cfg], WorldSettings::default(), &mut rng).unwrap();
        sc.run();
        let r = sc.reports().remove(0);
        (sc, r)
    }

    fn with_fault(protocol: Protocol, party: &str, kind: FaultKind, trigger: Step, duration: Option<u64>) -> PaymentConfig {
        let mut cfg = PaymentConfig::new(walkthrough_spec(), protocol);
        cfg.schedule.faults.push(Fault { party: party.into(), kind, trigger, duration });
        cfg
    }

    #[test]
    fn walkthrough_heights() {
        let (_, r) = run(PaymentConfig::new(walkthrough_spec(), Protocol::Ccn), 7);
        assert_eq!(r.hops[1].reveal_height, Some(6));
        assert_eq!(r.hops[0].reveal_height, Some(7));
        assert!(r.hops.iter().all(|h| h.settled));
    }

    #[test]
    fn active_offline_at_lock_halts_and_refunds_in_full() {
        let (sc, r) = run(with_fault(Protocol::Ccn, "bob", FaultKind::Active, Step::Lock, None), 8);
        assert!(r.halted.unwrap().contains("bob"));
        assert!(r.hops[1].escrow.is_none());
        assert_eq!(r.hops[0].state, Some(EscrowState::Refund));
        assert_eq!(r.hops[0].credits.locker, 30);
        let series = &sc.payments[0].accessible["alice"];
        let early: Vec<u64> = series.iter().filter(|(h, _)| *h < 10).map(|(_, v)| *v).collect();
        assert!(early.windows(2).all(|w| w[1] > w[0]), "{early:?}");
    }

    #[test]
    fn receiver_offline_is_case_two() {
        let (_, r) = run(with_fault(Protocol::Ccn, "carol", FaultKind::Active, Step::Unlock, None), 9);
        assert_eq!(r.hops[1].credits.locker, 56);
        assert_eq!(r.hops[0].credits.locker, 30);
        assert!(r.hops.iter().all(|h| h.settled && h.reveal_height.is_none()));
    }

    #[test]
    fn passive_offline_intermediary_gets_assisted_refund() {
        let (_, r) = run(with_fault(Protocol::Ccn, "bob", FaultKind::Passive, Step::Unlock, Some(60)), 10);
        assert_eq!(r.hops[1].credits.beneficiary, 54);
        assert_eq!(r.hops[0].credits.beneficiary, 27);
        assert_eq!(r.hops[0].credits.locker, 3);
        assert_eq!(r.hops[0].state, Some(EscrowState::Refund));
    }

    #[test]
    fn adversarial_refund_is_appealed() {
        let mut cfg = with_fault(Protocol::Ccn, "bob", FaultKind::Passive, Step::Unlock, Some(60));
        cfg.strategies.insert("alice".into(), Strategy::Refund2);
        let (_, r) = run(cfg, 11);
        assert!(r.hops[0].appealed_by.as_deref().unwrap().starts_with("miner-"));
        assert_eq!(r.hops[0].credits.locker, 0);
        assert_eq!(r.hops[0].credits.appellant, 30);
    }

    #[test]
    fn three_hops_unlock_in_descending_order() {
        let spec = PathSpec {
            chains: ["a", "b", "c", "d"]
                .iter()
                .zip([60, 50, 40, 30])
                .map(|(id, t)| HopChain { id: (*id).into(), drain_rate: 1, timelock: t })
                .collect(),
            parties: ["alice", "bob", "carol", "dave", "emma"].iter().map(|p| (*p).into()).collect(),
            rates: vec![Rate::ONE; 3],
            principal: 40,
            lock_delays: vec![],
            min_gap: 3,
        };
        let (sc, r) = run(PaymentConfig::new(spec, Protocol::Ccn), 12);
        assert!(r.halted.is_none());
        let heights: Vec<u64> = r.hops.iter().map(|h| h.reveal_height.unwrap()).collect();
        assert!(heights.windows(2).all(|w| w[0] > w[1]), "{heights:?}");
        assert!(r.reveal_order_ok && r.distinct_locks);
        assert_eq!(r.hops.iter().filter(|h| h.credits.beneficiary > 0).count(), 4);
        assert!(sc.world.is_conserved());
    }

    #[test]
    fn htlc_baseline_locks_full_amounts() {
        let (_, r) = run(PaymentConfig::new(walkthrough_spec(), Protocol::Htlc), 13);
        assert_eq!(r.hops[0].locked, 30);
        assert_eq!(r.hops[1].locked, 60);
        assert_eq!(r.hops[1].credits.beneficiary, 60);
        assert_eq!(r.hops[0].credits.beneficiary, 30);
    }

    #[test]
    fn htlc_active_offline_freezes_until_timeout() {
        let (sc, r) = run(with_fault(Protocol::Htlc, "bob", FaultKind::Active, Step::Lock, None), 14);
        assert_eq!(r.hops[0].credits.locker, 30);
        for (h, v) in &sc.payments[0].accessible["alice"] {
            if *h <= 40 {
                assert_eq!(*v, 0, "height {h}");
            } else {
                assert_eq!(*v, 30, "height {h}");
            }
        }
    }

    #[test]
    fn htlc_passive_offline_loses_entitlement() {
        let (_, r) = run(with_fault(Protocol::Htlc, "bob", FaultKind::Passive, Step::Unlock, Some(60)), 15);
        assert_eq!(r.hops[1].credits.beneficiary, 60);
        assert_eq!(r.hops[0].credits.beneficiary, 0);
        assert_eq!(r.hops[0].credits.locker, 30);
    }

    #[test]
    fn channel_mode_folds_receipts_into_locks() {
        let mut cfg = PaymentConfig::new(walkthrough_spec(), Protocol::Ccn);
        cfg.channels = true;
        cfg.channel_deposit = 200;
        cfg.interactions = 10;
        cfg.background = vec![vec![5, 5], vec![3]];
        let (sc, r) = run(cfg, 16);
        assert!(r.halted.is_none(), "{:?}", r.halted);
        assert_eq!(r.hops[0].locked, 40);
        assert_eq!((r.hops[1].locked - 3) % 2, 0);
        assert!(r.hops.iter().all(|h| h.settled));
        for c in &sc.world.chains {
            let counts = c.executed_counts();
            assert_eq!(counts.get(&crate::chain::TxKind::ChannelOpen), Some(&1));
            assert_eq!(counts.get(&crate::chain::TxKind::ChannelClose), Some(&1));
            assert!(c.channels().all(|ch| ch.status == ChannelStatus::Closed));
        }
        assert!(sc.conservation_failures.is_empty());
    }

    #[test]
    fn checks_respect_confirmed_reserve() {
        let mut cfg = PaymentConfig::new(walkthrough_spec(), Protocol::Ccn);
        cfg.checks = vec![
            CheckOrder { chain: 0, at: 3, rcv: "shop".into(), amount: 2 },
            CheckOrder { chain: 0, at: 6, rcv: "shop".into(), amount: 100 },
        ];
        let (sc, r) = run(cfg, 17);
        assert_eq!(r.hops[0].credits.commitments, 2);
        assert_eq!(r.hops[0].credits.beneficiary, 27);
        assert_eq!(r.hops[0].credits.locker, 1);
        assert_eq!(sc.world.chains[0].balance("shop"), 2);
    }
}
