//! Deterministic simulated blockchains.
//!
//! One block is one time unit. A transaction submitted while a chain sits at
//! height `h` executes at `h + 1`, after every escrow has ticked to the new
//! height and every expired channel close has paid out. Execution is a pure
//! function of the prior state and the mempool, so identical inputs give
//! identical event logs.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelId, ChannelRecord, ChannelStatus, SignedState, DEFAULT_DISPUTE_WINDOW};
use crate::crypto::{sha256, HashLock, KeyPair, Proof, PublicKey, Secret256, Statement};
use crate::error::{ContractError, TxError};
use crate::escrow::{Address, Escrow, EscrowId, EscrowMode, LockParams, Payout, PayoutRole};

pub type TxId = u64;

pub const DEFAULT_APPEAL_WINDOW: u64 = 10;
pub const DEFAULT_VISIBILITY_DELAY: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxKind {
    Lock,
    Check,
    Unlock,
    Refund1,
    Refund2,
    Finalize,
    Refund3,
    Appeal,
    HtlcClaim,
    ChannelOpen,
    ChannelClose,
    ChannelDispute,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum TxPayload {
    Lock(LockParams),
    Check {
        escrow: EscrowId,
        rcv: Address,
        amount: u64,
    },
    Unlock {
        escrow: EscrowId,
        statement: Statement,
        proof: Proof,
    },
    Refund1 {
        escrow: EscrowId,
    },
    Refund2 {
        escrow: EscrowId,
        secret_and: Secret256,
        offset: Secret256,
    },
    Finalize {
        escrow: EscrowId,
    },
    Refund3 {
        escrow: EscrowId,
        statement: Statement,
        proof: Proof,
    },
    Appeal {
        escrow: EscrowId,
        secret: Secret256,
    },
    HtlcClaim {
        escrow: EscrowId,
        secret: Secret256,
    },
    ChannelOpen {
        counterparty: Address,
        pk_a: PublicKey,
        pk_b: PublicKey,
        deposit_a: u64,
        deposit_b: u64,
    },
    ChannelClose {
        channel: ChannelId,
        state: SignedState,
    },
    ChannelDispute {
        channel: ChannelId,
        state: SignedState,
    },
}

impl TxPayload {
    pub fn kind(&self) -> TxKind {
        match self {
            TxPayload::Lock(_) => TxKind::Lock,
            TxPayload::Check { .. } => TxKind::Check,
            TxPayload::Unlock { .. } => TxKind::Unlock,
            TxPayload::Refund1 { .. } => TxKind::Refund1,
            TxPayload::Refund2 { .. } => TxKind::Refund2,
            TxPayload::Finalize { .. } => TxKind::Finalize,
            TxPayload::Refund3 { .. } => TxKind::Refund3,
            TxPayload::Appeal { .. } => TxKind::Appeal,
            TxPayload::HtlcClaim { .. } => TxKind::HtlcClaim,
            TxPayload::ChannelOpen { .. } => TxKind::ChannelOpen,
            TxPayload::ChannelClose { .. } => TxKind::ChannelClose,
            TxPayload::ChannelDispute { .. } => TxKind::ChannelDispute,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxEnvelope {
    pub sender: Address,
    pub submitted_at: u64,
    pub tx: TxPayload,
}

impl TxEnvelope {
    pub fn new(sender: &str, tx: TxPayload) -> Self {
        TxEnvelope {
            sender: sender.to_string(),
            submitted_at: 0,
            tx,
        }
    }

    pub fn kind(&self) -> TxKind {
        self.tx.kind()
    }

    /// Parses a wire envelope. Unknown kinds and payloads that do not match
    /// their kind are schema errors.
    pub fn from_json(s: &str) -> Result<Self, TxError> {
        serde_json::from_str(s).map_err(|e| TxError::Schema(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subject {
    Escrow(EscrowId),
    Channel(ChannelId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefundPath {
    /// Remainder after an unlock, or a timed-out terminal escrow.
    AfterUnlock,
    /// Appeal window expired without a successful appeal.
    Finalized,
    /// Locker settled on behalf of the beneficiary.
    Assisted,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "label", content = "data")]
pub enum EventLabel {
    Locked {
        locker: Address,
        beneficiary: Address,
        amount: u64,
        primary_lock: HashLock,
        secondary_lock: Option<HashLock>,
        drain_rate: u64,
        timelock: u64,
        mode: EscrowMode,
    },
    CommitmentIssued {
        rcv: Address,
        amount: u64,
        index: usize,
    },
    Unlocked {
        secret: Secret256,
        amount: u64,
    },
    HtlcClaimed {
        secret: Secret256,
        amount: u64,
    },
    Refund2Posted {
        secret_and: Secret256,
        offset: Secret256,
        appeal_deadline: u64,
    },
    Appealed {
        appellant: Address,
        secret: Secret256,
        seized: u64,
    },
    Refunded {
        path: RefundPath,
        secret: Option<Secret256>,
        beneficiary_credit: u64,
        commitments_paid: u64,
        locker_credit: u64,
    },
    ChannelOpened {
        party_a: Address,
        party_b: Address,
        deposit_a: u64,
        deposit_b: u64,
    },
    ChannelClosing {
        seq: u64,
        deadline: u64,
    },
    ChannelDisputed {
        seq: u64,
        deadline: u64,
    },
    StateClosed {
        balance_a: u64,
        balance_b: u64,
    },
}

impl EventLabel {
    pub fn name(&self) -> &'static str {
        match self {
            EventLabel::Locked { .. } => "Locked",
            EventLabel::CommitmentIssued { .. } => "CommitmentIssued",
            EventLabel::Unlocked { .. } => "Unlocked",
            EventLabel::HtlcClaimed { .. } => "HtlcClaimed",
            EventLabel::Refund2Posted { .. } => "Refund2Posted",
            EventLabel::Appealed { .. } => "Appealed",
            EventLabel::Refunded { .. } => "Refunded",
            EventLabel::ChannelOpened { .. } => "ChannelOpened",
            EventLabel::ChannelClosing { .. } => "ChannelClosing",
            EventLabel::ChannelDisputed { .. } => "ChannelDisputed",
            EventLabel::StateClosed { .. } => "StateClosed",
        }
    }

    /// The primary-lock preimage this event makes public, if any.
    pub fn revealed_secret(&self) -> Option<Secret256> {
        match self {
            EventLabel::Unlocked { secret, .. }
            | EventLabel::HtlcClaimed { secret, .. }
            | EventLabel::Appealed { secret, .. } => Some(*secret),
            EventLabel::Refunded { secret, .. } => *secret,
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub chain_id: String,
    pub height: u64,
    pub tx: Option<TxId>,
    pub subject: Subject,
    pub label: EventLabel,
}

/// One line of the JSON-lines trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub protocol: String,
    pub chain_id: String,
    pub height: u64,
    pub subject: Subject,
    pub label: String,
    /// Hex of the canonical JSON of the event data.
    pub payload: String,
}

impl Event {
    pub fn to_record(&self, protocol: &str) -> TraceRecord {
        let value = serde_json::to_value(&self.label).expect("event serializes");
        let data = value.get("data").cloned().unwrap_or(serde_json::Value::Null);
        TraceRecord {
            protocol: protocol.to_string(),
            chain_id: self.chain_id.clone(),
            height: self.height,
            subject: self.subject,
            label: self.label.name().to_string(),
            payload: hex::encode(serde_json::to_vec(&data).expect("data serializes")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TxOutcome {
    Pending,
    Executed { height: u64 },
    Rejected { height: u64, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainParams {
    pub appeal_window: u64,
    pub dispute_window: u64,
}

impl Default for ChainParams {
    fn default() -> Self {
        ChainParams {
            appeal_window: DEFAULT_APPEAL_WINDOW,
            dispute_window: DEFAULT_DISPUTE_WINDOW,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimChain {
    pub id: String,
    pub height: u64,
    pub params: ChainParams,
    accounts: BTreeMap<Address, u64>,
    escrows: BTreeMap<EscrowId, Escrow>,
    channels: BTreeMap<ChannelId, ChannelRecord>,
    mempool: VecDeque<(TxId, TxEnvelope)>,
    events: Vec<Event>,
    outcomes: BTreeMap<TxId, TxOutcome>,
    executed: BTreeMap<TxKind, u64>,
    contract_key: KeyPair,
    supply: u64,
    next_tx: TxId,
    next_escrow: EscrowId,
    next_channel: ChannelId,
}

impl SimChain {
    pub fn new(id: &str, params: ChainParams) -> Self {
        SimChain {
            id: id.to_string(),
            height: 0,
            params,
            accounts: BTreeMap::new(),
            escrows: BTreeMap::new(),
            channels: BTreeMap::new(),
            mempool: VecDeque::new(),
            events: Vec::new(),
            outcomes: BTreeMap::new(),
            executed: BTreeMap::new(),
            contract_key: KeyPair::from_seed(sha256(format!("contract:{id}").as_bytes())),
            supply: 0,
            next_tx: 0,
            next_escrow: 0,
            next_channel: 0,
        }
    }

    /// Mints `amount` into `addr` (genesis allocation).
    pub fn fund(&mut self, addr: &str, amount: u64) {
        *self.accounts.entry(addr.to_string()).or_default() += amount;
        self.supply += amount;
    }

    pub fn register(&mut self, addr: &str) {
        self.accounts.entry(addr.to_string()).or_default();
    }

    pub fn balance(&self, addr: &str) -> u64 {
        self.accounts.get(addr).copied().unwrap_or(0)
    }

    pub fn accounts(&self) -> &BTreeMap<Address, u64> {
        &self.accounts
    }

    pub fn supply(&self) -> u64 {
        self.supply
    }

    pub fn contract_pk(&self) -> PublicKey {
        self.contract_key.public()
    }

    pub fn escrow(&self, id: EscrowId) -> Option<&Escrow> {
        self.escrows.get(&id)
    }

    pub fn escrows(&self) -> impl Iterator<Item = &Escrow> {
        self.escrows.values()
    }

    pub fn channel(&self, id: ChannelId) -> Option<&ChannelRecord> {
        self.channels.get(&id)
    }

    pub fn channels(&self) -> impl Iterator<Item = &ChannelRecord> {
        self.channels.values()
    }

    pub fn outcome(&self, id: TxId) -> Option<&TxOutcome> {
        self.outcomes.get(&id)
    }

    pub fn executed_counts(&self) -> &BTreeMap<TxKind, u64> {
        &self.executed
    }

    pub fn executed_total(&self) -> u64 {
        self.executed.values().sum()
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Public event suffix starting at `from_height`; empty for future heights.
    pub fn read_events(&self, from_height: u64) -> &[Event] {
        if from_height > self.height {
            return &[];
        }
        let start = self.events.partition_point(|e| e.height < from_height);
        &self.events[start..]
    }

    /// Balances plus everything held by escrows and open channels.
    pub fn holdings(&self) -> u64 {
        let accounts: u64 = self.accounts.values().sum();
        let escrows: u64 = self.escrows.values().map(Escrow::held).sum();
        let channels: u64 = self
            .channels
            .values()
            .filter(|c| c.status != ChannelStatus::Closed)
            .map(ChannelRecord::deposits)
            .sum();
        accounts + escrows + channels
    }

    pub fn is_conserved(&self) -> bool {
        self.holdings() == self.supply
    }

    pub fn submit(&mut self, mut tx: TxEnvelope) -> Result<TxId, TxError> {
        let Some(&balance) = self.accounts.get(&tx.sender) else {
            return Err(TxError::UnknownSender(tx.sender));
        };
        match &tx.tx {
            TxPayload::Lock(p) if p.amount > balance => {
                return Err(ContractError::InsufficientFunds {
                    have: balance,
                    need: p.amount,
                }
                .into())
            }
            TxPayload::ChannelOpen {
                counterparty,
                deposit_a,
                deposit_b,
                ..
            } => {
                if *deposit_a > balance {
                    return Err(ContractError::InsufficientFunds {
                        have: balance,
                        need: *deposit_a,
                    }
                    .into());
                }
                let other = self.balance(counterparty);
                if *deposit_b > other {
                    return Err(ContractError::InsufficientFunds {
                        have: other,
                        need: *deposit_b,
                    }
                    .into());
                }
            }
            _ => {}
        }
        tx.submitted_at = self.height;
        let id = self.next_tx;
        self.next_tx += 1;
        self.outcomes.insert(id, TxOutcome::Pending);
        self.mempool.push_back((id, tx));
        Ok(id)
    }

    pub fn submit_json(&mut self, s: &str) -> Result<TxId, TxError> {
        self.submit(TxEnvelope::from_json(s)?)
    }

    pub fn advance(&mut self, blocks: u64) -> Vec<Event> {
        let start = self.events.len();
        for _ in 0..blocks {
            self.step();
        }
        self.events[start..].to_vec()
    }

    /// Produces one block.
    pub fn step(&mut self) {
        self.height += 1;
        let h = self.height;
        for e in self.escrows.values_mut() {
            e.tick(h);
        }
        let ids: Vec<ChannelId> = self.channels.keys().copied().collect();
        for id in ids {
            let rec = self.channels.get_mut(&id).expect("listed");
            if let Some(out) = rec.tick(h) {
                let st = rec.pending.as_ref().expect("closed state").state.clone();
                self.credit(&out);
                self.emit(
                    None,
                    Subject::Channel(id),
                    EventLabel::StateClosed {
                        balance_a: st.balance_a,
                        balance_b: st.balance_b,
                    },
                );
            }
        }
        while let Some((id, tx)) = self.mempool.pop_front() {
            let kind = tx.kind();
            let outcome = match self.execute(id, tx) {
                Ok(()) => {
                    *self.executed.entry(kind).or_default() += 1;
                    TxOutcome::Executed { height: h }
                }
                Err(e) => TxOutcome::Rejected {
                    height: h,
                    reason: e.to_string(),
                },
            };
            self.outcomes.insert(id, outcome);
        }
        debug_assert!(self.is_conserved(), "supply not conserved on {}", self.id);
    }

    fn emit(&mut self, tx: Option<TxId>, subject: Subject, label: EventLabel) {
        self.events.push(Event {
            chain_id: self.id.clone(),
            height: self.height,
            tx,
            subject,
            label,
        });
    }

    fn credit(&mut self, payouts: &[Payout]) {
        for p in payouts {
            *self.accounts.entry(p.to.clone()).or_default() += p.amount;
        }
    }

    fn debit(&mut self, addr: &str, amount: u64) -> Result<(), ContractError> {
        let bal = self.accounts.get_mut(addr).ok_or(ContractError::Unauthorized)?;
        if *bal < amount {
            return Err(ContractError::InsufficientFunds {
                have: *bal,
                need: amount,
            });
        }
        *bal -= amount;
        Ok(())
    }

    fn escrow_mut(&mut self, id: EscrowId) -> Result<&mut Escrow, ContractError> {
        self.escrows.get_mut(&id).ok_or(ContractError::UnknownEscrow(id))
    }

    fn channel_mut(&mut self, id: ChannelId) -> Result<&mut ChannelRecord, ContractError> {
        self.channels.get_mut(&id).ok_or(ContractError::UnknownChannel(id))
    }

    fn execute(&mut self, id: TxId, env: TxEnvelope) -> Result<(), ContractError> {
        let h = self.height;
        let who = env.sender;
        let tx = Some(id);
        match env.tx {
            TxPayload::Lock(p) => {
                if p.locker != who {
                    return Err(ContractError::Unauthorized);
                }
                let eid = self.next_escrow;
                let escrow = Escrow::open(eid, p, h)?;
                self.debit(&who, escrow.locked)?;
                self.next_escrow += 1;
                let label = EventLabel::Locked {
                    locker: escrow.locker.clone(),
                    beneficiary: escrow.beneficiary.clone(),
                    amount: escrow.locked,
                    primary_lock: escrow.primary_lock,
                    secondary_lock: escrow.secondary_lock,
                    drain_rate: escrow.drain_rate,
                    timelock: escrow.timelock,
                    mode: escrow.mode,
                };
                self.escrows.insert(eid, escrow);
                self.emit(tx, Subject::Escrow(eid), label);
            }
            TxPayload::Check { escrow, rcv, amount } => {
                let chain = self.id.clone();
                let key = self.contract_key.clone();
                let cmt = self
                    .escrow_mut(escrow)?
                    .check(&who, &rcv, amount, h, &chain, &key)?;
                self.emit(
                    tx,
                    Subject::Escrow(escrow),
                    EventLabel::CommitmentIssued {
                        rcv,
                        amount,
                        index: cmt.index,
                    },
                );
            }
            TxPayload::Unlock {
                escrow,
                statement,
                proof,
            } => {
                let out = self.escrow_mut(escrow)?.unlock(&who, &statement, &proof, h)?;
                self.credit(&out);
                let secret = statement.secret("secret").expect("verified statement");
                self.emit(
                    tx,
                    Subject::Escrow(escrow),
                    EventLabel::Unlocked {
                        secret,
                        amount: out[0].amount,
                    },
                );
            }
            TxPayload::HtlcClaim { escrow, secret } => {
                let out = self.escrow_mut(escrow)?.htlc_claim(&who, &secret, h)?;
                self.credit(&out);
                self.emit(
                    tx,
                    Subject::Escrow(escrow),
                    EventLabel::HtlcClaimed {
                        secret,
                        amount: out[0].amount,
                    },
                );
            }
            TxPayload::Refund1 { escrow } => {
                let out = self.escrow_mut(escrow)?.refund1(&who, h)?;
                self.credit(&out);
                self.emit_refund(tx, escrow, RefundPath::AfterUnlock, None, &out);
            }
            TxPayload::Refund2 {
                escrow,
                secret_and,
                offset,
            } => {
                let window = self.params.appeal_window;
                let e = self.escrow_mut(escrow)?;
                e.refund2(&who, &secret_and, &offset, h, window)?;
                let appeal_deadline = e.appeal_deadline.expect("set by refund2");
                self.emit(
                    tx,
                    Subject::Escrow(escrow),
                    EventLabel::Refund2Posted {
                        secret_and,
                        offset,
                        appeal_deadline,
                    },
                );
            }
            TxPayload::Finalize { escrow } => {
                let out = self.escrow_mut(escrow)?.finalize(&who, h)?;
                self.credit(&out);
                self.emit_refund(tx, escrow, RefundPath::Finalized, None, &out);
            }
            TxPayload::Refund3 {
                escrow,
                statement,
                proof,
            } => {
                let out = self
                    .escrow_mut(escrow)?
                    .refund3(&who, &statement, &proof, h)?;
                self.credit(&out);
                let secret = statement.secret("secret");
                self.emit_refund(tx, escrow, RefundPath::Assisted, secret, &out);
            }
            TxPayload::Appeal { escrow, secret } => {
                let out = self.escrow_mut(escrow)?.appeal(&who, &secret, h)?;
                self.credit(&out);
                let seized = out
                    .iter()
                    .filter(|p| p.role == PayoutRole::Appellant)
                    .map(|p| p.amount)
                    .sum();
                self.emit(
                    tx,
                    Subject::Escrow(escrow),
                    EventLabel::Appealed {
                        appellant: who,
                        secret,
                        seized,
                    },
                );
            }
            TxPayload::ChannelOpen {
                counterparty,
                pk_a,
                pk_b,
                deposit_a,
                deposit_b,
            } => {
                if !self.accounts.contains_key(&counterparty) || counterparty == who {
                    return Err(ContractError::Unauthorized);
                }
                let other = self.balance(&counterparty);
                if other < deposit_b {
                    return Err(ContractError::InsufficientFunds {
                        have: other,
                        need: deposit_b,
                    });
                }
                self.debit(&who, deposit_a)?;
                self.debit(&counterparty, deposit_b)?;
                let cid = self.next_channel;
                self.next_channel += 1;
                self.channels.insert(
                    cid,
                    ChannelRecord {
                        id: cid,
                        party_a: who.clone(),
                        party_b: counterparty.clone(),
                        pk_a,
                        pk_b,
                        deposit_a,
                        deposit_b,
                        status: ChannelStatus::Open,
                        pending: None,
                        close_deadline: None,
                        dispute_window: self.params.dispute_window,
                    },
                );
                self.emit(
                    tx,
                    Subject::Channel(cid),
                    EventLabel::ChannelOpened {
                        party_a: who,
                        party_b: counterparty,
                        deposit_a,
                        deposit_b,
                    },
                );
            }
            TxPayload::ChannelClose { channel, state } => {
                let seq = state.state.seq;
                let rec = self.channel_mut(channel)?;
                rec.close(&who, state, h)?;
                let deadline = rec.close_deadline.expect("set by close");
                self.emit(
                    tx,
                    Subject::Channel(channel),
                    EventLabel::ChannelClosing { seq, deadline },
                );
            }
            TxPayload::ChannelDispute { channel, state } => {
                let seq = state.state.seq;
                let rec = self.channel_mut(channel)?;
                rec.dispute(&who, state, h)?;
                let deadline = rec.close_deadline.expect("set by dispute");
                self.emit(
                    tx,
                    Subject::Channel(channel),
                    EventLabel::ChannelDisputed { seq, deadline },
                );
            }
        }
        Ok(())
    }

    fn emit_refund(
        &mut self,
        tx: Option<TxId>,
        escrow: EscrowId,
        path: RefundPath,
        secret: Option<Secret256>,
        out: &[Payout],
    ) {
        let sum = |role| {
            out.iter()
                .filter(|p| p.role == role)
                .map(|p| p.amount)
                .sum::<u64>()
        };
        let label = EventLabel::Refunded {
            path,
            secret,
            beneficiary_credit: sum(PayoutRole::Beneficiary),
            commitments_paid: sum(PayoutRole::Commitment),
            locker_credit: sum(PayoutRole::Locker),
        };
        self.emit(tx, Subject::Escrow(escrow), label);
    }
}

/// A miner that punishes fraudulent secondary-lock refunds on its home chain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Watcher {
    pub home: usize,
    pub address: Address,
    pub observed: BTreeSet<Secret256>,
    appealed: BTreeSet<EscrowId>,
}

impl Watcher {
    pub fn new(home: usize, address: &str) -> Self {
        Watcher {
            home,
            address: address.to_string(),
            observed: BTreeSet::new(),
            appealed: BTreeSet::new(),
        }
    }
}

/// Reads every chain's public events up to `horizon` and returns the appeals
/// the watcher would submit on its home chain.
pub fn watcher_scan(w: &mut Watcher, chains: &[SimChain], horizon: u64) -> Vec<TxEnvelope> {
    for chain in chains {
        for e in chain.events().iter().take_while(|e| e.height <= horizon) {
            if let Some(s) = e.label.revealed_secret() {
                w.observed.insert(s);
            }
        }
    }
    let home = &chains[w.home];
    let mut appeals = Vec::new();
    for e in home.events().iter().take_while(|e| e.height <= horizon) {
        let (Subject::Escrow(id), EventLabel::Refund2Posted { offset, appeal_deadline, .. }) =
            (e.subject, &e.label)
        else {
            continue;
        };
        if w.appealed.contains(&id) || home.height + 1 > *appeal_deadline {
            continue;
        }
        let Some(escrow) = home.escrow(id) else { continue };
        let target = escrow.primary_lock;
        let found = w.observed.iter().find_map(|s| {
            [*s ^ *offset, *s]
                .into_iter()
                .find(|c| HashLock::of_secret(c) == target)
        });
        if let Some(secret) = found {
            w.appealed.insert(id);
            appeals.push(TxEnvelope::new(
                &w.address,
                TxPayload::Appeal { escrow: id, secret },
            ));
        }
    }
    appeals
}

/// A set of chains advanced in lockstep, plus their watchers.
#[derive(Clone, Debug)]
pub struct World {
    pub chains: Vec<SimChain>,
    pub watchers: Vec<Watcher>,
    pub visibility_delay: u64,
}

impl World {
    pub fn new(
        ids: &[&str],
        params: ChainParams,
        watchers_per_chain: usize,
        visibility_delay: u64,
    ) -> Self {
        let mut chains: Vec<SimChain> = ids.iter().map(|id| SimChain::new(id, params)).collect();
        let mut watchers = Vec::new();
        for (home, chain) in chains.iter_mut().enumerate() {
            for k in 0..watchers_per_chain {
                let addr = format!("miner-{}-{k}", chain.id);
                chain.register(&addr);
                watchers.push(Watcher::new(home, &addr));
            }
        }
        World {
            chains,
            watchers,
            visibility_delay: visibility_delay.max(1),
        }
    }

    pub fn height(&self) -> u64 {
        self.chains.first().map_or(0, |c| c.height)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.chains.iter().position(|c| c.id == id)
    }

    /// Latest event height an actor can react to now. With delay `d`, a
    /// reaction to an event at height `h` executes no earlier than `h + d`.
    pub fn horizon(&self) -> u64 {
        (self.height() + 1).saturating_sub(self.visibility_delay)
    }

    /// Public events of `chain` visible to actors right now.
    pub fn visible_events(&self, chain: usize) -> impl Iterator<Item = &Event> {
        let horizon = self.horizon();
        self.chains[chain]
            .events()
            .iter()
            .take_while(move |e| e.height <= horizon)
    }

    /// Advances every chain by one block, round-robin, then lets watchers react.
    pub fn step(&mut self) {
        for c in &mut self.chains {
            c.step();
        }
        self.run_watchers();
    }

    pub fn run_watchers(&mut self) {
        let horizon = self.horizon();
        let mut submissions = Vec::new();
        for w in &mut self.watchers {
            for tx in watcher_scan(w, &self.chains, horizon) {
                submissions.push((w.home, tx));
            }
        }
        for (home, tx) in submissions {
            self.chains[home]
                .submit(tx)
                .expect("watcher accounts are registered");
        }
    }

    pub fn is_conserved(&self) -> bool {
        self.chains.iter().all(SimChain::is_conserved)
    }

    /// Every event of every chain, ordered by height then chain.
    pub fn trace(&self, protocol: &str) -> Vec<TraceRecord> {
        let mut all: Vec<(u64, usize, usize, &Event)> = Vec::new();
        for (ci, c) in self.chains.iter().enumerate() {
            for (ei, e) in c.events().iter().enumerate() {
                all.push((e.height, ci, ei, e));
            }
        }
        all.sort_by_key(|(h, ci, ei, _)| (*h, *ci, *ei));
        all.into_iter().map(|(_, _, _, e)| e.to_record(protocol)).collect()
    }

    pub fn trace_jsonl(&self, protocol: &str) -> String {
        let mut out = String::new();
        for r in self.trace(protocol) {
            out.push_str(&serde_json::to_string(&r).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}
