//! Bilateral payment channels.
//!
//! [`Channel`] is the off-chain side: deposits, signed receipts and
//! co-signed sequence-numbered states. [`ChannelRecord`] is what the host
//! chain keeps: the deposits and a pending close that can be superseded by a
//! higher-sequence state until the dispute window ends.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crypto::{sha256, verify_sig, KeyPair, PublicKey, Signature};
use crate::error::ContractError;
use crate::escrow::{Address, Payout, PayoutRole};

pub type ChannelId = u64;

pub const DEFAULT_DISPUTE_WINDOW: u64 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceiptKind {
    IntraChain,
    CrossChain,
    /// Reverses the receipts of one path once an escrow settles them.
    Fold,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ChannelStatus {
    Open,
    Closing,
    Closed,
}

impl fmt::Display for ChannelStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ChannelStatus::Open => "OPEN",
            ChannelStatus::Closing => "CLOSING",
            ChannelStatus::Closed => "CLOSED",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub channel: ChannelId,
    pub kind: ReceiptKind,
    pub snd: Address,
    pub rcv: Address,
    pub amount: u64,
    pub seq: u64,
    pub path_id: Option<u64>,
    pub signature: Signature,
}

#[derive(Serialize)]
struct ReceiptBody<'a> {
    channel: ChannelId,
    kind: ReceiptKind,
    snd: &'a str,
    rcv: &'a str,
    amount: u64,
    seq: u64,
    path_id: Option<u64>,
}

impl Receipt {
    #[allow(clippy::too_many_arguments)]
    pub fn signed(
        channel: ChannelId,
        kind: ReceiptKind,
        snd: &str,
        rcv: &str,
        amount: u64,
        seq: u64,
        path_id: Option<u64>,
        key: &KeyPair,
    ) -> Receipt {
        let mut r = Receipt {
            channel,
            kind,
            snd: snd.to_string(),
            rcv: rcv.to_string(),
            amount,
            seq,
            path_id,
            signature: Signature(Vec::new()),
        };
        r.signature = key.sign(&r.digest());
        r
    }

    pub fn digest(&self) -> [u8; 32] {
        let body = ReceiptBody {
            channel: self.channel,
            kind: self.kind,
            snd: &self.snd,
            rcv: &self.rcv,
            amount: self.amount,
            seq: self.seq,
            path_id: self.path_id,
        };
        sha256(&serde_json::to_vec(&body).expect("receipt serializes"))
    }

    pub fn verify(&self, pk: &PublicKey) -> bool {
        verify_sig(pk, &self.digest(), &self.signature)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelState {
    pub channel: ChannelId,
    pub seq: u64,
    pub balance_a: u64,
    pub balance_b: u64,
}

impl ChannelState {
    pub fn digest(&self) -> [u8; 32] {
        sha256(&serde_json::to_vec(self).expect("state serializes"))
    }
}

/// A channel state carrying both parties' signatures.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedState {
    pub state: ChannelState,
    pub sig_a: Option<Signature>,
    pub sig_b: Option<Signature>,
}

impl SignedState {
    pub fn cosign(state: ChannelState, key_a: &KeyPair, key_b: &KeyPair) -> SignedState {
        let d = state.digest();
        SignedState {
            sig_a: Some(key_a.sign(&d)),
            sig_b: Some(key_b.sign(&d)),
            state,
        }
    }

    pub fn verify(&self, pk_a: &PublicKey, pk_b: &PublicKey) -> bool {
        let d = self.state.digest();
        match (&self.sig_a, &self.sig_b) {
            (Some(a), Some(b)) => verify_sig(pk_a, &d, a) && verify_sig(pk_b, &d, b),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channel {
    pub id: ChannelId,
    pub chain_id: String,
    pub party_a: Address,
    pub party_b: Address,
    pub pk_a: PublicKey,
    pub pk_b: PublicKey,
    pub deposit_a: u64,
    pub deposit_b: u64,
    pub balance_a: u64,
    pub balance_b: u64,
    pub seq: u64,
    pub receipts: Vec<Receipt>,
    pub latest: SignedState,
    pub status: ChannelStatus,
}

impl Channel {
    pub fn open(
        id: ChannelId,
        chain_id: &str,
        (party_a, key_a, deposit_a): (&str, &KeyPair, u64),
        (party_b, key_b, deposit_b): (&str, &KeyPair, u64),
    ) -> Channel {
        let state = ChannelState {
            channel: id,
            seq: 0,
            balance_a: deposit_a,
            balance_b: deposit_b,
        };
        Channel {
            id,
            chain_id: chain_id.to_string(),
            party_a: party_a.to_string(),
            party_b: party_b.to_string(),
            pk_a: key_a.public(),
            pk_b: key_b.public(),
            deposit_a,
            deposit_b,
            balance_a: deposit_a,
            balance_b: deposit_b,
            seq: 0,
            receipts: Vec::new(),
            latest: SignedState::cosign(state, key_a, key_b),
            status: ChannelStatus::Open,
        }
    }

    pub fn state(&self) -> ChannelState {
        ChannelState {
            channel: self.id,
            seq: self.seq,
            balance_a: self.balance_a,
            balance_b: self.balance_b,
        }
    }

    /// Applies a sender-signed receipt and co-signs the resulting state.
    pub fn pay_receipt(
        &mut self,
        receipt: Receipt,
        key_a: &KeyPair,
        key_b: &KeyPair,
    ) -> Result<&SignedState, ContractError> {
        if self.status != ChannelStatus::Open {
            return Err(ContractError::WrongState(self.status.to_string()));
        }
        if receipt.channel != self.id {
            return Err(ContractError::UnknownChannel(receipt.channel));
        }
        if receipt.seq != self.seq + 1 {
            return Err(ContractError::StaleSeq {
                got: receipt.seq,
                current: self.seq,
            });
        }
        let a_pays = if receipt.snd == self.party_a && receipt.rcv == self.party_b {
            true
        } else if receipt.snd == self.party_b && receipt.rcv == self.party_a {
            false
        } else {
            return Err(ContractError::Unauthorized);
        };
        let pk = if a_pays { self.pk_a } else { self.pk_b };
        if !receipt.verify(&pk) {
            return Err(ContractError::BadSignature);
        }
        let (from, to) = if a_pays {
            (&mut self.balance_a, &mut self.balance_b)
        } else {
            (&mut self.balance_b, &mut self.balance_a)
        };
        if *from < receipt.amount {
            return Err(ContractError::InsufficientFunds {
                have: *from,
                need: receipt.amount,
            });
        }
        *from -= receipt.amount;
        *to += receipt.amount;
        self.seq = receipt.seq;
        self.receipts.push(receipt);
        self.latest = SignedState::cosign(self.state(), key_a, key_b);
        Ok(&self.latest)
    }

    pub fn key_for<'k>(&self, who: &str, key_a: &'k KeyPair, key_b: &'k KeyPair) -> &'k KeyPair {
        if who == self.party_a {
            key_a
        } else {
            key_b
        }
    }

    /// Net flow of the receipts tagged `path_id`, from `snd` to the counterparty.
    pub fn path_total(&self, path_id: u64, snd: &str) -> i128 {
        self.receipts
            .iter()
            .filter(|r| r.path_id == Some(path_id))
            .map(|r| {
                let v = r.amount as i128;
                if r.snd == snd {
                    v
                } else {
                    -v
                }
            })
            .sum()
    }

    /// Unwinds the receipts tagged `path_id` so an escrow can settle their
    /// aggregate on chain instead. Returns the folded amount.
    pub fn fold_path(
        &mut self,
        path_id: u64,
        snd: &str,
        key_a: &KeyPair,
        key_b: &KeyPair,
    ) -> Result<u64, ContractError> {
        let net = self.path_total(path_id, snd);
        if net <= 0 {
            return Ok(0);
        }
        let rcv = if snd == self.party_a {
            self.party_b.clone()
        } else {
            self.party_a.clone()
        };
        let amount = net as u64;
        let key = self.key_for(&rcv, key_a, key_b).clone();
        let r = Receipt::signed(
            self.id,
            ReceiptKind::Fold,
            &rcv,
            snd,
            amount,
            self.seq + 1,
            Some(path_id),
            &key,
        );
        self.pay_receipt(r, key_a, key_b)?;
        Ok(amount)
    }

    /// Balances recomputed from deposits and the receipt log alone.
    pub fn replay(&self) -> (u64, u64) {
        let (mut a, mut b) = (self.deposit_a, self.deposit_b);
        for r in &self.receipts {
            if r.snd == self.party_a {
                a -= r.amount;
                b += r.amount;
            } else {
                b -= r.amount;
                a += r.amount;
            }
        }
        (a, b)
    }
}

/// On-chain view of a channel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub id: ChannelId,
    pub party_a: Address,
    pub party_b: Address,
    pub pk_a: PublicKey,
    pub pk_b: PublicKey,
    pub deposit_a: u64,
    pub deposit_b: u64,
    pub status: ChannelStatus,
    pub pending: Option<SignedState>,
    pub close_deadline: Option<u64>,
    pub dispute_window: u64,
}

impl ChannelRecord {
    pub fn deposits(&self) -> u64 {
        self.deposit_a + self.deposit_b
    }

    fn validate(&self, signed: &SignedState) -> Result<(), ContractError> {
        if signed.state.channel != self.id {
            return Err(ContractError::UnknownChannel(signed.state.channel));
        }
        if !signed.verify(&self.pk_a, &self.pk_b) {
            return Err(ContractError::BadSignature);
        }
        if signed.state.balance_a + signed.state.balance_b != self.deposits() {
            return Err(ContractError::BalanceMismatch);
        }
        Ok(())
    }

    fn is_party(&self, who: &str) -> bool {
        who == self.party_a || who == self.party_b
    }

    pub fn close(
        &mut self,
        caller: &str,
        signed: SignedState,
        height: u64,
    ) -> Result<(), ContractError> {
        if !self.is_party(caller) {
            return Err(ContractError::Unauthorized);
        }
        if self.status != ChannelStatus::Open {
            return Err(ContractError::WrongState(self.status.to_string()));
        }
        self.validate(&signed)?;
        self.pending = Some(signed);
        self.close_deadline = Some(height + self.dispute_window);
        self.status = ChannelStatus::Closing;
        Ok(())
    }

    pub fn dispute(
        &mut self,
        caller: &str,
        signed: SignedState,
        height: u64,
    ) -> Result<(), ContractError> {
        if !self.is_party(caller) {
            return Err(ContractError::Unauthorized);
        }
        if self.status != ChannelStatus::Closing {
            return Err(ContractError::WrongState(self.status.to_string()));
        }
        if height > self.close_deadline.expect("closing has a deadline") {
            return Err(ContractError::WindowClosed);
        }
        let current = self.pending.as_ref().expect("closing has a state").state.seq;
        if signed.state.seq <= current {
            return Err(ContractError::StaleSeq {
                got: signed.state.seq,
                current,
            });
        }
        self.validate(&signed)?;
        self.pending = Some(signed);
        self.close_deadline = Some(height + self.dispute_window);
        Ok(())
    }

    /// Pays out a pending close once its window has passed.
    pub fn tick(&mut self, height: u64) -> Option<Vec<Payout>> {
        if self.status != ChannelStatus::Closing || height <= self.close_deadline? {
            return None;
        }
        let st = &self.pending.as_ref()?.state;
        let out = [
            (self.party_a.clone(), st.balance_a),
            (self.party_b.clone(), st.balance_b),
        ]
        .into_iter()
        .filter(|(_, v)| *v > 0)
        .map(|(to, amount)| Payout {
            to,
            amount,
            role: PayoutRole::ChannelParty,
        })
        .collect();
        self.status = ChannelStatus::Closed;
        Some(out)
    }
}
