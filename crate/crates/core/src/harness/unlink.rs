//! Sender–receiver linking game.
//!
//! Two senders `s0`, `s1` pay two receivers `r0`, `r1` through the shared
//! intermediaries `m1 → m2`. The challenger flips `b` and pairs sender `k`
//! with receiver `k ^ b`. Both payments start in the same block, and each
//! chain orders same-block submissions at random. The adversary sees every
//! on-chain event plus the prepare transcripts of the corrupted
//! intermediaries, and guesses `b`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{Event, EventLabel, Subject};
use crate::crypto::{HashLock, Secret256};
use crate::error::ConfigError;
use crate::orchestrator::{
    HopChain, PathSpec, PaymentConfig, Protocol, Rate, Scenario, Transcript, WorldSettings,
};

use super::TrafficModel;

pub const SENDERS: [&str; 2] = ["s0", "s1"];
pub const RECEIVERS: [&str; 2] = ["r0", "r1"];
pub const MIDDLE: [&str; 2] = ["m1", "m2"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversaryKind {
    HashlockMatcher,
    AmountCorrelator,
    Combined,
}

impl AdversaryKind {
    pub fn build(self) -> Box<dyn Adversary> {
        match self {
            AdversaryKind::HashlockMatcher => Box::new(HashlockMatcher),
            AdversaryKind::AmountCorrelator => Box::new(AmountCorrelator),
            AdversaryKind::Combined => Box::new(Combined),
        }
    }
}

impl fmt::Display for AdversaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdversaryKind::HashlockMatcher => "hashlock-matcher",
            AdversaryKind::AmountCorrelator => "amount-correlator",
            AdversaryKind::Combined => "combined",
        })
    }
}

impl FromStr for AdversaryKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hashlock-matcher" | "hashlock" => Ok(AdversaryKind::HashlockMatcher),
            "amount-correlator" | "amount" => Ok(AdversaryKind::AmountCorrelator),
            "combined" => Ok(AdversaryKind::Combined),
            other => Err(ConfigError::Invalid(format!("unknown adversary {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameConfig {
    pub trials: usize,
    pub adversary: AdversaryKind,
    pub protocol: Protocol,
    pub seed: u64,
    /// Corrupted intermediaries, drawn from `m1` and `m2`.
    pub corrupted: Vec<String>,
    pub traffic: TrafficModel,
    /// Principals are drawn uniformly from this range.
    pub principal: (u64, u64),
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            trials: 1000,
            adversary: AdversaryKind::Combined,
            protocol: Protocol::Ccn,
            seed: 0,
            corrupted: vec![MIDDLE[1].into()],
            traffic: TrafficModel {
                receipts: 8,
                min: 1,
                max: 100,
            },
            principal: (40, 60),
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trials < 100 {
            return Err(ConfigError::Invalid("the game needs at least 100 trials".into()));
        }
        if self.corrupted.is_empty() || self.corrupted.iter().any(|c| !MIDDLE.contains(&c.as_str())) {
            return Err(ConfigError::Invalid("corrupt one or both of m1, m2".into()));
        }
        if MIDDLE.iter().all(|m| self.corrupted.iter().any(|c| c == m)) {
            return Err(ConfigError::Invalid(
                "every intermediary of the shared path is corrupted".into(),
            ));
        }
        if self.principal.0 == 0 || self.principal.1 < self.principal.0 {
            return Err(ConfigError::Invalid("bad principal range".into()));
        }
        Ok(())
    }
}

/// One escrow as an observer of the chain sees it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EscrowView {
    pub chain_id: String,
    pub id: u64,
    pub locker: String,
    pub beneficiary: String,
    pub amount: u64,
    pub drain_rate: u64,
    pub height: u64,
    pub primary: HashLock,
    pub secondary: Option<HashLock>,
    pub revealed: Option<Secret256>,
}

/// What the adversary is handed after a trial.
#[derive(Clone, Debug)]
pub struct View {
    pub events: Vec<Event>,
    pub transcripts: Vec<Transcript>,
    /// Public exchange rates of the two hops.
    pub rates: [Rate; 2],
}

impl View {
    pub fn escrows(&self) -> Vec<EscrowView> {
        let mut by_id: BTreeMap<(String, u64), EscrowView> = BTreeMap::new();
        for e in &self.events {
            let Subject::Escrow(id) = e.subject else { continue };
            let key = (e.chain_id.clone(), id);
            if let EventLabel::Locked {
                locker,
                beneficiary,
                amount,
                primary_lock,
                secondary_lock,
                drain_rate,
                ..
            } = &e.label
            {
                by_id.insert(
                    key,
                    EscrowView {
                        chain_id: e.chain_id.clone(),
                        id,
                        locker: locker.clone(),
                        beneficiary: beneficiary.clone(),
                        amount: *amount,
                        drain_rate: *drain_rate,
                        height: e.height,
                        primary: *primary_lock,
                        secondary: *secondary_lock,
                        revealed: None,
                    },
                );
            } else if let Some(s) = e.label.revealed_secret() {
                if let Some(v) = by_id.get_mut(&key) {
                    v.revealed.get_or_insert(s);
                }
            }
        }
        by_id.into_values().collect()
    }
}

/// A distinguisher: transcript in, guess of `b` out.
pub trait Adversary: Send + Sync {
    fn name(&self) -> &'static str;
    /// `Some(b)` when the view determines the pairing.
    fn infer(&self, view: &View) -> Option<bool>;

    fn guess(&self, view: &View, rng: &mut ChaCha20Rng) -> bool {
        self.infer(view).unwrap_or_else(|| rng.gen())
    }
}

#[derive(Default)]
struct Links {
    parent: BTreeMap<HashLock, HashLock>,
}

impl Links {
    fn find(&mut self, x: HashLock) -> HashLock {
        let p = *self.parent.entry(x).or_insert(x);
        if p == x {
            return x;
        }
        let root = self.find(p);
        self.parent.insert(x, root);
        root
    }

    fn union(&mut self, a: HashLock, b: HashLock) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent.insert(ra, rb);
        }
    }

    fn from_transcripts(view: &View, escrows: &[EscrowView]) -> Self {
        let mut l = Links::default();
        for e in escrows {
            l.find(e.primary);
            if let Some(s) = e.secondary {
                l.union(e.primary, s);
            }
        }
        for t in &view.transcripts {
            for w in t.locks.windows(2) {
                l.union(w[0], w[1]);
            }
        }
        l
    }

    /// Pairing implied by the link structure, if any.
    fn pairing(&mut self, escrows: &[EscrowView]) -> Option<bool> {
        let lock_of = |party: &str, as_locker: bool| {
            escrows
                .iter()
                .find(|e| if as_locker { e.locker == party } else { e.beneficiary == party })
                .map(|e| e.primary)
        };
        let s: Vec<HashLock> = SENDERS.iter().map(|p| lock_of(p, true)).collect::<Option<_>>()?;
        let r: Vec<HashLock> = RECEIVERS.iter().map(|p| lock_of(p, false)).collect::<Option<_>>()?;
        let s: Vec<HashLock> = s.into_iter().map(|x| self.find(x)).collect();
        let r: Vec<HashLock> = r.into_iter().map(|x| self.find(x)).collect();
        if s[0] == r[0] || s[1] == r[1] {
            Some(false)
        } else if s[0] == r[1] || s[1] == r[0] {
            Some(true)
        } else {
            None
        }
    }
}

/// Links locks that are equal, share a transcript or an escrow, or are
/// related by a revealed secret and a known offset.
pub struct HashlockMatcher;

impl Adversary for HashlockMatcher {
    fn name(&self) -> &'static str {
        "hashlock-matcher"
    }

    fn infer(&self, view: &View) -> Option<bool> {
        let escrows = view.escrows();
        let mut links = Links::from_transcripts(view, &escrows);
        let offsets: Vec<Secret256> = view.transcripts.iter().flat_map(|t| t.offsets.iter().copied()).collect();
        for e in &escrows {
            let Some(s) = e.revealed else { continue };
            for z in &offsets {
                let derived = HashLock::of_secret(&(s ^ *z));
                if escrows.iter().any(|o| o.primary == derived) {
                    links.union(e.primary, derived);
                }
            }
        }
        links.pairing(&escrows)
    }
}

/// Matches sender locks to middle-chain locks by predicting the forwarded
/// amount, then follows the corrupted transcripts to the receivers.
pub struct AmountCorrelator;

impl Adversary for AmountCorrelator {
    fn name(&self) -> &'static str {
        "amount-correlator"
    }

    fn infer(&self, view: &View) -> Option<bool> {
        let escrows = view.escrows();
        let mut links = Links::from_transcripts(view, &escrows);
        let src: Vec<&EscrowView> = SENDERS
            .iter()
            .map(|p| escrows.iter().find(|e| e.locker == *p))
            .collect::<Option<_>>()?;
        let dst: Vec<HashLock> = RECEIVERS
            .iter()
            .map(|p| escrows.iter().find(|e| e.beneficiary == *p).map(|e| e.primary))
            .collect::<Option<_>>()?;
        let mid: Vec<&EscrowView> = escrows.iter().filter(|e| e.locker == MIDDLE[0]).collect();
        let mut mid_for = [None, None];
        for m in &mid {
            for (r, d) in dst.iter().enumerate() {
                if links.find(m.primary) == links.find(*d) {
                    mid_for[r] = Some(*m);
                }
            }
        }
        let [Some(m0), Some(m1)] = mid_for else { return None };
        let predict = |s: &EscrowView, m: &EscrowView| {
            let elapsed = (m.height - 1).saturating_sub(s.height);
            let frozen = s.amount.saturating_sub(s.drain_rate * elapsed);
            view.rates[0].apply(frozen) as i128
        };
        let err = |s: &EscrowView, m: &EscrowView| (m.amount as i128 - predict(s, m)).abs();
        let straight = err(src[0], m0) + err(src[1], m1);
        let crossed = err(src[0], m1) + err(src[1], m0);
        match straight.cmp(&crossed) {
            std::cmp::Ordering::Less => Some(false),
            std::cmp::Ordering::Greater => Some(true),
            std::cmp::Ordering::Equal => None,
        }
    }
}

/// Hash-lock links when they decide, amounts otherwise.
pub struct Combined;

impl Adversary for Combined {
    fn name(&self) -> &'static str {
        "combined"
    }

    fn infer(&self, view: &View) -> Option<bool> {
        HashlockMatcher.infer(view).or_else(|| AmountCorrelator.infer(view))
    }
}

fn chain(id: &str, timelock: u64) -> HopChain {
    HopChain {
        id: id.into(),
        drain_rate: 1,
        timelock,
    }
}

pub const RATES: [Rate; 2] = [Rate { num: 2, den: 1 }, Rate { num: 1, den: 2 }];

fn path(sender: usize, receiver: usize, principal: u64) -> PathSpec {
    PathSpec {
        chains: vec![
            chain(&format!("src{sender}"), 50),
            chain("mid", 40),
            chain(&format!("dst{receiver}"), 30),
        ],
        parties: vec![
            SENDERS[sender].into(),
            MIDDLE[0].into(),
            MIDDLE[1].into(),
            RECEIVERS[receiver].into(),
        ],
        rates: RATES.to_vec(),
        principal,
        lock_delays: Vec::new(),
        min_gap: 3,
    }
}

/// Runs one trial and returns `(b, view)`.
pub fn play(cfg: &GameConfig, trial: u64) -> (bool, View) {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9e37_79b9).wrapping_add(trial));
    let b: bool = rng.gen();
    let payments: Vec<PaymentConfig> = (0..2)
        .map(|s| {
            let principal = rng.gen_range(cfg.principal.0..=cfg.principal.1);
            let mut p = PaymentConfig::new(path(s, s ^ usize::from(b), principal), cfg.protocol);
            p.background = (0..3).map(|_| cfg.traffic.sample(&mut rng)).collect();
            p
        })
        .collect();
    let settings = WorldSettings {
        funds: 100_000,
        ..WorldSettings::default()
    };
    let mut sc = Scenario::new(payments, settings, &mut rng).expect("game paths are valid");
    sc.shuffle_submissions(ChaCha20Rng::seed_from_u64(rng.gen()));
    sc.run();
    let mut events: Vec<Event> = sc.world.chains.iter().flat_map(|c| c.events().iter().cloned()).collect();
    events.sort_by_key(|e| e.height);
    let transcripts = sc
        .payments
        .iter()
        .flat_map(|p| {
            (0..p.cfg.spec.parties.len())
                .filter(|j| cfg.corrupted.iter().any(|c| *c == p.party(*j)))
                .map(|j| p.transcript(j))
                .collect::<Vec<_>>()
        })
        .collect();
    (
        b,
        View {
            events,
            transcripts,
            rates: RATES,
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameReport {
    pub protocol: Protocol,
    pub adversary: AdversaryKind,
    pub corrupted: Vec<String>,
    pub trials: usize,
    pub wins: usize,
    pub success: f64,
    pub advantage: f64,
    /// 95% normal-approximation interval on the success rate.
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn run_game(cfg: &GameConfig) -> Result<GameReport, ConfigError> {
    cfg.validate()?;
    let adversary = cfg.adversary.build();
    let wins = (0..cfg.trials as u64)
        .into_par_iter()
        .filter(|&t| {
            let (b, view) = play(cfg, t);
            let mut coin = ChaCha20Rng::seed_from_u64(cfg.seed ^ (t << 20) ^ 0x5eed);
            adversary.guess(&view, &mut coin) == b
        })
        .count();
    let n = cfg.trials as f64;
    let p = wins as f64 / n;
    let half = 1.96 * (p * (1.0 - p) / n).sqrt();
    Ok(GameReport {
        protocol: cfg.protocol,
        adversary: cfg.adversary,
        corrupted: cfg.corrupted.clone(),
        trials: cfg.trials,
        wins,
        success: p,
        advantage: (p - 0.5).abs(),
        ci_low: (p - half).max(0.0),
        ci_high: (p + half).min(1.0),
    })
}
