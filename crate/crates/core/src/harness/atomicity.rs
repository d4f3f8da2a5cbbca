//! Exhaustive enumeration of offline schedules and refund strategies on
//! short paths, with a per-party accounting check on every leaf.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainParams, RefundPath};
use crate::orchestrator::{
    Fault, FaultKind, HopChain, PathSpec, PaymentConfig, PaymentReport, Protocol, Rate, Scenario,
    Step, Strategy, WorldSettings,
};

const FUNDS: u64 = 1_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumConfig {
    pub max_hops: usize,
    /// Longest passive outage; durations are the powers of two up to it.
    pub horizon: u64,
    pub watchers: usize,
    pub appeal_window: u64,
}

impl Default for EnumConfig {
    fn default() -> Self {
        EnumConfig {
            max_hops: 2,
            horizon: 64,
            watchers: 1,
            appeal_window: crate::chain::DEFAULT_APPEAL_WINDOW,
        }
    }
}

/// The path enumerated for `n` hops.
pub fn base_spec(n: usize) -> PathSpec {
    let names = ["alice", "bob", "carol", "dave", "emma", "frank"];
    let chain_ids = ["alpha", "beta", "gamma", "delta", "epsilon"];
    let chains = (0..=n)
        .map(|i| HopChain {
            id: chain_ids[i].into(),
            drain_rate: if i % 2 == 0 { 1 } else { 2 },
            timelock: 30 + 10 * (n - i) as u64,
        })
        .collect();
    PathSpec {
        chains,
        parties: names[..n + 2].iter().map(|s| (*s).to_string()).collect(),
        rates: (0..n)
            .map(|i| if i % 2 == 0 { Rate { num: 2, den: 1 } } else { Rate::ONE })
            .collect(),
        principal: 30,
        lock_delays: std::iter::once(0).chain(std::iter::repeat(2)).take(n + 1).collect(),
        min_gap: 3,
    }
}

pub fn durations(horizon: u64) -> Vec<u64> {
    std::iter::successors(Some(1u64), |d| d.checked_mul(2))
        .take_while(|d| *d <= horizon)
        .collect()
}

/// Steps party `j` takes on an `n`-hop path: it locks unless it is the
/// receiver and unlocks unless it is the sender.
fn steps(n: usize, j: usize) -> Vec<Step> {
    let mut out = Vec::new();
    if j <= n {
        out.push(Step::Lock);
    }
    if j >= 1 {
        out.push(Step::Unlock);
    }
    out
}

/// No fault, plus one fault per party, step and kind (passive faults once per duration).
pub fn schedules(spec: &PathSpec, horizon: u64) -> Vec<Option<Fault>> {
    let n = spec.hops();
    let mut out = vec![None];
    for (j, party) in spec.parties.iter().enumerate() {
        for step in steps(n, j) {
            out.push(Some(Fault {
                party: party.clone(),
                kind: FaultKind::Active,
                trigger: step,
                duration: None,
            }));
            if step == Step::Unlock {
                for d in durations(horizon) {
                    out.push(Some(Fault {
                        party: party.clone(),
                        kind: FaultKind::Passive,
                        trigger: step,
                        duration: Some(d),
                    }));
                }
            }
        }
    }
    out
}

/// Every assignment of honest or adversarial refunds to the non-terminal lockers.
pub fn strategy_sets(n: usize) -> Vec<Vec<Strategy>> {
    (0..1usize << n)
        .map(|mask| {
            (0..n)
                .map(|i| {
                    if mask >> i & 1 == 1 {
                        Strategy::Refund2
                    } else {
                        Strategy::Honest
                    }
                })
                .collect()
        })
        .collect()
}

/// Closed-form size of the leaf space for `n` hops.
pub fn expected_leaves(n: usize, horizon: u64) -> usize {
    let d = durations(horizon).len();
    let per_party: usize = (0..n + 2)
        .map(|j| {
            let active = usize::from(j <= n) + usize::from(j >= 1);
            let passive = usize::from(j >= 1);
            active + passive * d
        })
        .sum();
    (1 + per_party) << n
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Leaf {
    pub hops: usize,
    pub fault: Option<Fault>,
    pub strategies: Vec<Strategy>,
}

impl Leaf {
    pub fn config(&self) -> PaymentConfig {
        let spec = base_spec(self.hops);
        let mut cfg = PaymentConfig::new(spec.clone(), Protocol::Ccn);
        cfg.schedule.faults.extend(self.fault.clone());
        for (i, s) in self.strategies.iter().enumerate() {
            cfg.strategies.insert(spec.parties[i].clone(), *s);
        }
        cfg
    }

    /// Whether party `j` follows the protocol in this leaf. A passive outage
    /// is an accident, not a deviation.
    pub fn honest(&self, spec: &PathSpec, j: usize) -> bool {
        let faulty = self
            .fault
            .as_ref()
            .is_some_and(|f| f.kind == FaultKind::Active && f.party == spec.parties[j]);
        let adversarial = self.strategies.get(j).is_some_and(|s| *s != Strategy::Honest);
        !faulty && !adversarial
    }
}

pub fn leaves(n: usize, horizon: u64) -> Vec<Leaf> {
    let spec = base_spec(n);
    let mut out = Vec::new();
    for fault in schedules(&spec, horizon) {
        for strategies in strategy_sets(n) {
            out.push(Leaf {
                hops: n,
                fault: fault.clone(),
                strategies,
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub leaf: Leaf,
    pub watchers: usize,
    pub violations: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafResult {
    pub leaf: Leaf,
    pub report: PaymentReport,
    pub violations: Vec<String>,
    pub conserved: bool,
}

pub fn run_leaf(leaf: &Leaf, cfg: &EnumConfig, seed: u64) -> LeafResult {
    let settings = WorldSettings {
        params: ChainParams {
            appeal_window: cfg.appeal_window,
            ..ChainParams::default()
        },
        watchers: cfg.watchers,
        funds: FUNDS,
        ..WorldSettings::default()
    };
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut sc = Scenario::new(vec![leaf.config()], settings, &mut rng).expect("enumerated leaves are valid");
    sc.run();
    let report = sc.reports().remove(0);
    let violations = audit(leaf, &sc, &report);
    LeafResult {
        leaf: leaf.clone(),
        report,
        violations,
        conserved: sc.conservation_failures.is_empty() && super::payouts_complete(&sc),
    }
}

/// Accounting check for every honest party of a finished leaf.
///
/// An honest locker pays out either nothing or exactly the amount it
/// confirmed, and its escrow settles. An honest intermediary that paid
/// downstream receives its confirmed upstream amount, unless the upstream
/// locker deviated and lost its escrow to an appeal. Balances must agree
/// with the escrow credits.
pub fn audit(leaf: &Leaf, sc: &Scenario, r: &PaymentReport) -> Vec<String> {
    let spec = base_spec(leaf.hops);
    let n = spec.hops();
    let mut v = Vec::new();
    let outflow = |i: usize| {
        let h = &r.hops[i];
        h.locked - h.credits.locker - h.credits.commitments
    };
    for j in 0..n + 2 {
        let name = &spec.parties[j];
        if j <= n && r.hops[j].escrow.is_some() {
            let paid = outflow(j);
            let confirmed = r.hops[j].confirmed.unwrap_or(0);
            if leaf.honest(&spec, j) {
                if !r.hops[j].settled {
                    v.push(format!("{name}: escrow on {} never settled", r.hops[j].chain_id));
                }
                if paid != 0 && paid != confirmed {
                    v.push(format!(
                        "{name}: paid {paid} on {} but confirmed {confirmed}",
                        r.hops[j].chain_id
                    ));
                }
                if j >= 1 && paid > 0 {
                    let up = &r.hops[j - 1];
                    let owed = up.confirmed.unwrap_or(0);
                    let punished = up.appealed_by.is_some() && !leaf.honest(&spec, j - 1);
                    if up.credits.beneficiary != owed && !punished {
                        v.push(format!(
                            "{name}: paid {paid} on {} but received {} of {owed} on {}",
                            r.hops[j].chain_id, up.credits.beneficiary, up.chain_id
                        ));
                    }
                }
            }
        }
        for c in [j.checked_sub(1), (j <= n).then_some(j)].into_iter().flatten() {
            let chain = &sc.world.chains[sc.payments[0].chains[c]];
            let h = &r.hops[c];
            let mut expect = FUNDS as i128;
            if c == j {
                expect -= h.locked as i128;
                expect += h.credits.locker as i128;
            } else {
                expect += h.credits.beneficiary as i128;
            }
            if chain.balance(name) as i128 != expect {
                v.push(format!(
                    "{name}: balance {} on {} disagrees with credits ({expect})",
                    chain.balance(name),
                    h.chain_id
                ));
            }
        }
    }
    if !r.reveal_order_ok {
        v.push("secret revealed upstream before downstream".into());
    }
    if !r.distinct_locks {
        v.push("lock digests repeat across chains".into());
    }
    v
}

/// One passive-offline beneficiary whose downstream secret is public, settled
/// once honestly and once adversarially by its locker.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Case3Pair {
    pub hops: usize,
    pub fault: Fault,
    pub chain: usize,
    pub confirmed: u64,
    pub offline_credit: u64,
    pub honest_payoff: u64,
    pub adversarial_payoff: u64,
    pub seized: u64,
}

impl Case3Pair {
    /// The offline party is made whole by the assisted refund, the
    /// adversarial refund is seized, and deviating pays strictly less.
    pub fn holds(&self) -> bool {
        self.offline_credit == self.confirmed
            && self.adversarial_payoff == 0
            && self.seized > 0
            && self.adversarial_payoff < self.honest_payoff
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicityReport {
    pub config: EnumConfig,
    /// Leaves run per hop count.
    pub leaves: Vec<(usize, usize)>,
    pub counterexamples: Vec<Counterexample>,
    pub case3: Vec<Case3Pair>,
    pub conservation_failures: usize,
}

impl AtomicityReport {
    pub fn passed(&self) -> bool {
        self.counterexamples.is_empty() && self.conservation_failures == 0
    }
}

pub fn enumerate(cfg: &EnumConfig) -> AtomicityReport {
    let mut report = AtomicityReport {
        config: *cfg,
        leaves: Vec::new(),
        counterexamples: Vec::new(),
        case3: Vec::new(),
        conservation_failures: 0,
    };
    for n in 1..=cfg.max_hops {
        let all = leaves(n, cfg.horizon);
        let results: Vec<LeafResult> = all
            .par_iter()
            .enumerate()
            .map(|(k, leaf)| run_leaf(leaf, cfg, k as u64))
            .collect();
        report.leaves.push((n, results.len()));
        for r in &results {
            if !r.conserved {
                report.conservation_failures += 1;
            }
            if !r.violations.is_empty() {
                report.counterexamples.push(Counterexample {
                    leaf: r.leaf.clone(),
                    watchers: cfg.watchers,
                    violations: r.violations.clone(),
                });
            }
        }
        report.case3.extend(case3_pairs(&results));
    }
    report
}

fn case3_pairs(results: &[LeafResult]) -> Vec<Case3Pair> {
    let mut out = Vec::new();
    for honest in results {
        let Some(fault) = &honest.leaf.fault else { continue };
        if fault.kind != FaultKind::Passive || honest.leaf.strategies.iter().any(|s| *s != Strategy::Honest) {
            continue;
        }
        let spec = base_spec(honest.leaf.hops);
        let j = spec.parties.iter().position(|p| *p == fault.party).expect("known party");
        if j == 0 || j > spec.hops() {
            continue;
        }
        let chain = j - 1;
        let hop = &honest.report.hops[chain];
        if hop.refund_path != Some(RefundPath::Assisted) {
            continue;
        }
        let mut strategies = honest.leaf.strategies.clone();
        strategies[chain] = Strategy::Refund2;
        let Some(adv) = results
            .iter()
            .find(|r| r.leaf.fault == honest.leaf.fault && r.leaf.strategies == strategies)
        else {
            continue;
        };
        let adv_hop = &adv.report.hops[chain];
        out.push(Case3Pair {
            hops: honest.leaf.hops,
            fault: fault.clone(),
            chain,
            confirmed: hop.confirmed.unwrap_or(0),
            offline_credit: hop.credits.beneficiary,
            honest_payoff: hop.credits.locker,
            adversarial_payoff: adv_hop.credits.locker,
            seized: adv_hop.credits.appellant,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaf_count_matches_closed_form() {
        for n in 1..=2 {
            for horizon in [1, 8, 64] {
                assert_eq!(leaves(n, horizon).len(), expected_leaves(n, horizon));
            }
        }
        assert_eq!(expected_leaves(1, 64), 38);
    }

    #[test]
    fn base_specs_validate() {
        for n in 1..=3 {
            base_spec(n).validate(1).unwrap();
        }
    }

    #[test]
    fn honest_leaf_is_clean() {
        let leaf = Leaf {
            hops: 1,
            fault: None,
            strategies: vec![Strategy::Honest],
        };
        let r = run_leaf(&leaf, &EnumConfig::default(), 0);
        assert!(r.violations.is_empty(), "{:?}", r.violations);
    }

    #[test]
    fn disabled_appeal_breaks_passive_case() {
        let leaf = Leaf {
            hops: 1,
            fault: Some(Fault {
                party: "bob".into(),
                kind: FaultKind::Passive,
                trigger: Step::Unlock,
                duration: Some(64),
            }),
            strategies: vec![Strategy::Refund2],
        };
        let cfg = EnumConfig {
            watchers: 0,
            ..EnumConfig::default()
        };
        let r = run_leaf(&leaf, &cfg, 0);
        assert!(r.violations.iter().any(|v| v.starts_with("bob")), "{:?}", r.violations);
        let r = run_leaf(&leaf, &EnumConfig::default(), 0);
        assert!(r.violations.is_empty(), "{:?}", r.violations);
    }
}
