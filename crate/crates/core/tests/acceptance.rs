//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::time::{Duration, Instant};

use ccn_core::chain::TraceRecord;
use ccn_core::crypto::{
    amount_digest, prepare_instance, prove, unlock_intermediary_instance, unlock_terminal_instance,
    verify_proof, HashLock, KeyPair, Proof, Secret256, SecretChain, Signature, Statement, Value,
    Witness,
};
use ccn_core::escrow::EscrowState;
use ccn_core::harness::atomicity::{enumerate, EnumConfig};
use ccn_core::harness::cost::{cost_table, scaling_holds};
use ccn_core::harness::unlink::{run_game, AdversaryKind, GameConfig};
use ccn_core::harness::{payouts_complete, run_config, ScenarioConfig, TrafficModel};
use ccn_core::orchestrator::{Fault, FaultKind, Protocol, Step};
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::Value as Json;

struct Gate {
    failures: usize,
    /// Conservation and payout completeness across every scenario the gate runs.
    conservation: Vec<String>,
}

impl Gate {
    fn line(&mut self, id: u8, name: &str, ok: bool, detail: String, took: Duration, budget: Duration) {
        let in_time = took <= budget;
        let pass = ok && in_time;
        if !pass {
            self.failures += 1;
        }
        println!(
            "[{}] {id} {name}: {detail} ({:.2}s, budget {}s{})",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }

    fn conserve(&mut self, label: &str, ok: bool) {
        if !ok {
            self.conservation.push(label.to_string());
        }
    }
}

fn payload(r: &TraceRecord) -> Json {
    serde_json::from_slice(&hex::decode(&r.payload).unwrap()).unwrap()
}

fn walkthrough(g: &mut Gate) {
    let t = Instant::now();
    let out = run_config(&ScenarioConfig::walkthrough()).unwrap();
    let took = t.elapsed();
    let records: Vec<TraceRecord> = out.trace.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let expected: [(u64, &str, &str, &[(&str, Json)]); 6] = [
        (1, "alpha", "Locked", &[("locker", "alice".into()), ("beneficiary", "bob".into()), ("amount", 30.into()), ("drain_rate", 1.into()), ("timelock", 40.into())]),
        (4, "beta", "Locked", &[("locker", "bob".into()), ("beneficiary", "carol".into()), ("amount", 56.into()), ("drain_rate", 2.into()), ("timelock", 30.into())]),
        (6, "beta", "Unlocked", &[("amount", 54.into())]),
        (7, "alpha", "Unlocked", &[("amount", 27.into())]),
        (31, "beta", "Refunded", &[("path", "after_unlock".into()), ("locker_credit", 2.into()), ("beneficiary_credit", 0.into())]),
        (41, "alpha", "Refunded", &[("path", "after_unlock".into()), ("locker_credit", 3.into()), ("beneficiary_credit", 0.into())]),
    ];
    let mut mismatches = Vec::new();
    if records.len() != expected.len() {
        mismatches.push(format!("{} records, expected {}", records.len(), expected.len()));
    }
    for (r, (h, chain, label, fields)) in records.iter().zip(expected.iter()) {
        let data = payload(r);
        let fields_ok = fields.iter().all(|(k, v)| data.get(*k) == Some(v));
        if r.height != *h || r.chain_id != *chain || r.label != *label || r.protocol != "ccn" || !fields_ok {
            mismatches.push(format!("{} {} {} {data}", r.height, r.chain_id, r.label));
        }
    }
    let secret_ok = records.iter().filter(|r| r.label == "Unlocked").all(|r| {
        let lock_record = records
            .iter()
            .find(|l| l.label == "Locked" && l.chain_id == r.chain_id)
            .unwrap();
        let s: Secret256 = serde_json::from_value(payload(r)["secret"].clone()).unwrap();
        let lock: HashLock = serde_json::from_value(payload(lock_record)["primary_lock"].clone()).unwrap();
        HashLock::of_secret(&s) == lock
    });
    let bal = &out.report.balances;
    let balances_ok = bal["beta"]["carol"] == 1054
        && bal["alpha"]["bob"] == 1027
        && bal["alpha"]["alice"] == 973
        && bal["beta"]["bob"] == 946;
    let hops = &out.report.payments[0].hops;
    g.conserve("walkthrough", out.report.conserved && payouts_complete(&out.scenario));
    g.line(
        1,
        "walkthrough reproduction",
        mismatches.is_empty() && secret_ok && balances_ok,
        format!(
            "carol +{} on beta, bob +{} on alpha, remainders alice {} bob {}, {} trace mismatches",
            hops[1].credits.beneficiary,
            hops[0].credits.beneficiary,
            hops[0].credits.locker,
            hops[1].credits.locker,
            mismatches.len()
        ),
        took,
        Duration::from_secs(1),
    );
    for m in mismatches {
        println!("    trace mismatch: {m}");
    }
}

fn active_offline(g: &mut Gate) {
    let t = Instant::now();
    let mut runner = TestRunner::new(Config {
        cases: 24,
        failure_persistence: None,
        ..Config::default()
    });
    let conservation_ok = std::cell::Cell::new(true);
    let result = runner.run(&(10u64..200, 1u64..4, 0u64..1000), |(principal, r, seed)| {
        let mut cfg = ScenarioConfig::walkthrough();
        cfg.principal = principal;
        cfg.chains[0].drain_rate = r;
        cfg.seed = seed;
        cfg.faults = vec![Fault {
            party: "bob".into(),
            kind: FaultKind::Active,
            trigger: Step::Lock,
            duration: None,
        }];
        let t1 = cfg.chains[0].timelock;
        let ccn = run_config(&cfg).unwrap();
        cfg.protocol = Protocol::Htlc;
        let htlc = run_config(&cfg).unwrap();
        conservation_ok.set(
            conservation_ok.get()
                && ccn.report.conserved
                && htlc.report.conserved
                && payouts_complete(&ccn.scenario)
                && payouts_complete(&htlc.scenario),
        );
        let e = ccn.scenario.world.chains[0].escrows().next().unwrap();
        let t_lock = e.lock_height;
        let first = t_lock + 1u64.div_ceil(r);
        let ccn_series = &ccn.report.availability["alice"];
        let inside = ccn_series.iter().filter(|(h, _)| *h > first && *h < t1);
        proptest::prop_assert!(inside.clone().count() as u64 == t1 - first - 1);
        for (h, v) in inside {
            proptest::prop_assert!(*v > 0, "ccn accessible 0 at {}", h);
        }
        for (h, v) in &htlc.report.availability["alice"] {
            if *h < t1 {
                proptest::prop_assert_eq!(*v, 0, "htlc accessible at {}", h);
            }
        }
        proptest::prop_assert_eq!(e.state, EscrowState::Refund);
        Ok(())
    });
    g.conserve("active offline", conservation_ok.get());
    let ok = result.is_ok();
    g.line(
        2,
        "active-offline mitigation",
        ok,
        match result {
            Ok(()) => "24 cases: ccn accessible > 0 inside the window, htlc 0 before timeout".into(),
            Err(e) => format!("{e}"),
        },
        t.elapsed(),
        Duration::from_secs(1),
    );
}

fn enumeration(g: &mut Gate) {
    let t = Instant::now();
    let report = enumerate(&EnumConfig::default());
    let took = t.elapsed();
    g.conserve("enumeration", report.conservation_failures == 0);
    let pairs = &report.case3;
    let held = pairs.iter().filter(|p| p.holds()).count();
    let hop_counts: Vec<usize> = {
        let mut v: Vec<usize> = pairs.iter().map(|p| p.hops).collect();
        v.dedup();
        v
    };
    g.line(
        3,
        "passive-offline mitigation",
        !pairs.is_empty() && held == pairs.len() && hop_counts == [1, 2],
        format!(
            "{held}/{} case-3 configurations: offline party made whole by assisted refund, adversarial refund seized, payoff strictly lower",
            pairs.len()
        ),
        took,
        Duration::from_secs(30),
    );
    for p in pairs.iter().filter(|p| !p.holds()) {
        println!("    case 3 failure: {}", serde_json::to_string(p).unwrap());
    }

    let t = Instant::now();
    let mutant = enumerate(&EnumConfig {
        watchers: 0,
        ..EnumConfig::default()
    });
    let took_mutant = t.elapsed();
    let counts: Vec<String> = report.leaves.iter().map(|(n, k)| format!("n={n}: {k} leaves")).collect();
    g.line(
        4,
        "atomicity",
        report.passed() && !mutant.counterexamples.is_empty(),
        format!(
            "{}; {} counterexamples; mutant without watchers: {} counterexamples",
            counts.join(", "),
            report.counterexamples.len(),
            mutant.counterexamples.len()
        ),
        took + took_mutant,
        Duration::from_secs(300),
    );
    for c in &report.counterexamples {
        println!("    counterexample: {}", serde_json::to_string(c).unwrap());
    }
    if let Some(c) = mutant.counterexamples.first() {
        println!("    mutant counterexample: {}", serde_json::to_string(c).unwrap());
    }
}

fn unlinkability(g: &mut Gate) {
    let t = Instant::now();
    let ccn = run_game(&GameConfig::default()).unwrap();
    let htlc = run_game(&GameConfig {
        protocol: Protocol::Htlc,
        adversary: AdversaryKind::HashlockMatcher,
        ..GameConfig::default()
    })
    .unwrap();
    let took = t.elapsed();
    g.line(
        5,
        "unlinkability",
        ccn.advantage <= 0.05 && htlc.advantage >= 0.40,
        format!(
            "ccn combined advantage {:.3} (success CI {:.3}..{:.3}), htlc hashlock advantage {:.3}",
            ccn.advantage, ccn.ci_low, ccn.ci_high, htlc.advantage
        ),
        took,
        Duration::from_secs(120),
    );
    let quiet = run_game(&GameConfig {
        adversary: AdversaryKind::AmountCorrelator,
        traffic: TrafficModel::default(),
        trials: 200,
        ..GameConfig::default()
    })
    .unwrap();
    let m1 = run_game(&GameConfig {
        corrupted: vec!["m1".into()],
        adversary: AdversaryKind::HashlockMatcher,
        trials: 200,
        ..GameConfig::default()
    })
    .unwrap();
    println!(
        "    info: amount correlator without background traffic: advantage {:.3}",
        quiet.advantage
    );
    println!(
        "    info: corrupting m1 instead of m2 (it holds the downstream refund offset): advantage {:.3}",
        m1.advantage
    );
}

fn cost(g: &mut Gate) {
    let t = Instant::now();
    let rows = cost_table(&[1, 10, 100, 1000], 1);
    let took = t.elapsed();
    let detail: Vec<String> = rows
        .iter()
        .map(|r| format!("N={} ccn {} htlc {}", r.interactions, r.ccn_txs, r.htlc_txs))
        .collect();
    g.line(
        6,
        "cost scaling",
        scaling_holds(&rows),
        detail.join("; "),
        took,
        Duration::from_secs(60),
    );
}

fn flip(v: &Value, bit: usize) -> Value {
    match v {
        Value::Digest(d) => Value::Digest(d.flip_bit(bit % 256)),
        Value::Secret(s) => Value::Secret(s.flip_bit(bit % 256)),
        Value::Amount(a) => Value::Amount(a ^ (1u64 << (bit % 64))),
        Value::Signature(s) => {
            let mut b = s.0.clone();
            let i = bit % (b.len() * 8);
            b[i / 8] ^= 1 << (i % 8);
            Value::Signature(Signature(b))
        }
        Value::PublicKey(pk) => {
            let mut b = *pk;
            let i = bit % 256;
            b.0[i / 8] ^= 1 << (i % 8);
            Value::PublicKey(b)
        }
    }
}

fn random_instance(rng: &mut ChaCha20Rng) -> (Statement, Witness) {
    let n = rng.gen_range(1..=4);
    let chain = SecretChain::derive(n, rng).unwrap();
    let hop = rng.gen_range(0..n);
    match rng.gen_range(0..4) {
        0 => prepare_instance(&chain, hop, false),
        1 => prepare_instance(&chain, hop, true),
        k => {
            let key = KeyPair::generate(rng);
            let amount = rng.gen_range(1..1_000_000);
            if k == 2 {
                let s = chain.primary(n);
                let lock = HashLock::of_secret(&s);
                let sig = key.sign(&amount_digest(&lock, amount));
                unlock_terminal_instance(lock, s, amount, sig, key.public())
            } else {
                let s = chain.primary(hop);
                let lock = HashLock::of_secret(&s);
                let sig = key.sign(&amount_digest(&lock, amount));
                unlock_intermediary_instance(lock, s, amount, sig, key.public(), chain.primary(hop + 1), chain.offset(hop))
            }
        }
    }
}

fn rejected(st: &Statement, w: &Witness, proof: &Proof, public: bool, name: &str, bit: usize) -> bool {
    if public {
        let mut st2 = st.clone();
        let v = flip(&st.fields[name], bit);
        st2.fields.insert(name.to_string(), v);
        prove(st.kind, &st2, w).is_err() && !verify_proof(st.kind, &st2, proof)
    } else {
        let mut w2 = w.clone();
        let v = flip(&w.fields[name], bit);
        w2.fields.insert(name.to_string(), v);
        prove(st.kind, st, &w2).is_err()
    }
}

fn crypto_suite(g: &mut Gate) {
    let t = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    let mut chain_failures = 0;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=8);
        let c = SecretChain::derive(n, &mut rng).unwrap();
        let locks = c.locks();
        let mut ok = c.validate().is_ok() && locks.primary.len() == n + 1 && locks.secondary.len() == n;
        for i in 0..=n {
            ok &= locks.primary[i] == HashLock::of_secret(&c.primary(i));
        }
        for i in 0..n {
            ok &= c.primary(i + 1) == (c.primary(i) ^ c.offset(i));
            ok &= c.secondary(i) == (c.primary(i) & c.primary(i + 1));
            ok &= locks.secondary[i] == HashLock::of_pair(&c.secondary(i), &c.offset(i));
        }
        let mut all: Vec<HashLock> = locks.all().copied().collect();
        all.sort();
        all.dedup();
        ok &= all.len() == 2 * n + 1;
        if !ok {
            chain_failures += 1;
        }
    }
    let mut caught = 0;
    let mut honest_failures = 0;
    let mutations = 10_000;
    for _ in 0..mutations {
        let (st, w) = random_instance(&mut rng);
        let Ok(proof) = prove(st.kind, &st, &w) else {
            honest_failures += 1;
            continue;
        };
        if !verify_proof(st.kind, &st, &proof) {
            honest_failures += 1;
        }
        let names: Vec<(bool, String)> = st
            .fields
            .keys()
            .map(|k| (true, k.clone()))
            .chain(w.fields.keys().map(|k| (false, k.clone())))
            .collect();
        let (public, name) = &names[rng.gen_range(0..names.len())];
        if rejected(&st, &w, &proof, *public, name, rng.gen()) {
            caught += 1;
        }
    }
    g.line(
        7,
        "crypto invariants",
        chain_failures == 0 && honest_failures == 0 && caught == mutations,
        format!(
            "10000 secret chains, {chain_failures} invariant failures; {caught}/{mutations} single-bit mutations rejected; {honest_failures} honest instances failed"
        ),
        t.elapsed(),
        Duration::from_secs(60),
    );
}

fn multi_hop(g: &mut Gate) {
    let cfg = ScenarioConfig::from_toml(include_str!("../../../configs/four_chain.toml")).unwrap();
    let out = run_config(&cfg).unwrap();
    let settled = out.report.payments[0].hops.iter().all(|h| h.settled);
    g.conserve("four-chain", out.report.conserved && payouts_complete(&out.scenario) && settled);
}

fn main() {
    let mut g = Gate {
        failures: 0,
        conservation: Vec::new(),
    };
    let t = Instant::now();
    walkthrough(&mut g);
    active_offline(&mut g);
    enumeration(&mut g);
    unlinkability(&mut g);
    cost(&mut g);
    crypto_suite(&mut g);
    multi_hop(&mut g);
    let failed = std::mem::take(&mut g.conservation);
    g.line(
        8,
        "conservation",
        failed.is_empty(),
        if failed.is_empty() {
            "supply conserved at every block and terminal escrows paid out exactly, in every scenario above".into()
        } else {
            format!("violated in: {}", failed.join(", "))
        },
        t.elapsed(),
        Duration::from_secs(600),
    );
    if g.failures > 0 {
        println!("acceptance: {} criteria failed", g.failures);
        std::process::exit(1);
    }
    println!("acceptance: all 8 criteria passed");
}
