use ccn_core::channel::{Channel, Receipt, ReceiptKind};
use ccn_core::crypto::{amount_digest, HashLock, KeyPair, Secret256, SecretChain};
use ccn_core::escrow::{Escrow, EscrowMode, EscrowState, LockParams};
use ccn_core::harness::atomicity::{audit, base_spec, Leaf};
use ccn_core::harness::{payouts_complete, TraceSummary};
use ccn_core::orchestrator::{
    Fault, FaultKind, HopChain, PathSpec, PaymentConfig, Protocol, Rate, Scenario, Step, Strategy,
    WorldSettings,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn secret_chain_recomputes(n in 1usize..8, seed in any::<u64>()) {
        let c = SecretChain::derive(n, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap();
        let locks = c.locks();
        prop_assert!(c.validate().is_ok());
        for i in 0..=n {
            prop_assert_eq!(locks.primary[i], HashLock::of_secret(&c.primary(i)));
        }
        for i in 0..n {
            prop_assert_eq!(c.primary(i + 1), c.primary(i) ^ c.offset(i));
            prop_assert_eq!(c.secondary(i), c.primary(i) & c.primary(i + 1));
            prop_assert_eq!(locks.secondary[i], HashLock::of_pair(&c.secondary(i), &c.offset(i)));
        }
    }

    #[test]
    fn amount_digest_separates_amounts(lock in any::<[u8; 32]>(), a in any::<u64>(), b in any::<u64>()) {
        prop_assume!(a != b);
        let l = HashLock(lock);
        prop_assert_ne!(amount_digest(&l, a), amount_digest(&l, b));
    }

    #[test]
    fn drain_accounting(
        amount in 1u64..500,
        rate in 0u64..5,
        ops in prop::collection::vec((any::<bool>(), 1u64..40), 1..30),
    ) {
        let contract = KeyPair::from_seed([9; 32]);
        let mut e = Escrow::open(0, LockParams {
            locker: "alice".into(),
            beneficiary: "bob".into(),
            locker_pk: KeyPair::from_seed([1; 32]).public(),
            beneficiary_pk: KeyPair::from_seed([2; 32]).public(),
            amount,
            primary_lock: HashLock::of_secret(&Secret256([3; 32])),
            secondary_lock: None,
            drain_rate: rate,
            timelock: 1_000,
            mode: EscrowMode::DualLock,
        }, 1).unwrap();
        let mut h = 1;
        let mut last_frozen = e.frozen;
        let mut last_access = e.available() + e.committed;
        for (tick, v) in ops {
            if tick {
                h += 1;
                e.tick(h);
                let expect = amount.saturating_sub(rate * (h - 1));
                prop_assert_eq!(e.frozen, expect);
                prop_assert!(e.frozen <= last_frozen);
                prop_assert!(e.available() + e.committed >= last_access);
            } else {
                let before = e.available();
                let res = e.check("alice", "shop", v, h, "alpha", &contract);
                prop_assert_eq!(res.is_ok(), v <= before);
            }
            prop_assert_eq!(e.frozen + e.available() + e.committed + e.unlocked, e.locked);
            last_frozen = e.frozen;
            last_access = e.available() + e.committed;
        }
        let paid = e.refund1("alice", 1_001).unwrap();
        prop_assert_eq!(paid.iter().map(|p| p.amount).sum::<u64>(), amount);
        prop_assert_eq!(e.credits.total(), amount);
        prop_assert_eq!(e.state, EscrowState::Refund);
    }

    #[test]
    fn channel_balances_conserved(
        flows in prop::collection::vec((any::<bool>(), 1u64..50, any::<bool>()), 0..40),
    ) {
        let ka = KeyPair::from_seed([4; 32]);
        let kb = KeyPair::from_seed([5; 32]);
        let mut ch = Channel::open(1, "alpha", ("a", &ka, 500), ("b", &kb, 500));
        for (a_pays, amount, tagged) in flows {
            let (snd, rcv, key) = if a_pays { ("a", "b", &ka) } else { ("b", "a", &kb) };
            let kind = if tagged { ReceiptKind::CrossChain } else { ReceiptKind::IntraChain };
            let r = Receipt::signed(1, kind, snd, rcv, amount, ch.seq + 1, tagged.then_some(7), key);
            let _ = ch.pay_receipt(r, &ka, &kb);
            prop_assert_eq!(ch.balance_a + ch.balance_b, 1_000);
            prop_assert_eq!(ch.replay(), (ch.balance_a, ch.balance_b));
        }
        let net = ch.path_total(7, "a");
        if net > 0 {
            prop_assert_eq!(ch.fold_path(7, "a", &ka, &kb).unwrap() as i128, net);
            prop_assert_eq!(ch.path_total(7, "a"), 0);
        }
        prop_assert!(ch.latest.verify(&ka.public(), &kb.public()));
    }
}

fn random_path(n: usize, rates: &[(u64, u64)], drains: &[u64], delays: &[u64], principal: u64) -> PathSpec {
    let names = ["alice", "bob", "carol", "dave", "emma"];
    let ids = ["alpha", "beta", "gamma", "delta"];
    PathSpec {
        chains: (0..=n)
            .map(|i| HopChain {
                id: ids[i].into(),
                drain_rate: drains[i],
                timelock: 30 + 12 * (n - i) as u64,
            })
            .collect(),
        parties: names[..n + 2].iter().map(|s| (*s).to_string()).collect(),
        rates: rates[..n].iter().map(|(num, den)| Rate { num: *num, den: *den }).collect(),
        principal,
        lock_delays: delays[..=n].to_vec(),
        min_gap: 3,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn honest_paths_settle_in_order(
        n in 1usize..4,
        rates in prop::collection::vec((1u64..4, 1u64..3), 3),
        drains in prop::collection::vec(1u64..3, 4),
        delays in prop::collection::vec(0u64..3, 4),
        principal in 50u64..300,
        htlc in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let protocol = if htlc { Protocol::Htlc } else { Protocol::Ccn };
        let cfg = PaymentConfig::new(random_path(n, &rates, &drains, &delays, principal), protocol);
        let settings = WorldSettings { funds: 1_000_000, ..WorldSettings::default() };
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut sc = Scenario::new(vec![cfg.clone()], settings.clone(), &mut rng).unwrap();
        sc.run();
        let r = sc.reports().remove(0);
        prop_assert!(r.halted.is_none(), "{:?}", r.halted);
        prop_assert!(r.reveal_order_ok);
        prop_assert_eq!(r.distinct_locks, !htlc);
        prop_assert!(sc.conservation_failures.is_empty());
        prop_assert!(payouts_complete(&sc));
        for hop in &r.hops {
            prop_assert!(hop.settled);
            if !htlc {
                prop_assert_eq!(Some(hop.credits.beneficiary), hop.confirmed);
            } else {
                prop_assert_eq!(hop.credits.beneficiary, hop.locked);
            }
        }
        let trace = sc.world.trace_jsonl(&protocol.to_string());
        let summary = TraceSummary::from_jsonl(&trace).unwrap();
        for c in &sc.world.chains {
            prop_assert_eq!(summary.tx_counts.get(&c.id), Some(c.executed_counts()));
        }
        let mut again = Scenario::new(vec![cfg], settings, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap();
        again.run();
        prop_assert_eq!(again.world.trace_jsonl(&protocol.to_string()), trace);
    }

    #[test]
    fn arbitrary_outages_keep_honest_parties_whole(
        n in 1usize..3,
        party in 0usize..4,
        passive in any::<bool>(),
        lock_step in any::<bool>(),
        duration in 1u64..80,
        adversarial in prop::collection::vec(any::<bool>(), 2),
        seed in any::<u64>(),
    ) {
        let spec = base_spec(n);
        let j = party % (n + 2);
        let step = if j == 0 || (j <= n && lock_step && !passive) { Step::Lock } else { Step::Unlock };
        let fault = Fault {
            party: spec.parties[j].clone(),
            kind: if passive && step == Step::Unlock { FaultKind::Passive } else { FaultKind::Active },
            trigger: step,
            duration: (passive && step == Step::Unlock).then_some(duration),
        };
        let strategies = adversarial[..n]
            .iter()
            .map(|a| if *a { Strategy::Refund2 } else { Strategy::Honest })
            .collect();
        let leaf = Leaf { hops: n, fault: Some(fault), strategies };
        let mut sc = Scenario::new(
            vec![leaf.config()],
            WorldSettings::default(),
            &mut ChaCha20Rng::seed_from_u64(seed),
        )
        .unwrap();
        sc.run();
        let r = sc.reports().remove(0);
        let violations = audit(&leaf, &sc, &r);
        prop_assert!(violations.is_empty(), "{:?}", violations);
        prop_assert!(sc.conservation_failures.is_empty());
    }
}
