use proptest::prelude::*;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use randhijack_core::auth::{
    build_hijacked_rand, generate_triples, legacy_response, verify_hijacked_rand, Amf16, HijackedRandLayout, Rand128,
    RejectReason, Sqn48, VerifyOutcome, SQN_MAX,
};
use randhijack_core::crypto::{a3_sres, a5_keystream, a8_kc, f1_mac, f5_mask, CipherAlgId, Key128, Tag64};
use randhijack_core::network::Imsi;
use randhijack_core::sim::{SimState, TerminalProfile};
use randhijack_core::Trace;

fn key() -> impl Strategy<Value = Key128> {
    any::<[u8; 16]>().prop_map(Key128::new)
}

fn sqn_pair() -> impl Strategy<Value = (u64, u64)> {
    (1..=SQN_MAX).prop_flat_map(|s| (Just(s), 0..s))
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

proptest! {
    #[test]
    fn build_then_verify_recovers_fields(ki in key(), ka in key(), amf in any::<u16>(), (sqn, counter) in sqn_pair()) {
        let rand = build_hijacked_rand(&ka, Amf16(amf), Sqn48::new(sqn).unwrap());
        let out = verify_hijacked_rand(&ki, &ka, Sqn48::new(counter).unwrap(), &rand, &mut rng(0));
        let (sres, kc) = legacy_response(&ki, &rand);
        prop_assert_eq!(out, VerifyOutcome::Accepted { amf: Amf16(amf), sqn: Sqn48::new(sqn).unwrap(), sres, kc });
    }

    #[test]
    fn layout_encode_recover_roundtrip(ka in key(), amf in any::<u16>(), sqn in 0..=SQN_MAX) {
        let layout = HijackedRandLayout::new(&ka, Amf16(amf), Sqn48::new(sqn).unwrap());
        let (back, xmac) = HijackedRandLayout::recover(&ka, &layout.encode());
        prop_assert_eq!(back, layout);
        prop_assert_eq!(xmac, layout.mac);
    }

    #[test]
    fn any_single_bit_flip_is_rejected(ki in key(), ka in key(), (sqn, counter) in sqn_pair(), bit in 0usize..128) {
        let rand = build_hijacked_rand(&ka, Amf16(0), Sqn48::new(sqn).unwrap());
        let out = verify_hijacked_rand(&ki, &ka, Sqn48::new(counter).unwrap(), &rand.with_bit_flipped(bit), &mut rng(1));
        prop_assert!(matches!(out, VerifyOutcome::Rejected { reason: RejectReason::MacMismatch, .. }), "{:?}", out);
    }

    #[test]
    fn stale_sqn_is_rejected_after_mac(ki in key(), ka in key(), (counter, sqn) in sqn_pair()) {
        // sqn < counter here, and sqn == counter below
        for s in [sqn, counter] {
            let rand = build_hijacked_rand(&ka, Amf16(0), Sqn48::new(s).unwrap());
            let out = verify_hijacked_rand(&ki, &ka, Sqn48::new(counter).unwrap(), &rand, &mut rng(2));
            prop_assert!(matches!(out, VerifyOutcome::Rejected { reason: RejectReason::SqnNotFresh, .. }), "{:?}", out);
        }
    }

    #[test]
    fn sim_counter_is_monotone(seed in any::<u64>(), order in proptest::collection::vec(1u64..40, 1..30)) {
        let imsi: Imsi = "001010000000001".parse().unwrap();
        let mut r = rng(seed);
        let (ki, ka) = (random_key(&mut r), random_key(&mut r));
        let mut sim = SimState::enhanced(imsi, ki, ka);
        sim.init(TerminalProfile { class_e: false }).unwrap();
        let mut trace = Trace::new();
        for sqn in order {
            let before = sim.counter();
            let rand = build_hijacked_rand(&ka, Amf16(0), Sqn48::new(sqn).unwrap());
            let resp = sim.challenge(&rand, "me", &mut r, &mut trace).unwrap();
            let accepted = sqn > before.value();
            prop_assert_eq!(sim.counter().value(), if accepted { sqn } else { before.value() });
            prop_assert_eq!((resp.sres, resp.kc) == legacy_response(&ki, &rand), accepted);
        }
    }

    #[test]
    fn legacy_sim_answers_everything(ki in key(), rand in any::<[u8; 16]>()) {
        let imsi: Imsi = "001010000000001".parse().unwrap();
        let mut sim = SimState::legacy(imsi, ki);
        sim.init(TerminalProfile { class_e: true }).unwrap();
        let rand = Rand128(rand);
        let resp = sim.challenge(&rand, "me", &mut rng(3), &mut Trace::new()).unwrap();
        prop_assert_eq!((resp.sres, resp.kc), legacy_response(&ki, &rand));
        prop_assert_eq!(resp.status.to_string(), "9000");
    }

    #[test]
    fn placeholders_come_from_the_rng_not_the_keys(ki in key(), ka in key(), rand in any::<[u8; 16]>(), s1 in any::<u64>(), s2 in any::<u64>()) {
        prop_assume!(s1 != s2);
        let rand = Rand128(rand);
        let a = verify_hijacked_rand(&ki, &ka, Sqn48::ZERO, &rand, &mut rng(s1));
        let b = verify_hijacked_rand(&ki, &ka, Sqn48::ZERO, &rand, &mut rng(s2));
        prop_assume!(!a.is_accepted());
        prop_assert_ne!(a.response(), b.response());
        prop_assert_ne!(a.response(), legacy_response(&ki, &rand));
        let mut expect = rng(s1);
        prop_assert_eq!(a.response().0.to_u64(), expect.next_u64());
        prop_assert_eq!(a.response().1.to_u64(), expect.next_u64());
    }

    #[test]
    fn triples_are_sequential_and_verifiable(ki in key(), ka in key(), start in 0u64..1_000_000, n in 1u64..20) {
        let (triples, next) = generate_triples(&ki, &ka, Sqn48::new(start).unwrap(), Amf16(7), n).unwrap();
        prop_assert_eq!(next.value(), start + n);
        let mut counter = Sqn48::new(start).unwrap();
        for (i, t) in triples.iter().enumerate() {
            prop_assert_eq!(t.sqn_hint.value(), start + 1 + i as u64);
            match verify_hijacked_rand(&ki, &ka, counter, &t.rand, &mut rng(4)) {
                VerifyOutcome::Accepted { sqn, sres, kc, amf } => {
                    prop_assert_eq!((sres, kc, amf), (t.xres, t.kc, Amf16(7)));
                    counter = sqn;
                }
                other => prop_assert!(false, "rejected {:?}", other),
            }
        }
    }

    #[test]
    fn weak_keystream_is_periodic(kc in any::<[u8; 8]>(), frame in any::<u32>(), len in 8usize..200) {
        let ks = a5_keystream(CipherAlgId::A5_2, &Tag64::new(kc), frame, len).unwrap();
        prop_assert_eq!(ks.bytes.len(), len);
        for i in 8..len {
            prop_assert_eq!(ks.bytes[i], ks.bytes[i - 8]);
        }
        if frame == 0 {
            prop_assert_eq!(&ks.bytes[..8], &kc[..]);
        }
    }

    #[test]
    fn keystream_length_matches_request(kc in any::<[u8; 8]>(), frame in any::<u32>(), len in 0usize..300) {
        for alg in [CipherAlgId::A5_1, CipherAlgId::A5_2, CipherAlgId::A5_3] {
            let ks = a5_keystream(alg, &Tag64::new(kc), frame, len).unwrap();
            prop_assert_eq!(ks.bytes.len(), len);
            prop_assert_eq!(ks.frame_index, frame);
        }
    }

    #[test]
    fn snapshot_roundtrip(ki in key(), ka in key(), counter in 0u64..1000, enhanced in any::<bool>()) {
        let imsi: Imsi = "262019876543210".parse().unwrap();
        let mut sim = if enhanced { SimState::enhanced(imsi, ki, ka) } else { SimState::legacy(imsi, ki) };
        sim.init(TerminalProfile { class_e: true }).unwrap();
        if enhanced && counter > 0 {
            let rand = build_hijacked_rand(&ka, Amf16(0), Sqn48::new(counter).unwrap());
            sim.challenge(&rand, "me", &mut rng(5), &mut Trace::new()).unwrap();
        }
        let text = sim.to_string();
        let back: SimState = text.parse().unwrap();
        prop_assert_eq!(back.to_string(), text);
        prop_assert_eq!(back.counter(), sim.counter());
    }

    #[test]
    fn imsi_text_roundtrip(digits in "[0-9]{15}") {
        let imsi: Imsi = digits.parse().unwrap();
        prop_assert_eq!(imsi.to_string(), digits);
    }

    #[test]
    fn imsi_rejects_non_digits(s in "[0-9]{0,14}|[0-9]{16,20}|[0-9]{7}[a-z][0-9]{7}") {
        prop_assert!(s.parse::<Imsi>().is_err());
    }
}

fn random_key(r: &mut dyn RngCore) -> Key128 {
    let mut k = [0u8; 16];
    r.fill_bytes(&mut k);
    Key128::new(k)
}

#[test]
fn f1_and_f5_never_agree() {
    let mut r = rng(10);
    for _ in 0..10_000 {
        let k = random_key(&mut r);
        let mut m = [0u8; 8];
        r.fill_bytes(&mut m);
        assert_ne!(f1_mac(&k, &m).unwrap(), f5_mask(&k, &m).unwrap());
    }
}

#[test]
fn a3_and_a8_differ_and_kc_separates_rands() {
    let mut r = rng(11);
    let mut seen = std::collections::HashSet::new();
    let k = random_key(&mut r);
    for _ in 0..1000 {
        let mut rand = [0u8; 16];
        r.fill_bytes(&mut rand);
        assert_ne!(a3_sres(&k, &rand).unwrap(), a8_kc(&k, &rand).unwrap());
        assert!(seen.insert(a8_kc(&k, &rand).unwrap()));
    }
}

#[test]
fn strong_keystreams_pass_monobit() {
    const BITS: usize = 1_000_000;
    let kc = Tag64::new(*b"\x13\x57\x9b\xdf\x02\x46\x8a\xce");
    for alg in [CipherAlgId::A5_1, CipherAlgId::A5_3] {
        let ks = a5_keystream(alg, &kc, 42, BITS / 8).unwrap();
        let ones: u64 = ks.bytes.iter().map(|b| u64::from(b.count_ones())).sum();
        let sigma = (BITS as f64).sqrt() / 2.0;
        let dev = (ones as f64 - BITS as f64 / 2.0).abs() / sigma;
        assert!(dev < 4.0, "{alg:?}: {dev} sigma");
    }
    assert_ne!(
        a5_keystream(CipherAlgId::A5_1, &kc, 1, 16).unwrap().bytes,
        a5_keystream(CipherAlgId::A5_3, &kc, 1, 16).unwrap().bytes
    );
}
