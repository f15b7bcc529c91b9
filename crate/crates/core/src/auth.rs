//! Hijacked-RAND construction and verification.
//!
//! The AuC builds each 128-bit challenge as
//!
//! ```text
//! RAND = ((AMF ‖ SQN) ⊕ AK) ‖ MAC      MAC = f1_Ka(AMF ‖ SQN)   AK = f5_Ka(MAC)
//! ```
//!
//! and the SIM inverts it: split into `X ‖ MAC*`, unmask with `f5_Ka(MAC*)`,
//! recompute the MAC and check the recovered SQN against its counter. SRES and
//! Kc are still A3/A8 over all 16 octets, so the serving network cannot tell
//! the difference.
//!
//! Everything here is pure; the SIM actor owns the counter and commits it.

use alloc::vec::Vec;
use core::fmt;
use rand::RngCore;

use crate::crypto::{a3, a8, f1, f5, Key128, Tag64};

pub const SQN_MAX: u64 = (1 << 48) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum AuthError {
    #[error("48-bit sequence counter exhausted")]
    CounterOverflow,
    #[error("value {0:#x} does not fit in 48 bits")]
    SqnOutOfRange(u64),
    #[error("triple batch size must be at least 1")]
    EmptyBatch,
}

/// 48-bit sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Sqn48(u64);

impl Sqn48 {
    pub const ZERO: Sqn48 = Sqn48(0);

    pub fn new(value: u64) -> Result<Self, AuthError> {
        if value > SQN_MAX {
            return Err(AuthError::SqnOutOfRange(value));
        }
        Ok(Sqn48(value))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn to_bytes(self) -> [u8; 6] {
        let b = self.0.to_be_bytes();
        [b[2], b[3], b[4], b[5], b[6], b[7]]
    }

    pub fn from_bytes(b: [u8; 6]) -> Self {
        Sqn48(u64::from_be_bytes([0, 0, b[0], b[1], b[2], b[3], b[4], b[5]]))
    }

    pub fn checked_add(self, n: u64) -> Result<Self, AuthError> {
        self.0
            .checked_add(n)
            .filter(|v| *v <= SQN_MAX)
            .map(Sqn48)
            .ok_or(AuthError::CounterOverflow)
    }
}

impl fmt::Display for Sqn48 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Authentication management field; carried but never interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Amf16(pub u16);

/// A 128-bit challenge as seen on the air interface.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rand128(pub [u8; 16]);

impl Rand128 {
    pub fn random(rng: &mut dyn RngCore) -> Self {
        let mut b = [0u8; 16];
        rng.fill_bytes(&mut b);
        Rand128(b)
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }

    pub fn with_bit_flipped(mut self, bit: usize) -> Self {
        self.0[bit / 8] ^= 0x80 >> (bit % 8);
        self
    }
}

impl fmt::Debug for Rand128 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Rand128({})", hex::encode(self.0))
    }
}

fn amf_sqn(amf: Amf16, sqn: Sqn48) -> [u8; 8] {
    let mut out = [0u8; 8];
    out[..2].copy_from_slice(&amf.0.to_be_bytes());
    out[2..].copy_from_slice(&sqn.to_bytes());
    out
}

/// Decomposed view of a hijacked RAND.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HijackedRandLayout {
    pub amf: Amf16,
    pub sqn: Sqn48,
    pub mac: Tag64,
    pub ak: Tag64,
}

impl HijackedRandLayout {
    pub fn new(ka: &Key128, amf: Amf16, sqn: Sqn48) -> Self {
        let mac = f1(ka, &amf_sqn(amf, sqn));
        let ak = f5(ka, &mac);
        HijackedRandLayout { amf, sqn, mac, ak }
    }

    pub fn encode(&self) -> Rand128 {
        let masked = Tag64::new(amf_sqn(self.amf, self.sqn)).xor(&self.ak);
        let mut out = [0u8; 16];
        out[..8].copy_from_slice(masked.as_bytes());
        out[8..].copy_from_slice(self.mac.as_bytes());
        Rand128(out)
    }

    /// Recovers `(AMF*, SQN*, MAC*, AK*)` from a received RAND together with
    /// the XMAC recomputed over the recovered plaintext.
    pub fn recover(ka: &Key128, rand: &Rand128) -> (Self, Tag64) {
        let mut x = [0u8; 8];
        let mut mac = [0u8; 8];
        x.copy_from_slice(&rand.0[..8]);
        mac.copy_from_slice(&rand.0[8..]);
        let mac = Tag64::new(mac);
        let ak = f5(ka, &mac);
        let plain = Tag64::new(x).xor(&ak);
        let p = plain.as_bytes();
        let amf = Amf16(u16::from_be_bytes([p[0], p[1]]));
        let sqn = Sqn48::from_bytes([p[2], p[3], p[4], p[5], p[6], p[7]]);
        let xmac = f1(ka, p);
        (HijackedRandLayout { amf, sqn, mac, ak }, xmac)
    }
}

pub fn build_hijacked_rand(ka: &Key128, amf: Amf16, sqn: Sqn48) -> Rand128 {
    HijackedRandLayout::new(ka, amf, sqn).encode()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    MacMismatch,
    SqnNotFresh,
}

impl RejectReason {
    pub fn name(self) -> &'static str {
        match self {
            RejectReason::MacMismatch => "mac_mismatch",
            RejectReason::SqnNotFresh => "sqn_not_fresh",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyOutcome {
    Accepted {
        amf: Amf16,
        sqn: Sqn48,
        sres: Tag64,
        kc: Tag64,
    },
    Rejected {
        reason: RejectReason,
        placeholder_sres: Tag64,
        placeholder_kc: Tag64,
    },
}

impl VerifyOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, VerifyOutcome::Accepted { .. })
    }

    /// The `(SRES, Kc)` pair the SIM hands to the ME either way.
    pub fn response(&self) -> (Tag64, Tag64) {
        match *self {
            VerifyOutcome::Accepted { sres, kc, .. } => (sres, kc),
            VerifyOutcome::Rejected {
                placeholder_sres,
                placeholder_kc,
                ..
            } => (placeholder_sres, placeholder_kc),
        }
    }
}

/// SIM-side check of a received RAND against the stored `counter`.
///
/// MAC is checked before freshness. The counter is not touched; the caller
/// commits `sqn` only on `Accepted`.
pub fn verify_hijacked_rand(
    ki: &Key128,
    ka: &Key128,
    counter: Sqn48,
    rand: &Rand128,
    rng: &mut dyn RngCore,
) -> VerifyOutcome {
    let (layout, xmac) = HijackedRandLayout::recover(ka, rand);
    let reason = if xmac != layout.mac {
        Some(RejectReason::MacMismatch)
    } else if layout.sqn <= counter {
        Some(RejectReason::SqnNotFresh)
    } else {
        None
    };
    match reason {
        None => {
            let (sres, kc) = legacy_response(ki, rand);
            VerifyOutcome::Accepted {
                amf: layout.amf,
                sqn: layout.sqn,
                sres,
                kc,
            }
        }
        Some(reason) => VerifyOutcome::Rejected {
            reason,
            placeholder_sres: Tag64::new(rng.next_u64().to_be_bytes()),
            placeholder_kc: Tag64::new(rng.next_u64().to_be_bytes()),
        },
    }
}

/// Unmodified GSM response: `(A3_Ki(RAND), A8_Ki(RAND))`.
pub fn legacy_response(ki: &Key128, rand: &Rand128) -> (Tag64, Tag64) {
    (a3(ki, &rand.0), a8(ki, &rand.0))
}

/// One authentication triple. `sqn_hint` orders triples inside the home
/// network and is never sent to the serving network's peer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuthTriple {
    pub rand: Rand128,
    pub xres: Tag64,
    pub kc: Tag64,
    pub sqn_hint: Sqn48,
}

/// Issues `n` hijacked-RAND triples with SQNs `counter+1 ..= counter+n`.
pub fn generate_triples(
    ki: &Key128,
    ka: &Key128,
    counter: Sqn48,
    amf: Amf16,
    n: u64,
) -> Result<(Vec<AuthTriple>, Sqn48), AuthError> {
    if n == 0 {
        return Err(AuthError::EmptyBatch);
    }
    let new_counter = counter.checked_add(n)?;
    let triples = (1..=n)
        .map(|i| {
            let sqn = Sqn48(counter.0 + i);
            let rand = build_hijacked_rand(ka, amf, sqn);
            let (xres, kc) = legacy_response(ki, &rand);
            AuthTriple {
                rand,
                xres,
                kc,
                sqn_hint: sqn,
            }
        })
        .collect();
    Ok((triples, new_counter))
}

pub fn make_legacy_triple(ki: &Key128, rand: Rand128) -> AuthTriple {
    let (xres, kc) = legacy_response(ki, &rand);
    AuthTriple {
        rand,
        xres,
        kc,
        sqn_hint: Sqn48::ZERO,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{a3_sres, a8_kc, f1_mac, f5_mask};
    use alloc::string::ToString;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const ZERO: Key128 = Key128::new([0; 16]);

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn build_frozen_value() {
        let rand = build_hijacked_rand(&ZERO, Amf16(0), Sqn48::new(1).unwrap());
        assert_eq!(hex::encode(rand.0), "7098f73fd93a6282daacdaf76b0cffc0");
    }

    #[test]
    fn build_matches_composed_primitives() {
        let ka = Key128::new([0x5a; 16]);
        let (amf, sqn) = (Amf16(0x8000), Sqn48::new(0x0000_1234_5678).unwrap());
        let rand = build_hijacked_rand(&ka, amf, sqn);
        let plain = [0x80, 0x00, 0x00, 0x00, 0x12, 0x34, 0x56, 0x78];
        let mac = f1_mac(&ka, &plain).unwrap();
        assert_eq!(&rand.0[8..], mac.as_bytes());
        let ak = f5_mask(&ka, &rand.0[8..]).unwrap();
        let unmasked: Vec<u8> = rand.0[..8].iter().zip(ak.as_bytes()).map(|(a, b)| a ^ b).collect();
        assert_eq!(unmasked, plain);
    }

    #[test]
    fn sqn_serialization() {
        let s = Sqn48::new(0x0102_0304_0506).unwrap();
        assert_eq!(s.to_bytes(), [1, 2, 3, 4, 5, 6]);
        assert_eq!(Sqn48::from_bytes(s.to_bytes()), s);
        assert_eq!(Sqn48::new(1 << 48), Err(AuthError::SqnOutOfRange(1 << 48)));
    }

    #[test]
    fn accepts_fresh_and_rejects_stale() {
        let ki = Key128::new([1; 16]);
        let ka = Key128::new([2; 16]);
        let rand = build_hijacked_rand(&ka, Amf16(3), Sqn48(10));
        match verify_hijacked_rand(&ki, &ka, Sqn48(9), &rand, &mut rng()) {
            VerifyOutcome::Accepted { amf, sqn, sres, kc } => {
                assert_eq!((amf, sqn), (Amf16(3), Sqn48(10)));
                assert_eq!((sres, kc), legacy_response(&ki, &rand));
            }
            other => panic!("{other:?}"),
        }
        for counter in [10, 11, 1000] {
            assert!(matches!(
                verify_hijacked_rand(&ki, &ka, Sqn48(counter), &rand, &mut rng()),
                VerifyOutcome::Rejected {
                    reason: RejectReason::SqnNotFresh,
                    ..
                }
            ));
        }
    }

    #[test]
    fn mac_checked_before_freshness() {
        let ki = Key128::new([1; 16]);
        let ka = Key128::new([2; 16]);
        let rand = build_hijacked_rand(&ka, Amf16(0), Sqn48(5)).with_bit_flipped(127);
        // Stale *and* forged: the MAC failure is reported.
        assert!(matches!(
            verify_hijacked_rand(&ki, &ka, Sqn48(100), &rand, &mut rng()),
            VerifyOutcome::Rejected {
                reason: RejectReason::MacMismatch,
                ..
            }
        ));
    }

    #[test]
    fn wrong_ka_is_rejected() {
        let ki = Key128::new([1; 16]);
        let rand = build_hijacked_rand(&Key128::new([2; 16]), Amf16(0), Sqn48(5));
        let out = verify_hijacked_rand(&ki, &Key128::new([3; 16]), Sqn48(0), &rand, &mut rng());
        assert!(matches!(
            out,
            VerifyOutcome::Rejected {
                reason: RejectReason::MacMismatch,
                ..
            }
        ));
    }

    #[test]
    fn triple_batches() {
        let ki = Key128::new([1; 16]);
        let ka = Key128::new([2; 16]);
        let (triples, next) = generate_triples(&ki, &ka, Sqn48(10), Amf16(0), 3).unwrap();
        let hints: Vec<u64> = triples.iter().map(|t| t.sqn_hint.value()).collect();
        assert_eq!(hints, [11, 12, 13]);
        assert_eq!(next, Sqn48(13));
        for t in &triples {
            assert_eq!(t.xres, a3_sres(&ki, &t.rand.0).unwrap());
            assert_eq!(t.kc, a8_kc(&ki, &t.rand.0).unwrap());
        }
        assert_eq!(
            generate_triples(&ki, &ka, Sqn48(0), Amf16(0), 0),
            Err(AuthError::EmptyBatch)
        );
    }

    #[test]
    fn in_order_consumption_accepts_all_out_of_order_rejects() {
        let ki = Key128::new([1; 16]);
        let ka = Key128::new([2; 16]);
        let (triples, _) = generate_triples(&ki, &ka, Sqn48(0), Amf16(0), 3).unwrap();
        let mut counter = Sqn48(0);
        for t in &triples {
            match verify_hijacked_rand(&ki, &ka, counter, &t.rand, &mut rng()) {
                VerifyOutcome::Accepted { sqn, sres, .. } => {
                    assert_eq!(sres, t.xres);
                    counter = sqn;
                }
                other => panic!("{other:?}"),
            }
        }
        // Triple 2 first, then triple 1 is stale.
        let counter = match verify_hijacked_rand(&ki, &ka, Sqn48(0), &triples[1].rand, &mut rng()) {
            VerifyOutcome::Accepted { sqn, .. } => sqn,
            other => panic!("{other:?}"),
        };
        assert!(matches!(
            verify_hijacked_rand(&ki, &ka, counter, &triples[0].rand, &mut rng()),
            VerifyOutcome::Rejected {
                reason: RejectReason::SqnNotFresh,
                ..
            }
        ));
    }

    #[test]
    fn counter_exhaustion_is_an_error() {
        let ki = Key128::new([1; 16]);
        let top = Sqn48::new(SQN_MAX - 1).unwrap();
        assert!(generate_triples(&ki, &ki, top, Amf16(0), 1).is_ok());
        assert_eq!(
            generate_triples(&ki, &ki, top, Amf16(0), 2),
            Err(AuthError::CounterOverflow)
        );
    }

    #[test]
    fn legacy_triple_frozen() {
        let ki = Key128::new(core::array::from_fn(|i| i as u8));
        let rand = Rand128(core::array::from_fn(|i| 16 + i as u8));
        let t = make_legacy_triple(&ki, rand);
        assert_eq!(t.xres.to_string(), "0af417cb9a856616");
        assert_eq!(t.kc.to_string(), "c9f8ae1bec3a2d92");
        assert_eq!(t.sqn_hint, Sqn48::ZERO);
        assert_eq!(t, make_legacy_triple(&ki, rand));
    }
}
