//! Per-bit frequency smoke test on hijacked RANDs.
//!
//! This only checks that no bit position of RAND is visibly biased; it says
//! nothing about computational indistinguishability.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use randhijack_core::auth::{build_hijacked_rand, Amf16, Sqn48};
use randhijack_core::Key128;
use serde::Serialize;

pub const MIN_SAMPLES: u64 = 10_000;
pub const SIGMA_BOUND: f64 = 4.0;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("n = {0} is below the minimum of {MIN_SAMPLES}")]
pub struct TooFewSamples(pub u64);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandStatsReport {
    pub n: u64,
    pub seed: u64,
    /// Count of one-bits at each position, bit 0 = MSB of the first octet.
    pub ones: Vec<u64>,
    pub max_deviation_sigma: f64,
    pub worst_bit: usize,
    pub bound_sigma: f64,
    pub passed: bool,
}

/// Builds `n` RANDs with SQN = 1..=n under a key drawn from `seed`.
pub fn rand_stats(n: u64, seed: u64) -> Result<RandStatsReport, TooFewSamples> {
    if n < MIN_SAMPLES {
        return Err(TooFewSamples(n));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut k = [0u8; 16];
    rng.fill_bytes(&mut k);
    let ka = Key128::new(k);

    let mut ones = vec![0u64; 128];
    for sqn in 1..=n {
        let rand = build_hijacked_rand(&ka, Amf16(0), Sqn48::new(sqn).expect("n is far below 2^48"));
        for (i, byte) in rand.as_bytes().iter().enumerate() {
            for b in 0..8 {
                ones[i * 8 + b] += u64::from((byte >> (7 - b)) & 1);
            }
        }
    }

    let mean = n as f64 / 2.0;
    let sigma = (n as f64).sqrt() / 2.0;
    let (worst_bit, max_dev) = ones
        .iter()
        .map(|&c| (c as f64 - mean).abs() / sigma)
        .enumerate()
        .fold((0, 0.0), |best, (i, d)| if d > best.1 { (i, d) } else { best });
    Ok(RandStatsReport {
        n,
        seed,
        ones,
        max_deviation_sigma: max_dev,
        worst_bit,
        bound_sigma: SIGMA_BOUND,
        passed: max_dev <= SIGMA_BOUND,
    })
}
