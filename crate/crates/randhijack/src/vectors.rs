//! Line-oriented test-vector files.
//!
//! ```text
//! # comment
//! op-name <hex-in> <hex-in> ... -> <hex-out>
//! ```
//!
//! Operations and their inputs:
//!
//! | op        | inputs                          | output           |
//! |-----------|---------------------------------|------------------|
//! | `f1`      | ka, amf‖sqn (8)                 | mac (8)          |
//! | `f5`      | ka, mac (8)                     | ak (8)           |
//! | `a3`      | ki, rand (16)                   | sres (8)         |
//! | `a8`      | ki, rand (16)                   | kc (8)           |
//! | `a5_1`    | kc, frame (4, big endian)       | keystream (16)   |
//! | `a5_2`    | kc, frame                       | keystream (16)   |
//! | `a5_3`    | kc, frame                       | keystream (16)   |
//! | `kdf`     | master, imsi (15 ASCII digits)  | ki ‖ ka (32)     |
//! | `hijack`  | ka, amf (2), sqn (6)            | rand (16)        |

use std::fmt::Write as _;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use randhijack_core::auth::{build_hijacked_rand, Amf16, Sqn48, SQN_MAX};
use randhijack_core::crypto::{a3_sres, a5_keystream, a8_kc, derive_subscriber_keys, f1_mac, f5_mask};
use randhijack_core::{CipherAlgId, Imsi, Key128};

pub const OPS: [&str; 9] = ["f1", "f5", "a3", "a8", "a5_1", "a5_2", "a5_3", "kdf", "hijack"];

const KEYSTREAM_LEN: usize = 16;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum VectorError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown operation {op:?}")]
    UnknownOp { line: usize, op: String },
    #[error("line {line}: {op} expects {expected} inputs of lengths {lengths:?}")]
    Arity {
        line: usize,
        op: String,
        expected: usize,
        lengths: &'static [usize],
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VectorRecord {
    pub line: usize,
    pub op: String,
    pub inputs: Vec<Vec<u8>>,
    pub output: Vec<u8>,
}

impl VectorRecord {
    fn render(&self, out: &mut String) {
        out.push_str(&self.op);
        for i in &self.inputs {
            out.push(' ');
            out.push_str(&hex::encode(i));
        }
        out.push_str(" -> ");
        out.push_str(&hex::encode(&self.output));
        out.push('\n');
    }
}

fn input_lengths(op: &str) -> Option<&'static [usize]> {
    Some(match op {
        "f1" | "f5" => &[16, 8],
        "a3" | "a8" => &[16, 16],
        "a5_1" | "a5_2" | "a5_3" => &[8, 4],
        "kdf" => &[16, 15],
        "hijack" => &[16, 2, 6],
        _ => return None,
    })
}

fn a5_alg(op: &str) -> CipherAlgId {
    match op {
        "a5_1" => CipherAlgId::A5_1,
        "a5_2" => CipherAlgId::A5_2,
        _ => CipherAlgId::A5_3,
    }
}

/// Computes `op` on inputs whose lengths have already been checked.
fn compute(op: &str, inputs: &[Vec<u8>]) -> Vec<u8> {
    let key = || Key128::from_slice(&inputs[0]).expect("checked length");
    match op {
        "f1" => f1_mac(&key(), &inputs[1]).expect("checked length").as_bytes().to_vec(),
        "f5" => f5_mask(&key(), &inputs[1]).expect("checked length").as_bytes().to_vec(),
        "a3" => a3_sres(&key(), &inputs[1]).expect("checked length").as_bytes().to_vec(),
        "a8" => a8_kc(&key(), &inputs[1]).expect("checked length").as_bytes().to_vec(),
        "a5_1" | "a5_2" | "a5_3" => {
            let kc = randhijack_core::Tag64::from_slice(&inputs[0]).expect("checked length");
            let frame = u32::from_be_bytes(inputs[1][..4].try_into().expect("checked length"));
            a5_keystream(a5_alg(op), &kc, frame, KEYSTREAM_LEN)
                .expect("strong or weak cipher")
                .bytes
        }
        "kdf" => {
            let imsi: Imsi = std::str::from_utf8(&inputs[1])
                .ok()
                .and_then(|s| s.parse().ok())
                .expect("digits checked by parser");
            let (ki, ka) = derive_subscriber_keys(&key(), &imsi);
            let mut out = ki.as_bytes().to_vec();
            out.extend_from_slice(ka.as_bytes());
            out
        }
        "hijack" => {
            let amf = Amf16(u16::from_be_bytes([inputs[1][0], inputs[1][1]]));
            let sqn = Sqn48::from_bytes(inputs[2][..6].try_into().expect("checked length"));
            build_hijacked_rand(&key(), amf, sqn).as_bytes().to_vec()
        }
        _ => unreachable!("op validated by caller"),
    }
}

fn random_bytes(rng: &mut dyn RngCore, n: usize) -> Vec<u8> {
    let mut v = vec![0u8; n];
    rng.fill_bytes(&mut v);
    v
}

fn random_inputs(op: &str, rng: &mut ChaCha20Rng) -> Vec<Vec<u8>> {
    match op {
        "kdf" => {
            let digits: String = (0..15).map(|_| char::from(b'0' + rng.gen_range(0..10u8))).collect();
            vec![random_bytes(rng, 16), digits.into_bytes()]
        }
        "hijack" => {
            let sqn = rng.gen_range(0..=SQN_MAX);
            vec![
                random_bytes(rng, 16),
                random_bytes(rng, 2),
                Sqn48::new(sqn).expect("in range").to_bytes().to_vec(),
            ]
        }
        _ => input_lengths(op)
            .expect("known op")
            .iter()
            .map(|&n| random_bytes(rng, n))
            .collect(),
    }
}

/// `count` records per operation, all inputs drawn from one seeded stream.
pub fn generate(seed: u64, count: usize) -> Vec<VectorRecord> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count * OPS.len());
    for op in OPS {
        for _ in 0..count {
            let inputs = random_inputs(op, &mut rng);
            let output = compute(op, &inputs);
            out.push(VectorRecord {
                line: 0,
                op: op.to_string(),
                inputs,
                output,
            });
        }
    }
    out
}

pub fn render(seed: u64, count: usize, records: &[VectorRecord]) -> String {
    let mut out = String::new();
    out.push_str("# randhijack test vectors\n");
    let _ = writeln!(out, "# seed={seed} count={count}");
    out.push_str("# op-name <hex-in...> -> <hex-out>\n");
    for r in records {
        r.render(&mut out);
    }
    out
}

pub fn parse(text: &str) -> Result<Vec<VectorRecord>, VectorError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let syntax = |msg: &str| VectorError::Syntax {
            line,
            msg: msg.to_string(),
        };
        let (lhs, rhs) = l.split_once(" -> ").ok_or_else(|| syntax("missing ' -> '"))?;
        let mut words = lhs.split_ascii_whitespace();
        let op = words.next().ok_or_else(|| syntax("missing op-name"))?;
        let lengths = input_lengths(op).ok_or_else(|| VectorError::UnknownOp {
            line,
            op: op.to_string(),
        })?;
        let inputs = words
            .map(|w| hex::decode(w).map_err(|e| syntax(&format!("input {w:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if inputs.len() != lengths.len() || inputs.iter().zip(lengths).any(|(v, &n)| v.len() != n) {
            return Err(VectorError::Arity {
                line,
                op: op.to_string(),
                expected: lengths.len(),
                lengths,
            });
        }
        if op == "kdf" && !inputs[1].iter().all(u8::is_ascii_digit) {
            return Err(syntax("kdf IMSI must be 15 ASCII digits"));
        }
        let output = hex::decode(rhs.trim()).map_err(|e| syntax(&format!("output: {e}")))?;
        if raw != raw.to_ascii_lowercase() {
            return Err(syntax("hex must be lowercase"));
        }
        out.push(VectorRecord {
            line,
            op: op.to_string(),
            inputs,
            output,
        });
    }
    Ok(out)
}

/// Records whose stored output differs from what this implementation computes.
pub fn mismatches(records: &[VectorRecord]) -> Vec<&VectorRecord> {
    records
        .iter()
        .filter(|r| compute(&r.op, &r.inputs) != r.output)
        .collect()
}
