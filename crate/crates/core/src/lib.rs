//! Simulation core for RAND-hijacking mutual authentication on legacy GSM
//! subscriber identity modules.
//!
//! Everything here is `no_std` + `alloc`. IO, config files and the command
//! line live in the companion `randhijack` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod adversary;
pub mod auth;
pub mod crypto;
pub mod harness;
pub mod me;
pub mod network;
pub mod sim;
pub mod trace;

pub use auth::{
    build_hijacked_rand, generate_triples, legacy_response, verify_hijacked_rand, Amf16, AuthError, AuthTriple,
    Rand128, RejectReason, Sqn48, VerifyOutcome,
};
pub use crypto::{CipherAlgId, CryptoError, Key128, Tag64};
pub use harness::{run_scenario, ScenarioConfig, ScenarioRun};
pub use network::Imsi;
pub use trace::{Trace, TraceEvent};
