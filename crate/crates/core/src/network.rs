//! Home network (AuC) and serving network (VLR).
//!
//! Only the AuC knows whether a subscriber is enhanced. The VLR stores,
//! issues and checks triples exactly as it would for any GSM subscriber.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::auth::{generate_triples, make_legacy_triple, Amf16, AuthError, AuthTriple, Rand128, Sqn48};
use crate::crypto::{derive_subscriber_keys, CipherAlgId, Key128, Tag64};
use crate::sim::{SimMode, SimState};
use crate::trace::Trace;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetworkError {
    #[error("IMSI {0} already provisioned")]
    DuplicateImsi(Imsi),
    #[error("unknown IMSI {0}")]
    UnknownImsi(Imsi),
    #[error("no authentication triples left for {0}")]
    TriplesExhausted(Imsi),
    #[error("no outstanding challenge for {0}")]
    NoOutstandingChallenge(Imsi),
    #[error(transparent)]
    Auth(#[from] AuthError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("IMSI must be exactly 15 decimal digits")]
pub struct InvalidImsi;

/// 15-digit subscriber identity.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Imsi([u8; 15]);

impl Imsi {
    /// ASCII digits.
    pub fn as_digits(&self) -> &[u8; 15] {
        &self.0
    }

    pub fn as_str(&self) -> &str {
        core::str::from_utf8(&self.0).expect("IMSI holds ASCII digits")
    }
}

impl FromStr for Imsi {
    type Err = InvalidImsi;

    fn from_str(s: &str) -> Result<Self, InvalidImsi> {
        let bytes: [u8; 15] = s.as_bytes().try_into().map_err(|_| InvalidImsi)?;
        if !bytes.iter().all(u8::is_ascii_digit) {
            return Err(InvalidImsi);
        }
        Ok(Imsi(bytes))
    }
}

impl TryFrom<String> for Imsi {
    type Error = InvalidImsi;

    fn try_from(s: String) -> Result<Self, InvalidImsi> {
        s.parse()
    }
}

impl From<Imsi> for String {
    fn from(imsi: Imsi) -> String {
        imsi.as_str().to_string()
    }
}

impl fmt::Display for Imsi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for Imsi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Imsi({})", self.as_str())
    }
}

/// ME actor id for a subscriber, as used in traces.
pub fn me_actor(imsi: &Imsi) -> String {
    format!("me:{}", imsi)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubscriberRecord {
    pub imsi: Imsi,
    pub ki: Key128,
    pub ka: Option<Key128>,
    pub counter: Sqn48,
    pub mode: SimMode,
}

pub const AUC_ID: &str = "auc";

/// The AuC and its subscriber registry.
#[derive(Debug, Clone, Default)]
pub struct HomeNetwork {
    subscribers: BTreeMap<Imsi, SubscriberRecord>,
    amf: Amf16,
}

impl HomeNetwork {
    pub fn new(amf: Amf16) -> Self {
        HomeNetwork {
            subscribers: BTreeMap::new(),
            amf,
        }
    }

    pub fn subscriber(&self, imsi: &Imsi) -> Option<&SubscriberRecord> {
        self.subscribers.get(imsi)
    }

    /// Registers a subscriber and returns the record plus the matching SIM.
    pub fn auc_provision(
        &mut self,
        imsi: Imsi,
        mode: SimMode,
        master: &Key128,
    ) -> Result<(SubscriberRecord, SimState), NetworkError> {
        if self.subscribers.contains_key(&imsi) {
            return Err(NetworkError::DuplicateImsi(imsi));
        }
        let (ki, ka) = derive_subscriber_keys(master, &imsi);
        let (ka, sim) = match mode {
            SimMode::Legacy => (None, SimState::legacy(imsi, ki)),
            SimMode::Enhanced => (Some(ka), SimState::enhanced(imsi, ki, ka)),
        };
        let record = SubscriberRecord {
            imsi,
            ki,
            ka,
            counter: Sqn48::ZERO,
            mode,
        };
        self.subscribers.insert(imsi, record.clone());
        Ok((record, sim))
    }

    pub fn auc_request_triples(
        &mut self,
        imsi: &Imsi,
        n: u64,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<AuthTriple>, NetworkError> {
        let amf = self.amf;
        let record = self.subscribers.get_mut(imsi).ok_or(NetworkError::UnknownImsi(*imsi))?;
        if n == 0 {
            return Err(AuthError::EmptyBatch.into());
        }
        match record.ka {
            Some(ka) => {
                let (triples, counter) = generate_triples(&record.ki, &ka, record.counter, amf, n)?;
                record.counter = counter;
                Ok(triples)
            }
            None => Ok((0..n)
                .map(|_| make_legacy_triple(&record.ki, Rand128::random(rng)))
                .collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsumptionPolicy {
    #[default]
    InOrder,
    RandomOrder,
    Reuse,
}

#[derive(Debug, Clone, Default)]
pub struct TripleStore {
    queues: BTreeMap<Imsi, VecDeque<AuthTriple>>,
    last_issued: BTreeMap<Imsi, AuthTriple>,
    policy: ConsumptionPolicy,
}

impl TripleStore {
    pub fn new(policy: ConsumptionPolicy) -> Self {
        TripleStore {
            policy,
            ..Self::default()
        }
    }

    pub fn policy(&self) -> ConsumptionPolicy {
        self.policy
    }

    pub fn remaining(&self, imsi: &Imsi) -> usize {
        self.queues.get(imsi).map_or(0, VecDeque::len)
    }

    pub fn insert(&mut self, imsi: Imsi, triples: Vec<AuthTriple>) {
        self.queues.entry(imsi).or_default().extend(triples);
    }

    pub fn take(&mut self, imsi: &Imsi, rng: &mut dyn RngCore) -> Result<AuthTriple, NetworkError> {
        if self.policy == ConsumptionPolicy::Reuse {
            if let Some(t) = self.last_issued.get(imsi) {
                return Ok(*t);
            }
        }
        let queue = self
            .queues
            .get_mut(imsi)
            .filter(|q| !q.is_empty())
            .ok_or(NetworkError::TriplesExhausted(*imsi))?;
        let triple = match self.policy {
            ConsumptionPolicy::RandomOrder => {
                let i = rng.gen_range(0..queue.len());
                queue.remove(i).expect("index in range")
            }
            ConsumptionPolicy::InOrder | ConsumptionPolicy::Reuse => queue.pop_front().expect("queue not empty"),
        };
        self.last_issued.insert(*imsi, triple);
        Ok(triple)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VlrVerdict {
    Authenticated,
    Rejected,
}

impl VlrVerdict {
    pub fn name(self) -> &'static str {
        match self {
            VlrVerdict::Authenticated => "authenticated",
            VlrVerdict::Rejected => "rejected",
        }
    }
}

/// The VLR of a serving network.
#[derive(Debug, Clone)]
pub struct ServingNetwork {
    id: String,
    store: TripleStore,
    pending: BTreeMap<Imsi, AuthTriple>,
    cipher: CipherAlgId,
}

impl ServingNetwork {
    pub fn new(id: &str, policy: ConsumptionPolicy, cipher: CipherAlgId) -> Self {
        ServingNetwork {
            id: id.to_string(),
            store: TripleStore::new(policy),
            pending: BTreeMap::new(),
            cipher,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn store(&self) -> &TripleStore {
        &self.store
    }

    /// Fetches a batch of triples from the home network.
    pub fn request_triples(
        &mut self,
        home: &mut HomeNetwork,
        imsi: &Imsi,
        n: u64,
        rng: &mut dyn RngCore,
        trace: &mut Trace,
    ) -> Result<usize, NetworkError> {
        trace.message(
            &self.id,
            AUC_ID,
            "SEND_AUTH_INFO",
            [("imsi", imsi.to_string()), ("n", n.to_string())],
        );
        let triples = home.auc_request_triples(imsi, n, rng)?;
        let rands: Vec<String> = triples.iter().map(|t| hex::encode(t.rand.as_bytes())).collect();
        trace.message(
            AUC_ID,
            &self.id,
            "AUTH_INFO",
            [("imsi", imsi.to_string()), ("rands", rands.join(","))],
        );
        let count = triples.len();
        self.store.insert(*imsi, triples);
        Ok(count)
    }

    /// AUTHENTICATION REQUEST towards `peer`. Returns the RAND sent and keeps
    /// the triple as the outstanding challenge.
    pub fn vlr_challenge(
        &mut self,
        imsi: &Imsi,
        peer: &str,
        rng: &mut dyn RngCore,
        trace: &mut Trace,
    ) -> Result<Rand128, NetworkError> {
        let triple = self.store.take(imsi, rng)?;
        self.pending.insert(*imsi, triple);
        trace.message(
            &self.id,
            peer,
            "AUTH_REQUEST",
            [("rand", hex::encode(triple.rand.as_bytes()))],
        );
        Ok(triple.rand)
    }

    /// Compares SRES with XRES for the outstanding challenge.
    pub fn vlr_verify(&mut self, imsi: &Imsi, sres: &Tag64, trace: &mut Trace) -> Result<VlrVerdict, NetworkError> {
        let triple = self
            .pending
            .remove(imsi)
            .ok_or(NetworkError::NoOutstandingChallenge(*imsi))?;
        let verdict = if triple.xres == *sres {
            VlrVerdict::Authenticated
        } else {
            VlrVerdict::Rejected
        };
        trace.state(
            &self.id,
            "AUTH_RESULT",
            [("imsi", imsi.to_string()), ("result", verdict.name().to_string())],
        );
        Ok(verdict)
    }

    /// Cipher commanded after successful authentication; independent of the
    /// subscriber.
    pub fn vlr_select_cipher(&self) -> CipherAlgId {
        self.cipher
    }

    /// Drops an outstanding challenge that was never answered.
    pub fn abandon(&mut self, imsi: &Imsi, trace: &mut Trace) {
        if self.pending.remove(imsi).is_some() {
            trace.state(&self.id, "CHALLENGE_ABANDONED", [("imsi", imsi.to_string())]);
        }
    }
}
