//! False base station attacks.
//!
//! Two attacks are modelled. Neither reads a key or any AuC state; the only
//! inputs are the passive intercept log, the victim's behaviour on the air
//! interface, and (for the relay) a SIM the attacker legitimately owns.
//!
//! * Man-in-the-middle eavesdropping: impersonate a serving network, run AKA
//!   with whatever RAND is at hand, never enable encryption towards the
//!   victim, and relay the traffic through the attacker's own subscription.
//! * Barkan-Biham-Keller replay: send a RAND captured from an earlier
//!   genuine session, force A5/2, recover Kc from one known-plaintext frame
//!   and decrypt the captured A5/1 or A5/3 traffic with it.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::auth::Rand128;
use crate::crypto::{a5_keystream, CipherAlgId, Tag64};
use crate::me::{ChallengeOutcome, MeError, UserEquipment};
use crate::network::{HomeNetwork, Imsi, NetworkError, ServingNetwork, VlrVerdict};
use crate::trace::Trace;

/// Plaintext redundancy the attacker can count on at the start of a frame.
pub const KNOWN_HEADER: [u8; 8] = [0; 8];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdversaryError {
    #[error("intercept log holds no usable session for {0}")]
    EmptyLog(Imsi),
    #[error("relaying a fresh RAND needs a genuine-network leg")]
    NoRelayLeg,
    #[error(transparent)]
    Me(#[from] MeError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapturedFrame {
    pub frame_index: u32,
    pub alg: CipherAlgId,
    pub ciphertext: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterceptRecord {
    pub imsi: Imsi,
    pub rand: Rand128,
    pub sres: Option<Tag64>,
    pub frames: Vec<CapturedFrame>,
}

/// What a passive eavesdropper collected. Append-only.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InterceptLog {
    records: Vec<InterceptRecord>,
}

impl InterceptLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[InterceptRecord] {
        &self.records
    }

    pub fn log_exchange(&mut self, imsi: Imsi, rand: Rand128, sres: Option<Tag64>) {
        self.records.push(InterceptRecord {
            imsi,
            rand,
            sres,
            frames: Vec::new(),
        });
    }

    /// Attaches a frame to the latest exchange seen for `imsi`.
    pub fn log_frame(&mut self, imsi: &Imsi, frame: CapturedFrame) -> bool {
        match self.records.iter_mut().rev().find(|r| r.imsi == *imsi) {
            Some(r) => {
                r.frames.push(frame);
                true
            }
            None => false,
        }
    }

    pub fn latest_for(&self, imsi: &Imsi) -> Option<&InterceptRecord> {
        self.records.iter().rev().find(|r| r.imsi == *imsi)
    }

    /// Latest exchange whose traffic went out under a strong cipher.
    pub fn latest_strong_session(&self, imsi: &Imsi) -> Option<&InterceptRecord> {
        self.records.iter().rev().find(|r| {
            r.imsi == *imsi
                && r.frames
                    .iter()
                    .any(|f| matches!(f.alg, CipherAlgId::A5_1 | CipherAlgId::A5_3))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    MitmEavesdrop,
    BbkReplay,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::MitmEavesdrop => "mitm_eavesdrop",
            AttackKind::BbkReplay => "bbk_replay",
        }
    }
}

/// Where the false base station gets the RAND it challenges the victim with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandSource {
    /// Any 128 bits the attacker likes.
    #[default]
    Fabricated,
    /// The latest RAND captured for the victim.
    Replay,
    /// A fresh challenge obtained live from the genuine network.
    RelayFresh,
    /// No authentication at all.
    SkipAka,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackReport {
    pub attack: AttackKind,
    pub victim: Imsi,
    pub succeeded: bool,
    pub recovered_kc: Option<Tag64>,
    pub recovered_plaintext: Option<Vec<u8>>,
    pub failure_cause: Option<String>,
    pub note: Option<String>,
}

impl AttackReport {
    fn new(attack: AttackKind, victim: Imsi) -> Self {
        AttackReport {
            attack,
            victim,
            succeeded: false,
            recovered_kc: None,
            recovered_plaintext: None,
            failure_cause: None,
            note: None,
        }
    }

    fn failed(mut self, cause: &str) -> Self {
        self.succeeded = false;
        self.failure_cause = Some(cause.to_string());
        self
    }

    pub fn record(&self, actor: &str, trace: &mut Trace) {
        let mut fields = Vec::from([
            ("attack", self.attack.name().to_string()),
            ("victim", self.victim.to_string()),
            ("succeeded", self.succeeded.to_string()),
        ]);
        if let Some(kc) = self.recovered_kc {
            fields.push(("recovered_kc", kc.to_string()));
        }
        if let Some(p) = &self.recovered_plaintext {
            fields.push(("recovered_plaintext", hex::encode(p)));
        }
        if let Some(c) = &self.failure_cause {
            fields.push(("failure_cause", c.clone()));
        }
        if let Some(n) = &self.note {
            fields.push(("note", n.clone()));
        }
        trace.state(actor, "ATTACK_REPORT", fields);
    }
}

/// Frame the victim really sent; used only to judge an attack, never by it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthFrame {
    pub rand: Rand128,
    pub frame_index: u32,
    pub plaintext: Vec<u8>,
}

/// The attacker's legitimate subscription towards the real network.
pub struct RelayLeg<'a> {
    pub attacker: &'a mut UserEquipment,
    pub serving: &'a mut ServingNetwork,
    pub home: &'a mut HomeNetwork,
    pub batch_size: u64,
}

impl RelayLeg<'_> {
    fn ensure_triples(&mut self, imsi: &Imsi, rng: &mut dyn RngCore, trace: &mut Trace) -> Result<(), NetworkError> {
        if self.serving.store().remaining(imsi) == 0 {
            self.serving
                .request_triples(self.home, imsi, self.batch_size.max(1), rng, trace)?;
        }
        Ok(())
    }

    /// Attaches the attacker's own handset and authenticates it.
    fn bring_up(&mut self, rng: &mut dyn RngCore, trace: &mut Trace) -> Result<bool, AdversaryError> {
        let imsi = *self.attacker.sim().imsi();
        self.attacker.attach(self.serving.id(), trace);
        self.ensure_triples(&imsi, rng, trace)?;
        let rand = self.serving.vlr_challenge(&imsi, self.attacker.id(), rng, trace)?;
        match self.attacker.handle_challenge(&rand, rng, trace)? {
            ChallengeOutcome::Responded { sres } => {
                if self.serving.vlr_verify(&imsi, &sres, trace)? == VlrVerdict::Authenticated {
                    let alg = self.serving.vlr_select_cipher();
                    trace.message(
                        self.serving.id(),
                        self.attacker.id(),
                        "CIPHER_MODE_COMMAND",
                        [("alg", alg.name().to_string())],
                    );
                    self.attacker.apply_cipher(alg)?;
                    return Ok(true);
                }
                Ok(false)
            }
            ChallengeOutcome::ConnectionDropped { .. } => {
                self.serving.abandon(&imsi, trace);
                Ok(false)
            }
        }
    }
}

/// A false base station.
#[derive(Debug, Clone)]
pub struct FalseBaseStation {
    id: String,
}

impl FalseBaseStation {
    pub fn new(id: &str) -> Self {
        FalseBaseStation { id: id.to_string() }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    fn challenge(
        &self,
        victim: &mut UserEquipment,
        rand: &Rand128,
        rng: &mut dyn RngCore,
        trace: &mut Trace,
    ) -> Result<ChallengeOutcome, MeError> {
        trace.message(
            &self.id,
            victim.id(),
            "AUTH_REQUEST",
            [("rand", hex::encode(rand.as_bytes()))],
        );
        victim.handle_challenge(rand, rng, trace)
    }

    fn command_cipher(&self, victim: &mut UserEquipment, alg: CipherAlgId, trace: &mut Trace) -> Result<(), MeError> {
        trace.message(
            &self.id,
            victim.id(),
            "CIPHER_MODE_COMMAND",
            [("alg", alg.name().to_string())],
        );
        victim.apply_cipher(alg)
    }

    /// Impersonates a serving network towards `victim` and relays its
    /// traffic in the clear. Succeeds iff the victim's frame is observed as
    /// plaintext.
    #[allow(clippy::too_many_arguments)]
    pub fn fake_network_attach(
        &self,
        victim: &mut UserEquipment,
        mut relay: Option<RelayLeg<'_>>,
        source: RandSource,
        log: &InterceptLog,
        victim_plaintext: &[u8],
        rng: &mut dyn RngCore,
        trace: &mut Trace,
    ) -> Result<AttackReport, AdversaryError> {
        let victim_imsi = *victim.sim().imsi();
        let mut report = AttackReport::new(AttackKind::MitmEavesdrop, victim_imsi);

        victim.attach(&self.id, trace);
        victim.open_channel(trace)?;

        let rand = match source {
            RandSource::Fabricated => Some(Rand128::random(rng)),
            RandSource::Replay => Some(
                log.latest_for(&victim_imsi)
                    .ok_or(AdversaryError::EmptyLog(victim_imsi))?
                    .rand,
            ),
            RandSource::RelayFresh => {
                let leg = relay.as_mut().ok_or(AdversaryError::NoRelayLeg)?;
                leg.ensure_triples(&victim_imsi, rng, trace)?;
                Some(leg.serving.vlr_challenge(&victim_imsi, &self.id, rng, trace)?)
            }
            RandSource::SkipAka => None,
        };

        if let Some(rand) = rand {
            match self.challenge(victim, &rand, rng, trace)? {
                ChallengeOutcome::ConnectionDropped { .. } => {
                    if source == RandSource::RelayFresh {
                        if let Some(leg) = relay.as_mut() {
                            leg.serving.abandon(&victim_imsi, trace);
                        }
                    }
                    let report = report.failed("connection dropped by SIM");
                    report.record(&self.id, trace);
                    return Ok(report);
                }
                ChallengeOutcome::Responded { sres } => {
                    if source == RandSource::RelayFresh {
                        let leg = relay.as_mut().ok_or(AdversaryError::NoRelayLeg)?;
                        trace.message(
                            &self.id,
                            leg.serving.id(),
                            "AUTH_RESPONSE",
                            [("sres", sres.to_string())],
                        );
                        let verdict = leg.serving.vlr_verify(&victim_imsi, &sres, trace)?;
                        report.note = Some(format!(
                            "fresh genuine RAND relayed at AKA time; SIM accepted, network {}",
                            verdict.name()
                        ));
                    }
                }
            }
        }

        self.command_cipher(victim, CipherAlgId::None, trace)?;

        let relay_up = match relay.as_mut() {
            Some(leg) => leg.bring_up(rng, trace)?,
            None => false,
        };

        let observed = match victim.send_traffic(victim_plaintext, 0, trace) {
            Ok(ct) => ct,
            Err(MeError::UnauthenticatedTraffic) => {
                let report = report.failed("ME refused traffic without authentication");
                report.record(&self.id, trace);
                return Ok(report);
            }
            Err(e) => return Err(e.into()),
        };
        trace.state(
            &self.id,
            "INTERCEPT",
            [("frame", "0".to_string()), ("data", hex::encode(&observed))],
        );

        if relay_up {
            if let Some(leg) = relay.as_mut() {
                leg.attacker.send_traffic(&observed, 0, trace)?;
            }
        }

        if observed == victim_plaintext {
            report.succeeded = true;
            report.recovered_plaintext = Some(observed);
        } else {
            report = report.failed("victim traffic not observed in plaintext");
        }
        report.record(&self.id, trace);
        Ok(report)
    }

    /// Replays a captured RAND, forces A5/2 and uses the recovered Kc on the
    /// captured strong-cipher traffic.
    pub fn bbk_attack(
        &self,
        log: &InterceptLog,
        victim: &mut UserEquipment,
        ground_truth: &[GroundTruthFrame],
        rng: &mut dyn RngCore,
        trace: &mut Trace,
    ) -> Result<AttackReport, AdversaryError> {
        let victim_imsi = *victim.sim().imsi();
        let session = log
            .latest_strong_session(&victim_imsi)
            .ok_or(AdversaryError::EmptyLog(victim_imsi))?;
        let report = AttackReport::new(AttackKind::BbkReplay, victim_imsi);

        victim.attach(&self.id, trace);
        victim.open_channel(trace)?;

        if let ChallengeOutcome::ConnectionDropped { .. } = self.challenge(victim, &session.rand, rng, trace)? {
            let report = report.failed("connection dropped by SIM before any A5/2 frame");
            report.record(&self.id, trace);
            return Ok(report);
        }
        self.command_cipher(victim, CipherAlgId::A5_2, trace)?;

        let mut frame = Vec::from(KNOWN_HEADER);
        frame.extend_from_slice(b"MEASUREMENT-REPORT");
        let ciphertext = victim.send_traffic(&frame, 0, trace)?;
        let kc = recover_kc_from_weak_frame(&ciphertext, &KNOWN_HEADER, 0);
        trace.state(&self.id, "KC_RECOVERED", [("kc", kc.to_string())]);

        let mut report = report;
        report.recovered_kc = Some(kc);
        let mut decrypted = Vec::new();
        let mut all_match = true;
        for f in &session.frames {
            let plain = a5_keystream(f.alg, &kc, f.frame_index, f.ciphertext.len())
                .map(|ks| ks.apply(&f.ciphertext))
                .unwrap_or_else(|_| f.ciphertext.clone());
            let truth = ground_truth
                .iter()
                .find(|g| g.rand == session.rand && g.frame_index == f.frame_index);
            all_match &= truth.is_some_and(|g| g.plaintext == plain);
            decrypted.extend_from_slice(&plain);
        }
        report.recovered_plaintext = Some(decrypted);
        if all_match {
            report.succeeded = true;
        } else {
            report = report.failed("captured traffic does not decrypt under the recovered key");
        }
        report.record(&self.id, trace);
        Ok(report)
    }
}

/// Inverts the weak A5/2 model: keystream octets are `kc ⊕ frame_be64`,
/// so eight known plaintext octets give Kc directly.
pub fn recover_kc_from_weak_frame(ciphertext: &[u8], known_plaintext: &[u8; 8], frame_index: u32) -> Tag64 {
    let mut ks = [0u8; 8];
    for (i, k) in ks.iter_mut().enumerate() {
        *k = ciphertext[i] ^ known_plaintext[i];
    }
    Tag64::new(ks).xor(&Tag64::new(u64::from(frame_index).to_be_bytes()))
}
