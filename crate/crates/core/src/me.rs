//! Mobile equipment: an unmodified GSM phone with a SIM inserted.
//!
//! Nothing in here looks at the SIM's mode. The ME forwards challenges, obeys
//! proactive commands, applies whatever cipher the network picks, and sends
//! SRES upstream only when the SIM answered with `90 00`.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::auth::Rand128;
use crate::crypto::{a5_keystream, CipherAlgId, Tag64};
use crate::sim::{join_ids, ChannelId, SimError, SimState, SimStatus, StkCommand, TerminalProfile, TerminalResponse};
use crate::trace::Trace;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MeError {
    #[error("SIM error: {0}")]
    Sim(#[from] SimError),
    #[error("cipher {0:?} requested before a session key exists")]
    CipherWithoutKey(CipherAlgId),
    #[error("ME is not attached to a network")]
    Detached,
    #[error("ME refuses traffic on a session without completed authentication")]
    UnauthenticatedTraffic,
    #[error("channel identifiers exhausted")]
    ChannelsExhausted,
}

fn yes() -> bool {
    true
}

/// Behavioural knobs for one handset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeProfile {
    #[serde(default = "yes")]
    pub class_e_supported: bool,
    #[serde(default)]
    pub accepts_unauthenticated: bool,
    /// Sends SRES upstream even when the SIM then tears the connection down.
    #[serde(default)]
    pub leaky: bool,
}

impl Default for MeProfile {
    fn default() -> Self {
        MeProfile {
            class_e_supported: true,
            accepts_unauthenticated: false,
            leaky: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelTable {
    open: BTreeSet<ChannelId>,
    next_id: u16,
}

impl Default for ChannelTable {
    fn default() -> Self {
        ChannelTable {
            open: BTreeSet::new(),
            next_id: 1,
        }
    }
}

impl ChannelTable {
    pub fn open(&mut self) -> Result<ChannelId, MeError> {
        let id = ChannelId::try_from(self.next_id).map_err(|_| MeError::ChannelsExhausted)?;
        self.next_id += 1;
        self.open.insert(id);
        Ok(id)
    }

    pub fn close(&mut self, id: ChannelId) -> bool {
        self.open.remove(&id)
    }

    pub fn open_ids(&self) -> Vec<ChannelId> {
        self.open.iter().copied().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.open.is_empty()
    }

    fn clear(&mut self) {
        self.open.clear();
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeSession {
    pub kc: Option<Tag64>,
    pub cipher: CipherAlgId,
    pub channels: ChannelTable,
    pub attached_network: Option<String>,
}

impl Default for MeSession {
    fn default() -> Self {
        MeSession {
            kc: None,
            cipher: CipherAlgId::None,
            channels: ChannelTable::default(),
            attached_network: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChallengeOutcome {
    Responded { sres: Tag64 },
    ConnectionDropped { leaked_sres: Option<Tag64> },
}

/// A handset (ME) together with its SIM.
#[derive(Debug, Clone)]
pub struct UserEquipment {
    id: String,
    profile: MeProfile,
    session: MeSession,
    sim: SimState,
}

impl UserEquipment {
    pub fn new(profile: MeProfile, sim: SimState) -> Self {
        UserEquipment {
            id: format!("me:{}", sim.imsi()),
            profile,
            session: MeSession::default(),
            sim,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn profile(&self) -> &MeProfile {
        &self.profile
    }

    pub fn session(&self) -> &MeSession {
        &self.session
    }

    pub fn sim(&self) -> &SimState {
        &self.sim
    }

    /// SIM initialisation: TERMINAL PROFILE.
    pub fn power_on(&mut self, trace: &mut Trace) -> Result<(), MeError> {
        let class_e = self.profile.class_e_supported;
        trace.message(
            &self.id,
            &self.sim.actor_id(),
            "TERMINAL_PROFILE",
            [("class_e", class_e.to_string())],
        );
        self.sim.init(TerminalProfile { class_e })?;
        Ok(())
    }

    /// Switches the handset off and on again. The SIM's non-volatile state
    /// goes through its snapshot format; everything else is lost.
    pub fn power_cycle(&mut self, trace: &mut Trace) -> Result<(), MeError> {
        let snapshot = self.sim.to_string();
        let mut sim: SimState = snapshot.parse()?;
        sim.power_cycle();
        self.sim = sim;
        self.session.kc = None;
        self.session.cipher = CipherAlgId::None;
        self.session.attached_network = None;
        self.session.channels.clear();
        trace.state(
            &self.id,
            "POWER_CYCLE",
            [("sim_counter", self.sim.counter().to_string())],
        );
        self.power_on(trace)
    }

    pub fn attach(&mut self, network: &str, trace: &mut Trace) {
        trace.message(&self.id, network, "ATTACH", [("imsi", self.sim.imsi().to_string())]);
        self.session.attached_network = Some(network.to_string());
        self.session.kc = None;
        self.session.cipher = CipherAlgId::None;
    }

    fn network(&self) -> Result<String, MeError> {
        self.session.attached_network.clone().ok_or(MeError::Detached)
    }

    pub fn open_channel(&mut self, trace: &mut Trace) -> Result<ChannelId, MeError> {
        let network = self.network()?;
        let id = self.session.channels.open()?;
        trace.message(&self.id, &network, "OPEN_CHANNEL", [("channel", id.to_string())]);
        Ok(id)
    }

    fn detach(&mut self) {
        self.session.attached_network = None;
        self.session.kc = None;
        self.session.cipher = CipherAlgId::None;
    }

    /// Network sent AUTHENTICATION REJECT.
    pub fn on_auth_reject(&mut self, trace: &mut Trace) {
        self.detach();
        trace.state(&self.id, "DETACHED", [("cause", "auth_reject".to_string())]);
    }

    /// The AKA challenge as seen by the ME, including any
    /// proactive commands the SIM raises along the way.
    pub fn handle_challenge(
        &mut self,
        rand: &Rand128,
        rng: &mut dyn RngCore,
        trace: &mut Trace,
    ) -> Result<ChallengeOutcome, MeError> {
        let network = self.network()?;
        let sim_id = self.sim.actor_id();
        trace.message(
            &self.id,
            &sim_id,
            "RUN_GSM_ALGORITHM",
            [("rand", hex::encode(rand.as_bytes()))],
        );
        let response = self.sim.challenge(rand, &self.id, rng, trace)?;

        let mut status = response.status;
        let mut dropped = false;
        while let SimStatus::ProactivePending { .. } = status {
            trace.message(&self.id, &sim_id, "FETCH", []);
            let result = match self.sim.fetch(&self.id, trace)? {
                StkCommand::GetChannelStatus => {
                    let channels = self.session.channels.open_ids();
                    trace.message(
                        &self.id,
                        &sim_id,
                        "TERMINAL_RESPONSE",
                        [
                            ("command", "get_channel_status".to_string()),
                            ("channels", join_ids(&channels)),
                        ],
                    );
                    TerminalResponse::ChannelStatus { channels }
                }
                StkCommand::CloseChannel { channel_ids } => {
                    let mut success = true;
                    for id in &channel_ids {
                        success &= self.session.channels.close(*id);
                    }
                    dropped = true;
                    trace.message(
                        &self.id,
                        &sim_id,
                        "TERMINAL_RESPONSE",
                        [
                            ("command", "close_channel".to_string()),
                            ("result", if success { "ok" } else { "error" }.to_string()),
                        ],
                    );
                    TerminalResponse::CloseChannel { success }
                }
            };
            status = self.sim.terminal_response(&result, &self.id, trace)?;
        }

        if dropped {
            let leaked_sres = self.profile.leaky.then_some(response.sres);
            if let Some(sres) = leaked_sres {
                trace.message(&self.id, &network, "AUTH_RESPONSE", [("sres", sres.to_string())]);
            }
            self.detach();
            trace.state(&self.id, "CONNECTION_DROPPED", [("network", network)]);
            return Ok(ChallengeOutcome::ConnectionDropped { leaked_sres });
        }

        self.session.kc = Some(response.kc);
        trace.message(
            &self.id,
            &network,
            "AUTH_RESPONSE",
            [("sres", response.sres.to_string())],
        );
        Ok(ChallengeOutcome::Responded { sres: response.sres })
    }

    /// CIPHER MODE COMMAND from the serving network.
    pub fn apply_cipher(&mut self, alg: CipherAlgId) -> Result<(), MeError> {
        if alg != CipherAlgId::None && self.session.kc.is_none() {
            return Err(MeError::CipherWithoutKey(alg));
        }
        self.session.cipher = alg;
        Ok(())
    }

    /// Encrypts one uplink frame under the current cipher and sends it.
    pub fn send_traffic(&mut self, plaintext: &[u8], frame_index: u32, trace: &mut Trace) -> Result<Vec<u8>, MeError> {
        let network = self.network()?;
        let ciphertext = match (self.session.cipher, self.session.kc) {
            (CipherAlgId::None, kc) => {
                if kc.is_none() && !self.profile.accepts_unauthenticated {
                    return Err(MeError::UnauthenticatedTraffic);
                }
                plaintext.to_vec()
            }
            (alg, Some(kc)) => a5_keystream(alg, &kc, frame_index, plaintext.len())
                .expect("cipher is not NONE")
                .apply(plaintext),
            (alg, None) => return Err(MeError::CipherWithoutKey(alg)),
        };
        trace.message(
            &self.id,
            &network,
            "TRAFFIC",
            [
                ("frame", frame_index.to_string()),
                ("alg", self.session.cipher.name().to_string()),
                ("data", hex::encode(&ciphertext)),
            ],
        );
        Ok(ciphertext)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auth::{build_hijacked_rand, legacy_response, Amf16, Sqn48};
    use crate::crypto::Key128;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const KI: Key128 = Key128::new([0x31; 16]);
    const KA: Key128 = Key128::new([0x32; 16]);

    fn ue(enhanced: bool, profile: MeProfile) -> (UserEquipment, Trace) {
        let imsi = "001010000000007".parse().unwrap();
        let sim = if enhanced {
            SimState::enhanced(imsi, KI, KA)
        } else {
            SimState::legacy(imsi, KI)
        };
        let mut ue = UserEquipment::new(profile, sim);
        let mut trace = Trace::new();
        ue.power_on(&mut trace).unwrap();
        ue.attach("vlr", &mut trace);
        (ue, trace)
    }

    fn rand_for(sqn: u64) -> Rand128 {
        build_hijacked_rand(&KA, Amf16(0), Sqn48::new(sqn).unwrap())
    }

    #[test]
    fn valid_challenge_is_answered() {
        let (mut ue, mut trace) = ue(true, MeProfile::default());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rand = rand_for(1);
        let out = ue.handle_challenge(&rand, &mut rng, &mut trace).unwrap();
        let (sres, kc) = legacy_response(&KI, &rand);
        assert_eq!(out, ChallengeOutcome::Responded { sres });
        assert_eq!(ue.session().kc, Some(kc));
    }

    #[test]
    fn replay_drops_connection_and_closes_channels() {
        let (mut ue, mut trace) = ue(true, MeProfile::default());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rand = rand_for(1);
        ue.handle_challenge(&rand, &mut rng, &mut trace).unwrap();
        assert_eq!(ue.open_channel(&mut trace).unwrap(), 1);
        let out = ue.handle_challenge(&rand, &mut rng, &mut trace).unwrap();
        assert_eq!(out, ChallengeOutcome::ConnectionDropped { leaked_sres: None });
        assert!(ue.session().channels.is_empty());
        assert_eq!(ue.session().attached_network, None);
        let after_drop = trace
            .events()
            .iter()
            .rev()
            .take_while(|e| e.name != "SIM_RESPONSE")
            .filter(|e| e.name == "AUTH_RESPONSE")
            .count();
        assert_eq!(after_drop, 0);
    }

    #[test]
    fn leaky_me_sends_placeholder_before_dropping() {
        let profile = MeProfile {
            leaky: true,
            ..MeProfile::default()
        };
        let (mut ue, mut trace) = ue(true, profile);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        ue.open_channel(&mut trace).unwrap();
        let out = ue.handle_challenge(&Rand128([5; 16]), &mut rng, &mut trace).unwrap();
        assert!(matches!(
            out,
            ChallengeOutcome::ConnectionDropped { leaked_sres: Some(_) }
        ));
    }

    #[test]
    fn legacy_sim_answers_replays() {
        let (mut ue, mut trace) = ue(false, MeProfile::default());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        ue.open_channel(&mut trace).unwrap();
        let rand = Rand128([7; 16]);
        for _ in 0..2 {
            let out = ue.handle_challenge(&rand, &mut rng, &mut trace).unwrap();
            assert_eq!(
                out,
                ChallengeOutcome::Responded {
                    sres: legacy_response(&KI, &rand).0
                }
            );
        }
    }

    #[test]
    fn rejection_with_no_open_channel_is_answered_with_placeholder() {
        let (mut ue, mut trace) = ue(true, MeProfile::default());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rand = Rand128([7; 16]);
        let out = ue.handle_challenge(&rand, &mut rng, &mut trace).unwrap();
        match out {
            ChallengeOutcome::Responded { sres } => assert_ne!(sres, legacy_response(&KI, &rand).0),
            other => panic!("{other:?}"),
        }
        assert!(trace.events().iter().any(|e| e.name == "GET_CHANNEL_STATUS"));
        assert!(!trace.events().iter().any(|e| e.name == "CLOSE_CHANNEL"));
    }

    #[test]
    fn cipher_rules() {
        let (mut ue, mut trace) = ue(true, MeProfile::default());
        assert_eq!(ue.apply_cipher(CipherAlgId::None), Ok(()));
        assert_eq!(
            ue.apply_cipher(CipherAlgId::A5_3),
            Err(MeError::CipherWithoutKey(CipherAlgId::A5_3))
        );
        assert_eq!(
            ue.send_traffic(b"hello", 0, &mut trace),
            Err(MeError::UnauthenticatedTraffic)
        );
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        ue.handle_challenge(&rand_for(1), &mut rng, &mut trace).unwrap();
        let kc = ue.session().kc.unwrap();
        assert_eq!(ue.send_traffic(b"hello", 0, &mut trace).unwrap(), b"hello");
        ue.apply_cipher(CipherAlgId::A5_2).unwrap();
        assert_eq!(ue.send_traffic(&[0; 8], 0, &mut trace).unwrap(), kc.as_bytes());
        ue.apply_cipher(CipherAlgId::A5_3).unwrap();
        let pt = b"some voice frame";
        let ct = ue.send_traffic(pt, 9, &mut trace).unwrap();
        let ks: Vec<u8> = ct.iter().zip(pt).map(|(c, p)| c ^ p).collect();
        assert_eq!(ks, a5_keystream(CipherAlgId::A5_3, &kc, 9, pt.len()).unwrap().bytes);
    }

    #[test]
    fn unauthenticated_traffic_allowed_when_configured() {
        let profile = MeProfile {
            accepts_unauthenticated: true,
            ..MeProfile::default()
        };
        let (mut ue, mut trace) = ue(true, profile);
        assert_eq!(ue.send_traffic(b"hi", 0, &mut trace).unwrap(), b"hi");
    }

    #[test]
    fn detached_session_cannot_send() {
        let (mut ue, mut trace) = ue(true, MeProfile::default());
        ue.on_auth_reject(&mut trace);
        assert_eq!(ue.send_traffic(b"x", 0, &mut trace), Err(MeError::Detached));
    }

    #[test]
    fn channel_ids_are_not_reused() {
        let mut table = ChannelTable::default();
        let a = table.open().unwrap();
        table.close(a);
        assert_ne!(table.open().unwrap(), a);
    }

    #[test]
    fn power_cycle_preserves_sim_counter() {
        let (mut ue, mut trace) = ue(true, MeProfile::default());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        ue.handle_challenge(&rand_for(4), &mut rng, &mut trace).unwrap();
        ue.power_cycle(&mut trace).unwrap();
        assert_eq!(ue.sim().counter().value(), 4);
        assert!(ue.sim().is_initialized());
        assert_eq!(ue.session().attached_network, None);
    }
}
