//! Deterministic scenario engine.
//!
//! A scenario provisions subscribers, wires one genuine serving network, an
//! optional attacker (false base station plus passive eavesdropper), and runs
//! a script of steps on a single timeline. All randomness comes from one
//! ChaCha20 stream seeded by `ScenarioConfig::seed`, so a config maps to
//! exactly one trace.

mod predicate;

pub use predicate::{assert_trace, AssertOutcome, EventPattern, PredicateError, TracePredicate};

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{
    AdversaryError, AttackKind, AttackReport, CapturedFrame, FalseBaseStation, GroundTruthFrame, InterceptLog,
    RandSource, RelayLeg,
};
use crate::auth::{Amf16, Rand128};
use crate::crypto::{CipherAlgId, Key128};
use crate::me::{ChallengeOutcome, MeError, MeProfile, UserEquipment};
use crate::network::{ConsumptionPolicy, HomeNetwork, Imsi, NetworkError, ServingNetwork, VlrVerdict};
use crate::sim::SimMode;
use crate::trace::{Trace, TraceEvent};

pub const HARNESS_ID: &str = "harness";
pub const VLR_ID: &str = "vlr";
pub const FBS_ID: &str = "fbs";

fn default_batch() -> u64 {
    4
}

fn default_cipher() -> CipherAlgId {
    CipherAlgId::A5_3
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkPolicy {
    #[serde(default)]
    pub consumption: ConsumptionPolicy,
    #[serde(default = "default_cipher")]
    pub cipher: CipherAlgId,
    #[serde(default = "default_batch")]
    pub batch_size: u64,
    #[serde(default)]
    pub amf: u16,
}

impl Default for NetworkPolicy {
    fn default() -> Self {
        NetworkPolicy {
            consumption: ConsumptionPolicy::InOrder,
            cipher: default_cipher(),
            batch_size: default_batch(),
            amf: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubscriberConfig {
    pub imsi: Imsi,
    pub mode: SimMode,
    #[serde(default)]
    pub me: MeProfile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackerConfig {
    pub kind: AttackKind,
    /// The attacker's own (legacy) subscription on the genuine network.
    pub imsi: Imsi,
    #[serde(default)]
    pub rand_source: RandSource,
    /// Route the victim's traffic through the attacker's own subscription.
    #[serde(default = "yes")]
    pub relay: bool,
    /// What the victim says while attached to the false base station.
    #[serde(default)]
    pub victim_payload: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[allow(clippy::large_enum_variant)]
pub enum ScenarioStep {
    /// Attach a UE to the genuine serving network.
    Attach {
        ue: Imsi,
    },
    /// VLR fetches a batch from the AuC (`n` defaults to the policy batch size).
    RequestTriples {
        ue: Imsi,
        #[serde(default)]
        n: Option<u64>,
    },
    /// One full AKA run on the genuine network, including cipher selection.
    Challenge {
        ue: Imsi,
    },
    SendTraffic {
        ue: Imsi,
        #[serde(default)]
        frame: u32,
        payload: String,
    },
    PowerCycleUe {
        ue: Imsi,
    },
    OpenChannel {
        ue: Imsi,
    },
    RunAttack {
        victim: Imsi,
    },
    Assert {
        label: String,
        predicate: TracePredicate,
    },
}

impl ScenarioStep {
    pub fn kind(&self) -> &'static str {
        match self {
            ScenarioStep::Attach { .. } => "attach",
            ScenarioStep::RequestTriples { .. } => "request_triples",
            ScenarioStep::Challenge { .. } => "challenge",
            ScenarioStep::SendTraffic { .. } => "send_traffic",
            ScenarioStep::PowerCycleUe { .. } => "power_cycle_ue",
            ScenarioStep::OpenChannel { .. } => "open_channel",
            ScenarioStep::RunAttack { .. } => "run_attack",
            ScenarioStep::Assert { .. } => "assert",
        }
    }

    fn ue(&self) -> Option<&Imsi> {
        match self {
            ScenarioStep::Attach { ue }
            | ScenarioStep::RequestTriples { ue, .. }
            | ScenarioStep::Challenge { ue }
            | ScenarioStep::SendTraffic { ue, .. }
            | ScenarioStep::PowerCycleUe { ue }
            | ScenarioStep::OpenChannel { ue } => Some(ue),
            ScenarioStep::RunAttack { victim } => Some(victim),
            ScenarioStep::Assert { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    #[serde(default)]
    pub network: NetworkPolicy,
    pub subscribers: Vec<SubscriberConfig>,
    #[serde(default)]
    pub attacker: Option<AttackerConfig>,
    #[serde(default)]
    pub script: Vec<ScenarioStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("IMSI {0} listed twice")]
    DuplicateImsi(Imsi),
    #[error("step {step} refers to unprovisioned IMSI {imsi}")]
    UnknownImsi { step: usize, imsi: Imsi },
    #[error("step {0} runs an attack but no attacker is configured")]
    NoAttacker(usize),
    #[error("batch_size must be at least 1")]
    ZeroBatch,
    #[error("attacker: {0}")]
    Attacker(&'static str),
    #[error("step {step}: {source}")]
    Predicate { step: usize, source: PredicateError },
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut seen = BTreeMap::new();
        for s in &self.subscribers {
            if seen.insert(s.imsi, ()).is_some() {
                return Err(ConfigError::DuplicateImsi(s.imsi));
            }
        }
        if self.network.batch_size == 0 {
            return Err(ConfigError::ZeroBatch);
        }
        if let Some(a) = &self.attacker {
            if seen.contains_key(&a.imsi) {
                return Err(ConfigError::DuplicateImsi(a.imsi));
            }
            if a.kind == AttackKind::MitmEavesdrop && a.rand_source == RandSource::RelayFresh && !a.relay {
                return Err(ConfigError::Attacker("relay_fresh needs relay = true"));
            }
        }
        for (i, step) in self.script.iter().enumerate() {
            if let Some(imsi) = step.ue() {
                if !seen.contains_key(imsi) {
                    return Err(ConfigError::UnknownImsi { step: i, imsi: *imsi });
                }
            }
            match step {
                ScenarioStep::RunAttack { .. } if self.attacker.is_none() => {
                    return Err(ConfigError::NoAttacker(i));
                }
                ScenarioStep::Assert { predicate, .. } => predicate
                    .validate()
                    .map_err(|source| ConfigError::Predicate { step: i, source })?,
                ScenarioStep::RequestTriples { n: Some(0), .. } => return Err(ConfigError::ZeroBatch),
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("step {step} ({kind}): {source}")]
    Me {
        step: usize,
        kind: &'static str,
        source: MeError,
    },
    #[error("step {step} ({kind}): {source}")]
    Network {
        step: usize,
        kind: &'static str,
        source: NetworkError,
    },
    #[error("step {step} ({kind}): {source}")]
    Adversary {
        step: usize,
        kind: &'static str,
        source: AdversaryError,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Attack(AttackReport),
    Assertion {
        step: usize,
        label: String,
        outcome: AssertOutcome,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioRun {
    pub trace: Vec<TraceEvent>,
    pub verdicts: Vec<Verdict>,
    /// Set when an actor error aborted the script; `trace` is then partial.
    pub error: Option<ScenarioError>,
}

impl ScenarioRun {
    pub fn assertions_passed(&self) -> bool {
        self.verdicts.iter().all(|v| match v {
            Verdict::Assertion { outcome, .. } => outcome.passed,
            Verdict::Attack(_) => true,
        })
    }

    pub fn attack_reports(&self) -> impl Iterator<Item = &AttackReport> {
        self.verdicts.iter().filter_map(|v| match v {
            Verdict::Attack(r) => Some(r),
            _ => None,
        })
    }
}

enum StepError {
    Me(MeError),
    Network(NetworkError),
    Adversary(AdversaryError),
}

impl From<MeError> for StepError {
    fn from(e: MeError) -> Self {
        StepError::Me(e)
    }
}

impl From<NetworkError> for StepError {
    fn from(e: NetworkError) -> Self {
        StepError::Network(e)
    }
}

impl From<AdversaryError> for StepError {
    fn from(e: AdversaryError) -> Self {
        StepError::Adversary(e)
    }
}

struct Attacker {
    config: AttackerConfig,
    ue: UserEquipment,
    fbs: FalseBaseStation,
    log: InterceptLog,
}

struct World {
    rng: ChaCha20Rng,
    trace: Trace,
    home: HomeNetwork,
    serving: ServingNetwork,
    ues: BTreeMap<Imsi, UserEquipment>,
    attacker: Option<Attacker>,
    last_rand: BTreeMap<Imsi, Rand128>,
    ground_truth: Vec<GroundTruthFrame>,
    batch_size: u64,
    verdicts: Vec<Verdict>,
}

fn random_key(rng: &mut dyn RngCore) -> Key128 {
    let mut k = [0u8; 16];
    rng.fill_bytes(&mut k);
    Key128::new(k)
}

impl World {
    fn build(config: &ScenarioConfig) -> Result<Self, StepError> {
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        let mut trace = Trace::new();
        let mut home = HomeNetwork::new(Amf16(config.network.amf));
        trace.state(
            HARNESS_ID,
            "SCENARIO_START",
            [
                ("seed", config.seed.to_string()),
                ("consumption", policy_name(config.network.consumption).to_string()),
                ("cipher", config.network.cipher.name().to_string()),
            ],
        );
        let mut ues = BTreeMap::new();
        for sub in &config.subscribers {
            let master = random_key(&mut rng);
            let (_, sim) = home.auc_provision(sub.imsi, sub.mode, &master)?;
            trace.state(
                crate::network::AUC_ID,
                "PROVISIONED",
                [("imsi", sub.imsi.to_string()), ("mode", sub.mode.name().to_string())],
            );
            let mut ue = UserEquipment::new(sub.me, sim);
            ue.power_on(&mut trace)?;
            ues.insert(sub.imsi, ue);
        }
        let attacker = match &config.attacker {
            None => None,
            Some(a) => {
                let master = random_key(&mut rng);
                let (_, sim) = home.auc_provision(a.imsi, SimMode::Legacy, &master)?;
                trace.state(
                    crate::network::AUC_ID,
                    "PROVISIONED",
                    [("imsi", a.imsi.to_string()), ("mode", "legacy".to_string())],
                );
                let mut ue = UserEquipment::new(MeProfile::default(), sim);
                ue.power_on(&mut trace)?;
                Some(Attacker {
                    config: a.clone(),
                    ue,
                    fbs: FalseBaseStation::new(FBS_ID),
                    log: InterceptLog::new(),
                })
            }
        };
        Ok(World {
            rng,
            trace,
            home,
            serving: ServingNetwork::new(VLR_ID, config.network.consumption, config.network.cipher),
            ues,
            attacker,
            last_rand: BTreeMap::new(),
            ground_truth: Vec::new(),
            batch_size: config.network.batch_size,
            verdicts: Vec::new(),
        })
    }

    fn step(&mut self, index: usize, step: &ScenarioStep) -> Result<(), StepError> {
        self.trace.state(
            HARNESS_ID,
            "STEP",
            [("index", index.to_string()), ("kind", step.kind().to_string())],
        );
        match step {
            ScenarioStep::Attach { ue } => {
                let ue = self.ues.get_mut(ue).expect("validated IMSI");
                ue.attach(VLR_ID, &mut self.trace);
            }
            ScenarioStep::RequestTriples { ue, n } => {
                let n = n.unwrap_or(self.batch_size);
                self.serving
                    .request_triples(&mut self.home, ue, n, &mut self.rng, &mut self.trace)?;
            }
            ScenarioStep::Challenge { ue } => self.challenge(ue)?,
            ScenarioStep::SendTraffic { ue, frame, payload } => {
                let imsi = *ue;
                let ue = self.ues.get_mut(&imsi).expect("validated IMSI");
                let ciphertext = ue.send_traffic(payload.as_bytes(), *frame, &mut self.trace)?;
                let alg = ue.session().cipher;
                if let Some(rand) = self.last_rand.get(&imsi) {
                    self.ground_truth.push(GroundTruthFrame {
                        rand: *rand,
                        frame_index: *frame,
                        plaintext: payload.as_bytes().to_vec(),
                    });
                }
                if let Some(att) = self.attacker.as_mut() {
                    att.log.log_frame(
                        &imsi,
                        CapturedFrame {
                            frame_index: *frame,
                            alg,
                            ciphertext,
                        },
                    );
                }
            }
            ScenarioStep::PowerCycleUe { ue } => {
                let ue = self.ues.get_mut(ue).expect("validated IMSI");
                ue.power_cycle(&mut self.trace)?;
            }
            ScenarioStep::OpenChannel { ue } => {
                let ue = self.ues.get_mut(ue).expect("validated IMSI");
                ue.open_channel(&mut self.trace)?;
            }
            ScenarioStep::RunAttack { victim } => self.attack(victim)?,
            ScenarioStep::Assert { label, predicate } => {
                let outcome = assert_trace(self.trace.events(), predicate).expect("validated predicate");
                let mut fields = Vec::from([("label", label.clone()), ("passed", outcome.passed.to_string())]);
                if let Some(at) = outcome.divergence {
                    fields.push(("divergence", at.to_string()));
                    fields.push(("detail", outcome.detail.clone()));
                }
                self.trace.state(HARNESS_ID, "ASSERT", fields);
                self.verdicts.push(Verdict::Assertion {
                    step: index,
                    label: label.clone(),
                    outcome,
                });
            }
        }
        Ok(())
    }

    fn challenge(&mut self, imsi: &Imsi) -> Result<(), StepError> {
        let ue = self.ues.get_mut(imsi).expect("validated IMSI");
        let rand = self
            .serving
            .vlr_challenge(imsi, ue.id(), &mut self.rng, &mut self.trace)?;
        self.last_rand.insert(*imsi, rand);
        let outcome = ue.handle_challenge(&rand, &mut self.rng, &mut self.trace)?;
        let sres = match outcome {
            ChallengeOutcome::Responded { sres } => Some(sres),
            ChallengeOutcome::ConnectionDropped { leaked_sres } => leaked_sres,
        };
        if let Some(att) = self.attacker.as_mut() {
            att.log.log_exchange(*imsi, rand, sres);
        }
        let Some(sres) = sres else {
            self.serving.abandon(imsi, &mut self.trace);
            return Ok(());
        };
        let verdict = self.serving.vlr_verify(imsi, &sres, &mut self.trace)?;
        let ue_id = ue.id().to_string();
        let still_attached = ue.session().attached_network.is_some();
        match verdict {
            VlrVerdict::Authenticated => {
                let alg = self.serving.vlr_select_cipher();
                self.trace
                    .message(VLR_ID, &ue_id, "CIPHER_MODE_COMMAND", [("alg", alg.name().to_string())]);
                ue.apply_cipher(alg)?;
            }
            VlrVerdict::Rejected => {
                self.trace.message(VLR_ID, &ue_id, "AUTH_REJECT", []);
                if still_attached {
                    ue.on_auth_reject(&mut self.trace);
                }
            }
        }
        Ok(())
    }

    fn attack(&mut self, victim_imsi: &Imsi) -> Result<(), StepError> {
        let att = self.attacker.as_mut().expect("validated attacker");
        let victim = self.ues.get_mut(victim_imsi).expect("validated IMSI");
        let report = match att.config.kind {
            AttackKind::MitmEavesdrop => {
                let relay = att.config.relay.then_some(RelayLeg {
                    attacker: &mut att.ue,
                    serving: &mut self.serving,
                    home: &mut self.home,
                    batch_size: self.batch_size,
                });
                att.fbs.fake_network_attach(
                    victim,
                    relay,
                    att.config.rand_source,
                    &att.log,
                    att.config.victim_payload.as_bytes(),
                    &mut self.rng,
                    &mut self.trace,
                )?
            }
            AttackKind::BbkReplay => {
                att.fbs
                    .bbk_attack(&att.log, victim, &self.ground_truth, &mut self.rng, &mut self.trace)?
            }
        };
        self.verdicts.push(Verdict::Attack(report));
        Ok(())
    }
}

fn policy_name(p: ConsumptionPolicy) -> &'static str {
    match p {
        ConsumptionPolicy::InOrder => "in_order",
        ConsumptionPolicy::RandomOrder => "random_order",
        ConsumptionPolicy::Reuse => "reuse",
    }
}

/// Runs a validated scenario. Actor errors stop the script and are returned
/// inside the run together with the partial trace.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioRun, ConfigError> {
    config.validate()?;
    let mut world = match World::build(config) {
        Ok(w) => w,
        // Provisioning cannot fail on a validated config.
        Err(_) => unreachable!("validated config failed to provision"),
    };
    let mut error = None;
    for (i, step) in config.script.iter().enumerate() {
        if let Err(e) = world.step(i, step) {
            let kind = step.kind();
            let err = match e {
                StepError::Me(source) => ScenarioError::Me { step: i, kind, source },
                StepError::Network(source) => ScenarioError::Network { step: i, kind, source },
                StepError::Adversary(source) => ScenarioError::Adversary { step: i, kind, source },
            };
            world.trace.state(
                HARNESS_ID,
                "ABORT",
                [("step", i.to_string()), ("error", err.to_string())],
            );
            error = Some(err);
            break;
        }
    }
    Ok(ScenarioRun {
        trace: world.trace.into_events(),
        verdicts: world.verdicts,
        error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn imsi(n: u64) -> Imsi {
        alloc::format!("00101{:010}", n).parse().unwrap()
    }

    fn honest(seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            seed,
            network: NetworkPolicy::default(),
            subscribers: vec![SubscriberConfig {
                imsi: imsi(1),
                mode: SimMode::Enhanced,
                me: MeProfile::default(),
            }],
            attacker: None,
            script: vec![
                ScenarioStep::Attach { ue: imsi(1) },
                ScenarioStep::RequestTriples { ue: imsi(1), n: None },
                ScenarioStep::Challenge { ue: imsi(1) },
            ],
        }
    }

    #[test]
    fn honest_run_ends_authenticated() {
        let run = run_scenario(&honest(1)).unwrap();
        assert!(run.error.is_none());
        let last_result = run.trace.iter().rev().find(|e| e.name == "AUTH_RESULT").unwrap();
        assert_eq!(last_result.field("result"), Some("authenticated"));
    }

    #[test]
    fn identical_configs_identical_traces() {
        assert_eq!(run_scenario(&honest(5)).unwrap(), run_scenario(&honest(5)).unwrap());
    }

    #[test]
    fn challenge_without_triples_aborts_with_partial_trace() {
        let mut cfg = honest(1);
        cfg.script.remove(1);
        let run = run_scenario(&cfg).unwrap();
        assert!(matches!(
            run.error,
            Some(ScenarioError::Network {
                source: NetworkError::TriplesExhausted(_),
                ..
            })
        ));
        assert_eq!(run.trace.last().unwrap().name, "ABORT");
    }

    #[test]
    fn validation_errors() {
        let mut cfg = honest(1);
        cfg.subscribers.push(cfg.subscribers[0].clone());
        assert_eq!(run_scenario(&cfg).unwrap_err(), ConfigError::DuplicateImsi(imsi(1)));

        let mut cfg = honest(1);
        cfg.script.push(ScenarioStep::Challenge { ue: imsi(9) });
        assert!(matches!(
            run_scenario(&cfg),
            Err(ConfigError::UnknownImsi { step: 3, .. })
        ));

        let mut cfg = honest(1);
        cfg.script.push(ScenarioStep::RunAttack { victim: imsi(1) });
        assert_eq!(run_scenario(&cfg).unwrap_err(), ConfigError::NoAttacker(3));

        let mut cfg = honest(1);
        cfg.script.push(ScenarioStep::Assert {
            label: "bad".into(),
            predicate: TracePredicate::Present {
                pattern: EventPattern::default(),
            },
        });
        assert!(matches!(
            run_scenario(&cfg),
            Err(ConfigError::Predicate { step: 3, .. })
        ));
    }
}
