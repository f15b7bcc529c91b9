//! The SIM actor.
//!
//! An enhanced SIM verifies every RAND before answering. When verification
//! fails it still answers (with random SRES and Kc) and, if the ME announced
//! class-e toolkit support, raises a proactive command that walks the ME
//! through GET CHANNEL STATUS and CLOSE CHANNEL so the connection is dropped.
//!
//! ```text
//!   ME                                 SIM
//!   RUN GSM ALGORITHM(RAND)   ──────▶
//!                             ◀──────  SRES, Kc, 91 xx
//!   FETCH                     ──────▶
//!                             ◀──────  GET CHANNEL STATUS
//!   TERMINAL RESPONSE(ids)    ──────▶
//!                             ◀──────  91 xx
//!   FETCH                     ──────▶
//!                             ◀──────  CLOSE CHANNEL(ids)
//!   TERMINAL RESPONSE(result) ──────▶
//!                             ◀──────  90 00
//! ```

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::auth::{legacy_response, verify_hijacked_rand, Rand128, Sqn48, VerifyOutcome};
use crate::crypto::{Key128, Tag64};
use crate::network::Imsi;
use crate::trace::Trace;

pub type ChannelId = u8;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("protocol order violation: {0}")]
    ProtocolOrder(&'static str),
    #[error("bad SIM snapshot: {0}")]
    Snapshot(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    Legacy,
    Enhanced,
}

impl SimMode {
    pub fn name(self) -> &'static str {
        match self {
            SimMode::Legacy => "legacy",
            SimMode::Enhanced => "enhanced",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeardownPhase {
    Idle,
    AwaitFetch1,
    AwaitChannelStatus,
    AwaitFetch2,
    AwaitCloseResult,
}

impl TeardownPhase {
    pub fn name(self) -> &'static str {
        match self {
            TeardownPhase::Idle => "idle",
            TeardownPhase::AwaitFetch1 => "await_fetch_1",
            TeardownPhase::AwaitChannelStatus => "await_channel_status",
            TeardownPhase::AwaitFetch2 => "await_fetch_2",
            TeardownPhase::AwaitCloseResult => "await_close_result",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        [
            TeardownPhase::Idle,
            TeardownPhase::AwaitFetch1,
            TeardownPhase::AwaitChannelStatus,
            TeardownPhase::AwaitFetch2,
            TeardownPhase::AwaitCloseResult,
        ]
        .into_iter()
        .find(|p| p.name() == s)
    }
}

/// TERMINAL PROFILE contents that matter here.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TerminalProfile {
    pub class_e: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StkCommand {
    GetChannelStatus,
    CloseChannel { channel_ids: Vec<ChannelId> },
}

impl StkCommand {
    pub fn name(&self) -> &'static str {
        match self {
            StkCommand::GetChannelStatus => "GET_CHANNEL_STATUS",
            StkCommand::CloseChannel { .. } => "CLOSE_CHANNEL",
        }
    }

    /// Simplified BER-TLV proactive command:
    /// `D0 len | 81 03 01 type 00 | 82 02 81 82 [| 38 n ids..]`.
    pub fn encode(&self) -> Vec<u8> {
        let mut body = Vec::new();
        let type_of_command = match self {
            StkCommand::GetChannelStatus => 0x44,
            StkCommand::CloseChannel { .. } => 0x41,
        };
        body.extend_from_slice(&[0x81, 0x03, 0x01, type_of_command, 0x00]);
        body.extend_from_slice(&[0x82, 0x02, 0x81, 0x82]);
        if let StkCommand::CloseChannel { channel_ids } = self {
            body.push(0x38);
            body.push(channel_ids.len() as u8);
            body.extend_from_slice(channel_ids);
        }
        let mut out = Vec::with_capacity(body.len() + 2);
        out.push(0xD0);
        out.push(body.len() as u8);
        out.extend(body);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TerminalResponse {
    ChannelStatus { channels: Vec<ChannelId> },
    CloseChannel { success: bool },
}

/// Status word after a SIM response: `90 00`, or `91 xx` with a pending
/// proactive command of `xx` octets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimStatus {
    Normal,
    ProactivePending { length: u8 },
}

impl fmt::Display for SimStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimStatus::Normal => f.write_str("9000"),
            SimStatus::ProactivePending { length } => write!(f, "91{:02x}", length),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimResponse {
    pub sres: Tag64,
    pub kc: Tag64,
    pub status: SimStatus,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimState {
    imsi: Imsi,
    ki: Key128,
    ka: Option<Key128>,
    counter: Sqn48,
    profile: Option<TerminalProfile>,
    pending: VecDeque<StkCommand>,
    phase: TeardownPhase,
    captured_channels: Vec<ChannelId>,
}

impl SimState {
    pub fn legacy(imsi: Imsi, ki: Key128) -> Self {
        Self::build(imsi, ki, None)
    }

    pub fn enhanced(imsi: Imsi, ki: Key128, ka: Key128) -> Self {
        Self::build(imsi, ki, Some(ka))
    }

    fn build(imsi: Imsi, ki: Key128, ka: Option<Key128>) -> Self {
        SimState {
            imsi,
            ki,
            ka,
            counter: Sqn48::ZERO,
            profile: None,
            pending: VecDeque::new(),
            phase: TeardownPhase::Idle,
            captured_channels: Vec::new(),
        }
    }

    pub fn imsi(&self) -> &Imsi {
        &self.imsi
    }

    pub fn actor_id(&self) -> String {
        format!("sim:{}", self.imsi)
    }

    pub fn mode(&self) -> SimMode {
        if self.ka.is_some() {
            SimMode::Enhanced
        } else {
            SimMode::Legacy
        }
    }

    pub fn counter(&self) -> Sqn48 {
        self.counter
    }

    pub fn phase(&self) -> TeardownPhase {
        self.phase
    }

    pub fn is_initialized(&self) -> bool {
        self.profile.is_some()
    }

    fn status(&self) -> SimStatus {
        match self.pending.front() {
            Some(cmd) => SimStatus::ProactivePending {
                length: cmd.encode().len() as u8,
            },
            None => SimStatus::Normal,
        }
    }

    fn can_teardown(&self) -> bool {
        matches!(self.profile, Some(TerminalProfile { class_e: true }))
    }

    /// Records the ME's TERMINAL PROFILE. Allowed once per power-on.
    pub fn init(&mut self, profile: TerminalProfile) -> Result<(), SimError> {
        if self.profile.is_some() {
            return Err(SimError::ProtocolOrder("TERMINAL PROFILE already received"));
        }
        self.profile = Some(profile);
        Ok(())
    }

    /// Drops everything volatile; keys and the counter survive.
    pub fn power_cycle(&mut self) {
        self.profile = None;
        self.pending.clear();
        self.phase = TeardownPhase::Idle;
        self.captured_channels.clear();
    }

    /// RUN GSM ALGORITHM.
    pub fn challenge(
        &mut self,
        rand: &Rand128,
        me: &str,
        rng: &mut dyn RngCore,
        trace: &mut Trace,
    ) -> Result<SimResponse, SimError> {
        if self.profile.is_none() {
            return Err(SimError::ProtocolOrder("challenge before TERMINAL PROFILE"));
        }
        if self.phase != TeardownPhase::Idle {
            return Err(SimError::ProtocolOrder("challenge during proactive teardown"));
        }
        let me_sim = self.actor_id();
        let (sres, kc) = match &self.ka {
            None => legacy_response(&self.ki, rand),
            Some(ka) => {
                let outcome = verify_hijacked_rand(&self.ki, ka, self.counter, rand, rng);
                match outcome {
                    VerifyOutcome::Accepted { sqn, .. } => {
                        let previous = self.counter;
                        self.counter = sqn;
                        trace.state(
                            &me_sim,
                            "AUTH_CHECK",
                            [
                                ("result", "accepted".to_string()),
                                ("sqn", sqn.to_string()),
                                ("counter", format!("{}->{}", previous, sqn)),
                            ],
                        );
                    }
                    VerifyOutcome::Rejected { reason, .. } => {
                        trace.state(
                            &me_sim,
                            "AUTH_CHECK",
                            [
                                ("result", "rejected".to_string()),
                                ("reason", reason.name().to_string()),
                                ("counter", self.counter.to_string()),
                            ],
                        );
                        if self.can_teardown() {
                            self.pending.push_back(StkCommand::GetChannelStatus);
                            self.phase = TeardownPhase::AwaitFetch1;
                        }
                    }
                }
                outcome.response()
            }
        };
        let response = SimResponse {
            sres,
            kc,
            status: self.status(),
        };
        trace.message(
            &me_sim,
            me,
            "SIM_RESPONSE",
            [
                ("sres", sres.to_string()),
                ("kc", kc.to_string()),
                ("sw", response.status.to_string()),
            ],
        );
        Ok(response)
    }

    /// FETCH: hands the next queued proactive command to the ME.
    pub fn fetch(&mut self, me: &str, trace: &mut Trace) -> Result<StkCommand, SimError> {
        let next_phase = match self.phase {
            TeardownPhase::AwaitFetch1 => TeardownPhase::AwaitChannelStatus,
            TeardownPhase::AwaitFetch2 => TeardownPhase::AwaitCloseResult,
            _ => return Err(SimError::ProtocolOrder("FETCH with nothing pending")),
        };
        let cmd = self
            .pending
            .pop_front()
            .ok_or(SimError::ProtocolOrder("FETCH with nothing pending"))?;
        self.phase = next_phase;
        let mut fields = Vec::new();
        if let StkCommand::CloseChannel { channel_ids } = &cmd {
            fields.push(("channels", join_ids(channel_ids)));
        }
        trace.message(&self.actor_id(), me, cmd.name(), fields);
        Ok(cmd)
    }

    /// TERMINAL RESPONSE to the last fetched command.
    pub fn terminal_response(
        &mut self,
        result: &TerminalResponse,
        me: &str,
        trace: &mut Trace,
    ) -> Result<SimStatus, SimError> {
        match (self.phase, result) {
            (TeardownPhase::AwaitChannelStatus, TerminalResponse::ChannelStatus { channels }) => {
                if channels.is_empty() {
                    self.phase = TeardownPhase::Idle;
                } else {
                    self.captured_channels = channels.clone();
                    self.pending.push_back(StkCommand::CloseChannel {
                        channel_ids: channels.clone(),
                    });
                    self.phase = TeardownPhase::AwaitFetch2;
                }
            }
            (TeardownPhase::AwaitCloseResult, TerminalResponse::CloseChannel { success }) => {
                if !success {
                    trace.state(
                        &self.actor_id(),
                        "CLOSE_NOT_CONFIRMED",
                        [("channels", join_ids(&self.captured_channels))],
                    );
                }
                self.captured_channels.clear();
                self.phase = TeardownPhase::Idle;
            }
            _ => return Err(SimError::ProtocolOrder("unexpected TERMINAL RESPONSE")),
        }
        let status = self.status();
        trace.message(&self.actor_id(), me, "SIM_STATUS", [("sw", status.to_string())]);
        Ok(status)
    }
}

pub(crate) fn join_ids(ids: &[ChannelId]) -> String {
    let parts: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
    parts.join(",")
}

fn parse_ids(s: &str) -> Result<Vec<ChannelId>, SimError> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| {
            p.parse()
                .map_err(|_| SimError::Snapshot(format!("bad channel id {p:?}")))
        })
        .collect()
}

/// Checkpoint format, one `key=value` per line in fixed order:
///
/// ```text
/// sim-snapshot=1
/// imsi=001010123456789
/// mode=enhanced
/// ki=<32 hex>
/// ka=<32 hex or ->
/// counter=<decimal>
/// phase=idle
/// profile=class_e|basic|-
/// channels=<comma-separated ids>
/// pending=<;-separated get_channel_status | close_channel:ids>
/// ```
impl fmt::Display for SimState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "sim-snapshot=1")?;
        writeln!(f, "imsi={}", self.imsi)?;
        writeln!(f, "mode={}", self.mode().name())?;
        writeln!(f, "ki={}", hex::encode(self.ki.as_bytes()))?;
        match &self.ka {
            Some(ka) => writeln!(f, "ka={}", hex::encode(ka.as_bytes()))?,
            None => writeln!(f, "ka=-")?,
        }
        writeln!(f, "counter={}", self.counter)?;
        writeln!(f, "phase={}", self.phase.name())?;
        let profile = match self.profile {
            None => "-",
            Some(TerminalProfile { class_e: true }) => "class_e",
            Some(TerminalProfile { class_e: false }) => "basic",
        };
        writeln!(f, "profile={}", profile)?;
        writeln!(f, "channels={}", join_ids(&self.captured_channels))?;
        let pending: Vec<String> = self
            .pending
            .iter()
            .map(|c| match c {
                StkCommand::GetChannelStatus => "get_channel_status".to_string(),
                StkCommand::CloseChannel { channel_ids } => {
                    format!("close_channel:{}", join_ids(channel_ids))
                }
            })
            .collect();
        writeln!(f, "pending={}", pending.join(";"))
    }
}

impl FromStr for SimState {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        let bad = |m: &str| SimError::Snapshot(m.to_string());
        let mut lines = s.lines().filter(|l| !l.trim().is_empty());
        let mut next = |key: &str| -> Result<&str, SimError> {
            let line = lines
                .next()
                .ok_or_else(|| SimError::Snapshot(format!("missing {key}")))?;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .ok_or_else(|| SimError::Snapshot(format!("expected {key}=, got {line:?}")))
        };
        if next("sim-snapshot")? != "1" {
            return Err(bad("unsupported snapshot version"));
        }
        let imsi: Imsi = next("imsi")?.parse().map_err(|_| bad("bad imsi"))?;
        let mode = next("mode")?;
        let key = |h: &str| -> Result<Key128, SimError> {
            let bytes = hex::decode(h).map_err(|_| bad("bad key hex"))?;
            Key128::from_slice(&bytes).map_err(|_| bad("key must be 16 octets"))
        };
        let ki = key(next("ki")?)?;
        let ka = match next("ka")? {
            "-" => None,
            h => Some(key(h)?),
        };
        match (mode, &ka) {
            ("legacy", None) | ("enhanced", Some(_)) => {}
            _ => return Err(bad("mode does not match presence of ka")),
        }
        let counter = next("counter")?
            .parse::<u64>()
            .ok()
            .and_then(|v| Sqn48::new(v).ok())
            .ok_or_else(|| bad("bad counter"))?;
        let phase = TeardownPhase::from_name(next("phase")?).ok_or_else(|| bad("bad phase"))?;
        let profile = match next("profile")? {
            "-" => None,
            "class_e" => Some(TerminalProfile { class_e: true }),
            "basic" => Some(TerminalProfile { class_e: false }),
            _ => return Err(bad("bad profile")),
        };
        let captured_channels = parse_ids(next("channels")?)?;
        let pending_text = next("pending")?;
        let mut pending = VecDeque::new();
        if !pending_text.is_empty() {
            for item in pending_text.split(';') {
                let cmd = if item == "get_channel_status" {
                    StkCommand::GetChannelStatus
                } else if let Some(ids) = item.strip_prefix("close_channel:") {
                    let channel_ids = parse_ids(ids)?;
                    if channel_ids.is_empty() {
                        return Err(bad("CLOSE CHANNEL needs at least one channel"));
                    }
                    StkCommand::CloseChannel { channel_ids }
                } else {
                    return Err(bad("bad pending command"));
                };
                pending.push_back(cmd);
            }
        }
        Ok(SimState {
            imsi,
            ki,
            ka,
            counter,
            profile,
            pending,
            phase,
            captured_channels,
        })
    }
}
