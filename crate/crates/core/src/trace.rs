use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// One protocol message or state transition on the scenario timeline.
///
/// Messages carry `to`; local state transitions and verdicts leave it empty.
/// `fields` keep insertion order so rendered traces are byte-stable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq_no: u64,
    pub actor: String,
    pub to: Option<String>,
    pub name: String,
    pub fields: Vec<(String, String)>,
}

impl TraceEvent {
    pub fn field(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    events: Vec<TraceEvent>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn message<'a>(
        &mut self,
        actor: &str,
        to: &str,
        name: &str,
        fields: impl IntoIterator<Item = (&'a str, String)>,
    ) {
        self.push(actor, Some(to), name, fields);
    }

    pub fn state<'a>(&mut self, actor: &str, name: &str, fields: impl IntoIterator<Item = (&'a str, String)>) {
        self.push(actor, None, name, fields);
    }

    fn push<'a>(
        &mut self,
        actor: &str,
        to: Option<&str>,
        name: &str,
        fields: impl IntoIterator<Item = (&'a str, String)>,
    ) {
        let seq_no = self.events.last().map_or(1, |e| e.seq_no + 1);
        self.events.push(TraceEvent {
            seq_no,
            actor: actor.to_string(),
            to: to.map(ToString::to_string),
            name: name.to_string(),
            fields: fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        });
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<TraceEvent> {
        self.events
    }
}
