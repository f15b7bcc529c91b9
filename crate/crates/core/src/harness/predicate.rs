//! Declarative matchers over recorded traces.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::trace::TraceEvent;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PredicateError {
    #[error("pattern matches every event; give at least one of actor, to, name, fields")]
    EmptyPattern,
    #[error("sequence needs at least one pattern")]
    EmptySequence,
}

/// Matches one trace event. Unset parts match anything; `fields` must all be
/// present with exactly these values.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventPattern {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fields: BTreeMap<String, String>,
}

impl EventPattern {
    pub fn named(name: &str) -> Self {
        EventPattern {
            name: Some(name.into()),
            ..Self::default()
        }
    }

    pub fn with_field(mut self, key: &str, value: &str) -> Self {
        self.fields.insert(key.into(), value.into());
        self
    }

    pub fn from_actor(mut self, actor: &str) -> Self {
        self.actor = Some(actor.into());
        self
    }

    pub fn matches(&self, e: &TraceEvent) -> bool {
        self.actor.as_ref().is_none_or(|a| *a == e.actor)
            && self.to.as_ref().is_none_or(|t| e.to.as_ref() == Some(t))
            && self.name.as_ref().is_none_or(|n| *n == e.name)
            && self.fields.iter().all(|(k, v)| e.field(k) == Some(v.as_str()))
    }

    fn validate(&self) -> Result<(), PredicateError> {
        if self.actor.is_none() && self.to.is_none() && self.name.is_none() && self.fields.is_empty() {
            return Err(PredicateError::EmptyPattern);
        }
        Ok(())
    }

    fn describe(&self) -> String {
        let mut parts = Vec::new();
        if let Some(n) = &self.name {
            parts.push(n.clone());
        }
        if let Some(a) = &self.actor {
            parts.push(format!("actor={a}"));
        }
        if let Some(t) = &self.to {
            parts.push(format!("to={t}"));
        }
        for (k, v) in &self.fields {
            parts.push(format!("{k}={v}"));
        }
        parts.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TracePredicate {
    Present {
        pattern: EventPattern,
    },
    Absent {
        pattern: EventPattern,
    },
    Count {
        pattern: EventPattern,
        count: usize,
    },
    /// `patterns` occur in order; with `contiguous` they must be adjacent.
    /// A non-empty `scope` first restricts the trace to events matching any
    /// scope pattern.
    Sequence {
        patterns: Vec<EventPattern>,
        #[serde(default)]
        contiguous: bool,
        #[serde(default)]
        scope: Vec<EventPattern>,
    },
    /// No `forbidden` event after any `anchor`, up to the next `until`.
    AbsentAfter {
        anchor: EventPattern,
        forbidden: EventPattern,
        #[serde(default)]
        until: Option<EventPattern>,
    },
    /// Every `anchor` is immediately followed (within `scope`) by `patterns`.
    EachFollowedBy {
        anchor: EventPattern,
        patterns: Vec<EventPattern>,
        #[serde(default)]
        scope: Vec<EventPattern>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssertOutcome {
    pub passed: bool,
    /// `seq_no` of the first event where the trace departs from the predicate.
    pub divergence: Option<u64>,
    pub detail: String,
}

impl AssertOutcome {
    fn pass() -> Self {
        AssertOutcome {
            passed: true,
            divergence: None,
            detail: String::from("ok"),
        }
    }

    fn fail(at: Option<u64>, detail: String) -> Self {
        AssertOutcome {
            passed: false,
            divergence: at,
            detail,
        }
    }
}

impl TracePredicate {
    pub fn validate(&self) -> Result<(), PredicateError> {
        match self {
            TracePredicate::Present { pattern }
            | TracePredicate::Absent { pattern }
            | TracePredicate::Count { pattern, .. } => pattern.validate(),
            TracePredicate::Sequence { patterns, scope, .. } => {
                if patterns.is_empty() {
                    return Err(PredicateError::EmptySequence);
                }
                patterns.iter().chain(scope).try_for_each(EventPattern::validate)
            }
            TracePredicate::AbsentAfter {
                anchor,
                forbidden,
                until,
            } => {
                anchor.validate()?;
                forbidden.validate()?;
                until.iter().try_for_each(EventPattern::validate)
            }
            TracePredicate::EachFollowedBy {
                anchor,
                patterns,
                scope,
            } => {
                if patterns.is_empty() {
                    return Err(PredicateError::EmptySequence);
                }
                anchor.validate()?;
                patterns.iter().chain(scope).try_for_each(EventPattern::validate)
            }
        }
    }
}

fn in_scope<'a>(events: &'a [TraceEvent], scope: &[EventPattern]) -> Vec<&'a TraceEvent> {
    events
        .iter()
        .filter(|e| scope.is_empty() || scope.iter().any(|p| p.matches(e)))
        .collect()
}

fn last_seq(events: &[TraceEvent]) -> Option<u64> {
    events.last().map(|e| e.seq_no)
}

/// Evaluates `predicate` against `events`.
pub fn assert_trace(events: &[TraceEvent], predicate: &TracePredicate) -> Result<AssertOutcome, PredicateError> {
    predicate.validate()?;
    Ok(match predicate {
        TracePredicate::Present { pattern } => {
            if events.iter().any(|e| pattern.matches(e)) {
                AssertOutcome::pass()
            } else {
                AssertOutcome::fail(last_seq(events), format!("no event matches [{}]", pattern.describe()))
            }
        }
        TracePredicate::Absent { pattern } => match events.iter().find(|e| pattern.matches(e)) {
            None => AssertOutcome::pass(),
            Some(e) => AssertOutcome::fail(Some(e.seq_no), format!("unexpected [{}]", pattern.describe())),
        },
        TracePredicate::Count { pattern, count } => {
            let hits: Vec<&TraceEvent> = events.iter().filter(|e| pattern.matches(e)).collect();
            if hits.len() == *count {
                AssertOutcome::pass()
            } else {
                let at = hits.get(*count).map(|e| e.seq_no).or(last_seq(events));
                AssertOutcome::fail(
                    at,
                    format!("expected {} x [{}], found {}", count, pattern.describe(), hits.len()),
                )
            }
        }
        TracePredicate::Sequence {
            patterns,
            contiguous,
            scope,
        } => {
            let view = in_scope(events, scope);
            if *contiguous {
                contiguous_match(&view, patterns, events)
            } else {
                let mut k = 0;
                let mut last = None;
                for e in &view {
                    if k < patterns.len() && patterns[k].matches(e) {
                        k += 1;
                        last = Some(e.seq_no);
                    }
                }
                if k == patterns.len() {
                    AssertOutcome::pass()
                } else {
                    AssertOutcome::fail(
                        last.or(last_seq(events)),
                        format!("sequence stops before [{}]", patterns[k].describe()),
                    )
                }
            }
        }
        TracePredicate::AbsentAfter {
            anchor,
            forbidden,
            until,
        } => {
            let mut armed = false;
            for e in events {
                if armed && until.as_ref().is_some_and(|u| u.matches(e)) {
                    armed = false;
                }
                if armed && forbidden.matches(e) {
                    return Ok(AssertOutcome::fail(
                        Some(e.seq_no),
                        format!("[{}] after [{}]", forbidden.describe(), anchor.describe()),
                    ));
                }
                if anchor.matches(e) {
                    armed = true;
                }
            }
            AssertOutcome::pass()
        }
        TracePredicate::EachFollowedBy {
            anchor,
            patterns,
            scope,
        } => {
            for (i, e) in events.iter().enumerate() {
                if !anchor.matches(e) {
                    continue;
                }
                let view = in_scope(&events[i + 1..], scope);
                for (k, p) in patterns.iter().enumerate() {
                    match view.get(k) {
                        Some(next) if p.matches(next) => {}
                        Some(next) => {
                            return Ok(AssertOutcome::fail(
                                Some(next.seq_no),
                                format!("after anchor {} expected [{}]", e.seq_no, p.describe()),
                            ))
                        }
                        None => {
                            return Ok(AssertOutcome::fail(
                                last_seq(events),
                                format!("trace ends before [{}]", p.describe()),
                            ))
                        }
                    }
                }
            }
            AssertOutcome::pass()
        }
    })
}

fn contiguous_match(view: &[&TraceEvent], patterns: &[EventPattern], all: &[TraceEvent]) -> AssertOutcome {
    let mut best: (usize, Option<u64>) = (0, last_seq(all));
    for start in 0..view.len() {
        let mut k = 0;
        while k < patterns.len() && start + k < view.len() && patterns[k].matches(view[start + k]) {
            k += 1;
        }
        if k == patterns.len() {
            return AssertOutcome::pass();
        }
        if k > best.0 {
            best = (k, view.get(start + k).map(|e| e.seq_no).or(last_seq(all)));
        }
    }
    AssertOutcome::fail(
        best.1,
        format!(
            "longest contiguous match stops before [{}]",
            patterns[best.0].describe()
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Trace;
    use alloc::string::ToString;
    use alloc::vec;

    fn sample() -> Vec<TraceEvent> {
        let mut t = Trace::new();
        t.message("vlr", "me", "AUTH_REQUEST", [("rand", "00".to_string())]);
        t.message("me", "sim", "RUN_GSM_ALGORITHM", []);
        t.state("sim", "AUTH_CHECK", [("result", "rejected".to_string())]);
        t.message("sim", "me", "SIM_RESPONSE", [("sw", "910b".to_string())]);
        t.message("me", "sim", "FETCH", []);
        t.message("sim", "me", "GET_CHANNEL_STATUS", []);
        t.state("me", "CONNECTION_DROPPED", []);
        t.message("vlr", "me", "AUTH_REQUEST", [("rand", "01".to_string())]);
        t.message("me", "vlr", "AUTH_RESPONSE", [("sres", "aa".to_string())]);
        t.into_events()
    }

    #[test]
    fn presence_and_absence() {
        let ev = sample();
        let p = TracePredicate::Present {
            pattern: EventPattern::named("FETCH"),
        };
        assert!(assert_trace(&ev, &p).unwrap().passed);
        let a = TracePredicate::Absent {
            pattern: EventPattern::named("TRAFFIC"),
        };
        assert!(assert_trace(&ev, &a).unwrap().passed);
        let a = TracePredicate::Absent {
            pattern: EventPattern::named("FETCH"),
        };
        let out = assert_trace(&ev, &a).unwrap();
        assert!(!out.passed);
        assert_eq!(out.divergence, Some(5));
    }

    #[test]
    fn field_matching() {
        let ev = sample();
        let p = TracePredicate::Count {
            pattern: EventPattern::named("AUTH_REQUEST").with_field("rand", "01"),
            count: 1,
        };
        assert!(assert_trace(&ev, &p).unwrap().passed);
    }

    #[test]
    fn absent_after_respects_until() {
        let ev = sample();
        let no_sres = TracePredicate::AbsentAfter {
            anchor: EventPattern::named("CONNECTION_DROPPED"),
            forbidden: EventPattern::named("AUTH_RESPONSE"),
            until: None,
        };
        let out = assert_trace(&ev, &no_sres).unwrap();
        assert_eq!((out.passed, out.divergence), (false, Some(9)));
        let bounded = TracePredicate::AbsentAfter {
            anchor: EventPattern::named("CONNECTION_DROPPED"),
            forbidden: EventPattern::named("AUTH_RESPONSE"),
            until: Some(EventPattern::named("AUTH_REQUEST")),
        };
        assert!(assert_trace(&ev, &bounded).unwrap().passed);
    }

    #[test]
    fn sequences() {
        let ev = sample();
        let names = |ns: &[&str]| ns.iter().map(|n| EventPattern::named(n)).collect::<Vec<_>>();
        let seq = TracePredicate::Sequence {
            patterns: names(&["SIM_RESPONSE", "FETCH", "GET_CHANNEL_STATUS"]),
            contiguous: true,
            scope: vec![],
        };
        assert!(assert_trace(&ev, &seq).unwrap().passed);
        let broken = TracePredicate::Sequence {
            patterns: names(&["FETCH", "GET_CHANNEL_STATUS", "FETCH"]),
            contiguous: true,
            scope: vec![],
        };
        let out = assert_trace(&ev, &broken).unwrap();
        assert!(!out.passed);
        assert_eq!(out.divergence, Some(7));
        let loose = TracePredicate::Sequence {
            patterns: names(&["AUTH_CHECK", "CONNECTION_DROPPED", "AUTH_RESPONSE"]),
            contiguous: false,
            scope: vec![],
        };
        assert!(assert_trace(&ev, &loose).unwrap().passed);
        let scoped = TracePredicate::EachFollowedBy {
            anchor: EventPattern::named("AUTH_CHECK").with_field("result", "rejected"),
            patterns: names(&["FETCH", "GET_CHANNEL_STATUS"]),
            scope: names(&["FETCH", "GET_CHANNEL_STATUS"]),
        };
        assert!(assert_trace(&ev, &scoped).unwrap().passed);
    }

    #[test]
    fn malformed_predicates() {
        let ev = sample();
        let p = TracePredicate::Present {
            pattern: EventPattern::default(),
        };
        assert_eq!(assert_trace(&ev, &p), Err(PredicateError::EmptyPattern));
        let s = TracePredicate::Sequence {
            patterns: vec![],
            contiguous: false,
            scope: vec![],
        };
        assert_eq!(assert_trace(&ev, &s), Err(PredicateError::EmptySequence));
    }
}
