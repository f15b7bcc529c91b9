//! JSON-lines trace files.
//!
//! One event per line with keys in a fixed order: `seq`, `actor`, `to`
//! (omitted for state events), `event`, `fields`. Field values are the
//! strings recorded by the actors; binary values are already lowercase hex.

use std::io::{self, Write};

use randhijack_core::TraceEvent;
use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};

struct Fields<'a>(&'a [(String, String)]);

impl Serialize for Fields<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0 {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

struct Line<'a>(&'a TraceEvent);

impl Serialize for Line<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let e = self.0;
        let mut st = s.serialize_struct("TraceEvent", 5)?;
        st.serialize_field("seq", &e.seq_no)?;
        st.serialize_field("actor", &e.actor)?;
        match &e.to {
            Some(to) => st.serialize_field("to", to)?,
            None => st.skip_field("to")?,
        }
        st.serialize_field("event", &e.name)?;
        st.serialize_field("fields", &Fields(&e.fields))?;
        st.end()
    }
}

pub fn event_line(e: &TraceEvent) -> String {
    serde_json::to_string(&Line(e)).expect("strings always serialize")
}

pub fn write_trace<W: Write>(mut w: W, events: &[TraceEvent]) -> io::Result<()> {
    for e in events {
        w.write_all(event_line(e).as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn render_trace(events: &[TraceEvent]) -> String {
    let mut buf = Vec::new();
    write_trace(&mut buf, events).expect("writing to memory");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// First line where two trace files differ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceDiff {
    pub line: usize,
    pub expected: Option<String>,
    pub actual: Option<String>,
}

pub fn compare(expected: &str, actual: &str) -> Option<TraceDiff> {
    let mut e = expected.lines();
    let mut a = actual.lines();
    let mut line = 0;
    loop {
        line += 1;
        match (e.next(), a.next()) {
            (None, None) => {
                return (expected.ends_with('\n') != actual.ends_with('\n')).then_some(TraceDiff {
                    line,
                    expected: None,
                    actual: None,
                });
            }
            (x, y) if x == y => {}
            (x, y) => {
                return Some(TraceDiff {
                    line,
                    expected: x.map(str::to_string),
                    actual: y.map(str::to_string),
                })
            }
        }
    }
}
