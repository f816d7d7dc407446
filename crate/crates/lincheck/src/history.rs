//! Concurrent histories: invocation and response events with timestamps.
//!
//! Text form, one event per line: `ts thread op args phase [result]`, for
//! example `12 1 replace 3,5 respond true` or `4 0 find 3 invoke`.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering::SeqCst};

use thiserror::Error;

use crate::oracle::OracleSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Call {
    Insert(u64),
    Delete(u64),
    Replace(u64, u64),
    Find(u64),
}

impl Call {
    pub fn name(&self) -> &'static str {
        match self {
            Call::Insert(_) => "insert",
            Call::Delete(_) => "delete",
            Call::Replace(..) => "replace",
            Call::Find(_) => "find",
        }
    }

    pub fn run(&self, trie: &nbtrie::Trie) -> bool {
        match *self {
            Call::Insert(v) => trie.insert(v),
            Call::Delete(v) => trie.delete(v),
            Call::Replace(a, b) => trie.replace(a, b),
            Call::Find(v) => trie.find(v),
        }
        .expect("workload keys are valid")
    }

    pub fn apply(&self, set: &mut OracleSet) -> bool {
        set.apply(*self)
    }

    fn args(&self) -> String {
        match self {
            Call::Insert(v) | Call::Delete(v) | Call::Find(v) => v.to_string(),
            Call::Replace(a, b) => format!("{a},{b}"),
        }
    }
}

impl fmt::Display for Call {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name(), self.args())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Invoke,
    Respond(bool),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub ts: u64,
    pub thread: usize,
    pub call: Call,
    pub phase: Phase,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} ",
            self.ts,
            self.thread,
            self.call.name(),
            self.call.args()
        )?;
        match self.phase {
            Phase::Invoke => write!(f, "invoke"),
            Phase::Respond(r) => write!(f, "respond {r}"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Bad { line: usize, msg: String },
}

impl FromStr for Event {
    type Err = String;

    fn from_str(s: &str) -> Result<Event, String> {
        let f: Vec<&str> = s.split_whitespace().collect();
        if f.len() < 5 {
            return Err(format!("expected at least 5 fields, got {}", f.len()));
        }
        let num = |x: &str| x.parse::<u64>().map_err(|e| format!("{x:?}: {e}"));
        let ts = num(f[0])?;
        let thread = num(f[1])? as usize;
        let call = match (f[2], f[3].split_once(',')) {
            ("replace", Some((a, b))) => Call::Replace(num(a)?, num(b)?),
            ("insert", None) => Call::Insert(num(f[3])?),
            ("delete", None) => Call::Delete(num(f[3])?),
            ("find", None) => Call::Find(num(f[3])?),
            _ => return Err(format!("bad operation {:?} {:?}", f[2], f[3])),
        };
        let phase = match (f[4], f.get(5)) {
            ("invoke", None) => Phase::Invoke,
            ("respond", Some(r)) => {
                Phase::Respond(r.parse().map_err(|_| format!("bad result {r:?}"))?)
            }
            _ => return Err(format!("bad phase {:?}", &f[4..])),
        };
        Ok(Event {
            ts,
            thread,
            call,
            phase,
        })
    }
}

/// One operation of a history: its invocation and, if it completed, its response.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Operation {
    pub thread: usize,
    pub call: Call,
    pub invoked: u64,
    pub responded: Option<(u64, bool)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct History {
    /// Events in timestamp order.
    pub events: Vec<Event>,
}

impl History {
    pub fn new(mut events: Vec<Event>) -> History {
        events.sort_by_key(|e| e.ts);
        History { events }
    }

    /// Pairs each invocation with the next response of the same thread.
    /// Panics on a malformed history (see [`History::validate`]).
    pub fn operations(&self) -> Vec<Operation> {
        self.validate().expect("well-formed history");
        let mut open: Vec<Option<usize>> = Vec::new();
        let mut ops: Vec<Operation> = Vec::new();
        for e in &self.events {
            if open.len() <= e.thread {
                open.resize(e.thread + 1, None);
            }
            match e.phase {
                Phase::Invoke => {
                    open[e.thread] = Some(ops.len());
                    ops.push(Operation {
                        thread: e.thread,
                        call: e.call,
                        invoked: e.ts,
                        responded: None,
                    });
                }
                Phase::Respond(r) => {
                    let i = open[e.thread].take().unwrap();
                    ops[i].responded = Some((e.ts, r));
                }
            }
        }
        ops
    }

    /// Checks per-thread alternation of invoke and respond with matching
    /// calls, and strictly increasing timestamps.
    pub fn validate(&self) -> Result<(), String> {
        let mut open: Vec<Option<Call>> = Vec::new();
        let mut last_ts = None;
        for (i, e) in self.events.iter().enumerate() {
            if last_ts.is_some_and(|t| e.ts <= t) {
                return Err(format!("event {i}: timestamp {} not increasing", e.ts));
            }
            last_ts = Some(e.ts);
            if open.len() <= e.thread {
                open.resize(e.thread + 1, None);
            }
            match (e.phase, open[e.thread]) {
                (Phase::Invoke, None) => open[e.thread] = Some(e.call),
                (Phase::Respond(_), Some(c)) if c == e.call => open[e.thread] = None,
                _ => return Err(format!("event {i}: {e} out of turn")),
            }
        }
        Ok(())
    }

    /// The first `n` events; operations cut off mid-flight become pending.
    pub fn prefix(&self, n: usize) -> History {
        History {
            events: self.events[..n].to_vec(),
        }
    }

    pub fn to_text(&self) -> String {
        self.to_string()
    }

    pub fn parse(text: &str) -> Result<History, ParseError> {
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            events.push(
                line.parse()
                    .map_err(|msg| ParseError::Bad { line: i + 1, msg })?,
            );
        }
        let h = History { events };
        h.validate()
            .map_err(|msg| ParseError::Bad { line: 0, msg })?;
        Ok(h)
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.events {
            writeln!(f, "{e}")?;
        }
        Ok(())
    }
}

/// Shared timestamp source: a global sequence number, so events from
/// different threads never tie.
#[derive(Debug, Default)]
pub struct Clock(AtomicU64);

impl Clock {
    pub fn new() -> Clock {
        Clock(AtomicU64::new(1))
    }

    #[inline]
    pub fn tick(&self) -> u64 {
        self.0.fetch_add(1, SeqCst)
    }
}

/// Per-thread event buffer, preallocated so recording never allocates.
pub struct ThreadLog<'c> {
    clock: &'c Clock,
    thread: usize,
    events: Vec<Event>,
}

impl<'c> ThreadLog<'c> {
    pub fn new(clock: &'c Clock, thread: usize, capacity: usize) -> ThreadLog<'c> {
        ThreadLog {
            clock,
            thread,
            events: Vec::with_capacity(capacity * 2),
        }
    }

    /// Records the invocation, runs `f`, records the response.
    pub fn record(&mut self, call: Call, f: impl FnOnce() -> bool) -> bool {
        self.push(call, Phase::Invoke);
        let r = f();
        self.push(call, Phase::Respond(r));
        r
    }

    fn push(&mut self, call: Call, phase: Phase) {
        let ts = self.clock.tick();
        self.events.push(Event {
            ts,
            thread: self.thread,
            call,
            phase,
        });
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }
}
