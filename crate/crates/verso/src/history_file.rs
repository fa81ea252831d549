//! Plain-text version maintenance histories.
//!
//! ```text
//! # verso vm history
//! # processes 3
//! # initial 0
//! seq kind proc op args result
//! 0 invoke 1 acquire - -
//! 1 invoke 0 set 7 -
//! 2 respond 1 acquire - data:0
//! 3 respond 0 set 7 unit
//! 4 invoke 1 release - -
//! 5 respond 1 release - released:false
//! ```
//!
//! One record per line: global sequence number, `invoke` or `respond`,
//! process id, operation (`acquire`, `release`, `set`), the set's data
//! handle or `-`, and for responses the result (`data:<handle>`,
//! `released:<bool>`, `unit`) or `-` for invocations. Lines starting with
//! `#` are comments, except that the `processes` and `initial` headers give
//! the object's size and initial data handle. The column header line is
//! optional.

use std::fmt::Write as _;

use thiserror::Error;
use verso_core::oracle::{VmOp, VmResult};
use verso_core::verify::{VmEvent, VmEventKind, VmHistory};
use verso_core::{DataHandle, ProcessId};

const COLUMNS: &str = "seq kind proc op args result";

/// A history with the parameters needed to check it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HistoryFile {
    pub processes: usize,
    pub initial: DataHandle,
    pub history: VmHistory,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("missing `# {0}` header")]
    MissingHeader(&'static str),
}

fn op_name(op: &VmOp) -> &'static str {
    match op {
        VmOp::Acquire(_) => "acquire",
        VmOp::Release(_) => "release",
        VmOp::Set(..) => "set",
    }
}

fn op_args(op: &VmOp) -> String {
    match op {
        VmOp::Set(_, d) => d.0.to_string(),
        _ => "-".into(),
    }
}

fn result_text(r: &VmResult) -> String {
    match r {
        VmResult::Data(d) => format!("data:{}", d.0),
        VmResult::Released(b) => format!("released:{b}"),
        VmResult::Unit => "unit".into(),
    }
}

impl HistoryFile {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# verso vm history");
        let _ = writeln!(out, "# processes {}", self.processes);
        let _ = writeln!(out, "# initial {}", self.initial.0);
        let _ = writeln!(out, "{COLUMNS}");
        let mut pending: Vec<Option<VmOp>> = vec![None; self.history.processes()];
        for e in self.history.events() {
            let k = e.process.get();
            match e.kind {
                VmEventKind::Invoke(op) => {
                    pending[k] = Some(op);
                    let _ = writeln!(out, "{} invoke {} {} {} -", e.seq, k, op_name(&op), op_args(&op));
                }
                VmEventKind::Respond(r) => {
                    let (name, args) = pending[k]
                        .take()
                        .map_or(("?", "-".to_string()), |op| (op_name(&op), op_args(&op)));
                    let _ = writeln!(out, "{} respond {} {} {} {}", e.seq, k, name, args, result_text(&r));
                }
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut processes = None;
        let mut initial = None;
        let mut events = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |msg: String| ParseError::Line { line, msg };
            let l = raw.trim();
            if l.is_empty() || l == COLUMNS {
                continue;
            }
            if let Some(comment) = l.strip_prefix('#') {
                let mut words = comment.split_whitespace();
                match (words.next(), words.next()) {
                    (Some("processes"), Some(n)) => {
                        processes = Some(n.parse().map_err(|e| err(format!("processes: {e}")))?)
                    }
                    (Some("initial"), Some(d)) => {
                        initial = Some(DataHandle(d.parse().map_err(|e| err(format!("initial: {e}")))?))
                    }
                    _ => {}
                }
                continue;
            }
            let f: Vec<&str> = l.split_whitespace().collect();
            let [seq, kind, proc_, op, args, result] = f[..] else {
                return Err(err(format!("expected 6 fields, found {}", f.len())));
            };
            let seq: u64 = seq.parse().map_err(|e| err(format!("seq: {e}")))?;
            let k = ProcessId(proc_.parse().map_err(|e| err(format!("proc: {e}")))?);
            let kind = match kind {
                "invoke" => VmEventKind::Invoke(match op {
                    "acquire" => VmOp::Acquire(k),
                    "release" => VmOp::Release(k),
                    "set" => VmOp::Set(k, DataHandle(args.parse().map_err(|e| err(format!("set data: {e}")))?)),
                    other => return Err(err(format!("unknown operation `{other}`"))),
                }),
                "respond" => VmEventKind::Respond(parse_result(result).ok_or_else(|| err(format!("bad result `{result}`")))?),
                other => return Err(err(format!("unknown record kind `{other}`"))),
            };
            events.push(VmEvent { seq, process: k, kind });
        }
        Ok(HistoryFile {
            processes: processes.ok_or(ParseError::MissingHeader("processes"))?,
            initial: initial.ok_or(ParseError::MissingHeader("initial"))?,
            history: VmHistory::from_events(events),
        })
    }
}

fn parse_result(s: &str) -> Option<VmResult> {
    if s == "unit" {
        return Some(VmResult::Unit);
    }
    if let Some(d) = s.strip_prefix("data:") {
        return d.parse().ok().map(|d| VmResult::Data(DataHandle(d)));
    }
    s.strip_prefix("released:")?.parse().ok().map(VmResult::Released)
}
