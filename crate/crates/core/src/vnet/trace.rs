use std::io::{self, Write};

use serde::Serialize;

use super::FrameId;
use crate::time::VirtualTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Send,
    Switch,
    Enqueue,
    Deliver,
    Drop,
    /// The ALG took the frame and, if anything, sent new frames in its place.
    Consume,
    /// Proxy response passed straight back to the waiting client.
    Relay,
    Loopback,
}

impl Action {
    pub fn is_terminal(self) -> bool {
        !matches!(self, Action::Send | Action::Switch | Action::Enqueue)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEntry {
    /// Milliseconds of virtual time.
    pub time: VirtualTime,
    pub frame_id: FrameId,
    pub node: String,
    pub action: Action,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
}

/// One JSON object per line.
pub fn write_jsonl<W: Write>(entries: &[TraceEntry], mut out: W) -> io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
