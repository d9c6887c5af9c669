//! Wire messages: a 4-byte big-endian length, then one UTF-8 JSON object
//! whose `type` field names the message.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use coevo_core::config::TrainConfig;
use coevo_core::evaluation::{EvaluationResult, EvaluationStatus, EvaluationTask};

pub const PROTOCOL_VERSION: u32 = 1;

/// Frames larger than this are rejected before allocation.
pub const MAX_FRAME_LEN: u32 = 64 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Hello {
        proto: u32,
        worker_id: String,
    },
    Pull,
    Task {
        task_id: String,
        network_json: String,
        train_config: TrainConfig,
    },
    Empty,
    Result {
        task_id: String,
        primary: f64,
        raw_secondary: f64,
        status: EvaluationStatus,
        worker_id: String,
        duration: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
    Ack,
    Error {
        message: String,
    },
}

impl Message {
    pub fn task(task: &EvaluationTask) -> Self {
        Message::Task {
            task_id: task.task_id.clone(),
            network_json: task.network_json.clone(),
            train_config: task.train_config.clone(),
        }
    }

    pub fn result(r: &EvaluationResult) -> Self {
        Message::Result {
            task_id: r.task_id.clone(),
            primary: r.primary,
            raw_secondary: r.raw_secondary,
            status: r.status,
            worker_id: r.worker_id.clone(),
            duration: r.duration,
            reason: r.reason.clone(),
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Message::Error { message: message.into() }
    }

    pub fn into_task(self) -> Option<EvaluationTask> {
        match self {
            Message::Task {
                task_id,
                network_json,
                train_config,
            } => Some(EvaluationTask {
                task_id,
                network_json,
                train_config,
                submitted_at: 0.0,
            }),
            _ => None,
        }
    }

    pub fn into_result(self) -> Option<EvaluationResult> {
        match self {
            Message::Result {
                task_id,
                primary,
                raw_secondary,
                status,
                worker_id,
                duration,
                reason,
            } => Some(EvaluationResult {
                task_id,
                primary,
                raw_secondary,
                status,
                worker_id,
                duration,
                reason,
            }),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "hello",
            Message::Pull => "pull",
            Message::Task { .. } => "task",
            Message::Empty => "empty",
            Message::Result { .. } => "result",
            Message::Ack => "ack",
            Message::Error { .. } => "error",
        }
    }
}

pub fn encode(msg: &Message) -> io::Result<Vec<u8>> {
    let body = serde_json::to_vec(msg).map_err(io::Error::other)?;
    let len = u32::try_from(body.len())
        .ok()
        .filter(|l| *l <= MAX_FRAME_LEN)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

/// Decodes exactly one complete frame.
pub fn decode(frame: &[u8]) -> io::Result<Message> {
    let mut r = frame;
    let msg = read_frame(&mut r)?.ok_or(io::ErrorKind::UnexpectedEof)?;
    if !r.is_empty() {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "trailing bytes after frame"));
    }
    Ok(msg)
}

pub fn write_frame<W: Write>(w: &mut W, msg: &Message) -> io::Result<()> {
    w.write_all(&encode(msg)?)?;
    w.flush()
}

/// Reads one frame; `Ok(None)` on a clean end of stream between frames.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Message>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME_LEN {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {len} bytes")));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    serde_json::from_slice(&body)
        .map(Some)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}
