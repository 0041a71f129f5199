use super::BridgeError;
use crate::math::{Quat, Vec3};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Read};
use std::time::{SystemTime, UNIX_EPOCH};

/// Longest accepted line, newline excluded.
pub const MAX_LINE_BYTES: usize = 64 * 1024;

pub const VEHICLE_STATE_TYPE: &str = "vrscene/VehicleState";

/// Rigid-body state of one vehicle. `angular_vel` is in the same frame as
/// `position` (not body frame).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleStateMsg {
    pub seq: u64,
    pub stamp: f64,
    pub frame_id: String,
    pub position: Vec3,
    pub rotation: Quat,
    pub linear_vel: Vec3,
    #[serde(default)]
    pub angular_vel: Vec3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Frame {
    Advertise {
        topic: String,
        #[serde(rename = "type")]
        msg_type: String,
    },
    Subscribe {
        topic: String,
    },
    Unsubscribe {
        topic: String,
    },
    Publish {
        topic: String,
        msg: VehicleStateMsg,
    },
    Ping {
        t: f64,
    },
    Pong {
        t: f64,
        server_t: f64,
    },
    Error {
        reason: String,
    },
}

/// One JSON object plus the terminating newline.
pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, BridgeError> {
    let mut out = serde_json::to_vec(frame).map_err(|e| BridgeError::Malformed(e.to_string()))?;
    if out.len() > MAX_LINE_BYTES {
        return Err(BridgeError::LineTooLong);
    }
    out.push(b'\n');
    Ok(out)
}

/// Accepts one line with or without its trailing newline.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, BridgeError> {
    let line = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    let line = line.strip_suffix(b"\r").unwrap_or(line);
    if line.len() > MAX_LINE_BYTES {
        return Err(BridgeError::LineTooLong);
    }
    if line.contains(&b'\n') {
        return Err(BridgeError::Malformed("more than one line".into()));
    }
    let frame: Frame = serde_json::from_slice(line).map_err(|e| BridgeError::Malformed(e.to_string()))?;
    if let Frame::Publish { msg, .. } = &frame {
        if !msg.rotation.is_unit() {
            return Err(BridgeError::RotationNotUnit);
        }
    }
    Ok(frame)
}

/// Seconds since the Unix epoch; the shared time base for stamps on one host.
pub fn wall_clock_secs() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Newline framing over a byte stream with a hard per-line cap.
pub struct LineReader<R> {
    inner: BufReader<R>,
}

impl<R: Read> LineReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner: BufReader::new(inner) }
    }

    /// Fills `buf` with the next line including its newline. Returns false on
    /// clean end of stream; a trailing partial line is discarded.
    pub fn read_line(&mut self, buf: &mut Vec<u8>) -> Result<bool, BridgeError> {
        buf.clear();
        loop {
            let avail = self.inner.fill_buf()?;
            if avail.is_empty() {
                return Ok(false);
            }
            let (take, done) = match avail.iter().position(|&b| b == b'\n') {
                Some(i) => (i + 1, true),
                None => (avail.len(), false),
            };
            buf.extend_from_slice(&avail[..take]);
            self.inner.consume(take);
            if buf.len() > MAX_LINE_BYTES + usize::from(done) {
                return Err(BridgeError::LineTooLong);
            }
            if done {
                return Ok(true);
            }
        }
    }

    pub fn get_ref(&self) -> &R {
        self.inner.get_ref()
    }
}
