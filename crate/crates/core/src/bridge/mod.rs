//! Topic-based pose relay for coupling the visualization to an external
//! vehicle simulation: newline-delimited JSON over TCP, a fan-out relay, a
//! blocking client, pose interpolation with dead reckoning and a cycle-time
//! probe.

mod client;
mod interp;
mod measure;
mod protocol;
mod relay;
mod transform;

pub use client::{BridgeClient, FrameReader, FrameWriter};
pub use interp::{InterpBuffer, DEFAULT_MAX_EXTRAPOLATION_SECS};
pub use measure::{measure_cycle, CycleStats, DEFAULT_BUDGET_MS};
pub use protocol::{
    decode_frame, encode_frame, wall_clock_secs, Frame, LineReader, VehicleStateMsg, MAX_LINE_BYTES,
    VEHICLE_STATE_TYPE,
};
pub use relay::{serve, RelayHandle};
pub use transform::{apply_frame_transform, FrameTransform};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("transport: {0}")]
    Io(#[from] std::io::Error),
    #[error("line exceeds {MAX_LINE_BYTES} bytes")]
    LineTooLong,
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("rotation is not a unit quaternion")]
    RotationNotUnit,
    #[error("frame mismatch: transform expects {expected:?}, message is in {found:?}")]
    FrameMismatch { expected: String, found: String },
    #[error("interpolation buffer is empty")]
    EmptyBuffer,
    #[error("relay reported: {0}")]
    Server(String),
    #[error("connection closed")]
    Closed,
    #[error("sample count must be at least 1")]
    BadCount,
}

impl BridgeError {
    /// Transport-level failures as opposed to malformed data.
    pub fn is_transport(&self) -> bool {
        matches!(self, BridgeError::Io(_) | BridgeError::Closed | BridgeError::Server(_))
    }
}
