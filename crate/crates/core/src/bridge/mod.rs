//! Bridge to the library under test.
//!
//! The orchestrator never imports the deep-learning library. It sends each
//! test program to an executor, which runs it on the eager and compiled
//! backends and reports outputs, exceptions, timeouts and covered lines.
//! [`ShimHandle`] drives an external shim process over the frame protocol in
//! [`protocol`]; [`ScriptedExecutor`] answers in-process for hermetic runs.

pub mod protocol;
mod scripted;
mod serve;
mod shim;

use thiserror::Error;

pub use protocol::{
    ExecRequest, ExecResponse, Message, ShimCapabilities, MAX_FRAME_LEN, MAX_WIRE_ELEMENTS,
    PROTOCOL_VERSION,
};
pub use scripted::{FaultKind, PlantedFault, ScriptedExecutor};
pub use serve::serve;
pub use shim::{spawn_shim, ShimConfig, ShimHandle};

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("shim fault: {0}")]
    ShimFault(String),
    #[error("could not start shim: {0}")]
    Spawn(String),
    #[error("shim handshake failed: {0}")]
    Handshake(String),
    #[error("shim speaks protocol version {found}, expected {expected}")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("shim loaded profile {found:?}, expected {expected:?}")]
    ProfileMismatch { expected: String, found: String },
    #[error("shim died twice running one test: {0}")]
    ShimDied(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BridgeError {
    /// Errors that end the campaign. The rest are confined to one iteration.
    pub fn is_fatal(&self) -> bool {
        !matches!(self, BridgeError::ShimFault(_) | BridgeError::Protocol(_))
    }
}

/// Runs one test program on the requested backends.
pub trait Executor {
    fn execute(&mut self, req: &ExecRequest) -> Result<ExecResponse, BridgeError>;

    /// Whether responses can carry covered lines.
    fn supports_coverage(&self) -> bool {
        true
    }
}

impl<E: Executor + ?Sized> Executor for Box<E> {
    fn execute(&mut self, req: &ExecRequest) -> Result<ExecResponse, BridgeError> {
        (**self).execute(req)
    }

    fn supports_coverage(&self) -> bool {
        (**self).supports_coverage()
    }
}
