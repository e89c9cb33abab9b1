//! Length-prefixed frame protocol spoken with the executor shim.
//!
//! A frame is a 4-byte big-endian payload length followed by that many bytes
//! of compact UTF-8 JSON. Each payload is one object tagged by `"type"`.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::coverage::CoverageSet;
use crate::oracle::{BackendKind, BackendResult};

use super::BridgeError;

pub const PROTOCOL_VERSION: u32 = 1;

/// Frames larger than this are rejected before allocation.
pub const MAX_FRAME_LEN: u32 = 64 * 1024 * 1024;

/// Outputs with more elements than this travel as a digest.
pub const MAX_WIRE_ELEMENTS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShimCapabilities {
    pub coverage: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecRequest {
    pub test_id: u64,
    pub source: String,
    pub backends: Vec<BackendKind>,
    /// Per-backend limit in seconds.
    pub timeout_s: f64,
    pub want_coverage: bool,
    pub seed: u64,
}

impl ExecRequest {
    pub fn validate(&self) -> Result<(), BridgeError> {
        if self.backends.is_empty() {
            return Err(BridgeError::Protocol("request names no backends".into()));
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(BridgeError::Protocol("timeout_s must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecResponse {
    pub test_id: u64,
    pub results: Vec<BackendResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covered: Option<CoverageSet>,
}

impl ExecResponse {
    pub fn result(&self, backend: BackendKind) -> Option<&BackendResult> {
        self.results.iter().find(|r| r.backend == backend)
    }

    /// Check a response against the request it answers and put its results
    /// in request order.
    pub fn validate_against(mut self, req: &ExecRequest) -> Result<Self, BridgeError> {
        if self.test_id != req.test_id {
            return Err(BridgeError::Protocol(format!(
                "response for test {} answers request {}",
                self.test_id, req.test_id
            )));
        }
        if self.results.len() != req.backends.len() {
            return Err(BridgeError::Protocol(format!(
                "{} results for {} requested backends",
                self.results.len(),
                req.backends.len()
            )));
        }
        let mut ordered = Vec::with_capacity(req.backends.len());
        for backend in &req.backends {
            let pos = self
                .results
                .iter()
                .position(|r| r.backend == *backend)
                .ok_or_else(|| BridgeError::Protocol(format!("no result for backend {backend}")))?;
            ordered.push(self.results.swap_remove(pos));
        }
        self.results = ordered;
        for r in &self.results {
            if let crate::oracle::ExecStatus::Ok { outputs } = &r.status {
                for t in outputs {
                    t.validate()
                        .map_err(|e| BridgeError::Protocol(format!("{} output: {e}", r.backend)))?;
                }
            }
        }
        let any_ok = self.results.iter().any(BackendResult::is_ok);
        let expect_coverage = req.want_coverage && any_ok;
        if self.covered.is_some() != expect_coverage {
            return Err(BridgeError::Protocol(if expect_coverage {
                "coverage requested but missing".into()
            } else {
                "unexpected coverage in response".into()
            }));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Hello {
        protocol_version: u32,
        profile: String,
        shim_capabilities: ShimCapabilities,
    },
    Exec(ExecRequest),
    Result(ExecResponse),
    ShimFault {
        test_id: u64,
        message: String,
    },
    Shutdown,
}

impl Message {
    pub fn encode(&self) -> Vec<u8> {
        let body = serde_json::to_vec(self).expect("protocol messages serialize");
        let mut frame = Vec::with_capacity(body.len() + 4);
        frame.extend_from_slice(&(body.len() as u32).to_be_bytes());
        frame.extend_from_slice(&body);
        frame
    }

    /// Decode one complete frame (header included).
    pub fn decode(frame: &[u8]) -> Result<Self, BridgeError> {
        if frame.len() < 4 {
            return Err(BridgeError::Protocol("frame shorter than its header".into()));
        }
        let len = u32::from_be_bytes(frame[..4].try_into().expect("4 bytes"));
        if len as usize != frame.len() - 4 {
            return Err(BridgeError::Protocol(format!(
                "header announces {len} bytes, frame carries {}",
                frame.len() - 4
            )));
        }
        Self::decode_body(&frame[4..])
    }

    pub fn decode_body(body: &[u8]) -> Result<Self, BridgeError> {
        serde_json::from_slice(body).map_err(|e| BridgeError::Protocol(format!("bad frame body: {e}")))
    }
}

/// Read one frame body. `Ok(None)` on a clean end of stream before a header.
pub fn read_frame<R: Read>(reader: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut header = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match reader.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let len = u32::from_be_bytes(header);
    if len > MAX_FRAME_LEN {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame of {len} bytes exceeds the limit"),
        ));
    }
    let mut body = vec![0u8; len as usize];
    reader.read_exact(&mut body)?;
    Ok(Some(body))
}

pub fn write_message<W: Write>(writer: &mut W, message: &Message) -> io::Result<()> {
    writer.write_all(&message.encode())?;
    writer.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{ExceptionInfo, TensorValue};
    use proptest::prelude::*;

    fn fixtures() -> Vec<String> {
        vec![
            r#"{"type":"hello","protocol_version":1,"profile":"toy","shim_capabilities":{"coverage":true}}"#.into(),
            r#"{"type":"exec","test_id":7,"source":"class Model: pass\n","backends":["eager","compiled"],"timeout_s":10.0,"want_coverage":true,"seed":42}"#.into(),
            r#"{"type":"result","test_id":7,"results":[{"backend":"eager","status":"ok","outputs":[{"shape":[2],"dtype":"float32","data":[1.5,"nan"]}]},{"backend":"compiled","status":"timeout"}],"covered":["sut/add.py:1","sut/add.py:2"]}"#.into(),
            r#"{"type":"result","test_id":8,"results":[{"backend":"eager","status":"exception","exception":{"type":"ValueError","message":"bad","trace":["m.py:1"]}},{"backend":"compiled","status":"exception","exception":{"type":"ValueError","message":"bad","trace":[]}}]}"#.into(),
            r#"{"type":"shim_fault","test_id":9,"message":"coverage tool crashed"}"#.into(),
            r#"{"type":"shutdown"}"#.into(),
        ]
    }

    fn frame(body: &str) -> Vec<u8> {
        let mut f = (body.len() as u32).to_be_bytes().to_vec();
        f.extend_from_slice(body.as_bytes());
        f
    }

    #[test]
    fn fixture_frames_round_trip() {
        for body in fixtures() {
            let f = frame(&body);
            let msg = Message::decode(&f).unwrap_or_else(|e| panic!("{body}: {e}"));
            assert_eq!(msg.encode(), f, "{body}");
        }
    }

    #[test]
    fn stream_reading() {
        let mut stream = Vec::new();
        for body in fixtures() {
            stream.extend(frame(&body));
        }
        let mut cursor = io::Cursor::new(stream);
        let mut count = 0;
        while let Some(body) = read_frame(&mut cursor).unwrap() {
            Message::decode_body(&body).unwrap();
            count += 1;
        }
        assert_eq!(count, fixtures().len());
    }

    #[test]
    fn truncated_stream_is_an_error() {
        let f = frame(&fixtures()[0]);
        let mut cursor = io::Cursor::new(f[..10].to_vec());
        assert!(read_frame(&mut cursor).is_err());
        let mut cursor = io::Cursor::new(vec![0u8, 0]);
        assert!(read_frame(&mut cursor).is_err());
    }

    #[test]
    fn oversized_header_rejected() {
        let mut cursor = io::Cursor::new(u32::MAX.to_be_bytes().to_vec());
        assert_eq!(read_frame(&mut cursor).unwrap_err().kind(), io::ErrorKind::InvalidData);
    }

    fn request() -> ExecRequest {
        ExecRequest {
            test_id: 3,
            source: "x".into(),
            backends: vec![BackendKind::Eager, BackendKind::Compiled],
            timeout_s: 1.0,
            want_coverage: true,
            seed: 0,
        }
    }

    #[test]
    fn validation_reorders_and_checks() {
        let req = request();
        let ok = |b| BackendResult::ok(b, vec![TensorValue::scalar("float32", 0.0)]);
        let resp = ExecResponse {
            test_id: 3,
            results: vec![ok(BackendKind::Compiled), ok(BackendKind::Eager)],
            covered: Some(CoverageSet::new()),
        };
        let v = resp.clone().validate_against(&req).unwrap();
        assert_eq!(v.results[0].backend, BackendKind::Eager);

        let wrong_id = ExecResponse { test_id: 4, ..resp.clone() };
        assert!(wrong_id.validate_against(&req).is_err());

        let no_cov = ExecResponse { covered: None, ..resp.clone() };
        assert!(no_cov.validate_against(&req).is_err());

        let crashed = ExecResponse {
            test_id: 3,
            results: vec![
                BackendResult::exception(BackendKind::Eager, ExceptionInfo::new("E", "m")),
                BackendResult::timeout(BackendKind::Compiled),
            ],
            covered: Some(CoverageSet::new()),
        };
        assert!(crashed.validate_against(&req).is_err());

        let dup = ExecResponse {
            results: vec![ok(BackendKind::Eager), ok(BackendKind::Eager)],
            ..resp
        };
        assert!(dup.validate_against(&req).is_err());
    }

    #[test]
    fn request_validation() {
        assert!(request().validate().is_ok());
        assert!(ExecRequest { backends: vec![], ..request() }.validate().is_err());
        assert!(ExecRequest { timeout_s: 0.0, ..request() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn fuzzed_frames_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = Message::decode(&bytes);
            let _ = read_frame(&mut io::Cursor::new(bytes));
        }

        #[test]
        fn mutated_fixtures_never_panic(idx in 0usize..6, pos in 0usize..400, byte in any::<u8>()) {
            let mut f = frame(&fixtures()[idx]);
            let p = pos % f.len();
            f[p] = byte;
            let _ = Message::decode(&f);
        }
    }
}
