use std::io::{Read, Write};

use super::protocol::{read_frame, write_message, Message, ShimCapabilities, PROTOCOL_VERSION};
use super::{BridgeError, Executor};

/// Shim side of the protocol: greet, then answer `exec` frames with
/// `executor` until `shutdown` or end of input.
///
/// Executor errors are reported as `shim_fault` frames and the loop goes on.
pub fn serve<R: Read, W: Write, E: Executor>(
    input: &mut R,
    output: &mut W,
    profile: &str,
    executor: &mut E,
) -> Result<(), BridgeError> {
    write_message(
        output,
        &Message::Hello {
            protocol_version: PROTOCOL_VERSION,
            profile: profile.to_string(),
            shim_capabilities: ShimCapabilities {
                coverage: executor.supports_coverage(),
            },
        },
    )?;
    while let Some(body) = read_frame(input)? {
        match Message::decode_body(&body)? {
            Message::Exec(req) => {
                let reply = match executor.execute(&req) {
                    Ok(resp) => Message::Result(resp),
                    Err(e) => Message::ShimFault {
                        test_id: req.test_id,
                        message: e.to_string(),
                    },
                };
                write_message(output, &reply)?;
            }
            Message::Shutdown => break,
            other => {
                return Err(BridgeError::Protocol(format!(
                    "shim received unexpected message {other:?}"
                )))
            }
        }
    }
    Ok(())
}
