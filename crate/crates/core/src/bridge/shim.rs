//! Child-process shim management.
//!
//! The shim is long-lived and speaks the frame protocol over its standard
//! input and output. A reader thread turns stdout into a channel so every wait
//! is bounded by a deadline; a shim that misses its deadline is killed and
//! respawned on the next request.

use std::io::{BufReader, BufWriter};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::oracle::BackendResult;

use super::protocol::{
    read_frame, write_message, ExecRequest, ExecResponse, Message, ShimCapabilities,
    PROTOCOL_VERSION,
};
use super::{BridgeError, Executor};

#[derive(Debug, Clone, PartialEq)]
pub struct ShimConfig {
    /// Program and arguments.
    pub command: Vec<String>,
    /// Expected profile name in the handshake.
    pub profile: String,
    pub handshake_timeout: Duration,
    /// Slack on top of the summed per-backend timeouts.
    pub grace: Duration,
}

impl ShimConfig {
    pub fn new(command: Vec<String>, profile: impl Into<String>) -> Self {
        Self {
            command,
            profile: profile.into(),
            handshake_timeout: Duration::from_secs(30),
            grace: Duration::from_secs(2),
        }
    }
}

enum Event {
    Frame(Vec<u8>),
    Closed,
    Failed(String),
}

struct Process {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    events: Receiver<Event>,
    reader: Option<JoinHandle<()>>,
}

impl Process {
    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
        if let Some(reader) = self.reader.take() {
            let _ = reader.join();
        }
    }
}

pub struct ShimHandle {
    config: ShimConfig,
    process: Option<Process>,
    capabilities: ShimCapabilities,
    respawns: u32,
}

/// Launch the shim and complete the handshake.
pub fn spawn_shim(config: ShimConfig) -> Result<ShimHandle, BridgeError> {
    let (process, capabilities) = launch(&config)?;
    Ok(ShimHandle {
        config,
        process: Some(process),
        capabilities,
        respawns: 0,
    })
}

fn launch(config: &ShimConfig) -> Result<(Process, ShimCapabilities), BridgeError> {
    let (program, args) = config
        .command
        .split_first()
        .ok_or_else(|| BridgeError::Spawn("empty shim command".into()))?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| BridgeError::Spawn(format!("{program}: {e}")))?;
    let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
    let stdout = child.stdout.take().expect("piped stdout");
    let (tx, events) = mpsc::channel();
    let reader = thread::spawn(move || {
        let mut stdout = BufReader::new(stdout);
        loop {
            let event = match read_frame(&mut stdout) {
                Ok(Some(body)) => Event::Frame(body),
                Ok(None) => Event::Closed,
                Err(e) => Event::Failed(e.to_string()),
            };
            let last = !matches!(event, Event::Frame(_));
            if tx.send(event).is_err() || last {
                return;
            }
        }
    });
    let mut process = Process {
        child,
        stdin,
        events,
        reader: Some(reader),
    };

    let hello = match process.events.recv_timeout(config.handshake_timeout) {
        Ok(Event::Frame(body)) => Message::decode_body(&body),
        Ok(Event::Closed) => Err(BridgeError::Handshake("shim exited before handshake".into())),
        Ok(Event::Failed(e)) => Err(BridgeError::Handshake(e)),
        Err(_) => Err(BridgeError::Handshake(format!(
            "no handshake within {:?}",
            config.handshake_timeout
        ))),
    };
    let checked = match hello {
        Ok(Message::Hello {
            protocol_version,
            profile,
            shim_capabilities,
        }) => {
            if protocol_version != PROTOCOL_VERSION {
                Err(BridgeError::VersionMismatch {
                    expected: PROTOCOL_VERSION,
                    found: protocol_version,
                })
            } else if profile != config.profile {
                Err(BridgeError::ProfileMismatch {
                    expected: config.profile.clone(),
                    found: profile,
                })
            } else {
                Ok(shim_capabilities)
            }
        }
        Ok(other) => Err(BridgeError::Handshake(format!("expected hello, got {other:?}"))),
        Err(e) => Err(e),
    };
    match checked {
        Ok(caps) => Ok((process, caps)),
        Err(e) => {
            process.kill();
            Err(e)
        }
    }
}

enum Attempt {
    Done(Result<ExecResponse, BridgeError>),
    Died(String),
}

impl std::fmt::Debug for ShimHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ShimHandle")
            .field("command", &self.config.command)
            .field("running", &self.process.is_some())
            .field("respawns", &self.respawns)
            .finish()
    }
}

impl ShimHandle {
    pub fn capabilities(&self) -> &ShimCapabilities {
        &self.capabilities
    }

    /// How many times the shim had to be relaunched.
    pub fn respawns(&self) -> u32 {
        self.respawns
    }

    pub fn is_alive(&mut self) -> bool {
        match &mut self.process {
            Some(p) => matches!(p.child.try_wait(), Ok(None)),
            None => false,
        }
    }

    /// Kill the shim process. The next request respawns it.
    pub fn kill(&mut self) {
        if let Some(mut p) = self.process.take() {
            p.kill();
        }
    }

    fn ensure_running(&mut self) -> Result<(), BridgeError> {
        if self.process.is_none() {
            let (process, caps) = launch(&self.config)?;
            self.process = Some(process);
            self.capabilities = caps;
            self.respawns += 1;
        }
        Ok(())
    }

    fn deadline(&self, req: &ExecRequest) -> Duration {
        Duration::from_secs_f64(req.timeout_s * req.backends.len() as f64) + self.config.grace
    }

    fn attempt(&mut self, req: &ExecRequest) -> Result<Attempt, BridgeError> {
        self.ensure_running()?;
        let deadline = self.deadline(req);
        let process = self.process.as_mut().expect("running");
        if let Err(e) = write_message(&mut process.stdin, &Message::Exec(req.clone())) {
            return Ok(Attempt::Died(format!("write failed: {e}")));
        }
        let event = process.events.recv_timeout(deadline);
        let outcome = match event {
            Ok(Event::Frame(body)) => match Message::decode_body(&body) {
                Ok(Message::Result(resp)) => Attempt::Done(resp.validate_against(req)),
                Ok(Message::ShimFault { message, .. }) => Attempt::Done(Err(BridgeError::ShimFault(message))),
                Ok(other) => Attempt::Done(Err(BridgeError::Protocol(format!(
                    "unexpected message {other:?}"
                )))),
                Err(e) => Attempt::Done(Err(e)),
            },
            Ok(Event::Closed) | Err(RecvTimeoutError::Disconnected) => Attempt::Died("shim exited".into()),
            Ok(Event::Failed(e)) => Attempt::Done(Err(BridgeError::Protocol(e))),
            Err(RecvTimeoutError::Timeout) => {
                log::warn!("shim missed the {deadline:?} deadline for test {}; killing it", req.test_id);
                self.kill();
                return Ok(Attempt::Done(Ok(ExecResponse {
                    test_id: req.test_id,
                    results: req.backends.iter().map(|&b| BackendResult::timeout(b)).collect(),
                    covered: None,
                })));
            }
        };
        // a framing error leaves the stream unusable
        if matches!(outcome, Attempt::Died(_) | Attempt::Done(Err(BridgeError::Protocol(_)))) {
            self.kill();
        }
        Ok(outcome)
    }
}

impl Executor for ShimHandle {
    fn execute(&mut self, req: &ExecRequest) -> Result<ExecResponse, BridgeError> {
        req.validate()?;
        match self.attempt(req)? {
            Attempt::Done(result) => result,
            Attempt::Died(first) => {
                log::warn!("shim died ({first}); respawning and retrying test {}", req.test_id);
                match self.attempt(req)? {
                    Attempt::Done(result) => result,
                    Attempt::Died(second) => Err(BridgeError::ShimDied(second)),
                }
            }
        }
    }

    fn supports_coverage(&self) -> bool {
        self.capabilities.coverage
    }
}

impl Drop for ShimHandle {
    fn drop(&mut self) {
        if let Some(mut p) = self.process.take() {
            let _ = write_message(&mut p.stdin, &Message::Shutdown);
            drop(p.stdin);
            let _ = p.child.wait_timeout_or_kill(Duration::from_millis(500));
            if let Some(reader) = p.reader.take() {
                let _ = reader.join();
            }
        }
    }
}

trait WaitOrKill {
    fn wait_timeout_or_kill(&mut self, limit: Duration) -> std::io::Result<()>;
}

impl WaitOrKill for Child {
    fn wait_timeout_or_kill(&mut self, limit: Duration) -> std::io::Result<()> {
        let step = Duration::from_millis(10);
        let mut waited = Duration::ZERO;
        while waited < limit {
            if self.try_wait()?.is_some() {
                return Ok(());
            }
            thread::sleep(step);
            waited += step;
        }
        self.kill()?;
        self.wait().map(|_| ())
    }
}
