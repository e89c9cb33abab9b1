//! A shim that speaks the frame protocol on stdin/stdout and answers with the
//! in-process scripted executor.
//!
//! Besides the executor's own directives it honors a few that misbehave on
//! the process level, for exercising the orchestrator:
//!
//! - `#@ shim sleep S`: sleep min(S, timeout_s) seconds; report timeouts when S exceeds it
//! - `#@ shim hang`: never answer
//! - `#@ shim exit`: exit without answering
//! - `#@ shim exit-once PATH`: exit without answering unless PATH exists, creating it first
//! - `#@ shim garbage`: answer with a frame that is not JSON

use std::io::{self, Write};
use std::path::Path;
use std::process;
use std::thread;
use std::time::Duration;

use clap::Parser;
use dlfuzz::bridge::{
    serve, BridgeError, ExecRequest, ExecResponse, Executor, ScriptedExecutor, PROTOCOL_VERSION,
};
use dlfuzz::oracle::BackendResult;

#[derive(Parser)]
#[command(name = "dlfuzz-scripted-shim")]
struct Args {
    /// Profile name announced in the handshake.
    #[arg(long, default_value = "toy")]
    profile: String,
    /// Run without the planted faults.
    #[arg(long)]
    no_faults: bool,
    /// Announce this protocol version instead of the real one.
    #[arg(long)]
    protocol_version: Option<u32>,
    /// Exit before the handshake.
    #[arg(long)]
    die_at_start: bool,
    /// Do not report coverage.
    #[arg(long)]
    no_coverage: bool,
}

struct ProcessShim {
    inner: ScriptedExecutor,
    coverage: bool,
}

fn directive<'a>(source: &'a str, name: &str) -> Option<&'a str> {
    source.lines().find_map(|line| {
        let rest = line.trim_start().strip_prefix("#@")?.trim();
        let rest = rest.strip_prefix("shim")?.trim_start();
        let arg = rest.strip_prefix(name)?;
        (arg.is_empty() || arg.starts_with(char::is_whitespace)).then(|| arg.trim())
    })
}

impl Executor for ProcessShim {
    fn execute(&mut self, req: &ExecRequest) -> Result<ExecResponse, BridgeError> {
        if directive(&req.source, "hang").is_some() {
            loop {
                thread::sleep(Duration::from_secs(3600));
            }
        }
        if directive(&req.source, "exit").is_some() {
            process::exit(17);
        }
        if let Some(path) = directive(&req.source, "exit-once") {
            let path = Path::new(path);
            if !path.exists() {
                std::fs::write(path, b"").map_err(BridgeError::Io)?;
                process::exit(17);
            }
        }
        if directive(&req.source, "garbage").is_some() {
            let mut out = io::stdout().lock();
            out.write_all(&5u32.to_be_bytes())?;
            out.write_all(b"{{{{{")?;
            out.flush()?;
        }
        if let Some(secs) = directive(&req.source, "sleep") {
            let secs: f64 = secs.parse().unwrap_or(f64::INFINITY);
            thread::sleep(Duration::from_secs_f64(secs.min(req.timeout_s)));
            if secs > req.timeout_s {
                return Ok(ExecResponse {
                    test_id: req.test_id,
                    results: req.backends.iter().map(|&b| BackendResult::timeout(b)).collect(),
                    covered: None,
                });
            }
        }
        let mut resp = self.inner.execute(req)?;
        if !self.coverage {
            resp.covered = None;
        }
        Ok(resp)
    }

    fn supports_coverage(&self) -> bool {
        self.coverage
    }
}

fn main() {
    let args = Args::parse();
    if args.die_at_start {
        process::exit(3);
    }
    let mut shim = ProcessShim {
        inner: if args.no_faults {
            ScriptedExecutor::new()
        } else {
            ScriptedExecutor::toy()
        },
        coverage: !args.no_coverage,
    };
    let stdin = io::stdin();
    let stdout = io::stdout();
    let result = match args.protocol_version {
        Some(v) if v != PROTOCOL_VERSION => {
            let hello = dlfuzz::bridge::Message::Hello {
                protocol_version: v,
                profile: args.profile.clone(),
                shim_capabilities: dlfuzz::bridge::ShimCapabilities { coverage: true },
            };
            dlfuzz::bridge::protocol::write_message(&mut stdout.lock(), &hello).map_err(BridgeError::Io)
        }
        _ => serve(&mut stdin.lock(), &mut stdout.lock(), &args.profile, &mut shim),
    };
    if let Err(e) = result {
        eprintln!("scripted shim: {e}");
        process::exit(1);
    }
}
