//! In-process executor for hermetic runs.
//!
//! It never runs the test program. Results are derived from the source text:
//! `#@` directive comments force specific behaviors, planted-fault operators
//! reproduce a numerical and a behavioral compiler bug, and everything else
//! runs "cleanly" with outputs and coverage that are pure functions of the
//! source and seed.
//!
//! Directives (one per line, anywhere in the source):
//!
//! | directive                          | effect                                    |
//! |------------------------------------|-------------------------------------------|
//! | `#@ raise Type: message`           | both backends raise                       |
//! | `#@ eager raise Type: message`     | only the eager backend raises             |
//! | `#@ compiled raise Type: message`  | only the compiled backend raises          |
//! | `#@ timeout` / `#@ eager timeout`  | backend(s) time out                       |
//! | `#@ compiled perturb 0.5`          | add 0.5 to the first compiled element     |
//! | `#@ compiled dtype float64`        | compiled outputs report another dtype     |
//! | `#@ outputs 2`                     | number of output tensors (default 1)      |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::coverage::CoverageSet;
use crate::oracle::{BackendKind, BackendResult, ExceptionInfo, TensorValue};

use super::protocol::{ExecRequest, ExecResponse};
use super::{BridgeError, Executor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    /// The compiled path drops the sign of negative elements.
    Numerical,
    /// The compiled path raises while lowering the operator.
    Behavioral,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedFault {
    pub op: String,
    pub kind: FaultKind,
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedExecutor {
    faults: Vec<PlantedFault>,
}

#[derive(Debug, Clone, PartialEq)]
enum Behavior {
    Raise(ExceptionInfo),
    Timeout,
}

#[derive(Debug, Default)]
struct Script {
    eager: Option<Behavior>,
    compiled: Option<Behavior>,
    perturb: f64,
    compiled_dtype: Option<String>,
    outputs: usize,
}

fn stable_hash(parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0]);
    }
    u64::from_be_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

fn parse_exception(text: &str) -> ExceptionInfo {
    let (ty, msg) = match text.split_once(':') {
        Some((ty, msg)) => (ty.trim(), msg.trim()),
        None => (text.trim(), ""),
    };
    let ty = if ty.is_empty() { "RuntimeError" } else { ty };
    ExceptionInfo::new(ty, msg)
}

fn parse_script(source: &str) -> Script {
    let mut script = Script {
        outputs: 1,
        ..Default::default()
    };
    for line in source.lines() {
        let Some(rest) = line.trim_start().strip_prefix("#@") else {
            continue;
        };
        let rest = rest.trim();
        let (target, rest) = match rest.split_once(char::is_whitespace) {
            Some(("eager", r)) => (Some(BackendKind::Eager), r.trim()),
            Some(("compiled", r)) => (Some(BackendKind::Compiled), r.trim()),
            _ if rest == "eager" || rest == "compiled" => continue,
            _ => (None, rest),
        };
        let (verb, arg) = rest
            .split_once(char::is_whitespace)
            .map_or((rest, ""), |(v, a)| (v, a.trim()));
        let behavior = match verb {
            "raise" => Some(Behavior::Raise(parse_exception(arg))),
            "timeout" => Some(Behavior::Timeout),
            "perturb" => {
                script.perturb = arg.parse().unwrap_or(1.0);
                None
            }
            "dtype" => {
                script.compiled_dtype = Some(arg.to_string());
                None
            }
            "outputs" => {
                script.outputs = arg.parse().unwrap_or(1);
                None
            }
            _ => None,
        };
        if let Some(b) = behavior {
            match target {
                Some(BackendKind::Eager) => script.eager = Some(b),
                Some(BackendKind::Compiled) => script.compiled = Some(b),
                None => {
                    script.eager = Some(b.clone());
                    script.compiled = Some(b);
                }
            }
        }
    }
    script
}

/// Dotted call targets such as `toy.relu` or `torch.nn.Conv2d`, in order of appearance.
fn called_ops(source: &str) -> Vec<String> {
    let mut ops = Vec::new();
    for line in source.lines() {
        let code = line.split('#').next().unwrap_or("");
        let mut chars = code.char_indices().peekable();
        while let Some((start, c)) = chars.next() {
            if !(c.is_ascii_alphabetic() || c == '_') {
                continue;
            }
            if start > 0 && code[..start].ends_with(|p: char| p.is_ascii_alphanumeric() || p == '_' || p == '.') {
                continue;
            }
            let mut end = start + c.len_utf8();
            while let Some(&(i, ch)) = chars.peek() {
                if ch.is_ascii_alphanumeric() || ch == '_' || ch == '.' {
                    end = i + ch.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            let token = code[start..end].trim_end_matches('.');
            if token.contains('.') && code[end..].trim_start().starts_with('(') {
                ops.push(token.to_string());
            }
        }
    }
    ops
}

impl ScriptedExecutor {
    pub fn new() -> Self {
        Self::default()
    }

    /// Scripted stand-in for the toy framework: `toy.chunk` miscompiles
    /// numerically and `toy.pad` crashes the compiler.
    pub fn toy() -> Self {
        Self::new()
            .with_fault("toy.chunk", FaultKind::Numerical)
            .with_fault("toy.pad", FaultKind::Behavioral)
    }

    pub fn with_fault(mut self, op: impl Into<String>, kind: FaultKind) -> Self {
        self.faults.push(PlantedFault { op: op.into(), kind });
        self
    }

    fn coverage(ops: &[String]) -> CoverageSet {
        let mut cov: CoverageSet = (1..=5).map(|l| format!("sut/runtime.py:{l}")).collect();
        for op in ops {
            let file = op.replace('.', "/");
            let lines = 3 + stable_hash(&[op]) % 7;
            for l in 1..=lines {
                cov.insert(format!("sut/{file}.py:{l}"));
            }
        }
        for pair in ops.windows(2) {
            if pair[0] != pair[1] {
                let line = 100 + stable_hash(&[&pair[0], &pair[1]]) % 900;
                cov.insert(format!("sut/compiler/fusion.py:{line}"));
            }
        }
        cov
    }

    fn outputs(req: &ExecRequest, count: usize) -> Vec<TensorValue> {
        let mut rng = ChaCha8Rng::seed_from_u64(req.seed ^ stable_hash(&[&req.source]));
        (0..count)
            .map(|_| {
                let mut data: Vec<f64> = (0..6)
                    .map(|_| f64::from(rng.random_range(-1.0f32..1.0)))
                    .collect();
                // guarantee a negative element so sign faults are observable
                data[0] = -(data[0].abs() + 0.5);
                TensorValue::new(vec![2, 3], "float32", data).expect("2x3")
            })
            .collect()
    }

    fn run(&self, req: &ExecRequest) -> ExecResponse {
        let script = parse_script(&req.source);
        let ops = called_ops(&req.source);
        let eager_outputs = Self::outputs(req, script.outputs.max(1));

        let mut compiled_behavior = script.compiled.clone();
        let mut sign_fault = false;
        for fault in &self.faults {
            if !ops.contains(&fault.op) {
                continue;
            }
            match fault.kind {
                FaultKind::Numerical => sign_fault = true,
                FaultKind::Behavioral => {
                    if compiled_behavior.is_none() {
                        let mut e = ExceptionInfo::new(
                            "LoweringError",
                            format!("compiled lowering of {} failed", fault.op),
                        );
                        e.trace = vec![
                            "sut/compiler/compile.py:40 in compile_graph".into(),
                            format!("sut/compiler/lowering/{}.py:12 in lower", fault.op.replace('.', "/")),
                        ];
                        compiled_behavior = Some(Behavior::Raise(e));
                    }
                }
            }
        }

        let mut compiled_outputs = eager_outputs.clone();
        for t in &mut compiled_outputs {
            if let Some(dtype) = &script.compiled_dtype {
                t.dtype = dtype.clone();
            }
            if let crate::oracle::TensorPayload::Values(values) = &mut t.payload {
                if sign_fault {
                    values.iter_mut().for_each(|v| *v = v.abs());
                }
            }
        }
        if script.perturb != 0.0 {
            if let Some(crate::oracle::TensorPayload::Values(values)) =
                compiled_outputs.first_mut().map(|t| &mut t.payload)
            {
                values[0] += script.perturb;
            }
        }

        let results: Vec<BackendResult> = req
            .backends
            .iter()
            .map(|&backend| {
                let (behavior, outputs) = match backend {
                    BackendKind::Eager => (&script.eager, &eager_outputs),
                    BackendKind::Compiled => (&compiled_behavior, &compiled_outputs),
                };
                match behavior {
                    None => BackendResult::ok(backend, outputs.clone()),
                    Some(Behavior::Raise(e)) => {
                        let mut e = e.clone();
                        if e.trace.is_empty() {
                            e.trace = vec!["model.py:1 in forward".into()];
                        }
                        BackendResult::exception(backend, e)
                    }
                    Some(Behavior::Timeout) => BackendResult::timeout(backend),
                }
            })
            .collect();
        let covered = (req.want_coverage && results.iter().any(BackendResult::is_ok))
            .then(|| Self::coverage(&ops));
        ExecResponse {
            test_id: req.test_id,
            results,
            covered,
        }
    }
}

impl Executor for ScriptedExecutor {
    fn execute(&mut self, req: &ExecRequest) -> Result<ExecResponse, BridgeError> {
        req.validate()?;
        Ok(self.run(req))
    }
}
