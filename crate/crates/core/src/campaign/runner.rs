use std::time::Instant;

use rand::Rng;

use crate::bridge::{spawn_shim, ExecRequest, Executor, ScriptedExecutor, ShimConfig};
use crate::config::{Budget, CampaignConfig, ExecutorConfig, LlmConfig};
use crate::coverage::CoverageSet;
use crate::llm::{
    build_analysis_prompt, build_default_prompt, build_feedback_prompt, parse_code, parse_summary,
    Agent, AgentRole, ChatBackend, MockBackend, PromptBudget, RemoteBackend, Strategy, SutProfile,
    Transcript,
};
use crate::opsel::{load_operator_set, ops_selection, SAParams};
use crate::oracle::{bug_signature, classify, BackendKind, Classification, ToleranceConfig};
use crate::types::{FeedbackPayload, LoopMode, TestCase};

use super::record::{FailureStage, IterationFailure, IterationRecord};
use super::state::CampaignState;
use super::store::{load_campaign, CampaignStore, LoadedCampaign};
use super::summary::CampaignSummary;
use super::CampaignError;

/// Source of iteration wall times.
pub trait Clock {
    /// Milliseconds since an arbitrary fixed origin.
    fn now_ms(&self) -> u64;
}

pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        self.origin.elapsed().as_millis() as u64
    }
}

/// Always reads zero, so logs do not depend on timing.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn now_ms(&self) -> u64 {
        0
    }
}

/// The collaborators one iteration talks to.
pub struct Deps {
    pub profile: SutProfile,
    pub analysis: Agent,
    pub generation: Agent,
    pub executor: Box<dyn Executor>,
}

impl Deps {
    /// Load the profile, connect both agents and start the executor.
    pub fn from_config(config: &CampaignConfig) -> Result<Self, CampaignError> {
        let profile = SutProfile::load(&config.profile)?;
        let (analysis, generation): (Box<dyn ChatBackend>, Box<dyn ChatBackend>) =
            match &config.llm.mock_transcript {
                Some(path) => {
                    let transcript = Transcript::load(path)?;
                    (
                        Box::new(MockBackend::new(&transcript)),
                        Box::new(MockBackend::new(&transcript)),
                    )
                }
                None => {
                    let a = config.llm.analysis.as_ref().expect("validated");
                    let g = config.llm.generation.as_ref().expect("validated");
                    (
                        Box::new(RemoteBackend::new(a.remote_settings())?),
                        Box::new(RemoteBackend::new(g.remote_settings())?),
                    )
                }
            };
        let llm = &config.llm;
        let analysis = Agent::new(
            AgentRole::Analysis,
            analysis,
            llm.analysis_temperature(),
            LlmConfig::max_tokens(llm.analysis.as_ref()),
        );
        let generation = Agent::new(
            AgentRole::Generation,
            generation,
            llm.generation_temperature(),
            LlmConfig::max_tokens(llm.generation.as_ref()),
        );
        let executor = executor_from_config(config, &profile.name)?;
        Ok(Self {
            profile,
            analysis,
            generation,
            executor,
        })
    }
}

/// Start the executor named by the configuration.
pub fn executor_from_config(
    config: &CampaignConfig,
    profile_name: &str,
) -> Result<Box<dyn Executor>, CampaignError> {
    Ok(match &config.executor {
        ExecutorConfig::Scripted { planted_faults } => Box::new(if *planted_faults {
            ScriptedExecutor::toy()
        } else {
            ScriptedExecutor::new()
        }),
        ExecutorConfig::Shim { command } => {
            Box::new(spawn_shim(ShimConfig::new(command.clone(), profile_name))?)
        }
    })
}

/// Loop parameters taken from the configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopSettings {
    pub sa: SAParams,
    pub tolerance: ToleranceConfig,
    pub prompt: PromptBudget,
    pub timeout_s: f64,
    pub repair_window: u32,
}

impl From<&CampaignConfig> for LoopSettings {
    fn from(c: &CampaignConfig) -> Self {
        Self {
            sa: c.sa.clone(),
            tolerance: c.tolerance,
            prompt: c.loop_.prompt,
            timeout_s: c.loop_.timeout_s,
            repair_window: c.loop_.repair_window,
        }
    }
}

/// Render coverage feedback listing at most `max_lines` of the new lines.
pub fn render_coverage_feedback(covered: &CoverageSet, new_lines: &[&str], max_lines: usize) -> String {
    let mut body = format!(
        "Both backends ran and their outputs agree within tolerance.\n\
         The test covered {} lines, {} of them not covered by any earlier test.",
        covered.len(),
        new_lines.len()
    );
    if new_lines.is_empty() {
        body.push_str("\nNo new lines were reached.");
        return body;
    }
    body.push_str("\nNewly covered lines:");
    for line in new_lines.iter().take(max_lines) {
        body.push_str("\n  ");
        body.push_str(line);
    }
    if new_lines.len() > max_lines {
        body.push_str(&format!("\n  ... and {} more", new_lines.len() - max_lines));
    }
    body
}

fn fail(mut record: IterationRecord, stage: FailureStage, message: String) -> IterationRecord {
    log::warn!("iteration {}: {stage} failed: {message}", record.id);
    record.feedback = FeedbackPayload::exception_log(format!("The {stage} step failed: {message}"));
    record.failure = Some(IterationFailure { stage, message });
    record
}

/// Run one iteration against `state` without changing it. Errors are fatal to
/// the campaign; everything else ends up in the returned record.
pub fn run_iteration(
    state: &CampaignState,
    deps: &mut Deps,
    settings: &LoopSettings,
    clock: &dyn Clock,
) -> Result<IterationRecord, CampaignError> {
    let started = clock.now_ms();
    let id = state.iteration;
    let mode = state.next_mode(settings.repair_window);
    let mut rng = state.rng_for(id);

    let mut table = state.op_table.clone();
    let selection = ops_selection(state.previous_feedback(mode), &mut table, &settings.sa, &mut rng)?;
    let ops = selection.ops.into_vec();
    let mut record = IterationRecord {
        id,
        mode,
        selected_ops: ops.clone(),
        stat_update: selection.applied,
        summary: None,
        exchanges: Vec::new(),
        test: None,
        exec_seed: None,
        eager: None,
        compiled: None,
        outcome: None,
        failure: None,
        feedback: FeedbackPayload::exception_log(String::new()),
        covered: None,
        delta_cov: 0,
        wall_time_ms: 0,
    };
    let finish = |mut r: IterationRecord| {
        r.wall_time_ms = clock.now_ms().saturating_sub(started);
        Ok(r)
    };

    let prompt = if mode == LoopMode::Default {
        build_default_prompt(&deps.profile, &ops)
    } else {
        let (Some(last_test), Some(last_feedback)) = (&state.last_test, &state.last_feedback) else {
            return Err(CampaignError::Corrupt(format!(
                "iteration {id} runs in {mode} mode but there is no previous test"
            )));
        };
        let analysis_prompt =
            build_analysis_prompt(&deps.profile, last_test, last_feedback, &settings.prompt);
        let exchange = match deps.analysis.ask(mode, id, analysis_prompt) {
            Ok(x) => x,
            Err(e) => return finish(fail(record, FailureStage::Analysis, e.to_string())),
        };
        let parsed = parse_summary(&exchange.response);
        record.exchanges.push(exchange);
        let summary = match parsed {
            Ok(s) => s,
            Err(e) => return finish(fail(record, FailureStage::Analysis, e.to_string())),
        };
        let strategy = if mode == LoopMode::Repair {
            Strategy::RepairInvalid
        } else {
            Strategy::for_feedback(last_feedback.kind)
        };
        let prompt = build_feedback_prompt(&deps.profile, last_test, &summary, strategy, &ops);
        record.summary = Some(summary);
        prompt
    };

    let exchange = match deps.generation.ask(mode, id, prompt) {
        Ok(x) => x,
        Err(e) => return finish(fail(record, FailureStage::Generation, e.to_string())),
    };
    let parsed = parse_code(&exchange.response, &deps.profile);
    record.exchanges.push(exchange);
    let source = match parsed {
        Ok(s) => s,
        Err(e) => return finish(fail(record, FailureStage::Generation, e.to_string())),
    };
    let test = TestCase {
        id,
        source,
        selected_ops: ops,
        origin: mode,
    };
    record.test = Some(test.clone());

    let seed: u64 = rng.random();
    record.exec_seed = Some(seed);
    let request = ExecRequest {
        test_id: id,
        source: test.source.clone(),
        backends: vec![BackendKind::Eager, BackendKind::Compiled],
        timeout_s: settings.timeout_s,
        want_coverage: deps.executor.supports_coverage(),
        seed,
    };
    let response = match deps.executor.execute(&request) {
        Ok(r) => r,
        Err(e) if e.is_fatal() => return Err(e.into()),
        Err(e) => return finish(fail(record, FailureStage::Execution, e.to_string())),
    };
    let (Some(eager), Some(compiled)) = (
        response.result(BackendKind::Eager).cloned(),
        response.result(BackendKind::Compiled).cloned(),
    ) else {
        return finish(fail(record, FailureStage::Execution, "response lacks a backend".into()));
    };

    let mut outcome = classify(&eager, &compiled, &settings.tolerance);
    outcome.signature = bug_signature(&outcome, &test);
    if outcome.classification == Classification::Pass {
        let covered = response.covered.unwrap_or_default();
        let new_lines: Vec<&str> = covered.difference(&state.cumulative_cov).collect();
        let delta = new_lines.len() as u64;
        let body = render_coverage_feedback(&covered, &new_lines, settings.prompt.coverage_lines);
        outcome.attach_coverage(body, delta);
        record.delta_cov = delta;
        record.covered = Some(covered);
    }
    record.feedback = outcome.feedback.clone();
    record.eager = Some(eager);
    record.compiled = Some(compiled);
    record.outcome = Some(outcome);
    finish(record)
}

/// A live campaign: its store, state and collaborators.
pub struct Campaign {
    pub config: CampaignConfig,
    pub store: CampaignStore,
    pub state: CampaignState,
    deps: Deps,
    settings: LoopSettings,
    clock: Box<dyn Clock>,
}

impl Campaign {
    /// Start a new campaign in `workdir`, which must be empty or absent.
    pub fn create(
        config: CampaignConfig,
        workdir: &std::path::Path,
        deps: Deps,
        clock: Box<dyn Clock>,
    ) -> Result<Self, CampaignError> {
        let table = load_operator_set(&config.opset)?;
        if table.len() < config.sa.k_min.max(1) {
            return Err(CampaignError::Opsel(crate::opsel::OpselError::TooFewOperators {
                available: table.len(),
                required: config.sa.k_min.max(1),
            }));
        }
        let state = CampaignState::new(table, config.seed);
        let store = CampaignStore::create(workdir, &config, &state)?;
        Ok(Self::assemble(config, store, state, deps, clock))
    }

    /// Continue a campaign read back with [`load_campaign`].
    pub fn resume(loaded: LoadedCampaign, deps: Deps, clock: Box<dyn Clock>) -> Self {
        Self::assemble(loaded.config, loaded.store, loaded.state, deps, clock)
    }

    /// Load the campaign in `workdir` and connect it using its own configuration.
    pub fn open(workdir: &std::path::Path, clock: Box<dyn Clock>) -> Result<Self, CampaignError> {
        let loaded = load_campaign(workdir)?;
        let deps = Deps::from_config(&loaded.config)?;
        Ok(Self::resume(loaded, deps, clock))
    }

    fn assemble(
        config: CampaignConfig,
        store: CampaignStore,
        state: CampaignState,
        deps: Deps,
        clock: Box<dyn Clock>,
    ) -> Self {
        let settings = LoopSettings::from(&config);
        Self {
            config,
            store,
            state,
            deps,
            settings,
            clock,
        }
    }

    pub fn with_replay_program(mut self, program: impl Into<String>) -> Self {
        self.store = self.store.with_replay_program(program);
        self
    }

    pub fn budget_exhausted(&self) -> bool {
        match self.config.budget {
            Budget::Iterations(n) => self.state.iteration >= n,
            Budget::Hours(h) => self.state.tallies.elapsed_ms as f64 >= h * 3_600_000.0,
        }
    }

    /// Run and persist one iteration.
    pub fn step(&mut self) -> Result<IterationRecord, CampaignError> {
        let record = run_iteration(&self.state, &mut self.deps, &self.settings, self.clock.as_ref())?;
        self.store.persist_iteration(&mut self.state, &record)?;
        log::info!(
            "iteration {} [{}] {} ops={} delta_cov={}",
            record.id,
            record.mode,
            record
                .classification()
                .map_or("failure".to_string(), |c| c.to_string()),
            record.selected_ops.join(","),
            record.delta_cov
        );
        Ok(record)
    }

    /// Run until the budget is spent.
    pub fn run(&mut self) -> Result<CampaignSummary, CampaignError> {
        self.run_until(u64::MAX)
    }

    /// Run until the budget is spent or `iteration` records exist, whichever
    /// comes first.
    pub fn run_until(&mut self, iteration: u64) -> Result<CampaignSummary, CampaignError> {
        while !self.budget_exhausted() && self.state.iteration < iteration {
            self.step()?;
        }
        self.store.write_snapshots(&self.state)?;
        Ok(self.summary())
    }

    pub fn summary(&self) -> CampaignSummary {
        CampaignSummary::from_state(&self.state)
    }
}
