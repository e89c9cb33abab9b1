#![allow(dead_code)]

use std::path::{Path, PathBuf};

use dlfuzz::bridge::ScriptedExecutor;
use dlfuzz::campaign::{Campaign, Deps, FrozenClock};
use dlfuzz::config::{Budget, CampaignConfig};
use dlfuzz::llm::{Agent, AgentRole, MockBackend, SutProfile, Transcript};
use dlfuzz::types::LoopMode;

pub fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn sample_config() -> CampaignConfig {
    CampaignConfig::load(&repo().join("campaigns/toy/campaign.toml")).unwrap()
}

pub fn sample_transcript() -> Transcript {
    Transcript::load(&repo().join("campaigns/toy/transcript.toml")).unwrap()
}

/// A toy program calling `ops` in order, with extra lines in the body.
pub fn program(ops: &[&str], extra: &str) -> String {
    let mut s = String::from("import toy\n\nclass Model(toy.Module):\n    def forward(self, x):\n        y = x\n");
    for op in ops {
        s.push_str(&format!("        y = {op}(y)\n"));
    }
    s.push_str("        return y\n");
    if !extra.is_empty() {
        s.push_str(&format!("        {extra}\n"));
    }
    s.push_str("\ndef make_inputs(seed):\n    return [toy.randn(2, 3, seed=seed)]\n");
    s
}

pub fn fenced(source: &str) -> String {
    format!("Here you go.\n\n```python\n{source}```\n")
}

pub const SUMMARY: &str = "Explanation: It adds.\nReasons: Few operators.\nNext testing strategy: Use more operators.";

/// Transcript with one generation reply per iteration and a catch-all analysis reply.
pub fn transcript(replies: &[String]) -> Transcript {
    let mut t = Transcript::default();
    for (i, r) in replies.iter().enumerate() {
        t.push(AgentRole::Generation, None, Some(i as u64), r.clone());
    }
    t.push(AgentRole::Generation, None, None, fenced(&program(&["toy.add"], "")));
    t.push(AgentRole::Analysis, None, None, SUMMARY);
    t
}

pub fn toy_deps(transcript: &Transcript) -> Deps {
    let profile = SutProfile::load(&repo().join("profiles/toy")).unwrap();
    Deps {
        profile,
        analysis: Agent::new(AgentRole::Analysis, Box::new(MockBackend::new(transcript)), 0.0, 512),
        generation: Agent::new(AgentRole::Generation, Box::new(MockBackend::new(transcript)), 1.0, 512),
        executor: Box::new(ScriptedExecutor::toy()),
    }
}

pub fn toy_config(budget: u64, seed: u64) -> CampaignConfig {
    let mut c = CampaignConfig::new(
        repo().join("profiles/toy"),
        repo().join("opsets/toy.toml"),
        Budget::Iterations(budget),
    );
    c.seed = seed;
    c.llm.mock_transcript = Some(repo().join("campaigns/toy/transcript.toml"));
    c
}

pub fn campaign(dir: &Path, config: CampaignConfig, transcript: &Transcript) -> Campaign {
    Campaign::create(config, dir, toy_deps(transcript), Box::new(FrozenClock)).unwrap()
}

pub fn modes(c: &Campaign) -> Vec<LoopMode> {
    (0..c.state.iteration)
        .map(|i| c.store.read_record(i).unwrap().mode)
        .collect()
}
