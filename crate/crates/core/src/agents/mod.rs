//! Generator, critic and executor ports.
//!
//! Prompts are plain role-tagged message lists. A [`Provider`] turns a
//! prompt into raw text; the parsers here turn that text back into
//! skeletons or critic actions.

mod http;
mod parse;
mod prompts;
mod scripted;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use http::{HttpConfig, HttpProvider};
pub use parse::{
    parse_candidates, parse_critic_actions, parse_revisions, ActionVerb, CriticAction, ParsedActions,
    ParsedCandidates,
};
pub use prompts::{
    build_critic_prompt, build_executor_prompt, build_sampler_prompt, SamplerSettings, GRAMMAR_RULES,
};
pub use scripted::ScriptedProvider;

pub const DEFAULT_TRIGGER_PROB: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub description: String,
    pub variables: Vec<VariableSpec>,
    pub operators: Vec<String>,
    pub target: String,
}

impl TaskSpec {
    /// Task over the given variable names with empty descriptions and the
    /// full operator set.
    pub fn new(description: impl Into<String>, variables: &[String], target: impl Into<String>) -> Self {
        TaskSpec {
            description: description.into(),
            variables: variables
                .iter()
                .map(|n| VariableSpec {
                    name: n.clone(),
                    description: String::new(),
                })
                .collect(),
            operators: ["+", "-", "*", "/", "^", "sin", "cos", "tan", "exp", "log", "sqrt", "tanh", "abs"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            target: target.into(),
        }
    }

    pub fn variable_names(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.name.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Sampler,
    Critic,
    Executor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub kind: PromptKind,
    pub messages: Vec<Message>,
    pub iteration: Option<u64>,
    pub hint_included: bool,
}

impl Prompt {
    /// All message contents joined, for inspection and tests.
    pub fn text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("scripted responses exhausted")]
    Exhausted,
    #[error("request failed after {attempts} attempts: {message}")]
    Http { attempts: usize, message: String },
    #[error("provider configuration: {0}")]
    Config(String),
}

pub trait Provider: Send + Sync {
    fn generate(&self, prompt: &Prompt) -> Result<String, ProviderError>;
}

impl<P: Provider + ?Sized> Provider for &P {
    fn generate(&self, prompt: &Prompt) -> Result<String, ProviderError> {
        (**self).generate(prompt)
    }
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn generate(&self, prompt: &Prompt) -> Result<String, ProviderError> {
        (**self).generate(prompt)
    }
}

/// Critic gate with an explicit uniform draw in [0, 1).
pub fn trigger_with_draw(score: f64, pi_c: f64, draw: f64) -> bool {
    score > 0.0 && draw < pi_c
}

/// Fires only for positive scores, then with probability `pi_c`. No draw
/// is consumed for nonpositive scores.
pub fn trigger_critic<R: Rng + ?Sized>(score: f64, pi_c: f64, rng: &mut R) -> bool {
    score > 0.0 && trigger_with_draw(score, pi_c, rng.random::<f64>())
}
