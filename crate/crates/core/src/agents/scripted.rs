use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;

use super::{Prompt, PromptKind, Provider, ProviderError};

#[derive(Debug, Default)]
struct Queues {
    shared: VecDeque<String>,
    sampler: VecDeque<String>,
    critic: VecDeque<String>,
    executor: VecDeque<String>,
}

impl Queues {
    fn tagged(&mut self, kind: PromptKind) -> &mut VecDeque<String> {
        match kind {
            PromptKind::Sampler => &mut self.sampler,
            PromptKind::Critic => &mut self.critic,
            PromptKind::Executor => &mut self.executor,
        }
    }
}

/// Replays canned responses in order.
///
/// Records are separated by a line containing only `---`. A record whose
/// first line is `@sampler`, `@critic` or `@executor` is served only to
/// prompts of that kind; untagged records are served to any prompt once
/// the matching tagged queue is empty.
#[derive(Debug)]
pub struct ScriptedProvider {
    queues: Mutex<Queues>,
}

fn tag_of(line: &str) -> Option<PromptKind> {
    match line.trim() {
        "@sampler" => Some(PromptKind::Sampler),
        "@critic" => Some(PromptKind::Critic),
        "@executor" => Some(PromptKind::Executor),
        _ => None,
    }
}

impl ScriptedProvider {
    pub fn from_script(text: &str) -> Self {
        let mut queues = Queues::default();
        let mut records: Vec<Vec<&str>> = vec![Vec::new()];
        for line in text.lines() {
            if line.trim_end() == "---" {
                records.push(Vec::new());
            } else {
                records.last_mut().expect("nonempty").push(line);
            }
        }
        for lines in records {
            let tag = lines.first().and_then(|l| tag_of(l));
            let body = if tag.is_some() { &lines[1..] } else { &lines[..] };
            let body = body.join("\n").trim_matches('\n').to_string();
            if body.trim().is_empty() && tag.is_none() {
                continue;
            }
            match tag {
                Some(kind) => queues.tagged(kind).push_back(body),
                None => queues.shared.push_back(body),
            }
        }
        ScriptedProvider {
            queues: Mutex::new(queues),
        }
    }

    pub fn from_responses<S: AsRef<str>>(responses: &[S]) -> Self {
        ScriptedProvider {
            queues: Mutex::new(Queues {
                shared: responses.iter().map(|s| s.as_ref().to_string()).collect(),
                ..Queues::default()
            }),
        }
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        Ok(Self::from_script(&std::fs::read_to_string(path)?))
    }

    pub fn remaining(&self) -> usize {
        let q = self.queues.lock().expect("scripted provider lock");
        q.shared.len() + q.sampler.len() + q.critic.len() + q.executor.len()
    }
}

impl Provider for ScriptedProvider {
    fn generate(&self, prompt: &Prompt) -> Result<String, ProviderError> {
        let mut q = self.queues.lock().expect("scripted provider lock");
        if let Some(r) = q.tagged(prompt.kind).pop_front() {
            return Ok(r);
        }
        q.shared.pop_front().ok_or(ProviderError::Exhausted)
    }
}
