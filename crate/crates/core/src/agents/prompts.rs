use std::fmt::Write as _;

use super::{CriticAction, Message, Prompt, PromptKind, Role, TaskSpec};
use crate::hints::{render_hint, sig4, DataHint};
use crate::scoring::ScoredCandidate;

pub const GRAMMAR_RULES: &str = "\
Equation grammar:
- one expression per line, no assignments and no code
- operators: + - * / ^ and unary minus
- functions: sin cos tan exp log sqrt tanh abs
- free constants are written params[0], params[1], ... numbered from 0 without gaps
- variables are referenced by name exactly as listed";

#[derive(Debug, Clone)]
pub struct SamplerSettings {
    /// The hint is shown on iterations divisible by this period.
    pub hint_period: u64,
    pub candidates: usize,
    pub max_exemplars: usize,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        SamplerSettings {
            hint_period: 25,
            candidates: 4,
            max_exemplars: 2,
        }
    }
}

fn task_block(task: &TaskSpec) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Task: {}", task.description);
    let _ = writeln!(s, "Target: {}", task.target);
    let _ = writeln!(s, "Variables:");
    for v in &task.variables {
        if v.description.is_empty() {
            let _ = writeln!(s, "- {}", v.name);
        } else {
            let _ = writeln!(s, "- {}: {}", v.name, v.description);
        }
    }
    let _ = writeln!(s, "Allowed operators: {}", task.operators.join(" "));
    s
}

fn format_theta(theta: &[f64]) -> String {
    let parts: Vec<String> = theta.iter().map(|t| format!("{t}")).collect();
    format!("[{}]", parts.join(", "))
}

fn system(text: &str) -> Message {
    Message {
        role: Role::System,
        content: text.to_string(),
    }
}

fn user(text: String) -> Message {
    Message {
        role: Role::User,
        content: text,
    }
}

/// Generator prompt: grammar, task, up to `max_exemplars` elites and the
/// data hint on hint-period iterations.
pub fn build_sampler_prompt(
    task: &TaskSpec,
    elites: &[ScoredCandidate],
    hint: Option<&DataHint>,
    iteration: u64,
    settings: &SamplerSettings,
) -> Prompt {
    let mut body = task_block(task);
    if !elites.is_empty() {
        let _ = writeln!(body, "\nBest equations found so far (higher score is better):");
        for e in elites.iter().take(settings.max_exemplars) {
            let _ = writeln!(
                body,
                "- score={} nmse={}: {}",
                sig4(e.score),
                sig4(e.fit.nmse),
                e.skeleton
            );
        }
    }
    let show_hint = settings.hint_period > 0 && iteration.is_multiple_of(settings.hint_period);
    let hint_included = show_hint && hint.is_some();
    if let (true, Some(h)) = (show_hint, hint) {
        let _ = writeln!(body, "\nData hints:\n{}", render_hint(h).trim_end());
    }
    let _ = write!(
        body,
        "\nPropose {} new candidate equation skeletons for {}. \
Return them inside a single ```text fenced block, one per line.",
        settings.candidates, task.target
    );
    Prompt {
        kind: PromptKind::Sampler,
        messages: vec![
            system(&format!(
                "You propose equation skeletons for symbolic regression.\n{GRAMMAR_RULES}"
            )),
            user(body),
        ],
        iteration: Some(iteration),
        hint_included,
    }
}

pub const ACTION_SCHEMA: &str = "\
Reply with one action per line using the format
VERB | expression | rationale
where VERB is one of:
- Remove: drop a subexpression of the candidate (expression = that subexpression)
- Simplify: replace a subexpression by a simpler form (expression = that subexpression)
- Add: introduce a new term (expression = the term to add)";

/// Critic prompt with the candidate, its fitted parameters, score feedback,
/// input variables and task text.
pub fn build_critic_prompt(base: &ScoredCandidate, task: &TaskSpec) -> Prompt {
    let mut body = task_block(task);
    let _ = writeln!(body, "\nCandidate: {}", base.skeleton);
    let _ = writeln!(body, "Fitted params: {}", format_theta(&base.fit.theta));
    let _ = writeln!(
        body,
        "Score: {} (nmse={}, effective params={}, sensitivity={}, curvature={})",
        base.score,
        base.fit.nmse,
        base.complexity.n_eff,
        sig4(base.complexity.c_sens),
        sig4(base.complexity.c_curv)
    );
    let _ = write!(
        body,
        "Input variables: {}\n\nCritique the candidate and propose edits.\n{ACTION_SCHEMA}",
        base.skeleton.variable_names().join(", ")
    );
    Prompt {
        kind: PromptKind::Critic,
        messages: vec![
            system("You review fitted equation skeletons and propose targeted edits."),
            user(body),
        ],
        iteration: None,
        hint_included: false,
    }
}

/// Executor prompt asking for at most `max_revisions` revised skeletons.
pub fn build_executor_prompt(
    base: &ScoredCandidate,
    actions: &[CriticAction],
    max_revisions: usize,
) -> Prompt {
    let mut body = String::new();
    let _ = writeln!(body, "Base equation: {}", base.skeleton);
    let _ = writeln!(body, "Fitted params: {}", format_theta(&base.fit.theta));
    let _ = writeln!(body, "Variables: {}", base.skeleton.variable_names().join(", "));
    let _ = writeln!(body, "\nRequested edits:");
    for a in actions {
        let _ = writeln!(body, "{}", a.to_line());
    }
    let _ = write!(
        body,
        "\nWrite up to {max_revisions} revised equations, each applying one or more of the edits. \
Return them inside a single ```text fenced block, one per line."
    );
    Prompt {
        kind: PromptKind::Executor,
        messages: vec![
            system(&format!("You apply edits to equation skeletons.\n{GRAMMAR_RULES}")),
            user(body),
        ],
        iteration: None,
        hint_included: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::parse_critic_actions;
    use crate::data::Matrix;
    use crate::expr::parse;
    use crate::fit::{FitPath, FitResult};
    use crate::hints::build_data_hint;
    use crate::scoring::Complexity;

    fn task() -> TaskSpec {
        TaskSpec::new("damped oscillator acceleration", &["x".to_string()], "y")
    }

    fn cand() -> ScoredCandidate {
        ScoredCandidate {
            skeleton: parse("params[0]*sin(params[1]*x)").unwrap(),
            fit: FitResult {
                theta: vec![2.5, -0.125],
                nmse: 0.01,
                path: FitPath::Mixed,
                evals: 10,
            },
            score: 1.25,
            complexity: Complexity {
                n_eff: 2,
                c_sens: 0.1,
                c_curv: 0.0,
            },
        }
    }

    fn hint() -> DataHint {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 / 10.0 - 2.5).collect();
        let y: Vec<f64> = xs.iter().map(|x| x * x * x).collect();
        build_data_hint(&Matrix::column_vector(&xs), &["x".to_string()], &y, "y")
    }

    #[test]
    fn hint_follows_period() {
        let h = hint();
        let s = SamplerSettings::default();
        let p25 = build_sampler_prompt(&task(), &[], Some(&h), 25, &s);
        assert!(p25.hint_included && p25.text().contains("DOMINANT TERMS"));
        let p26 = build_sampler_prompt(&task(), &[], Some(&h), 26, &s);
        assert!(!p26.hint_included && !p26.text().contains("STATS"));
    }

    #[test]
    fn cold_start_has_no_exemplars() {
        let p = build_sampler_prompt(&task(), &[], None, 1, &SamplerSettings::default());
        assert!(!p.text().contains("Best equations"));
        assert!(p.text().contains("Propose 4 new candidate"));
        let p = build_sampler_prompt(&task(), &[cand()], None, 1, &SamplerSettings::default());
        assert!(p.text().contains("params[0]*sin(params[1]*x)"));
    }

    #[test]
    fn critic_prompt_contains_theta_verbatim() {
        let p = build_critic_prompt(&cand(), &task());
        let t = p.text();
        assert!(t.contains("2.5") && t.contains("-0.125"));
        assert!(t.contains("damped oscillator") && t.contains("Input variables: x"));
        assert_eq!(p, build_critic_prompt(&cand(), &task()));
    }

    #[test]
    fn executor_prompt_lists_actions() {
        let base = cand();
        let acts = parse_critic_actions("Add | params[2]*x | linear drift", &base.skeleton).actions;
        let p = build_executor_prompt(&base, &acts, 4);
        assert!(p.text().contains("Add | params[2]*x | linear drift"));
        assert!(p.text().contains("up to 4 revised"));
        assert_eq!(p, build_executor_prompt(&base, &acts, 4));
    }
}
