use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::expr::{canonicalize, normalize, parse_fragment, parse_with_vars, render, Expr, Skeleton};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedCandidates {
    pub skeletons: Vec<Skeleton>,
    pub diagnostics: Vec<String>,
}

/// Lines inside fenced blocks when any fence is present, else all lines.
fn candidate_lines(text: &str) -> Vec<(usize, &str)> {
    let mut fenced = Vec::new();
    let mut inside = false;
    let mut saw_fence = false;
    for (i, line) in text.lines().enumerate() {
        if line.trim_start().starts_with("```") {
            inside = !inside;
            saw_fence = true;
            continue;
        }
        if inside {
            fenced.push((i + 1, line));
        }
    }
    if saw_fence {
        fenced
    } else {
        text.lines().enumerate().map(|(i, l)| (i + 1, l)).collect()
    }
}

fn strip_bullet(s: &str) -> &str {
    let s = s.trim();
    for prefix in ["- ", "* ", "• "] {
        if let Some(rest) = s.strip_prefix(prefix) {
            return rest.trim_start();
        }
    }
    let digits = s.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &s[digits..];
        if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return r.trim_start();
        }
    }
    s
}

fn clean_expression(line: &str) -> Option<&str> {
    let mut s = strip_bullet(line)
        .trim_end_matches([';', ','])
        .trim_matches('`')
        .trim();
    // "y = ..." and "f(x) = ..." forms; the grammar itself has no '='
    if let Some(idx) = s.rfind('=') {
        s = s[idx + 1..].trim();
    }
    let s = s.trim_end_matches([';', ',']).trim();
    if s.is_empty() || s.starts_with('#') || s.starts_with("//") {
        None
    } else {
        Some(s)
    }
}

/// Extracts candidate skeletons from generator output. Each parsed
/// candidate is canonicalized; duplicates and unparseable lines are dropped,
/// the latter with a diagnostic.
pub fn parse_candidates(text: &str, variables: &[String]) -> ParsedCandidates {
    let mut out = ParsedCandidates::default();
    let mut seen = HashSet::new();
    for (lineno, line) in candidate_lines(text) {
        let Some(expr) = clean_expression(line) else {
            continue;
        };
        match parse_with_vars(expr, variables) {
            Ok(s) => {
                let c = canonicalize(&s);
                if seen.insert(c.to_string()) {
                    out.skeletons.push(c);
                }
            }
            Err(e) => out.diagnostics.push(format!("line {lineno}: {e}: {expr}")),
        }
    }
    out
}

/// Executor output: candidates that differ canonically from `base`, at most
/// `max` of them.
pub fn parse_revisions(text: &str, base: &Skeleton, max: usize) -> ParsedCandidates {
    let mut parsed = parse_candidates(text, base.variable_names());
    let base_canon = canonicalize(base);
    let before = parsed.skeletons.len();
    parsed.skeletons.retain(|s| *s != base_canon);
    if parsed.skeletons.len() < before {
        parsed
            .diagnostics
            .push("revision identical to the base equation dropped".to_string());
    }
    if parsed.skeletons.len() > max {
        parsed
            .diagnostics
            .push(format!("{} revisions beyond the limit of {max} dropped", parsed.skeletons.len() - max));
        parsed.skeletons.truncate(max);
    }
    parsed
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionVerb {
    Remove,
    Simplify,
    Add,
}

impl ActionVerb {
    fn from_word(w: &str) -> Option<ActionVerb> {
        match w.trim().trim_end_matches(':').to_ascii_lowercase().as_str() {
            "remove" => Some(ActionVerb::Remove),
            "simplify" => Some(ActionVerb::Simplify),
            "add" => Some(ActionVerb::Add),
            _ => None,
        }
    }
}

impl fmt::Display for ActionVerb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionVerb::Remove => "Remove",
            ActionVerb::Simplify => "Simplify",
            ActionVerb::Add => "Add",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticAction {
    pub verb: ActionVerb,
    /// Subexpression of the base, for Remove and Simplify.
    pub target: Option<String>,
    /// New term, for Add.
    pub proposal: Option<String>,
    pub rationale: String,
}

impl CriticAction {
    pub fn expression(&self) -> &str {
        self.target
            .as_deref()
            .or(self.proposal.as_deref())
            .unwrap_or_default()
    }

    /// Wire form `VERB | expression | rationale`.
    pub fn to_line(&self) -> String {
        format!("{} | {} | {}", self.verb, self.expression(), self.rationale)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedActions {
    pub actions: Vec<CriticAction>,
    pub diagnostics: Vec<String>,
}

fn erase_params(e: &Expr, names: &[String]) -> Expr {
    normalize(&e.map_params(&|_| 0), names)
}

fn sub_multiset(part: &[Expr], whole: &[Expr]) -> bool {
    let mut used = vec![false; whole.len()];
    part.iter().all(|p| {
        match whole.iter().enumerate().position(|(i, w)| !used[i] && w == p) {
            Some(i) => {
                used[i] = true;
                true
            }
            None => false,
        }
    })
}

/// Whether `target` occurs in `base` as a subtree, or as a subset of the
/// operands of a sum or product, ignoring parameter numbering.
fn occurs_in(target: &Expr, base: &Expr) -> bool {
    let mut found = false;
    base.visit(&mut |n| {
        if found {
            return;
        }
        found = n == target
            || match (target, n) {
                (Expr::Add(t), Expr::Add(b)) | (Expr::Mul(t), Expr::Mul(b)) => sub_multiset(t, b),
                _ => false,
            };
    });
    found
}

/// Parses `VERB | expression | rationale` lines. Lines without a `|` are
/// ignored as prose; malformed actions are reported in the diagnostics.
pub fn parse_critic_actions(text: &str, base: &Skeleton) -> ParsedActions {
    let names = base.variable_names();
    let base_erased = erase_params(base.root(), names);
    let mut out = ParsedActions::default();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = strip_bullet(raw);
        if !line.contains('|') {
            continue;
        }
        let mut parts = line.splitn(3, '|');
        let verb_word = parts.next().unwrap_or_default();
        let expr_text = parts.next().unwrap_or_default().trim().trim_matches('`').trim();
        let rationale = parts.next().unwrap_or_default().trim().to_string();
        let Some(verb) = ActionVerb::from_word(verb_word) else {
            out.diagnostics
                .push(format!("line {lineno}: unknown action '{}'", verb_word.trim()));
            continue;
        };
        let frag = match parse_fragment(expr_text, names) {
            Ok(f) => f,
            Err(e) => {
                out.diagnostics.push(format!("line {lineno}: {e}: {expr_text}"));
                continue;
            }
        };
        let rendered = render(&normalize(&frag, names), names);
        let action = match verb {
            ActionVerb::Remove | ActionVerb::Simplify => {
                if !occurs_in(&erase_params(&frag, names), &base_erased) {
                    out.diagnostics.push(format!(
                        "line {lineno}: target '{expr_text}' does not occur in the base equation"
                    ));
                    continue;
                }
                CriticAction {
                    verb,
                    target: Some(rendered),
                    proposal: None,
                    rationale,
                }
            }
            ActionVerb::Add => CriticAction {
                verb,
                target: None,
                proposal: Some(rendered),
                rationale,
            },
        };
        out.actions.push(action);
    }
    out
}
