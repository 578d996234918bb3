use std::collections::BTreeMap;

use super::{canonicalize, Expr, Skeleton};

/// Token emitted once per parameter reference.
pub const PARAM_TOKEN: &str = "param";

/// Multiset of symbolic tokens (operators, functions, variables, the
/// parameter placeholder). Literals are not tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenBag {
    counts: BTreeMap<String, usize>,
}

impl TokenBag {
    pub fn from_counts(counts: BTreeMap<String, usize>) -> TokenBag {
        TokenBag {
            counts: counts.into_iter().filter(|(_, c)| *c > 0).collect(),
        }
    }

    pub fn get(&self, token: &str) -> usize {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.counts.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    fn bump(&mut self, token: &str, by: usize) {
        if by > 0 {
            *self.counts.entry(token.to_string()).or_insert(0) += by;
        }
    }
}

fn count(e: &Expr, names: &[String], bag: &mut TokenBag) {
    match e {
        Expr::Const(_) => {}
        Expr::Param(_) => bag.bump(PARAM_TOKEN, 1),
        Expr::Var(v) => bag.bump(&names[*v], 1),
        Expr::Neg(_) => bag.bump("neg", 1),
        Expr::Func(f, _) => bag.bump(f.name(), 1),
        Expr::Add(v) => bag.bump("+", v.len() - 1),
        Expr::Mul(v) => bag.bump("*", v.len() - 1),
        Expr::Binary(op, ..) => bag.bump(op.symbol(), 1),
    }
    for c in e.children() {
        count(c, names, bag);
    }
}

/// Token counts of the canonical form.
pub fn tokenize(s: &Skeleton) -> TokenBag {
    let c = canonicalize(s);
    let mut bag = TokenBag::default();
    count(c.root(), c.variable_names(), &mut bag);
    bag
}
