use std::time::Instant;

/// Counts objective evaluations against an optional cap and deadline.
/// Once exhausted, further calls return `+inf` without evaluating.
pub(crate) struct Counted<'a> {
    f: &'a mut dyn FnMut(&[f64]) -> f64,
    pub evals: usize,
    limit: usize,
    deadline: Option<Instant>,
}

impl<'a> Counted<'a> {
    pub fn new(f: &'a mut dyn FnMut(&[f64]) -> f64, limit: usize, deadline: Option<Instant>) -> Self {
        Counted {
            f,
            evals: 0,
            limit,
            deadline,
        }
    }

    pub fn exhausted(&self) -> bool {
        self.evals >= self.limit || self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    pub fn eval(&mut self, x: &[f64]) -> f64 {
        if self.exhausted() {
            return f64::INFINITY;
        }
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}
