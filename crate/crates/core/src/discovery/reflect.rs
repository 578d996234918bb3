use std::time::{Duration, Instant};

use super::{derive_seed, RunConfig};
use crate::agents::{
    build_critic_prompt, build_executor_prompt, parse_critic_actions, parse_revisions, Provider, TaskSpec,
};
use crate::data::Matrix;
use crate::expr::Skeleton;
use crate::fit::{mixed_optimize, FitOptions};
use crate::scoring::{score_candidate, ScoredCandidate};

/// What a reflection round produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectOutcome {
    /// The better of the base and the fully evaluated finalists.
    pub candidate: ScoredCandidate,
    pub improved: bool,
    /// Full-data evaluations spent on finalists.
    pub full_evals: usize,
    /// Revisions evaluated on the screening subset.
    pub screened: usize,
}

impl ReflectOutcome {
    fn unchanged(base: &ScoredCandidate, screened: usize) -> Self {
        ReflectOutcome {
            candidate: base.clone(),
            improved: false,
            full_evals: 0,
            screened,
        }
    }
}

/// Evenly strided row indices for screening: `min(fraction * n, max_rows)`
/// rows, but never fewer than `min(n, 10)`.
pub fn screening_rows(n: usize, fraction: f64, max_rows: usize) -> Vec<usize> {
    let m = ((fraction * n as f64).round() as usize)
        .min(max_rows)
        .max(n.min(10))
        .min(n);
    (0..m).map(|k| k * n / m).collect()
}

pub struct Reflector<'a> {
    pub config: &'a RunConfig,
    pub task: &'a TaskSpec,
    pub data: &'a Matrix,
    pub y: &'a [f64],
    pub provider: &'a dyn Provider,
}

impl Reflector<'_> {
    fn full_fit(&self, s: &Skeleton, seed: u64) -> Option<ScoredCandidate> {
        let opts = FitOptions {
            n_starts: self.config.n_starts,
            lambda: self.config.ridge,
            seed,
            ..FitOptions::default()
        };
        let fit = mixed_optimize(s, self.data, self.y, &opts).ok()?;
        Some(score_candidate(s, fit, self.data, self.y))
    }

    fn screen(&self, s: &Skeleton, rows: &[usize], seed: u64) -> Option<f64> {
        let sub = self.data.select_rows(rows);
        let suby: Vec<f64> = rows.iter().map(|&i| self.y[i]).collect();
        // the all-zero start often makes nonlinear columns vanish
        let opts = FitOptions {
            n_starts: 1,
            skip_starts: 1,
            lambda: self.config.ridge,
            seed,
            max_evals: Some(self.config.screening_max_evals),
            deadline: self
                .config
                .screening_wall_clock_secs
                .map(|secs| Instant::now() + Duration::from_secs_f64(secs)),
        };
        let fit = mixed_optimize(s, &sub, &suby, &opts).ok()?;
        let sc = score_candidate(s, fit, &sub, &suby).score;
        sc.is_finite().then_some(sc)
    }

    /// Critic, executor, screening on a row subset, then full evaluation of
    /// at most two finalists within `budget_left`. Never returns a candidate
    /// scoring below `base`.
    pub fn reflect(&self, base: &ScoredCandidate, budget_left: usize, seed: u64) -> ReflectOutcome {
        let critique = match self.provider.generate(&build_critic_prompt(base, self.task)) {
            Ok(t) => t,
            Err(e) => {
                log::warn!("critic call failed: {e}");
                return ReflectOutcome::unchanged(base, 0);
            }
        };
        let actions = parse_critic_actions(&critique, &base.skeleton);
        for d in &actions.diagnostics {
            log::debug!("critic: {d}");
        }
        if actions.actions.is_empty() {
            return ReflectOutcome::unchanged(base, 0);
        }
        let prompt = build_executor_prompt(base, &actions.actions, self.config.max_revisions);
        let revised = match self.provider.generate(&prompt) {
            Ok(t) => t,
            Err(e) => {
                log::warn!("executor call failed: {e}");
                return ReflectOutcome::unchanged(base, 0);
            }
        };
        let revisions = parse_revisions(&revised, &base.skeleton, self.config.max_revisions);
        for d in &revisions.diagnostics {
            log::debug!("executor: {d}");
        }
        if revisions.skeletons.is_empty() {
            return ReflectOutcome::unchanged(base, 0);
        }

        let rows = screening_rows(
            self.y.len(),
            self.config.screening_fraction,
            self.config.screening_max_rows,
        );
        let mut screened: Vec<(usize, f64)> = Vec::new();
        for (j, s) in revisions.skeletons.iter().enumerate() {
            if let Some(sc) = self.screen(s, &rows, derive_seed(seed, 1, j as u64)) {
                screened.push((j, sc));
            }
        }
        let n_screened = revisions.skeletons.len();
        // stable sort keeps executor order on ties
        screened.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut finalists: Vec<usize> = screened.iter().take(1).map(|f| f.0).collect();
        if let [(_, s1), (j2, s2), ..] = screened[..] {
            let gap = (s1 - s2) / s1.abs().max(f64::MIN_POSITIVE);
            if gap < self.config.finalist_gap {
                finalists.push(j2);
            }
        }

        let mut best = base.clone();
        let mut improved = false;
        let mut full_evals = 0;
        for j in finalists {
            if full_evals >= budget_left {
                break;
            }
            full_evals += 1;
            let Some(c) = self.full_fit(&revisions.skeletons[j], derive_seed(seed, 2, j as u64)) else {
                continue;
            };
            if c.score > best.score {
                best = c;
                improved = true;
            }
        }
        ReflectOutcome {
            candidate: best,
            improved,
            full_evals,
            screened: n_screened,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn screening_subset_size() {
        assert_eq!(screening_rows(1000, 0.2, 200).len(), 200);
        assert_eq!(screening_rows(5000, 0.2, 200).len(), 200);
        assert_eq!(screening_rows(500, 0.2, 200).len(), 100);
        assert_eq!(screening_rows(30, 0.2, 200).len(), 10);
        assert_eq!(screening_rows(4, 0.2, 200), vec![0, 1, 2, 3]);
        let r = screening_rows(1000, 0.2, 200);
        assert!(r.windows(2).all(|w| w[1] - w[0] == 5));
    }
}
