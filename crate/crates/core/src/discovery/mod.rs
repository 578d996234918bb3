//! The sampling, evaluation, reflection and memory loop.

mod reflect;

use std::io::Write;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use reflect::{screening_rows, ReflectOutcome, Reflector};

use crate::agents::{
    build_sampler_prompt, parse_candidates, trigger_critic, HttpConfig, HttpProvider, Provider, ProviderError,
    SamplerSettings, ScriptedProvider, TaskSpec,
};
use crate::bench::Dataset;
use crate::data::variance;
use crate::expr::Skeleton;
use crate::fit::{mixed_optimize, FitError, FitOptions, FitPath, DEFAULT_RIDGE, DEFAULT_STARTS};
use crate::hints::build_data_hint;
use crate::memory::{SemanticMemory, DEFAULT_EXEMPLARS, DEFAULT_ISLANDS, DEFAULT_TEMPERATURE};
use crate::scoring::{score_candidate, ScoredCandidate};

/// Consecutive iterations without a single evaluated candidate after which
/// the run stops as stalled.
pub const STALL_LIMIT: u64 = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProviderSpec {
    Scripted { path: PathBuf },
    Http(HttpConfig),
}

impl ProviderSpec {
    pub fn build(&self) -> Result<Box<dyn Provider>, ProviderError> {
        match self {
            ProviderSpec::Scripted { path } => ScriptedProvider::from_file(path)
                .map(|p| Box::new(p) as Box<dyn Provider>)
                .map_err(|e| ProviderError::Config(format!("{}: {e}", path.display()))),
            ProviderSpec::Http(cfg) => Ok(Box::new(HttpProvider::new(cfg.clone())?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Maximum number of full candidate evaluations.
    pub budget: usize,
    pub batch_size: usize,
    pub islands: usize,
    pub exemplars: usize,
    pub trigger_prob: f64,
    pub cluster_temperature: f64,
    pub hint_period: u64,
    pub early_stop_nmse: f64,
    pub screening_fraction: f64,
    pub screening_max_rows: usize,
    pub screening_max_evals: usize,
    /// Optional wall-clock cap per screening fit, in addition to the
    /// evaluation cap. Makes runs timing dependent.
    pub screening_wall_clock_secs: Option<f64>,
    pub finalist_gap: f64,
    pub max_revisions: usize,
    pub n_starts: usize,
    pub ridge: f64,
    pub seed: u64,
    pub max_iterations: Option<u64>,
    pub task_description: String,
    pub provider: Option<ProviderSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            budget: 2000,
            batch_size: 4,
            islands: DEFAULT_ISLANDS,
            exemplars: DEFAULT_EXEMPLARS,
            trigger_prob: crate::agents::DEFAULT_TRIGGER_PROB,
            cluster_temperature: DEFAULT_TEMPERATURE,
            hint_period: 25,
            early_stop_nmse: 1e-13,
            screening_fraction: 0.2,
            screening_max_rows: 200,
            screening_max_evals: 2000,
            screening_wall_clock_secs: None,
            finalist_gap: 0.01,
            max_revisions: 4,
            n_starts: DEFAULT_STARTS,
            ridge: DEFAULT_RIDGE,
            seed: 0,
            max_iterations: None,
            task_description: String::new(),
            provider: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: &str| Err(RunError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 || self.islands == 0 || self.exemplars == 0 || self.n_starts == 0 {
            return bad("batch_size, islands, exemplars and n_starts must be positive");
        }
        if self.budget < self.batch_size {
            return bad("budget must be at least batch_size");
        }
        if !(self.trigger_prob > 0.0 && self.trigger_prob <= 1.0) {
            return bad("trigger_prob must lie in (0, 1]");
        }
        if !(self.cluster_temperature > 0.0) || !(self.early_stop_nmse > 0.0) || !(self.finalist_gap > 0.0) {
            return bad("cluster_temperature, early_stop_nmse and finalist_gap must be positive");
        }
        if !(self.screening_fraction > 0.0 && self.screening_fraction <= 1.0) {
            return bad("screening_fraction must lie in (0, 1]");
        }
        if self.screening_max_rows == 0 || self.screening_max_evals == 0 || self.hint_period == 0 {
            return bad("screening_max_rows, screening_max_evals and hint_period must be positive");
        }
        if !(1..=4).contains(&self.max_revisions) {
            return bad("max_revisions must lie in 1..=4");
        }
        if !(self.ridge >= 0.0) {
            return bad("ridge must be nonnegative");
        }
        if self.screening_wall_clock_secs.is_some_and(|s| !(s > 0.0)) {
            return bad("screening_wall_clock_secs must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training target has zero variance or fewer than two rows")]
    DegenerateTarget,
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    BudgetExhausted,
    EarlyStop,
    ProviderExhausted,
    IterationLimit,
    Stalled,
}

/// One evaluated candidate. The equation fields describe the committed
/// candidate, which differs from `proposed` only when reflection improved it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: u64,
    pub index: usize,
    pub proposed: String,
    pub expr: String,
    pub theta: Vec<f64>,
    pub nmse: Option<f64>,
    pub score: Option<f64>,
    pub path: Option<FitPath>,
    pub reflected: bool,
    pub improved: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct DiscoveryResult {
    pub best: Option<ScoredCandidate>,
    pub termination: Termination,
    pub iterations: u64,
    /// Full evaluations, counted against the budget.
    pub evaluations: usize,
    /// Screening fits on row subsets, not counted against the budget.
    pub screened: usize,
    pub trace: Vec<TraceRecord>,
    pub memory: SemanticMemory,
}

/// Writes one JSON object per line.
pub fn write_trace<W: Write>(trace: &[TraceRecord], mut out: W) -> std::io::Result<()> {
    for r in trace {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent per-fit seed from the run seed and two counters.
pub(crate) fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b)
}

fn evaluate(s: &Skeleton, data: &Dataset, cfg: &RunConfig, seed: u64) -> Result<ScoredCandidate, FitError> {
    let opts = FitOptions {
        n_starts: cfg.n_starts,
        lambda: cfg.ridge,
        seed,
        ..FitOptions::default()
    };
    let fit = mixed_optimize(s, &data.train.inputs, &data.train.target, &opts)?;
    Ok(score_candidate(s, fit, &data.train.inputs, &data.train.target))
}

fn record(iteration: u64, index: usize, proposed: &Skeleton, c: &ScoredCandidate) -> TraceRecord {
    TraceRecord {
        iteration,
        index,
        proposed: proposed.to_string(),
        expr: c.skeleton.to_string(),
        theta: c.fit.theta.clone(),
        nmse: Some(c.fit.nmse),
        score: Some(c.score),
        path: Some(c.fit.path),
        reflected: false,
        improved: false,
        error: None,
    }
}

/// Runs the discovery loop on the training split until the budget, early
/// stop, provider exhaustion, the iteration limit or a stall ends it.
/// Deterministic for a fixed seed and scripted provider unless a screening
/// wall clock is configured.
pub fn run(
    cfg: &RunConfig,
    data: &Dataset,
    task: &TaskSpec,
    provider: &dyn Provider,
) -> Result<DiscoveryResult, RunError> {
    cfg.validate()?;
    let y = &data.train.target;
    if y.len() < 2 || !(variance(y) > 0.0) {
        return Err(RunError::DegenerateTarget);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut memory = SemanticMemory::new(cfg.islands, cfg.cluster_temperature);
    let hint = build_data_hint(&data.train.inputs, &data.names, y, &data.target_name);
    let settings = SamplerSettings {
        hint_period: cfg.hint_period,
        candidates: cfg.batch_size,
        max_exemplars: cfg.exemplars,
    };
    let reflector = Reflector {
        config: cfg,
        task,
        data: &data.train.inputs,
        y,
        provider,
    };

    let mut best: Option<ScoredCandidate> = None;
    let mut trace = Vec::new();
    let mut evaluations = 0usize;
    let mut screened = 0usize;
    let mut iteration = 0u64;
    let mut idle = 0u64;
    let termination = 'outer: loop {
        if evaluations >= cfg.budget {
            break Termination::BudgetExhausted;
        }
        if cfg.max_iterations.is_some_and(|m| iteration >= m) {
            break Termination::IterationLimit;
        }
        if idle >= STALL_LIMIT {
            break Termination::Stalled;
        }
        let exemplars = memory.sample_exemplars(&mut rng, cfg.exemplars);
        let prompt = build_sampler_prompt(task, &exemplars, Some(&hint), iteration, &settings);
        let text = match provider.generate(&prompt) {
            Ok(t) => t,
            Err(ProviderError::Exhausted) => break Termination::ProviderExhausted,
            Err(e) => {
                log::warn!("iteration {iteration}: generation failed: {e}");
                iteration += 1;
                idle += 1;
                continue;
            }
        };
        let mut parsed = parse_candidates(&text, &data.names);
        for d in &parsed.diagnostics {
            log::debug!("iteration {iteration}: {d}");
        }
        parsed
            .skeletons
            .truncate(cfg.batch_size.min(cfg.budget - evaluations));
        if parsed.skeletons.is_empty() {
            iteration += 1;
            idle += 1;
            continue;
        }
        idle = 0;

        let fits: Vec<Result<ScoredCandidate, FitError>> = parsed
            .skeletons
            .par_iter()
            .enumerate()
            .map(|(i, s)| evaluate(s, data, cfg, derive_seed(cfg.seed, iteration, i as u64)))
            .collect();

        let island = (iteration % cfg.islands as u64) as usize;
        for (i, (s, fit)) in parsed.skeletons.iter().zip(fits).enumerate() {
            evaluations += 1;
            let cand = match fit {
                Ok(c) => c,
                Err(e) => {
                    trace.push(TraceRecord {
                        iteration,
                        index: i,
                        proposed: s.to_string(),
                        expr: s.to_string(),
                        theta: Vec::new(),
                        nmse: None,
                        score: None,
                        path: None,
                        reflected: false,
                        improved: false,
                        error: Some(e.to_string()),
                    });
                    continue;
                }
            };
            let mut committed = cand.clone();
            let mut rec = record(iteration, i, s, &cand);
            if trigger_critic(cand.score, cfg.trigger_prob, &mut rng) {
                let seed = derive_seed(cfg.seed ^ 0x5eed, iteration, i as u64);
                let out = reflector.reflect(&cand, cfg.budget - evaluations, seed);
                evaluations += out.full_evals;
                screened += out.screened;
                rec = record(iteration, i, s, &out.candidate);
                rec.reflected = true;
                rec.improved = out.improved;
                committed = out.candidate;
            }
            if committed.score.is_finite() {
                if let Err(e) = memory.insert(island, committed.clone()) {
                    log::warn!("memory insert failed: {e}");
                }
            }
            if best.as_ref().is_none_or(|b| committed.score > b.score) {
                best = Some(committed.clone());
            }
            trace.push(rec);
            if committed.fit.nmse < cfg.early_stop_nmse {
                iteration += 1;
                break 'outer Termination::EarlyStop;
            }
        }
        iteration += 1;
    };
    Ok(DiscoveryResult {
        best,
        termination,
        iterations: iteration,
        evaluations,
        screened,
        trace,
        memory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_and_validates() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), c);
        let partial: RunConfig = serde_json::from_str(r#"{"budget": 40, "seed": 3}"#).unwrap();
        assert_eq!((partial.budget, partial.seed, partial.batch_size), (40, 3, 4));
        assert!(serde_json::from_str::<RunConfig>(r#"{"budjet": 40}"#).is_err());
        let small = RunConfig {
            budget: 2,
            ..RunConfig::default()
        };
        assert!(matches!(small.validate(), Err(RunError::InvalidConfig(_))));
    }

    #[test]
    fn provider_spec_json_forms() {
        let s: ProviderSpec = serde_json::from_str(r#"{"kind":"scripted","path":"r.txt"}"#).unwrap();
        assert_eq!(s, ProviderSpec::Scripted { path: "r.txt".into() });
        let h: ProviderSpec = serde_json::from_str(r#"{"kind":"http","model":"m"}"#).unwrap();
        assert!(matches!(h, ProviderSpec::Http(c) if c.model == "m" && c.max_attempts == 3));
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(0, 0, 0);
        assert_ne!(a, derive_seed(0, 0, 1));
        assert_ne!(a, derive_seed(0, 1, 0));
        assert_ne!(a, derive_seed(1, 0, 0));
        assert_eq!(a, derive_seed(0, 0, 0));
    }
}
