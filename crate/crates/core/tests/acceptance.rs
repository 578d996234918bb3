//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use eqsearch_core::agents::{trigger_critic, ScriptedProvider, TaskSpec};
use eqsearch_core::bench::{acc_at_tau, acc_max_at_tau, evaluate_equation, make_synthetic, Dataset, DEFAULT_TAUS};
use eqsearch_core::data::Matrix;
use eqsearch_core::discovery::{run, write_trace, Reflector, RunConfig, Termination};
use eqsearch_core::expr::random::{random_skeleton, RandomSkeletonConfig};
use eqsearch_core::expr::{classify_param_roles, parse_with_vars, tokenize, Skeleton, TokenBag};
use eqsearch_core::fit::{build_probe_system, fallback_fit, mixed_optimize, FitOptions, FitPath, FitResult};
use eqsearch_core::hints::{build_data_hint, Parity};
use eqsearch_core::memory::{softmax, SemanticMemory};
use eqsearch_core::scoring::{nmse, score, score_candidate, Complexity, ScoredCandidate};

type Outcome = Result<String, String>;

fn check(cond: bool, ok: String, fail: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(fail)
    }
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    let values = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Matrix::new(rows, cols, values)
}

fn affine_reconstruction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let vars = names(&["x", "v"]);
    let data = uniform_matrix(&mut rng, 40, 2, -2.0, 2.0);
    let cfg = RandomSkeletonConfig::default();
    let (mut tested, mut drawn, mut failures, mut worst) = (0, 0, 0, 0.0f64);
    while tested < 200 && drawn < 20_000 {
        drawn += 1;
        let s = random_skeleton(&mut rng, &vars, &cfg);
        let roles = classify_param_roles(&s);
        if roles.linear().is_empty() {
            continue;
        }
        let q: Vec<f64> = (0..roles.nonlinear().len()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let Ok(ps) = build_probe_system(&s, &roles, &q, &data) else {
            continue;
        };
        tested += 1;
        for _ in 0..10 {
            let w: Vec<f64> = (0..roles.linear().len()).map(|_| rng.random_range(-3.0..3.0)).collect();
            let direct = s.evaluate(&roles.assemble(&w, &q), &data).unwrap();
            let recon = ps.predict(&w);
            for i in 0..data.rows() {
                let terms: f64 = ps.bias[i].abs()
                    + (0..w.len()).map(|k| (ps.design.get(i, k) * w[k]).abs()).sum::<f64>();
                let rel = (direct[i] - recon[i]).abs() / direct[i].abs().max(terms).max(f64::MIN_POSITIVE);
                if !(rel <= 1e-9) {
                    failures += 1;
                    if failures <= 3 {
                        eprintln!("  mismatch on {s}: direct {} recon {}", direct[i], recon[i]);
                    }
                }
                if rel.is_finite() {
                    worst = worst.max(rel);
                }
            }
        }
    }
    check(
        tested >= 200 && failures == 0,
        format!("{tested} skeletons x 10 w, worst relative error {worst:.2e}"),
        format!("{tested} skeletons tested, {failures} mismatches"),
    )
}

fn separable_recovery() -> Outcome {
    let cases: [(&str, f64, f64); 3] = [
        ("params[0] + params[1]*sin(params[2]*x)", -3.0, 3.0),
        ("params[0] + params[1]*exp(params[2]*x)", -3.0, 3.0),
        ("params[0]*x^params[1] + params[2]", 0.1, 3.0),
    ];
    let mut summary = Vec::new();
    let mut ok = true;
    for (k, (text, lo, hi)) in cases.iter().enumerate() {
        let s = parse_with_vars(text, &names(&["x"])).unwrap();
        let xs: Vec<f64> = (0..200).map(|i| lo + (hi - lo) * i as f64 / 199.0).collect();
        let data = Matrix::column_vector(&xs);
        let mut rng = ChaCha8Rng::seed_from_u64(500 + k as u64);
        let (mut hits, mut mixed) = (0, 0);
        for trial in 0..20u64 {
            let sign = |r: &mut ChaCha8Rng| if r.random::<bool>() { 1.0 } else { -1.0 };
            let a = rng.random_range(-3.0..3.0);
            let b = sign(&mut rng) * rng.random_range(0.5..3.0);
            let c: f64 = sign(&mut rng) * rng.random_range(0.5..2.5);
            let theta = if k == 2 { vec![b, c.abs(), a] } else { vec![a, b, c] };
            let y = s.evaluate(&theta, &data).unwrap();
            match mixed_optimize(&s, &data, &y, &FitOptions::with_seed(trial)) {
                Ok(r) => {
                    hits += usize::from(r.nmse < 1e-10);
                    mixed += usize::from(r.path == FitPath::Mixed);
                }
                Err(e) => eprintln!("  {text} trial {trial}: {e}"),
            }
        }
        ok &= hits >= 19 && mixed > 10;
        summary.push(format!("{text}: {hits}/20 recovered, {mixed}/20 mixed"));
    }
    let line = summary.join("; ");
    check(ok, line.clone(), line)
}

fn min_of_two() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let vars = names(&["x", "v"]);
    let data = uniform_matrix(&mut rng, 60, 2, 0.2, 2.0);
    let y: Vec<f64> = data
        .iter_rows()
        .map(|r| 1.5 * (1.3 * r[0]).sin() + 0.4 * r[1] * r[1] - 0.7)
        .collect();
    let cfg = RandomSkeletonConfig {
        max_depth: 3,
        max_params: 3,
        leaf_prob: 0.3,
    };
    let (mut fits, mut violations) = (0, 0);
    for i in 0..150u64 {
        let s = random_skeleton(&mut rng, &vars, &cfg);
        if s.param_count() == 0 {
            continue;
        }
        let opts = FitOptions::with_seed(i);
        let (Ok(m), f) = (mixed_optimize(&s, &data, &y, &opts), fallback_fit(&s, &data, &y, &opts)) else {
            continue;
        };
        fits += 1;
        if let Ok(f) = f {
            if !(m.nmse <= f.nmse + 1e-15) {
                violations += 1;
                eprintln!("  {s}: mixed {} > fallback {}", m.nmse, f.nmse);
            }
        }
    }
    check(
        violations == 0 && fits >= 50,
        format!("{fits} fuzzed fits, 0 violations"),
        format!("{violations} violations over {fits} fits"),
    )
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    let mut problems = Vec::new();
    for case in 0..1000 {
        let n = rng.random_range(2..60);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let pred: Vec<f64> = y
            .iter()
            .map(|v| v * (1.0 + rng.random_range(-0.2..0.2)) + rng.random_range(-0.01..0.01))
            .collect();
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let mse = pred.iter().zip(&y).map(|(p, v)| (p - v).powi(2)).sum::<f64>() / n as f64;
        let got = nmse(&pred, &y).unwrap();
        worst = worst.max((got - mse / var).abs() / (mse / var).max(1.0));
        let mean_nmse = nmse(&vec![mean; n], &y).unwrap();
        if (mean_nmse - 1.0).abs() > 1e-12 {
            problems.push(format!("case {case}: mean predictor NMSE {mean_nmse}"));
        }
        let tau_r = rng.random_range(0.0..0.3);
        for tau in [0.1, 0.001, tau_r] {
            let mut hits = 0;
            let mut all = true;
            for (p, v) in pred.iter().zip(&y) {
                let within = (p - v).abs() / (v.abs() + 1e-9) <= tau;
                hits += usize::from(within);
                all &= within;
            }
            let acc = acc_at_tau(&pred, &y, tau);
            worst = worst.max((acc - hits as f64 / n as f64).abs());
            let amax = acc_max_at_tau(&pred, &y, tau);
            if amax != u8::from(all) || (amax == 1) != (acc == 1.0) {
                problems.push(format!("case {case}: acc_max {amax} with acc {acc}"));
            }
        }
    }
    check(
        worst <= 1e-12 && problems.is_empty(),
        format!("1000 vectors, worst deviation {worst:.1e}"),
        format!("worst deviation {worst:.1e}; {:?}", problems.iter().take(3).collect::<Vec<_>>()),
    )
}

fn score_arithmetic() -> Outcome {
    let s = score(1e-4, 3.0);
    check(
        (s - 5.547238).abs() <= 1e-4,
        format!("score(1e-4, 3) = {s:.6}"),
        format!("score(1e-4, 3) = {s}"),
    )
}

fn candidate(s: Skeleton, sc: f64) -> ScoredCandidate {
    ScoredCandidate {
        fit: FitResult {
            theta: vec![1.0; s.param_count()],
            nmse: 0.1,
            path: FitPath::Mixed,
            evals: 1,
        },
        skeleton: s,
        score: sc,
        complexity: Complexity {
            n_eff: 1,
            c_sens: 0.0,
            c_curv: 0.0,
        },
    }
}

/// Flat-list reference: every stored elite carries its island and cluster
/// id; document frequencies are recounted from scratch on every insert.
struct FlatMemory {
    entries: Vec<(usize, usize, ScoredCandidate, TokenBag)>,
}

impl FlatMemory {
    fn vector(bag: &TokenBag, docs: &[&TokenBag]) -> BTreeMap<String, f64> {
        let n = docs.len() as f64;
        bag.iter()
            .map(|(t, tf)| {
                let df = docs.iter().filter(|d| d.get(t) > 0).count() as f64;
                (t.to_string(), tf as f64 * (n / df).ln())
            })
            .collect()
    }

    fn cosine(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
        let dot: f64 = a.iter().map(|(k, v)| v * b.get(k).copied().unwrap_or(0.0)).sum();
        let na = a.values().map(|v| v * v).sum::<f64>().sqrt();
        let nb = b.values().map(|v| v * v).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }

    fn insert(&mut self, island: usize, c: ScoredCandidate) {
        let bag = tokenize(&c.skeleton);
        let mut docs: Vec<&TokenBag> = self.entries.iter().map(|e| &e.3).collect();
        docs.push(&bag);
        let v = Self::vector(&bag, &docs);
        let mut best: Option<(usize, f64)> = None;
        for (idx, e) in self.entries.iter().enumerate() {
            if e.0 != island {
                continue;
            }
            let sim = Self::cosine(&v, &Self::vector(&e.3, &docs));
            let better = match best {
                None => true,
                Some((b, bs)) => sim > bs || (sim == bs && e.1 < self.entries[b].1),
            };
            if sim > 0.9 && better {
                best = Some((idx, sim));
            }
        }
        match best {
            None => {
                let id = self.entries.iter().filter(|e| e.0 == island).count();
                self.entries.push((island, id, c, bag));
            }
            Some((idx, _)) => {
                if c.score > self.entries[idx].2.score {
                    self.entries[idx].2 = c;
                    self.entries[idx].3 = bag;
                }
            }
        }
    }

    fn elites(&self) -> BTreeSet<(usize, usize, String, u64)> {
        self.entries
            .iter()
            .map(|e| (e.0, e.1, e.2.skeleton.to_string(), e.2.score.to_bits()))
            .collect()
    }
}

fn memory_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let vars = names(&["x", "v"]);
    let cfg = RandomSkeletonConfig {
        max_depth: 3,
        max_params: 3,
        leaf_prob: 0.3,
    };
    let mut mem = SemanticMemory::new(10, 0.1);
    let mut flat = FlatMemory { entries: Vec::new() };
    for i in 0..1000 {
        let s = random_skeleton(&mut rng, &vars, &cfg);
        let c = candidate(s, rng.random_range(-2.0..10.0));
        let island = rng.random_range(0..10);
        mem.insert(island, c.clone()).map_err(|e| format!("insert {i}: {e}"))?;
        flat.insert(island, c);
    }
    let got: BTreeSet<_> = mem
        .elites()
        .map(|(i, c)| (i, c.id, c.elite.candidate.skeleton.to_string(), c.elite.candidate.score.to_bits()))
        .collect();
    let want = flat.elites();
    let p = softmax(&[1.0, 0.9], 0.1);
    let soft_ok = (p[0] - 0.7311).abs() <= 1e-4 && (p[1] - 0.2689).abs() <= 1e-4;
    check(
        got == want && mem.cluster_count() == flat.entries.len() && soft_ok,
        format!(
            "1000 insertions, {} clusters match the flat oracle; softmax [{:.4}, {:.4}]",
            mem.cluster_count(),
            p[0],
            p[1]
        ),
        format!(
            "clusters {} vs oracle {}, {} elites differ; softmax {p:?}",
            mem.cluster_count(),
            flat.entries.len(),
            got.symmetric_difference(&want).count()
        ),
    )
}

fn trigger_statistics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let n = 100_000;
    let mut hits = 0;
    for _ in 0..n {
        let s = rng.random_range(1e-6..20.0);
        hits += usize::from(trigger_critic(s, 0.4, &mut rng));
    }
    let rate = hits as f64 / n as f64;
    let mut bad = 0;
    for _ in 0..n {
        let s = -rng.random_range(0.0..20.0);
        bad += usize::from(trigger_critic(s, 0.4, &mut rng));
    }
    check(
        (rate - 0.4).abs() <= 0.01 && bad == 0,
        format!("rate {rate:.4} over 1e5 positive scores; 0 triggers on nonpositive"),
        format!("rate {rate}, {bad} triggers on nonpositive scores"),
    )
}

fn hint_correctness() -> Outcome {
    let xs: Vec<f64> = (0..101).map(|i| -2.0 + 0.04 * i as f64).collect();
    let x = Matrix::column_vector(&xs);
    let cube: Vec<f64> = xs.iter().map(|v| v.powi(3)).collect();
    let sq: Vec<f64> = xs.iter().map(|v| v * v).collect();
    let h3 = build_data_hint(&x, &names(&["x"]), &cube, "y");
    let h2 = build_data_hint(&x, &names(&["x"]), &sq, "y");
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let m = uniform_matrix(&mut rng, 200, 2, -1.0, 1.0);
    let prod: Vec<f64> = m.iter_rows().map(|r| 2.0 * r[0] * r[1]).collect();
    let hp = build_data_hint(&m, &names(&["x1", "x2"]), &prod, "y");
    let odd = h3.parity_of("x").map(|p| p.parity) == Some(Parity::Odd);
    let top3 = h3.dominant_terms.first().map(|t| t.feature.as_str()) == Some("x^3");
    let even = h2.parity_of("x").map(|p| p.parity) == Some(Parity::Even);
    let topp = hp.dominant_terms.first().map(|t| t.feature.as_str()) == Some("x1*x2");
    let line = format!("x^3 odd={odd} top={top3}; x^2 even={even}; 2*x1*x2 top={topp}");
    check(odd && top3 && even && topp, line.clone(), line)
}

const OSC_TRUTH: &str =
    "params[0]*sin(params[1]*x) + params[2]*v^3 + params[3]*x^3 + params[4]*x*v + params[5]*x*cos(x)";

fn oscillator_script() -> String {
    format!(
        "@sampler\nparams[0]*x + params[1]*v\nparams[0]*sin(params[1]*x)\nparams[0]*v^3 + params[1]*x\n---\n\
@sampler\nHere are some options:\n```text\nparams[0]*x*cos(x) + params[1]*v\nparams[0]*exp(params[1]*x) + params[2]*v\nlog(x\n```\n---\n\
@sampler\n```text\nparams[0]*x^3 + params[1]*v^3\n{OSC_TRUTH}\nparams[0]*tanh(params[1]*v)\n```\n---\n\
@critic\nRemove | params[1]*v | weak term\nAdd | params[2]*v^3 | cubic damping\n---\n\
@executor\n```text\nparams[0]*x + params[1]*v^3\nparams[0]*x + params[1]*v^3 + params[2]*x^3\n```\n"
    )
}

fn oscillator_run(data: &Dataset) -> Result<eqsearch_core::discovery::DiscoveryResult, String> {
    let cfg = RunConfig {
        budget: 200,
        seed: 42,
        ..RunConfig::default()
    };
    let task = TaskSpec::new("acceleration of a nonlinear damped oscillator", &data.names, "y");
    let provider = ScriptedProvider::from_script(&oscillator_script());
    run(&cfg, data, &task, &provider).map_err(|e| e.to_string())
}

fn end_to_end() -> Outcome {
    let data = make_synthetic("oscillator1", 500, 200, 200, 0.0, 7).map_err(|e| e.to_string())?;
    let r = oscillator_run(&data)?;
    let best = r.best.ok_or("no best candidate")?;
    let m = evaluate_equation(&best.skeleton, &best.fit.theta, &data, &DEFAULT_TAUS).map_err(|e| e.to_string())?;
    let mut accs = Vec::new();
    for split in ["id_test", "ood_test"] {
        for tau in DEFAULT_TAUS {
            accs.push(m.split(split).and_then(|s| s.at(tau)).map_or(0.0, |t| t.acc));
        }
    }
    let perfect = accs.iter().all(|a| *a == 1.0);
    let line = format!(
        "{:?} after {} iterations, train NMSE {:.2e}, ID/OOD ACC@0.1 and ACC@0.001 = {:?}",
        r.termination, r.iterations, best.fit.nmse, accs
    );
    check(
        r.termination == Termination::EarlyStop && best.fit.nmse < 1e-13 && perfect,
        line.clone(),
        line,
    )
}

fn sine_data() -> (Matrix, Vec<f64>) {
    let xs: Vec<f64> = (0..200).map(|i| -3.0 + 6.0 * i as f64 / 199.0).collect();
    let y = xs.iter().map(|x| 1.0 + 3.0 * (2.0 * x).sin()).collect();
    (Matrix::column_vector(&xs), y)
}

fn reflection_never_degrades() -> Outcome {
    let (data, y) = sine_data();
    let vars = names(&["x"]);
    let task = TaskSpec::new("periodic signal", &vars, "y");
    let cfg = RunConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let rcfg = RandomSkeletonConfig {
        max_depth: 3,
        max_params: 3,
        leaf_prob: 0.3,
    };
    let reflect = |base: &ScoredCandidate, script: &str, seed: u64| {
        let provider = ScriptedProvider::from_script(script);
        let r = Reflector {
            config: &cfg,
            task: &task,
            data: &data,
            y: &y,
            provider: &provider,
        };
        r.reflect(base, usize::MAX, seed)
    };
    let (mut scenarios, mut degraded, mut strict) = (0, 0, 0);
    let verbs = ["Add | params[0]*x | drift", "Add | sin(params[0]*x) | periodic", "Simplify | x | tidy"];
    while scenarios < 100 {
        let base_s = random_skeleton(&mut rng, &vars, &rcfg);
        if base_s.param_count() == 0 {
            continue;
        }
        let Ok(fit) = mixed_optimize(&base_s, &data, &y, &FitOptions::with_seed(scenarios)) else {
            continue;
        };
        let base = score_candidate(&base_s, fit, &data, &y);
        if !base.score.is_finite() {
            continue;
        }
        let revisions: Vec<String> = (0..rng.random_range(1..=4))
            .map(|_| random_skeleton(&mut rng, &vars, &rcfg).to_string())
            .chain(std::iter::once(base_s.to_string()))
            .collect();
        let script = format!(
            "@critic\n{}\n---\n@executor\n{}\n",
            verbs[scenarios as usize % verbs.len()],
            revisions.join("\n")
        );
        let out = reflect(&base, &script, scenarios);
        scenarios += 1;
        if out.candidate.score < base.score {
            degraded += 1;
        }
        strict += usize::from(out.candidate.score > base.score);
    }
    // constructed repair: the offset is missing from the base
    let base_s = parse_with_vars("params[0]*sin(params[1]*x)", &vars).unwrap();
    let fit = mixed_optimize(&base_s, &data, &y, &FitOptions::default()).map_err(|e| e.to_string())?;
    let base = score_candidate(&base_s, fit, &data, &y);
    let out = reflect(
        &base,
        "@critic\nAdd | params[2] | missing offset\n---\n@executor\nparams[0]*sin(params[1]*x) + params[2]\n",
        1,
    );
    let repaired = out.improved && out.candidate.score > base.score;
    check(
        degraded == 0 && repaired,
        format!(
            "100 scenarios, 0 degraded, {strict} improved; repair {:.3} -> {:.3}",
            base.score, out.candidate.score
        ),
        format!("{degraded} degraded; constructed repair improved={repaired}"),
    )
}

fn determinism() -> Outcome {
    let data = make_synthetic("oscillator1", 300, 50, 50, 0.0, 3).map_err(|e| e.to_string())?;
    let bytes = || -> Result<Vec<u8>, String> {
        let cfg = RunConfig {
            budget: 200,
            seed: 9,
            trigger_prob: 1.0,
            ..RunConfig::default()
        };
        let task = TaskSpec::new("oscillator", &data.names, "y");
        let script = oscillator_script().replace(OSC_TRUTH, "params[0]*sin(params[1]*x) + params[2]*v");
        let provider = ScriptedProvider::from_script(&script);
        let r = run(&cfg, &data, &task, &provider).map_err(|e| e.to_string())?;
        let mut out = Vec::new();
        write_trace(&r.trace, &mut out).map_err(|e| e.to_string())?;
        Ok(out)
    };
    let a = bytes()?;
    let b = bytes()?;
    let lines = a.iter().filter(|c| **c == b'\n').count();
    check(
        a == b && lines > 0,
        format!("two runs, {lines} trace lines, byte-identical"),
        format!("traces differ ({} vs {} bytes)", a.len(), b.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("affine reconstruction", affine_reconstruction),
        ("separable-fit recovery", separable_recovery),
        ("min-of-two contract", min_of_two),
        ("metric oracles", metric_oracles),
        ("score arithmetic", score_arithmetic),
        ("memory equivalence", memory_equivalence),
        ("trigger statistics", trigger_statistics),
        ("hint correctness", hint_correctness),
        ("end-to-end scripted discovery", end_to_end),
        ("reflection never degrades", reflection_never_degrades),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.2}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.2}s): {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", 11 - failed, 11);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
