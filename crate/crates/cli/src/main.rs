use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use eqsearch_core::agents::TaskSpec;
use eqsearch_core::bench::{
    evaluate_equation, evaluate_predictions, load_csv, make_synthetic, render_table, write_csv, BenchError,
    Dataset, RunReport, DEFAULT_TAUS,
};
use eqsearch_core::discovery::{run, write_trace, RunConfig, RunError};
use eqsearch_core::expr::{parse_with_vars, Skeleton};
use eqsearch_core::fit::{mixed_optimize, FitError, FitOptions};
use eqsearch_core::hints::{build_data_hint, render_hint};
use eqsearch_core::memory::{SemanticMemory, DEFAULT_TEMPERATURE};
use eqsearch_core::scoring::score_candidate;

#[derive(Parser)]
#[command(name = "eqsearch", version, about = "Closed-loop symbolic equation discovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the discovery loop and write report, trace and memory files.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        id_test: Option<PathBuf>,
        #[arg(long)]
        ood_test: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "y")]
        target: String,
    },
    /// Fit one skeleton to a CSV file.
    Fit {
        #[arg(long)]
        skeleton: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "y")]
        target: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score a fitted equation on a CSV file.
    Eval {
        #[arg(long)]
        skeleton: String,
        /// Comma-separated parameter values.
        #[arg(long, allow_hyphen_values = true)]
        theta: String,
        #[arg(long)]
        data: PathBuf,
        /// Tolerance; repeatable. Defaults to 0.1 and 0.001.
        #[arg(long)]
        tau: Vec<f64>,
        #[arg(long, default_value = "y")]
        target: String,
    },
    /// Print the data hint for a CSV file.
    Hint {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "y")]
        target: String,
    },
    /// Write train, ID and OOD CSV files from a built-in generator.
    Synth {
        #[arg(long)]
        name: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        n_train: usize,
        #[arg(long, default_value_t = 200)]
        n_id: usize,
        #[arg(long, default_value_t = 200)]
        n_ood: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// List the elites stored in a memory state file.
    Memdump {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, default_value_t = 10)]
        islands: usize,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Provider(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Provider(_) => 4,
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::UnknownSynthetic(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

fn load_single(path: &Path, target: &str) -> Result<Dataset, CliError> {
    Ok(Dataset::from_blocks(load_csv(path, target)?, None, None)?)
}

fn parse_skeleton(text: &str, names: &[String]) -> Result<Skeleton, CliError> {
    parse_with_vars(text, names).map_err(|e| CliError::Usage(format!("skeleton: {e}")))
}

fn parse_theta(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("theta: cannot parse '{}'", s.trim())))
        })
        .collect()
}

fn fit_error(e: FitError) -> CliError {
    match e {
        FitError::Eval(_) => CliError::Usage(e.to_string()),
        other => CliError::Data(other.to_string()),
    }
}

fn cmd_run(
    config: &Path,
    train: &Path,
    id_test: Option<&Path>,
    ood_test: Option<&Path>,
    out: &Path,
    target: &str,
) -> Result<(), CliError> {
    let text = fs::read_to_string(config).map_err(|e| CliError::Usage(format!("{}: {e}", config.display())))?;
    let cfg: RunConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", config.display())))?;
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let spec = cfg
        .provider
        .as_ref()
        .ok_or_else(|| CliError::Usage("config has no provider".to_string()))?;
    let provider = spec.build().map_err(|e| CliError::Provider(e.to_string()))?;
    let load = |p: Option<&Path>| p.map(|p| load_csv(p, target)).transpose();
    let data = Dataset::from_blocks(load_csv(train, target)?, load(id_test)?, load(ood_test)?)?;
    let description = if cfg.task_description.is_empty() {
        format!("Find an equation for {} in terms of {}", data.target_name, data.names.join(", "))
    } else {
        cfg.task_description.clone()
    };
    let task = TaskSpec::new(description, &data.names, data.target_name.clone());

    let result = run(&cfg, &data, &task, provider.as_ref()).map_err(|e| match e {
        RunError::InvalidConfig(m) => CliError::Usage(m),
        RunError::DegenerateTarget => CliError::Data(e.to_string()),
        RunError::Provider(p) => CliError::Provider(p.to_string()),
    })?;

    fs::create_dir_all(out)?;
    write_trace(&result.trace, BufWriter::new(File::create(out.join("trace.jsonl"))?))?;
    result
        .memory
        .dump(BufWriter::new(File::create(out.join("memory.jsonl"))?))
        .map_err(|e| CliError::Data(e.to_string()))?;
    let Some(best) = &result.best else {
        return Err(CliError::Provider(format!(
            "no candidate could be evaluated ({:?} after {} iterations)",
            result.termination, result.iterations
        )));
    };
    let metrics = evaluate_equation(&best.skeleton, &best.fit.theta, &data, &DEFAULT_TAUS)?;
    let report = RunReport {
        generated_at: Some(chrono::Utc::now().to_rfc3339()),
        equation: best.skeleton.to_string(),
        theta: best.fit.theta.clone(),
        train_nmse: best.fit.nmse,
        score: best.score,
        termination: format!("{:?}", result.termination),
        iterations: result.iterations,
        evaluations: result.evaluations,
        config: serde_json::to_value(&cfg).map_err(|e| CliError::Data(e.to_string()))?,
        metrics: metrics.clone(),
    };
    fs::write(out.join("report.json"), report.to_json())?;
    let table = render_table(&metrics);
    fs::write(out.join("metrics.txt"), &table)?;
    println!("equation: {}", report.equation);
    println!("theta: {:?}", report.theta);
    println!(
        "termination: {} after {} iterations, {} evaluations",
        report.termination, report.iterations, report.evaluations
    );
    print!("{table}");
    Ok(())
}

fn cmd_fit(skeleton: &str, data: &Path, target: &str, seed: u64) -> Result<(), CliError> {
    let d = load_single(data, target)?;
    let s = parse_skeleton(skeleton, &d.names)?;
    let fit = mixed_optimize(&s, &d.train.inputs, &d.train.target, &FitOptions::with_seed(seed)).map_err(fit_error)?;
    let c = score_candidate(&s, fit, &d.train.inputs, &d.train.target);
    let out = json!({
        "expr": c.skeleton.to_string(),
        "theta": c.fit.theta,
        "nmse": c.fit.nmse,
        "path": c.fit.path,
        "score": c.score,
        "n_eff": c.complexity.n_eff,
        "c_sens": c.complexity.c_sens,
        "c_curv": c.complexity.c_curv,
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("json"));
    Ok(())
}

fn cmd_eval(skeleton: &str, theta: &str, data: &Path, taus: &[f64], target: &str) -> Result<(), CliError> {
    let d = load_single(data, target)?;
    let s = parse_skeleton(skeleton, &d.names)?;
    let theta = parse_theta(theta)?;
    if theta.len() != s.param_count() {
        return Err(CliError::Usage(format!(
            "skeleton has {} parameters, --theta gives {}",
            s.param_count(),
            theta.len()
        )));
    }
    if taus.iter().any(|t| !(*t >= 0.0)) {
        return Err(CliError::Usage("--tau must be nonnegative".to_string()));
    }
    let taus = if taus.is_empty() { DEFAULT_TAUS.to_vec() } else { taus.to_vec() };
    let pred = s
        .evaluate(&theta, &d.train.inputs)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let m = evaluate_predictions(&[("data", &pred, &d.train.target)], &taus);
    print!("{}", render_table(&m));
    Ok(())
}

fn cmd_hint(data: &Path, target: &str) -> Result<(), CliError> {
    let d = load_single(data, target)?;
    let h = build_data_hint(&d.train.inputs, &d.names, &d.train.target, &d.target_name);
    print!("{}", render_hint(&h));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    name: &str,
    out: &Path,
    seed: u64,
    n_train: usize,
    n_id: usize,
    n_ood: usize,
    noise: f64,
) -> Result<(), CliError> {
    if !(noise >= 0.0) {
        return Err(CliError::Usage("--noise must be nonnegative".to_string()));
    }
    let d = make_synthetic(name, n_train, n_id, n_ood, noise, seed)?;
    fs::create_dir_all(out)?;
    for (split_name, split) in d.splits() {
        let path = out.join(format!("{split_name}.csv"));
        write_csv(BufWriter::new(File::create(&path)?), &d.names, &d.target_name, split)?;
        println!("{} ({} rows)", path.display(), split.rows());
    }
    Ok(())
}

fn cmd_memdump(state: &Path, islands: usize) -> Result<(), CliError> {
    let f = File::open(state).map_err(|e| CliError::Data(format!("{}: {e}", state.display())))?;
    let mem = SemanticMemory::restore(BufReader::new(f), islands, DEFAULT_TEMPERATURE)
        .map_err(|e| CliError::Data(e.to_string()))?;
    println!("{:<6} {:<7} {:>10} {:>11}  equation", "island", "cluster", "score", "nmse");
    for (i, c) in mem.elites() {
        let cand = &c.elite.candidate;
        println!(
            "{:<6} {:<7} {:>10.4} {:>11.3e}  {}",
            i, c.id, cand.score, cand.fit.nmse, cand.skeleton
        );
    }
    println!("{} clusters", mem.cluster_count());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            train,
            id_test,
            ood_test,
            out,
            target,
        } => cmd_run(&config, &train, id_test.as_deref(), ood_test.as_deref(), &out, &target),
        Command::Fit {
            skeleton,
            data,
            target,
            seed,
        } => cmd_fit(&skeleton, &data, &target, seed),
        Command::Eval {
            skeleton,
            theta,
            data,
            tau,
            target,
        } => cmd_eval(&skeleton, &theta, &data, &tau, &target),
        Command::Hint { data, target } => cmd_hint(&data, &target),
        Command::Synth {
            name,
            out,
            seed,
            n_train,
            n_id,
            n_ood,
            noise,
        } => cmd_synth(&name, &out, seed, n_train, n_id, n_ood, noise),
        Command::Memdump { state, islands } => cmd_memdump(&state, islands),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
