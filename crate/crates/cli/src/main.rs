use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use badgepp::evaluation::{
    evaluate, forward_intensity, model_residuals, predict_next_time, rank_parents, recovery_report, residual_report, EvalOptions,
    NextTimeEstimate,
};
use badgepp::inference::{fit_with_horizons, FitOptions};
use badgepp::io::{
    from_json_value, load_badges, load_events, load_params, save_events, save_params, split_train_test, to_json_writer,
    write_qq_csv, write_ranking_csv, write_report, BadgeFile, LoadOptions, Split,
};
use badgepp::model::{question_mark_pmf, Action, Horizons, ModelIndex};
use badgepp::simulator::{sample_synthetic_params, simulate, SyntheticConfig};
use badgepp::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "badgepp", version, about = "Simulate, fit and evaluate badge-driven question/answer activity models")]
struct Cli {
    /// Log level for stderr output (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Seed for every random draw made by the command.
    #[arg(long)]
    seed: u64,
    /// Worker threads for per-user parallelism; defaults to all cores. Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Desk,
    Full,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a synthetic population and simulate its event log.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Synthetic population config (JSON); overrides --preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "desk")]
        preset: Preset,
        /// Event log to write (JSONL).
        #[arg(long)]
        out: PathBuf,
        /// Generating parameters; defaults to `<out>.params.json`.
        #[arg(long)]
        params_out: Option<PathBuf>,
        /// Badge file for refitting; defaults to `<out>.badges.json`.
        #[arg(long)]
        badges_out: Option<PathBuf>,
    },
    /// Fit per-user parameters by variational EM.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        badges: PathBuf,
        /// Fit only the earliest fraction of every user's events.
        #[arg(long)]
        train_fraction: Option<f64>,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// Sort out-of-order records instead of rejecting the log.
        #[arg(long)]
        sort: bool,
        /// Fitted parameters (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Convergence trace; defaults to `<out>.trace.csv`.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Full fit report with flags and trace (JSON).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score parameters on the held-out part of a log.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        events: PathBuf,
        /// Earliest fraction of every user's events treated as history.
        #[arg(long, default_value_t = 0.8, conflicts_with = "whole")]
        train_fraction: f64,
        /// Score every event in the log.
        #[arg(long)]
        whole: bool,
        /// Monte Carlo samples per next-time prediction (0 skips time prediction).
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Ranking cutoffs.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
        ks: Vec<usize>,
        #[arg(long)]
        sort: bool,
        #[arg(long)]
        out: PathBuf,
        /// Ranking curves in long CSV form.
        #[arg(long)]
        ranking_csv: Option<PathBuf>,
        /// Oldest question age considered as an answer's parent; defaults to the model's cutoff window.
        #[arg(long)]
        candidate_lag: Option<f64>,
    },
    /// Predict a user's next question and answer times and rank their marks.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        user: usize,
        /// Prediction time; defaults to the end of the log.
        #[arg(long)]
        at: Option<f64>,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long)]
        sort: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time-rescaled residuals, a KS test against Exp(1) and Q-Q plot data.
    Residuals {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        events: PathBuf,
        /// Only use events after this training fraction; defaults to the whole log.
        #[arg(long)]
        train_fraction: Option<f64>,
        #[arg(long)]
        sort: bool,
        /// Q-Q points (CSV).
        #[arg(long)]
        out: PathBuf,
        /// Residuals and KS result (JSON); defaults to `<out>.ks.json`.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Compare fitted parameters with the generating ones.
    Recover {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        fitted: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config_path: Option<PathBuf>,
    seed: u64,
    threads: Option<usize>,
    inputs: BTreeMap<String, PathBuf>,
    outputs: Vec<PathBuf>,
    args: Vec<String>,
    git_describe: String,
    version: String,
    wall_time_seconds: f64,
}

struct Run {
    command: &'static str,
    common: Common,
    config_path: Option<PathBuf>,
    inputs: BTreeMap<String, PathBuf>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl Run {
    fn new(command: &'static str, common: &Common) -> Self {
        Run {
            command,
            common: common.clone(),
            config_path: None,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    fn input(&mut self, name: &str, path: &Path) {
        self.inputs.insert(name.to_string(), path.to_path_buf());
    }

    fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Write `<primary>.manifest.json` describing the run.
    fn finish(self, primary: &Path) -> Result<()> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            config_path: self.config_path,
            seed: self.common.seed,
            threads: self.common.threads,
            inputs: self.inputs,
            outputs: self.outputs,
            args: std::env::args().skip(1).collect(),
            git_describe: env!("BADGEPP_GIT_DESCRIBE").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
        };
        write_json(&sibling(primary, "manifest.json"), &manifest)
    }
}

/// `events.jsonl` + `trace.csv` -> `events.jsonl.trace.csv`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(badgepp::io::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_report(value, create(path)?)
}

fn load_options(sort: bool) -> LoadOptions {
    LoadOptions { sort_unsorted: sort }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { common, config, preset, out, params_out, badges_out } => {
            let mut run = Run::new("simulate", &common);
            let mut cfg = match &config {
                Some(path) => {
                    run.config_path = Some(path.clone());
                    run.input("config", path);
                    let value: serde_json::Value = serde_json::from_reader(badgepp::io::open(path)?)?;
                    from_json_value::<SyntheticConfig>(value)?
                }
                None => match preset {
                    Preset::Desk => SyntheticConfig::desk(),
                    Preset::Full => SyntheticConfig::full(),
                },
            };
            if cfg.seed != common.seed {
                log::info!("using --seed {} in place of the config seed {}", common.seed, cfg.seed);
            }
            cfg.seed = common.seed;
            cfg.validate()?;
            let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
            let (params, model) = sample_synthetic_params(&cfg, &mut rng)?;
            let sim = simulate(&params, &model, cfg.stop, &mut rng)?;
            if sim.cap_reached {
                log::warn!("simulation stopped at the time cap before reaching its event target");
            }
            log::info!(
                "simulated {} events up to t={:.3} ({} proposals, {} orphan answers dropped)",
                sim.dataset.len(),
                sim.dataset.horizon(),
                sim.proposals,
                sim.orphan_answers
            );
            save_events(&out, &sim.dataset, &model.time_unit)?;
            run.output(&out);
            let params_out = params_out.unwrap_or_else(|| sibling(&out, "params.json"));
            save_params(&params_out, &model, &params)?;
            run.output(&params_out);
            let badges_out = badges_out.unwrap_or_else(|| sibling(&out, "badges.json"));
            to_json_writer(&BadgeFile::from_config(&model), create(&badges_out)?)?;
            run.output(&badges_out);
            run.finish(&out)
        }
        Command::Fit { common, events, badges, train_fraction, max_iters, tol, sort, out, trace, report } => {
            let mut run = Run::new("fit", &common);
            run.input("events", &events);
            run.input("badges", &badges);
            run.config_path = Some(badges.clone());
            let (dataset, _) = load_events(&events, load_options(sort))?;
            let cfg = load_badges(&badges)?.to_config()?;
            let horizons = match train_fraction {
                Some(f) => split_train_test(&dataset, f)?.train,
                None => Horizons::uniform(dataset.num_users(), dataset.horizon()),
            };
            let options = FitOptions { max_iters, tol, seed: common.seed };
            let fit = fit_with_horizons(&dataset, &cfg, &horizons, &options)?;
            if !fit.converged {
                log::warn!("no convergence within {max_iters} iterations");
            }
            log::info!("{} iterations, final bound {:?}", fit.iterations, fit.lower_bound_trace.last());
            save_params(&out, &cfg, &fit.params)?;
            run.output(&out);
            let trace = trace.unwrap_or_else(|| sibling(&out, "trace.csv"));
            fit.write_trace_csv(create(&trace)?)?;
            run.output(&trace);
            if let Some(path) = report {
                write_json(&path, &fit)?;
                run.output(&path);
            }
            run.finish(&out)
        }
        Command::Evaluate { common, params, events, train_fraction, whole, samples, ks, sort, out, ranking_csv, candidate_lag } => {
            let mut run = Run::new("evaluate", &common);
            run.input("params", &params);
            run.input("events", &events);
            let doc = load_params(&params)?;
            let (dataset, _) = load_events(&events, load_options(sort))?;
            check_shapes(doc.users.len(), doc.num_tags(), dataset.num_users(), dataset.num_tags())?;
            let split = if whole { Split::whole(&dataset) } else { split_train_test(&dataset, train_fraction)? };
            let options = EvalOptions { n_samples: samples, ks, candidate_lag, seed: common.seed };
            let report = evaluate(&dataset, &doc.users, &doc.config, &split, &options)?;
            write_json(&out, &report)?;
            run.output(&out);
            if let Some(path) = ranking_csv {
                write_ranking_csv(&report, create(&path)?)?;
                run.output(&path);
            }
            run.finish(&out)
        }
        Command::Predict { common, params, events, user, at, top, samples, sort, out } => {
            let mut run = Run::new("predict", &common);
            run.input("params", &params);
            run.input("events", &events);
            let doc = load_params(&params)?;
            let (dataset, _) = load_events(&events, load_options(sort))?;
            check_shapes(doc.users.len(), doc.num_tags(), dataset.num_users(), dataset.num_tags())?;
            if user >= dataset.num_users() {
                return Err(Error::InvalidArgument(format!("user {user} out of range (U={})", dataset.num_users())));
            }
            let t_now = at.unwrap_or(dataset.horizon());
            if !(t_now.is_finite() && t_now >= 0.0) {
                return Err(Error::InvalidArgument(format!("--at must be a nonnegative time, got {t_now}")));
            }
            let p = &doc.users[user];
            let index = ModelIndex::new(&dataset, &doc.config);
            let mut next = BTreeMap::new();
            for (stream, action) in [Action::Question, Action::Answer].into_iter().enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
                rng.set_stream(stream as u64);
                let est = match predict_next_time(&forward_intensity(&index, user, action, t_now, p), t_now, samples, &mut rng) {
                    Ok(e) => Some(e),
                    Err(Error::NoEventExpected) => None,
                    Err(e) => return Err(e),
                };
                next.insert(action.as_str().to_string(), est);
            }
            let pmf = question_mark_pmf(p)?;
            let mut tags: Vec<(usize, f64)> = pmf.into_iter().enumerate().collect();
            tags.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            tags.truncate(top);
            let mut parents = rank_parents(&dataset, &doc.config, p, t_now, doc.config.max_lag());
            parents.truncate(top);
            let prediction = Prediction { user, t_now, next_time: next, tags, parents };
            write_json(&out, &prediction)?;
            run.output(&out);
            run.finish(&out)
        }
        Command::Residuals { common, params, events, train_fraction, sort, out, summary } => {
            let mut run = Run::new("residuals", &common);
            run.input("params", &params);
            run.input("events", &events);
            let doc = load_params(&params)?;
            let (dataset, _) = load_events(&events, load_options(sort))?;
            check_shapes(doc.users.len(), doc.num_tags(), dataset.num_users(), dataset.num_tags())?;
            let split = match train_fraction {
                Some(f) => split_train_test(&dataset, f)?,
                None => Split::whole(&dataset),
            };
            let index = ModelIndex::new(&dataset, &doc.config);
            let report = residual_report(model_residuals(&index, &doc.users, &split))?;
            if report.ks.low_power {
                log::warn!("only {} residuals; the KS test has little power", report.ks.n);
            }
            write_qq_csv(&report.qq_points, create(&out)?)?;
            run.output(&out);
            let summary = summary.unwrap_or_else(|| sibling(&out, "ks.json"));
            write_json(&summary, &report)?;
            run.output(&summary);
            run.finish(&out)
        }
        Command::Recover { common, truth, fitted, out } => {
            let mut run = Run::new("recover", &common);
            run.input("truth", &truth);
            run.input("fitted", &fitted);
            let t = load_params(&truth)?;
            let f = load_params(&fitted)?;
            let report = recovery_report(&t.users, &f.users)?;
            write_json(&out, &report)?;
            run.output(&out);
            run.finish(&out)
        }
    }
}

#[derive(Serialize)]
struct Prediction {
    user: usize,
    t_now: f64,
    /// Keyed by action ("q", "a"); null when no further event is expected.
    next_time: BTreeMap<String, Option<NextTimeEstimate>>,
    /// Most likely tags of the user's next question with their probabilities.
    tags: Vec<(usize, f64)>,
    /// Most likely parent questions (event rows) of the user's next answer.
    parents: Vec<usize>,
}

fn check_shapes(param_users: usize, param_tags: usize, users: usize, tags: usize) -> Result<()> {
    if param_users != users || param_tags != tags {
        return Err(Error::InvalidArgument(format!(
            "parameters cover {param_users} users and {param_tags} tags but the log declares {users} and {tags}"
        )));
    }
    Ok(())
}

fn common(command: &Command) -> &Common {
    match command {
        Command::Simulate { common, .. }
        | Command::Fit { common, .. }
        | Command::Evaluate { common, .. }
        | Command::Predict { common, .. }
        | Command::Residuals { common, .. }
        | Command::Recover { common, .. } => common,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    if let Some(n) = common(&cli.command).threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{body}");
            ExitCode::from(1)
        }
    }
}
