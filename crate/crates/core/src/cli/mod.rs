//! Command-line interface: `generate`, `train`, `verify` and `sweep`.
//!
//! Every command reads an optional TOML experiment file (see [`config`]),
//! writes its artifacts into one output directory and reports through its
//! exit status: 0 on success, 1 when a run or check fails, 2 for usage and
//! configuration errors.
//!
//! The output directory is the first of `--out`, the config's
//! `output_dir`, the `DEDPO_OUT_DIR` environment variable, and
//! `dedpo-out`.

pub mod config;
pub mod params;
pub mod plot;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::annotators::{read_fixed_table, Annotator, AnnotatorKind};
use crate::data::{generate, read_dataset, write_dataset, Dataset, WorldSpec};
use crate::diffusion::{make_schedule, ToyDenoiser};
use crate::preference::{DiffusionDpo, EstimatorKind};
use crate::trainer::{fit_rate, pretrain_reference, train, write_trace_csv, LinearExperiment, TrainConfig, TrainContext};
use crate::verification::{
    check_bounded_logits, check_gradients, check_combined_target_identity, check_quartic, check_rate, check_reductions,
    check_robustness, check_self_training_gate, check_strong_convexity, check_unbiasedness, check_unlabeled_scaling,
    run_robustness_matrix, run_sweep, write_summary_csv, MatrixCell, SweepRun, VerificationResult,
};
use config::ExperimentConfig;
use plot::{LinePlot, Series};

pub const OUT_DIR_ENV: &str = "DEDPO_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "dedpo-out";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Run(#[from] crate::Error),
    #[error("{0} of {1} checks failed")]
    ChecksFailed(usize, usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) | CliError::ChecksFailed(..) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "dedpo", version, about = "Semi-supervised debiased preference optimization on a toy diffusion model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment file (TOML). Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Root seed, overriding the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a preference dataset and write `dataset.csv`.
    Generate(Common),
    /// Train a policy against a pretrained reference.
    Train(Common),
    /// Run verification checks and write `summary.csv`.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Checks to run, comma separated.
        #[arg(long, value_enum, value_delimiter = ',', default_value = "all")]
        check: Vec<CheckName>,
        /// Worker threads for training sweeps (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Train the estimator-by-annotator-by-size matrix and fit rate curves.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum CheckName {
    Prop2,
    Unbiasedness,
    Convexity,
    BoundedLogits,
    Gradients,
    SelfTraining,
    Reductions,
    Rate,
    Quartic,
    Robustness,
    UnlabeledScaling,
    All,
}

impl CheckName {
    const EACH: [CheckName; 11] = [
        CheckName::Prop2,
        CheckName::Unbiasedness,
        CheckName::Convexity,
        CheckName::BoundedLogits,
        CheckName::Gradients,
        CheckName::SelfTraining,
        CheckName::Reductions,
        CheckName::Rate,
        CheckName::Quartic,
        CheckName::Robustness,
        CheckName::UnlabeledScaling,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckName::Prop2 => "prop2",
            CheckName::Unbiasedness => "unbiasedness",
            CheckName::Convexity => "convexity",
            CheckName::BoundedLogits => "bounded_logits",
            CheckName::Gradients => "gradients",
            CheckName::SelfTraining => "self_training",
            CheckName::Reductions => "reductions",
            CheckName::Rate => "rate",
            CheckName::Quartic => "quartic",
            CheckName::Robustness => "robustness",
            CheckName::UnlabeledScaling => "unlabeled_scaling",
            CheckName::All => "all",
        }
    }
}

/// Parse `args` (including the program name), run the command and return
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Generate(common) => {
            let (cfg, out) = setup(&common)?;
            cmd_generate(&cfg, &out)
        }
        Command::Train(common) => {
            let (cfg, out) = setup(&common)?;
            cmd_train(&cfg, &out)
        }
        Command::Verify { common, check, jobs } => {
            let (cfg, out) = setup(&common)?;
            with_pool(jobs, || cmd_verify(&cfg, &out, &check))
        }
        Command::Sweep { common, jobs } => {
            let (cfg, out) = setup(&common)?;
            with_pool(jobs, || cmd_sweep(&cfg, &out))
        }
    }
}

fn setup(common: &Common) -> CliResult<(ExperimentConfig, PathBuf)> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::with_defaults(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = resolve_out_dir(common.out.as_deref(), cfg.output_dir.as_deref(), std::env::var_os(OUT_DIR_ENV));
    fs::create_dir_all(&out)?;
    let resolved = toml::to_string(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
    fs::write(out.join("config.resolved.toml"), resolved)?;
    Ok((cfg, out))
}

fn resolve_out_dir(flag: Option<&Path>, config: Option<&Path>, env: Option<OsString>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.map(Path::to_path_buf))
        .or_else(|| env.filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn with_pool<F>(jobs: Option<usize>, f: F) -> CliResult<()>
where
    F: FnOnce() -> CliResult<()> + Send,
{
    match jobs {
        Some(0) => Err(CliError::Config("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Run(crate::Error::InvalidArgument(e.to_string())))?
            .install(f),
        None => f(),
    }
}

fn offset(sub: u64, root: u64) -> u64 {
    sub.wrapping_add(root)
}

fn world_of(cfg: &ExperimentConfig) -> Arc<WorldSpec> {
    Arc::new(cfg.world.build())
}

pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let world = world_of(cfg);
    let data = generate(&world, cfg.dataset.n_pairs, cfg.dataset.label_fraction, cfg.seed)?;
    let path = out.join("dataset.csv");
    let mut buf = Vec::new();
    write_dataset(&mut buf, &data)?;
    fs::write(&path, buf)?;
    println!("wrote {}: {} pairs, {} labeled, {} unlabeled", path.display(), data.len(), data.n_l, data.n_u);
    Ok(())
}

fn load_dataset(cfg: &ExperimentConfig, world: &WorldSpec) -> CliResult<Dataset> {
    match &cfg.dataset.path {
        Some(path) => {
            let file = fs::File::open(path).map_err(|e| {
                CliError::Run(crate::Error::InvalidArgument(format!("cannot open dataset {}: {e}", path.display())))
            })?;
            Ok(read_dataset(BufReader::new(file))?)
        }
        None => Ok(generate(world, cfg.dataset.n_pairs, cfg.dataset.label_fraction, cfg.seed)?),
    }
}

fn build_annotator(cfg: &ExperimentConfig, world: &Arc<WorldSpec>, seed: u64) -> CliResult<Annotator> {
    match &cfg.annotator {
        AnnotatorKind::Fixed => {
            let path = cfg
                .annotator_table
                .as_ref()
                .ok_or_else(|| CliError::Config("annotator kind \"fixed\" needs annotator_table".into()))?;
            let file = fs::File::open(path).map_err(|e| {
                CliError::Run(crate::Error::InvalidArgument(format!("cannot open annotator table {}: {e}", path.display())))
            })?;
            Ok(Annotator::fixed(read_fixed_table(BufReader::new(file))?)?)
        }
        kind => Ok(Annotator::from_kind(kind, Arc::clone(world), seed)?),
    }
}

pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let world = world_of(cfg);
    let schedule = make_schedule(cfg.diffusion.schedule_steps, cfg.diffusion.schedule)?;
    let shape = cfg.diffusion.shape(&world);
    let data = load_dataset(cfg, &world)?;
    let config = TrainConfig {
        seed: offset(cfg.train.seed, cfg.seed),
        ..cfg.train.clone()
    };
    let annotator = if config.estimator.uses_annotator() {
        Some(build_annotator(cfg, &world, cfg.seed)?)
    } else {
        None
    };
    let reference = Arc::new(pretrain_reference(&world, &schedule, shape, &cfg.diffusion.pretrain, cfg.seed)?);
    let ctx = TrainContext {
        world,
        schedule,
        reference,
    };
    let outcome = train(&ctx, (*ctx.reference).clone(), &data, annotator.as_ref(), &config)?;
    let report = &outcome.report;

    let json = serde_json::to_string_pretty(report).map_err(|e| CliError::Run(crate::Error::InvalidArgument(e.to_string())))?;
    fs::write(out.join("report.json"), json + "\n")?;
    let mut trace = Vec::new();
    write_trace_csv(&mut trace, report)?;
    fs::write(out.join("trace.csv"), trace)?;
    let mut bin = Vec::new();
    params::write_params(&mut bin, &outcome.policy, cfg.diffusion.schedule_steps)?;
    fs::write(out.join("policy.bin"), bin)?;
    println!(
        "{} on {} labeled + {} unlabeled pairs: final loss {:.6}, win rate {:.4} ({} steps, {:.1} s)",
        report.estimator, report.n_l, report.n_u, report.final_loss, report.win_rate, report.steps, report.wall_time_s
    );
    for flag in &report.assumption_flags {
        println!("  note: {flag}");
    }
    Ok(())
}

fn expand(checks: &[CheckName]) -> Vec<CheckName> {
    let mut picked: Vec<CheckName> = if checks.contains(&CheckName::All) {
        CheckName::EACH.to_vec()
    } else {
        checks.to_vec()
    };
    picked.sort();
    picked.dedup();
    picked
}

/// Policy trained briefly on a generated dataset, for probing logit bounds.
fn probe_model(cfg: &ExperimentConfig) -> CliResult<(DiffusionDpo, Dataset)> {
    let world = world_of(cfg);
    let schedule = make_schedule(cfg.diffusion.schedule_steps, cfg.diffusion.schedule)?;
    let shape = cfg.diffusion.shape(&world);
    let reference = Arc::new(pretrain_reference(&world, &schedule, shape, &cfg.diffusion.pretrain, cfg.seed)?);
    let data = generate(&world, cfg.dataset.n_pairs, cfg.dataset.label_fraction, cfg.seed)?;
    let annotator = build_annotator(cfg, &world, cfg.seed)?;
    let config = TrainConfig {
        estimator: EstimatorKind::DeDpo,
        steps: cfg.verification.logit_probe_steps.max(1),
        eval_prompts: 16,
        eval_every: 0,
        seed: offset(cfg.train.seed, cfg.seed),
        ..cfg.train.clone()
    };
    let ctx = TrainContext {
        world,
        schedule,
        reference,
    };
    let policy = train(&ctx, (*ctx.reference).clone(), &data, Some(&annotator), &config)?.policy;
    let model = DiffusionDpo::new(policy, Arc::clone(&ctx.reference), ctx.schedule.clone(), config.beta);
    Ok((model, data))
}

pub fn cmd_verify(cfg: &ExperimentConfig, out: &Path, checks: &[CheckName]) -> CliResult<()> {
    let v = &cfg.verification;
    let root = cfg.seed;
    let mut matrix: Option<std::result::Result<Vec<MatrixCell>, String>> = None;
    let mut matrix_cells = || -> std::result::Result<Vec<MatrixCell>, String> {
        matrix
            .get_or_insert_with(|| {
                let mut rc = v.robustness.clone();
                rc.seeds = rc.seeds.iter().map(|&s| offset(s, root)).collect();
                rc.reference_seed = offset(rc.reference_seed, root);
                run_robustness_matrix(&rc).map_err(|e| e.to_string())
            })
            .clone()
    };
    let checks_dir = out.join("checks");
    fs::create_dir_all(&checks_dir)?;
    let mut results = Vec::new();
    for name in expand(checks) {
        let outcome: std::result::Result<VerificationResult, String> = match name {
            CheckName::Prop2 => check_combined_target_identity(v.identity_instances, root).map_err(|e| e.to_string()),
            CheckName::Unbiasedness => {
                let mut uc = v.unbiasedness.clone();
                uc.seed = offset(uc.seed, root);
                check_unbiasedness(&uc).map_err(|e| e.to_string())
            }
            CheckName::Convexity => {
                check_strong_convexity(&v.convexity_bounds, v.convexity_resolution).map_err(|e| e.to_string())
            }
            CheckName::BoundedLogits => probe_model(cfg).map_err(|e| e.to_string()).and_then(|(model, data)| {
                check_bounded_logits(&model, &data.triplets, v.logit_bound, root).map_err(|e| e.to_string())
            }),
            CheckName::Gradients => check_gradients(v.gradient_draws, root).map_err(|e| e.to_string()),
            CheckName::SelfTraining => check_self_training_gate(&v.gate_thresholds, root).map_err(|e| e.to_string()),
            CheckName::Reductions => check_reductions(root).map_err(|e| e.to_string()),
            CheckName::Rate => {
                let mut rc = v.rate.clone();
                rc.seed = offset(rc.seed, root);
                check_rate(&rc).map_err(|e| e.to_string())
            }
            CheckName::Quartic => {
                let mut sc = v.sensitivity.clone();
                sc.seed = offset(sc.seed, root);
                check_quartic(&sc).map_err(|e| e.to_string())
            }
            CheckName::Robustness => matrix_cells().and_then(|cells| {
                let multiple = *v
                    .robustness
                    .unlabeled_multiples
                    .first()
                    .ok_or_else(|| "robustness needs at least one unlabeled multiple".to_string())?;
                check_robustness(&cells, v.robustness_accuracy, multiple, v.robustness_alpha).map_err(|e| e.to_string())
            }),
            CheckName::UnlabeledScaling => matrix_cells().and_then(|cells| {
                check_unlabeled_scaling(&cells, v.robustness_accuracy, &v.robustness.unlabeled_multiples)
                    .map_err(|e| e.to_string())
            }),
            CheckName::All => unreachable!("expanded above"),
        };
        let mut result = outcome.unwrap_or_else(|e| VerificationResult {
            check_name: name.as_str().to_string(),
            passed: false,
            statistic: f64::NAN,
            tolerance: f64::NAN,
            comparison: crate::verification::Comparison::AtMost,
            n_trials: 0,
            detail: format!("error: {e}"),
        });
        result.check_name = name.as_str().to_string();
        println!(
            "{} {}: statistic {:e}, tolerance {:e}. {}",
            if result.passed { "PASS" } else { "FAIL" },
            result.check_name,
            result.statistic,
            result.tolerance,
            result.detail
        );
        let json = serde_json::to_string_pretty(&result).map_err(|e| CliError::Run(crate::Error::InvalidArgument(e.to_string())))?;
        fs::write(checks_dir.join(format!("{}.json", name.as_str())), json + "\n")?;
        results.push(result);
    }
    let mut csv = Vec::new();
    write_summary_csv(&mut csv, &results)?;
    fs::write(out.join("summary.csv"), csv)?;
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed, results.len()));
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `estimator,annotator,accuracy,n_l,n_u,seed,win_rate,param_error,status`
pub fn write_sweep_csv(runs: &[SweepRun], n_labeled: usize, sharpness: Option<f64>) -> String {
    let mut s = String::from("estimator,annotator,accuracy,n_l,n_u,seed,win_rate,param_error,status\n");
    for r in runs {
        let annotator = match r.accuracy {
            Some(accuracy) => AnnotatorKind::Biased { accuracy, sharpness }.label(),
            None => "none".to_string(),
        };
        let (win_rate, param_error, status) = match &r.outcome {
            Ok(rep) => (rep.win_rate.to_string(), opt_num(rep.param_error), "ok".to_string()),
            Err(e) => (String::new(), String::new(), csv_field(&format!("error: {e}"))),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.estimator,
            annotator,
            opt_num(r.accuracy),
            n_labeled,
            n_labeled * r.unlabeled_multiple,
            r.seed,
            win_rate,
            param_error,
            status
        );
    }
    s
}

/// One plot per annotator accuracy: mean win rate against unlabeled-set
/// size, one line per estimator. Estimators without an annotator appear in
/// every plot.
pub fn win_rate_plots(runs: &[SweepRun], n_labeled: usize, accuracies: &[f64]) -> Vec<(String, LinePlot)> {
    // (estimator, accuracy bits, multiple) -> successful win rates
    let mut cells: BTreeMap<(EstimatorKind, Option<u64>, usize), Vec<f64>> = BTreeMap::new();
    for r in runs {
        if let Ok(rep) = &r.outcome {
            cells
                .entry((r.estimator, r.accuracy.map(f64::to_bits), r.unlabeled_multiple))
                .or_default()
                .push(rep.win_rate);
        }
    }
    let estimators: Vec<EstimatorKind> = {
        let mut e: Vec<_> = runs.iter().map(|r| r.estimator).collect();
        e.sort();
        e.dedup();
        e
    };
    accuracies
        .iter()
        .map(|&acc| {
            let series = estimators
                .iter()
                .map(|&est| {
                    let key_acc = if est.uses_annotator() { Some(acc.to_bits()) } else { None };
                    let points = cells
                        .iter()
                        .filter(|((e, a, _), _)| *e == est && *a == key_acc)
                        .map(|((_, _, m), wrs)| ((n_labeled * m) as f64, wrs.iter().sum::<f64>() / wrs.len() as f64))
                        .collect();
                    Series {
                        name: est.to_string(),
                        points,
                    }
                })
                .collect();
            (
                format!("win_rate_acc{acc}.svg"),
                LinePlot {
                    title: format!("Win rate against the reference, annotator accuracy {acc}"),
                    x_label: "unlabeled pairs".into(),
                    y_label: "mean win rate".into(),
                    log_x: true,
                    log_y: false,
                    series,
                },
            )
        })
        .collect()
}

pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let root = cfg.seed;
    let mut mc = cfg.sweep.matrix.clone();
    mc.seeds = mc.seeds.iter().map(|&s| offset(s, root)).collect();
    mc.reference_seed = offset(mc.reference_seed, root);
    let runs = run_sweep(&mc)?;
    fs::write(out.join("sweep.csv"), write_sweep_csv(&runs, mc.n_labeled, mc.sharpness))?;
    for (file, plot) in win_rate_plots(&runs, mc.n_labeled, &mc.accuracies) {
        fs::write(out.join(file), plot.to_svg())?;
    }
    let failed = runs.iter().filter(|r| r.outcome.is_err()).count();
    println!("sweep: {} runs, {} failed", runs.len(), failed);

    let rc = &cfg.sweep.rate;
    let exp = LinearExperiment {
        seed: offset(rc.seed, root),
        ..LinearExperiment::default()
    };
    let ns: Vec<f64> = rc.sizes.iter().map(|&n| n as f64).collect();
    let mut rate_csv = String::from("estimator,n,param_error,slope\n");
    let mut series = Vec::new();
    for &kind in &cfg.sweep.rate_estimators {
        let errors = exp.error_curve(kind, &rc.sizes, cfg.sweep.rate_error, rc.replicates)?;
        let slope = fit_rate(&ns, &errors)?;
        for (n, e) in rc.sizes.iter().zip(&errors) {
            let _ = writeln!(rate_csv, "{kind},{n},{e},{slope}");
        }
        println!("rate: {kind} slope {slope:.3}");
        series.push(Series {
            name: format!("{kind} ({slope:.2})"),
            points: ns.iter().copied().zip(errors).collect(),
        });
    }
    fs::write(out.join("rate.csv"), rate_csv)?;
    let plot = LinePlot {
        title: format!("Linear model parameter error, injected error {}", cfg.sweep.rate_error),
        x_label: "pairs".into(),
        y_label: "mean squared parameter error".into(),
        log_x: true,
        log_y: true,
        series,
    };
    fs::write(out.join("rate.svg"), plot.to_svg())?;
    if failed > 0 {
        eprintln!("warning: {failed} sweep runs failed; see the status column of sweep.csv");
    }
    Ok(())
}

/// Load a policy written by `train`.
pub fn load_policy(cfg: &ExperimentConfig, path: &Path) -> CliResult<ToyDenoiser> {
    let world = world_of(cfg);
    let file = fs::File::open(path)?;
    let (model, steps) = params::read_params(file, cfg.diffusion.shape(&world))?;
    if steps != cfg.diffusion.schedule_steps {
        return Err(CliError::Config(format!(
            "{} was trained with {steps} diffusion steps, config has {}",
            path.display(),
            cfg.diffusion.schedule_steps
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::RunReport;

    #[test]
    fn out_dir_precedence() {
        let flag = Path::new("a");
        let conf = Path::new("b");
        let env = Some(OsString::from("c"));
        assert_eq!(resolve_out_dir(Some(flag), Some(conf), env.clone()), PathBuf::from("a"));
        assert_eq!(resolve_out_dir(None, Some(conf), env.clone()), PathBuf::from("b"));
        assert_eq!(resolve_out_dir(None, None, env), PathBuf::from("c"));
        assert_eq!(resolve_out_dir(None, None, Some(OsString::new())), PathBuf::from(DEFAULT_OUT_DIR));
        assert_eq!(resolve_out_dir(None, None, None), PathBuf::from(DEFAULT_OUT_DIR));
    }

    #[test]
    fn all_expands_to_every_check_once() {
        assert_eq!(expand(&[CheckName::All, CheckName::Prop2]).len(), 11);
        assert_eq!(expand(&[CheckName::Rate, CheckName::Prop2, CheckName::Rate]), vec![CheckName::Prop2, CheckName::Rate]);
        for c in CheckName::EACH {
            assert_eq!(CheckName::from_str(c.as_str(), false).unwrap(), c);
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::ChecksFailed(1, 2).exit_code(), 1);
        assert_eq!(CliError::Run(crate::Error::EmptyBatch).exit_code(), 1);
        assert_eq!(run(["dedpo", "verify", "--check", "nonsense"]), 2);
        assert_eq!(run(["dedpo", "launch"]), 2);
    }

    fn report(win_rate: f64) -> RunReport {
        RunReport {
            estimator: EstimatorKind::DeDpo,
            annotator: None,
            n_l: 10,
            n_u: 30,
            seed: 0,
            steps: 1,
            final_loss: 0.5,
            loss_trace: vec![0.5],
            eval_trace: vec![(0, win_rate)],
            win_rate,
            param_error: None,
            assumption_flags: vec![],
            wall_time_s: 0.0,
        }
    }

    fn sweep_runs() -> Vec<SweepRun> {
        let mut runs = Vec::new();
        for multiple in [3, 8] {
            for (estimator, accuracy) in [(EstimatorKind::FullLabelDpo, None), (EstimatorKind::DeDpo, Some(0.8))] {
                for seed in 0..2 {
                    let outcome = if seed == 1 && multiple == 8 && accuracy.is_some() {
                        Err("non-finite loss at step 3, oops".to_string())
                    } else {
                        Ok(report(0.6 + 0.01 * seed as f64))
                    };
                    runs.push(SweepRun {
                        estimator,
                        accuracy,
                        unlabeled_multiple: multiple,
                        seed,
                        outcome,
                    });
                }
            }
        }
        runs
    }

    #[test]
    fn sweep_csv_rows_and_status() {
        let csv = write_sweep_csv(&sweep_runs(), 10, Some(0.1));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 9);
        assert_eq!(lines[1], "FullLabelDPO,none,,10,30,0,0.6,,ok");
        assert_eq!(lines[3], "DeDPO,biased0.8,0.8,10,30,0,0.6,,ok");
        assert_eq!(lines[8], "DeDPO,biased0.8,0.8,10,80,1,,,error: non-finite loss at step 3; oops");
        assert!(lines.iter().all(|l| l.split(',').count() == 9));
    }

    #[test]
    fn plots_average_successful_seeds() {
        let plots = win_rate_plots(&sweep_runs(), 10, &[0.8]);
        assert_eq!(plots.len(), 1);
        let (name, plot) = &plots[0];
        assert_eq!(name, "win_rate_acc0.8.svg");
        assert_eq!(plot.series.len(), 2);
        let de = plot.series.iter().find(|s| s.name == "DeDPO").unwrap();
        assert_eq!(de.points.len(), 2);
        assert!((de.points[0].1 - 0.605).abs() < 1e-12);
        assert_eq!(de.points[1], (80.0, 0.6));
    }
}
