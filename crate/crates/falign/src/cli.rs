//! Command-line front end: flag parsing with a key=value config-file
//! layer underneath (precedence: flag > config file > built-in default),
//! experiment dispatch, and CSV/manifest output management.
//!
//! Exit codes: 0 success, 1 runtime failure (missing data, numeric
//! blow-up, I/O), 2 usage error (unknown flag, out-of-range value).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::experiments::{
    alignment_forcing_experiment, angle_sweep, five_update_comparison, init_scale_sweep, load_data,
    mean, pair_csv_header, swap_experiment, train_with_data, DatasetChoice, ExperimentConfig,
    RuleSpec, RunResult, SwapDirection, WeightMode,
};
use crate::instrumentation::{write_csv, write_jsonl};
use crate::rules::{finite_difference_max_rel_error, FeedbackDistribution};

#[derive(Parser)]
#[command(
    name = "falign",
    version,
    about = "Training laboratory for feedback-alignment learning rules on dense MLPs",
    after_help = "Each experimental procedure maps to exactly one subcommand: `train` runs a \
single instrumented training run, `swap` trains an FA/BP pair in lockstep and transplants \
weights between them, `sweep-init` scans initial weight scales, `sweep-angle` scans imposed \
gradient angles against the last-layer-only baseline (plus the five-update FA comparison), and \
`forcing` compares random, sign-matched and feedback-equal initializations."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One training run with the chosen update rule, logging metrics at
    /// the cadence.
    Train(RunArgs),
    /// FA and BP trained in lockstep on identical batches; at the swap
    /// step one network receives the other's weights.
    Swap(SwapArgs),
    /// One run per initial weight scale, identical seeds; records
    /// first-step gradient norms and the accuracy trajectory.
    SweepInit(SweepInitArgs),
    /// Perturbed-backprop runs across gradient angles with the
    /// last-layer-only baseline, plus the five-update FA comparison at
    /// matched alignment.
    SweepAngle(SweepAngleArgs),
    /// Three FA runs differing only in weight init: random, sign-matched
    /// to the feedback, equal to the feedback (normal feedback entries).
    Forcing(RunArgs),
    /// Verify backprop against central finite differences on a small
    /// network; exits 0 iff the max relative error is below 1e-5.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RuleArg {
    Bp,
    Fa,
    Dfa,
    Perturbed,
    Lastlayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WeightModeArg {
    Normal,
    SignMatched,
    EqualFeedback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FeedbackDistArg {
    Rademacher,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DatasetArg {
    Mnist,
    SyntheticXor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DirectionArg {
    FaToBp,
    BpToFa,
}

#[derive(Args)]
struct RunArgs {
    /// Update rule.
    #[arg(long, value_enum)]
    rule: Option<RuleArg>,
    /// Perturbation angle in radians (rule `perturbed` only).
    #[arg(long, allow_negative_numbers = true)]
    angle: Option<f64>,
    #[arg(long)]
    epochs: Option<u32>,
    /// Learning rate.
    #[arg(long, allow_negative_numbers = true)]
    lr: Option<f64>,
    /// Batch size.
    #[arg(long)]
    batch: Option<usize>,
    /// Initial weight scale.
    #[arg(long, allow_negative_numbers = true)]
    scale: Option<f64>,
    #[arg(long, value_enum)]
    weight_mode: Option<WeightModeArg>,
    #[arg(long, value_enum)]
    feedback_dist: Option<FeedbackDistArg>,
    /// Master seed; every random stream is derived from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Record metrics every this many update steps.
    #[arg(long)]
    cadence: Option<u64>,
    /// Directory with the MNIST IDX files (else $FALIGN_DATA_DIR).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Output directory for CSV and manifest files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel fan-out for sweeps (1 = fully sequential).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_enum)]
    dataset: Option<DatasetArg>,
    /// key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long, default_value_t = false)]
    dry_run: bool,
}

#[derive(Args)]
struct SwapArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Update step at which the weights are transplanted.
    #[arg(long)]
    swap_step: Option<u64>,
    #[arg(long, value_enum)]
    direction: Option<DirectionArg>,
}

#[derive(Args)]
struct SweepInitArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated weight scales.
    #[arg(long)]
    scales: Option<String>,
}

#[derive(Args)]
struct SweepAngleArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated angles in radians.
    #[arg(long)]
    angles: Option<String>,
    /// Repetitions per angle.
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Plain-text key=value configuration file. Keys mirror the long flag
/// names without the leading dashes; `#` starts a comment.
struct FileConfig(HashMap<String, String>);

impl FileConfig {
    fn load(path: Option<&Path>) -> CliResult<FileConfig> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config file {}: {e}", path.display())))?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    usage(format!(
                        "{}:{}: expected key=value, got {raw:?}",
                        path.display(),
                        lineno + 1
                    ))
                })?;
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(FileConfig(map))
    }

    fn parsed<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| usage(format!("config key {key}={raw:?}: {e}"))),
        }
    }

    fn value_enum<T: ValueEnum>(&self, key: &str) -> CliResult<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => T::from_str(raw, true)
                .map(Some)
                .map_err(|e| usage(format!("config key {key}={raw:?}: {e}"))),
        }
    }
}

struct OutputOptions {
    out_dir: PathBuf,
    jobs: usize,
    dry_run: bool,
}

fn resolve(args: &RunArgs) -> CliResult<(ExperimentConfig, OutputOptions)> {
    let file = FileConfig::load(args.config.as_deref())?;
    let defaults = ExperimentConfig::default();

    let rule_arg = args
        .rule
        .or(file.value_enum::<RuleArg>("rule")?)
        .unwrap_or(RuleArg::Fa);
    let angle = match args.angle {
        Some(a) => Some(a),
        None => file.parsed::<f64>("angle")?,
    };
    let rule = match (rule_arg, angle) {
        (RuleArg::Perturbed, Some(angle)) => RuleSpec::PerturbedBp { angle },
        (RuleArg::Perturbed, None) => {
            return Err(usage("--rule perturbed requires --angle"));
        }
        (other, Some(_)) => {
            return Err(usage(format!(
                "--angle only applies to --rule perturbed (got {other:?})"
            )));
        }
        (RuleArg::Bp, None) => RuleSpec::Bp,
        (RuleArg::Fa, None) => RuleSpec::Fa,
        (RuleArg::Dfa, None) => RuleSpec::Dfa,
        (RuleArg::Lastlayer, None) => RuleSpec::LastLayerOnly,
    };

    let dataset = match args.dataset.or(file.value_enum::<DatasetArg>("dataset")?) {
        None => defaults.dataset,
        Some(DatasetArg::Mnist) => DatasetChoice::Mnist,
        Some(DatasetArg::SyntheticXor) => DatasetChoice::SyntheticXor,
    };
    let config = ExperimentConfig {
        // The architecture follows the dataset: the standard MNIST
        // network, or a small two-class net for the synthetic task.
        arch: match dataset {
            DatasetChoice::Mnist => defaults.arch.clone(),
            DatasetChoice::SyntheticXor => vec![784, 8, 8, 2],
        },
        rule,
        learning_rate: args
            .lr
            .or(file.parsed("lr")?)
            .unwrap_or(defaults.learning_rate),
        batch_size: args
            .batch
            .or(file.parsed("batch")?)
            .unwrap_or(defaults.batch_size),
        epochs: args
            .epochs
            .or(file.parsed("epochs")?)
            .unwrap_or(defaults.epochs),
        weight_scale: args
            .scale
            .or(file.parsed("scale")?)
            .unwrap_or(defaults.weight_scale),
        weight_mode: match args
            .weight_mode
            .or(file.value_enum::<WeightModeArg>("weight-mode")?)
        {
            None => defaults.weight_mode,
            Some(WeightModeArg::Normal) => WeightMode::NormalScaled,
            Some(WeightModeArg::SignMatched) => WeightMode::SignMatched,
            Some(WeightModeArg::EqualFeedback) => WeightMode::EqualToFeedback,
        },
        feedback_dist: match args
            .feedback_dist
            .or(file.value_enum::<FeedbackDistArg>("feedback-dist")?)
        {
            None => defaults.feedback_dist,
            Some(FeedbackDistArg::Rademacher) => FeedbackDistribution::Rademacher,
            Some(FeedbackDistArg::Normal) => FeedbackDistribution::Normal,
        },
        seed: args.seed.or(file.parsed("seed")?).unwrap_or(defaults.seed),
        cadence: args
            .cadence
            .or(file.parsed("cadence")?)
            .unwrap_or(defaults.cadence),
        accuracy_cadence: None,
        max_steps: None,
        dataset,
        data_dir: args
            .data_dir
            .clone()
            .or(file.parsed::<PathBuf>("data-dir")?),
    };
    config.validate().map_err(|e| usage(e.to_string()))?;

    let out = OutputOptions {
        out_dir: args
            .out
            .clone()
            .or(file.parsed::<PathBuf>("out")?)
            .unwrap_or_else(|| PathBuf::from("falign-out")),
        jobs: args.jobs.or(file.parsed("jobs")?).unwrap_or(1).max(1),
        dry_run: args.dry_run,
    };
    Ok((config, out))
}

fn build_id() -> String {
    format!(
        "falign-{}{}",
        env!("CARGO_PKG_VERSION"),
        option_env!("FALIGN_BUILD_ID")
            .map(|id| format!("+{id}"))
            .unwrap_or_default()
    )
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_run(dir: &Path, name: &str, run: &RunResult, jsonl: bool) -> Result<Vec<String>, Error> {
    let layers = run.config.arch.len() - 1;
    let csv = format!("{name}.csv");
    write_csv(&dir.join(&csv), layers, &run.metrics)?;
    let mut outputs = vec![csv];
    if jsonl {
        let jl = format!("{name}.jsonl");
        write_jsonl(&dir.join(&jl), &run.metrics)?;
        outputs.push(jl);
    }
    Ok(outputs)
}

fn run_summary(run: &RunResult) -> serde_json::Value {
    serde_json::json!({
        "config": run.config,
        "final_test_accuracy": run.final_test_accuracy,
        "final_weight_norms": run.final_weight_norms,
        "steps": run.steps,
        "wall_secs": run.wall_secs,
        "metrics_rows": run.metrics.len(),
    })
}

fn write_manifest(
    dir: &Path,
    subcommand: &str,
    seed: u64,
    outputs: &[String],
    body: serde_json::Value,
) -> Result<(), Error> {
    let manifest = serde_json::json!({
        "subcommand": subcommand,
        "seed": seed,
        "build": build_id(),
        "outputs": outputs,
        "runs": body,
    });
    let path = dir.join(format!("{subcommand}.manifest.json"));
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialization");
    write_text(&path, &text)
}

fn prepare_out_dir(out: &OutputOptions) -> Result<(), Error> {
    std::fs::create_dir_all(&out.out_dir).map_err(|e| io_err(&out.out_dir, e))
}

fn print_dry_run(config: &ExperimentConfig) {
    println!(
        "{}",
        serde_json::to_string_pretty(config).expect("config serialization")
    );
}

fn cmd_train(args: &RunArgs) -> CliResult<()> {
    let (config, out) = resolve(args)?;
    if out.dry_run {
        print_dry_run(&config);
        return Ok(());
    }
    prepare_out_dir(&out).map_err(Failure::Runtime)?;
    let data = load_data(&config)?;
    let run = train_with_data(&config, &data)?;
    let outputs = write_run(&out.out_dir, "train", &run, true)?;
    write_manifest(&out.out_dir, "train", config.seed, &outputs, run_summary(&run))?;
    println!(
        "train: rule {} | {} steps | final test accuracy {:.4}",
        run.config.rule.kind(),
        run.steps,
        run.final_test_accuracy
    );
    Ok(())
}

fn cmd_swap(args: &SwapArgs) -> CliResult<()> {
    let (mut config, out) = resolve(&args.run)?;
    // The swap protocol needs enough epochs to reach the default swap
    // step; 50 epochs of 600 steps put step 25000 within reach.
    if args.run.epochs.is_none() {
        config.epochs = 50;
    }
    let file = FileConfig::load(args.run.config.as_deref())?;
    let swap_step = match args.swap_step {
        Some(s) => s,
        None => file.parsed("swap-step")?.unwrap_or(25_000),
    };
    let direction = match args
        .direction
        .or(file.value_enum::<DirectionArg>("direction")?)
        .unwrap_or(DirectionArg::FaToBp)
    {
        DirectionArg::FaToBp => SwapDirection::FaToBp,
        DirectionArg::BpToFa => SwapDirection::BpToFa,
    };
    if out.dry_run {
        print_dry_run(&config);
        return Ok(());
    }
    prepare_out_dir(&out).map_err(Failure::Runtime)?;
    let data = load_data(&config)?;
    let outcome = swap_experiment(&config, swap_step, direction, &data)?;

    let mut outputs = write_run(&out.out_dir, "swap_fa", &outcome.fa, false)?;
    outputs.extend(write_run(&out.out_dir, "swap_bp", &outcome.bp, false)?);
    let layers = config.arch.len() - 1;
    let mut pair_csv = pair_csv_header(layers);
    pair_csv.push('\n');
    for rec in &outcome.pair {
        pair_csv.push_str(&rec.to_csv_row());
        pair_csv.push('\n');
    }
    write_text(&out.out_dir.join("swap_pair.csv"), &pair_csv)?;
    outputs.push("swap_pair.csv".into());
    write_manifest(
        &out.out_dir,
        "swap",
        config.seed,
        &outputs,
        serde_json::json!({
            "direction": outcome.direction,
            "swap_step": outcome.swap_step,
            "fa": run_summary(&outcome.fa),
            "bp": run_summary(&outcome.bp),
        }),
    )?;
    println!(
        "swap: {:?} at step {} | final accuracy fa {:.4} bp {:.4}",
        outcome.direction, outcome.swap_step, outcome.fa.final_test_accuracy,
        outcome.bp.final_test_accuracy
    );
    Ok(())
}

fn parse_float_list(raw: &str, what: &str) -> CliResult<Vec<f64>> {
    let vals: Result<Vec<f64>, _> = raw
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect();
    let vals = vals.map_err(|e| usage(format!("bad {what} list {raw:?}: {e}")))?;
    if vals.is_empty() {
        return Err(usage(format!("{what} list is empty")));
    }
    Ok(vals)
}

fn scale_label(v: f64) -> String {
    format!("{v}").replace('.', "p")
}

fn cmd_sweep_init(args: &SweepInitArgs) -> CliResult<()> {
    let (config, out) = resolve(&args.run)?;
    let file = FileConfig::load(args.run.config.as_deref())?;
    let raw = match &args.scales {
        Some(s) => s.clone(),
        None => file
            .parsed::<String>("scales")?
            .unwrap_or_else(|| "0,0.05,0.1,0.25,0.5,1,2".to_string()),
    };
    let scales = parse_float_list(&raw, "scale")?;
    if scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(usage(format!("scales must be >= 0, got {raw:?}")));
    }
    if out.dry_run {
        print_dry_run(&config);
        return Ok(());
    }
    prepare_out_dir(&out).map_err(Failure::Runtime)?;
    let data = load_data(&config)?;
    let runs = init_scale_sweep(&config, &scales, &data, out.jobs)?;

    let mut outputs = Vec::new();
    let mut summary = String::from("scale,final_test_accuracy,ginf1_l1,ginf1_l2,ginf1_l3\n");
    for (scale, run) in scales.iter().zip(&runs) {
        outputs.extend(write_run(
            &out.out_dir,
            &format!("scale_{}", scale_label(*scale)),
            run,
            false,
        )?);
        let first = &run.metrics[0];
        let _ = write!(summary, "{scale},{}", run.final_test_accuracy);
        for g in &first.ginf {
            let _ = write!(summary, ",{g}");
        }
        summary.push('\n');
    }
    write_text(&out.out_dir.join("sweep_init_summary.csv"), &summary)?;
    outputs.push("sweep_init_summary.csv".into());
    write_manifest(
        &out.out_dir,
        "sweep-init",
        config.seed,
        &outputs,
        serde_json::Value::Array(runs.iter().map(run_summary).collect()),
    )?;
    println!("sweep-init: {} scales done", scales.len());
    Ok(())
}

fn cmd_sweep_angle(args: &SweepAngleArgs) -> CliResult<()> {
    let (mut config, out) = resolve(&args.run)?;
    let file = FileConfig::load(args.run.config.as_deref())?;
    let raw = match &args.angles {
        Some(s) => s.clone(),
        None => file
            .parsed::<String>("angles")?
            .unwrap_or_else(|| "0,0.5236,1.0472,1.5708,2.0944,2.618,3.1416".to_string()),
    };
    let angles = parse_float_list(&raw, "angle")?;
    if angles
        .iter()
        .any(|a| !a.is_finite() || !(0.0..=std::f64::consts::PI).contains(a))
    {
        return Err(usage(format!("angles must lie in [0, pi], got {raw:?}")));
    }
    let reps = match args.reps {
        Some(r) => r,
        None => file.parsed("reps")?.unwrap_or(500),
    };
    if reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }
    // The sweep compares accuracy after exactly one epoch.
    if args.run.epochs.is_none() {
        config.epochs = 1;
    }
    if out.dry_run {
        print_dry_run(&config);
        return Ok(());
    }
    prepare_out_dir(&out).map_err(Failure::Runtime)?;
    let data = load_data(&config)?;

    let sweep = angle_sweep(&config, &angles, reps, &data, out.jobs)?;
    let mut outputs = Vec::new();
    let mut summary = String::from("angle,rep,final_test_accuracy\n");
    for (ai, angle) in angles.iter().enumerate() {
        for (r, run) in sweep.perturbed[ai].iter().enumerate() {
            outputs.extend(write_run(
                &out.out_dir,
                &format!("angle_{}_rep{r}", scale_label(*angle)),
                run,
                false,
            )?);
            let _ = writeln!(summary, "{angle},{r},{}", run.final_test_accuracy);
        }
    }
    for (r, run) in sweep.lastlayer.iter().enumerate() {
        outputs.extend(write_run(&out.out_dir, &format!("lastlayer_rep{r}"), run, false)?);
        let _ = writeln!(summary, "lastlayer,{r},{}", run.final_test_accuracy);
    }
    write_text(&out.out_dir.join("sweep_angle_summary.csv"), &summary)?;
    outputs.push("sweep_angle_summary.csv".into());

    let five = five_update_comparison(&config, reps, 5, &data, out.jobs)?;
    let mut fcsv = String::from(
        "rep,fa_accuracy,fa_mean_ga_l1,fa_mean_ga_l2,pbp_input_matched_accuracy,\
         pbp_hidden_matched_accuracy,lastlayer_accuracy\n",
    );
    for r in 0..reps {
        let _ = writeln!(
            fcsv,
            "{r},{},{},{},{},{},{}",
            five.fa[r].final_test_accuracy,
            five.fa_mean_ga[r][0],
            five.fa_mean_ga[r][1],
            five.pbp_input_matched[r].final_test_accuracy,
            five.pbp_hidden_matched[r].final_test_accuracy,
            five.lastlayer[r].final_test_accuracy,
        );
    }
    write_text(&out.out_dir.join("five_update.csv"), &fcsv)?;
    outputs.push("five_update.csv".into());

    write_manifest(
        &out.out_dir,
        "sweep-angle",
        config.seed,
        &outputs,
        serde_json::json!({
            "angles": angles,
            "repetitions": reps,
            "lastlayer_mean_accuracy": sweep.lastlayer_mean_accuracy(),
            "perturbed_mean_accuracy": (0..angles.len())
                .map(|i| sweep.mean_accuracy_at(i))
                .collect::<Vec<f64>>(),
            "five_update": {
                "matched_angle_input": five.matched_angle_input,
                "matched_angle_hidden": five.matched_angle_hidden,
                "fa_mean_accuracy": mean(five.fa.iter().map(|r| r.final_test_accuracy)),
                "pbp_input_mean_accuracy":
                    mean(five.pbp_input_matched.iter().map(|r| r.final_test_accuracy)),
                "pbp_hidden_mean_accuracy":
                    mean(five.pbp_hidden_matched.iter().map(|r| r.final_test_accuracy)),
                "lastlayer_mean_accuracy":
                    mean(five.lastlayer.iter().map(|r| r.final_test_accuracy)),
            },
        }),
    )?;
    println!(
        "sweep-angle: {} angles x {} reps done (baseline mean {:.4})",
        angles.len(),
        reps,
        sweep.lastlayer_mean_accuracy()
    );
    Ok(())
}

fn cmd_forcing(args: &RunArgs) -> CliResult<()> {
    let (mut config, out) = resolve(args)?;
    config.rule = RuleSpec::Fa;
    config.feedback_dist = FeedbackDistribution::Normal;
    if out.dry_run {
        print_dry_run(&config);
        return Ok(());
    }
    prepare_out_dir(&out).map_err(Failure::Runtime)?;
    let data = load_data(&config)?;
    let [random, sign, equal] = alignment_forcing_experiment(&config, &data, out.jobs)?;
    let mut outputs = write_run(&out.out_dir, "forcing_random", &random, false)?;
    outputs.extend(write_run(&out.out_dir, "forcing_sign_matched", &sign, false)?);
    outputs.extend(write_run(&out.out_dir, "forcing_equal_feedback", &equal, false)?);
    write_manifest(
        &out.out_dir,
        "forcing",
        config.seed,
        &outputs,
        serde_json::json!({
            "random": run_summary(&random),
            "sign_matched": run_summary(&sign),
            "equal_feedback": run_summary(&equal),
        }),
    )?;
    println!(
        "forcing: final accuracies random {:.4} | sign-matched {:.4} | equal-feedback {:.4}",
        random.final_test_accuracy, sign.final_test_accuracy, equal.final_test_accuracy
    );
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs) -> CliResult<i32> {
    let base = args.seed.unwrap_or(0);
    let mut worst = 0.0f64;
    for offset in 0..5 {
        worst = worst.max(finite_difference_max_rel_error(base + offset)?);
    }
    println!("gradcheck max relative error: {worst:e}");
    Ok(if worst < 1e-5 { 0 } else { 1 })
}

fn execute(cli: Cli) -> CliResult<i32> {
    match &cli.command {
        Command::Train(args) => cmd_train(args).map(|()| 0),
        Command::Swap(args) => cmd_swap(args).map(|()| 0),
        Command::SweepInit(args) => cmd_sweep_init(args).map(|()| 0),
        Command::SweepAngle(args) => cmd_sweep_angle(args).map(|()| 0),
        Command::Forcing(args) => cmd_forcing(args).map(|()| 0),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    }
}

/// Entry point used by the `falign` binary; returns the process exit code.
pub fn main() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version land here with a zero exit.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}
