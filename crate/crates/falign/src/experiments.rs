//! Experiment drivers: plain training with per-step instrumentation, the
//! lockstep weight-swap experiment, the init-scale sweep, the
//! perturbation-angle sweep with its five-update comparison, and the
//! alignment-forcing initialization comparison.
//!
//! Every driver is a pure function of its config: rerunning a config
//! byte-reproduces the metrics CSV. All randomness flows from the single
//! config seed through labeled streams ("weights", "feedback", "batches",
//! "perturb", ...), so adding instrumentation or reordering construction
//! never shifts a trajectory. Within a run, updates are strictly
//! sequential; independent runs of a sweep may execute in parallel.

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{load_mnist, synthetic_xor, BatchPlan, Dataset, DATA_DIR_ENV};
use crate::error::{Error, Result};
use crate::instrumentation::{
    cross_run_weight_alignment, gradient_alignment, weight_alignment, MetricsRecord,
};
use crate::network::{
    accuracy, cross_entropy, forward, init_weights, Architecture, Network, WeightInit,
};
use crate::numerics::{derive_seed, Rng};
use crate::rules::{
    apply_update, compute_update, FeedbackDistribution, FeedbackSet, RuleKind, UpdateRule,
};

/// Update rule selection as it appears in configs and on the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RuleSpec {
    Bp,
    Fa,
    Dfa,
    PerturbedBp { angle: f64 },
    LastLayerOnly,
}

impl RuleSpec {
    pub fn kind(&self) -> RuleKind {
        match self {
            RuleSpec::Bp => RuleKind::Bp,
            RuleSpec::Fa => RuleKind::Fa,
            RuleSpec::Dfa => RuleKind::Dfa,
            RuleSpec::PerturbedBp { .. } => RuleKind::PerturbedBp,
            RuleSpec::LastLayerOnly => RuleKind::LastLayerOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    NormalScaled,
    SignMatched,
    EqualToFeedback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetChoice {
    Mnist,
    SyntheticXor,
}

/// Full description of one training run. The defaults reproduce the
/// standard setup: 784-700-1000-10 tanh network, softmax/cross-entropy,
/// batch 100, learning rate 0.05, weight scale 0.05, Rademacher feedback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub arch: Vec<usize>,
    pub rule: RuleSpec,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: u32,
    pub weight_scale: f64,
    pub weight_mode: WeightMode,
    pub feedback_dist: FeedbackDistribution,
    pub seed: u64,
    /// Metrics are recorded at step 1, every `cadence` steps, and at the
    /// final step.
    pub cadence: u64,
    /// Test accuracy is evaluated at a record step when the step is a
    /// multiple of this; `None` evaluates at every record step.
    #[serde(default)]
    pub accuracy_cadence: Option<u64>,
    /// Stop after this many update steps even if the epoch budget is not
    /// exhausted (short probe runs).
    #[serde(default)]
    pub max_steps: Option<u64>,
    pub dataset: DatasetChoice,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            arch: vec![784, 700, 1000, 10],
            rule: RuleSpec::Fa,
            learning_rate: 0.05,
            batch_size: 100,
            epochs: 10,
            weight_scale: 0.05,
            weight_mode: WeightMode::NormalScaled,
            feedback_dist: FeedbackDistribution::Rademacher,
            seed: 1,
            cadence: 50,
            accuracy_cadence: None,
            max_steps: None,
            dataset: DatasetChoice::Mnist,
            data_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        Architecture::new(self.arch.clone())?;
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.weight_scale.is_finite() && self.weight_scale >= 0.0) {
            return Err(Error::Config(format!(
                "weight scale must be >= 0, got {}",
                self.weight_scale
            )));
        }
        if self.cadence == 0 {
            return Err(Error::Config("cadence must be at least 1".into()));
        }
        if let RuleSpec::PerturbedBp { angle } = self.rule {
            if !angle.is_finite() || !(0.0..=std::f64::consts::PI).contains(&angle) {
                return Err(Error::Config(format!(
                    "perturbation angle must lie in [0, pi], got {angle}"
                )));
            }
        }
        if self.weight_mode != WeightMode::NormalScaled && self.rule.kind() != RuleKind::Fa {
            return Err(Error::Config(
                "sign-matched / equal-to-feedback weight modes require the FA rule".into(),
            ));
        }
        Ok(())
    }

    fn architecture(&self) -> Result<Architecture> {
        Architecture::new(self.arch.clone())
    }
}

/// Train and test splits, loaded once and shared read-only across runs.
pub struct LoadedData {
    pub train: Dataset,
    pub test: Dataset,
}

/// Resolves and loads the dataset a config asks for. MNIST comes from
/// `data_dir`, falling back to the `FALIGN_DATA_DIR` environment
/// variable; the synthetic set is generated from the config seed.
pub fn load_data(config: &ExperimentConfig) -> Result<LoadedData> {
    match config.dataset {
        DatasetChoice::Mnist => {
            let dir = config
                .data_dir
                .clone()
                .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
                .ok_or_else(|| {
                    Error::Config(format!(
                        "no MNIST directory: pass --data-dir or set {DATA_DIR_ENV} \
                         (expected files: train-images-idx3-ubyte[.gz], ...)"
                    ))
                })?;
            let (train, test) = load_mnist(&dir)?;
            Ok(LoadedData { train, test })
        }
        DatasetChoice::SyntheticXor => {
            let dim = *config.arch.first().unwrap_or(&784);
            let mut trng = Rng::derived(config.seed, "xor-train");
            let mut erng = Rng::derived(config.seed, "xor-test");
            Ok(LoadedData {
                train: synthetic_xor(100, dim, &mut trng)?,
                test: synthetic_xor(100, dim, &mut erng)?,
            })
        }
    }
}

/// Outcome of one run: the full metrics trail plus a summary.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub metrics: Vec<MetricsRecord>,
    /// Test accuracy of the final network (after the last update).
    pub final_test_accuracy: f64,
    /// Per-layer Frobenius norms of the final weights.
    pub final_weight_norms: Vec<f64>,
    pub steps: u64,
    pub wall_secs: f64,
}

/// Test-set accuracy, evaluated in fixed-order chunks.
pub fn evaluate_accuracy(net: &Network, data: &Dataset) -> Result<f64> {
    let chunk = 512usize;
    let n = data.len();
    let mut correct_weighted = 0.0;
    let mut at = 0usize;
    while at < n {
        let end = (at + chunk).min(n);
        let idx: Vec<u32> = (at as u32..end as u32).collect();
        let batch = data.gather(&idx);
        let trace = forward(net, &batch.images)?;
        correct_weighted += accuracy(trace.output(), &batch.labels) * idx.len() as f64;
        at = end;
    }
    Ok(correct_weighted / n as f64)
}

fn check_data(config: &ExperimentConfig, data: &LoadedData) -> Result<()> {
    if config.arch[0] != data.train.input_dim() {
        return Err(Error::Config(format!(
            "architecture input {} does not match dataset dimension {}",
            config.arch[0],
            data.train.input_dim()
        )));
    }
    if *config.arch.last().unwrap() != data.train.num_classes() {
        return Err(Error::Config(format!(
            "architecture output {} does not match {} classes",
            config.arch.last().unwrap(),
            data.train.num_classes()
        )));
    }
    Ok(())
}

/// Builds the rule plus the feedback set the weight init may need.
fn build_rule(config: &ExperimentConfig, arch: &Architecture) -> Result<UpdateRule> {
    let mut frng = Rng::derived(config.seed, "feedback");
    Ok(match config.rule {
        RuleSpec::Bp => UpdateRule::Bp,
        RuleSpec::Fa => UpdateRule::Fa(FeedbackSet::sample_fa(arch, config.feedback_dist, &mut frng)?),
        RuleSpec::Dfa => {
            UpdateRule::Dfa(FeedbackSet::sample_dfa(arch, config.feedback_dist, &mut frng)?)
        }
        RuleSpec::PerturbedBp { angle } => UpdateRule::perturbed_bp(angle)?,
        RuleSpec::LastLayerOnly => UpdateRule::LastLayerOnly,
    })
}

fn build_network(config: &ExperimentConfig, arch: &Architecture, rule: &UpdateRule) -> Result<Network> {
    let mut wrng = Rng::derived(config.seed, "weights");
    let mode = match config.weight_mode {
        WeightMode::NormalScaled => WeightInit::NormalScaled,
        WeightMode::SignMatched => WeightInit::SignMatched(rule.feedback().ok_or_else(|| {
            Error::Config("sign-matched init needs an FA rule with feedback".into())
        })?),
        WeightMode::EqualToFeedback => {
            WeightInit::EqualToFeedback(rule.feedback().ok_or_else(|| {
                Error::Config("equal-to-feedback init needs an FA rule with feedback".into())
            })?)
        }
    };
    init_weights(arch, &mut wrng, config.weight_scale, mode)
}

/// Runs one training configuration against pre-loaded data.
///
/// Metric records describe the pre-update state at each recorded step
/// together with the update about to be applied; `final_test_accuracy`
/// is evaluated after the last update.
pub fn train_with_data(config: &ExperimentConfig, data: &LoadedData) -> Result<RunResult> {
    config.validate()?;
    check_data(config, data)?;
    let started = Instant::now();
    let arch = config.architecture()?;
    let rule = build_rule(config, &arch)?;
    let feedback_checksum = rule.feedback().map(FeedbackSet::checksum);
    let mut net = build_network(config, &arch, &rule)?;
    let mut perturb_rng = Rng::derived(config.seed, "perturb");

    let plan = BatchPlan::new(derive_seed(config.seed, "batches"), config.batch_size)?;
    let steps_per_epoch = plan.steps_per_epoch(data.train.len());
    let mut total = steps_per_epoch * u64::from(config.epochs);
    if let Some(cap) = config.max_steps {
        total = total.min(cap);
    }
    if total == 0 {
        return Err(Error::Config("run would perform zero update steps".into()));
    }

    let mut metrics = Vec::new();
    let mut step = 0u64;
    'epochs: for epoch in 0..config.epochs {
        for batch in plan.batches(&data.train, epoch) {
            step += 1;
            let trace = forward(&net, &batch.images)?;
            let update = compute_update(&rule, &net, &trace, &batch.onehot, &mut perturb_rng)?;

            let record_here = step == 1 || step % config.cadence == 0 || step == total;
            if record_here {
                let eval_acc = match config.accuracy_cadence {
                    None => true,
                    Some(c) => step % c == 0,
                };
                let test_accuracy = if eval_acc {
                    Some(evaluate_accuracy(&net, &data.test)?)
                } else {
                    None
                };
                let ga = if rule.kind() == RuleKind::Bp {
                    vec![]
                } else {
                    gradient_alignment(&net, &trace, &batch.onehot, &update)?
                };
                let wa = match &rule {
                    UpdateRule::Fa(fb) => weight_alignment(&net, fb)?,
                    _ => vec![],
                };
                metrics.push(MetricsRecord {
                    step,
                    epoch,
                    test_accuracy,
                    train_loss: cross_entropy(trace.output(), &batch.onehot)?,
                    ga,
                    wa,
                    ginf: update.inf_norms(),
                });
            }

            net = apply_update(&net, &update, config.learning_rate).map_err(|e| {
                Error::Diverged {
                    step,
                    msg: e.to_string(),
                }
            })?;
            if step == total {
                break 'epochs;
            }
        }
    }

    if let (Some(before), Some(fb)) = (feedback_checksum, rule.feedback()) {
        assert_eq!(
            before,
            fb.checksum(),
            "feedback matrices must never change during training"
        );
    }

    let final_test_accuracy = evaluate_accuracy(&net, &data.test)?;
    Ok(RunResult {
        config: config.clone(),
        metrics,
        final_test_accuracy,
        final_weight_norms: net.weights().iter().map(|w| w.frobenius_norm()).collect(),
        steps: total,
        wall_secs: started.elapsed().as_secs_f64(),
    })
}

/// Loads data and trains. Sweeps share one [`LoadedData`] via
/// [`train_with_data`] instead.
pub fn train(config: &ExperimentConfig) -> Result<RunResult> {
    let data = load_data(config)?;
    train_with_data(config, &data)
}

/// Runs configs in order; with `jobs > 1` the runs execute on a scoped
/// thread pool (each run is an independent trajectory, so results are
/// identical either way and are collected in input order).
pub fn run_many(
    configs: &[ExperimentConfig],
    data: &LoadedData,
    jobs: usize,
) -> Result<Vec<RunResult>> {
    if jobs <= 1 {
        return configs.iter().map(|c| train_with_data(c, data)).collect();
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("could not build thread pool: {e}")))?;
    pool.install(|| {
        configs
            .par_iter()
            .map(|c| train_with_data(c, data))
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwapDirection {
    /// At the swap step the BP network receives the FA network's weights.
    FaToBp,
    /// At the swap step the FA network receives the BP network's weights.
    BpToFa,
}

/// Post-step snapshot of the lockstep pair: both test accuracies and the
/// per-layer alignment between the two weight sets, taken after the
/// step's updates (and after the copy, at the swap step itself).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairRecord {
    pub step: u64,
    pub acc_fa: f64,
    pub acc_bp: f64,
    pub cross_wa: Vec<Option<f64>>,
}

pub fn pair_csv_header(num_layers: usize) -> String {
    let mut cols = vec!["step".to_string(), "acc_fa".to_string(), "acc_bp".to_string()];
    for l in 1..=num_layers {
        cols.push(format!("xwa_l{l}"));
    }
    cols.join(",")
}

impl PairRecord {
    pub fn to_csv_row(&self) -> String {
        let mut cols = vec![
            self.step.to_string(),
            format!("{}", self.acc_fa),
            format!("{}", self.acc_bp),
        ];
        for v in &self.cross_wa {
            cols.push(match v {
                Some(x) => format!("{x}"),
                None => String::new(),
            });
        }
        cols.join(",")
    }
}

#[derive(Debug)]
pub struct SwapOutcome {
    pub fa: RunResult,
    pub bp: RunResult,
    pub pair: Vec<PairRecord>,
    pub swap_step: u64,
    pub direction: SwapDirection,
}

/// Extra accuracy sampling after the swap: every 50 steps for 500 steps,
/// fine enough to see an immediate accuracy drop.
const SWAP_DENSE_WINDOW: u64 = 500;
const SWAP_DENSE_EVERY: u64 = 50;

/// Trains an FA run and a BP run in lockstep from identical initial
/// weights on the identical batch sequence; at `swap_step` the weights
/// are copied in the given direction. Pair records sample cross-run
/// weight alignment and both accuracies at the cadence, densely right
/// after the swap, and at the swap step itself.
pub fn swap_experiment(
    config: &ExperimentConfig,
    swap_step: u64,
    direction: SwapDirection,
    data: &LoadedData,
) -> Result<SwapOutcome> {
    config.validate()?;
    check_data(config, data)?;
    if config.weight_mode != WeightMode::NormalScaled {
        return Err(Error::Config(
            "the swap experiment uses the standard normal-scaled init".into(),
        ));
    }
    let started = Instant::now();
    let arch = config.architecture()?;

    let mut frng = Rng::derived(config.seed, "feedback");
    let fb = FeedbackSet::sample_fa(&arch, config.feedback_dist, &mut frng)?;
    let fb_checksum = fb.checksum();
    let fa_rule = UpdateRule::Fa(fb);
    let bp_rule = UpdateRule::Bp;

    // One draw, two identical networks: same initial conditions.
    let mut wrng = Rng::derived(config.seed, "weights");
    let mut fa_net = init_weights(&arch, &mut wrng, config.weight_scale, WeightInit::NormalScaled)?;
    let mut bp_net = fa_net.clone();

    let plan = BatchPlan::new(derive_seed(config.seed, "batches"), config.batch_size)?;
    let total = plan.steps_per_epoch(data.train.len()) * u64::from(config.epochs);
    if swap_step == 0 || swap_step >= total {
        return Err(Error::Config(format!(
            "swap step {swap_step} outside the run of {total} steps"
        )));
    }

    let mut fa_metrics = Vec::new();
    let mut bp_metrics = Vec::new();
    let mut pair = Vec::new();
    let mut rng_unused = Rng::derived(config.seed, "perturb");

    let is_record = |s: u64| {
        s == 1
            || s % config.cadence == 0
            || s == swap_step
            || s == total
            || (s > swap_step && s <= swap_step + SWAP_DENSE_WINDOW && s % SWAP_DENSE_EVERY == 0)
    };

    let mut step = 0u64;
    'epochs: for epoch in 0..config.epochs {
        for batch in plan.batches(&data.train, epoch) {
            step += 1;
            let record_here = is_record(step);

            let fa_trace = forward(&fa_net, &batch.images)?;
            let fa_update =
                compute_update(&fa_rule, &fa_net, &fa_trace, &batch.onehot, &mut rng_unused)?;
            let bp_trace = forward(&bp_net, &batch.images)?;
            let bp_update =
                compute_update(&bp_rule, &bp_net, &bp_trace, &batch.onehot, &mut rng_unused)?;

            if record_here {
                let fa_fb = fa_rule.feedback().expect("FA rule carries feedback");
                fa_metrics.push(MetricsRecord {
                    step,
                    epoch,
                    test_accuracy: None,
                    train_loss: cross_entropy(fa_trace.output(), &batch.onehot)?,
                    ga: gradient_alignment(&fa_net, &fa_trace, &batch.onehot, &fa_update)?,
                    wa: weight_alignment(&fa_net, fa_fb)?,
                    ginf: fa_update.inf_norms(),
                });
                bp_metrics.push(MetricsRecord {
                    step,
                    epoch,
                    test_accuracy: None,
                    train_loss: cross_entropy(bp_trace.output(), &batch.onehot)?,
                    ga: vec![],
                    wa: vec![],
                    ginf: bp_update.inf_norms(),
                });
            }

            fa_net = apply_update(&fa_net, &fa_update, config.learning_rate)
                .map_err(|e| Error::Diverged { step, msg: e.to_string() })?;
            bp_net = apply_update(&bp_net, &bp_update, config.learning_rate)
                .map_err(|e| Error::Diverged { step, msg: e.to_string() })?;

            if step == swap_step {
                match direction {
                    SwapDirection::FaToBp => bp_net = fa_net.clone(),
                    SwapDirection::BpToFa => fa_net = bp_net.clone(),
                }
            }

            if record_here {
                pair.push(PairRecord {
                    step,
                    acc_fa: evaluate_accuracy(&fa_net, &data.test)?,
                    acc_bp: evaluate_accuracy(&bp_net, &data.test)?,
                    cross_wa: cross_run_weight_alignment(&fa_net, &bp_net)?,
                });
            }

            if step == total {
                break 'epochs;
            }
        }
    }

    assert_eq!(
        fb_checksum,
        fa_rule.feedback().unwrap().checksum(),
        "feedback matrices must never change during training"
    );

    let wall = started.elapsed().as_secs_f64();
    let fa_final = evaluate_accuracy(&fa_net, &data.test)?;
    let bp_final = evaluate_accuracy(&bp_net, &data.test)?;
    let as_result = |metrics: Vec<MetricsRecord>,
                     net: &Network,
                     acc: f64,
                     rule: RuleSpec|
     -> RunResult {
        let mut cfg = config.clone();
        cfg.rule = rule;
        RunResult {
            config: cfg,
            metrics,
            final_test_accuracy: acc,
            final_weight_norms: net.weights().iter().map(|w| w.frobenius_norm()).collect(),
            steps: total,
            wall_secs: wall,
        }
    };
    Ok(SwapOutcome {
        fa: as_result(fa_metrics, &fa_net, fa_final, RuleSpec::Fa),
        bp: as_result(bp_metrics, &bp_net, bp_final, RuleSpec::Bp),
        pair,
        swap_step,
        direction,
    })
}

/// One run per scale, identical seed everywhere else. The step-1 record
/// of each run carries the first-step per-layer gradient infinity norms.
pub fn init_scale_sweep(
    config: &ExperimentConfig,
    scales: &[f64],
    data: &LoadedData,
    jobs: usize,
) -> Result<Vec<RunResult>> {
    let configs: Vec<ExperimentConfig> = scales
        .iter()
        .map(|&s| {
            let mut c = config.clone();
            c.weight_scale = s;
            c
        })
        .collect();
    run_many(&configs, data, jobs)
}

/// Results of the perturbation-angle sweep: per angle, `repetitions`
/// one-epoch perturbed-backprop runs, plus the last-layer-only baseline
/// runs at the same seeds.
#[derive(Debug)]
pub struct AngleSweepOutcome {
    pub angles: Vec<f64>,
    /// `perturbed[a][r]` is repetition `r` at `angles[a]`.
    pub perturbed: Vec<Vec<RunResult>>,
    pub lastlayer: Vec<RunResult>,
}

impl AngleSweepOutcome {
    pub fn mean_accuracy_at(&self, angle_idx: usize) -> f64 {
        mean(self.perturbed[angle_idx].iter().map(|r| r.final_test_accuracy))
    }

    pub fn lastlayer_mean_accuracy(&self) -> f64 {
        mean(self.lastlayer.iter().map(|r| r.final_test_accuracy))
    }
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v;
        n += 1;
    }
    sum / n as f64
}

fn rep_config(base: &ExperimentConfig, rep: usize) -> ExperimentConfig {
    let mut c = base.clone();
    c.seed = derive_seed(base.seed, &format!("rep-{rep}"));
    c
}

/// Perturbed-backprop accuracy as a function of the imposed angle, with
/// the last-layer-only baseline at matching seeds and step counts.
pub fn angle_sweep(
    config: &ExperimentConfig,
    angles: &[f64],
    repetitions: usize,
    data: &LoadedData,
    jobs: usize,
) -> Result<AngleSweepOutcome> {
    if repetitions == 0 {
        return Err(Error::Config("angle sweep needs at least one repetition".into()));
    }
    let mut configs = Vec::new();
    for &angle in angles {
        for r in 0..repetitions {
            let mut c = rep_config(config, r);
            c.rule = RuleSpec::PerturbedBp { angle };
            c.weight_mode = WeightMode::NormalScaled;
            configs.push(c);
        }
    }
    for r in 0..repetitions {
        let mut c = rep_config(config, r);
        c.rule = RuleSpec::LastLayerOnly;
        c.weight_mode = WeightMode::NormalScaled;
        configs.push(c);
    }
    let mut results = run_many(&configs, data, jobs)?;
    let lastlayer = results.split_off(angles.len() * repetitions);
    let mut perturbed = Vec::with_capacity(angles.len());
    for chunk in results.chunks(repetitions) {
        perturbed.push(chunk.to_vec());
    }
    Ok(AngleSweepOutcome {
        angles: angles.to_vec(),
        perturbed,
        lastlayer,
    })
}

/// FA against perturbed BP at matched alignment, a few updates into
/// training: per repetition, a fresh FA network runs `probe_steps`
/// updates while its per-layer gradient alignment is recorded; perturbed
/// BP then runs at the angle whose cosine equals FA's mean alignment of
/// the input (and separately the hidden) layer; last-layer-only runs as
/// the floor.
#[derive(Debug)]
pub struct FiveUpdateOutcome {
    pub fa: Vec<RunResult>,
    /// Mean FA gradient alignment over the probe steps, per repetition,
    /// for layers 1 and 2 (input and hidden).
    pub fa_mean_ga: Vec<[f64; 2]>,
    pub lastlayer: Vec<RunResult>,
    pub matched_angle_input: f64,
    pub matched_angle_hidden: f64,
    pub pbp_input_matched: Vec<RunResult>,
    pub pbp_hidden_matched: Vec<RunResult>,
}

pub fn five_update_comparison(
    config: &ExperimentConfig,
    repetitions: usize,
    probe_steps: u64,
    data: &LoadedData,
    jobs: usize,
) -> Result<FiveUpdateOutcome> {
    if repetitions == 0 || probe_steps == 0 {
        return Err(Error::Config("comparison needs repetitions and steps".into()));
    }
    let probe = |rule: RuleSpec, rep: usize| -> ExperimentConfig {
        let mut c = rep_config(config, rep);
        c.rule = rule;
        c.weight_mode = WeightMode::NormalScaled;
        c.epochs = 1;
        c.max_steps = Some(probe_steps);
        c.cadence = 1;
        // Accuracy only when the probe ends; the final evaluation covers it.
        c.accuracy_cadence = Some(u64::MAX);
        c
    };

    let fa_configs: Vec<ExperimentConfig> =
        (0..repetitions).map(|r| probe(RuleSpec::Fa, r)).collect();
    let fa = run_many(&fa_configs, data, jobs)?;

    let fa_mean_ga: Vec<[f64; 2]> = fa
        .iter()
        .map(|run| {
            let mut sums = [0.0f64; 2];
            let mut counts = [0usize; 2];
            for rec in &run.metrics {
                for l in 0..2 {
                    if let Some(Some(v)) = rec.ga.get(l) {
                        sums[l] += v;
                        counts[l] += 1;
                    }
                }
            }
            [sums[0] / counts[0].max(1) as f64, sums[1] / counts[1].max(1) as f64]
        })
        .collect();

    let matched_angle_input =
        mean(fa_mean_ga.iter().map(|g| g[0])).clamp(-1.0, 1.0).acos();
    let matched_angle_hidden =
        mean(fa_mean_ga.iter().map(|g| g[1])).clamp(-1.0, 1.0).acos();

    let pbp_input_configs: Vec<ExperimentConfig> = (0..repetitions)
        .map(|r| probe(RuleSpec::PerturbedBp { angle: matched_angle_input }, r))
        .collect();
    let pbp_hidden_configs: Vec<ExperimentConfig> = (0..repetitions)
        .map(|r| probe(RuleSpec::PerturbedBp { angle: matched_angle_hidden }, r))
        .collect();
    let llo_configs: Vec<ExperimentConfig> = (0..repetitions)
        .map(|r| probe(RuleSpec::LastLayerOnly, r))
        .collect();

    Ok(FiveUpdateOutcome {
        fa,
        fa_mean_ga,
        lastlayer: run_many(&llo_configs, data, jobs)?,
        matched_angle_input,
        matched_angle_hidden,
        pbp_input_matched: run_many(&pbp_input_configs, data, jobs)?,
        pbp_hidden_matched: run_many(&pbp_hidden_configs, data, jobs)?,
    })
}

/// The three alignment-forcing runs: random init, sign-matched init, and
/// weights equal to the feedback matrices — identical otherwise, with
/// normally distributed feedback so the three initial weight sets are
/// statistically indistinguishable.
pub fn alignment_forcing_experiment(
    config: &ExperimentConfig,
    data: &LoadedData,
    jobs: usize,
) -> Result<[RunResult; 3]> {
    let mut base = config.clone();
    base.rule = RuleSpec::Fa;
    base.feedback_dist = FeedbackDistribution::Normal;
    let configs: Vec<ExperimentConfig> = [
        WeightMode::NormalScaled,
        WeightMode::SignMatched,
        WeightMode::EqualToFeedback,
    ]
    .into_iter()
    .map(|mode| {
        let mut c = base.clone();
        c.weight_mode = mode;
        c
    })
    .collect();
    let mut results = run_many(&configs, data, jobs)?;
    let equal = results.pop().unwrap();
    let sign = results.pop().unwrap();
    let random = results.pop().unwrap();
    Ok([random, sign, equal])
}
