//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! Oracles used here (finite differences, scalar loops) are implemented
//! inside this file, independent of the library's own computation paths.
//! MNIST-backed criteria resolve the data directory through
//! FALIGN_DATA_DIR, falling back to the repository's `data/mnist`.

use std::path::PathBuf;
use std::sync::LazyLock;
use std::time::Instant;

use falign::experiments::{
    alignment_forcing_experiment, angle_sweep, evaluate_accuracy, five_update_comparison,
    init_scale_sweep, load_data, mean, swap_experiment, train_with_data, DatasetChoice,
    ExperimentConfig, LoadedData, RuleSpec, SwapDirection,
};
use falign::instrumentation::{alignment, write_csv};
use falign::network::{
    cross_entropy, forward, init_weights, one_hot, Architecture, Network, WeightInit,
    softmax_jacobian_peak,
};
use falign::numerics::{sample_normal, Matrix, Rng};
use falign::rules::{
    backprop, compute_update, fa_pseudogradient, perturb_gradient, FeedbackDistribution,
    FeedbackKind, FeedbackSet, UpdateRule,
};

/// Prints the criterion verdict even when the test panics mid-assert.
struct Criterion {
    id: &'static str,
    done: bool,
}

impl Criterion {
    fn start(id: &'static str) -> Criterion {
        Criterion { id, done: false }
    }

    fn pass(mut self) {
        self.done = true;
        println!("criterion {}: PASS", self.id);
    }
}

impl Drop for Criterion {
    fn drop(&mut self) {
        if !self.done {
            println!("criterion {}: FAIL", self.id);
        }
    }
}

fn data_dir() -> PathBuf {
    std::env::var_os("FALIGN_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR"))
                .join("../..")
                .join("data/mnist")
        })
}

/// MNIST loaded once, shared read-only by every criterion in this binary.
static MNIST: LazyLock<LoadedData> = LazyLock::new(|| {
    let mut config = ExperimentConfig::default();
    config.data_dir = Some(data_dir());
    load_data(&config).expect("MNIST files present (data/mnist or FALIGN_DATA_DIR)")
});

fn standard_config() -> ExperimentConfig {
    ExperimentConfig {
        data_dir: Some(data_dir()),
        ..ExperimentConfig::default()
    }
}

fn random_problem(
    sizes: &[usize],
    batch: usize,
    seed: u64,
) -> (Network, Matrix, Matrix, Vec<u8>) {
    let arch = Architecture::new(sizes.to_vec()).unwrap();
    let mut wrng = Rng::derived(seed, "acc-weights");
    let net = init_weights(&arch, &mut wrng, 0.7, WeightInit::NormalScaled).unwrap();
    let mut drng = Rng::derived(seed, "acc-data");
    let x = sample_normal(&mut drng, sizes[0], batch);
    let classes = *sizes.last().unwrap();
    let labels: Vec<u8> = (0..batch).map(|i| ((i + seed as usize) % classes) as u8).collect();
    let y = one_hot(&labels, classes);
    (net, x, y, labels)
}

// --------------------------------------------------------------------
// Criterion 1: backprop matches central finite differences.
// --------------------------------------------------------------------

#[test]
fn criterion_01_gradient_oracle() {
    let c = Criterion::start("01 gradient-vs-finite-differences");
    let started = Instant::now();
    let h = 1e-5;
    for seed in 1..=5u64 {
        let (net, x, y, _) = random_problem(&[4, 3, 2], 2, seed);
        let trace = forward(&net, &x).unwrap();
        let analytic = backprop(&net, &trace, &y).unwrap();
        for l in 0..net.arch().num_layers() {
            let (rows, cols) = net.weights()[l].shape();
            for i in 0..rows {
                for j in 0..cols {
                    // Independent oracle: bump one weight, re-evaluate the loss.
                    let loss_at = |delta: f64| {
                        let ws: Vec<Matrix> = net
                            .weights()
                            .iter()
                            .enumerate()
                            .map(|(k, w)| {
                                if k == l {
                                    Matrix::from_fn(rows, cols, |r, c| {
                                        w.get(r, c) + if r == i && c == j { delta } else { 0.0 }
                                    })
                                } else {
                                    w.clone()
                                }
                            })
                            .collect();
                        let bumped = Network::new(net.arch().clone(), ws).unwrap();
                        cross_entropy(forward(&bumped, &x).unwrap().output(), &y).unwrap()
                    };
                    let numeric = (loss_at(h) - loss_at(-h)) / (2.0 * h);
                    let a = analytic.layers()[l].get(i, j);
                    let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-4);
                    assert!(
                        rel < 1e-5,
                        "seed {seed} layer {l} entry ({i},{j}): relative error {rel}"
                    );
                }
            }
        }
    }
    assert!(started.elapsed().as_secs_f64() < 1.0, "runtime budget");
    c.pass();
}

// --------------------------------------------------------------------
// Criterion 2: FA with R = W reproduces backprop.
// --------------------------------------------------------------------

#[test]
fn criterion_02_fa_equals_bp_when_feedback_equals_weights() {
    let c = Criterion::start("02 fa-equiv-bp");
    let started = Instant::now();
    for seed in 0..20u64 {
        let (net, x, y, _) = random_problem(&[6, 5, 4, 3], 3, seed);
        let trace = forward(&net, &x).unwrap();
        let fb = FeedbackSet::new(FeedbackKind::Fa, net.weights()[1..].to_vec()).unwrap();
        let fa = fa_pseudogradient(&net, &fb, &trace, &y).unwrap();
        let bp = backprop(&net, &trace, &y).unwrap();
        for (l, (a, b)) in fa.layers().iter().zip(bp.layers()).enumerate() {
            for (va, vb) in a.as_slice().iter().zip(b.as_slice()) {
                assert!(
                    (va - vb).abs() <= 1e-12,
                    "seed {seed} layer {l}: {va} vs {vb}"
                );
            }
        }
    }
    assert!(started.elapsed().as_secs_f64() < 1.0, "runtime budget");
    c.pass();
}

// --------------------------------------------------------------------
// Criterion 3: zero-weight deadlock for BP, escape for FA.
// --------------------------------------------------------------------

#[test]
fn criterion_03_zero_weight_deadlock_asymmetry() {
    let c = Criterion::start("03 zero-weight-deadlock");
    let started = Instant::now();
    for (sizes, batch) in [(vec![784usize, 700, 1000, 10], 3usize), (vec![9, 7, 5, 4, 3], 4)] {
        let arch = Architecture::new(sizes.clone()).unwrap();
        let mut wrng = Rng::from_seed(1);
        let net = init_weights(&arch, &mut wrng, 0.0, WeightInit::NormalScaled).unwrap();
        for seed in 0..3u64 {
            let mut drng = Rng::derived(seed, "a1-input");
            let x = sample_normal(&mut drng, sizes[0], batch).map(f64::abs);
            let classes = *sizes.last().unwrap();
            let labels: Vec<u8> = (0..batch).map(|i| (i % classes) as u8).collect();
            let y = one_hot(&labels, classes);
            let trace = forward(&net, &x).unwrap();

            let bp = backprop(&net, &trace, &y).unwrap();
            assert!(
                bp.is_all_zero(),
                "BP at zero weights must be identically zero for every layer and input"
            );

            let mut frng = Rng::derived(seed, "a1-feedback");
            let fb =
                FeedbackSet::sample_fa(&arch, FeedbackDistribution::Rademacher, &mut frng).unwrap();
            let fa = fa_pseudogradient(&net, &fb, &trace, &y).unwrap();
            assert!(
                !fa.layers()[0].is_all_zero(),
                "FA input-layer update must be nonzero for generic input"
            );
        }
    }
    assert!(started.elapsed().as_secs_f64() < 1.0, "runtime budget");
    c.pass();
}

// --------------------------------------------------------------------
// Criterion 4: softmax Jacobian entries vanish at large logit scales.
// --------------------------------------------------------------------

#[test]
fn criterion_04_softmax_jacobian_decay() {
    let c = Criterion::start("04 softmax-jacobian-decay");
    let started = Instant::now();
    assert!(softmax_jacobian_peak(100.0) < 1e-8);
    let scales = [0.0, 10.0, 50.0, 100.0];
    let peaks: Vec<f64> = scales.iter().map(|&s| softmax_jacobian_peak(s)).collect();
    for pair in peaks.windows(2) {
        assert!(
            pair[1] <= pair[0],
            "peaks must decrease monotonically over {scales:?}: {peaks:?}"
        );
    }
    assert!(started.elapsed().as_secs_f64() < 1.0, "runtime budget");
    c.pass();
}

// --------------------------------------------------------------------
// Criterion 5: the perturbation contract.
// --------------------------------------------------------------------

#[test]
fn criterion_05_perturbation_contract() {
    let c = Criterion::start("05 perturbation-contract");
    let started = Instant::now();
    let mut rng = Rng::from_seed(42);
    use rand::RngCore;
    for trial in 0..100 {
        let rows = 2 + (rng.next_u32() % 20) as usize;
        let cols = 1 + (rng.next_u32() % 20) as usize;
        let g = sample_normal(&mut rng, rows, cols.max(2));
        let angle = (rng.next_u32() as f64 / u32::MAX as f64) * std::f64::consts::PI;
        let p = perturb_gradient(&g, angle, &mut rng).unwrap();
        let cos = alignment(&p, &g).unwrap();
        assert!(
            (cos - angle.cos()).abs() < 1e-9,
            "trial {trial}: achieved {cos} wanted {}",
            angle.cos()
        );
        let rel = (p.frobenius_norm() - g.frobenius_norm()).abs() / g.frobenius_norm();
        assert!(rel < 1e-12, "trial {trial}: norm drift {rel}");
    }
    assert!(started.elapsed().as_secs_f64() < 1.0, "runtime budget");
    c.pass();
}

// --------------------------------------------------------------------
// Criterion 6: desk-scale MNIST accuracy under BP and FA.
// --------------------------------------------------------------------

#[test]
fn criterion_06_mnist_bp_and_fa_accuracy() {
    let c = Criterion::start("06 mnist-accuracy");
    let data = &*MNIST;

    let mut bp = standard_config();
    bp.rule = RuleSpec::Bp;
    bp.epochs = 10;
    bp.cadence = 500;
    bp.accuracy_cadence = Some(u64::MAX);
    let bp_run = train_with_data(&bp, data).unwrap();
    assert!(
        bp_run.final_test_accuracy >= 0.95,
        "BP test accuracy {:.4} < 0.95",
        bp_run.final_test_accuracy
    );

    let mut fa = standard_config();
    fa.rule = RuleSpec::Fa;
    fa.epochs = 10;
    fa.cadence = 250;
    fa.accuracy_cadence = Some(u64::MAX);
    let fa_run = train_with_data(&fa, data).unwrap();
    assert!(
        fa_run.final_test_accuracy >= 0.90,
        "FA test accuracy {:.4} < 0.90",
        fa_run.final_test_accuracy
    );

    // Rising gradient alignment: by the last epoch the hidden layer of the
    // FA run aligns well beyond chance with the true gradient.
    let last = fa_run.metrics.last().unwrap();
    let hidden_ga = last.ga[1].expect("hidden-layer alignment defined");
    assert!(hidden_ga > 0.3, "hidden-layer gradient alignment {hidden_ga}");
    c.pass();
}

// --------------------------------------------------------------------
// Criterion 7: angle sweep against the last-layer-only baseline.
// --------------------------------------------------------------------

#[test]
fn criterion_07_angle_sweep_baseline_crossing() {
    let c = Criterion::start("07 angle-sweep");
    let data = &*MNIST;
    let mut config = standard_config();
    config.epochs = 1;
    config.cadence = 600;
    config.accuracy_cadence = Some(u64::MAX);
    // Alignment 0 (pi/2) and alignment -0.59 (2.2 rad), 20 repetitions.
    let sweep = angle_sweep(
        &config,
        &[std::f64::consts::FRAC_PI_2, 2.2],
        20,
        data,
        2,
    )
    .unwrap();
    let at_zero = sweep.mean_accuracy_at(0);
    let baseline = sweep.lastlayer_mean_accuracy();
    assert!(
        (at_zero - baseline).abs() <= 0.03,
        "orthogonal-perturbation accuracy {at_zero:.4} vs last-layer baseline {baseline:.4}"
    );
    let negative = sweep.mean_accuracy_at(1);
    assert!(
        (negative - 0.10).abs() <= 0.05,
        "negative-alignment accuracy {negative:.4} should be random guessing"
    );
    c.pass();
}

// --------------------------------------------------------------------
// Criterion 8: FA beats perturbed BP at matched alignment.
// --------------------------------------------------------------------

/// Margin frozen from the reference build (see decisions ledger): the
/// observed gap was far larger; half a percentage point guards the
/// strictness without courting seed noise.
const FA_VS_PBP_MARGIN: f64 = 0.005;

#[test]
fn criterion_08_fa_beats_matched_perturbation_after_five_updates() {
    let c = Criterion::start("08 fa-beats-matched-perturbation");
    let data = &*MNIST;
    let config = standard_config();
    let cmp = five_update_comparison(&config, 20, 5, data, 2).unwrap();
    let fa_mean = mean(cmp.fa.iter().map(|r| r.final_test_accuracy));
    let pbp_input = mean(cmp.pbp_input_matched.iter().map(|r| r.final_test_accuracy));
    let pbp_hidden = mean(cmp.pbp_hidden_matched.iter().map(|r| r.final_test_accuracy));
    assert!(
        fa_mean > pbp_input + FA_VS_PBP_MARGIN,
        "FA {fa_mean:.4} vs input-matched perturbation {pbp_input:.4}"
    );
    assert!(
        fa_mean > pbp_hidden + FA_VS_PBP_MARGIN,
        "FA {fa_mean:.4} vs hidden-matched perturbation {pbp_hidden:.4}"
    );
    c.pass();
}

// --------------------------------------------------------------------
// Criterion 9: init-scale ordering.
// --------------------------------------------------------------------

#[test]
fn criterion_09_init_scale_ordering() {
    let c = Criterion::start("09 init-scale-ordering");
    let data = &*MNIST;

    // Accuracy after 5 epochs: small init beats large init.
    let mut config = standard_config();
    config.rule = RuleSpec::Fa;
    config.epochs = 5;
    config.cadence = 1000;
    config.accuracy_cadence = Some(u64::MAX);
    let runs = init_scale_sweep(&config, &[0.05, 1.0], data, 2).unwrap();
    assert!(
        runs[0].final_test_accuracy >= runs[1].final_test_accuracy,
        "scale 0.05 accuracy {:.4} < scale 1.0 accuracy {:.4}",
        runs[0].final_test_accuracy,
        runs[1].final_test_accuracy
    );

    // First-step update infinity norms over the scale grid.
    let mut probe = standard_config();
    probe.rule = RuleSpec::Fa;
    probe.epochs = 1;
    probe.max_steps = Some(1);
    probe.cadence = 1;
    probe.accuracy_cadence = Some(u64::MAX);
    let scales = [0.0, 0.5, 1.0, 2.0];
    let norm_runs = init_scale_sweep(&probe, &scales, data, 2).unwrap();
    let firsts: Vec<&Vec<f64>> = norm_runs.iter().map(|r| &r.metrics[0].ginf).collect();

    // At scale zero the first BP gradient vanishes entirely while the FA
    // input-layer update does not.
    let mut bp_probe = probe.clone();
    bp_probe.rule = RuleSpec::Bp;
    let bp_zero = init_scale_sweep(&bp_probe, &[0.0], data, 1).unwrap();
    assert!(bp_zero[0].metrics[0].ginf.iter().all(|&n| n == 0.0));
    assert!(firsts[0][0] > 0.0, "FA input-layer update at zero init");

    // Non-increasing norms per layer across the grid. Known not to hold
    // for the layers whose step-1 update is structurally zero at scale 0
    // (their presynaptic activations vanish) and for the output layer,
    // whose fused error does not decay with scale; asserted as stated.
    for layer in 0..3 {
        for s in 1..firsts.len() {
            assert!(
                firsts[s][layer] <= firsts[s - 1][layer],
                "layer {}: first-step inf norm rose from {} (scale {}) to {} (scale {})",
                layer + 1,
                firsts[s - 1][layer],
                scales[s - 1],
                firsts[s][layer],
                scales[s]
            );
        }
    }
    c.pass();
}

// --------------------------------------------------------------------
// Criterion 10: the weight-swap experiment.
// --------------------------------------------------------------------

const SWAP_STEP: u64 = 25_000;
const RETENTION_WINDOW: u64 = 5_000;
const DROP_WINDOW: u64 = 500;

fn swap_config() -> ExperimentConfig {
    let mut config = standard_config();
    config.rule = RuleSpec::Fa;
    config.epochs = 50;
    config.cadence = 500;
    config
}

#[test]
fn criterion_10a_swap_fa_solution_is_stable_under_bp() {
    let c = Criterion::start("10a swap-fa-to-bp");
    let data = &*MNIST;
    let out = swap_experiment(&swap_config(), SWAP_STEP, SwapDirection::FaToBp, data).unwrap();
    for rec in &out.pair {
        if rec.step > SWAP_STEP && rec.step <= SWAP_STEP + RETENTION_WINDOW {
            // Hidden and output layers stay aligned after the transplant.
            for layer in [1usize, 2] {
                let v = rec.cross_wa[layer].expect("alignment defined");
                assert!(
                    v > 0.9,
                    "step {}: layer {} cross-run alignment {v:.4} <= 0.9",
                    rec.step,
                    layer + 1
                );
            }
        }
    }
    c.pass();
}

#[test]
fn criterion_10b_swap_bp_solution_is_unstable_under_fa() {
    let c = Criterion::start("10b swap-bp-to-fa");
    let data = &*MNIST;
    let out = swap_experiment(&swap_config(), SWAP_STEP, SwapDirection::BpToFa, data).unwrap();

    let at_swap = out.pair.iter().find(|p| p.step == SWAP_STEP).unwrap();
    let baseline = at_swap.acc_fa;

    let mut min_hidden: f64 = 1.0;
    let mut min_acc_in_drop_window = f64::INFINITY;
    for rec in &out.pair {
        if rec.step > SWAP_STEP && rec.step <= SWAP_STEP + RETENTION_WINDOW {
            min_hidden = min_hidden.min(rec.cross_wa[1].expect("alignment defined"));
        }
        if rec.step > SWAP_STEP && rec.step <= SWAP_STEP + DROP_WINDOW {
            min_acc_in_drop_window = min_acc_in_drop_window.min(rec.acc_fa);
        }
    }
    assert!(
        min_hidden < 0.9,
        "hidden-layer cross-run alignment never fell below 0.9 (min {min_hidden:.4})"
    );
    let drop = baseline - min_acc_in_drop_window;
    assert!(
        drop >= 0.02,
        "FA accuracy dropped only {drop:.4} within {DROP_WINDOW} steps of the swap \
         (baseline {baseline:.4})"
    );
    c.pass();
}

// --------------------------------------------------------------------
// Criterion 11: alignment-forcing initializations.
// --------------------------------------------------------------------

#[test]
fn criterion_11_forced_alignment_does_not_help() {
    let c = Criterion::start("11 alignment-forcing");
    let data = &*MNIST;
    let mut config = standard_config();
    config.epochs = 10;
    config.cadence = 250;
    config.accuracy_cadence = Some(u64::MAX);
    let [random, sign, equal] = alignment_forcing_experiment(&config, data, 2).unwrap();

    // Construction: random starts unaligned, equal perfectly aligned,
    // sign-matched in between.
    let first_wa = |r: &falign::experiments::RunResult| r.metrics[0].wa[0].unwrap();
    assert!((first_wa(&equal) - 1.0).abs() < 1e-12);
    assert!(first_wa(&sign) > first_wa(&random).abs());
    assert!(first_wa(&sign) < first_wa(&equal));

    // The initially unaligned run performs at least as well in the end.
    assert!(
        random.final_test_accuracy >= equal.final_test_accuracy,
        "random {:.4} vs feedback-equal {:.4}",
        random.final_test_accuracy,
        equal.final_test_accuracy
    );

    // Early on, the forced-alignment run has the higher gradient
    // alignment without the accuracy to match.
    let early_ga = |r: &falign::experiments::RunResult| r.metrics[1].ga[1].unwrap();
    assert!(early_ga(&equal) > early_ga(&random));
    c.pass();
}

// --------------------------------------------------------------------
// Criterion 12: byte-for-byte reproducibility of the metrics CSV.
// --------------------------------------------------------------------

#[test]
fn criterion_12_metrics_csv_reproduces_byte_for_byte() {
    let c = Criterion::start("12 determinism");
    let data = &*MNIST;
    let mut config = standard_config();
    config.arch = vec![784, 32, 10];
    config.rule = RuleSpec::Fa;
    config.epochs = 1;
    config.cadence = 100;
    config.seed = 20260809;

    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for i in 0..2 {
        let run = train_with_data(&config, data).unwrap();
        let path = dir.path().join(format!("run{i}.csv"));
        write_csv(&path, config.arch.len() - 1, &run.metrics).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(bytes[0], bytes[1], "CSV bytes must be identical across reruns");

    // The synthetic dataset reproduces too.
    let mut xor = ExperimentConfig {
        arch: vec![784, 8, 8, 2],
        dataset: DatasetChoice::SyntheticXor,
        epochs: 3,
        cadence: 1,
        seed: 5,
        feedback_dist: FeedbackDistribution::Normal,
        ..ExperimentConfig::default()
    };
    xor.rule = RuleSpec::Fa;
    let xdata = load_data(&xor).unwrap();
    let a = train_with_data(&xor, &xdata).unwrap();
    let b = train_with_data(&xor, &xdata).unwrap();
    assert_eq!(a.metrics, b.metrics);
    c.pass();
}

// --------------------------------------------------------------------
// Reference-run regressions that accompany the criteria: the synthetic
// task is learnable by BP but not by the frozen-feature baseline.
// --------------------------------------------------------------------

#[test]
fn synthetic_xor_is_nonlinearly_separable_only() {
    use falign::data::{synthetic_xor, BatchPlan};
    use falign::rules::apply_update;

    let mut drng = Rng::derived(11, "xor-train");
    let train = synthetic_xor(100, 784, &mut drng).unwrap();
    let arch = Architecture::new(vec![784, 8, 8, 2]).unwrap();
    let plan = BatchPlan::new(3, 100).unwrap();

    // 200 epochs at lr 0.05, straight through the library primitives;
    // accuracy is evaluated on the training split itself.
    let train_to_the_end = |rule: &UpdateRule| -> f64 {
        let mut wrng = Rng::derived(11, "xor-weights");
        let mut net = init_weights(&arch, &mut wrng, 0.5, WeightInit::NormalScaled).unwrap();
        let mut prng = Rng::derived(11, "xor-perturb");
        for epoch in 0..200 {
            for batch in plan.batches(&train, epoch) {
                let trace = forward(&net, &batch.images).unwrap();
                let update = compute_update(rule, &net, &trace, &batch.onehot, &mut prng).unwrap();
                net = apply_update(&net, &update, 0.05).unwrap();
            }
        }
        evaluate_accuracy(&net, &train).unwrap()
    };

    let bp_acc = train_to_the_end(&UpdateRule::Bp);
    assert!(bp_acc >= 0.95, "BP on the synthetic task: {bp_acc:.3}");

    let llo_acc = train_to_the_end(&UpdateRule::LastLayerOnly);
    assert!(
        llo_acc <= 0.8,
        "last-layer-only should stay at most 0.8, got {llo_acc:.3}"
    );
}
