//! C ABI for the falign training laboratory.
//!
//! The surface is deliberately small: build an opaque [`FalignConfig`]
//! with the setters, run [`falign_train`] (or [`falign_gradcheck`]), and
//! read back scalar results through out-parameters. Metric trails land on
//! disk (CSV + JSON manifest) when an output directory is configured.
//!
//! Conventions:
//! - every function returns a [`FalignStatus`]; `FALIGN_STATUS_OK` is 0
//! - on failure, [`falign_last_error`] returns a thread-local message
//!   valid until the next falign call on the same thread
//! - handles from `falign_config_new` must be released exactly once with
//!   `falign_config_free`; all pointers must be non-null unless stated
//! - panics never unwind across the boundary (they map to
//!   `FALIGN_STATUS_PANIC`)

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use falign::experiments::{
    load_data, train_with_data, DatasetChoice, ExperimentConfig, RuleSpec, WeightMode,
};
use falign::instrumentation::write_csv;
use falign::rules::{finite_difference_max_rel_error, FeedbackDistribution};

/// Status code for every FFI entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FalignStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A value was out of range or inconsistent with the configuration.
    InvalidArgument = 2,
    /// Dataset missing or unreadable.
    DataError = 3,
    /// Training produced a non-finite value.
    NumericError = 4,
    /// Output files could not be written.
    IoError = 5,
    /// An internal panic was caught at the boundary.
    Panic = 6,
}

/// Update rule selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FalignRule {
    Bp = 0,
    Fa = 1,
    Dfa = 2,
    /// Requires an angle set via `falign_config_set_angle`.
    PerturbedBp = 3,
    LastLayerOnly = 4,
}

/// Weight initialization mode.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FalignWeightMode {
    NormalScaled = 0,
    SignMatched = 1,
    EqualToFeedback = 2,
}

/// Feedback matrix entry distribution.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FalignFeedbackDist {
    Rademacher = 0,
    Normal = 1,
}

/// Dataset selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FalignDataset {
    Mnist = 0,
    SyntheticXor = 1,
}

/// Opaque experiment configuration handle.
pub struct FalignConfig {
    config: ExperimentConfig,
    rule: FalignRule,
    angle: Option<f64>,
    out_dir: Option<PathBuf>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: FalignStatus, msg: impl AsRef<str>) -> FalignStatus {
    set_last_error(msg.as_ref());
    status
}

fn status_of(err: &falign::Error) -> FalignStatus {
    use falign::Error::*;
    match err {
        Shape { .. } | Dimension { .. } | Config(_) | RankDeficient { .. } => {
            FalignStatus::InvalidArgument
        }
        NonFinite { .. } | Domain { .. } | Diverged { .. } | ZeroAlignment { .. } => {
            FalignStatus::NumericError
        }
        IdxParse { .. } | EmptyDataset => FalignStatus::DataError,
        Io { .. } => FalignStatus::IoError,
    }
}

/// Runs `f` with panics converted to `FALIGN_STATUS_PANIC`.
fn guarded(f: impl FnOnce() -> FalignStatus) -> FalignStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            fail(FalignStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

macro_rules! nonnull {
    ($ptr:expr) => {
        match unsafe { $ptr.as_mut() } {
            Some(r) => r,
            None => return fail(FalignStatus::NullArgument, "null handle"),
        }
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn falign_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread. Never null; the
/// pointer stays valid until the next falign call on the same thread.
#[no_mangle]
pub extern "C" fn falign_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Fresh configuration with the standard defaults (the MNIST
/// 784-700-1000-10 setup, FA rule, lr 0.05, batch 100, scale 0.05).
/// Release with `falign_config_free`.
#[no_mangle]
pub extern "C" fn falign_config_new() -> *mut FalignConfig {
    Box::into_raw(Box::new(FalignConfig {
        config: ExperimentConfig::default(),
        rule: FalignRule::Fa,
        angle: None,
        out_dir: None,
    }))
}

/// Releases a configuration handle. A null pointer is a no-op.
///
/// # Safety
/// `cfg` must be a pointer obtained from `falign_config_new` that has not
/// been freed yet.
#[no_mangle]
pub unsafe extern "C" fn falign_config_free(cfg: *mut FalignConfig) {
    if !cfg.is_null() {
        drop(unsafe { Box::from_raw(cfg) });
    }
}

/// # Safety
/// `cfg` must be a live handle from `falign_config_new`.
#[no_mangle]
pub unsafe extern "C" fn falign_config_set_rule(
    cfg: *mut FalignConfig,
    rule: FalignRule,
) -> FalignStatus {
    let cfg = nonnull!(cfg);
    cfg.rule = rule;
    FalignStatus::Ok
}

/// Perturbation angle in radians, `[0, pi]`; only meaningful with the
/// perturbed-backprop rule.
///
/// # Safety
/// `cfg` must be a live handle from `falign_config_new`.
#[no_mangle]
pub unsafe extern "C" fn falign_config_set_angle(
    cfg: *mut FalignConfig,
    angle: f64,
) -> FalignStatus {
    let cfg = nonnull!(cfg);
    if !angle.is_finite() || !(0.0..=std::f64::consts::PI).contains(&angle) {
        return fail(
            FalignStatus::InvalidArgument,
            format!("angle must lie in [0, pi], got {angle}"),
        );
    }
    cfg.angle = Some(angle);
    FalignStatus::Ok
}

/// # Safety
/// `cfg` must be a live handle from `falign_config_new`.
#[no_mangle]
pub unsafe extern "C" fn falign_config_set_epochs(
    cfg: *mut FalignConfig,
    epochs: u32,
) -> FalignStatus {
    let cfg = nonnull!(cfg);
    cfg.config.epochs = epochs;
    FalignStatus::Ok
}

/// # Safety
/// `cfg` must be a live handle from `falign_config_new`.
#[no_mangle]
pub unsafe extern "C" fn falign_config_set_seed(cfg: *mut FalignConfig, seed: u64) -> FalignStatus {
    let cfg = nonnull!(cfg);
    cfg.config.seed = seed;
    FalignStatus::Ok
}

/// # Safety
/// `cfg` must be a live handle from `falign_config_new`.
#[no_mangle]
pub unsafe extern "C" fn falign_config_set_learning_rate(
    cfg: *mut FalignConfig,
    lr: f64,
) -> FalignStatus {
    let cfg = nonnull!(cfg);
    cfg.config.learning_rate = lr;
    FalignStatus::Ok
}

/// # Safety
/// `cfg` must be a live handle from `falign_config_new`.
#[no_mangle]
pub unsafe extern "C" fn falign_config_set_batch_size(
    cfg: *mut FalignConfig,
    batch: usize,
) -> FalignStatus {
    let cfg = nonnull!(cfg);
    cfg.config.batch_size = batch;
    FalignStatus::Ok
}

/// # Safety
/// `cfg` must be a live handle from `falign_config_new`.
#[no_mangle]
pub unsafe extern "C" fn falign_config_set_weight_scale(
    cfg: *mut FalignConfig,
    scale: f64,
) -> FalignStatus {
    let cfg = nonnull!(cfg);
    cfg.config.weight_scale = scale;
    FalignStatus::Ok
}

/// # Safety
/// `cfg` must be a live handle from `falign_config_new`.
#[no_mangle]
pub unsafe extern "C" fn falign_config_set_weight_mode(
    cfg: *mut FalignConfig,
    mode: FalignWeightMode,
) -> FalignStatus {
    let cfg = nonnull!(cfg);
    cfg.config.weight_mode = match mode {
        FalignWeightMode::NormalScaled => WeightMode::NormalScaled,
        FalignWeightMode::SignMatched => WeightMode::SignMatched,
        FalignWeightMode::EqualToFeedback => WeightMode::EqualToFeedback,
    };
    FalignStatus::Ok
}

/// # Safety
/// `cfg` must be a live handle from `falign_config_new`.
#[no_mangle]
pub unsafe extern "C" fn falign_config_set_feedback_dist(
    cfg: *mut FalignConfig,
    dist: FalignFeedbackDist,
) -> FalignStatus {
    let cfg = nonnull!(cfg);
    cfg.config.feedback_dist = match dist {
        FalignFeedbackDist::Rademacher => FeedbackDistribution::Rademacher,
        FalignFeedbackDist::Normal => FeedbackDistribution::Normal,
    };
    FalignStatus::Ok
}

/// # Safety
/// `cfg` must be a live handle from `falign_config_new`.
#[no_mangle]
pub unsafe extern "C" fn falign_config_set_cadence(
    cfg: *mut FalignConfig,
    cadence: u64,
) -> FalignStatus {
    let cfg = nonnull!(cfg);
    cfg.config.cadence = cadence;
    FalignStatus::Ok
}

/// # Safety
/// `cfg` must be a live handle from `falign_config_new`.
#[no_mangle]
pub unsafe extern "C" fn falign_config_set_dataset(
    cfg: *mut FalignConfig,
    dataset: FalignDataset,
) -> FalignStatus {
    let cfg = nonnull!(cfg);
    match dataset {
        FalignDataset::Mnist => {
            cfg.config.dataset = DatasetChoice::Mnist;
            cfg.config.arch = vec![784, 700, 1000, 10];
        }
        FalignDataset::SyntheticXor => {
            cfg.config.dataset = DatasetChoice::SyntheticXor;
            cfg.config.arch = vec![784, 8, 8, 2];
        }
    }
    FalignStatus::Ok
}

unsafe fn read_utf8<'a>(ptr: *const c_char) -> Result<&'a str, FalignStatus> {
    if ptr.is_null() {
        return Err(FalignStatus::NullArgument);
    }
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| FalignStatus::InvalidArgument)
}

/// Directory holding the MNIST IDX files.
///
/// # Safety
/// `cfg` must be a live handle; `path` must be a NUL-terminated UTF-8
/// string.
#[no_mangle]
pub unsafe extern "C" fn falign_config_set_data_dir(
    cfg: *mut FalignConfig,
    path: *const c_char,
) -> FalignStatus {
    let cfg = nonnull!(cfg);
    match unsafe { read_utf8(path) } {
        Ok(s) => {
            cfg.config.data_dir = Some(PathBuf::from(s));
            FalignStatus::Ok
        }
        Err(status) => fail(status, "data_dir must be a NUL-terminated UTF-8 path"),
    }
}

/// Directory to receive `train.csv` and `train.manifest.json`; unset
/// means no files are written.
///
/// # Safety
/// `cfg` must be a live handle; `path` must be a NUL-terminated UTF-8
/// string.
#[no_mangle]
pub unsafe extern "C" fn falign_config_set_out_dir(
    cfg: *mut FalignConfig,
    path: *const c_char,
) -> FalignStatus {
    let cfg = nonnull!(cfg);
    match unsafe { read_utf8(path) } {
        Ok(s) => {
            cfg.out_dir = Some(PathBuf::from(s));
            FalignStatus::Ok
        }
        Err(status) => fail(status, "out_dir must be a NUL-terminated UTF-8 path"),
    }
}

/// Layer sizes, input first, output last; at least two entries.
///
/// # Safety
/// `cfg` must be a live handle; `sizes` must point to `len` readable
/// `usize` values.
#[no_mangle]
pub unsafe extern "C" fn falign_config_set_arch(
    cfg: *mut FalignConfig,
    sizes: *const usize,
    len: usize,
) -> FalignStatus {
    let cfg = nonnull!(cfg);
    if sizes.is_null() {
        return fail(FalignStatus::NullArgument, "null arch array");
    }
    let slice = unsafe { std::slice::from_raw_parts(sizes, len) };
    if slice.len() < 2 || slice.iter().any(|&n| n == 0) {
        return fail(
            FalignStatus::InvalidArgument,
            "arch needs at least [input, output], all positive",
        );
    }
    cfg.config.arch = slice.to_vec();
    FalignStatus::Ok
}

fn resolved_config(cfg: &FalignConfig) -> Result<ExperimentConfig, FalignStatus> {
    let mut config = cfg.config.clone();
    config.rule = match cfg.rule {
        FalignRule::Bp => RuleSpec::Bp,
        FalignRule::Fa => RuleSpec::Fa,
        FalignRule::Dfa => RuleSpec::Dfa,
        FalignRule::LastLayerOnly => RuleSpec::LastLayerOnly,
        FalignRule::PerturbedBp => match cfg.angle {
            Some(angle) => RuleSpec::PerturbedBp { angle },
            None => {
                set_last_error("the perturbed rule needs falign_config_set_angle");
                return Err(FalignStatus::InvalidArgument);
            }
        },
    };
    if let Err(e) = config.validate() {
        set_last_error(&e.to_string());
        return Err(FalignStatus::InvalidArgument);
    }
    Ok(config)
}

/// Runs one training configuration. On success writes the final test
/// accuracy to `out_final_test_accuracy` (may be null if the caller does
/// not want it) and, when an output directory is configured, the metrics
/// CSV plus a JSON manifest.
///
/// # Safety
/// `cfg` must be a live handle from `falign_config_new`;
/// `out_final_test_accuracy` must be null or point to a writable f64.
#[no_mangle]
pub unsafe extern "C" fn falign_train(
    cfg: *const FalignConfig,
    out_final_test_accuracy: *mut f64,
) -> FalignStatus {
    let cfg = match unsafe { cfg.as_ref() } {
        Some(r) => r,
        None => return fail(FalignStatus::NullArgument, "null handle"),
    };
    guarded(|| {
        let config = match resolved_config(cfg) {
            Ok(c) => c,
            Err(status) => return status,
        };
        let data = match load_data(&config) {
            Ok(d) => d,
            // Failures while locating or parsing the dataset read as data
            // errors even when they surface as config or I/O internally.
            Err(e) => {
                let status = match status_of(&e) {
                    FalignStatus::InvalidArgument | FalignStatus::IoError => {
                        FalignStatus::DataError
                    }
                    other => other,
                };
                return fail(status, e.to_string());
            }
        };
        let run = match train_with_data(&config, &data) {
            Ok(r) => r,
            Err(e) => return fail(status_of(&e), e.to_string()),
        };
        if let Some(dir) = &cfg.out_dir {
            if let Err(e) = std::fs::create_dir_all(dir) {
                return fail(FalignStatus::IoError, format!("{}: {e}", dir.display()));
            }
            let layers = config.arch.len() - 1;
            if let Err(e) = write_csv(&dir.join("train.csv"), layers, &run.metrics) {
                return fail(FalignStatus::IoError, e.to_string());
            }
            let manifest = serde_json::json!({
                "config": run.config,
                "final_test_accuracy": run.final_test_accuracy,
                "steps": run.steps,
                "wall_secs": run.wall_secs,
            });
            if let Err(e) = std::fs::write(
                dir.join("train.manifest.json"),
                serde_json::to_string_pretty(&manifest).expect("manifest"),
            ) {
                return fail(FalignStatus::IoError, format!("{}: {e}", dir.display()));
            }
        }
        if !out_final_test_accuracy.is_null() {
            unsafe { *out_final_test_accuracy = run.final_test_accuracy };
        }
        FalignStatus::Ok
    })
}

/// Verifies analytic gradients against central finite differences on a
/// small seeded network; writes the max relative error observed.
///
/// # Safety
/// `out_max_rel_error` must be null or point to a writable f64.
#[no_mangle]
pub unsafe extern "C" fn falign_gradcheck(
    seed: u64,
    out_max_rel_error: *mut f64,
) -> FalignStatus {
    guarded(|| match finite_difference_max_rel_error(seed) {
        Ok(worst) => {
            if !out_max_rel_error.is_null() {
                unsafe { *out_max_rel_error = worst };
            }
            if worst < 1e-5 {
                FalignStatus::Ok
            } else {
                fail(
                    FalignStatus::NumericError,
                    format!("gradient check failed: max relative error {worst:e}"),
                )
            }
        }
        Err(e) => fail(status_of(&e), e.to_string()),
    })
}
