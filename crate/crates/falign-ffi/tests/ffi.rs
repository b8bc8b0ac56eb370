//! Exercises the C ABI from Rust: handle lifecycle, every setter, the
//! training and gradcheck entry points, and the error contract.

use std::ffi::CStr;

use falign_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(falign_last_error()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(falign_version()) };
    let s = v.to_str().unwrap();
    assert!(!s.is_empty());
    assert!(s.split('.').count() >= 2, "{s}");
}

#[test]
fn gradcheck_passes_and_reports_the_error() {
    let mut worst = f64::NAN;
    let status = unsafe { falign_gradcheck(3, &mut worst) };
    assert_eq!(status, FalignStatus::Ok);
    assert!(worst.is_finite() && worst < 1e-5, "{worst}");
}

#[test]
fn train_on_synthetic_data_via_the_abi() {
    let out = tempfile::tempdir().unwrap();
    let out_c = std::ffi::CString::new(out.path().to_str().unwrap()).unwrap();

    let cfg = falign_config_new();
    unsafe {
        assert_eq!(
            falign_config_set_dataset(cfg, FalignDataset::SyntheticXor),
            FalignStatus::Ok
        );
        assert_eq!(falign_config_set_rule(cfg, FalignRule::Bp), FalignStatus::Ok);
        assert_eq!(falign_config_set_epochs(cfg, 50), FalignStatus::Ok);
        assert_eq!(falign_config_set_seed(cfg, 9), FalignStatus::Ok);
        assert_eq!(falign_config_set_batch_size(cfg, 50), FalignStatus::Ok);
        assert_eq!(falign_config_set_cadence(cfg, 25), FalignStatus::Ok);
        assert_eq!(falign_config_set_learning_rate(cfg, 0.05), FalignStatus::Ok);
        assert_eq!(falign_config_set_weight_scale(cfg, 0.5), FalignStatus::Ok);
        assert_eq!(
            falign_config_set_feedback_dist(cfg, FalignFeedbackDist::Normal),
            FalignStatus::Ok
        );
        assert_eq!(
            falign_config_set_weight_mode(cfg, FalignWeightMode::NormalScaled),
            FalignStatus::Ok
        );
        assert_eq!(falign_config_set_out_dir(cfg, out_c.as_ptr()), FalignStatus::Ok);

        let mut acc = f64::NAN;
        let status = falign_train(cfg, &mut acc);
        assert_eq!(status, FalignStatus::Ok, "{}", last_error());
        assert!((0.0..=1.0).contains(&acc), "{acc}");

        falign_config_free(cfg);
    }
    assert!(out.path().join("train.csv").exists());
    assert!(out.path().join("train.manifest.json").exists());
}

#[test]
fn custom_arch_flows_through() {
    let cfg = falign_config_new();
    let arch = [784usize, 16, 2];
    unsafe {
        assert_eq!(
            falign_config_set_dataset(cfg, FalignDataset::SyntheticXor),
            FalignStatus::Ok
        );
        assert_eq!(
            falign_config_set_arch(cfg, arch.as_ptr(), arch.len()),
            FalignStatus::Ok
        );
        assert_eq!(falign_config_set_rule(cfg, FalignRule::Bp), FalignStatus::Ok);
        assert_eq!(falign_config_set_epochs(cfg, 2), FalignStatus::Ok);
        let mut acc = f64::NAN;
        assert_eq!(falign_train(cfg, &mut acc), FalignStatus::Ok, "{}", last_error());
        assert!(acc.is_finite());
        falign_config_free(cfg);
    }
}

#[test]
fn error_paths_set_messages() {
    unsafe {
        // Null handle.
        assert_eq!(
            falign_config_set_epochs(std::ptr::null_mut(), 1),
            FalignStatus::NullArgument
        );

        // Angle out of range.
        let cfg = falign_config_new();
        assert_eq!(falign_config_set_angle(cfg, 7.0), FalignStatus::InvalidArgument);
        assert!(last_error().contains("angle"), "{}", last_error());

        // Perturbed rule without an angle.
        assert_eq!(
            falign_config_set_rule(cfg, FalignRule::PerturbedBp),
            FalignStatus::Ok
        );
        assert_eq!(
            falign_config_set_dataset(cfg, FalignDataset::SyntheticXor),
            FalignStatus::Ok
        );
        assert_eq!(falign_train(cfg, std::ptr::null_mut()), FalignStatus::InvalidArgument);
        assert!(last_error().contains("angle"), "{}", last_error());

        // Invalid config value caught by validation.
        assert_eq!(falign_config_set_rule(cfg, FalignRule::Bp), FalignStatus::Ok);
        assert_eq!(falign_config_set_learning_rate(cfg, -0.5), FalignStatus::Ok);
        assert_eq!(falign_train(cfg, std::ptr::null_mut()), FalignStatus::InvalidArgument);
        assert!(last_error().contains("learning rate"), "{}", last_error());

        // Missing MNIST directory surfaces as a data error.
        assert_eq!(falign_config_set_learning_rate(cfg, 0.05), FalignStatus::Ok);
        assert_eq!(
            falign_config_set_dataset(cfg, FalignDataset::Mnist),
            FalignStatus::Ok
        );
        let bogus = std::ffi::CString::new("/nonexistent/mnist").unwrap();
        assert_eq!(falign_config_set_data_dir(cfg, bogus.as_ptr()), FalignStatus::Ok);
        assert_eq!(falign_config_set_epochs(cfg, 1), FalignStatus::Ok);
        assert_eq!(falign_train(cfg, std::ptr::null_mut()), FalignStatus::DataError);
        assert!(!last_error().is_empty());

        falign_config_free(cfg);
        // Freeing null is a no-op.
        falign_config_free(std::ptr::null_mut());
    }
}
