//! Calls the exported functions the way a C caller would.

use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vjump::features::extract_feature_vector;
use vjump::io::{save_model, ImuSession};
use vjump::regression::{fit_regressor, RegressorConfig, RegressorKind};
use vjump::segmentation::ClassVocabulary;
use vjump::tcn::{build_mstcn, predict, MsTcnConfig, SsTcnConfig};
use vjump_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(vjump_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn c_path(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn random_samples(seed: u64, n: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, VJUMP_CHANNELS), |_| rng.gen_range(-2.0..2.0))
}

fn tcn_checkpoint(dir: &Path) -> (std::path::PathBuf, vjump::tcn::ModelWeights) {
    let cfg = MsTcnConfig {
        num_stages: 2,
        stage: SsTcnConfig {
            num_layers: 3,
            num_filters: 5,
            ..Default::default()
        },
        ..Default::default()
    };
    let w = build_mstcn(&cfg, 9).unwrap();
    let path = dir.join("tcn.ckpt");
    save_model(&w, &path).unwrap();
    (path, w)
}

fn regressor_checkpoint(dir: &Path) -> (std::path::PathBuf, vjump::regression::TrainedRegressor) {
    let x = random_samples(3, 40);
    let y: Vec<f64> = x.rows().into_iter().map(|r| r.sum()).collect();
    let model = fit_regressor(x.view(), &y, &RegressorConfig::default_for(RegressorKind::Gbt)).unwrap();
    let path = dir.join("reg.ckpt");
    save_model(&model, &path).unwrap();
    (path, model)
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(vjump_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn tcn_handle_predicts_like_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let (path, weights) = tcn_checkpoint(dir.path());
    let mut handle = ptr::null_mut();
    let status = unsafe { vjump_tcn_load(c_path(&path).as_ptr(), &mut handle) };
    assert_eq!(status, VjumpStatus::Ok, "{}", last_error());
    assert_eq!(last_error(), "");
    assert_eq!(unsafe { vjump_tcn_num_classes(handle) }, 8);

    let x = random_samples(1, 77);
    let mut labels = vec![u32::MAX; 77];
    let status = unsafe { vjump_tcn_predict(handle, x.as_ptr(), 77, labels.as_mut_ptr()) };
    assert_eq!(status, VjumpStatus::Ok, "{}", last_error());
    let session = ImuSession::new("s", x, None).unwrap();
    let (_, expected) = predict(&weights, &session).unwrap();
    assert_eq!(labels.iter().map(|&l| l as usize).collect::<Vec<_>>(), expected);

    let status = unsafe { vjump_tcn_predict(handle, ptr::null(), 77, labels.as_mut_ptr()) };
    assert_eq!(status, VjumpStatus::NullPointer);
    let status = unsafe { vjump_tcn_predict(ptr::null(), labels.as_ptr().cast(), 1, labels.as_mut_ptr()) };
    assert_eq!(status, VjumpStatus::NullPointer);
    assert!(last_error().contains("model"));
    unsafe { vjump_tcn_free(handle) };
    unsafe { vjump_tcn_free(ptr::null_mut()) };
}

#[test]
fn load_failures_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut tcn = ptr::null_mut();
    let missing = c_path(&dir.path().join("missing.ckpt"));
    assert_eq!(unsafe { vjump_tcn_load(missing.as_ptr(), &mut tcn) }, VjumpStatus::Io);
    assert!(tcn.is_null());
    assert!(last_error().contains("missing.ckpt"));

    let (reg_path, _) = regressor_checkpoint(dir.path());
    assert_eq!(unsafe { vjump_tcn_load(c_path(&reg_path).as_ptr(), &mut tcn) }, VjumpStatus::Format);
    assert!(tcn.is_null());
    assert!(last_error().contains("regressor"), "{}", last_error());

    let garbage = dir.path().join("garbage.ckpt");
    std::fs::write(&garbage, b"not a checkpoint").unwrap();
    let mut reg = ptr::null_mut();
    assert_eq!(unsafe { vjump_regressor_load(c_path(&garbage).as_ptr(), &mut reg) }, VjumpStatus::Format);
    assert!(reg.is_null());

    assert_eq!(unsafe { vjump_regressor_load(ptr::null(), &mut reg) }, VjumpStatus::NullPointer);
    assert_eq!(unsafe { vjump_regressor_load(missing.as_ptr(), ptr::null_mut()) }, VjumpStatus::NullPointer);
}

#[test]
fn regressor_handle_predicts_like_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let (path, model) = regressor_checkpoint(dir.path());
    let mut handle = ptr::null_mut();
    let status = unsafe { vjump_regressor_load(c_path(&path).as_ptr(), &mut handle) };
    assert_eq!(status, VjumpStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { vjump_regressor_input_dim(handle) }, 6);

    let x = random_samples(4, 10);
    let mut heights = vec![f64::NAN; 10];
    let status = unsafe { vjump_regressor_predict(handle, x.as_ptr(), 10, 6, heights.as_mut_ptr()) };
    assert_eq!(status, VjumpStatus::Ok, "{}", last_error());
    let expected = model.predict_matrix(x.view()).unwrap();
    assert!(heights.iter().zip(&expected).all(|(a, b)| a.to_bits() == b.to_bits()));

    let status = unsafe { vjump_regressor_predict(handle, x.as_ptr(), 12, 5, heights.as_mut_ptr()) };
    assert_eq!(status, VjumpStatus::InvalidArgument);
    assert!(last_error().contains("expects 6"));
    unsafe { vjump_regressor_free(handle) };
}

#[test]
fn feature_extraction_matches_the_library() {
    let vocab = ClassVocabulary::default();
    let x = random_samples(5, 300);
    let mut out = vec![f64::NAN; VJUMP_FEATURE_DIM];
    let status = unsafe { vjump_extract_features(x.as_ptr(), 300, 3, out.as_mut_ptr(), out.len()) };
    assert_eq!(status, VjumpStatus::Ok, "{}", last_error());
    assert_eq!(out, extract_feature_vector(x.view(), 3, &vocab).unwrap().values);
    assert_eq!(out[VJUMP_FEATURE_DIM - 1], 2.0);

    let zeros = Array2::<f64>::zeros((300, 6));
    let status = unsafe { vjump_extract_features(zeros.as_ptr(), 300, 1, out.as_mut_ptr(), out.len()) };
    assert_eq!(status, VjumpStatus::Ok);
    assert!(out.iter().all(|&v| v == 0.0));
}

#[test]
fn feature_extraction_rejects_bad_arguments() {
    let x = random_samples(6, 300);
    let mut out = vec![0.0; VJUMP_FEATURE_DIM];
    let status = unsafe { vjump_extract_features(x.as_ptr(), 300, 5, out.as_mut_ptr(), out.len()) };
    assert_eq!(status, VjumpStatus::InvalidArgument);
    assert!(last_error().contains("Squat"), "{}", last_error());

    let status = unsafe { vjump_extract_features(x.as_ptr(), 300, 1, out.as_mut_ptr(), 144) };
    assert_eq!(status, VjumpStatus::InvalidArgument);
    assert!(last_error().contains("145"));

    let status = unsafe { vjump_extract_features(x.as_ptr(), 3, 1, out.as_mut_ptr(), out.len()) };
    assert_eq!(status, VjumpStatus::InvalidArgument);

    let status = unsafe { vjump_extract_features(x.as_ptr(), 0, 1, out.as_mut_ptr(), out.len()) };
    assert_eq!(status, VjumpStatus::InvalidArgument);

    let mut bad = x.clone();
    bad[[10, 2]] = f64::NAN;
    let status = unsafe { vjump_extract_features(bad.as_ptr(), 300, 1, out.as_mut_ptr(), out.len()) };
    assert_eq!(status, VjumpStatus::InvalidArgument);

    let status = unsafe { vjump_extract_features(x.as_ptr(), 300, 1, ptr::null_mut(), 145) };
    assert_eq!(status, VjumpStatus::NullPointer);
}

#[test]
fn errors_are_per_thread() {
    let mut out = vec![0.0; VJUMP_FEATURE_DIM];
    let x = random_samples(7, 300);
    unsafe { vjump_extract_features(x.as_ptr(), 300, 0, out.as_mut_ptr(), out.len()) };
    assert!(!last_error().is_empty());
    std::thread::spawn(|| assert_eq!(last_error(), "")).join().unwrap();
    unsafe { vjump_extract_features(x.as_ptr(), 300, 1, out.as_mut_ptr(), out.len()) };
    assert_eq!(last_error(), "");
}
