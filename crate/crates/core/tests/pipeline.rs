mod common;

use common::{gauss_solve, random_tensor};
use epnet::pipeline::{
    extract_patches, fit_q0, fixture_dir, gen_measurement, load_dir, mean_psnr, prepare, psnr,
    split_holdout, Container, GrayImage, Initializer, MeasurementMatrix, PatchDataset,
};
use epnet::Error;
use proptest::prelude::*;
use std::path::Path;

/// sha256 of the manifest for 500 fixture patches of size 33 at seed 7.
const GOLDEN_MANIFEST: &str = "1bca5cffbb9c6b8a077d6687c0a97f73693c5ebb6ab9c1bde8702918fe8c4d0c";

#[test]
fn measurement_shape_and_orthonormality() {
    let m = gen_measurement(1089, 0.25, 7).unwrap();
    assert_eq!(m.phi.shape(), &[272, 1089]);
    assert!(m.orthonormality_error() < 1e-10);
    assert_eq!(gen_measurement(1089, 0.1, 7).unwrap().rows(), 109);
    assert!(gen_measurement(10, 0.0, 7).is_err());
    assert!(gen_measurement(10, 1.5, 7).is_err());
}

#[test]
fn q0_matches_gaussian_elimination() {
    let x = random_tensor(&[6, 30], 1);
    let y = random_tensor(&[4, 30], 2);
    let init = fit_q0(&x, &y).unwrap();
    // Q₀ᵀ solves (YYᵀ) Q₀ᵀ = Y Xᵀ.
    let (xd, yd) = (x.data(), y.data());
    let gram: Vec<Vec<f64>> = (0..4)
        .map(|i| (0..4).map(|j| (0..30).map(|p| yd[i * 30 + p] * yd[j * 30 + p]).sum()).collect())
        .collect();
    let rhs: Vec<Vec<f64>> = (0..4)
        .map(|i| (0..6).map(|r| (0..30).map(|p| yd[i * 30 + p] * xd[r * 30 + p]).sum()).collect())
        .collect();
    let qt = gauss_solve(&gram, &rhs);
    for r in 0..6 {
        for i in 0..4 {
            let d = (init.q0.data()[r * 4 + i] - qt[i][r]).abs();
            assert!(d < 1e-8, "({r}, {i}): {d:e}");
        }
    }
}

#[test]
fn fixture_dataset_matches_golden_manifest() {
    let images = load_dir(&fixture_dir()).unwrap();
    let ds = extract_patches(&images, 500, 33, 7).unwrap();
    assert_eq!(ds.manifest_checksum(), GOLDEN_MANIFEST);
    let again = extract_patches(&images, 500, 33, 7).unwrap();
    assert_eq!(again, ds);
}

#[test]
fn prepare_is_deterministic_and_fits_on_train_only() {
    let images = load_dir(&fixture_dir()).unwrap();
    let a = prepare(&images, 120, 9, 0.3, 5).unwrap();
    let b = prepare(&images, 120, 9, 0.3, 5).unwrap();
    assert_eq!(a.matrix.phi, b.matrix.phi);
    assert_eq!(a.init, b.init);
    assert_eq!((a.train.len(), a.holdout.len()), (108, 12));
    let x = a.dataset.select(&a.train).as_columns();
    let y = epnet::pipeline::measure_columns(&a.matrix.phi, &x).unwrap();
    assert!(a.init.normal_equation_residual(&x, &y).unwrap() < 1e-8);
}

#[test]
fn containers_round_trip_and_reject_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let m = gen_measurement(25, 0.4, 3).unwrap();
    let path = dir.path().join("phi.bin");
    m.to_container().write(&path).unwrap();
    let back = MeasurementMatrix::from_container(&Container::read_kind(&path, "matrix").unwrap(), &path).unwrap();
    assert_eq!(back, m);
    assert!(matches!(Container::read_kind(&path, "q0"), Err(Error::Format { .. })));

    let bytes = std::fs::read(&path).unwrap();
    for cut in [1, 8, bytes.len() / 2] {
        let p = dir.path().join(format!("cut{cut}.bin"));
        std::fs::write(&p, &bytes[..bytes.len() - cut]).unwrap();
        assert!(matches!(Container::read(&p), Err(Error::Format { .. })), "cut {cut}");
    }
}

#[test]
fn dataset_round_trip_through_manifest() {
    let images = load_dir(&fixture_dir()).unwrap();
    let ds = extract_patches(&images, 20, 9, 2).unwrap();
    let back = PatchDataset::from_parts(&ds.to_container(), &ds.manifest_text(), Path::new("p")).unwrap();
    assert_eq!(back, ds);
    assert!(PatchDataset::from_parts(&ds.to_container(), "x 1\n", Path::new("p")).is_err());
}

#[test]
fn mean_psnr_is_the_arithmetic_mean() {
    let truth = random_tensor(&[1, 4, 4], 1);
    let vals: Vec<f64> = (0..5)
        .map(|s| psnr(&truth.add(&random_tensor(&[1, 4, 4], s + 10).scale(0.01)).unwrap(), &truth, 1.0).unwrap())
        .collect();
    let mean = vals.iter().sum::<f64>() / 5.0;
    assert!((mean_psnr(&vals) - mean).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn holdout_split_partitions(count in 0usize..400, seed in 0u64..100) {
        let (train, holdout) = split_holdout(count, seed);
        let mut all: Vec<usize> = train.iter().chain(&holdout).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..count).collect::<Vec<_>>());
        if count >= 2 {
            let expect = ((count as f64 * 0.1).round() as usize).max(1);
            prop_assert_eq!(holdout.len(), expect);
        }
    }

    #[test]
    fn patches_stay_inside_their_images(w in 9usize..30, h in 9usize..30, seed in 0u64..100) {
        let px: Vec<f64> = (0..w * h).map(|i| (i % 7) as f64 / 7.0).collect();
        let img = GrayImage::new("g", w, h, px).unwrap();
        let ds = extract_patches(std::slice::from_ref(&img), 10, 9, seed).unwrap();
        for (p, r) in ds.patches.iter().zip(&ds.manifest) {
            prop_assert!(r.x + 9 <= w && r.y + 9 <= h);
            prop_assert_eq!(p.data()[0], img.at(r.x, r.y));
            prop_assert!(p.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn q0_beats_perturbations(seed in 0u64..200) {
        let x = random_tensor(&[5, 20], seed);
        let y = random_tensor(&[3, 20], seed + 1);
        let init = fit_q0(&x, &y).unwrap();
        let base = Initializer::frobenius_residual(&init.q0, &x, &y).unwrap();
        let delta = random_tensor(&[5, 3], seed + 2).scale(1e-3);
        let other = Initializer::frobenius_residual(&init.q0.add(&delta).unwrap(), &x, &y).unwrap();
        prop_assert!(base <= other);
    }
}
