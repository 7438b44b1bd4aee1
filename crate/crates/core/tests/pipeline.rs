use tempfile::TempDir;

use qoe_forge::classical::knn::{fit_knn, KnnParams};
use qoe_forge::config::ExperimentConfig;
use qoe_forge::data::{generate_base_dataset, read_csv, write_csv};
use qoe_forge::metrics::correlation_by_demographic;
use qoe_forge::model::{ModelDocument, ModelKind, ModelParams, RegressorModel, MODEL_SCHEMA_VERSION};
use qoe_forge::preprocess::fit_transform;
use qoe_forge::{seed, Matrix};
use rand::Rng;

#[test]
fn csv_files_round_trip_through_disk() {
    let dir = TempDir::new().unwrap();
    let cfg = ExperimentConfig::default();
    let base = generate_base_dataset(60, 3).unwrap();
    let path = dir.path().join("base.csv");
    write_csv(&base, &path).unwrap();
    let back = read_csv(&path).unwrap();
    assert_eq!(back.rows(), base.rows());
    assert_eq!(back.content_hash(), base.content_hash());

    let aug = qoe_forge::demographics::augment_dataset(&base, &cfg.augmentation().unwrap()).unwrap();
    let path = dir.path().join("aug.csv");
    write_csv(&aug, &path).unwrap();
    assert_eq!(read_csv(&path).unwrap().rows(), aug.rows());
}

#[test]
fn saved_model_document_predicts_identically() {
    let dir = TempDir::new().unwrap();
    let ds = generate_base_dataset(120, 8).unwrap();
    let (dm, pre) = fit_transform(&ds, Default::default()).unwrap();
    let model = RegressorModel::fit(ModelKind::GradientBoosting, &dm.x, &dm.y, &ModelParams::default(), 1).unwrap();
    let before = model.predict(&dm.x).unwrap();
    let doc = ModelDocument {
        schema_version: MODEL_SCHEMA_VERSION,
        feature_names: dm.feature_names.clone(),
        training_data_hash: ds.content_hash(),
        seed: 1,
        preprocessor: pre,
        model,
    };
    let path = dir.path().join("gb.json");
    doc.save(&path).unwrap();
    let loaded = ModelDocument::load(&path).unwrap();
    let x = loaded.preprocessor.transform(&ds).unwrap().x;
    assert_eq!(loaded.model.predict(&x).unwrap(), before);
    assert_eq!(loaded.feature_names, dm.feature_names);

    let mut json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    json["schema_version"] = 99.into();
    assert!(ModelDocument::from_json(&json.to_string()).is_err());
}

#[test]
fn knn_matches_brute_force_oracle() {
    let mut rng = seed::rng(77);
    let train: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).collect();
    let y: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..100.0)).collect();
    let x = Matrix::from_rows(&train).unwrap();
    let knn = fit_knn(&x, &y, KnnParams { k: 3 }).unwrap();
    for _ in 0..50 {
        let q = [rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)];
        let mut d: Vec<(f64, usize)> = train
            .iter()
            .enumerate()
            .map(|(i, r)| ((r[0] - q[0]).hypot(r[1] - q[1]), i))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let expected = d[..3].iter().map(|&(_, i)| y[i]).sum::<f64>() / 3.0;
        assert!((knn.predict_row(&q) - expected).abs() < 1e-12);
    }
}

#[test]
fn one_nearest_neighbour_memorizes_training_rows() {
    let ds = generate_base_dataset(90, 4).unwrap();
    let (dm, _) = fit_transform(&ds, Default::default()).unwrap();
    let knn = fit_knn(&dm.x, &dm.y, KnnParams { k: 1 }).unwrap();
    assert_eq!(knn.predict(&dm.x), dm.y);
}

#[test]
fn unused_column_is_uncorrelated_in_every_profile() {
    // Session duration enters no part of the score.
    let cfg = ExperimentConfig::default();
    let base = generate_base_dataset(450, 42).unwrap();
    let aug = qoe_forge::demographics::augment_dataset(&base, &cfg.augmentation().unwrap()).unwrap();
    let rows = correlation_by_demographic(&aug, "duration_s").unwrap();
    assert_eq!(rows.len(), 6);
    for r in rows {
        assert!(r.plcc.abs() < 0.1, "{}: {}", r.demographic, r.plcc);
    }
}
