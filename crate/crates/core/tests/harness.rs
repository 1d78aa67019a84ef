use std::path::Path;

use argate_core::corruption::{AssignmentScheme, CorruptionManifest, CorruptionSpec, FailureModel};
use argate_core::data::{Dataset, SynthSpec};
use argate_core::fusion::{EncoderSpec, ModelConfig, Variant};
use argate_core::harness::{
    evaluate_accuracy, fusion_weight_histogram, load_checkpoint, prepare_run_data, render_csv, run_experiment,
    run_experiment_grid, save_checkpoint, train, DatasetSpec, Executor, ExperimentConfig, GridConfig, HarnessError,
    RunData,
};

fn small_model(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        encoder: EncoderSpec {
            conv_channels: vec![4],
            kernel: 3,
            pool: 2,
            features: 8,
        },
        gate_hidden: 8,
        head_hidden: 8,
        aux_hidden: 8,
        ..Default::default()
    }
}

fn synth(examples: usize, informative: Vec<usize>, seed: u64) -> DatasetSpec {
    DatasetSpec::Synth {
        spec: SynthSpec {
            channels: 3,
            classes: 3,
            examples,
            series_len: 16,
            informative,
            seed,
            ..Default::default()
        },
        test_fraction: 0.25,
    }
}

fn config(variant: Variant, dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new("tiny", synth(120, vec![0], 1), small_model(variant));
    cfg.seeds = vec![1];
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.output_dir = dir.to_path_buf();
    cfg
}

fn bits(records: Vec<(String, argate_core::diffcore::Tensor)>) -> Vec<(String, Vec<u64>)> {
    records
        .into_iter()
        .map(|(n, t)| (n, t.data().iter().map(|v| v.to_bits()).collect()))
        .collect()
}

#[test]
fn untrained_model_is_at_chance() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(
        "chance",
        DatasetSpec::Synth {
            spec: SynthSpec {
                channels: 3,
                classes: 6,
                examples: 6000,
                series_len: 16,
                informative: vec![],
                seed: 3,
                ..Default::default()
            },
            test_fraction: 0.5,
        },
        small_model(Variant::NetGated),
    );
    cfg.epochs = 0;
    cfg.seeds = vec![4];
    cfg.output_dir = dir.path().to_path_buf();
    let report = run_experiment(&cfg, None).unwrap();
    let acc = report.seeds[0].test_accuracy.unwrap();
    assert!((acc - 100.0 / 6.0).abs() <= 2.0, "{acc}");
    assert!(report.seeds[0].epochs.is_empty());
}

#[test]
fn training_is_bit_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for variant in [Variant::ArgatePlus, Variant::ArgateL] {
        let cfg = config(variant, dir.path());
        let data = prepare_run_data(&cfg).unwrap();
        let a = train(&cfg, &data, 7, dir.path()).unwrap();
        let b = train(&cfg, &data, 7, dir.path()).unwrap();
        assert_eq!(bits(a.checkpoint.model.records(true)), bits(b.checkpoint.model.records(true)));
        assert_eq!(a.epochs, b.epochs);
        let c = train(&cfg, &data, 8, dir.path()).unwrap();
        assert_ne!(bits(a.checkpoint.model.records(false)), bits(c.checkpoint.model.records(false)));
    }
}

#[test]
fn memorizes_a_tiny_set() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(Variant::ArgatePlus, dir.path());
    cfg.dataset = synth(24, vec![0, 1], 5);
    cfg.epochs = 60;
    cfg.batch_size = 8;
    cfg.optimizer.lr = 1e-2;
    let mut data = prepare_run_data(&cfg).unwrap();
    data.splits.test = data.splits.train.clone();
    let out = train(&cfg, &data, 1, dir.path()).unwrap();
    assert_eq!(evaluate_accuracy(&out.checkpoint, &data.splits.test).unwrap(), 100.0);
    let losses: Vec<f64> = out.epochs.iter().map(|e| e.train_loss).collect();
    assert!(losses.last().unwrap() < &losses[0]);
}

#[test]
fn constant_logits_score_the_majority_class() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(Variant::Baseline, dir.path());
    let data = prepare_run_data(&cfg).unwrap();
    let mut out = train(&cfg, &data, 1, dir.path()).unwrap();
    for p in out.checkpoint.model.params_mut() {
        match p.name() {
            "head.fc2.w" => p.value.fill(0.0),
            "head.fc2.b" => p.set_value(argate_core::diffcore::Tensor::vector(vec![0.0, 1.0, 0.0])),
            _ => {}
        }
    }
    let labels = [1, 1, 1, 0, 2, 1, 0, 1, 2, 1];
    let mut skewed = Dataset::new(
        data.splits.test.channels().to_vec(),
        data.splits.test.classes().to_vec(),
        16,
        Vec::new(),
        Vec::new(),
    )
    .unwrap();
    for (i, &l) in labels.iter().enumerate() {
        skewed.push(data.splits.test.example(i), l).unwrap();
    }
    assert_eq!(evaluate_accuracy(&out.checkpoint, &skewed).unwrap(), 60.0);
}

#[test]
fn inference_ignores_training_only_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(Variant::ArgateL, dir.path());
    let data = prepare_run_data(&cfg).unwrap();
    let out = train(&cfg, &data, 2, dir.path()).unwrap();
    let full = dir.path().join("full.argt");
    let main = dir.path().join("main.argt");
    save_checkpoint(&full, &out.checkpoint, true).unwrap();
    save_checkpoint(&main, &out.checkpoint, false).unwrap();
    let a = evaluate_accuracy(&load_checkpoint(&full).unwrap(), &data.splits.test).unwrap();
    let b = evaluate_accuracy(&load_checkpoint(&main).unwrap(), &data.splits.test).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, evaluate_accuracy(&out.checkpoint, &data.splits.test).unwrap());
    assert!(std::fs::metadata(&main).unwrap().len() < std::fs::metadata(&full).unwrap().len());
}

#[test]
fn channel_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(Variant::NetGated, dir.path());
    let data = prepare_run_data(&cfg).unwrap();
    let out = train(&cfg, &data, 1, dir.path()).unwrap();
    let mut other = cfg.clone();
    other.dataset = DatasetSpec::Synth {
        spec: SynthSpec {
            channels: 4,
            classes: 3,
            examples: 8,
            series_len: 16,
            ..Default::default()
        },
        test_fraction: 0.5,
    };
    let wrong = prepare_run_data(&other).unwrap();
    let err = evaluate_accuracy(&out.checkpoint, &wrong.splits.test).unwrap_err();
    assert!(matches!(err, HarnessError::ChannelMismatch { .. }), "{err}");
}

#[test]
fn fusion_weight_histograms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(Variant::ArgatePlus, dir.path());
    let data: RunData = prepare_run_data(&cfg).unwrap();
    let mut out = train(&cfg, &data, 1, dir.path()).unwrap();
    let test = &data.splits.test;

    let clean = fusion_weight_histogram(&out.checkpoint, test, &data.test_manifest, "ch1", 50).unwrap();
    assert!(clean.corrupt.empty && clean.corrupt.mean.is_none());
    assert_eq!(clean.clean.count, test.len());
    assert!((clean.clean.mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    for p in out.checkpoint.model.params_mut() {
        if p.name() == "gate.fc2.w" || p.name() == "gate.fc2.b" {
            p.value.fill(0.0);
        }
    }
    let mut manifest = CorruptionManifest::clean(test.len());
    for e in manifest.entries.iter_mut().step_by(2) {
        e.is_clean = false;
        e.failing_channels = vec!["ch1".into()];
    }
    let h = fusion_weight_histogram(&out.checkpoint, test, &manifest, "ch1", 50).unwrap();
    for cond in [&h.corrupt, &h.clean] {
        assert!((cond.mean.unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(cond.mass[16], 1.0);
    }
    assert_eq!(h.corrupt.count + h.clean.count, test.len());

    let base_cfg = config(Variant::Baseline, dir.path());
    let base = train(&base_cfg, &data, 1, dir.path()).unwrap();
    let err = fusion_weight_histogram(&base.checkpoint, test, &manifest, "ch1", 50).unwrap_err();
    assert!(matches!(err, HarnessError::UnsupportedVariant(Variant::Baseline)));
    let err = fusion_weight_histogram(&out.checkpoint, test, &manifest, "nope", 50).unwrap_err();
    assert!(matches!(err, HarnessError::UnknownChannel(_)));
}

#[test]
fn nan_loss_aborts_with_last_good_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(Variant::ArgateWs, dir.path());
    let mut data = prepare_run_data(&cfg).unwrap();
    let n = data.splits.train.len();
    for i in 0..n {
        data.splits.train.series_mut(i, 2)[3] = f64::NAN;
    }
    let err = train(&cfg, &data, 1, dir.path()).unwrap_err();
    let HarnessError::NonFinite { term, epoch, step, checkpoint, .. } = &err else {
        panic!("{err}");
    };
    assert_eq!((*term, *epoch, *step), ("main", 0, 0));
    let restored = load_checkpoint(checkpoint).unwrap();
    assert!(restored.model.records(true).iter().all(|(_, t)| t.all_finite()));
    assert!(err.to_string().contains("non-finite main loss"));
}

#[test]
fn report_and_grid() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(Variant::NetGated, &dir.path().join("single"));
    cfg.corruption = Some(CorruptionSpec::new(FailureModel::Uniform, AssignmentScheme::Random { n_rclean: 1 }, 3));
    cfg.histogram_channel = Some("ch0".into());
    let single = run_experiment(&cfg, None).unwrap();
    assert!(single.seeds[0].histogram.is_some());
    let again = run_experiment(&cfg, None).unwrap();
    assert_eq!(single.seeds[0].test_accuracy, again.seeds[0].test_accuracy);

    let rows = run_experiment_grid(std::slice::from_ref(&cfg), &dir.path().join("grid"), &Executor::InProcess).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].accuracies, vec![single.seeds[0].test_accuracy.unwrap()]);
    assert_eq!((rows[0].variant.as_str(), rows[0].setting.as_str(), rows[0].failure.as_str()), ("netgated", "rclean=1", "uniform"));

    let empty = run_experiment_grid(&[], &dir.path().join("empty"), &Executor::InProcess).unwrap();
    assert!(empty.is_empty());

    let mut broken = cfg.clone();
    broken.dataset = DatasetSpec::Har {
        root: dir.path().join("missing"),
    };
    let rows = run_experiment_grid(&[broken, cfg.clone()], &dir.path().join("mixed"), &Executor::InProcess).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].accuracies.len(), 1);
    assert_eq!(rows[0].errors.len(), 1);
    assert!(rows[0].errors[0].contains("y_train.txt"), "{:?}", rows[0].errors);
}

#[test]
fn report_schema_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = config(Variant::Baseline, dir.path());
    base.epochs = 4;
    base.optimizer.lr = 1e-2;
    base.histogram_channel = Some("ch0".into());
    let grid = GridConfig {
        base,
        variants: vec![Variant::Baseline, Variant::ArgateL],
        include_clean: true,
        schemes: vec![AssignmentScheme::Random { n_rclean: 1 }],
        failures: vec![FailureModel::Gaussian],
        corruption_seed: 9,
    };
    let rows = run_experiment_grid(&grid.expand(), dir.path(), &Executor::InProcess).unwrap();
    let csv = render_csv(&rows);
    let golden = include_str!("golden/report.csv");
    assert_eq!(csv, golden, "\n{csv}");

    let reports = argate_core::harness::collect_reports(dir.path()).unwrap();
    assert_eq!(reports.len(), 4);
    let json: serde_json::Value = serde_json::to_value(&reports[0]).unwrap();
    let mut keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(
        keys,
        ["config", "error", "failure", "mean_accuracy", "name", "seeds", "setting", "std_accuracy", "variant", "wall_seconds"]
    );
    let seed = json["seeds"][0].as_object().unwrap();
    for key in ["seed", "test_accuracy", "epochs", "histogram", "checkpoint", "wall_seconds", "error"] {
        assert!(seed.contains_key(key), "{key}");
    }
}

#[test]
fn configs_round_trip_and_expand() {
    let dir = tempfile::tempdir().unwrap();
    let grid = GridConfig {
        base: config(Variant::Baseline, dir.path()),
        variants: Variant::ALL.to_vec(),
        include_clean: true,
        schemes: [1, 5, 8].map(|n| AssignmentScheme::Random { n_rclean: n }).to_vec(),
        failures: vec![FailureModel::Uniform, FailureModel::Gaussian],
        corruption_seed: 0,
    };
    let cells = grid.expand();
    assert_eq!(cells.len(), 35);
    assert_eq!(cells[1].name, "baseline/rclean=1/uniform");
    let text = toml::to_string(&grid).unwrap();
    assert_eq!(toml::from_str::<GridConfig>(&text).unwrap(), grid);
    let one = cells[3].to_toml().unwrap();
    assert_eq!(ExperimentConfig::from_toml(&one).unwrap(), cells[3]);
}

#[test]
fn regularized_gates_downweight_failing_channels() {
    let dir = tempfile::tempdir().unwrap();
    for variant in [Variant::ArgatePlus, Variant::ArgateL] {
        let mut cfg = ExperimentConfig::new(
            "downweight",
            DatasetSpec::Synth {
                spec: SynthSpec {
                    channels: 4,
                    classes: 3,
                    examples: 1200,
                    series_len: 32,
                    informative: vec![0, 1, 2, 3],
                    noise: 0.6,
                    seed: 1,
                },
                test_fraction: 0.25,
            },
            ModelConfig {
                variant,
                encoder: EncoderSpec {
                    conv_channels: vec![6],
                    kernel: 5,
                    pool: 2,
                    features: 12,
                },
                gate_hidden: 16,
                head_hidden: 16,
                aux_hidden: 12,
                ..Default::default()
            },
        );
        cfg.seeds = vec![1, 2, 3];
        cfg.epochs = 12;
        cfg.batch_size = 32;
        cfg.optimizer.lr = 3e-3;
        cfg.track_test = false;
        cfg.corruption = Some(CorruptionSpec::new(FailureModel::Uniform, AssignmentScheme::Random { n_rclean: 1 }, 0));
        cfg.histogram_channel = Some("ch0".into());
        cfg.output_dir = dir.path().join(variant.to_string());
        let report = run_experiment(&cfg, None).unwrap();
        for s in &report.seeds {
            let h = s.histogram.as_ref().unwrap();
            let (clean, corrupt) = (h.clean.mean.unwrap(), h.corrupt.mean.unwrap());
            assert!(clean > corrupt + 0.02, "{variant} seed {}: clean {clean} corrupt {corrupt}", s.seed);
            assert!(s.test_accuracy.unwrap() > 90.0);
        }
    }
}
