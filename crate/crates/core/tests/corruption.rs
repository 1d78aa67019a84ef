mod common;

use argate_core::corruption::{
    assign_failing, build_corrupted_dataset, corrupt_channel, AssignmentScheme, CorruptionManifest, CorruptionSpec,
    FailureModel, Phase,
};
use argate_core::data::{channel_probe_accuracy, HAR_CHANNELS};
use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn noise_has_the_right_shape_and_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let out = corrupt_channel(&vec![0.5; 10_000], FailureModel::Uniform, &mut rng);
    assert_eq!(out.len(), 10_000);
    let mean = out.iter().sum::<f64>() / out.len() as f64;
    assert!(mean.abs() < 0.05, "{mean}");
    assert!(out.iter().all(|v| (-1.0..=1.0).contains(v)));

    let g = corrupt_channel(&vec![0.0; 10_000], FailureModel::Gaussian, &mut rng);
    let gm = g.iter().sum::<f64>() / g.len() as f64;
    let gv = g.iter().map(|v| (v - gm).powi(2)).sum::<f64>() / g.len() as f64;
    assert!(gm.abs() < 0.05 && (gv - 1.0).abs() < 0.05, "{gm} {gv}");

    let a = corrupt_channel(&[0.0; 16], FailureModel::Gaussian, &mut ChaCha8Rng::seed_from_u64(9));
    let b = corrupt_channel(&[0.0; 16], FailureModel::Gaussian, &mut ChaCha8Rng::seed_from_u64(9));
    assert_eq!(a, b);
}

#[test]
fn har_fixed_six_list() {
    let names: Vec<String> = HAR_CHANNELS.iter().map(|s| s.to_string()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let scheme = AssignmentScheme::har_fixed_six();
    for _ in 0..5 {
        let set = assign_failing(&scheme, &names, Phase::Test, &mut rng).unwrap();
        let got: Vec<&str> = set.iter().map(|&k| HAR_CHANNELS[k]).collect();
        assert_eq!(got, ["body_acc_z", "body_gyro_x"]);
    }
}

#[test]
fn clean_examples_are_untouched() {
    let data = corruption_fixture(300, 5, 8);
    let spec = CorruptionSpec::new(FailureModel::Gaussian, AssignmentScheme::Random { n_rclean: 2 }, 4);
    let (out, m) = build_corrupted_dataset(&data, &spec, Phase::Train).unwrap();
    assert_eq!(m.entries.iter().filter(|e| e.is_clean).count(), 100);
    for e in &m.entries {
        let i = e.example_index;
        if e.is_clean {
            assert!(e.failing_channels.is_empty());
            assert_eq!(out.example(i), data.example(i));
        } else {
            assert_eq!(e.failing_channels.len(), 3);
            for (k, name) in data.channels().iter().enumerate() {
                let same = out.series(i, k) == data.series(i, k);
                assert_eq!(same, !e.failing_channels.contains(name));
            }
        }
    }
    assert_eq!(out.labels(), data.labels());

    let all_clean = CorruptionSpec {
        clean_fraction: 1.0,
        ..spec
    };
    let (same, _) = build_corrupted_dataset(&data, &all_clean, Phase::Train).unwrap();
    assert_eq!(same, data);
}

#[test]
fn clean_count_on_har_sized_split() {
    let data = corruption_fixture(7352, 2, 1);
    let spec = CorruptionSpec::new(FailureModel::Uniform, AssignmentScheme::Random { n_rclean: 1 }, 0);
    let (_, m) = build_corrupted_dataset(&data, &spec, Phase::Train).unwrap();
    assert_eq!(m.entries.iter().filter(|e| e.is_clean).count(), 2451);
}

#[test]
fn golden_hash_and_replay() {
    assert_eq!(golden_corruption_digest(2024), golden_corruption_digest(2024));
    assert_eq!(golden_corruption_digest(2024), CORRUPTION_GOLDEN);
    assert_ne!(golden_corruption_digest(2025), CORRUPTION_GOLDEN);
}

#[test]
fn random_assignment_frequencies() {
    for (n_rclean, z) in assignment_z_scores(7) {
        assert!(z <= 3.0, "n_rclean {n_rclean}: |z| = {z}");
    }
}

#[test]
fn corrupted_channel_carries_no_label_information() {
    let data = corruption_fixture(9000, 3, 8);
    let spec = CorruptionSpec {
        clean_fraction: 0.0,
        ..CorruptionSpec::new(
            FailureModel::Uniform,
            AssignmentScheme::Fixed {
                n_fclean: 2,
                corrupted: vec!["ch0".into()],
            },
            5,
        )
    };
    let (out, _) = build_corrupted_dataset(&data, &spec, Phase::Train).unwrap();
    let train: Vec<usize> = (0..3000).collect();
    let test: Vec<usize> = (3000..9000).collect();
    let before = channel_probe_accuracy(&data.subset(&train), &data.subset(&test), 0);
    let after = channel_probe_accuracy(&out.subset(&train), &out.subset(&test), 0);
    assert!(before > 90.0, "{before}");
    assert!((after - 100.0 / 3.0).abs() <= 2.0, "{after}");
}

#[test]
fn manifest_csv_round_trip() {
    let data = corruption_fixture(50, 4, 4);
    let spec = CorruptionSpec::new(FailureModel::Uniform, AssignmentScheme::Random { n_rclean: 1 }, 8);
    let (_, m) = build_corrupted_dataset(&data, &spec, Phase::Test).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    m.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("example_index,is_clean,failing_channels,seed\n"));
    assert_eq!(CorruptionManifest::read_csv(&path).unwrap(), m);
}

#[test]
fn spec_round_trips_through_toml() {
    let spec = CorruptionSpec::new(FailureModel::Gaussian, AssignmentScheme::GenerationTest { train: (1, 2), test: (3, 8) }, 7);
    let text = toml::to_string(&spec).unwrap();
    assert_eq!(toml::from_str::<CorruptionSpec>(&text).unwrap(), spec);
}

#[test]
fn driver_fixed_lists() {
    let names: Vec<String> = argate_core::data::DRIVER_FEATURES.iter().map(|s| s.to_string()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (n_fclean, failing) in [(5, 5), (7, 7)] {
        let scheme = AssignmentScheme::driver_fixed(n_fclean).unwrap();
        assert_eq!(assign_failing(&scheme, &names, Phase::Train, &mut rng).unwrap().len(), failing);
    }
    assert!(AssignmentScheme::driver_fixed(6).is_none());
}
