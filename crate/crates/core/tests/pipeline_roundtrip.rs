use focalbci_core::classifier::{ClassifierArch, TrainConfig};
use focalbci_core::data::{dataset_to_csv, generate_synthetic, parse_dataset, split, CsvSchema};
use focalbci_core::intent::{CommandMap, IntentSession, INVALID_LABEL};
use focalbci_core::model_file::{load_model, ModelFile};
use focalbci_core::pipeline::{run_pipeline, PipelineConfig};

fn small(selector: &str) -> PipelineConfig {
    PipelineConfig {
        k_prime: 42,
        selector: selector.into(),
        focal_length: 12,
        arch: ClassifierArch {
            hidden: 8,
            ..ClassifierArch::default()
        },
        train: TrainConfig {
            iterations: 30,
            ..TrainConfig::default()
        },
        seed: 3,
        ..PipelineConfig::default()
    }
}

#[test]
fn csv_train_save_load_decode() {
    let ds = generate_synthetic(20, 14, 0.1, 5).unwrap();
    let ds = parse_dataset(&dataset_to_csv(&ds), &CsvSchema::with_channels(14)).unwrap();
    let (train, test) = split(&ds, 0.8, 1).unwrap();
    let out = run_pipeline(&train, &small("center"), &mut |_, _| {}).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    out.file.save(&path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(ModelFile::load(&path).unwrap().to_json(), out.file.to_json());

    let xs: Vec<&[f64]> = test.samples.iter().map(|s| s.features.as_slice()).collect();
    assert_eq!(loaded.predict_batch(&xs).unwrap(), out.model.predict_batch(&xs).unwrap());
    assert_eq!(loaded.evaluate(&test).unwrap(), out.model.evaluate(&test).unwrap());

    let sample = &test.samples[0].features;
    let label = loaded.predict(sample).unwrap().0;
    let window = vec![sample.clone(); 8];
    let mut session = IntentSession::new(&loaded, CommandMap::typing(), 8, 3);
    let emitted: Vec<_> = (0..3).map(|_| session.process_window(&window).unwrap()).collect();
    assert!(emitted.iter().all(|o| o.decision == label));
    assert!(emitted[..2].iter().all(|o| o.emitted.is_none()));
    if label == INVALID_LABEL {
        assert!(emitted[2].emitted.is_none());
    } else {
        let (l, cmd) = emitted[2].emitted.clone().unwrap();
        assert_eq!(l, label);
        assert_eq!(cmd, CommandMap::typing().command(label).unwrap());
    }
}

#[test]
fn search_selection_lies_inside_the_shuffled_vector() {
    let ds = generate_synthetic(10, 14, 0.1, 2).unwrap();
    let cfg = PipelineConfig {
        sam: focalbci_core::sam::SamConfig {
            episodes: 2,
            steps: 6,
            initial_length: 20,
            ..Default::default()
        },
        ..small("sam")
    };
    let out = run_pipeline(&ds, &cfg, &mut |_, _| {}).unwrap();
    let s = out.selection.state;
    assert!(s.is_valid(42, 10));
    assert_eq!(out.model.focal, s);
    assert!(out.file.hyperparameters.sam.is_some());
}
