use monattn::checkpoint::ModelCheckpoint;
use monattn::numkit::SeededRng;
use monattn::seq2seq::{evaluate, train_loop, TrainConfig};
use monattn::Error;

fn small_run() -> (TrainConfig, ModelCheckpoint) {
    let cfg = TrainConfig {
        d_model: 8,
        batch_size: 4,
        max_steps: 12,
        eval_interval: 6,
        eval_examples: 10,
        seed: 5,
        ..TrainConfig::default()
    };
    let task = cfg.task().unwrap();
    let (ck, _) = train_loop(&task, &cfg).unwrap();
    (cfg, ck)
}

#[test]
fn save_load_save_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ck) = small_run();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    ck.save(&a).unwrap();
    let loaded = ModelCheckpoint::load(&a).unwrap();
    assert_eq!(loaded, ck);
    loaded.save(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn evaluation_survives_round_trip() {
    let (cfg, ck) = small_run();
    let task = cfg.task().unwrap();
    let loaded = ModelCheckpoint::from_json(&ck.to_json().unwrap()).unwrap();
    let before = evaluate(&task, &ck, 20, &mut SeededRng::new(1, 3)).unwrap();
    let after = evaluate(&task, &loaded, 20, &mut SeededRng::new(1, 3)).unwrap();
    assert_eq!(before, after);
    assert_eq!(loaded.task_hash, task.hash());
}

#[test]
fn truncated_file_is_an_error() {
    let (_, ck) = small_run();
    let text = ck.to_json().unwrap();
    for cut in [0, 1, text.len() / 3, text.len() - 3] {
        let err = ModelCheckpoint::from_json(&text[..cut]).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{err}");
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.json");
    std::fs::write(&path, &text[..text.len() / 2]).unwrap();
    assert!(ModelCheckpoint::load(&path).is_err());
    assert!(ModelCheckpoint::load(&dir.path().join("absent.json")).is_err());
}

#[test]
fn version_mismatch_is_reported() {
    let (_, ck) = small_run();
    let text = ck.to_json().unwrap().replacen("\"version\": 1", "\"version\": 2", 1);
    let err = ModelCheckpoint::from_json(&text).unwrap_err().to_string();
    assert!(err.contains("version 2"), "{err}");
}

#[test]
fn edited_payload_fails_checksum() {
    let (_, ck) = small_run();
    let text = ck.to_json().unwrap();
    let edited = text.replacen("\"step\": 12", "\"step\": 13", 1);
    assert_ne!(edited, text);
    let err = ModelCheckpoint::from_json(&edited).unwrap_err().to_string();
    assert!(err.contains("checksum"), "{err}");
}

#[test]
fn wrong_format_tag_is_rejected() {
    let (_, ck) = small_run();
    let text = ck.to_json().unwrap().replacen("monattn-checkpoint", "other", 1);
    assert!(ModelCheckpoint::from_json(&text).unwrap_err().to_string().contains("format"));
}
