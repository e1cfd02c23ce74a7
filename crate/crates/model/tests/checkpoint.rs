mod common;

use common::*;
use vivid_encoder::{Backbone, Container, EncoderError};
use vivid_model::*;
use vivid_ums::FindingState::*;

fn short_run() -> TrainState {
    let mut cfg = tiny_config();
    cfg.steps = 10;
    cfg.batch_size = 2;
    TrainState::init(cfg).unwrap()
}

fn batch(step: u64) -> Vec<Example> {
    vec![
        example([Present, Absent, Uncertain, Null], 100 + step),
        example([Absent, Null, Present, Present], 200 + step),
    ]
}

#[test]
fn save_load_save_is_byte_identical() {
    let mut st = short_run();
    for s in 0..3 {
        st.train_step(&batch(s)).unwrap();
    }
    let bytes = st.to_container().unwrap().to_bytes();
    let back = TrainState::from_container(&Container::from_bytes(&bytes).unwrap()).unwrap();
    assert_eq!(back.to_container().unwrap().to_bytes(), bytes);
    assert_eq!(back.step, 3);
    assert_eq!(back.optim, st.optim);
}

#[test]
fn resume_matches_uninterrupted_training() {
    let mut straight = short_run();
    for s in 0..10 {
        straight.train_step(&batch(s)).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.vivd");
    let mut first = short_run();
    for s in 0..5 {
        first.train_step(&batch(s)).unwrap();
    }
    first.save(&path).unwrap();
    drop(first);
    let mut resumed = TrainState::load(&path).unwrap();
    for s in 5..10 {
        resumed.train_step(&batch(s)).unwrap();
    }
    assert_eq!(
        resumed.to_container().unwrap().to_bytes(),
        straight.to_container().unwrap().to_bytes()
    );
}

#[test]
fn truncated_checkpoint_is_rejected() {
    let bytes = short_run().to_container().unwrap().to_bytes();
    for cut in [10, bytes.len() / 3, bytes.len() - 8] {
        assert!(matches!(Container::from_bytes(&bytes[..cut]), Err(EncoderError::Format(_))));
    }
}

#[test]
fn training_moves_student_but_not_teacher() {
    let mut st = short_run();
    let (t0, v0, s0) = (
        st.model.teacher.checksum(),
        st.model.vit.params().checksum(),
        st.model.spd.params().checksum(),
    );
    for s in 0..4 {
        st.train_step(&batch(s)).unwrap();
    }
    assert_eq!(st.model.teacher.checksum(), t0);
    assert_ne!(st.model.vit.params().checksum(), v0);
    assert_ne!(st.model.spd.params().checksum(), s0);
}

#[test]
fn desk_backbone_is_a_small_encoder_only_file() {
    let st = TrainState::init(RunConfig::desk()).unwrap();
    let full = st.to_container().unwrap();
    let bb = export_backbone(&full).unwrap();
    let (full_len, bb_len) = (full.to_bytes().len(), bb.to_bytes().len());
    // encoder values over encoder + projector + teacher + two moment copies
    let count = |p: &vivid_numerics::nn::ParamSet| p.num_values();
    let m = &st.model;
    let expected = count(m.vit.params()) as f64
        / (3 * count(m.vit.params()) + 3 * count(m.spd.params()) + count(m.teacher.params())) as f64;
    let ratio = bb_len as f64 / full_len as f64;
    assert!(ratio < 0.25, "{ratio}");
    assert!((ratio - expected).abs() < 0.01, "{ratio} vs {expected}");
    assert!(bb.tensors.iter().all(|(n, _)| n.starts_with("vit.")));

    let backbone = Backbone::from_container(bb).unwrap();
    let img = image(1);
    assert!(backbone.encode(&img).unwrap().bit_eq(&m.vit.encode(&img).unwrap()));
}

#[test]
fn backbone_is_not_a_training_checkpoint() {
    let st = short_run();
    let bb = export_backbone(&st.to_container().unwrap()).unwrap();
    assert!(matches!(TrainState::from_container(&bb), Err(ModelError::Checkpoint(_))));
}
