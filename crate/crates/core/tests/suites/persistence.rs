use sharplab_core::autodiff::ParamVector;
use sharplab_core::model::{ModelConfig, ModelState};
use sharplab_core::optim::AdamWState;
use sharplab_core::persistence::{
    canonical_json, content_hash, decode_checkpoint, encode_checkpoint, load_checkpoint, load_state, save_checkpoint,
    Dtype, FORMAT_VERSION,
};
use sharplab_core::Error;
use std::path::PathBuf;

fn golden_state() -> (ModelState, AdamWState) {
    let cfg = ModelConfig { layers: 1, heads: 1, hidden_dim: 2, vocab_size: 3, context_len: 2, seed: 0 };
    let n = cfg.param_count();
    let values: Vec<f64> = (0..n).map(|i| (i as f64 - 20.0) / 16.0 + 1.0 / 3.0).collect();
    let state = ModelState::unflatten(&cfg, ParamVector::new(values).unwrap()).unwrap();
    let opt = AdamWState {
        m: (0..n).map(|i| i as f64 * 1e-3).collect(),
        v: (0..n).map(|i| (i * i) as f64 * 1e-6).collect(),
        t: 3,
    };
    (state, opt)
}

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden_tiny.shlb")
}

pub fn golden_file_is_stable() {
    let (state, opt) = golden_state();
    let bytes = encode_checkpoint(&state, Some(&opt), Dtype::F64).unwrap();
    if std::env::var_os("SHLB_BLESS").is_some() {
        std::fs::write(golden_path(), &bytes).unwrap();
    }
    let golden = std::fs::read(golden_path()).unwrap();
    assert_eq!(bytes, golden, "encoder output drifted from the pinned file");
    assert_eq!(&golden[..4], b"SHLB");
    assert_eq!(u16::from_le_bytes([golden[4], golden[5]]), FORMAT_VERSION);
    let c = decode_checkpoint(&golden, true).unwrap();
    assert_eq!(c.state, state);
    assert_eq!(c.optimizer.unwrap(), opt);
}

pub fn round_trip_is_bitwise_with_and_without_optimizer() {
    let dir = tempfile::tempdir().unwrap();
    let state = ModelState::init(&ModelConfig::default()).unwrap();
    let mut opt = AdamWState::new(state.params().len());
    opt.t = 17;
    opt.m.iter_mut().enumerate().for_each(|(i, m)| *m = (i as f64).sin());
    opt.v.iter_mut().enumerate().for_each(|(i, v)| *v = (i as f64).cos().abs());
    let p = dir.path().join("a.shlb");
    save_checkpoint(&p, &state, Some(&opt), Dtype::F64).unwrap();
    let c = load_checkpoint(&p).unwrap();
    assert!(c.state.params().iter().zip(state.params().iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(c.optimizer.unwrap(), opt);
    assert_eq!(load_state(&p).unwrap(), state);
    let q = dir.path().join("b.shlb");
    save_checkpoint(&q, &state, None, Dtype::F64).unwrap();
    assert_eq!(load_checkpoint(&q).unwrap().optimizer, None);
}

pub fn f32_files_widen_exactly() {
    let state = ModelState::init(&ModelConfig { layers: 1, ..Default::default() }).unwrap();
    let c = decode_checkpoint(&encode_checkpoint(&state, None, Dtype::F32).unwrap(), true).unwrap();
    for (a, b) in c.state.params().iter().zip(state.params().iter()) {
        assert_eq!(*a, *b as f32 as f64);
    }
}

pub fn damaged_files_are_rejected() {
    let golden = std::fs::read(golden_path()).unwrap();
    for cut in 0..golden.len() {
        match decode_checkpoint(&golden[..cut], true) {
            Err(Error::Corrupt(_)) => {}
            other => panic!("truncated at {cut}: {other:?}"),
        }
    }
    let mut bad = golden.clone();
    bad[4] = 9;
    assert!(matches!(decode_checkpoint(&bad, true), Err(Error::Version { found: 9, .. })));

    // flip one payload bit: the payload ends 8 bytes before the optimizer flag
    let (state, opt) = golden_state();
    let plain = encode_checkpoint(&state, None, Dtype::F64).unwrap();
    let mut flipped = plain.clone();
    let at = plain.len() - 1 - 8 - 3;
    flipped[at] ^= 1;
    assert!(matches!(decode_checkpoint(&flipped, true), Err(Error::Corrupt(_))));

    let mut renamed = encode_checkpoint(&state, Some(&opt), Dtype::F64).unwrap();
    let pos = renamed.windows(5).position(|w| w == b"embed").unwrap();
    renamed[pos] = b'x';
    assert!(matches!(decode_checkpoint(&renamed, true), Err(Error::Structure(_))));

    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_checkpoint(&dir.path().join("missing.shlb")), Err(Error::NotFound(_))));
}

pub fn canonical_json_sorts_keys() {
    let v: serde_json::Value = serde_json::from_str(r#"{"b": 1, "a": {"d": 2, "c": 3}}"#).unwrap();
    assert_eq!(canonical_json(&v).unwrap(), r#"{"a":{"c":3,"d":2},"b":1}"#);
    let w: serde_json::Value = serde_json::from_str(r#"{"a": {"c": 3, "d": 2}, "b": 1}"#).unwrap();
    assert_eq!(content_hash(&canonical_json(&v).unwrap()), content_hash(&canonical_json(&w).unwrap()));
}
