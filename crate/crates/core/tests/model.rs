mod common;

use proptest::prelude::*;
use rand::Rng;

use sha_asr::checkpoint::{from_bytes, load, save, to_bytes};
use sha_asr::model::{build_chunks, sha_overhead, AcousticModel, HeadMode, ModelConfig, ModelKind};
use sha_asr::{seed, Error, Lang, Tensor};

fn config(depth: usize) -> ModelConfig {
    ModelConfig {
        feature_dim: 5,
        hidden_dim: 7,
        num_shared_blocks: 4,
        num_chenones: 9,
        split_depth: depth,
        lookahead: 2,
    }
}

fn random_chunk(rng: &mut seed::Rng, c: &ModelConfig) -> Tensor {
    let n = c.chunk_len() * c.feature_dim;
    Tensor::new(vec![c.chunk_len(), c.feature_dim], (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
}

fn perturbed_sha(s: u64, depth: usize) -> AcousticModel {
    let mut rng = seed::rng(s, "model-test");
    let mut m = AcousticModel::sha(config(depth), &mut rng).unwrap();
    for t in m.params_mut() {
        for v in t.data_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rows_are_distributions_in_every_mode(s in 0u64..10_000, depth in prop::sample::select(vec![0usize, 1, 2, 4])) {
        let sha = perturbed_sha(s, depth);
        let mut rng = seed::rng(s, "chunk");
        let chunk = random_chunk(&mut rng, &sha.config);
        let single = AcousticModel::single_head(sha.config.clone(), &mut rng).unwrap();
        let outs = [
            single.forward_singlehead(&chunk).unwrap(),
            sha.forward_sha(&chunk).unwrap(),
            sha.forward_splithead(&chunk, Lang::En).unwrap(),
            sha.forward_splithead(&chunk, Lang::Hi).unwrap(),
        ];
        for p in &outs {
            prop_assert_eq!(p.num_chenones(), sha.config.num_chenones);
            let sum: f64 = p.row(0).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
        }
        let hidden = sha.hidden(&chunk).unwrap();
        let (w_en, w_hi) = sha.attention_weights(&hidden).unwrap();
        prop_assert!((w_en + w_hi - 1.0).abs() < 1e-9 && w_en >= 0.0 && w_hi >= 0.0);
    }

    #[test]
    fn forced_weights_select_one_tower(s in 0u64..10_000) {
        let sha = perturbed_sha(s, 1);
        let chunk = random_chunk(&mut seed::rng(s, "chunk"), &sha.config);
        for (w, lang) in [([1.0, 0.0], Lang::En), ([0.0, 1.0], Lang::Hi)] {
            let a = sha.forward_sha_with_weights(&chunk, w).unwrap();
            let b = sha.forward_splithead(&chunk, lang).unwrap();
            for (x, y) in a.row(0).iter().zip(b.row(0)) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn identical_towers_ignore_the_weights(s in 0u64..10_000, w in 0.0f64..1.0) {
        let mut rng = seed::rng(s, "identity");
        let single = AcousticModel::single_head(config(2), &mut rng).unwrap();
        let sha = AcousticModel::split_from_single(&single, &mut rng).unwrap();
        let chunk = random_chunk(&mut rng, &single.config);
        let a = single.forward_singlehead(&chunk).unwrap();
        let b = sha.forward_sha_with_weights(&chunk, [w, 1.0 - w]).unwrap();
        for (x, y) in a.row(0).iter().zip(b.row(0)) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn checkpoints_round_trip_bitwise(s in 0u64..10_000, depth in 0usize..=4) {
        let sha = perturbed_sha(s, depth);
        prop_assert_eq!(&from_bytes(&to_bytes(&sha)).unwrap(), &sha);
        let single = AcousticModel::single_head(config(depth), &mut seed::rng(s, "single")).unwrap();
        prop_assert_eq!(&from_bytes(&to_bytes(&single)).unwrap(), &single);
    }

    #[test]
    fn truncated_checkpoints_are_rejected(s in 0u64..1000, cut in 1usize..200) {
        let bytes = to_bytes(&perturbed_sha(s, 1));
        let end = bytes.len().saturating_sub(cut);
        prop_assert!(matches!(from_bytes(&bytes[..end]), Err(Error::Checkpoint(_))));
    }
}

#[test]
fn overhead_is_one_tower_plus_attention() {
    for depth in [0, 1, 2, 4] {
        let c = config(depth);
        let single = AcousticModel::single_head(c.clone(), &mut seed::rng(1, "a")).unwrap();
        let sha = AcousticModel::sha(c.clone(), &mut seed::rng(1, "b")).unwrap();
        let h = c.hidden_dim;
        let by_hand = depth * (h * h + h) + h * c.num_chenones + c.num_chenones + (h + 2 * h + 2);
        assert_eq!(sha.param_count() - single.param_count(), by_hand);
        assert_eq!(sha_overhead(&c), by_hand);
        assert_eq!(sha.kind(), ModelKind::Sha);
    }
}

#[test]
fn streaming_posteriors_use_replicated_tail() {
    let m = perturbed_sha(3, 1);
    let mut rng = seed::rng(4, "frames");
    let frames = Tensor::new(vec![6, 5], (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let all = m.posteriors(&frames, HeadMode::Sha).unwrap();
    assert_eq!(all.frames(), 6);
    for t in 0..6 {
        let chunk = build_chunks(&frames, &[t], m.config.chunk_len()).unwrap();
        let one = m.forward_sha(&chunk).unwrap();
        for (x, y) in all.row(t).iter().zip(one.row(0)) {
            assert!((x - y).abs() < 1e-12);
        }
    }
    let last = build_chunks(&frames, &[5], 3).unwrap();
    assert_eq!(last.row(1), frames.row(5));
    assert_eq!(last.row(2), frames.row(5));
}

#[test]
fn checkpoint_files_and_bad_magic() {
    let m = perturbed_sha(9, 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save(&m, &path).unwrap();
    assert_eq!(load(&path).unwrap(), m);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] ^= 0xff;
    assert!(matches!(from_bytes(&bytes), Err(Error::Checkpoint(_))));
    let mut long = to_bytes(&m);
    long.push(0);
    assert!(matches!(from_bytes(&long), Err(Error::Checkpoint(_))));
}
