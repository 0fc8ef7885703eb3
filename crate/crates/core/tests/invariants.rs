//! Property tests over the public API.

use ndarray::{Array3, ArrayD, IxDyn};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use jointscape::audio::{apply_gain, mix_at, peak_normalize, AudioClip};
use jointscape::eval::segment_metrics;
use jointscape::features::{labels_from_annotation, FeatureConfig, FoldSplit, Standardizer};
use jointscape::model::{Checkpoint, Crnn};
use jointscape::pipeline::{featurize_recording, reduced_network, FeatureStore, StoredRecording};
use jointscape::synth::annotation::round6;
use jointscape::synth::{AnnotatedEvent, AnnotationTrack, SceneOntology};

fn clip(samples: Vec<f64>) -> AudioClip {
    AudioClip::new(samples, 22_050).unwrap()
}

fn samples(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0f64..1.0, len)
}

fn events(classes: Vec<String>, dur: f64) -> impl Strategy<Value = Vec<AnnotatedEvent>> {
    proptest::collection::vec((0.0..dur - 0.01, 0.01..dur, 0..classes.len()), 0..6).prop_map(move |v| {
        v.into_iter()
            .map(|(on, len, c)| AnnotatedEvent {
                onset_s: on,
                offset_s: (on + len).min(dur),
                label: classes[c].clone(),
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gain_round_trips(x in samples(64), g in -40.0f64..40.0) {
        let back = apply_gain(&apply_gain(&clip(x.clone()), g), -g);
        for (a, b) in back.samples().iter().zip(&x) {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-3));
        }
    }

    #[test]
    fn peak_normalize_reaches_unit_peak(x in samples(32)) {
        let n = peak_normalize(&clip(x.clone()));
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.0 {
            prop_assert!((n.peak() - 1.0).abs() < 1e-12);
        } else {
            prop_assert_eq!(n.peak(), 0.0);
        }
    }

    #[test]
    fn mixing_order_does_not_matter(
        base in samples(200),
        a in samples(40),
        b in samples(60),
        at in 0usize..160,
        bt in 0usize..140,
        ga in -20.0f64..6.0,
        gb in -20.0f64..6.0,
    ) {
        let rate = 22_050.0;
        let (base, a, b) = (clip(base), clip(a), clip(b));
        let (ta, tb) = (at as f64 / rate, bt as f64 / rate);
        let ab = mix_at(&mix_at(&base, &a, ta, ga).unwrap(), &b, tb, gb).unwrap();
        let ba = mix_at(&mix_at(&base, &b, tb, gb).unwrap(), &a, ta, ga).unwrap();
        for (x, y) in ab.samples().iter().zip(ba.samples()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn overlay_past_the_end_is_rejected(base in samples(50), over in samples(20), start in 31usize..60) {
        let r = mix_at(&clip(base), &clip(over), start as f64 / 22_050.0, 0.0);
        prop_assert!(matches!(r, Err(jointscape::Error::OutOfBounds)));
    }

    #[test]
    fn annotation_text_round_trips(ev in events(vec!["car".into(), "dog barking".into()], 30.0)) {
        // Synthesis stores times at microsecond resolution, as the text does.
        let ev = ev
            .into_iter()
            .map(|e| AnnotatedEvent { onset_s: round6(e.onset_s), offset_s: round6(e.offset_s), ..e })
            .collect();
        let track = AnnotationTrack::new("street", 30.0, ev);
        let back = AnnotationTrack::parse(&track.to_text(), "memory").unwrap();
        prop_assert_eq!(back, track);
    }

    #[test]
    fn identical_tracks_score_perfectly(ev in events(vec!["a".into(), "b".into(), "c".into()], 20.0)) {
        let m = segment_metrics(&ev, &ev, 1.0, 20.0).unwrap();
        prop_assert_eq!(m.error_rate(), Some(0.0));
        prop_assert_eq!(m.f1(), 1.0);
    }

    #[test]
    fn f1_is_symmetric(
        r in events(vec!["a".into(), "b".into()], 15.0),
        p in events(vec!["a".into(), "b".into()], 15.0),
    ) {
        let rp = segment_metrics(&r, &p, 1.0, 15.0).unwrap();
        let pr = segment_metrics(&p, &r, 1.0, 15.0).unwrap();
        prop_assert_eq!(rp.f1(), pr.f1());
        prop_assert_eq!(rp.counts.tp, pr.counts.tp);
        prop_assert_eq!(rp.counts.substitutions, pr.counts.substitutions);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn label_rows_match_frame_intersections(ev in events(vec!["knock".into(), "phone".into(), "speech".into()], 5.0)) {
        let ontology = SceneOntology::desk();
        let hop = 512.0 / 22_050.0;
        let track = AnnotationTrack::new("office", 5.0, ev);
        let m = labels_from_annotation(&track, 216, hop, &ontology).unwrap();
        for (f, row) in m.values.outer_iter().enumerate() {
            let (a, b) = (f as f64 * hop, (f + 1) as f64 * hop);
            let active: std::collections::BTreeSet<&str> = track
                .events
                .iter()
                .filter(|e| e.onset_s < b && e.offset_s > a)
                .map(|e| e.label.as_str())
                .collect();
            let s: u32 = row.iter().take(m.n_scenes).map(|&v| u32::from(v)).sum();
            prop_assert_eq!(s, 1);
            prop_assert_eq!(row[ontology.scene_index("office").unwrap()], 1);
            for (k, label) in ontology.events.iter().enumerate() {
                prop_assert_eq!(row[m.n_scenes + k] == 1, active.contains(label.as_str()));
            }
            prop_assert_eq!(row[m.n_scenes + m.n_events] == 1, active.is_empty());
        }
    }

    #[test]
    fn standardizer_ignores_held_out_recordings(seed in 0u64..1_000, scale in 0.1f64..10.0) {
        let (store, perturbed) = small_store(seed, scale);
        prop_assert_eq!(&store.standardizers, &perturbed.standardizers);
    }

    #[test]
    fn standardized_training_features_are_centered(seed in 0u64..1_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors: Vec<_> = (0..3)
            .map(|_| jointscape::features::FeatureTensor {
                values: Array3::from_shape_simple_fn((20, 4, 2), || rng.gen_range(-5.0f32..5.0)),
                frame_hop_s: 0.02,
            })
            .collect();
        let s = Standardizer::fit(&tensors).unwrap();
        let applied: Vec<_> = tensors.iter().map(|t| s.apply(t).unwrap()).collect();
        for band in 0..4 {
            for ch in 0..2 {
                let vals: Vec<f64> = applied
                    .iter()
                    .flat_map(|t| t.values.slice(ndarray::s![.., band, ch]).iter().map(|&v| f64::from(v)).collect::<Vec<_>>())
                    .collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
                prop_assert!(mean.abs() < 1e-5);
                prop_assert!((var - 1.0).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_predictions(seed in 0u64..1_000) {
        let net = Crnn::<f32>::new(reduced_network(), seed).unwrap();
        let rng = ChaCha8Rng::seed_from_u64(seed);
        let bytes = Checkpoint::from_network(&net, &rng).to_bytes();
        let mut restored = Checkpoint::from_bytes(&bytes).unwrap().to_network::<f32>().unwrap();
        let mut original = net;
        let mut xr = ChaCha8Rng::seed_from_u64(seed + 1);
        let x: ArrayD<f32> = ArrayD::from_shape_simple_fn(IxDyn(&[1, 6, 16, 2]), || xr.gen_range(-1.0..1.0));
        prop_assert_eq!(original.predict(&x).unwrap(), restored.predict(&x).unwrap());
        prop_assert_eq!(Checkpoint::from_network(&restored, &rng).to_bytes(), bytes);
    }
}

/// Two stores over the same folds: in the second, every held-out recording
/// of every fold is rescaled noise.
fn small_store(seed: u64, scale: f64) -> (FeatureStore, FeatureStore) {
    let ontology = SceneOntology::desk();
    let mut config = FeatureConfig::default();
    config.n_mels = 16;
    config.n_fft = 512;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let audio: Vec<(String, AudioClip)> = (0..6)
        .map(|i| {
            let x: Vec<f64> = (0..11_025).map(|_| rng.gen_range(-0.5..0.5)).collect();
            (format!("r{i}"), AudioClip::new(x, 22_050).unwrap())
        })
        .collect();
    let scene = &ontology.scenes[0];
    let record = |id: &str, a: &AudioClip| -> StoredRecording {
        let track = AnnotationTrack::new(scene.clone(), 0.5, vec![]);
        featurize_recording(id, id, a, &track, &ontology, &config).unwrap()
    };
    let folds = vec![FoldSplit {
        fold_id: 0,
        train: vec!["r0".into(), "r1".into(), "r2".into()],
        validation: vec!["r3".into()],
        test: vec!["r4".into(), "r5".into()],
    }];
    let plain: Vec<StoredRecording> = audio.iter().map(|(id, a)| record(id, a)).collect();
    let changed: Vec<StoredRecording> = audio
        .iter()
        .map(|(id, a)| {
            if folds[0].train.contains(id) {
                record(id, a)
            } else {
                let loud: Vec<f64> = a.samples().iter().map(|v| v * scale + 0.05).collect();
                record(id, &AudioClip::new(loud, 22_050).unwrap())
            }
        })
        .collect();
    (
        FeatureStore::build(ontology.clone(), config.clone(), plain, folds.clone()).unwrap(),
        FeatureStore::build(ontology, config, changed, folds).unwrap(),
    )
}
