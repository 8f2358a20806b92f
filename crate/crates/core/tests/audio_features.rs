//! Feature maps of the synthetic utterances.

use churn_fusion::audio::{build_feature_map, AudioClip, FeatureMap, FeatureParams};
use churn_fusion::data::EmotionLabel;
use churn_fusion::synth::synth_audio;

fn map(clip: &AudioClip) -> FeatureMap {
    build_feature_map(clip, &FeatureParams::default()).unwrap()
}

fn centroid(maps: &[FeatureMap]) -> Vec<f64> {
    let flat: Vec<Vec<f64>> = maps.iter().map(FeatureMap::flatten).collect();
    (0..flat[0].len()).map(|j| flat.iter().map(|f| f[j]).sum::<f64>() / flat.len() as f64).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[test]
fn positive_and_negative_clips_are_nearest_centroid_separable() {
    let make = |e: EmotionLabel, seeds: std::ops::Range<u64>| -> Vec<FeatureMap> {
        seeds.map(|s| map(&synth_audio(e, 1.0, s).unwrap())).collect()
    };
    let mut pos = make(EmotionLabel::Happiness, 0..6);
    pos.extend(make(EmotionLabel::Neutral, 0..6));
    let mut neg = make(EmotionLabel::Anger, 0..6);
    neg.extend(make(EmotionLabel::Sadness, 0..6));
    let (cp, cn) = (centroid(&pos), centroid(&neg));
    // Held-out clips from fresh seeds.
    for (e, negative) in [
        (EmotionLabel::Happiness, false),
        (EmotionLabel::Neutral, false),
        (EmotionLabel::Anger, true),
        (EmotionLabel::Sadness, true),
    ] {
        for s in 100..104 {
            let f = map(&synth_audio(e, 1.0, s).unwrap()).flatten();
            assert_eq!(dist(&f, &cn) < dist(&f, &cp), negative, "{e:?} seed {s}");
        }
    }
}

#[test]
fn steady_clip_map_barely_moves_under_time_shift() {
    let clip = synth_audio(EmotionLabel::Happiness, 2.0, 4).unwrap();
    let shifted = AudioClip::new(clip.samples[300..].to_vec(), clip.sample_rate).unwrap();
    let other = synth_audio(EmotionLabel::Anger, 2.0, 4).unwrap();
    let (a, b, c) = (map(&clip), map(&shifted), map(&other));
    assert!(a.distance(&b) < 0.1 * a.distance(&c), "shift {} vs class gap {}", a.distance(&b), a.distance(&c));
}

#[test]
fn map_layout() {
    let p = FeatureParams { n_mels: 32, ..FeatureParams::default() };
    let m = build_feature_map(&synth_audio(EmotionLabel::Sadness, 1.0, 1).unwrap(), &p).unwrap();
    assert_eq!(m.n_mels, 32);
    assert!(m.image.iter().all(|row| row.len() == 32 && row.iter().all(|v| v.is_finite())));
    assert_eq!(m.flatten().len(), 96);
}
