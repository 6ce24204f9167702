mod common;

use common::*;
use handsign::canonical::canonicalize;
use handsign::expression::{Expression, ExpressionConfidence};
use handsign::fusion::{
    classify_frame, fuse_frame, train_frame_classifier, FrameClassifier, FrameFeature, FrameTrainConfig,
    APPEARANCE_LEN, FEATURE_LEN,
};
use handsign::landmark::validate_landmarks;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two Gaussian-ish blobs in 1094 dimensions, centred at ±`sep` along a
/// random unit direction.
fn blobs(per_class: usize, sep: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir: Vec<f64> = (0..FEATURE_LEN).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dir: Vec<f64> = dir.iter().map(|v| v / n).collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..2 * per_class {
        let y = i % 2;
        let sign = if y == 0 { -1.0 } else { 1.0 };
        xs.push(
            dir.iter()
                .map(|d| sign * sep * d + rng.gen_range(-0.05..0.05))
                .collect(),
        );
        ys.push(y);
    }
    (xs, ys)
}

fn nearest_centroid_accuracy(xs: &[Vec<f64>], ys: &[usize]) -> f64 {
    let mut c = [vec![0.0; FEATURE_LEN], vec![0.0; FEATURE_LEN]];
    let mut k = [0.0; 2];
    for (x, &y) in xs.iter().zip(ys) {
        c[y].iter_mut().zip(x).for_each(|(a, b)| *a += b);
        k[y] += 1.0;
    }
    for y in 0..2 {
        c[y].iter_mut().for_each(|a| *a /= k[y]);
    }
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
    let ok = xs
        .iter()
        .zip(ys)
        .filter(|(x, &y)| (d(x, &c[1]) < d(x, &c[0])) as usize == y)
        .count();
    ok as f64 / xs.len() as f64
}

#[test]
fn separable_blobs_train_to_high_accuracy() {
    let (xs, ys) = blobs(100, 0.5, 5);
    // The independent check confirms the construction is separable.
    assert_eq!(nearest_centroid_accuracy(&xs, &ys), 1.0);
    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let config = FrameTrainConfig {
        epochs: 100,
        batch_size: 20,
        seed: 1,
        ..Default::default()
    };
    let (m, log) = train_frame_classifier(&refs, &ys, 2, &config).unwrap();
    let correct = refs
        .iter()
        .zip(&ys)
        .filter(|(x, &y)| {
            let p = m.predict(x).unwrap();
            (p[1] > p[0]) as usize == y
        })
        .count();
    let acc = correct as f64 / refs.len() as f64;
    assert!(acc >= 0.99, "training accuracy {acc}");
    assert!(log.final_loss().unwrap() < log.epoch_losses[0]);
}

#[test]
fn fused_classification_is_pose_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let m = FrameClassifier::<f64>::random(FEATURE_LEN, 10, 0.1, &mut rng);
    let e = ExpressionConfidence::blended(Expression::Happy, 0.3);
    let a = vec![0.0; APPEARANCE_LEN];
    for _ in 0..200 {
        let pts = random_hand(&mut rng);
        let q = random_rotation(&mut rng);
        let c = rng.gen_range(0.1..10.0);
        let t = [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)];
        let moved: Vec<[f64; 3]> = pts
            .iter()
            .map(|p| {
                let r = apply(&q, *p);
                [c * r[0] + t[0], c * r[1] + t[1], c * r[2] + t[2]]
            })
            .collect();
        let f0 = fuse_frame(&canonicalize(&validate_landmarks(&pts).unwrap()).unwrap(), &e, &a).unwrap();
        let f1 = fuse_frame(&canonicalize(&validate_landmarks(&moved).unwrap()).unwrap(), &e, &a).unwrap();
        let p0 = classify_frame(&f0, &m).unwrap();
        let p1 = classify_frame(&f1, &m).unwrap();
        let d = p0.iter().zip(&p1).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(d <= 1e-4, "output moved by {d}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig {
        failure_persistence: None,
        ..ProptestConfig::with_cases(16)
    })]

    #[test]
    fn fc_gradient_matches_finite_differences(seed in any::<u64>(), d in 2usize..40, n in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = FrameClassifier::<f64>::random(d, n, 0.5, &mut rng);
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = rng.gen_range(0..n);
        let (loss, g) = m.loss_and_gradient(&x, y).unwrap();
        prop_assert_eq!(loss, m.loss(&x, y).unwrap());
        let mut params = m.weights.clone();
        params.extend(&m.bias);
        let numeric = central_differences(&params, 1e-5, |p| {
            FrameClassifier::from_parts(d, n, p[..d * n].to_vec(), p[d * n..].to_vec())
                .unwrap()
                .loss(&x, y)
                .unwrap()
        });
        let mut analytic = g.weights;
        analytic.extend(&g.bias);
        prop_assert!(max_relative_error(&analytic, &numeric, 1e-4) < 1e-6);
    }

    #[test]
    fn fusion_is_injective(
        s in prop::collection::vec(-5.0f64..5.0, 63),
        a in prop::collection::vec(-1.0f64..1.0, APPEARANCE_LEN),
        k in 0usize..7,
    ) {
        let e = ExpressionConfidence::one_hot(Expression::ALL[k]);
        let f = FrameFeature::from_parts(&s, e.probs(), &a).unwrap();
        prop_assert_eq!(f.skeleton(), &s[..]);
        prop_assert_eq!(f.expression(), &e.probs()[..]);
        prop_assert_eq!(f.appearance(), &a[..]);
        prop_assert_eq!(f.as_slice().len(), FEATURE_LEN);
    }
}
