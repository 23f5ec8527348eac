use disfluency::corpus::Label;
use disfluency::features::FeatureVector;
use disfluency::reranker::{prepare, train_reranker, RerankerModel, TrainingInstance};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NAMES: &[&str] = &["s1", "s2", "s3", "CopyFlags_1_0", "WordsFlags_0_1_0"];

fn random_instances(rng: &mut ChaCha8Rng, n: usize) -> Vec<TrainingInstance> {
    (0..n)
        .map(|_| {
            let len = rng.gen_range(3..8);
            let gold: Vec<Label> = (0..len)
                .map(|_| if rng.gen_bool(0.3) { Label::Edited } else { Label::Fluent })
                .collect();
            let k = rng.gen_range(1..6);
            let mut feats = Vec::new();
            let mut labels = Vec::new();
            for _ in 0..k {
                let mut fv = FeatureVector::new();
                for name in NAMES {
                    if name.contains("Flags") {
                        if rng.gen_bool(0.5) {
                            fv.insert(name.to_string(), 1.0);
                        }
                    } else {
                        fv.insert(name.to_string(), rng.gen_range(-20.0..5.0));
                    }
                }
                feats.push(fv);
                labels.push(
                    (0..len)
                        .map(|_| if rng.gen_bool(0.3) { Label::Edited } else { Label::Fluent })
                        .collect::<Vec<_>>(),
                );
            }
            TrainingInstance::new(feats, &labels, &gold)
        })
        .collect()
}

/// Max component-wise relative error between the analytic gradient and
/// central differences.
fn gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut insts = random_instances(&mut rng, 12);
    insts[0].gold += 1.0;
    let (_, obj) = prepare(&insts, 1e-2).unwrap();
    let w: Vec<f64> = (0..obj.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let g = obj.gradient(&w);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..obj.dim {
        let mut up = w.clone();
        up[k] += h;
        let mut down = w.clone();
        down[k] -= h;
        let numeric = (obj.value(&up) - obj.value(&down)) / (2.0 * h);
        worst = worst.max((g[k] - numeric).abs() / g[k].abs().max(numeric.abs()).max(1e-6));
    }
    worst
}

#[test]
fn gradient_matches_finite_differences() {
    for seed in 0..20 {
        let e = gradient_error(seed);
        assert!(e < 1e-5, "seed {seed}: {e}");
    }
}

fn separable(n: usize) -> Vec<TrainingInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    (0..n)
        .map(|i| {
            let gold = vec![Label::Fluent, Label::Edited, Label::Fluent, Label::Fluent];
            let k = 2 + i % 4;
            let oracle = i % k;
            let mut feats = Vec::new();
            let mut labels = Vec::new();
            for c in 0..k {
                let mut fv = FeatureVector::new();
                fv.insert("noise".into(), rng.gen_range(-3.0..3.0));
                let l = if c == oracle {
                    fv.insert("Oracle_flag".into(), 1.0);
                    gold.clone()
                } else {
                    let mut l = vec![Label::Fluent; 4];
                    l[(c + 2) % 4] = Label::Edited;
                    if c % 2 == 0 {
                        l[1] = Label::Fluent;
                    }
                    l
                };
                feats.push(fv);
                labels.push(l);
            }
            TrainingInstance::new(feats, &labels, &gold)
        })
        .collect()
}

#[test]
fn separable_toy_set_is_solved() {
    let insts = separable(40);
    let m = train_reranker(&insts, 1e-4, 200).unwrap();
    for (i, inst) in insts.iter().enumerate() {
        let k = inst.features.len();
        assert_eq!(m.choose(&inst.features).unwrap(), i % k);
    }
    assert!(m.weight("Oracle_flag").unwrap() > 0.0);
}

#[test]
fn heavy_regularization_keeps_weights_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let insts = random_instances(&mut rng, 30);
    let light = train_reranker(&insts, 1e-4, 200).unwrap();
    let heavy = train_reranker(&insts, 1e4, 200).unwrap();
    let norm = |m: &RerankerModel| m.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    assert!(norm(&heavy) < 1e-4, "{}", norm(&heavy));
    assert!(norm(&heavy) < norm(&light));
    let p = heavy.posterior(&insts[0].features);
    for x in &p {
        assert!((x - 1.0 / p.len() as f64).abs() < 1e-3);
    }
}

#[test]
fn model_file_round_trips() {
    let m = train_reranker(&separable(12), 1e-3, 50).unwrap();
    let mut buf = Vec::new();
    m.write(&mut buf).unwrap();
    assert!(buf.starts_with(b"DFRR1\n"));
    let back = RerankerModel::read(buf.as_slice()).unwrap();
    assert_eq!(back, m);
    let mut again = Vec::new();
    back.write(&mut again).unwrap();
    assert_eq!(buf, again);
    assert!(RerankerModel::read(&b"DFRR2\n{}"[..]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn training_never_loses_to_zero_weights(seed in 0u64..10_000, lambda in prop::sample::select(vec![1e-4, 1e-3, 1e-2, 1.0])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut insts = random_instances(&mut rng, 10);
        insts[0].gold += 1.0;
        let (_, obj) = prepare(&insts, lambda).unwrap();
        let m = train_reranker(&insts, lambda, 60).unwrap();
        let zero = obj.value(&vec![0.0; obj.dim]);
        prop_assert!(obj.value(&m.weights) >= zero);
        let ef = obj.expected_f(&m.weights);
        prop_assert!((0.0..=1.0).contains(&ef));
        for inst in &insts {
            let p = m.posterior(&inst.features);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
