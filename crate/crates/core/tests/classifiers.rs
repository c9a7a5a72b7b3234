use beirnet::classifiers::{train, ClassifierKind, ClassifierSpec, Hyperparams};
use beirnet::linalg::Matrix;
use beirnet::stats::precision_recall_f1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("f{j}")).collect()
}

fn blobs(seed: u64, n: usize) -> (Matrix, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let x = Matrix::from_fn(n, 2, |i, _| {
        let c = if y[i] == 1 { 2.0 } else { -2.0 };
        c + noise.sample(&mut rng)
    });
    (x, y)
}

fn xor(seed: u64, n: usize) -> (Matrix, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Matrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
    let y = (0..n).map(|i| u8::from((x[(i, 0)] > 0.0) != (x[(i, 1)] > 0.0))).collect();
    (x, y)
}

fn train_f1(kind: ClassifierKind, x: &Matrix, y: &[u8]) -> f64 {
    let cols = names(x.ncols());
    let m = train(&ClassifierSpec::new(kind, 17), x, y, &cols).unwrap();
    let pred = m.predict(x, &cols).unwrap();
    precision_recall_f1(&pred, y, 1).f1
}

#[test]
fn every_kind_separates_blobs() {
    let (x, y) = blobs(1, 400);
    for kind in ClassifierKind::ALL {
        let f1 = train_f1(kind, &x, &y);
        assert!(f1 >= 0.95, "{kind}: {f1}");
    }
}

#[test]
fn nonlinear_kinds_learn_xor() {
    let (x, y) = xor(2, 400);
    for kind in ClassifierKind::ALL {
        let f1 = train_f1(kind, &x, &y);
        if kind == ClassifierKind::Lg {
            assert!(f1 <= 0.6, "LG: {f1}");
        } else {
            assert!(f1 >= 0.9, "{kind}: {f1}");
        }
    }
}

#[test]
fn identical_inputs_identical_predictions() {
    let (x, y) = xor(5, 200);
    let cols = names(2);
    for kind in ClassifierKind::ALL {
        let spec = ClassifierSpec::new(kind, 99);
        let a = train(&spec, &x, &y, &cols).unwrap().predict_proba(&x, &cols).unwrap();
        let b = train(&spec, &x, &y, &cols).unwrap().predict_proba(&x, &cols).unwrap();
        let same = a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits());
        assert!(same, "{kind}");
    }
}

#[test]
fn trees_ignore_monotone_feature_remaps() {
    let (x, y) = xor(6, 150);
    let cols = names(2);
    // strictly increasing map on feature 0 only
    let remapped = Matrix::from_fn(x.nrows(), 2, |i, j| {
        if j == 0 {
            (3.0 * x[(i, 0)]).exp()
        } else {
            x[(i, 1)]
        }
    });
    for kind in [ClassifierKind::Rf, ClassifierKind::Xg] {
        let mut spec = ClassifierSpec::new(kind, 4);
        // out-of-bag rows can sit between two bootstrap values, where a
        // midpoint in one scale and its image in the other disagree
        if let Hyperparams::Rf(p) = &mut spec.params {
            p.bootstrap = false;
        }
        let a = train(&spec, &x, &y, &cols).unwrap().predict_proba(&x, &cols).unwrap();
        let b = train(&spec, &remapped, &y, &cols)
            .unwrap()
            .predict_proba(&remapped, &cols)
            .unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12, "{kind}: {u} vs {v}");
        }
    }
}

#[test]
fn lg_puts_largest_weight_on_the_driver() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let x = Matrix::from_fn(300, 6, |_, _| noise.sample(&mut rng));
    let y: Vec<u8> = (0..300)
        .map(|i| u8::from(2.0 * x[(i, 3)] + 0.5 * noise.sample(&mut rng) > 0.0))
        .collect();
    let m = train(&ClassifierSpec::new(ClassifierKind::Lg, 0), &x, &y, &names(6)).unwrap();
    let imp = m.feature_importance().unwrap();
    let top = imp
        .iter()
        .max_by(|a, b| a.importance.total_cmp(&b.importance))
        .unwrap();
    assert_eq!(top.column, "f3");
    assert!(top.p_value.unwrap() < 0.01);
}

#[test]
fn xg_gains_skip_irrelevant_column() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = Matrix::from_fn(300, 3, |_, j| if j == 2 { 0.5 } else { rng.random_range(-1.0..1.0) });
    let y: Vec<u8> = (0..300).map(|i| u8::from(x[(i, 0)] > 0.1)).collect();
    let m = train(&ClassifierSpec::new(ClassifierKind::Xg, 0), &x, &y, &names(3)).unwrap();
    let imp = m.feature_importance().unwrap();
    let total: f64 = imp.iter().map(|i| i.importance).sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert!(imp[2].importance < 0.05);
    assert!(imp[0].importance > imp[1].importance);
}

#[test]
fn training_accuracy_beats_majority_rate() {
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_fn(120, 3, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<u8> = (0..120)
            .map(|i| u8::from(x[(i, 0)] + rng.random_range(-1.0..1.0) > -0.4))
            .collect();
        let ones = y.iter().filter(|&&v| v == 1).count();
        let majority = ones.max(120 - ones) as f64 / 120.0;
        let cols = names(3);
        for kind in ClassifierKind::ALL {
            let m = train(&ClassifierSpec::new(kind, seed), &x, &y, &cols).unwrap();
            let pred = m.predict(&x, &cols).unwrap();
            let acc = pred.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / 120.0;
            assert!(acc >= majority, "{kind} seed {seed}: {acc} < {majority}");
        }
    }
}

#[test]
fn mlp_hidden_sizes_are_configurable() {
    let (x, y) = blobs(3, 100);
    let mut spec = ClassifierSpec::new(ClassifierKind::Mlp, 1);
    if let Hyperparams::Mlp(p) = &mut spec.params {
        p.hidden = vec![4];
    }
    let m = train(&spec, &x, &y, &names(2)).unwrap();
    match &m.model {
        beirnet::classifiers::FittedModel::Mlp(net) => assert_eq!(net.layers.len(), 2),
        _ => unreachable!(),
    }
}

