use beirnet::linalg::Matrix;
use beirnet::stats::{adf_test, bh_adjust, f_test_nested, mcnemar, mcnemar_corrected, ols_fit, AdfLags};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Largest `k` with `p_(k) <= k alpha / m`, everything at or below it rejected.
fn bh_brute(p: &[f64], alpha: f64) -> Vec<bool> {
    let m = p.len();
    let mut best = 0.0f64;
    for k in 1..=m {
        let below = p.iter().filter(|&&x| x <= k as f64 * alpha / m as f64).count();
        if below >= k {
            best = best.max(k as f64 * alpha / m as f64);
        }
    }
    p.iter().map(|&x| best > 0.0 && x <= best).collect()
}

#[test]
fn bh_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let m = rng.random_range(1..40);
        let p: Vec<f64> = (0..m)
            .map(|_| if rng.random_bool(0.3) { rng.random::<f64>() * 0.01 } else { rng.random() })
            .collect();
        let bh = bh_adjust(&p, 0.05);
        assert_eq!(bh.rejected, bh_brute(&p, 0.05), "{p:?}");
        assert!(bh.adjusted.iter().zip(&p).all(|(a, r)| *a >= r * (1.0 - 1e-12) && *a <= 1.0));
    }
}

#[test]
fn single_restriction_f_is_t_squared() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let n = 80;
        let x = Matrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { rng.sample(StandardNormal) });
        let y: Vec<f64> = (0..n)
            .map(|i| 0.3 * x[(i, 1)] + 0.1 * x[(i, 2)] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let full = ols_fit(&x, &y).unwrap();
        let restricted = ols_fit(&x.columns(0, 2).into_owned(), &y).unwrap();
        let f = f_test_nested(&restricted, &full, 1).unwrap();
        let t = full.t_stat(2);
        assert!((f.statistic - t * t).abs() < 1e-8, "{} vs {}", f.statistic, t * t);
    }
}

#[test]
fn mcnemar_reference_value() {
    let r = mcnemar_corrected(15, 5);
    assert!((r.statistic - 4.05).abs() < 1e-12);
    assert!((r.p_value - 0.0441).abs() < 1e-3, "{}", r.p_value);
}

#[test]
fn mcnemar_from_predictions() {
    let truth = vec![1u8; 40];
    let mut model = vec![1u8; 40];
    let mut bench = vec![1u8; 40];
    // 30 discordant pairs in favour of the model, 5 against
    for v in bench.iter_mut().take(30) {
        *v = 0;
    }
    for v in model.iter_mut().skip(35) {
        *v = 0;
    }
    let r = mcnemar(&model, &bench, &truth).unwrap();
    assert!((r.statistic - 24.0f64.powi(2) / 35.0).abs() < 1e-12);
    assert!(r.p_value < 1e-4);
}

#[test]
fn adf_separates_noise_from_random_walks() {
    let mut rejected_noise = 0;
    let mut kept_walks = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise: Vec<f64> = (0..1000).map(|_| rng.sample(StandardNormal)).collect();
        let walk: Vec<f64> = noise
            .iter()
            .scan(0.0, |acc, e| {
                *acc += e;
                Some(*acc)
            })
            .collect();
        if adf_test(&noise, AdfLags::Auto).unwrap().rejects_unit_root(0.05) {
            rejected_noise += 1;
        }
        if !adf_test(&walk, AdfLags::Auto).unwrap().rejects_unit_root(0.05) {
            kept_walks += 1;
        }
    }
    assert!(rejected_noise >= 95, "white noise rejected in {rejected_noise}/100");
    assert!(kept_walks >= 90, "random walks retained in {kept_walks}/100");
}

proptest! {
    #[test]
    fn bh_adjusted_is_monotone_in_raw(p in prop::collection::vec(0.0f64..=1.0, 1..60)) {
        let bh = bh_adjust(&p, 0.1);
        for i in 0..p.len() {
            for j in 0..p.len() {
                if p[i] <= p[j] {
                    prop_assert!(bh.adjusted[i] <= bh.adjusted[j] + 1e-15);
                }
            }
        }
    }

    #[test]
    fn mcnemar_is_symmetric(b in 0u64..200, c in 0u64..200) {
        let x = mcnemar_corrected(b, c);
        let y = mcnemar_corrected(c, b);
        prop_assert_eq!(x.statistic, y.statistic);
        prop_assert!((0.0..=1.0).contains(&x.p_value));
    }
}
