use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use byzopt::harness::dataset::Dataset;
use byzopt::objectives::{clip_gradient, local_optimize, sublevel_radius, LogisticObjective, Objective, QuadraticObjective};
use byzopt::vecops::{dist, dot, norm};

fn unit(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let n = norm(&v);
    v.iter().map(|x| x / n).collect()
}

/// Draws points near `x_star` until `count` lie in the `eps`-sublevel set, and
/// checks each is within `delta`.
fn assert_sublevel_inside(obj: &dyn Objective, x_star: &[f64], eps: f64, delta: f64, rng: &mut ChaCha8Rng) {
    let f_star = obj.value(x_star);
    let mut inside = 0;
    let mut draws = 0;
    while inside < 1000 {
        draws += 1;
        assert!(draws < 200_000, "sublevel set too thin to sample");
        let u = unit(x_star.len(), rng);
        let t = rng.random_range(0.0..1.5 * delta);
        let x: Vec<f64> = x_star.iter().zip(&u).map(|(a, b)| a + t * b).collect();
        if obj.value(&x) <= f_star + eps {
            inside += 1;
            assert!(dist(&x, x_star) <= delta, "|x - x*| = {} > {delta}", dist(&x, x_star));
        }
    }
}

#[test]
fn quadratic_sublevel_radius_contains_sublevel_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let q = QuadraticObjective::random(3, &mut rng);
        let x_star = q.minimizer().to_vec();
        for eps in [0.01, 1.0, 50.0] {
            let delta = sublevel_radius(&q, &x_star, eps).unwrap();
            assert_sublevel_inside(&q, &x_star, eps, delta, &mut rng);
        }
    }
}

#[test]
fn logistic_sublevel_radius_contains_sublevel_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let data = Dataset::synthetic(120, 3);
    let obj = LogisticObjective::new(&data.features[..30], &data.labels[..30], 1.0, 5.0).unwrap();
    let x_star = local_optimize(&obj, 1e-10).unwrap();
    for eps in [0.05, 1.0, 10.0] {
        let delta = sublevel_radius(&obj, &x_star, eps).unwrap();
        assert_sublevel_inside(&obj, &x_star, eps, delta, &mut rng);
    }
}

#[test]
fn gradient_angle_respects_condition_number() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let d = rng.random_range(2..=4);
        let a = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng)) + DMatrix::identity(d, d) * 0.5;
        let q = a.transpose() * &a;
        let q = (&q + q.transpose()) * 0.5;
        let b: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let obj = QuadraticObjective::new(q, b).unwrap();
        let sv = a.singular_values();
        let kappa = (sv.max() / sv.min()).powi(2);
        let bound = obj.gradient_angle_bound().unwrap();
        assert!(bound.cos() >= 1.0 / kappa - 1e-9);
        for _ in 0..100 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
            let diff: Vec<f64> = x.iter().zip(obj.minimizer()).map(|(a, b)| a - b).collect();
            let g = obj.subgradient(&x);
            let cos = dot(&g, &diff) / (norm(&g) * norm(&diff));
            assert!(cos >= 1.0 / kappa - 1e-9, "cos = {cos}, 1/kappa = {}", 1.0 / kappa);
            assert!(cos >= bound.cos() - 1e-9);
        }
    }
}

proptest! {
    #[test]
    fn clipping_preserves_direction(g in proptest::collection::vec(-1e3f64..1e3, 1..6), bound in 1e-3f64..1e3) {
        let c = clip_gradient(&g, bound);
        prop_assert!(norm(&c) <= bound * (1.0 + 1e-12));
        let gn = norm(&g);
        if gn > 0.0 {
            let s = norm(&c) / gn;
            prop_assert!(s > 0.0 && s <= 1.0 + 1e-12);
            for (ci, gi) in c.iter().zip(&g) {
                prop_assert!((ci - s * gi).abs() <= 1e-9 * (1.0 + gi.abs()));
            }
        }
    }

    #[test]
    fn quadratic_minimizer_is_stationary(seed in any::<u64>(), d in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = QuadraticObjective::random(d, &mut rng);
        let g = q.subgradient(q.minimizer());
        prop_assert!(norm(&g) <= 1e-8 * (1.0 + norm(q.b())));
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        prop_assert!(q.value(&x) >= q.value(q.minimizer()) - 1e-9);
    }
}
