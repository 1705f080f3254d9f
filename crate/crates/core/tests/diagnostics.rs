use adabatch_core::data::{make_synthetic, Dataset, SyntheticKind, SyntheticSpec};
use adabatch_core::diagnostics::{
    approx_exact_agreement, esg_check_on, exact_norm_test, seq_lemma_check, EsgKind, GradientTable,
};
use adabatch_core::objectives::{Differentiable, Objective};
use adabatch_core::{Error, ParamVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn anchors(n: usize, p: usize, seed: u64) -> Dataset {
    make_synthetic(&SyntheticSpec {
        kind: SyntheticKind::QuadraticAnchors,
        n,
        p,
        classes: 2,
        noise: 1.0,
        seed,
    })
    .unwrap()
}

/// For `f(x; xi) = 1/2 ||x - xi||^2` the per-sample gradient is `x - xi`, so
/// the exact norm-test numerator is the anchors' population variance over `b`.
fn anchor_population_variance(data: &Dataset) -> f64 {
    let n = data.len() as f64;
    let p = data.feature_dim();
    let mean: Vec<f64> = (0..p)
        .map(|j| (0..data.len()).map(|i| data.feature(i)[j]).sum::<f64>() / n)
        .collect();
    (0..data.len())
        .map(|i| {
            data.feature(i)
                .iter()
                .zip(&mean)
                .map(|(a, m)| (a - m) * (a - m))
                .sum::<f64>()
        })
        .sum::<f64>()
        / n
}

#[test]
fn exact_norm_lhs_matches_closed_form_on_quadratic() {
    let data = anchors(80, 4, 3);
    let x = ParamVector::new(vec![2.0, 1.0, -1.0, 0.5]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for b in [1, 4, 16] {
        let r =
            exact_norm_test(&Objective::quadratic(4), &x, &data, b, 0.5, 2000, &mut rng).unwrap();
        let closed = anchor_population_variance(&data) / b as f64;
        assert!(
            (r.lhs - closed).abs() <= 3.0 * r.std_err,
            "b={b}: {} vs {closed} (se {})",
            r.lhs,
            r.std_err
        );
    }
}

#[test]
fn approximate_numerator_agrees_with_exact_in_expectation() {
    let data = make_synthetic(&SyntheticSpec {
        kind: SyntheticKind::GaussianBlobs,
        n: 300,
        p: 5,
        classes: 3,
        noise: 1.0,
        seed: 8,
    })
    .unwrap();
    let obj = Objective::logistic(5, 3, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let x = ParamVector::new(
        (0..obj.param_dim())
            .map(|_| rng.gen_range(-0.5..0.5))
            .collect(),
    )
    .unwrap();
    let table = GradientTable::new(&obj, &x, &data).unwrap();
    for b in [4, 32] {
        let a = approx_exact_agreement(&table, b, 1000, &mut rng).unwrap();
        assert!(a.within(2.0), "b={b}: {a:?}");
    }
}

#[test]
fn esg_bound_holds_where_exact_tests_hold() {
    let data = anchors(60, 3, 5);
    let obj = Objective::quadratic(3);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    for _ in 0..10 {
        let x = ParamVector::new((0..3).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
        let table = GradientTable::new(&obj, &x, &data).unwrap();
        let moments = table.moments();
        for kind in [
            EsgKind::Norm { eta: 0.5 },
            EsgKind::Augmented {
                theta: 0.5,
                nu: 0.5,
            },
        ] {
            let b = match kind {
                EsgKind::Augmented { theta, nu } => moments.augmented_test_batch(theta, nu),
                EsgKind::Norm { eta } | EsgKind::Coordinatewise { eta } => {
                    moments.norm_test_batch(eta)
                }
            };
            match esg_check_on(&table, b.max(2) + 1, kind, 1000, &mut rng) {
                Ok(est) => {
                    assert!(est.within_bound(3.0), "{kind:?}: {est:?}");
                    assert!(est.tau_hat >= 1.0 - 3.0 * est.std_err);
                    checked += 1;
                }
                Err(Error::PreconditionNotMet(_)) => {}
                Err(e) => panic!("{e}"),
            }
        }
    }
    assert!(checked >= 10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn sequence_inequalities_hold(a0 in 1e-6f64..100.0, tail in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1e3], 0..200)) {
        let mut a = vec![a0];
        a.extend(tail);
        let c = seq_lemma_check(&a).unwrap();
        prop_assert!(c.holds(), "{c:?}");
    }
}
