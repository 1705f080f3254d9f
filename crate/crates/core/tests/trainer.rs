use adabatch_core::controllers::{ControllerConfig, ControllerKind};
use adabatch_core::data::{make_synthetic, Dataset, SyntheticKind, SyntheticSpec};
use adabatch_core::objectives::{Differentiable, Objective};
use adabatch_core::optimizers::{LrSchedule, OptimizerConfig, OptimizerKind};
use adabatch_core::sampling::Sampling;
use adabatch_core::trainer::{run, run_with, NoClock, RunConfig};
use adabatch_core::ParamVector;
use proptest::prelude::*;

fn blobs(n: usize, noise: f64) -> Dataset {
    make_synthetic(&SyntheticSpec {
        kind: SyntheticKind::GaussianBlobs,
        n,
        p: 8,
        classes: 3,
        noise,
        seed: 42,
    })
    .unwrap()
}

fn logreg_cfg(eta: f64, b_max: usize, total: u64) -> RunConfig {
    let mut cfg = RunConfig::new(
        Objective::logistic(8, 3, 0.0),
        OptimizerConfig::new(OptimizerKind::AdaGrad),
        total,
    );
    cfg.controller = Some(ControllerConfig::norm(eta, b_max));
    cfg
}

fn controller(kind: ControllerKind, b_max: usize) -> ControllerConfig {
    match kind {
        ControllerKind::Norm => ControllerConfig::norm(0.5, b_max),
        ControllerKind::NormCoordinatewise => ControllerConfig::norm_coordinatewise(0.5, b_max),
        ControllerKind::InnerProduct => ControllerConfig::inner_product(0.5, b_max),
        ControllerKind::AugmentedInnerProduct => {
            ControllerConfig::augmented_inner_product(0.5, 0.5, b_max)
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn budget_is_met_with_less_than_one_batch_of_overshoot(
        total in 2u64..3000,
        b_init in 2usize..10,
        kind in prop::sample::select(ControllerKind::ALL.to_vec()),
        seed in 0u64..1000,
        replace in any::<bool>(),
    ) {
        let data = blobs(300, 1.5);
        let b_max = 300;
        prop_assume!(total >= b_init as u64);
        let mut cfg = logreg_cfg(0.5, b_max, total);
        cfg.controller = Some(controller(kind, b_max));
        cfg.b_init = b_init;
        cfg.seed = seed;
        cfg.sampling = if replace { Sampling::WithReplacement } else { Sampling::WithoutReplacement };
        let out = run(&cfg, &data, None).unwrap();
        let spent: u64 = out.records.iter().map(|r| r.batch_size as u64).sum();
        prop_assert!(spent >= total && spent < total + b_max as u64);
        prop_assert_eq!(spent, out.summary.samples);
        let mut prev_samples = 0;
        for w in out.records.windows(2) {
            prop_assert!(w[1].batch_size >= w[0].batch_size);
        }
        for r in &out.records {
            prop_assert_eq!(r.samples_seen, prev_samples + r.batch_size as u64);
            prev_samples = r.samples_seen;
        }
    }
}

#[test]
fn replay_is_deterministic() {
    let data = blobs(400, 1.0);
    let mut cfg = logreg_cfg(0.2, 400, 20_000);
    cfg.schedule = LrSchedule::warmup_cosine(0.05, 0.005, 2000, 20_000);
    cfg.optimizer = OptimizerConfig::new(OptimizerKind::Adam);
    let a = run(&cfg, &data, Some(&data)).unwrap();
    let b = run(&cfg, &data, Some(&data)).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.params, b.params);
}

#[test]
fn logged_loss_equals_recomputed_batch_loss() {
    let data = blobs(300, 1.0);
    let cfg = logreg_cfg(0.3, 300, 5_000);
    let mut seen = Vec::new();
    run_with(&cfg, &data, None, &NoClock, |view| {
        seen.push((
            view.record.clone(),
            view.iterate.clone(),
            view.batch.to_vec(),
        ));
    })
    .unwrap();
    let obj = &cfg.objective;
    let stride = (seen.len() / 10).max(1);
    let checked: Vec<_> = seen.iter().step_by(stride).take(10).collect();
    assert_eq!(checked.len(), 10);
    for (record, iterate, batch) in checked {
        let loss = obj.batch_loss(iterate, &data, batch).unwrap();
        assert!(
            (loss - record.train_loss).abs() <= 1e-12 * loss.abs().max(1.0),
            "step {}",
            record.step
        );
        assert_eq!(batch.len(), record.batch_size);
    }
}

#[test]
fn identical_gradients_keep_the_initial_batch_for_every_controller() {
    let data = make_synthetic(&SyntheticSpec {
        kind: SyntheticKind::QuadraticAnchors,
        n: 50,
        p: 4,
        classes: 2,
        noise: 0.0,
        seed: 1,
    })
    .unwrap();
    for kind in ControllerKind::ALL {
        let mut cfg = RunConfig::new(
            Objective::quadratic(4),
            OptimizerConfig::new(OptimizerKind::AdaGradNorm),
            u64::MAX / 2,
        );
        cfg.controller = Some(controller(kind, 50));
        cfg.b_init = 3;
        cfg.max_steps = Some(1000);
        cfg.init = Some(ParamVector::new(vec![4.0, -1.0, 2.0, 0.5]).unwrap());
        let out = run(&cfg, &data, None).unwrap();
        assert_eq!(out.records.len(), 1000);
        assert!(out.records.iter().all(|r| r.batch_size == 3), "{kind:?}");
    }
}

#[test]
fn smaller_eta_grows_batches_more() {
    let data = blobs(2000, 2.0);
    let avg = |eta: f64| {
        let mut cfg = logreg_cfg(eta, 2000, 200_000);
        cfg.seed = 3;
        run(&cfg, &data, None).unwrap().summary
    };
    let tight = avg(0.1);
    let loose = avg(0.25);
    assert!(
        tight.avg_batch_size > loose.avg_batch_size,
        "{tight:?} vs {loose:?}"
    );
    assert!(tight.steps < loose.steps);
}
