mod common;

use rand_distr::{Distribution, Normal};
use so3_density::density::{
    init_density, DensityGrid, GaussianParams, InitialDensity, PropagateOptions, VelocityGrid, VonMisesSo3Params,
};
use so3_density::dynamics::{Lgvi, PendulumParams, RigidBodyState, StepConfig};
use so3_density::estimation::*;
use so3_density::harmonic::So3Quadrature;
use so3_density::marginals::{attitude_marginal, sphere_marginal, SphereGrid, DEFAULT_CIRCLE_NODES};
use so3_density::parallel::Workers;
use so3_density::so3::{Axis, Rotation, Vec3};

const W: Workers = Workers::single();

fn prior(n_att: usize, n_vel: usize) -> DensityGrid {
    let vm = VonMisesSo3Params::new(Rotation::identity(), 8.0).unwrap();
    let gp = GaussianParams::isotropic(Vec3::repeat(4.14), 0.1414).unwrap();
    let q = So3Quadrature::cubic(n_att).unwrap();
    init_density(&vm, &gp, q, gp.box_grid(6.0, n_vel).unwrap(), W)
        .unwrap()
        .0
}

fn noisy(model: &MeasurementModel, truth: &RigidBodyState, step: u64, rng: &mut impl rand::Rng) -> Measurement {
    let clean = model.observe(&truth.attitude, &truth.omega);
    let sd = model.cov_direction()[(0, 0)].sqrt();
    let sw = model.cov_omega()[(0, 0)].sqrt();
    let z: [f64; 6] = std::array::from_fn(|i| {
        let s = if i < 3 { sd } else { sw };
        clean[i] + Normal::new(0.0, s).unwrap().sample(rng)
    });
    Measurement::new(step, z).unwrap()
}

#[test]
fn flat_likelihood_returns_the_prior() {
    let p = prior(9, 5);
    let (post, c) = bayes_update(&p, &|_: &Rotation, _: &Vec3| 3.0, W).unwrap();
    assert!((c - 3.0).abs() < 1e-10);
    for (a, b) in post.values().iter().zip(p.values()) {
        assert!((a - b).abs() < 1e-10 * b.max(1.0));
    }
}

#[test]
fn flat_prior_gives_the_normalized_likelihood() {
    let q = So3Quadrature::cubic(9).unwrap();
    let vel = VelocityGrid::new(Vec3::repeat(-1.0), Vec3::repeat(1.0), [5, 5, 5]).unwrap();
    let flat = DensityGrid::uniform(q.clone(), vel.clone());
    let model = MeasurementModel::isotropic(Vec3::z(), 0.5, 0.7).unwrap();
    let z = Measurement::new(0, [0.1, 0.2, 0.9, 0.3, -0.2, 0.1]).unwrap();
    let (post, c) = bayes_update(
        &flat,
        &Observed {
            model: &model,
            measurement: &z,
        },
        W,
    )
    .unwrap();
    // independent normalization: plain double loop over the product rule
    let lik = |a: usize, v: usize| model.likelihood(&z, &q.rotation(a), &vel.node(v));
    let mut integral = 0.0;
    for a in 0..q.len() {
        for v in 0..vel.len() {
            integral += q.weight(a) * vel.weight(v) * lik(a, v);
        }
    }
    assert!((c - integral / vel.volume()).abs() < 1e-10 * c);
    for a in 0..q.len() {
        for v in 0..vel.len() {
            assert!((post.value(a, v) - lik(a, v) / integral).abs() < 1e-10 * (lik(a, v) / integral).max(1.0));
        }
    }
}

#[test]
fn vanishing_evidence_is_reported() {
    let p = prior(9, 5);
    let r = bayes_update(&p, &|_: &Rotation, _: &Vec3| 0.0, W);
    assert!(matches!(r, Err(so3_density::Error::DegenerateUpdate { .. })));
}

#[test]
fn likelihood_integrates_to_one_over_measurement_space() {
    let model = MeasurementModel::isotropic(Vec3::x(), 0.2, 0.3).unwrap();
    let r = common::random_rotation(&mut common::rng(5));
    let w = Vec3::new(0.5, -0.5, 1.0);
    let center = model.observe(&r, &w);
    // the trapezoid rule converges spectrally for a Gaussian on ±6σ
    let n = 13;
    let half = |i: usize| if i < 3 { 6.0 * 0.2 } else { 6.0 * 0.3 };
    let weights: Vec<Vec<f64>> = (0..6)
        .map(|i| {
            let h = 2.0 * half(i) / (n - 1) as f64;
            (0..n).map(|j| if j == 0 || j == n - 1 { 0.5 * h } else { h }).collect()
        })
        .collect();
    let mut total = 0.0;
    let mut idx = [0usize; 6];
    loop {
        let z: [f64; 6] = std::array::from_fn(|i| center[i] - half(i) + 2.0 * half(i) * idx[i] as f64 / (n - 1) as f64);
        let wt: f64 = (0..6).map(|i| weights[i][idx[i]]).product();
        total += wt * model.likelihood(&Measurement::new(0, z).unwrap(), &r, &w);
        let mut d = 0;
        while d < 6 {
            idx[d] += 1;
            if idx[d] < n {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == 6 {
            break;
        }
    }
    assert!((total - 1.0).abs() < 1e-6, "{total}");
}

#[test]
fn sharp_direction_measurement_lowers_axis_spread() {
    let p = prior(17, 5);
    let model = MeasurementModel::isotropic(Vec3::z(), 0.1, 10.0).unwrap();
    let z = Measurement::new(0, [0.0, 0.0, 1.0, 4.14, 4.14, 4.14]).unwrap();
    let (post, _) = bayes_update(
        &p,
        &Observed {
            model: &model,
            measurement: &z,
        },
        W,
    )
    .unwrap();
    let cv = |d: &DensityGrid| {
        sphere_marginal(
            &attitude_marginal(d, W),
            Axis::Z,
            SphereGrid::new(33, 65).unwrap(),
            DEFAULT_CIRCLE_NODES,
            W,
        )
        .unwrap()
        .circular_variance()
    };
    let (before, after) = (cv(&p), cv(&post));
    assert!(after < 0.5 * before, "{before} -> {after}");
}

fn lgvi() -> Lgvi {
    Lgvi::new(PendulumParams::reference(), StepConfig::default()).unwrap()
}

fn reference_initial() -> (VonMisesSo3Params, GaussianParams) {
    (
        VonMisesSo3Params::new(Rotation::identity(), 8.0).unwrap(),
        GaussianParams::isotropic(Vec3::repeat(4.14), 0.1414).unwrap(),
    )
}

/// Truth starts at the prior mean; one measurement every `every` steps.
fn synthetic_measurements(
    model: &MeasurementModel,
    every: usize,
    seed: u64,
) -> (Vec<Measurement>, Vec<RigidBodyState>) {
    let truth = lgvi()
        .trajectory(
            &RigidBodyState::new(Rotation::identity(), Vec3::repeat(4.14)),
            5 * every,
        )
        .unwrap();
    let mut rng = common::rng(seed);
    let ms = (1..=5)
        .map(|j| noisy(model, &truth[j * every], (j * every) as u64, &mut rng))
        .collect();
    (ms, truth)
}

#[test]
fn synthetic_truth_is_localized_after_five_updates() {
    let model = MeasurementModel::isotropic(Vec3::new(0.0, 0.6, 0.8), 0.05, 0.05).unwrap();
    let (ms, truth) = synthetic_measurements(&model, 20, 0);
    let (vm, gp) = reference_initial();
    let lgvi = lgvi();
    let (p, c) = init_density(
        &vm,
        &gp,
        So3Quadrature::cubic(13).unwrap(),
        gp.box_grid(6.0, 7).unwrap(),
        W,
    )
    .unwrap();
    let initial = InitialDensity {
        attitude: vm,
        velocity: gp,
        c,
    };
    let (steps, posterior) =
        estimate_cycle_exact(&initial, &p, &lgvi, &model, &ms, None, &PropagateOptions::default()).unwrap();
    assert_eq!(steps.len(), 5);
    let last = steps.last().unwrap();
    assert_eq!(last.step, 100);
    let mode = posterior.mode_from_grid(&last.density).unwrap();
    let err = mode.attitude.angle_to(&truth[100].attitude);
    assert!(err < 0.1, "mode is {err} rad from the truth");
    assert!((mode.omega - truth[100].omega).norm() < 0.2);
}

#[test]
fn exact_posterior_matches_the_grid_at_nodes() {
    let model = MeasurementModel::isotropic(Vec3::new(0.0, 0.6, 0.8), 0.3, 0.3).unwrap();
    let (ms, _) = synthetic_measurements(&model, 2, 1);
    let (vm, gp) = reference_initial();
    let lgvi = lgvi();
    let (p, c) = init_density(
        &vm,
        &gp,
        So3Quadrature::cubic(9).unwrap(),
        gp.box_grid(6.0, 5).unwrap(),
        W,
    )
    .unwrap();
    let initial = InitialDensity {
        attitude: vm,
        velocity: gp,
        c,
    };
    let (steps, posterior) = estimate_cycle_exact(
        &initial,
        &p,
        &lgvi,
        &model,
        &ms[..3],
        Some(9),
        &PropagateOptions::default(),
    )
    .unwrap();
    assert_eq!(steps.len(), 4);
    assert!(steps[3].evidence.is_none());
    assert_eq!(posterior.step(), 9);
    let d = &steps[3].density;
    let nv = d.velocity().len();
    for i in (0..d.len()).step_by(997) {
        let (r, w) = (d.quadrature().rotation(i / nv), d.velocity().node(i % nv));
        let exact = so3_density::density::DensitySource::density(&posterior, &r, &w).unwrap();
        assert!(
            (d.values()[i] - exact).abs() <= 1e-12 * exact.max(1e-300),
            "{} vs {exact}",
            d.values()[i]
        );
    }
}

#[test]
fn no_measurements_is_pure_propagation() {
    let model = MeasurementModel::isotropic(Vec3::z(), 0.3, 0.3).unwrap();
    let p = prior(9, 5);
    let opts = PropagateOptions::default();
    let steps = estimate_cycle(&p, &lgvi(), &model, &[], Some(3), &opts).unwrap();
    assert_eq!(steps.len(), 1);
    let (direct, _) = so3_density::density::propagate(&p, &lgvi(), 3, &opts).unwrap();
    assert_eq!(steps[0].density, direct);
}

#[test]
fn evidence_prefers_the_true_reference_direction() {
    let a = Vec3::new(0.0, 0.6, 0.8);
    let truth_model = MeasurementModel::isotropic(a, 0.3, 0.3).unwrap();
    // the same direction rotated by 0.5 rad
    let wrong_a = so3_density::so3::exp_so3(&(Vec3::x() * 0.5)).apply(&a);
    let wrong = MeasurementModel::isotropic(wrong_a, 0.3, 0.3).unwrap();
    let (ms, _) = synthetic_measurements(&truth_model, 5, 7);
    let p = prior(13, 7);
    let opts = PropagateOptions::default();
    let good = mean_log_evidence(&estimate_cycle(&p, &lgvi(), &truth_model, &ms, None, &opts).unwrap()).unwrap();
    let bad = mean_log_evidence(&estimate_cycle(&p, &lgvi(), &wrong, &ms, None, &opts).unwrap()).unwrap();
    assert!(good > bad, "{good} vs {bad}");
}
