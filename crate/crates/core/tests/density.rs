mod common;

use std::f64::consts::{PI, TAU};

use proptest::prelude::*;
use rand::Rng;
use so3_density::density::{
    attitude_spectrum, init_density, propagate, pull_back, reconstruct, DensityGrid, GaussianParams, InitialDensity,
    PropagateOptions, VelocityBox, VelocityGrid, VonMisesSo3Params,
};
use so3_density::dynamics::{Lgvi, PendulumParams, RigidBodyState, StepConfig};
use so3_density::harmonic::{irrep, So3Quadrature};
use so3_density::parallel::Workers;
use so3_density::so3::{Euler313, Rotation, Vec3};

fn reference_init(n_att: usize, n_vel: usize) -> DensityGrid {
    let vm = VonMisesSo3Params::new(Rotation::identity(), 8.0).unwrap();
    let gp = GaussianParams::isotropic(Vec3::repeat(4.14), 0.1414).unwrap();
    let q = So3Quadrature::cubic(n_att).unwrap();
    init_density(&vm, &gp, q, gp.box_grid(6.0, n_vel).unwrap(), Workers::single())
        .unwrap()
        .0
}

fn lgvi() -> Lgvi {
    Lgvi::new(PendulumParams::reference(), StepConfig::default()).unwrap()
}

#[test]
fn reference_initial_density_is_normalized() {
    let d = reference_init(17, 9);
    let mass = d.mass(Workers::single());
    assert!((mass - 1.0).abs() < 1e-12, "{mass}");
    assert!(d.quadrature_error_estimate(Workers::single()).unwrap().is_finite());
}

#[test]
fn grid_normalization_converges_to_the_exact_constant() {
    let vm = VonMisesSo3Params::new(Rotation::identity(), 8.0).unwrap();
    let gp = GaussianParams::isotropic(Vec3::repeat(4.14), 0.1414).unwrap();
    let exact = InitialDensity::exact(vm, gp).c;
    // the angle-density integral against brute-force Simpson on a fine grid
    let n = 20_001;
    let w = common::simpson_weights(n, 0.0, PI);
    let z: f64 = w
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let t = PI * i as f64 / (n - 1) as f64;
            w * (8.0 * (t.cos() - 1.0)).exp() * (1.0 - t.cos()) / PI
        })
        .sum();
    assert!((vm.normalizer() - z).abs() < 1e-12 * z);
    let mut prev = f64::INFINITY;
    for (na, nv) in [(9, 9), (13, 13), (17, 17)] {
        let q = So3Quadrature::cubic(na).unwrap();
        let (_, c) = init_density(&vm, &gp, q, gp.box_grid(6.0, nv).unwrap(), Workers::single()).unwrap();
        let err = (c / exact - 1.0).abs();
        assert!(err < prev / 4.0, "{na},{nv}: {err}");
        prev = err;
    }
    assert!(prev < 1e-3, "{prev}");
}

#[test]
fn concentrated_von_mises_mass_near_mean() {
    // Oracle: the rotation angle of a matrix von Mises sample has density
    // ∝ e^{κ(cos θ - 1)} (1 - cos θ) on [0, π].
    let kappa = 200.0;
    let radial = |t: f64| (kappa * (t.cos() - 1.0)).exp() * (1.0 - t.cos());
    let n = 200_001;
    let integrate = |a: f64, b: f64| -> f64 {
        let w = common::simpson_weights(n, a, b);
        w.iter()
            .enumerate()
            .map(|(i, w)| w * radial(a + (b - a) * i as f64 / (n - 1) as f64))
            .sum()
    };
    let oracle = integrate(0.0, 0.25) / integrate(0.0, PI);
    assert!(oracle >= 0.99, "{oracle}");

    // The sampled grid, with the mean away from gimbal lock.
    let mean = Euler313::new(1.0, PI / 2.0, 2.0).unwrap().to_rotation();
    let vm = VonMisesSo3Params::new(mean, kappa).unwrap();
    let gp = GaussianParams::isotropic(Vec3::zeros(), 1.0).unwrap();
    let q = So3Quadrature::cubic(97).unwrap();
    let (d, _) = init_density(&vm, &gp, q.clone(), gp.box_grid(6.0, 3).unwrap(), Workers::single()).unwrap();
    let marg = d.attitude_marginal_values(Workers::single());
    let near: f64 = (0..q.len())
        .filter(|&i| q.rotation(i).angle_to(&mean) < 0.25)
        .map(|i| q.weight(i) * marg[i])
        .sum();
    let total = q.integrate(&marg);
    assert!(near / total >= 0.99, "{}", near / total);
}

#[test]
fn nearly_uniform_attitude_limit() {
    let vm = VonMisesSo3Params::new(Rotation::identity(), 1e-8).unwrap();
    let gp = GaussianParams::isotropic(Vec3::zeros(), 0.5).unwrap();
    let (d, _) = init_density(
        &vm,
        &gp,
        So3Quadrature::cubic(9).unwrap(),
        gp.box_grid(6.0, 5).unwrap(),
        Workers::single(),
    )
    .unwrap();
    let marg = d.attitude_marginal_values(Workers::single());
    let mean = marg.iter().sum::<f64>() / marg.len() as f64;
    for m in &marg {
        assert!((m / mean - 1.0).abs() < 1e-6);
    }
}

#[test]
fn zero_steps_is_identity() {
    let d = reference_init(9, 5);
    let (p, report) = propagate(&d, &lgvi(), 0, &PropagateOptions::default()).unwrap();
    assert_eq!(p, d);
    assert_eq!(report.out_of_support_nodes, 0);
}

#[test]
fn constructed_correspondence_is_exact() {
    let d = reference_init(9, 5);
    let lg = lgvi();
    let nv = d.velocity().len();
    let mut rng = common::rng(11);
    for _ in 0..20 {
        let a = rng.random_range(0..d.quadrature().len());
        let v = rng.random_range(0..nv);
        let s = RigidBodyState::new(d.quadrature().rotation(a), d.velocity().node(v));
        let k = 10;
        let image = lg.flow(&s, k).unwrap();
        let got = pull_back(&d, &lg, k, &image.attitude, &image.omega).unwrap();
        let want = d.value(a, v);
        assert!((got - want).abs() <= 1e-8 * d.max_value(), "{got} vs {want}");
    }
}

#[test]
fn evaluate_reproduces_linear_velocity_fields() {
    let q = So3Quadrature::cubic(5).unwrap();
    let v = VelocityGrid::new(Vec3::new(-1.0, -2.0, 0.0), Vec3::new(1.0, 2.0, 3.0), [5, 5, 7]).unwrap();
    let d = DensityGrid::from_fn(q.clone(), v, Workers::single(), |_, w| {
        10.0 + w[0] - 0.5 * w[1] + 2.0 * w[2]
    })
    .unwrap();
    let mut rng = common::rng(3);
    for _ in 0..50 {
        let r = q.rotation(rng.random_range(0..q.len()));
        let w = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(0.0..3.0),
        );
        let want = 10.0 + w[0] - 0.5 * w[1] + 2.0 * w[2];
        assert!((d.evaluate(&r, &w).unwrap() - want).abs() < 1e-12);
    }
    let c = DensityGrid::uniform(q, VelocityGrid::centered(Vec3::zeros(), Vec3::repeat(1.0), 3).unwrap());
    let r = common::random_rotation(&mut rng);
    assert!((c.evaluate(&r, &Vec3::new(0.1, 0.2, -0.3)).unwrap() - 0.125).abs() < 1e-15);
}

#[test]
fn uniform_density_spectrum_is_a_single_coefficient() {
    let q = So3Quadrature::cubic(9).unwrap();
    let v = VelocityGrid::centered(Vec3::zeros(), Vec3::repeat(1.0), 5).unwrap();
    let d = DensityGrid::uniform(q, v);
    let s = attitude_spectrum(&d, 3, Workers::single()).unwrap();
    let vs = s.velocity_dft();
    let zero = vs.zero_index();
    for j in 0..vs.len() {
        let sp = vs.at(j);
        for l in 0..=3 {
            let norm = sp.coeff(l).norm();
            if j == zero && l == 0 {
                // ∫ (1/8) dΩ over the 2x2x2 box, by the Riemann sum of the DFT
                assert!(norm > 0.1);
            } else {
                assert!(norm < 1e-8, "θ node {j}, l={l}: {norm:e}");
            }
        }
    }
}

#[test]
fn band_limited_density_round_trips_through_spectra() {
    let q = So3Quadrature::cubic(9).unwrap();
    let v = VelocityGrid::centered(Vec3::new(1.0, 0.0, -1.0), Vec3::repeat(0.5), 5).unwrap();
    // non-negative, band-limited to l = 2 in R
    let f = |r: &Rotation, w: &Vec3| {
        let u1 = irrep(1, r).u;
        let u2 = irrep(2, r).u;
        (3.0 + u1[(1, 1)].re + 0.5 * u2[(0, 4)].re + 0.3 * u2[(2, 1)].im) * (1.5 + w[0] * w[1])
    };
    let d = DensityGrid::from_fn(q.clone(), v.clone(), Workers::single(), f).unwrap();
    let s = attitude_spectrum(&d, 3, Workers::new(2)).unwrap();
    let mut rng = common::rng(5);
    for _ in 0..20 {
        let r = common::random_rotation(&mut rng);
        let vi = rng.random_range(0..v.len());
        let w = v.node(vi);
        let got = reconstruct(&s, &r, &w).unwrap();
        assert!((got - f(&r, &w)).abs() < 1e-8, "{got} vs {}", f(&r, &w));
        let via_dft = s.velocity_dft().reconstruct_at_node(&r, vi);
        assert!((via_dft - f(&r, &w)).abs() < 1e-8);
    }
    // at stored nodes the reconstruction equals evaluate()
    for idx in [0, 77, 1000, d.len() - 1] {
        let (a, vi) = (idx / v.len(), idx % v.len());
        let r = q.rotation(a);
        let w = v.node(vi);
        assert!((reconstruct(&s, &r, &w).unwrap() - d.evaluate(&r, &w).unwrap()).abs() < 1e-8);
    }
    // the DFT pair is exact on the nodes
    let back = s.velocity_dft().inverse();
    for (a, b) in s.spectra().iter().zip(back.spectra()) {
        for l in 0..=3 {
            assert!((a.coeff(l) - b.coeff(l)).norm() < 1e-10);
        }
    }
}

fn reference_tail_fraction(above: usize) -> f64 {
    let vm = VonMisesSo3Params::new(Rotation::identity(), 8.0).unwrap();
    let q = So3Quadrature::cubic(41).unwrap();
    let samples: Vec<f64> = (0..q.len()).map(|i| vm.unnormalized(&q.rotation(i))).collect();
    let s = so3_density::harmonic::forward_transform(&q, &samples, 20).unwrap();
    let energy = s.degree_energy();
    let total: f64 = energy.iter().sum();
    energy[above + 1..].iter().sum::<f64>() / total
}

/// Energy fraction above degree `l` of the class function
/// `exp(κ(cos θ - 1))`, from its character expansion
/// `a_l = 1/π ∫ f(θ) χ_l(θ) (1 - cos θ) dθ`, `χ_l = sin((2l+1)θ/2) / sin(θ/2)`.
fn character_tail_oracle(kappa: f64, above: usize) -> f64 {
    let n = 20_001;
    let w = common::simpson_weights(n, 0.0, PI);
    let a: Vec<f64> = (0..=40)
        .map(|l| {
            w.iter()
                .enumerate()
                .map(|(i, w)| {
                    let t = PI * i as f64 / (n - 1) as f64;
                    let chi = if t == 0.0 {
                        (2 * l + 1) as f64
                    } else {
                        ((l as f64 + 0.5) * t).sin() / (0.5 * t).sin()
                    };
                    w * (kappa * (t.cos() - 1.0)).exp() * chi * (1.0 - t.cos()) / PI
                })
                .sum()
        })
        .collect();
    let e: Vec<f64> = a.iter().map(|x| x * x).collect();
    e[above + 1..].iter().sum::<f64>() / e.iter().sum::<f64>()
}

#[test]
fn reference_attitude_spectral_tail_matches_character_oracle() {
    for above in [8, 10, 11] {
        let got = reference_tail_fraction(above);
        let oracle = character_tail_oracle(8.0, above);
        assert!((got / oracle - 1.0).abs() < 1e-3, "l > {above}: {got:e} vs {oracle:e}");
    }
    assert!(reference_tail_fraction(11) < 1e-6);
}

// The tail above l = 10 is 2.65e-6 of the total (confirmed by the character
// oracle above), so this bound cannot hold for the reference density.
#[test]
#[ignore = "tail above l = 10 is 2.65e-6 for kappa = 8"]
fn reference_attitude_factor_tail_above_ten_is_below_1e_6() {
    let tail = reference_tail_fraction(10);
    assert!(tail < 1e-6, "{tail:e}");
}

#[test]
fn propagation_preserves_non_negativity_and_tracks_the_support() {
    let d = reference_init(9, 5);
    let lg = lgvi();
    let (p, report) = propagate(&d, &lg, 5, &PropagateOptions::default()).unwrap();
    assert!(p.values().iter().all(|v| *v >= 0.0));
    assert_eq!(p.step(), 5);
    assert!(report.escaped_mass >= 0.0);
    // the tracked box moved with the mean velocity
    assert_ne!(p.velocity(), d.velocity());
    let fixed = PropagateOptions {
        velocity_box: VelocityBox::Fixed,
        ..Default::default()
    };
    let (pf, _) = propagate(&d, &lg, 5, &fixed).unwrap();
    assert_eq!(pf.velocity(), d.velocity());

    let renorm = PropagateOptions {
        renormalize: true,
        ..Default::default()
    };
    let (pn, rn) = propagate(&d, &lg, 5, &renorm).unwrap();
    assert!((pn.mass(Workers::single()) - 1.0).abs() < 1e-12);
    assert_eq!(rn.mass, report.mass);
}

#[test]
fn propagation_is_deterministic_across_workers() {
    let d = reference_init(9, 5);
    let lg = lgvi();
    let (a, ra) = propagate(&d, &lg, 3, &PropagateOptions::default()).unwrap();
    for w in [2, 4] {
        let opts = PropagateOptions {
            workers: Workers::new(w),
            ..Default::default()
        };
        let (b, rb) = propagate(&d, &lg, 3, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.mass.to_bits(), rb.mass.to_bits());
    }
}

#[test]
fn halving_the_step_changes_values_at_second_order() {
    let d = reference_init(9, 5);
    let mut rng = common::rng(8);
    let points: Vec<RigidBodyState> = (0..40)
        .map(|_| {
            let s = RigidBodyState::new(
                common::random_small_rotation(&mut rng, 0.4),
                Vec3::repeat(4.14) + common::random_vec(&mut rng, 0.2),
            );
            lgvi().flow(&s, 10).unwrap()
        })
        .collect();
    let values = |h: f64| -> Vec<f64> {
        let lg = Lgvi::new(PendulumParams::reference(), StepConfig::with_step(h)).unwrap();
        let k = (0.1 / h).round() as usize;
        points
            .iter()
            .map(|s| pull_back(&d, &lg, k, &s.attitude, &s.omega).unwrap_or(0.0))
            .collect()
    };
    let (v1, v2, v3) = (values(0.01), values(0.005), values(0.0025));
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let (d12, d23) = (diff(&v1, &v2), diff(&v2, &v3));
    assert!(d12 < 0.05 * d.max_value(), "{d12}");
    assert!(d23 < d12 / 2.0, "{d12} {d23}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interpolation_stays_within_data_bounds(
        a in 0.0..TAU, b in 0.0..PI, g in 0.0..TAU,
        w1 in -1.0..1.0f64, w2 in -1.0..1.0f64, w3 in -1.0..1.0f64,
    ) {
        let d = reference_init(5, 3);
        let lo = d.values().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = d.max_value();
        let r = Euler313::new(a, b, g).unwrap().to_rotation();
        let w = d.velocity().lo() + (d.velocity().hi() - d.velocity().lo()).component_mul(&Vec3::new(w1 + 1.0, w2 + 1.0, w3 + 1.0)) * 0.5;
        let v = d.evaluate(&r, &w).unwrap();
        prop_assert!(v >= lo - 1e-12 && v <= hi * (1.0 + 1e-12));
    }
}
