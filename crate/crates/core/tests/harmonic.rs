mod common;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use so3_density::harmonic::{
    forward_transform, inverse_transform, inverse_transform_complex, irrep, wigner_d, QuadratureRule, So3Quadrature,
    So3Spectrum, So3Transform,
};
use so3_density::so3::{haar_weight, Rotation};

/// Factorial-sum Wigner-d in plain f64 factorials, written out independently
/// of the library: d^l_{mn}(β) for the convention whose l = 1 block is
/// [[(1+c)/2, -s/√2, (1-c)/2], [s/√2, c, -s/√2], [(1-c)/2, s/√2, (1+c)/2]]
/// in ascending (m, n) order. This is the textbook d^l_{nm}(β).
fn oracle_d(l: i64, m: i64, n: i64, beta: f64) -> f64 {
    let fact = |k: i64| -> f64 { (1..=k).map(|v| v as f64).product() };
    // textbook d^j_{m'm} with m' = n, m = m
    let (j, mp, mm) = (l, n, m);
    let pref = (fact(j + mp) * fact(j - mp) * fact(j + mm) * fact(j - mm)).sqrt();
    let (c, s) = ((beta / 2.0).cos(), (beta / 2.0).sin());
    let mut sum = 0.0;
    for k in 0..=(2 * j) {
        if j + mm - k < 0 || mp - mm + k < 0 || j - mp - k < 0 {
            continue;
        }
        let sign = if (mp - mm + k) % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign / (fact(j + mm - k) * fact(k) * fact(mp - mm + k) * fact(j - mp - k))
            * c.powi((2 * j + mm - mp - 2 * k) as i32)
            * s.powi((mp - mm + 2 * k) as i32);
    }
    pref * sum
}

#[test]
fn recursion_matches_factorial_oracle() {
    let mut rng = common::rng(1);
    for _ in 0..20 {
        let beta = rng.random_range(0.0..PI);
        let t = wigner_d(8, beta);
        for l in 0..=8i64 {
            for m in -l..=l {
                for n in -l..=l {
                    let got = t.get(l as usize, m, n);
                    let want = oracle_d(l, m, n, beta);
                    assert!((got - want).abs() < 1e-12, "l={l} m={m} n={n}: {got} vs {want}");
                }
            }
        }
    }
}

#[test]
fn recursion_is_orthogonal_at_high_degree() {
    for beta in [0.05, 1.0, 2.5, 3.1] {
        let t = wigner_d(40, beta);
        let d = t.matrix(40);
        let defect = (d * d.transpose() - DMatrix::<f64>::identity(81, 81)).norm();
        assert!(defect < 1e-10, "beta={beta}: {defect:e}");
    }
}

#[test]
fn d_orthogonality_under_beta_quadrature() {
    // ∫_0^π d^l_{mn} d^{l'}_{mn} sin β dβ = 2/(2l+1) δ_{ll'}
    let n = 33;
    let q = So3Quadrature::new(3, n, 3, QuadratureRule::Spectral).unwrap();
    let scale = 8.0 * PI * PI; // undo the Haar factor folded into w_beta
    let tables: Vec<_> = q.beta().iter().map(|&b| wigner_d(4, b)).collect();
    for l in 0..=4usize {
        for lp in 0..=4usize {
            let lo = l.min(lp) as i64;
            for m in -lo..=lo {
                for nn in -lo..=lo {
                    let s: f64 = tables
                        .iter()
                        .zip(q.w_beta())
                        .map(|(t, w)| w * scale * t.get(l, m, nn) * t.get(lp, m, nn))
                        .sum();
                    let want = if l == lp { 2.0 / (2 * l + 1) as f64 } else { 0.0 };
                    assert!((s - want).abs() < 1e-12, "l={l} l'={lp} m={m} n={nn}: {s}");
                }
            }
        }
    }
}

#[test]
fn irreps_are_unitary_homomorphisms() {
    let mut rng = common::rng(2);
    for _ in 0..30 {
        let a = common::random_rotation(&mut rng);
        let b = common::random_rotation(&mut rng);
        for l in 0..=6 {
            let ua = irrep(l, &a);
            let ub = irrep(l, &b);
            let uab = irrep(l, &(a * b));
            assert!(ua.unitarity_defect() < 1e-12);
            let hom = (&uab.u - &ua.u * &ub.u).norm();
            assert!(hom < 1e-10, "l={l} homomorphism defect {hom:e}");
            let inv = irrep(l, &a.inverse());
            assert!((inv.u - ua.u.adjoint()).norm() < 1e-12);
        }
    }
}

#[test]
fn haar_integral_of_one_by_simpson() {
    // Simpson at N = 65 per axis, then check the error ratio when halving
    // the spacing (N = 33 -> 65).
    let simpson_haar = |n: usize| -> f64 {
        let wa = common::simpson_weights(n, 0.0, 2.0 * PI);
        let wb = common::simpson_weights(n, 0.0, PI);
        let sa: f64 = wa.iter().sum();
        let sb: f64 = wb
            .iter()
            .enumerate()
            .map(|(j, w)| w * haar_weight(PI * j as f64 / (n - 1) as f64))
            .sum();
        sa * sb * sa
    };
    let e33 = (simpson_haar(33) - 1.0).abs();
    let e65 = (simpson_haar(65) - 1.0).abs();
    assert!(e65 < 1e-7, "{e65:e}");
    assert!(e33 / e65 >= 8.0, "ratio {}", e33 / e65);

    // The library's Simpson rule integrates the same thing.
    let q = So3Quadrature::new(65, 65, 65, QuadratureRule::Simpson).unwrap();
    let total: f64 = q.weights().iter().sum();
    assert!(
        (total - simpson_haar(65)).abs() < 1e-11,
        "{total} vs {}",
        simpson_haar(65)
    );
}

fn random_spectrum(rng: &mut impl Rng, bandlimit: usize) -> So3Spectrum {
    // Coefficients of a real function satisfy P^l_{-m,-n} = (-1)^{m+n} conj(P^l_{mn})
    // in this convention; rather than imposing that, synthesize a real function
    // by symmetrizing f = g + conj(g) through the round trip below.
    let mut s = So3Spectrum::zeros(bandlimit);
    for l in 0..=bandlimit {
        let n = 2 * l + 1;
        *s.coeff_mut(l) = DMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
    }
    s
}

#[test]
fn forward_inverse_round_trip_small() {
    let mut rng = common::rng(3);
    let bandlimit = 3;
    let q = So3Quadrature::cubic(9).unwrap();
    let tr = So3Transform::new(q.clone(), bandlimit).unwrap();
    let spec = random_spectrum(&mut rng, bandlimit);
    let samples: Vec<f64> = (0..q.len()).map(|i| inverse_transform(&spec, &q.rotation(i))).collect();
    let back = tr.forward(&samples).unwrap();
    let (resynth, _) = tr.synthesize(&back).unwrap();
    let err = samples
        .iter()
        .zip(&resynth)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-10, "{err:e}");
    // Arbitrary off-grid rotation too.
    let r = common::random_rotation(&mut rng);
    let direct = inverse_transform(&spec, &r);
    let via = inverse_transform(&back, &r);
    assert!((direct - via).abs() < 1e-10);
}

#[test]
fn single_entry_function_has_single_coefficient() {
    // f(R) = Re U^1_{00}(R) = cos β, which is real: its spectrum is P^1 with a
    // single entry 1/3 at (0, 0).
    let q = So3Quadrature::cubic(9).unwrap();
    let samples: Vec<f64> = (0..q.len()).map(|i| irrep(1, &q.rotation(i)).u[(1, 1)].re).collect();
    let s = forward_transform(&q, &samples, 2).unwrap();
    for l in [0, 2] {
        assert!(s.coeff(l).norm() < 1e-12);
    }
    let p1 = s.coeff(1);
    assert!((p1[(1, 1)] - Complex64::new(1.0 / 3.0, 0.0)).norm() < 1e-12);
    let rest = p1.norm_squared() - p1[(1, 1)].norm_sqr();
    assert!(rest < 1e-24);
    let r = Rotation::identity();
    assert!((inverse_transform_complex(&s, &r) - Complex64::new(1.0, 0.0)).norm() < 1e-12);
}

#[test]
fn simpson_rule_round_trip_is_only_approximate() {
    // Simpson in β does not integrate Wigner products exactly; the exact
    // round trip is a property of the spectral rule.
    let q = So3Quadrature::new(17, 17, 17, QuadratureRule::Simpson).unwrap();
    let samples: Vec<f64> = (0..q.len()).map(|i| q.euler(i).beta.cos()).collect();
    let s = forward_transform(&q, &samples, 2).unwrap();
    let err = (s.coeff(1)[(1, 1)].re - 1.0 / 3.0).abs();
    assert!(err > 1e-10 && err < 1e-3, "{err:e}");
}
