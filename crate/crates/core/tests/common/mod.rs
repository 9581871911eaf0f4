#![allow(dead_code)]

use so3_density::dynamics::{vector_field, PendulumParams, RigidBodyState};
use so3_density::so3::{exp_so3, Mat3, Rotation, Vec3};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniformly distributed rotation (axis-angle with the Haar angle density
/// would also work; this uses a random unit quaternion turned into a matrix).
pub fn random_rotation(rng: &mut impl Rng) -> Rotation {
    loop {
        let q: [f64; 4] = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let n2: f64 = q.iter().map(|v| v * v).sum();
        if !(1e-6..=1.0).contains(&n2) {
            continue;
        }
        let n = n2.sqrt();
        let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        let m = Mat3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        );
        return Rotation::from_matrix(m).unwrap();
    }
}

pub fn random_vec(rng: &mut impl Rng, scale: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

pub fn random_small_rotation(rng: &mut impl Rng, max_angle: f64) -> Rotation {
    exp_so3(&random_vec(rng, max_angle / 3f64.sqrt()))
}

/// Classical RK4 on the continuous equations, with R integrated as a plain
/// 3x3 matrix. Test-only reference, independent of the LGVI.
pub fn rk4(r0: &Mat3, w0: &Vec3, p: &PendulumParams, h: f64, steps: usize) -> (Mat3, Vec3) {
    let (mut r, mut w) = (*r0, *w0);
    for _ in 0..steps {
        let (k1r, k1w) = vector_field(&r, &w, p);
        let (k2r, k2w) = vector_field(&(r + k1r * (h / 2.0)), &(w + k1w * (h / 2.0)), p);
        let (k3r, k3w) = vector_field(&(r + k2r * (h / 2.0)), &(w + k2w * (h / 2.0)), p);
        let (k4r, k4w) = vector_field(&(r + k3r * h), &(w + k3w * h), p);
        r += (k1r + k2r * 2.0 + k3r * 2.0 + k4r) * (h / 6.0);
        w += (k1w + k2w * 2.0 + k3w * 2.0 + k4w) * (h / 6.0);
    }
    (r, w)
}

pub fn state_error(s: &RigidBodyState, r: &Mat3, w: &Vec3) -> f64 {
    (s.attitude.matrix() - r).norm() + (s.omega - w).norm()
}

/// Composite Simpson weights on `n` (odd) equispaced nodes over `[a, b]`.
pub fn simpson_weights(n: usize, a: f64, b: f64) -> Vec<f64> {
    assert!(n % 2 == 1 && n >= 3);
    let h = (b - a) / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let c = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect()
}
