use statrs::function::erf::erfc;

use super::grid::{DensityGrid, VelocityGrid};
use crate::error::{Error, Result};
use crate::harmonic::So3Quadrature;
use crate::parallel::{self, Workers};
use crate::so3::{Mat3, Rotation, Vec3};

/// Largest Gaussian mass allowed outside the velocity box at initialization.
pub const MAX_OUTSIDE_MASS: f64 = 1e-6;

/// Matrix von Mises-Fisher density on SO(3), `exp(κ (tr(R̄ᵀR) - 1) / 2)`
/// up to normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VonMisesSo3Params {
    mean: Rotation,
    kappa: f64,
}

impl VonMisesSo3Params {
    pub fn new(mean: Rotation, kappa: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::param(
                "init.kappa",
                format!("must be finite and > 0, got {kappa}"),
            ));
        }
        Ok(VonMisesSo3Params { mean, kappa })
    }

    pub fn mean(&self) -> &Rotation {
        &self.mean
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Unnormalized density, equal to 1 at the mean.
    pub fn unnormalized(&self, r: &Rotation) -> f64 {
        let tr = (self.mean.matrix().transpose() * r.matrix()).trace();
        (0.5 * self.kappa * (tr - 1.0) - self.kappa).exp()
    }

    /// `∫ unnormalized dR` over the normalized Haar measure, from the
    /// rotation-angle density `(1 - cos θ)/π` on `[0, π]`. The integrand is
    /// smooth and even in θ, so the trapezoid rule converges spectrally.
    pub fn normalizer(&self) -> f64 {
        const N: usize = 4096;
        let f = |t: f64| (self.kappa * (t.cos() - 1.0)).exp() * (1.0 - t.cos());
        let h = std::f64::consts::PI / N as f64;
        let inner: f64 = (1..N).map(|i| f(i as f64 * h)).sum();
        (inner + 0.5 * (f(0.0) + f(std::f64::consts::PI))) * h / std::f64::consts::PI
    }
}

/// Gaussian on angular velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianParams {
    mean: Vec3,
    cov: Mat3,
    cov_inv: Mat3,
    log_norm: f64,
}

impl GaussianParams {
    pub fn new(mean: Vec3, cov: Mat3) -> Result<Self> {
        if !mean.iter().all(|x| x.is_finite()) {
            return Err(Error::param("init.omega_mean", "must be finite"));
        }
        if (cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) {
            return Err(Error::param("init.sigma", "covariance must be symmetric"));
        }
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::param("init.sigma", "covariance must be positive definite"))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let log_norm = -0.5 * (3.0 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(GaussianParams {
            mean,
            cov,
            cov_inv: chol.inverse(),
            log_norm,
        })
    }

    /// Isotropic covariance `σ² I`.
    pub fn isotropic(mean: Vec3, sigma: f64) -> Result<Self> {
        Self::new(mean, Mat3::identity() * (sigma * sigma))
    }

    pub fn mean(&self) -> &Vec3 {
        &self.mean
    }

    pub fn cov(&self) -> &Mat3 {
        &self.cov
    }

    pub fn std_devs(&self) -> Vec3 {
        self.cov.diagonal().map(f64::sqrt)
    }

    /// `exp(-½ (Ω - Ω̄)ᵀ Σ⁻¹ (Ω - Ω̄))`.
    pub fn unnormalized(&self, omega: &Vec3) -> f64 {
        let d = omega - self.mean;
        (-0.5 * d.dot(&(self.cov_inv * d))).exp()
    }

    pub fn pdf(&self, omega: &Vec3) -> f64 {
        self.log_norm.exp() * self.unnormalized(omega)
    }

    /// Union bound on the probability of leaving `[lo, hi]` through any
    /// face, from the per-axis normal tails.
    pub fn outside_mass_bound(&self, lo: &Vec3, hi: &Vec3) -> f64 {
        let s = self.std_devs();
        (0..3)
            .map(|i| {
                let z = std::f64::consts::SQRT_2 * s[i];
                0.5 * erfc((self.mean[i] - lo[i]) / z) + 0.5 * erfc((hi[i] - self.mean[i]) / z)
            })
            .sum()
    }

    /// Velocity box `Ω̄ ± sigmas·σ` with `n` nodes per axis.
    pub fn box_grid(&self, sigmas: f64, n: usize) -> Result<VelocityGrid> {
        VelocityGrid::centered(self.mean, self.std_devs() * sigmas, n)
    }
}

/// The closed-form initial density `c · vm(R) · gp(Ω)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialDensity {
    pub attitude: VonMisesSo3Params,
    pub velocity: GaussianParams,
    pub c: f64,
}

impl InitialDensity {
    /// Normalized over SO(3) × ℝ³ with the exact constant.
    pub fn exact(attitude: VonMisesSo3Params, velocity: GaussianParams) -> Self {
        let c = velocity.log_norm.exp() / attitude.normalizer();
        InitialDensity { attitude, velocity, c }
    }

    pub fn value(&self, r: &Rotation, omega: &Vec3) -> f64 {
        self.c * self.attitude.unnormalized(r) * self.velocity.unnormalized(omega)
    }
}

/// Product density `c · vonMises(R) · Gaussian(Ω)` sampled on the grids and
/// normalized by quadrature. Returns the density and `c`.
pub fn init_density(
    vm: &VonMisesSo3Params,
    gp: &GaussianParams,
    quad: So3Quadrature,
    vel: VelocityGrid,
    workers: Workers,
) -> Result<(DensityGrid, f64)> {
    let outside = gp.outside_mass_bound(vel.lo(), vel.hi());
    if outside > MAX_OUTSIDE_MASS {
        return Err(Error::BoxTooSmall { outside_mass: outside });
    }
    let mut att = vec![0.0; quad.len()];
    parallel::fill(&mut att, workers, |a| vm.unnormalized(&quad.rotation(a)));
    let vv: Vec<f64> = (0..vel.len()).map(|v| gp.unnormalized(&vel.node(v))).collect();

    let att_mass = parallel::sum(quad.len(), workers, |a| quad.weight(a) * att[a]);
    let vel_mass: f64 = vv.iter().zip(vel.weights()).map(|(x, w)| x * w).sum();
    let c = 1.0 / (att_mass * vel_mass);
    if !c.is_finite() {
        return Err(Error::param("init", "initial density has zero mass on the grid"));
    }

    let nv = vel.len();
    let mut values = vec![0.0; quad.len() * nv];
    parallel::fill(&mut values, workers, |i| c * att[i / nv] * vv[i % nv]);
    Ok((DensityGrid::from_parts_unchecked(quad, vel, values, 0), c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_params() {
        assert!(VonMisesSo3Params::new(Rotation::identity(), 0.0).is_err());
        assert!(GaussianParams::new(Vec3::zeros(), Mat3::identity() * -1.0).is_err());
        let mut c = Mat3::identity();
        c[(0, 1)] = 0.5;
        assert!(GaussianParams::new(Vec3::zeros(), c).is_err());
    }

    #[test]
    fn box_too_small() {
        let gp = GaussianParams::isotropic(Vec3::zeros(), 1.0).unwrap();
        let q = So3Quadrature::cubic(3).unwrap();
        let vm = VonMisesSo3Params::new(Rotation::identity(), 1.0).unwrap();
        let err = init_density(&vm, &gp, q.clone(), gp.box_grid(3.0, 3).unwrap(), Workers::single());
        assert!(matches!(err, Err(Error::BoxTooSmall { .. })));
        assert!(init_density(&vm, &gp, q, gp.box_grid(6.0, 3).unwrap(), Workers::single()).is_ok());
    }

    #[test]
    fn pdf_integrates_to_one() {
        let gp = GaussianParams::new(
            Vec3::new(1.0, 0.0, -1.0),
            Mat3::from_diagonal(&Vec3::new(0.04, 0.09, 0.01)),
        )
        .unwrap();
        let v = gp.box_grid(8.0, 41).unwrap();
        let total: f64 = (0..v.len()).map(|i| v.weight(i) * gp.pdf(&v.node(i))).sum();
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }
}
