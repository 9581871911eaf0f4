//! 3D pendulum dynamics and its Lie group variational integrator (LGVI).
//!
//! Continuous model:
//!
//! ```text
//! J dΩ/dt = JΩ × Ω + m g ρ × Rᵀ e3,     dR/dt = R S(Ω)
//! ```
//!
//! Discrete map `(R_k, Ω_k) -> (R_{k+1}, Ω_{k+1})`:
//!
//! ```text
//! h S(JΩ_k + h/2 M_k) = F_k J_d - J_d F_kᵀ
//! R_{k+1} = R_k F_k
//! JΩ_{k+1} = F_kᵀ JΩ_k + h/2 F_kᵀ M_k + h/2 M_{k+1}
//! ```
//!
//! with `J_d = tr(J)/2 I - J` and `M_k = m g ρ × R_kᵀ e3`.

use crate::error::{Error, Result};
use crate::so3::{exp_so3, hat, vee_unchecked, Mat3, Rotation, Vec3};

/// Physical parameters of the 3D pendulum.
#[derive(Debug, Clone, PartialEq)]
pub struct PendulumParams {
    inertia: Mat3,
    mass: f64,
    rho: Vec3,
    gravity: f64,
    // Derived from `inertia`.
    inertia_d: Mat3,
    inertia_inv: Mat3,
}

impl PendulumParams {
    pub fn new(inertia: Mat3, mass: f64, rho: Vec3, gravity: f64) -> Result<Self> {
        if (inertia - inertia.transpose()).norm() > 1e-12 * inertia.norm() {
            return Err(Error::param("pendulum.J", "inertia matrix is not symmetric"));
        }
        let eig = inertia.symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::param("pendulum.J", "inertia matrix is not positive definite"));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::param("pendulum.m", "mass must be positive"));
        }
        if !(gravity.is_finite()) {
            return Err(Error::param("pendulum.g", "gravity must be finite"));
        }
        if !rho.iter().all(|v| v.is_finite()) {
            return Err(Error::param("pendulum.rho", "offset must be finite"));
        }
        let inertia_inv = inertia
            .try_inverse()
            .ok_or_else(|| Error::param("pendulum.J", "singular inertia"))?;
        Ok(PendulumParams {
            inertia,
            mass,
            rho,
            gravity,
            inertia_d: Mat3::identity() * (0.5 * inertia.trace()) - inertia,
            inertia_inv,
        })
    }

    /// `J = diag(0.13, 0.28, 0.17) kg m^2`, `m = 1 kg`, `ρ = 0.3 e3 m`,
    /// `g = 9.81 m/s^2`.
    pub fn reference() -> Self {
        Self::new(
            Mat3::from_diagonal(&Vec3::new(0.13, 0.28, 0.17)),
            1.0,
            Vec3::new(0.0, 0.0, 0.3),
            9.81,
        )
        .expect("reference parameters are valid")
    }

    pub fn inertia(&self) -> &Mat3 {
        &self.inertia
    }

    pub fn inertia_inv(&self) -> &Mat3 {
        &self.inertia_inv
    }

    /// Nonstandard inertia `J_d = tr(J)/2 I - J`.
    pub fn inertia_d(&self) -> &Mat3 {
        &self.inertia_d
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn rho(&self) -> &Vec3 {
        &self.rho
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self::reference()
    }
}

/// Step size and Newton settings for the implicit solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub h: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            h: 0.01,
            newton_tol: 1e-14,
            newton_max_iter: 50,
        }
    }
}

impl StepConfig {
    pub fn with_step(h: f64) -> Self {
        StepConfig {
            h,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::param("step.h", "step size must be positive"));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::param("step.newton_tol", "tolerance must be positive"));
        }
        if self.newton_max_iter == 0 {
            return Err(Error::param("step.newton_max_iter", "must be at least 1"));
        }
        Ok(())
    }
}

/// Attitude and body-frame angular velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyState {
    pub attitude: Rotation,
    pub omega: Vec3,
}

impl RigidBodyState {
    pub fn new(attitude: Rotation, omega: Vec3) -> Self {
        RigidBodyState { attitude, omega }
    }

    /// Attitude angle difference plus angular velocity distance.
    pub fn distance(&self, other: &RigidBodyState) -> f64 {
        self.attitude.angle_to(&other.attitude) + (self.omega - other.omega).norm()
    }
}

/// Gravity moment `m g ρ × Rᵀ e3` in the body frame.
pub fn gravity_moment(r: &Rotation, p: &PendulumParams) -> Vec3 {
    let down = r.matrix().row(2).transpose();
    p.rho.cross(&down) * (p.mass * p.gravity)
}

/// Total energy `½ ΩᵀJΩ - m g e3ᵀ R ρ`.
pub fn energy(s: &RigidBodyState, p: &PendulumParams) -> f64 {
    let kinetic = 0.5 * s.omega.dot(&(p.inertia * s.omega));
    let height = (s.attitude.matrix() * p.rho).z;
    kinetic - p.mass * p.gravity * height
}

/// Right-hand side of the continuous equations, `(dR/dt, dΩ/dt)`.
pub fn vector_field(r: &Mat3, omega: &Vec3, p: &PendulumParams) -> (Mat3, Vec3) {
    let down = r.row(2).transpose();
    let moment = p.rho.cross(&down) * (p.mass * p.gravity);
    let j_omega = p.inertia * omega;
    let omega_dot = p.inertia_inv * (j_omega.cross(omega) + moment);
    (r * hat(omega), omega_dot)
}

/// Solves `h S(a) = F J_d - J_d Fᵀ` for `F ∈ SO(3)`.
///
/// Newton iteration on the 3-vector residual `vee(F J_d - J_d Fᵀ) - h a` with
/// multiplicative updates `F <- F exp(δ)`, started from `F = exp(h J⁻¹ a)`.
/// `tol` bounds the Frobenius norm of the matrix residual.
pub fn solve_implicit_f(a: &Vec3, p: &PendulumParams, h: f64, tol: f64, max_iter: usize) -> Result<Rotation> {
    let jd = &p.inertia_d;
    let target = a * h;
    let mut f = exp_so3(&(p.inertia_inv * target)).into_matrix();
    let mut residual = f64::INFINITY;
    for _ in 0..=max_iter {
        let b = f * jd;
        let r = vee_unchecked(&b) * 2.0 - target;
        // |hat(r)|_F = sqrt(2) |r|
        residual = std::f64::consts::SQRT_2 * r.norm();
        if residual <= tol {
            return Ok(Rotation::from_matrix_unchecked(f));
        }
        let jac = (Mat3::identity() * b.trace() - b) * f;
        let Some(delta) = jac.lu().solve(&(-r)) else {
            break;
        };
        f *= exp_so3(&delta).into_matrix();
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Solves the backward relation `h S(b) = J_d F - Fᵀ J_d` for `F`, where
/// `b = JΩ_{k+1} - h/2 M_{k+1}`. This is the implicit equation left after
/// eliminating `Ω_k` from the discrete equations.
fn solve_backward_f(b: &Vec3, p: &PendulumParams, h: f64, tol: f64, max_iter: usize) -> Result<Mat3> {
    let jd = &p.inertia_d;
    let target = b * h;
    let mut f = exp_so3(&(p.inertia_inv * target)).into_matrix();
    let mut residual = f64::INFINITY;
    for _ in 0..=max_iter {
        let c = f.transpose() * jd;
        let r = vee_unchecked(&c) * -2.0 - target;
        residual = std::f64::consts::SQRT_2 * r.norm();
        if residual <= tol {
            return Ok(f);
        }
        let jac = Mat3::identity() * c.trace() - c;
        let Some(delta) = jac.lu().solve(&(-r)) else {
            break;
        };
        f *= exp_so3(&delta).into_matrix();
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// The LGVI for a fixed pendulum and step configuration.
#[derive(Debug, Clone)]
pub struct Lgvi {
    params: PendulumParams,
    config: StepConfig,
}

impl Lgvi {
    pub fn new(params: PendulumParams, config: StepConfig) -> Result<Self> {
        config.validate()?;
        Ok(Lgvi { params, config })
    }

    pub fn params(&self) -> &PendulumParams {
        &self.params
    }

    pub fn config(&self) -> &StepConfig {
        &self.config
    }

    pub fn step_size(&self) -> f64 {
        self.config.h
    }

    pub fn step(&self, s: &RigidBodyState) -> Result<RigidBodyState> {
        let p = &self.params;
        let h = self.config.h;
        let m_k = gravity_moment(&s.attitude, p);
        let a = p.inertia * s.omega + m_k * (0.5 * h);
        let f = solve_implicit_f(&a, p, h, self.config.newton_tol, self.config.newton_max_iter)?;
        let r_next = Rotation::from_matrix_unchecked(s.attitude.matrix() * f.matrix());
        let m_next = gravity_moment(&r_next, p);
        let ft = f.matrix().transpose();
        let j_omega = ft * a + m_next * (0.5 * h);
        Ok(RigidBodyState {
            attitude: r_next,
            omega: p.inertia_inv * j_omega,
        })
    }

    /// Exact inverse of [`Lgvi::step`] up to the Newton tolerance.
    pub fn inverse_step(&self, s: &RigidBodyState) -> Result<RigidBodyState> {
        let p = &self.params;
        let h = self.config.h;
        let m_next = gravity_moment(&s.attitude, p);
        let b = p.inertia * s.omega - m_next * (0.5 * h);
        let f = solve_backward_f(&b, p, h, self.config.newton_tol, self.config.newton_max_iter)?;
        let r_prev = Rotation::from_matrix_unchecked(s.attitude.matrix() * f.transpose());
        let m_prev = gravity_moment(&r_prev, p);
        let a = f * b;
        Ok(RigidBodyState {
            attitude: r_prev,
            omega: p.inertia_inv * (a - m_prev * (0.5 * h)),
        })
    }

    /// `k`-fold composition of [`Lgvi::step`].
    pub fn flow(&self, s: &RigidBodyState, k: usize) -> Result<RigidBodyState> {
        let mut state = *s;
        for _ in 0..k {
            state = self.step(&state)?;
        }
        Ok(state)
    }

    /// `k`-fold composition of [`Lgvi::inverse_step`].
    pub fn backward_flow(&self, s: &RigidBodyState, k: usize) -> Result<RigidBodyState> {
        let mut state = *s;
        for _ in 0..k {
            state = self.inverse_step(&state)?;
        }
        Ok(state)
    }

    /// States `s, step(s), ..., step^k(s)`.
    pub fn trajectory(&self, s: &RigidBodyState, k: usize) -> Result<Vec<RigidBodyState>> {
        let mut out = Vec::with_capacity(k + 1);
        out.push(*s);
        let mut state = *s;
        for _ in 0..k {
            state = self.step(&state)?;
            out.push(state);
        }
        Ok(out)
    }

    pub fn energy(&self, s: &RigidBodyState) -> f64 {
        energy(s, &self.params)
    }
}
