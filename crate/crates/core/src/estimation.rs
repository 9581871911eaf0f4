//! Measurement model and Bayes update of propagated densities.
//!
//! A measurement stacks a body-frame observation of a known inertial
//! direction `a` with an angular-velocity reading,
//! `z = [Rᵀa; Ω] + v`, where `v` is zero-mean Gaussian with block-diagonal
//! covariance. The direction residual is taken in ambient ℝ³.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector6};

use crate::density::{
    propagate, propagate_from, DensityGrid, DensitySource, InitialDensity, PropagateOptions, PropagationReport,
};
use crate::dynamics::{Lgvi, RigidBodyState};
use crate::error::{Error, Result};
use crate::parallel::{self, Workers};
use crate::so3::{exp_so3, Mat3, Rotation, Vec3};

/// Smallest evidence accepted by [`bayes_update`].
pub const MIN_EVIDENCE: f64 = 1e-300;

pub type Vec6 = Vector6<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementModel {
    reference: Vec3,
    cov_direction: Mat3,
    cov_omega: Mat3,
    inv_direction: Mat3,
    inv_omega: Mat3,
    log_norm: f64,
}

fn spd_inverse(m: &Mat3, field: &str) -> Result<(Mat3, f64)> {
    if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(Error::param(field, "covariance must be symmetric"));
    }
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::param(field, "covariance must be positive definite"))?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok((chol.inverse(), log_det))
}

impl MeasurementModel {
    pub fn new(reference: Vec3, cov_direction: Mat3, cov_omega: Mat3) -> Result<Self> {
        if ((reference.norm() - 1.0).abs()) > 1e-9 {
            return Err(Error::NotUnit { norm: reference.norm() });
        }
        let (inv_direction, ld1) = spd_inverse(&cov_direction, "measurement.direction_cov")?;
        let (inv_omega, ld2) = spd_inverse(&cov_omega, "measurement.omega_cov")?;
        let log_norm = -0.5 * (6.0 * (2.0 * std::f64::consts::PI).ln() + ld1 + ld2);
        Ok(MeasurementModel {
            reference,
            cov_direction,
            cov_omega,
            inv_direction,
            inv_omega,
            log_norm,
        })
    }

    /// Isotropic noise `σ_dir² I` and `σ_Ω² I`.
    pub fn isotropic(reference: Vec3, sigma_direction: f64, sigma_omega: f64) -> Result<Self> {
        Self::new(
            reference,
            Matrix3::identity() * sigma_direction.powi(2),
            Matrix3::identity() * sigma_omega.powi(2),
        )
    }

    pub fn reference(&self) -> &Vec3 {
        &self.reference
    }

    pub fn cov_direction(&self) -> &Mat3 {
        &self.cov_direction
    }

    pub fn cov_omega(&self) -> &Mat3 {
        &self.cov_omega
    }

    /// `H(R, Ω) = [Rᵀa; Ω]`.
    pub fn observe(&self, r: &Rotation, omega: &Vec3) -> Vec6 {
        let d = r.matrix().transpose() * self.reference;
        Vec6::new(d[0], d[1], d[2], omega[0], omega[1], omega[2])
    }

    pub fn log_likelihood(&self, z: &Measurement, r: &Rotation, omega: &Vec3) -> f64 {
        let e = z.z - self.observe(r, omega);
        let ed = Vec3::new(e[0], e[1], e[2]);
        let ew = Vec3::new(e[3], e[4], e[5]);
        self.log_norm - 0.5 * (ed.dot(&(self.inv_direction * ed)) + ew.dot(&(self.inv_omega * ew)))
    }

    /// Gaussian density of `z - H(R, Ω)`.
    pub fn likelihood(&self, z: &Measurement, r: &Rotation, omega: &Vec3) -> f64 {
        self.log_likelihood(z, r, omega).exp()
    }

    /// Peak value of the likelihood, reached when `z = H(R, Ω)`.
    pub fn max_likelihood(&self) -> f64 {
        self.log_norm.exp()
    }
}

/// An observation `z_k` at time index `step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub step: u64,
    pub z: Vec6,
}

impl Measurement {
    pub fn new(step: u64, z: [f64; 6]) -> Result<Self> {
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("measurement.z", "must be finite"));
        }
        Ok(Measurement {
            step,
            z: Vec6::from_row_slice(&z),
        })
    }
}

/// Likelihood of the current measurement as a function of the state.
pub trait Likelihood: Sync {
    fn eval(&self, r: &Rotation, omega: &Vec3) -> f64;
}

impl<F: Fn(&Rotation, &Vec3) -> f64 + Sync> Likelihood for F {
    fn eval(&self, r: &Rotation, omega: &Vec3) -> f64 {
        self(r, omega)
    }
}

/// A measurement paired with its model.
#[derive(Debug, Clone, Copy)]
pub struct Observed<'a> {
    pub model: &'a MeasurementModel,
    pub measurement: &'a Measurement,
}

impl Likelihood for Observed<'_> {
    fn eval(&self, r: &Rotation, omega: &Vec3) -> f64 {
        self.model.likelihood(self.measurement, r, omega)
    }
}

/// Node-wise `prior · likelihood / c` with `c = ∫ prior · likelihood`.
/// Returns the posterior and the evidence `c`.
pub fn bayes_update<L: Likelihood + ?Sized>(
    prior: &DensityGrid,
    likelihood: &L,
    workers: Workers,
) -> Result<(DensityGrid, f64)> {
    let quad = prior.quadrature();
    let vel = prior.velocity();
    let rotations: Vec<Rotation> = (0..quad.len()).map(|i| quad.rotation(i)).collect();
    let omegas: Vec<Vec3> = (0..vel.len()).map(|i| vel.node(i)).collect();
    let nv = vel.len();
    let mut post = prior.clone();
    post.map_values(workers, |i, p| {
        if p == 0.0 {
            0.0
        } else {
            p * likelihood.eval(&rotations[i / nv], &omegas[i % nv])
        }
    })?;
    let c = post.mass(workers);
    if !(c >= MIN_EVIDENCE) {
        return Err(Error::DegenerateUpdate { evidence: c });
    }
    post.scale(1.0 / c);
    Ok((post, c))
}

/// One entry of an estimation run.
#[derive(Debug, Clone)]
pub struct EstimateStep {
    pub step: u64,
    /// Posterior after the measurement at `step`, or the propagated prior
    /// when no measurement applies.
    pub density: DensityGrid,
    pub evidence: Option<f64>,
    pub propagation: PropagationReport,
}

/// Posterior of a run that started from a closed-form initial density.
///
/// Under deterministic dynamics the density only moves between epochs, so
/// the posterior at step `k` is the initial density at `F⁻ᵏ(x)` times every
/// earlier likelihood evaluated at the matching backward image, divided by
/// the evidences. Evaluating it this way avoids re-interpolating a grid that
/// cannot resolve the narrow directions of the posterior.
#[derive(Debug, Clone)]
pub struct ExactPosterior<'a> {
    initial: InitialDensity,
    lgvi: &'a Lgvi,
    model: &'a MeasurementModel,
    /// Applied measurements in step order, with their evidences.
    updates: Vec<(Measurement, f64)>,
    step: u64,
}

impl<'a> ExactPosterior<'a> {
    pub fn new(initial: InitialDensity, lgvi: &'a Lgvi, model: &'a MeasurementModel) -> Self {
        ExactPosterior {
            initial,
            lgvi,
            model,
            updates: Vec::new(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Records the update at `m.step`, which becomes the current step.
    pub fn condition(&mut self, m: Measurement, evidence: f64) {
        debug_assert!(m.step >= self.step);
        self.step = m.step;
        self.updates.push((m, evidence));
    }

    /// Pure propagation to a later step.
    pub fn advance_to(&mut self, step: u64) {
        debug_assert!(step >= self.step);
        self.step = step;
    }

    /// [`ExactPosterior::mode`] started from the largest node of `d`, a grid
    /// of this posterior, with the grid spacings as initial steps.
    pub fn mode_from_grid(&self, d: &DensityGrid) -> Result<RigidBodyState> {
        if d.step() != self.step {
            return Err(Error::param("estimate", "grid and posterior are at different steps"));
        }
        let i = d.argmax();
        let nv = d.velocity().len();
        let start = RigidBodyState::new(d.quadrature().rotation(i / nv), d.velocity().node(i % nv));
        let [na, nb, ng] = d.quadrature().counts();
        let att = (TAU / (na - 1) as f64)
            .max(PI / (nb - 1) as f64)
            .max(TAU / (ng - 1) as f64);
        self.mode(&start, 0.5 * att, 0.5 * d.velocity().spacing().max())
    }

    fn value(&self, r: &Rotation, omega: &Vec3) -> Result<f64> {
        let mut s = RigidBodyState::new(*r, *omega);
        let mut t = self.step;
        let mut value = 1.0;
        let mut pending = self.updates.iter().rev().peekable();
        loop {
            while let Some((m, c)) = pending.next_if(|(m, _)| m.step == t) {
                value *= self.model.likelihood(m, &s.attitude, &s.omega) / c;
            }
            if value == 0.0 {
                return Ok(0.0);
            }
            if t == 0 {
                break;
            }
            s = self.lgvi.inverse_step(&s)?;
            t -= 1;
        }
        Ok(value * self.initial.value(&s.attitude, &s.omega))
    }
}

impl ExactPosterior<'_> {
    /// Local maximum of the posterior density near `start`, by Nelder–Mead
    /// on `(log(R_startᵀ R), Ω - Ω_start)`. The attitude and velocity scales
    /// set the initial simplex.
    pub fn mode(&self, start: &RigidBodyState, attitude_scale: f64, velocity_scale: f64) -> Result<RigidBodyState> {
        let at = |x: &[f64; 6]| {
            RigidBodyState::new(
                start.attitude * exp_so3(&Vec3::new(x[0], x[1], x[2])),
                start.omega + Vec3::new(x[3], x[4], x[5]),
            )
        };
        let cost = |x: &[f64; 6]| -> Result<f64> {
            let s = at(x);
            let p = self.value(&s.attitude, &s.omega)?;
            Ok(if p > 0.0 { -p.ln() } else { f64::INFINITY })
        };
        let scales = [
            attitude_scale,
            attitude_scale,
            attitude_scale,
            velocity_scale,
            velocity_scale,
            velocity_scale,
        ];
        let mut x = [0.0; 6];
        for shrink in [1.0, 0.1, 0.01] {
            let s = scales.map(|v| v * shrink);
            x = nelder_mead(&cost, x, &s, 1e-10, 2000)?;
        }
        Ok(at(&x))
    }
}

/// Minimizes `f` from `x0` with an initial simplex of per-coordinate
/// steps, stopping when the simplex values agree within `ftol` or after
/// `max_iter` iterations.
fn nelder_mead<const N: usize>(
    f: &dyn Fn(&[f64; N]) -> Result<f64>,
    x0: [f64; N],
    steps: &[f64; N],
    ftol: f64,
    max_iter: usize,
) -> Result<[f64; N]> {
    let mut pts = vec![x0; N + 1];
    for (i, p) in pts.iter_mut().skip(1).enumerate() {
        p[i] += steps[i];
    }
    let mut vals = pts.iter().map(f).collect::<Result<Vec<f64>>>()?;
    let along = |c: &[f64; N], p: &[f64; N], t: f64| -> [f64; N] { std::array::from_fn(|k| c[k] + t * (p[k] - c[k])) };
    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=N).collect();
        order.sort_by(|a, b| vals[*a].total_cmp(&vals[*b]));
        pts = order.iter().map(|&i| pts[i]).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        if (vals[N] - vals[0]).abs() <= ftol * (1.0 + vals[0].abs()) {
            break;
        }
        let c: [f64; N] = std::array::from_fn(|k| pts[..N].iter().map(|p| p[k]).sum::<f64>() / N as f64);
        let r = along(&c, &pts[N], -1.0);
        let fr = f(&r)?;
        if fr < vals[0] {
            let e = along(&c, &pts[N], -2.0);
            let fe = f(&e)?;
            (pts[N], vals[N]) = if fe < fr { (e, fe) } else { (r, fr) };
        } else if fr < vals[N - 1] {
            (pts[N], vals[N]) = (r, fr);
        } else {
            let k = along(&c, &pts[N], 0.5);
            let fk = f(&k)?;
            if fk < vals[N] {
                (pts[N], vals[N]) = (k, fk);
            } else {
                let best = pts[0];
                for j in 1..=N {
                    pts[j] = along(&best, &pts[j], 0.5);
                    vals[j] = f(&pts[j])?;
                }
            }
        }
    }
    let best = (0..=N).min_by(|a, b| vals[*a].total_cmp(&vals[*b])).unwrap_or(0);
    Ok(pts[best])
}

impl DensitySource for ExactPosterior<'_> {
    fn density(&self, r: &Rotation, omega: &Vec3) -> Result<f64> {
        self.value(r, omega)
    }

    fn density_clamped(&self, r: &Rotation, omega: &Vec3) -> f64 {
        self.value(r, omega).unwrap_or(0.0)
    }
}

/// Alternates propagation to each measurement epoch with a Bayes update,
/// interpolating the previous posterior grid. When `until` lies past the
/// last measurement the density is propagated there as a final,
/// measurement-free entry.
pub fn estimate_cycle(
    prior: &DensityGrid,
    lgvi: &Lgvi,
    model: &MeasurementModel,
    measurements: &[Measurement],
    until: Option<u64>,
    opts: &PropagateOptions,
) -> Result<Vec<EstimateStep>> {
    run_cycle(prior, lgvi, model, measurements, until, opts, &mut None)
}

/// Like [`estimate_cycle`], but every grid is filled from the
/// [`ExactPosterior`] of `initial`, which must be the density sampled in
/// `prior` (at step 0). Also returns that posterior at the final step.
pub fn estimate_cycle_exact<'a>(
    initial: &InitialDensity,
    prior: &DensityGrid,
    lgvi: &'a Lgvi,
    model: &'a MeasurementModel,
    measurements: &[Measurement],
    until: Option<u64>,
    opts: &PropagateOptions,
) -> Result<(Vec<EstimateStep>, ExactPosterior<'a>)> {
    if prior.step() != 0 {
        return Err(Error::param("estimate", "an exact posterior run must start at step 0"));
    }
    let mut exact = Some(ExactPosterior::new(*initial, lgvi, model));
    let steps = run_cycle(prior, lgvi, model, measurements, until, opts, &mut exact)?;
    Ok((steps, exact.expect("set above")))
}

fn run_cycle(
    prior: &DensityGrid,
    lgvi: &Lgvi,
    model: &MeasurementModel,
    measurements: &[Measurement],
    until: Option<u64>,
    opts: &PropagateOptions,
    exact: &mut Option<ExactPosterior>,
) -> Result<Vec<EstimateStep>> {
    let advance = |d: &DensityGrid, exact: &Option<ExactPosterior>, k: usize| match exact {
        Some(src) => propagate_from(d, src, lgvi, k, opts),
        None => propagate(d, lgvi, k, opts),
    };
    let mut current = prior.clone();
    let mut out = Vec::with_capacity(measurements.len() + 1);
    for m in measurements {
        if m.step < current.step() {
            return Err(Error::param(
                "measurements",
                format!("measurement at step {} precedes step {}", m.step, current.step()),
            ));
        }
        let k = (m.step - current.step()) as usize;
        let (propagated, report) = advance(&current, exact, k)?;
        let (posterior, evidence) = bayes_update(&propagated, &Observed { model, measurement: m }, opts.workers)?;
        if let Some(src) = exact.as_mut() {
            src.condition(*m, evidence);
        }
        out.push(EstimateStep {
            step: m.step,
            density: posterior.clone(),
            evidence: Some(evidence),
            propagation: report,
        });
        current = posterior;
    }
    if let Some(end) = until.filter(|&e| e > current.step()) {
        let (propagated, report) = advance(&current, exact, (end - current.step()) as usize)?;
        if let Some(src) = exact.as_mut() {
            src.advance_to(end);
        }
        out.push(EstimateStep {
            step: end,
            density: propagated,
            evidence: None,
            propagation: report,
        });
    }
    Ok(out)
}

/// Deterministic mean of `ln c` over the steps that carried a measurement.
pub fn mean_log_evidence(steps: &[EstimateStep]) -> Option<f64> {
    let logs: Vec<f64> = steps.iter().filter_map(|s| s.evidence.map(f64::ln)).collect();
    if logs.is_empty() {
        None
    } else {
        Some(parallel::sum(logs.len(), Workers::single(), |i| logs[i]) / logs.len() as f64)
    }
}
