use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::grid::{DensityGrid, VelocityGrid};
use crate::error::{Error, Result};
use crate::harmonic::{inverse_transform_complex, So3Spectrum, So3Transform};
use crate::parallel::{self, Workers};
use crate::so3::{Rotation, Vec3};

/// Attitude spectra of a density, one per velocity node.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySpectrum {
    velocity: VelocityGrid,
    spectra: Vec<So3Spectrum>,
}

impl DensitySpectrum {
    /// One spectrum per velocity node, all with the same bandlimit.
    pub fn new(velocity: VelocityGrid, spectra: Vec<So3Spectrum>) -> Result<Self> {
        if spectra.len() != velocity.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} spectra for {} velocity nodes",
                spectra.len(),
                velocity.len()
            )));
        }
        if spectra.windows(2).any(|w| w[0].bandlimit() != w[1].bandlimit()) {
            return Err(Error::ShapeMismatch("spectra have different bandlimits".into()));
        }
        Ok(DensitySpectrum { velocity, spectra })
    }

    pub fn velocity(&self) -> &VelocityGrid {
        &self.velocity
    }

    pub fn bandlimit(&self) -> usize {
        self.spectra[0].bandlimit()
    }

    pub fn spectra(&self) -> &[So3Spectrum] {
        &self.spectra
    }

    /// Spectrum at velocity node `v`.
    pub fn at(&self, v: usize) -> &So3Spectrum {
        &self.spectra[v]
    }

    /// Spectrum of the attitude marginal, `∫ P^l(Ω) dΩ`.
    pub fn attitude_marginal(&self) -> So3Spectrum {
        let mut out = So3Spectrum::zeros(self.bandlimit());
        for (v, s) in self.spectra.iter().enumerate() {
            out.axpy(self.velocity.weight(v), s);
        }
        out
    }

    /// Discrete Fourier transform over the velocity nodes.
    pub fn velocity_dft(&self) -> VelocitySpectrum {
        VelocitySpectrum::from_density_spectrum(self)
    }
}

/// Forward attitude transform at every velocity node.
pub fn attitude_spectrum(d: &DensityGrid, bandlimit: usize, workers: Workers) -> Result<DensitySpectrum> {
    let tr = So3Transform::new(d.quadrature().clone(), bandlimit)?;
    let nv = d.velocity().len();
    let na = d.quadrature().len();
    let mut spectra = vec![So3Spectrum::zeros(bandlimit); nv];
    parallel::try_fill(&mut spectra, workers, |v| {
        let samples: Vec<f64> = (0..na).map(|a| d.value(a, v)).collect();
        tr.forward(&samples)
    })?;
    Ok(DensitySpectrum {
        velocity: d.velocity().clone(),
        spectra,
    })
}

/// Peter-Weyl sum in `R`, trilinear in `Ω` between velocity nodes (so exact
/// at nodes for band-limited attitude dependence).
pub fn reconstruct(s: &DensitySpectrum, r: &Rotation, omega: &Vec3) -> Result<f64> {
    let stencil = s.velocity.stencil(omega).ok_or(Error::OutOfSupport)?;
    let mut combined = So3Spectrum::zeros(s.bandlimit());
    for (v, w) in stencil {
        if w != 0.0 {
            combined.axpy(w, &s.spectra[v]);
        }
    }
    Ok(inverse_transform_complex(&combined, r).re)
}

/// `P^l(θ) = Σ_Ω ΔΩ e^{-iθ·Ω} P^l(Ω)` on the dual grid of the velocity
/// nodes, `θ_j = 2π j / (n Δ)` for `j = -(n-1)/2 ..= (n-1)/2` per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocitySpectrum {
    velocity: VelocityGrid,
    theta: [Vec<f64>; 3],
    bandlimit: usize,
    // [θ node][flattened coefficients]
    data: Vec<Vec<Complex64>>,
}

fn flatten(s: &So3Spectrum) -> Vec<Complex64> {
    s.coeffs().iter().flat_map(|c| c.iter().copied()).collect()
}

fn unflatten(bandlimit: usize, flat: &[Complex64]) -> So3Spectrum {
    let mut off = 0;
    let coeffs = (0..=bandlimit)
        .map(|l| {
            let n = 2 * l + 1;
            let m = DMatrix::from_column_slice(n, n, &flat[off..off + n * n]);
            off += n * n;
            m
        })
        .collect();
    So3Spectrum::from_coeffs(coeffs).expect("shapes follow the bandlimit")
}

impl VelocitySpectrum {
    fn from_density_spectrum(s: &DensitySpectrum) -> Self {
        let vel = &s.velocity;
        let counts = vel.counts();
        let h = vel.spacing();
        let theta: [Vec<f64>; 3] = std::array::from_fn(|a| {
            let n = counts[a] as i64;
            let half = (n - 1) / 2;
            (-half..=half).map(|j| TAU * j as f64 / (n as f64 * h[a])).collect()
        });
        let mut data: Vec<Vec<Complex64>> = s.spectra.iter().map(flatten).collect();
        // one separable pass per axis, with the cell volume folded into the first
        for (axis, th) in theta.iter().enumerate() {
            let scale = if axis == 0 { h[0] * h[1] * h[2] } else { 1.0 };
            data = dft_along(&data, counts, axis, th, vel.axis_nodes(axis), -1.0, scale);
        }
        VelocitySpectrum {
            velocity: vel.clone(),
            theta,
            bandlimit: s.bandlimit(),
            data,
        }
    }

    pub fn theta(&self, axis: usize) -> &[f64] {
        &self.theta[axis]
    }

    pub fn bandlimit(&self) -> usize {
        self.bandlimit
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Flat index of `θ = 0`.
    pub fn zero_index(&self) -> usize {
        let c = self.velocity.counts();
        self.velocity.index(c[0] / 2, c[1] / 2, c[2] / 2)
    }

    /// `P^l(θ_j)` at flat dual-grid index `j` (same ordering as the
    /// velocity nodes).
    pub fn at(&self, j: usize) -> So3Spectrum {
        unflatten(self.bandlimit, &self.data[j])
    }

    /// Inverse transform back to the attitude spectra at every velocity
    /// node, `(2π)⁻³ Σ_θ Δθ e^{iθ·Ω} P^l(θ)`.
    pub fn inverse(&self) -> DensitySpectrum {
        let counts = self.velocity.counts();
        let h = self.velocity.spacing();
        let mut data = self.data.clone();
        for axis in 0..3 {
            let n = counts[axis] as f64;
            let scale = 1.0 / (n * h[axis]);
            let nodes = self.velocity.axis_nodes(axis);
            // Δθ/(2π) per axis
            data = dft_along(&data, counts, axis, nodes, &self.theta[axis], 1.0, scale);
        }
        DensitySpectrum {
            velocity: self.velocity.clone(),
            spectra: data.iter().map(|f| unflatten(self.bandlimit, f)).collect(),
        }
    }

    /// Density at velocity node `v` and rotation `r` through the inverse DFT.
    pub fn reconstruct_at_node(&self, r: &Rotation, v: usize) -> f64 {
        let counts = self.velocity.counts();
        let h = self.velocity.spacing();
        let scale = 1.0 / (0..3).map(|a| counts[a] as f64 * h[a]).product::<f64>();
        let omega = self.velocity.node(v);
        let mut flat = vec![Complex64::new(0.0, 0.0); self.data[0].len()];
        for (j, coeffs) in self.data.iter().enumerate() {
            let (a, b, c) = self.velocity.split(j);
            let phase = self.theta[0][a] * omega[0] + self.theta[1][b] * omega[1] + self.theta[2][c] * omega[2];
            let ph = Complex64::from_polar(scale, phase);
            for (o, x) in flat.iter_mut().zip(coeffs) {
                *o += x * ph;
            }
        }
        inverse_transform_complex(&unflatten(self.bandlimit, &flat), r).re
    }
}

/// One-dimensional transform along `axis` of the flattened velocity grid:
/// `out[p] = scale Σ_i e^{sign·i·out_coord[p]·in_coord[i]} data[i]`.
fn dft_along(
    data: &[Vec<Complex64>],
    counts: [usize; 3],
    axis: usize,
    out_coord: &[f64],
    in_coord: &[f64],
    sign: f64,
    scale: f64,
) -> Vec<Vec<Complex64>> {
    let m = data[0].len();
    let mut out = vec![vec![Complex64::new(0.0, 0.0); m]; data.len()];
    let strides = [counts[1] * counts[2], counts[2], 1];
    let stride = strides[axis];
    for (idx, slot) in out.iter_mut().enumerate() {
        let pos = (idx / stride) % counts[axis];
        let base = idx - pos * stride;
        let y = out_coord[pos];
        for (i, x) in in_coord.iter().enumerate() {
            let ph = Complex64::from_polar(scale, sign * y * x);
            for (o, v) in slot.iter_mut().zip(&data[base + i * stride]) {
                *o += v * ph;
            }
        }
    }
    out
}
