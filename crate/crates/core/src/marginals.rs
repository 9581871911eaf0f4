//! Attitude marginals and per-axis sphere marginals.
//!
//! The sphere marginal of axis `i` is the density of the column `R e_i` on
//! S² with respect to the area element,
//!
//! ```text
//! p^i(r) = 1/(4π) · 1/(2π) ∫ p_R(R_i(r) exp(θ ê_i)) dθ
//! ```
//!
//! where `R_i(r)` is any rotation with `R_i(r) e_i = r`. With this
//! normalization a uniform attitude density gives `1/(4π)` and every sphere
//! marginal integrates to one over the unit sphere.

use std::f64::consts::{PI, TAU};
use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::density::{attitude_stencil, DensityGrid};
use crate::error::{Error, Result};
use crate::harmonic::{irreps, simpson_weights, So3Quadrature, So3Spectrum, So3Transform};
use crate::parallel::{self, Workers};
use crate::so3::{coset_representative, exp_so3, log_so3, Axis, Mat3, Rotation, Vec3};

/// Default circle quadrature size.
pub const DEFAULT_CIRCLE_NODES: usize = 64;

/// Density over attitude nodes with respect to the normalized Haar measure.
#[derive(Debug, Clone, PartialEq)]
pub struct AttitudeMarginal {
    quad: So3Quadrature,
    values: Vec<f64>,
}

impl AttitudeMarginal {
    pub fn new(quad: So3Quadrature, values: Vec<f64>) -> Result<Self> {
        if values.len() != quad.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} attitude nodes",
                values.len(),
                quad.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param("marginal.values", "must be finite and non-negative"));
        }
        Ok(AttitudeMarginal { quad, values })
    }

    pub fn from_fn<F: Fn(&Rotation) -> f64>(quad: So3Quadrature, f: F) -> Result<Self> {
        let values = (0..quad.len()).map(|i| f(&quad.rotation(i))).collect();
        Self::new(quad, values)
    }

    pub fn quadrature(&self) -> &So3Quadrature {
        &self.quad
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn integral(&self) -> f64 {
        self.quad.integrate(&self.values)
    }

    /// Trilinear interpolation in Euler angles.
    pub fn evaluate(&self, r: &Rotation) -> f64 {
        attitude_stencil(&self.quad, r)
            .iter()
            .map(|&(i, w)| w * self.values[i])
            .sum()
    }

    /// Mode estimate: the largest node, moved to the maximum of a quadratic
    /// fitted to the log-density of its neighbours in the tangent space at
    /// that node. Falls back to the node when the fit is not concave.
    pub fn argmax(&self) -> Rotation {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        let r0 = self.quad.rotation(best);
        let [na, nb, ng] = self.quad.counts();
        let spacing = (TAU / (na - 1) as f64)
            .max(PI / (nb - 1) as f64)
            .max(TAU / (ng - 1) as f64);
        let floor = self.values[best] * 1e-12;
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for (i, &v) in self.values.iter().enumerate() {
            if v <= floor {
                continue;
            }
            let x = log_so3(&(r0.transpose() * self.quad.rotation(i)));
            if x.norm() > 1.5 * spacing {
                continue;
            }
            rows.extend_from_slice(&[
                1.0,
                x[0],
                x[1],
                x[2],
                x[0] * x[0],
                x[1] * x[1],
                x[2] * x[2],
                x[0] * x[1],
                x[0] * x[2],
                x[1] * x[2],
            ]);
            rhs.push(v.ln());
        }
        if rhs.len() < 10 {
            return r0;
        }
        let a = DMatrix::from_row_slice(rhs.len(), 10, &rows);
        let Ok(c) = a.svd(true, true).solve(&DVector::from_vec(rhs), 1e-12) else {
            return r0;
        };
        let hess = Mat3::new(2.0 * c[4], c[7], c[8], c[7], 2.0 * c[5], c[9], c[8], c[9], 2.0 * c[6]);
        // concave means -hess is positive definite
        let Some(chol) = (-hess).cholesky() else {
            return r0;
        };
        let step = chol.solve(&Vec3::new(c[1], c[2], c[3]));
        if !(step.norm() <= spacing) {
            return r0;
        }
        r0 * exp_so3(&step)
    }
}

/// `p_R(R) = ∫ p(R, Ω) dΩ` by Simpson's rule over the velocity box.
pub fn attitude_marginal(d: &DensityGrid, workers: Workers) -> AttitudeMarginal {
    AttitudeMarginal {
        quad: d.quadrature().clone(),
        values: d.attitude_marginal_values(workers),
    }
}

/// Closed equiangular grid on S²: colatitudes `jπ/(n_colat-1)` and
/// longitudes `2πk/(n_lon-1)` (the last longitude repeats the first).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SphereGrid {
    n_colat: usize,
    n_lon: usize,
}

impl Default for SphereGrid {
    fn default() -> Self {
        SphereGrid {
            n_colat: 65,
            n_lon: 129,
        }
    }
}

impl SphereGrid {
    pub fn new(n_colat: usize, n_lon: usize) -> Result<Self> {
        if n_colat < 3 || n_colat.is_multiple_of(2) {
            return Err(Error::param(
                "grid.sphere.colatitude",
                format!("node count must be odd and >= 3, got {n_colat}"),
            ));
        }
        if n_lon < 3 {
            return Err(Error::param(
                "grid.sphere.longitude",
                format!("node count must be >= 3, got {n_lon}"),
            ));
        }
        Ok(SphereGrid { n_colat, n_lon })
    }

    pub fn n_colat(&self) -> usize {
        self.n_colat
    }

    pub fn n_lon(&self) -> usize {
        self.n_lon
    }

    pub fn len(&self) -> usize {
        self.n_colat * self.n_lon
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn colatitude(&self, j: usize) -> f64 {
        PI * j as f64 / (self.n_colat - 1) as f64
    }

    pub fn longitude(&self, k: usize) -> f64 {
        TAU * k as f64 / (self.n_lon - 1) as f64
    }

    /// Flat index `j n_lon + k`, colatitude-major.
    pub fn split(&self, idx: usize) -> (usize, usize) {
        (idx / self.n_lon, idx % self.n_lon)
    }

    pub fn point(&self, idx: usize) -> Vec3 {
        let (j, k) = self.split(idx);
        let (st, ct) = self.colatitude(j).sin_cos();
        let (sp, cp) = self.longitude(k).sin_cos();
        Vec3::new(st * cp, st * sp, ct)
    }

    /// Area weights: Simpson in colatitude times `sin`, periodic trapezoid
    /// in longitude.
    pub fn weights(&self) -> Vec<f64> {
        let wc = simpson_weights(self.n_colat, 0.0, PI).expect("odd colatitude count");
        let h = TAU / (self.n_lon - 1) as f64;
        let wl: Vec<f64> = (0..self.n_lon)
            .map(|k| if k == 0 || k == self.n_lon - 1 { 0.5 * h } else { h })
            .collect();
        let mut out = Vec::with_capacity(self.len());
        for (j, w) in wc.iter().enumerate() {
            let s = w * self.colatitude(j).sin();
            out.extend(wl.iter().map(|x| s * x));
        }
        out
    }
}

/// Density of `R e_i` on a sphere grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereMarginal {
    axis: Axis,
    grid: SphereGrid,
    values: Vec<f64>,
}

impl SphereMarginal {
    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn grid(&self) -> &SphereGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn integral(&self) -> f64 {
        self.grid.weights().iter().zip(&self.values).map(|(w, v)| w * v).sum()
    }

    /// `∫ r p(r) dA`.
    pub fn first_moment(&self) -> Vec3 {
        self.grid
            .weights()
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (w, v))| self.grid.point(i) * (w * v))
            .sum()
    }

    /// `1 - |∫ r p(r) dA| / ∫ p(r) dA`, between 0 (a point mass) and 1.
    pub fn circular_variance(&self) -> f64 {
        1.0 - self.first_moment().norm() / self.integral()
    }

    /// Grid point with the largest density.
    pub fn argmax(&self) -> Vec3 {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        self.grid.point(best)
    }

    /// Bilinear interpolation in (colatitude, longitude).
    pub fn evaluate(&self, r: &Vec3) -> f64 {
        let r = r.normalize();
        let colat = r[2].clamp(-1.0, 1.0).acos();
        let lon = r[1].atan2(r[0]).rem_euclid(TAU);
        let (nc, nl) = (self.grid.n_colat, self.grid.n_lon);
        let x = (colat / PI * (nc - 1) as f64).clamp(0.0, (nc - 1) as f64);
        let y = (lon / TAU * (nl - 1) as f64).clamp(0.0, (nl - 1) as f64);
        let (j, k) = ((x.floor() as usize).min(nc - 2), (y.floor() as usize).min(nl - 2));
        let (tx, ty) = (x - j as f64, y - k as f64);
        let v = |j: usize, k: usize| self.values[j * nl + k];
        (1.0 - tx) * ((1.0 - ty) * v(j, k) + ty * v(j, k + 1)) + tx * ((1.0 - ty) * v(j + 1, k) + ty * v(j + 1, k + 1))
    }
}

/// Sphere-marginal density at a single direction, with `n_theta` trapezoid
/// nodes on the stabilizer circle.
pub fn sphere_density_at<F: Fn(&Rotation) -> f64>(p_r: F, axis: Axis, r: &Vec3, n_theta: usize) -> Result<f64> {
    let rep = coset_representative(axis, &r.normalize())?;
    let e = axis.unit();
    let s: f64 = (0..n_theta)
        .map(|t| p_r(&(rep * exp_so3(&(e * (TAU * t as f64 / n_theta as f64))))))
        .sum();
    Ok(s / n_theta as f64 / (4.0 * PI))
}

pub fn sphere_marginal(
    a: &AttitudeMarginal,
    axis: Axis,
    grid: SphereGrid,
    n_theta: usize,
    workers: Workers,
) -> Result<SphereMarginal> {
    if n_theta < 8 {
        return Err(Error::param(
            "marginal.circle_nodes",
            format!("need at least 8 circle nodes, got {n_theta}"),
        ));
    }
    let mut values = vec![0.0; grid.len()];
    parallel::try_fill(&mut values, workers, |i| {
        sphere_density_at(|r| a.evaluate(r), axis, &grid.point(i), n_theta)
    })?;
    Ok(SphereMarginal { axis, grid, values })
}

/// How sphere marginals read the attitude marginal between grid nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MarginalMethod {
    /// Band-limited Fourier series of the attitude marginal, averaged over
    /// each circle in closed form.
    #[default]
    Series,
    /// Trilinear interpolation in Euler angles with trapezoid nodes on each
    /// circle.
    Trilinear,
}

impl MarginalMethod {
    pub fn name(self) -> &'static str {
        match self {
            MarginalMethod::Series => "series",
            MarginalMethod::Trilinear => "trilinear",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "series" => Some(MarginalMethod::Series),
            "trilinear" => Some(MarginalMethod::Trilinear),
            _ => None,
        }
    }
}

/// Fourier coefficients of the attitude marginal up to `bandlimit`.
pub fn attitude_series(a: &AttitudeMarginal, bandlimit: usize) -> Result<So3Spectrum> {
    So3Transform::new(a.quad.clone(), bandlimit)?.forward(&a.values)
}

/// Sphere marginal of the band-limited density with coefficients `spec`.
///
/// With `Q e_3 = e_i` the circle is `S Rz(θ) Qᵀ` for any `S` with
/// `S e_3 = r`, and the average of `U^l(Rz(θ))` keeps only the `m = 0`
/// entry, so
///
/// ```text
/// p^i(r) = 1/(4π) Σ_l (2l+1) [U^l(Qᵀ) P^l U^l(S)]_{00}
/// ```
pub fn sphere_marginal_series(
    spec: &So3Spectrum,
    axis: Axis,
    grid: SphereGrid,
    workers: Workers,
) -> Result<SphereMarginal> {
    let bandlimit = spec.bandlimit();
    let q = coset_representative(Axis::Z, &axis.unit())?;
    // row 0 of U^l(Qᵀ) P^l
    let rows: Vec<Vec<Complex64>> = irreps(bandlimit, &q.transpose())
        .iter()
        .zip(spec.coeffs())
        .map(|(u, p)| {
            let l = u.l;
            (0..2 * l + 1)
                .map(|b| (0..2 * l + 1).map(|a| u.u[(l, a)] * p[(a, b)]).sum())
                .collect()
        })
        .collect();
    let mut values = vec![0.0; grid.len()];
    parallel::try_fill(&mut values, workers, |i| -> Result<f64> {
        let s = coset_representative(Axis::Z, &grid.point(i))?;
        let mut total = 0.0;
        for (u, row) in irreps(bandlimit, &s).iter().zip(&rows) {
            let l = u.l;
            let v: Complex64 = row.iter().enumerate().map(|(b, x)| x * u.u[(b, l)]).sum();
            total += (2 * l + 1) as f64 * v.re;
        }
        Ok(total / (4.0 * PI))
    })?;
    Ok(SphereMarginal { axis, grid, values })
}

/// Sphere marginals of all three axes by `method`. `bandlimit` applies to
/// [`MarginalMethod::Series`] and `n_theta` to [`MarginalMethod::Trilinear`].
pub fn sphere_marginals_by(
    a: &AttitudeMarginal,
    method: MarginalMethod,
    bandlimit: usize,
    grid: SphereGrid,
    n_theta: usize,
    workers: Workers,
) -> Result<Vec<SphereMarginal>> {
    match method {
        MarginalMethod::Trilinear => sphere_marginals(a, grid, n_theta, workers),
        MarginalMethod::Series => {
            let spec = attitude_series(a, bandlimit)?;
            Axis::ALL
                .iter()
                .map(|&axis| sphere_marginal_series(&spec, axis, grid, workers))
                .collect()
        }
    }
}

/// Sphere marginals of all three body axes.
pub fn sphere_marginals(
    a: &AttitudeMarginal,
    grid: SphereGrid,
    n_theta: usize,
    workers: Workers,
) -> Result<Vec<SphereMarginal>> {
    Axis::ALL
        .iter()
        .map(|&axis| sphere_marginal(a, axis, grid, n_theta, workers))
        .collect()
}

/// `axis{i}_t{k}.csv`
pub fn sphere_file_name(axis: Axis, step: u64) -> String {
    format!("axis{}_t{}.csv", axis.index(), step)
}

/// Writes `colatitude,longitude,x,y,z,density` rows in grid order. Each
/// entry of `header` becomes a `#` comment line before the column names.
pub fn write_sphere_csv<W: Write>(w: &mut W, s: &SphereMarginal, header: &[String]) -> Result<()> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    writeln!(
        w,
        "# sphere marginal of body axis {} on a {}x{} colatitude x longitude grid",
        s.axis.index(),
        s.grid.n_colat,
        s.grid.n_lon
    )?;
    writeln!(w, "colatitude,longitude,x,y,z,density")?;
    for i in 0..s.grid.len() {
        let (j, k) = s.grid.split(i);
        let p = s.grid.point(i);
        writeln!(
            w,
            "{},{},{},{},{},{}",
            s.grid.colatitude(j),
            s.grid.longitude(k),
            p[0],
            p[1],
            p[2],
            s.values[i]
        )?;
    }
    Ok(())
}

pub fn export_sphere(s: &SphereMarginal, path: &Path, header: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_sphere_csv(&mut w, s, header)?;
    w.flush()?;
    Ok(())
}

/// Parses the rows of a sphere CSV as `[colatitude, longitude, x, y, z, density]`.
pub fn read_sphere_csv<R: BufRead>(r: R) -> Result<Vec<[f64; 6]>> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() || line.starts_with('#') || line.starts_with("colatitude") {
            continue;
        }
        let mut row = [0.0; 6];
        let mut fields = line.split(',');
        for slot in row.iter_mut() {
            *slot = fields
                .next()
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| Error::Format(format!("line {}: expected 6 numeric fields", i + 1)))?;
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_weights_integrate_area() {
        let g = SphereGrid::default();
        let total: f64 = g.weights().iter().sum();
        assert!((total - 4.0 * PI).abs() < 1e-6);
    }

    #[test]
    fn uniform_gives_inverse_four_pi() {
        let q = So3Quadrature::cubic(5).unwrap();
        let a = AttitudeMarginal::from_fn(q, |_| 1.0).unwrap();
        let s = sphere_marginal(&a, Axis::Y, SphereGrid::new(9, 17).unwrap(), 16, Workers::single()).unwrap();
        for v in s.values() {
            assert!((v - 1.0 / (4.0 * PI)).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip() {
        let q = So3Quadrature::cubic(9).unwrap();
        let a = AttitudeMarginal::from_fn(q, |r| (2.0 * (r.matrix().trace() - 3.0)).exp()).unwrap();
        let s = sphere_marginal(&a, Axis::Z, SphereGrid::new(5, 9).unwrap(), 8, Workers::single()).unwrap();
        let mut buf = Vec::new();
        write_sphere_csv(&mut buf, &s, &["tool test".into()]).unwrap();
        let rows = read_sphere_csv(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 45);
        for (row, v) in rows.iter().zip(s.values()) {
            assert_eq!(row[5], *v);
        }
    }

    #[test]
    fn rejects_few_circle_nodes() {
        let q = So3Quadrature::cubic(3).unwrap();
        let a = AttitudeMarginal::from_fn(q, |_| 1.0).unwrap();
        assert!(sphere_marginal(&a, Axis::X, SphereGrid::default(), 4, Workers::single()).is_err());
    }
}
