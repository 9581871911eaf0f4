use crate::error::{Error, Result};
use crate::harmonic::{simpson_weights, So3Quadrature};
use crate::parallel::{self, Workers};
use crate::so3::{rotation_to_euler313, Rotation, Vec3};

/// Relative slack (in units of the grid spacing) when deciding whether a
/// point lies inside the velocity box.
const BOX_SLACK: f64 = 1e-9;

/// Tensor-product grid over a velocity box `[lo, hi]` with Simpson weights.
///
/// Flat index of node `(i, j, k)` is `(i n1 + j) n2 + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGrid {
    lo: Vec3,
    hi: Vec3,
    counts: [usize; 3],
    nodes: [Vec<f64>; 3],
    weights: [Vec<f64>; 3],
}

impl VelocityGrid {
    pub fn new(lo: Vec3, hi: Vec3, counts: [usize; 3]) -> Result<Self> {
        let mut nodes: [Vec<f64>; 3] = Default::default();
        let mut weights: [Vec<f64>; 3] = Default::default();
        for axis in 0..3 {
            let n = counts[axis];
            let field = format!("grid.velocity.n{}", axis + 1);
            if n < 3 || n.is_multiple_of(2) {
                return Err(Error::param(
                    &field,
                    format!("node count must be odd and >= 3, got {n}"),
                ));
            }
            if !(lo[axis].is_finite() && hi[axis].is_finite() && hi[axis] > lo[axis]) {
                return Err(Error::param(
                    "grid.velocity.box",
                    format!(
                        "axis {} needs finite lo < hi, got [{}, {}]",
                        axis + 1,
                        lo[axis],
                        hi[axis]
                    ),
                ));
            }
            let step = (hi[axis] - lo[axis]) / (n - 1) as f64;
            nodes[axis] = (0..n)
                .map(|i| {
                    if i == n - 1 {
                        hi[axis]
                    } else {
                        lo[axis] + step * i as f64
                    }
                })
                .collect();
            weights[axis] = simpson_weights(n, lo[axis], hi[axis])?;
        }
        Ok(VelocityGrid {
            lo,
            hi,
            counts,
            nodes,
            weights,
        })
    }

    /// Box `center ± half_width` with `n` nodes per axis.
    pub fn centered(center: Vec3, half_width: Vec3, n: usize) -> Result<Self> {
        Self::new(center - half_width, center + half_width, [n; 3])
    }

    pub fn lo(&self) -> &Vec3 {
        &self.lo
    }

    pub fn hi(&self) -> &Vec3 {
        &self.hi
    }

    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis_nodes(&self, axis: usize) -> &[f64] {
        &self.nodes[axis]
    }

    pub fn axis_weights(&self, axis: usize) -> &[f64] {
        &self.weights[axis]
    }

    pub fn spacing(&self) -> Vec3 {
        Vec3::from_fn(|i, _| (self.hi[i] - self.lo[i]) / (self.counts[i] - 1) as f64)
    }

    pub fn volume(&self) -> f64 {
        (self.hi - self.lo).iter().product()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.counts[1] + j) * self.counts[2] + k
    }

    #[inline]
    pub fn split(&self, idx: usize) -> (usize, usize, usize) {
        let k = idx % self.counts[2];
        let rest = idx / self.counts[2];
        (rest / self.counts[1], rest % self.counts[1], k)
    }

    pub fn node(&self, idx: usize) -> Vec3 {
        let (i, j, k) = self.split(idx);
        Vec3::new(self.nodes[0][i], self.nodes[1][j], self.nodes[2][k])
    }

    pub fn weight(&self, idx: usize) -> f64 {
        let (i, j, k) = self.split(idx);
        self.weights[0][i] * self.weights[1][j] * self.weights[2][k]
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    pub fn contains(&self, omega: &Vec3) -> bool {
        let slack = self.spacing() * BOX_SLACK;
        (0..3).all(|i| omega[i] >= self.lo[i] - slack[i] && omega[i] <= self.hi[i] + slack[i])
    }

    /// Trilinear stencil `(flat index, weight)` for a point inside the box.
    pub fn stencil(&self, omega: &Vec3) -> Option<[(usize, f64); 8]> {
        if !self.contains(omega) {
            return None;
        }
        Some(self.stencil_clamped(omega))
    }

    /// Stencil after clamping the point into the box.
    pub fn stencil_clamped(&self, omega: &Vec3) -> [(usize, f64); 8] {
        let h = self.spacing();
        let mut cell = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let x = ((omega[a] - self.lo[a]) / h[a]).clamp(0.0, (self.counts[a] - 1) as f64);
            let i = (x.floor() as usize).min(self.counts[a] - 2);
            cell[a] = i;
            frac[a] = x - i as f64;
        }
        trilinear(cell, frac, |i, j, k| self.index(i, j, k))
    }
}

#[inline]
fn trilinear(cell: [usize; 3], frac: [f64; 3], index: impl Fn(usize, usize, usize) -> usize) -> [(usize, f64); 8] {
    let mut out = [(0, 0.0); 8];
    for (c, slot) in out.iter_mut().enumerate() {
        let (di, dj, dk) = (c >> 2, (c >> 1) & 1, c & 1);
        let w = (if di == 1 { frac[0] } else { 1.0 - frac[0] })
            * (if dj == 1 { frac[1] } else { 1.0 - frac[1] })
            * (if dk == 1 { frac[2] } else { 1.0 - frac[2] });
        *slot = (index(cell[0] + di, cell[1] + dj, cell[2] + dk), w);
    }
    out
}

/// Trilinear stencil on the Euler-angle grid, periodic in `α, γ` and
/// clamped in `β`.
pub fn attitude_stencil(q: &So3Quadrature, r: &Rotation) -> [(usize, f64); 8] {
    let e = rotation_to_euler313(r);
    let [na, nb, ng] = q.counts();
    let locate = |x: f64, n: usize| -> (usize, f64) {
        let x = x.clamp(0.0, (n - 1) as f64);
        let i = (x.floor() as usize).min(n - 2);
        (i, x - i as f64)
    };
    let two_pi = std::f64::consts::TAU;
    let (ia, ta) = locate(e.alpha / two_pi * (na - 1) as f64, na);
    let (ib, tb) = locate(e.beta / std::f64::consts::PI * (nb - 1) as f64, nb);
    let (ig, tg) = locate(e.gamma / two_pi * (ng - 1) as f64, ng);
    trilinear([ia, ib, ig], [ta, tb, tg], |a, b, g| q.index(a, b, g))
}

/// Joint density sampled on attitude × velocity nodes.
///
/// `values[a * n_vel + v]` holds the density at attitude node `a` and
/// velocity node `v`; `step` is the time index `k` of `p_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    quad: So3Quadrature,
    vel: VelocityGrid,
    values: Vec<f64>,
    step: u64,
}

impl DensityGrid {
    pub fn from_values(quad: So3Quadrature, vel: VelocityGrid, values: Vec<f64>, step: u64) -> Result<Self> {
        if values.len() != quad.len() * vel.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} attitude x {} velocity nodes",
                values.len(),
                quad.len(),
                vel.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param(
                "density.values",
                format!("value at node {i} is {}, expected finite and non-negative", values[i]),
            ));
        }
        Ok(DensityGrid {
            quad,
            vel,
            values,
            step,
        })
    }

    /// Samples `f(R, Ω)` at every node.
    pub fn from_fn<F>(quad: So3Quadrature, vel: VelocityGrid, workers: Workers, f: F) -> Result<Self>
    where
        F: Fn(&Rotation, &Vec3) -> f64 + Sync,
    {
        let rotations: Vec<Rotation> = (0..quad.len()).map(|i| quad.rotation(i)).collect();
        let omegas: Vec<Vec3> = (0..vel.len()).map(|i| vel.node(i)).collect();
        let nv = vel.len();
        let mut values = vec![0.0; quad.len() * nv];
        parallel::fill(&mut values, workers, |i| f(&rotations[i / nv], &omegas[i % nv]));
        Self::from_values(quad, vel, values, 0)
    }

    /// Uniform density `1 / volume` over the attitude group and velocity box.
    pub fn uniform(quad: So3Quadrature, vel: VelocityGrid) -> Self {
        let v = 1.0 / vel.volume();
        let values = vec![v; quad.len() * vel.len()];
        DensityGrid {
            quad,
            vel,
            values,
            step: 0,
        }
    }

    pub(crate) fn from_parts_unchecked(quad: So3Quadrature, vel: VelocityGrid, values: Vec<f64>, step: u64) -> Self {
        DensityGrid {
            quad,
            vel,
            values,
            step,
        }
    }

    pub fn quadrature(&self) -> &So3Quadrature {
        &self.quad
    }

    pub fn velocity(&self) -> &VelocityGrid {
        &self.vel
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn value(&self, att: usize, vel: usize) -> f64 {
        self.values[att * self.vel.len() + vel]
    }

    /// Values at all velocity nodes of one attitude node.
    pub fn velocity_slice(&self, att: usize) -> &[f64] {
        let nv = self.vel.len();
        &self.values[att * nv..(att + 1) * nv]
    }

    /// Multiplies every value by `factor` (which must be finite and >= 0).
    pub fn scale(&mut self, factor: f64) {
        debug_assert!(factor.is_finite() && factor >= 0.0);
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    /// Node-wise `values[i] = f(i, values[i])`; results must stay non-negative.
    pub fn map_values<F>(&mut self, workers: Workers, f: F) -> Result<()>
    where
        F: Fn(usize, f64) -> f64 + Sync,
    {
        parallel::for_each_chunk(&mut self.values, workers, |start, chunk| {
            for (j, v) in chunk.iter_mut().enumerate() {
                *v = f(start + j, *v);
            }
        });
        if let Some(i) = self.values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param(
                "density.values",
                format!(
                    "value at node {i} is {}, expected finite and non-negative",
                    self.values[i]
                ),
            ));
        }
        Ok(())
    }

    /// Total integral under the Haar × Simpson product rule.
    pub fn mass(&self, workers: Workers) -> f64 {
        let wv = self.vel.weights();
        let nv = wv.len();
        parallel::sum(self.quad.len(), workers, |a| {
            let row = &self.values[a * nv..(a + 1) * nv];
            let s: f64 = row.iter().zip(&wv).map(|(x, w)| x * w).sum();
            self.quad.weight(a) * s
        })
    }

    /// Divides by the total integral and returns it.
    pub fn normalize(&mut self, workers: Workers) -> Result<f64> {
        let m = self.mass(workers);
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::param(
                "density",
                format!("cannot normalize a density of mass {m}"),
            ));
        }
        self.scale(1.0 / m);
        Ok(m)
    }

    /// `|mass - mass on every other node|`, an a posteriori estimate of the
    /// quadrature error. `None` when the coarse grid would not have odd node
    /// counts of at least 3.
    pub fn quadrature_error_estimate(&self, workers: Workers) -> Option<f64> {
        let [na, nb, ng] = self.quad.counts();
        let vc = self.vel.counts();
        let coarse = |n: usize| {
            if n % 4 == 1 && n >= 5 {
                Some(n.div_ceil(2))
            } else {
                None
            }
        };
        let cq = So3Quadrature::new(coarse(na)?, coarse(nb)?, coarse(ng)?, self.quad.rule()).ok()?;
        let cv = VelocityGrid::new(
            self.vel.lo,
            self.vel.hi,
            [coarse(vc[0])?, coarse(vc[1])?, coarse(vc[2])?],
        )
        .ok()?;
        let wv = cv.weights();
        let coarse_mass = parallel::sum(cq.len(), workers, |a| {
            let (ia, ib, ig) = cq.split(a);
            let fa = self.quad.index(2 * ia, 2 * ib, 2 * ig);
            let s: f64 = (0..cv.len())
                .map(|v| {
                    let (i, j, k) = cv.split(v);
                    wv[v] * self.value(fa, self.vel.index(2 * i, 2 * j, 2 * k))
                })
                .sum();
            cq.weight(a) * s
        });
        Some((self.mass(workers) - coarse_mass).abs())
    }

    /// Trilinear × trilinear interpolation; exact at nodes.
    pub fn evaluate(&self, r: &Rotation, omega: &Vec3) -> Result<f64> {
        let vs = self.vel.stencil(omega).ok_or(Error::OutOfSupport)?;
        Ok(self.interpolate(&attitude_stencil(&self.quad, r), &vs))
    }

    /// Like [`DensityGrid::evaluate`] with `Ω` clamped into the box.
    pub fn evaluate_clamped(&self, r: &Rotation, omega: &Vec3) -> f64 {
        self.interpolate(&attitude_stencil(&self.quad, r), &self.vel.stencil_clamped(omega))
    }

    #[inline]
    fn interpolate(&self, att: &[(usize, f64); 8], vel: &[(usize, f64); 8]) -> f64 {
        let nv = self.vel.len();
        let mut total = 0.0;
        for &(a, wa) in att {
            if wa == 0.0 {
                continue;
            }
            let row = &self.values[a * nv..(a + 1) * nv];
            let s: f64 = vel.iter().map(|&(v, wv)| wv * row[v]).sum();
            total += wa * s;
        }
        total
    }

    /// Marginal over velocity at each attitude node.
    pub fn attitude_marginal_values(&self, workers: Workers) -> Vec<f64> {
        let wv = self.vel.weights();
        let nv = wv.len();
        let mut out = vec![0.0; self.quad.len()];
        parallel::fill(&mut out, workers, |a| {
            self.values[a * nv..(a + 1) * nv]
                .iter()
                .zip(&wv)
                .map(|(x, w)| x * w)
                .sum()
        });
        out
    }

    /// Marginal over attitude at each velocity node.
    pub fn velocity_marginal_values(&self) -> Vec<f64> {
        let nv = self.vel.len();
        let mut out = vec![0.0; nv];
        for a in 0..self.quad.len() {
            let w = self.quad.weight(a);
            for (o, x) in out.iter_mut().zip(&self.values[a * nv..(a + 1) * nv]) {
                *o += w * x;
            }
        }
        out
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Flat index of the largest value (first one on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }
}
