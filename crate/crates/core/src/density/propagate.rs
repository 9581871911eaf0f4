use super::grid::{DensityGrid, VelocityGrid};
use super::init::InitialDensity;
use crate::dynamics::{Lgvi, RigidBodyState};
use crate::error::{Error, Result};
use crate::parallel::{self, Workers};
use crate::so3::{Rotation, Vec3};

/// How the velocity box of the propagated grid is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VelocityBox {
    /// Keep the input box.
    Fixed,
    /// Fit the box to the forward image of the significant support: the
    /// largest-valued nodes that together carry all but `tail` of the mass
    /// are flowed forward (at most `max_samples` of them, evenly strided,
    /// plus the extreme velocity nodes) and the bounding box of their
    /// velocities is widened by `padding` times its width plus one input
    /// grid spacing on each side.
    Track {
        tail: f64,
        padding: f64,
        max_samples: usize,
    },
}

impl Default for VelocityBox {
    fn default() -> Self {
        VelocityBox::Track {
            tail: 1e-6,
            padding: 0.1,
            max_samples: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PropagateOptions {
    pub workers: Workers,
    pub velocity_box: VelocityBox,
    /// Divide by the propagated mass. Off by default so that conservation
    /// errors stay visible.
    pub renormalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationReport {
    /// Total integral of the propagated grid before any renormalization.
    pub mass: f64,
    /// Estimated mass carried by nodes whose backward image left the
    /// input velocity box (their values are set to zero).
    pub escaped_mass: f64,
    pub out_of_support_nodes: usize,
}

/// Something a density can be pulled back from.
pub trait DensitySource: Sync {
    /// Density at a state, or `OutOfSupport` where the source has no data.
    fn density(&self, r: &Rotation, omega: &Vec3) -> Result<f64>;
    /// Estimate used to tally mass lost outside the support.
    fn density_clamped(&self, r: &Rotation, omega: &Vec3) -> f64;
}

impl DensitySource for DensityGrid {
    fn density(&self, r: &Rotation, omega: &Vec3) -> Result<f64> {
        self.evaluate(r, omega)
    }

    fn density_clamped(&self, r: &Rotation, omega: &Vec3) -> f64 {
        self.evaluate_clamped(r, omega)
    }
}

impl DensitySource for InitialDensity {
    fn density(&self, r: &Rotation, omega: &Vec3) -> Result<f64> {
        Ok(self.value(r, omega))
    }

    fn density_clamped(&self, r: &Rotation, omega: &Vec3) -> f64 {
        self.value(r, omega)
    }
}

/// `p_k(R, Ω) = p_0(F⁻ᵏ(R, Ω))`.
pub fn pull_back<S: DensitySource + ?Sized>(
    source: &S,
    lgvi: &Lgvi,
    k: usize,
    r: &Rotation,
    omega: &Vec3,
) -> Result<f64> {
    let s = lgvi.backward_flow(&RigidBodyState::new(*r, *omega), k)?;
    source.density(&s.attitude, &s.omega)
}

/// Advances `d` by `k` steps of the discrete flow by pulling every node of
/// the output grid back through the inverse map and interpolating `d`.
pub fn propagate(
    d: &DensityGrid,
    lgvi: &Lgvi,
    k: usize,
    opts: &PropagateOptions,
) -> Result<(DensityGrid, PropagationReport)> {
    if k == 0 {
        let report = PropagationReport {
            mass: d.mass(opts.workers),
            escaped_mass: 0.0,
            out_of_support_nodes: 0,
        };
        return Ok((d.clone(), report));
    }
    propagate_from(d, d, lgvi, k, opts)
}

/// Like [`propagate`], but the pulled-back values come from `source`, a
/// density at the same time as `d`. `d` supplies the output layout and the
/// support used for velocity tracking. With `k = 0` the source is sampled on
/// the nodes of `d`.
pub fn propagate_from<S: DensitySource + ?Sized>(
    d: &DensityGrid,
    source: &S,
    lgvi: &Lgvi,
    k: usize,
    opts: &PropagateOptions,
) -> Result<(DensityGrid, PropagationReport)> {
    let workers = opts.workers;
    let quad = d.quadrature().clone();
    let vel = match opts.velocity_box {
        _ if k == 0 => d.velocity().clone(),
        VelocityBox::Fixed => d.velocity().clone(),
        VelocityBox::Track {
            tail,
            padding,
            max_samples,
        } => tracked_box(d, lgvi, k, tail, padding, max_samples, workers)?,
    };

    let rotations: Vec<Rotation> = (0..quad.len()).map(|i| quad.rotation(i)).collect();
    let omegas: Vec<Vec3> = (0..vel.len()).map(|i| vel.node(i)).collect();
    let nv = vel.len();
    let mut values = vec![0.0; quad.len() * nv];
    // Nodes whose backward image leaves the box store the negated clamped
    // estimate of the lost value; it is tallied and zeroed below.
    parallel::try_fill(&mut values, workers, |i| -> Result<f64> {
        let s = lgvi.backward_flow(&RigidBodyState::new(rotations[i / nv], omegas[i % nv]), k)?;
        match source.density(&s.attitude, &s.omega) {
            Ok(v) => Ok(v),
            Err(Error::OutOfSupport) => Ok(-source.density_clamped(&s.attitude, &s.omega)),
            Err(e) => Err(e),
        }
    })?;

    let wv = vel.weights();
    let escaped_mass = parallel::sum(quad.len(), workers, |a| {
        let row = &values[a * nv..(a + 1) * nv];
        let s: f64 = row
            .iter()
            .zip(&wv)
            .filter(|(x, _)| x.is_sign_negative())
            .map(|(x, w)| -x * w)
            .sum();
        quad.weight(a) * s
    });
    // interpolation of non-negative data never yields -0.0, so the sign bit
    // identifies lost nodes even when their estimate is zero
    let mut out_of_support_nodes = 0;
    for v in values.iter_mut().filter(|v| v.is_sign_negative()) {
        out_of_support_nodes += 1;
        *v = 0.0;
    }

    let mut out = DensityGrid::from_parts_unchecked(quad, vel, values, d.step() + k as u64);
    let mass = out.mass(workers);
    if opts.renormalize {
        out.normalize(workers)?;
    }
    Ok((
        out,
        PropagationReport {
            mass,
            escaped_mass,
            out_of_support_nodes,
        },
    ))
}

fn tracked_box(
    d: &DensityGrid,
    lgvi: &Lgvi,
    k: usize,
    tail: f64,
    padding: f64,
    max_samples: usize,
    workers: Workers,
) -> Result<VelocityGrid> {
    let cut = support_threshold(d, tail, workers);
    let significant: Vec<usize> = (0..d.len())
        .filter(|&i| d.values()[i] >= cut && d.values()[i] > 0.0)
        .collect();
    if significant.is_empty() {
        return Ok(d.velocity().clone());
    }
    let stride = significant.len().div_ceil(max_samples.max(1));
    let mut samples: Vec<usize> = significant.iter().copied().step_by(stride).collect();
    // keep the extreme velocity nodes of the support in the sample
    let nv = d.velocity().len();
    for axis in 0..3 {
        let coord = |i: &usize| d.velocity().node(i % nv)[axis];
        let lo = significant.iter().min_by(|a, b| coord(a).total_cmp(&coord(b)));
        let hi = significant.iter().max_by(|a, b| coord(a).total_cmp(&coord(b)));
        samples.extend(lo.into_iter().chain(hi).copied());
    }
    let quad = d.quadrature();
    let mut images = vec![Vec3::zeros(); samples.len()];
    parallel::try_fill(&mut images, workers, |j| -> Result<Vec3> {
        let i = samples[j];
        let s = RigidBodyState::new(quad.rotation(i / nv), d.velocity().node(i % nv));
        Ok(lgvi.flow(&s, k)?.omega)
    })?;
    let mut lo = images[0];
    let mut hi = images[0];
    for w in &images {
        lo = lo.inf(w);
        hi = hi.sup(w);
    }
    let pad = (hi - lo) * padding + d.velocity().spacing();
    VelocityGrid::new(lo - pad, hi + pad, d.velocity().counts())
}

/// Bins per decade in [`support_threshold`].
const BINS_PER_DECADE: usize = 20;
const DECADES: usize = 40;

/// Largest value `τ` (to histogram resolution) such that the nodes with
/// value `>= τ` carry at least `1 - tail` of the total mass.
fn support_threshold(d: &DensityGrid, tail: f64, workers: Workers) -> f64 {
    let max = d.max_value();
    if max <= 0.0 {
        return 0.0;
    }
    let nbins = BINS_PER_DECADE * DECADES;
    let wv = d.velocity().weights();
    let quad = d.quadrature();
    let bin_of = |x: f64| -> usize {
        let decades = (max / x).log10();
        ((decades * BINS_PER_DECADE as f64) as usize).min(nbins - 1)
    };
    // histograms over fixed blocks of attitude nodes, merged in block order
    const BLOCK: usize = 256;
    let n_blocks = quad.len().div_ceil(BLOCK);
    let mut rows = vec![Vec::new(); n_blocks];
    parallel::fill(&mut rows, workers, |b| {
        let mut h = vec![0.0; nbins];
        for a in b * BLOCK..((b + 1) * BLOCK).min(quad.len()) {
            let wa = quad.weight(a);
            for (x, w) in d.velocity_slice(a).iter().zip(&wv) {
                if *x > 0.0 {
                    h[bin_of(*x)] += wa * w * x;
                }
            }
        }
        h
    });
    let mut hist = vec![0.0; nbins];
    for h in &rows {
        for (t, x) in hist.iter_mut().zip(h) {
            *t += x;
        }
    }
    let total: f64 = hist.iter().sum();
    let mut acc = 0.0;
    for (b, m) in hist.iter().enumerate() {
        acc += m;
        if acc >= (1.0 - tail) * total {
            return max * 10f64.powf(-((b + 1) as f64) / BINS_PER_DECADE as f64);
        }
    }
    0.0
}
