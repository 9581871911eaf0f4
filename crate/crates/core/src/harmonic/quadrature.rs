use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::so3::{euler313_to_rotation, Euler313, Rotation};

/// Composite Simpson weights for `n` (odd, >= 3) equispaced nodes on `[a, b]`.
pub fn simpson_weights(n: usize, a: f64, b: f64) -> Result<Vec<f64>> {
    if n < 3 || n.is_multiple_of(2) {
        return Err(Error::param(
            "nodes",
            format!("Simpson's rule needs an odd node count >= 3, got {n}"),
        ));
    }
    let h = (b - a) / (n - 1) as f64;
    Ok((0..n)
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
        .collect())
}

/// Trapezoid weights on `n` closed nodes over `[0, 2π]` (first and last node
/// coincide on the circle and share one weight).
pub fn periodic_trapezoid_weights(n: usize) -> Vec<f64> {
    let h = TAU / (n - 1) as f64;
    (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h }).collect()
}

/// Weights `w_j` on `β_j = jπ/(n-1)` such that
/// `Σ_j w_j g(β_j) = ∫_0^π g(β) sin β dβ` exactly for every cosine
/// polynomial `g` of degree `<= n - 1`.
pub fn clenshaw_curtis_sin_weights(n: usize) -> Vec<f64> {
    let intervals = n - 1;
    let nf = intervals as f64;
    // ∫_0^π cos(kβ) sin β dβ
    let moment = |k: usize| -> f64 {
        if k % 2 == 1 {
            0.0
        } else {
            2.0 / (1.0 - (k * k) as f64)
        }
    };
    let half = |i: usize| if i == 0 || i == intervals { 0.5 } else { 1.0 };
    (0..n)
        .map(|j| {
            let s: f64 = (0..n)
                .map(|k| half(k) * moment(k) * (PI * (k * j) as f64 / nf).cos())
                .sum();
            half(j) * 2.0 / nf * s
        })
        .collect()
}

/// How the attitude grid is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuadratureRule {
    /// Trapezoid in `α, γ` and Clenshaw-Curtis weights against `sin β`:
    /// exact for band-limited integrands, so Fourier round trips are exact.
    #[default]
    Spectral,
    /// Composite Simpson in all three angles with the `sin β` Haar factor.
    Simpson,
}

impl QuadratureRule {
    pub fn name(self) -> &'static str {
        match self {
            QuadratureRule::Spectral => "spectral",
            QuadratureRule::Simpson => "simpson",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "spectral" => Some(QuadratureRule::Spectral),
            "simpson" => Some(QuadratureRule::Simpson),
            _ => None,
        }
    }
}

/// Equiangular Euler-angle grid on SO(3) with Haar-weighted quadrature.
///
/// Nodes are `α_i = 2πi/(Nα-1)`, `β_j = πj/(Nβ-1)`, `γ_k = 2πk/(Nγ-1)`
/// (closed intervals, odd counts). Flat index is `(i Nβ + j) Nγ + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct So3Quadrature {
    counts: [usize; 3],
    rule: QuadratureRule,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    gamma: Vec<f64>,
    w_alpha: Vec<f64>,
    w_beta: Vec<f64>,
    w_gamma: Vec<f64>,
}

impl So3Quadrature {
    pub fn new(n_alpha: usize, n_beta: usize, n_gamma: usize, rule: QuadratureRule) -> Result<Self> {
        for (name, n) in [("alpha", n_alpha), ("beta", n_beta), ("gamma", n_gamma)] {
            if n < 3 || n.is_multiple_of(2) {
                return Err(Error::param(
                    &format!("grid.attitude.{name}"),
                    format!("node count must be odd and >= 3, got {n}"),
                ));
            }
        }
        let nodes = |n: usize, span: f64| -> Vec<f64> { (0..n).map(|i| span * i as f64 / (n - 1) as f64).collect() };
        let alpha = nodes(n_alpha, TAU);
        let beta = nodes(n_beta, PI);
        let gamma = nodes(n_gamma, TAU);
        let haar = 1.0 / (8.0 * PI * PI);
        let (w_alpha, w_beta, w_gamma) = match rule {
            QuadratureRule::Spectral => (
                periodic_trapezoid_weights(n_alpha),
                clenshaw_curtis_sin_weights(n_beta),
                periodic_trapezoid_weights(n_gamma),
            ),
            QuadratureRule::Simpson => {
                let wb = simpson_weights(n_beta, 0.0, PI)?;
                (
                    simpson_weights(n_alpha, 0.0, TAU)?,
                    wb.iter().zip(&beta).map(|(w, b)| w * b.sin()).collect(),
                    simpson_weights(n_gamma, 0.0, TAU)?,
                )
            }
        };
        let w_beta = w_beta.into_iter().map(|w| w * haar).collect();
        Ok(So3Quadrature {
            counts: [n_alpha, n_beta, n_gamma],
            rule,
            alpha,
            beta,
            gamma,
            w_alpha,
            w_beta,
            w_gamma,
        })
    }

    pub fn cubic(n: usize) -> Result<Self> {
        Self::new(n, n, n, QuadratureRule::Spectral)
    }

    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn rule(&self) -> QuadratureRule {
        self.rule
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn w_alpha(&self) -> &[f64] {
        &self.w_alpha
    }

    /// β weights including `sin β / (8π²)`.
    pub fn w_beta(&self) -> &[f64] {
        &self.w_beta
    }

    pub fn w_gamma(&self) -> &[f64] {
        &self.w_gamma
    }

    #[inline]
    pub fn index(&self, ia: usize, ib: usize, ig: usize) -> usize {
        (ia * self.counts[1] + ib) * self.counts[2] + ig
    }

    #[inline]
    pub fn split(&self, idx: usize) -> (usize, usize, usize) {
        let ig = idx % self.counts[2];
        let rest = idx / self.counts[2];
        (rest / self.counts[1], rest % self.counts[1], ig)
    }

    pub fn weight(&self, idx: usize) -> f64 {
        let (ia, ib, ig) = self.split(idx);
        self.w_alpha[ia] * self.w_beta[ib] * self.w_gamma[ig]
    }

    /// Weights for every node in flat order.
    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    pub fn euler(&self, idx: usize) -> Euler313 {
        let (ia, ib, ig) = self.split(idx);
        Euler313 {
            alpha: self.alpha[ia],
            beta: self.beta[ib],
            gamma: self.gamma[ig],
        }
    }

    pub fn rotation(&self, idx: usize) -> Rotation {
        euler313_to_rotation(&self.euler(idx))
    }

    /// Haar integral of node samples.
    pub fn integrate(&self, samples: &[f64]) -> f64 {
        debug_assert_eq!(samples.len(), self.len());
        let [na, nb, ng] = self.counts;
        let mut total = 0.0;
        for ia in 0..na {
            let mut s_b = 0.0;
            for ib in 0..nb {
                let base = (ia * nb + ib) * ng;
                let s_g: f64 = samples[base..base + ng]
                    .iter()
                    .zip(&self.w_gamma)
                    .map(|(f, w)| f * w)
                    .sum();
                s_b += s_g * self.w_beta[ib];
            }
            total += s_b * self.w_alpha[ia];
        }
        total
    }
}
