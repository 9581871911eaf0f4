use nalgebra::DMatrix;
use num_complex::Complex64;

use super::quadrature::So3Quadrature;
use super::wigner::{i_pow, irreps, wigner_d, WignerTable};
use crate::error::{Error, Result};
use crate::so3::Rotation;

/// Fourier coefficients `P^l`, `l = 0..=L`, each `(2l+1) x (2l+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct So3Spectrum {
    coeffs: Vec<DMatrix<Complex64>>,
}

impl So3Spectrum {
    pub fn zeros(bandlimit: usize) -> Self {
        So3Spectrum {
            coeffs: (0..=bandlimit).map(|l| DMatrix::zeros(2 * l + 1, 2 * l + 1)).collect(),
        }
    }

    pub fn from_coeffs(coeffs: Vec<DMatrix<Complex64>>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::ShapeMismatch("spectrum needs at least P^0".into()));
        }
        for (l, c) in coeffs.iter().enumerate() {
            if c.nrows() != 2 * l + 1 || c.ncols() != 2 * l + 1 {
                return Err(Error::ShapeMismatch(format!(
                    "P^{l} is {}x{}, expected {}x{}",
                    c.nrows(),
                    c.ncols(),
                    2 * l + 1,
                    2 * l + 1
                )));
            }
        }
        Ok(So3Spectrum { coeffs })
    }

    pub fn bandlimit(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, l: usize) -> &DMatrix<Complex64> {
        &self.coeffs[l]
    }

    pub fn coeff_mut(&mut self, l: usize) -> &mut DMatrix<Complex64> {
        &mut self.coeffs[l]
    }

    pub fn coeffs(&self) -> &[DMatrix<Complex64>] {
        &self.coeffs
    }

    /// Per-degree energy `(2l+1) |P^l|_F^2`; these sum to `∫|f|^2 dR`.
    pub fn degree_energy(&self) -> Vec<f64> {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(l, c)| (2 * l + 1) as f64 * c.norm_squared())
            .collect()
    }

    pub fn energy(&self) -> f64 {
        self.degree_energy().iter().sum()
    }

    /// Number of complex coefficients, `Σ (2l+1)^2`.
    pub fn len(&self) -> usize {
        self.coeffs.iter().map(|c| c.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `self + other * scale`, both with the same bandlimit.
    pub fn axpy(&mut self, scale: f64, other: &So3Spectrum) {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * Complex64::new(scale, 0.0);
        }
    }
}

/// Complex value of the truncated Peter-Weyl sum `Σ_l (2l+1) tr(P^l U^l(R))`.
pub fn inverse_transform_complex(s: &So3Spectrum, r: &Rotation) -> Complex64 {
    let us = irreps(s.bandlimit(), r);
    let mut total = Complex64::new(0.0, 0.0);
    for (l, (p, u)) in s.coeffs.iter().zip(&us).enumerate() {
        // tr(P U) = Σ_{mn} P_{mn} U_{nm}
        let tr: Complex64 = p.iter().zip(u.u.transpose().iter()).map(|(a, b)| a * b).sum();
        total += tr * (2 * l + 1) as f64;
    }
    total
}

/// Real part of [`inverse_transform_complex`].
pub fn inverse_transform(s: &So3Spectrum, r: &Rotation) -> f64 {
    inverse_transform_complex(s, r).re
}

/// Forward transform with a fresh [`So3Transform`].
pub fn forward_transform(q: &So3Quadrature, samples: &[f64], bandlimit: usize) -> Result<So3Spectrum> {
    So3Transform::new(q.clone(), bandlimit)?.forward(samples)
}

/// Precomputed tables for repeated transforms on one grid.
///
/// The sums are separable: a DFT in `γ`, then in `α`, then the Wigner-d
/// projection in `β`. All reductions run sequentially in index order.
#[derive(Debug, Clone)]
pub struct So3Transform {
    quad: So3Quadrature,
    bandlimit: usize,
    tables: Vec<WignerTable>,
    // [node][freq + L] = w * e^{i freq angle}
    alpha_phase: Vec<Vec<Complex64>>,
    gamma_phase: Vec<Vec<Complex64>>,
}

impl So3Transform {
    pub fn new(quad: So3Quadrature, bandlimit: usize) -> Result<Self> {
        let n_beta = quad.counts()[1];
        if n_beta < 2 * bandlimit + 1 {
            return Err(Error::BandlimitTooHighForGrid { bandlimit, n_beta });
        }
        let tables = quad.beta().iter().map(|&b| wigner_d(bandlimit, b)).collect();
        let big_l = bandlimit as i64;
        let phases = |angles: &[f64], weights: &[f64]| -> Vec<Vec<Complex64>> {
            angles
                .iter()
                .zip(weights)
                .map(|(&a, &w)| {
                    (-big_l..=big_l)
                        .map(|k| Complex64::from_polar(w, k as f64 * a))
                        .collect()
                })
                .collect()
        };
        let alpha_phase = phases(quad.alpha(), quad.w_alpha());
        let gamma_phase = phases(quad.gamma(), quad.w_gamma());
        Ok(So3Transform {
            quad,
            bandlimit,
            tables,
            alpha_phase,
            gamma_phase,
        })
    }

    pub fn quadrature(&self) -> &So3Quadrature {
        &self.quad
    }

    pub fn bandlimit(&self) -> usize {
        self.bandlimit
    }

    /// `P^l = Σ_nodes w f U^l(R⁻¹)`.
    pub fn forward(&self, samples: &[f64]) -> Result<So3Spectrum> {
        if samples.len() != self.quad.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} samples for a grid of {} nodes",
                samples.len(),
                self.quad.len()
            )));
        }
        let [na, nb, ng] = self.quad.counts();
        let big_l = self.bandlimit as i64;
        let nf = 2 * self.bandlimit + 1;

        // h[ib][n][m] = Σ_{a,g} w_a w_g f e^{i(nα + mγ)}
        let mut h = vec![Complex64::new(0.0, 0.0); nb * nf * nf];
        let mut g_sum = vec![Complex64::new(0.0, 0.0); nf];
        for ia in 0..na {
            let pa = &self.alpha_phase[ia];
            for ib in 0..nb {
                g_sum.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                let base = self.quad.index(ia, ib, 0);
                for ig in 0..ng {
                    let f = samples[base + ig];
                    if f == 0.0 {
                        continue;
                    }
                    for (acc, ph) in g_sum.iter_mut().zip(&self.gamma_phase[ig]) {
                        *acc += ph * f;
                    }
                }
                let hb = &mut h[ib * nf * nf..(ib + 1) * nf * nf];
                for (ni, pn) in pa.iter().enumerate() {
                    let row = &mut hb[ni * nf..(ni + 1) * nf];
                    for (acc, gm) in row.iter_mut().zip(&g_sum) {
                        *acc += pn * gm;
                    }
                }
            }
        }

        let mut out = So3Spectrum::zeros(self.bandlimit);
        for l in 0..=self.bandlimit {
            let li = l as i64;
            let p = out.coeff_mut(l);
            for m in -li..=li {
                for n in -li..=li {
                    let mut acc = Complex64::new(0.0, 0.0);
                    let ni = (n + big_l) as usize;
                    let mi = (m + big_l) as usize;
                    for ib in 0..nb {
                        let d = self.tables[ib].get(l, n, m) * self.quad.w_beta()[ib];
                        acc += h[ib * nf * nf + ni * nf + mi] * d;
                    }
                    p[((m + li) as usize, (n + li) as usize)] = i_pow(m - n) * acc;
                }
            }
        }
        Ok(out)
    }

    /// Evaluates the inverse transform at every grid node.
    /// Returns `(real part, max |imaginary part|)`.
    pub fn synthesize(&self, s: &So3Spectrum) -> Result<(Vec<f64>, f64)> {
        if s.bandlimit() > self.bandlimit {
            return Err(Error::ShapeMismatch(format!(
                "spectrum bandlimit {} exceeds transform bandlimit {}",
                s.bandlimit(),
                self.bandlimit
            )));
        }
        let [na, nb, ng] = self.quad.counts();
        let sl = s.bandlimit() as i64;
        let nf = (2 * sl + 1) as usize;
        let mut out = vec![0.0; self.quad.len()];
        let mut max_imag: f64 = 0.0;
        let mut a = vec![Complex64::new(0.0, 0.0); nf * nf];
        for ib in 0..nb {
            // a[n][m] = Σ_l (2l+1) P^l_{mn} i^{n-m} d^l_{nm}(β)
            a.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            for l in 0..=s.bandlimit() {
                let li = l as i64;
                let p = s.coeff(l);
                let scale = (2 * l + 1) as f64;
                for m in -li..=li {
                    for n in -li..=li {
                        let d = self.tables[ib].get(l, n, m);
                        a[((n + sl) as usize) * nf + (m + sl) as usize] +=
                            p[((m + li) as usize, (n + li) as usize)] * i_pow(n - m) * (scale * d);
                    }
                }
            }
            for ia in 0..na {
                let alpha = self.quad.alpha()[ia];
                for ig in 0..ng {
                    let gamma = self.quad.gamma()[ig];
                    let mut v = Complex64::new(0.0, 0.0);
                    for n in -sl..=sl {
                        for m in -sl..=sl {
                            let ph = Complex64::from_polar(1.0, -(n as f64 * alpha + m as f64 * gamma));
                            v += a[((n + sl) as usize) * nf + (m + sl) as usize] * ph;
                        }
                    }
                    out[self.quad.index(ia, ib, ig)] = v.re;
                    max_imag = max_imag.max(v.im.abs());
                }
            }
        }
        Ok((out, max_imag))
    }
}
