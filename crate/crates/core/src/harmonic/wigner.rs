use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::so3::{rotation_to_euler313, Euler313, Rotation};

/// Wigner-d matrices `d^l(cos β)` for `l = 0..=L` at a single `β`.
#[derive(Debug, Clone)]
pub struct WignerTable {
    bandlimit: usize,
    beta: f64,
    mats: Vec<DMatrix<f64>>,
}

impl WignerTable {
    pub fn bandlimit(&self) -> usize {
        self.bandlimit
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `d^l` as a `(2l+1) x (2l+1)` matrix, entry `(m + l, n + l)`.
    pub fn matrix(&self, l: usize) -> &DMatrix<f64> {
        &self.mats[l]
    }

    /// `d^l_{mn}`.
    pub fn get(&self, l: usize, m: i64, n: i64) -> f64 {
        let li = l as i64;
        self.mats[l][((m + li) as usize, (n + li) as usize)]
    }
}

/// `ln(k!)` for `k = 0..n`.
fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Closed-form `d^l_{mn}` from the finite factorial sum. `c`, `s` are
/// `cos(β/2)` and the signed half-angle sine for the chosen convention.
fn factorial_sum(l: i64, m: i64, n: i64, c: f64, s: f64, lf: &[f64]) -> f64 {
    let k_min = 0.max(n - m);
    let k_max = (l + n).min(l - m);
    let norm = 0.5 * (lf[(l + m) as usize] + lf[(l - m) as usize] + lf[(l + n) as usize] + lf[(l - n) as usize]);
    let mut sum = 0.0;
    for k in k_min..=k_max {
        let denom = lf[(l + n - k) as usize] + lf[k as usize] + lf[(m - n + k) as usize] + lf[(l - m - k) as usize];
        let sign = if (m - n + k) % 2 == 0 { 1.0 } else { -1.0 };
        let pc = (2 * l + n - m - 2 * k) as i32;
        let ps = (m - n + 2 * k) as i32;
        sum += sign * (norm - denom).exp() * c.powi(pc) * s.powi(ps);
    }
    sum
}

/// Wigner-d matrices for all `l <= bandlimit` at `β ∈ [0, π]`.
///
/// `d^0 = [1]` and
///
/// ```text
/// d^1 = [ (1+cβ)/2   -sβ/√2   (1-cβ)/2 ]
///       [  sβ/√2      cβ      -sβ/√2   ]
///       [ (1-cβ)/2    sβ/√2   (1+cβ)/2 ]
/// ```
///
/// Higher degrees use the three-term recursion in `l` for each `(m, n)`,
/// seeded at `l = max(|m|, |n|)` from the factorial formula.
pub fn wigner_d(bandlimit: usize, beta: f64) -> WignerTable {
    let big_l = bandlimit as i64;
    let lf = log_factorials(2 * bandlimit + 2);
    let x = beta.cos();
    let c = (0.5 * beta).cos();
    // Entries with this half-angle sign reproduce the matrix above in
    // ascending index order.
    let s = -(0.5 * beta).sin();

    let mut mats: Vec<DMatrix<f64>> = (0..=bandlimit).map(|l| DMatrix::zeros(2 * l + 1, 2 * l + 1)).collect();

    for m in -big_l..=big_l {
        for n in -big_l..=big_l {
            let l0 = m.abs().max(n.abs());
            let mut prev = 0.0;
            let mut cur = factorial_sum(l0, m, n, c, s, &lf);
            mats[l0 as usize][((m + l0) as usize, (n + l0) as usize)] = cur;
            let mn = (m * n) as f64;
            let (m2, n2) = ((m * m) as f64, (n * n) as f64);
            for l in l0..big_l {
                let lf64 = l as f64;
                let l1 = lf64 + 1.0;
                let scale = l1 * (2.0 * lf64 + 1.0) / ((l1 * l1 - m2) * (l1 * l1 - n2)).sqrt();
                let next = if l == 0 {
                    x * cur
                } else {
                    let lead = x - mn / (lf64 * l1);
                    let back = ((lf64 * lf64 - m2) * (lf64 * lf64 - n2)).sqrt() / (lf64 * (2.0 * lf64 + 1.0));
                    scale * (lead * cur - back * prev)
                };
                prev = cur;
                cur = next;
                let lu = (l + 1) as usize;
                mats[lu][((m + l + 1) as usize, (n + l + 1) as usize)] = cur;
            }
        }
    }
    WignerTable { bandlimit, beta, mats }
}

/// `U^l(R)` for one degree.
#[derive(Debug, Clone, PartialEq)]
pub struct IrrepMatrix {
    pub l: usize,
    pub u: DMatrix<Complex64>,
}

impl IrrepMatrix {
    /// `|U U^† - I|_F`.
    pub fn unitarity_defect(&self) -> f64 {
        let n = 2 * self.l + 1;
        (&self.u * self.u.adjoint() - DMatrix::<Complex64>::identity(n, n)).norm()
    }
}

/// `i^k` for integer `k`.
pub(crate) fn i_pow(k: i64) -> Complex64 {
    match k.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

fn irrep_from_table(table: &WignerTable, l: usize, e: &Euler313) -> IrrepMatrix {
    let li = l as i64;
    let n_dim = 2 * l + 1;
    let d = table.matrix(l);
    let u = DMatrix::from_fn(n_dim, n_dim, |r, c| {
        let m = r as i64 - li;
        let n = c as i64 - li;
        let phase = Complex64::from_polar(1.0, -(m as f64 * e.alpha + n as f64 * e.gamma));
        i_pow(m - n) * phase * d[(r, c)]
    });
    IrrepMatrix { l, u }
}

/// `U^l(R)` through [`rotation_to_euler313`].
pub fn irrep(l: usize, r: &Rotation) -> IrrepMatrix {
    let e = rotation_to_euler313(r);
    let table = wigner_d(l, e.beta);
    irrep_from_table(&table, l, &e)
}

/// `U^l(R)` for every `l <= bandlimit`.
pub fn irreps(bandlimit: usize, r: &Rotation) -> Vec<IrrepMatrix> {
    irreps_from_euler(bandlimit, &rotation_to_euler313(r))
}

pub fn irreps_from_euler(bandlimit: usize, e: &Euler313) -> Vec<IrrepMatrix> {
    let table = wigner_d(bandlimit, e.beta);
    (0..=bandlimit).map(|l| irrep_from_table(&table, l, e)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::{exp_so3, Vec3};
    use std::f64::consts::PI;

    fn closed_form_d1(beta: f64) -> DMatrix<f64> {
        let (s, c) = beta.sin_cos();
        let r2 = 2f64.sqrt();
        DMatrix::from_row_slice(
            3,
            3,
            &[
                (1.0 + c) / 2.0,
                -s / r2,
                (1.0 - c) / 2.0,
                s / r2,
                c,
                -s / r2,
                (1.0 - c) / 2.0,
                s / r2,
                (1.0 + c) / 2.0,
            ],
        )
    }

    #[test]
    fn low_degree_closed_forms() {
        for beta in [0.0, 0.3, PI / 3.0, 2.0, PI] {
            let t = wigner_d(3, beta);
            assert_eq!(t.matrix(0)[(0, 0)], 1.0);
            assert!((t.matrix(1) - closed_form_d1(beta)).norm() < 1e-15);
        }
        let t = wigner_d(1, 0.0);
        assert_eq!(t.matrix(1), &DMatrix::<f64>::identity(3, 3));
        assert!((wigner_d(1, PI / 3.0).get(1, 0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn d_matrices_are_orthogonal() {
        for beta in [0.0, 0.1, 1.3, 2.9, PI] {
            let t = wigner_d(12, beta);
            for l in 0..=12 {
                let d = t.matrix(l);
                let defect = (d * d.transpose() - DMatrix::<f64>::identity(2 * l + 1, 2 * l + 1)).norm();
                assert!(defect < 1e-12, "l={l} beta={beta} defect={defect:e}");
            }
        }
    }

    #[test]
    fn irrep_identity_and_trivial() {
        let r = exp_so3(&Vec3::new(0.3, -0.7, 1.1));
        assert!((irrep(0, &r).u[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        for l in 0..5 {
            let u = irrep(l, &Rotation::identity());
            let n = 2 * l + 1;
            assert!((u.u - DMatrix::<Complex64>::identity(n, n)).norm() < 1e-15);
        }
    }

    #[test]
    fn irrep_of_z_rotation_is_diagonal_phase() {
        let r = exp_so3(&(Vec3::z() * 0.8));
        let u = irrep(2, &r);
        for m in -2i64..=2 {
            let expect = Complex64::from_polar(1.0, -(m as f64) * 0.8);
            assert!((u.u[((m + 2) as usize, (m + 2) as usize)] - expect).norm() < 1e-14);
        }
    }
}
