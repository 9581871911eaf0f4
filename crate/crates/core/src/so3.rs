//! Rotation-group algebra on SO(3).
//!
//! Rotations are stored as 3x3 matrices (no quaternions, so there is no
//! double-cover ambiguity). Euler angles follow the 3-1-3 (z-x-z) convention
//! `R = Rz(alpha) Rx(beta) Rz(gamma)`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Orthogonality defect above which a product is re-projected onto SO(3).
pub const RENORMALIZE_THRESHOLD: f64 = 1e-12;

/// Largest orthogonality defect accepted by [`Rotation::from_matrix`] before
/// re-projection. Anything further away is rejected as not a rotation.
const ACCEPT_DEFECT: f64 = 1e-6;

/// Skew-symmetric matrix with `hat(x) * y == x.cross(&y)`.
pub fn hat(x: &Vec3) -> Mat3 {
    Mat3::new(0.0, -x.z, x.y, x.z, 0.0, -x.x, -x.y, x.x, 0.0)
}

/// Inverse of [`hat`]. Fails when `|S + S^T|_F > 1e-9`.
pub fn vee(s: &Mat3) -> Result<Vec3> {
    let asymmetry = (s + s.transpose()).norm();
    if !(asymmetry <= 1e-9) {
        return Err(Error::NotSkew { asymmetry });
    }
    Ok(vee_unchecked(s))
}

/// Axial vector of the skew part of `s`, i.e. `vee((s - s^T) / 2)`.
#[inline]
pub fn vee_unchecked(s: &Mat3) -> Vec3 {
    Vec3::new(
        0.5 * (s[(2, 1)] - s[(1, 2)]),
        0.5 * (s[(0, 2)] - s[(2, 0)]),
        0.5 * (s[(1, 0)] - s[(0, 1)]),
    )
}

/// Body axis index `e_1`, `e_2`, `e_3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    /// One-based index as used in `e_1, e_2, e_3`.
    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            1 => Ok(Axis::X),
            2 => Ok(Axis::Y),
            3 => Ok(Axis::Z),
            _ => Err(Error::InvalidAxis(i)),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Axis::X => 1,
            Axis::Y => 2,
            Axis::Z => 3,
        }
    }

    pub fn unit(self) -> Vec3 {
        match self {
            Axis::X => Vec3::x(),
            Axis::Y => Vec3::y(),
            Axis::Z => Vec3::z(),
        }
    }

    /// `e_{i+1 mod 3}`.
    pub fn next(self) -> Axis {
        match self {
            Axis::X => Axis::Y,
            Axis::Y => Axis::Z,
            Axis::Z => Axis::X,
        }
    }
}

/// An element of SO(3).
#[derive(Clone, Copy, PartialEq)]
pub struct Rotation(Mat3);

impl fmt::Debug for Rotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.0;
        write!(
            f,
            "Rotation[[{}, {}, {}], [{}, {}, {}], [{}, {}, {}]]",
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)]
        )
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Validates `m` and re-projects it onto SO(3) if its defect exceeds
    /// [`RENORMALIZE_THRESHOLD`].
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::NotRotation {
                defect: f64::NAN,
                det: f64::NAN,
            });
        }
        let defect = orthogonality_defect(&m);
        let det = m.determinant();
        if defect > ACCEPT_DEFECT || (det - 1.0).abs() > ACCEPT_DEFECT {
            return Err(Error::NotRotation { defect, det });
        }
        Ok(Rotation(m).renormalized())
    }

    /// Wraps `m` without any check. The caller guarantees `m` is in SO(3).
    pub fn from_matrix_unchecked(m: Mat3) -> Self {
        Rotation(m)
    }

    /// Row-major 9-vector constructor.
    pub fn from_row_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 9 {
            return Err(Error::ShapeMismatch(format!(
                "rotation needs 9 entries, got {}",
                v.len()
            )));
        }
        Self::from_matrix(Mat3::from_row_slice(v))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn into_matrix(self) -> Mat3 {
        self.0
    }

    /// Row-major entries.
    pub fn to_row_array(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    pub fn inverse(&self) -> Rotation {
        self.transpose()
    }

    /// `|R^T R - I|_F`.
    pub fn defect(&self) -> f64 {
        orthogonality_defect(&self.0)
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// i-th column `R e_i`.
    pub fn column(&self, axis: Axis) -> Vec3 {
        self.0.column(axis.index() - 1).into_owned()
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let c = 0.5 * (self.0.trace() - 1.0);
        let s = vee_unchecked(&self.0).norm();
        s.atan2(c)
    }

    /// Angle of `self^T other`.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        (self.transpose() * *other).angle()
    }

    /// Polar projection onto SO(3) when the defect exceeds
    /// [`RENORMALIZE_THRESHOLD`]; otherwise returns `self` unchanged.
    pub fn renormalized(self) -> Rotation {
        if self.defect() <= RENORMALIZE_THRESHOLD {
            return self;
        }
        Rotation(project_to_so3(&self.0))
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0).renormalized()
    }
}

impl Mul<Vec3> for Rotation {
    type Output = Vec3;

    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

fn orthogonality_defect(m: &Mat3) -> f64 {
    (m.transpose() * m - Mat3::identity()).norm()
}

/// Nearest rotation in the Frobenius norm (`U V^T` with a determinant fix).
fn project_to_so3(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut d = Mat3::identity();
        d[(2, 2)] = -1.0;
        r = u * d * v_t;
    }
    r
}

/// Exponential map (Rodrigues formula).
pub fn exp_so3(x: &Vec3) -> Rotation {
    let theta2 = x.norm_squared();
    let theta = theta2.sqrt();
    let k = hat(x);
    let (a, b) = if theta < 1e-4 {
        // Taylor series of sin(t)/t and (1 - cos t)/t^2.
        (
            1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0,
            0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
        )
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Rotation(Mat3::identity() + k * a + k * k * b)
}

/// Logarithm map with `|result| <= pi`.
///
/// At angle exactly pi the axis is only defined up to sign; the sign is chosen
/// so that the first nonzero component is positive.
pub fn log_so3(r: &Rotation) -> Vec3 {
    let m = r.matrix();
    let w = vee_unchecked(m);
    let s = w.norm();
    let c = 0.5 * (m.trace() - 1.0);
    let theta = s.atan2(c);

    if theta < 1e-4 {
        let theta2 = theta * theta;
        return w * (1.0 + theta2 / 6.0 + 7.0 * theta2 * theta2 / 360.0);
    }
    if theta < 3.0 {
        return w * (theta / s);
    }

    // Near pi: axis from the symmetric part, n n^T = (sym - c I) / (1 - c).
    let sym = (m + m.transpose()) * 0.5;
    let nn = (sym - Mat3::identity() * c) / (1.0 - c);
    let (mut best, mut best_val) = (0, nn[(0, 0)]);
    for i in 1..3 {
        if nn[(i, i)] > best_val {
            best = i;
            best_val = nn[(i, i)];
        }
    }
    let mut n: Vec3 = nn.column(best).into_owned() / best_val.max(f64::MIN_POSITIVE).sqrt();
    n /= n.norm();
    let proj = n.dot(&w);
    if proj.abs() > 1e-10 {
        if proj < 0.0 {
            n = -n;
        }
    } else if let Some(first) = n.iter().copied().find(|v| v.abs() > 1e-12) {
        if first < 0.0 {
            n = -n;
        }
    }
    n * theta
}

/// 3-1-3 Euler angles with `alpha, gamma` in `[0, 2pi)` and `beta` in `[0, pi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Euler313 {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Euler313 {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&beta) {
            return Err(Error::param("beta", format!("{beta} outside [0, pi]")));
        }
        if !alpha.is_finite() || !gamma.is_finite() {
            return Err(Error::param("alpha/gamma", "not finite"));
        }
        Ok(Euler313 {
            alpha: wrap_angle(alpha),
            beta,
            gamma: wrap_angle(gamma),
        })
    }

    pub fn to_rotation(&self) -> Rotation {
        euler313_to_rotation(self)
    }
}

/// Wraps an angle into `[0, 2pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

pub fn euler313_to_rotation(e: &Euler313) -> Rotation {
    let (sa, ca) = e.alpha.sin_cos();
    let (sb, cb) = e.beta.sin_cos();
    let (sg, cg) = e.gamma.sin_cos();
    Rotation(Mat3::new(
        ca * cg - sa * cb * sg,
        -ca * sg - sa * cb * cg,
        sa * sb,
        sa * cg + ca * cb * sg,
        -sa * sg + ca * cb * cg,
        -ca * sb,
        sb * sg,
        sb * cg,
        cb,
    ))
}

/// Inverse of [`euler313_to_rotation`]. At gimbal lock (`sin beta == 0`)
/// gamma is set to zero and alpha carries the free angle.
pub fn rotation_to_euler313(r: &Rotation) -> Euler313 {
    let m = r.matrix();
    let sb = m[(0, 2)].hypot(m[(1, 2)]);
    let beta = sb.atan2(m[(2, 2)]);
    if sb < 1e-12 {
        let alpha = wrap_angle(m[(1, 0)].atan2(m[(0, 0)]));
        return Euler313 {
            alpha,
            beta: if m[(2, 2)] > 0.0 { 0.0 } else { PI },
            gamma: 0.0,
        };
    }
    Euler313 {
        alpha: wrap_angle(m[(0, 2)].atan2(-m[(1, 2)])),
        beta,
        gamma: wrap_angle(m[(2, 0)].atan2(m[(2, 1)])),
    }
}

/// Haar density in 3-1-3 Euler angles, `sin(beta) / (8 pi^2)`.
pub fn haar_weight(beta: f64) -> f64 {
    beta.sin() / (8.0 * PI * PI)
}

/// An element `R` of `H_i(r) = { R : R e_i = r }`.
///
/// For `r = e_i` this is the identity; for `r = -e_i` it is the half-turn
/// about `e_{i+1 mod 3}`.
pub fn coset_representative(axis: Axis, r: &Vec3) -> Result<Rotation> {
    let norm = r.norm();
    if !((norm - 1.0).abs() <= 1e-12) {
        return Err(Error::NotUnit { norm });
    }
    let e = axis.unit();
    let c = e.cross(r);
    let s = c.norm();
    let d = e.dot(r);
    if s < 1e-15 {
        return Ok(if d > 0.0 {
            Rotation::identity()
        } else {
            exp_so3(&(axis.next().unit() * PI))
        });
    }
    let angle = s.atan2(d);
    Ok(exp_so3(&(c * (angle / s))))
}
