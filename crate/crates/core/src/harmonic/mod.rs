//! Noncommutative harmonic analysis on SO(3).
//!
//! Irreducible unitary representations in 3-1-3 Euler angles,
//!
//! ```text
//! U^l_{mn}(R(α, β, γ)) = i^{m-n} e^{-i(mα + nγ)} d^l_{mn}(cos β),   -l <= m, n <= l
//! ```
//!
//! with matrices indexed in ascending order (`row = m + l`, `col = n + l`).
//! The Fourier pair used throughout is
//!
//! ```text
//! P^l = ∫ f(R) U^l(R⁻¹) dR,      f(R) = Σ_l (2l + 1) tr(P^l U^l(R))
//! ```
//!
//! over the normalized Haar measure, so that forward followed by inverse is
//! the identity on band-limited functions.

mod quadrature;
mod serialize;
mod transform;
mod wigner;

pub use quadrature::{
    clenshaw_curtis_sin_weights, periodic_trapezoid_weights, simpson_weights, QuadratureRule, So3Quadrature,
};
pub(crate) use serialize::{read_f64, read_u32};
pub use serialize::{read_spectrum, write_spectrum, write_spectrum_text, SPECTRUM_MAGIC};
pub use transform::inverse_transform_complex;
pub use transform::{forward_transform, inverse_transform, So3Spectrum, So3Transform};
pub use wigner::{irrep, irreps, irreps_from_euler, wigner_d, IrrepMatrix, WignerTable};
