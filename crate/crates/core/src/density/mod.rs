//! Joint densities on SO(3) × ℝ³: sampling, initialization, Liouville
//! propagation by pull-back through the discrete flow, and spectra.

mod grid;
mod init;
mod io;
mod propagate;
mod spectrum;

pub use grid::{attitude_stencil, DensityGrid, VelocityGrid};
pub use init::{init_density, GaussianParams, InitialDensity, VonMisesSo3Params, MAX_OUTSIDE_MASS};
pub use io::{
    read_density, read_density_spectrum, read_density_tagged, read_slice_csv, write_attitude_slice_csv, write_density,
    write_density_spectrum, write_density_tagged, write_velocity_slice_csv, DENSITY_MAGIC, DENSITY_SPECTRUM_MAGIC,
};
pub use propagate::{
    propagate, propagate_from, pull_back, DensitySource, PropagateOptions, PropagationReport, VelocityBox,
};
pub use spectrum::{attitude_spectrum, reconstruct, DensitySpectrum, VelocitySpectrum};
