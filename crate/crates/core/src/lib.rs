//! Localization of small refractive-index inclusions from partial
//! Dirichlet-to-Neumann data of the Helmholtz equation.
//!
//! The crate is organised bottom-up:
//!
//! * [`medium`]: box domain, partial boundary, inclusions and the perturbed index.
//! * [`forward`]: finite-difference Helmholtz solver, Neumann traces and DN maps.
//! * [`cgo`]: probe triads, complex geometrical optics traces, the Faddeev kernel.
//! * [`boundary_ops`]: exterior Green kernel, the double-layer operator `N_rho`,
//!   the boundary integral solve for CGO traces and the `|l|` scaling study.
//! * [`reconstruct`]: Fourier data functional, k-grid scans, localization and
//!   value recovery, plus the voxel-quadrature oracle.
//! * [`config`], [`io`] and [`pipeline`]: reproducible config-driven runs.

pub mod boundary_ops;
pub mod cgo;
pub mod config;
pub mod error;
pub mod forward;
pub mod io;
pub mod medium;
pub mod pipeline;
pub mod reconstruct;
pub mod vec3;

pub use error::{Error, Result};
pub use num_complex::Complex64;
