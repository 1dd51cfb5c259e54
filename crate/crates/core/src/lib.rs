//! Electromagnetically consistent communication models.
//!
//! This crate bundles four subsystems that share one data model:
//!
//! * [`wavefield`] — plane-wave-spectrum representation of monochromatic
//!   fields on planes: forward/inverse spectral transforms, propagation
//!   between planes, sampling-spacing rules, and periodic-supercell design
//!   helpers for anomalous reflection.
//! * [`metasurface`] — physical arrays (RIS, Tx/Rx arrays, environment
//!   scatterers) built from loaded thin-wire dipoles, with all self and
//!   mutual impedance blocks computed by the induced-EMF method.
//! * [`multiport`] — end-to-end channels in impedance form, scattering
//!   form, and the coupling-free communication-theory baseline, plus
//!   structural-scattering isolation and environment (multipath) folding.
//! * [`ris_optim`] — mutual-coupling-aware optimization of diagonal
//!   reactive RIS loads, with exact and Neumann-series channel
//!   evaluations and a coupling-unaware baseline.
//! * [`holo_modes`] — near-field line-of-sight eigenmode analysis between
//!   two continuous surfaces: Green-kernel operator discretization,
//!   eigenmode solve, degrees-of-freedom counts and closed-form estimates,
//!   Slepian validation, and Rayleigh/Fraunhofer helpers.
//!
//! All matrices are dense complex [`nalgebra`] matrices ([`CMat`]); SI
//! units throughout (meters, ohms, rad/m).

pub mod error;
pub mod holo_modes;
pub mod io;
pub mod metasurface;
pub mod multiport;
pub mod ris_optim;
pub mod wavefield;

use num_complex::Complex64;

/// Dense complex matrix; the carrier for all Z, S, Γ and H matrices.
pub type CMat = nalgebra::DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVec = nalgebra::DVector<Complex64>;

pub use error::EmError;

/// Library result type.
pub type Result<T> = std::result::Result<T, EmError>;

/// Maximum relative entrywise deviation between two matrices, normalized
/// to the largest entry magnitude of `a`.
pub fn max_rel_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let scale = a.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    if scale == 0.0 {
        return b.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    }
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0f64, f64::max)
        / scale
}
