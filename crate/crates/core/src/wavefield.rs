//! Plane-wave-spectrum representation of monochromatic fields on planes.
//!
//! A tangential field sampled on a regular grid at `z = plane_z` is
//! decomposed into plane waves indexed by the transverse wavenumbers
//! `(kx, ky)`. Components inside the visible range `kx² + ky² ≤ κ²`
//! propagate; the rest are evanescent and decay as `exp(-|kz| z)`.
//!
//! Sign conventions: the analysis transform uses `e^{+j(kx x + ky y)}`,
//! the synthesis transform `e^{-j(kx x + ky y)}`, and propagation toward
//! larger `z` multiplies by `e^{-j kz dz}` with the evanescent branch
//! `kz = -j √(kx²+ky²-κ²)` so that amplitudes decay for `dz > 0`.

use crate::{EmError, Result};
use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use std::f64::consts::PI;

/// Longitudinal wavenumber for transverse wavenumbers `(kx, ky)` and
/// free-space wavenumber `kappa = 2π/λ`.
///
/// Real and non-negative in the visible range, negative imaginary outside
/// it (decaying branch for propagation toward `z > 0`).
pub fn kz(kx: f64, ky: f64, kappa: f64) -> Complex64 {
    let kt2 = kx * kx + ky * ky;
    let k2 = kappa * kappa;
    if kt2 <= k2 {
        Complex64::new((k2 - kt2).sqrt(), 0.0)
    } else {
        Complex64::new(0.0, -(kt2 - k2).sqrt())
    }
}

/// Complex tangential field samples on a regular grid in a plane.
///
/// Sample `(ix, iy)` sits at `(x0 + ix·dx, y0 + iy·dy)`; storage is
/// row-major in `iy` (index `iy * nx + ix`).
#[derive(Debug, Clone)]
pub struct FieldGrid {
    pub plane_z: f64,
    pub dx: f64,
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
    pub ex: Vec<Complex64>,
    pub ey: Vec<Complex64>,
    pub wavelength: f64,
}

impl FieldGrid {
    pub fn new(
        plane_z: f64,
        dx: f64,
        dy: f64,
        nx: usize,
        ny: usize,
        ex: Vec<Complex64>,
        ey: Vec<Complex64>,
        wavelength: f64,
    ) -> Result<Self> {
        if !(dx > 0.0 && dy > 0.0) {
            return Err(EmError::invalid("grid spacings must be positive"));
        }
        if nx < 2 || ny < 2 {
            return Err(EmError::invalid("need at least 2 samples per axis"));
        }
        if wavelength <= 0.0 {
            return Err(EmError::invalid("wavelength must be positive"));
        }
        if ex.len() != nx * ny || ey.len() != nx * ny {
            return Err(EmError::invalid("sample count does not match nx*ny"));
        }
        if ex.iter().chain(ey.iter()).any(|z| !z.is_finite()) {
            return Err(EmError::invalid("field samples must be finite"));
        }
        Ok(FieldGrid { plane_z, dx, dy, nx, ny, ex, ey, wavelength })
    }

    /// Build a grid by evaluating closures for the two tangential
    /// components at every node.
    pub fn from_fn(
        plane_z: f64,
        dx: f64,
        dy: f64,
        nx: usize,
        ny: usize,
        wavelength: f64,
        mut fx: impl FnMut(f64, f64) -> Complex64,
        mut fy: impl FnMut(f64, f64) -> Complex64,
    ) -> Result<Self> {
        let mut ex = Vec::with_capacity(nx * ny);
        let mut ey = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                let (x, y) = (ix as f64 * dx, iy as f64 * dy);
                ex.push(fx(x, y));
                ey.push(fy(x, y));
            }
        }
        FieldGrid::new(plane_z, dx, dy, nx, ny, ex, ey, wavelength)
    }

    pub fn kappa(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    #[inline]
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    /// `Σ |E|² dx dy` over both tangential components.
    pub fn power(&self) -> f64 {
        let cell = self.dx * self.dy;
        self.ex
            .iter()
            .zip(&self.ey)
            .map(|(x, y)| x.norm_sqr() + y.norm_sqr())
            .sum::<f64>()
            * cell
    }
}

/// Plane-wave spectrum of a [`FieldGrid`], on the DFT-conjugate axes.
#[derive(Debug, Clone)]
pub struct SpectrumGrid {
    /// Wavenumber samples along x, in DFT order (non-negative then negative).
    pub kx: Vec<f64>,
    /// Wavenumber samples along y, in DFT order.
    pub ky: Vec<f64>,
    pub e_hat_x: Vec<Complex64>,
    pub e_hat_y: Vec<Complex64>,
    /// Longitudinal component, reconstructed from the divergence-free
    /// condition; zero (and flagged) on bins with `|kz|` below tolerance.
    pub e_hat_z: Vec<Complex64>,
    pub kappa: f64,
    /// Flat indices of bins where `Ê_z` could not be formed (`kz ≈ 0`).
    pub flagged: Vec<usize>,
    // Generating-grid metadata, needed by the synthesis transform.
    pub plane_z: f64,
    pub dx: f64,
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
    pub wavelength: f64,
}

impl SpectrumGrid {
    #[inline]
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    /// Longitudinal wavenumber at a flat bin index.
    pub fn kz_at(&self, i: usize) -> Complex64 {
        kz(self.kx[i % self.nx], self.ky[i / self.nx], self.kappa)
    }

    /// Spectral-domain Parseval power `Σ |Ê|² dkx dky / (2π)²`, split
    /// into (propagating, evanescent) contributions of the tangential
    /// components.
    pub fn power_split(&self) -> (f64, f64) {
        let cell = (2.0 * PI / (self.nx as f64 * self.dx))
            * (2.0 * PI / (self.ny as f64 * self.dy))
            / (4.0 * PI * PI);
        let mut prop = 0.0;
        let mut evan = 0.0;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let i = self.idx(ix, iy);
                let p = (self.e_hat_x[i].norm_sqr() + self.e_hat_y[i].norm_sqr()) * cell;
                if self.kx[ix] * self.kx[ix] + self.ky[iy] * self.ky[iy]
                    <= self.kappa * self.kappa
                {
                    prop += p;
                } else {
                    evan += p;
                }
            }
        }
        (prop, evan)
    }
}

/// DFT frequency axis: `2π m / (n d)` with `m` wrapped to `(-n/2, n/2]`.
fn dft_axis(n: usize, d: f64) -> Vec<f64> {
    let dk = 2.0 * PI / (n as f64 * d);
    (0..n)
        .map(|m| {
            let m = if m <= (n - 1) / 2 { m as isize } else { m as isize - n as isize };
            m as f64 * dk
        })
        .collect()
}

/// In-place 2-D FFT over row-major data (`ny` rows of length `nx`).
fn fft2(data: &mut [Complex64], nx: usize, ny: usize, dir: FftDirection) {
    let mut planner = FftPlanner::new();
    let fft_x = planner.plan_fft(nx, dir);
    for row in data.chunks_exact_mut(nx) {
        fft_x.process(row);
    }
    let fft_y = planner.plan_fft(ny, dir);
    let mut col = vec![Complex64::default(); ny];
    for ix in 0..nx {
        for iy in 0..ny {
            col[iy] = data[iy * nx + ix];
        }
        fft_y.process(&mut col);
        for iy in 0..ny {
            data[iy * nx + ix] = col[iy];
        }
    }
}

/// Relative tolerance under which a `kz` bin is treated as degenerate
/// when forming `Ê_z`.
const KZ_TOL: f64 = 1e-12;

/// Analysis transform: tangential samples to plane-wave spectrum.
///
/// `Ê(kx, ky) ≈ Σ E(x, y) e^{+j(kx x + ky y)} dx dy`, and
/// `Ê_z = -(kx Ê_x + ky Ê_y) / kz` wherever `kz` is not degenerate, so
/// that `k · Ê = 0` holds on every non-degenerate bin.
pub fn spectrum_of(field: &FieldGrid) -> Result<SpectrumGrid> {
    if field.ex.iter().chain(field.ey.iter()).any(|z| !z.is_finite()) {
        return Err(EmError::invalid("field grid contains non-finite samples"));
    }
    let (nx, ny) = (field.nx, field.ny);
    let mut ehx = field.ex.clone();
    let mut ehy = field.ey.clone();
    // e^{+j...} kernel is the inverse-direction DFT; scale by the cell
    // area to approximate the continuous transform.
    fft2(&mut ehx, nx, ny, FftDirection::Inverse);
    fft2(&mut ehy, nx, ny, FftDirection::Inverse);
    let cell = Complex64::new(field.dx * field.dy, 0.0);
    for z in ehx.iter_mut().chain(ehy.iter_mut()) {
        *z *= cell;
    }

    let kx = dft_axis(nx, field.dx);
    let ky = dft_axis(ny, field.dy);
    let kappa = field.kappa();
    let mut ehz = vec![Complex64::default(); nx * ny];
    let mut flagged = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let i = iy * nx + ix;
            let kzi = kz(kx[ix], ky[iy], kappa);
            if kzi.norm() <= KZ_TOL * kappa {
                flagged.push(i);
            } else {
                ehz[i] = -(kx[ix] * ehx[i] + ky[iy] * ehy[i]) / kzi;
            }
        }
    }

    Ok(SpectrumGrid {
        kx,
        ky,
        e_hat_x: ehx,
        e_hat_y: ehy,
        e_hat_z: ehz,
        kappa,
        flagged,
        plane_z: field.plane_z,
        dx: field.dx,
        dy: field.dy,
        nx,
        ny,
        wavelength: field.wavelength,
    })
}

/// Synthesis transform plus propagation: multiply every spectral sample
/// by `e^{-j kz dz}` and inverse-transform back to a tangential grid at
/// `plane_z + dz`. Evanescent samples are attenuated by `e^{-|kz| dz}`.
pub fn propagate(spectrum: &SpectrumGrid, dz: f64) -> Result<FieldGrid> {
    if dz < 0.0 {
        return Err(EmError::invalid("propagation distance must be non-negative"));
    }
    let (nx, ny) = (spectrum.nx, spectrum.ny);
    let mut ex = spectrum.e_hat_x.clone();
    let mut ey = spectrum.e_hat_y.clone();
    for iy in 0..ny {
        for ix in 0..nx {
            let i = iy * nx + ix;
            let kzi = kz(spectrum.kx[ix], spectrum.ky[iy], spectrum.kappa);
            let ph = (-Complex64::i() * kzi * dz).exp();
            ex[i] *= ph;
            ey[i] *= ph;
        }
    }
    fft2(&mut ex, nx, ny, FftDirection::Forward);
    fft2(&mut ey, nx, ny, FftDirection::Forward);
    let scale = Complex64::new(
        1.0 / (nx as f64 * spectrum.dx * ny as f64 * spectrum.dy),
        0.0,
    );
    for z in ex.iter_mut().chain(ey.iter_mut()) {
        *z *= scale;
    }
    FieldGrid::new(
        spectrum.plane_z + dz,
        spectrum.dx,
        spectrum.dy,
        nx,
        ny,
        ex,
        ey,
        spectrum.wavelength,
    )
}

/// Grid spacing sufficient to capture every plane wave that is still
/// non-negligible at distance `z_obs` from the source plane.
///
/// An evanescent wave is treated as negligible once its amplitude decay
/// `e^{-|kz| z_obs}` falls below `eta` (relative to the largest spectral
/// amplitude); the largest wavenumber retained is then
/// `κ_m = √(κ² + (ln(1/η)/z_obs)²)` and the spacing is `π/κ_m`. Tends to
/// `λ/2` as `z_obs → ∞`.
pub fn sampling_spacing(z_obs: f64, eta: f64, kappa: f64) -> Result<(f64, f64)> {
    if z_obs <= 0.0 {
        return Err(EmError::invalid(
            "z_obs must be positive (spacing tends to zero at the source plane)",
        ));
    }
    if !(0.0 < eta && eta < 1.0) {
        return Err(EmError::invalid("eta must lie in (0, 1)"));
    }
    if kappa <= 0.0 {
        return Err(EmError::invalid("kappa must be positive"));
    }
    let decay = (1.0 / eta).ln() / z_obs;
    let km = (kappa * kappa + decay * decay).sqrt();
    let ds = PI / km;
    Ok((ds, ds))
}

/// Fraction of the footprint excluded on each side for reconstruction
/// queries; windowing truncation makes edge reconstruction meaningless.
pub const GUARD_BAND: f64 = 0.10;

/// Separable sinc interpolation of both tangential components at
/// arbitrary in-band points. Exact at grid nodes.
pub fn reconstruct(
    field: &FieldGrid,
    query_points: &[(f64, f64)],
) -> Result<Vec<(Complex64, Complex64)>> {
    let lx = (field.nx - 1) as f64 * field.dx;
    let ly = (field.ny - 1) as f64 * field.dy;
    let (x_lo, x_hi) = (GUARD_BAND * lx, (1.0 - GUARD_BAND) * lx);
    let (y_lo, y_hi) = (GUARD_BAND * ly, (1.0 - GUARD_BAND) * ly);

    let sinc = |t: f64| if t == 0.0 { 1.0 } else { (PI * t).sin() / (PI * t) };

    let mut out = Vec::with_capacity(query_points.len());
    let mut wx = vec![0.0f64; field.nx];
    let mut wy = vec![0.0f64; field.ny];
    for &(x, y) in query_points {
        if !(x_lo..=x_hi).contains(&x) || !(y_lo..=y_hi).contains(&y) {
            return Err(EmError::OutOfBand { x, y });
        }
        for (ix, w) in wx.iter_mut().enumerate() {
            *w = sinc(x / field.dx - ix as f64);
        }
        for (iy, w) in wy.iter_mut().enumerate() {
            *w = sinc(y / field.dy - iy as f64);
        }
        let mut ex = Complex64::default();
        let mut ey = Complex64::default();
        for iy in 0..field.ny {
            if wy[iy] == 0.0 {
                continue;
            }
            let mut row_x = Complex64::default();
            let mut row_y = Complex64::default();
            for ix in 0..field.nx {
                let i = field.idx(ix, iy);
                row_x += wx[ix] * field.ex[i];
                row_y += wx[ix] * field.ey[i];
            }
            ex += wy[iy] * row_x;
            ey += wy[iy] * row_y;
        }
        out.push((ex, ey));
    }
    Ok(out)
}

/// Supercell design for an anomalous reflector: incidence and reflection
/// angles, supercell period, element spacing, and cells per period.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicDesign {
    pub theta_i: f64,
    /// Achieved reflection angle; equals the request when `D/δ` is an
    /// integer, otherwise the nearest angle the integer grid supports.
    pub theta_r: f64,
    pub period: f64,
    pub element_spacing: f64,
    pub cells_per_period: usize,
    /// True when the requested angle was realized exactly.
    pub exact: bool,
}

/// Supercell period required to bend a plane wave from `theta_i` to
/// `theta_r`: `D = λ / |sin θ_r - sin θ_i|`.
pub fn required_period(theta_i: f64, theta_r: f64, wavelength: f64) -> Result<f64> {
    let ds = theta_r.sin() - theta_i.sin();
    if ds.abs() < 1e-15 {
        return Err(EmError::invalid(
            "specular case (sin θ_r = sin θ_i): no supercell needed",
        ));
    }
    Ok(wavelength / ds.abs())
}

/// Design the periodic supercell that bends a plane wave from `theta_i`
/// to `theta_r` with elements spaced `delta`.
///
/// The required period is `D = λ / |sin θ_r - sin θ_i|`. When `D/δ` is
/// not an integer the nearest achievable pair (`N_p = round(D/δ)`, the
/// angle solving `N_p δ = λ/|sin θ_r' - sin θ_i|`) is reported instead
/// of failing.
pub fn periodic_design(
    theta_i: f64,
    theta_r: f64,
    delta: f64,
    wavelength: f64,
) -> Result<PeriodicDesign> {
    if delta <= 0.0 || wavelength <= 0.0 {
        return Err(EmError::invalid("spacing and wavelength must be positive"));
    }
    let ds = theta_r.sin() - theta_i.sin();
    let period = required_period(theta_i, theta_r, wavelength)?;
    let ratio = period / delta;
    let exact = (ratio - ratio.round()).abs() <= 1e-9 * ratio;
    let np = ratio.round().max(1.0) as usize;
    if exact {
        return Ok(PeriodicDesign {
            theta_i,
            theta_r,
            period: np as f64 * delta,
            element_spacing: delta,
            cells_per_period: np,
            exact: true,
        });
    }
    // Nearest achievable angle on the integer grid.
    let sin_r = theta_i.sin() + ds.signum() * wavelength / (np as f64 * delta);
    if sin_r.abs() > 1.0 {
        return Err(EmError::invalid(format!(
            "no achievable reflection angle near the request (sin θ_r' = {sin_r:.4})"
        )));
    }
    Ok(PeriodicDesign {
        theta_i,
        theta_r: sin_r.asin(),
        period: np as f64 * delta,
        element_spacing: delta,
        cells_per_period: np,
        exact: false,
    })
}
