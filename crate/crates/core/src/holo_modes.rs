//! Near-field eigenmode analysis between two continuous planar apertures.
//!
//! A transmit surface carrying a scalar current density J couples to the
//! field E on a receive surface through the free-space kernel
//! G0(r) = g0·e^{−jκr}/(2λr). Discretizing both surfaces with midpoint
//! quadrature (Nyström) turns the coupling into a matrix; the singular
//! value decomposition of the weight-symmetrized matrix
//! √w_rx · G · √w_tx solves both the transmit (G†G) and receive (GG†)
//! eigenproblems at once. The eigenvalues μ_m = σ_m² form the familiar
//! step-shaped spectrum whose plateau length is the number of effective
//! degrees of freedom (NeDoF); closed-form estimates for lines, time
//! intervals, and rectangular apertures are provided alongside the
//! numerical count, plus Slepian/prolate-spheroidal and Rayleigh-spacing
//! cross checks.

use crate::{CMat, CVec, EmError, Result};
use nalgebra::{DMatrix, Rotation3, Vector3};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

/// A rectangular continuous aperture with a midpoint quadrature grid.
///
/// Local coordinates span [−Lx/2, Lx/2] × [−Ly/2, Ly/2] in the
/// orientation's x/y axes; the surface normal is the orientation's
/// z axis. Grid points are stored row-major (iy·nx + ix).
#[derive(Debug, Clone)]
pub struct PlanarSurface {
    pub center: Vector3<f64>,
    pub orientation: Rotation3<f64>,
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
}

impl PlanarSurface {
    pub fn new(
        center: Vector3<f64>,
        orientation: Rotation3<f64>,
        lx: f64,
        ly: f64,
        nx: usize,
        ny: usize,
    ) -> Result<Self> {
        if !(lx > 0.0 && ly > 0.0) {
            return Err(EmError::invalid("surface side lengths must be positive"));
        }
        if nx < 4 || ny < 4 {
            return Err(EmError::invalid("need at least 4 quadrature points per side"));
        }
        let m = orientation.matrix();
        let gram = m.transpose() * m;
        if (gram - nalgebra::Matrix3::identity()).abs().max() > 1e-12 {
            return Err(EmError::invalid("orientation must be orthonormal"));
        }
        Ok(PlanarSurface { center, orientation, lx, ly, nx, ny })
    }

    /// Axis-aligned surface at `center` with its normal along +z.
    pub fn axis_aligned(center: Vector3<f64>, lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        PlanarSurface::new(center, Rotation3::identity(), lx, ly, nx, ny)
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    /// Midpoint quadrature weight of every grid cell (m²).
    pub fn weight(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn n_points(&self) -> usize {
        self.nx * self.ny
    }

    /// Grid points in world coordinates, row-major.
    pub fn points(&self) -> Vec<Vector3<f64>> {
        let (dx, dy) = (self.dx(), self.dy());
        let mut pts = Vec::with_capacity(self.n_points());
        for iy in 0..self.ny {
            let y = (iy as f64 + 0.5) * dy - self.ly / 2.0;
            for ix in 0..self.nx {
                let x = (ix as f64 + 0.5) * dx - self.lx / 2.0;
                pts.push(self.center + self.orientation * Vector3::new(x, y, 0.0));
            }
        }
        pts
    }

    fn check_resolution(&self, wavelength: f64) -> Result<()> {
        let limit = wavelength / 4.0 * (1.0 + 1e-12);
        if self.dx() > limit || self.dy() > limit {
            return Err(EmError::invalid(format!(
                "quadrature spacing ({:.4e}, {:.4e}) m exceeds the λ/4 Nyström floor {:.4e} m",
                self.dx(),
                self.dy(),
                wavelength / 4.0
            )));
        }
        Ok(())
    }
}

/// Scalar free-space coupling kernel `G0(|r|) = e^{−jκ|r|} / (2λ|r|)`
/// with the overall normalization g0 fixed to 1 (it rescales every
/// eigenvalue uniformly and cancels in all normalized counts).
pub fn green(r_rx: &Vector3<f64>, r_tx: &Vector3<f64>, wavelength: f64) -> Result<Complex64> {
    let r = (r_rx - r_tx).norm();
    if r <= 0.0 {
        return Err(EmError::invalid("Green kernel evaluated at coincident points"));
    }
    let kappa = 2.0 * PI / wavelength;
    Ok(Complex64::from_polar(1.0 / (2.0 * wavelength * r), -kappa * r))
}

/// The discretized forward map from transmit currents to receive fields,
/// together with both surfaces' quadrature weights.
#[derive(Debug, Clone)]
pub struct CouplingOperator {
    /// `g[i, j] = G0(|r_rx,i − r_tx,j|)`, receive rows × transmit columns.
    pub g: CMat,
    pub w_tx: f64,
    pub w_rx: f64,
    pub wavelength: f64,
}

impl CouplingOperator {
    /// Weight-symmetrized matrix `√w_rx · G · √w_tx` whose singular
    /// values are shared by both eigenproblems.
    pub fn symmetrized(&self) -> CMat {
        let s = Complex64::new((self.w_rx * self.w_tx).sqrt(), 0.0);
        &self.g * s
    }

    /// Forward application `E_i = w_tx Σ_j G[i,j] J_j`.
    pub fn apply(&self, current: &CVec) -> CVec {
        (&self.g * current) * Complex64::new(self.w_tx, 0.0)
    }
}

/// Assemble the Nyström coupling matrix between two apertures.
///
/// Both grids must satisfy the λ/4 spacing floor and the surfaces must
/// be disjoint (any sample pair closer than half a grid cell is treated
/// as an overlap).
pub fn coupling_operator(
    tx: &PlanarSurface,
    rx: &PlanarSurface,
    wavelength: f64,
) -> Result<CouplingOperator> {
    if wavelength <= 0.0 {
        return Err(EmError::invalid("wavelength must be positive"));
    }
    tx.check_resolution(wavelength)?;
    rx.check_resolution(wavelength)?;
    let tx_pts = tx.points();
    let rx_pts = rx.points();
    let min_sep = 0.5 * tx.dx().min(tx.dy()).min(rx.dx()).min(rx.dy());
    let kappa = 2.0 * PI / wavelength;
    let mut g = CMat::zeros(rx_pts.len(), tx_pts.len());
    for (i, r) in rx_pts.iter().enumerate() {
        for (j, t) in tx_pts.iter().enumerate() {
            let d = (r - t).norm();
            if d < min_sep {
                return Err(EmError::Overlap(format!(
                    "surfaces overlap: sample pair at distance {d:.4e} m"
                )));
            }
            g[(i, j)] = Complex64::from_polar(1.0 / (2.0 * wavelength * d), -kappa * d);
        }
    }
    Ok(CouplingOperator { g, w_tx: tx.weight(), w_rx: rx.weight(), wavelength })
}

/// Eigenmodes of the aperture-to-aperture coupling.
///
/// `mu` holds the shared eigenvalues μ_m = σ_m² sorted non-increasing;
/// column m of `phi`/`psi` samples the transmit/receive eigenfunction.
/// Orthonormality holds in the quadrature inner product
/// ⟨f, g⟩_w = w Σ_i f_i* g_i.
#[derive(Debug, Clone)]
pub struct ModeSet {
    pub mu: Vec<f64>,
    pub phi: CMat,
    pub psi: CMat,
    pub w_tx: f64,
    pub w_rx: f64,
    pub g0: f64,
}

impl ModeSet {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

/// Solve both eigenproblems at once via the SVD of the symmetrized
/// matrix: μ_m = σ_m², φ_m from the right singular vectors, ψ_m from the
/// left, each rescaled by the inverse square-root quadrature weight so
/// that the continuous-inner-product normalization holds.
pub fn eigenmodes(op: &CouplingOperator) -> Result<ModeSet> {
    let scaled = op.symmetrized();
    let svd = scaled.svd(true, true);
    let u = svd.u.ok_or_else(|| EmError::invalid("SVD failed to produce U"))?;
    let v_t = svd.v_t.ok_or_else(|| EmError::invalid("SVD failed to produce V^T"))?;
    let k = svd.singular_values.len();
    // nalgebra sorts descending; keep a defensive permutation anyway.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
    });
    let s_tx = op.w_tx.sqrt();
    let s_rx = op.w_rx.sqrt();
    let mut mu = Vec::with_capacity(k);
    let mut phi = CMat::zeros(op.g.ncols(), k);
    let mut psi = CMat::zeros(op.g.nrows(), k);
    for (m, &idx) in order.iter().enumerate() {
        let sigma = svd.singular_values[idx];
        mu.push(sigma * sigma);
        for i in 0..phi.nrows() {
            phi[(i, m)] = v_t[(idx, i)].conj() / s_tx;
        }
        for i in 0..psi.nrows() {
            psi[(i, m)] = u[(i, idx)] / s_rx;
        }
    }
    Ok(ModeSet { mu, phi, psi, w_tx: op.w_tx, w_rx: op.w_rx, g0: 1.0 })
}

/// Number of effective degrees of freedom: eigenvalues within a factor
/// ε of the largest.
pub fn nedof_count(modes: &ModeSet, epsilon: f64) -> Result<usize> {
    if modes.is_empty() {
        return Err(EmError::invalid("empty spectrum"));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(EmError::invalid("epsilon must lie in (0, 1]"));
    }
    let mu1 = modes.mu[0];
    if mu1 <= 0.0 {
        return Ok(0);
    }
    Ok(modes.mu.iter().filter(|&&m| m / mu1 >= epsilon).count())
}

/// One-dimensional DoF estimates: the time-bandwidth product and its
/// spatial line-aperture analogue.
#[derive(Debug, Clone, Copy)]
pub enum Nedof1d {
    /// Signals of (two-sided) bandwidth Ω rad/s observed for T seconds.
    Time { omega: f64, t: f64 },
    /// Two parallel line apertures of lengths `l_tx`, `l_rx` at distance
    /// `d0`, with the orientation factor Υ (paraxial: 1).
    Line { l_tx: f64, l_rx: f64, d0: f64, wavelength: f64, upsilon: f64 },
}

/// `N1 = ΩT/π` for time-limited signals, or `N1 = L_Tx L_Rx Υ/(λ d0)`
/// for parallel line apertures.
pub fn nedof_estimate_1d(kind: Nedof1d) -> Result<f64> {
    match kind {
        Nedof1d::Time { omega, t } => {
            if omega <= 0.0 || t <= 0.0 {
                return Err(EmError::invalid("need positive bandwidth and duration"));
            }
            Ok(omega * t / PI)
        }
        Nedof1d::Line { l_tx, l_rx, d0, wavelength, upsilon } => {
            if l_tx <= 0.0 || l_rx <= 0.0 || d0 <= 0.0 || wavelength <= 0.0 || upsilon <= 0.0 {
                return Err(EmError::invalid("need positive line-aperture parameters"));
            }
            Ok(l_tx * l_rx / (wavelength * d0) * upsilon)
        }
    }
}

/// Threshold-dependent refinement of the 1-D count:
/// `N(ε) ≈ N1 + (1/π²) ln((1−ε)/ε) ln(πN1/2)`, natural logarithms.
/// At ε = 1/2 the correction vanishes and N(ε) = N1 exactly.
pub fn nedof_transition_1d(n1: f64, epsilon: f64) -> Result<f64> {
    if n1 <= 2.0 / PI {
        return Err(EmError::invalid("transition formula needs N1 > 2/π"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(EmError::invalid("epsilon must lie in (0, 1)"));
    }
    Ok(n1 + ((1.0 - epsilon) / epsilon).ln() * (PI * n1 / 2.0).ln() / (PI * PI))
}

/// Asymptotic 2-D count and its spatial bandwidth.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Nedof2d {
    /// `N2 = A_Tx A_Rx Ψ / (λ² d0²)`.
    pub n2: f64,
    /// Wavenumber-domain bandwidth `W_G = 4π² A_Rx Ψ / (λ² d0²)`.
    pub w_g: f64,
    /// The asymptotic count assumes apertures small against the link
    /// distance; cleared when `max(A_Tx, A_Rx)^{1/2} > d0`.
    pub landau_valid: bool,
}

/// Landau-type asymptotic DoF count for two rectangular apertures at
/// center distance `d0`, with the orientation factor Ψ (paraxial: 1).
pub fn nedof_estimate_2d(
    a_tx: f64,
    a_rx: f64,
    wavelength: f64,
    d0: f64,
    psi: f64,
) -> Result<Nedof2d> {
    if a_tx <= 0.0 || a_rx <= 0.0 || wavelength <= 0.0 || d0 <= 0.0 || psi <= 0.0 {
        return Err(EmError::invalid("need positive aperture parameters"));
    }
    let w_g = 4.0 * PI * PI * a_rx * psi / (wavelength * wavelength * d0 * d0);
    let n2 = a_tx * w_g / (4.0 * PI * PI);
    Ok(Nedof2d { n2, w_g, landau_valid: a_tx.max(a_rx).sqrt() <= d0 })
}

/// Numeric count plus the matching closed-form estimates, for export.
#[derive(Debug, Clone, Serialize)]
pub struct NeDoFReport {
    pub count: usize,
    pub epsilon: f64,
    pub n1: Option<f64>,
    pub n2: Option<f64>,
    pub w_g: Option<f64>,
    /// Indices of the empirical transition region: first eigenvalue
    /// below 0.9·μ_1 and first below 0.1·μ_1.
    pub transition: Option<(usize, usize)>,
    pub landau_valid: Option<bool>,
}

/// Locate the empirical spectrum shoulder: indices (1-based) of the
/// first mode below 0.9·μ_1 and the first below 0.1·μ_1.
pub fn transition_indices(mu: &[f64]) -> Option<(usize, usize)> {
    let mu1 = *mu.first()?;
    if mu1 <= 0.0 {
        return None;
    }
    let hi = mu.iter().position(|&m| m / mu1 < 0.9)? + 1;
    let lo = mu.iter().position(|&m| m / mu1 < 0.1).map(|i| i + 1)?;
    Some((hi, lo))
}

/// Eigenvalues of the discretized Slepian concentration kernel
/// `sin(Ω(t−t'))/(π(t−t'))` on [−T/2, T/2], sorted non-increasing.
/// These are the prolate-spheroidal concentration values, all in (0, 1),
/// with ≈ ΩT/π of them close to one.
pub fn slepian_validation(omega: f64, t: f64, n: usize) -> Result<Vec<f64>> {
    if omega <= 0.0 || t <= 0.0 {
        return Err(EmError::invalid("need positive bandwidth and duration"));
    }
    let n1 = omega * t / PI;
    if (n as f64) < 8.0 * n1 {
        return Err(EmError::invalid(format!(
            "grid of {n} points is below the resolution floor 8·ΩT/π = {:.1}",
            8.0 * n1
        )));
    }
    let dt = t / n as f64;
    let times: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * dt - t / 2.0).collect();
    let kernel = DMatrix::from_fn(n, n, |i, j| {
        let tau = times[i] - times[j];
        let k = if i == j { omega / PI } else { (omega * tau).sin() / (PI * tau) };
        k * dt
    });
    let mut eig: Vec<f64> = kernel.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
    // The discrete kernel is the concentration matrix of the discrete
    // prolate spheroidal sequences, whose spectrum lies strictly inside
    // (0, 1); anything outside by more than roundoff is a real failure,
    // anything within roundoff is clamped back into the open interval.
    const SLOP: f64 = 1e-9;
    for l in &mut eig {
        if *l <= -SLOP || *l >= 1.0 + SLOP {
            return Err(EmError::invalid(format!(
                "Slepian eigenvalue {l} escaped (0, 1) beyond roundoff"
            )));
        }
        *l = l.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
    }
    Ok(eig)
}

/// Per-mode separability residuals for the paraxial (parallel, coaxial)
/// setting, where each 2-D eigenfunction factors into a product of two
/// 1-D prolate functions. The residual is 1 − σ_1²/‖·‖²_F of the mode
/// reshaped onto the transmit grid; modes inside an eigenvalue cluster
/// (|μ_i − μ_j|/μ_1 < 1e−6) mix freely, so each cluster is tested as a
/// subspace: its members all receive the residual of the most separable
/// unit vector in their span.
pub fn paraxial_factorization_check(
    modes: &ModeSet,
    tx: &PlanarSurface,
    rx: &PlanarSurface,
) -> Result<Vec<f64>> {
    let rel = |a: &nalgebra::Matrix3<f64>, b: &nalgebra::Matrix3<f64>| (a - b).abs().max();
    if rel(tx.orientation.matrix(), rx.orientation.matrix()) > 1e-9 {
        return Err(EmError::invalid(
            "paraxial factorization needs parallel surfaces (equal orientations)",
        ));
    }
    let offset = rx.center - tx.center;
    let normal = tx.orientation * Vector3::z();
    let lateral = (offset - normal * offset.dot(&normal)).norm();
    if lateral > 1e-9 * offset.norm().max(1.0) {
        return Err(EmError::invalid(
            "paraxial factorization needs coaxial surfaces (offset along the common normal)",
        ));
    }
    if modes.phi.nrows() != tx.n_points() {
        return Err(EmError::invalid("mode set does not match the transmit grid"));
    }
    let n_check = modes.len().min(10);
    let mu1 = modes.mu.first().copied().unwrap_or(0.0);
    if mu1 <= 0.0 {
        return Err(EmError::invalid("empty or null spectrum"));
    }
    let mut residuals = vec![0.0f64; n_check];
    let mut m = 0;
    while m < n_check {
        // Collect the degenerate cluster starting at m.
        let mut end = m + 1;
        while end < modes.len() && (modes.mu[m] - modes.mu[end]).abs() / mu1 < 1e-6 {
            end += 1;
        }
        let members: Vec<CMat> = (m..end)
            .map(|k| reshape_mode(&modes.phi.column(k).into_owned(), tx.nx, tx.ny))
            .collect();
        let r = cluster_separability_residual(&members);
        for slot in residuals.iter_mut().take(end.min(n_check)).skip(m) {
            *slot = r;
        }
        m = end;
    }
    Ok(residuals)
}

fn reshape_mode(v: &CVec, nx: usize, ny: usize) -> CMat {
    CMat::from_fn(ny, nx, |iy, ix| v[iy * nx + ix])
}

/// Smallest rank-1 residual of any unit vector in the span of the
/// cluster members, found by alternating between the best separable
/// approximation (SVD truncation) and re-projection onto the span.
fn cluster_separability_residual(members: &[CMat]) -> f64 {
    let single = |a: &CMat| -> f64 {
        let total: f64 = a.iter().map(|z| z.norm_sqr()).sum();
        let s1 = a.clone().singular_values()[0];
        1.0 - s1 * s1 / total
    };
    if members.len() == 1 {
        return single(&members[0]);
    }
    let mut best = f64::INFINITY;
    for start in members {
        let mut y = start.clone();
        for _ in 0..60 {
            // Truncate to rank 1...
            let svd = y.clone().svd(true, true);
            let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
            let s1 = svd.singular_values[0];
            let mut rank1 = CMat::zeros(y.nrows(), y.ncols());
            for i in 0..y.nrows() {
                for j in 0..y.ncols() {
                    rank1[(i, j)] = u[(i, 0)] * Complex64::new(s1, 0.0) * v_t[(0, j)];
                }
            }
            // ...then project back onto the cluster span and renormalize.
            let mut next = CMat::zeros(y.nrows(), y.ncols());
            for a in members {
                let coeff: Complex64 = a.iter().zip(rank1.iter()).map(|(p, q)| p.conj() * q).sum();
                let na: f64 = a.iter().map(|z| z.norm_sqr()).sum();
                next += a * (coeff / na);
            }
            let norm: f64 = next.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm < 1e-30 {
                break;
            }
            y = next / Complex64::new(norm, 0.0);
        }
        best = best.min(single(&y));
    }
    best
}

/// Rayleigh-criterion element spacing `d_opt = √(λD/N)` that keeps an
/// N-element broadside link at distance D full rank with near-equal
/// singular values.
pub fn rayleigh_spacing(wavelength: f64, distance: f64, n: usize) -> Result<f64> {
    if wavelength <= 0.0 || distance <= 0.0 || n == 0 {
        return Err(EmError::invalid("need positive wavelength, distance, and element count"));
    }
    Ok((wavelength * distance / n as f64).sqrt())
}

/// Far-field (Fraunhofer) distance `2D²/λ` of an aperture of largest
/// dimension D.
pub fn fraunhofer_distance(d: f64, wavelength: f64) -> Result<f64> {
    if d <= 0.0 || wavelength <= 0.0 {
        return Err(EmError::invalid("need positive aperture size and wavelength"));
    }
    Ok(2.0 * d * d / wavelength)
}

/// Which surface's eigenfunctions to expand over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Currents expand over φ_m (coefficients a_m).
    Transmit,
    /// Fields expand over ψ_m (coefficients b_m).
    Receive,
}

/// An eigenfunction expansion truncated to `n_terms`.
#[derive(Debug, Clone)]
pub struct Projection {
    pub coefficients: Vec<Complex64>,
    /// Relative L²(w) error of the truncated reconstruction.
    pub residual: f64,
}

/// Expand samples on one surface over that surface's eigenfunctions and
/// report the relative truncation error of the leading `n_terms`.
pub fn project(modes: &ModeSet, samples: &CVec, side: Side, n_terms: usize) -> Result<Projection> {
    let (basis, w) = match side {
        Side::Transmit => (&modes.phi, modes.w_tx),
        Side::Receive => (&modes.psi, modes.w_rx),
    };
    if samples.len() != basis.nrows() {
        return Err(EmError::invalid("sample vector does not match the surface grid"));
    }
    let n_terms = n_terms.min(modes.len());
    let mut coefficients = Vec::with_capacity(n_terms);
    let mut recon = CVec::zeros(samples.len());
    for m in 0..n_terms {
        let col = basis.column(m);
        let a: Complex64 = col.iter().zip(samples.iter()).map(|(p, s)| p.conj() * s).sum();
        let a = a * Complex64::new(w, 0.0);
        recon += col * a;
        coefficients.push(a);
    }
    let norm: f64 = samples.iter().map(|z| z.norm_sqr()).sum();
    if norm <= 0.0 {
        return Err(EmError::invalid("cannot project the zero vector"));
    }
    let err: f64 = samples.iter().zip(recon.iter()).map(|(s, r)| (s - r).norm_sqr()).sum();
    Ok(Projection { coefficients, residual: (err / norm).sqrt() })
}

/// Leading singular values of a large matrix via randomized subspace
/// iteration (deterministic for a fixed seed). Intended for grids too
/// fine for a full SVD; accuracy improves with `power_iters`.
pub fn top_singular_values(
    a: &CMat,
    k: usize,
    oversample: usize,
    power_iters: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let (m, n) = (a.nrows(), a.ncols());
    let l = (k + oversample).min(m.min(n));
    if k == 0 || l == 0 {
        return Err(EmError::invalid("need at least one singular value"));
    }
    let mut state = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut next = move || {
        // splitmix64
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z = z ^ (z >> 31);
        (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let omega = CMat::from_fn(n, l, |_, _| Complex64::new(next(), next()));
    let mut q = (a * omega).qr().q();
    for _ in 0..power_iters {
        let z = (a.adjoint() * &q).qr().q();
        q = (a * z).qr().q();
    }
    let b = q.adjoint() * a;
    let mut sv: Vec<f64> = b.singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
    sv.truncate(k);
    Ok(sv)
}
