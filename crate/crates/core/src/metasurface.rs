//! Physical arrays built from loaded thin-wire dipoles.
//!
//! RIS panels, Tx/Rx arrays, and environment scatterers are all arrays of
//! thin wire dipoles loaded by lumped impedances. Self and mutual
//! impedances are computed by the induced-EMF method with an assumed
//! sinusoidal current `I(ζ) = sin(κ(L/2 - |ζ|))` on each wire: the exact
//! near field of the sinusoidal filament is integrated along the second
//! wire by adaptive quadrature (relative tolerance 1e-8). Elements are
//! treated as canonical-minimum-scattering radiators: every interaction
//! the model carries is encoded in the network equations.

use crate::{CMat, EmError, Result};
use nalgebra::{Rotation3, Vector3};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Free-space wave impedance, ohms.
pub const ETA0: f64 = 376.730313668;
/// Speed of light, m/s.
pub const C0: f64 = 299_792_458.0;
/// Vacuum permittivity, F/m.
pub const EPS0: f64 = 8.854_187_8128e-12;

/// A loaded thin-wire dipole: the atom of every array in the model.
#[derive(Debug, Clone, PartialEq)]
pub struct DipoleElement {
    pub center: Vector3<f64>,
    /// Unit vector along the wire.
    pub axis: Vector3<f64>,
    /// Total wire length (m).
    pub length: f64,
    pub wire_radius: f64,
    /// Lumped load at the port; `None` for environment dipoles whose
    /// load comes from the material they stand in for.
    pub load: Option<Complex64>,
}

impl DipoleElement {
    pub fn new(
        center: Vector3<f64>,
        axis: Vector3<f64>,
        length: f64,
        wire_radius: f64,
        load: Option<Complex64>,
    ) -> Result<Self> {
        if length <= 0.0 {
            return Err(EmError::invalid("dipole length must be positive"));
        }
        if !(wire_radius > 0.0 && wire_radius <= length / 50.0) {
            return Err(EmError::invalid(
                "thin-wire validity requires 0 < wire_radius <= length/50",
            ));
        }
        if (axis.norm() - 1.0).abs() > 1e-12 {
            return Err(EmError::invalid("axis must be a unit vector"));
        }
        Ok(DipoleElement { center, axis, length, wire_radius, load })
    }

    /// A z-axis dipole, the common case in tests and scenario files.
    pub fn z_oriented(
        center: Vector3<f64>,
        length: f64,
        wire_radius: f64,
        load: Option<Complex64>,
    ) -> Result<Self> {
        DipoleElement::new(center, Vector3::z(), length, wire_radius, load)
    }

    fn half_length(&self) -> f64 {
        self.length / 2.0
    }

    /// Wire segment endpoints.
    fn endpoints(&self) -> (Vector3<f64>, Vector3<f64>) {
        let h = self.half_length();
        (self.center - self.axis * h, self.center + self.axis * h)
    }
}

/// Minimum distance between two line segments.
fn segment_distance(p1: Vector3<f64>, q1: Vector3<f64>, p2: Vector3<f64>, q2: Vector3<f64>) -> f64 {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let c = d1.dot(&r);
    let b = d1.dot(&d2);
    let denom = a * e - b * b;
    let mut s = if denom.abs() > 1e-30 { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
    let mut t = if e > 1e-30 { (b * s + f) / e } else { 0.0 };
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    ((p1 + d1 * s) - (p2 + d2 * t)).norm()
}

/// Exact near field (axial and radial components, source-local
/// cylindrical frame) of a sinusoidal current filament of half-length
/// `h` with unit current maximum.
fn sinusoidal_dipole_field(rho: f64, z: f64, h: f64, kappa: f64) -> (Complex64, Complex64) {
    let j = Complex64::i();
    let r1 = (rho * rho + (z - h) * (z - h)).sqrt();
    let r2 = (rho * rho + (z + h) * (z + h)).sqrt();
    let r0 = (rho * rho + z * z).sqrt();
    let g = |r: f64| (-j * kappa * r).exp() / r;
    let c = 2.0 * (kappa * h).cos();
    let ez = -j * ETA0 / (4.0 * PI) * (g(r1) + g(r2) - c * g(r0));
    let erho = if rho > 1e-14 {
        j * ETA0 / (4.0 * PI * rho)
            * ((z - h) * g(r1) + (z + h) * g(r2) - c * z * g(r0))
    } else {
        // On the axis the radial component vanishes by symmetry.
        Complex64::default()
    };
    (ez, erho)
}

fn simpson_step(fa: Complex64, fm: Complex64, fb: Complex64, h: f64) -> Complex64 {
    (fa + 4.0 * fm + fb) * (h / 6.0)
}

fn adaptive_simpson(
    f: &mut impl FnMut(f64) -> Complex64,
    a: f64,
    b: f64,
    fa: Complex64,
    fm: Complex64,
    fb: Complex64,
    whole: Complex64,
    tol: f64,
    depth: u32,
) -> Complex64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson_step(fa, flm, fm, m - a);
    let right = simpson_step(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if depth == 0 || delta.norm() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}

/// Adaptive Simpson quadrature over `[a, b]` with interior split points,
/// relative tolerance `rel_tol`.
fn integrate(
    f: &mut impl FnMut(f64) -> Complex64,
    splits: &[f64],
    rel_tol: f64,
) -> Complex64 {
    // Coarse magnitude estimate for the absolute tolerance.
    let (lo, hi) = (splits[0], *splits.last().unwrap());
    let n = 256;
    let dt = (hi - lo) / n as f64;
    let rough: f64 = (0..n).map(|i| f(lo + (i as f64 + 0.5) * dt).norm() * dt).sum();
    let tol = rel_tol * rough.max(1e-300);

    let mut total = Complex64::default();
    for w in splits.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        let whole = simpson_step(fa, fm, fb, b - a);
        total += adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 40);
    }
    total
}

fn element_key(e: &DipoleElement) -> [f64; 8] {
    [
        e.center.x, e.center.y, e.center.z, e.axis.x, e.axis.y, e.axis.z, e.length,
        e.wire_radius,
    ]
}

/// Self or mutual impedance of a pair of loaded thin-wire dipoles by the
/// induced-EMF method (sinusoidal current assumption).
///
/// The result is symmetric in its arguments (the pair is canonicalized
/// before quadrature, so swapped arguments return bit-identical values).
/// The self case (`a == b` geometrically) integrates the field on the
/// wire surface and includes the radiation resistance.
pub fn mutual_impedance(a: &DipoleElement, b: &DipoleElement, wavelength: f64) -> Result<Complex64> {
    if wavelength <= 0.0 {
        return Err(EmError::invalid("wavelength must be positive"));
    }
    let kappa = 2.0 * PI / wavelength;
    let self_case = element_key(a) == element_key(b);
    if !self_case {
        let (p1, q1) = a.endpoints();
        let (p2, q2) = b.endpoints();
        let dist = segment_distance(p1, q1, p2, q2);
        if dist < a.wire_radius + b.wire_radius {
            return Err(EmError::Overlap(format!(
                "wire volumes intersect (axis distance {:.3e} m)",
                dist
            )));
        }
    }
    // Canonical ordering keeps Z_ab == Z_ba exact in floating point.
    let (src, obs) = if element_key(a) <= element_key(b) { (a, b) } else { (b, a) };

    let h_s = src.half_length();
    let h_o = obs.half_length();
    let i0_s = (kappa * h_s).sin();
    let i0_o = (kappa * h_o).sin();
    if i0_s.abs() < 1e-9 || i0_o.abs() < 1e-9 {
        return Err(EmError::invalid(
            "feed current vanishes for a full-wave dipole (sin(kappa L/2) ~ 0)",
        ));
    }

    let t_s = src.axis;
    let t_o = obs.axis;
    let c_s = src.center;
    let c_o = obs.center;
    let radius = if self_case { src.wire_radius } else { 0.0 };
    // Fixed perpendicular offset direction for the self case.
    let perp = if self_case {
        let trial = if t_s.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        (trial - t_s * trial.dot(&t_s)).normalize()
    } else {
        Vector3::zeros()
    };

    let mut integrand = |zeta: f64| -> Complex64 {
        let p = c_o + t_o * zeta + perp * radius;
        let d = p - c_s;
        let z = d.dot(&t_s);
        let rho_vec = d - t_s * z;
        let rho = rho_vec.norm();
        let (ez, erho) = sinusoidal_dipole_field(rho, z, h_s, kappa);
        let e_vec = if rho > 1e-14 {
            t_s.map(|c| Complex64::new(c, 0.0)) * ez
                + (rho_vec / rho).map(|c| Complex64::new(c, 0.0)) * erho
        } else {
            t_s.map(|c| Complex64::new(c, 0.0)) * ez
        };
        let e_tan = e_vec.x * t_o.x + e_vec.y * t_o.y + e_vec.z * t_o.z;
        let current = (kappa * (h_o - zeta.abs())).sin();
        e_tan * current
    };

    // Split at the current kink and at the projections of the source
    // wire ends (field peaks for nearly collinear geometries).
    let mut splits = vec![-h_o, 0.0, h_o];
    for end_sign in [-1.0, 1.0] {
        let end = c_s + t_s * (end_sign * h_s);
        let zeta = (end - c_o).dot(&t_o);
        if zeta > -h_o && zeta < h_o {
            splits.push(zeta);
        }
    }
    splits.sort_by(f64::total_cmp);
    splits.dedup();

    let integral = integrate(&mut integrand, &splits, 1e-9);
    Ok(-integral / (i0_s * i0_o))
}

/// A regular grid of co-polarized dipoles forming one surface.
#[derive(Debug, Clone)]
pub struct MetasurfaceSpec {
    pub rows: usize,
    pub cols: usize,
    /// Element interdistance (m).
    pub spacing: f64,
    /// Template element; its `center` is interpreted relative to the
    /// surface center, in the surface frame.
    pub element: DipoleElement,
    pub center: Vector3<f64>,
    pub orientation: Rotation3<f64>,
}

impl MetasurfaceSpec {
    pub fn new(
        rows: usize,
        cols: usize,
        spacing: f64,
        element: DipoleElement,
        center: Vector3<f64>,
        orientation: Rotation3<f64>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(EmError::invalid("metasurface needs at least one element"));
        }
        if spacing <= 0.0 {
            return Err(EmError::invalid("element spacing must be positive"));
        }
        if spacing < 2.0 * element.wire_radius {
            return Err(EmError::Overlap("element spacing below wire diameter".into()));
        }
        Ok(MetasurfaceSpec { rows, cols, spacing, element, center, orientation })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Generated elements in deterministic row-major order over the grid.
    pub fn elements(&self) -> Vec<DipoleElement> {
        let axis = self.orientation * self.element.axis;
        let ex = self.orientation * Vector3::x();
        let ey = self.orientation * Vector3::y();
        let mut out = Vec::with_capacity(self.len());
        for row in 0..self.rows {
            for col in 0..self.cols {
                let u = (col as f64 - (self.cols as f64 - 1.0) / 2.0) * self.spacing;
                let v = (row as f64 - (self.rows as f64 - 1.0) / 2.0) * self.spacing;
                let center =
                    self.center + ex * u + ey * v + self.orientation * self.element.center;
                out.push(DipoleElement {
                    center,
                    axis,
                    length: self.element.length,
                    wire_radius: self.element.wire_radius,
                    load: self.element.load,
                });
            }
        }
        out
    }
}

/// Full link description: Tx array, Rx array, RIS surface, environment
/// scatterers, wavelength, and reference impedance.
#[derive(Debug, Clone)]
pub struct NetworkScenario {
    pub tx: Vec<DipoleElement>,
    pub rx: Vec<DipoleElement>,
    pub ris: Option<MetasurfaceSpec>,
    pub environment: Vec<DipoleElement>,
    pub wavelength: f64,
    pub z0: f64,
}

impl NetworkScenario {
    pub fn validate(&self) -> Result<()> {
        if self.wavelength <= 0.0 {
            return Err(EmError::invalid("wavelength must be positive"));
        }
        if self.z0 <= 0.0 {
            return Err(EmError::invalid("reference impedance must be real and positive"));
        }
        let all = self.all_elements();
        for (i, a) in all.iter().enumerate() {
            for (j, b) in all.iter().enumerate().skip(i + 1) {
                let (p1, q1) = a.endpoints();
                let (p2, q2) = b.endpoints();
                if segment_distance(p1, q1, p2, q2) < a.wire_radius + b.wire_radius {
                    return Err(EmError::Overlap(format!(
                        "elements {i} and {j} overlap"
                    )));
                }
            }
        }
        Ok(())
    }

    /// RIS elements in their deterministic ordering.
    pub fn ris_elements(&self) -> Vec<DipoleElement> {
        self.ris.as_ref().map(|m| m.elements()).unwrap_or_default()
    }

    /// All elements in port order: Tx, RIS, Rx, environment.
    pub fn all_elements(&self) -> Vec<DipoleElement> {
        let mut all = self.tx.clone();
        all.extend(self.ris_elements());
        all.extend(self.rx.clone());
        all.extend(self.environment.clone());
        all
    }
}

/// All impedance blocks over the port partition {T, S, R, O}.
///
/// `z_ss` is the mutual-coupling matrix of the RIS ports (off-diagonal:
/// coupling; diagonal: self-impedances).
#[derive(Debug, Clone)]
pub struct ImpedanceBlocks {
    /// Rx-ports x Tx-ports.
    pub z_rt: CMat,
    /// RIS-ports x Tx-ports.
    pub z_st: CMat,
    /// Rx-ports x RIS-ports.
    pub z_rs: CMat,
    /// RIS-ports x RIS-ports mutual coupling.
    pub z_ss: CMat,
    /// Environment blocks, empty when there are no scatterers.
    pub z_ot: CMat,
    pub z_so: CMat,
    pub z_ro: CMat,
    pub z_oo: CMat,
    /// Lumped loads of the environment dipoles (diagonal of the O-port
    /// termination), same order as the O rows.
    pub env_loads: Vec<Complex64>,
}

impl ImpedanceBlocks {
    pub fn n_tx(&self) -> usize {
        self.z_rt.ncols()
    }
    pub fn n_rx(&self) -> usize {
        self.z_rt.nrows()
    }
    pub fn n_ris(&self) -> usize {
        self.z_ss.nrows()
    }
    pub fn n_env(&self) -> usize {
        self.z_oo.nrows()
    }
}

/// Compute every impedance block of a scenario. The underlying full
/// matrix over all ports is symmetric by construction (each unordered
/// pair is evaluated once and mirrored).
pub fn build_blocks(scenario: &NetworkScenario) -> Result<ImpedanceBlocks> {
    scenario.validate()?;
    let lambda = scenario.wavelength;
    let nt = scenario.tx.len();
    let ris = scenario.ris_elements();
    let ns = ris.len();
    let nr = scenario.rx.len();
    let _no = scenario.environment.len();
    let all = scenario.all_elements();
    let n = all.len();

    let mut full = CMat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let z = mutual_impedance(&all[i], &all[j], lambda).map_err(|e| match e {
                EmError::Overlap(msg) => {
                    EmError::Overlap(format!("ports {i} and {j}: {msg}"))
                }
                other => other,
            })?;
            full[(i, j)] = z;
            full[(j, i)] = z;
        }
    }

    let t = 0..nt;
    let s = nt..nt + ns;
    let r = nt + ns..nt + ns + nr;
    let o = nt + ns + nr..n;
    let sub = |rows: &std::ops::Range<usize>, cols: &std::ops::Range<usize>| {
        CMat::from_fn(rows.len(), cols.len(), |i, j| full[(rows.start + i, cols.start + j)])
    };

    let env_loads = scenario
        .environment
        .iter()
        .map(|e| {
            e.load.ok_or_else(|| {
                EmError::invalid("environment dipoles need a (material) load")
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ImpedanceBlocks {
        z_rt: sub(&r, &t),
        z_st: sub(&s, &t),
        z_rs: sub(&r, &s),
        z_ss: sub(&s, &s),
        z_ot: sub(&o, &t),
        z_so: sub(&s, &o),
        z_ro: sub(&r, &o),
        z_oo: sub(&o, &o),
        env_loads,
    })
}

/// Reflection-coefficient matrix of the RIS loads:
/// `Γ_S = (Z_S + Z0 I)⁻¹ (Z_S - Z0 I)`.
///
/// Diagonal `Z_S` gives a diagonal result; purely reactive loads give
/// unit-modulus diagonal entries.
pub fn gamma_from_loads(z_s: &CMat, z0: f64) -> Result<CMat> {
    let n = z_s.nrows();
    if z_s.ncols() != n {
        return Err(EmError::invalid("Z_S must be square"));
    }
    let z0c = Complex64::new(z0, 0.0);
    let a = z_s + CMat::identity(n, n) * z0c;
    let b = z_s - CMat::identity(n, n) * z0c;
    crate::multiport::solve(&a, &b, "Z_S + Z0 I (resonance-degenerate load)")
}

/// Map a relative permittivity onto the lumped load of an environment
/// dipole standing in for a small piece of that material.
///
/// The static polarizability of the material volume (wire cylinder),
/// `α = 3 V ε0 (εr-1)/(εr+2)`, is matched by loading the dipole with
/// `Z = l_eff²/(jωα)` minus the element's self-reactance, with
/// `l_eff = L/2` (triangular current on a short dipole). The mapping is
/// an approximation valid for sub-λ/10 elements; lossless dielectrics
/// map to purely reactive loads, lossy ones gain a positive real part.
pub fn material_load(
    relative_permittivity: Complex64,
    element: &DipoleElement,
    wavelength: f64,
) -> Result<Complex64> {
    if relative_permittivity.im > 1e-15 {
        return Err(EmError::invalid(
            "active material (Im(eps_r) > 0 under the e^{jwt} convention)",
        ));
    }
    let omega = 2.0 * PI * C0 / wavelength;
    let volume = PI * element.wire_radius * element.wire_radius * element.length;
    let alpha = 3.0 * volume * EPS0 * (relative_permittivity - 1.0)
        / (relative_permittivity + 2.0);
    let x_self = mutual_impedance(element, element, wavelength)?.im;
    if alpha.norm() < 1e-40 {
        // Vacuum: no material contrast, the inclusion must be invisible.
        // An enormous reactive load open-circuits the port.
        return Ok(Complex64::new(0.0, -1e12));
    }
    let l_eff = element.length / 2.0;
    let z = l_eff * l_eff / (Complex64::i() * omega * alpha) - Complex64::new(0.0, x_self);
    Ok(z)
}
