//! Scenario files and result tables.
//!
//! Everything on disk is either JSON (scenario descriptions, result
//! envelopes) or CSV (field samples, channel matrices, eigenvalue
//! spectra) — no binary formats, so regression corpora stay diff-able.
//! Scenario JSON declares its SI units in a `units` header and element
//! ordering is the deterministic row-major grid order, so rebuilt
//! matrices are bit-stable across runs. Floating-point values are
//! written with Rust's shortest round-trip formatting, which makes
//! repeated runs byte-identical.

use crate::metasurface::{DipoleElement, MetasurfaceSpec, NetworkScenario};
use crate::multiport::ChannelModel;
use crate::ris_optim::{ModelFidelity, Objective};
use crate::wavefield::FieldGrid;
use crate::{EmError, Result};
use nalgebra::{Rotation3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// SI unit declaration every scenario file carries.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Units {
    pub length: String,
    pub impedance: String,
}

impl Default for Units {
    fn default() -> Self {
        Units { length: "m".into(), impedance: "ohm".into() }
    }
}

impl Units {
    fn validate(&self) -> Result<()> {
        if self.length != "m" || self.impedance != "ohm" {
            return Err(EmError::Config(format!(
                "unsupported units (length {:?}, impedance {:?}); only SI meters/ohms are read",
                self.length, self.impedance
            )));
        }
        Ok(())
    }
}

fn complex(pair: &Option<[f64; 2]>) -> Option<Complex64> {
    pair.map(|[re, im]| Complex64::new(re, im))
}

fn vec3(v: [f64; 3]) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

fn default_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

/// One thin-wire dipole as written in scenario JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DipoleDto {
    pub center: [f64; 3],
    #[serde(default = "default_axis")]
    pub axis: [f64; 3],
    pub length: f64,
    pub wire_radius: f64,
    /// Lumped port load as `[Re, Im]` ohms; omit for unloaded ports.
    #[serde(default)]
    pub load: Option<[f64; 2]>,
}

impl DipoleDto {
    pub fn to_element(&self) -> Result<DipoleElement> {
        DipoleElement::new(
            vec3(self.center),
            vec3(self.axis),
            self.length,
            self.wire_radius,
            complex(&self.load),
        )
    }
}

/// A regular dipole grid; `euler_deg` is (roll, pitch, yaw) in degrees.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceDto {
    pub rows: usize,
    pub cols: usize,
    pub spacing: f64,
    pub element: DipoleDto,
    #[serde(default)]
    pub center: [f64; 3],
    #[serde(default)]
    pub euler_deg: [f64; 3],
}

fn rotation(euler_deg: [f64; 3]) -> Rotation3<f64> {
    Rotation3::from_euler_angles(
        euler_deg[0].to_radians(),
        euler_deg[1].to_radians(),
        euler_deg[2].to_radians(),
    )
}

impl SurfaceDto {
    pub fn to_spec(&self) -> Result<MetasurfaceSpec> {
        MetasurfaceSpec::new(
            self.rows,
            self.cols,
            self.spacing,
            self.element.to_element()?,
            vec3(self.center),
            rotation(self.euler_deg),
        )
    }
}

/// Load-optimization request attached to a scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizeDto {
    /// `"sum-gain"` or `"siso"`.
    #[serde(default = "default_objective")]
    pub objective: String,
    /// Reactance bounds in ohms; default ±20·Z0.
    #[serde(default)]
    pub x_min: Option<f64>,
    #[serde(default)]
    pub x_max: Option<f64>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// `"coupled"` or `"uncoupled"`.
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub neumann_order: Option<usize>,
}

fn default_objective() -> String {
    "sum-gain".into()
}

fn default_budget() -> usize {
    50_000
}

fn default_model() -> String {
    "coupled".into()
}

impl OptimizeDto {
    pub fn objective(&self) -> Result<Objective> {
        match self.objective.as_str() {
            "sum-gain" => Ok(Objective::SumGain),
            "siso" => Ok(Objective::SisoGain),
            other => Err(EmError::Config(format!(
                "unknown objective {other:?}; expected \"sum-gain\" or \"siso\""
            ))),
        }
    }

    pub fn model(&self) -> Result<ModelFidelity> {
        match self.model.as_str() {
            "coupled" => Ok(ModelFidelity::Coupled),
            "uncoupled" => Ok(ModelFidelity::Uncoupled),
            other => Err(EmError::Config(format!(
                "unknown model fidelity {other:?}; expected \"coupled\" or \"uncoupled\""
            ))),
        }
    }
}

/// One continuous rectangular aperture for eigenmode analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApertureDto {
    pub center: [f64; 3],
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    #[serde(default)]
    pub euler_deg: [f64; 3],
}

impl ApertureDto {
    pub fn to_surface(&self) -> Result<crate::holo_modes::PlanarSurface> {
        crate::holo_modes::PlanarSurface::new(
            vec3(self.center),
            rotation(self.euler_deg),
            self.lx,
            self.ly,
            self.nx,
            self.ny,
        )
    }
}

fn default_epsilon() -> f64 {
    0.5
}

/// Eigenmode-analysis request attached to a scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HoloDto {
    pub tx: ApertureDto,
    pub rx: ApertureDto,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_eta() -> f64 {
    1e-3
}

/// Plane-wave-spectrum request: a Gaussian-tapered source field on the
/// `plane_z` plane, to be propagated by `propagate_dz`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PwsDto {
    #[serde(default)]
    pub plane_z: f64,
    pub nx: usize,
    pub ny: usize,
    /// Sample spacing; omit to use the reactive-decay spacing rule at
    /// the observation plane.
    #[serde(default)]
    pub dx: Option<f64>,
    #[serde(default)]
    pub dy: Option<f64>,
    /// 1/e half-width of the Gaussian source taper (m).
    pub sigma: f64,
    pub propagate_dz: f64,
    /// Evanescent-decay threshold for the spacing rule.
    #[serde(default = "default_eta")]
    pub eta: f64,
}

/// A full scenario file: geometry plus optional per-command sections.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default)]
    pub units: Units,
    pub wavelength: f64,
    #[serde(default = "default_z0")]
    pub z0: f64,
    #[serde(default)]
    pub tx: Vec<DipoleDto>,
    #[serde(default)]
    pub rx: Vec<DipoleDto>,
    #[serde(default)]
    pub ris: Option<SurfaceDto>,
    #[serde(default)]
    pub environment: Vec<DipoleDto>,
    #[serde(default)]
    pub optimize: Option<OptimizeDto>,
    #[serde(default)]
    pub holo: Option<HoloDto>,
    #[serde(default)]
    pub pws: Option<PwsDto>,
}

fn default_z0() -> f64 {
    50.0
}

impl ScenarioFile {
    /// Parse scenario JSON; syntax errors keep serde's line/column
    /// diagnostics.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        file.units.validate()?;
        Ok(file)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        ScenarioFile::from_json(&text)
    }

    /// Materialize the network-scenario part (Tx/Rx/RIS/environment).
    pub fn to_network(&self) -> Result<NetworkScenario> {
        let tx = self.tx.iter().map(|d| d.to_element()).collect::<Result<Vec<_>>>()?;
        let rx = self.rx.iter().map(|d| d.to_element()).collect::<Result<Vec<_>>>()?;
        let environment =
            self.environment.iter().map(|d| d.to_element()).collect::<Result<Vec<_>>>()?;
        let ris = self.ris.as_ref().map(|s| s.to_spec()).transpose()?;
        let scenario =
            NetworkScenario { tx, rx, ris, environment, wavelength: self.wavelength, z0: self.z0 };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Shortest round-trip decimal form of a float (deterministic output).
fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Field samples as CSV with the fixed header
/// `x, y, Re(Ex), Im(Ex), Re(Ey), Im(Ey)`, row-major.
pub fn field_to_csv(grid: &FieldGrid) -> String {
    let mut out = String::from("x, y, Re(Ex), Im(Ex), Re(Ey), Im(Ey)\n");
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let i = grid.idx(ix, iy);
            let (ex, ey) = (grid.ex[i], grid.ey[i]);
            let _ = writeln!(
                out,
                "{}, {}, {}, {}, {}, {}",
                fmt_f64(ix as f64 * grid.dx),
                fmt_f64(iy as f64 * grid.dy),
                fmt_f64(ex.re),
                fmt_f64(ex.im),
                fmt_f64(ey.re),
                fmt_f64(ey.im)
            );
        }
    }
    out
}

/// Grid metadata that, together with the CSV, round-trips a FieldGrid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldEnvelope {
    pub plane_z: f64,
    pub dx: f64,
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
    pub wavelength: f64,
}

impl FieldEnvelope {
    pub fn of(grid: &FieldGrid) -> Self {
        FieldEnvelope {
            plane_z: grid.plane_z,
            dx: grid.dx,
            dy: grid.dy,
            nx: grid.nx,
            ny: grid.ny,
            wavelength: grid.wavelength,
        }
    }
}

/// Rebuild a FieldGrid from its JSON envelope and CSV samples. Leading
/// `#` comment lines (provenance headers) are skipped.
pub fn field_from_csv(envelope: &FieldEnvelope, csv: &str) -> Result<FieldGrid> {
    let mut lines = csv.lines().skip_while(|l| l.starts_with('#'));
    let header = lines.next().ok_or_else(|| EmError::Config("empty field CSV".into()))?;
    if header.trim() != "x, y, Re(Ex), Im(Ex), Re(Ey), Im(Ey)" {
        return Err(EmError::Config(format!("unexpected field CSV header {header:?}")));
    }
    let n = envelope.nx * envelope.ny;
    let mut ex = Vec::with_capacity(n);
    let mut ey = Vec::with_capacity(n);
    for (row, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| EmError::Config(format!("field CSV row {}: {e}", row + 2)))?;
        if cols.len() != 6 {
            return Err(EmError::Config(format!(
                "field CSV row {}: expected 6 columns, got {}",
                row + 2,
                cols.len()
            )));
        }
        ex.push(Complex64::new(cols[2], cols[3]));
        ey.push(Complex64::new(cols[4], cols[5]));
    }
    FieldGrid::new(
        envelope.plane_z,
        envelope.dx,
        envelope.dy,
        envelope.nx,
        envelope.ny,
        ex,
        ey,
        envelope.wavelength,
    )
}

/// Channel matrix as CSV rows `row, col, Re, Im`.
pub fn channel_to_csv(model: &ChannelModel) -> String {
    let mut out = String::from("row, col, Re, Im\n");
    for i in 0..model.h.nrows() {
        for j in 0..model.h.ncols() {
            let z = model.h[(i, j)];
            let _ = writeln!(out, "{}, {}, {}, {}", i, j, fmt_f64(z.re), fmt_f64(z.im));
        }
    }
    out
}

/// Provenance metadata that makes an exported channel reproducible.
#[derive(Debug, Clone, Serialize)]
pub struct ChannelEnvelope {
    pub formulation: String,
    pub provenance: String,
    pub rows: usize,
    pub cols: usize,
}

impl ChannelEnvelope {
    pub fn of(model: &ChannelModel) -> Self {
        ChannelEnvelope {
            formulation: model.formulation.to_string(),
            provenance: model.provenance.clone(),
            rows: model.h.nrows(),
            cols: model.h.ncols(),
        }
    }
}

/// Eigenvalue spectrum as CSV rows `m, mu_m, mu_m/mu_1` (m is 1-based).
pub fn spectrum_to_csv(mu: &[f64]) -> String {
    let mut out = String::from("m, mu_m, mu_m/mu_1\n");
    let mu1 = mu.first().copied().unwrap_or(0.0);
    for (m, &value) in mu.iter().enumerate() {
        let ratio = if mu1 > 0.0 { value / mu1 } else { 0.0 };
        let _ = writeln!(out, "{}, {}, {}", m + 1, fmt_f64(value), fmt_f64(ratio));
    }
    out
}

/// Pretty-printed JSON with a trailing newline (byte-stable for a fixed
/// value: serde_json map order follows struct declaration order).
pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}
