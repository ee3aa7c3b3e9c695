//! Modal-propagation surrogate of the 2×2 multimode interference splitter.
//!
//! The SOI stack is first collapsed to a lateral index profile by the
//! effective-index method. Lateral quasi-TE fields are then TM-like in the
//! reduced problem and satisfy `(1/n²·H')' + k₀²/n²·H = β²/n²·H`, which is
//! discretized on a uniform cell-centred grid with `1/n²` averaged over each
//! cell. The symmetric form works with `y = H/n`, so overlaps are plain dot
//! products.
//!
//! The multimode section is symmetric about its axis, so its modes are found
//! from separate even and odd half-problems and the resulting matrix is
//! mirror-symmetric to rounding. Every mode with `β² > 0` on the finite grid
//! is kept; power that misses both output ports counts as excess loss.
//!
//! Modes accumulate phase as `exp(−iβL)`. With this sign the cross port of
//! a symmetric splitter leads the bar port by `+π/2`, matching the ideal
//! coupler `(1/√2)[[1, i], [i, 1]]` used throughout the crate.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymTridiagonal;
use crate::mode_solver::{vertical_slab_index, Platform};
use crate::optics::{Db, TransferMatrix2x2, C64};

pub const GRID_POINTS: usize = 4096;
/// Cladding kept on each side of the multimode section, µm.
pub const GRID_MARGIN_UM: f64 = 2.0;
/// Largest FPV bias the surrogate accepts, nm.
pub const MAX_FPV_NM: f64 = 20.0;

/// Target nominal excess loss of the calibrated surrogate.
pub const CALIBRATED_NOMINAL_LOSS_DB: f64 = 0.04;
/// Radiated-power scale that brings the nominal splitter to
/// [`CALIBRATED_NOMINAL_LOSS_DB`] with the default platform and grid.
pub const DEFAULT_LOSS_SCALE: f64 = 0.226_974_770;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmiGeometry {
    pub length_um: f64,
    pub width_um: f64,
    /// Edge-to-edge separation of the two tapers at the multimode section.
    pub gap_um: f64,
    pub taper_width_um: f64,
    pub wg_width_um: f64,
    pub thickness_um: f64,
}

impl Default for MmiGeometry {
    fn default() -> Self {
        Self::NOMINAL
    }
}

impl MmiGeometry {
    /// Optimized splitter dimensions.
    pub const NOMINAL: MmiGeometry = MmiGeometry {
        length_um: 15.7312,
        width_um: 2.08320,
        gap_um: 0.40208,
        taper_width_um: 0.90532,
        wg_width_um: 0.5,
        thickness_um: 0.22,
    };

    /// Lateral offset of each port axis from the multimode axis.
    pub fn port_offset_um(&self) -> f64 {
        0.5 * (self.gap_um + self.taper_width_um)
    }

    /// Positive dimensions with both port axes inside the multimode section.
    ///
    /// The tapers themselves may overhang the multimode edges slightly, as
    /// they do for the nominal design.
    pub fn validate(&self) -> Result<()> {
        let all =
            [self.length_um, self.width_um, self.gap_um, self.taper_width_um, self.wg_width_um, self.thickness_um];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidInput(format!("MMI dimensions must be positive: {self:?}")));
        }
        if self.port_offset_um() >= 0.5 * self.width_um {
            return Err(Error::InvalidInput(format!(
                "port axes at ±{:.4} µm fall outside the {:.4} µm multimode section",
                self.port_offset_um(),
                self.width_um
            )));
        }
        if self.taper_width_um > self.width_um {
            return Err(Error::InvalidInput("taper is wider than the multimode section".into()));
        }
        Ok(())
    }

    /// Geometry after a correlated lithographic width bias and a thickness
    /// bias. Edges move outward by `ΔW/2`, so the gap shrinks by `ΔW` and the
    /// port axes stay put.
    pub fn with_fpv(&self, fpv: FpvDelta) -> MmiGeometry {
        let dw = fpv.dw_nm * 1e-3;
        let dt = fpv.dt_nm * 1e-3;
        MmiGeometry {
            length_um: self.length_um,
            width_um: self.width_um + dw,
            gap_um: self.gap_um - dw,
            taper_width_um: self.taper_width_um + dw,
            wg_width_um: self.wg_width_um + dw,
            thickness_um: self.thickness_um + dt,
        }
    }
}

/// Fabrication deviation of width and thickness, in nm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpvDelta {
    pub dw_nm: f64,
    pub dt_nm: f64,
}

impl FpvDelta {
    pub const NONE: FpvDelta = FpvDelta { dw_nm: 0.0, dt_nm: 0.0 };

    pub fn new(dw_nm: f64, dt_nm: f64) -> Result<Self> {
        let d = Self { dw_nm, dt_nm };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dw_nm.abs() <= MAX_FPV_NM && self.dt_nm.abs() <= MAX_FPV_NM) {
            return Err(Error::Domain(format!(
                "FPV bias ({}, {}) nm outside ±{MAX_FPV_NM} nm",
                self.dw_nm, self.dt_nm
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitResult {
    pub matrix: TransferMatrix2x2,
    pub bar_fraction: f64,
    pub cross_fraction: f64,
    pub excess_loss: Db,
    /// `bar/(bar + cross) − 0.5`.
    pub deviation: f64,
    /// Excess loss before loss calibration.
    pub raw_excess_loss: Db,
    pub mode_count: usize,
}

impl SplitResult {
    fn from_matrix(matrix: TransferMatrix2x2, raw_excess_loss: Db, mode_count: usize) -> Self {
        let bar = matrix.t11().norm_sqr();
        let cross = matrix.t21().norm_sqr();
        Self {
            matrix,
            bar_fraction: bar,
            cross_fraction: cross,
            excess_loss: Db::loss_from_transmission(bar + cross),
            deviation: bar / (bar + cross) - 0.5,
            raw_excess_loss,
            mode_count,
        }
    }
}

/// `arg(t_cross) − arg(t_bar)` wrapped to `(−π, π]`, for input port 1.
pub fn splitter_phase_relation(matrix: &TransferMatrix2x2) -> Result<f64> {
    let (bar, cross) = (matrix.t11(), matrix.t21());
    if bar.norm() < 1e-12 || cross.norm() < 1e-12 {
        return Err(Error::UndefinedPhase(format!("|t_bar| = {:.3e}, |t_cross| = {:.3e}", bar.norm(), cross.norm())));
    }
    let mut d = cross.arg() - bar.arg();
    while d <= -PI {
        d += 2.0 * PI;
    }
    while d > PI {
        d -= 2.0 * PI;
    }
    Ok(d)
}

/// Modal-propagation model with its discretization and optional loss
/// calibration.
///
/// With `loss_scale = Some(κ)`, the power missing from both ports is scaled
/// by `κ` while splitting ratio and phases are left untouched.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MmiModel {
    pub platform: Platform,
    pub wavelength_um: f64,
    pub grid_points: usize,
    pub margin_um: f64,
    pub loss_scale: Option<f64>,
}

impl Default for MmiModel {
    fn default() -> Self {
        Self {
            platform: Platform::default(),
            wavelength_um: 1.55,
            grid_points: GRID_POINTS,
            margin_um: GRID_MARGIN_UM,
            loss_scale: Some(DEFAULT_LOSS_SCALE),
        }
    }
}

/// Cell-centred lateral grid symmetric about `x = 0`.
struct Grid {
    x: Vec<f64>,
    dx: f64,
}

impl Grid {
    fn new(extent: f64, points: usize) -> Self {
        let dx = extent / points as f64;
        let x = (0..points).map(|j| dx * (j as f64 + 0.5 - points as f64 / 2.0)).collect();
        Self { x, dx }
    }

    /// `1/n²` averaged over each cell for a core of `half_width` centred at `c`.
    fn inv_profile(&self, c: f64, half_width: f64, n_core: f64, n_clad: f64) -> Vec<f64> {
        let (ic, il) = (1.0 / (n_core * n_core), 1.0 / (n_clad * n_clad));
        self.x
            .iter()
            .map(|&x| {
                let lo = (x - 0.5 * self.dx).max(c - half_width);
                let hi = (x + 0.5 * self.dx).min(c + half_width);
                let f = ((hi - lo) / self.dx).clamp(0.0, 1.0);
                f * ic + (1.0 - f) * il
            })
            .collect()
    }
}

/// Symmetrized operator for `y = H/n` on a full (or half) grid. `first_diag`
/// overrides the unscaled diagonal of the first cell for the half-problems.
fn lateral_operator(inv: &[f64], dx: f64, k0: f64, first_diag: Option<f64>) -> SymTridiagonal {
    let n = inv.len();
    let face: Vec<f64> = inv.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let h2 = dx * dx;
    let mut diag = Vec::with_capacity(n);
    for j in 0..n {
        let mut d = k0 * k0;
        if j > 0 {
            d -= face[j - 1] / h2;
        }
        if j + 1 < n {
            d -= face[j] / h2;
        }
        if j == 0 {
            if let Some(fd) = first_diag {
                d = fd;
            }
        }
        diag.push(d / inv[j]);
    }
    let off = (0..n - 1).map(|j| face[j] / h2 / (inv[j] * inv[j + 1]).sqrt()).collect();
    SymTridiagonal::new(diag, off)
}

struct Mode {
    beta: f64,
    /// Full-grid field `y`, normalized so `Σ y² dx = 1`.
    y: Vec<f64>,
}

impl MmiModel {
    pub fn uncalibrated() -> Self {
        Self { loss_scale: None, ..Self::default() }
    }

    pub fn at_wavelength(self, wavelength_um: f64) -> Self {
        Self { wavelength_um, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        self.platform.validate()?;
        if !(self.wavelength_um.is_finite() && self.wavelength_um > 0.0) {
            return Err(Error::InvalidInput(format!("wavelength must be positive, got {}", self.wavelength_um)));
        }
        if self.grid_points < 2048 || !self.grid_points.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "grid needs an even number ≥ 2048 of points, got {}",
                self.grid_points
            )));
        }
        if !(self.margin_um >= 2.0) {
            return Err(Error::InvalidInput(format!("grid margin must be ≥ 2 µm, got {}", self.margin_um)));
        }
        if let Some(k) = self.loss_scale {
            if !(k.is_finite() && k >= 0.0) {
                return Err(Error::InvalidInput(format!("loss scale must be ≥ 0, got {k}")));
            }
        }
        Ok(())
    }

    /// Splitter response at `geom` biased by `fpv`.
    pub fn transfer(&self, geom: &MmiGeometry, fpv: FpvDelta) -> Result<SplitResult> {
        let (raw, modes) = self.raw_matrix(geom, fpv)?;
        let raw_power = raw.t11().norm_sqr() + raw.t21().norm_sqr();
        let raw_loss = Db::loss_from_transmission(raw_power);
        let matrix = match self.loss_scale {
            None => raw,
            Some(kappa) => {
                let target = 1.0 - kappa * (1.0 - raw_power);
                let g = (target / raw_power).sqrt().min(1.0 / raw.spectral_norm());
                raw.scale(C64::from(g))
            }
        };
        Ok(SplitResult::from_matrix(matrix, raw_loss, modes))
    }

    /// Loss scale that makes the nominal `geom` lose exactly `target_db`.
    pub fn loss_scale_for(&self, geom: &MmiGeometry, target_db: f64) -> Result<f64> {
        let raw = Self { loss_scale: None, ..*self }.transfer(geom, FpvDelta::NONE)?;
        let missing = 1.0 - raw.bar_fraction - raw.cross_fraction;
        if !(missing > 0.0) {
            return Err(Error::CalibrationRejected("surrogate has no excess loss to scale".into()));
        }
        let kappa = (1.0 - Db(-target_db).power_ratio()) / missing;
        if !(0.0..=1.0).contains(&kappa) {
            return Err(Error::CalibrationRejected(format!(
                "target {target_db} dB exceeds raw loss {:.4} dB",
                raw.excess_loss.value()
            )));
        }
        Ok(kappa)
    }

    /// Effective indices `β/k₀` of every lateral mode kept by the surrogate.
    pub fn lateral_mode_indices(&self, geom: &MmiGeometry, fpv: FpvDelta) -> Result<Vec<f64>> {
        self.validate()?;
        fpv.validate()?;
        let g = geom.with_fpv(fpv);
        g.validate()?;
        let k0 = 2.0 * PI / self.wavelength_um;
        let nv = vertical_slab_index(&self.platform, g.thickness_um, self.wavelength_um, None)?.re;
        let grid = Grid::new(g.width_um + 2.0 * self.margin_um, self.grid_points);
        Ok(self.multimode_modes(&grid, &g, nv, self.platform.lateral_index, k0).iter().map(|m| m.beta / k0).collect())
    }

    fn raw_matrix(&self, geom: &MmiGeometry, fpv: FpvDelta) -> Result<(TransferMatrix2x2, usize)> {
        self.validate()?;
        geom.validate()?;
        fpv.validate()?;
        let g = geom.with_fpv(fpv);
        g.validate()?;
        let lambda = self.wavelength_um;
        let k0 = 2.0 * PI / lambda;
        let nv = vertical_slab_index(&self.platform, g.thickness_um, lambda, None)?.re;
        let nl = self.platform.lateral_index;

        let grid = Grid::new(g.width_um + 2.0 * self.margin_um, self.grid_points);
        let modes = self.multimode_modes(&grid, &g, nv, nl, k0);
        let guided = modes.iter().filter(|m| m.beta > k0 * nl).count();
        if guided < 2 {
            return Err(Error::SurrogateInvalid(format!(
                "only {guided} guided lateral modes in the multimode section"
            )));
        }

        let ports = self.port_fields(&grid, &g, nv, nl, k0);
        let overlaps: Vec<[f64; 2]> = modes
            .iter()
            .map(|m| {
                let c = |p: &[f64]| m.y.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() * grid.dx;
                [c(&ports[0]), c(&ports[1])]
            })
            .collect();

        let mut t = [[C64::new(0.0, 0.0); 2]; 2];
        for (m, c) in modes.iter().zip(&overlaps) {
            let phase = C64::from_polar(1.0, -m.beta * g.length_um);
            for (o, row) in t.iter_mut().enumerate() {
                for (i, entry) in row.iter_mut().enumerate() {
                    *entry += phase * (c[i] * c[o]);
                }
            }
        }
        Ok((TransferMatrix2x2 { m: t }, modes.len()))
    }

    /// Modes of the multimode section with `β² > 0`, highest index first.
    fn multimode_modes(&self, grid: &Grid, g: &MmiGeometry, nv: f64, nl: f64, k0: f64) -> Vec<Mode> {
        let n = grid.x.len();
        let half = n / 2;
        // right half of a symmetric profile; the left half is its mirror
        let full = grid.inv_profile(0.0, 0.5 * g.width_um, nv, nl);
        let inv: Vec<f64> = full[half..].to_vec();
        let h2 = grid.dx * grid.dx;
        let face_c = inv[0];
        let face_r = 0.5 * (inv[0] + inv[1]);
        let even = lateral_operator(&inv, grid.dx, k0, Some(k0 * k0 - face_r / h2));
        let odd = lateral_operator(&inv, grid.dx, k0, Some(k0 * k0 - (2.0 * face_c + face_r) / h2));
        let norm = 1.0 / (2.0 * grid.dx).sqrt();
        let mut modes = Vec::new();
        for (op, parity) in [(even, 1.0), (odd, -1.0)] {
            for (beta2, v) in op.eigenpairs_above(0.0) {
                let mut y = vec![0.0; n];
                for (k, vk) in v.iter().enumerate() {
                    y[half + k] = vk * norm;
                    y[half - 1 - k] = parity * vk * norm;
                }
                modes.push(Mode { beta: beta2.sqrt(), y });
            }
        }
        modes.sort_by(|a, b| b.beta.partial_cmp(&a.beta).expect("finite propagation constants"));
        modes
    }

    /// Löwdin-orthonormalized fundamental modes of the two port tapers.
    fn port_fields(&self, grid: &Grid, g: &MmiGeometry, nv: f64, nl: f64, k0: f64) -> [Vec<f64>; 2] {
        let inv = grid.inv_profile(g.port_offset_um(), 0.5 * g.taper_width_um, nv, nl);
        let (_, y) = lateral_operator(&inv, grid.dx, k0, None).largest_eigenpair();
        // back to H, then into the y-variable of the multimode section
        let mmi_inv = grid.inv_profile(0.0, 0.5 * g.width_um, nv, nl);
        let mut p: Vec<f64> = y.iter().zip(&inv).zip(&mmi_inv).map(|((v, a), b)| v * (b / a).sqrt()).collect();
        let peak = p.iter().copied().fold(0.0, |a: f64, b| if b.abs() > a.abs() { b } else { a });
        let s = peak.signum() / (p.iter().map(|v| v * v).sum::<f64>() * grid.dx).sqrt();
        p.iter_mut().for_each(|v| *v *= s);
        let q: Vec<f64> = p.iter().rev().copied().collect();
        let overlap = p.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() * grid.dx;
        let a = 0.5 * (1.0 / (1.0 + overlap).sqrt() + 1.0 / (1.0 - overlap).sqrt());
        let b = 0.5 * (1.0 / (1.0 + overlap).sqrt() - 1.0 / (1.0 - overlap).sqrt());
        let p1: Vec<f64> = p.iter().zip(&q).map(|(x, y)| a * x + b * y).collect();
        let p2: Vec<f64> = p1.iter().rev().copied().collect();
        [p1, p2]
    }
}

/// Loss and deviation maps over a square grid of FPV biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpvMap {
    pub dw_nm: Vec<f64>,
    pub dt_nm: Vec<f64>,
    /// Indexed `[i_dw][i_dt]`.
    pub loss_db: Vec<Vec<f64>>,
    pub deviation: Vec<Vec<f64>>,
    pub summary: FpvSummary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpvSummary {
    pub nominal_loss_db: f64,
    pub nominal_deviation: f64,
    pub min_loss_db: f64,
    pub max_loss_db: f64,
    pub min_deviation: f64,
    pub max_deviation: f64,
}

/// `n` evenly spaced points on `[-range, range]`; a single point sits at 0.
pub fn symmetric_axis(range: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.0];
    }
    let m = (n - 1) as f64;
    (0..n).map(|i| range * (2.0 * i as f64 - m) / m).collect()
}

pub fn fpv_map(model: &MmiModel, geom: &MmiGeometry, range_nm: f64, n: usize) -> Result<FpvMap> {
    if n == 0 {
        return Err(Error::InvalidInput("FPV grid needs at least one point".into()));
    }
    let axis = symmetric_axis(range_nm, n);
    let points: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let results: Vec<SplitResult> = points
        .par_iter()
        .map(|&(i, j)| model.transfer(geom, FpvDelta::new(axis[i], axis[j])?))
        .collect::<Result<_>>()?;
    let nominal = model.transfer(geom, FpvDelta::NONE)?;
    let mut loss_db = vec![vec![0.0; n]; n];
    let mut deviation = vec![vec![0.0; n]; n];
    for (&(i, j), r) in points.iter().zip(&results) {
        loss_db[i][j] = r.excess_loss.value();
        deviation[i][j] = r.deviation;
    }
    let flat = |m: &Vec<Vec<f64>>| m.iter().flatten().copied().collect::<Vec<f64>>();
    let (l, d) = (flat(&loss_db), flat(&deviation));
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let summary = FpvSummary {
        nominal_loss_db: nominal.excess_loss.value(),
        nominal_deviation: nominal.deviation,
        min_loss_db: min(&l),
        max_loss_db: max(&l),
        min_deviation: min(&d),
        max_deviation: max(&d),
    };
    Ok(FpvMap { dw_nm: axis.clone(), dt_nm: axis, loss_db, deviation, summary })
}
