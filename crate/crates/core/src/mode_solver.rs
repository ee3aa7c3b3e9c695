//! Guided modes of planar multilayer slabs and the two-step effective-index
//! reduction of rectangular SOI waveguides.
//!
//! Modes are located by scanning the dispersion residual on a fixed
//! 2000-point grid of trial indices and bisecting every sign change. The
//! residual is built from the transverse field transfer through each layer,
//! so it is entire in `n_eff` and every zero is a guided mode.
//!
//! Material absorption is carried to first order: the real-index problem is
//! solved exactly and `Im(n_eff) = Σ n_j k_j Γ_j / n_eff`, where `Γ_j` is the
//! fraction of the squared transverse field in layer `j`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{ComplexIndex, C64};

/// Points of the trial-index grid used to bracket roots.
pub const ROOT_GRID_POINTS: usize = 2000;
/// Offset of the scan endpoints from the cladding and core indices.
pub const ROOT_GRID_MARGIN: f64 = 1e-6;
/// Bisection stops once the normalized residual falls below this.
pub const ROOT_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    Te,
    Tm,
}

/// Refractive indices of the SOI platform at the working wavelength.
///
/// `lateral_index` is the cladding seen beside a strip waveguide in the
/// second (in-plane) step of the effective-index method.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Platform {
    pub core_index: f64,
    pub substrate_index: f64,
    pub superstrate_index: f64,
    pub lateral_index: f64,
}

impl Default for Platform {
    fn default() -> Self {
        Self {
            core_index: SILICON_INDEX,
            substrate_index: OXIDE_INDEX,
            superstrate_index: OXIDE_INDEX,
            lateral_index: OXIDE_INDEX,
        }
    }
}

pub const SILICON_INDEX: f64 = 3.476;
pub const OXIDE_INDEX: f64 = 1.444;
pub const AIR_INDEX: f64 = 1.0;

impl Platform {
    /// Oxide substrate with air above and beside the core.
    pub fn air_clad() -> Self {
        Self { superstrate_index: AIR_INDEX, lateral_index: AIR_INDEX, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.core_index, self.substrate_index, self.superstrate_index, self.lateral_index];
        if all.iter().any(|n| !(n.is_finite() && *n > 0.0)) {
            return Err(Error::InvalidInput(format!("platform indices must be positive: {self:?}")));
        }
        if self.core_index <= self.substrate_index.max(self.superstrate_index).max(self.lateral_index) {
            return Err(Error::InvalidInput("core index must exceed every cladding index".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabLayer {
    pub thickness_um: f64,
    pub index: ComplexIndex,
}

/// Planar stack: semi-infinite substrate, finite layers bottom to top,
/// semi-infinite superstrate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabStack {
    pub substrate: ComplexIndex,
    pub layers: Vec<SlabLayer>,
    pub superstrate: ComplexIndex,
    pub wavelength_um: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSolution {
    pub order: usize,
    pub n_eff: f64,
    pub polarization: Polarization,
}

impl SlabStack {
    /// Three-layer slab: core of thickness `t` between two claddings.
    pub fn symmetric_core(substrate: f64, core: f64, superstrate: f64, thickness_um: f64, wavelength_um: f64) -> Self {
        Self {
            substrate: ComplexIndex::lossless(substrate),
            layers: vec![SlabLayer { thickness_um, index: ComplexIndex::lossless(core) }],
            superstrate: ComplexIndex::lossless(superstrate),
            wavelength_um,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength_um.is_finite() && self.wavelength_um > 0.0) {
            return Err(Error::InvalidInput(format!("wavelength must be positive, got {}", self.wavelength_um)));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidInput("slab needs at least one finite layer".into()));
        }
        for l in &self.layers {
            if !(l.thickness_um.is_finite() && l.thickness_um > 0.0) {
                return Err(Error::InvalidInput(format!("layer thickness must be positive, got {}", l.thickness_um)));
            }
        }
        let indices = self.layers.iter().map(|l| l.index).chain([self.substrate, self.superstrate]);
        for idx in indices {
            if !(idx.n.is_finite() && idx.n > 0.0 && idx.k >= 0.0) {
                return Err(Error::InvalidInput(format!("invalid layer index {idx:?}")));
            }
        }
        Ok(())
    }

    pub fn cladding_index(&self) -> f64 {
        self.substrate.n.max(self.superstrate.n)
    }

    pub fn core_index(&self) -> f64 {
        self.layers.iter().map(|l| l.index.n).fold(f64::NEG_INFINITY, f64::max)
    }

    fn k0(&self) -> f64 {
        2.0 * PI / self.wavelength_um
    }

    fn weight(pol: Polarization, n: f64) -> f64 {
        match pol {
            Polarization::Te => 1.0,
            Polarization::Tm => 1.0 / (n * n),
        }
    }

    /// Field `F` and weighted derivative `w·F'` at the top of every layer,
    /// starting from a unit decaying field in the substrate.
    fn transfer(&self, n_eff: f64, pol: Polarization) -> (Vec<(f64, f64)>, f64) {
        let k0 = self.k0();
        let ns = self.substrate.n;
        let gamma_sub = k0 * (n_eff * n_eff - ns * ns).max(0.0).sqrt();
        let mut f = 1.0;
        let mut d = Self::weight(pol, ns) * gamma_sub;
        let mut tops = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            (f, d) = propagate_layer(f, d, layer.index.n, n_eff, k0, layer.thickness_um, pol);
            tops.push((f, d));
        }
        (tops, gamma_sub)
    }

    /// Normalized dispersion residual; zero exactly at guided modes.
    pub fn dispersion_residual(&self, n_eff: f64, pol: Polarization) -> f64 {
        let k0 = self.k0();
        let (tops, _) = self.transfer(n_eff, pol);
        let (f, d) = *tops.last().expect("validated stack has layers");
        let nt = self.superstrate.n;
        let gamma_top = k0 * (n_eff * n_eff - nt * nt).max(0.0).sqrt();
        let w_ref = Self::weight(pol, self.core_index());
        (d + Self::weight(pol, nt) * gamma_top * f) / (k0 * w_ref)
    }

    /// Fraction of `∫F²` held by each region: substrate, each layer, superstrate.
    pub fn field_fractions(&self, n_eff: f64, pol: Polarization) -> Vec<f64> {
        let k0 = self.k0();
        let (tops, gamma_sub) = self.transfer(n_eff, pol);
        let mut parts = Vec::with_capacity(self.layers.len() + 2);
        parts.push(1.0 / (2.0 * gamma_sub));
        let mut f = 1.0;
        let mut d = Self::weight(pol, self.substrate.n) * gamma_sub;
        const STEPS: usize = 256;
        for (layer, top) in self.layers.iter().zip(&tops) {
            let h = layer.thickness_um / STEPS as f64;
            let mut acc = 0.0;
            for s in 0..=STEPS {
                let (fx, _) = propagate_layer(f, d, layer.index.n, n_eff, k0, h * s as f64, pol);
                let w = if s == 0 || s == STEPS {
                    1.0
                } else if s % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                acc += w * fx * fx;
            }
            parts.push(acc * h / 3.0);
            (f, d) = *top;
        }
        let nt = self.superstrate.n;
        let gamma_top = k0 * (n_eff * n_eff - nt * nt).max(0.0).sqrt();
        parts.push(f * f / (2.0 * gamma_top));
        let total: f64 = parts.iter().sum();
        parts.iter().map(|p| p / total).collect()
    }

    /// First-order absorption: imaginary part of `n_eff` from the layer `k`s.
    pub fn absorption_index(&self, n_eff: f64, pol: Polarization) -> f64 {
        let fractions = self.field_fractions(n_eff, pol);
        let indices = std::iter::once(self.substrate)
            .chain(self.layers.iter().map(|l| l.index))
            .chain(std::iter::once(self.superstrate));
        indices.zip(fractions).map(|(idx, g)| idx.n * idx.k * g).sum::<f64>() / n_eff
    }
}

fn propagate_layer(f: f64, d: f64, n_layer: f64, n_eff: f64, k0: f64, t: f64, pol: Polarization) -> (f64, f64) {
    let w = SlabStack::weight(pol, n_layer);
    let q2 = k0 * k0 * (n_layer * n_layer - n_eff * n_eff);
    if q2 > 0.0 {
        let q = q2.sqrt();
        let (s, c) = (q * t).sin_cos();
        (f * c + d / (w * q) * s, -f * w * q * s + d * c)
    } else if q2 < 0.0 {
        let p = (-q2).sqrt();
        let (s, c) = ((p * t).sinh(), (p * t).cosh());
        (f * c + d / (w * p) * s, f * w * p * s + d * c)
    } else {
        (f + d / w * t, d)
    }
}

/// All guided modes of `stack` for one polarization, highest index first.
/// An empty list means the stack guides nothing.
pub fn solve_slab_modes(stack: &SlabStack, pol: Polarization) -> Result<Vec<ModeSolution>> {
    stack.validate()?;
    let lo = stack.cladding_index() + ROOT_GRID_MARGIN;
    let hi = stack.core_index() - ROOT_GRID_MARGIN;
    if hi <= lo {
        return Ok(Vec::new());
    }
    let step = (hi - lo) / (ROOT_GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..ROOT_GRID_POINTS).map(|i| lo + step * i as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&n| stack.dispersion_residual(n, pol)).collect();
    let mut roots = Vec::new();
    for i in 0..grid.len() - 1 {
        let (fa, fb) = (values[i], values[i + 1]);
        if fa == 0.0 {
            roots.push(grid[i]);
        } else if fa.signum() != fb.signum() && fb != 0.0 {
            roots.push(bisect(|n| stack.dispersion_residual(n, pol), grid[i], grid[i + 1], fa));
        }
    }
    if values.last() == Some(&0.0) {
        roots.push(hi);
    }
    roots.sort_by(|a, b| b.partial_cmp(a).expect("finite roots"));
    Ok(roots.into_iter().enumerate().map(|(order, n_eff)| ModeSolution { order, n_eff, polarization: pol }).collect())
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    let mut best = (f64::INFINITY, 0.5 * (a + b));
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid);
        if fm.abs() < best.0 {
            best = (fm.abs(), mid);
        }
        if fm.abs() < ROOT_TOLERANCE {
            return mid;
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    best.1
}

fn fundamental(stack: &SlabStack, pol: Polarization, what: &str) -> Result<f64> {
    solve_slab_modes(stack, pol)?
        .first()
        .map(|m| m.n_eff)
        .ok_or_else(|| Error::NoGuidedMode(format!("{what} ({pol:?}, λ = {} µm)", stack.wavelength_um)))
}

/// Vertical slab of the SOI core with an optional overlay layer (index and
/// thickness) between the core and the superstrate. Quasi-TE fundamental.
pub fn vertical_slab(
    platform: &Platform,
    thickness_um: f64,
    wavelength_um: f64,
    overlay: Option<(ComplexIndex, f64)>,
) -> SlabStack {
    let mut layers = vec![SlabLayer { thickness_um, index: ComplexIndex::lossless(platform.core_index) }];
    if let Some((index, t)) = overlay {
        layers.push(SlabLayer { thickness_um: t, index });
    }
    SlabStack {
        substrate: ComplexIndex::lossless(platform.substrate_index),
        layers,
        superstrate: ComplexIndex::lossless(platform.superstrate_index),
        wavelength_um,
    }
}

/// Effective index of the vertical slab: real part exact, imaginary part
/// from first-order absorption.
pub fn vertical_slab_index(
    platform: &Platform,
    thickness_um: f64,
    wavelength_um: f64,
    overlay: Option<(ComplexIndex, f64)>,
) -> Result<C64> {
    let stack = vertical_slab(platform, thickness_um, wavelength_um, overlay);
    let n = fundamental(&stack, Polarization::Te, "vertical slab")?;
    Ok(C64::new(n, stack.absorption_index(n, Polarization::Te)))
}

/// Two-step effective-index method for a strip of `width_um × thickness_um`
/// (quasi-TE): the vertical TE slab index becomes the core of a lateral TM
/// slab of width `width_um` clad by `platform.lateral_index`.
pub fn effective_index_rect(
    platform: &Platform,
    width_um: f64,
    thickness_um: f64,
    wavelength_um: f64,
    overlay: Option<(ComplexIndex, f64)>,
) -> Result<C64> {
    if !(width_um > 0.0 && thickness_um > 0.0) {
        return Err(Error::InvalidInput(format!("waveguide dimensions must be positive: {width_um} × {thickness_um}")));
    }
    if let Some((idx, t)) = overlay {
        if !(t > 0.0 && idx.n > 0.0 && idx.k >= 0.0) {
            return Err(Error::InvalidInput(format!("invalid overlay {idx:?}, {t} µm")));
        }
    }
    let vertical = vertical_slab_index(platform, thickness_um, wavelength_um, overlay)?;
    let lateral = SlabStack {
        substrate: ComplexIndex::lossless(platform.lateral_index),
        layers: vec![SlabLayer { thickness_um: width_um, index: ComplexIndex::new(vertical.re, vertical.im) }],
        superstrate: ComplexIndex::lossless(platform.lateral_index),
        wavelength_um,
    };
    let n = fundamental(&lateral, Polarization::Tm, "lateral slab")?;
    // TODO: the TM step reuses the |H|² weighting for absorption; an E-field
    // weighted overlap would tighten Im(n_eff) for high-contrast sidewalls.
    Ok(C64::new(n, lateral.absorption_index(n, Polarization::Tm)))
}
