//! Sb₂Se₃ optical constants from a Lorentz oscillator model, blended linearly
//! by crystalline fraction to give the response of a PCM-loaded strip waveguide.
//!
//! Phase is referenced to the fully amorphous state, so `Δφ(X_f = 0) = 0`.
//! A single multiplicative calibration scale is applied to the index
//! contrast; absorption is never scaled.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mode_solver::{effective_index_rect, Platform};
use crate::optics::{ComplexIndex, Db, C64};

/// Photon energy in eV times wavelength in µm.
pub const HC_EV_UM: f64 = 1.239_841_9;

/// Phase efficiency of the fully crystalline overlay targeted by calibration,
/// in rad/µm.
pub const TARGET_EFFICIENCY: f64 = 0.2 * PI;

/// Calibration scale for the shipped material data and default geometry at
/// 1.55 µm.
pub const DEFAULT_CALIBRATION_SCALE: f64 = 0.921_237_763;

/// Ratio beyond which a calibration is taken as a sign of bad material data.
pub const MAX_CALIBRATION_RATIO: f64 = 5.0;

/// One Lorentz term `f·E₀² / (E₀² − E² − iΓE)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Oscillator {
    pub strength: f64,
    pub resonance_ev: f64,
    pub damping_ev: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorentzParams {
    pub eps_inf: f64,
    #[serde(default)]
    pub oscillators: Vec<Oscillator>,
}

impl LorentzParams {
    pub fn constant(eps_inf: f64) -> Self {
        Self { eps_inf, oscillators: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.eps_inf.is_finite() {
            return Err(Error::InvalidInput("eps_inf must be finite".into()));
        }
        for o in &self.oscillators {
            if !(o.strength >= 0.0 && o.damping_ev >= 0.0 && o.resonance_ev > 0.0)
                || !(o.strength.is_finite() && o.damping_ev.is_finite() && o.resonance_ev.is_finite())
            {
                return Err(Error::InvalidInput(format!("invalid oscillator {o:?}")));
            }
        }
        Ok(())
    }

    /// Relative permittivity at `wavelength_um`.
    pub fn permittivity(&self, wavelength_um: f64) -> Result<C64> {
        if !(wavelength_um.is_finite() && wavelength_um > 0.0) {
            return Err(Error::Domain(format!("wavelength must be positive, got {wavelength_um}")));
        }
        self.validate()?;
        let e = HC_EV_UM / wavelength_um;
        let eps = self.oscillators.iter().fold(C64::new(self.eps_inf, 0.0), |acc, o| {
            let e0sq = o.resonance_ev * o.resonance_ev;
            acc + o.strength * e0sq / C64::new(e0sq - e * e, -o.damping_ev * e)
        });
        Ok(eps)
    }
}

/// Passive square root of a permittivity: `n > 0`, `k ≥ 0`.
pub fn index_from_permittivity(eps: C64) -> Result<ComplexIndex> {
    if eps.re <= 0.0 && eps.im == 0.0 {
        return Err(Error::Branch { re: eps.re, im: eps.im });
    }
    let r = eps.sqrt();
    let r = if r.re < 0.0 { -r } else { r };
    Ok(ComplexIndex::new(r.re, r.im.max(0.0)))
}

pub fn lorentz_index(params: &LorentzParams, wavelength_um: f64) -> Result<ComplexIndex> {
    index_from_permittivity(params.permittivity(wavelength_um)?)
}

/// Crystalline fraction of the PCM.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PcmState(f64);

impl PcmState {
    pub const AMORPHOUS: PcmState = PcmState(0.0);
    pub const CRYSTALLINE: PcmState = PcmState(1.0);

    pub fn new(x_f: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&x_f) {
            return Err(Error::Domain(format!("crystalline fraction must lie in [0, 1], got {x_f}")));
        }
        Ok(Self(x_f))
    }

    pub fn x_f(self) -> f64 {
        self.0
    }

    /// Snap to the nearest of `2^bits` evenly spaced levels.
    pub fn quantized(self, bits: u32) -> Self {
        if bits == 0 {
            return Self(if self.0 < 0.5 { 0.0 } else { 1.0 });
        }
        let levels = ((1u64 << bits.min(52)) - 1) as f64;
        Self((self.0 * levels).round() / levels)
    }
}

/// Sb₂Se₃ in both phases.
///
/// The shipped oscillator values are placeholders tuned to give a
/// transparent C-band with an amorphous index near 3.28 and a crystalline
/// index near 4.05; they are calibration data, not measurements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcmMaterial {
    pub amorphous: LorentzParams,
    pub crystalline: LorentzParams,
}

impl Default for PcmMaterial {
    fn default() -> Self {
        Self {
            amorphous: LorentzParams {
                eps_inf: 1.0,
                oscillators: vec![Oscillator { strength: 9.09, resonance_ev: 3.0, damping_ev: 2e-4 }],
            },
            crystalline: LorentzParams {
                eps_inf: 1.0,
                oscillators: vec![Oscillator { strength: 13.69, resonance_ev: 2.4, damping_ev: 1e-4 }],
            },
        }
    }
}

/// Linear effective medium: `ε = (1 − X_f)·ε_am + X_f·ε_cr`.
pub fn blend_state(
    amorphous: &LorentzParams,
    crystalline: &LorentzParams,
    state: PcmState,
    wavelength_um: f64,
) -> Result<ComplexIndex> {
    let x = state.x_f();
    let eps_am = amorphous.permittivity(wavelength_um)?;
    let eps_cr = crystalline.permittivity(wavelength_um)?;
    index_from_permittivity(eps_am * (1.0 - x) + eps_cr * x)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseShifterGeometry {
    pub length_um: f64,
    pub pcm_thickness_um: f64,
    pub width_um: f64,
    pub thickness_um: f64,
}

impl Default for PhaseShifterGeometry {
    fn default() -> Self {
        Self { length_um: 5.0, pcm_thickness_um: 0.070, width_um: 0.5, thickness_um: 0.22 }
    }
}

impl PhaseShifterGeometry {
    pub fn validate(&self) -> Result<()> {
        let all = [self.length_um, self.pcm_thickness_um, self.width_um, self.thickness_um];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidInput(format!("phase shifter dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Required scale on `Δn_eff` for a raw efficiency to hit `target` (both rad/µm).
pub fn calibration_scale(raw_efficiency: f64, target: f64) -> Result<f64> {
    if !(raw_efficiency.is_finite() && raw_efficiency > 0.0 && target > 0.0) {
        return Err(Error::CalibrationRejected(format!(
            "raw efficiency {raw_efficiency} rad/µm cannot be scaled to {target} rad/µm"
        )));
    }
    let scale = target / raw_efficiency;
    if !(1.0 / MAX_CALIBRATION_RATIO..=MAX_CALIBRATION_RATIO).contains(&scale) {
        return Err(Error::CalibrationRejected(format!(
            "raw efficiency {:.4}π rad/µm is more than {MAX_CALIBRATION_RATIO}× away from the target {:.4}π rad/µm",
            raw_efficiency / PI,
            target / PI
        )));
    }
    Ok(scale)
}

/// PCM-loaded strip waveguide segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseShifter {
    pub geometry: PhaseShifterGeometry,
    pub material: PcmMaterial,
    pub platform: Platform,
    pub calibration_scale: f64,
}

impl Default for PhaseShifter {
    fn default() -> Self {
        Self {
            geometry: PhaseShifterGeometry::default(),
            material: PcmMaterial::default(),
            platform: Platform::default(),
            calibration_scale: DEFAULT_CALIBRATION_SCALE,
        }
    }
}

impl PhaseShifter {
    pub fn with_length(mut self, length_um: f64) -> Self {
        self.geometry.length_um = length_um;
        self
    }

    pub fn overlay_index(&self, state: PcmState, wavelength_um: f64) -> Result<ComplexIndex> {
        blend_state(&self.material.amorphous, &self.material.crystalline, state, wavelength_um)
    }

    /// Complex effective index of the loaded waveguide.
    pub fn n_eff(&self, state: PcmState, wavelength_um: f64) -> Result<C64> {
        self.geometry.validate()?;
        let overlay = self.overlay_index(state, wavelength_um)?;
        let g = &self.geometry;
        effective_index_rect(
            &self.platform,
            g.width_um,
            g.thickness_um,
            wavelength_um,
            Some((overlay, g.pcm_thickness_um)),
        )
    }

    /// Uncalibrated index contrast relative to the amorphous state.
    pub fn raw_delta_n(&self, state: PcmState, wavelength_um: f64) -> Result<f64> {
        if state.x_f() == 0.0 {
            return Ok(0.0);
        }
        Ok(self.n_eff(state, wavelength_um)?.re - self.n_eff(PcmState::AMORPHOUS, wavelength_um)?.re)
    }

    /// Uncalibrated phase efficiency of the crystalline state, rad/µm.
    pub fn raw_efficiency(&self, wavelength_um: f64) -> Result<f64> {
        Ok(2.0 * PI / wavelength_um * self.raw_delta_n(PcmState::CRYSTALLINE, wavelength_um)?)
    }

    /// Calibrated phase efficiency of the crystalline state, rad/µm.
    pub fn efficiency(&self, wavelength_um: f64) -> Result<f64> {
        Ok(self.calibration_scale * self.raw_efficiency(wavelength_um)?)
    }

    /// Calibrated phase shift `Δφ(X_f)` over the segment length.
    pub fn phase_shift(&self, state: PcmState, wavelength_um: f64) -> Result<f64> {
        let dn = self.raw_delta_n(state, wavelength_um)?;
        Ok(self.calibration_scale * 2.0 * PI / wavelength_um * dn * self.geometry.length_um)
    }

    /// Absorption of the segment in power dB.
    pub fn insertion_loss(&self, state: PcmState, wavelength_um: f64) -> Result<Db> {
        let n = self.n_eff(state, wavelength_um)?;
        let alpha = 2.0 * PI / wavelength_um * n.im;
        Ok(Db(20.0 * std::f64::consts::LOG10_E * alpha * self.geometry.length_um))
    }

    /// Copy with the scale set so the crystalline efficiency equals `target`.
    pub fn calibrated(&self, target: f64, wavelength_um: f64) -> Result<Self> {
        let scale = calibration_scale(self.raw_efficiency(wavelength_um)?, target)?;
        Ok(Self { calibration_scale: scale, ..self.clone() })
    }

    /// Segment length giving phase `theta` in the crystalline state.
    pub fn length_for_phase(&self, theta: f64, wavelength_um: f64) -> Result<f64> {
        Ok(theta / self.efficiency(wavelength_um)?)
    }
}

/// One point of the phase-shifter design-space sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub pcm_thickness_um: f64,
    pub width_um: f64,
    /// Calibrated crystalline efficiency in units of π rad/µm.
    pub efficiency_pi_per_um: f64,
    /// Length needed for a π shift.
    pub l_pi_um: f64,
    /// Crystalline-state loss of an `l_pi_um` segment.
    pub loss_db: f64,
}

/// Sweep PCM thickness and waveguide width, evaluated in parallel.
pub fn design_sweep(
    base: &PhaseShifter,
    thicknesses_um: &[f64],
    widths_um: &[f64],
    wavelength_um: f64,
) -> Result<Vec<DesignPoint>> {
    let grid: Vec<(f64, f64)> = thicknesses_um.iter().flat_map(|&t| widths_um.iter().map(move |&w| (t, w))).collect();
    grid.par_iter()
        .map(|&(t, w)| {
            let mut ps = base.clone();
            ps.geometry.pcm_thickness_um = t;
            ps.geometry.width_um = w;
            let eff = ps.efficiency(wavelength_um)?;
            let l_pi = PI / eff;
            let loss = ps.with_length(l_pi).insertion_loss(PcmState::CRYSTALLINE, wavelength_um)?;
            Ok(DesignPoint {
                pcm_thickness_um: t,
                width_um: w,
                efficiency_pi_per_um: eff / PI,
                l_pi_um: l_pi,
                loss_db: loss.value(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_permittivity() {
        let idx = lorentz_index(&LorentzParams::constant(4.0), 1.55).unwrap();
        assert_eq!(idx.n, 2.0);
        assert_eq!(idx.k, 0.0);
    }

    #[test]
    fn negative_real_permittivity_is_rejected() {
        assert!(matches!(lorentz_index(&LorentzParams::constant(-2.0), 1.55), Err(Error::Branch { .. })));
        assert!(lorentz_index(&LorentzParams::constant(2.0), 0.0).is_err());
    }

    #[test]
    fn single_oscillator_matches_real_arithmetic() {
        let p = LorentzParams {
            eps_inf: 1.0,
            oscillators: vec![Oscillator { strength: 1.0, resonance_ev: 3.0, damping_ev: 0.1 }],
        };
        let e = HC_EV_UM / 1.55;
        let a = 9.0 - e * e;
        let b = 0.1 * e;
        let re = 1.0 + 9.0 * a / (a * a + b * b);
        let im = 9.0 * b / (a * a + b * b);
        let mag = (re * re + im * im).sqrt();
        let n = ((mag + re) / 2.0).sqrt();
        let k = ((mag - re) / 2.0).sqrt();
        let idx = lorentz_index(&p, 1.55).unwrap();
        assert!((idx.n - n).abs() < 1e-14 && (idx.k - k).abs() < 1e-14);
        assert!((idx.n - 1.440_989).abs() < 1e-6, "{}", idx.n);
    }

    #[test]
    fn blend_endpoints_and_midpoint() {
        let m = PcmMaterial::default();
        let am = lorentz_index(&m.amorphous, 1.55).unwrap();
        let cr = lorentz_index(&m.crystalline, 1.55).unwrap();
        assert_eq!(blend_state(&m.amorphous, &m.crystalline, PcmState::AMORPHOUS, 1.55).unwrap(), am);
        assert_eq!(blend_state(&m.amorphous, &m.crystalline, PcmState::CRYSTALLINE, 1.55).unwrap(), cr);
        let mid = blend_state(&m.amorphous, &m.crystalline, PcmState::new(0.5).unwrap(), 1.55).unwrap();
        let eps = 0.5 * (am.permittivity() + cr.permittivity());
        assert!((mid.permittivity() - eps).norm() < 1e-12);
    }

    #[test]
    fn state_domain() {
        assert!(PcmState::new(1.2).is_err());
        assert!(PcmState::new(-0.1).is_err());
        assert_eq!(PcmState::new(0.49).unwrap().quantized(1).x_f(), 0.0);
        assert_eq!(PcmState::new(0.34).unwrap().quantized(2).x_f(), 1.0 / 3.0);
    }

    #[test]
    fn calibration_ratio() {
        assert_eq!(calibration_scale(0.2 * PI, TARGET_EFFICIENCY).unwrap(), 1.0);
        assert!((calibration_scale(0.1 * PI, TARGET_EFFICIENCY).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(calibration_scale(0.03 * PI, TARGET_EFFICIENCY), Err(Error::CalibrationRejected(_))));
        assert!(matches!(calibration_scale(1.2 * PI, TARGET_EFFICIENCY), Err(Error::CalibrationRejected(_))));
    }

    #[test]
    fn amorphous_reference_has_zero_phase() {
        let ps = PhaseShifter::default();
        assert_eq!(ps.phase_shift(PcmState::AMORPHOUS, 1.55).unwrap(), 0.0);
    }
}
