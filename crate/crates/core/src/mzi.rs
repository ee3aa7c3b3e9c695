//! Mach–Zehnder interferometer built from two 2×2 splitters, an input phase
//! `φ` on port 1 and a PCM phase shifter giving `θ` on the upper arm.
//!
//! `T = M_c · diag(a·e^{iθ}, a) · M_s · diag(e^{iφ}, 1)`. With ideal couplers
//! this is `i·e^{iθ/2}·[[e^{iφ}·sin(θ/2), cos(θ/2)], [e^{iφ}·cos(θ/2), −sin(θ/2)]]`,
//! so `θ = 0` is the cross state and `θ = π` the bar state.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mmi::{FpvDelta, MmiGeometry, MmiModel};
use crate::optics::{db_to_amplitude, Db, TransferMatrix2x2, C64, I};
use crate::pcm::{PcmState, PhaseShifter};

/// Reported crosstalk when the unintended port receives no power.
pub const CROSSTALK_FLOOR_DB: f64 = -120.0;
/// Smallest arm spacing that keeps the heaters thermally isolated.
pub const MIN_ARM_SEPARATION_UM: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum SplitterMode {
    /// `(1/√2)[[1, i], [i, 1]]` for both couplers.
    Ideal,
    /// Modal-propagation surrogate of the configured geometries.
    Surrogate,
    /// The same fixed matrix for both couplers.
    Fixed { matrix: [[[f64; 2]; 2]; 2] },
}

impl SplitterMode {
    pub fn fixed(m: TransferMatrix2x2) -> Self {
        let e = |z: C64| [z.re, z.im];
        SplitterMode::Fixed { matrix: [[e(m.m[0][0]), e(m.m[0][1])], [e(m.m[1][0]), e(m.m[1][1])]] }
    }
}

fn matrix_from_parts(p: &[[[f64; 2]; 2]; 2]) -> TransferMatrix2x2 {
    let c = |v: [f64; 2]| C64::new(v[0], v[1]);
    TransferMatrix2x2::new(c(p[0][0]), c(p[0][1]), c(p[1][0]), c(p[1][1]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MziConfig {
    pub splitter: MmiGeometry,
    pub combiner: MmiGeometry,
    pub phase_shifter: PhaseShifter,
    pub mmi_model: MmiModel,
    pub splitter_mode: SplitterMode,
    pub wavelength_um: f64,
    pub arm_separation_um: f64,
    pub s_bend_length_um: f64,
    /// Loss of each S-bend; every arm passes two.
    pub s_bend_loss_db: f64,
}

impl Default for MziConfig {
    fn default() -> Self {
        Self {
            splitter: MmiGeometry::NOMINAL,
            combiner: MmiGeometry::NOMINAL,
            phase_shifter: PhaseShifter::default(),
            mmi_model: MmiModel::default(),
            splitter_mode: SplitterMode::Surrogate,
            wavelength_um: 1.55,
            arm_separation_um: MIN_ARM_SEPARATION_UM,
            s_bend_length_um: 8.0,
            s_bend_loss_db: 0.0,
        }
    }
}

impl MziConfig {
    pub fn ideal() -> Self {
        Self { splitter_mode: SplitterMode::Ideal, ..Self::default() }
    }

    pub fn with_mode(self, splitter_mode: SplitterMode) -> Self {
        Self { splitter_mode, ..self }
    }

    /// Splitter, bend, phase shifter, bend, combiner.
    pub fn total_length_um(&self) -> f64 {
        self.splitter.length_um
            + self.combiner.length_um
            + 2.0 * self.s_bend_length_um
            + self.phase_shifter.geometry.length_um
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.arm_separation_um >= MIN_ARM_SEPARATION_UM) {
            return Err(Error::InvalidInput(format!(
                "arm separation {} µm is below the {MIN_ARM_SEPARATION_UM} µm thermal spacing rule",
                self.arm_separation_um
            )));
        }
        if !(self.s_bend_length_um > 0.0 && self.s_bend_loss_db >= 0.0) {
            return Err(Error::InvalidInput("S-bend length must be positive and its loss non-negative".into()));
        }
        if !(self.wavelength_um.is_finite() && self.wavelength_um > 0.0) {
            return Err(Error::InvalidInput(format!("wavelength must be positive, got {}", self.wavelength_um)));
        }
        self.splitter.validate()?;
        self.combiner.validate()?;
        self.phase_shifter.geometry.validate()?;
        self.mmi_model.validate()?;
        if let SplitterMode::Fixed { matrix } = &self.splitter_mode {
            let m = matrix_from_parts(matrix);
            if !m.is_finite() || m.spectral_norm() > 1.0 + 1e-9 {
                return Err(Error::InvalidInput("fixed splitter matrix must be finite and passive".into()));
            }
        }
        Ok(())
    }

    /// Splitter and combiner matrices for the configured mode.
    pub fn couplers(&self, fpv: FpvDelta) -> Result<(TransferMatrix2x2, TransferMatrix2x2)> {
        match &self.splitter_mode {
            SplitterMode::Ideal => Ok((TransferMatrix2x2::ideal_splitter(), TransferMatrix2x2::ideal_splitter())),
            SplitterMode::Fixed { matrix } => {
                let m = matrix_from_parts(matrix);
                Ok((m, m))
            }
            SplitterMode::Surrogate => {
                let model = self.mmi_model.at_wavelength(self.wavelength_um);
                let s = model.transfer(&self.splitter, fpv)?.matrix;
                let c = if self.combiner == self.splitter { s } else { model.transfer(&self.combiner, fpv)?.matrix };
                Ok((s, c))
            }
        }
    }

    /// Common arm amplitude: two S-bends plus the amorphous PCM segment.
    ///
    /// The lower arm keeps its PCM amorphous, so absorption common to both
    /// arms is referenced to that state. Ideal mode has lossless arms.
    pub fn arm_amplitude(&self) -> Result<f64> {
        if self.splitter_mode == SplitterMode::Ideal {
            return db_to_amplitude(2.0 * self.s_bend_loss_db);
        }
        let pcm = self.phase_shifter.insertion_loss(PcmState::AMORPHOUS, self.wavelength_um)?;
        db_to_amplitude(2.0 * self.s_bend_loss_db + pcm.value())
    }

    /// Device matrix for a state and FPV bias.
    pub fn transfer(&self, state: MziState, fpv: FpvDelta) -> Result<TransferMatrix2x2> {
        let (s, c) = self.couplers(fpv)?;
        Ok(assemble(&s, &c, self.arm_amplitude()?, state))
    }

    /// Arm phase produced by a crystalline fraction on the configured shifter.
    pub fn theta_for(&self, state: PcmState) -> Result<f64> {
        self.phase_shifter.phase_shift(state, self.wavelength_um)
    }
}

/// `M_c · diag(a·e^{iθ}, a) · M_s · diag(e^{iφ}, 1)`.
pub fn assemble(
    splitter: &TransferMatrix2x2,
    combiner: &TransferMatrix2x2,
    arm_amplitude: f64,
    state: MziState,
) -> TransferMatrix2x2 {
    let arms = TransferMatrix2x2::diag(C64::from_polar(arm_amplitude, state.theta), C64::from(arm_amplitude));
    let input = TransferMatrix2x2::diag(C64::from_polar(1.0, state.phi), C64::from(1.0));
    *combiner * arms * *splitter * input
}

/// Closed form of the ideal-coupler device.
pub fn ideal_transfer(theta: f64, phi: f64) -> TransferMatrix2x2 {
    let g = I * C64::from_polar(1.0, theta / 2.0);
    let ep = C64::from_polar(1.0, phi);
    let (s, c) = (theta / 2.0).sin_cos();
    TransferMatrix2x2::new(g * ep * s, g * c, g * ep * c, -g * s)
}

/// Arm phase `θ` and input phase `φ`, in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MziState {
    pub theta: f64,
    pub phi: f64,
}

impl MziState {
    pub const CROSS: MziState = MziState { theta: 0.0, phi: 0.0 };
    pub const BAR: MziState = MziState { theta: PI, phi: 0.0 };

    /// Both phases must lie in `[0, 2π)`.
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        let ok = |v: f64| (0.0..2.0 * PI).contains(&v);
        if !(ok(theta) && ok(phi)) {
            return Err(Error::Domain(format!("phases must lie in [0, 2π), got θ = {theta}, φ = {phi}")));
        }
        Ok(Self { theta, phi })
    }

    /// State reached by programming the arm PCM to `x_theta`.
    pub fn from_pcm(config: &MziConfig, x_theta: PcmState, phi: f64) -> Result<Self> {
        let theta = config.theta_for(x_theta)?;
        Ok(Self { theta, phi })
    }
}

/// Worst case over the cross and bar states of the total output power
/// lost, for unit input at port 1.
pub fn insertion_loss(config: &MziConfig, fpv: FpvDelta) -> Result<Db> {
    let (s, c) = config.couplers(fpv)?;
    let a = config.arm_amplitude()?;
    let worst = [MziState::CROSS, MziState::BAR]
        .iter()
        .map(|&st| {
            let t = assemble(&s, &c, a, st);
            Db::loss_from_transmission(t.t11().norm_sqr() + t.t21().norm_sqr()).value()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Db(worst))
}

/// Power in the unintended port relative to the intended one, for input
/// port 1, in the bar state and the cross state; both in dB.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkPair {
    pub bar_db: f64,
    pub cross_db: f64,
}

impl CrosstalkPair {
    pub fn worst(&self) -> Db {
        Db(self.bar_db.max(self.cross_db))
    }
}

fn leakage_db(unintended: f64, intended: f64, which: &str) -> Result<f64> {
    if !(intended > 0.0) {
        return Err(Error::DegenerateState(format!("no power reaches the intended port in the {which} state")));
    }
    Ok((10.0 * (unintended / intended).log10()).max(CROSSTALK_FLOOR_DB))
}

pub fn crosstalk_pair(config: &MziConfig, fpv: FpvDelta) -> Result<CrosstalkPair> {
    let (s, c) = config.couplers(fpv)?;
    pair_from(&s, &c, config.arm_amplitude()?)
}

fn pair_from(s: &TransferMatrix2x2, c: &TransferMatrix2x2, a: f64) -> Result<CrosstalkPair> {
    let bar = assemble(s, c, a, MziState::BAR);
    let cross = assemble(s, c, a, MziState::CROSS);
    Ok(CrosstalkPair {
        bar_db: leakage_db(bar.t21().norm_sqr(), bar.t11().norm_sqr(), "bar")?,
        cross_db: leakage_db(cross.t11().norm_sqr(), cross.t21().norm_sqr(), "cross")?,
    })
}

/// Figures of merit of one device realization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MziMetrics {
    pub insertion_loss_db: f64,
    pub crosstalk: CrosstalkPair,
    /// Splitting deviation of the input coupler.
    pub splitter_deviation: f64,
}

/// Device figures of merit computed from a single coupler evaluation.
pub fn metrics(config: &MziConfig, fpv: FpvDelta) -> Result<MziMetrics> {
    let (s, c) = config.couplers(fpv)?;
    let a = config.arm_amplitude()?;
    let loss = [MziState::CROSS, MziState::BAR]
        .iter()
        .map(|&st| {
            let t = assemble(&s, &c, a, st);
            Db::loss_from_transmission(t.t11().norm_sqr() + t.t21().norm_sqr()).value()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let (bar, cross) = (s.t11().norm_sqr(), s.t21().norm_sqr());
    Ok(MziMetrics {
        insertion_loss_db: loss,
        crosstalk: pair_from(&s, &c, a)?,
        splitter_deviation: bar / (bar + cross) - 0.5,
    })
}

/// Crosstalk coefficient: the worse of the bar-state and cross-state
/// leakage. A mirror-symmetric splitter pair extinguishes the bar state
/// exactly, so the cross state carries the splitting imbalance.
pub fn crosstalk_coefficient(config: &MziConfig, fpv: FpvDelta) -> Result<Db> {
    Ok(crosstalk_pair(config, fpv)?.worst())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransmissionPoint {
    pub x_f: f64,
    pub theta: f64,
    pub p_bar: f64,
    pub p_cross: f64,
}

/// Output powers for unit input at port 1 as the arm PCM crystallizes.
///
/// Ideal mode drives `θ = π·X_f`, the linearized shifter; the other modes
/// use the calibrated phase-shifter model.
pub fn transmission_vs_xf(config: &MziConfig, n_points: usize) -> Result<Vec<TransmissionPoint>> {
    if n_points < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 points, got {n_points}")));
    }
    config.validate()?;
    let (s, c) = config.couplers(FpvDelta::NONE)?;
    let a = config.arm_amplitude()?;
    (0..n_points)
        .map(|i| {
            let x = i as f64 / (n_points - 1) as f64;
            let theta = match config.splitter_mode {
                SplitterMode::Ideal => PI * x,
                _ => config.theta_for(PcmState::new(x)?)?,
            };
            let t = assemble(&s, &c, a, MziState { theta, phi: 0.0 });
            Ok(TransmissionPoint { x_f: x, theta, p_bar: t.t11().norm_sqr(), p_cross: t.t21().norm_sqr() })
        })
        .collect()
}
