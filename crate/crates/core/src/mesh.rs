//! Rectangular (Clements) meshes of MZIs. Unitaries decompose into phase
//! programs, and programs propagate fields through ideal or imperfect hardware.
//!
//! Every MZI uses the device convention of [`crate::mzi`]:
//! `T(θ, φ) = i·e^{iθ/2}·[[e^{iφ}·sin(θ/2), cos(θ/2)], [e^{iφ}·cos(θ/2), −sin(θ/2)]]`,
//! acting on channels `(k, k + 1)`. Column `c` holds the MZIs whose top
//! channel has the parity of `c`, and there are `N` columns.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{unitarity_residual, CMatrix};
use crate::mzi::{assemble, ideal_transfer, MziState};
use crate::optics::{db_to_amplitude, TransferMatrix2x2, C64};

/// Largest `‖U†U − I‖_F` accepted by [`decompose`].
pub const UNITARITY_TOLERANCE: f64 = 1e-8;

/// Placement of MZIs in a rectangular mesh.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshLayout {
    pub n: usize,
    /// Top channel of every MZI, per column.
    pub columns: Vec<Vec<usize>>,
}

impl MeshLayout {
    pub fn rectangular(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(format!("a mesh needs at least 2 channels, got {n}")));
        }
        let columns = (0..n).map(|c| (c % 2..n - 1).step_by(2).collect()).collect();
        Ok(Self { n, columns })
    }

    pub fn mzi_count(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    /// `(column, top channel)` of every MZI in storage order.
    pub fn placements(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.columns.iter().enumerate().flat_map(|(c, chans)| chans.iter().map(move |&k| (c, k)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MziPhases {
    pub theta: f64,
    pub phi: f64,
}

/// Phase program of a mesh, MZIs listed in [`MeshLayout::placements`] order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshParams {
    pub n: usize,
    pub mzis: Vec<MziPhases>,
    pub output_phases: Vec<f64>,
}

/// One row of the flat export of a phase program.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MziRecord {
    pub k: usize,
    pub column: usize,
    pub channel: usize,
    pub theta: f64,
    pub phi: f64,
}

impl MeshParams {
    pub fn records(&self, layout: &MeshLayout) -> Vec<MziRecord> {
        layout
            .placements()
            .zip(&self.mzis)
            .enumerate()
            .map(|(k, ((column, channel), p))| MziRecord { k, column, channel, theta: p.theta, phi: p.phi })
            .collect()
    }

    fn check(&self, layout: &MeshLayout) -> Result<()> {
        if self.n != layout.n {
            return Err(Error::SizeMismatch { expected: layout.n, actual: self.n });
        }
        if self.mzis.len() != layout.mzi_count() {
            return Err(Error::SizeMismatch { expected: layout.mzi_count(), actual: self.mzis.len() });
        }
        if self.output_phases.len() != layout.n {
            return Err(Error::SizeMismatch { expected: layout.n, actual: self.output_phases.len() });
        }
        Ok(())
    }
}

fn wrap_2pi(x: f64) -> f64 {
    let w = x.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

fn unit(z: C64) -> C64 {
    let n = z.norm();
    if n > 0.0 {
        z / n
    } else {
        C64::new(1.0, 0.0)
    }
}

/// Factor `M = diag(d1, d2)·T(θ, φ)` for a unitary 2×2 `M`.
fn factor_left(m: &TransferMatrix2x2) -> (C64, C64, f64, f64) {
    let theta = 2.0 * m.t11().norm().atan2(m.t12().norm());
    let (s, c) = (theta / 2.0).sin_cos();
    let g = C64::new(0.0, 1.0) * C64::from_polar(1.0, theta / 2.0);
    // phases of d1, d2 are only ever needed to the accuracy of the entry
    // they multiply, so take them from whichever entry is nonzero
    let d1 = if m.t12().norm() > 0.0 { unit(m.t12() / g) } else { unit(m.t11() / g) };
    let d2 = if m.t22().norm() > 0.0 { unit(-m.t22() / g) } else { unit(m.t21() / g) };
    let phi = if c >= s { (m.t21() / (g * d2)).arg() } else { (m.t11() / (g * d1)).arg() };
    (d1, d2, theta, wrap_2pi(phi))
}

fn mzi_block(p: MziPhases) -> TransferMatrix2x2 {
    ideal_transfer(p.theta, p.phi)
}

fn apply_rows(u: &mut CMatrix, r: usize, t: &TransferMatrix2x2) {
    for j in 0..u.ncols() {
        let (a, b) = (u[(r, j)], u[(r + 1, j)]);
        u[(r, j)] = t.m[0][0] * a + t.m[0][1] * b;
        u[(r + 1, j)] = t.m[1][0] * a + t.m[1][1] * b;
    }
}

fn apply_cols_dagger(u: &mut CMatrix, c: usize, t: &TransferMatrix2x2) {
    let td = t.dagger();
    for i in 0..u.nrows() {
        let (a, b) = (u[(i, c)], u[(i, c + 1)]);
        u[(i, c)] = a * td.m[0][0] + b * td.m[1][0];
        u[(i, c + 1)] = a * td.m[0][1] + b * td.m[1][1];
    }
}

/// Phase program reproducing `u` on the rectangular layout.
///
/// Alternating diagonals of `u` are nulled by MZIs acting from the right
/// (on column pairs) and from the left (on row pairs). The left factors are
/// then moved through the residual diagonal so that every MZI appears in
/// device form, and the diagonal becomes the output phase screen.
pub fn decompose(u: &CMatrix) -> Result<(MeshLayout, MeshParams)> {
    let n = u.nrows();
    if u.ncols() != n {
        return Err(Error::SizeMismatch { expected: n, actual: u.ncols() });
    }
    let layout = MeshLayout::rectangular(n)?;
    let residual = unitarity_residual(u);
    if !(residual < UNITARITY_TOLERANCE) {
        return Err(Error::NotUnitary { residual });
    }
    let mut w = u.clone();
    let mut right: Vec<(usize, MziPhases)> = Vec::new();
    let mut left: Vec<(usize, MziPhases)> = Vec::new();
    for i in 1..n {
        if i % 2 == 1 {
            for j in 0..i {
                let (c, r) = (i - j - 1, n - 1 - j);
                let (u0, u1) = (w[(r, c)], w[(r, c + 1)]);
                let phi = if u1.norm() > 0.0 { wrap_2pi(u0.arg() - u1.arg() + PI) } else { 0.0 };
                let theta = 2.0 * u1.norm().atan2(u0.norm());
                let p = MziPhases { theta, phi };
                apply_cols_dagger(&mut w, c, &mzi_block(p));
                right.push((c, p));
            }
        } else {
            for j in 1..=i {
                let (r, c) = (n + j - i - 2, j - 1);
                let (u0, u1) = (w[(r, c)], w[(r + 1, c)]);
                let phi = if u0.norm() > 0.0 { wrap_2pi(u1.arg() - u0.arg()) } else { 0.0 };
                let theta = 2.0 * u0.norm().atan2(u1.norm());
                let p = MziPhases { theta, phi };
                apply_rows(&mut w, r, &mzi_block(p));
                left.push((r, p));
            }
        }
    }
    let off_diagonal: f64 = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| w[(i, j)].norm_sqr())
        .sum::<f64>()
        .sqrt();
    if off_diagonal > 1e-7 {
        return Err(Error::Decomposition(format!("nulling left off-diagonal residual {off_diagonal:.3e}")));
    }
    let mut d: Vec<C64> = (0..n).map(|i| unit(w[(i, i)])).collect();
    let mut moved = Vec::with_capacity(left.len());
    for &(r, p) in left.iter().rev() {
        let m = mzi_block(p).dagger() * TransferMatrix2x2::diag(d[r], d[r + 1]);
        let (d1, d2, theta, phi) = factor_left(&m);
        d[r] = d1;
        d[r + 1] = d2;
        moved.push((r, MziPhases { theta, phi }));
    }
    // light meets the right-nulling MZIs first, then the moved left ones
    let ops: Vec<(usize, MziPhases)> = right.into_iter().chain(moved).collect();

    // as-soon-as-possible column assignment fills the rectangular layout
    let mut depth = vec![0usize; n];
    let mut slots: Vec<Vec<Option<MziPhases>>> = layout.columns.iter().map(|c| vec![None; c.len()]).collect();
    for (r, p) in ops {
        let col = depth[r].max(depth[r + 1]);
        depth[r] = col + 1;
        depth[r + 1] = col + 1;
        let idx = layout
            .columns
            .get(col)
            .and_then(|chans| chans.iter().position(|&k| k == r))
            .ok_or_else(|| Error::Decomposition(format!("MZI on channel {r} landed in column {col}")))?;
        if slots[col][idx].replace(p).is_some() {
            return Err(Error::Decomposition(format!("column {col} channel {r} assigned twice")));
        }
    }
    let mzis = slots
        .into_iter()
        .flatten()
        .map(|s| s.ok_or_else(|| Error::Decomposition("layout slot left empty".into())))
        .collect::<Result<Vec<_>>>()?;
    let output_phases = d.iter().map(|z| wrap_2pi(z.arg())).collect();
    Ok((layout, MeshParams { n, mzis, output_phases }))
}

/// Matrix realized by an ideal mesh.
pub fn reconstruct(params: &MeshParams, layout: &MeshLayout) -> Result<CMatrix> {
    params.check(layout)?;
    let n = layout.n;
    let mut m = CMatrix::identity(n, n);
    for ((_, k), p) in layout.placements().zip(&params.mzis) {
        apply_rows(&mut m, k, &mzi_block(*p));
    }
    for (i, ph) in params.output_phases.iter().enumerate() {
        let z = C64::from_polar(1.0, *ph);
        for j in 0..n {
            m[(i, j)] *= z;
        }
    }
    Ok(m)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrosstalkModel {
    /// Field leakage with a fixed random phase per MZI and realization.
    #[default]
    Coherent,
    /// Leakage phase redrawn for every propagated field, so the leaked
    /// power adds without stable interference.
    Incoherent,
}

/// Hardware non-idealities applied during propagation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImperfectionSpec {
    pub per_mzi_loss_db: f64,
    /// Loss applied to every channel once per column.
    pub per_column_loss_db: f64,
    /// Bar fraction of both couplers is `0.5 + splitting_deviation`.
    pub splitting_deviation: f64,
    /// Power leaked between the two outputs of every MZI; `None` disables it.
    pub crosstalk_db: Option<f64>,
    pub crosstalk_model: CrosstalkModel,
    pub phase_noise_sigma: f64,
}

impl Default for ImperfectionSpec {
    fn default() -> Self {
        Self::ideal()
    }
}

impl ImperfectionSpec {
    pub const fn ideal() -> Self {
        Self {
            per_mzi_loss_db: 0.0,
            per_column_loss_db: 0.0,
            splitting_deviation: 0.0,
            crosstalk_db: None,
            crosstalk_model: CrosstalkModel::Coherent,
            phase_noise_sigma: 0.0,
        }
    }

    /// PCM MZIs: 0.2 dB loss and −38 dB crosstalk per device.
    pub const fn pcm() -> Self {
        Self { per_mzi_loss_db: 0.2, crosstalk_db: Some(-38.0), ..Self::ideal() }
    }

    /// Assumed conventional MZIs: 0.5 dB loss and −25 dB crosstalk.
    pub const fn conventional() -> Self {
        Self { per_mzi_loss_db: 0.5, crosstalk_db: Some(-25.0), ..Self::ideal() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "ideal" => Ok(Self::ideal()),
            "pcm" => Ok(Self::pcm()),
            "conventional" => Ok(Self::conventional()),
            other => Err(Error::InvalidInput(format!("unknown imperfection preset '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.per_mzi_loss_db >= 0.0 && self.per_column_loss_db >= 0.0) {
            return Err(Error::InvalidInput("losses must be ≥ 0 dB".into()));
        }
        if !(self.splitting_deviation.abs() < 0.5) {
            return Err(Error::InvalidInput(format!(
                "|splitting deviation| must be < 0.5, got {}",
                self.splitting_deviation
            )));
        }
        if let Some(x) = self.crosstalk_db {
            if !(x <= 0.0) {
                return Err(Error::InvalidInput(format!("crosstalk must be ≤ 0 dB, got {x}")));
            }
        }
        if !(self.phase_noise_sigma >= 0.0 && self.phase_noise_sigma.is_finite()) {
            return Err(Error::InvalidInput("phase noise sigma must be ≥ 0".into()));
        }
        Ok(())
    }

    pub fn is_ideal(&self) -> bool {
        self.per_mzi_loss_db == 0.0
            && self.per_column_loss_db == 0.0
            && self.splitting_deviation == 0.0
            && self.crosstalk_db.is_none()
            && self.phase_noise_sigma == 0.0
    }

    fn leakage_amplitude(&self) -> f64 {
        self.crosstalk_db.map_or(0.0, |x| 10f64.powf(x / 20.0))
    }
}

/// One random draw of a mesh under an imperfection spec.
#[derive(Clone, Debug)]
pub struct RealizedMesh {
    layout: MeshLayout,
    blocks: Vec<TransferMatrix2x2>,
    leak_phases: Vec<f64>,
    leak: f64,
    model: CrosstalkModel,
    column_amplitude: f64,
    output: Vec<C64>,
}

impl RealizedMesh {
    pub fn new(params: &MeshParams, layout: &MeshLayout, imp: &ImperfectionSpec, seed: u64) -> Result<Self> {
        params.check(layout)?;
        imp.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, imp.phase_noise_sigma.max(f64::MIN_POSITIVE)).expect("sigma is positive");
        let amp = db_to_amplitude(imp.per_mzi_loss_db)?;
        let splitter = TransferMatrix2x2::splitter(imp.splitting_deviation, 0.0)?;
        let mut blocks = Vec::with_capacity(params.mzis.len());
        let mut leak_phases = Vec::with_capacity(params.mzis.len());
        for p in &params.mzis {
            let (dt, dp) =
                if imp.phase_noise_sigma > 0.0 { (noise.sample(&mut rng), noise.sample(&mut rng)) } else { (0.0, 0.0) };
            let state = MziState { theta: p.theta + dt, phi: p.phi + dp };
            let t = if imp.splitting_deviation == 0.0 {
                ideal_transfer(state.theta, state.phi).scale(C64::from(amp))
            } else {
                assemble(&splitter, &splitter, amp, state)
            };
            blocks.push(t);
            leak_phases.push(rng.random_range(0.0..2.0 * PI));
        }
        Ok(Self {
            layout: layout.clone(),
            blocks,
            leak_phases,
            leak: imp.leakage_amplitude(),
            model: imp.crosstalk_model,
            column_amplitude: db_to_amplitude(imp.per_column_loss_db)?,
            output: params.output_phases.iter().map(|&p| C64::from_polar(1.0, p)).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.layout.n
    }

    fn leak_block(&self, psi: f64) -> TransferMatrix2x2 {
        let e = self.leak;
        let a = C64::from((1.0 - e * e).sqrt());
        TransferMatrix2x2::new(a, C64::from_polar(e, psi), -C64::from_polar(e, -psi), a)
    }

    fn propagate_with(&self, field: &mut [C64], mut psi: impl FnMut(usize) -> f64) {
        let mut k = 0;
        for chans in &self.layout.columns {
            for &ch in chans {
                let mut t = self.blocks[k];
                if self.leak > 0.0 {
                    t = self.leak_block(psi(k)) * t;
                }
                let out = t.apply([field[ch], field[ch + 1]]);
                field[ch] = out[0];
                field[ch + 1] = out[1];
                k += 1;
            }
            if self.column_amplitude != 1.0 {
                field.iter_mut().for_each(|v| *v *= self.column_amplitude);
            }
        }
        field.iter_mut().zip(&self.output).for_each(|(v, o)| *v *= o);
    }

    /// Propagate one field. `sample_seed` only matters for incoherent
    /// crosstalk, where it seeds the per-field leakage phases.
    pub fn propagate(&self, input: &[C64], sample_seed: u64) -> Result<Vec<C64>> {
        if input.len() != self.n() {
            return Err(Error::SizeMismatch { expected: self.n(), actual: input.len() });
        }
        let mut field = input.to_vec();
        match self.model {
            CrosstalkModel::Coherent => self.propagate_with(&mut field, |k| self.leak_phases[k]),
            CrosstalkModel::Incoherent => {
                let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
                self.propagate_with(&mut field, |_| rng.random_range(0.0..2.0 * PI));
            }
        }
        Ok(field)
    }

    /// Transfer matrix of a coherent realization.
    pub fn matrix(&self) -> CMatrix {
        let n = self.n();
        let mut m = CMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![C64::new(0.0, 0.0); n];
            e[j] = C64::new(1.0, 0.0);
            self.propagate_with(&mut e, |k| self.leak_phases[k]);
            m.set_column(j, &nalgebra::DVector::from_vec(e));
        }
        m
    }

    pub fn is_coherent(&self) -> bool {
        self.model == CrosstalkModel::Coherent || self.leak == 0.0
    }
}

/// Propagate `input` through the mesh realized from `seed`.
pub fn propagate(
    params: &MeshParams,
    layout: &MeshLayout,
    input: &[C64],
    imp: &ImperfectionSpec,
    seed: u64,
) -> Result<Vec<C64>> {
    RealizedMesh::new(params, layout, imp, seed)?.propagate(input, seed ^ 0x9e37_79b9_7f4a_7c15)
}

/// Program with every MZI in the cross state and no output phase.
pub fn zero_program(layout: &MeshLayout) -> MeshParams {
    MeshParams {
        n: layout.n,
        mzis: vec![MziPhases { theta: 0.0, phi: 0.0 }; layout.mzi_count()],
        output_phases: vec![0.0; layout.n],
    }
}
