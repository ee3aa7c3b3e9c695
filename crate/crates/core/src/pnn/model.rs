//! Two-layer complex network with detected-intensity activations, and its
//! training by full-batch gradient descent.
//!
//! Forward pass for a unit-power input `x`:
//! `z₁ = W₁x`, `I₁ = |z₁|²`, `a₁ = I₁/‖I₁‖`, `z₂ = W₂a₁`, `y = |z₂|²`, and the
//! first `K` entries of `y` are the class logits for a softmax
//! cross-entropy loss.
//!
//! Gradients are returned as `G = ∂L/∂Re(W) + i·∂L/∂Im(W)`. For a layer
//! `z = Wa` feeding `|z|²` with upstream gradient `g`, `G = 2·(g∘z)·aᴴ`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::optics::C64;
use crate::pnn::dataset::GaussianDataset;

/// Row-major complex matrix as `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl From<&CMatrix> for ComplexMatrixJson {
    fn from(m: &CMatrix) -> Self {
        let data = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| [m[(i, j)].re, m[(i, j)].im])).collect();
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }
}

impl TryFrom<&ComplexMatrixJson> for CMatrix {
    type Error = Error;

    fn try_from(j: &ComplexMatrixJson) -> Result<CMatrix> {
        if j.data.len() != j.rows * j.cols {
            return Err(Error::SizeMismatch { expected: j.rows * j.cols, actual: j.data.len() });
        }
        Ok(CMatrix::from_fn(j.rows, j.cols, |r, c| {
            let [re, im] = j.data[r * j.cols + c];
            C64::new(re, im)
        }))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PnnModel {
    pub classes: usize,
    pub w1: CMatrix,
    pub w2: CMatrix,
}

#[derive(Serialize, Deserialize)]
struct PnnModelJson {
    classes: usize,
    w1: ComplexMatrixJson,
    w2: ComplexMatrixJson,
}

impl Serialize for PnnModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PnnModelJson { classes: self.classes, w1: (&self.w1).into(), w2: (&self.w2).into() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PnnModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = PnnModelJson::deserialize(d)?;
        let w1 = CMatrix::try_from(&j.w1).map_err(serde::de::Error::custom)?;
        let w2 = CMatrix::try_from(&j.w2).map_err(serde::de::Error::custom)?;
        PnnModel::new(j.classes, w1, w2).map_err(serde::de::Error::custom)
    }
}

/// Intermediate values of a batched forward pass; columns are samples.
pub struct Forward {
    pub x: CMatrix,
    pub z1: CMatrix,
    pub i1: DMatrix<f64>,
    pub norm1: Vec<f64>,
    pub a1: DMatrix<f64>,
    pub z2: CMatrix,
    pub y: DMatrix<f64>,
}

/// Samples as the columns of a complex matrix.
pub fn batch(xs: &[Vec<f64>], n: usize) -> Result<CMatrix> {
    if let Some(bad) = xs.iter().find(|x| x.len() != n) {
        return Err(Error::SizeMismatch { expected: n, actual: bad.len() });
    }
    Ok(CMatrix::from_fn(n, xs.len(), |i, j| C64::new(xs[j][i], 0.0)))
}

/// Detected intensities normalized per column; returns `(I, ‖I‖, I/‖I‖)`.
pub fn detect(z: &CMatrix) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let i = z.map(|v| v.norm_sqr());
    let norms: Vec<f64> = i.column_iter().map(|c| c.norm()).collect();
    let mut a = i.clone();
    for (j, mut col) in a.column_iter_mut().enumerate() {
        let n = norms[j];
        if n > 0.0 {
            col /= n;
        }
    }
    (i, norms, a)
}

fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| C64::new(v, 0.0))
}

/// Index of the largest of the first `k` entries.
pub fn argmax_prefix(col: impl Iterator<Item = f64>, k: usize) -> usize {
    col.take(k).enumerate().fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best }).0
}

impl PnnModel {
    pub fn new(classes: usize, w1: CMatrix, w2: CMatrix) -> Result<Self> {
        let n = w1.nrows();
        for w in [&w1, &w2] {
            if w.nrows() != n || w.ncols() != n {
                return Err(Error::SizeMismatch { expected: n, actual: w.ncols() });
            }
        }
        if classes > n || classes < 2 {
            return Err(Error::InvalidInput(format!("{classes} classes do not fit {n} ports")));
        }
        Ok(Self { classes, w1, w2 })
    }

    /// Complex Gaussian weights with unit variance per entry.
    pub fn random(n: usize, classes: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || {
            CMatrix::from_fn(n, n, |_, _| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
            })
        };
        let w1 = draw();
        let w2 = draw();
        Self::new(classes, w1, w2)
    }

    pub fn n(&self) -> usize {
        self.w1.nrows()
    }

    pub fn forward(&self, x: &CMatrix) -> Forward {
        let z1 = &self.w1 * x;
        let (i1, norm1, a1) = detect(&z1);
        let z2 = &self.w2 * to_complex(&a1);
        let y = z2.map(|v| v.norm_sqr());
        Forward { x: x.clone(), z1, i1, norm1, a1, z2, y }
    }

    /// Output intensities of one sample.
    pub fn outputs(&self, x: &[f64]) -> Result<Vec<f64>> {
        let f = self.forward(&batch(&[x.to_vec()], self.n())?);
        Ok(f.y.column(0).iter().copied().collect())
    }

    pub fn predict(&self, xs: &[Vec<f64>]) -> Result<Vec<usize>> {
        let f = self.forward(&batch(xs, self.n())?);
        Ok(f.y.column_iter().map(|c| argmax_prefix(c.iter().copied(), self.classes)).collect())
    }

    /// Percentage of correct predictions.
    pub fn accuracy(&self, xs: &[Vec<f64>], ys: &[usize]) -> Result<f64> {
        let p = self.predict(xs)?;
        Ok(percent_correct(&p, ys))
    }

    /// Mean softmax cross-entropy and its gradients with respect to `W₁`, `W₂`.
    pub fn loss_and_gradients(&self, x: &CMatrix, ys: &[usize]) -> (f64, CMatrix, CMatrix) {
        let f = self.forward(x);
        let (n, b, k) = (self.n(), ys.len(), self.classes);
        let mut loss = 0.0;
        let mut gy = DMatrix::<f64>::zeros(n, b);
        for (j, &label) in ys.iter().enumerate() {
            let col = f.y.column(j);
            let max = col.iter().take(k).copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = col.iter().take(k).map(|v| (v - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            loss -= (exps[label] / total).max(1e-300).ln();
            for c in 0..k {
                gy[(c, j)] = (exps[c] / total - if c == label { 1.0 } else { 0.0 }) / b as f64;
            }
        }
        loss /= b as f64;

        // d|z|²/dz̄ pulled back through z = W a
        let gz2 = CMatrix::from_fn(n, b, |i, j| f.z2[(i, j)] * (2.0 * gy[(i, j)]));
        let g2 = &gz2 * to_complex(&f.a1).transpose();
        let ga = (self.w2.transpose() * gz2.map(|v| v.conj())).map(|v| v.re);
        let mut gi = DMatrix::<f64>::zeros(n, b);
        for j in 0..b {
            let nrm = f.norm1[j];
            let dot: f64 = ga.column(j).dot(&f.i1.column(j));
            for i in 0..n {
                gi[(i, j)] = ga[(i, j)] / nrm - f.i1[(i, j)] * dot / (nrm * nrm * nrm);
            }
        }
        let gz1 = CMatrix::from_fn(n, b, |i, j| f.z1[(i, j)] * (2.0 * gi[(i, j)]));
        let g1 = &gz1 * f.x.adjoint();
        (loss, g1, g2)
    }
}

pub fn percent_correct(pred: &[usize], ys: &[usize]) -> f64 {
    let hits = pred.iter().zip(ys).filter(|(a, b)| a == b).count();
    100.0 * hits as f64 / ys.len().max(1) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 300, learning_rate: 0.02, optimizer: Optimizer::Adam, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput("epochs and learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub loss_history: Vec<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

struct Adam {
    m: CMatrix,
    v: DMatrix<f64>,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;

    fn new(n: usize) -> Self {
        Self { m: CMatrix::zeros(n, n), v: DMatrix::zeros(n, n) }
    }

    fn step(&mut self, w: &mut CMatrix, g: &CMatrix, lr: f64, t: i32) {
        let c1 = 1.0 - Self::B1.powi(t);
        let c2 = 1.0 - Self::B2.powi(t);
        for ((wi, gi), (mi, vi)) in w.iter_mut().zip(g.iter()).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *mi = *mi * Self::B1 + *gi * (1.0 - Self::B1);
            *vi = *vi * Self::B2 + gi.norm_sqr() * (1.0 - Self::B2);
            *wi -= *mi / c1 * (lr / ((*vi / c2).sqrt() + 1e-8));
        }
    }
}

/// Train `model` in place on the training split.
pub fn train(model: &mut PnnModel, data: &GaussianDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let n = model.n();
    if data.spec.dimension != n {
        return Err(Error::SizeMismatch { expected: n, actual: data.spec.dimension });
    }
    let x = batch(&data.train_x, n)?;
    let mut opt = [Adam::new(n), Adam::new(n)];
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let (loss, g1, g2) = model.loss_and_gradients(&x, &data.train_y);
        if !loss.is_finite() || g1.iter().chain(g2.iter()).any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Divergence { epoch, loss });
        }
        history.push(loss);
        match cfg.optimizer {
            Optimizer::Adam => {
                let t = epoch.min(i32::MAX as usize) as i32;
                opt[0].step(&mut model.w1, &g1, cfg.learning_rate, t);
                opt[1].step(&mut model.w2, &g2, cfg.learning_rate, t);
            }
            Optimizer::Sgd => {
                model.w1 -= g1 * C64::from(cfg.learning_rate);
                model.w2 -= g2 * C64::from(cfg.learning_rate);
            }
        }
    }
    Ok(TrainReport {
        loss_history: history,
        train_accuracy: model.accuracy(&data.train_x, &data.train_y)?,
        test_accuracy: model.accuracy(&data.test_x, &data.test_y)?,
    })
}

/// Fresh model from `cfg.seed`, trained on `data`.
pub fn train_new(data: &GaussianDataset, cfg: &TrainConfig) -> Result<(PnnModel, TrainReport)> {
    let mut model = PnnModel::random(data.spec.dimension, data.spec.classes, cfg.seed)?;
    let report = train(&mut model, data, cfg)?;
    Ok((model, report))
}

pub fn column(v: &[C64]) -> DVector<C64> {
    DVector::from_column_slice(v)
}
