//! Mapping trained layers onto meshes and evaluating them under hardware
//! imperfections.
//!
//! Each weight matrix is factored as `W = s·U·Σ·V†` with `Σ = diag(σ/σ_max)`
//! and `s = σ_max`. `V†` and `U` become rectangular meshes and `Σ` a column
//! of attenuators. The scale `s` is applied digitally after detection.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::mesh::{decompose, reconstruct, CrosstalkModel, ImperfectionSpec, MeshLayout, MeshParams, RealizedMesh};
use crate::optics::{db_to_amplitude, C64};
use crate::pnn::dataset::{generate_gaussian_dataset, DatasetSpec, GaussianDataset};
use crate::pnn::model::{argmax_prefix, batch, detect, percent_correct, train_new, PnnModel, TrainConfig};

/// Largest accepted `‖UΣV† − W‖_F / ‖W‖_F` after mapping.
pub const RECONSTRUCTION_TOLERANCE: f64 = 1e-6;

/// One weight matrix realized as `V†`-mesh, attenuators and `U`-mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhotonicLayer {
    pub layout: MeshLayout,
    pub v_mesh: MeshParams,
    /// Attenuator amplitudes `σ/σ_max`, all in `[0, 1]`.
    pub sigma: Vec<f64>,
    pub scale: f64,
    pub u_mesh: MeshParams,
}

impl PhotonicLayer {
    pub fn n(&self) -> usize {
        self.layout.n
    }

    /// Ideal transfer matrix `s·U·Σ·V†`.
    pub fn matrix(&self) -> Result<CMatrix> {
        let u = reconstruct(&self.u_mesh, &self.layout)?;
        let v = reconstruct(&self.v_mesh, &self.layout)?;
        Ok(self.compose(&u, &v, 1.0))
    }

    fn compose(&self, u: &CMatrix, v: &CMatrix, attenuation: f64) -> CMatrix {
        let mut uv = u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            let f = C64::from(s * attenuation * self.scale);
            uv.column_mut(j).iter_mut().for_each(|x| *x *= f);
        }
        uv * v
    }

    /// Draw one hardware realization of this layer.
    pub fn realize(&self, imp: &ImperfectionSpec, seed: u64) -> Result<RealizedLayer> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = RealizedMesh::new(&self.v_mesh, &self.layout, imp, rng.random())?;
        let u = RealizedMesh::new(&self.u_mesh, &self.layout, imp, rng.random())?;
        // the attenuators are one more column of MZIs
        let attenuation = db_to_amplitude(imp.per_mzi_loss_db)? * db_to_amplitude(imp.per_column_loss_db)?;
        let dense = (v.is_coherent() && u.is_coherent()).then(|| self.compose(&u.matrix(), &v.matrix(), attenuation));
        Ok(RealizedLayer {
            v,
            u,
            sigma: self.sigma.iter().map(|s| s * attenuation).collect(),
            scale: self.scale,
            dense,
        })
    }
}

/// A drawn layer. Coherent realizations are collapsed to a dense matrix.
#[derive(Clone, Debug)]
pub struct RealizedLayer {
    v: RealizedMesh,
    u: RealizedMesh,
    sigma: Vec<f64>,
    scale: f64,
    dense: Option<CMatrix>,
}

impl RealizedLayer {
    pub fn matrix(&self) -> Option<&CMatrix> {
        self.dense.as_ref()
    }

    /// Output field for one input; `sample_seed` drives incoherent leakage.
    pub fn apply(&self, input: &[C64], sample_seed: u64) -> Result<Vec<C64>> {
        if let Some(m) = &self.dense {
            if input.len() != m.ncols() {
                return Err(Error::SizeMismatch { expected: m.ncols(), actual: input.len() });
            }
            return Ok((m * DVector::from_column_slice(input)).iter().copied().collect());
        }
        let mut field = self.v.propagate(input, sample_seed)?;
        field.iter_mut().zip(&self.sigma).for_each(|(f, s)| *f *= s * self.scale);
        self.u.propagate(&field, sample_seed.rotate_left(32) ^ 0x5851_f42d_4c95_7f2d)
    }
}

/// Factor `W` into meshes and attenuators.
pub fn svd_map(w: &CMatrix) -> Result<PhotonicLayer> {
    let n = w.nrows();
    if n != w.ncols() || n == 0 {
        return Err(Error::SizeMismatch { expected: n, actual: w.ncols() });
    }
    if w.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::InvalidInput("weight matrix has non-finite entries".into()));
    }
    let svd = w.clone().svd(true, true);
    let (u, vt) = match (&svd.u, &svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Decomposition("SVD did not return singular vectors".into())),
    };
    let s_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if !(s_max > 0.0) {
        return Err(Error::Decomposition("zero weight matrix has no usable scale".into()));
    }
    let (layout, u_mesh) = decompose(u)?;
    let (_, v_mesh) = decompose(vt)?;
    let layer = PhotonicLayer {
        layout,
        v_mesh,
        sigma: svd.singular_values.iter().map(|s| (s / s_max).clamp(0.0, 1.0)).collect(),
        scale: s_max,
        u_mesh,
    };
    let rel = (layer.matrix()? - w).norm() / w.norm();
    if !(rel < RECONSTRUCTION_TOLERANCE) {
        return Err(Error::Decomposition(format!("mesh reconstruction error {rel:.3e}")));
    }
    Ok(layer)
}

/// Both layers of a trained model mapped onto hardware.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhotonicNetwork {
    pub classes: usize,
    pub layers: [PhotonicLayer; 2],
}

impl PhotonicNetwork {
    pub fn from_model(model: &PnnModel) -> Result<Self> {
        Ok(Self { classes: model.classes, layers: [svd_map(&model.w1)?, svd_map(&model.w2)?] })
    }

    pub fn n(&self) -> usize {
        self.layers[0].n()
    }

    /// Predicted classes of one hardware draw over all samples.
    pub fn predict_realized(&self, xs: &[Vec<f64>], imp: &ImperfectionSpec, seed: u64) -> Result<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l1 = self.layers[0].realize(imp, rng.random())?;
        let l2 = self.layers[1].realize(imp, rng.random())?;
        let sample_base: u64 = rng.random();
        if let (Some(m1), Some(m2)) = (l1.matrix(), l2.matrix()) {
            let x = batch(xs, self.n())?;
            let (_, _, a1) = detect(&(m1 * x));
            let y = (m2 * a1.map(|v| C64::new(v, 0.0))).map(|v| v.norm_sqr());
            return Ok(y.column_iter().map(|c| argmax_prefix(c.iter().copied(), self.classes)).collect());
        }
        xs.iter()
            .enumerate()
            .map(|(i, x)| {
                let s = sample_base.wrapping_add(i as u64);
                let input: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
                let z1 = l1.apply(&input, s)?;
                let i1: Vec<f64> = z1.iter().map(|v| v.norm_sqr()).collect();
                let norm = i1.iter().map(|v| v * v).sum::<f64>().sqrt();
                let a1: Vec<C64> = i1.iter().map(|v| C64::new(if norm > 0.0 { v / norm } else { 0.0 }, 0.0)).collect();
                let z2 = l2.apply(&a1, s.rotate_left(17))?;
                Ok(argmax_prefix(z2.iter().map(|v| v.norm_sqr()), self.classes))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub n: usize,
    pub profile: String,
    /// Accuracy in percent.
    pub mean: f64,
    /// Sample standard deviation over trials, in percent.
    pub std: f64,
    pub trials: usize,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
}

/// Trial seeds derived from a base seed.
pub fn trial_seeds(seed: u64, trials: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials).map(|_| rng.random()).collect()
}

/// Test accuracy over `trials` hardware draws.
pub fn infer(
    network: &PhotonicNetwork,
    data: &GaussianDataset,
    imp: &ImperfectionSpec,
    profile: &str,
    trials: usize,
    seed: u64,
) -> Result<AccuracyReport> {
    imp.validate()?;
    if trials == 0 {
        return Err(Error::InvalidInput("at least one trial is required".into()));
    }
    if data.spec.dimension != network.n() {
        return Err(Error::SizeMismatch { expected: network.n(), actual: data.spec.dimension });
    }
    let seeds = trial_seeds(seed, trials);
    let accuracies = seeds
        .par_iter()
        .map(|&s| Ok(percent_correct(&network.predict_realized(&data.test_x, imp, s)?, &data.test_y)))
        .collect::<Result<Vec<f64>>>()?;
    let mean = accuracies.iter().sum::<f64>() / trials as f64;
    let std = if trials > 1 {
        (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(AccuracyReport { n: network.n(), profile: profile.to_string(), mean, std, trials, seeds, accuracies })
}

/// Settings shared by every size of an accuracy sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    pub profiles: Vec<(String, ImperfectionSpec)>,
    pub trials: usize,
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub train: TrainConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sizes: vec![8, 16, 32, 64],
            profiles: ["ideal", "pcm", "conventional"]
                .iter()
                .map(|p| (p.to_string(), ImperfectionSpec::preset(p).expect("built-in preset")))
                .collect(),
            trials: 10,
            seed: 0,
            dataset: DatasetSpec::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Per-size training outcome kept alongside the sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedSize {
    pub n: usize,
    pub model: PnnModel,
    pub nominal_accuracy: f64,
}

/// Train one model per size and evaluate every profile on it.
pub fn accuracy_sweep(cfg: &SweepConfig) -> Result<(Vec<TrainedSize>, Vec<AccuracyReport>)> {
    let mut trained = Vec::with_capacity(cfg.sizes.len());
    let mut reports = Vec::with_capacity(cfg.sizes.len() * cfg.profiles.len());
    for &n in &cfg.sizes {
        let data = generate_gaussian_dataset(&cfg.dataset.with_dimension(n))?;
        let (model, report) = train_new(&data, &cfg.train)?;
        let network = PhotonicNetwork::from_model(&model)?;
        for (name, imp) in &cfg.profiles {
            reports.push(infer(&network, &data, imp, name, cfg.trials, cfg.seed)?);
        }
        trained.push(TrainedSize { n, model, nominal_accuracy: report.test_accuracy });
    }
    Ok((trained, reports))
}

/// True when propagation needs no per-sample randomness.
pub fn is_deterministic_per_draw(imp: &ImperfectionSpec) -> bool {
    imp.crosstalk_db.is_none() || imp.crosstalk_model == CrosstalkModel::Coherent
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::haar_unitary;
    use crate::pnn::dataset::generate_gaussian_dataset;

    #[test]
    fn unitary_weights_map_to_unit_attenuators() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = haar_unitary(6, &mut rng);
        let layer = svd_map(&u).unwrap();
        assert!((layer.scale - 1.0).abs() < 1e-12);
        assert!(layer.sigma.iter().all(|s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn scaled_identity_records_the_scale() {
        let w = CMatrix::identity(4, 4) * C64::from(2.0);
        let layer = svd_map(&w).unwrap();
        assert!((layer.scale - 2.0).abs() < 1e-12);
        assert!(layer.sigma.iter().all(|s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn random_weights_round_trip() {
        let model = PnnModel::random(8, 4, 5).unwrap();
        for w in [&model.w1, &model.w2] {
            let layer = svd_map(w).unwrap();
            assert!((layer.matrix().unwrap() - w).norm() / w.norm() < RECONSTRUCTION_TOLERANCE);
            assert!(layer.sigma.iter().all(|s| (0.0..=1.0).contains(s)));
        }
    }

    #[test]
    fn zero_matrix_is_rejected() {
        assert!(matches!(svd_map(&CMatrix::zeros(3, 3)), Err(Error::Decomposition(_))));
    }

    #[test]
    fn ideal_hardware_matches_software_forward_pass() {
        let model = PnnModel::random(8, 4, 9).unwrap();
        let net = PhotonicNetwork::from_model(&model).unwrap();
        let ideal = ImperfectionSpec::ideal();
        let l1 = net.layers[0].realize(&ideal, 1).unwrap();
        let l2 = net.layers[1].realize(&ideal, 2).unwrap();
        let x: Vec<f64> = (0..8).map(|i| (i as f64 + 1.0).sqrt() / 6.0).collect();
        let expected = model.outputs(&x).unwrap();
        let input: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
        let i1: Vec<f64> = l1.apply(&input, 0).unwrap().iter().map(|v| v.norm_sqr()).collect();
        let norm = i1.iter().map(|v| v * v).sum::<f64>().sqrt();
        let a1: Vec<C64> = i1.iter().map(|v| C64::new(v / norm, 0.0)).collect();
        let y: Vec<f64> = l2.apply(&a1, 0).unwrap().iter().map(|v| v.norm_sqr()).collect();
        for (a, b) in y.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn ideal_inference_equals_nominal_accuracy() {
        let data = generate_gaussian_dataset(&DatasetSpec::default()).unwrap();
        let (model, report) = train_new(&data, &TrainConfig::default()).unwrap();
        let net = PhotonicNetwork::from_model(&model).unwrap();
        let r = infer(&net, &data, &ImperfectionSpec::ideal(), "ideal", 3, 0).unwrap();
        assert_eq!(r.mean, report.test_accuracy);
        assert_eq!(r.std, 0.0);
    }

    #[test]
    fn inference_is_deterministic_for_a_seed() {
        let data = generate_gaussian_dataset(&DatasetSpec::default()).unwrap();
        let (model, _) = train_new(&data, &TrainConfig::default()).unwrap();
        let net = PhotonicNetwork::from_model(&model).unwrap();
        let imp = ImperfectionSpec { crosstalk_model: CrosstalkModel::Incoherent, ..ImperfectionSpec::conventional() };
        let a = infer(&net, &data, &imp, "c", 3, 42).unwrap();
        let b = infer(&net, &data, &imp, "c", 3, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.accuracies.iter().all(|v| (0.0..=100.0).contains(v)));
    }
}
