//! Seeded Gaussian classification data on the unit sphere.
//!
//! Class means sit on a small cap around the all-ones direction, a distance
//! `separation` apart, and samples spread isotropically around them with an
//! RMS radius of `separation / 6`. Features are normalized to unit power so
//! they can be launched as optical field amplitudes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub dimension: usize,
    pub classes: usize,
    pub samples_per_class: usize,
    /// Minimum pairwise distance between class means.
    pub separation: f64,
    /// RMS sample spread; `None` means `separation / 6`.
    pub sigma: Option<f64>,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            dimension: 8,
            classes: 4,
            samples_per_class: 256,
            separation: DEFAULT_SEPARATION,
            sigma: None,
            train_fraction: 0.75,
            seed: 1,
        }
    }
}

/// Default distance between class means on the unit sphere.
pub const DEFAULT_SEPARATION: f64 = 0.05;

impl DatasetSpec {
    pub fn with_dimension(self, dimension: usize) -> Self {
        Self { dimension, ..self }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma.unwrap_or(self.separation / 6.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidInput("need at least two classes".into()));
        }
        if self.classes > self.dimension {
            return Err(Error::InvalidInput(format!(
                "{} classes cannot be read out from {} ports",
                self.classes, self.dimension
            )));
        }
        if self.samples_per_class == 0 {
            return Err(Error::InvalidInput("samples_per_class must be positive".into()));
        }
        if !(self.separation > 0.0 && self.separation < 1.0) {
            return Err(Error::InvalidInput(format!("separation must lie in (0, 1), got {}", self.separation)));
        }
        if !(self.sigma() > 0.0) {
            return Err(Error::InvalidInput(format!("sigma must be positive, got {}", self.sigma())));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidInput(format!("train fraction must lie in (0, 1), got {}", self.train_fraction)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianDataset {
    pub spec: DatasetSpec,
    pub means: Vec<Vec<f64>>,
    pub train_x: Vec<Vec<f64>>,
    pub train_y: Vec<usize>,
    pub test_x: Vec<Vec<f64>>,
    pub test_y: Vec<usize>,
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn generate_gaussian_dataset(spec: &DatasetSpec) -> Result<GaussianDataset> {
    spec.validate()?;
    let n = spec.dimension;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centre = vec![1.0 / (n as f64).sqrt(); n];
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(spec.classes);
    let mut attempts = 0;
    while means.len() < spec.classes {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::InvalidInput(format!(
                "could not place {} class means {} apart in {n} dimensions",
                spec.classes, spec.separation
            )));
        }
        let mut d: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let along: f64 = d.iter().zip(&centre).map(|(a, b)| a * b).sum();
        d.iter_mut().zip(&centre).for_each(|(x, c)| *x -= along * c);
        normalize(&mut d);
        let mut m: Vec<f64> = centre.iter().zip(&d).map(|(c, x)| c + spec.separation * x).collect();
        normalize(&mut m);
        if means.iter().all(|o| distance(&m, o) >= spec.separation) {
            means.push(m);
        }
    }
    let noise = Normal::new(0.0, spec.sigma() / (n as f64).sqrt()).expect("sigma validated");
    let mut samples: Vec<(Vec<f64>, usize)> = Vec::with_capacity(spec.classes * spec.samples_per_class);
    for (k, mean) in means.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            let mut s: Vec<f64> = mean.iter().map(|m| m + noise.sample(&mut rng)).collect();
            normalize(&mut s);
            samples.push((s, k));
        }
    }
    rand::seq::SliceRandom::shuffle(samples.as_mut_slice(), &mut rng);
    let n_train = (spec.train_fraction * samples.len() as f64) as usize;
    let test = samples.split_off(n_train);
    let (train_x, train_y) = samples.into_iter().unzip();
    let (test_x, test_y) = test.into_iter().unzip();
    Ok(GaussianDataset { spec: *spec, means, train_x, train_y, test_x, test_y })
}

impl GaussianDataset {
    /// Accuracy (percent) of assigning each test sample to its nearest class mean.
    pub fn nearest_mean_accuracy(&self) -> f64 {
        let correct = self
            .test_x
            .iter()
            .zip(&self.test_y)
            .filter(|(x, &y)| {
                let best = self
                    .means
                    .iter()
                    .enumerate()
                    .min_by(|a, b| distance(x, a.1).total_cmp(&distance(x, b.1)))
                    .map(|(k, _)| k);
                best == Some(y)
            })
            .count();
        100.0 * correct as f64 / self.test_y.len() as f64
    }
}
