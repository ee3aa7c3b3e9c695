//! Bounded Nelder–Mead minimization applied to splitter geometry, plus Monte
//! Carlo sampling of fabrication variation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mmi::{FpvDelta, MmiGeometry, MmiModel, SplitResult, MAX_FPV_NM};
use crate::mzi::{metrics, MziConfig};

/// Objective value assigned to designs the surrogate cannot evaluate.
pub const INVALID_PENALTY: f64 = 1e6;

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NelderMeadOptions {
    /// Initial simplex offset along each coordinate.
    pub step: Vec<f64>,
    pub tol_f: f64,
    pub tol_x: f64,
    pub max_iter: usize,
    /// Per-coordinate `(lower, upper)`; candidates are projected onto the box.
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl NelderMeadOptions {
    pub fn new(step: Vec<f64>) -> Self {
        Self { step, tol_f: 1e-12, tol_x: 1e-10, max_iter: 500, bounds: None }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if dim == 0 || self.step.len() != dim {
            return Err(Error::SizeMismatch { expected: dim, actual: self.step.len() });
        }
        if self.step.iter().any(|s| !(s.is_finite() && *s != 0.0)) {
            return Err(Error::InvalidInput("simplex steps must be finite and non-zero".into()));
        }
        if !(self.tol_f >= 0.0 && self.tol_x >= 0.0) {
            return Err(Error::InvalidInput("tolerances must be non-negative".into()));
        }
        if let Some(b) = &self.bounds {
            if b.len() != dim {
                return Err(Error::SizeMismatch { expected: dim, actual: b.len() });
            }
            if b.iter().any(|(lo, hi)| !(lo <= hi)) {
                return Err(Error::InvalidInput("each lower bound must not exceed its upper bound".into()));
            }
        }
        Ok(())
    }

    /// `x` plus one vertex per coordinate, stepping away from any bound in the way.
    fn simplex_around(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut points = vec![x.to_vec()];
        for i in 0..x.len() {
            let mut p = x.to_vec();
            p[i] += self.step[i];
            self.project(&mut p);
            if p[i] == x[i] {
                p[i] = x[i] - self.step[i];
                self.project(&mut p);
            }
            points.push(p);
        }
        points
    }

    fn project(&self, x: &mut [f64]) {
        if let Some(b) = &self.bounds {
            x.iter_mut().zip(b).for_each(|(v, (lo, hi))| *v = v.clamp(*lo, *hi));
        }
    }
}

/// One row of the optimization trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub best_f: f64,
    /// Objective at every vertex, ascending.
    pub vertex_values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best value after each iteration.
    pub history: Vec<f64>,
    pub trace: Vec<TraceRow>,
    /// Final simplex, best vertex first.
    pub simplex: Vec<Vec<f64>>,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Minimize `f` from `x0`. Non-finite values rank as `+∞`.
pub fn nelder_mead<F>(f: F, x0: &[f64], opts: &NelderMeadOptions) -> Result<NelderMeadResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = x0.len();
    opts.validate(dim)?;
    let eval = |x: &[f64]| sanitize(f(x));

    let mut start = x0.to_vec();
    opts.project(&mut start);
    let points = opts.simplex_around(&start);
    let values: Vec<f64> = points.par_iter().map(|p| eval(p)).collect();
    let mut evaluations = points.len();
    if values.iter().all(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("objective is non-finite at every initial vertex".into()));
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = points.into_iter().zip(values).collect();

    let mut history = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        let f_spread = worst - best;
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|(p, _)| p.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if f_spread.is_finite() && (f_spread <= opts.tol_f || x_spread <= opts.tol_x) {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> =
            (0..dim).map(|j| simplex[..dim].iter().map(|(p, _)| p[j]).sum::<f64>() / dim as f64).collect();
        let toward = |from: &[f64], coef: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid.iter().zip(from).map(|(c, x)| c + coef * (x - c)).collect();
            opts.project(&mut p);
            p
        };
        let xr = toward(&simplex[dim].0, -REFLECT);
        let fr = eval(&xr);
        evaluations += 1;
        let second_worst = simplex[dim - 1].1;
        let mut shrink = false;
        if fr < best {
            let xe = toward(&xr, EXPAND);
            let fe = eval(&xe);
            evaluations += 1;
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < second_worst {
            simplex[dim] = (xr, fr);
        } else if fr < worst {
            let xc = toward(&xr, CONTRACT);
            let fc = eval(&xc);
            evaluations += 1;
            if fc <= fr {
                simplex[dim] = (xc, fc);
            } else {
                shrink = true;
            }
        } else {
            let xc = toward(&simplex[dim].0, CONTRACT);
            let fc = eval(&xc);
            evaluations += 1;
            if fc < worst {
                simplex[dim] = (xc, fc);
            } else {
                shrink = true;
            }
        }
        if shrink {
            let anchor = simplex[0].0.clone();
            let moved: Vec<(Vec<f64>, f64)> = simplex[1..]
                .par_iter()
                .map(|(p, _)| {
                    let q: Vec<f64> = anchor.iter().zip(p).map(|(a, x)| a + SHRINK * (x - a)).collect();
                    let v = eval(&q);
                    (q, v)
                })
                .collect();
            evaluations += moved.len();
            simplex.truncate(1);
            simplex.extend(moved);
        }
        let mut vals: Vec<f64> = simplex.iter().map(|s| s.1).collect();
        vals.sort_by(f64::total_cmp);
        history.push(vals[0]);
        trace.push(TraceRow { iteration: iterations, best_f: vals[0], vertex_values: vals });
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(NelderMeadResult {
        x: simplex[0].0.clone(),
        f: simplex[0].1,
        iterations,
        evaluations,
        converged,
        history,
        trace,
        simplex: simplex.into_iter().map(|s| s.0).collect(),
    })
}

/// Splitter figure of merit: weighted deviation (per percent) plus loss (per dB).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Objective {
    pub w_dev_per_percent: f64,
    pub w_loss_per_db: f64,
    pub wavelengths_um: Vec<f64>,
}

impl Default for Objective {
    fn default() -> Self {
        Self { w_dev_per_percent: 10.0, w_loss_per_db: 1.0, wavelengths_um: vec![1.55] }
    }
}

/// The three-point C-band set.
pub const C_BAND_WAVELENGTHS_UM: [f64; 3] = [1.53, 1.55, 1.565];

impl Objective {
    pub fn c_band() -> Self {
        Self { wavelengths_um: C_BAND_WAVELENGTHS_UM.to_vec(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let (d, l) = (self.w_dev_per_percent, self.w_loss_per_db);
        if !(d >= 0.0 && l >= 0.0 && d + l > 0.0 && (d + l).is_finite()) {
            return Err(Error::InvalidInput("objective weights must be non-negative and not both zero".into()));
        }
        if self.wavelengths_um.is_empty() || self.wavelengths_um.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidInput("at least one positive evaluation wavelength is required".into()));
        }
        Ok(())
    }

    /// Mean weighted score over the evaluation wavelengths.
    pub fn evaluate(&self, model: &MmiModel, geom: &MmiGeometry) -> f64 {
        if geom.validate().is_err() {
            return INVALID_PENALTY;
        }
        let mut total = 0.0;
        for &wl in &self.wavelengths_um {
            match model.at_wavelength(wl).transfer(geom, FpvDelta::NONE) {
                Ok(r) => {
                    total +=
                        self.w_dev_per_percent * 100.0 * r.deviation.abs() + self.w_loss_per_db * r.excess_loss.value()
                }
                Err(_) => return INVALID_PENALTY,
            }
        }
        let score = total / self.wavelengths_um.len() as f64;
        if score.is_finite() {
            score
        } else {
            INVALID_PENALTY
        }
    }
}

/// Free variables `(L, W, gap, W_taper)`; waveguide width and thickness stay fixed.
pub fn design_vector(g: &MmiGeometry) -> [f64; 4] {
    [g.length_um, g.width_um, g.gap_um, g.taper_width_um]
}

pub fn from_design_vector(x: &[f64], fixed: &MmiGeometry) -> MmiGeometry {
    MmiGeometry { length_um: x[0], width_um: x[1], gap_um: x[2], taper_width_um: x[3], ..*fixed }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeConfig {
    pub objective: Objective,
    /// Bounds are `reference·(1 ± bound_fraction)` per free variable.
    pub reference: MmiGeometry,
    pub bound_fraction: f64,
    /// Initial simplex step as a fraction of the starting value.
    pub step_fraction: f64,
    pub tol_f: f64,
    pub tol_x_um: f64,
    pub max_iter: usize,
    /// Fresh simplices built around the incumbent after convergence. A
    /// restart that improves by less than `tol_f` ends the search.
    pub restarts: usize,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            objective: Objective::default(),
            reference: MmiGeometry::NOMINAL,
            bound_fraction: 0.3,
            step_fraction: 0.1,
            tol_f: 1e-4,
            tol_x_um: 1e-4,
            max_iter: 300,
            restarts: 3,
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        self.reference.validate()?;
        if !(self.bound_fraction > 0.0 && self.bound_fraction < 1.0) {
            return Err(Error::InvalidInput(format!("bound fraction must lie in (0, 1), got {}", self.bound_fraction)));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction <= self.bound_fraction) {
            return Err(Error::InvalidInput("step fraction must be positive and within the bounds".into()));
        }
        if !(self.tol_f >= 0.0 && self.tol_x_um >= 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidInput("tolerances must be ≥ 0 and max_iter positive".into()));
        }
        Ok(())
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let f = self.bound_fraction;
        design_vector(&self.reference).iter().map(|v| (v * (1.0 - f), v * (1.0 + f))).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MmiOptimization {
    pub geometry: MmiGeometry,
    pub nominal: SplitResult,
    pub initial_objective: f64,
    pub objective: f64,
    pub search: NelderMeadResult,
}

/// Append a restarted run to an earlier one, keeping the trace continuous.
fn merge(mut first: NelderMeadResult, next: NelderMeadResult) -> NelderMeadResult {
    let offset = first.iterations;
    let floor = first.f;
    for mut row in next.trace {
        row.iteration += offset;
        row.best_f = row.best_f.min(floor);
        first.history.push(row.best_f);
        first.trace.push(row);
    }
    if next.f <= first.f {
        first.x = next.x;
        first.f = next.f;
        first.simplex = next.simplex;
    }
    first.iterations += next.iterations;
    first.evaluations += next.evaluations;
    first.converged = next.converged;
    first
}

/// Optimize the splitter geometry starting from `x0`.
pub fn optimize_mmi(model: &MmiModel, x0: &MmiGeometry, cfg: &OptimizeConfig) -> Result<MmiOptimization> {
    cfg.validate()?;
    model.validate()?;
    let start = design_vector(x0);
    let mut opts = NelderMeadOptions::new(start.iter().map(|v| v * cfg.step_fraction).collect());
    opts.tol_f = cfg.tol_f;
    opts.tol_x = cfg.tol_x_um;
    opts.max_iter = cfg.max_iter;
    opts.bounds = Some(cfg.bounds());
    let f = |x: &[f64]| cfg.objective.evaluate(model, &from_design_vector(x, x0));
    let mut projected = start.to_vec();
    opts.project(&mut projected);
    let initial_objective = f(&projected);
    let mut search = nelder_mead(f, &start, &opts)?;
    for _ in 0..cfg.restarts {
        let next = nelder_mead(f, &search.x, &opts)?;
        let improved = search.f - next.f;
        search = merge(search, next);
        if !(improved > cfg.tol_f) {
            break;
        }
    }
    let geometry = from_design_vector(&search.x, x0);
    let nominal = model.at_wavelength(cfg.objective.wavelengths_um[0]).transfer(&geometry, FpvDelta::NONE)?;
    Ok(MmiOptimization { geometry, nominal, initial_objective, objective: search.f, search })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FpvDistribution {
    /// Independent uniform width and thickness biases in `±half_range_nm`.
    Uniform { half_range_nm: f64 },
    /// Independent normal biases, clipped to the supported bias range.
    Gaussian { sigma_nm: f64 },
}

impl Default for FpvDistribution {
    fn default() -> Self {
        Self::Uniform { half_range_nm: 5.0 }
    }
}

impl FpvDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Uniform { half_range_nm: r } if (0.0..=MAX_FPV_NM).contains(&r) => Ok(()),
            Self::Gaussian { sigma_nm: s } if s >= 0.0 && s.is_finite() => Ok(()),
            other => Err(Error::InvalidInput(format!("invalid FPV distribution {other:?}"))),
        }
    }

    /// Draw `n` biases; a longer draw extends a shorter one with the same seed.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<FpvDelta>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws = (0..n).map(|_| match *self {
            Self::Uniform { half_range_nm: r } => {
                let u: f64 = rng.random_range(-1.0..=1.0);
                let v: f64 = rng.random_range(-1.0..=1.0);
                (u * r, v * r)
            }
            Self::Gaussian { sigma_nm: s } => {
                let d = Normal::new(0.0, s).expect("sigma validated");
                (d.sample(&mut rng), d.sample(&mut rng))
            }
        });
        draws.map(|(w, t)| FpvDelta::new(w.clamp(-MAX_FPV_NM, MAX_FPV_NM), t.clamp(-MAX_FPV_NM, MAX_FPV_NM))).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum McTarget {
    #[default]
    Mmi,
    Mzi,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSample {
    pub dw_nm: f64,
    pub dt_nm: f64,
    pub loss_db: f64,
    pub deviation: f64,
    /// Worst-state crosstalk; only for the MZI target.
    pub crosstalk_db: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    /// Sample standard deviation (zero for a single value).
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub p05: f64,
    pub p50: f64,
    pub p95: f64,
}

/// Linearly interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Stats {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("statistics of an empty sample".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            mean,
            std,
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            p05: quantile(&sorted, 0.05),
            p50: quantile(&sorted, 0.5),
            p95: quantile(&sorted, 0.95),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub target: McTarget,
    pub samples: Vec<McSample>,
    pub loss_db: Stats,
    pub deviation: Stats,
    pub crosstalk_db: Option<Stats>,
}

/// Evaluate `target` at `n` sampled fabrication biases.
///
/// The MMI target uses the configuration's splitter geometry and model at
/// its wavelength; the MZI target evaluates the whole device.
pub fn fpv_monte_carlo(
    config: &MziConfig,
    dist: FpvDistribution,
    n: usize,
    seed: u64,
    target: McTarget,
) -> Result<McReport> {
    if n == 0 {
        return Err(Error::InvalidInput("at least one Monte Carlo sample is required".into()));
    }
    config.validate()?;
    let deltas = dist.sample(n, seed)?;
    let model = config.mmi_model.at_wavelength(config.wavelength_um);
    let samples = deltas
        .par_iter()
        .map(|&d| -> Result<McSample> {
            match target {
                McTarget::Mmi => {
                    let r = model.transfer(&config.splitter, d)?;
                    Ok(McSample {
                        dw_nm: d.dw_nm,
                        dt_nm: d.dt_nm,
                        loss_db: r.excess_loss.value(),
                        deviation: r.deviation,
                        crosstalk_db: None,
                    })
                }
                McTarget::Mzi => {
                    let m = metrics(config, d)?;
                    Ok(McSample {
                        dw_nm: d.dw_nm,
                        dt_nm: d.dt_nm,
                        loss_db: m.insertion_loss_db,
                        deviation: m.splitter_deviation,
                        crosstalk_db: Some(m.crosstalk.worst().value()),
                    })
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let column = |f: fn(&McSample) -> f64| samples.iter().map(f).collect::<Vec<f64>>();
    let crosstalk_db = match target {
        McTarget::Mmi => None,
        McTarget::Mzi => Some(Stats::from_values(&column(|s| s.crosstalk_db.unwrap_or(f64::NAN)))?),
    };
    Ok(McReport {
        target,
        loss_db: Stats::from_values(&column(|s| s.loss_db))?,
        deviation: Stats::from_values(&column(|s| s.deviation))?,
        crosstalk_db,
        samples,
    })
}
