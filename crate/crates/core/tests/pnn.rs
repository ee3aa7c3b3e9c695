//! Network training and photonic inference under hardware imperfections.

use pcm_mzi::linalg::CMatrix;
use pcm_mzi::mesh::ImperfectionSpec;
use pcm_mzi::pnn::{
    accuracy_sweep, generate_gaussian_dataset, infer, train_new, DatasetSpec, PhotonicNetwork, PnnModel, SweepConfig,
    TrainConfig,
};
use pcm_mzi::C64;

fn intensities(w: &CMatrix, a: &[f64]) -> Vec<f64> {
    (0..w.nrows())
        .map(|i| {
            let z: C64 = (0..a.len()).map(|j| w[(i, j)] * a[j]).sum();
            z.norm_sqr()
        })
        .collect()
}

/// Straight-line forward pass with unit-norm rescaling between the layers.
fn oracle_outputs(m: &PnnModel, x: &[f64]) -> Vec<f64> {
    let i1 = intensities(&m.w1, x);
    let norm = i1.iter().map(|v| v * v).sum::<f64>().sqrt();
    let a1: Vec<f64> = i1.iter().map(|v| v / norm).collect();
    intensities(&m.w2, &a1)
}

fn oracle_loss(m: &PnnModel, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let out = oracle_outputs(m, x);
        let logits = &out[..m.classes];
        let lse = logits.iter().map(|v| v.exp()).sum::<f64>().ln();
        total += lse - logits[y];
    }
    total / xs.len() as f64
}

fn small_data(n: usize) -> pcm_mzi::pnn::GaussianDataset {
    let spec = DatasetSpec { samples_per_class: 64, ..DatasetSpec::default() }.with_dimension(n);
    generate_gaussian_dataset(&spec).unwrap()
}

#[test]
fn batched_forward_matches_per_sample_oracle() {
    let m = PnnModel::random(5, 3, 9).unwrap();
    let x = vec![0.3, -0.1, 0.8, 0.2, -0.5];
    let got = m.outputs(&x).unwrap();
    for (a, b) in got.iter().zip(oracle_outputs(&m, &x)) {
        assert!((a - b).abs() < 1e-12 * b.max(1.0));
    }
}

#[test]
fn gradients_match_central_differences() {
    let m = PnnModel::random(4, 3, 2).unwrap();
    let xs = vec![vec![0.5, -0.2, 0.1, 0.9], vec![-0.3, 0.7, 0.4, 0.2], vec![0.1, 0.1, -0.8, 0.3]];
    let ys = vec![0, 2, 1];
    let x = CMatrix::from_fn(4, 3, |i, j| C64::new(xs[j][i], 0.0));
    let (loss, g1, g2) = m.loss_and_gradients(&x, &ys);
    assert!((loss - oracle_loss(&m, &xs, &ys)).abs() < 1e-12);
    let h = 1e-6;
    for layer in 0..2 {
        for (i, j) in [(0, 0), (1, 3), (2, 1), (3, 2)] {
            let g = if layer == 0 { g1[(i, j)] } else { g2[(i, j)] };
            for (dir, analytic) in [(C64::new(1.0, 0.0), g.re), (C64::new(0.0, 1.0), g.im)] {
                let nudged = |s: f64| {
                    let mut p = m.clone();
                    let w = if layer == 0 { &mut p.w1 } else { &mut p.w2 };
                    w[(i, j)] += dir * s;
                    oracle_loss(&p, &xs, &ys)
                };
                let numeric = (nudged(h) - nudged(-h)) / (2.0 * h);
                let rel = (analytic - numeric).abs() / numeric.abs().max(1e-3);
                assert!(rel <= 1e-5, "layer {layer} ({i},{j}): {analytic} vs {numeric}");
            }
        }
    }
}

#[test]
fn trained_checkpoint_round_trips_through_json() {
    let data = small_data(8);
    let (model, report) = train_new(&data, &TrainConfig::default()).unwrap();
    assert_eq!(report.test_accuracy, 100.0);
    let text = serde_json::to_string(&model).unwrap();
    let back: PnnModel = serde_json::from_str(&text).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.predict(&data.test_x).unwrap(), model.predict(&data.test_x).unwrap());
}

#[test]
fn device_loss_never_helps_beyond_trial_noise() {
    let data = small_data(16);
    let (model, _) = train_new(&data, &TrainConfig::default()).unwrap();
    let net = PhotonicNetwork::from_model(&model).unwrap();
    let reports: Vec<_> = (0..6)
        .map(|k| {
            let imp = ImperfectionSpec {
                per_mzi_loss_db: 0.1 * k as f64,
                crosstalk_db: Some(-38.0),
                ..ImperfectionSpec::ideal()
            };
            infer(&net, &data, &imp, "loss", 10, 5).unwrap()
        })
        .collect();
    for w in reports.windows(2) {
        let noise = 2.0 * w[0].std.max(w[1].std);
        assert!(w[1].mean <= w[0].mean + noise + 1e-9, "{} -> {}", w[0].mean, w[1].mean);
    }
}

#[test]
fn small_sweep_orders_profiles() {
    let cfg = SweepConfig {
        sizes: vec![8, 16],
        trials: 10,
        dataset: DatasetSpec { samples_per_class: 64, ..DatasetSpec::default() },
        ..SweepConfig::default()
    };
    let (trained, reports) = accuracy_sweep(&cfg).unwrap();
    assert_eq!(reports.len(), 6);
    for t in &trained {
        assert_eq!(t.nominal_accuracy, 100.0);
        let get = |p: &str| reports.iter().find(|r| r.n == t.n && r.profile == p).unwrap();
        assert_eq!(get("ideal").mean, 100.0);
        assert_eq!(get("ideal").std, 0.0);
        assert!(get("pcm").mean >= get("conventional").mean);
    }
    let again = accuracy_sweep(&cfg).unwrap().1;
    assert_eq!(again, reports);
}

#[test]
fn inference_rejects_mismatched_inputs() {
    let data = small_data(8);
    let net = PhotonicNetwork::from_model(&PnnModel::random(16, 4, 0).unwrap()).unwrap();
    assert!(infer(&net, &data, &ImperfectionSpec::ideal(), "ideal", 3, 0).is_err());
    let net = PhotonicNetwork::from_model(&PnnModel::random(8, 4, 0).unwrap()).unwrap();
    assert!(infer(&net, &data, &ImperfectionSpec::ideal(), "ideal", 0, 0).is_err());
    let bad = ImperfectionSpec { per_mzi_loss_db: -1.0, ..ImperfectionSpec::ideal() };
    assert!(infer(&net, &data, &bad, "bad", 3, 0).is_err());
}
