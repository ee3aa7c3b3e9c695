//! Rectangular mesh decomposition and propagation through imperfect hardware.

use approx::assert_abs_diff_eq;
use nalgebra::DVector;
use pcm_mzi::linalg::{frobenius_distance, haar_unitary, CMatrix};
use pcm_mzi::mesh::{
    decompose, propagate, reconstruct, zero_program, CrosstalkModel, ImperfectionSpec, MeshLayout, MeshParams,
    RealizedMesh,
};
use pcm_mzi::mzi::ideal_transfer;
use pcm_mzi::{Error, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_unitary(n: usize, seed: u64) -> CMatrix {
    haar_unitary(n, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn random_field(n: usize, seed: u64) -> Vec<C64> {
    let u = random_unitary(n, seed);
    u.column(0).iter().copied().collect()
}

fn power(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Embed a 2×2 block acting on channels `k`, `k + 1` into an `n × n` identity.
fn embedded(n: usize, k: usize, theta: f64, phi: f64) -> CMatrix {
    let t = ideal_transfer(theta, phi);
    let mut m = CMatrix::identity(n, n);
    m[(k, k)] = t.t11();
    m[(k, k + 1)] = t.t12();
    m[(k + 1, k)] = t.t21();
    m[(k + 1, k + 1)] = t.t22();
    m
}

#[test]
fn haar_matrices_round_trip() {
    for (n, seed) in [(2, 1), (3, 2), (4, 3), (7, 4), (8, 5), (16, 6)] {
        let u = random_unitary(n, seed);
        let (layout, params) = decompose(&u).unwrap();
        assert_eq!(params.mzis.len(), n * (n - 1) / 2);
        assert_eq!(layout.columns.len(), n);
        let err = frobenius_distance(&reconstruct(&params, &layout).unwrap(), &u);
        assert!(err < 1e-8, "n = {n}: {err:.3e}");
    }
}

#[test]
fn two_channel_program_recovers_the_device_phases() {
    for &(theta, phi, a, b) in &[(0.7, 1.9, 0.3, 2.2), (2.5, 0.1, 4.0, 1.0), (1.3, 5.0, 0.0, 0.0)] {
        let u = CMatrix::from_diagonal(&DVector::from_vec(vec![C64::from_polar(1.0, a), C64::from_polar(1.0, b)]))
            * embedded(2, 0, theta, phi);
        let (layout, params) = decompose(&u).unwrap();
        assert_eq!(params.mzis.len(), 1);
        assert_abs_diff_eq!(params.mzis[0].theta, theta, epsilon = 1e-10);
        assert!(frobenius_distance(&reconstruct(&params, &layout).unwrap(), &u) < 1e-10);
    }
}

#[test]
fn zero_program_is_the_product_of_cross_blocks() {
    let n = 5;
    let layout = MeshLayout::rectangular(n).unwrap();
    let mut oracle = CMatrix::identity(n, n);
    for chans in &layout.columns {
        for &k in chans {
            oracle = embedded(n, k, 0.0, 0.0) * oracle;
        }
    }
    let built = reconstruct(&zero_program(&layout), &layout).unwrap();
    assert!(frobenius_distance(&built, &oracle) < 1e-12);
}

#[test]
fn ideal_propagation_equals_matrix_product() {
    let u = random_unitary(8, 11);
    let (layout, params) = decompose(&u).unwrap();
    let x = random_field(8, 12);
    let out = propagate(&params, &layout, &x, &ImperfectionSpec::ideal(), 0).unwrap();
    let expected = &u * DVector::from_vec(x);
    for (a, b) in out.iter().zip(expected.iter()) {
        assert!((a - b).norm() < 1e-10);
    }
}

#[test]
fn per_column_loss_scales_every_output() {
    let n = 6;
    let alpha = 0.1;
    let u = random_unitary(n, 21);
    let (layout, params) = decompose(&u).unwrap();
    let imp = ImperfectionSpec { per_column_loss_db: alpha, ..ImperfectionSpec::ideal() };
    let lossy = RealizedMesh::new(&params, &layout, &imp, 0).unwrap().matrix();
    let scale = 10f64.powf(-(n as f64) * alpha / 20.0);
    assert!(frobenius_distance(&lossy, &(&u * C64::from(scale))) < 1e-10);
}

#[test]
fn per_device_loss_stays_within_path_bounds() {
    let n = 8;
    let u = random_unitary(n, 31);
    let (layout, params) = decompose(&u).unwrap();
    let x = random_field(n, 32);
    let out =
        propagate(&params, &layout, &x, &ImperfectionSpec { per_mzi_loss_db: 0.2, ..ImperfectionSpec::ideal() }, 0)
            .unwrap();
    // every path crosses between n/2 and n devices
    let (lo, hi) = (10f64.powf(-0.2 * n as f64 / 10.0), 10f64.powf(-0.2 * (n / 2) as f64 / 10.0));
    let p = power(&out) / power(&x);
    assert!(lo - 1e-12 <= p && p <= hi + 1e-12, "{p} not in [{lo}, {hi}]");
}

#[test]
fn coherent_realization_matches_its_propagation() {
    let u = random_unitary(6, 41);
    let (layout, params) = decompose(&u).unwrap();
    let mesh = RealizedMesh::new(&params, &layout, &ImperfectionSpec::pcm(), 7).unwrap();
    assert!(mesh.is_coherent());
    let x = random_field(6, 42);
    let out = mesh.propagate(&x, 99).unwrap();
    let expected = mesh.matrix() * DVector::from_vec(x);
    for (a, b) in out.iter().zip(expected.iter()) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn same_seed_same_realization() {
    let u = random_unitary(6, 51);
    let (layout, params) = decompose(&u).unwrap();
    let imp = ImperfectionSpec { phase_noise_sigma: 0.05, ..ImperfectionSpec::conventional() };
    let a = RealizedMesh::new(&params, &layout, &imp, 3).unwrap().matrix();
    let b = RealizedMesh::new(&params, &layout, &imp, 3).unwrap().matrix();
    let c = RealizedMesh::new(&params, &layout, &imp, 4).unwrap().matrix();
    assert_eq!(a, b);
    assert!(frobenius_distance(&a, &c) > 1e-6);
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(MeshLayout::rectangular(1).is_err());
    let mut u = random_unitary(4, 61);
    u[(0, 0)] += C64::new(0.1, 0.0);
    assert!(matches!(decompose(&u), Err(Error::NotUnitary { .. })));
    let layout = MeshLayout::rectangular(4).unwrap();
    let short = MeshParams { mzis: vec![], ..zero_program(&layout) };
    assert!(matches!(reconstruct(&short, &layout), Err(Error::SizeMismatch { .. })));
    let params = zero_program(&layout);
    assert!(propagate(&params, &layout, &[C64::new(1.0, 0.0); 3], &ImperfectionSpec::ideal(), 0).is_err());
    let bad = ImperfectionSpec { crosstalk_db: Some(3.0), ..ImperfectionSpec::ideal() };
    assert!(RealizedMesh::new(&params, &layout, &bad, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn decomposition_round_trips(n in 2usize..10, seed in any::<u64>()) {
        let u = random_unitary(n, seed);
        let (layout, params) = decompose(&u).unwrap();
        prop_assert!(frobenius_distance(&reconstruct(&params, &layout).unwrap(), &u) < 1e-8);
        for p in &params.mzis {
            prop_assert!((0.0..=std::f64::consts::PI + 1e-12).contains(&p.theta));
            prop_assert!((0.0..2.0 * std::f64::consts::PI).contains(&p.phi));
        }
    }

    #[test]
    fn lossless_crosstalk_conserves_power(
        n in 2usize..9,
        seed in any::<u64>(),
        xt in -40.0f64..-10.0,
        incoherent in any::<bool>(),
    ) {
        let (layout, params) = decompose(&random_unitary(n, seed)).unwrap();
        let model = if incoherent { CrosstalkModel::Incoherent } else { CrosstalkModel::Coherent };
        let imp = ImperfectionSpec { crosstalk_db: Some(xt), crosstalk_model: model, ..ImperfectionSpec::ideal() };
        let x = random_field(n, seed.wrapping_add(1));
        let out = propagate(&params, &layout, &x, &imp, seed).unwrap();
        prop_assert!((power(&out) - power(&x)).abs() < 1e-10);
    }

    #[test]
    fn imperfect_mesh_is_passive(n in 2usize..9, seed in any::<u64>(), loss in 0.0f64..1.0, dev in -0.1f64..0.1) {
        let (layout, params) = decompose(&random_unitary(n, seed)).unwrap();
        let imp = ImperfectionSpec {
            per_mzi_loss_db: loss,
            splitting_deviation: dev,
            crosstalk_db: Some(-25.0),
            ..ImperfectionSpec::ideal()
        };
        let m = RealizedMesh::new(&params, &layout, &imp, seed).unwrap().matrix();
        let sigma_max = m.singular_values().max();
        prop_assert!(sigma_max <= 1.0 + 1e-10, "{}", sigma_max);
    }
}
