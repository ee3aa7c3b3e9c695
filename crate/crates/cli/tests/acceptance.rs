//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p pcm-mzi-cli --test acceptance`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use pcm_mzi::linalg::{frobenius_distance, haar_unitary, CMatrix};
use pcm_mzi::mesh::{decompose, reconstruct, ImperfectionSpec};
use pcm_mzi::mmi::{fpv_map, FpvDelta, MmiGeometry, MmiModel};
use pcm_mzi::mzi::{crosstalk_coefficient, transmission_vs_xf, MziConfig, CROSSTALK_FLOOR_DB};
use pcm_mzi::optimizer::{nelder_mead, optimize_mmi, NelderMeadOptions, OptimizeConfig};
use pcm_mzi::pcm::{PcmMaterial, PcmState, PhaseShifter, TARGET_EFFICIENCY};
use pcm_mzi::pnn::{generate_gaussian_dataset, infer, train_new, DatasetSpec, PhotonicNetwork, PnnModel, TrainConfig};
use pcm_mzi::{ComplexIndex, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn clements_round_trip() -> Check {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for n in [2, 4, 8, 16, 64] {
        for _ in 0..20 {
            let u = haar_unitary(n, &mut rng);
            let (layout, params) = decompose(&u).map_err(|e| e.to_string())?;
            let err = frobenius_distance(&reconstruct(&params, &layout).map_err(|e| e.to_string())?, &u);
            worst = worst.max(err);
        }
    }
    let elapsed = t.elapsed();
    ensure(
        worst < 1e-8 && elapsed < Duration::from_secs(30),
        format!("max Frobenius error {worst:.2e} over 100 unitaries in {elapsed:.1?}"),
    )
}

fn phase_shifter_calibration() -> Check {
    let ps = PhaseShifter::default().with_length(5.0).calibrated(TARGET_EFFICIENCY, 1.55).map_err(|e| e.to_string())?;
    let full = ps.phase_shift(PcmState::CRYSTALLINE, 1.55).map_err(|e| e.to_string())?;
    let zero = ps.phase_shift(PcmState::AMORPHOUS, 1.55).map_err(|e| e.to_string())?;
    ensure(
        (full - PI).abs() <= 0.01 * PI && zero == 0.0,
        format!("phase(5 um, X_f=1) = {:.5} pi, phase(X_f=0) = {zero}", full / PI),
    )
}

fn lorentz_passivity() -> Check {
    let m = PcmMaterial::default();
    let mut worst: f64 = 0.0;
    for params in [&m.amorphous, &m.crystalline] {
        for nm in 1530..=1565 {
            let idx: ComplexIndex = pcm_mzi::pcm::lorentz_index(params, nm as f64 * 1e-3).map_err(|e| e.to_string())?;
            worst = worst.max(idx.k);
        }
    }
    ensure(worst <= 1e-4, format!("max k = {worst:.3e} over 1530..1565 nm, both states"))
}

/// Nominal and FPV-grid splitter band; shared by the surrogate and optimizer checks.
fn splitter_band(geom: &MmiGeometry) -> Check {
    let model = MmiModel::default();
    let nominal = model.transfer(geom, FpvDelta::NONE).map_err(|e| e.to_string())?;
    let map = fpv_map(&model, geom, 5.0, 11).map_err(|e| e.to_string())?;
    let s = map.summary;
    let dev_max = s.max_deviation.abs().max(s.min_deviation.abs());
    let detail = format!(
        "nominal deviation {:+.5}, loss {:.4} dB; 11x11 grid max loss {:.4} dB, max |deviation| {:.5}",
        nominal.deviation,
        nominal.excess_loss.value(),
        s.max_loss_db,
        dev_max
    );
    ensure(
        nominal.deviation.abs() <= 0.02
            && nominal.excess_loss.value() <= 0.2
            && s.max_loss_db <= 0.22
            && dev_max <= 0.02,
        detail,
    )
}

fn mzi_crosstalk() -> Check {
    let surrogate = crosstalk_coefficient(&MziConfig::default(), FpvDelta::NONE).map_err(|e| e.to_string())?.value();
    let ideal = crosstalk_coefficient(&MziConfig::ideal(), FpvDelta::NONE).map_err(|e| e.to_string())?.value();
    ensure(
        (-45.0..=-33.0).contains(&surrogate) && ideal == CROSSTALK_FLOOR_DB,
        format!("surrogate {surrogate:.2} dB, ideal {ideal:.1} dB"),
    )
}

fn transmission_curves() -> Check {
    let ideal = transmission_vs_xf(&MziConfig::ideal(), 101).map_err(|e| e.to_string())?;
    let err = ideal
        .iter()
        .map(|p| {
            let s = (p.x_f * PI / 2.0).sin().powi(2);
            let c = (p.x_f * PI / 2.0).cos().powi(2);
            (p.p_bar - s).abs().max((p.p_cross - c).abs())
        })
        .fold(0.0, f64::max);
    let sur = transmission_vs_xf(&MziConfig::default(), 101).map_err(|e| e.to_string())?;
    let monotone = sur.windows(2).all(|w| w[1].p_bar >= w[0].p_bar && w[1].p_cross <= w[0].p_cross);
    let (first, last) = (sur[0], sur[100]);
    let endpoints = first.p_cross > first.p_bar && last.p_bar > last.p_cross;
    ensure(
        err <= 1e-9 && monotone && endpoints,
        format!(
            "ideal max error {err:.1e}; surrogate monotone {monotone}, X_f=0 cross {:.4}, X_f=1 bar {:.4}",
            first.p_cross, last.p_bar
        ),
    )
}

struct SizeResult {
    nominal: f64,
    train_time: Duration,
    profiles: BTreeMap<&'static str, (f64, f64)>,
}

const PNN_TRIALS: usize = 30;

fn pnn_study() -> Result<BTreeMap<usize, SizeResult>, String> {
    let mut out = BTreeMap::new();
    for n in [8, 16, 32, 64] {
        let data = generate_gaussian_dataset(&DatasetSpec::default().with_dimension(n)).map_err(|e| e.to_string())?;
        let t = Instant::now();
        let (model, report) = train_new(&data, &TrainConfig::default()).map_err(|e| e.to_string())?;
        let train_time = t.elapsed();
        let net = PhotonicNetwork::from_model(&model).map_err(|e| e.to_string())?;
        let mut profiles = BTreeMap::new();
        for name in ["pcm", "conventional"] {
            let imp = ImperfectionSpec::preset(name).map_err(|e| e.to_string())?;
            let r = infer(&net, &data, &imp, name, PNN_TRIALS, 0).map_err(|e| e.to_string())?;
            profiles.insert(name, (r.mean, r.std));
        }
        out.insert(n, SizeResult { nominal: report.test_accuracy, train_time, profiles });
    }
    Ok(out)
}

fn gradient_check() -> Result<f64, String> {
    let m = PnnModel::random(4, 3, 11).map_err(|e| e.to_string())?;
    let xs = [[0.4, -0.3, 0.2, 0.7], [0.1, 0.9, -0.4, 0.2], [-0.6, 0.2, 0.5, 0.1]];
    let ys = [1, 0, 2];
    let x = CMatrix::from_fn(4, 3, |i, j| C64::new(xs[j][i], 0.0));
    let (_, g1, g2) = m.loss_and_gradients(&x, &ys);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for layer in 0..2 {
        for i in 0..4 {
            for j in 0..4 {
                let g = if layer == 0 { g1[(i, j)] } else { g2[(i, j)] };
                for (dir, analytic) in [(C64::new(1.0, 0.0), g.re), (C64::new(0.0, 1.0), g.im)] {
                    let loss_at = |s: f64| {
                        let mut p = m.clone();
                        let w = if layer == 0 { &mut p.w1 } else { &mut p.w2 };
                        w[(i, j)] += dir * s;
                        p.loss_and_gradients(&x, &ys).0
                    };
                    let numeric = (loss_at(h) - loss_at(-h)) / (2.0 * h);
                    worst = worst.max((analytic - numeric).abs() / numeric.abs().max(1e-3));
                }
            }
        }
    }
    Ok(worst)
}

fn pnn_nominal(study: &BTreeMap<usize, SizeResult>) -> Check {
    let grad = gradient_check()?;
    let all_perfect = study.values().all(|s| s.nominal == 100.0);
    let t64 = study[&64].train_time;
    let accs: Vec<String> = study.iter().map(|(n, s)| format!("N={n}: {:.1}%", s.nominal)).collect();
    ensure(
        all_perfect && grad <= 1e-5 && t64 < Duration::from_secs(600),
        format!("{}; gradient rel. error {grad:.1e}; N=64 training {t64:.1?}", accs.join(", ")),
    )
}

fn pnn_imperfect(study: &BTreeMap<usize, SizeResult>) -> Check {
    let s64 = &study[&64];
    let pcm_drop = s64.nominal - s64.profiles["pcm"].0;
    let conv_drop = s64.nominal - s64.profiles["conventional"].0;
    let ordered = study.values().all(|s| s.profiles["pcm"].0 >= s.profiles["conventional"].0);
    let sizes: Vec<&SizeResult> = study.values().collect();
    let monotone = sizes.windows(2).all(|w| {
        let (a, b) = (w[0].profiles["pcm"], w[1].profiles["pcm"]);
        b.0 - a.0 <= 2.0 * a.1.max(b.1)
    });
    let rows: Vec<String> = study
        .iter()
        .map(|(n, s)| {
            format!(
                "N={n} pcm {:.1}±{:.1} conv {:.1}±{:.1}",
                s.profiles["pcm"].0, s.profiles["pcm"].1, s.profiles["conventional"].0, s.profiles["conventional"].1
            )
        })
        .collect();
    ensure(
        pcm_drop <= 10.0 && conv_drop >= 50.0 && ordered && monotone,
        format!(
            "{PNN_TRIALS} trials; N=64 drop pcm {pcm_drop:.1} pts, conventional {conv_drop:.1} pts; ordered {ordered}, monotone {monotone}; {}",
            rows.join("; ")
        ),
    )
}

fn optimizer_checks() -> Check {
    let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
    let r = nelder_mead(rosen, &[-1.2, 1.0], &NelderMeadOptions::new(vec![0.1, 0.1])).map_err(|e| e.to_string())?;
    let rosen_ok = r.iterations <= 500 && (r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4;
    let start = MmiGeometry { length_um: MmiGeometry::NOMINAL.length_um + 0.5, ..MmiGeometry::NOMINAL };
    let opt = optimize_mmi(&MmiModel::default(), &start, &OptimizeConfig::default()).map_err(|e| e.to_string())?;
    let band = splitter_band(&opt.geometry);
    let monotone = opt.search.history.windows(2).all(|w| w[1] <= w[0]) && r.history.windows(2).all(|w| w[1] <= w[0]);
    let detail = format!(
        "Rosenbrock ({:.6}, {:.6}) in {} iterations; perturbed start objective {:.4} -> {:.4}, {}; traces monotone {monotone}",
        r.x[0],
        r.x[1],
        r.iterations,
        opt.initial_objective,
        opt.objective,
        band.as_ref().unwrap_or_else(|e| e)
    );
    ensure(rosen_ok && band.is_ok() && monotone, detail)
}

fn csv_files(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            files.insert(name, fs::read(&path).map_err(|e| e.to_string())?);
        }
    }
    Ok(files)
}

fn cli_determinism() -> Check {
    let tmp = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let config = tmp.path().join("run.toml");
    fs::write(&config, "seed = 3\n[optimize.search]\nmax_iter = 20\nrestarts = 0\n").map_err(|e| e.to_string())?;
    let commands: [&[&str]; 6] = [
        &["mmi", "--fpv-grid", "3"],
        &["mzi"],
        &["pcm"],
        &["optimize"],
        &["montecarlo", "--samples", "20"],
        &["pnn", "--sizes", "8", "--trials", "3"],
    ];
    let mut checked = 0;
    for args in commands {
        let mut runs = Vec::new();
        for k in 0..2 {
            let out = tmp.path().join(format!("{}_{k}", args[0]));
            let status = Command::new(env!("CARGO_BIN_EXE_pcm-mzi"))
                .arg("--config")
                .arg(&config)
                .arg("--out")
                .arg(&out)
                .args(args)
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("{} failed: {}", args[0], String::from_utf8_lossy(&status.stderr)));
            }
            runs.push(csv_files(&out)?);
        }
        if runs[0].is_empty() || runs[0] != runs[1] {
            return Err(format!("{} CSV output differs between runs", args[0]));
        }
        checked += runs[0].len();
    }
    Ok(format!("6 subcommands, {checked} CSV files byte-identical across reruns"))
}

fn guarded(f: impl FnOnce() -> Check) -> Check {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()))
}

fn main() -> ExitCode {
    let study = catch_unwind(pnn_study).unwrap_or_else(|_| Err("panicked".into()));
    let shared = |f: fn(&BTreeMap<usize, SizeResult>) -> Check| match &study {
        Ok(s) => guarded(|| f(s)),
        Err(e) => Err(format!("network study failed: {e}")),
    };
    let results: Vec<(&str, Check)> = vec![
        ("Clements round-trip", guarded(clements_round_trip)),
        ("phase-shifter calibration", guarded(phase_shifter_calibration)),
        ("Lorentz C-band passivity", guarded(lorentz_passivity)),
        ("MMI surrogate band", guarded(|| splitter_band(&MmiGeometry::NOMINAL))),
        ("MZI crosstalk", guarded(mzi_crosstalk)),
        ("transmission vs X_f", guarded(transmission_curves)),
        ("PNN nominal", shared(pnn_nominal)),
        ("PNN under imperfections", shared(pnn_imperfect)),
        ("optimizer", guarded(optimizer_checks)),
        ("CLI determinism", guarded(cli_determinism)),
    ];
    let mut failed = 0;
    for (i, (name, r)) in results.iter().enumerate() {
        match r {
            Ok(d) => println!("criterion {:>2} PASS  {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {d}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
