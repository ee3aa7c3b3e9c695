//! `pcm-mzi`: batch runner for device-level simulations and network-accuracy
//! studies.
//!
//! Every command validates its merged configuration (TOML file plus flags)
//! before computing, and writes its CSV and JSON outputs atomically into the
//! output directory.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical
//! failure, 1 I/O failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pcm_mzi::config::RunConfig;
use pcm_mzi::mmi::{fpv_map, FpvDelta, MmiGeometry};
use pcm_mzi::mzi::{crosstalk_pair, insertion_loss, transmission_vs_xf, SplitterMode};
use pcm_mzi::optimizer::{fpv_monte_carlo, optimize_mmi, McTarget};
use pcm_mzi::pcm::{design_sweep, PcmState};
use pcm_mzi::pnn::{accuracy_sweep, SweepConfig};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] pcm_mzi::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Model(e) if e.is_input_error() => 2,
            CliError::Model(_) => 3,
            CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "pcm-mzi", version, about = "PCM interferometer and photonic network studies")]
struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TargetArg {
    Mmi,
    Mzi,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Splitter loss and splitting-deviation maps over width/thickness bias.
    Mmi {
        /// Points per axis of the bias grid
        #[arg(long)]
        fpv_grid: Option<usize>,
        /// Half-width of the bias grid in nm
        #[arg(long)]
        fpv_range_nm: Option<f64>,
    },
    /// Interferometer transmission versus crystalline fraction.
    Mzi {
        /// Use ideal 50:50 couplers instead of the splitter surrogate.
        #[arg(long)]
        ideal: bool,
        /// Number of crystalline-fraction samples, endpoints included
        #[arg(long)]
        points: Option<usize>,
    },
    /// Phase-shifter response versus crystalline fraction and a design sweep.
    Pcm,
    /// Splitter geometry optimization.
    Optimize {
        /// Start geometry file written by an earlier run.
        #[arg(long)]
        start: Option<PathBuf>,
    },
    /// Monte Carlo sampling of fabrication bias.
    Montecarlo {
        /// Number of fabrication draws
        #[arg(long)]
        samples: Option<usize>,
        /// Device evaluated for each draw
        #[arg(long, value_enum)]
        target: Option<TargetArg>,
    },
    /// Network accuracy versus mesh size and imperfection profile.
    Pnn {
        /// Comma-separated mesh sizes
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        /// Comma-separated imperfection profiles
        #[arg(long, value_delimiter = ',')]
        profiles: Option<Vec<String>>,
        /// Random hardware realizations per size and profile
        #[arg(long)]
        trials: Option<usize>,
    },
}

/// Files produced by a command, written only after it succeeds.
#[derive(Default)]
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        self.add(name, w.into_inner().map_err(|e| CliError::Io(e.into_error()))?);
        Ok(())
    }

    fn json(&mut self, name: &str, value: &serde_json::Value) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    fn write_all(&self, dir: &Path) -> CliResult<()> {
        fs::create_dir_all(dir)?;
        for (name, bytes) in &self.files {
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            tmp.write_all(bytes)?;
            tmp.as_file().sync_all()?;
            tmp.persist(dir.join(name)).map_err(|e| CliError::Io(e.error))?;
        }
        Ok(())
    }
}

/// Git-style content hash: SHA-256 of `"blob <len>\0" + content`.
fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

fn load_config(cli: &Cli) -> CliResult<(RunConfig, Vec<u8>)> {
    let text = match &cli.config {
        Some(path) => fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?,
        None => Vec::new(),
    };
    let s = std::str::from_utf8(&text).map_err(|e| CliError::Config(e.to_string()))?;
    let cfg: RunConfig = toml::from_str(s).map_err(|e| CliError::Config(e.to_string()))?;
    Ok((cfg, text))
}

fn apply_overrides(cli: &Cli, cfg: &mut RunConfig) -> CliResult<()> {
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match &cli.command {
        Command::Mmi { fpv_grid, fpv_range_nm } => {
            if let Some(n) = fpv_grid {
                cfg.mmi.fpv_grid = *n;
            }
            if let Some(r) = fpv_range_nm {
                cfg.mmi.fpv_range_nm = *r;
            }
        }
        Command::Mzi { ideal, points } => {
            if *ideal {
                cfg.mzi.device.splitter_mode = SplitterMode::Ideal;
            }
            if let Some(p) = points {
                cfg.mzi.transmission_points = *p;
            }
        }
        Command::Optimize { start: Some(path) } => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            cfg.optimize.start = toml::from_str::<MmiGeometry>(&text).map_err(|e| CliError::Config(e.to_string()))?;
        }
        Command::Montecarlo { samples, target } => {
            if let Some(n) = samples {
                cfg.montecarlo.samples = *n;
            }
            if let Some(t) = target {
                cfg.montecarlo.target = match t {
                    TargetArg::Mmi => McTarget::Mmi,
                    TargetArg::Mzi => McTarget::Mzi,
                };
            }
        }
        Command::Pnn { sizes, profiles, trials } => {
            if let Some(s) = sizes {
                cfg.pnn.sizes = s.clone();
            }
            if let Some(p) = profiles {
                cfg.pnn.profiles = p.clone();
            }
            if let Some(t) = trials {
                cfg.pnn.trials = *t;
            }
        }
        Command::Pcm | Command::Optimize { start: None } => {}
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Serialize)]
struct FpvRow {
    dw_nm: f64,
    dt_nm: f64,
    loss_db: f64,
    deviation: f64,
}

fn cmd_mmi(cfg: &RunConfig, out: &mut Outputs) -> CliResult<serde_json::Value> {
    let map = fpv_map(&cfg.mmi.model, &cfg.mmi.geometry, cfg.mmi.fpv_range_nm, cfg.mmi.fpv_grid)?;
    let mut rows = Vec::new();
    for (i, &dw) in map.dw_nm.iter().enumerate() {
        for (j, &dt) in map.dt_nm.iter().enumerate() {
            rows.push(FpvRow { dw_nm: dw, dt_nm: dt, loss_db: map.loss_db[i][j], deviation: map.deviation[i][j] });
        }
    }
    out.csv("mmi_fpv_map.csv", &rows)?;
    let s = map.summary;
    println!(
        "mmi: nominal loss {:.4} dB, deviation {:+.5}; over grid loss [{:.4}, {:.4}] dB, deviation [{:+.5}, {:+.5}]",
        s.nominal_loss_db, s.nominal_deviation, s.min_loss_db, s.max_loss_db, s.min_deviation, s.max_deviation
    );
    Ok(serde_json::to_value(s)?)
}

fn cmd_mzi(cfg: &RunConfig, out: &mut Outputs) -> CliResult<serde_json::Value> {
    let dev = &cfg.mzi.device;
    let curve = transmission_vs_xf(dev, cfg.mzi.transmission_points)?;
    out.csv("mzi_transmission.csv", &curve)?;
    let loss = insertion_loss(dev, FpvDelta::NONE)?;
    let xt = crosstalk_pair(dev, FpvDelta::NONE)?;
    println!(
        "mzi: insertion loss {:.4} dB, crosstalk {:.2} dB (bar {:.2}, cross {:.2}), length {:.4} µm",
        loss.value(),
        xt.worst().value(),
        xt.bar_db,
        xt.cross_db,
        dev.total_length_um()
    );
    Ok(json!({
        "insertion_loss_db": loss.value(),
        "crosstalk_db": xt.worst().value(),
        "crosstalk_bar_db": xt.bar_db,
        "crosstalk_cross_db": xt.cross_db,
        "total_length_um": dev.total_length_um(),
    }))
}

#[derive(Serialize)]
struct PhaseRow {
    x_f: f64,
    n_eff_re: f64,
    n_eff_im: f64,
    phase_rad: f64,
    loss_db: f64,
}

fn cmd_pcm(cfg: &RunConfig, out: &mut Outputs) -> CliResult<serde_json::Value> {
    let ps = &cfg.pcm.shifter;
    let wl = cfg.pcm.wavelength_um;
    let n = cfg.pcm.phase_points;
    let rows = (0..n)
        .map(|i| {
            let state = PcmState::new(i as f64 / (n - 1) as f64)?;
            let ne = ps.n_eff(state, wl)?;
            Ok(PhaseRow {
                x_f: state.x_f(),
                n_eff_re: ne.re,
                n_eff_im: ne.im,
                phase_rad: ps.phase_shift(state, wl)?,
                loss_db: ps.insertion_loss(state, wl)?.value(),
            })
        })
        .collect::<pcm_mzi::Result<Vec<_>>>()?;
    out.csv("pcm_phase.csv", &rows)?;
    let sweep = design_sweep(ps, &cfg.pcm.sweep_pcm_thickness_um, &cfg.pcm.sweep_width_um, wl)?;
    out.csv("pcm_design_sweep.csv", &sweep)?;
    let eff = ps.efficiency(wl)?;
    let full = ps.phase_shift(PcmState::CRYSTALLINE, wl)?;
    println!(
        "pcm: efficiency {:.5} π rad/µm, full-switch phase {:.5} π rad over {} µm",
        eff / std::f64::consts::PI,
        full / std::f64::consts::PI,
        ps.geometry.length_um
    );
    Ok(json!({
        "efficiency_pi_per_um": eff / std::f64::consts::PI,
        "full_phase_rad": full,
        "crystalline_loss_db": ps.insertion_loss(PcmState::CRYSTALLINE, wl)?.value(),
    }))
}

#[derive(Serialize)]
struct TraceCsvRow {
    iteration: usize,
    best_f: f64,
    v0: f64,
    v1: f64,
    v2: f64,
    v3: f64,
    v4: f64,
}

fn cmd_optimize(cfg: &RunConfig, out: &mut Outputs) -> CliResult<serde_json::Value> {
    let r = optimize_mmi(&cfg.mmi.model, &cfg.optimize.start, &cfg.optimize.search)?;
    let rows: Vec<TraceCsvRow> = r
        .search
        .trace
        .iter()
        .map(|t| {
            let v = &t.vertex_values;
            TraceCsvRow { iteration: t.iteration, best_f: t.best_f, v0: v[0], v1: v[1], v2: v[2], v3: v[3], v4: v[4] }
        })
        .collect();
    out.csv("optimize_trace.csv", &rows)?;
    let geometry = toml::to_string(&r.geometry).map_err(|e| CliError::Config(e.to_string()))?;
    out.add("optimized_geometry.toml", geometry.into_bytes());
    println!(
        "optimize: objective {:.5} -> {:.5} in {} iterations; deviation {:+.5}, loss {:.4} dB",
        r.initial_objective,
        r.objective,
        r.search.iterations,
        r.nominal.deviation,
        r.nominal.excess_loss.value()
    );
    Ok(json!({
        "initial_objective": r.initial_objective,
        "objective": r.objective,
        "iterations": r.search.iterations,
        "evaluations": r.search.evaluations,
        "converged": r.search.converged,
        "geometry": r.geometry,
        "deviation": r.nominal.deviation,
        "excess_loss_db": r.nominal.excess_loss.value(),
    }))
}

#[derive(Serialize)]
struct McRow {
    index: usize,
    dw_nm: f64,
    dt_nm: f64,
    loss_db: f64,
    deviation: f64,
    crosstalk_db: Option<f64>,
}

fn cmd_montecarlo(cfg: &RunConfig, out: &mut Outputs) -> CliResult<serde_json::Value> {
    let mc = &cfg.montecarlo;
    let r = fpv_monte_carlo(&cfg.mzi.device, mc.distribution, mc.samples, cfg.seed, mc.target)?;
    let rows: Vec<McRow> = r
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| McRow {
            index: i,
            dw_nm: s.dw_nm,
            dt_nm: s.dt_nm,
            loss_db: s.loss_db,
            deviation: s.deviation,
            crosstalk_db: s.crosstalk_db,
        })
        .collect();
    out.csv("montecarlo_samples.csv", &rows)?;
    print!(
        "montecarlo: {} samples, loss max {:.4} dB, |deviation| max {:.5}",
        mc.samples,
        r.loss_db.max,
        r.deviation.max.abs().max(r.deviation.min.abs())
    );
    match &r.crosstalk_db {
        Some(x) => println!(", crosstalk max {:.2} dB", x.max),
        None => println!(),
    }
    Ok(json!({ "loss_db": r.loss_db, "deviation": r.deviation, "crosstalk_db": r.crosstalk_db }))
}

#[derive(Serialize)]
struct AccuracyRow {
    n: usize,
    profile: String,
    mean_acc: f64,
    std: f64,
    trials: usize,
}

fn cmd_pnn(cfg: &RunConfig, out: &mut Outputs) -> CliResult<serde_json::Value> {
    let p = &cfg.pnn;
    let sweep = SweepConfig {
        sizes: p.sizes.clone(),
        profiles: p.profiles.iter().map(|name| Ok((name.clone(), p.profile(name)?))).collect::<pcm_mzi::Result<_>>()?,
        trials: p.trials,
        seed: cfg.seed,
        dataset: p.dataset,
        train: p.train,
    };
    let (trained, reports) = accuracy_sweep(&sweep)?;
    let rows: Vec<AccuracyRow> = reports
        .iter()
        .map(|r| AccuracyRow { n: r.n, profile: r.profile.clone(), mean_acc: r.mean, std: r.std, trials: r.trials })
        .collect();
    out.csv("pnn_accuracy.csv", &rows)?;
    for t in &trained {
        let mut bytes = serde_json::to_vec(&t.model)?;
        bytes.push(b'\n');
        out.add(&format!("pnn_model_n{}.json", t.n), bytes);
    }
    for r in &reports {
        println!("pnn: N={:<3} {:<14} accuracy {:6.2} % ± {:.2}", r.n, r.profile, r.mean, r.std);
    }
    let nominal: Vec<_> = trained.iter().map(|t| json!({ "n": t.n, "test_accuracy": t.nominal_accuracy })).collect();
    Ok(json!({ "nominal": nominal, "reports": reports }))
}

fn run(cli: &Cli) -> CliResult<()> {
    let (mut cfg, raw) = load_config(cli)?;
    apply_overrides(cli, &mut cfg)?;
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        // a second initialization only happens in tests; the first one wins
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut out = Outputs::default();
    let (name, results) = match &cli.command {
        Command::Mmi { .. } => ("mmi", cmd_mmi(&cfg, &mut out)?),
        Command::Mzi { .. } => ("mzi", cmd_mzi(&cfg, &mut out)?),
        Command::Pcm => ("pcm", cmd_pcm(&cfg, &mut out)?),
        Command::Optimize { .. } => ("optimize", cmd_optimize(&cfg, &mut out)?),
        Command::Montecarlo { .. } => ("montecarlo", cmd_montecarlo(&cfg, &mut out)?),
        Command::Pnn { .. } => ("pnn", cmd_pnn(&cfg, &mut out)?),
    };
    let summary = json!({
        "command": name,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "config_hash": content_hash(&raw),
        "config": cfg,
        "results": results,
    });
    out.json(&format!("{name}_summary.json"), &summary)?;
    out.write_all(&cli.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
