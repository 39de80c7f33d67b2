use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use rslab::config::{parse_config, Mode, RelaxMethod, RunConfig};
use rslab::error::{Error, Result};
use rslab::frac::TimeMesh;
use rslab::fujita::{critical_curve_system, critical_exponent, dichotomy_sweep, verify_lemma_grid};
use rslab::io::{curve_table, evolution_table, fmt_f64, write_csv, write_field_binary, write_json, CsvTable};
use rslab::mild::{critical_r, duhamel_evolve, duhamel_evolve_system, EvolveOptions, Status, Stepping};
use rslab::relaxation::{check_complete_monotonicity, check_decay_bound, contour_curve, solve_volterra};
use rslab::spectral::{auto_box_half_length, measure_decay_exponent, Field, Grid};

#[derive(Parser)]
#[command(name = "rslab", version, about = "Time-fractional Rayleigh-Stokes experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Relaxation function s(t, μ) by product integration and/or contour quadrature.
    Relax(RelaxArgs),
    /// Decay exponent of ‖S_α(t)u₀‖_p for Gaussian data.
    Decay(CommonArgs),
    /// One nonlinear evolution.
    Evolve(CommonArgs),
    /// Global/blow-up classification over an exponent axis.
    Sweep(CommonArgs),
    /// Lemma grid, time scaling and exponent-formula checks.
    Verify(CommonArgs),
}

#[derive(Args)]
struct RelaxArgs {
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    /// Comma separated eigenvalues.
    #[arg(long, default_value = "1")]
    mu: String,
    #[arg(long, default_value_t = 10.0)]
    tmax: f64,
    #[arg(long, default_value_t = 512)]
    nodes: usize,
    #[arg(long, default_value = "both")]
    method: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Skip the provenance sidecar.
    #[arg(long)]
    no_metadata: bool,
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// key=value override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    no_metadata: bool,
}

fn load(mode: Mode, args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    for s in &args.set {
        cfg.apply_override(s)?;
    }
    match cfg.mode {
        Some(m) if m != mode => {
            return Err(Error::config(
                "mode",
                format!("config is for `{}`, subcommand is `{}`", m.as_str(), mode.as_str()),
            ))
        }
        _ => cfg.mode = Some(mode),
    }
    if args.no_metadata {
        cfg.output_metadata = false;
    }
    Ok(cfg)
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    /// Deterministic manifest plus the optional provenance sidecar.
    fn finish(mut self, cfg: &RunConfig) -> Result<()> {
        let manifest = json!({
            "version": env!("CARGO_PKG_VERSION"),
            "mode": cfg.mode.map(|m| m.as_str()),
            "config_hash": cfg.hash(),
            "config": cfg.to_text(),
            "outputs": self.files,
        });
        let path = self.path("manifest.json");
        write_json(path, &manifest)?;
        if cfg.output_metadata {
            let now = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            let prov = json!({
                "config_hash": cfg.hash(),
                "unix_time": now,
                "args": std::env::args().collect::<Vec<_>>(),
                "threads": rayon::current_num_threads(),
            });
            write_json(self.dir.join("provenance.json"), &prov)?;
        }
        Ok(())
    }
}

fn gaussian(grid: Grid, amplitude: f64, width: f64) -> Result<Field> {
    Field::from_fn(grid, |x| {
        amplitude * (-(x[0] * x[0] + x[1] * x[1]) / (width * width)).exp()
    })
}

fn run_relax(cfg: &RunConfig, out: &mut Outputs) -> Result<i32> {
    let params = cfg.params()?;
    let mesh = TimeMesh::graded(cfg.relax_t_end, cfg.relax_nodes - 1, cfg.relax_grading)?;
    let mut summary = Vec::new();
    for (i, &mu) in cfg.relax_mu.iter().enumerate() {
        let mut entry = json!({ "mu": mu });
        let vol = match cfg.relax_method {
            RelaxMethod::Contour => None,
            _ => Some(solve_volterra(mu, &params, &mesh)?),
        };
        let con = match cfg.relax_method {
            RelaxMethod::Volterra => None,
            _ => Some(contour_curve(mu, &params, &mesh)?),
        };
        for curve in vol.iter().chain(con.iter()) {
            let name = format!("relax_{}_{i}.csv", curve.method.as_str());
            write_csv(out.path(&name), &curve_table(curve))?;
            entry[curve.method.as_str()] = json!({
                "monotonicity": check_complete_monotonicity(curve, 3)?,
                "decay_bound": check_decay_bound(curve, &params),
            });
        }
        if let (Some(v), Some(c)) = (&vol, &con) {
            let gap = v
                .values
                .iter()
                .zip(&c.values)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            entry["max_method_gap"] = json!(gap);
        }
        summary.push(entry);
    }
    write_json(
        out.path("relax.json"),
        &json!({ "config_hash": cfg.hash(), "curves": summary }),
    )?;
    Ok(0)
}

fn run_decay(cfg: &RunConfig, out: &mut Outputs) -> Result<i32> {
    let params = cfg.params()?;
    let half = cfg
        .grid_half_length
        .unwrap_or_else(|| auto_box_half_length(&params, cfg.decay_t1));
    let grid = Grid::new(cfg.grid_dim, cfg.grid_points, half)?;
    let u0 = gaussian(grid, cfg.data_amplitude.max(f64::MIN_POSITIVE), cfg.data_width)?;
    let ratio = cfg.decay_t1 / cfg.decay_t0;
    let times: Vec<f64> = (0..cfg.decay_samples)
        .map(|i| cfg.decay_t0 * ratio.powf(i as f64 / (cfg.decay_samples - 1) as f64))
        .collect();
    let fit = measure_decay_exponent(&u0, &params, cfg.decay_r, cfg.decay_p, &times)?;
    let mut table = CsvTable::new(&["t", "bracket_t", "norm_p", "predicted_bound"]);
    for s in &fit.samples {
        table.push_nums(&[s.t, s.bracket_t, s.norm_p, s.predicted_bound]);
    }
    write_csv(out.path("decay.csv"), &table)?;
    write_json(
        out.path("decay.json"),
        &json!({ "config_hash": cfg.hash(), "fit": fit }),
    )?;
    for w in &fit.warnings {
        eprintln!("warning: {w}");
    }
    Ok(0)
}

fn run_evolve(cfg: &RunConfig, out: &mut Outputs) -> Result<i32> {
    let params = cfg.params()?;
    let half = cfg
        .grid_half_length
        .unwrap_or_else(|| auto_box_half_length(&params, cfg.evolve_t_end));
    let grid = Grid::new(cfg.grid_dim, cfg.grid_points, half)?;
    let nl = cfg.nonlinearity(grid.dx())?;
    let u0 = gaussian(grid, cfg.data_amplitude, cfg.data_width)?;
    let opts = EvolveOptions {
        stepping: Stepping::Adaptive {
            t_end: cfg.evolve_t_end,
            dt_max: cfg.evolve_dt_max,
            cfl: cfg.evolve_cfl,
            stops: cfg.snapshot_times.clone(),
        },
        blow_factor: cfg.blow_factor,
        positivity_tol: cfg.positivity_tol,
        picard_tol: cfg.picard_tol,
        picard_max_iterations: cfg.picard_max_iterations,
        source: true,
        keep_snapshots: !cfg.snapshot_times.is_empty(),
    };
    let rec = if cfg.system {
        duhamel_evolve_system(&u0, &u0, &params, &nl, cfg.evolve_r, cfg.evolve_p, &opts)?
    } else {
        duhamel_evolve(&u0, &params, &nl, cfg.evolve_r, cfg.evolve_p, &opts)?
    };
    write_csv(out.path("evolve.csv"), &evolution_table(&rec))?;
    if let Some(snaps) = &rec.snapshots {
        for (i, &t) in cfg.snapshot_times.iter().enumerate() {
            if let Some(n) = rec.mesh.position(t) {
                for (c, comp) in snaps.iter().enumerate() {
                    write_field_binary(out.path(&format!("snapshot_{c}_{i}.bin")), &comp[n])?;
                }
            }
        }
    }
    write_json(
        out.path("evolve.json"),
        &json!({
            "config_hash": cfg.hash(),
            "status": rec.status,
            "blow_threshold": rec.blow_threshold,
            "steps": rec.mesh.len() - 1,
            "final_time": rec.mesh.t_end(),
            "min_ratio": rec.min_ratio,
            "max_picard_iterations": rec.max_picard_iterations,
            "r": rec.r,
            "p": rec.p,
            "epsilon": nl.epsilon,
        }),
    )?;
    Ok(if matches!(rec.status, Status::Inconclusive { .. }) {
        4
    } else {
        0
    })
}

fn run_sweep(cfg: &RunConfig, out: &mut Outputs) -> Result<i32> {
    let report = dichotomy_sweep(&cfg.sweep_config())?;
    let mut table = CsvTable::new(&[
        "value",
        "product",
        "critical",
        "status",
        "t_blow",
        "sup_ratio",
        "amplitude",
        "r",
        "p",
        "steps",
    ]);
    for p in &report.points {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        table.push(vec![
            fmt_f64(p.value),
            opt(p.product),
            fmt_f64(p.critical),
            p.status.clone(),
            opt(p.t_blow),
            fmt_f64(p.sup_ratio),
            fmt_f64(p.amplitude),
            fmt_f64(p.r),
            fmt_f64(p.p),
            p.steps.to_string(),
        ]);
    }
    write_csv(out.path("sweep.csv"), &table)?;
    write_json(out.path("sweep.json"), &report)?;
    let undecided = !report.statuses.is_empty() && report.statuses.iter().all(|s| s == "Inconclusive");
    Ok(if undecided { 4 } else { 0 })
}

fn run_verify(cfg: &RunConfig, out: &mut Outputs) -> Result<i32> {
    let grids = cfg
        .verify_t_values
        .iter()
        .map(|&t| verify_lemma_grid(t))
        .collect::<Result<Vec<_>>>()?;
    let base = &grids[0];
    let spread = |a: &[f64]| {
        let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = a.iter().copied().fold(0.0, f64::max);
        hi / lo - 1.0
    };
    let mut scaling43 = 0.0f64;
    for i in 0..base.lemma43.len() {
        let v: Vec<f64> = grids.iter().map(|g| g.lemma43[i].scaled_lhs).collect();
        scaling43 = scaling43.max(spread(&v));
    }
    let mut scaling44 = 0.0f64;
    for i in 0..base.lemma44.len() {
        let v: Vec<f64> = grids.iter().map(|g| g.lemma44[i].scaled_lhs).collect();
        scaling44 = scaling44.max(spread(&v));
    }
    let mut t43 = CsvTable::new(&[
        "lambda",
        "q",
        "alpha",
        "gamma",
        "lhs",
        "rhs",
        "ratio",
        "holds",
        "sufficient_constant",
    ]);
    for r in &base.lemma43 {
        let mut row: Vec<String> = [r.lambda, r.q, r.alpha, r.gamma, r.lhs, r.rhs, r.ratio]
            .iter()
            .map(|&v| fmt_f64(v))
            .collect();
        row.push(r.holds.to_string());
        row.push(fmt_f64(r.sufficient_constant));
        t43.push(row);
    }
    let mut t44 = CsvTable::new(&[
        "lambda",
        "q",
        "gamma",
        "lhs",
        "rhs",
        "ratio",
        "holds",
        "sufficient_constant",
    ]);
    for r in &base.lemma44 {
        let mut row: Vec<String> = [r.lambda, r.q, r.gamma, r.lhs, r.rhs, r.ratio]
            .iter()
            .map(|&v| fmt_f64(v))
            .collect();
        row.push(r.holds.to_string());
        row.push(fmt_f64(r.sufficient_constant));
        t44.push(row);
    }
    write_csv(out.path("lemma43.csv"), &t43)?;
    write_csv(out.path("lemma44.csv"), &t44)?;

    let rho_c = critical_exponent(cfg.grid_dim, cfg.sigma, cfg.gamma)?;
    let r_c = critical_r(cfg.grid_dim, cfg.sigma, cfg.gamma, cfg.rho);
    let curve = critical_curve_system(cfg.grid_dim, cfg.sigma, cfg.gamma, cfg.rho1, cfg.rho2)?;
    write_json(
        out.path("verify.json"),
        &json!({
            "config_hash": cfg.hash(),
            "t_values": cfg.verify_t_values,
            "lemma43_hold": base.lemma43.iter().filter(|r| r.holds).count(),
            "lemma43_total": base.lemma43.len(),
            "lemma43_worst_ratio": base.lemma43.iter().map(|r| r.ratio).fold(0.0, f64::max),
            "lemma44_hold": base.lemma44.iter().filter(|r| r.holds).count(),
            "lemma44_total": base.lemma44.len(),
            "lemma44_skipped": base.skipped44,
            "lemma44_worst_ratio": base.lemma44.iter().map(|r| r.ratio).fold(0.0, f64::max),
            "sufficient_constants_hold": grids.iter().all(|g| g.all_hold_sufficient()),
            "t_scaling_spread_43": scaling43,
            "t_scaling_spread_44": scaling44,
            "rho_c": rho_c,
            "r_c": r_c,
            "system_curve": curve,
        }),
    )?;
    Ok(0)
}

fn init_threads() {
    if let Some(n) = std::env::var("RSLAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    let (mode, cfg, out_dir) = match cli.command {
        Command::Relax(a) => {
            let mut cfg = RunConfig {
                mode: Some(Mode::Relax),
                ..RunConfig::default()
            };
            cfg.set("frac.alpha", &a.alpha.to_string())?;
            cfg.set("frac.k", &a.k.to_string())?;
            cfg.set("relax.mu", &a.mu)?;
            cfg.set("relax.t_end", &a.tmax.to_string())?;
            cfg.set("relax.nodes", &a.nodes.to_string())?;
            cfg.set("relax.method", &a.method)?;
            cfg.output_metadata = !a.no_metadata;
            cfg.validate()?;
            (Mode::Relax, cfg, a.out)
        }
        Command::Decay(a) => (Mode::Decay, load(Mode::Decay, &a)?, a.out),
        Command::Evolve(a) => (Mode::Evolve, load(Mode::Evolve, &a)?, a.out),
        Command::Sweep(a) => (Mode::Sweep, load(Mode::Sweep, &a)?, a.out),
        Command::Verify(a) => (Mode::Verify, load(Mode::Verify, &a)?, a.out),
    };
    let mut out = Outputs::new(&out_dir);
    let code = match mode {
        Mode::Relax => run_relax(&cfg, &mut out)?,
        Mode::Decay => run_decay(&cfg, &mut out)?,
        Mode::Evolve => run_evolve(&cfg, &mut out)?,
        Mode::Sweep => run_sweep(&cfg, &mut out)?,
        Mode::Verify => run_verify(&cfg, &mut out)?,
    };
    out.finish(&cfg)?;
    Ok(code)
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("rslab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
