use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use terranav::attitude::wrap_pi;
use terranav::sim::config::CouplingSpec;
use terranav::sim::{self, report, ConfigError, ScenarioConfig, SolveSetup};
use terranav::{NavError, ParameterVector};

/// Terrain-referenced visual navigation: simulation, pose solves and filter tuning.
#[derive(Debug, Parser)]
#[command(name = "terranav", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file (dotted-key TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Accelerometer bias drives velocity errors, gyro bias drives attitude errors.
    #[arg(long, global = true)]
    conventional_bias_coupling: bool,
    /// Huber threshold on per-feature residual norms.
    #[arg(long, global = true, value_name = "T")]
    robust_huber: Option<f64>,
    /// Intersect the terrain once at the initial guess instead of at every iteration.
    #[arg(long, global = true)]
    frozen_ge: bool,
    /// Worker threads (default: 1, or all cores for `mc`).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one closed-loop episode and write episode.csv, vision.csv and summary.txt.
    Simulate,
    /// Solve one pose problem from a perturbed guess and report the errors.
    Solve {
        /// Flow correspondences.
        #[arg(long)]
        features: Option<usize>,
        /// Image noise sigma in normalized units.
        #[arg(long)]
        noise: Option<f64>,
        /// Scale factor on the configured initial-guess offsets; 0 starts at the truth.
        #[arg(long)]
        perturb: Option<f64>,
    },
    /// Estimate the 6x6 vision measurement covariance and write r_calibrated.csv.
    CalibrateR {
        #[arg(long, default_value_t = 200)]
        runs: usize,
    },
    /// Monte-Carlo ensemble of episodes; writes mc.csv and mc_summary.txt.
    Mc {
        #[arg(long, default_value_t = 20)]
        runs: usize,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<NavError> for Failure {
    fn from(e: NavError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<report::ReportError> for Failure {
    fn from(e: report::ReportError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load_config(common: &Common) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.conventional_bias_coupling {
        cfg.filter.coupling = CouplingSpec::Conventional;
    }
    if let Some(t) = common.robust_huber {
        cfg.solver.huber_threshold = t;
    }
    if common.frozen_ge {
        cfg.solver.frozen_ground_points = true;
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn simulate(cfg: &ScenarioConfig, out: &Path) -> Result<(), Failure> {
    let record = sim::run_episode(cfg)?;
    report::write_episode_files(out, &record)?;
    let last = record.final_step();
    let used = record.vision.iter().filter(|v| v.used).count();
    let summary = format!(
        "drift_final_position_error_m = {}\n\
         corrected_final_position_error_m = {}\n\
         drift_final_velocity_error_mps = {}\n\
         corrected_final_velocity_error_mps = {}\n\
         vision_epochs = {}\n\
         vision_fixes_used = {used}\n",
        (last.drift.position - last.truth.position).norm(),
        (last.corrected.position - last.truth.position).norm(),
        (last.drift.velocity - last.truth.velocity).norm(),
        (last.corrected.velocity - last.truth.velocity).norm(),
        record.vision.len(),
    );
    fs::write(out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

const PARAMETER_NAMES: [&str; 12] = [
    "x1", "y1", "z1", "phi1", "theta1", "psi1", "dx", "dy", "dz", "dphi", "dtheta", "dpsi",
];

fn parameter_row(label: &str, p: &ParameterVector) -> String {
    let mut s = format!("{label:<10}");
    for v in p.0.iter() {
        let _ = write!(s, " {v:>14.8}");
    }
    s
}

fn solve(cfg: &ScenarioConfig, out: &Path) -> Result<(), Failure> {
    let grid = sim::synth_terrain(&cfg.terrain)?;
    let setup = SolveSetup::from_solve(cfg);
    let trial = match sim::single_solve(cfg, &grid, &setup, cfg.seed, None) {
        Err(NavError::DegenerateGeometry { rank, condition }) => {
            return Err(Failure::Runtime(format!(
                "degenerate geometry with {} features: Jacobian rank {rank} of 12, condition number {condition:e}",
                setup.n_features
            )))
        }
        other => other?,
    };
    let est = &trial.estimate;
    let mut text = String::new();
    let mut header = format!("{:<10}", "");
    for name in PARAMETER_NAMES {
        let _ = write!(header, " {name:>14}");
    }
    let mut errors = est.params.0 - trial.truth.0;
    for i in [3, 4, 5, 9, 10, 11] {
        errors[i] = wrap_pi(errors[i]);
    }
    let _ = writeln!(text, "features {}  pixel noise {}  t {:.3} s", setup.n_features, setup.pixel_noise, trial.t);
    let _ = writeln!(text, "{header}");
    let _ = writeln!(text, "{}", parameter_row("initial", &trial.initial));
    let _ = writeln!(text, "{}", parameter_row("estimate", &est.params));
    let _ = writeln!(text, "{}", parameter_row("truth", &trial.truth));
    let _ = writeln!(text, "{}", parameter_row("error", &ParameterVector(errors)));
    let _ = writeln!(text, "converged {}", est.converged);
    let _ = writeln!(text, "iterations {}", est.iterations);
    let _ = writeln!(text, "switched_to_lm {}", est.switched_to_lm);
    let _ = writeln!(text, "residual_norm {:e}", est.final_residual_norm);
    let _ = writeln!(text, "rank {}", est.jacobian_rank);
    let _ = writeln!(text, "condition {:e}", est.condition_number);
    let _ = writeln!(text, "position_error_m {:e}", trial.position_error);
    let _ = writeln!(text, "attitude_error_rad {:e}", trial.attitude_error);
    let _ = writeln!(text, "translation_error_m {:e}", trial.translation_error);
    let _ = writeln!(text, "rotation_error_rad {:e}", trial.rotation_error);
    fs::create_dir_all(out)?;
    fs::write(out.join("solve.txt"), &text)?;
    print!("{text}");
    if est.converged {
        Ok(())
    } else {
        Err(Failure::Runtime(format!("solver did not converge in {} iterations", est.iterations)))
    }
}

fn calibrate(cfg: &ScenarioConfig, out: &Path, runs: usize) -> Result<(), Failure> {
    if runs < 30 {
        return Err(Failure::Usage(format!("--runs must be at least 30, got {runs}")));
    }
    let grid = sim::synth_terrain(&cfg.terrain)?;
    let cal = sim::calibrate_r(cfg, &grid, runs)?;
    fs::create_dir_all(out)?;
    let path = out.join("r_calibrated.csv");
    report::write_matrix6(create(&path)?, &cal.covariance)?;
    println!("solves {runs}, failures {}, samples {}", cal.failures, cal.samples);
    println!("diagonal {:?}", cal.covariance.diagonal().as_slice());
    println!("mean {:?}", cal.mean.as_slice());
    println!("wrote {}", path.display());
    Ok(())
}

fn monte_carlo(cfg: &ScenarioConfig, out: &Path, runs: usize) -> Result<(), Failure> {
    if runs == 0 {
        return Err(Failure::Usage("--runs must be positive".into()));
    }
    let grid = sim::synth_terrain(&cfg.terrain)?;
    let r = match &cfg.filter.r_file {
        Some(path) => Some(report::load_matrix6(path).map_err(|e| Failure::Runtime(format!("{path}: {e}")))?),
        None => None,
    };
    let summary = sim::monte_carlo(cfg, &grid, r, runs)?;
    fs::create_dir_all(out)?;
    report::write_monte_carlo(create(&out.join("mc.csv"))?, &summary)?;
    let n = summary.times.len() - 1;
    let text = format!(
        "runs = {runs}\n\
         final_rms_drift_position_m = {}\n\
         final_rms_corrected_position_m = {}\n\
         final_rms_drift_velocity_mps = {}\n\
         final_rms_corrected_velocity_mps = {}\n\
         vision_convergence_rate = {}\n",
        summary.rms_drift_pos[n],
        summary.rms_corrected_pos[n],
        summary.rms_drift_vel[n],
        summary.rms_corrected_vel[n],
        summary.convergence_rate(),
    );
    fs::write(out.join("mc_summary.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli.common)?;
    cfg.validate()?;
    let threads = match (&cli.command, cli.common.threads) {
        (_, Some(0)) => return Err(Failure::Usage("--threads must be positive".into())),
        (_, Some(n)) => n,
        (Command::Mc { .. }, None) => 0,
        (_, None) => 1,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let out = cli.common.out.as_path();
    pool.install(|| match cli.command {
        Command::Simulate => simulate(&cfg, out),
        Command::Solve {
            features,
            noise,
            perturb,
        } => {
            let mut cfg = cfg.clone();
            if let Some(n) = features {
                cfg.solve.n_features = n;
            }
            if let Some(s) = noise {
                cfg.solve.pixel_noise = s;
            }
            if let Some(k) = perturb {
                if !(k >= 0.0) {
                    return Err(Failure::Usage("--perturb must be non-negative".into()));
                }
                cfg.solve.perturb_pos *= k;
                cfg.solve.perturb_att *= k;
            }
            cfg.validate()?;
            solve(&cfg, out)
        }
        Command::CalibrateR { runs } => calibrate(&cfg, out, runs),
        Command::Mc { runs } => monte_carlo(&cfg, out, runs),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
