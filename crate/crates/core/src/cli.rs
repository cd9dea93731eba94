//! The `blind-demix` command line: `gen`, `solve`, `diagnose`, `certify`
//! and `experiment`.
//!
//! Settings come from flags and an optional flat TOML file (`--config`);
//! flags win over the file, the file wins over defaults. Unknown keys in the
//! file are rejected. The resolved settings are logged and written next to
//! the outputs.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 recovery or
//! convergence failure.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::certificate::{check_dual_certificate, golfing_run, mu_p_sequence, write_certificate_csv};
use crate::ensemble::{synthesize, AKind, BKind, Ensemble, EnsembleSpec, NoiseSpec};
use crate::error::{Error, Result};
use crate::harness::{
    run_grid_with_threads, write_outputs, ExperimentGrid, ExperimentKind, NoiseProfile, Profile, EXPERIMENT_NAMES,
};
use crate::incoherence::{default_partition, diagnose, dft_partition, operator_gamma};
use crate::linalg::PowerOptions;
use crate::solver::{solve, SolverConfig, SolverDomain, SolverMode};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "BLIND_DEMIX_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "blind-demix", version, about = "Blind deconvolution and demixing by nuclear-norm minimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize an ensemble and write it as JSON.
    Gen(Settings),
    /// Solve one instance and report recovery.
    Solve(Settings),
    /// Compute incoherence diagnostics.
    Diagnose(Settings),
    /// Run the golfing scheme and check the dual certificate.
    Certify(Settings),
    /// Run an experiment grid: phase-lr, phase-kn, mu-h or noise.
    Experiment {
        name: String,
        #[command(flatten)]
        settings: Settings,
    },
}

/// Every setting, as flag and as config key. All optional; see
/// [`Resolved`] for defaults.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Flat TOML file with any of the keys below.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub l: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long = "K")]
    #[serde(rename = "K")]
    pub k: Option<usize>,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<usize>,
    /// gaussian or hadamard
    #[arg(long = "A")]
    #[serde(rename = "A")]
    pub a: Option<String>,
    /// dft or generic
    #[arg(long = "B")]
    #[serde(rename = "B")]
    pub b: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative noise level: |e| = sigma * sqrt(sum |X_i|_F^2).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Absolute noise norm |e|.
    #[arg(long)]
    pub noise_abs: Option<f64>,
    /// Ball radius; selects the ball-constrained program.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Use eta = |e| of the ensemble's own noise.
    #[arg(long)]
    pub eta_from_noise: Option<bool>,
    /// real or complex
    #[arg(long)]
    pub domain: Option<String>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub over_relaxation: Option<f64>,
    #[arg(long)]
    pub adaptive_rho: Option<bool>,
    /// Ensemble JSON to load instead of synthesizing.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory (default: $BLIND_DEMIX_OUT or ./out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// desk or full; for noise: gaussian-r3 or hadamard-r15.
    #[arg(long)]
    pub profile: Option<String>,
    /// Full-size grid.
    #[arg(long)]
    pub full: Option<bool>,
    /// Number of partition blocks.
    #[arg(long)]
    pub partition_blocks: Option<usize>,
    /// Golfing steps.
    #[arg(long = "P")]
    #[serde(rename = "P")]
    pub golf_steps: Option<usize>,
    #[arg(long)]
    pub include_matrices: Option<bool>,
    /// Write the per-iteration solver trace.
    #[arg(long)]
    pub trace: Option<bool>,
    /// Write the estimated blocks as JSON.
    #[arg(long)]
    pub dump_estimates: Option<bool>,
    /// Log level: error, warn, info, debug, trace.
    #[arg(long)]
    pub log: Option<String>,
}

/// Settings with defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    #[serde(rename = "L")]
    pub l: usize,
    pub r: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "A")]
    pub a: String,
    #[serde(rename = "B")]
    pub b: String,
    pub seed: u64,
    pub sigma: f64,
    pub noise_abs: f64,
    pub eta: f64,
    pub eta_from_noise: bool,
    pub domain: String,
    pub rho: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub over_relaxation: f64,
    pub adaptive_rho: bool,
    pub input: String,
    pub out: String,
    pub threads: usize,
    pub trials: usize,
    pub profile: String,
    pub full: bool,
    pub partition_blocks: usize,
    #[serde(rename = "P")]
    pub golf_steps: usize,
    pub include_matrices: bool,
    pub trace: bool,
    pub dump_estimates: bool,
    pub log: String,
}

macro_rules! merge {
    ($flags:expr, $file:expr, $($field:ident),*) => {
        Settings {
            config: $flags.config.clone(),
            $($field: $flags.$field.clone().or($file.$field.clone()),)*
        }
    };
}

impl Settings {
    /// Reads `--config` (if any) and overlays the flags on it.
    pub fn merged(&self) -> Result<Settings> {
        let file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                toml::from_str::<Settings>(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?
            }
            None => Settings::default(),
        };
        Ok(merge!(
            self, file, l, r, k, n, a, b, seed, sigma, noise_abs, eta, eta_from_noise, domain, rho, max_iters, tol,
            over_relaxation, adaptive_rho, input, out, threads, trials, profile, full, partition_blocks, golf_steps,
            include_matrices, trace, dump_estimates, log
        ))
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let s = self.merged()?;
        let defaults = SolverConfig::default();
        let out = s
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok(Resolved {
            l: s.l.unwrap_or(128),
            r: s.r.unwrap_or(1),
            k: s.k.unwrap_or(5),
            n: s.n.unwrap_or(5),
            a: s.a.unwrap_or_else(|| "gaussian".into()),
            b: s.b.unwrap_or_else(|| "dft".into()),
            seed: s.seed.unwrap_or(0),
            sigma: s.sigma.unwrap_or(0.0),
            noise_abs: s.noise_abs.unwrap_or(0.0),
            eta: s.eta.unwrap_or(0.0),
            eta_from_noise: s.eta_from_noise.unwrap_or(false),
            domain: s.domain.unwrap_or_else(|| "real".into()),
            rho: s.rho.unwrap_or(defaults.rho),
            max_iters: s.max_iters.unwrap_or(defaults.max_iters),
            tol: s.tol.unwrap_or(defaults.tol_primal),
            over_relaxation: s.over_relaxation.unwrap_or(defaults.over_relaxation),
            adaptive_rho: s.adaptive_rho.unwrap_or(defaults.adaptive_rho),
            input: s.input.map(|p| p.display().to_string()).unwrap_or_default(),
            out: out.display().to_string(),
            threads: s.threads.unwrap_or(0),
            trials: s.trials.unwrap_or(10),
            profile: s.profile.unwrap_or_default(),
            full: s.full.unwrap_or(false),
            partition_blocks: s.partition_blocks.unwrap_or(0),
            golf_steps: s.golf_steps.unwrap_or(0),
            include_matrices: s.include_matrices.unwrap_or(false),
            trace: s.trace.unwrap_or(false),
            dump_estimates: s.dump_estimates.unwrap_or(false),
            log: s.log.unwrap_or_else(|| "info".into()),
        })
    }
}

fn parse_a(s: &str) -> Result<AKind> {
    match s {
        "gaussian" => Ok(AKind::Gaussian),
        "hadamard" => Ok(AKind::RandHadamard),
        _ => Err(Error::Config(format!("key 'A': unknown value '{s}' (gaussian, hadamard)"))),
    }
}

fn parse_b(s: &str) -> Result<BKind> {
    match s {
        "dft" => Ok(BKind::PartialDft),
        "generic" => Ok(BKind::GenericOrthonormal),
        _ => Err(Error::Config(format!("key 'B': unknown value '{s}' (dft, generic)"))),
    }
}

impl Resolved {
    fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.out)
    }

    pub fn ensemble_spec(&self) -> Result<EnsembleSpec> {
        let noise = match (self.sigma > 0.0, self.noise_abs > 0.0) {
            (true, true) => return Err(Error::Config("keys 'sigma' and 'noise_abs' are exclusive".into())),
            (true, false) => NoiseSpec::Relative(self.sigma),
            (false, true) => NoiseSpec::Absolute(self.noise_abs),
            (false, false) => NoiseSpec::None,
        };
        Ok(EnsembleSpec::uniform(self.l, self.r, self.k, self.n, parse_b(&self.b)?, parse_a(&self.a)?).with_noise(noise))
    }

    /// Loads `input` or synthesizes from the flags.
    pub fn ensemble(&self) -> Result<Ensemble> {
        if !self.input.is_empty() {
            return Ensemble::from_json(&std::fs::read_to_string(&self.input)?);
        }
        synthesize(&self.ensemble_spec()?, self.seed)
    }

    pub fn solver_config(&self, ens: &Ensemble) -> Result<SolverConfig> {
        let eta = if self.eta_from_noise { ens.eta() } else { self.eta };
        let domain = match self.domain.as_str() {
            "real" => SolverDomain::Real,
            "complex" => SolverDomain::Complex,
            d => return Err(Error::Config(format!("key 'domain': unknown value '{d}' (real, complex)"))),
        };
        let cfg = SolverConfig {
            mode: if eta > 0.0 { SolverMode::BallConstrained(eta) } else { SolverMode::EqualityConstrained },
            domain,
            rho: self.rho,
            max_iters: self.max_iters,
            tol_primal: self.tol,
            tol_dual: self.tol,
            over_relaxation: self.over_relaxation,
            adaptive_rho: self.adaptive_rho,
            record_trace: self.trace,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn power_options(&self) -> PowerOptions {
        PowerOptions {
            seed: self.seed,
            ..PowerOptions::default()
        }
    }

    fn log_and_save(&self, command: &str) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        log::info!("resolved config for '{command}': {}", text.replace('\n', "; "));
        let dir = self.out_dir();
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join(format!("{command}_config.toml")), text)?;
        Ok(())
    }
}

/// Parses the process arguments and runs; returns the exit code.
pub fn main_entry() -> i32 {
    run(std::env::args_os())
}

/// Runs the CLI on explicit arguments (the first is the program name).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn init_logging(level: &str) {
    let _ = env_logger::Builder::new()
        .parse_filters(level)
        .format_timestamp(None)
        .try_init();
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Gen(s) => cmd_gen(&s.resolve()?),
        Command::Solve(s) => cmd_solve(&s.resolve()?),
        Command::Diagnose(s) => cmd_diagnose(&s.resolve()?),
        Command::Certify(s) => cmd_certify(&s.resolve()?),
        Command::Experiment { name, settings } => cmd_experiment(&name, &settings.resolve()?),
    }
}

pub fn cmd_gen(cfg: &Resolved) -> Result<i32> {
    init_logging(&cfg.log);
    cfg.log_and_save("gen")?;
    let ens = cfg.ensemble()?;
    let path = cfg.out_dir().join("ensemble.json");
    std::fs::write(&path, ens.to_json(cfg.include_matrices)?)?;
    println!("{}", path.display());
    Ok(EXIT_OK)
}

pub fn cmd_solve(cfg: &Resolved) -> Result<i32> {
    init_logging(&cfg.log);
    cfg.log_and_save("solve")?;
    let ens = cfg.ensemble()?;
    let solver = cfg.solver_config(&ens)?;
    let rep = solve(&ens, &solver)?;
    let dir = cfg.out_dir();
    rep.write_csv(std::fs::File::create(dir.join("solve_report.csv"))?)?;
    if cfg.trace {
        rep.write_trace_csv(std::fs::File::create(dir.join("solve_trace.csv"))?)?;
    }
    if cfg.dump_estimates {
        std::fs::write(dir.join("estimates.json"), serde_json::to_string(&rep.estimates)?)?;
    }
    println!(
        "iterations {} converged {} rel_error {} success {}",
        rep.iterations,
        rep.converged,
        rep.global_rel_error().map(|e| format!("{e:.3e}")).unwrap_or_default(),
        rep.success
    );
    Ok(if rep.success && rep.converged { EXIT_OK } else { EXIT_FAILURE })
}

pub fn cmd_diagnose(cfg: &Resolved) -> Result<i32> {
    init_logging(&cfg.log);
    cfg.log_and_save("diagnose")?;
    let ens = cfg.ensemble()?;
    let part = if cfg.partition_blocks > 0 {
        Some(dft_partition(ens.l(), cfg.partition_blocks)?)
    } else {
        None
    };
    let rep = diagnose(&ens, part.as_ref(), None, &cfg.power_options())?;
    let path = cfg.out_dir().join("incoherence.csv");
    rep.write_csv(std::fs::File::create(&path)?)?;
    println!("{}", path.display());
    Ok(EXIT_OK)
}

pub fn cmd_certify(cfg: &Resolved) -> Result<i32> {
    init_logging(&cfg.log);
    cfg.log_and_save("certify")?;
    let ens = cfg.ensemble()?;
    let part = if cfg.partition_blocks > 0 {
        dft_partition(ens.l(), cfg.partition_blocks)?
    } else {
        default_partition(&ens)?
    };
    let steps = if cfg.golf_steps > 0 { cfg.golf_steps } else { part.p() };
    let rep = golfing_run(&ens, &part, steps)?;
    let gamma = operator_gamma(&ens, &cfg.power_options())?;
    let check = check_dual_certificate(&ens, &rep, gamma)?;
    let seq = mu_p_sequence(&rep);
    let dir = cfg.out_dir();
    write_certificate_csv(std::fs::File::create(dir.join("certificate.csv"))?, &rep.rows(0))?;
    let mut wtr = csv::Writer::from_path(dir.join("certificate_check.csv"))?;
    wtr.write_record(["user", "residual_t", "alpha", "residual_perp", "beta", "gamma", "gate", "pass"])?;
    for i in 0..ens.r() {
        wtr.write_record([
            i.to_string(),
            format!("{:.12e}", check.residual_t[i]),
            format!("{:.12e}", check.alpha),
            format!("{:.12e}", check.residual_perp[i]),
            format!("{}", check.beta),
            format!("{:.12e}", check.gamma),
            format!("{:.12e}", check.gate),
            check.pass.to_string(),
        ])?;
    }
    wtr.flush()?;
    println!(
        "partition {} P={} certificate {} mu halving {:?}",
        rep.partition_label,
        steps,
        if check.pass { "pass" } else { "fail" },
        seq.halving
    );
    Ok(EXIT_OK)
}

pub fn cmd_experiment(name: &str, cfg: &Resolved) -> Result<i32> {
    init_logging(&cfg.log);
    let kind = ExperimentKind::parse(name)?;
    cfg.log_and_save(&format!("experiment_{name}"))?;
    let size = |p: &str| -> Result<Profile> {
        match (p, cfg.full) {
            ("", false) | ("desk", false) => Ok(Profile::Desk),
            ("", true) | ("full", _) => Ok(Profile::Full),
            ("desk", true) => Err(Error::Config("keys 'profile' = desk and 'full' conflict".into())),
            _ => Err(Error::Config(format!("key 'profile': unknown value '{p}' (desk, full)"))),
        }
    };
    let a = parse_a(&cfg.a)?;
    let grid = match kind {
        ExperimentKind::PhaseLr => ExperimentGrid::phase_lr(a, size(&cfg.profile)?),
        ExperimentKind::PhaseKn => ExperimentGrid::phase_kn(a, size(&cfg.profile)?),
        ExperimentKind::MuH => ExperimentGrid::mu_h(size(&cfg.profile)?),
        ExperimentKind::Noise => {
            let np = if cfg.profile.is_empty() { "gaussian-r3" } else { &cfg.profile };
            let size = if cfg.full { Profile::Full } else { Profile::Desk };
            ExperimentGrid::noise(NoiseProfile::parse(np)?, size)
        }
    };
    let mut grid = grid.with_trials(cfg.trials).with_seed(cfg.seed);
    let base = grid.solver.clone();
    let domain = match cfg.domain.as_str() {
        "real" => SolverDomain::Real,
        "complex" => SolverDomain::Complex,
        d => return Err(Error::Config(format!("key 'domain': unknown value '{d}' (real, complex)"))),
    };
    grid.solver = SolverConfig {
        domain,
        rho: cfg.rho,
        max_iters: cfg.max_iters,
        tol_primal: cfg.tol,
        tol_dual: cfg.tol,
        over_relaxation: cfg.over_relaxation,
        adaptive_rho: cfg.adaptive_rho,
        ..base
    };
    let threads = (cfg.threads > 0).then_some(cfg.threads);
    let result = run_grid_with_threads(&grid, threads)?;
    let paths = write_outputs(&result, &cfg.out_dir())?;
    for p in &paths {
        println!("{}", p.display());
    }
    if let Some(reg) = &result.regression {
        println!("slope {:.4} r2 {:.4} (amplitude dB: slope {:.4} r2 {:.4})", reg.slope, reg.r2, reg.amplitude_slope, reg.amplitude_r2);
    }
    Ok(EXIT_OK)
}

/// Names accepted by `experiment`.
pub fn experiment_names() -> &'static [&'static str] {
    &EXPERIMENT_NAMES
}
