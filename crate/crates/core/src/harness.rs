//! Monte-Carlo experiment driver: phase transitions over `(L, r)`, over
//! `(K, N)` at fixed `L`, over `(L, mu_h^2)`, and noise sweeps.
//!
//! Every trial draws its instance from a seed derived from the grid seed,
//! the cell's axis values and the trial index, so results do not depend on
//! scheduling or on the other cells of the grid.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::ensemble::{synthesize, AKind, BKind, EnsembleSpec, NoiseSpec, UserSpec};
use crate::error::{Error, Result};
use crate::incoherence::{fmt_f, mu_h, dft_partition};
use crate::lifting::gram_spectrum;
use crate::linalg::to_complex_vec;
use crate::rng::derive_seed;
use crate::solver::{solve, SolverConfig, SolverMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExperimentKind {
    PhaseLr,
    PhaseKn,
    MuH,
    Noise,
}

pub const EXPERIMENT_NAMES: [&str; 4] = ["phase-lr", "phase-kn", "mu-h", "noise"];

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::PhaseLr => "phase-lr",
            Self::PhaseKn => "phase-kn",
            Self::MuH => "mu-h",
            Self::Noise => "noise",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "phase-lr" => Ok(Self::PhaseLr),
            "phase-kn" => Ok(Self::PhaseKn),
            "mu-h" => Ok(Self::MuH),
            "noise" => Ok(Self::Noise),
            _ => Err(Error::Config(format!(
                "unknown experiment '{s}'; valid names: {}",
                EXPERIMENT_NAMES.join(", ")
            ))),
        }
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

/// Grid size: shrunk desk defaults or the full published grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Profile {
    Desk,
    Full,
}

/// Configuration of a noise sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NoiseProfile {
    /// `r = 3`, dims (20,20), (25,25), (20,20), `L = 256`, Gaussian `A`.
    GaussianR3,
    /// `r = 15`, `K = 15`, `N = 10`, `L = 512`, random Hadamard `A`.
    HadamardR15,
}

impl NoiseProfile {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussian-r3" => Ok(Self::GaussianR3),
            "hadamard-r15" => Ok(Self::HadamardR15),
            _ => Err(Error::Config(format!(
                "unknown noise profile '{s}'; valid: gaussian-r3, hadamard-r15"
            ))),
        }
    }
}

pub const NOISE_SIGMAS: [f64; 9] = [1.0, 0.5, 0.1, 0.05, 0.01, 0.005, 0.001, 0.0005, 0.0001];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(name: &str, values: impl IntoIterator<Item = f64>) -> Self {
        Self {
            name: name.to_string(),
            values: values.into_iter().collect(),
        }
    }

    fn ints(name: &str, values: impl IntoIterator<Item = usize>) -> Self {
        Self::new(name, values.into_iter().map(|v| v as f64))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentGrid {
    pub kind: ExperimentKind,
    pub axes: Vec<Axis>,
    pub trials: usize,
    pub b: BKind,
    pub a: AKind,
    /// Fixed `L` when it is not an axis.
    pub l: usize,
    /// Fixed `r` when it is not an axis.
    pub r: usize,
    /// Per-user `(K, N)`; a single entry is shared by all users.
    pub dims: Vec<(usize, usize)>,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl ExperimentGrid {
    pub fn phase_lr(a: AKind, profile: Profile) -> Self {
        let (axes, dims) = match (a, profile) {
            (AKind::RandHadamard, Profile::Desk) => (
                vec![Axis::ints("L", [64, 128, 256, 512]), Axis::ints("r", 1..=3)],
                vec![(15, 15)],
            ),
            (AKind::RandHadamard, Profile::Full) => (
                vec![Axis::ints("L", [64, 128, 256, 512]), Axis::ints("r", 1..=18)],
                vec![(15, 15)],
            ),
            (_, Profile::Desk) => (
                vec![Axis::ints("L", (1..=6).map(|j| 50 * j)), Axis::ints("r", 1..=3)],
                vec![(30, 25)],
            ),
            (_, Profile::Full) => (
                vec![Axis::ints("L", (1..=16).map(|j| 50 * j)), Axis::ints("r", 1..=7)],
                vec![(30, 25)],
            ),
        };
        Self {
            kind: ExperimentKind::PhaseLr,
            axes,
            trials: 10,
            b: BKind::PartialDft,
            a,
            l: 0,
            r: 0,
            dims,
            seed: 0,
            solver: SolverConfig::default(),
        }
    }

    pub fn phase_kn(a: AKind, profile: Profile) -> Self {
        let values: Vec<usize> = match profile {
            Profile::Desk => vec![5, 15, 25, 35, 45],
            Profile::Full => (1..=10).map(|j| 5 * j).collect(),
        };
        Self {
            kind: ExperimentKind::PhaseKn,
            axes: vec![Axis::ints("K", values.clone()), Axis::ints("N", values)],
            trials: 10,
            b: BKind::PartialDft,
            a,
            l: 128,
            r: 2,
            dims: vec![],
            seed: 0,
            solver: SolverConfig::default(),
        }
    }

    pub fn mu_h(profile: Profile) -> Self {
        let (ls, ms): (Vec<usize>, Vec<usize>) = match profile {
            Profile::Desk => ((2..=8).map(|j| 50 * j).collect(), vec![3, 9, 15, 21, 27, 30]),
            Profile::Full => ((1..=16).map(|j| 50 * j).collect(), (1..=10).map(|j| 3 * j).collect()),
        };
        Self {
            kind: ExperimentKind::MuH,
            axes: vec![Axis::ints("L", ls), Axis::ints("m", ms)],
            trials: 10,
            b: BKind::PartialDft,
            a: AKind::Gaussian,
            l: 0,
            r: 1,
            dims: vec![(30, 30)],
            seed: 0,
            solver: SolverConfig::default(),
        }
    }

    pub fn noise(noise: NoiseProfile, profile: Profile) -> Self {
        let sigmas: Vec<f64> = match profile {
            Profile::Desk => NOISE_SIGMAS[..7].to_vec(),
            Profile::Full => NOISE_SIGMAS.to_vec(),
        };
        let (a, l, r, dims) = match noise {
            NoiseProfile::GaussianR3 => (AKind::Gaussian, 256, 3, vec![(20, 20), (25, 25), (20, 20)]),
            NoiseProfile::HadamardR15 => (AKind::RandHadamard, 512, 15, vec![(15, 10)]),
        };
        Self {
            kind: ExperimentKind::Noise,
            axes: vec![Axis::new("sigma", sigmas)],
            trials: 10,
            b: BKind::PartialDft,
            a,
            l,
            r,
            dims,
            seed: 0,
            solver: SolverConfig::default(),
        }
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.axes.is_empty() || self.axes.iter().any(|a| a.values.is_empty()) {
            return Err(Error::Config("grid must have nonempty axes".into()));
        }
        self.solver.validate()
    }

    /// Cartesian product of the axes, first axis varying slowest.
    pub fn cells(&self) -> Vec<Vec<f64>> {
        let mut cells = vec![vec![]];
        for axis in &self.axes {
            cells = cells
                .into_iter()
                .flat_map(|c| {
                    axis.values.iter().map(move |&v| {
                        let mut c = c.clone();
                        c.push(v);
                        c
                    })
                })
                .collect();
        }
        cells
    }

    fn axis_value(&self, cell: &[f64], name: &str) -> Option<f64> {
        self.axes.iter().position(|a| a.name == name).map(|i| cell[i])
    }

    /// Seed of one trial; depends only on the grid seed, the experiment, the
    /// cell's axis values and the trial index.
    pub fn trial_seed(&self, cell: &[f64], trial: usize) -> u64 {
        let mut path = vec![self.kind.tag()];
        path.extend(cell.iter().map(|v| v.to_bits()));
        path.push(trial as u64);
        derive_seed(self.seed, &path)
    }

    /// The ensemble specification of one cell.
    pub fn cell_spec(&self, cell: &[f64]) -> Result<EnsembleSpec> {
        let get = |name: &str, fallback: usize| -> usize {
            self.axis_value(cell, name).map(|v| v as usize).unwrap_or(fallback)
        };
        let l = get("L", self.l);
        let r = get("r", self.r);
        let users: Vec<UserSpec> = match self.kind {
            ExperimentKind::PhaseKn => {
                let (k, n) = (get("K", 0), get("N", 0));
                (0..r).map(|_| UserSpec::new(k, n, self.b, self.a)).collect()
            }
            _ => (0..r)
                .map(|i| {
                    let (k, n) = if self.dims.len() == 1 { self.dims[0] } else { self.dims[i] };
                    UserSpec::new(k, n, self.b, self.a)
                })
                .collect(),
        };
        let mut spec = EnsembleSpec {
            l,
            users,
            noise: NoiseSpec::None,
        };
        if self.kind == ExperimentKind::MuH {
            let m = get("m", 0);
            let k = spec.users[0].k;
            if m == 0 || m > k {
                return Err(Error::Config(format!("ones count m = {m} must lie in 1..={k}")));
            }
            spec.users[0].h = Some((0..k).map(|j| if j < m { 1.0 } else { 0.0 }).collect());
        }
        if let Some(sigma) = self.axis_value(cell, "sigma") {
            spec.noise = NoiseSpec::Relative(sigma);
        }
        Ok(spec)
    }
}

/// One solved trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub experiment: String,
    pub axes: Vec<f64>,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub rel_error: f64,
    pub iters: usize,
    pub wall_ms: f64,
    pub converged: bool,
    /// Empty, `not-converged`, or the solver error message.
    pub failure: String,
    /// Second-branch `mu_h^2` value (mu-h) or SNR in dB (noise).
    pub extra: Option<f64>,
    /// Noise radius (noise).
    pub eta: Option<f64>,
    /// `(lambda_max / lambda_min) r sqrt(max(K, N))` (noise).
    pub bound_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub axes: Vec<f64>,
    pub successes: usize,
    pub trials: usize,
    pub mean_rel_error: f64,
    pub rel_errors: Vec<f64>,
    pub mean_iters: f64,
    pub wall_ms: f64,
    pub mean_extra: Option<f64>,
}

impl CellResult {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

/// Least-squares fit of mean relative error (dB) against SNR (dB).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseRegression {
    pub sigma: Vec<f64>,
    pub snr_db: Vec<f64>,
    pub mean_rel_error: Vec<f64>,
    /// `10 log10` of the mean relative error.
    pub error_db: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Slope and fit quality with `20 log10` of the error (amplitude dB).
    pub amplitude_slope: f64,
    pub amplitude_r2: f64,
    /// Per sigma: max over trials of `|X_hat - X|_F / (bound_factor * eta)`.
    pub c_fit: Vec<f64>,
}

impl NoiseRegression {
    /// `max c_fit / min c_fit`.
    pub fn c_spread(&self) -> f64 {
        let hi = self.c_fit.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = self.c_fit.iter().cloned().fold(f64::INFINITY, f64::min);
        hi / lo
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub grid: ExperimentGrid,
    pub rows: Vec<TrialRow>,
    pub cells: Vec<CellResult>,
    pub regression: Option<NoiseRegression>,
}

fn run_trial(grid: &ExperimentGrid, cell: &[f64], trial: usize) -> TrialRow {
    let seed = grid.trial_seed(cell, trial);
    let mut row = TrialRow {
        experiment: grid.kind.name().to_string(),
        axes: cell.to_vec(),
        trial,
        seed,
        success: false,
        rel_error: f64::NAN,
        iters: 0,
        wall_ms: 0.0,
        converged: false,
        failure: String::new(),
        extra: None,
        eta: None,
        bound_factor: None,
    };
    let start = Instant::now();
    let outcome = (|| -> Result<()> {
        let spec = grid.cell_spec(cell)?;
        let ens = synthesize(&spec, seed)?;
        let mut cfg = grid.solver.clone();
        match grid.kind {
            ExperimentKind::Noise => {
                cfg.mode = SolverMode::BallConstrained(ens.eta());
                let energy = ens.signal_energy();
                row.eta = Some(ens.eta());
                row.extra = Some(10.0 * (energy / ens.eta().powi(2)).log10());
                let (lo, hi) = gram_spectrum(&ens);
                let kn = ens.dims().iter().map(|&(k, n)| k.max(n)).max().unwrap_or(1);
                row.bound_factor = Some((hi / lo).sqrt() * ens.r() as f64 * (kn as f64).sqrt());
            }
            ExperimentKind::MuH => {
                // any strided partition: only the plain branch is reported
                let part = dft_partition(ens.l(), 1)?;
                let h = vec![to_complex_vec(&ens.user(0).h)];
                row.extra = Some(mu_h(&ens, &part, &h)?.plain_branch);
            }
            _ => {}
        }
        let rep = solve(&ens, &cfg)?;
        row.iters = rep.iterations;
        row.converged = rep.converged;
        row.rel_error = rep.global_rel_error().unwrap_or(f64::NAN);
        row.success = rep.success && rep.converged;
        if !rep.converged {
            row.failure = "not-converged".into();
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        row.failure = e.to_string();
        row.success = false;
    }
    row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    row
}

/// Runs every `(cell, trial)` pair on the current rayon pool.
pub fn run_grid(grid: &ExperimentGrid) -> Result<ExperimentResult> {
    grid.validate()?;
    let cells = grid.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..grid.trials).map(move |t| (c, t)))
        .collect();
    let rows: Vec<TrialRow> = jobs
        .par_iter()
        .map(|&(c, t)| run_trial(grid, &cells[c], t))
        .collect();
    let cell_results = aggregate(&rows);
    let regression = (grid.kind == ExperimentKind::Noise).then(|| noise_regression(&rows));
    Ok(ExperimentResult {
        grid: grid.clone(),
        rows,
        cells: cell_results,
        regression,
    })
}

/// Runs the grid on a pool of `threads` workers (all cores when `None`).
pub fn run_grid_with_threads(grid: &ExperimentGrid, threads: Option<usize>) -> Result<ExperimentResult> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_grid(grid))
}

pub fn run_phase_lr(grid: &ExperimentGrid) -> Result<ExperimentResult> {
    expect_kind(grid, ExperimentKind::PhaseLr)?;
    run_grid(grid)
}

pub fn run_phase_kn(grid: &ExperimentGrid) -> Result<ExperimentResult> {
    expect_kind(grid, ExperimentKind::PhaseKn)?;
    run_grid(grid)
}

pub fn run_mu_h_sweep(grid: &ExperimentGrid) -> Result<ExperimentResult> {
    expect_kind(grid, ExperimentKind::MuH)?;
    run_grid(grid)
}

pub fn run_noise_sweep(grid: &ExperimentGrid) -> Result<ExperimentResult> {
    expect_kind(grid, ExperimentKind::Noise)?;
    run_grid(grid)
}

fn expect_kind(grid: &ExperimentGrid, kind: ExperimentKind) -> Result<()> {
    if grid.kind != kind {
        return Err(Error::Config(format!(
            "expected a {} grid, got {}",
            kind.name(),
            grid.kind.name()
        )));
    }
    Ok(())
}

/// Groups rows by axis values, in order of first appearance.
pub fn aggregate(rows: &[TrialRow]) -> Vec<CellResult> {
    let mut keys: Vec<Vec<f64>> = Vec::new();
    for row in rows {
        if !keys.contains(&row.axes) {
            keys.push(row.axes.clone());
        }
    }
    keys.into_iter()
        .map(|axes| {
            let group: Vec<&TrialRow> = rows.iter().filter(|r| r.axes == axes).collect();
            let n = group.len() as f64;
            let rel_errors: Vec<f64> = group.iter().map(|r| r.rel_error).collect();
            let extras: Vec<f64> = group.iter().filter_map(|r| r.extra).collect();
            CellResult {
                successes: group.iter().filter(|r| r.success).count(),
                trials: group.len(),
                mean_rel_error: rel_errors.iter().sum::<f64>() / n,
                mean_iters: group.iter().map(|r| r.iters as f64).sum::<f64>() / n,
                wall_ms: group.iter().map(|r| r.wall_ms).sum(),
                mean_extra: (!extras.is_empty()).then(|| extras.iter().sum::<f64>() / extras.len() as f64),
                rel_errors,
                axes,
            }
        })
        .collect()
}

/// `(slope, intercept, r2)` of the least-squares line through `(x, y)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

/// Per-sigma averages and the dB regression of a noise sweep.
pub fn noise_regression(rows: &[TrialRow]) -> NoiseRegression {
    let cells = aggregate(rows);
    let mut reg = NoiseRegression {
        sigma: vec![],
        snr_db: vec![],
        mean_rel_error: vec![],
        error_db: vec![],
        slope: f64::NAN,
        intercept: f64::NAN,
        r2: f64::NAN,
        amplitude_slope: f64::NAN,
        amplitude_r2: f64::NAN,
        c_fit: vec![],
    };
    for cell in &cells {
        let group: Vec<&TrialRow> = rows.iter().filter(|r| r.axes == cell.axes).collect();
        reg.sigma.push(cell.axes[0]);
        reg.snr_db.push(cell.mean_extra.unwrap_or(f64::NAN));
        reg.mean_rel_error.push(cell.mean_rel_error);
        reg.error_db.push(10.0 * cell.mean_rel_error.log10());
        let c = group
            .iter()
            .filter_map(|r| {
                let (eta, bf) = (r.eta?, r.bound_factor?);
                // |X_hat - X|_F = rel_error * |X|_F and |X|_F = eta / sigma
                Some(r.rel_error * (eta / cell.axes[0]) / (bf * eta))
            })
            .fold(f64::NEG_INFINITY, f64::max);
        reg.c_fit.push(c);
    }
    if cells.len() >= 2 {
        let (s, i, r2) = linear_fit(&reg.snr_db, &reg.error_db);
        reg.slope = s;
        reg.intercept = i;
        reg.r2 = r2;
        let amp: Vec<f64> = reg.error_db.iter().map(|v| 2.0 * v).collect();
        let (s, _, r2) = linear_fit(&reg.snr_db, &amp);
        reg.amplitude_slope = s;
        reg.amplitude_r2 = r2;
    }
    reg
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

fn axis_fmt(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

const TRIAL_COLUMNS: [&str; 11] = [
    "trial", "seed", "success", "rel_error", "iters", "wall_ms", "converged", "failure", "extra", "eta", "bound_factor",
];

pub fn write_trials_csv<W: std::io::Write>(w: W, grid: &ExperimentGrid, rows: &[TrialRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["experiment".to_string()];
    header.extend(grid.axes.iter().map(|a| a.name.clone()));
    header.extend(TRIAL_COLUMNS.iter().map(|s| s.to_string()));
    wtr.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.experiment.clone()];
        rec.extend(r.axes.iter().map(|&v| axis_fmt(v)));
        rec.extend([
            r.trial.to_string(),
            r.seed.to_string(),
            r.success.to_string(),
            fmt_f(r.rel_error),
            r.iters.to_string(),
            format!("{:.3}", r.wall_ms),
            r.converged.to_string(),
            r.failure.clone(),
            opt(r.extra),
            opt(r.eta),
            opt(r.bound_factor),
        ]);
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parses rows written by [`write_trials_csv`].
pub fn read_trials_csv<R: std::io::Read>(r: R) -> Result<Vec<TrialRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let n_axes = rdr.headers()?.len() - 1 - TRIAL_COLUMNS.len();
    let bad = |what: &str| Error::Config(format!("malformed trial row: {what}"));
    let num = |s: &str| -> Result<f64> { s.parse::<f64>().map_err(|_| bad(s)) };
    let optnum = |s: &str| -> Result<Option<f64>> { if s.is_empty() { Ok(None) } else { num(s).map(Some) } };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        let axes = (0..n_axes).map(|i| num(f(1 + i))).collect::<Result<Vec<_>>>()?;
        let o = 1 + n_axes;
        rows.push(TrialRow {
            experiment: f(0).to_string(),
            axes,
            trial: f(o).parse().map_err(|_| bad("trial"))?,
            seed: f(o + 1).parse().map_err(|_| bad("seed"))?,
            success: f(o + 2) == "true",
            rel_error: num(f(o + 3))?,
            iters: f(o + 4).parse().map_err(|_| bad("iters"))?,
            wall_ms: num(f(o + 5))?,
            converged: f(o + 6) == "true",
            failure: f(o + 7).to_string(),
            extra: optnum(f(o + 8))?,
            eta: optnum(f(o + 9))?,
            bound_factor: optnum(f(o + 10))?,
        });
    }
    Ok(rows)
}

pub fn write_summary_csv<W: std::io::Write>(w: W, grid: &ExperimentGrid, cells: &[CellResult]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["experiment".to_string()];
    header.extend(grid.axes.iter().map(|a| a.name.clone()));
    header.extend(
        ["successes", "trials", "success_rate", "mean_rel_error", "mean_iters", "wall_ms", "mean_extra"]
            .iter()
            .map(|s| s.to_string()),
    );
    wtr.write_record(&header)?;
    for c in cells {
        let mut rec = vec![grid.kind.name().to_string()];
        rec.extend(c.axes.iter().map(|&v| axis_fmt(v)));
        rec.extend([
            c.successes.to_string(),
            c.trials.to_string(),
            format!("{:.4}", c.success_rate()),
            fmt_f(c.mean_rel_error),
            format!("{:.2}", c.mean_iters),
            format!("{:.3}", c.wall_ms),
            opt(c.mean_extra),
        ]);
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_regression_csv<W: std::io::Write>(w: W, reg: &NoiseRegression) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["sigma", "snr_db", "mean_rel_error", "error_db", "c_fit"])?;
    for i in 0..reg.sigma.len() {
        wtr.write_record([
            format!("{}", reg.sigma[i]),
            fmt_f(reg.snr_db[i]),
            fmt_f(reg.mean_rel_error[i]),
            fmt_f(reg.error_db[i]),
            fmt_f(reg.c_fit[i]),
        ])?;
    }
    wtr.write_record(["slope", &fmt_f(reg.slope), "r2", &fmt_f(reg.r2), ""])?;
    wtr.write_record(["amplitude_slope", &fmt_f(reg.amplitude_slope), "amplitude_r2", &fmt_f(reg.amplitude_r2), ""])?;
    wtr.flush()?;
    Ok(())
}

/// Grey-scale heatmap of the success rate over a two-axis grid: white is
/// 1.0, black is 0.0. First axis horizontal, second vertical (increasing
/// upwards).
pub fn heatmap_svg(grid: &ExperimentGrid, cells: &[CellResult]) -> Option<String> {
    if grid.axes.len() != 2 {
        return None;
    }
    let (xs, ys) = (&grid.axes[0].values, &grid.axes[1].values);
    let cell = 28.0;
    let (left, top, bottom) = (60.0, 20.0, 50.0);
    let width = left + cell * xs.len() as f64 + 20.0;
    let height = top + cell * ys.len() as f64 + bottom;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="10">"#
    );
    for c in cells {
        let xi = xs.iter().position(|&v| v == c.axes[0])?;
        let yi = ys.iter().position(|&v| v == c.axes[1])?;
        let g = (255.0 * c.success_rate()).round() as u8;
        let x = left + cell * xi as f64;
        let y = top + cell * (ys.len() - 1 - yi) as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({g},{g},{g})"/>"#
        );
    }
    for (i, &v) in xs.iter().enumerate() {
        let x = left + cell * (i as f64 + 0.5);
        let y = top + cell * ys.len() as f64 + 14.0;
        let _ = writeln!(svg, r#"<text x="{x}" y="{y}" text-anchor="middle">{}</text>"#, axis_fmt(v));
    }
    for (i, &v) in ys.iter().enumerate() {
        let y = top + cell * (ys.len() - 1 - i) as f64 + cell * 0.6;
        let _ = writeln!(svg, r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#, left - 6.0, axis_fmt(v));
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        left + cell * xs.len() as f64 / 2.0,
        height - 10.0,
        grid.axes[0].name
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        top + cell * ys.len() as f64 / 2.0,
        top + cell * ys.len() as f64 / 2.0,
        grid.axes[1].name
    );
    svg.push_str("</svg>\n");
    Some(svg)
}

/// Writes the trial CSV, summary CSV, and (when applicable) the heatmap and
/// the noise regression into `dir`. Returns the written paths.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let name = result.grid.kind.name();
    let mut paths = Vec::new();
    let p = dir.join(format!("{name}_trials.csv"));
    write_trials_csv(std::fs::File::create(&p)?, &result.grid, &result.rows)?;
    paths.push(p);
    let p = dir.join(format!("{name}_summary.csv"));
    write_summary_csv(std::fs::File::create(&p)?, &result.grid, &result.cells)?;
    paths.push(p);
    if let Some(svg) = heatmap_svg(&result.grid, &result.cells) {
        let p = dir.join(format!("{name}_heatmap.svg"));
        std::fs::write(&p, svg)?;
        paths.push(p);
    }
    if let Some(reg) = &result.regression {
        let p = dir.join(format!("{name}_regression.csv"));
        write_regression_csv(std::fs::File::create(&p)?, reg)?;
        paths.push(p);
    }
    Ok(paths)
}
