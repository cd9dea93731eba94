//! Nuclear-norm minimization over the lifted blocks.
//!
//! Solves `min sum_i |Z_i|_*` subject to `Phi(Z) = y` (equality mode) or
//! `|Phi(Z) - y| <= eta` (ball mode) with over-relaxed ADMM: singular value
//! thresholding per block, projection onto the constraint set through the
//! eigen-decomposition of `Phi Phi^*`, and a scaled dual update.

use serde::Serialize;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::incoherence::fmt_f;
use crate::lifting::{GramFactor, LiftedBlocks, LiftedOperator, RealGramFactor};
use crate::linalg::{to_complex_vec, CMat, CVec, RMat, RVec, C64};

/// Success threshold on the global relative error.
pub const SUCCESS_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SolverMode {
    EqualityConstrained,
    BallConstrained(f64),
}

/// Field of the lifted unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolverDomain {
    /// Real `K_i x N_i` blocks, for real `h_i` and `x_i`.
    Real,
    Complex,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    pub mode: SolverMode,
    pub domain: SolverDomain,
    pub rho: f64,
    pub max_iters: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    /// Over-relaxation factor in `[1, 1.9]`.
    pub over_relaxation: f64,
    /// Residual balancing of `rho` within `[rho/10, 10 rho]`.
    pub adaptive_rho: bool,
    /// Keep one [`TraceRow`] per iteration.
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mode: SolverMode::EqualityConstrained,
            domain: SolverDomain::Real,
            rho: 1.0,
            max_iters: 20_000,
            tol_primal: 1e-7,
            tol_dual: 1e-7,
            over_relaxation: 1.6,
            adaptive_rho: true,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn ball(eta: f64) -> Self {
        Self {
            mode: SolverMode::BallConstrained(eta),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad("rho must be positive");
        }
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(1.0..=1.9).contains(&self.over_relaxation) {
            return bad("over_relaxation must lie in [1, 1.9]");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        if let SolverMode::BallConstrained(eta) = self.mode {
            if !(eta >= 0.0 && eta.is_finite()) {
                return bad("eta must be finite and nonnegative");
            }
        }
        Ok(())
    }
}

/// One ADMM iteration, all quantities in the normalized scale `|y| = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub rho: f64,
    /// Fixed-point residual `|zeta_{k+1} - zeta_k|` of the underlying
    /// Douglas-Rachford iterate `zeta = Z + U`.
    pub merit: f64,
}

/// Leading rank-one factors of one block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankOne {
    pub h: CVec,
    pub x: CVec,
    pub sigma1: f64,
    /// `sigma_2 / sigma_1`.
    pub spectral_gap: f64,
}

/// Errors of one user after resolving the scaling ambiguity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlignedError {
    /// `c = <h_hat, h> / |h_hat|^2`.
    pub c: C64,
    /// `|h - c h_hat|`.
    pub h_error: f64,
    /// `|x - x_hat / conj(c)|`.
    pub x_error: f64,
    /// `|X_hat - h x^*|_F / |h x^*|_F`.
    pub lifted_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Score {
    pub users: Vec<AlignedError>,
    /// `sqrt(sum_i |X_hat_i - X_i|_F^2) / sqrt(sum_i |X_i|_F^2)`.
    pub global_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverReport {
    pub estimates: LiftedBlocks,
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// `|Phi(Z_hat) - y| / |y|`.
    pub feasibility: f64,
    pub objective: f64,
    pub factors: Vec<(RankOne, C64)>,
    pub score: Option<Score>,
    pub success: bool,
    pub final_rho: f64,
    pub trace: Vec<TraceRow>,
}

impl Serialize for LiftedBlocks {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let flat: Vec<Vec<[f64; 2]>> = self
            .blocks
            .iter()
            .map(|b| b.iter().map(|c| [c.re, c.im]).collect())
            .collect();
        flat.serialize(s)
    }
}

impl SolverReport {
    pub fn global_rel_error(&self) -> Option<f64> {
        self.score.as_ref().map(|s| s.global_rel_error)
    }

    /// Header and values of the one-row report CSV.
    pub fn csv_record(&self) -> (Vec<String>, Vec<String>) {
        let mut header: Vec<String> = [
            "iterations",
            "converged",
            "primal_residual",
            "dual_residual",
            "feasibility",
            "objective",
            "global_rel_error",
            "success",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let mut row = vec![
            self.iterations.to_string(),
            self.converged.to_string(),
            fmt_f(self.primal_residual),
            fmt_f(self.dual_residual),
            fmt_f(self.feasibility),
            fmt_f(self.objective),
            self.global_rel_error().map(fmt_f).unwrap_or_default(),
            self.success.to_string(),
        ];
        for (i, (f, _)) in self.factors.iter().enumerate() {
            header.push(format!("sigma1_{i}"));
            row.push(fmt_f(f.sigma1));
            header.push(format!("gap_{i}"));
            row.push(fmt_f(f.spectral_gap));
        }
        if let Some(score) = &self.score {
            for (i, u) in score.users.iter().enumerate() {
                header.push(format!("h_error_{i}"));
                row.push(fmt_f(u.h_error));
                header.push(format!("x_error_{i}"));
                row.push(fmt_f(u.x_error));
                header.push(format!("lifted_rel_error_{i}"));
                row.push(fmt_f(u.lifted_rel_error));
            }
        }
        (header, row)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let (header, row) = self.csv_record();
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(&header)?;
        wtr.write_record(&row)?;
        wtr.flush()?;
        Ok(())
    }

    pub fn write_trace_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for row in &self.trace {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Proximal map of `tau |.|_*`: soft-thresholds the singular values.
pub fn svt(m: &CMat, tau: f64) -> CMat {
    if m.is_empty() {
        return m.clone();
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    let mut out = CMat::zeros(m.nrows(), m.ncols());
    for (j, &s) in svd.singular_values.iter().enumerate() {
        let t = s - tau;
        if t > 0.0 {
            out += u.column(j) * v_t.row(j) * C64::new(t, 0.0);
        }
    }
    out
}

/// [`svt`] for real matrices.
pub fn svt_real(m: &RMat, tau: f64) -> RMat {
    if m.is_empty() {
        return m.clone();
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    let mut out = RMat::zeros(m.nrows(), m.ncols());
    for (j, &s) in svd.singular_values.iter().enumerate() {
        let t = s - tau;
        if t > 0.0 {
            out += u.column(j) * v_t.row(j) * t;
        }
    }
    out
}

/// Leading singular triple, phase fixed so that the largest-magnitude entry
/// of `h` is real and positive.
pub fn extract_rank1(m: &CMat) -> RankOne {
    let (k, n) = (m.nrows(), m.ncols());
    let zero = RankOne {
        h: CVec::zeros(k),
        x: CVec::zeros(n),
        sigma1: 0.0,
        spectral_gap: 0.0,
    };
    if m.is_empty() || m.norm() == 0.0 {
        return zero;
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let j = order[0];
    let s1 = sv[j];
    if s1 == 0.0 {
        return zero;
    }
    let s2 = order.get(1).map(|&i| sv[i]).unwrap_or(0.0);
    let mut h: CVec = u.column(j).into_owned();
    let mut x: CVec = v_t.row(j).adjoint();
    let peak = h.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or(C64::new(1.0, 0.0));
    if peak.norm() > 0.0 {
        let phase = peak.conj() / peak.norm();
        // h x^* is unchanged when both factors rotate by the same phase
        h *= phase;
        x *= phase;
    }
    let root = s1.sqrt();
    RankOne {
        h: h * C64::new(root, 0.0),
        x: x * C64::new(root, 0.0),
        sigma1: s1,
        spectral_gap: s2 / s1,
    }
}

/// Resolves `h x^* = (c h_hat)(x_hat / conj(c))^*` and reports both factor
/// errors. A zero estimate skips alignment.
pub fn align_factors(h: &CVec, x: &CVec, est: &RankOne) -> AlignedError {
    let truth = h * x.adjoint();
    let tn = truth.norm();
    let hn2 = est.h.norm_squared();
    if hn2 == 0.0 || est.x.norm_squared() == 0.0 {
        return AlignedError {
            c: C64::new(0.0, 0.0),
            h_error: h.norm(),
            x_error: x.norm(),
            lifted_rel_error: if tn > 0.0 { 1.0 } else { 0.0 },
        };
    }
    let c = est.h.dotc(h) / hn2;
    let h_error = (h - &est.h * c).norm();
    let x_error = (x - &est.x / c.conj()).norm();
    let lifted = &est.h * est.x.adjoint();
    AlignedError {
        c,
        h_error,
        x_error,
        lifted_rel_error: if tn > 0.0 { (lifted - truth).norm() / tn } else { 0.0 },
    }
}

/// Per-user aligned errors from the rank-one factors of each block and the
/// global lifted-matrix metric.
pub fn align_and_score(truth: &[(CVec, CVec)], estimates: &LiftedBlocks) -> Result<Score> {
    if truth.len() != estimates.r() {
        return Err(Error::Dimension(format!(
            "{} truth pairs for {} estimate blocks",
            truth.len(),
            estimates.r()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let mut users = Vec::with_capacity(truth.len());
    for ((h, x), z) in truth.iter().zip(&estimates.blocks) {
        if z.nrows() != h.len() || z.ncols() != x.len() {
            return Err(Error::Dimension("estimate block does not match truth dimensions".into()));
        }
        let t = h * x.adjoint();
        num += (z - &t).norm_squared();
        den += t.norm_squared();
        users.push(align_factors(h, x, &extract_rank1(z)));
    }
    Ok(Score {
        users,
        global_rel_error: if den > 0.0 { (num / den).sqrt() } else { num.sqrt() },
    })
}

fn truth_pairs(ens: &Ensemble) -> Vec<(CVec, CVec)> {
    ens.users()
        .iter()
        .map(|u| (to_complex_vec(&u.h), to_complex_vec(&u.x)))
        .collect()
}

/// Projection onto `{Z : |Phi(Z) - y| <= eta}` (`eta = 0` is the affine set),
/// over complex blocks or over real blocks.
struct Projector<'a> {
    op: &'a LiftedOperator<'a>,
    gram: GramRef<'a>,
    y: CVec,
    eta: f64,
}

enum GramRef<'a> {
    Complex(&'a GramFactor),
    Real(&'a RealGramFactor),
}

/// Multiplier-space solution `w_t` for coefficients `ct` in the eigenbasis.
fn multiplier_coeffs<T>(ct: &[T], lam: &[f64], thr: f64, eta: f64, norm_sqr: impl Fn(&T) -> f64, scale: impl Fn(&T, f64) -> T, zero: T) -> Vec<T>
where
    T: Copy,
{
    if eta == 0.0 {
        return ct
            .iter()
            .zip(lam)
            .map(|(c, &l)| if l > thr { scale(c, 1.0 / l) } else { zero })
            .collect();
    }
    let mags: Vec<f64> = ct.iter().map(&norm_sqr).collect();
    let t = ball_multiplier(&mags, lam, thr, eta);
    ct.iter()
        .zip(lam)
        .map(|(c, &l)| if l > thr { scale(c, t / (1.0 + t * l)) } else { zero })
        .collect()
}

impl Projector<'_> {
    fn project(&self, v: &LiftedBlocks) -> LiftedBlocks {
        let c = self.op.apply_unchecked(v) - &self.y;
        if self.eta > 0.0 && c.norm() <= self.eta {
            return v.clone();
        }
        match self.gram {
            GramRef::Complex(g) => {
                let ct = g.eigenvectors.ad_mul(&c);
                let wt = multiplier_coeffs(
                    ct.as_slice(),
                    &g.eigenvalues,
                    g.null_threshold(),
                    self.eta,
                    |c| c.norm_sqr(),
                    |c, f| c * f,
                    C64::new(0.0, 0.0),
                );
                let w = &g.eigenvectors * CVec::from_vec(wt);
                v - &self.op.adjoint_unchecked(&w)
            }
            GramRef::Real(g) => {
                let l = c.len();
                let cr = RVec::from_fn(2 * l, |j, _| if j < l { c[j].re } else { c[j - l].im });
                let ct = g.eigenvectors.tr_mul(&cr);
                let wt = multiplier_coeffs(ct.as_slice(), &g.eigenvalues, g.null_threshold(), self.eta, |c| c * c, |c, f| c * f, 0.0);
                let w = &g.eigenvectors * RVec::from_vec(wt);
                let z = CVec::from_fn(l, |j, _| C64::new(w[j], w[j + l]));
                let back = self.op.adjoint_unchecked(&z);
                LiftedBlocks::new(
                    v.blocks
                        .iter()
                        .zip(&back.blocks)
                        .map(|(a, b)| a - b.map(|x| C64::new(x.re, 0.0)))
                        .collect(),
                )
            }
        }
    }

    /// Norm of the part of `y` no feasible point can match.
    fn unreachable_norm(&self) -> f64 {
        match self.gram {
            GramRef::Complex(g) => {
                let yt = g.eigenvectors.ad_mul(&self.y);
                let thr = g.null_threshold();
                yt.iter()
                    .zip(&g.eigenvalues)
                    .filter(|(_, &l)| l <= thr)
                    .map(|(c, _)| c.norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            }
            GramRef::Real(g) => {
                let l = self.y.len();
                let yr = RVec::from_fn(2 * l, |j, _| if j < l { self.y[j].re } else { self.y[j - l].im });
                let yt = g.eigenvectors.tr_mul(&yr);
                let thr = g.null_threshold();
                yt.iter()
                    .zip(&g.eigenvalues)
                    .filter(|(_, &l)| l <= thr)
                    .map(|(c, _)| c * c)
                    .sum::<f64>()
                    .sqrt()
            }
        }
    }
}

/// The `t > 0` with `sum_j m_j / (1 + t lambda_j)^2 = eta^2`, where `m_j`
/// are squared coefficient magnitudes.
fn ball_multiplier(mags: &[f64], lam: &[f64], thr: f64, eta: f64) -> f64 {
    let f = |t: f64| -> f64 {
        mags.iter()
            .zip(lam)
            .map(|(m, &l)| {
                let l = if l > thr { l } else { 0.0 };
                m / (1.0 + t * l).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f(hi) > eta && hi < 1e300 {
        lo = hi;
        hi *= 4.0;
    }
    // f is decreasing in t
    for _ in 0..200 {
        let mid = if lo > 0.0 && hi / lo > 1.0 + 1e-6 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if f(mid) > eta {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    hi
}

/// Runs the solver on the ensemble's observation.
pub fn solve(ens: &Ensemble, config: &SolverConfig) -> Result<SolverReport> {
    let op = LiftedOperator::new(ens);
    solve_with(&op, ens.y(), config)
}

/// Runs the solver on an arbitrary observation `y` for the ensemble's
/// operator. Truth-based scores refer to the ensemble's signals.
pub fn solve_with(op: &LiftedOperator<'_>, y: &CVec, config: &SolverConfig) -> Result<SolverReport> {
    config.validate()?;
    let ens = op.ensemble();
    if y.len() != ens.l() {
        return Err(Error::Dimension(format!("y has length {}, L = {}", y.len(), ens.l())));
    }
    let dims = ens.dims();
    let y_norm = y.norm();
    let eta = match config.mode {
        SolverMode::EqualityConstrained => 0.0,
        SolverMode::BallConstrained(eta) => eta,
    };
    if y_norm == 0.0 {
        return Ok(finish(ens, LiftedBlocks::zeros(&dims), 0, true, 0.0, 0.0, 0.0, config.rho, Vec::new()));
    }
    if eta > 0.0 && y_norm <= eta {
        return Err(Error::InfeasibleBall { y_norm, eta });
    }

    let gram = match config.domain {
        SolverDomain::Complex => GramRef::Complex(op.gram_factor()),
        SolverDomain::Real => GramRef::Real(op.real_gram_factor()),
    };
    let proj = Projector {
        op,
        gram,
        y: y / C64::new(y_norm, 0.0),
        eta: eta / y_norm,
    };
    if eta > 0.0 && proj.unreachable_norm() >= proj.eta {
        return Err(Error::InfeasibleBall { y_norm, eta });
    }

    let n_total: usize = dims.iter().map(|&(k, n)| k * n).sum();
    let sqrt_n = (n_total as f64).sqrt();
    let alpha = config.over_relaxation;
    let (rho_min, rho_max) = (config.rho / 10.0, config.rho * 10.0);
    let mut rho = config.rho;

    let mut z = proj.project(&LiftedBlocks::zeros(&dims));
    let mut u = LiftedBlocks::zeros(&dims);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iters = 0;
    let (mut r_norm, mut s_norm) = (f64::INFINITY, f64::INFINITY);

    for k in 1..=config.max_iters {
        iters = k;
        let v = &z - &u;
        let x = LiftedBlocks::new(
            v.blocks
                .iter()
                .map(|b| match config.domain {
                    SolverDomain::Complex => svt(b, 1.0 / rho),
                    SolverDomain::Real => svt_real(&b.map(|c| c.re), 1.0 / rho).map(|r| C64::new(r, 0.0)),
                })
                .collect(),
        );
        // x_hat = alpha x + (1 - alpha) z
        let mut x_hat = &x * alpha;
        x_hat.axpy(1.0 - alpha, &z);
        let z_old = z;
        z = proj.project(&(&x_hat + &u));
        u = &u + &(&x_hat - &z);

        let merit = alpha * (&x - &z_old).norm();
        r_norm = (&x - &z).norm();
        s_norm = rho * (&z - &z_old).norm();
        let eps_pri = sqrt_n * config.tol_primal + config.tol_primal * x.norm().max(z.norm());
        let eps_dual = sqrt_n * config.tol_dual + config.tol_dual * rho * u.norm();
        if config.record_trace {
            trace.push(TraceRow {
                iter: k,
                objective: x.nuclear_norm(),
                primal_residual: r_norm,
                dual_residual: s_norm,
                rho,
                merit,
            });
        }
        if r_norm <= eps_pri && s_norm <= eps_dual {
            converged = true;
            break;
        }
        if config.adaptive_rho && k % 50 == 0 {
            let factor = if r_norm > 10.0 * s_norm {
                2.0
            } else if s_norm > 10.0 * r_norm {
                0.5
            } else {
                1.0
            };
            let new_rho = (rho * factor).clamp(rho_min, rho_max);
            if new_rho != rho {
                u = &u * (rho / new_rho);
                rho = new_rho;
            }
        }
    }
    if !converged {
        log::debug!("solver stopped at max_iters = {iters} (primal {r_norm:.3e}, dual {s_norm:.3e})");
    }
    let estimates = z.scale(C64::new(y_norm, 0.0));
    let feasibility = op_feasibility(op, &estimates, y);
    Ok(finish(
        ens,
        estimates,
        iters,
        converged,
        r_norm * y_norm,
        s_norm * y_norm,
        feasibility,
        rho,
        trace,
    ))
}

fn op_feasibility(op: &LiftedOperator<'_>, z: &LiftedBlocks, y: &CVec) -> f64 {
    let yn = y.norm();
    let r = (op.apply_unchecked(z) - y).norm();
    if yn > 0.0 {
        r / yn
    } else {
        r
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    ens: &Ensemble,
    estimates: LiftedBlocks,
    iterations: usize,
    converged: bool,
    primal_residual: f64,
    dual_residual: f64,
    feasibility: f64,
    final_rho: f64,
    trace: Vec<TraceRow>,
) -> SolverReport {
    let truth = truth_pairs(ens);
    let factors: Vec<(RankOne, C64)> = estimates
        .blocks
        .iter()
        .zip(&truth)
        .map(|(b, (h, x))| {
            let f = extract_rank1(b);
            let c = align_factors(h, x, &f).c;
            (f, c)
        })
        .collect();
    let score = align_and_score(&truth, &estimates).ok();
    let success = score.as_ref().is_some_and(|s| s.global_rel_error < SUCCESS_THRESHOLD);
    SolverReport {
        objective: estimates.nuclear_norm(),
        estimates,
        iterations,
        converged,
        primal_residual,
        dual_residual,
        feasibility,
        factors,
        score,
        success,
        final_rho,
        trace,
    }
}
