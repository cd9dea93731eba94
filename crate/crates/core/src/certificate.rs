//! Golfing-scheme construction of an approximate dual certificate.
//!
//! With `W_{i,0} = h_i x_i^*` (unit factors) and fresh partition blocks
//! `Gamma_1, ..., Gamma_P`:
//!
//! ```text
//! lambda_{p-1} = sum_j A_{j,p}(S_{j,p} W_{j,p-1})
//! Y_{i,p}      = Y_{i,p-1} + A_{i,p}^*(lambda_{p-1})
//! W_{i,p}      = h_i x_i^* - P_{T_i}(Y_{i,p})
//! ```
//!
//! The certificate `lambda` places `lambda_{p-1}` on `Gamma_p`, so that
//! `A_i^*(lambda) = Y_{i,P}`.

use serde::Serialize;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::incoherence::{mu_h, tangent_spaces_from_truth, verify_partition, Partition, TangentSpace};
use crate::lifting::{block_gram, LiftedOperator};
use crate::linalg::{spectral_norm, CMat, CVec, C64};

/// How `S_{i,p}` enters the recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramPath {
    /// Inverse of the assembled `T_{i,p}`.
    General,
    /// `S_{i,p} = (L/Q) I`, exact for partial-DFT users on strided blocks.
    ScaledIdentity,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    /// Number of golfing steps `P`.
    pub steps: usize,
    pub l: usize,
    pub q: usize,
    pub r: usize,
    /// `|W_{i,p}|_F`, indexed `[p][i]` for `p = 0..=P`.
    pub w_norms: Vec<Vec<f64>>,
    /// `mu_p` for every `p` whose next block `Gamma_{p+1}` exists.
    pub mu: Vec<f64>,
    /// `sqrt(mu_h^2)` of the unit truth under the same partition.
    pub mu_h: f64,
    /// Final `|h_i x_i^* - P_{T_i}(A_i^*(lambda))|_F`.
    pub residual_t: Vec<f64>,
    /// Final `|P_{T_i^perp}(A_i^*(lambda))|`.
    pub residual_perp: Vec<f64>,
    /// Largest `|W_{i,p} - (h_i x_i^* - P_{T_i}(Y_{i,p}))|_F` along the run.
    pub recursion_drift: f64,
    /// `"verified"` or `"unverified-partition"`.
    pub partition_label: String,
    #[serde(skip)]
    pub lambda: CVec,
    #[serde(skip)]
    pub w: Vec<Vec<CMat>>,
    #[serde(skip)]
    pub y: Vec<CMat>,
}

/// Runs `steps` golfing steps on the first `steps` blocks of `partition`.
pub fn golfing_run(ens: &Ensemble, partition: &Partition, steps: usize) -> Result<CertificateReport> {
    golfing_run_with(ens, partition, steps, GramPath::General)
}

pub fn golfing_run_with(ens: &Ensemble, partition: &Partition, steps: usize, path: GramPath) -> Result<CertificateReport> {
    if steps > partition.p() {
        return Err(Error::Config(format!(
            "P = {steps} exceeds the {} partition blocks",
            partition.p()
        )));
    }
    if partition.l() != ens.l() {
        return Err(Error::Dimension(format!("partition covers {} indices, L = {}", partition.l(), ens.l())));
    }
    let op = LiftedOperator::new(ens);
    let tangents = tangent_spaces_from_truth(ens)?;
    let r = ens.r();
    let l = ens.l();
    let q = partition.q();

    let scaled = C64::new(l as f64 / q as f64, 0.0);
    let gram_s = |p: usize| -> Result<Vec<CMat>> {
        match path {
            GramPath::General => Ok(block_gram(ens, p, partition)?.s),
            GramPath::ScaledIdentity => Ok(ens
                .users()
                .iter()
                .map(|u| CMat::identity(u.k(), u.k()) * scaled)
                .collect()),
        }
    };

    let mut w: Vec<Vec<CMat>> = vec![tangents.iter().map(TangentSpace::anchor).collect()];
    let mut y: Vec<CMat> = ens.dims().iter().map(|&(k, n)| CMat::zeros(k, n)).collect();
    let mut lambda = CVec::zeros(l);
    let mut drift: f64 = 0.0;

    for p in 1..=steps {
        let block = p - 1;
        let s = gram_s(block)?;
        let prev = &w[p - 1];
        let mut lam = CVec::zeros(q);
        for j in 0..r {
            lam += op.apply_restricted(j, partition, block, &(&s[j] * &prev[j]))?;
        }
        for (t, &row) in partition.block(block).iter().enumerate() {
            lambda[row] = lam[t];
        }
        let mut next = Vec::with_capacity(r);
        for i in 0..r {
            let back = op.adjoint_restricted(i, partition, block, &lam)?;
            next.push(&prev[i] - tangents[i].project(&back));
            y[i] += back;
            let direct = tangents[i].anchor() - tangents[i].project(&y[i]);
            drift = drift.max((&direct - &next[i]).norm());
        }
        w.push(next);
    }

    let w_norms = w.iter().map(|ws| ws.iter().map(|m| m.norm()).collect()).collect();
    let mu = (0..=steps)
        .filter(|&p| p < partition.p())
        .map(|p| mu_value(ens, partition, p, &w[p], &gram_s(p)?))
        .collect::<Result<Vec<f64>>>()?;

    let hs: Vec<CVec> = tangents.iter().map(|t| t.h.clone()).collect();
    let mu_h_sq = mu_h(ens, partition, &hs)?.value;

    let back = op.adjoint(&lambda)?;
    let residual_t = (0..r)
        .map(|i| (tangents[i].anchor() - tangents[i].project(&back.blocks[i])).norm())
        .collect();
    let residual_perp = (0..r)
        .map(|i| spectral_norm(&tangents[i].project_perp(&back.blocks[i])))
        .collect();

    let label = if ens.all_partial_dft() || verify_partition(ens, partition)?.pass {
        "verified"
    } else {
        "unverified-partition"
    };

    Ok(CertificateReport {
        steps,
        l,
        q,
        r,
        w_norms,
        mu,
        mu_h: mu_h_sq.sqrt(),
        residual_t,
        residual_perp,
        recursion_drift: drift,
        partition_label: label.to_string(),
        lambda,
        w,
        y,
    })
}

/// `mu_p = (Q / sqrt(L)) max_{i, l in Gamma_{p+1}} |W_{i,p}^* S_{i,p+1} b_{i,l}|`.
fn mu_value(ens: &Ensemble, partition: &Partition, next_block: usize, w: &[CMat], s: &[CMat]) -> Result<f64> {
    let scale = partition.q() as f64 / (ens.l() as f64).sqrt();
    let mut best: f64 = 0.0;
    for (i, u) in ens.users().iter().enumerate() {
        let ws = w[i].adjoint() * &s[i];
        for &row in partition.block(next_block) {
            // b_{i,l} is the conjugate of row l of B_i
            let b = CVec::from_fn(u.k(), |k, _| u.b[(row, k)].conj());
            best = best.max((&ws * b).norm());
        }
    }
    Ok(scale * best)
}

/// `A_{i,p}^*(lambda_{p-1})` for every user, given `W_{.,p-1}`.
pub fn golfing_step(ens: &Ensemble, partition: &Partition, block: usize, w: &[CMat]) -> Result<Vec<CMat>> {
    if w.len() != ens.r() {
        return Err(Error::Dimension(format!("expected {} matrices, got {}", ens.r(), w.len())));
    }
    let op = LiftedOperator::new(ens);
    let s = block_gram(ens, block, partition)?.s;
    let mut lam = CVec::zeros(partition.q());
    for j in 0..ens.r() {
        lam += op.apply_restricted(j, partition, block, &(&s[j] * &w[j]))?;
    }
    (0..ens.r()).map(|i| op.adjoint_restricted(i, partition, block, &lam)).collect()
}

/// Margins of the two certificate conditions and the gate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateCheck {
    pub gamma: f64,
    /// `(5 r gamma)^{-1}`.
    pub alpha: f64,
    pub beta: f64,
    pub residual_t: Vec<f64>,
    pub residual_perp: Vec<f64>,
    /// `alpha - residual_t[i]`.
    pub margin_t: Vec<f64>,
    /// `beta - residual_perp[i]`.
    pub margin_perp: Vec<f64>,
    /// `(1 - beta) - 2 r gamma alpha`.
    pub gate: f64,
    pub t_pass: bool,
    pub perp_pass: bool,
    pub gate_pass: bool,
    pub pass: bool,
}

pub fn check_dual_certificate(ens: &Ensemble, report: &CertificateReport, gamma: f64) -> Result<CertificateCheck> {
    check_certificate_vector(ens, &report.lambda, gamma)
}

/// Evaluates both conditions for an arbitrary `lambda`.
pub fn check_certificate_vector(ens: &Ensemble, lambda: &CVec, gamma: f64) -> Result<CertificateCheck> {
    let op = LiftedOperator::new(ens);
    let tangents = tangent_spaces_from_truth(ens)?;
    let back = op.adjoint(lambda)?;
    let r = ens.r() as f64;
    let alpha = 1.0 / (5.0 * r * gamma);
    let beta = 0.5;
    let residual_t: Vec<f64> = tangents
        .iter()
        .zip(&back.blocks)
        .map(|(t, b)| (t.anchor() - t.project(b)).norm())
        .collect();
    let residual_perp: Vec<f64> = tangents
        .iter()
        .zip(&back.blocks)
        .map(|(t, b)| spectral_norm(&t.project_perp(b)))
        .collect();
    let margin_t: Vec<f64> = residual_t.iter().map(|v| alpha - v).collect();
    let margin_perp: Vec<f64> = residual_perp.iter().map(|v| beta - v).collect();
    let gate = (1.0 - beta) - 2.0 * r * gamma * alpha;
    let t_pass = margin_t.iter().all(|&m| m >= 0.0);
    let perp_pass = margin_perp.iter().all(|&m| m >= 0.0);
    let gate_pass = gate > 0.0;
    Ok(CertificateCheck {
        gamma,
        alpha,
        beta,
        residual_t,
        residual_perp,
        margin_t,
        margin_perp,
        gate,
        t_pass,
        perp_pass,
        gate_pass,
        pass: t_pass && perp_pass && gate_pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuSequence {
    pub values: Vec<f64>,
    /// `halving[p-1]` is `mu_p <= mu_{p-1} / 2`.
    pub halving: Vec<bool>,
    pub mu0_within_mu_h: bool,
}

/// Slack for `mu_0 <= mu_h`, which holds with equality in some cases.
const MU0_SLACK: f64 = 1e-12;

pub fn mu_p_sequence(report: &CertificateReport) -> MuSequence {
    let values = report.mu.clone();
    let halving = values.windows(2).map(|w| w[1] <= 0.5 * w[0]).collect();
    let mu0_within_mu_h = values
        .first()
        .is_none_or(|&m0| m0 <= report.mu_h * (1.0 + MU0_SLACK) + MU0_SLACK);
    MuSequence {
        values,
        halving,
        mu0_within_mu_h,
    }
}

/// One CSV row per `(trial, p, i)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateRow {
    pub trial: usize,
    pub p: usize,
    pub user: usize,
    pub w_norm: f64,
    pub mu_p: Option<f64>,
    pub partition: String,
}

impl CertificateReport {
    pub fn rows(&self, trial: usize) -> Vec<CertificateRow> {
        let mut rows = Vec::new();
        for (p, norms) in self.w_norms.iter().enumerate() {
            for (i, &w_norm) in norms.iter().enumerate() {
                rows.push(CertificateRow {
                    trial,
                    p,
                    user: i,
                    w_norm,
                    mu_p: self.mu.get(p).copied(),
                    partition: self.partition_label.clone(),
                });
            }
        }
        rows
    }

    /// `|W_{i,p}|_F <= 2^{-p}` for all `p` and `i`.
    pub fn w_decay_holds(&self) -> bool {
        self.w_norms
            .iter()
            .enumerate()
            .all(|(p, ns)| ns.iter().all(|&n| n <= 0.5f64.powi(p as i32) * (1.0 + 1e-12)))
    }
}

pub fn write_certificate_csv<W: std::io::Write>(w: W, rows: &[CertificateRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}
