//! Incoherence quantities, common partitions, tangent spaces and the
//! operator norms behind the sufficient recovery conditions.

use rayon::prelude::*;
use serde::Serialize;

use crate::ensemble::Ensemble;
use crate::error::{dim_err, Error, Result};
use crate::lifting::{block_gram, block_t, LiftedOperator};
use crate::linalg::{
    operator_norm, spectral_norm, to_complex_vec, CMat, CVec, LinearMap, PowerOptions, C64,
};

/// A disjoint cover `{Gamma_p}` of the measurement indices by `P` blocks of
/// equal size `Q`. Indices are 0-based storage rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Partition {
    l: usize,
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(l: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        if blocks.is_empty() {
            return dim_err("partition needs at least one block");
        }
        let q = blocks[0].len();
        if q == 0 || blocks.iter().any(|b| b.len() != q) {
            return dim_err("partition blocks must be nonempty and of equal size");
        }
        if q * blocks.len() != l {
            return dim_err(format!("P * Q = {} does not equal L = {l}", q * blocks.len()));
        }
        let mut seen = vec![false; l];
        for &idx in blocks.iter().flatten() {
            if idx >= l || seen[idx] {
                return dim_err(format!("index {idx} out of range or repeated"));
            }
            seen[idx] = true;
        }
        Ok(Self { l, blocks })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    /// Number of blocks `P`.
    pub fn p(&self) -> usize {
        self.blocks.len()
    }

    /// Block size `Q`.
    pub fn q(&self) -> usize {
        self.blocks[0].len()
    }

    pub fn block(&self, p: usize) -> &[usize] {
        &self.blocks[p]
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }
}

/// Strided partition `Gamma_p = {p, P + p, ..., (Q-1) P + p}` (1-based labels),
/// i.e. storage rows `{p-1, P+p-1, ...}`.
pub fn dft_partition(l: usize, p: usize) -> Result<Partition> {
    if p == 0 || !l.is_multiple_of(p) {
        return dim_err(format!("P = {p} must divide L = {l}"));
    }
    let q = l / p;
    Partition::new(l, (0..p).map(|b| (0..q).map(|t| t * p + b).collect()).collect())
}

/// Consecutive blocks `{0..Q}, {Q..2Q}, ...`.
pub fn contiguous_partition(l: usize, p: usize) -> Result<Partition> {
    if p == 0 || !l.is_multiple_of(p) {
        return dim_err(format!("P = {p} must divide L = {l}"));
    }
    let q = l / p;
    Partition::new(l, (0..p).map(|b| (b * q..(b + 1) * q).collect()).collect())
}

/// Strided partition with the largest `P` such that `Q = L/P >= max K_i`.
pub fn default_partition(ens: &Ensemble) -> Result<Partition> {
    let kmax = ens.dims().iter().map(|d| d.0).max().unwrap_or(1);
    let l = ens.l();
    let p = (1..=l)
        .rev()
        .find(|&p| l.is_multiple_of(p) && l / p >= kmax)
        .unwrap_or(1);
    dft_partition(l, p)
}

/// `(mu_max^2, mu_min^2)`: extremes of `(L/K_i) |b_{i,l}|^2` over all users
/// and rows.
pub fn mu_max_min(ens: &Ensemble) -> (f64, f64) {
    let l = ens.l() as f64;
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for u in ens.users() {
        let scale = l / u.k() as f64;
        for row in u.b.row_iter() {
            let v = scale * row.norm_squared();
            hi = hi.max(v);
            lo = lo.min(v);
        }
    }
    if ens.r() == 0 {
        (0.0, 0.0)
    } else {
        (hi, lo)
    }
}

/// Outcome of checking a partition against `|T_{i,p} - (Q/L) I| <= Q/(4L)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartitionCheck {
    /// `max_{i,p} |T_{i,p} - (Q/L) I|` (operator norm).
    pub deviation: f64,
    pub threshold: f64,
    pub pass: bool,
}

pub fn verify_partition(ens: &Ensemble, partition: &Partition) -> Result<PartitionCheck> {
    if partition.l() != ens.l() {
        return dim_err(format!("partition covers {} indices, L = {}", partition.l(), ens.l()));
    }
    let ratio = partition.q() as f64 / ens.l() as f64;
    let mut deviation: f64 = 0.0;
    for i in 0..ens.r() {
        for p in 0..partition.p() {
            let t = block_t(ens, i, p, partition)?;
            let k = t.nrows();
            let d = t - CMat::identity(k, k) * C64::new(ratio, 0.0);
            deviation = deviation.max(spectral_norm(&d));
        }
    }
    let threshold = ratio / 4.0;
    Ok(PartitionCheck {
        deviation,
        threshold,
        pass: deviation <= threshold,
    })
}

/// Both branches of `mu_h^2` and their maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MuH {
    /// `(Q^2/L) max |<S_{i,p} h_i, b_{i,l}>|^2 / |h_i|^2` over `l in Gamma_p`.
    pub gram_branch: f64,
    /// `L max |<h_i, b_{i,l}>|^2 / |h_i|^2` over all `l`.
    pub plain_branch: f64,
    pub value: f64,
}

/// `mu_h^2` for the given per-user vectors `h_i`.
pub fn mu_h(ens: &Ensemble, partition: &Partition, hs: &[CVec]) -> Result<MuH> {
    if hs.len() != ens.r() {
        return dim_err(format!("expected {} vectors h_i, got {}", ens.r(), hs.len()));
    }
    let l = ens.l() as f64;
    let q = partition.q() as f64;
    let mut gram_branch: f64 = 0.0;
    let mut plain_branch: f64 = 0.0;
    let grams = (0..partition.p())
        .map(|p| block_gram(ens, p, partition))
        .collect::<Result<Vec<_>>>()?;
    for (i, (u, h)) in ens.users().iter().zip(hs).enumerate() {
        if h.len() != u.k() {
            return dim_err(format!("user {i}: h has length {}, K = {}", h.len(), u.k()));
        }
        let hn = h.norm_squared();
        if hn == 0.0 {
            return Err(Error::Normalization(format!("user {i}: h is zero")));
        }
        // <u, b_l> = (B u)_l
        let bh = &u.b * h;
        plain_branch = plain_branch.max(l * bh.iter().map(|c| c.norm_sqr()).fold(0.0, f64::max) / hn);
        for (p, g) in grams.iter().enumerate() {
            let sh = &g.s[i] * h;
            for &row in partition.block(p) {
                let v: C64 = (0..u.k()).map(|k| u.b[(row, k)] * sh[k]).sum();
                gram_branch = gram_branch.max(q * q / l * v.norm_sqr() / hn);
            }
        }
    }
    Ok(MuH {
        gram_branch,
        plain_branch,
        value: gram_branch.max(plain_branch),
    })
}

/// `mu_h^2` of the ground-truth `h_i`.
pub fn mu_h_truth(ens: &Ensemble, partition: &Partition) -> Result<MuH> {
    let hs: Vec<CVec> = ens.users().iter().map(|u| to_complex_vec(&u.h)).collect();
    mu_h(ens, partition, &hs)
}

/// Tangent space `T = { h h^* Z + (I - h h^*) Z x x^* }` at unit `h x^*`.
#[derive(Debug, Clone)]
pub struct TangentSpace {
    pub user: usize,
    pub h: CVec,
    pub x: CVec,
}

const UNIT_TOL: f64 = 1e-10;

impl TangentSpace {
    pub fn new(user: usize, h: CVec, x: CVec) -> Result<Self> {
        for (name, v) in [("h", &h), ("x", &x)] {
            if (v.norm() - 1.0).abs() > UNIT_TOL {
                return Err(Error::Normalization(format!(
                    "{name} must have unit norm, got {}",
                    v.norm()
                )));
            }
        }
        Ok(Self { user, h, x })
    }

    /// Normalizes `h` and `x`; the scale is absorbed.
    pub fn normalized(user: usize, h: &CVec, x: &CVec) -> Result<Self> {
        let (hn, xn) = (h.norm(), x.norm());
        if hn == 0.0 || xn == 0.0 {
            return Err(Error::Normalization("zero factor".into()));
        }
        Self::new(user, h / C64::new(hn, 0.0), x / C64::new(xn, 0.0))
    }

    pub fn from_truth(ens: &Ensemble, i: usize) -> Result<Self> {
        let u = ens.user(i);
        Self::normalized(i, &to_complex_vec(&u.h), &to_complex_vec(&u.x))
    }

    pub fn k(&self) -> usize {
        self.h.len()
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// `h x^*`.
    pub fn anchor(&self) -> CMat {
        &self.h * self.x.adjoint()
    }

    pub fn project(&self, z: &CMat) -> CMat {
        let hz = &self.h * (self.h.adjoint() * z);
        let zx = (z * &self.x) * self.x.adjoint();
        let hzx = &self.h * (self.h.adjoint() * (z * &self.x)) * self.x.adjoint();
        hz + zx - hzx
    }

    pub fn project_perp(&self, z: &CMat) -> CMat {
        z - self.project(z)
    }
}

pub fn project_t(ts: &TangentSpace, z: &CMat) -> CMat {
    ts.project(z)
}

pub fn project_t_perp(ts: &TangentSpace, z: &CMat) -> CMat {
    ts.project_perp(z)
}

pub fn tangent_spaces_from_truth(ens: &Ensemble) -> Result<Vec<TangentSpace>> {
    (0..ens.r()).map(|i| TangentSpace::from_truth(ens, i)).collect()
}

/// `Z -> P_T A^* A S P_T Z - P_T Z`, with `A` the full or the block operator.
struct LocalIsometryMap<'a> {
    op: &'a LiftedOperator<'a>,
    ts: &'a TangentSpace,
    block: Option<(&'a Partition, usize, CMat)>,
}

impl LocalIsometryMap<'_> {
    fn forward(&self, z: &CMat, adjoint: bool) -> CMat {
        let i = self.ts.user;
        let pz = self.ts.project(z);
        match &self.block {
            None => {
                let back = self.op.adjoint_user_unchecked(i, &self.op.apply_user_unchecked(i, &pz));
                self.ts.project(&back) - pz
            }
            Some((part, p, s)) => {
                // forward: P A_p^* A_p S P ; adjoint: P S^* A_p^* A_p P
                let inner = if adjoint { pz } else { s * pz };
                let y = self.op.apply_restricted(i, part, *p, &inner).expect("checked dims");
                let back = self.op.adjoint_restricted(i, part, *p, &y).expect("checked dims");
                let back = if adjoint { s.adjoint() * back } else { back };
                self.ts.project(&back) - self.ts.project(z)
            }
        }
    }
}

impl LinearMap for LocalIsometryMap<'_> {
    fn dim_in(&self) -> usize {
        self.ts.k() * self.ts.n()
    }
    fn dim_out(&self) -> usize {
        self.dim_in()
    }
    fn apply(&self, v: &[C64]) -> Vec<C64> {
        let z = CMat::from_column_slice(self.ts.k(), self.ts.n(), v);
        self.forward(&z, false).as_slice().to_vec()
    }
    fn apply_adjoint(&self, w: &[C64]) -> Vec<C64> {
        let z = CMat::from_column_slice(self.ts.k(), self.ts.n(), w);
        self.forward(&z, true).as_slice().to_vec()
    }
}

/// `|P_T A_i^* A_i P_T - P_T|`, or `|P_T A_{i,p}^* A_{i,p} S_{i,p} P_T - P_T|`
/// when a partition block is given.
pub fn local_isometry_norm(
    ens: &Ensemble,
    ts: &TangentSpace,
    block: Option<(&Partition, usize)>,
    opts: &PowerOptions,
) -> Result<f64> {
    let op = LiftedOperator::new(ens);
    local_isometry_norm_with(&op, ts, block, opts)
}

pub fn local_isometry_norm_with(
    op: &LiftedOperator<'_>,
    ts: &TangentSpace,
    block: Option<(&Partition, usize)>,
    opts: &PowerOptions,
) -> Result<f64> {
    let ens = op.ensemble();
    check_tangent(ens, ts)?;
    let block = match block {
        Some((part, p)) => {
            let g = block_gram(ens, p, part)?;
            Some((part, p, g.s[ts.user].clone()))
        }
        None => None,
    };
    operator_norm(&LocalIsometryMap { op, ts, block }, opts)
}

fn check_tangent(ens: &Ensemble, ts: &TangentSpace) -> Result<()> {
    if ts.user >= ens.r() {
        return dim_err(format!("user index {} out of range (r = {})", ts.user, ens.r()));
    }
    let (k, n) = ens.dims()[ts.user];
    if ts.k() != k || ts.n() != n {
        return dim_err(format!("tangent space of user {} has the wrong dimensions", ts.user));
    }
    Ok(())
}

/// `Z_k -> P_{T_j} A_j^* A_k P_{T_k} Z_k`.
struct CrossMap<'a> {
    op: &'a LiftedOperator<'a>,
    tj: &'a TangentSpace,
    tk: &'a TangentSpace,
}

impl LinearMap for CrossMap<'_> {
    fn dim_in(&self) -> usize {
        self.tk.k() * self.tk.n()
    }
    fn dim_out(&self) -> usize {
        self.tj.k() * self.tj.n()
    }
    fn apply(&self, v: &[C64]) -> Vec<C64> {
        let z = CMat::from_column_slice(self.tk.k(), self.tk.n(), v);
        let y = self.op.apply_user_unchecked(self.tk.user, &self.tk.project(&z));
        let back = self.op.adjoint_user_unchecked(self.tj.user, &y);
        self.tj.project(&back).as_slice().to_vec()
    }
    fn apply_adjoint(&self, w: &[C64]) -> Vec<C64> {
        let z = CMat::from_column_slice(self.tj.k(), self.tj.n(), w);
        let y = self.op.apply_user_unchecked(self.tj.user, &self.tj.project(&z));
        let back = self.op.adjoint_user_unchecked(self.tk.user, &y);
        self.tk.project(&back).as_slice().to_vec()
    }
}

/// `|P_{T_j} A_j^* A_k P_{T_k}|` for one ordered pair.
pub fn cross_norm(op: &LiftedOperator<'_>, tj: &TangentSpace, tk: &TangentSpace, opts: &PowerOptions) -> Result<f64> {
    check_tangent(op.ensemble(), tj)?;
    check_tangent(op.ensemble(), tk)?;
    operator_norm(&CrossMap { op, tj, tk }, opts)
}

/// `mu = max_{j != k} |P_{T_j} A_j^* A_k P_{T_k}|`; zero for a single user.
pub fn mutual_incoherence(ens: &Ensemble, tangents: &[TangentSpace], opts: &PowerOptions) -> Result<f64> {
    let op = LiftedOperator::new(ens);
    mutual_incoherence_with(&op, tangents, opts)
}

pub fn mutual_incoherence_with(op: &LiftedOperator<'_>, tangents: &[TangentSpace], opts: &PowerOptions) -> Result<f64> {
    let pairs: Vec<(usize, usize)> = (0..tangents.len())
        .flat_map(|j| (0..tangents.len()).filter(move |&k| k != j).map(move |k| (j, k)))
        .collect();
    let norms = pairs
        .par_iter()
        .map(|&(j, k)| cross_norm(op, &tangents[j], &tangents[k], opts))
        .collect::<Result<Vec<f64>>>()?;
    Ok(norms.into_iter().fold(0.0, f64::max))
}

struct UserMap<'a> {
    op: &'a LiftedOperator<'a>,
    i: usize,
    k: usize,
    n: usize,
}

impl LinearMap for UserMap<'_> {
    fn dim_in(&self) -> usize {
        self.k * self.n
    }
    fn dim_out(&self) -> usize {
        self.op.ensemble().l()
    }
    fn apply(&self, v: &[C64]) -> Vec<C64> {
        let z = CMat::from_column_slice(self.k, self.n, v);
        self.op.apply_user_unchecked(self.i, &z).as_slice().to_vec()
    }
    fn apply_adjoint(&self, w: &[C64]) -> Vec<C64> {
        let z = CVec::from_column_slice(w);
        self.op.adjoint_user_unchecked(self.i, &z).as_slice().to_vec()
    }
}

/// `|A_i|` for one user.
pub fn user_operator_norm(op: &LiftedOperator<'_>, i: usize, opts: &PowerOptions) -> Result<f64> {
    let (k, n) = op.dims()[i];
    operator_norm(&UserMap { op, i, k, n }, opts)
}

/// `gamma = max_i |A_i|`.
pub fn operator_gamma(ens: &Ensemble, opts: &PowerOptions) -> Result<f64> {
    let op = LiftedOperator::new(ens);
    let mut gamma: f64 = 0.0;
    for i in 0..ens.r() {
        gamma = gamma.max(user_operator_norm(&op, i, opts)?);
    }
    Ok(gamma)
}

/// All incoherence diagnostics of one ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncoherenceReport {
    pub l: usize,
    pub r: usize,
    pub partition_p: usize,
    pub partition_q: usize,
    pub mu_max_sq: f64,
    pub mu_min_sq: f64,
    pub mu_h_sq: f64,
    pub iso_deviation: f64,
    pub iso_pass: bool,
    pub mutual_mu: f64,
    pub local_iso: Vec<f64>,
    pub gamma: f64,
}

/// Computes every diagnostic. The partition defaults to
/// [`default_partition`], the tangent spaces to the ground truth.
pub fn diagnose(
    ens: &Ensemble,
    partition: Option<&Partition>,
    tangents: Option<&[TangentSpace]>,
    opts: &PowerOptions,
) -> Result<IncoherenceReport> {
    let owned_partition;
    let partition = match partition {
        Some(p) => p,
        None => {
            owned_partition = default_partition(ens)?;
            &owned_partition
        }
    };
    let owned_tangents;
    let tangents = match tangents {
        Some(t) => t,
        None => {
            owned_tangents = tangent_spaces_from_truth(ens)?;
            &owned_tangents
        }
    };
    let op = LiftedOperator::new(ens);
    let (mu_max_sq, mu_min_sq) = mu_max_min(ens);
    let check = verify_partition(ens, partition)?;
    let hs: Vec<CVec> = tangents.iter().map(|t| t.h.clone()).collect();
    let mu_h_sq = if ens.r() == 0 { 0.0 } else { mu_h(ens, partition, &hs)?.value };
    let local_iso = tangents
        .iter()
        .map(|t| local_isometry_norm_with(&op, t, None, opts))
        .collect::<Result<Vec<_>>>()?;
    let mutual_mu = mutual_incoherence_with(&op, tangents, opts)?;
    let mut gamma: f64 = 0.0;
    for i in 0..ens.r() {
        gamma = gamma.max(user_operator_norm(&op, i, opts)?);
    }
    Ok(IncoherenceReport {
        l: ens.l(),
        r: ens.r(),
        partition_p: partition.p(),
        partition_q: partition.q(),
        mu_max_sq,
        mu_min_sq,
        mu_h_sq,
        iso_deviation: check.deviation,
        iso_pass: check.pass,
        mutual_mu,
        local_iso,
        gamma,
    })
}

impl IncoherenceReport {
    /// Header and values of the single CSV row. Per-user local isometry norms
    /// get one column each (`local_iso_0`, `local_iso_1`, ...).
    pub fn csv_record(&self) -> (Vec<String>, Vec<String>) {
        let mut header: Vec<String> = [
            "L", "r", "P", "Q", "mu_max_sq", "mu_min_sq", "mu_h_sq", "iso_deviation", "iso_pass",
            "mutual_mu", "local_iso_max", "gamma",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let mut row = vec![
            self.l.to_string(),
            self.r.to_string(),
            self.partition_p.to_string(),
            self.partition_q.to_string(),
            fmt_f(self.mu_max_sq),
            fmt_f(self.mu_min_sq),
            fmt_f(self.mu_h_sq),
            fmt_f(self.iso_deviation),
            self.iso_pass.to_string(),
            fmt_f(self.mutual_mu),
            fmt_f(self.local_iso.iter().cloned().fold(0.0, f64::max)),
            fmt_f(self.gamma),
        ];
        for (i, v) in self.local_iso.iter().enumerate() {
            header.push(format!("local_iso_{i}"));
            row.push(fmt_f(*v));
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
}

pub(crate) fn fmt_f(v: f64) -> String {
    format!("{v:.12e}")
}
