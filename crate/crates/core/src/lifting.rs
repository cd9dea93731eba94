//! Lifted measurement operators.
//!
//! `A_i(Z) = { b_{i,l}^* Z a_{i,l} }_l` maps `K_i x N_i` matrices to `C^L`,
//! where `b_{i,l}` is the `l`-th column of `B_i^*` and `a_{i,l}` the `l`-th
//! column of `A_i^T`. In matrix form `A_i(Z)_l = (B_i Z A_i^T)_{ll}` and
//! `A_i^*(z) = B_i^* diag(z) A_i`. The composite map is
//! `Phi(Z_1..Z_r) = sum_i A_i(Z_i)`.

use std::ops::{Add, Mul, Sub};
use std::sync::OnceLock;

use crate::ensemble::{BKind, Ensemble};
use crate::error::{dim_err, Error, Result};
use crate::incoherence::Partition;
use crate::linalg::{hermitian_eig, symmetric_eig, CMat, CVec, RMat, C64, ZERO};
use crate::transforms::FftPair;

/// An `r`-tuple of complex `K_i x N_i` matrices with the Frobenius metric.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedBlocks {
    pub blocks: Vec<CMat>,
}

impl LiftedBlocks {
    pub fn new(blocks: Vec<CMat>) -> Self {
        Self { blocks }
    }

    pub fn zeros(dims: &[(usize, usize)]) -> Self {
        Self::new(dims.iter().map(|&(k, n)| CMat::zeros(k, n)).collect())
    }

    pub fn r(&self) -> usize {
        self.blocks.len()
    }

    pub fn dims(&self) -> Vec<(usize, usize)> {
        self.blocks.iter().map(|b| (b.nrows(), b.ncols())).collect()
    }

    /// `sum_i <U_i, V_i>` with `<U, V> = Tr(U V^*)`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(u, v)| crate::linalg::inner(u, v))
            .sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum()
    }

    /// Joint Frobenius norm `sqrt(sum_i |Z_i|_F^2)`.
    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn nuclear_norm(&self) -> f64 {
        self.blocks.iter().map(crate::linalg::nuclear_norm).sum()
    }

    pub fn scale(&self, c: C64) -> Self {
        Self::new(self.blocks.iter().map(|b| b * c).collect())
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &Self) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.zip_apply(b, |x, y| *x += y * c);
        }
    }

    pub fn flatten(&self) -> Vec<C64> {
        self.blocks.iter().flat_map(|b| b.iter().copied()).collect()
    }

    pub fn unflatten(v: &[C64], dims: &[(usize, usize)]) -> Self {
        let mut off = 0;
        let blocks = dims
            .iter()
            .map(|&(k, n)| {
                let b = CMat::from_column_slice(k, n, &v[off..off + k * n]);
                off += k * n;
                b
            })
            .collect();
        Self::new(blocks)
    }
}

impl Add for &LiftedBlocks {
    type Output = LiftedBlocks;
    fn add(self, rhs: Self) -> LiftedBlocks {
        LiftedBlocks::new(self.blocks.iter().zip(&rhs.blocks).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &LiftedBlocks {
    type Output = LiftedBlocks;
    fn sub(self, rhs: Self) -> LiftedBlocks {
        LiftedBlocks::new(self.blocks.iter().zip(&rhs.blocks).map(|(a, b)| a - b).collect())
    }
}

impl Mul<f64> for &LiftedBlocks {
    type Output = LiftedBlocks;
    fn mul(self, rhs: f64) -> LiftedBlocks {
        LiftedBlocks::new(self.blocks.iter().map(|a| a * C64::new(rhs, 0.0)).collect())
    }
}

/// Which kernel applies `A_i` and `A_i^*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyPath {
    /// FFT kernel for partial-DFT users when `L > 64`, dense otherwise.
    Auto,
    Dense,
    /// FFT kernel for every partial-DFT user regardless of `L`.
    Fast,
}

pub const FAST_PATH_MIN_L: usize = 64;

/// Eigen-decomposition `Phi Phi^* = U diag(lambda) U^*`, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct GramFactor {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMat,
}

impl GramFactor {
    /// Eigenvalues at or below this are treated as zero.
    pub fn null_threshold(&self) -> f64 {
        let max = self.eigenvalues.last().copied().unwrap_or(0.0).max(0.0);
        max * 1e-11 * self.eigenvalues.len().max(1) as f64
    }

    pub fn lambda_min_sq(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0).max(0.0)
    }

    pub fn lambda_max_sq(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0).max(0.0)
    }
}

/// Eigen-decomposition of the Gram of `Phi` restricted to real blocks, as a
/// real-linear map into `R^{2L}` (real parts stacked over imaginary parts).
#[derive(Debug, Clone)]
pub struct RealGramFactor {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: RMat,
}

impl RealGramFactor {
    pub fn null_threshold(&self) -> f64 {
        let max = self.eigenvalues.last().copied().unwrap_or(0.0).max(0.0);
        max * 1e-11 * self.eigenvalues.len().max(1) as f64
    }
}

/// Operator bundle over one ensemble with cached FFT plans and Gram factor.
pub struct LiftedOperator<'a> {
    ens: &'a Ensemble,
    fast: Vec<bool>,
    fft: Option<FftPair>,
    gram: OnceLock<GramFactor>,
    real_gram: OnceLock<RealGramFactor>,
}

impl<'a> LiftedOperator<'a> {
    pub fn new(ens: &'a Ensemble) -> Self {
        Self::with_path(ens, ApplyPath::Auto)
    }

    pub fn with_path(ens: &'a Ensemble, path: ApplyPath) -> Self {
        let fast: Vec<bool> = ens
            .users()
            .iter()
            .map(|u| {
                u.kind.b == BKind::PartialDft
                    && match path {
                        ApplyPath::Auto => ens.l() > FAST_PATH_MIN_L,
                        ApplyPath::Dense => false,
                        ApplyPath::Fast => true,
                    }
            })
            .collect();
        let fft = fast.iter().any(|&f| f).then(|| FftPair::new(ens.l()));
        Self {
            ens,
            fast,
            fft,
            gram: OnceLock::new(),
            real_gram: OnceLock::new(),
        }
    }

    pub fn ensemble(&self) -> &'a Ensemble {
        self.ens
    }

    pub fn dims(&self) -> Vec<(usize, usize)> {
        self.ens.dims()
    }

    fn check_block(&self, i: usize, z: &CMat) -> Result<()> {
        if i >= self.ens.r() {
            return dim_err(format!("user index {i} out of range (r = {})", self.ens.r()));
        }
        let u = self.ens.user(i);
        if z.nrows() != u.k() || z.ncols() != u.n() {
            return dim_err(format!(
                "user {i}: expected a {}x{} matrix, got {}x{}",
                u.k(),
                u.n(),
                z.nrows(),
                z.ncols()
            ));
        }
        Ok(())
    }

    /// `A_i(Z)`.
    pub fn apply_user(&self, i: usize, z: &CMat) -> Result<CVec> {
        self.check_block(i, z)?;
        Ok(self.apply_user_unchecked(i, z))
    }

    /// `B_i Z` as an `L x N_i` matrix.
    fn modulate_columns(&self, i: usize, z: &CMat) -> CMat {
        let u = self.ens.user(i);
        match (&self.fft, self.fast[i]) {
            (Some(fft), true) => {
                let l = self.ens.l();
                let scale = 1.0 / (l as f64).sqrt();
                let mut out = CMat::zeros(l, z.ncols());
                let mut buf = vec![ZERO; l];
                for n in 0..z.ncols() {
                    buf.iter_mut().for_each(|c| *c = ZERO);
                    for k in 0..z.nrows() {
                        buf[(k + 1) % l] = z[(k, n)];
                    }
                    fft.forward(&mut buf);
                    for row in 0..l {
                        out[(row, n)] = buf[(row + 1) % l] * scale;
                    }
                }
                out
            }
            _ => &u.b * z,
        }
    }

    pub(crate) fn apply_user_unchecked(&self, i: usize, z: &CMat) -> CVec {
        let a = &self.ens.user(i).a;
        let bz = self.modulate_columns(i, z);
        CVec::from_fn(self.ens.l(), |row, _| {
            (0..a.ncols()).map(|n| bz[(row, n)] * a[(row, n)]).sum()
        })
    }

    /// `A_i^*(z) = B_i^* diag(z) A_i`.
    pub fn adjoint_user(&self, i: usize, z: &CVec) -> Result<CMat> {
        if i >= self.ens.r() {
            return dim_err(format!("user index {i} out of range (r = {})", self.ens.r()));
        }
        if z.len() != self.ens.l() {
            return dim_err(format!("expected a vector of length {}, got {}", self.ens.l(), z.len()));
        }
        Ok(self.adjoint_user_unchecked(i, z))
    }

    pub(crate) fn adjoint_user_unchecked(&self, i: usize, z: &CVec) -> CMat {
        let u = self.ens.user(i);
        let l = self.ens.l();
        let (k, n) = (u.k(), u.n());
        let weighted = CMat::from_fn(l, n, |row, col| z[row] * u.a[(row, col)]);
        match (&self.fft, self.fast[i]) {
            (Some(fft), true) => {
                let scale = 1.0 / (l as f64).sqrt();
                let mut out = CMat::zeros(k, n);
                let mut buf = vec![ZERO; l];
                for col in 0..n {
                    for row in 0..l {
                        buf[(row + 1) % l] = weighted[(row, col)];
                    }
                    fft.inverse(&mut buf);
                    for kk in 0..k {
                        out[(kk, col)] = buf[(kk + 1) % l] * scale;
                    }
                }
                out
            }
            _ => u.b.adjoint() * weighted,
        }
    }

    /// `Phi(Z) = sum_i A_i(Z_i)`.
    pub fn apply(&self, z: &LiftedBlocks) -> Result<CVec> {
        if z.r() != self.ens.r() {
            return dim_err(format!("expected {} blocks, got {}", self.ens.r(), z.r()));
        }
        for (i, b) in z.blocks.iter().enumerate() {
            self.check_block(i, b)?;
        }
        Ok(self.apply_unchecked(z))
    }

    pub(crate) fn apply_unchecked(&self, z: &LiftedBlocks) -> CVec {
        let mut out = CVec::zeros(self.ens.l());
        for (i, b) in z.blocks.iter().enumerate() {
            out += self.apply_user_unchecked(i, b);
        }
        out
    }

    /// `Phi^*(z) = (A_1^*(z), ..., A_r^*(z))`.
    pub fn adjoint(&self, z: &CVec) -> Result<LiftedBlocks> {
        if z.len() != self.ens.l() {
            return dim_err(format!("expected a vector of length {}, got {}", self.ens.l(), z.len()));
        }
        Ok(self.adjoint_unchecked(z))
    }

    pub(crate) fn adjoint_unchecked(&self, z: &CVec) -> LiftedBlocks {
        LiftedBlocks::new((0..self.ens.r()).map(|i| self.adjoint_user_unchecked(i, z)).collect())
    }

    /// `A_{i,p}(Z) = { b_{i,l}^* Z a_{i,l} }_{l in Gamma_p}`, in block order.
    pub fn apply_restricted(&self, i: usize, partition: &Partition, p: usize, z: &CMat) -> Result<CVec> {
        self.check_block(i, z)?;
        let idx = partition_block(partition, p, self.ens.l())?;
        let u = self.ens.user(i);
        Ok(CVec::from_iterator(
            idx.len(),
            idx.iter().map(|&row| {
                let mut acc = ZERO;
                for n in 0..u.n() {
                    let mut bz = ZERO;
                    for k in 0..u.k() {
                        bz += u.b[(row, k)] * z[(k, n)];
                    }
                    acc += bz * u.a[(row, n)];
                }
                acc
            }),
        ))
    }

    /// `A_{i,p}^*(z) = sum_{l in Gamma_p} z_l b_{i,l} a_{i,l}^*`, with `z` in
    /// block order.
    pub fn adjoint_restricted(&self, i: usize, partition: &Partition, p: usize, z: &CVec) -> Result<CMat> {
        if i >= self.ens.r() {
            return dim_err(format!("user index {i} out of range (r = {})", self.ens.r()));
        }
        let idx = partition_block(partition, p, self.ens.l())?;
        if z.len() != idx.len() {
            return dim_err(format!("expected a vector of length {}, got {}", idx.len(), z.len()));
        }
        let u = self.ens.user(i);
        let mut out = CMat::zeros(u.k(), u.n());
        for (q, &row) in idx.iter().enumerate() {
            for n in 0..u.n() {
                let w = z[q] * u.a[(row, n)];
                for k in 0..u.k() {
                    out[(k, n)] += u.b[(row, k)].conj() * w;
                }
            }
        }
        Ok(out)
    }

    /// Dense `Phi Phi^* = sum_i (B_i B_i^*) o (A_i A_i^T)` (entrywise product).
    pub fn gram_matrix(&self) -> CMat {
        let l = self.ens.l();
        let mut g = CMat::zeros(l, l);
        for u in self.ens.users() {
            let bb = &u.b * u.b.adjoint();
            let aa = &u.a * u.a.transpose();
            g.zip_zip_apply(&bb, &aa, |acc, b, a| *acc += b * a);
        }
        g
    }

    /// `sum_i (B_i B_i^T) o (A_i A_i^T)`, the Gram without conjugation.
    pub fn pseudo_gram_matrix(&self) -> CMat {
        let l = self.ens.l();
        let mut g = CMat::zeros(l, l);
        for u in self.ens.users() {
            let bb = &u.b * u.b.transpose();
            let aa = &u.a * u.a.transpose();
            g.zip_zip_apply(&bb, &aa, |acc, b, a| *acc += b * a);
        }
        g
    }

    /// `M M^T` for the real-linear map `M: Z -> [Re Phi(Z); Im Phi(Z)]` on
    /// real blocks. With `C = P + iQ` the coefficient rows of `Phi`, the
    /// blocks are `P P^T`, `P Q^T`, `Q P^T`, `Q Q^T`.
    pub fn real_gram_matrix(&self) -> RMat {
        let l = self.ens.l();
        let g = self.gram_matrix();
        let h = self.pseudo_gram_matrix();
        RMat::from_fn(2 * l, 2 * l, |a, b| {
            let (i, j) = (a % l, b % l);
            match (a < l, b < l) {
                (true, true) => 0.5 * (g[(i, j)].re + h[(i, j)].re),
                (true, false) => 0.5 * (h[(i, j)].im - g[(i, j)].im),
                (false, true) => 0.5 * (g[(i, j)].im + h[(i, j)].im),
                (false, false) => 0.5 * (g[(i, j)].re - h[(i, j)].re),
            }
        })
    }

    /// Cached eigen-decomposition of [`Self::real_gram_matrix`].
    pub fn real_gram_factor(&self) -> &RealGramFactor {
        self.real_gram.get_or_init(|| {
            let (eigenvalues, eigenvectors) = symmetric_eig(&self.real_gram_matrix());
            RealGramFactor {
                eigenvalues,
                eigenvectors,
            }
        })
    }

    /// Cached eigen-decomposition of `Phi Phi^*`.
    pub fn gram_factor(&self) -> &GramFactor {
        self.gram.get_or_init(|| {
            let (eigenvalues, eigenvectors) = hermitian_eig(&self.gram_matrix());
            GramFactor {
                eigenvalues,
                eigenvectors,
            }
        })
    }
}

fn partition_block(partition: &Partition, p: usize, l: usize) -> Result<&[usize]> {
    if partition.l() != l {
        return dim_err(format!("partition covers {} indices, L = {l}", partition.l()));
    }
    if p >= partition.p() {
        return dim_err(format!("block {p} out of range (P = {})", partition.p()));
    }
    Ok(partition.block(p))
}

/// `A_i(Z)`.
pub fn apply_op(ens: &Ensemble, i: usize, z: &CMat) -> Result<CVec> {
    LiftedOperator::new(ens).apply_user(i, z)
}

/// `A_i^*(z)`.
pub fn apply_adjoint(ens: &Ensemble, i: usize, z: &CVec) -> Result<CMat> {
    LiftedOperator::new(ens).adjoint_user(i, z)
}

pub fn apply_composite(ens: &Ensemble, z: &LiftedBlocks) -> Result<CVec> {
    LiftedOperator::new(ens).apply(z)
}

pub fn apply_composite_adjoint(ens: &Ensemble, z: &CVec) -> Result<LiftedBlocks> {
    LiftedOperator::new(ens).adjoint(z)
}

pub fn apply_restricted(ens: &Ensemble, i: usize, p: usize, partition: &Partition, z: &CMat) -> Result<CVec> {
    LiftedOperator::with_path(ens, ApplyPath::Dense).apply_restricted(i, partition, p, z)
}

/// Block Grams `T_{i,p} = sum_{l in Gamma_p} b_{i,l} b_{i,l}^*` and their
/// inverses `S_{i,p}` for every user.
#[derive(Debug, Clone)]
pub struct BlockGram {
    pub p: usize,
    pub t: Vec<CMat>,
    pub s: Vec<CMat>,
    /// Spectral condition number of each `T_{i,p}`.
    pub condition: Vec<f64>,
}

/// Condition numbers above this are reported as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;
/// Condition numbers above this log a warning.
pub const WARN_CONDITION: f64 = 1e6;

/// `T_{i,p}` for one user, exactly as the sum of outer products of the rows.
pub fn block_t(ens: &Ensemble, i: usize, p: usize, partition: &Partition) -> Result<CMat> {
    if i >= ens.r() {
        return dim_err(format!("user index {i} out of range (r = {})", ens.r()));
    }
    let idx = partition_block(partition, p, ens.l())?;
    let b = &ens.user(i).b;
    let rows = CMat::from_fn(idx.len(), b.ncols(), |q, k| b[(idx[q], k)]);
    // T = sum_l b_l b_l^* with b_l = conj(row l of B), i.e. B_p^* B_p
    Ok(rows.adjoint() * rows)
}

/// `T_{i,p}` and `S_{i,p} = T_{i,p}^{-1}` for all users at block `p`.
pub fn block_gram(ens: &Ensemble, p: usize, partition: &Partition) -> Result<BlockGram> {
    let mut t = Vec::with_capacity(ens.r());
    let mut s = Vec::with_capacity(ens.r());
    let mut condition = Vec::with_capacity(ens.r());
    for i in 0..ens.r() {
        let ti = block_t(ens, i, p, partition)?;
        let (vals, _) = hermitian_eig(&ti);
        let (lo, hi) = (vals.first().copied().unwrap_or(0.0), vals.last().copied().unwrap_or(0.0));
        let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if cond.is_nan() || cond >= SINGULAR_CONDITION {
            return Err(Error::SingularGram {
                user: i,
                block: p,
                condition: cond,
            });
        }
        if cond > WARN_CONDITION {
            log::warn!("T[{i},{p}] is ill-conditioned (condition {cond:.3e})");
        }
        let chol = ti.clone().cholesky().ok_or(Error::SingularGram {
            user: i,
            block: p,
            condition: cond,
        })?;
        s.push(chol.inverse());
        t.push(ti);
        condition.push(cond);
    }
    Ok(BlockGram { p, t, s, condition })
}

/// Extreme eigenvalues `(lambda_min^2, lambda_max^2)` of `Phi Phi^*`.
pub fn gram_spectrum(ens: &Ensemble) -> (f64, f64) {
    let op = LiftedOperator::new(ens);
    let f = op.gram_factor();
    (f.lambda_min_sq(), f.lambda_max_sq())
}
