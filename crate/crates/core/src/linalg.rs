//! Dense complex linear-algebra helpers and operator norms of linear maps.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Frobenius inner product `<U, V> = Tr(U V^*)`.
pub fn inner(u: &CMat, v: &CMat) -> C64 {
    u.iter().zip(v.iter()).map(|(a, b)| a * b.conj()).sum()
}

/// Vector inner product `<u, v> = v^* u`.
pub fn inner_vec(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a * b.conj()).sum()
}

pub fn norm_vec(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|v| C64::new(v, 0.0))
}

pub fn to_complex_vec(v: &RVec) -> CVec {
    v.map(|x| C64::new(x, 0.0))
}

/// `h x^*` for real or complex factors.
pub fn outer(h: &CVec, x: &CVec) -> CMat {
    h * x.adjoint()
}

/// Singular values of `m`, descending.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Sum of singular values.
pub fn nuclear_norm(m: &CMat) -> f64 {
    singular_values(m).iter().sum()
}

/// Largest singular value.
pub fn spectral_norm(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eig(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    // symmetrize away round-off before the solver sees it
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMat::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Eigen-decomposition of a real symmetric matrix, eigenvalues ascending.
pub fn symmetric_eig(m: &RMat) -> (Vec<f64>, RMat) {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = RMat::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// A linear map between flat complex coordinate spaces.
pub trait LinearMap {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn apply(&self, v: &[C64]) -> Vec<C64>;
    fn apply_adjoint(&self, w: &[C64]) -> Vec<C64>;
}

/// How [`operator_norm`] evaluates the norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMethod {
    /// Dense SVD when the input dimension is at most [`DENSE_LIMIT`], power
    /// iteration otherwise.
    Auto,
    Dense,
    Power,
}

pub const DENSE_LIMIT: usize = 64;

#[derive(Debug, Clone, Copy)]
pub struct PowerOptions {
    pub method: NormMethod,
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            method: NormMethod::Auto,
            tol: 1e-4,
            max_iters: 5000,
            seed: 0x5eed,
        }
    }
}

/// Assembles the matrix of `map` column by column.
pub fn dense_matrix<M: LinearMap + ?Sized>(map: &M) -> CMat {
    let (n, m) = (map.dim_in(), map.dim_out());
    let mut out = CMat::zeros(m, n);
    let mut e = vec![ZERO; n];
    for j in 0..n {
        e[j] = ONE;
        let col = map.apply(&e);
        for (i, v) in col.into_iter().enumerate() {
            out[(i, j)] = v;
        }
        e[j] = ZERO;
    }
    out
}

/// Operator 2-norm (largest singular value) of `map`.
///
/// Power iteration runs on `M^* M` from a seeded random complex start and
/// stops once the eigen-residual `|M^*M v - theta v|` drops below
/// `tol * theta`.
pub fn operator_norm<M: LinearMap + ?Sized>(map: &M, opts: &PowerOptions) -> Result<f64> {
    let n = map.dim_in();
    if n == 0 || map.dim_out() == 0 {
        return Ok(0.0);
    }
    let dense = match opts.method {
        NormMethod::Dense => true,
        NormMethod::Power => false,
        NormMethod::Auto => n <= DENSE_LIMIT,
    };
    if dense {
        return Ok(spectral_norm(&dense_matrix(map)));
    }

    let mut rng = rng::stream(opts.seed, Domain::PowerIteration, 0, 0);
    let mut v: Vec<C64> = (0..n)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let nv = norm_vec(&v);
    v.iter_mut().for_each(|c| *c /= nv);

    let mut last_change = f64::INFINITY;
    for _ in 0..opts.max_iters {
        let hv = map.apply_adjoint(&map.apply(&v));
        let theta = inner_vec(&hv, &v).re;
        let hv_norm = norm_vec(&hv);
        if hv_norm == 0.0 {
            return Ok(0.0);
        }
        let resid: f64 = hv
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b * theta).norm_sqr())
            .sum::<f64>()
            .sqrt();
        last_change = resid / theta.max(f64::MIN_POSITIVE);
        if resid <= opts.tol * theta {
            return Ok(theta.max(0.0).sqrt());
        }
        v = hv.into_iter().map(|c| c / hv_norm).collect();
    }
    Err(Error::Convergence {
        iterations: opts.max_iters,
        last_change,
    })
}

/// Flattens a `K x N` matrix in column-major order.
pub fn flatten(m: &CMat) -> Vec<C64> {
    m.as_slice().to_vec()
}

pub fn unflatten(v: &[C64], rows: usize, cols: usize) -> CMat {
    CMat::from_column_slice(rows, cols, v)
}
