//! Dense reference implementations shared by the integration tests.

#![allow(dead_code)]

use blind_demix::ensemble::User;
use blind_demix::linalg::{CMat, CVec, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cgauss<R: Rng>(rng: &mut R) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn random_cmat<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| cgauss(rng))
}

pub fn random_cvec<R: Rng>(len: usize, rng: &mut R) -> CVec {
    CVec::from_fn(len, |_, _| cgauss(rng))
}

/// `y_l = sum_{k,n} B[l,k] Z[k,n] A[l,n]`, one row at a time.
pub fn dense_apply(u: &User, z: &CMat) -> CVec {
    let l = u.b.nrows();
    CVec::from_fn(l, |row, _| {
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..u.k() {
            for n in 0..u.n() {
                acc += u.b[(row, k)] * z[(k, n)] * u.a[(row, n)];
            }
        }
        acc
    })
}

/// `Z[k,n] = sum_l conj(B[l,k]) z_l A[l,n]`.
pub fn dense_adjoint(u: &User, z: &CVec) -> CMat {
    CMat::from_fn(u.k(), u.n(), |k, n| {
        (0..u.b.nrows())
            .map(|row| u.b[(row, k)].conj() * z[row] * u.a[(row, n)])
            .sum()
    })
}

/// `hh^* Z + Z xx^* - hh^* Z xx^*` for unit `h`, `x`.
pub fn dense_project_t(h: &CVec, x: &CVec, z: &CMat) -> CMat {
    let ph = h * h.adjoint();
    let px = x * x.adjoint();
    &ph * z + z * &px - &ph * z * &px
}

/// Sample the matrix of a linear map on `C^{k x n}` column by column.
pub fn matrix_of<F: Fn(&CMat) -> CMat>(k_in: usize, n_in: usize, f: F) -> CMat {
    let dim = k_in * n_in;
    let mut cols = Vec::with_capacity(dim);
    for c in 0..dim {
        let mut e = CMat::zeros(k_in, n_in);
        e[(c % k_in, c / k_in)] = C64::new(1.0, 0.0);
        let out = f(&e);
        cols.push(CVec::from_column_slice(out.as_slice()));
    }
    CMat::from_columns(&cols)
}

pub fn largest_singular_value(m: &CMat) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

pub fn rel_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn rel_diff_vec(a: &CVec, b: &CVec) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
