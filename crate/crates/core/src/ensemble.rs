//! Problem instances: subspace matrices `B_i`, coding matrices `A_i`, ground
//! truth `(h_i, x_i)`, and the mixed observation
//! `y = sum_i diag(B_i h_i) A_i x_i + noise`.
//!
//! Index convention: storage is 0-based, but the DFT exponent uses the 1-based
//! row and column labels, so storage row `l` of a partial DFT matrix carries
//! label `l + 1`. With this convention the strided partition of
//! [`crate::incoherence::dft_partition`] gives block Grams equal to
//! `(Q/L) I` exactly.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::lifting::LiftedBlocks;
use crate::linalg::{norm_vec, CMat, CVec, RMat, RVec, C64, ZERO};
use crate::rng::{self, Domain};
use crate::transforms::{circular_convolve, fwht, hadamard_entry, FftPair};

/// Family of the subspace matrix `B_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BKind {
    /// First `K` columns of the unitary `L x L` DFT.
    PartialDft,
    /// Orthonormalized complex Gaussian matrix.
    GenericOrthonormal,
    /// Supplied by the caller.
    Explicit,
}

/// Family of the coding matrix `A_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AKind {
    Gaussian,
    /// `D H`: Rademacher diagonal times the first `N` Walsh–Hadamard columns.
    RandHadamard,
    Explicit,
}

/// Pair of matrix families for one user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixKind {
    pub b: BKind,
    pub a: AKind,
}

/// Per-user generation request. `h` and `x` override the Gaussian truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub k: usize,
    pub n: usize,
    pub kind: MatrixKind,
    #[serde(default)]
    pub h: Option<Vec<f64>>,
    #[serde(default)]
    pub x: Option<Vec<f64>>,
}

impl UserSpec {
    pub fn new(k: usize, n: usize, b: BKind, a: AKind) -> Self {
        Self {
            k,
            n,
            kind: MatrixKind { b, a },
            h: None,
            x: None,
        }
    }
}

/// Noise model. The noise is complex circular Gaussian rescaled to an exact
/// norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseSpec {
    None,
    /// `|noise| = eta`.
    Absolute(f64),
    /// `|noise| = sigma * sqrt(sum_i |X_i|_F^2)`.
    Relative(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub l: usize,
    pub users: Vec<UserSpec>,
    pub noise: NoiseSpec,
}

impl EnsembleSpec {
    /// `r` identical users.
    pub fn uniform(l: usize, r: usize, k: usize, n: usize, b: BKind, a: AKind) -> Self {
        Self {
            l,
            users: (0..r).map(|_| UserSpec::new(k, n, b, a)).collect(),
            noise: NoiseSpec::None,
        }
    }

    pub fn with_noise(mut self, noise: NoiseSpec) -> Self {
        self.noise = noise;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 {
            return dim_err("L must be positive");
        }
        for (i, u) in self.users.iter().enumerate() {
            if u.k == 0 || u.n == 0 {
                return dim_err(format!("user {i}: K and N must be positive"));
            }
            if u.k > self.l || u.n > self.l {
                return dim_err(format!(
                    "user {i}: K = {} and N = {} must not exceed L = {}",
                    u.k, u.n, self.l
                ));
            }
            if u.kind.a == AKind::RandHadamard && !self.l.is_power_of_two() {
                return Err(Error::UnsupportedSize(format!(
                    "random Hadamard coding needs L a power of two, got {}",
                    self.l
                )));
            }
            if u.kind.a == AKind::Explicit || u.kind.b == BKind::Explicit {
                return Err(Error::Config(format!(
                    "user {i}: explicit matrices cannot be generated from a spec"
                )));
            }
            if let Some(h) = &u.h {
                if h.len() != u.k {
                    return dim_err(format!("user {i}: h has length {}, K = {}", h.len(), u.k));
                }
            }
            if let Some(x) = &u.x {
                if x.len() != u.n {
                    return dim_err(format!("user {i}: x has length {}, N = {}", x.len(), u.n));
                }
            }
        }
        match self.noise {
            NoiseSpec::Absolute(v) | NoiseSpec::Relative(v) if !(v >= 0.0 && v.is_finite()) => {
                Err(Error::Config(format!("noise level must be finite and nonnegative, got {v}")))
            }
            _ => Ok(()),
        }
    }
}

/// One user's matrices and ground truth.
#[derive(Debug, Clone)]
pub struct User {
    pub kind: MatrixKind,
    /// `L x K`, orthonormal columns.
    pub b: CMat,
    /// `L x N`, real.
    pub a: RMat,
    pub h: RVec,
    pub x: RVec,
    /// Rademacher diagonal of a random Hadamard coding matrix.
    pub signs: Option<Vec<f64>>,
}

impl User {
    pub fn k(&self) -> usize {
        self.b.ncols()
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    /// `X = h x^*`.
    pub fn lifted_truth(&self) -> CMat {
        let h = self.h.map(|v| C64::new(v, 0.0));
        let x = self.x.map(|v| C64::new(v, 0.0));
        &h * x.transpose()
    }
}

/// A complete problem instance. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Ensemble {
    l: usize,
    seed: u64,
    spec: Option<EnsembleSpec>,
    users: Vec<User>,
    y: CVec,
    noise: CVec,
}

/// `L x K` partial DFT: entry `(l, k)` is `exp(-2 pi i (l+1)(k+1) / L) / sqrt(L)`
/// in 0-based storage.
pub fn make_partial_dft_b(l: usize, k: usize) -> Result<CMat> {
    if k == 0 || k > l {
        return dim_err(format!("partial DFT needs 1 <= K <= L, got K = {k}, L = {l}"));
    }
    let scale = 1.0 / (l as f64).sqrt();
    Ok(CMat::from_fn(l, k, |row, col| {
        // reduce the exponent first to keep the angle small
        let e = ((row + 1) * (col + 1)) % l;
        C64::from_polar(scale, -2.0 * PI * e as f64 / l as f64)
    }))
}

/// Orthonormal `L x K` basis from the QR factorization of a complex Gaussian
/// matrix.
pub fn make_generic_orthonormal_b<R: Rng>(l: usize, k: usize, rng: &mut R) -> Result<CMat> {
    if k == 0 || k > l {
        return dim_err(format!("orthonormal B needs 1 <= K <= L, got K = {k}, L = {l}"));
    }
    let g = CMat::from_fn(l, k, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    Ok(g.qr().q())
}

/// `L x N` matrix of i.i.d. standard normals drawn from `rng`.
pub fn gaussian_matrix<R: Rng>(l: usize, n: usize, rng: &mut R) -> RMat {
    RMat::from_fn(l, n, |_, _| rng.sample(StandardNormal))
}

/// `L x N` Gaussian coding matrix from its own seeded stream.
pub fn make_gaussian_a(l: usize, n: usize, seed: u64) -> RMat {
    gaussian_matrix(l, n, &mut rng::stream(seed, Domain::CodingA, 0, 0))
}

/// `D H` with the given Rademacher diagonal.
pub fn rand_hadamard_with_signs(l: usize, n: usize, signs: &[f64]) -> Result<RMat> {
    if !l.is_power_of_two() {
        return Err(Error::UnsupportedSize(format!(
            "random Hadamard coding needs L a power of two, got {l}"
        )));
    }
    if n == 0 || n > l || signs.len() != l {
        return dim_err(format!(
            "random Hadamard coding needs 1 <= N <= L and L signs, got N = {n}, L = {l}, {} signs",
            signs.len()
        ));
    }
    Ok(RMat::from_fn(l, n, |row, col| signs[row] * hadamard_entry(row, col)))
}

fn rademacher<R: Rng>(l: usize, rng: &mut R) -> Vec<f64> {
    (0..l).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

/// Random Hadamard coding matrix from its own seeded stream.
pub fn make_rand_hadamard_a(l: usize, n: usize, seed: u64) -> Result<RMat> {
    let signs = rademacher(l, &mut rng::stream(seed, Domain::CodingA, 0, 0));
    rand_hadamard_with_signs(l, n, &signs)
}

fn gaussian_vec<R: Rng>(len: usize, rng: &mut R) -> RVec {
    RVec::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Complex circular Gaussian vector rescaled to norm `eta` (zero when `eta = 0`).
fn scaled_noise<R: Rng>(len: usize, eta: f64, rng: &mut R) -> CVec {
    if eta == 0.0 || len == 0 {
        return CVec::zeros(len);
    }
    let v = CVec::from_fn(len, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let nv = v.norm();
    v.map(|c| c * (eta / nv))
}

/// Draws an ensemble. Each random object uses its own stream keyed by
/// `(seed, domain, user)`, see [`crate::rng`].
pub fn synthesize(spec: &EnsembleSpec, seed: u64) -> Result<Ensemble> {
    spec.validate()?;
    let l = spec.l;
    let mut users = Vec::with_capacity(spec.users.len());
    for (i, u) in spec.users.iter().enumerate() {
        let idx = i as u64;
        let b = match u.kind.b {
            BKind::PartialDft => make_partial_dft_b(l, u.k)?,
            BKind::GenericOrthonormal => {
                make_generic_orthonormal_b(l, u.k, &mut rng::stream(seed, Domain::SubspaceB, idx, 0))?
            }
            BKind::Explicit => unreachable!("rejected by validate"),
        };
        let mut a_rng = rng::stream(seed, Domain::CodingA, idx, 0);
        let (a, signs) = match u.kind.a {
            AKind::Gaussian => (gaussian_matrix(l, u.n, &mut a_rng), None),
            AKind::RandHadamard => {
                let signs = rademacher(l, &mut a_rng);
                (rand_hadamard_with_signs(l, u.n, &signs)?, Some(signs))
            }
            AKind::Explicit => unreachable!("rejected by validate"),
        };
        let h = match &u.h {
            Some(h) => RVec::from_column_slice(h),
            None => gaussian_vec(u.k, &mut rng::stream(seed, Domain::SignalH, idx, 0)),
        };
        let x = match &u.x {
            Some(x) => RVec::from_column_slice(x),
            None => gaussian_vec(u.n, &mut rng::stream(seed, Domain::SignalX, idx, 0)),
        };
        users.push(User { kind: u.kind, b, a, h, x, signs });
    }
    let mut ens = Ensemble::from_users(l, users, None, seed)?;
    let eta = match spec.noise {
        NoiseSpec::None => 0.0,
        NoiseSpec::Absolute(eta) => eta,
        NoiseSpec::Relative(sigma) => sigma * ens.signal_energy().sqrt(),
    };
    let noise = scaled_noise(l, eta, &mut rng::stream(seed, Domain::Noise, 0, 0));
    ens.y += &noise;
    ens.noise = noise;
    ens.spec = Some(spec.clone());
    Ok(ens)
}

impl Ensemble {
    /// Builds an ensemble from explicit users; `noise` defaults to zero.
    pub fn from_users(l: usize, users: Vec<User>, noise: Option<CVec>, seed: u64) -> Result<Self> {
        if l == 0 {
            return dim_err("L must be positive");
        }
        for (i, u) in users.iter().enumerate() {
            if u.b.nrows() != l || u.a.nrows() != l {
                return dim_err(format!("user {i}: B and A must have L = {l} rows"));
            }
            if u.h.len() != u.k() || u.x.len() != u.n() {
                return dim_err(format!("user {i}: truth dimensions do not match B, A"));
            }
            if u.k() > l || u.n() > l {
                return dim_err(format!("user {i}: K and N must not exceed L"));
            }
        }
        let noise = noise.unwrap_or_else(|| CVec::zeros(l));
        if noise.len() != l {
            return dim_err("noise must have length L");
        }
        let mut ens = Self {
            l,
            seed,
            spec: None,
            users,
            y: CVec::zeros(l),
            noise: CVec::zeros(l),
        };
        let clean = ens.synthesize_clean();
        ens.y = clean + &noise;
        ens.noise = noise;
        Ok(ens)
    }

    /// Same matrices and truth with a replaced observation noise vector.
    pub fn with_noise_vector(&self, noise: CVec) -> Result<Self> {
        let mut out = Self::from_users(self.l, self.users.clone(), Some(noise), self.seed)?;
        out.spec = self.spec.clone();
        Ok(out)
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn r(&self) -> usize {
        self.users.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spec(&self) -> Option<&EnsembleSpec> {
        self.spec.as_ref()
    }

    pub fn users(&self) -> &[User] {
        &self.users
    }

    pub fn user(&self, i: usize) -> &User {
        &self.users[i]
    }

    /// `(K_i, N_i)` per user.
    pub fn dims(&self) -> Vec<(usize, usize)> {
        self.users.iter().map(|u| (u.k(), u.n())).collect()
    }

    /// Observed (possibly noisy) measurements.
    pub fn y(&self) -> &CVec {
        &self.y
    }

    pub fn noise(&self) -> &CVec {
        &self.noise
    }

    /// Norm of the noise vector.
    pub fn eta(&self) -> f64 {
        self.noise.norm()
    }

    pub fn clean_observation(&self) -> CVec {
        &self.y - &self.noise
    }

    /// `sum_i |X_i|_F^2` with `X_i = h_i x_i^*`.
    pub fn signal_energy(&self) -> f64 {
        self.users
            .iter()
            .map(|u| u.h.norm_squared() * u.x.norm_squared())
            .sum()
    }

    pub fn truth_blocks(&self) -> LiftedBlocks {
        LiftedBlocks::new(self.users.iter().map(User::lifted_truth).collect())
    }

    pub fn all_partial_dft(&self) -> bool {
        self.users.iter().all(|u| u.kind.b == BKind::PartialDft)
    }

    /// `B_i h` for a complex coefficient vector.
    pub fn modulate(&self, i: usize, h: &CVec) -> CVec {
        &self.users[i].b * h
    }

    /// `A_i x`, through the Walsh–Hadamard transform when `A_i` is a random
    /// Hadamard matrix.
    pub fn code(&self, i: usize, x: &CVec) -> CVec {
        let u = &self.users[i];
        match (&u.signs, u.kind.a) {
            (Some(signs), AKind::RandHadamard) => {
                let mut buf = vec![ZERO; self.l];
                buf[..x.len()].copy_from_slice(x.as_slice());
                fwht(&mut buf).expect("power-of-two length checked at construction");
                CVec::from_iterator(self.l, buf.iter().zip(signs).map(|(v, s)| v * *s))
            }
            _ => u.a.map(|v| C64::new(v, 0.0)) * x,
        }
    }

    fn synthesize_clean(&self) -> CVec {
        let mut y = CVec::zeros(self.l);
        for (i, u) in self.users.iter().enumerate() {
            let bh = self.modulate(i, &u.h.map(|v| C64::new(v, 0.0)));
            let ax = self.code(i, &u.x.map(|v| C64::new(v, 0.0)));
            y += bh.component_mul(&ax);
        }
        y
    }
}

/// Unitary inverse DFT in label coordinates: for a vector stored in label
/// order (`v[s]` has label `s + 1`), returns `F^{-1} v` in the same order,
/// where `F_{lk} = exp(-2 pi i l k / L) / sqrt(L)`.
pub fn unitary_idft_labels(v: &[C64]) -> Vec<C64> {
    let l = v.len();
    if l == 0 {
        return Vec::new();
    }
    let mut buf = labels_to_residues(v);
    FftPair::new(l).inverse(&mut buf);
    let scale = 1.0 / (l as f64).sqrt();
    buf.iter_mut().for_each(|c| *c *= scale);
    residues_to_labels(&buf)
}

/// Moves label `s + 1` (storage `s`) to residue `(s + 1) mod L`.
pub(crate) fn labels_to_residues(v: &[C64]) -> Vec<C64> {
    let l = v.len();
    let mut out = vec![ZERO; l];
    for (s, c) in v.iter().enumerate() {
        out[(s + 1) % l] = *c;
    }
    out
}

pub(crate) fn residues_to_labels(v: &[C64]) -> Vec<C64> {
    let l = v.len();
    (0..l).map(|s| v[(s + 1) % l]).collect()
}

/// Relative residual of the circular-convolution form of the model.
///
/// For partial-DFT `B_i` the diagonal model is equivalent to
/// `sqrt(L) F^{-1} y = sum_i f_i * (F^{-1} A_i x_i)` with `f_i = (h_i; 0)`,
/// the convolution taken over labels modulo `L`. Returns
/// `|sqrt(L) F^{-1} y - sum_i f_i * g_i| / (sqrt(L) |y|)`, or 0 when `y = 0`.
pub fn conv_form_equivalence(ens: &Ensemble) -> Result<f64> {
    if !ens.all_partial_dft() {
        return Err(Error::Unsupported(
            "convolution form needs every B_i to be a partial DFT".into(),
        ));
    }
    let l = ens.l();
    let root = (l as f64).sqrt();
    let lhs: Vec<C64> = labels_to_residues(&unitary_idft_labels(ens.y().as_slice()))
        .into_iter()
        .map(|c| c * root)
        .collect();
    let mut rhs = vec![ZERO; l];
    for (i, u) in ens.users().iter().enumerate() {
        let mut f = vec![ZERO; l];
        for (k, hk) in u.h.iter().enumerate() {
            f[k] = C64::new(*hk, 0.0);
        }
        let ax = ens.code(i, &u.x.map(|v| C64::new(v, 0.0)));
        let g = unitary_idft_labels(ax.as_slice());
        let conv = circular_convolve(&labels_to_residues(&f), &labels_to_residues(&g))?;
        rhs.iter_mut().zip(conv).for_each(|(a, b)| *a += b);
    }
    let scale = root * ens.y().norm();
    if scale == 0.0 {
        return Ok(norm_vec(&rhs));
    }
    let diff: Vec<C64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    Ok(norm_vec(&diff) / scale)
}

/// On-disk form of an [`Ensemble`]. Without explicit matrices the file is
/// regenerated from `spec` and `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleFile {
    pub format: String,
    pub l: usize,
    pub seed: u64,
    pub spec: Option<EnsembleSpec>,
    pub kinds: Vec<MatrixKind>,
    pub truth: Vec<(Vec<f64>, Vec<f64>)>,
    /// `[re, im]` pairs.
    pub noise: Vec<[f64; 2]>,
    pub y: Vec<[f64; 2]>,
    pub matrices: Option<Vec<UserMatrices>>,
}

/// Explicit matrices, column-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserMatrices {
    pub k: usize,
    pub n: usize,
    pub b: Vec<[f64; 2]>,
    pub a: Vec<f64>,
    pub signs: Option<Vec<f64>>,
}

pub const ENSEMBLE_FORMAT: &str = "blind-demix-ensemble/1";

fn pairs(v: &[C64]) -> Vec<[f64; 2]> {
    v.iter().map(|c| [c.re, c.im]).collect()
}

fn unpairs(v: &[[f64; 2]]) -> Vec<C64> {
    v.iter().map(|p| C64::new(p[0], p[1])).collect()
}

impl Ensemble {
    pub fn to_file(&self, include_matrices: bool) -> EnsembleFile {
        let explicit = self
            .users
            .iter()
            .any(|u| u.kind.a == AKind::Explicit || u.kind.b == BKind::Explicit);
        let matrices = (include_matrices || explicit || self.spec.is_none()).then(|| {
            self.users
                .iter()
                .map(|u| UserMatrices {
                    k: u.k(),
                    n: u.n(),
                    b: pairs(u.b.as_slice()),
                    a: u.a.as_slice().to_vec(),
                    signs: u.signs.clone(),
                })
                .collect()
        });
        EnsembleFile {
            format: ENSEMBLE_FORMAT.to_string(),
            l: self.l,
            seed: self.seed,
            spec: self.spec.clone(),
            kinds: self.users.iter().map(|u| u.kind).collect(),
            truth: self
                .users
                .iter()
                .map(|u| (u.h.as_slice().to_vec(), u.x.as_slice().to_vec()))
                .collect(),
            noise: pairs(self.noise.as_slice()),
            y: pairs(self.y.as_slice()),
            matrices,
        }
    }

    pub fn from_file(file: &EnsembleFile) -> Result<Self> {
        if file.format != ENSEMBLE_FORMAT {
            return Err(Error::Config(format!("unknown ensemble format {:?}", file.format)));
        }
        let r = file.kinds.len();
        if file.truth.len() != r {
            return dim_err("truth list length differs from user count");
        }
        let users: Vec<User> = match (&file.matrices, &file.spec) {
            (Some(ms), _) => {
                if ms.len() != r {
                    return dim_err("matrix list length differs from user count");
                }
                let mut users = Vec::with_capacity(r);
                for ((m, kind), (h, x)) in ms.iter().zip(&file.kinds).zip(&file.truth) {
                    if m.b.len() != file.l * m.k || m.a.len() != file.l * m.n {
                        return dim_err("explicit matrix sizes do not match L, K, N");
                    }
                    users.push(User {
                        kind: *kind,
                        b: CMat::from_column_slice(file.l, m.k, &unpairs(&m.b)),
                        a: RMat::from_column_slice(file.l, m.n, &m.a),
                        h: RVec::from_column_slice(h),
                        x: RVec::from_column_slice(x),
                        signs: m.signs.clone(),
                    });
                }
                users
            }
            (None, Some(spec)) => {
                let mut users = synthesize(spec, file.seed)?.users;
                for (u, (h, x)) in users.iter_mut().zip(&file.truth) {
                    u.h = RVec::from_column_slice(h);
                    u.x = RVec::from_column_slice(x);
                }
                users
            }
            (None, None) => {
                return Err(Error::Config(
                    "ensemble file has neither a spec nor explicit matrices".into(),
                ))
            }
        };
        let noise = CVec::from_vec(unpairs(&file.noise));
        let mut ens = Self::from_users(file.l, users, Some(noise), file.seed)?;
        ens.spec = file.spec.clone();
        // keep the stored observation bit-for-bit
        let y = CVec::from_vec(unpairs(&file.y));
        if y.len() != file.l {
            return dim_err("observation length differs from L");
        }
        ens.y = y;
        Ok(ens)
    }

    pub fn to_json(&self, include_matrices: bool) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file(include_matrices))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(text)?)
    }
}
