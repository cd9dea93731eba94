mod common;

use blind_demix::ensemble::{synthesize, AKind, BKind, Ensemble, EnsembleSpec, NoiseSpec, User, UserSpec, MatrixKind};
use blind_demix::incoherence::{contiguous_partition, dft_partition, Partition};
use blind_demix::lifting::{block_gram, block_t, gram_spectrum, ApplyPath, LiftedBlocks, LiftedOperator};
use blind_demix::linalg::{inner, inner_vec, CMat, CVec, RMat, RVec, C64};
use common::*;
use proptest::prelude::*;

fn ensemble(l: usize, r: usize, k: usize, n: usize, b: BKind, seed: u64) -> Ensemble {
    synthesize(&EnsembleSpec::uniform(l, r, k, n, b, AKind::Gaussian), seed).unwrap()
}

fn random_blocks(ens: &Ensemble, seed: u64) -> LiftedBlocks {
    let mut r = rng(seed);
    LiftedBlocks::new(ens.dims().iter().map(|&(k, n)| random_cmat(k, n, &mut r)).collect())
}

#[test]
fn zero_maps_to_zero() {
    let ens = ensemble(12, 1, 3, 3, BKind::PartialDft, 1);
    let op = LiftedOperator::new(&ens);
    assert_eq!(op.apply_user(0, &CMat::zeros(3, 3)).unwrap().norm(), 0.0);
    assert_eq!(op.adjoint_user(0, &CVec::zeros(12)).unwrap().norm(), 0.0);
}

#[test]
fn rank_one_input_gives_entrywise_product() {
    let ens = ensemble(16, 1, 3, 4, BKind::PartialDft, 2);
    let u = ens.user(0);
    let mut r = rng(2);
    let h = random_cvec(3, &mut r);
    let x = random_cvec(4, &mut r);
    let got = LiftedOperator::new(&ens).apply_user(0, &(&h * x.adjoint())).unwrap();
    let bh = &u.b * &h;
    let ax = u.a.map(|v| C64::new(v, 0.0)) * x.map(|c| c.conj());
    assert!(rel_diff_vec(&got, &bh.component_mul(&ax)) < 1e-12);
}

#[test]
fn unit_adjoint_is_outer_product_of_rows() {
    let ens = ensemble(12, 1, 3, 2, BKind::GenericOrthonormal, 3);
    let u = ens.user(0);
    let op = LiftedOperator::new(&ens);
    for l in 0..12 {
        let mut e = CVec::zeros(12);
        e[l] = C64::new(1.0, 0.0);
        let got = op.adjoint_user(0, &e).unwrap();
        let b_l = CVec::from_fn(3, |k, _| u.b[(l, k)].conj());
        let a_l = CVec::from_fn(2, |n, _| C64::new(u.a[(l, n)], 0.0));
        assert!(rel_diff(&got, &(&b_l * a_l.adjoint())) < 1e-13);
    }
}

#[test]
fn dense_oracle_agreement_at_l12() {
    for (b, seed) in [(BKind::PartialDft, 4), (BKind::GenericOrthonormal, 5)] {
        let ens = ensemble(12, 1, 3, 3, b, seed);
        let op = LiftedOperator::new(&ens);
        let mut r = rng(seed);
        let z = random_cmat(3, 3, &mut r);
        let w = random_cvec(12, &mut r);
        assert!(rel_diff_vec(&op.apply_user(0, &z).unwrap(), &dense_apply(ens.user(0), &z)) < 1e-12);
        assert!(rel_diff(&op.adjoint_user(0, &w).unwrap(), &dense_adjoint(ens.user(0), &w)) < 1e-12);
    }
}

#[test]
fn fast_and_dense_paths_agree() {
    for l in [8usize, 16, 33, 64, 128] {
        let ens = ensemble(l, 2, 5.min(l), 3, BKind::PartialDft, l as u64);
        let fast = LiftedOperator::with_path(&ens, ApplyPath::Fast);
        let dense = LiftedOperator::with_path(&ens, ApplyPath::Dense);
        let z = random_blocks(&ens, 9);
        let w = random_cvec(l, &mut rng(10));
        assert!(rel_diff_vec(&fast.apply(&z).unwrap(), &dense.apply(&z).unwrap()) < 1e-10);
        let (a, b) = (fast.adjoint(&w).unwrap(), dense.adjoint(&w).unwrap());
        for (x, y) in a.blocks.iter().zip(&b.blocks) {
            assert!(rel_diff(x, y) < 1e-10, "L = {l}");
        }
    }
}

#[test]
fn composite_reduces_to_single_user_and_is_linear() {
    let ens = ensemble(16, 1, 3, 3, BKind::PartialDft, 6);
    let op = LiftedOperator::new(&ens);
    let z = random_blocks(&ens, 1);
    assert_eq!(op.apply(&z).unwrap(), op.apply_user(0, &z.blocks[0]).unwrap());

    let ens = ensemble(16, 3, 3, 2, BKind::GenericOrthonormal, 7);
    let op = LiftedOperator::new(&ens);
    let (z, w) = (random_blocks(&ens, 2), random_blocks(&ens, 3));
    let (a, b) = (C64::new(0.3, -1.2), C64::new(-2.0, 0.5));
    let mut combo = z.scale(a);
    for (c, wi) in combo.blocks.iter_mut().zip(&w.blocks) {
        *c += wi * b;
    }
    let lhs = op.apply(&combo).unwrap();
    let rhs = op.apply(&z).unwrap() * a + op.apply(&w).unwrap() * b;
    assert!(rel_diff_vec(&lhs, &rhs) < 1e-12);
}

#[test]
fn truth_maps_to_noiseless_observation() {
    let ens = ensemble(64, 3, 6, 5, BKind::PartialDft, 8);
    let y = LiftedOperator::new(&ens).apply(&ens.truth_blocks()).unwrap();
    assert!(rel_diff_vec(&y, ens.y()) < 1e-12);
}

#[test]
fn restricted_outputs_reassemble_full_output() {
    let ens = ensemble(16, 2, 3, 3, BKind::GenericOrthonormal, 9);
    let op = LiftedOperator::new(&ens);
    let z = random_cmat(3, 3, &mut rng(4));
    let full = op.apply_user(1, &z).unwrap();

    let single = Partition::new(16, vec![(0..16).collect()]).unwrap();
    assert!(rel_diff_vec(&op.apply_restricted(1, &single, 0, &z).unwrap(), &full) < 1e-14);

    let part = dft_partition(16, 4).unwrap();
    let mut assembled = CVec::zeros(16);
    for p in 0..4 {
        let out = op.apply_restricted(1, &part, p, &z).unwrap();
        for (t, &row) in part.block(p).iter().enumerate() {
            assembled[row] = out[t];
        }
    }
    assert!(rel_diff_vec(&assembled, &full) < 1e-12);

    // masked dense oracle for the restricted adjoint
    let w = random_cvec(4, &mut rng(5));
    let mut masked = CVec::zeros(16);
    for (t, &row) in part.block(2).iter().enumerate() {
        masked[row] = w[t];
    }
    let got = op.adjoint_restricted(1, &part, 2, &w).unwrap();
    assert!(rel_diff(&got, &dense_adjoint(ens.user(1), &masked)) < 1e-12);
}

#[test]
fn strided_blocks_of_dft_have_scaled_identity_gram() {
    let ens = ensemble(64, 2, 8, 3, BKind::PartialDft, 10);
    let part = dft_partition(64, 4).unwrap();
    for p in 0..4 {
        let g = block_gram(&ens, p, &part).unwrap();
        for (t, s) in g.t.iter().zip(&g.s) {
            assert!((t - CMat::identity(8, 8) * C64::new(0.25, 0.0)).norm() < 1e-12);
            assert!((s - CMat::identity(8, 8) * C64::new(4.0, 0.0)).norm() < 1e-10);
        }
    }
    let whole = Partition::new(64, vec![(0..64).collect()]).unwrap();
    let t = block_t(&ens, 0, 0, &whole).unwrap();
    assert!((t - CMat::identity(8, 8)).norm() < 1e-12);
}

#[test]
fn block_gram_matches_sum_of_outer_products() {
    let ens = ensemble(16, 1, 3, 2, BKind::GenericOrthonormal, 11);
    let part = contiguous_partition(16, 2).unwrap();
    let u = ens.user(0);
    for p in 0..2 {
        let mut want = CMat::zeros(3, 3);
        for &row in part.block(p) {
            let b = CVec::from_fn(3, |k, _| u.b[(row, k)].conj());
            want += &b * b.adjoint();
        }
        assert!((block_t(&ens, 0, p, &part).unwrap() - want).norm() < 1e-12);
    }
}

#[test]
fn gram_spectrum_matches_dense_eigenvalues() {
    // B = I, A = sqrt(2) Q with Q orthogonal: Phi Phi^* = 2 (Q Q^T) o I = 2 I
    let l = 12;
    let qr = RMat::from_fn(l, l, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0 + if i == j { 20.0 } else { 0.0 }).qr();
    let q = qr.q() * 2f64.sqrt();
    let user = User {
        kind: MatrixKind { b: BKind::Explicit, a: AKind::Explicit },
        b: CMat::identity(l, l),
        a: q,
        h: RVec::from_element(l, 1.0 / (l as f64).sqrt()),
        x: RVec::from_element(l, 1.0 / (l as f64).sqrt()),
        signs: None,
    };
    let ens = Ensemble::from_users(l, vec![user], None, 0).unwrap();
    let (lo, hi) = gram_spectrum(&ens);
    assert!((lo - 2.0).abs() < 1e-10 && (hi - 2.0).abs() < 1e-10, "{lo} {hi}");

    // general case against eigenvalues of the assembled dense Gram
    let ens = ensemble(12, 2, 3, 3, BKind::GenericOrthonormal, 12);
    let mut phi = CMat::zeros(12, 0);
    for u in ens.users() {
        let m = matrix_of(u.k(), u.n(), |z| {
            let y = dense_apply(u, z);
            CMat::from_column_slice(12, 1, y.as_slice())
        });
        phi = CMat::from_columns(&phi.column_iter().chain(m.column_iter()).map(|c| c.into_owned()).collect::<Vec<_>>());
    }
    let eig = (&phi * phi.adjoint()).symmetric_eigenvalues();
    let dense_hi = eig.iter().copied().fold(f64::MIN, f64::max);
    let dense_lo = eig.iter().copied().fold(f64::MAX, f64::min);
    let (lo, hi) = gram_spectrum(&ens);
    assert!((hi - dense_hi).abs() < 1e-9 * dense_hi);
    assert!((lo - dense_lo).abs() < 1e-9 * dense_hi);
}

#[test]
fn gram_spectrum_is_homogeneous_in_a() {
    let ens = ensemble(16, 2, 3, 4, BKind::PartialDft, 13);
    let (lo, hi) = gram_spectrum(&ens);
    let scaled: Vec<User> = ens
        .users()
        .iter()
        .map(|u| User { a: &u.a * 3.0, ..u.clone() })
        .collect();
    let ens3 = Ensemble::from_users(16, scaled, None, 0).unwrap();
    let (lo3, hi3) = gram_spectrum(&ens3);
    assert!((lo3 - 9.0 * lo).abs() < 1e-9 * hi3);
    assert!((hi3 - 9.0 * hi).abs() < 1e-9 * hi3);
    assert!(lo > 0.0 && hi.is_finite());
}

#[test]
fn mean_normal_operator_approaches_identity() {
    // average of A^* A (Z) over fresh Gaussian A, K = N = 4, L = 64
    let z = random_cmat(4, 4, &mut rng(14));
    let mut h = vec![0.0; 4];
    h[0] = 1.0;
    let mut acc = CMat::zeros(4, 4);
    let draws = 200;
    for d in 0..draws {
        let mut user = UserSpec::new(4, 4, BKind::PartialDft, AKind::Gaussian);
        user.h = Some(h.clone());
        user.x = Some(h.clone());
        let spec = EnsembleSpec { l: 64, users: vec![user], noise: NoiseSpec::None };
        let ens = synthesize(&spec, 1000 + d).unwrap();
        let op = LiftedOperator::new(&ens);
        acc += op.adjoint_user(0, &op.apply_user(0, &z).unwrap()).unwrap();
    }
    acc /= C64::new(draws as f64, 0.0);
    let err = rel_diff(&acc, &z);
    assert!(err <= 0.1, "relative error {err}");
}

#[test]
fn dimension_mismatches_are_errors() {
    let ens = ensemble(16, 2, 3, 3, BKind::PartialDft, 15);
    let op = LiftedOperator::new(&ens);
    assert!(op.apply_user(0, &CMat::zeros(2, 3)).is_err());
    assert!(op.apply_user(5, &CMat::zeros(3, 3)).is_err());
    assert!(op.adjoint_user(0, &CVec::zeros(15)).is_err());
    assert!(op.apply(&LiftedBlocks::zeros(&[(3, 3)])).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjoint_identity_holds(
        l in 2usize..=16,
        r in 1usize..=3,
        k in 1usize..=4,
        n in 1usize..=4,
        generic in any::<bool>(),
        seed in any::<u64>(),
    ) {
        prop_assume!(k <= l && n <= l);
        let b = if generic { BKind::GenericOrthonormal } else { BKind::PartialDft };
        let ens = ensemble(l, r, k, n, b, seed);
        let op = LiftedOperator::new(&ens);
        let z = random_blocks(&ens, seed ^ 1);
        let w = random_cvec(l, &mut rng(seed ^ 2));
        let lhs = inner_vec(op.apply(&z).unwrap().as_slice(), w.as_slice());
        let rhs = z.inner(&op.adjoint(&w).unwrap());
        let scale = op.apply(&z).unwrap().norm() * w.norm();
        prop_assert!((lhs - rhs).norm() <= 1e-12 * scale.max(1e-300));

        for i in 0..r {
            let a = inner_vec(op.apply_user(i, &z.blocks[i]).unwrap().as_slice(), w.as_slice());
            let b = inner(&z.blocks[i], &op.adjoint_user(i, &w).unwrap());
            prop_assert!((a - b).norm() <= 1e-12 * scale.max(1e-300) + 1e-14);
        }
    }

    #[test]
    fn matrix_free_equals_dense_definition(l in 2usize..=64, k in 1usize..=6, n in 1usize..=6, seed in any::<u64>()) {
        prop_assume!(k <= l && n <= l);
        let ens = ensemble(l, 1, k, n, BKind::PartialDft, seed);
        let op = LiftedOperator::with_path(&ens, ApplyPath::Fast);
        let mut r = rng(seed);
        let z = random_cmat(k, n, &mut r);
        let w = random_cvec(l, &mut r);
        prop_assert!(rel_diff_vec(&op.apply_user(0, &z).unwrap(), &dense_apply(ens.user(0), &z)) <= 1e-10);
        prop_assert!(rel_diff(&op.adjoint_user(0, &w).unwrap(), &dense_adjoint(ens.user(0), &w)) <= 1e-10);
    }

    #[test]
    fn restricted_adjoint_identity(s in 1usize..=4, k in 1usize..=3, seed in any::<u64>()) {
        let l = 16;
        let p = 1 << (s - 1);
        let ens = ensemble(l, 2, k, 2, BKind::GenericOrthonormal, seed);
        let op = LiftedOperator::new(&ens);
        let part = dft_partition(l, p).unwrap();
        let mut r = rng(seed);
        let z = random_cmat(k, 2, &mut r);
        let w = random_cvec(part.q(), &mut r);
        for b in 0..p {
            let a = inner_vec(op.apply_restricted(1, &part, b, &z).unwrap().as_slice(), w.as_slice());
            let c = inner(&z, &op.adjoint_restricted(1, &part, b, &w).unwrap());
            prop_assert!((a - c).norm() <= 1e-12 * (z.norm() * w.norm()).max(1e-300) * 4.0);
        }
    }
}
