mod common;

use blind_demix::ensemble::{
    conv_form_equivalence, make_gaussian_a, make_generic_orthonormal_b, make_partial_dft_b, make_rand_hadamard_a,
    rand_hadamard_with_signs, synthesize, AKind, BKind, Ensemble, EnsembleSpec, NoiseSpec, UserSpec,
};
use blind_demix::linalg::{CMat, C64};
use blind_demix::transforms::{circular_convolve, fwht};
use common::{random_cvec, rng};
use proptest::prelude::*;

fn orthonormality_error(b: &CMat) -> f64 {
    (b.adjoint() * b - CMat::identity(b.ncols(), b.ncols())).norm()
}

#[test]
fn partial_dft_single_column_matches_formula() {
    let b = make_partial_dft_b(4, 1).unwrap();
    let expected = [C64::new(0.0, -0.5), C64::new(-0.5, 0.0), C64::new(0.0, 0.5), C64::new(0.5, 0.0)];
    for (got, want) in b.iter().zip(expected) {
        assert!((got - want).norm() < 1e-15, "{got} vs {want}");
    }
    assert!(orthonormality_error(&make_partial_dft_b(4, 2).unwrap()) < 1e-14);
}

#[test]
fn partial_dft_rows_have_equal_energy() {
    let (l, k) = (64, 7);
    let b = make_partial_dft_b(l, k).unwrap();
    for row in 0..l {
        let e: f64 = b.row(row).iter().map(|c| c.norm_sqr()).sum();
        assert!((e - k as f64 / l as f64).abs() < 1e-14);
    }
}

#[test]
fn generic_orthonormal_b_is_orthonormal() {
    let b = make_generic_orthonormal_b(40, 9, &mut rng(3)).unwrap();
    assert!(orthonormality_error(&b) < 1e-10);
}

#[test]
fn gaussian_a_moments() {
    let a = make_gaussian_a(100_000, 1, 11);
    let mean = a.iter().sum::<f64>() / a.len() as f64;
    assert!(mean.abs() < 0.02, "mean {mean}");

    let big = make_gaussian_a(100_000, 10, 12);
    let n = big.len() as f64;
    let m = big.iter().sum::<f64>() / n;
    let var = big.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    assert!((0.98..=1.02).contains(&var), "variance {var}");
}

#[test]
fn gaussian_a_is_seed_deterministic() {
    let a = make_gaussian_a(50, 5, 99);
    let b = make_gaussian_a(50, 5, 99);
    assert_eq!(a.as_slice(), b.as_slice());
    assert_ne!(a.as_slice(), make_gaussian_a(50, 5, 100).as_slice());
}

#[test]
fn hadamard_order_two_and_orthogonality() {
    let h2 = rand_hadamard_with_signs(2, 2, &[1.0, 1.0]).unwrap();
    assert_eq!(h2.as_slice(), &[1.0, 1.0, 1.0, -1.0]);

    let a = make_rand_hadamard_a(8, 8, 5).unwrap();
    assert!(a.iter().all(|v| *v == 1.0 || *v == -1.0));
    let gram = a.transpose() * &a;
    let target = blind_demix::linalg::RMat::identity(8, 8) * 8.0;
    assert!((gram - target).norm() < 1e-12);
    assert!(make_rand_hadamard_a(12, 3, 5).is_err());
}

#[test]
fn unit_vector_truth_gives_product_of_first_columns() {
    let mut user = UserSpec::new(3, 4, BKind::PartialDft, AKind::Gaussian);
    user.h = Some(vec![1.0, 0.0, 0.0]);
    user.x = Some(vec![1.0, 0.0, 0.0, 0.0]);
    let spec = EnsembleSpec { l: 16, users: vec![user], noise: NoiseSpec::None };
    let ens = synthesize(&spec, 4).unwrap();
    let u = ens.user(0);
    for row in 0..16 {
        let want = u.b[(row, 0)] * u.a[(row, 0)];
        assert!((ens.y()[row] - want).norm() < 1e-14);
    }
}

#[test]
fn noiseless_observation_matches_model() {
    let spec = EnsembleSpec::uniform(32, 3, 4, 5, BKind::GenericOrthonormal, AKind::Gaussian);
    let ens = synthesize(&spec, 8).unwrap();
    let mut y = blind_demix::linalg::CVec::zeros(32);
    for u in ens.users() {
        let bh = &u.b * u.h.map(|v| C64::new(v, 0.0));
        let ax = u.a.map(|v| C64::new(v, 0.0)) * u.x.map(|v| C64::new(v, 0.0));
        y += bh.component_mul(&ax);
    }
    assert!((ens.y() - &y).norm() <= 1e-12 * y.norm());
    for u in ens.users() {
        assert!(orthonormality_error(&u.b) < 1e-10);
    }
}

#[test]
fn relative_noise_has_exact_norm() {
    let sigma = 0.05;
    let spec = EnsembleSpec::uniform(64, 2, 4, 4, BKind::PartialDft, AKind::Gaussian)
        .with_noise(NoiseSpec::Relative(sigma));
    let ens = synthesize(&spec, 21).unwrap();
    let energy: f64 = ens.users().iter().map(|u| u.lifted_truth().norm_squared()).sum();
    let want = sigma * energy.sqrt();
    assert!((ens.noise().norm() - want).abs() < 1e-12 * want);
    assert!((ens.eta() - want).abs() < 1e-12 * want);
}

#[test]
fn invalid_specs_are_rejected() {
    let too_big = EnsembleSpec::uniform(8, 1, 9, 2, BKind::PartialDft, AKind::Gaussian);
    assert!(synthesize(&too_big, 0).is_err());
    let zero_l = EnsembleSpec::uniform(0, 1, 1, 1, BKind::PartialDft, AKind::Gaussian);
    assert!(synthesize(&zero_l, 0).is_err());
    let not_pow2 = EnsembleSpec::uniform(24, 1, 2, 2, BKind::PartialDft, AKind::RandHadamard);
    assert!(synthesize(&not_pow2, 0).is_err());
}

#[test]
fn serialized_form_is_byte_identical_for_equal_seeds() {
    let spec = EnsembleSpec::uniform(32, 2, 3, 3, BKind::PartialDft, AKind::RandHadamard)
        .with_noise(NoiseSpec::Relative(0.1));
    let a = synthesize(&spec, 77).unwrap().to_json(true).unwrap();
    let b = synthesize(&spec, 77).unwrap().to_json(true).unwrap();
    assert_eq!(a, b);
}

#[test]
fn json_round_trip_preserves_everything() {
    let spec = EnsembleSpec::uniform(32, 2, 3, 4, BKind::GenericOrthonormal, AKind::Gaussian)
        .with_noise(NoiseSpec::Absolute(0.01));
    let ens = synthesize(&spec, 5).unwrap();
    for include in [false, true] {
        let text = ens.to_json(include).unwrap();
        let back = Ensemble::from_json(&text).unwrap();
        assert_eq!(back.y().as_slice(), ens.y().as_slice());
        for (u, v) in ens.users().iter().zip(back.users()) {
            assert_eq!(u.b.as_slice(), v.b.as_slice());
            assert_eq!(u.a.as_slice(), v.a.as_slice());
            assert_eq!(u.h.as_slice(), v.h.as_slice());
        }
        assert_eq!(back.to_json(include).unwrap(), text);
    }
}

#[test]
fn convolution_form_holds_for_noiseless_dft_instances() {
    for seed in 0..5 {
        let spec = EnsembleSpec::uniform(32, 2, 4, 4, BKind::PartialDft, AKind::Gaussian);
        let ens = synthesize(&spec, seed).unwrap();
        let res = conv_form_equivalence(&ens).unwrap();
        assert!(res <= 1e-10, "seed {seed}: residual {res}");
    }
    let hadamard = EnsembleSpec::uniform(32, 2, 4, 4, BKind::PartialDft, AKind::RandHadamard);
    assert!(conv_form_equivalence(&synthesize(&hadamard, 1).unwrap()).unwrap() <= 1e-10);
}

#[test]
fn convolution_form_is_rejected_for_generic_b() {
    let spec = EnsembleSpec::uniform(16, 1, 2, 2, BKind::GenericOrthonormal, AKind::Gaussian);
    assert!(conv_form_equivalence(&synthesize(&spec, 1).unwrap()).is_err());
}

#[test]
fn dft_modulation_is_zero_padded_filter() {
    // F^{-1} B h = (h; 0) in label order
    let (l, k) = (16, 5);
    let b = make_partial_dft_b(l, k).unwrap();
    let h = random_cvec(k, &mut rng(6));
    let bh = &b * &h;
    let back = blind_demix::ensemble::unitary_idft_labels(bh.as_slice());
    for (s, v) in back.iter().enumerate() {
        let want = if s < k { h[s] } else { C64::new(0.0, 0.0) };
        assert!((v - want).norm() < 1e-12);
    }
}

#[test]
fn empty_ensemble_has_zero_residual() {
    let ens = Ensemble::from_users(8, Vec::new(), None, 0).unwrap();
    assert_eq!(ens.y().norm(), 0.0);
    assert_eq!(conv_form_equivalence(&ens).unwrap(), 0.0);
}

fn direct_convolution(f: &[C64], g: &[C64]) -> Vec<C64> {
    let n = f.len();
    (0..n)
        .map(|l| (0..n).map(|k| f[k] * g[(l + n - k) % n]).sum())
        .collect()
}

fn direct_hadamard(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|l| {
            (0..n)
                .map(|m| if (l & m).count_ones() % 2 == 0 { v[m] } else { -v[m] })
                .sum()
        })
        .collect()
}

proptest! {
    #[test]
    fn fft_convolution_matches_direct_sum(n in 1usize..=64, seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = random_cvec(n, &mut r);
        let g = random_cvec(n, &mut r);
        let fast = circular_convolve(f.as_slice(), g.as_slice()).unwrap();
        let slow = direct_convolution(f.as_slice(), g.as_slice());
        let num: f64 = fast.iter().zip(&slow).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let den: f64 = slow.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(num <= 1e-10 * den.max(1e-300));
    }

    #[test]
    fn fwht_matches_direct_transform(s in 0u32..=6, seed in any::<u64>()) {
        use rand::Rng;
        let n = 1usize << s;
        let mut r = rng(seed);
        let v: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut fast = v.clone();
        fwht(&mut fast).unwrap();
        let slow = direct_hadamard(&v);
        let num: f64 = fast.iter().zip(&slow).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = slow.iter().map(|c| c * c).sum::<f64>().sqrt();
        prop_assert!(num <= 1e-10 * den.max(1e-300));
    }

    #[test]
    fn generated_subspaces_are_orthonormal(l in 4usize..48, k in 1usize..4, seed in any::<u64>()) {
        prop_assume!(k <= l);
        let spec = EnsembleSpec::uniform(l, 2, k, 2.min(l), BKind::GenericOrthonormal, AKind::Gaussian);
        let ens = synthesize(&spec, seed).unwrap();
        for u in ens.users() {
            prop_assert!(orthonormality_error(&u.b) <= 1e-10);
        }
        let dft = make_partial_dft_b(l, k).unwrap();
        prop_assert!(orthonormality_error(&dft) <= 1e-10);
    }
}
