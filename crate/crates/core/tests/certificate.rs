mod common;

use blind_demix::certificate::{
    check_certificate_vector, check_dual_certificate, golfing_run, golfing_run_with, golfing_step, mu_p_sequence,
    write_certificate_csv, GramPath,
};
use blind_demix::ensemble::{
    make_partial_dft_b, synthesize, AKind, BKind, Ensemble, EnsembleSpec, MatrixKind, NoiseSpec, User, UserSpec,
};
use blind_demix::incoherence::{dft_partition, tangent_spaces_from_truth};
use blind_demix::linalg::{CMat, CVec, PowerOptions, RMat, RVec, C64};
use common::*;

fn ensemble(l: usize, r: usize, k: usize, n: usize, seed: u64) -> Ensemble {
    synthesize(&EnsembleSpec::uniform(l, r, k, n, BKind::PartialDft, AKind::Gaussian), seed).unwrap()
}

#[test]
fn initial_residual_is_unit_truth() {
    let ens = ensemble(64, 2, 4, 4, 1);
    let rep = golfing_run(&ens, &dft_partition(64, 4).unwrap(), 3).unwrap();
    for v in &rep.w_norms[0] {
        assert!((v - 1.0).abs() < 1e-12);
    }
    assert_eq!(rep.w_norms.len(), 4);
    assert_eq!(rep.partition_label, "verified");
}

#[test]
fn exact_isometry_clears_residual_in_one_step() {
    let l = 8;
    let a = RMat::from_fn(l, 2, |row, col| {
        if (row & (2 * col)).count_ones() % 2 == 0 { 1.0 } else { -1.0 }
    });
    let user = User {
        kind: MatrixKind { b: BKind::Explicit, a: AKind::Explicit },
        b: make_partial_dft_b(l, 1).unwrap(),
        a,
        h: RVec::from_element(1, 1.0),
        x: RVec::from_vec(vec![0.6, 0.8]),
        signs: None,
    };
    let ens = Ensemble::from_users(l, vec![user], None, 0).unwrap();
    let rep = golfing_run(&ens, &dft_partition(l, 2).unwrap(), 1).unwrap();
    assert!(rep.w_norms[1][0] < 1e-12, "{}", rep.w_norms[1][0]);
}

#[test]
fn one_step_backprojection_is_unbiased() {
    // redraw the coding matrices, keep B, the truth and the partition fixed
    let (l, k, n, r) = (256usize, 4usize, 4usize, 2usize);
    let part = dft_partition(l, 2).unwrap();
    assert_eq!(part.q(), 128);
    let mut g = rng(2);
    let truth: Vec<(Vec<f64>, Vec<f64>)> = (0..r)
        .map(|_| {
            let h: Vec<f64> = random_cvec(k, &mut g).iter().map(|c| c.re).collect();
            let x: Vec<f64> = random_cvec(n, &mut g).iter().map(|c| c.re).collect();
            (h, x)
        })
        .collect();
    let spec = EnsembleSpec {
        l,
        users: truth
            .iter()
            .map(|(h, x)| {
                let mut u = UserSpec::new(k, n, BKind::PartialDft, AKind::Gaussian);
                u.h = Some(h.clone());
                u.x = Some(x.clone());
                u
            })
            .collect(),
        noise: NoiseSpec::None,
    };
    let w0: Vec<CMat> = tangent_spaces_from_truth(&synthesize(&spec, 0).unwrap())
        .unwrap()
        .iter()
        .map(|t| t.anchor())
        .collect();
    let draws = 200;
    let mut mean: Vec<CMat> = w0.iter().map(|w| CMat::zeros(w.nrows(), w.ncols())).collect();
    for d in 0..draws {
        let ens = synthesize(&spec, 500 + d).unwrap();
        for (m, v) in mean.iter_mut().zip(golfing_step(&ens, &part, 0, &w0).unwrap()) {
            *m += v;
        }
    }
    for (m, w) in mean.iter_mut().zip(&w0) {
        *m /= C64::new(draws as f64, 0.0);
        let err = rel_diff(m, w);
        assert!(err <= 0.15, "relative error {err}");
    }
}

#[test]
fn scaled_identity_path_matches_general_path() {
    let ens = ensemble(128, 2, 6, 5, 3);
    let part = dft_partition(128, 4).unwrap();
    let a = golfing_run_with(&ens, &part, 4, GramPath::General).unwrap();
    let b = golfing_run_with(&ens, &part, 4, GramPath::ScaledIdentity).unwrap();
    for (wa, wb) in a.w.iter().flatten().zip(b.w.iter().flatten()) {
        assert!((wa - wb).norm() <= 1e-12);
    }
    assert!((&a.lambda - &b.lambda).norm() <= 1e-12 * a.lambda.norm());
    for (x, y) in a.mu.iter().zip(&b.mu) {
        assert!((x - y).abs() <= 1e-12 * x.max(1.0));
    }
}

#[test]
fn tracked_residual_matches_recomputation() {
    let ens = ensemble(256, 2, 8, 8, 4);
    let rep = golfing_run(&ens, &dft_partition(256, 4).unwrap(), 4).unwrap();
    assert!(rep.recursion_drift <= 1e-10, "{}", rep.recursion_drift);
}

#[test]
fn zero_certificate_fails_first_condition() {
    let ens = ensemble(64, 2, 4, 4, 5);
    let check = check_certificate_vector(&ens, &CVec::zeros(64), 3.0).unwrap();
    for v in &check.residual_t {
        assert!((v - 1.0).abs() < 1e-12);
    }
    assert!(!check.t_pass && !check.pass);
    assert!((check.alpha - 1.0 / 30.0).abs() < 1e-15);
    assert!((check.gate - (0.5 - 2.0 * 2.0 * 3.0 / 30.0)).abs() < 1e-12);
}

#[test]
fn margins_match_dense_recomputation() {
    let ens = synthesize(&EnsembleSpec::uniform(16, 2, 2, 3, BKind::GenericOrthonormal, AKind::Gaussian), 6).unwrap();
    let lambda = random_cvec(16, &mut rng(6));
    let check = check_certificate_vector(&ens, &lambda, 2.0).unwrap();
    for (i, ts) in tangent_spaces_from_truth(&ens).unwrap().iter().enumerate() {
        let back = dense_adjoint(ens.user(i), &lambda);
        let pt = dense_project_t(&ts.h, &ts.x, &back);
        let t_res = (ts.anchor() - &pt).norm();
        let perp = largest_singular_value(&(&back - &pt));
        assert!((check.residual_t[i] - t_res).abs() <= 1e-8);
        assert!((check.residual_perp[i] - perp).abs() <= 1e-8);
        assert!((check.margin_t[i] - (check.alpha - t_res)).abs() <= 1e-8);
        assert!((check.margin_perp[i] - (0.5 - perp)).abs() <= 1e-8);
    }
}

#[test]
fn first_mu_is_bounded_by_mu_h() {
    for seed in 0..4 {
        let ens = ensemble(256, 2, 8, 8, 10 + seed);
        let rep = golfing_run(&ens, &dft_partition(256, 4).unwrap(), 3).unwrap();
        let seq = mu_p_sequence(&rep);
        assert!(seq.mu0_within_mu_h, "{} > {}", seq.values[0], rep.mu_h);
        assert_eq!(seq.halving.len(), seq.values.len() - 1);
    }
}

#[test]
fn zero_residual_gives_zero_mu() {
    let ens = ensemble(64, 1, 4, 2, 7);
    let part = dft_partition(64, 4).unwrap();
    let w = vec![CMat::zeros(4, 2)];
    let back = golfing_step(&ens, &part, 1, &w).unwrap();
    assert_eq!(back[0].norm(), 0.0);
}

#[test]
fn too_many_steps_is_an_error() {
    let ens = ensemble(64, 1, 4, 2, 8);
    assert!(golfing_run(&ens, &dft_partition(64, 4).unwrap(), 5).is_err());
}

#[test]
fn report_rows_and_csv() {
    let ens = ensemble(64, 2, 4, 4, 9);
    let rep = golfing_run(&ens, &dft_partition(64, 4).unwrap(), 2).unwrap();
    let rows = rep.rows(3);
    assert_eq!(rows.len(), 3 * 2);
    let mut buf = Vec::new();
    write_certificate_csv(&mut buf, &rows).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.starts_with("trial,p,user,w_norm,mu_p,partition"));
    let gamma = blind_demix::incoherence::operator_gamma(&ens, &PowerOptions::default()).unwrap();
    let check = check_dual_certificate(&ens, &rep, gamma).unwrap();
    assert_eq!(check.residual_t, rep.residual_t);
}

#[test]
fn generic_subspaces_are_labelled() {
    let spec = EnsembleSpec::uniform(64, 1, 8, 2, BKind::GenericOrthonormal, AKind::Gaussian);
    let ens = synthesize(&spec, 1).unwrap();
    let rep = golfing_run(&ens, &dft_partition(64, 8).unwrap(), 2).unwrap();
    assert!(rep.partition_label == "verified" || rep.partition_label == "unverified-partition");
    let check = blind_demix::incoherence::verify_partition(&ens, &dft_partition(64, 8).unwrap()).unwrap();
    assert_eq!(rep.partition_label == "verified", check.pass);
}
