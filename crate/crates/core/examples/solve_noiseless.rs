//! Exact recovery of two users from one noiseless observation.

use blind_demix::ensemble::{synthesize, AKind, BKind, EnsembleSpec};
use blind_demix::solver::{solve, SolverConfig};

fn main() -> blind_demix::Result<()> {
    let ens = synthesize(&EnsembleSpec::uniform(250, 2, 30, 25, BKind::PartialDft, AKind::Gaussian), 1)?;
    let rep = solve(&ens, &SolverConfig::default())?;
    println!(
        "{} iterations, converged {}, feasibility {:.1e}",
        rep.iterations, rep.converged, rep.feasibility
    );
    if let Some(score) = &rep.score {
        for (i, u) in score.users.iter().enumerate() {
            println!("user {i}: lifted error {:.2e}, |h - c h_hat| = {:.2e}", u.lifted_rel_error, u.h_error);
        }
        println!("global relative error {:.2e}, success {}", score.global_rel_error, rep.success);
    }
    for (i, (f, _)) in rep.factors.iter().enumerate() {
        println!("user {i}: sigma_1 = {:.4}, sigma_2/sigma_1 = {:.1e}", f.sigma1, f.spectral_gap);
    }
    Ok(())
}
