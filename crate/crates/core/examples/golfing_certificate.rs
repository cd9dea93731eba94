//! Build an approximate dual certificate by golfing and check its conditions.

use blind_demix::certificate::{check_dual_certificate, golfing_run, mu_p_sequence};
use blind_demix::ensemble::{synthesize, AKind, BKind, EnsembleSpec};
use blind_demix::incoherence::{dft_partition, operator_gamma};
use blind_demix::linalg::PowerOptions;

fn main() -> blind_demix::Result<()> {
    let ens = synthesize(&EnsembleSpec::uniform(2048, 2, 4, 4, BKind::PartialDft, AKind::Gaussian), 9)?;
    let part = dft_partition(2048, 4)?;
    let rep = golfing_run(&ens, &part, 4)?;
    for (p, norms) in rep.w_norms.iter().enumerate() {
        println!("p = {p}: |W_i,p|_F = {norms:.3?} (target {:.3})", 0.5f64.powi(p as i32));
    }
    let seq = mu_p_sequence(&rep);
    println!("mu_p = {:.3?}, halving {:?}", seq.values, seq.halving);

    let gamma = operator_gamma(&ens, &PowerOptions::default())?;
    let check = check_dual_certificate(&ens, &rep, gamma)?;
    println!(
        "alpha {:.2e}, T margins {:.3?}, perp margins {:.3?}, pass {}",
        check.alpha, check.margin_t, check.margin_perp, check.pass
    );
    Ok(())
}
