//! Incoherence diagnostics and the quantities behind the recovery conditions.

use blind_demix::ensemble::{synthesize, AKind, BKind, EnsembleSpec};
use blind_demix::incoherence::{diagnose, dft_partition, verify_partition};
use blind_demix::linalg::PowerOptions;

fn main() -> blind_demix::Result<()> {
    let ens = synthesize(&EnsembleSpec::uniform(1024, 2, 4, 4, BKind::PartialDft, AKind::Gaussian), 11)?;
    let part = dft_partition(1024, 4)?;
    println!("partition check {:?}", verify_partition(&ens, &part)?);

    let rep = diagnose(&ens, Some(&part), None, &PowerOptions::default())?;
    println!("mu_max^2 = {:.3}, mu_min^2 = {:.3}, mu_h^2 = {:.3}", rep.mu_max_sq, rep.mu_min_sq, rep.mu_h_sq);
    println!("local isometry per user {:?}", rep.local_iso);
    println!("mutual incoherence {:.4}, gamma {:.3}", rep.mutual_mu, rep.gamma);

    let mut csv = Vec::new();
    rep.write_csv(&mut csv)?;
    print!("{}", String::from_utf8_lossy(&csv));
    Ok(())
}
