//! Synthesize a two-user ensemble, print its summary and round-trip it through JSON.

use blind_demix::ensemble::{synthesize, AKind, BKind, Ensemble, EnsembleSpec, NoiseSpec};

fn main() -> blind_demix::Result<()> {
    let spec = EnsembleSpec::uniform(128, 2, 10, 8, BKind::PartialDft, AKind::Gaussian).with_noise(NoiseSpec::Relative(0.01));
    let ens = synthesize(&spec, 42)?;
    println!("L = {}, r = {}, dims = {:?}", ens.l(), ens.r(), ens.dims());
    println!("|y| = {:.4}, |e| = {:.4}, signal energy = {:.4}", ens.y().norm(), ens.eta(), ens.signal_energy());

    let json = ens.to_json(false)?;
    let back = Ensemble::from_json(&json)?;
    println!("JSON size {} bytes, y reproduced to {:.1e}", json.len(), (back.y() - ens.y()).norm());
    Ok(())
}
