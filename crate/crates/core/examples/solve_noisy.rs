//! Ball-constrained recovery under noise; the error tracks the noise level.

use blind_demix::ensemble::{synthesize, AKind, BKind, EnsembleSpec, NoiseSpec};
use blind_demix::solver::{solve, SolverConfig};

fn main() -> blind_demix::Result<()> {
    for sigma in [0.1, 0.01, 0.001] {
        let spec = EnsembleSpec::uniform(256, 2, 15, 15, BKind::PartialDft, AKind::Gaussian).with_noise(NoiseSpec::Relative(sigma));
        let ens = synthesize(&spec, 5)?;
        let rep = solve(&ens, &SolverConfig::ball(ens.eta()))?;
        let err = rep.global_rel_error().unwrap_or(f64::NAN);
        println!("sigma {sigma:<6} eta {:.3e}  rel error {err:.3e}  error/sigma {:.2}", ens.eta(), err / sigma);
    }
    Ok(())
}
