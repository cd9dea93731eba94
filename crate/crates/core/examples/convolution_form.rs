//! The modulation model as a sum of circular convolutions, plus the FFT and
//! Walsh-Hadamard kernels behind the fast operators.

use blind_demix::ensemble::{conv_form_equivalence, synthesize, AKind, BKind, EnsembleSpec};
use blind_demix::linalg::C64;
use blind_demix::transforms::{circular_convolve, fwht};

fn main() -> blind_demix::Result<()> {
    let f: Vec<C64> = [1.0, 2.0, 0.0, 0.0].iter().map(|&v| C64::new(v, 0.0)).collect();
    let g: Vec<C64> = [0.0, 1.0, 0.0, 0.0].iter().map(|&v| C64::new(v, 0.0)).collect();
    println!("[1,2,0,0] * [0,1,0,0] = {:?}", circular_convolve(&f, &g)?.iter().map(|c| c.re).collect::<Vec<_>>());

    let mut v = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    fwht(&mut v)?;
    println!("FWHT of e_0 = {v:?}");

    let ens = synthesize(&EnsembleSpec::uniform(64, 3, 6, 5, BKind::PartialDft, AKind::Gaussian), 3)?;
    println!("convolution form residual = {:.2e}", conv_form_equivalence(&ens)?);
    Ok(())
}
