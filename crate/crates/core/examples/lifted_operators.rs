//! Apply the lifted operator and its adjoint, and inspect the Gram spectrum.

use blind_demix::ensemble::{synthesize, AKind, BKind, EnsembleSpec};
use blind_demix::incoherence::dft_partition;
use blind_demix::lifting::{block_gram, gram_spectrum, LiftedOperator};
use blind_demix::linalg::inner_vec;

fn main() -> blind_demix::Result<()> {
    let ens = synthesize(&EnsembleSpec::uniform(16, 2, 4, 4, BKind::PartialDft, AKind::RandHadamard), 7)?;
    let op = LiftedOperator::new(&ens);

    let truth = ens.truth_blocks();
    let y = op.apply(&truth)?;
    println!("|A(X) - y| = {:.2e}", (&y - ens.y()).norm());

    let back = op.adjoint(&y)?;
    let lhs = inner_vec(y.as_slice(), y.as_slice()).re;
    let rhs = truth.inner(&back).re;
    println!("<A X, y> = {lhs:.6}, <X, A* y> = {rhs:.6}");

    let (lo, hi) = gram_spectrum(&ens);
    println!("Gram eigenvalues in [{lo:.3}, {hi:.3}]");

    let part = dft_partition(16, 2)?;
    let g = block_gram(&ens, 0, &part)?;
    println!("block 0 condition numbers {:?}", g.condition);
    Ok(())
}
