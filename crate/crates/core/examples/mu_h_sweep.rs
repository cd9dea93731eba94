//! mu_h^2 for h with m leading ones: the value equals m.

use blind_demix::harness::{run_mu_h_sweep, Axis, ExperimentGrid, Profile};

fn main() -> blind_demix::Result<()> {
    let mut grid = ExperimentGrid::mu_h(Profile::Desk).with_trials(1);
    grid.axes = vec![Axis::new("L", [128.0, 256.0]), Axis::new("m", [3.0, 10.0, 30.0])];
    let res = run_mu_h_sweep(&grid)?;
    for row in &res.rows {
        println!("L = {:>3}, m = {:>2}: mu_h^2 = {:.6}", row.axes[0], row.axes[1], row.extra.unwrap_or(f64::NAN));
    }
    Ok(())
}
