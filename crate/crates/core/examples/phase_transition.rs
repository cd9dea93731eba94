//! A small success-rate grid over L and r, written as CSV and an SVG heatmap.

use blind_demix::ensemble::AKind;
use blind_demix::harness::{run_phase_lr, write_outputs, Axis, ExperimentGrid, Profile};

fn main() -> blind_demix::Result<()> {
    let mut grid = ExperimentGrid::phase_lr(AKind::Gaussian, Profile::Desk).with_trials(4).with_seed(1);
    grid.axes = vec![Axis::new("L", [100.0, 150.0, 200.0]), Axis::new("r", [1.0, 2.0])];
    let res = run_phase_lr(&grid)?;
    for c in &res.cells {
        println!("L = {:>3}, r = {}: {}/{} successes", c.axes[0], c.axes[1], c.successes, c.trials);
    }
    let dir = std::env::temp_dir().join("blind-demix-phase");
    std::fs::create_dir_all(&dir)?;
    for path in write_outputs(&res, &dir)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
