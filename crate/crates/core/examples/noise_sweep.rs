//! Mean relative error against SNR, with the least-squares fit in dB.

use blind_demix::harness::{run_noise_sweep, Axis, ExperimentGrid, NoiseProfile, Profile};

fn main() -> blind_demix::Result<()> {
    let mut grid = ExperimentGrid::noise(NoiseProfile::GaussianR3, Profile::Desk).with_trials(2);
    grid.axes = vec![Axis::new("sigma", [0.1, 0.01, 0.001])];
    let res = run_noise_sweep(&grid)?;
    let reg = res.regression.expect("noise runs carry a regression");
    for ((snr, err), c) in reg.snr_db.iter().zip(&reg.error_db).zip(&reg.c_fit) {
        println!("SNR {snr:>5.1} dB  error {err:>6.2} dB  error/eta factor {c:.3}");
    }
    println!("slope {:.3} (R^2 {:.4}), amplitude slope {:.3}", reg.slope, reg.r2, reg.amplitude_slope);
    Ok(())
}
