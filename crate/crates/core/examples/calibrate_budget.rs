//! Run the default precision sweep and print per-channel noise floors.
//! Optional args: SiV peak amplitude, PL background, ODMR baseline rate,
//! repetitions.

use dualtherm::scenarios::{run_precision_sweep, ScenarioConfig, ScenarioKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse())
        .collect::<Result<_, _>>()?;
    let mut cfg = ScenarioConfig::with_kind(ScenarioKind::PrecisionSweep);
    if let Some(&a) = args.first() {
        cfg.pl.peak_amplitude = a;
    }
    if let Some(&b) = args.get(1) {
        cfg.pl.background_rate = b;
    }
    if let Some(&r) = args.get(2) {
        cfg.odmr.baseline_rate = r;
    }
    if let Some(&n) = args.get(3) {
        cfg.precision.repetitions = n as usize;
    }
    let start = std::time::Instant::now();
    let sweep = run_precision_sweep(&cfg)?;
    println!("t_s      sigma_nv_K  sigma_siv_K  fail_nv fail_siv");
    for p in &sweep.points {
        println!(
            "{:<8} {:<11.5} {:<12.5} {:<7} {}",
            p.integration_time_s, p.nv_sigma_c, p.siv_sigma_c, p.nv_failures, p.siv_failures
        );
    }
    for (name, floor) in [("nv", &sweep.nv_floor), ("siv", &sweep.siv_floor)] {
        if let Some(f) = floor {
            println!(
                "{name}: floor {:.4} K/rtHz, exponent {:.4} ± {:.4}",
                f.noise_floor, f.exponent, f.exponent_std_error
            );
        }
    }
    println!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
