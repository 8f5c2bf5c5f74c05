//! Parameter recovery on a synthetic cycle.
//!
//! ```text
//! cargo run --release -p evpinn --example recovery -- [epochs] [seed]
//! ```

use std::time::Instant;

use evpinn::data::{prepare, synth_cycle, CycleSpec};
use evpinn::dynamics::{PhysParams, VehiclePreset};
use evpinn::pinn::{extract_params, train_pinn_with, PinnConfig};
use evpinn::report::MILESTONES;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10_000);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);

    let truth = PhysParams {
        eta: 0.72,
        mu: 0.65,
        mass: 1900.0,
        c_rr: 0.010,
        c_d: 0.24,
    };
    let preset = VehiclePreset::model3lr();
    let cycle = CycleSpec {
        noise_sigma: 0.01,
        seed,
        ..CycleSpec::default()
    };
    let log = synth_cycle(&cycle, &preset.fixed, &truth)?;
    let config = PinnConfig {
        epochs,
        seed,
        ..PinnConfig::default()
    };
    let data = prepare(&log, config.val_fraction, seed)?;

    let start = Instant::now();
    let (model, report) = train_pinn_with(&data, &config, &preset, |epoch, train, val| {
        if MILESTONES.contains(&epoch) || epoch % 1000 == 0 {
            eprintln!(
                "epoch {epoch:>5}  train {:.6}  val {:.6}  ({:.1} s)",
                train.total,
                val.map_or(f64::NAN, |v| v.total),
                start.elapsed().as_secs_f64()
            );
        }
    })?;
    println!("{}", report.milestone_table());
    let (_, table) = extract_params(&model, &truth);
    for row in &table.rows {
        println!(
            "{:<5} truth {:>10.5}  recovered {:>10.5}  rel {:>6.2}%",
            row.name,
            row.reference,
            row.predicted,
            100.0 * row.rel_error
        );
    }
    Ok(())
}
