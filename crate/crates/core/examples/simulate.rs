//! Generating a low-rank staggered-adoption panel with a known effect and
//! writing it as long-format CSV.
//!
//! ```text
//! cargo run --example simulate -- panel.csv
//! ```

use mcpanel::lowrank::singular_values;
use mcpanel::panel::write_panel;
use mcpanel::simulate::{simulate_panel, EffectPath, SimConfig};

fn main() -> mcpanel::Result<()> {
    let config = SimConfig {
        n_units: 25,
        n_periods: 15,
        rank: 2,
        noise_scale: 0.0,
        treatment_effect: EffectPath::Constant(5.0),
        seed: 7,
        ..Default::default()
    };
    let sim = simulate_panel(&config)?;
    let sv = singular_values(&sim.untreated)?;
    println!(
        "{} units x {} periods, {} treated cells; leading singular values of Y(inf): {:.3?}",
        sim.panel.n_units(),
        sim.panel.n_periods(),
        sim.panel.mask().n_treated(),
        &sv.as_slice()[..4]
    );
    println!("cohorts (column index): {:?}", sim.panel.cohorts());

    match std::env::args().nth(1) {
        Some(path) => {
            write_panel(&sim.panel, std::fs::File::create(&path)?)?;
            println!("wrote {path}");
        }
        None => {
            let mut out = Vec::new();
            write_panel(&sim.panel, &mut out)?;
            for line in String::from_utf8_lossy(&out).lines().take(5) {
                println!("{line}");
            }
        }
    }
    Ok(())
}
