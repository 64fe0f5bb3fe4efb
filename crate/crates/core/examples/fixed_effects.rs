//! Unit and period effects fitted on untreated cells only, then removed from
//! every cell before estimation.
//!
//! ```text
//! cargo run --example fixed_effects
//! ```

use mcpanel::panel::{build_mask, fit_fixed_effects, residualize};
use mcpanel::Panel;
use nalgebra::DMatrix;

fn main() -> mcpanel::Result<()> {
    let unit = [10.0, 20.0, 30.0, 40.0];
    let period = [0.0, 1.0, 3.0, 2.0, 5.0];
    // Additive outcomes plus an effect of 7 once treated.
    let adoption = vec![Some(3), Some(2), None, None];
    let y = DMatrix::from_fn(4, 5, |i, t| {
        let treated = adoption[i].is_some_and(|g| t >= g);
        unit[i] + period[t] + if treated { 7.0 } else { 0.0 }
    });
    let panel = Panel::from_matrix(y, adoption)?;
    let mask = build_mask(&panel);
    let fe = fit_fixed_effects(&panel, &mask)?;
    println!("grand mean    {:.3}", fe.grand_mean);
    println!("unit effects  {:.3?}", fe.unit_effects);
    println!("period effects {:.3?}", fe.time_effects);
    println!("sweeps        {}", fe.sweeps);

    let resid = residualize(&panel, &fe)?;
    println!(
        "residuals (treated cells keep the effect):\n{:.3}",
        resid.outcomes()
    );
    Ok(())
}
