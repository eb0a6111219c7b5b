//! Stability certificate for the example: the horizon/error budget, the
//! exponential envelope it implies and the sufficient dither frequency,
//! printed as JSON. Also shows how the frequency reacts to the Lipschitz
//! constant.

use liebracket::scenarios::lipschitz_table;
use liebracket::stability::{derived_alpha_beta, exponent_profile, select_budget, StabilityBudget};

fn main() -> liebracket::Result<()> {
    let table = lipschitz_table(2.0, -3.0, 0.5)?;
    let profile = exponent_profile(&[0.5, 0.5])?;
    let budget = StabilityBudget::certify(1.0, 2.5, None, None, table.l_max, &profile)?;
    println!("{}", serde_json::to_string_pretty(&budget)?);

    let b = select_budget(1.0, 2.5, Some(1.0))?;
    let (alpha, beta) = derived_alpha_beta(1.0, 2.5, 1.0, 0.3)?;
    println!("t_f = 1: default D = {:.4}; with D = 0.3: alpha = {alpha:.4}, beta = {beta:.4}", b.d);

    for l in [1e-3, 1.0, 10.0, table.l_max] {
        let c = StabilityBudget::certify(1.0, 2.5, Some(1.0), Some(0.3), l, &profile)?;
        println!("L = {l:>10.3}: log10(omega_star) = {:.3}", c.log10_omega_star);
    }
    Ok(())
}
