//! Closed-form Lipschitz constants of the example's fields and Lie
//! derivatives next to sampled estimates of the first-order ones.

use liebracket::dynamics::{estimate_lipschitz, SampleBox};
use liebracket::scenarios::{example_system, lipschitz_table};

fn main() -> liebracket::Result<()> {
    let table = lipschitz_table(2.0, -3.0, 0.5)?;
    println!("first order: {:?}", table.first);
    println!("second order:");
    for row in &table.second {
        println!("    {row:10.3?}");
    }
    println!("L_max = {:.4} at indices {:?}", table.l_max, table.argmax);

    let system = example_system(2.0, -3.0, 0.5)?;
    for (i, bound) in table.first.iter().enumerate() {
        for (lo, hi) in [(-0.01, 0.01), (-5.0, 5.0)] {
            let est = estimate_lipschitz(system.field(i), &SampleBox::cube(1, lo, hi), 2, 400, 11)?;
            println!("f{i} on [{lo}, {hi}]: sampled {est:.5} <= {bound:.5}");
        }
    }
    Ok(())
}
