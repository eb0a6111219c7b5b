//! Builds the Lie-bracket system of the built-in example after all
//! assumption checks, and compares its drift with the closed form `(a - b^2 k) x`.

use liebracket::dynamics::Vector;
use liebracket::lbs::{build_lbs, check_interaction_condition};
use liebracket::scenarios::{example_lbs_coefficient, example_system};

fn main() -> liebracket::Result<()> {
    let (a, b, k) = (2.0, -3.0, 0.5);
    let system = example_system(a, b, k)?;
    let lbs = build_lbs(&system)?;
    for c in lbs.coefficients() {
        println!("gamma_{}{} = {:+.6} ({:?})", c.i, c.j, c.gamma, c.case);
    }
    let interaction = check_interaction_condition(&system, 64, 1e-8, 1)?;
    println!("pairs needing the interaction condition: {}", interaction.pairs.len());

    let expected = example_lbs_coefficient(a, b, k);
    println!("closed form: x' = {} x (stable: {})", expected.coefficient, expected.stable);
    for x in [-4.0, -0.3, 0.1, 1.0, 7.5] {
        let v = lbs.drift().value(0.0, &Vector::from_element(1, x))[0];
        println!("x = {x:>5}: drift {v:+.8}  ratio {:.10}", v / (expected.coefficient * x));
    }
    Ok(())
}
