//! Frequency adaptation on the example: start at w0 = 1 and let the sampled
//! integrator of |x|^2 raise the dither frequency until the state decays.

use liebracket::adaptive::{check_adaptive_convergence, run_adaptive, AdaptiveSettings};
use liebracket::dynamics::Vector;
use liebracket::scenarios::example_system;

fn main() -> liebracket::Result<()> {
    let system = example_system(2.0, -3.0, 0.5)?;
    let settings = AdaptiveSettings::default();
    let run = run_adaptive(&system, 0.0, &Vector::from_element(1, 1.0), settings)?;
    for e in run.summary() {
        println!("epoch {:>3}  t = {:>5.1}  w = {:>12.8}  |x| = {:.3e}", e.k, e.t, e.w, e.x_norm);
    }
    let report = check_adaptive_convergence(&run, settings.x_tol, settings.w_tol);
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
