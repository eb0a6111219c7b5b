//! Simulates the built-in scalar example at omega = 200 with forward Euler
//! and compares it with its averaged system `x' = -2.5 x`.
//!
//! Run with `cargo run --release --example simulate_example [OUT_DIR]`; an
//! output directory receives both trajectories as CSV.

use liebracket::dynamics::Vector;
use liebracket::lbs::build_lbs;
use liebracket::scenarios::example_system;
use liebracket::sim::{integrate_dithered, sup_deviation, Method};
use liebracket::stability::check_envelope;

fn main() -> liebracket::Result<()> {
    let system = example_system(2.0, -3.0, 0.5)?;
    let x0 = Vector::from_element(1, 1.0);
    let dithered = integrate_dithered(&system, 200.0, 0.0, &x0, 1e-4, 10.0, Method::Euler)?;
    let averaged = build_lbs(&system)?.integrate(0.0, &x0, 1e-4, 10.0, Method::Rk4)?;

    for t in [0.0, 1.0, 2.0, 5.0, 10.0] {
        println!(
            "t = {t:>4}: dithered {:+.6e}  averaged {:+.6e}  exp(-2.5 t) {:.6e}",
            dithered.state_at(t)[0],
            averaged.state_at(t)[0],
            (-2.5 * t).exp()
        );
    }
    println!("sup |x_omega - x_bar| = {:.4e}", sup_deviation(&dithered, &averaged)?);
    let hull = check_envelope(&dithered, 1.0, 2.5, 3.0)?;
    println!("max |x_omega(t)| / (|x0| e^(-2.5 t)) = {:.3} at t = {:.3}", hull.max_ratio, hull.t_at_max);

    if let Some(dir) = std::env::args().nth(1) {
        let dir = std::path::PathBuf::from(dir);
        std::fs::create_dir_all(&dir)?;
        dithered.write_csv(&dir.join("dithered.csv"))?;
        averaged.write_csv(&dir.join("averaged.csv"))?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
