//! Sweeps the dither frequency in parallel and reports the worst deviation
//! from the averaged trajectory over one second, relative to |x0|.

use liebracket::dynamics::Vector;
use liebracket::lbs::build_lbs;
use liebracket::scenarios::example_system;
use liebracket::sim::{integrate_dithered, sup_deviation, Method};
use rayon::prelude::*;

fn main() -> liebracket::Result<()> {
    let system = example_system(2.0, -3.0, 0.5)?;
    let x0 = Vector::from_element(1, 1.0);
    let h = 1e-5;
    let averaged = build_lbs(&system)?.integrate(0.0, &x0, h, 1.0, Method::Rk4)?;
    let omegas = [50.0, 100.0, 200.0, 400.0, 800.0, 1600.0];
    let rows: Vec<(f64, f64)> = omegas
        .par_iter()
        .map(|&omega| {
            let traj = integrate_dithered(&system, omega, 0.0, &x0, h, 1.0, Method::Euler)?;
            Ok((omega, sup_deviation(&traj, &averaged)? / x0.norm()))
        })
        .collect::<liebracket::Result<_>>()?;
    let mut prev: Option<f64> = None;
    for (omega, dev) in rows {
        let slope = prev.map(|p| (dev / p).log2()).map_or(String::new(), |s| format!("  slope {s:+.2}"));
        println!("omega = {omega:>6}: sup deviation {dev:.4e}{slope}");
        prev = Some(dev);
    }
    Ok(())
}
