//! The assumption checkers on the example and on three systems that each
//! break one assumption: a dither with nonzero mean, a dither exceeding unit
//! amplitude and a field that does not vanish at the origin.

use liebracket::dither::{check_dither_assumptions, DitherSignal};
use liebracket::dynamics::{check_vanishing_at_origin, Channel, DitheredSystem, Vector, VectorField};
use liebracket::lbs::build_lbs;
use liebracket::scenarios::example_system;

fn main() -> liebracket::Result<()> {
    let example = example_system(2.0, -3.0, 0.5)?;
    let origin = check_vanishing_at_origin(&example, &[0.0, 1.0], 1e-9)?;
    println!("example: {} origin checks, max residual {:e}", origin.entries.len(), origin.max_residual);

    let biased = DitherSignal::custom("0.2 + sin", |s: f64| 0.2 + s.sin(), vec![]);
    let loud = DitherSignal::custom("1.5 sin", |s: f64| 1.5 * s.sin(), vec![]);
    for u in [DitherSignal::sine(), DitherSignal::square(1, 0.0), biased.clone(), loud] {
        let r = check_dither_assumptions(&u, 1 << 14, 1e-3)?;
        println!(
            "dither {:<10} bounded {:<5} periodic {:<5} zero mean {:<5} pass {}",
            r.label,
            r.bound_ok,
            r.periodic_ok,
            r.zero_mean_ok,
            r.pass()
        );
    }

    let offset = VectorField::new(1, "x + 0.1", |_, x: &Vector| Vector::from_element(1, x[0] + 0.1));
    let bad_origin = DitheredSystem::new(
        "offset channel",
        VectorField::scalar_linear(-1.0),
        vec![Channel::new(offset, 0.5, DitherSignal::sine())],
    )?;
    let report = check_vanishing_at_origin(&bad_origin, &[0.0], 1e-9)?;
    for e in report.failures() {
        println!("offset channel fails {:?} at indices {:?}: residual {:.3}", e.condition, e.indices, e.residual);
    }
    let biased_sys = DitheredSystem::new(
        "biased dither",
        VectorField::scalar_linear(-1.0),
        vec![Channel::new(VectorField::scalar_linear(1.0), 0.5, biased)],
    )?;
    for sys in [&bad_origin, &biased_sys] {
        match build_lbs(sys) {
            Ok(_) => println!("{}: averaged system built", sys.label()),
            Err(e) => println!("{}: {e}", sys.label()),
        }
    }
    Ok(())
}
