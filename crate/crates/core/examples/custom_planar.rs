//! A user-defined planar system whose drift has an unstable direction and
//! whose two dithered channels generate a bracket that removes it.
//!
//! `x' = A x + sqrt(omega) (B1 x cos(omega t) + B2 x sin(omega t))` with
//! `A = diag(0.5, -2)`, `B1 = sqrt(2) E12`, `B2 = sqrt(2) E21`. The bracket of
//! linear fields is `[B1 x, B2 x] = (B2 B1 - B1 B2) x = diag(-2, 2) x`, so the
//! averaged system is `x' = (A + diag(-1, 1)) x = diag(-0.5, -1) x`.

use liebracket::dither::DitherSignal;
use liebracket::dynamics::{lie_bracket, Channel, DitheredSystem, Matrix, Vector, VectorField};
use liebracket::lbs::build_lbs;
use liebracket::sim::{integrate_dithered, sup_deviation, Method};

fn main() -> liebracket::Result<()> {
    let r = 2f64.sqrt();
    let a = Matrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -2.0]);
    let b1 = Matrix::from_row_slice(2, 2, &[0.0, r, 0.0, 0.0]);
    let b2 = Matrix::from_row_slice(2, 2, &[0.0, 0.0, r, 0.0]);
    let system = DitheredSystem::new(
        "planar",
        VectorField::linear(a),
        vec![
            Channel::new(VectorField::linear(b1.clone()), 0.5, DitherSignal::cosine()),
            Channel::new(VectorField::linear(b2.clone()), 0.5, DitherSignal::sine()),
        ],
    )?;
    let x = Vector::from_vec(vec![1.0, -0.5]);
    let bracket = lie_bracket(system.field(1), system.field(2), 0.0, &x)?;
    let commutator = (&b2 * &b1 - &b1 * &b2) * &x;
    println!("[f1, f2](x) = {:?}, (B2 B1 - B1 B2) x = {:?}", bracket.as_slice(), commutator.as_slice());

    let lbs = build_lbs(&system)?;
    println!("averaged drift at x: {:?}", lbs.drift().value(0.0, &x).as_slice());
    let averaged = lbs.integrate(0.0, &x, 1e-4, 4.0, Method::Rk4)?;
    let dithered = integrate_dithered(&system, 400.0, 0.0, &x, 1e-4, 4.0, Method::Rk4)?;
    let open_loop = liebracket::sim::integrate(system.drift(), 0.0, &x, 1e-4, 4.0, Method::Rk4)?;
    println!(
        "|x(4)|: drift only {:.3e}, averaged {:.3e}, dithered {:.3e}",
        open_loop.last().norm(),
        averaged.last().norm(),
        dithered.last().norm()
    );
    println!("sup deviation = {:.3e}", sup_deviation(&dithered, &averaged)?);
    Ok(())
}
