//! Audits the period-wise expansion of an example trajectory: every term
//! against its closed-form bound on random windows, plus the residual of the
//! expansion identity and its behaviour under quadrature refinement.

use std::f64::consts::TAU;

use liebracket::dynamics::Vector;
use liebracket::expansion::{audit_bounds, ExpansionConfig, ExpansionContext};
use liebracket::scenarios::example_system;

fn main() -> liebracket::Result<()> {
    let system = example_system(2.0, -3.0, 0.5)?;
    let x0 = Vector::from_element(1, 1.0);
    for omega1 in [50.0, 200.0, 800.0] {
        let ctx = ExpansionContext::new(&system, omega1, 0.0, 1.0, &x0, ExpansionConfig::default())?;
        let report = audit_bounds(&ctx, 200, 7)?;
        println!(
            "omega1 = {omega1}: {} entries, {} violations, identity residual {:.2e}",
            report.entries.len(),
            report.violations,
            report.identity_residual
        );
        for (term, ratio) in report.max_ratios() {
            println!("    {:<4} max value/bound {ratio:.3e}", term.name());
        }
    }

    let t1 = 3.0 * TAU / 200.0;
    for panels in [32, 64, 128, 256] {
        let cfg = ExpansionConfig { panels_per_period: panels, ..Default::default() };
        let ctx = ExpansionContext::new(&system, 200.0, 0.0, t1, &x0, cfg)?;
        println!("{panels:>4} panels/period: identity residual {:.3e}", ctx.verify_expansion_identity()?);
    }
    Ok(())
}
