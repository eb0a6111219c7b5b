//! Averaged coefficients of dither pairs: the closed-form one-period iterated
//! integrals, a brute-force check against a fine midpoint sum, and the
//! large-frequency limit for each power regime.

use std::f64::consts::TAU;

use liebracket::dither::{gamma, gamma_limit, period_iterated_integral, DitherSignal};

/// Midpoint sum of `\int_0^{2pi} u_j(s) \int_0^s u_i(r) dr ds`.
fn brute_force(u_i: &DitherSignal, u_j: &DitherSignal, n: usize) -> f64 {
    let h = TAU / n as f64;
    let mut inner = 0.0;
    let mut total = 0.0;
    for k in 0..n {
        let s = (k as f64 + 0.5) * h;
        let half = 0.5 * h * u_i.value(s);
        inner += half;
        total += u_j.value(s) * inner * h;
        inner += half;
    }
    total
}

fn main() -> liebracket::Result<()> {
    let pairs = [
        (DitherSignal::sine(), DitherSignal::cosine()),
        (DitherSignal::cosine(), DitherSignal::sine()),
        (DitherSignal::sine(), DitherSignal::sine_harmonic(2, 0.0)),
        (DitherSignal::square(1, 0.0), DitherSignal::cosine()),
    ];
    println!("{:<22} {:>14} {:>14} {:>12}", "pair", "closed form", "brute force", "gamma(200)");
    for (u_i, u_j) in &pairs {
        println!(
            "{:<22} {:>14.9} {:>14.9} {:>12.6}",
            format!("({}, {})", u_i.label(), u_j.label()),
            period_iterated_integral(u_i, u_j),
            brute_force(u_i, u_j, 200_000),
            gamma(u_i, u_j, 0.5, 0.5, 200.0)?
        );
    }

    let (s, c) = (DitherSignal::sine(), DitherSignal::cosine());
    for (p_i, p_j) in [(0.5, 0.5), (0.3, 0.4), (0.6, 0.7)] {
        match gamma_limit(&s, &c, p_i, p_j, false) {
            Ok(g) => println!("powers ({p_i}, {p_j}): limit {:+.6} ({:?})", g.value, g.case),
            Err(e) => println!("powers ({p_i}, {p_j}): {e}"),
        }
    }
    Ok(())
}
