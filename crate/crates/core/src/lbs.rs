//! The averaged Lie-bracket system of a dithered system.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dither::{check_dither_assumptions, gamma_limit, period_iterated_integral, GammaCase, POWER_SUM_TOL};
use crate::dynamics::{check_vanishing_at_origin, lie_bracket, DitheredSystem, Vector, VectorField};
use crate::error::{Error, Result};
use crate::sim::{integrate, Method, Trajectory};

/// Averaged coefficient of one channel pair `i < j` (1-based).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PairCoefficient {
    pub i: usize,
    pub j: usize,
    pub gamma: f64,
    pub case: GammaCase,
}

/// `x' = f_0(t, x) + sum_{i<j} gamma_ij [f_i, f_j](t, x)`.
#[derive(Debug, Clone)]
pub struct LieBracketSystem {
    drift: VectorField,
    coefficients: Vec<PairCoefficient>,
    source: Arc<DitheredSystem>,
}

impl LieBracketSystem {
    pub fn drift(&self) -> &VectorField {
        &self.drift
    }

    pub fn coefficients(&self) -> &[PairCoefficient] {
        &self.coefficients
    }

    pub fn coefficient(&self, i: usize, j: usize) -> Option<f64> {
        self.coefficients.iter().find(|c| c.i == i && c.j == j).map(|c| c.gamma)
    }

    pub fn source(&self) -> &DitheredSystem {
        &self.source
    }

    pub fn integrate(&self, t0: f64, x0: &Vector, h: f64, t_end: f64, method: Method) -> Result<Trajectory> {
        integrate(&self.drift, t0, x0, h, t_end, method)
    }
}

/// Verdict on one channel pair whose powers sum past one.
#[derive(Debug, Clone, Serialize)]
pub struct PairVerdict {
    pub i: usize,
    pub j: usize,
    pub power_sum: f64,
    /// One-period iterated integral of the dither pair.
    pub iterated_integral: f64,
    pub integral_vanishes: bool,
    /// Largest sampled `|[f_i, f_j]| / (1 + |x|)`.
    pub max_bracket: f64,
    pub bracket_vanishes: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct InteractionReport {
    pub pairs: Vec<PairVerdict>,
    pub pass: bool,
}

/// Half-width of the state box sampled when probing brackets.
const PROBE_RADIUS: f64 = 10.0;

/// Checks every pair with `p_i + p_j > 1`: either the dithers' iterated
/// integral vanishes over a period, or the bracket vanishes on random probes.
pub fn check_interaction_condition(
    system: &DitheredSystem,
    probes: usize,
    tol: f64,
    seed: u64,
) -> Result<InteractionReport> {
    if !(tol > 0.0) {
        return Err(Error::input("interaction check tolerance must be positive"));
    }
    let channels = system.channels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for a in 0..channels.len() {
        for b in a + 1..channels.len() {
            let (ci, cj) = (&channels[a], &channels[b]);
            let power_sum = ci.power + cj.power;
            if power_sum <= 1.0 + POWER_SUM_TOL {
                continue;
            }
            let iterated_integral = period_iterated_integral(&ci.dither, &cj.dither);
            let integral_vanishes = iterated_integral.abs() <= tol;
            let mut max_bracket = 0.0f64;
            for _ in 0..probes {
                let t = rng.gen_range(0.0..1.0);
                let x = Vector::from_iterator(
                    system.dim(),
                    (0..system.dim()).map(|_| rng.gen_range(-PROBE_RADIUS..PROBE_RADIUS)),
                );
                let r = lie_bracket(&ci.field, &cj.field, t, &x)
                    .map(|v| v.norm() / (1.0 + x.norm()))
                    .unwrap_or(f64::INFINITY);
                max_bracket = max_bracket.max(r);
            }
            let bracket_vanishes = probes > 0 && max_bracket <= tol;
            pairs.push(PairVerdict {
                i: a + 1,
                j: b + 1,
                power_sum,
                iterated_integral,
                integral_vanishes,
                max_bracket,
                bracket_vanishes,
                pass: integral_vanishes || bracket_vanishes,
            });
        }
    }
    let pass = pairs.iter().all(|p| p.pass);
    Ok(InteractionReport { pairs, pass })
}

const DITHER_GRID: usize = 1 << 16;
/// Zero-mean tolerance; trapezoid sums of signals with jumps converge only at
/// first order in the grid spacing.
const DITHER_TOL: f64 = 1e-3;
const ORIGIN_TOL: f64 = 1e-9;
const INTERACTION_PROBES: usize = 64;
const INTERACTION_TOL: f64 = 1e-8;
const INTERACTION_SEED: u64 = 0x1b5;

/// Builds the averaged system after checking the dither conditions, the
/// vanishing conditions at the origin and the interaction condition.
pub fn build_lbs(system: &DitheredSystem) -> Result<LieBracketSystem> {
    for (idx, c) in system.channels().iter().enumerate() {
        let r = check_dither_assumptions(&c.dither, DITHER_GRID, DITHER_TOL)?;
        if !r.pass() {
            return Err(Error::AssumptionViolation(format!(
                "dither {} of channel {} fails (bounded: {}, periodic: {}, zero mean: {}; mean residual {:e})",
                r.label,
                idx + 1,
                r.bound_ok,
                r.periodic_ok,
                r.zero_mean_ok,
                r.mean_residual
            )));
        }
    }
    let origin = check_vanishing_at_origin(system, &[0.0, 0.5, 1.0], ORIGIN_TOL)?;
    if !origin.pass {
        return Err(Error::AssumptionViolation(format!(
            "fields do not vanish at the origin (max residual {:e})",
            origin.max_residual
        )));
    }
    let interaction = check_interaction_condition(system, INTERACTION_PROBES, INTERACTION_TOL, INTERACTION_SEED)?;
    if let Some(bad) = interaction.pairs.iter().find(|p| !p.pass) {
        return Err(Error::AssumptionViolation(format!(
            "channels {} and {} have powers summing to {} with iterated integral {:e} and nonvanishing bracket",
            bad.i, bad.j, bad.power_sum, bad.iterated_integral
        )));
    }
    assemble(system, &interaction)
}

/// Builds the averaged system without any assumption checks. Pairs whose
/// powers sum past one still need a vanishing iterated integral.
pub fn build_lbs_unchecked(system: &DitheredSystem) -> Result<LieBracketSystem> {
    assemble(system, &InteractionReport { pairs: Vec::new(), pass: true })
}

fn assemble(system: &DitheredSystem, interaction: &InteractionReport) -> Result<LieBracketSystem> {
    let channels = system.channels();
    let mut coefficients = Vec::new();
    for a in 0..channels.len() {
        for b in a + 1..channels.len() {
            let (ci, cj) = (&channels[a], &channels[b]);
            let bracket_vanishes = interaction.pairs.iter().any(|p| p.i == a + 1 && p.j == b + 1 && p.bracket_vanishes);
            let g = gamma_limit(&ci.dither, &cj.dither, ci.power, cj.power, bracket_vanishes)?;
            coefficients.push(PairCoefficient { i: a + 1, j: b + 1, gamma: g.value, case: g.case });
        }
    }
    let source = Arc::new(system.clone());
    let active: Vec<PairCoefficient> = coefficients.iter().copied().filter(|c| c.gamma != 0.0).collect();
    let sys = Arc::clone(&source);
    let drift = VectorField::new(system.dim(), format!("lbs of {}", system.label()), move |t, x| {
        let mut out = sys.drift().value(t, x);
        for c in &active {
            match lie_bracket(sys.field(c.i), sys.field(c.j), t, x) {
                Ok(v) => out += v * c.gamma,
                Err(_) => out.fill(f64::NAN),
            }
        }
        out
    });
    let drift = if system.drift().is_autonomous() && channels.iter().all(|c| c.field.is_autonomous()) {
        drift.autonomous()
    } else {
        drift
    };
    Ok(LieBracketSystem { drift, coefficients, source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dither::DitherSignal;
    use crate::dynamics::{Channel, Matrix};
    use crate::scenarios::example_system;
    use approx::assert_abs_diff_eq;

    fn at(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    #[test]
    fn example_drift_is_linear() {
        let lbs = build_lbs(&example_system(2.0, -3.0, 0.5).unwrap()).unwrap();
        assert_abs_diff_eq!(lbs.coefficient(1, 2).unwrap(), 0.5, epsilon = 1e-9);
        for x in [-7.0, -0.3, 0.1, 2.0, 9.5] {
            let d = lbs.drift().value(0.0, &at(x))[0];
            assert!((d + 2.5 * x).abs() <= 1e-4 * (1.0 + x.abs()), "x={x}: {d}");
        }
        assert_eq!(lbs.drift().value(0.0, &at(0.0))[0], 0.0);
    }

    #[test]
    fn single_channel_drift_is_f0() {
        let sys = DitheredSystem::new(
            "one",
            VectorField::scalar_linear(-1.0),
            vec![Channel::new(VectorField::scalar_linear(3.0), 0.5, DitherSignal::sine())],
        )
        .unwrap();
        let lbs = build_lbs(&sys).unwrap();
        assert!(lbs.coefficients().is_empty());
        assert_eq!(lbs.drift().value(0.0, &at(2.0))[0], -2.0);
    }

    #[test]
    fn commuting_channels_leave_drift() {
        let ch = |c, u| Channel::new(VectorField::scalar_linear(c), 0.5, u);
        let sys = DitheredSystem::new(
            "commuting",
            VectorField::scalar_linear(-1.0),
            vec![ch(1.0, DitherSignal::sine()), ch(2.0, DitherSignal::cosine())],
        )
        .unwrap();
        let lbs = build_lbs(&sys).unwrap();
        assert_abs_diff_eq!(lbs.drift().value(0.0, &at(2.0))[0], -2.0, epsilon = 1e-12);
    }

    fn planar(power: f64, u1: DitherSignal, u2: DitherSignal) -> DitheredSystem {
        // [f1, f2] is a nonzero linear field: f1 = (x2, 0), f2 = (0, x1)
        let m1 = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let m2 = Matrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        DitheredSystem::new(
            "planar",
            VectorField::zero(2),
            vec![Channel::new(VectorField::linear(m1), power, u1), Channel::new(VectorField::linear(m2), power, u2)],
        )
        .unwrap()
    }

    #[test]
    fn interaction_condition_cases() {
        let half = planar(0.5, DitherSignal::sine(), DitherSignal::cosine());
        let r = check_interaction_condition(&half, 16, 1e-8, 1).unwrap();
        assert!(r.pass && r.pairs.is_empty());

        let harmonics = planar(0.6, DitherSignal::sine(), DitherSignal::cosine_harmonic(2, 0.0));
        let r = check_interaction_condition(&harmonics, 16, 1e-8, 1).unwrap();
        assert!(r.pass && r.pairs[0].integral_vanishes);

        let same = planar(0.6, DitherSignal::sine(), DitherSignal::cosine());
        let r = check_interaction_condition(&same, 16, 1e-8, 1).unwrap();
        assert!(!r.pass);
        assert_abs_diff_eq!(r.pairs[0].iterated_integral, -std::f64::consts::PI, epsilon = 1e-8);
        assert!(matches!(build_lbs(&same), Err(Error::AssumptionViolation(_))));
    }

    #[test]
    fn nonvanishing_field_is_rejected() {
        let shifted = VectorField::new(1, "x+1", |_, x: &Vector| x.map(|v| v + 1.0));
        let sys = DitheredSystem::new(
            "shifted",
            VectorField::scalar_linear(-1.0),
            vec![Channel::new(shifted, 0.5, DitherSignal::sine())],
        )
        .unwrap();
        assert!(build_lbs(&sys).is_err());
        assert!(build_lbs_unchecked(&sys).is_ok());
    }
}
