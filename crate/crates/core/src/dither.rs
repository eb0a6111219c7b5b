//! Periodic dither signals and their iterated integrals.
//!
//! All integrals are carried out in the phase variable `s = omega * t`, which
//! turns one dither period into `[0, 2pi]` regardless of frequency.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{cumulative_simpson, even, simpson_samples};

/// Panels per dither period for the first quadrature pass.
pub const PANELS_PER_PERIOD: usize = 4096;
/// Refinement stops once two successive passes agree to this absolute level.
pub const REFINE_TOL: f64 = 1e-10;
const MAX_DOUBLINGS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalyticKind {
    Sine,
    Cosine,
    Custom,
}

#[derive(Clone)]
enum Shape {
    Sine {
        harmonic: u32,
        phase: f64,
    },
    Cosine {
        harmonic: u32,
        phase: f64,
    },
    /// `sign(sin(m s + phase))`.
    Square {
        harmonic: u32,
        phase: f64,
    },
    Custom {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        jumps: Vec<f64>,
    },
    Unit,
}

/// A `2pi`-periodic signal `u(s)`.
#[derive(Clone)]
pub struct DitherSignal {
    label: String,
    shape: Shape,
}

impl fmt::Debug for DitherSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DitherSignal({})", self.label)
    }
}

impl DitherSignal {
    pub fn sine() -> Self {
        Self::sine_harmonic(1, 0.0)
    }

    pub fn cosine() -> Self {
        Self::cosine_harmonic(1, 0.0)
    }

    pub fn sine_harmonic(harmonic: u32, phase: f64) -> Self {
        assert!(harmonic >= 1, "harmonic must be at least 1");
        Self { label: label("sin", harmonic, phase), shape: Shape::Sine { harmonic, phase } }
    }

    pub fn cosine_harmonic(harmonic: u32, phase: f64) -> Self {
        assert!(harmonic >= 1, "harmonic must be at least 1");
        Self { label: label("cos", harmonic, phase), shape: Shape::Cosine { harmonic, phase } }
    }

    pub fn square(harmonic: u32, phase: f64) -> Self {
        assert!(harmonic >= 1, "harmonic must be at least 1");
        Self { label: label("square", harmonic, phase), shape: Shape::Square { harmonic, phase } }
    }

    /// The constant `1`, the weight carried by the drift. It has nonzero mean
    /// and is therefore not an admissible dither on a channel.
    pub fn unit() -> Self {
        Self { label: "1".to_string(), shape: Shape::Unit }
    }

    /// Arbitrary signal. `jumps` lists the discontinuities inside one period
    /// `[0, 2pi)`; quadrature splits there.
    pub fn custom<F>(label: impl Into<String>, f: F, jumps: Vec<f64>) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self { label: label.into(), shape: Shape::Custom { f: Arc::new(f), jumps } }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn analytic_kind(&self) -> AnalyticKind {
        match self.shape {
            Shape::Sine { .. } => AnalyticKind::Sine,
            Shape::Cosine { .. } => AnalyticKind::Cosine,
            _ => AnalyticKind::Custom,
        }
    }

    #[inline]
    pub fn value(&self, s: f64) -> f64 {
        match &self.shape {
            Shape::Sine { harmonic, phase } => (*harmonic as f64 * s + phase).sin(),
            Shape::Cosine { harmonic, phase } => (*harmonic as f64 * s + phase).cos(),
            Shape::Square { harmonic, phase } => {
                if (*harmonic as f64 * s + phase).rem_euclid(TAU) < PI {
                    1.0
                } else {
                    -1.0
                }
            }
            Shape::Custom { f, .. } => f(s),
            Shape::Unit => 1.0,
        }
    }

    /// Closed-form antiderivative where one exists (any additive constant).
    fn antiderivative(&self, s: f64) -> Option<f64> {
        match &self.shape {
            Shape::Sine { harmonic, phase } => {
                let m = *harmonic as f64;
                Some(-(m * s + phase).cos() / m)
            }
            Shape::Cosine { harmonic, phase } => {
                let m = *harmonic as f64;
                Some((m * s + phase).sin() / m)
            }
            Shape::Square { harmonic, phase } => {
                let m = *harmonic as f64;
                let theta = (m * s + phase).rem_euclid(TAU);
                let tri = if theta < PI { theta } else { TAU - theta };
                Some(tri / m)
            }
            Shape::Custom { .. } => None,
            Shape::Unit => Some(s),
        }
    }

    /// Value at `s` taken from inside `[lo, hi]`, so that samples at a piece
    /// boundary see the one-sided limit rather than the far side of a jump.
    fn value_within(&self, s: f64, lo: f64, hi: f64) -> f64 {
        if matches!(self.shape, Shape::Sine { .. } | Shape::Cosine { .. } | Shape::Unit) {
            return self.value(s);
        }
        let nudge = 1e-12 * (hi - lo);
        if s <= lo {
            self.value(lo + nudge)
        } else if s >= hi {
            self.value(hi - nudge)
        } else {
            self.value(s)
        }
    }

    /// Discontinuities of the signal inside `(a, b)`, sorted.
    fn jumps_in(&self, a: f64, b: f64) -> Vec<f64> {
        let base: Vec<f64> = match &self.shape {
            Shape::Sine { .. } | Shape::Cosine { .. } | Shape::Unit => return Vec::new(),
            Shape::Square { harmonic, phase } => {
                let m = *harmonic as f64;
                (0..2 * *harmonic).map(|k| ((k as f64 * PI - phase) / m).rem_euclid(TAU)).collect()
            }
            Shape::Custom { jumps, .. } => jumps.iter().map(|j| j.rem_euclid(TAU)).collect(),
        };
        let mut out = Vec::new();
        if base.is_empty() {
            return out;
        }
        let first_period = (a / TAU).floor() as i64;
        let last_period = (b / TAU).ceil() as i64;
        for p in first_period..=last_period {
            for j in &base {
                let s = j + p as f64 * TAU;
                if s > a && s < b {
                    out.push(s);
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

fn label(kind: &str, harmonic: u32, phase: f64) -> String {
    match (harmonic, phase == 0.0) {
        (1, true) => kind.to_string(),
        (1, false) => format!("{kind}(s{phase:+})"),
        (m, true) => format!("{kind}({m}s)"),
        (m, false) => format!("{kind}({m}s{phase:+})"),
    }
}

/// Outcome of the three dither conditions (bounded by one, `2pi`-periodic,
/// zero mean).
#[derive(Debug, Clone, Serialize)]
pub struct DitherReport {
    pub label: String,
    pub bound_ok: bool,
    pub periodic_ok: bool,
    pub zero_mean_ok: bool,
    pub max_abs: f64,
    pub periodic_residual: f64,
    pub mean_residual: f64,
}

impl DitherReport {
    pub fn pass(&self) -> bool {
        self.bound_ok && self.periodic_ok && self.zero_mean_ok
    }
}

pub fn check_dither_assumptions(u: &DitherSignal, grid: usize, tol: f64) -> Result<DitherReport> {
    if grid < 16 {
        return Err(Error::input("dither check grid must have at least 16 points"));
    }
    if !(tol > 0.0) {
        return Err(Error::input("dither check tolerance must be positive"));
    }
    let h = TAU / grid as f64;
    let mut max_abs = 0.0f64;
    let mut periodic_residual = 0.0f64;
    let mut integral = 0.0;
    for k in 0..=grid {
        let s = k as f64 * h;
        let v = u.value(s);
        max_abs = max_abs.max(v.abs());
        periodic_residual = periodic_residual.max((u.value(s + TAU) - v).abs());
        let w = if k == 0 || k == grid { 0.5 } else { 1.0 };
        integral += w * v;
    }
    let mean_residual = (integral * h).abs();
    Ok(DitherReport {
        label: u.label.clone(),
        bound_ok: max_abs <= 1.0 + tol,
        periodic_ok: periodic_residual <= tol,
        zero_mean_ok: mean_residual <= tol,
        max_abs,
        periodic_residual,
        mean_residual,
    })
}

/// `\int_a^b u(s) ds` in phase units.
fn phase_integral(u: &DitherSignal, a: f64, b: f64) -> f64 {
    if let (Some(fb), Some(fa)) = (u.antiderivative(b), u.antiderivative(a)) {
        return fb - fa;
    }
    refine(|panels| {
        pieces(&[u], a, b, panels)
            .iter()
            .map(|&(lo, hi, n)| {
                let h = (hi - lo) / n as f64;
                let samples: Vec<f64> = (0..=n).map(|k| u.value_within(grid_point(lo, hi, k, n), lo, hi)).collect();
                simpson_samples(&samples, h)
            })
            .sum()
    })
}

/// `\int_a^b outer(s) \int_a^s inner(r) dr ds` in phase units.
pub(crate) fn iterated_phase_integral(outer: &DitherSignal, inner: &DitherSignal, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let inner_at_a = inner.antiderivative(a);
    refine(|panels| {
        let mut total = 0.0;
        let mut carry = 0.0;
        for (lo, hi, n) in pieces(&[outer, inner], a, b, panels) {
            let h = (hi - lo) / n as f64;
            let nodes: Vec<f64> = (0..=n).map(|k| grid_point(lo, hi, k, n)).collect();
            let running: Vec<f64> = match inner_at_a {
                Some(base) => nodes.iter().map(|&s| inner.antiderivative(s).unwrap_or(0.0) - base).collect(),
                None => {
                    let samples: Vec<f64> = nodes.iter().map(|&s| inner.value_within(s, lo, hi)).collect();
                    cumulative_simpson(&samples, h, 0.0).into_iter().map(|c| c + carry).collect()
                }
            };
            carry = running[n];
            let integrand: Vec<f64> =
                nodes.iter().zip(&running).map(|(&s, r)| outer.value_within(s, lo, hi) * r).collect();
            total += simpson_samples(&integrand, h);
        }
        total
    })
}

/// Node `k` of `n` on `[lo, hi]`, hitting both ends exactly.
#[inline]
fn grid_point(lo: f64, hi: f64, k: usize, n: usize) -> f64 {
    if k == n {
        hi
    } else {
        lo + (hi - lo) * (k as f64 / n as f64)
    }
}

/// Splits `[a, b]` at the jumps of the given signals, assigning each piece a
/// panel count proportional to its length.
fn pieces(signals: &[&DitherSignal], a: f64, b: f64, panels_per_period: usize) -> Vec<(f64, f64, usize)> {
    let mut cuts = vec![a];
    let mut jumps: Vec<f64> = signals.iter().flat_map(|u| u.jumps_in(a, b)).collect();
    jumps.sort_by(f64::total_cmp);
    jumps.dedup();
    cuts.extend(jumps);
    cuts.push(b);
    cuts.windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let frac = (w[1] - w[0]) / TAU;
            let n = even(((panels_per_period as f64 * frac).ceil() as usize).max(16));
            (w[0], w[1], n)
        })
        .collect()
}

fn refine<F: Fn(usize) -> f64>(estimate: F) -> f64 {
    let mut panels = PANELS_PER_PERIOD;
    let mut prev = estimate(panels);
    for _ in 0..MAX_DOUBLINGS {
        panels *= 2;
        let next = estimate(panels);
        if (next - prev).abs() < REFINE_TOL {
            return next;
        }
        prev = next;
    }
    prev
}

fn check_frequency(omega: f64) -> Result<()> {
    if omega > 0.0 && omega.is_finite() {
        Ok(())
    } else {
        Err(Error::input(format!("dither frequency must be positive, got {omega}")))
    }
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::numeric(format!("{what} is not finite")))
    }
}

/// `V_i(t_s, t_e) = \int_{t_s}^{t_e} omega^p u(omega theta) d theta`.
pub fn big_v(u: &DitherSignal, p: f64, omega: f64, t_s: f64, t_e: f64) -> Result<f64> {
    check_frequency(omega)?;
    if t_e < t_s {
        return Err(Error::input("big_v needs t_e >= t_s"));
    }
    if t_e == t_s {
        return Ok(0.0);
    }
    let v = omega.powf(p - 1.0) * phase_integral(u, omega * t_s, omega * t_e);
    finite(v, "V_i")
}

/// `V_ij(t_s, t_e) = \int_{t_s}^{t_e} v_i(theta) V_j(t_s, theta) d theta`.
pub fn big_v2(
    u_i: &DitherSignal,
    u_j: &DitherSignal,
    p_i: f64,
    p_j: f64,
    omega: f64,
    t_s: f64,
    t_e: f64,
) -> Result<f64> {
    check_frequency(omega)?;
    if t_e < t_s {
        return Err(Error::input("big_v2 needs t_e >= t_s"));
    }
    if t_e == t_s {
        return Ok(0.0);
    }
    let k = iterated_phase_integral(u_i, u_j, omega * t_s, omega * t_e);
    finite(omega.powf(p_i + p_j - 2.0) * k, "V_ij")
}

/// One-period iterated integral `\int_0^{2pi} u_j(s) \int_0^s u_i(r) dr ds`.
pub fn period_iterated_integral(u_i: &DitherSignal, u_j: &DitherSignal) -> f64 {
    iterated_phase_integral(u_j, u_i, 0.0, TAU)
}

/// Averaged coefficient
/// `gamma_ij(omega) = omega^{p_i+p_j} / T * \int_0^T \int_0^theta u_j(omega theta) u_i(omega tau) dtau dtheta`
/// with `T = 2pi / omega`.
pub fn gamma(u_i: &DitherSignal, u_j: &DitherSignal, p_i: f64, p_j: f64, omega: f64) -> Result<f64> {
    check_frequency(omega)?;
    let k = period_iterated_integral(u_i, u_j);
    finite(omega.powf(p_i + p_j - 1.0) * k / TAU, "gamma")
}

/// Which branch of the `omega -> infinity` limit applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaCase {
    /// `p_i + p_j = 1`: the coefficient is frequency independent.
    Critical,
    /// `p_i + p_j < 1`: the prefactor drives the coefficient to zero.
    Subcritical,
    /// `p_i + p_j > 1` and the one-period iterated integral vanishes.
    IntegralVanishes,
    /// `p_i + p_j > 1` and the caller certified a vanishing bracket.
    BracketVanishes,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GammaLimit {
    pub value: f64,
    pub case: GammaCase,
}

/// Powers whose sum is within this of one count as critical.
pub const POWER_SUM_TOL: f64 = 1e-12;
/// A one-period iterated integral below this counts as vanishing.
pub const ITERATED_INTEGRAL_TOL: f64 = 1e-8;

/// `lim_{omega -> infinity} gamma_ij(omega)`.
pub fn gamma_limit(
    u_i: &DitherSignal,
    u_j: &DitherSignal,
    p_i: f64,
    p_j: f64,
    bracket_vanishes: bool,
) -> Result<GammaLimit> {
    let sum = p_i + p_j;
    if (sum - 1.0).abs() <= POWER_SUM_TOL {
        return Ok(GammaLimit { value: gamma(u_i, u_j, p_i, p_j, 1.0)?, case: GammaCase::Critical });
    }
    if sum < 1.0 {
        return Ok(GammaLimit { value: 0.0, case: GammaCase::Subcritical });
    }
    let k = period_iterated_integral(u_i, u_j);
    if k.abs() <= ITERATED_INTEGRAL_TOL {
        return Ok(GammaLimit { value: 0.0, case: GammaCase::IntegralVanishes });
    }
    if bracket_vanishes {
        return Ok(GammaLimit { value: 0.0, case: GammaCase::BracketVanishes });
    }
    Err(Error::AssumptionViolation(format!(
        "powers sum to {sum} > 1 but the iterated integral of ({}, {}) is {k:e} and the bracket is not known to vanish",
        u_i.label, u_j.label
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sine_passes_assumptions() {
        let r = check_dither_assumptions(&DitherSignal::sine(), 4096, 1e-9).unwrap();
        assert!(r.pass());
        assert!(r.mean_residual <= 1e-12);
    }

    #[test]
    fn constant_fails_zero_mean() {
        let one = DitherSignal::custom("one", |_| 1.0, vec![]);
        let r = check_dither_assumptions(&one, 4096, 1e-9).unwrap();
        assert!(!r.zero_mean_ok);
        assert_abs_diff_eq!(r.mean_residual, TAU, epsilon = 1e-12);
    }

    #[test]
    fn overdriven_sine_fails_bound() {
        let u = DitherSignal::custom("1.5 sin", |s: f64| 1.5 * s.sin(), vec![]);
        let r = check_dither_assumptions(&u, 4096, 1e-9).unwrap();
        assert!(!r.bound_ok);
        assert_abs_diff_eq!(r.max_abs, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn small_grid_rejected() {
        assert!(check_dither_assumptions(&DitherSignal::sine(), 8, 1e-9).is_err());
    }

    #[test]
    fn square_wave_is_admissible() {
        let r = check_dither_assumptions(&DitherSignal::square(1, 0.3), 4096, 1e-2).unwrap();
        assert!(r.bound_ok && r.periodic_ok);
        // trapezoid on a jump function converges only to O(h)
        assert!(r.mean_residual < 1e-2);
    }

    #[test]
    fn big_v_full_period_vanishes() {
        let w = 37.0;
        let v = big_v(&DitherSignal::sine(), 0.5, w, 0.0, TAU / w).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn big_v_half_period() {
        let v = big_v(&DitherSignal::sine(), 0.5, 200.0, 0.0, PI / 200.0).unwrap();
        assert_abs_diff_eq!(v, 2.0 / 200f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.141_421_356, epsilon = 1e-9);
    }

    #[test]
    fn big_v2_closed_form() {
        let w = 200.0;
        let v = big_v2(&DitherSignal::cosine(), &DitherSignal::sine(), 0.5, 0.5, w, 0.0, TAU / w).unwrap();
        assert_abs_diff_eq!(v, -PI / w, epsilon = 1e-12);
        let empty = big_v2(&DitherSignal::sine(), &DitherSignal::sine(), 0.5, 0.5, w, 0.3, 0.3).unwrap();
        assert_eq!(empty, 0.0);
    }

    #[test]
    fn ramp_weighted_integral() {
        // V_{i0} = \int_0^T sqrt(w) sin(w t) t dt = -2 pi / w^{3/2}
        let w = 50.0;
        let v = big_v2(&DitherSignal::sine(), &DitherSignal::unit(), 0.5, 0.0, w, 0.0, TAU / w).unwrap();
        assert_abs_diff_eq!(v, -TAU / w.powf(1.5), epsilon = 1e-12);
    }

    #[test]
    fn custom_dither_matches_closed_form() {
        let custom = DitherSignal::custom("sin", f64::sin, vec![]);
        let a = big_v2(&custom, &custom, 0.5, 0.5, 3.0, 0.1, 1.9).unwrap();
        let b = big_v2(&DitherSignal::sine(), &DitherSignal::sine(), 0.5, 0.5, 3.0, 0.1, 1.9).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-9);
    }

    #[test]
    fn square_wave_iterated_integral() {
        // u_i = u_j = square: the integral of u*U over a period is U(2pi)^2/2 = 0
        let sq = DitherSignal::square(1, 0.0);
        assert_abs_diff_eq!(period_iterated_integral(&sq, &sq), 0.0, epsilon = 1e-9);
        // outer cos, inner square: \int cos(s) tri(s) ds = -4 over one period
        let k = period_iterated_integral(&sq, &DitherSignal::cosine());
        assert_abs_diff_eq!(k, -4.0, epsilon = 1e-8);
    }

    #[test]
    fn gamma_limit_cases() {
        let (s, c) = (DitherSignal::sine(), DitherSignal::cosine());
        let g = gamma_limit(&s, &c, 0.5, 0.5, false).unwrap();
        assert_eq!(g.case, GammaCase::Critical);
        assert_abs_diff_eq!(g.value, -0.5, epsilon = 1e-9);
        assert_eq!(gamma_limit(&s, &c, 0.4, 0.4, false).unwrap().value, 0.0);
        let harm = DitherSignal::cosine_harmonic(2, 0.0);
        let g = gamma_limit(&s, &harm, 0.6, 0.6, false).unwrap();
        assert_eq!(g.case, GammaCase::IntegralVanishes);
        assert!(matches!(gamma_limit(&s, &c, 0.6, 0.6, false), Err(Error::AssumptionViolation(_))));
        let g = gamma_limit(&s, &c, 0.6, 0.6, true).unwrap();
        assert_eq!(g.case, GammaCase::BracketVanishes);
    }

    #[test]
    fn gamma_rejects_bad_frequency() {
        let s = DitherSignal::sine();
        assert!(gamma(&s, &s, 0.5, 0.5, 0.0).is_err());
        assert!(big_v(&s, 0.5, -1.0, 0.0, 1.0).is_err());
    }
}
