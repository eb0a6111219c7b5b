//! Certificate arithmetic: the exponent profile of the channel powers, the
//! sufficient dither frequency, the horizon/error budget and the exponential
//! envelope it implies, plus checkers that hold simulated trajectories
//! against those envelopes.

use std::f64::consts::{LN_10, PI};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::{sup_deviation, Trajectory};

/// Extremal sums of the channel powers.
#[derive(Debug, Clone, Serialize)]
pub struct ExponentProfile {
    pub powers: Vec<f64>,
    /// Largest single power.
    pub p_max: f64,
    /// Largest pair sum below one, if any pair qualifies.
    pub pair_max: Option<f64>,
    /// Largest triple sum below two, if any triple qualifies.
    pub triple_max: Option<f64>,
    pub p_star: f64,
    /// Ordered pairs `(i, j)`, 1-based, with `p_i + p_j < 1`.
    pub subunit_pairs: Vec<(usize, usize)>,
    /// Ordered triples `(i, j, m)`, 1-based, with `p_i + p_j + p_m < 2`.
    pub subdouble_triples: Vec<(usize, usize, usize)>,
}

impl ExponentProfile {
    /// Exponent on the remainder's frequency factor; when no triple sums
    /// below two the largest triple sum `3 p_max` is used.
    pub fn remainder_exponent(&self) -> f64 {
        self.triple_max.unwrap_or(3.0 * self.p_max)
    }
}

pub fn exponent_profile(powers: &[f64]) -> Result<ExponentProfile> {
    if powers.is_empty() {
        return Err(Error::input("exponent profile needs at least one power"));
    }
    if let Some(p) = powers.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::input(format!("power {p} is outside (0, 1)")));
    }
    let l = powers.len();
    let p_max = powers.iter().copied().fold(f64::MIN, f64::max);
    let mut subunit_pairs = Vec::new();
    let mut pair_max: Option<f64> = None;
    for i in 0..l {
        for j in 0..l {
            let s = powers[i] + powers[j];
            if s < 1.0 {
                subunit_pairs.push((i + 1, j + 1));
                pair_max = Some(pair_max.map_or(s, |m| m.max(s)));
            }
        }
    }
    let mut subdouble_triples = Vec::new();
    let mut triple_max: Option<f64> = None;
    for i in 0..l {
        for j in 0..l {
            for m in 0..l {
                let s = powers[i] + powers[j] + powers[m];
                if s < 2.0 {
                    subdouble_triples.push((i + 1, j + 1, m + 1));
                    triple_max = Some(triple_max.map_or(s, |v| v.max(s)));
                }
            }
        }
    }
    let mut p_star = 1.0 - p_max;
    if let Some(p) = pair_max {
        p_star = p_star.min(1.0 - p);
    }
    if let Some(p) = triple_max {
        p_star = p_star.min(2.0 - p);
    }
    Ok(ExponentProfile {
        powers: powers.to_vec(),
        p_max,
        pair_max,
        triple_max,
        p_star,
        subunit_pairs,
        subdouble_triples,
    })
}

/// A possibly astronomically large frequency, carried by its base-10 logarithm.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OmegaStar {
    pub log10: f64,
    /// Linear value when representable as a finite `f64`.
    pub value: Option<f64>,
}

/// `max{1, (pi^2 (l+1)^3 L^2 (lambda/D) (9 t_f + 12 + 8 pi) e^{2 pi l^2 L t_f})^{1/p_star}}`.
pub fn omega_star(
    lipschitz: f64,
    channels: usize,
    t_f: f64,
    d: f64,
    lambda_bar: f64,
    p_star: f64,
) -> Result<OmegaStar> {
    if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
        return Err(Error::input("Lipschitz constant must be finite and non-negative"));
    }
    if channels == 0 {
        return Err(Error::input("channel count must be positive"));
    }
    if !(t_f > 0.0 && d > 0.0 && lambda_bar > 0.0) {
        return Err(Error::input("horizon, error scale and trajectory bound must be positive"));
    }
    if !(p_star > 0.0 && p_star <= 1.0) {
        return Err(Error::input(format!("p_star {p_star} is outside (0, 1]")));
    }
    if lipschitz == 0.0 {
        return Ok(OmegaStar { log10: 0.0, value: Some(1.0) });
    }
    let l = channels as f64;
    let ln_inner = (PI * PI * (l + 1.0).powi(3)).ln()
        + 2.0 * lipschitz.ln()
        + (lambda_bar / d).ln()
        + (9.0 * t_f + 12.0 + 8.0 * PI).ln()
        + 2.0 * PI * l * l * lipschitz * t_f;
    let log10 = (ln_inner / (p_star * LN_10)).max(0.0);
    if !log10.is_finite() {
        return Err(Error::numeric("log10 of the sufficient frequency overflowed"));
    }
    let value = Some(10f64.powf(log10)).filter(|v| v.is_finite());
    Ok(OmegaStar { log10, value })
}

/// Approximation horizon and relative error scale.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Budget {
    pub t_f: f64,
    pub d: f64,
}

fn check_envelope_constants(alpha_bar: f64, beta_bar: f64) -> Result<()> {
    if !(alpha_bar >= 1.0 && alpha_bar.is_finite()) {
        return Err(Error::input(format!("alpha_bar must be at least 1, got {alpha_bar}")));
    }
    if !(beta_bar > 0.0 && beta_bar.is_finite()) {
        return Err(Error::input(format!("beta_bar must be positive, got {beta_bar}")));
    }
    Ok(())
}

/// Picks `t_f` (default `ln(2 alpha_bar) / beta_bar`) and
/// `D = (1 - alpha_bar e^{-beta_bar t_f}) / 2`.
pub fn select_budget(alpha_bar: f64, beta_bar: f64, t_f: Option<f64>) -> Result<Budget> {
    check_envelope_constants(alpha_bar, beta_bar)?;
    let t_f = match t_f {
        Some(t) if !(t > 0.0 && t.is_finite()) => {
            return Err(Error::input(format!("horizon must be positive, got {t}")));
        }
        Some(t) => t,
        None => (2.0 * alpha_bar).ln() / beta_bar,
    };
    let decay = alpha_bar * (-beta_bar * t_f).exp();
    if decay >= 1.0 {
        return Err(Error::Infeasible(format!("alpha_bar e^(-beta_bar t_f) = {decay} is not below 1 for t_f = {t_f}")));
    }
    Ok(Budget { t_f, d: 0.5 * (1.0 - decay) })
}

/// `q = alpha_bar e^{-beta_bar t_f} + D`, required to lie in `(0, 1)`.
pub fn contraction_factor(alpha_bar: f64, beta_bar: f64, t_f: f64, d: f64) -> Result<f64> {
    check_envelope_constants(alpha_bar, beta_bar)?;
    if !(t_f > 0.0) {
        return Err(Error::input(format!("horizon must be positive, got {t_f}")));
    }
    if !(d > 0.0) {
        return Err(Error::Infeasible(format!("error scale D = {d} must be positive")));
    }
    let q = alpha_bar * (-beta_bar * t_f).exp() + d;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Infeasible(format!("alpha_bar e^(-beta_bar t_f) + D = {q} is not in (0, 1)")));
    }
    Ok(q)
}

/// `alpha = (alpha_bar + D) / q` and `beta = -ln(q) / t_f`.
pub fn derived_alpha_beta(alpha_bar: f64, beta_bar: f64, t_f: f64, d: f64) -> Result<(f64, f64)> {
    let q = contraction_factor(alpha_bar, beta_bar, t_f, d)?;
    Ok(((alpha_bar + d) / q, -q.ln() / t_f))
}

/// The full certificate for one system and budget.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityBudget {
    pub alpha_bar: f64,
    pub beta_bar: f64,
    pub t_f: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "L")]
    pub lipschitz: f64,
    pub l: usize,
    pub p_star: f64,
    pub log10_omega_star: f64,
    pub omega_star: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
    /// The alternative `D = (e^{-beta_bar t_f} - 1) / 2`, negative for every
    /// positive horizon and therefore unusable; kept for reference.
    pub d_negative_variant: f64,
}

impl StabilityBudget {
    /// Selects or validates `(t_f, D)`, then derives `omega_star`, `alpha`
    /// and `beta`. The trajectory bound on the averaged system is `alpha_bar`.
    pub fn certify(
        alpha_bar: f64,
        beta_bar: f64,
        t_f: Option<f64>,
        d: Option<f64>,
        lipschitz: f64,
        profile: &ExponentProfile,
    ) -> Result<Self> {
        let selected = select_budget(alpha_bar, beta_bar, t_f)?;
        let d = d.unwrap_or(selected.d);
        let (alpha, beta) = derived_alpha_beta(alpha_bar, beta_bar, selected.t_f, d)?;
        let l = profile.powers.len();
        let w = omega_star(lipschitz, l, selected.t_f, d, alpha_bar, profile.p_star)?;
        Ok(Self {
            alpha_bar,
            beta_bar,
            t_f: selected.t_f,
            d,
            lipschitz,
            l,
            p_star: profile.p_star,
            log10_omega_star: w.log10,
            omega_star: w.value,
            alpha,
            beta,
            d_negative_variant: 0.5 * ((-beta_bar * selected.t_f).exp() - 1.0),
        })
    }
}

/// Named boolean check included in certificate output.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    #[serde(flatten)]
    pub budget: StabilityBudget,
    pub checks: Vec<CertificateCheck>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub pass: bool,
    /// `max_t |x(t)| / (alpha |x0| e^{-beta (t - t0)})`.
    pub max_ratio: f64,
    pub t_at_max: f64,
    pub slack: f64,
}

pub fn check_envelope(traj: &Trajectory, alpha: f64, beta: f64, slack: f64) -> Result<EnvelopeReport> {
    if !(slack >= 1.0) {
        return Err(Error::input(format!("envelope slack must be at least 1, got {slack}")));
    }
    let x0 = traj.initial().norm();
    let t0 = traj.t0();
    let mut max_ratio = 0.0f64;
    let mut t_at_max = t0;
    for (&t, x) in traj.times().iter().zip(traj.states()) {
        let n = x.norm();
        let ratio = if n == 0.0 {
            0.0
        } else {
            // evaluated in log space so long horizons do not underflow
            (n.ln() - (alpha * x0).ln() + beta * (t - t0)).exp()
        };
        if ratio > max_ratio {
            max_ratio = ratio;
            t_at_max = t;
        }
    }
    Ok(EnvelopeReport { pass: max_ratio <= slack, max_ratio, t_at_max, slack })
}

#[derive(Debug, Clone, Serialize)]
pub struct ApproximationReport {
    pub pass: bool,
    pub sup_deviation: f64,
    pub bound: f64,
    /// `sup_deviation / (D |x0|)`.
    pub ratio: f64,
}

pub fn check_approximation(
    traj_s: &Trajectory,
    traj_lbs: &Trajectory,
    d: f64,
    x0_norm: f64,
) -> Result<ApproximationReport> {
    let same_start = (traj_s.t0() - traj_lbs.t0()).abs() <= 1e-12 * (1.0 + traj_s.t0().abs())
        && traj_s.initial() == traj_lbs.initial();
    if !same_start {
        return Err(Error::input("trajectories do not share initial time and state"));
    }
    if !(d >= 0.0 && x0_norm >= 0.0) {
        return Err(Error::input("error scale and initial norm must be non-negative"));
    }
    let dev = sup_deviation(traj_s, traj_lbs)?;
    let bound = d * x0_norm;
    let ratio = if bound > 0.0 {
        dev / bound
    } else if dev == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(ApproximationReport { pass: dev < bound, sup_deviation: dev, bound, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn profile_examples() {
        let p = exponent_profile(&[0.5, 0.5]).unwrap();
        assert!(p.pair_max.is_none());
        assert_eq!(p.triple_max, Some(1.5));
        assert_eq!(p.p_star, 0.5);

        let p = exponent_profile(&[0.3]).unwrap();
        assert_eq!(p.subunit_pairs, vec![(1, 1)]);
        assert_abs_diff_eq!(p.pair_max.unwrap(), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(p.triple_max.unwrap(), 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(p.p_star, 0.4, epsilon = 1e-15);

        let p = exponent_profile(&[0.9, 0.9]).unwrap();
        assert!(p.pair_max.is_none() && p.triple_max.is_none());
        assert_abs_diff_eq!(p.p_star, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(p.remainder_exponent(), 2.7, epsilon = 1e-15);

        assert!(exponent_profile(&[]).is_err());
        assert!(exponent_profile(&[1.0]).is_err());
    }

    #[test]
    fn omega_star_limits() {
        let w = omega_star(1e-9, 2, 1.0, 0.5, 1.0, 0.5).unwrap();
        assert_eq!(w.log10, 0.0);
        assert_eq!(w.value, Some(1.0));
        let big = omega_star(2838.0, 2, 1.0, 0.25, 1.0, 0.5).unwrap();
        assert!(big.log10 > 10.0);
        assert!(big.value.is_none());
    }

    #[test]
    fn budget_selection() {
        let b = select_budget(1.0, 2.5, Some(1.0)).unwrap();
        assert_abs_diff_eq!(b.d, 0.458_957, epsilon = 1e-6);
        let b = select_budget(1.0, 2.5, None).unwrap();
        assert_abs_diff_eq!(b.t_f, 2f64.ln() / 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(b.d, 0.25, epsilon = 1e-15);
        assert!(matches!(select_budget(2.0, 0.1, Some(1.0)), Err(Error::Infeasible(_))));
    }

    #[test]
    fn alpha_beta_arithmetic() {
        let (a, b) = derived_alpha_beta(1.0, 2.5, 1.0, 0.3).unwrap();
        let q = (-2.5f64).exp() + 0.3;
        assert_abs_diff_eq!(a, 1.3 / q, epsilon = 1e-12);
        assert_abs_diff_eq!(a, 3.4024, epsilon = 1e-4);
        assert_abs_diff_eq!(b, 0.9622, epsilon = 1e-4);
        let t_f = 2f64.ln() / 2.5;
        let (a, b) = derived_alpha_beta(1.0, 2.5, t_f, 0.25).unwrap();
        assert_abs_diff_eq!(a, 5.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b, (4.0f64 / 3.0).ln() / t_f, epsilon = 1e-12);
        assert!(derived_alpha_beta(1.0, 2.5, 1.0, 0.95).is_err());
    }

    #[test]
    fn certificate_fields() {
        let profile = exponent_profile(&[0.5, 0.5]).unwrap();
        let c = StabilityBudget::certify(1.0, 2.5, None, None, 2147.8, &profile).unwrap();
        assert!(c.alpha >= 1.0 && c.beta > 0.0 && c.beta < 2.5);
        assert!(c.d_negative_variant < 0.0);
        let json = serde_json::to_value(&c).unwrap();
        assert!(json.get("D").is_some() && json.get("L").is_some());
    }
}
