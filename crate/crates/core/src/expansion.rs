//! Functional expansion of a dithered trajectory over dither periods.
//!
//! Over any window `[t_s, t_e]` the trajectory increment splits exactly as
//!
//! ```text
//! x(t_e) - x(t_s) = \int f_0 + QV1 + QV2 + Q1 + Q1T + H + R
//! ```
//!
//! where each term is an iterated integral of the channel weights
//! `v_i(t) = omega^{p_i} u_i(omega t)` (with `v_0 = 1`) against Lie derivatives
//! along the trajectory. Over a full period `H` collapses onto the averaged
//! bracket integral `I` plus a Lipschitz remainder `RL1`, which turns the sum
//! over periods into the averaged dynamics plus remainders.
//!
//! The context integrates the trajectory with fine RK4 steps, evaluates each
//! term by nested cumulative Simpson passes on an equally spaced grid, and
//! pairs each term with its closed-form bound. Grid nodes of period-aligned
//! windows coincide with trajectory samples whenever the step count per
//! period is a multiple of the panel count.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dither::{big_v, big_v2, gamma, DitherSignal};
use crate::dynamics::{
    lie_bracket_probe, lie_derivative_probe, second_lie_derivative, time_partial_lie_derivative, DitheredSystem, Vector,
};
use crate::error::{Error, Result};
use crate::lbs::{build_lbs_unchecked, LieBracketSystem};
use crate::quadrature::{cumulative_simpson, even, simpson_samples};
use crate::sim::{integrate_closure, Method, Trajectory, TrajectoryMeta};
use crate::stability::{exponent_profile, ExponentProfile};

/// Fewest trajectory samples per dither period the expansion accepts.
pub const MIN_SAMPLES_PER_PERIOD: usize = 16;
pub const DEFAULT_STEPS_PER_PERIOD: usize = 2048;
pub const DEFAULT_PANELS_PER_PERIOD: usize = 128;
/// Relative slack allowed on every bound comparison.
pub const AUDIT_RELATIVE_TOL: f64 = 1e-6;

/// Windows shorter than a period by less than this fraction count as a period.
const PERIOD_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Term {
    QV1,
    QV2,
    Q1,
    Q1T,
    H,
    I,
    RL1,
    R,
    RT1,
    J0,
    Jij,
}

impl Term {
    /// Terms evaluated over a window no longer than one period.
    pub const WINDOWED: [Term; 8] = [Term::QV1, Term::QV2, Term::Q1, Term::Q1T, Term::H, Term::I, Term::RL1, Term::R];

    pub fn name(self) -> &'static str {
        match self {
            Term::QV1 => "QV1",
            Term::QV2 => "QV2",
            Term::Q1 => "Q1",
            Term::Q1T => "Q1T",
            Term::H => "H",
            Term::I => "I",
            Term::RL1 => "RL1",
            Term::R => "R",
            Term::RT1 => "RT1",
            Term::J0 => "J0",
            Term::Jij => "Jij",
        }
    }

    fn pointwise(self) -> bool {
        matches!(self, Term::J0 | Term::Jij)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExpansionConfig {
    /// RK4 steps per dither period for the reference trajectories.
    pub steps_per_period: usize,
    /// Simpson panels per dither period at every nesting level.
    pub panels_per_period: usize,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self { steps_per_period: DEFAULT_STEPS_PER_PERIOD, panels_per_period: DEFAULT_PANELS_PER_PERIOD }
    }
}

/// One channel pair `i < j` with its coefficient at the working frequency
/// and in the limit.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PairGamma {
    pub i: usize,
    pub j: usize,
    pub at_omega: f64,
    pub limit: f64,
}

/// A trajectory of the dithered system and everything needed to expand it.
#[derive(Debug, Clone)]
pub struct ExpansionContext {
    system: DitheredSystem,
    lbs: LieBracketSystem,
    omega1: f64,
    t0: f64,
    t1: f64,
    x0: Vector,
    traj: Trajectory,
    lbs_traj: Trajectory,
    lambda1: f64,
    period: f64,
    profile: ExponentProfile,
    pairs: Vec<PairGamma>,
    lipschitz: Option<f64>,
    panels_per_period: usize,
}

/// A term value and whether any Jacobian behind it sat on a kink.
#[derive(Debug, Clone)]
pub struct TermValue {
    pub value: Vector,
    pub flagged: bool,
}

impl TermValue {
    fn zero(dim: usize) -> Self {
        Self { value: Vector::zeros(dim), flagged: false }
    }

    pub fn norm(&self) -> f64 {
        self.value.norm()
    }

    fn add(&mut self, other: TermValue) {
        self.value += other.value;
        self.flagged |= other.flagged;
    }
}

/// Equally spaced nodes over a window with the interpolated states there.
struct Grid {
    nodes: Vec<f64>,
    h: f64,
    states: Vec<Vector>,
}

impl ExpansionContext {
    /// Integrates the dithered and the averaged system from `(t0, x0)` to `t1`.
    pub fn new(
        system: &DitheredSystem,
        omega1: f64,
        t0: f64,
        t1: f64,
        x0: &Vector,
        config: ExpansionConfig,
    ) -> Result<Self> {
        check_omega(omega1)?;
        if config.steps_per_period < MIN_SAMPLES_PER_PERIOD {
            return Err(Error::Resolution(format!(
                "{} steps per period is below the minimum of {MIN_SAMPLES_PER_PERIOD}",
                config.steps_per_period
            )));
        }
        let h = TAU / omega1 / config.steps_per_period as f64;
        let meta = TrajectoryMeta {
            label: system.label().to_string(),
            omega: Some(omega1),
            t0,
            x0: x0.iter().copied().collect(),
        };
        system.drift().check_dim(x0)?;
        let traj = integrate_closure(|t, x| system.rhs(omega1, t, x), t0, x0, h, t1, Method::Rk4, 1, meta)?;
        Self::assemble(system, omega1, traj, config)
    }

    /// Wraps an existing trajectory of the dithered system at `omega1`.
    pub fn from_trajectory(
        system: &DitheredSystem,
        omega1: f64,
        traj: Trajectory,
        config: ExpansionConfig,
    ) -> Result<Self> {
        check_omega(omega1)?;
        let samples_per_period = TAU / omega1 / traj.step();
        if samples_per_period < MIN_SAMPLES_PER_PERIOD as f64 {
            return Err(Error::Resolution(format!(
                "trajectory step {} gives {samples_per_period:.1} samples per period; at least \
                 {MIN_SAMPLES_PER_PERIOD} are needed (reduce the step)",
                traj.step()
            )));
        }
        Self::assemble(system, omega1, traj, config)
    }

    fn assemble(system: &DitheredSystem, omega1: f64, traj: Trajectory, config: ExpansionConfig) -> Result<Self> {
        if config.panels_per_period < 2 {
            return Err(Error::Resolution("at least two panels per period are needed".into()));
        }
        let lbs = build_lbs_unchecked(system)?;
        let t0 = traj.t0();
        let t1 = traj.t_end();
        let x0 = traj.initial().clone();
        let lbs_traj = if t1 > t0 {
            lbs.integrate(t0, &x0, traj.step(), t1, Method::Rk4)?
        } else {
            lbs.integrate(t0, &x0, 1.0, t0, Method::Rk4)?
        };
        let x0_norm = x0.norm();
        let lambda1 = if x0_norm > 0.0 { (traj.max_norm() / x0_norm).max(1.0) } else { 1.0 };
        let profile = exponent_profile(&system.powers())?;
        let channels = system.channels();
        let mut pairs = Vec::new();
        for a in 0..channels.len() {
            for b in a + 1..channels.len() {
                let (ci, cj) = (&channels[a], &channels[b]);
                pairs.push(PairGamma {
                    i: a + 1,
                    j: b + 1,
                    at_omega: gamma(&ci.dither, &cj.dither, ci.power, cj.power, omega1)?,
                    limit: lbs.coefficient(a + 1, b + 1).unwrap_or(0.0),
                });
            }
        }
        Ok(Self {
            system: system.clone(),
            lbs,
            omega1,
            t0,
            t1,
            x0,
            traj,
            lbs_traj,
            lambda1,
            period: TAU / omega1,
            profile,
            pairs,
            lipschitz: system.lipschitz(),
            panels_per_period: config.panels_per_period,
        })
    }

    /// Replaces the Lipschitz constant used by the bounds.
    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    pub fn with_panels_per_period(mut self, panels: usize) -> Self {
        self.panels_per_period = panels.max(2);
        self
    }

    pub fn system(&self) -> &DitheredSystem {
        &self.system
    }

    pub fn lbs(&self) -> &LieBracketSystem {
        &self.lbs
    }

    pub fn omega1(&self) -> f64 {
        self.omega1
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn x0(&self) -> &Vector {
        &self.x0
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.traj
    }

    pub fn lbs_trajectory(&self) -> &Trajectory {
        &self.lbs_traj
    }

    /// `max(1, sup_t |x(t)| / |x0|)`.
    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn profile(&self) -> &ExponentProfile {
        &self.profile
    }

    pub fn pairs(&self) -> &[PairGamma] {
        &self.pairs
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn panels_per_period(&self) -> usize {
        self.panels_per_period
    }

    /// Number of whole periods in the horizon.
    pub fn full_periods(&self) -> usize {
        self.periods_in(self.t0, self.t1)
    }

    fn periods_in(&self, a: f64, b: f64) -> usize {
        ((b - a) / self.period + PERIOD_EPS).floor().max(0.0) as usize
    }

    fn dim(&self) -> usize {
        self.system.dim()
    }

    fn l(&self) -> usize {
        self.system.channel_count()
    }

    fn weight(&self, i: usize, t: f64) -> f64 {
        self.system.dither_weight(i, self.omega1, t)
    }

    fn dither(&self, i: usize) -> (&DitherSignal, f64) {
        let c = &self.system.channels()[i - 1];
        (&c.dither, c.power)
    }

    fn state(&self, t: f64) -> Vector {
        self.traj.state_at(t)
    }

    fn grid(&self, t_s: f64, t_e: f64) -> Grid {
        let n = even(((self.panels_per_period as f64) * (t_e - t_s) / self.period - PERIOD_EPS).ceil() as usize);
        let h = (t_e - t_s) / n as f64;
        let nodes: Vec<f64> = (0..=n).map(|k| if k == n { t_e } else { t_s + k as f64 * h }).collect();
        let states = nodes.iter().map(|&t| self.state(t)).collect();
        Grid { nodes, h, states }
    }

    fn check_window(&self, term: Term, t_s: f64, t_e: f64) -> Result<()> {
        let tol = 1e-9 * (1.0 + self.t0.abs().max(self.t1.abs()));
        if !(t_s.is_finite() && t_e.is_finite()) || t_s < self.t0 - tol || t_e > self.t1 + tol || t_e < t_s {
            return Err(Error::input(format!(
                "window [{t_s}, {t_e}] is not inside the horizon [{}, {}]",
                self.t0, self.t1
            )));
        }
        if term != Term::RT1 && !term.pointwise() && t_e - t_s > self.period * (1.0 + PERIOD_EPS) {
            return Err(Error::input(format!(
                "{} needs a window of at most one period ({}), got {}",
                term.name(),
                self.period,
                t_e - t_s
            )));
        }
        Ok(())
    }

    fn pair_index(&self, pair: Option<(usize, usize)>) -> Result<usize> {
        let (i, j) = pair.ok_or_else(|| Error::input("Jij needs a channel pair"))?;
        self.pairs
            .iter()
            .position(|p| p.i == i && p.j == j)
            .ok_or_else(|| Error::input(format!("({i}, {j}) is not a channel pair with i < j")))
    }

    /// Evaluates one term. Windowed terms use `[t_s, t_e]`; `J0` and `Jij`
    /// are pointwise and evaluated at `t_s`; `Jij` needs `pair = Some((i, j))`.
    pub fn eval_term(&self, term: Term, t_s: f64, t_e: f64, pair: Option<(usize, usize)>) -> Result<TermValue> {
        self.check_window(term, t_s, t_e)?;
        let out = match term {
            Term::J0 => self.j0(t_s),
            Term::Jij => self.jij(self.pair_index(pair)?, t_s)?,
            _ if t_e <= t_s => TermValue::zero(self.dim()),
            Term::QV1 => self.qv1(t_s, t_e)?,
            Term::QV2 => self.qv2(t_s, t_e)?,
            Term::Q1 => self.q1(t_s, t_e)?,
            Term::Q1T => self.q1t(t_s, t_e)?,
            Term::H => self.h(t_s, t_e)?,
            Term::I => self.i_term(t_s, t_e)?,
            Term::RL1 => self.rl1(t_s, t_e)?,
            Term::R => self.r(t_s, t_e)?,
            Term::RT1 => self.rt1(t_s, t_e)?,
        };
        if out.value.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("{} evaluated to a non-finite value", term.name())));
        }
        Ok(out)
    }

    fn all_autonomous(&self) -> bool {
        (0..=self.l()).all(|i| self.system.field(i).is_autonomous())
    }

    fn qv1(&self, t_s: f64, t_e: f64) -> Result<TermValue> {
        let mut out = TermValue::zero(self.dim());
        if self.all_autonomous() {
            return Ok(out);
        }
        let g = self.grid(t_s, t_e);
        for i in 1..=self.l() {
            let f = self.system.field(i);
            let partial: Vec<Vector> = g.nodes.iter().zip(&g.states).map(|(&t, x)| f.time_derivative(t, x)).collect();
            let inner = cumulative_simpson(&partial, g.h, Vector::zeros(self.dim()));
            let outer: Vec<Vector> = g.nodes.iter().zip(inner).map(|(&t, c)| c * self.weight(i, t)).collect();
            out.value += simpson_samples(&outer, g.h);
        }
        Ok(out)
    }

    /// `\int v_i(theta) \int v_j(tau) \int integrand(sigma) dsigma dtau dtheta`
    /// where `integrand` has already been weighted at each node.
    fn nested_triple(&self, g: &Grid, i: usize, j: usize, integrand: &[Vector]) -> Vector {
        let zero = Vector::zeros(self.dim());
        let inner = cumulative_simpson(integrand, g.h, zero.clone());
        let mid: Vec<Vector> = g.nodes.iter().zip(inner).map(|(&t, a)| a * self.weight(j, t)).collect();
        let mid = cumulative_simpson(&mid, g.h, zero);
        let outer: Vec<Vector> = g.nodes.iter().zip(mid).map(|(&t, b)| b * self.weight(i, t)).collect();
        simpson_samples(&outer, g.h)
    }

    fn qv2(&self, t_s: f64, t_e: f64) -> Result<TermValue> {
        let mut out = TermValue::zero(self.dim());
        if self.all_autonomous() {
            return Ok(out);
        }
        let g = self.grid(t_s, t_e);
        for i in 1..=self.l() {
            for j in 0..=self.l() {
                let (fi, fj) = (self.system.field(i), self.system.field(j));
                let mut samples = Vec::with_capacity(g.nodes.len());
                for (&t, x) in g.nodes.iter().zip(&g.states) {
                    let p = time_partial_lie_derivative(fi, fj, t, x)?;
                    out.flagged |= p.flagged;
                    samples.push(p.value);
                }
                out.value += self.nested_triple(&g, i, j, &samples);
            }
        }
        Ok(out)
    }

    fn q1(&self, t_s: f64, t_e: f64) -> Result<TermValue> {
        let mut out = TermValue::zero(self.dim());
        let x = self.state(t_s);
        for i in 1..=self.l() {
            let (u, p) = self.dither(i);
            let lie = lie_derivative_probe(self.system.field(i), self.system.drift(), t_s, &x)?;
            let w = big_v2(u, &DitherSignal::unit(), p, 0.0, self.omega1, t_s, t_e)?;
            out.add(TermValue { value: lie.value * w, flagged: lie.flagged });
        }
        Ok(out)
    }

    fn q1t(&self, t_s: f64, t_e: f64) -> Result<TermValue> {
        let mut out = TermValue::zero(self.dim());
        let x = self.state(t_s);
        let l = self.l();
        let v: Vec<f64> = (1..=l)
            .map(|i| {
                let (u, p) = self.dither(i);
                big_v(u, p, self.omega1, t_s, t_e)
            })
            .collect::<Result<_>>()?;
        for i in 1..=l {
            let fi = self.system.field(i);
            let own = lie_derivative_probe(fi, fi, t_s, &x)?;
            out.add(TermValue { value: own.value * (0.5 * v[i - 1] * v[i - 1]), flagged: own.flagged });
            for j in i + 1..=l {
                let lie = lie_derivative_probe(fi, self.system.field(j), t_s, &x)?;
                out.add(TermValue { value: lie.value * (v[i - 1] * v[j - 1]), flagged: lie.flagged });
            }
        }
        Ok(out)
    }

    fn h(&self, t_s: f64, t_e: f64) -> Result<TermValue> {
        let mut out = TermValue::zero(self.dim());
        let x = self.state(t_s);
        let l = self.l();
        for i in 1..=l {
            let (u, p) = self.dither(i);
            let vi = big_v(u, p, self.omega1, t_s, t_e)?;
            out.value += self.system.field(i).value(t_s, &x) * vi;
            for j in i + 1..=l {
                let (uj, pj) = self.dither(j);
                let vji = big_v2(uj, u, pj, p, self.omega1, t_s, t_e)?;
                let b = lie_bracket_probe(self.system.field(i), self.system.field(j), t_s, &x)?;
                out.add(TermValue { value: b.value * vji, flagged: b.flagged });
            }
        }
        Ok(out)
    }

    /// `sum_{i<j} gamma_ij(omega1) [f_i, f_j](t, x)`.
    fn averaged_brackets(&self, t: f64, x: &Vector) -> Result<TermValue> {
        let mut out = TermValue::zero(self.dim());
        for p in &self.pairs {
            if p.at_omega == 0.0 {
                continue;
            }
            let b = lie_bracket_probe(self.system.field(p.i), self.system.field(p.j), t, x)?;
            out.add(TermValue { value: b.value * p.at_omega, flagged: b.flagged });
        }
        Ok(out)
    }

    fn i_term(&self, t_s: f64, t_e: f64) -> Result<TermValue> {
        let g = self.grid(t_s, t_e);
        let mut flagged = false;
        let mut samples = Vec::with_capacity(g.nodes.len());
        for (&t, x) in g.nodes.iter().zip(&g.states) {
            let b = self.averaged_brackets(t, x)?;
            flagged |= b.flagged;
            samples.push(b.value);
        }
        Ok(TermValue { value: simpson_samples(&samples, g.h), flagged })
    }

    fn rl1(&self, t_s: f64, t_e: f64) -> Result<TermValue> {
        let start = self.averaged_brackets(t_s, &self.state(t_s))?;
        let integral = self.i_term(t_s, t_e)?;
        Ok(TermValue { value: start.value * (t_e - t_s) - integral.value, flagged: start.flagged || integral.flagged })
    }

    fn r(&self, t_s: f64, t_e: f64) -> Result<TermValue> {
        let g = self.grid(t_s, t_e);
        let l = self.l();
        let mut out = TermValue::zero(self.dim());
        for i in 1..=l {
            let fi = self.system.field(i);
            for j in 0..=l {
                let fj = self.system.field(j);
                let mut samples = Vec::with_capacity(g.nodes.len());
                for (&t, x) in g.nodes.iter().zip(&g.states) {
                    let mut acc = Vector::zeros(self.dim());
                    for m in 0..=l {
                        let w = self.weight(m, t);
                        if w == 0.0 {
                            continue;
                        }
                        let p = second_lie_derivative(fi, fj, self.system.field(m), t, x)?;
                        out.flagged |= p.flagged;
                        acc += p.value * w;
                    }
                    samples.push(acc);
                }
                out.value += self.nested_triple(&g, i, j, &samples);
            }
        }
        Ok(out)
    }

    fn rt1(&self, t_a: f64, t_b: f64) -> Result<TermValue> {
        let mut out = TermValue::zero(self.dim());
        let r = self.periods_in(t_a, t_b);
        for q in 0..r {
            let (s, e) = self.period_window(t_a, q);
            for term in [Term::QV1, Term::QV2, Term::Q1, Term::RL1] {
                out.add(self.eval_term(term, s, e, None)?);
            }
        }
        let t_r = self.period_window(t_a, r).0;
        if t_b > t_r {
            let mut tail = self.eval_term(Term::I, t_r, t_b, None)?;
            tail.value = -tail.value;
            out.add(tail);
            for term in [Term::QV1, Term::QV2, Term::Q1, Term::Q1T, Term::H] {
                out.add(self.eval_term(term, t_r, t_b, None)?);
            }
        }
        Ok(out)
    }

    /// `[t_a + q T, t_a + (q + 1) T]`, clipped to the horizon end.
    fn period_window(&self, t_a: f64, q: usize) -> (f64, f64) {
        let s = t_a + q as f64 * self.period;
        let e = t_a + (q + 1) as f64 * self.period;
        (s.min(self.t1), e.min(self.t1))
    }

    fn deviation(&self, t: f64) -> (Vector, Vector) {
        (self.state(t), self.lbs_traj.state_at(t))
    }

    fn j0(&self, t: f64) -> TermValue {
        let (x, xb) = self.deviation(t);
        let f0 = self.system.drift();
        TermValue { value: f0.value(t, &x) - f0.value(t, &xb), flagged: false }
    }

    fn jij(&self, idx: usize, t: f64) -> Result<TermValue> {
        let p = self.pairs[idx];
        let (x, xb) = self.deviation(t);
        let (fi, fj) = (self.system.field(p.i), self.system.field(p.j));
        let a = lie_bracket_probe(fi, fj, t, &x)?;
        let b = lie_bracket_probe(fi, fj, t, &xb)?;
        Ok(TermValue { value: a.value * p.at_omega - b.value * p.limit, flagged: a.flagged || b.flagged })
    }

    /// Closed-form bound on `|term|` over `[t_s, t_e]` (or at `t_s` for the
    /// pointwise terms).
    pub fn bound_value(&self, term: Term, t_s: f64, t_e: f64) -> Result<f64> {
        self.check_window(term, t_s, t_e)?;
        let lip =
            self.lipschitz.ok_or_else(|| Error::Config("no Lipschitz constant is attached to the system".into()))?;
        let l = self.l() as f64;
        let x0 = self.x0.norm();
        let scale = self.lambda1 * x0 * self.omega1.powf(self.profile.p_max - 1.0);
        let pi2 = PI * PI;
        let t1 = self.period;
        Ok(match term {
            Term::QV1 | Term::Q1 => PI * l * lip * scale * t1,
            Term::QV2 => 2.0 / 3.0 * pi2 * l * l * lip * scale * t1,
            Term::Q1T | Term::I => 2.0 * pi2 * l * l * lip * scale,
            Term::H => 8.0 * pi2 * l * l * lip * scale,
            Term::RL1 => pi2 * (l + 1.0).powi(2) * lip * lip * scale * t1,
            Term::RT1 => pi2 * (l + 1.0).powi(2) * lip * lip * scale * (8.0 * (t_e - t_s) + 12.0 + 6.0 * PI),
            Term::R => {
                2.0 / 3.0
                    * pi2
                    * (l + 1.0).powi(3)
                    * lip
                    * self.lambda1
                    * x0
                    * self.omega1.powf(self.profile.remainder_exponent() - 2.0)
                    * t1
            }
            Term::J0 => {
                let (x, xb) = self.deviation(t_s);
                lip * (x - xb).norm()
            }
            Term::Jij => {
                let (x, xb) = self.deviation(t_s);
                TAU * lip * (x - xb).norm()
            }
        })
    }

    /// `|x(t1) - rhs|` where `rhs` is `x0` plus the averaged drift integral
    /// along the trajectory, the per-period remainders and the assembled
    /// `RT1`.
    pub fn verify_expansion_identity(&self) -> Result<f64> {
        if self.t1 <= self.t0 {
            return Ok(0.0);
        }
        let mut rhs = self.x0.clone();
        let r = self.full_periods();
        let mut windows: Vec<(f64, f64)> = (0..r).map(|q| self.period_window(self.t0, q)).collect();
        let t_r = self.period_window(self.t0, r).0;
        if self.t1 > t_r {
            windows.push((t_r, self.t1));
        }
        let drift = self.system.drift();
        for &(s, e) in &windows {
            let g = self.grid(s, e);
            let mut samples = Vec::with_capacity(g.nodes.len());
            for (&t, x) in g.nodes.iter().zip(&g.states) {
                samples.push(drift.value(t, x) + self.averaged_brackets(t, x)?.value);
            }
            rhs += simpson_samples(&samples, g.h);
            rhs += self.eval_term(Term::R, s, e, None)?.value;
        }
        rhs += self.eval_term(Term::RT1, self.t0, self.t1, None)?.value;
        Ok((self.traj.last() - rhs).norm())
    }
}

fn check_omega(omega1: f64) -> Result<()> {
    if !(omega1 >= 1.0 && omega1.is_finite()) {
        return Err(Error::input(format!("expansion frequency must be at least 1, got {omega1}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditEntry {
    pub term: Term,
    pub t_s: f64,
    pub t_e: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair: Option<(usize, usize)>,
    pub value: f64,
    pub bound: f64,
    pub margin: f64,
    /// Evaluated at a non-differentiable point; reported, not judged.
    pub flagged: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionReport {
    pub omega1: f64,
    pub t0: f64,
    pub t1: f64,
    pub lambda1: f64,
    pub lipschitz: f64,
    pub entries: Vec<AuditEntry>,
    pub identity_residual: f64,
    /// Whole-horizon `RT1` bound with the constant used by the sufficient
    /// frequency, `9 (t1 - t0) + 12 + 8 pi`, next to the lemma's own.
    pub rt1_theorem_bound: f64,
    pub violations: usize,
    pub flagged: usize,
    pub pass: bool,
}

impl ExpansionReport {
    /// Smallest margin per term among judged entries.
    pub fn worst_margins(&self) -> Vec<(Term, f64)> {
        let mut out: Vec<(Term, f64)> = Vec::new();
        for e in self.entries.iter().filter(|e| !e.flagged) {
            match out.iter_mut().find(|(t, _)| *t == e.term) {
                Some((_, m)) => *m = m.min(e.margin),
                None => out.push((e.term, e.margin)),
            }
        }
        out
    }

    /// Largest `value / bound` per term among judged entries with a
    /// positive bound.
    pub fn max_ratios(&self) -> Vec<(Term, f64)> {
        let mut out: Vec<(Term, f64)> = Vec::new();
        for e in self.entries.iter().filter(|e| !e.flagged && e.bound > 0.0) {
            let r = e.value / e.bound;
            match out.iter_mut().find(|(t, _)| *t == e.term) {
                Some((_, m)) => *m = m.max(r),
                None => out.push((e.term, r)),
            }
        }
        out
    }
}

fn audit_entry(
    ctx: &ExpansionContext,
    term: Term,
    t_s: f64,
    t_e: f64,
    pair: Option<(usize, usize)>,
) -> Result<AuditEntry> {
    let v = ctx.eval_term(term, t_s, t_e, pair)?;
    let bound = ctx.bound_value(term, t_s, t_e)?;
    let value = v.norm();
    Ok(AuditEntry {
        term,
        t_s,
        t_e,
        pair,
        value,
        bound,
        margin: bound - value,
        flagged: v.flagged,
        pass: value <= bound + AUDIT_RELATIVE_TOL * bound,
    })
}

/// Compares every term against its bound on `probes` random windows of at
/// most one period, plus `RT1` over the whole horizon and the expansion
/// identity. Probe windows are drawn from `seed` and evaluated in parallel.
pub fn audit_bounds(ctx: &ExpansionContext, probes: usize, seed: u64) -> Result<ExpansionReport> {
    let lipschitz =
        ctx.lipschitz.ok_or_else(|| Error::Config("no Lipschitz constant is attached to the system".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = ctx.t1 - ctx.t0;
    let windows: Vec<(f64, f64)> = (0..probes)
        .map(|_| {
            let len = (ctx.period * (1.0 - rng.gen::<f64>())).min(span);
            let t_s = ctx.t0 + rng.gen::<f64>() * (span - len).max(0.0);
            (t_s, (t_s + len).min(ctx.t1))
        })
        .collect();
    let pairs: Vec<(usize, usize)> = ctx.pairs.iter().map(|p| (p.i, p.j)).collect();
    let per_window: Vec<Vec<AuditEntry>> = windows
        .par_iter()
        .map(|&(t_s, t_e)| {
            let mut out = Vec::with_capacity(Term::WINDOWED.len() + 1 + pairs.len());
            for term in Term::WINDOWED {
                out.push(audit_entry(ctx, term, t_s, t_e, None)?);
            }
            out.push(audit_entry(ctx, Term::J0, t_s, t_s, None)?);
            for &p in &pairs {
                out.push(audit_entry(ctx, Term::Jij, t_s, t_s, Some(p))?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut entries: Vec<AuditEntry> = per_window.into_iter().flatten().collect();
    entries.push(audit_entry(ctx, Term::RT1, ctx.t0, ctx.t1, None)?);
    let identity_residual = ctx.verify_expansion_identity()?;
    let rt1_lemma = ctx.bound_value(Term::RT1, ctx.t0, ctx.t1)?;
    let lemma_factor = 8.0 * span + 12.0 + 6.0 * PI;
    let rt1_theorem_bound =
        if lemma_factor > 0.0 { rt1_lemma / lemma_factor * (9.0 * span + 12.0 + 8.0 * PI) } else { 0.0 };
    let violations = entries.iter().filter(|e| !e.flagged && !e.pass).count();
    let flagged = entries.iter().filter(|e| e.flagged).count();
    Ok(ExpansionReport {
        omega1: ctx.omega1,
        t0: ctx.t0,
        t1: ctx.t1,
        lambda1: ctx.lambda1,
        lipschitz,
        entries,
        identity_residual,
        rt1_theorem_bound,
        violations,
        flagged,
        pass: violations == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Channel, VectorField};
    use crate::scenarios::example_system;
    use approx::assert_abs_diff_eq;

    fn example_ctx(omega: f64, periods: f64) -> ExpansionContext {
        let sys = example_system(2.0, -3.0, 0.5).unwrap();
        let t1 = periods * TAU / omega;
        ExpansionContext::new(&sys, omega, 0.0, t1, &Vector::from_element(1, 1.0), ExpansionConfig::default()).unwrap()
    }

    #[test]
    fn empty_window_terms_vanish() {
        let ctx = example_ctx(200.0, 2.0);
        for term in Term::WINDOWED {
            assert_eq!(ctx.eval_term(term, 0.01, 0.01, None).unwrap().norm(), 0.0, "{term:?}");
        }
    }

    #[test]
    fn window_checks() {
        let ctx = example_ctx(200.0, 2.0);
        assert!(ctx.eval_term(Term::H, 0.0, 1.5 * ctx.period(), None).is_err());
        assert!(ctx.eval_term(Term::H, -1.0, 0.0, None).is_err());
        assert!(ctx.eval_term(Term::Jij, 0.0, 0.0, None).is_err());
        assert!(ctx.eval_term(Term::RT1, 0.0, ctx.t1(), None).is_ok());
    }

    #[test]
    fn full_period_h_matches_averaged_brackets() {
        let ctx = example_ctx(200.0, 1.0);
        let t = ctx.period();
        let h = ctx.eval_term(Term::H, 0.0, t, None).unwrap().value;
        let i = ctx.eval_term(Term::I, 0.0, t, None).unwrap().value;
        let rl1 = ctx.eval_term(Term::RL1, 0.0, t, None).unwrap().value;
        assert_abs_diff_eq!(h[0], (i + rl1)[0], epsilon = 1e-9);
        assert!(ctx.eval_term(Term::Q1T, 0.0, t, None).unwrap().norm() < 1e-12);
    }

    #[test]
    fn identity_holds_on_three_periods() {
        let ctx = example_ctx(200.0, 3.0);
        let r = ctx.verify_expansion_identity().unwrap();
        assert!(r < 1e-3, "residual {r}");
    }

    #[test]
    fn identity_on_partial_period() {
        let ctx = example_ctx(50.0, 2.4);
        assert_eq!(ctx.full_periods(), 2);
        assert!(ctx.verify_expansion_identity().unwrap() < 1e-3);
    }

    #[test]
    fn bounds_scale_with_initial_norm() {
        let sys = example_system(2.0, -3.0, 0.5).unwrap();
        let t1 = TAU / 200.0;
        let one =
            ExpansionContext::new(&sys, 200.0, 0.0, t1, &Vector::from_element(1, 0.5), ExpansionConfig::default())
                .unwrap();
        let two =
            ExpansionContext::new(&sys, 200.0, 0.0, t1, &Vector::from_element(1, 1.0), ExpansionConfig::default())
                .unwrap();
        let b1 = one.bound_value(Term::QV1, 0.0, t1).unwrap() / one.lambda1();
        let b2 = two.bound_value(Term::QV1, 0.0, t1).unwrap() / two.lambda1();
        assert_abs_diff_eq!(b2, 2.0 * b1, epsilon = 1e-12);
    }

    #[test]
    fn qv1_bound_plug_in() {
        let sys = DitheredSystem::new(
            "unit",
            VectorField::zero(1),
            vec![Channel::new(VectorField::scalar_linear(0.0), 0.5, DitherSignal::sine())],
        )
        .unwrap()
        .with_lipschitz(1.0)
        .unwrap();
        let ctx = ExpansionContext::new(&sys, 1.0, 0.0, TAU, &Vector::from_element(1, 1.0), ExpansionConfig::default())
            .unwrap();
        assert_eq!(ctx.lambda1(), 1.0);
        assert_abs_diff_eq!(ctx.bound_value(Term::QV1, 0.0, TAU).unwrap(), 2.0 * PI * PI, epsilon = 1e-12);
    }

    #[test]
    fn missing_lipschitz_is_config_error() {
        let sys = DitheredSystem::new(
            "unit",
            VectorField::zero(1),
            vec![Channel::new(VectorField::scalar_linear(1.0), 0.5, DitherSignal::sine())],
        )
        .unwrap();
        let ctx =
            ExpansionContext::new(&sys, 10.0, 0.0, 0.5, &Vector::from_element(1, 1.0), ExpansionConfig::default())
                .unwrap();
        assert!(matches!(ctx.bound_value(Term::H, 0.0, 0.1), Err(Error::Config(_))));
    }

    #[test]
    fn coarse_trajectory_is_resolution_error() {
        let sys = example_system(2.0, -3.0, 0.5).unwrap();
        let cfg = ExpansionConfig { steps_per_period: 8, ..Default::default() };
        assert!(matches!(
            ExpansionContext::new(&sys, 200.0, 0.0, 0.1, &Vector::from_element(1, 1.0), cfg),
            Err(Error::Resolution(_))
        ));
    }
}
