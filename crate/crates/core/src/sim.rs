//! Fixed-step integration and immutable trajectories.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{DitheredSystem, Vector, VectorField};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Explicit forward Euler.
    #[default]
    Euler,
    /// Classical fourth-order Runge-Kutta.
    Rk4,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" | "ode1" => Ok(Method::Euler),
            "rk4" => Ok(Method::Rk4),
            other => Err(Error::input(format!("unknown integration method `{other}`"))),
        }
    }
}

/// Provenance recorded with every trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryMeta {
    pub label: String,
    /// Dither frequency, or `None` for averaged or undithered dynamics.
    pub omega: Option<f64>,
    pub t0: f64,
    pub x0: Vec<f64>,
}

/// Time samples and states of one fixed-step run. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<Vector>,
    step: f64,
    method: Method,
    meta: TrajectoryMeta,
}

impl Trajectory {
    pub(crate) fn from_parts(
        times: Vec<f64>,
        states: Vec<Vector>,
        step: f64,
        method: Method,
        meta: TrajectoryMeta,
    ) -> Self {
        debug_assert!(!times.is_empty() && times.len() == states.len());
        Self { times, states, step, method, meta }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vector] {
        &self.states
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn meta(&self) -> &TrajectoryMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one sample")
    }

    pub fn initial(&self) -> &Vector {
        &self.states[0]
    }

    pub fn last(&self) -> &Vector {
        self.states.last().expect("trajectory has at least one sample")
    }

    /// Linear interpolation between stored samples, clamped to the horizon.
    pub fn state_at(&self, t: f64) -> Vector {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1].clone();
        }
        let k = self.times.partition_point(|&s| s <= t).max(1) - 1;
        let (ta, tb) = (self.times[k], self.times[k + 1]);
        let w = (t - ta) / (tb - ta);
        &self.states[k] * (1.0 - w) + &self.states[k + 1] * w
    }

    /// `sup_t |x(t)|`.
    pub fn max_norm(&self) -> f64 {
        self.states.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::new();
        s.push('t');
        for i in 1..=self.dim() {
            let _ = write!(s, ",x{i}");
        }
        s.push('\n');
        for (t, x) in self.times.iter().zip(&self.states) {
            s.push_str(&fmt_float(*t));
            for v in x.iter() {
                s.push(',');
                s.push_str(&fmt_float(*v));
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.to_csv_string().as_bytes())?;
        f.flush()?;
        Ok(())
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:?}")
}

/// One explicit step of `y' = f(t, y)` from `(t, y)` with step `dt`.
pub(crate) fn step<F>(method: Method, f: &F, t: f64, y: &Vector, dt: f64) -> Vector
where
    F: Fn(f64, &Vector) -> Vector,
{
    match method {
        Method::Euler => y + f(t, y) * dt,
        Method::Rk4 => {
            let half = 0.5 * dt;
            let k1 = f(t, y);
            let k2 = f(t + half, &(y + &k1 * half));
            let k3 = f(t + half, &(y + &k2 * half));
            let k4 = f(t + dt, &(y + &k3 * dt));
            y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
        }
    }
}

/// Steps within this fraction of `h` of `t_end` merge into the final step.
const GRID_EPS: f64 = 1e-9;

/// Integrates `y' = f(t, y)` on the uniform grid `t0 + m h`, shortening the
/// last step to land on `t_end`. Records every `record_every`-th sample and
/// always the last one.
pub(crate) fn integrate_closure<F>(
    f: F,
    t0: f64,
    x0: &Vector,
    h: f64,
    t_end: f64,
    method: Method,
    record_every: usize,
    meta: TrajectoryMeta,
) -> Result<Trajectory>
where
    F: Fn(f64, &Vector) -> Vector,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::input(format!("step must be positive, got {h}")));
    }
    if !(t0.is_finite() && t_end.is_finite()) || t_end < t0 {
        return Err(Error::input(format!("invalid horizon [{t0}, {t_end}]")));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("initial state must be finite"));
    }
    if record_every == 0 {
        return Err(Error::input("record_every must be at least 1"));
    }
    let span = t_end - t0;
    let estimate = (span / h).ceil() as usize / record_every + 2;
    let mut times = Vec::with_capacity(estimate);
    let mut states = Vec::with_capacity(estimate);
    times.push(t0);
    states.push(x0.clone());
    let mut t = t0;
    let mut x = x0.clone();
    let mut m: u64 = 0;
    while t < t_end {
        let grid_next = t0 + (m + 1) as f64 * h;
        let (next, last) = if grid_next >= t_end - GRID_EPS * h { (t_end, true) } else { (grid_next, false) };
        let x_next = step(method, &f, t, &x, next - t);
        if x_next.iter().any(|v| !v.is_finite()) {
            if times.last() != Some(&t) {
                times.push(t);
                states.push(x.clone());
            }
            let partial = Trajectory { times, states, step: h, method, meta };
            return Err(Error::Divergence { t: next, partial: Box::new(partial) });
        }
        m += 1;
        t = next;
        x = x_next;
        if last || m as usize % record_every == 0 {
            times.push(t);
            states.push(x.clone());
        }
        if last {
            break;
        }
    }
    Ok(Trajectory { times, states, step: h, method, meta })
}

/// Fixed-step integration of a single vector field.
pub fn integrate(rhs: &VectorField, t0: f64, x0: &Vector, h: f64, t_end: f64, method: Method) -> Result<Trajectory> {
    integrate_thinned(rhs, t0, x0, h, t_end, method, 1)
}

/// As [`integrate`], keeping only every `record_every`-th step.
pub fn integrate_thinned(
    rhs: &VectorField,
    t0: f64,
    x0: &Vector,
    h: f64,
    t_end: f64,
    method: Method,
    record_every: usize,
) -> Result<Trajectory> {
    rhs.check_dim(x0)?;
    let meta = TrajectoryMeta { label: rhs.label().to_string(), omega: None, t0, x0: x0.iter().copied().collect() };
    integrate_closure(|t, x| rhs.value(t, x), t0, x0, h, t_end, method, record_every, meta)
}

/// Integrates the dithered system at frequency `omega`.
pub fn integrate_dithered(
    system: &DitheredSystem,
    omega: f64,
    t0: f64,
    x0: &Vector,
    h: f64,
    t_end: f64,
    method: Method,
) -> Result<Trajectory> {
    integrate_dithered_thinned(system, omega, t0, x0, h, t_end, method, 1)
}

#[allow(clippy::too_many_arguments)]
pub fn integrate_dithered_thinned(
    system: &DitheredSystem,
    omega: f64,
    t0: f64,
    x0: &Vector,
    h: f64,
    t_end: f64,
    method: Method,
    record_every: usize,
) -> Result<Trajectory> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::input(format!("dither frequency must be positive, got {omega}")));
    }
    system.drift().check_dim(x0)?;
    let period = std::f64::consts::TAU / omega;
    if h > period / 20.0 {
        log::warn!("step {h} resolves fewer than 20 samples per dither period {period:.3e}");
    }
    let meta =
        TrajectoryMeta { label: system.label().to_string(), omega: Some(omega), t0, x0: x0.iter().copied().collect() };
    integrate_closure(|t, x| system.rhs(omega, t, x), t0, x0, h, t_end, method, record_every, meta)
}

/// `sup_t |a(t) - b(t)|` over `a`'s sample times, with `b` interpolated.
pub fn sup_deviation(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    let tol = |t: f64| 1e-9 * (1.0 + t.abs());
    if (a.t0() - b.t0()).abs() > tol(a.t0()) || (a.t_end() - b.t_end()).abs() > tol(a.t_end()) {
        return Err(Error::input(format!(
            "horizons differ: [{}, {}] vs [{}, {}]",
            a.t0(),
            a.t_end(),
            b.t0(),
            b.t_end()
        )));
    }
    if a.dim() != b.dim() {
        return Err(Error::input("trajectories have different dimensions"));
    }
    Ok(a.times.iter().zip(&a.states).map(|(&t, x)| (x - b.state_at(t)).norm()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn one() -> Vector {
        Vector::from_element(1, 1.0)
    }

    #[test]
    fn single_euler_step() {
        let f = VectorField::scalar_linear(-1.0);
        let tr = integrate(&f, 0.0, &one(), 0.1, 0.1, Method::Euler).unwrap();
        assert_eq!(tr.len(), 2);
        assert_abs_diff_eq!(tr.last()[0], 0.9, epsilon = 1e-15);
    }

    #[test]
    fn final_step_is_shortened() {
        let f = VectorField::scalar_linear(0.0);
        let tr = integrate(&f, 0.0, &one(), 0.3, 1.0, Method::Euler).unwrap();
        assert_eq!(tr.times(), &[0.0, 0.3, 0.6, 0.8999999999999999, 1.0][..]);
        assert!(tr.states().iter().all(|x| x[0] == 1.0));
    }

    #[test]
    fn zero_horizon_gives_one_sample() {
        let f = VectorField::scalar_linear(-1.0);
        let tr = integrate(&f, 2.0, &one(), 0.1, 2.0, Method::Rk4).unwrap();
        assert_eq!(tr.len(), 1);
        assert!(integrate(&f, 2.0, &one(), 0.1, 1.0, Method::Rk4).is_err());
    }

    #[test]
    fn rk4_beats_euler() {
        let f = VectorField::scalar_linear(-2.5);
        let exact = (-2.5f64).exp();
        let e = integrate(&f, 0.0, &one(), 0.01, 1.0, Method::Euler).unwrap().last()[0];
        let r = integrate(&f, 0.0, &one(), 0.01, 1.0, Method::Rk4).unwrap().last()[0];
        assert!((r - exact).abs() < (e - exact).abs());
        assert!((r - exact).abs() < 1e-9);
    }

    #[test]
    fn divergence_carries_partial() {
        let f = VectorField::new(1, "blowup", |_, x: &Vector| x.map(|v| v * v * 1e300));
        match integrate(&f, 0.0, &Vector::from_element(1, 10.0), 0.1, 1.0, Method::Euler) {
            Err(Error::Divergence { partial, .. }) => {
                assert!(partial.states().iter().all(|x| x[0].is_finite()));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn thinning_keeps_endpoints() {
        let f = VectorField::scalar_linear(-1.0);
        let full = integrate(&f, 0.0, &one(), 0.01, 1.0, Method::Rk4).unwrap();
        let thin = integrate_thinned(&f, 0.0, &one(), 0.01, 1.0, Method::Rk4, 10).unwrap();
        assert_eq!(thin.len(), 11);
        assert_eq!(thin.last(), full.last());
    }

    #[test]
    fn interpolation_and_deviation() {
        let f = VectorField::scalar_linear(0.0);
        let a = integrate(&f, 0.0, &one(), 0.5, 1.0, Method::Euler).unwrap();
        let b = integrate(&f, 0.0, &Vector::from_element(1, 3.0), 0.25, 1.0, Method::Euler).unwrap();
        assert_abs_diff_eq!(sup_deviation(&a, &b).unwrap(), 2.0, epsilon = 1e-15);
        assert_eq!(sup_deviation(&a, &a).unwrap(), 0.0);
        let g = VectorField::constant(one());
        let ramp = integrate(&g, 0.0, &one(), 0.5, 1.0, Method::Euler).unwrap();
        assert_abs_diff_eq!(ramp.state_at(0.75)[0], 1.75, epsilon = 1e-15);
        let short = integrate(&f, 0.0, &one(), 0.5, 0.5, Method::Euler).unwrap();
        assert!(sup_deviation(&a, &short).is_err());
    }

    #[test]
    fn csv_round_trips() {
        let f = VectorField::scalar_linear(-1.0 / 3.0);
        let tr = integrate(&f, 0.0, &one(), 0.1, 0.3, Method::Rk4).unwrap();
        let csv = tr.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,x1"));
        for (line, x) in lines.zip(tr.states()) {
            let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert_eq!(v, x[0]);
        }
    }
}
