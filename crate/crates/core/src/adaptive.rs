//! Dither-frequency adaptation by a sampled quadratic integrator.
//!
//! The frequency state follows `w' = |x|^2`, but the dither only sees its
//! value at epoch starts: on `[t0 + k t_f, t0 + (k + 1) t_f]` the system runs
//! at the frozen frequency `w_k` with phase `w_k t` in absolute time. Every
//! channel must have power one half.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::dynamics::{DitheredSystem, Vector};
use crate::error::{Error, Result};
use crate::sim::{fmt_float, integrate_closure, Method, Trajectory, TrajectoryMeta};

pub const DEFAULT_X_TOL: f64 = 1e-3;
pub const DEFAULT_W_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_EPOCHS: usize = 200;

const POWER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    WConverged,
    XConverged,
    MaxEpochs,
    Divergence,
}

#[derive(Debug, Clone, Copy)]
pub struct AdaptiveSettings {
    pub w0: f64,
    /// Epoch length.
    pub t_f: f64,
    pub h: f64,
    pub method: Method,
    pub max_epochs: usize,
    /// Stop once `|x_k| <= x_tol |x0|`.
    pub x_tol: f64,
    /// Stop once `|w_{k+1} - w_k| <= w_tol`.
    pub w_tol: f64,
}

impl Default for AdaptiveSettings {
    fn default() -> Self {
        Self {
            w0: 1.0,
            t_f: 1.0,
            h: 1e-4,
            method: Method::Euler,
            max_epochs: DEFAULT_MAX_EPOCHS,
            x_tol: DEFAULT_X_TOL,
            w_tol: DEFAULT_W_TOL,
        }
    }
}

/// One epoch at frozen frequency `w`.
#[derive(Debug, Clone)]
pub struct Epoch {
    pub k: usize,
    pub t_start: f64,
    pub w: f64,
    /// State at the epoch start.
    pub x: Vector,
    pub trajectory: Trajectory,
    /// Frequency integrator at each sample of `trajectory`.
    pub w_samples: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AdaptiveRun {
    pub x0: Vector,
    pub t0: f64,
    pub settings: AdaptiveSettings,
    pub epochs: Vec<Epoch>,
    /// Frequency at each epoch boundary, `w_trace[k] = w_k`; one longer than
    /// `epochs` unless the run diverged.
    pub w_trace: Vec<f64>,
    pub x_final: Vector,
    pub stop_reason: StopReason,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochSummary {
    pub k: usize,
    pub t: f64,
    pub w: f64,
    pub x_norm: f64,
}

impl AdaptiveRun {
    /// `{k, t_k, w_k, |x_k|}` at each epoch boundary reached.
    pub fn summary(&self) -> Vec<EpochSummary> {
        let mut out: Vec<EpochSummary> =
            self.epochs.iter().map(|e| EpochSummary { k: e.k, t: e.t_start, w: e.w, x_norm: e.x.norm() }).collect();
        if self.w_trace.len() > self.epochs.len() {
            let k = self.epochs.len();
            out.push(EpochSummary {
                k,
                t: self.t0 + k as f64 * self.settings.t_f,
                w: self.w_trace[k],
                x_norm: self.x_final.norm(),
            });
        }
        out
    }

    pub fn w_final(&self) -> f64 {
        *self.w_trace.last().expect("frequency trace starts with w0")
    }

    /// `(t, x..., w)` rows over all epochs, boundary samples written once.
    pub fn to_csv_string(&self) -> String {
        let dim = self.x0.len();
        let mut s = String::from("t");
        for i in 1..=dim {
            let _ = write!(s, ",x{i}");
        }
        s.push_str(",w\n");
        let mut row = |t: f64, x: &Vector, w: f64| {
            s.push_str(&fmt_float(t));
            for v in x.iter() {
                s.push(',');
                s.push_str(&fmt_float(*v));
            }
            s.push(',');
            s.push_str(&fmt_float(w));
            s.push('\n');
        };
        if self.epochs.is_empty() {
            row(self.t0, &self.x0, self.w_trace[0]);
        }
        for (n, e) in self.epochs.iter().enumerate() {
            let skip = usize::from(n > 0);
            for ((t, x), w) in e.trajectory.times().iter().zip(e.trajectory.states()).zip(&e.w_samples).skip(skip) {
                row(*t, x, *w);
            }
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Runs the adapted system from `(t0, x0)` until one of the stopping rules
/// fires. Divergence ends the run with the epochs completed so far.
pub fn run_adaptive(system: &DitheredSystem, t0: f64, x0: &Vector, settings: AdaptiveSettings) -> Result<AdaptiveRun> {
    if let Some(p) = system.powers().into_iter().find(|p| (p - 0.5).abs() > POWER_TOL) {
        return Err(Error::AssumptionViolation(format!(
            "frequency adaptation needs every channel power to be 1/2, found {p}"
        )));
    }
    let s = settings;
    if !(s.w0 > 0.0 && s.w0.is_finite()) {
        return Err(Error::input(format!("initial frequency must be positive, got {}", s.w0)));
    }
    if !(s.t_f > 0.0 && s.t_f.is_finite()) {
        return Err(Error::input(format!("epoch length must be positive, got {}", s.t_f)));
    }
    if !(s.x_tol >= 0.0 && s.w_tol >= 0.0) {
        return Err(Error::input("tolerances must be non-negative"));
    }
    system.drift().check_dim(x0)?;
    let dim = x0.len();
    let x0_norm = x0.norm();
    let mut run = AdaptiveRun {
        x0: x0.clone(),
        t0,
        settings: s,
        epochs: Vec::new(),
        w_trace: vec![s.w0],
        x_final: x0.clone(),
        stop_reason: StopReason::MaxEpochs,
        converged: false,
    };
    if x0_norm <= s.x_tol * x0_norm {
        run.stop_reason = StopReason::XConverged;
        run.converged = true;
        return Ok(run);
    }
    let mut x = x0.clone();
    let mut w = s.w0;
    for k in 0..s.max_epochs {
        let t_start = t0 + k as f64 * s.t_f;
        let t_end = t0 + (k + 1) as f64 * s.t_f;
        let mut y0 = Vector::zeros(dim + 1);
        y0.rows_mut(0, dim).copy_from(&x);
        y0[dim] = w;
        let meta = TrajectoryMeta {
            label: format!("{} (adaptive, epoch {k})", system.label()),
            omega: Some(w),
            t0: t_start,
            x0: x.iter().copied().collect(),
        };
        let wk = w;
        let rhs = |t: f64, y: &Vector| {
            let xs = y.rows(0, dim).into_owned();
            let mut dy = Vector::zeros(dim + 1);
            dy.rows_mut(0, dim).copy_from(&system.rhs(wk, t, &xs));
            dy[dim] = xs.norm_squared();
            dy
        };
        let aug = match integrate_closure(rhs, t_start, &y0, s.h, t_end, s.method, 1, meta.clone()) {
            Ok(tr) => tr,
            Err(Error::Divergence { .. }) => {
                run.stop_reason = StopReason::Divergence;
                run.x_final = x;
                return Ok(run);
            }
            Err(e) => return Err(e),
        };
        let states: Vec<Vector> = aug.states().iter().map(|y| y.rows(0, dim).into_owned()).collect();
        let w_samples: Vec<f64> = aug.states().iter().map(|y| y[dim]).collect();
        let trajectory = Trajectory::from_parts(aug.times().to_vec(), states, s.h, s.method, meta);
        let w_next = *w_samples.last().expect("epoch has samples");
        let x_next = trajectory.last().clone();
        if !w_next.is_finite() {
            run.stop_reason = StopReason::Divergence;
            run.x_final = x;
            return Ok(run);
        }
        run.epochs.push(Epoch { k, t_start, w, x: x.clone(), trajectory, w_samples });
        run.w_trace.push(w_next);
        let increment = w_next - w;
        x = x_next;
        w = w_next;
        run.x_final = x.clone();
        if x.norm() <= s.x_tol * x0_norm {
            run.stop_reason = StopReason::XConverged;
            run.converged = true;
            return Ok(run);
        }
        if increment <= s.w_tol {
            run.stop_reason = StopReason::WConverged;
            run.converged = true;
            return Ok(run);
        }
    }
    run.stop_reason = StopReason::MaxEpochs;
    Ok(run)
}

#[derive(Debug, Clone, Serialize)]
pub struct AdaptiveReport {
    pub pass: bool,
    pub stop_reason: StopReason,
    pub k_final: usize,
    pub w_final: f64,
    pub x_final_norm: f64,
    pub x0_norm: f64,
    /// `w_k - w_{k-1}` of the last completed epoch, zero if none ran.
    pub last_increment: f64,
    pub monotone: bool,
    /// `|x_{k+1}| / |x_k|` of the last completed epoch; a value below one
    /// means the epoch length contracted the state.
    pub last_contraction: Option<f64>,
}

/// Passes when the final state is within `x_tol |x0|`, the last frequency
/// increment is at most `w_tol` and the frequency never decreased.
pub fn check_adaptive_convergence(run: &AdaptiveRun, x_tol: f64, w_tol: f64) -> AdaptiveReport {
    let tr = &run.w_trace;
    let last_increment = if tr.len() >= 2 { tr[tr.len() - 1] - tr[tr.len() - 2] } else { 0.0 };
    let monotone = tr.windows(2).all(|p| p[1] >= p[0]);
    let x0_norm = run.x0.norm();
    let x_final_norm = run.x_final.norm();
    let last_contraction = run.epochs.last().and_then(|e| {
        let start = e.x.norm();
        (start > 0.0).then(|| e.trajectory.last().norm() / start)
    });
    let finished = run.stop_reason != StopReason::Divergence;
    AdaptiveReport {
        pass: finished && monotone && x_final_norm <= x_tol * x0_norm && last_increment <= w_tol,
        stop_reason: run.stop_reason,
        k_final: run.epochs.len(),
        w_final: run.w_final(),
        x_final_norm,
        x0_norm,
        last_increment,
        monotone,
        last_contraction,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dither::DitherSignal;
    use crate::dynamics::{Channel, VectorField};
    use crate::sim::integrate_dithered;

    fn scalar(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    fn unstable() -> DitheredSystem {
        DitheredSystem::new(
            "unstable",
            VectorField::scalar_linear(1.0),
            vec![Channel::new(VectorField::zero(1), 0.5, DitherSignal::sine())],
        )
        .unwrap()
    }

    #[test]
    fn zero_initial_state_converges_immediately() {
        let run = run_adaptive(&unstable(), 0.0, &scalar(0.0), AdaptiveSettings::default()).unwrap();
        assert_eq!(run.stop_reason, StopReason::XConverged);
        assert!(run.epochs.is_empty());
        assert_eq!(run.w_final(), 1.0);
        let rep = check_adaptive_convergence(&run, DEFAULT_X_TOL, DEFAULT_W_TOL);
        assert!(rep.pass);
        assert_eq!(rep.k_final, 0);
        assert_eq!(run.to_csv_string().lines().count(), 2);
    }

    #[test]
    fn unstable_drift_hits_max_epochs() {
        let settings = AdaptiveSettings { max_epochs: 4, t_f: 0.5, h: 1e-3, ..Default::default() };
        let run = run_adaptive(&unstable(), 0.0, &scalar(1.0), settings).unwrap();
        assert_eq!(run.stop_reason, StopReason::MaxEpochs);
        assert_eq!(run.epochs.len(), 4);
        assert!(run.w_trace.windows(2).all(|p| p[1] > p[0]));
        assert!(!check_adaptive_convergence(&run, DEFAULT_X_TOL, DEFAULT_W_TOL).pass);
    }

    #[test]
    fn euler_increment_is_sampled_quadratic_sum() {
        let settings = AdaptiveSettings { max_epochs: 1, t_f: 0.01, h: 1e-3, ..Default::default() };
        let run = run_adaptive(&unstable(), 0.0, &scalar(1.0), settings).unwrap();
        let e = &run.epochs[0];
        let sum: f64 = e.trajectory.states()[..e.trajectory.len() - 1].iter().map(|x| x[0] * x[0] * 1e-3).sum();
        assert!((run.w_final() - 1.0 - sum).abs() < 1e-14);
    }

    #[test]
    fn epoch_replay_is_bit_exact() {
        let sys = crate::scenarios::example_system(2.0, -3.0, 0.5).unwrap();
        for method in [Method::Euler, Method::Rk4] {
            let settings = AdaptiveSettings { max_epochs: 3, h: 1e-3, method, ..Default::default() };
            let run = run_adaptive(&sys, 0.0, &scalar(1.0), settings).unwrap();
            for e in &run.epochs {
                let replay =
                    integrate_dithered(&sys, e.w, e.t_start, &e.x, settings.h, e.t_start + 1.0, method).unwrap();
                assert_eq!(replay.times(), e.trajectory.times());
                assert_eq!(replay.states(), e.trajectory.states());
            }
        }
    }

    #[test]
    fn rejects_non_half_powers() {
        let sys = DitheredSystem::new(
            "p",
            VectorField::zero(1),
            vec![Channel::new(VectorField::scalar_linear(1.0), 0.25, DitherSignal::sine())],
        )
        .unwrap();
        assert!(matches!(
            run_adaptive(&sys, 0.0, &scalar(1.0), AdaptiveSettings::default()),
            Err(Error::AssumptionViolation(_))
        ));
    }
}
