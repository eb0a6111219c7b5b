use serde::Serialize;

use crate::dynamics::field::{lie_derivative_probe, second_lie_derivative, time_partial_lie_derivative, Vector};
use crate::dynamics::system::DitheredSystem;
use crate::error::{Error, Result};

/// The quantities that must vanish at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VanishingCondition {
    /// `f_i(t, 0)`
    Field,
    /// `L_{f_j} f_i (t, 0)`
    LieDerivative,
    /// `L_{f_m} L_{f_j} f_i (t, 0)`
    SecondLieDerivative,
    /// `d/dt f_i (t, 0)`
    TimePartial,
    /// `d/dt L_{f_j} f_i (t, 0)`
    TimePartialLieDerivative,
}

#[derive(Debug, Clone, Serialize)]
pub struct VanishingEntry {
    pub condition: VanishingCondition,
    /// Field indices, `0` being the drift; `[i]`, `[i, j]` or `[i, j, m]`.
    pub indices: Vec<usize>,
    pub t: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VanishingReport {
    pub tol: f64,
    pub entries: Vec<VanishingEntry>,
    pub max_residual: f64,
    pub pass: bool,
}

impl VanishingReport {
    pub fn failures(&self) -> impl Iterator<Item = &VanishingEntry> {
        self.entries.iter().filter(move |e| e.residual > self.tol)
    }
}

/// Evaluates every vanishing condition at `x = 0` for each requested time.
///
/// An evaluation that fails numerically is recorded with an infinite residual.
pub fn check_vanishing_at_origin(system: &DitheredSystem, t_samples: &[f64], tol: f64) -> Result<VanishingReport> {
    if !(tol > 0.0) {
        return Err(Error::input("vanishing check tolerance must be positive"));
    }
    let n = system.dim();
    let l = system.channel_count();
    let origin = Vector::zeros(n);
    let norm = |r: Result<Vector>| r.map(|v| v.norm()).unwrap_or(f64::INFINITY);
    let mut entries = Vec::new();
    for &t in t_samples {
        for i in 0..=l {
            let fi = system.field(i);
            entries.push(VanishingEntry {
                condition: VanishingCondition::Field,
                indices: vec![i],
                t,
                residual: norm(fi.eval(t, &origin)),
            });
            entries.push(VanishingEntry {
                condition: VanishingCondition::TimePartial,
                indices: vec![i],
                t,
                residual: fi.time_derivative(t, &origin).norm(),
            });
            for j in 0..=l {
                let fj = system.field(j);
                entries.push(VanishingEntry {
                    condition: VanishingCondition::LieDerivative,
                    indices: vec![i, j],
                    t,
                    residual: norm(lie_derivative_probe(fi, fj, t, &origin).map(|p| p.value)),
                });
                entries.push(VanishingEntry {
                    condition: VanishingCondition::TimePartialLieDerivative,
                    indices: vec![i, j],
                    t,
                    residual: norm(time_partial_lie_derivative(fi, fj, t, &origin).map(|p| p.value)),
                });
                for m in 0..=l {
                    let fm = system.field(m);
                    entries.push(VanishingEntry {
                        condition: VanishingCondition::SecondLieDerivative,
                        indices: vec![i, j, m],
                        t,
                        residual: norm(second_lie_derivative(fi, fj, fm, t, &origin).map(|p| p.value)),
                    });
                }
            }
        }
    }
    let max_residual = entries.iter().map(|e| e.residual).fold(0.0, f64::max);
    Ok(VanishingReport { tol, pass: max_residual <= tol, max_residual, entries })
}
