use std::sync::Arc;

use crate::dither::DitherSignal;
use crate::dynamics::field::{Vector, VectorField};
use crate::error::{Error, Result};

/// One input channel: a vector field driven by a dither scaled by `omega^power`.
#[derive(Debug, Clone)]
pub struct Channel {
    pub field: VectorField,
    pub power: f64,
    pub dither: DitherSignal,
}

impl Channel {
    pub fn new(field: VectorField, power: f64, dither: DitherSignal) -> Self {
        Self { field, power, dither }
    }
}

/// `x' = f_0(t, x) + sum_i omega^{p_i} f_i(t, x) u_i(omega t)`.
#[derive(Debug, Clone)]
pub struct DitheredSystem {
    dim: usize,
    drift: VectorField,
    channels: Vec<Channel>,
    label: String,
    lipschitz: Option<f64>,
}

impl DitheredSystem {
    pub fn new(label: impl Into<String>, drift: VectorField, channels: Vec<Channel>) -> Result<Self> {
        let dim = drift.dim();
        if channels.is_empty() {
            return Err(Error::input("a dithered system needs at least one channel"));
        }
        for (i, c) in channels.iter().enumerate() {
            if c.field.dim() != dim {
                return Err(Error::input(format!(
                    "channel {} has dimension {} but the drift has dimension {dim}",
                    i + 1,
                    c.field.dim()
                )));
            }
            if !(c.power > 0.0 && c.power < 1.0) {
                return Err(Error::input(format!("channel {} power {} is outside (0, 1)", i + 1, c.power)));
            }
        }
        Ok(Self { dim, drift, channels, label: label.into(), lipschitz: None })
    }

    /// Attaches a global Lipschitz constant, used by certificates and audits.
    pub fn with_lipschitz(mut self, l: f64) -> Result<Self> {
        if !(l >= 0.0 && l.is_finite()) {
            return Err(Error::input(format!("Lipschitz constant must be finite and non-negative, got {l}")));
        }
        self.lipschitz = Some(l);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn drift(&self) -> &VectorField {
        &self.drift
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    /// Number of channels `l`.
    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn powers(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.power).collect()
    }

    /// Field by index, with `0` the drift and `1..=l` the channels.
    pub fn field(&self, index: usize) -> &VectorField {
        if index == 0 {
            &self.drift
        } else {
            &self.channels[index - 1].field
        }
    }

    /// `v_i(t) = omega^{p_i} u_i(omega t)`, with `v_0 = 1`.
    pub fn dither_weight(&self, index: usize, omega: f64, t: f64) -> f64 {
        if index == 0 {
            1.0
        } else {
            let c = &self.channels[index - 1];
            omega.powf(c.power) * c.dither.value(omega * t)
        }
    }

    /// Right-hand side at a fixed frequency.
    pub fn rhs(&self, omega: f64, t: f64, x: &Vector) -> Vector {
        let mut out = self.drift.value(t, x);
        for c in &self.channels {
            let w = omega.powf(c.power) * c.dither.value(omega * t);
            if w != 0.0 {
                out += c.field.value(t, x) * w;
            }
        }
        out
    }

    /// The right-hand side at frequency `omega` packaged as a time-varying field.
    pub fn rhs_field(&self, omega: f64) -> VectorField {
        let sys = Arc::new(self.clone());
        VectorField::new(self.dim, format!("{} @ omega={omega}", self.label), move |t, x| sys.rhs(omega, t, x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_powers_and_dimensions() {
        let ch = |p| Channel::new(VectorField::scalar_linear(1.0), p, DitherSignal::sine());
        let drift = VectorField::scalar_linear(-1.0);
        assert!(DitheredSystem::new("s", drift.clone(), vec![ch(1.0)]).is_err());
        assert!(DitheredSystem::new("s", drift.clone(), vec![ch(0.0)]).is_err());
        assert!(DitheredSystem::new("s", drift.clone(), vec![]).is_err());
        let wide = Channel::new(VectorField::zero(2), 0.5, DitherSignal::sine());
        assert!(DitheredSystem::new("s", drift.clone(), vec![wide]).is_err());
        assert!(DitheredSystem::new("s", drift, vec![ch(0.5)]).is_ok());
    }

    #[test]
    fn rhs_adds_weighted_channels() {
        let sys = DitheredSystem::new(
            "s",
            VectorField::scalar_linear(2.0),
            vec![Channel::new(VectorField::scalar_linear(1.0), 0.5, DitherSignal::cosine())],
        )
        .unwrap();
        let x = Vector::from_element(1, 1.5);
        let y = sys.rhs(4.0, 0.0, &x)[0];
        assert!((y - (3.0 + 2.0 * 1.5)).abs() < 1e-14);
        assert_eq!(sys.rhs_field(4.0).value(0.0, &x)[0], y);
    }
}
