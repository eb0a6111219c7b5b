//! The built-in scalar example `x' = a x + sqrt(omega) sqrt(k) |x| b
//! sin(omega t + ln(x^2/2))` written as a two-channel dithered system, and the
//! closed-form Lipschitz constants of its fields and Lie derivatives.

use serde::Serialize;

use crate::dither::DitherSignal;
use crate::dynamics::{Channel, DitheredSystem, Matrix, Vector, VectorField};
use crate::error::{Error, Result};

/// Which log-oscillation a channel field carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogShape {
    /// `|x| sin(ln(x^2 / 2))`
    Sine,
    /// `|x| cos(ln(x^2 / 2))`
    Cosine,
}

impl LogShape {
    /// `(g, g', g'')` at phase `phi`.
    fn derivatives(self, phi: f64) -> (f64, f64, f64) {
        let (s, c) = phi.sin_cos();
        match self {
            LogShape::Sine => (s, c, -s),
            LogShape::Cosine => (c, -s, -c),
        }
    }
}

/// `x -> gain * |x| g(ln(x^2 / 2))`, exactly zero at the origin.
///
/// The analytic Jacobian and second derivative exist away from zero; at zero
/// they are left to the flagged finite-difference path.
pub fn log_oscillator_field(gain: f64, shape: LogShape) -> VectorField {
    let label = match shape {
        LogShape::Sine => format!("{gain}*|x|*sin(ln(x^2/2))"),
        LogShape::Cosine => format!("{gain}*|x|*cos(ln(x^2/2))"),
    };
    VectorField::new(1, label, move |_, x: &Vector| {
        let v = x[0];
        if v == 0.0 {
            return Vector::zeros(1);
        }
        let (g, _, _) = shape.derivatives((0.5 * v * v).ln());
        Vector::from_element(1, gain * v.abs() * g)
    })
    .with_jacobian(move |_, x| {
        let v = x[0];
        if v == 0.0 {
            return None;
        }
        let (g, dg, _) = shape.derivatives((0.5 * v * v).ln());
        Some(Matrix::from_element(1, 1, gain * v.signum() * (g + 2.0 * dg)))
    })
    .with_second_derivative(move |_, x, a, b| {
        let v = x[0];
        if v == 0.0 {
            return None;
        }
        let (_, dg, d2g) = shape.derivatives((0.5 * v * v).ln());
        let curvature = gain * v.signum() * (2.0 / v) * (dg + 2.0 * d2g);
        Some(Vector::from_element(1, curvature * a[0] * b[0]))
    })
    .autonomous()
}

fn check_parameters(b: f64, k: f64) -> Result<()> {
    if b == 0.0 || !b.is_finite() {
        return Err(Error::input("example gain b must be finite and nonzero"));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::input("example gain k must be positive"));
    }
    Ok(())
}

fn example_fields(a: f64, b: f64, k: f64) -> Result<(VectorField, VectorField, VectorField)> {
    check_parameters(b, k)?;
    if !a.is_finite() {
        return Err(Error::input("example drift a must be finite"));
    }
    let gain = b * k.sqrt();
    Ok((
        VectorField::scalar_linear(a).labeled(format!("{a}*x")),
        log_oscillator_field(gain, LogShape::Sine),
        log_oscillator_field(gain, LogShape::Cosine),
    ))
}

/// The example system with the sine-log field driven by `cos(omega t)` and the
/// cosine-log field by `sin(omega t)`, both at power one half.
///
/// This pairing is the one whose averaged dynamics are `x' = (a - b^2 k) x`.
pub fn example_system(a: f64, b: f64, k: f64) -> Result<DitheredSystem> {
    let (f0, f1, f2) = example_fields(a, b, k)?;
    let table = lipschitz_table(a, b, k)?;
    DitheredSystem::new(
        format!("paper-example(a={a},b={b},k={k})"),
        f0,
        vec![Channel::new(f1, 0.5, DitherSignal::cosine()), Channel::new(f2, 0.5, DitherSignal::sine())],
    )?
    .with_lipschitz(table.l_max)
}

/// The same fields with the opposite dither assignment (sine-log field on
/// `sin(omega t)`), whose averaged dynamics are `x' = (a + b^2 k) x`.
pub fn example_system_literal(a: f64, b: f64, k: f64) -> Result<DitheredSystem> {
    let (f0, f1, f2) = example_fields(a, b, k)?;
    let table = lipschitz_table(a, b, k)?;
    DitheredSystem::new(
        format!("paper-example-literal(a={a},b={b},k={k})"),
        f0,
        vec![Channel::new(f1, 0.5, DitherSignal::sine()), Channel::new(f2, 0.5, DitherSignal::cosine())],
    )?
    .with_lipschitz(table.l_max)
}

/// Global Lipschitz constants of `f_i`, `L_{f_j} f_i` and `L_{f_m} L_{f_j} f_i`
/// for the example, indices `0..=2`.
#[derive(Debug, Clone, Serialize)]
pub struct LipschitzTable {
    pub first: [f64; 3],
    pub second: [[f64; 3]; 3],
    pub third: [[[f64; 3]; 3]; 3],
    pub l_max: f64,
    /// Index tuple attaining `l_max`.
    pub argmax: Vec<usize>,
}

impl LipschitzTable {
    pub fn l0(&self) -> f64 {
        self.first[0]
    }

    pub fn l1(&self) -> f64 {
        self.first[1]
    }

    pub fn l2(&self) -> f64 {
        self.first[2]
    }
}

pub fn lipschitz_table(a: f64, b: f64, k: f64) -> Result<LipschitzTable> {
    check_parameters(b, k)?;
    let c = b.abs() * k.sqrt();
    let first = [a.abs(), 3.0 * c, 3.0 * c];
    let mut second = [[0.0; 3]; 3];
    let mut third = [[[0.0; 3]; 3]; 3];
    let mut l_max = 0.0;
    let mut argmax = vec![0];
    for (i, &li) in first.iter().enumerate() {
        if li > l_max {
            l_max = li;
            argmax = vec![i];
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            let v = 6.0 * c * first[j] + first[i] * first[j];
            second[i][j] = v;
            if v > l_max {
                l_max = v;
                argmax = vec![i, j];
            }
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            for m in 0..3 {
                let v = 16.0 * c * first[j] * first[m] + 6.0 * c * first[i] * first[m] + first[i] * first[j] * first[m];
                third[i][j][m] = v;
                if v > l_max {
                    l_max = v;
                    argmax = vec![i, j, m];
                }
            }
        }
    }
    Ok(LipschitzTable { first, second, third, l_max, argmax })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LbsCoefficient {
    /// `a - b^2 k`
    pub coefficient: f64,
    /// Strictly negative coefficient, i.e. `k > a / b^2`.
    pub stable: bool,
}

pub fn example_lbs_coefficient(a: f64, b: f64, k: f64) -> LbsCoefficient {
    let coefficient = a - b * b * k;
    LbsCoefficient { coefficient, stable: k > a / (b * b) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn at(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    #[test]
    fn field_values() {
        let sys = example_system(2.0, -3.0, 0.5).unwrap();
        let f1 = sys.field(1);
        let oracle = -3.0 * 0.5f64.sqrt() * 0.5f64.ln().sin();
        assert_abs_diff_eq!(f1.value(0.0, &at(1.0))[0], oracle, epsilon = 1e-15);
        assert_abs_diff_eq!(oracle, 1.355_441_55, epsilon = 1e-8);
        assert_eq!(f1.value(0.0, &at(0.0))[0], 0.0);
        assert_eq!(sys.field(2).value(0.0, &at(0.0))[0], 0.0);
        assert_eq!(f1.value(0.0, &at(-1.7))[0], f1.value(0.0, &at(1.7))[0]);
    }

    #[test]
    fn analytic_jacobian_matches_finite_difference() {
        for shape in [LogShape::Sine, LogShape::Cosine] {
            let f = log_oscillator_field(-2.1, shape);
            for x in [-3.0, -0.4, 0.2, 1.0, 5.5] {
                let a = f.jacobian(0.0, &at(x));
                let d = f.fd_jacobian(0.0, &at(x));
                assert!(a.analytic);
                assert_abs_diff_eq!(a.matrix[(0, 0)], d.matrix[(0, 0)], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn lipschitz_constants() {
        let t = lipschitz_table(2.0, -3.0, 0.5).unwrap();
        assert_eq!(t.l0(), 2.0);
        assert_abs_diff_eq!(t.l1(), 9.0 * 0.5f64.sqrt(), epsilon = 1e-12);
        assert_eq!(t.l1(), t.l2());
        assert!(t.l_max <= 2838.0);
        assert_eq!(t.argmax.len(), 3);
        assert!(lipschitz_table(2.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn lbs_coefficient_and_stability() {
        let c = example_lbs_coefficient(2.0, -3.0, 0.5);
        assert_eq!(c.coefficient, -2.5);
        assert!(c.stable);
        let marginal = example_lbs_coefficient(2.0, -3.0, 2.0 / 9.0);
        assert!(marginal.coefficient.abs() < 1e-15);
        assert!(!marginal.stable);
        assert!(!example_lbs_coefficient(2.0, 1.0, 2.0).stable);
        assert_eq!(example_lbs_coefficient(0.0, 1.0, 1.0).coefficient, -1.0);
    }

    #[test]
    fn rejects_zero_gain() {
        assert!(example_system(2.0, 0.0, 0.5).is_err());
        assert!(example_system(2.0, -3.0, 0.0).is_err());
    }
}
