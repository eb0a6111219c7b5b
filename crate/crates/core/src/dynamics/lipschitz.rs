use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::field::{Vector, VectorField};
use crate::error::{Error, Result};

/// Axis-aligned sampling region in `(t, x)`.
#[derive(Debug, Clone)]
pub struct SampleBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub t_range: (f64, f64),
}

impl SampleBox {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self { lower: vec![lo; dim], upper: vec![hi; dim], t_range: (0.0, 1.0) }
    }

    pub fn with_times(mut self, t0: f64, t1: f64) -> Self {
        self.t_range = (t0, t1);
        self
    }
}

/// Pairs closer than this are skipped to avoid dividing rounding noise.
const MIN_SEPARATION: f64 = 1e-12;

/// Largest sampled ratio `|f(t,x) - f(t,y)| / |x - y|`.
///
/// Every unordered pair of the `x_samples` points is compared at each of the
/// `t_samples` times, so the cost is quadratic in `x_samples`.
pub fn estimate_lipschitz(
    field: &VectorField,
    region: &SampleBox,
    t_samples: usize,
    x_samples: usize,
    seed: u64,
) -> Result<f64> {
    let dim = field.dim();
    if region.lower.len() != dim || region.upper.len() != dim {
        return Err(Error::input("sample box dimension does not match the field"));
    }
    if t_samples < 2 || x_samples < 2 {
        return Err(Error::input("Lipschitz sampling needs at least two times and two points"));
    }
    if region.lower.iter().zip(&region.upper).any(|(lo, hi)| !(hi > lo)) {
        return Err(Error::input("sample box has zero volume"));
    }
    let (t0, t1) = region.t_range;
    if t1 < t0 {
        return Err(Error::input("sample box time range is reversed"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vector> = (0..x_samples)
        .map(|_| {
            Vector::from_iterator(dim, region.lower.iter().zip(&region.upper).map(|(lo, hi)| rng.gen_range(*lo..*hi)))
        })
        .collect();
    let mut best = 0.0f64;
    for k in 0..t_samples {
        let t = t0 + (t1 - t0) * k as f64 / (t_samples - 1) as f64;
        let values: Vec<Vector> = points.iter().map(|p| field.value(t, p)).collect();
        for a in 0..x_samples {
            for b in a + 1..x_samples {
                let dx = (&points[a] - &points[b]).norm();
                if dx < MIN_SEPARATION {
                    continue;
                }
                let ratio = (&values[a] - &values[b]).norm() / dx;
                if !ratio.is_finite() {
                    return Err(Error::numeric(format!("non-finite difference ratio for `{}`", field.label())));
                }
                best = best.max(ratio);
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn linear_field_is_exact() {
        let f = VectorField::scalar_linear(2.0);
        let l = estimate_lipschitz(&f, &SampleBox::cube(1, -3.0, 3.0), 2, 50, 1).unwrap();
        assert!((l - 2.0).abs() < 1e-9);
    }

    #[test]
    fn constant_field_is_zero() {
        let f = VectorField::constant(DVector::from_vec(vec![1.0, 2.0]));
        assert_eq!(estimate_lipschitz(&f, &SampleBox::cube(2, 0.0, 1.0), 3, 20, 4).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_box_rejected() {
        let f = VectorField::scalar_linear(1.0);
        assert!(estimate_lipschitz(&f, &SampleBox::cube(1, 1.0, 1.0), 2, 10, 0).is_err());
        assert!(estimate_lipschitz(&f, &SampleBox::cube(1, 0.0, 1.0), 1, 10, 0).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let f = VectorField::new(1, "sin", |_, x: &Vector| x.map(f64::sin));
        let b = SampleBox::cube(1, -2.0, 2.0);
        let a = estimate_lipschitz(&f, &b, 2, 40, 9).unwrap();
        assert_eq!(a, estimate_lipschitz(&f, &b, 2, 40, 9).unwrap());
        assert!(a <= 1.0 + 1e-12);
    }
}
