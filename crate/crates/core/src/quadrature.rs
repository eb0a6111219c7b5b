//! Composite Simpson rules, including a cumulative variant used for nested
//! (iterated) integrals.

use std::ops::{Add, Mul};

/// Composite Simpson over `[a, b]` with `panels` (rounded up to even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    if b == a {
        return 0.0;
    }
    let n = even(panels);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

/// Doubles the panel count until two successive Simpson sums differ by less
/// than `tol` (or `max_doublings` is reached). Returns the finer estimate.
pub fn simpson_refined<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, tol: f64, max_doublings: usize) -> f64 {
    let mut n = even(panels);
    let mut prev = simpson(&f, a, b, n);
    for _ in 0..max_doublings {
        n *= 2;
        let next = simpson(&f, a, b, n);
        if (next - prev).abs() < tol {
            return next;
        }
        prev = next;
    }
    prev
}

/// Simpson sum of equally spaced samples (`samples.len()` odd, at least 3).
pub fn simpson_samples<T>(samples: &[T], h: f64) -> T
where
    T: Clone + Add<Output = T> + Mul<f64, Output = T>,
{
    let n = samples.len() - 1;
    debug_assert!(n >= 2 && n % 2 == 0, "Simpson needs an even panel count");
    let mut acc = samples[0].clone() + samples[n].clone();
    for (k, s) in samples.iter().enumerate().take(n).skip(1) {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc = acc + s.clone() * w;
    }
    acc * (h / 3.0)
}

/// Running integral `C_k = \int_{x_0}^{x_k} f` at every node of an equally
/// spaced grid with an even number of panels.
///
/// Even nodes carry exact composite Simpson sums; odd nodes add the
/// quadratic-fit rule `h/12 (5 f_{k-1} + 8 f_k - f_{k+1})`, so pairs of
/// half-panels recombine into Simpson.
pub fn cumulative_simpson<T>(samples: &[T], h: f64, zero: T) -> Vec<T>
where
    T: Clone + Add<Output = T> + Mul<f64, Output = T>,
{
    let n = samples.len() - 1;
    debug_assert!(n >= 2 && n % 2 == 0, "cumulative Simpson needs an even panel count");
    let mut out = Vec::with_capacity(n + 1);
    out.push(zero);
    for k in 1..=n {
        let value = if k % 2 == 0 {
            out[k - 2].clone()
                + (samples[k - 2].clone() + samples[k - 1].clone() * 4.0 + samples[k].clone()) * (h / 3.0)
        } else {
            out[k - 1].clone()
                + (samples[k - 1].clone() * 5.0 + samples[k].clone() * 8.0 + samples[k + 1].clone() * -1.0) * (h / 12.0)
        };
        out.push(value);
    }
    out
}

pub(crate) fn even(n: usize) -> usize {
    let n = n.max(2);
    n + n % 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn simpson_is_exact_for_cubics() {
        let v = simpson(|x| x * x * x - 2.0 * x + 1.0, -1.0, 2.0, 2);
        assert_abs_diff_eq!(v, 3.75 - 3.0 + 3.0, epsilon = 1e-13);
    }

    #[test]
    fn cumulative_matches_antiderivative() {
        let n = 64;
        let h = 2.0 / n as f64;
        let samples: Vec<f64> = (0..=n).map(|k| (k as f64 * h).exp()).collect();
        let c = cumulative_simpson(&samples, h, 0.0);
        for (k, ck) in c.iter().enumerate() {
            // the half-panel rule carries an h^4 f'''/24 local error
            assert_abs_diff_eq!(*ck, (k as f64 * h).exp() - 1.0, epsilon = 1e-6);
        }
        assert_abs_diff_eq!(c[n], simpson_samples(&samples, h), epsilon = 1e-14);
    }

    #[test]
    fn refined_simpson_converges() {
        let v = simpson_refined(|s: f64| s.sin().powi(2), 0.0, 3.0, 16, 1e-12, 12);
        assert_abs_diff_eq!(v, 1.5 - (6.0f64).sin() / 4.0, epsilon = 1e-11);
    }
}
