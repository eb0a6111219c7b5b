use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

type ValueFn = dyn Fn(f64, &Vector) -> Vector + Send + Sync;
/// Returns `None` where the field is not differentiable; callers then fall
/// back to (flagged) finite differences.
type JacobianFn = dyn Fn(f64, &Vector) -> Option<Matrix> + Send + Sync;
/// Second spatial derivative applied to two directions, `D²f(t, x)[v, w]`.
type SecondFn = dyn Fn(f64, &Vector, &Vector, &Vector) -> Option<Vector> + Send + Sync;

/// Relative finite-difference step; the absolute step is `rel * (1 + |x|)`.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// A time-varying vector field `(t, x) -> R^n` with optional analytic
/// derivatives.
#[derive(Clone)]
pub struct VectorField {
    dim: usize,
    label: String,
    value: Arc<ValueFn>,
    jacobian: Option<Arc<JacobianFn>>,
    second: Option<Arc<SecondFn>>,
    time_partial: Option<Arc<ValueFn>>,
    autonomous: bool,
    fd_step: f64,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("autonomous", &self.autonomous)
            .finish()
    }
}

/// Spatial Jacobian together with how it was obtained.
#[derive(Debug, Clone)]
pub struct JacobianEval {
    pub matrix: Matrix,
    /// True when the central difference straddles a kink: the two one-sided
    /// differences disagree by more than `10 * step`.
    pub flagged: bool,
    pub analytic: bool,
}

/// A derived quantity evaluated at one point, carrying the kink flag of the
/// Jacobians that went into it.
#[derive(Debug, Clone)]
pub struct Probe {
    pub value: Vector,
    pub flagged: bool,
}

impl VectorField {
    pub fn new<F>(dim: usize, label: impl Into<String>, value: F) -> Self
    where
        F: Fn(f64, &Vector) -> Vector + Send + Sync + 'static,
    {
        assert!(dim > 0, "vector field dimension must be positive");
        Self {
            dim,
            label: label.into(),
            value: Arc::new(value),
            jacobian: None,
            second: None,
            time_partial: None,
            autonomous: false,
            fd_step: DEFAULT_FD_STEP,
        }
    }

    pub fn with_jacobian<F>(mut self, jacobian: F) -> Self
    where
        F: Fn(f64, &Vector) -> Option<Matrix> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn with_second_derivative<F>(mut self, second: F) -> Self
    where
        F: Fn(f64, &Vector, &Vector, &Vector) -> Option<Vector> + Send + Sync + 'static,
    {
        self.second = Some(Arc::new(second));
        self
    }

    pub fn with_time_partial<F>(mut self, partial: F) -> Self
    where
        F: Fn(f64, &Vector) -> Vector + Send + Sync + 'static,
    {
        self.time_partial = Some(Arc::new(partial));
        self
    }

    /// Declares that the field does not depend on `t`, so every time partial
    /// is exactly zero.
    pub fn autonomous(mut self) -> Self {
        self.autonomous = true;
        self
    }

    pub fn with_fd_step(mut self, rel_step: f64) -> Self {
        assert!(rel_step > 0.0, "finite-difference step must be positive");
        self.fd_step = rel_step;
        self
    }

    /// `x -> A x`, constant in time.
    pub fn linear(matrix: Matrix) -> Self {
        assert!(matrix.is_square(), "linear field needs a square matrix");
        let dim = matrix.nrows();
        let a = matrix.clone();
        let jac = matrix;
        VectorField::new(dim, "linear", move |_, x| &a * x)
            .with_jacobian(move |_, _| Some(jac.clone()))
            .with_second_derivative(move |_, _, _, _| Some(Vector::zeros(dim)))
            .autonomous()
    }

    /// Scalar linear field `x -> c x`.
    pub fn scalar_linear(c: f64) -> Self {
        Self::linear(Matrix::from_element(1, 1, c)).labeled(format!("{c}*x"))
    }

    pub fn zero(dim: usize) -> Self {
        VectorField::new(dim, "zero", move |_, _| Vector::zeros(dim))
            .with_jacobian(move |_, _| Some(Matrix::zeros(dim, dim)))
            .with_second_derivative(move |_, _, _, _| Some(Vector::zeros(dim)))
            .autonomous()
    }

    pub fn constant(c: Vector) -> Self {
        let dim = c.len();
        VectorField::new(dim, "constant", move |_, _| c.clone())
            .with_jacobian(move |_, _| Some(Matrix::zeros(dim, dim)))
            .with_second_derivative(move |_, _, _, _| Some(Vector::zeros(dim)))
            .autonomous()
    }

    pub fn labeled(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// `c * self`, derivatives scaled accordingly.
    pub fn scaled(&self, c: f64) -> Self {
        let base = self.clone();
        let mut out = VectorField {
            dim: self.dim,
            label: format!("{c}*({})", self.label),
            value: Arc::new(move |t, x| (base.value)(t, x) * c),
            jacobian: None,
            second: None,
            time_partial: None,
            autonomous: self.autonomous,
            fd_step: self.fd_step,
        };
        if let Some(j) = self.jacobian.clone() {
            out.jacobian = Some(Arc::new(move |t, x| j(t, x).map(|m| m * c)));
        }
        if let Some(s) = self.second.clone() {
            out.second = Some(Arc::new(move |t, x, v, w| s(t, x, v, w).map(|y| y * c)));
        }
        if let Some(p) = self.time_partial.clone() {
            out.time_partial = Some(Arc::new(move |t, x| p(t, x) * c));
        }
        out
    }

    /// Pointwise sum. Analytic derivatives survive only if both operands have them.
    pub fn sum(&self, other: &VectorField) -> Self {
        assert_eq!(self.dim, other.dim, "summed fields must share dimension");
        let (a, b) = (self.clone(), other.clone());
        let mut out = VectorField {
            dim: self.dim,
            label: format!("({}) + ({})", self.label, other.label),
            value: Arc::new(move |t, x| (a.value)(t, x) + (b.value)(t, x)),
            jacobian: None,
            second: None,
            time_partial: None,
            autonomous: self.autonomous && other.autonomous,
            fd_step: self.fd_step.min(other.fd_step),
        };
        if let (Some(ja), Some(jb)) = (self.jacobian.clone(), other.jacobian.clone()) {
            out.jacobian = Some(Arc::new(move |t, x| Some(ja(t, x)? + jb(t, x)?)));
        }
        if let (Some(sa), Some(sb)) = (self.second.clone(), other.second.clone()) {
            out.second = Some(Arc::new(move |t, x, v, w| Some(sa(t, x, v, w)? + sb(t, x, v, w)?)));
        }
        if let (Some(pa), Some(pb)) = (self.time_partial.clone(), other.time_partial.clone()) {
            out.time_partial = Some(Arc::new(move |t, x| pa(t, x) + pb(t, x)));
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_autonomous(&self) -> bool {
        self.autonomous
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    /// Raw evaluation without a dimension check.
    #[inline]
    pub fn value(&self, t: f64, x: &Vector) -> Vector {
        (self.value)(t, x)
    }

    pub fn eval(&self, t: f64, x: &Vector) -> Result<Vector> {
        self.check_dim(x)?;
        Ok(self.value(t, x))
    }

    pub(crate) fn check_dim(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::input(format!(
                "state has length {} but field `{}` has dimension {}",
                x.len(),
                self.label,
                self.dim
            )));
        }
        Ok(())
    }

    /// Absolute finite-difference step at `x`.
    pub fn fd_step_at(&self, x: &Vector) -> f64 {
        self.fd_step * (1.0 + x.norm())
    }

    pub fn jacobian(&self, t: f64, x: &Vector) -> JacobianEval {
        if let Some(j) = &self.jacobian {
            if let Some(matrix) = j(t, x) {
                return JacobianEval { matrix, flagged: false, analytic: true };
            }
        }
        self.fd_jacobian(t, x)
    }

    /// Central-difference Jacobian, flagged where the one-sided differences
    /// disagree.
    pub fn fd_jacobian(&self, t: f64, x: &Vector) -> JacobianEval {
        let n = self.dim;
        let h = self.fd_step_at(x);
        let f0 = self.value(t, x);
        let mut matrix = Matrix::zeros(n, n);
        let mut flagged = false;
        for k in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fp = self.value(t, &xp);
            let fm = self.value(t, &xm);
            let central = (&fp - &fm) / (2.0 * h);
            let forward = (&fp - &f0) / h;
            let backward = (&f0 - &fm) / h;
            if (forward - backward).amax() > 10.0 * h {
                flagged = true;
            }
            matrix.set_column(k, &central);
        }
        JacobianEval { matrix, flagged, analytic: false }
    }

    /// Partial derivative with respect to `t`.
    pub fn time_derivative(&self, t: f64, x: &Vector) -> Vector {
        if self.autonomous {
            return Vector::zeros(self.dim);
        }
        if let Some(p) = &self.time_partial {
            return p(t, x);
        }
        let h = self.fd_step * (1.0 + t.abs());
        (self.value(t + h, x) - self.value(t - h, x)) / (2.0 * h)
    }

    pub(crate) fn second_derivative(&self, t: f64, x: &Vector, v: &Vector, w: &Vector) -> Option<Vector> {
        self.second.as_ref().and_then(|s| s(t, x, v, w))
    }
}

fn check_finite(v: &Vector, what: &str) -> Result<()> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric(format!("non-finite {what}")))
    }
}

fn check_pair(a: &VectorField, b: &VectorField, x: &Vector) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::input(format!("fields `{}` and `{}` have different dimensions", a.label, b.label)));
    }
    a.check_dim(x)
}

pub fn evaluate_field(field: &VectorField, t: f64, x: &Vector) -> Result<Vector> {
    field.eval(t, x)
}

/// `L_f g = (d/dx g) * f`, with the kink flag of the Jacobian used.
pub fn lie_derivative_probe(g: &VectorField, f: &VectorField, t: f64, x: &Vector) -> Result<Probe> {
    check_pair(g, f, x)?;
    let jac = g.jacobian(t, x);
    if jac.matrix.iter().any(|c| !c.is_finite()) {
        return Err(Error::numeric(format!("non-finite Jacobian of `{}`", g.label)));
    }
    let value = &jac.matrix * f.value(t, x);
    check_finite(&value, "Lie derivative")?;
    Ok(Probe { value, flagged: jac.flagged })
}

pub fn lie_derivative(g: &VectorField, f: &VectorField, t: f64, x: &Vector) -> Result<Vector> {
    lie_derivative_probe(g, f, t, x).map(|p| p.value)
}

/// `[f, g] = L_f g - L_g f = (d/dx g) f - (d/dx f) g`.
pub fn lie_bracket_probe(f: &VectorField, g: &VectorField, t: f64, x: &Vector) -> Result<Probe> {
    let fg = lie_derivative_probe(g, f, t, x)?;
    let gf = lie_derivative_probe(f, g, t, x)?;
    Ok(Probe { value: fg.value - gf.value, flagged: fg.flagged || gf.flagged })
}

pub fn lie_bracket(f: &VectorField, g: &VectorField, t: f64, x: &Vector) -> Result<Vector> {
    lie_bracket_probe(f, g, t, x).map(|p| p.value)
}

/// `L_{f_m} L_{f_j} f_i = D^2 f_i [f_j, f_m] + J_i J_j f_m`.
///
/// Uses the analytic second derivative of `f_i` when available, otherwise a
/// central directional difference of `L_{f_j} f_i` along `f_m`.
pub fn second_lie_derivative(
    fi: &VectorField,
    fj: &VectorField,
    fm: &VectorField,
    t: f64,
    x: &Vector,
) -> Result<Probe> {
    check_pair(fi, fj, x)?;
    check_pair(fi, fm, x)?;
    let dir = fm.value(t, x);
    let ji = fi.jacobian(t, x);
    let jj = fj.jacobian(t, x);
    if ji.analytic && jj.analytic {
        let vj = fj.value(t, x);
        if let Some(d2) = fi.second_derivative(t, x, &vj, &dir) {
            let value = d2 + &ji.matrix * (&jj.matrix * &dir);
            check_finite(&value, "second Lie derivative")?;
            return Ok(Probe { value, flagged: false });
        }
    }
    let norm = dir.norm();
    if norm == 0.0 {
        return Ok(Probe { value: Vector::zeros(fi.dim), flagged: ji.flagged || jj.flagged });
    }
    let unit = &dir / norm;
    let s = fi.fd_step_at(x);
    let xp = x + &unit * s;
    let xm = x - &unit * s;
    let gp = lie_derivative_probe(fi, fj, t, &xp)?;
    let gm = lie_derivative_probe(fi, fj, t, &xm)?;
    let value = (gp.value - gm.value) * (norm / (2.0 * s));
    check_finite(&value, "second Lie derivative")?;
    Ok(Probe { value, flagged: ji.flagged || jj.flagged || gp.flagged || gm.flagged })
}

/// Time partial of `L_{f_j} f_i`; exactly zero when both fields are autonomous.
pub fn time_partial_lie_derivative(fi: &VectorField, fj: &VectorField, t: f64, x: &Vector) -> Result<Probe> {
    check_pair(fi, fj, x)?;
    if fi.autonomous && fj.autonomous {
        return Ok(Probe { value: Vector::zeros(fi.dim), flagged: false });
    }
    let h = fi.fd_step * (1.0 + t.abs());
    let p = lie_derivative_probe(fi, fj, t + h, x)?;
    let m = lie_derivative_probe(fi, fj, t - h, x)?;
    Ok(Probe { value: (p.value - m.value) / (2.0 * h), flagged: p.flagged || m.flagged })
}
