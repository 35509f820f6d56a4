//! Impacting hybrid systems x' = F(x; mu, eta) on H(x) = C^T x > 0 with the
//! reset x -> x + W(x) v(x) applied on H = 0.
//!
//! The built-in field has the series form
//! F = (A + mu A1) x + mu M + mu^2 M1 + eps (q1 x1 x2 + q2 x1 x3) e1,
//! and W = -B plus an optional higher-order correction.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{BebError, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Relative tolerance for "on the switching surface": |C^T x| <= tol * max(1, |x|).
pub const BOUNDARY_TOL: f64 = 1e-10;

/// Relative tolerance used to decide that v or a vanish.
const ZERO_RATE_TOL: f64 = 1e-12;

pub fn boundary_tol(x: &Vector) -> f64 {
    BOUNDARY_TOL * x.norm().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamPoint {
    pub mu: f64,
    pub eta: f64,
}

impl ParamPoint {
    pub fn new(mu: f64, eta: f64) -> Self {
        ParamPoint { mu, eta }
    }
}

/// Coefficients of the quadratic term eps (q1 x1 x2 + q2 x1 x3) e1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticTerms {
    pub epsilon: f64,
    pub q1: f64,
    pub q2: f64,
}

impl QuadraticTerms {
    fn is_zero(&self) -> bool {
        self.epsilon == 0.0 || (self.q1 == 0.0 && self.q2 == 0.0)
    }
}

/// User-supplied smooth field replacing the built-in series form.
///
/// The model's A, A1, M, M1 must still describe the linearisation at the
/// boundary equilibrium; they are used for classification, for the blow-up
/// scale and for the limit mu -> 0 of the blown-up field.
pub trait FieldOverride: Send + Sync {
    fn eval(&self, x: &Vector, p: ParamPoint) -> Vector;

    /// Jacobian in x. `None` falls back to central differences.
    fn jacobian(&self, _x: &Vector, _p: ParamPoint) -> Option<Matrix> {
        None
    }
}

/// Higher-order part of the reset direction, W(x) = -B + correction(x).
/// Must vanish at x = 0.
pub trait ResetCorrection: Send + Sync {
    fn eval(&self, x: &Vector) -> Vector;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryClass {
    Incoming,
    Outgoing,
    GrazingPositiveA,
    Sticking,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LieDerivatives {
    pub h: f64,
    pub v: f64,
    pub a: f64,
    pub grad_v: Vector,
    /// `None` off the surface, and at points where both v and a vanish.
    pub class: Option<BoundaryClass>,
}

#[derive(Clone)]
pub struct HybridModel {
    n: usize,
    a: Matrix,
    a1: Matrix,
    m: Vector,
    m1: Vector,
    b: Vector,
    c: Vector,
    nonlinear: Option<QuadraticTerms>,
    has_drift: bool,
    field_override: Option<Arc<dyn FieldOverride>>,
    reset_correction: Option<Arc<dyn ResetCorrection>>,
}

impl fmt::Debug for HybridModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HybridModel")
            .field("n", &self.n)
            .field("a", &self.a)
            .field("a1", &self.a1)
            .field("m", &self.m)
            .field("m1", &self.m1)
            .field("b", &self.b)
            .field("c", &self.c)
            .field("nonlinear", &self.nonlinear)
            .field("has_drift", &self.has_drift)
            .field("field_override", &self.field_override.is_some())
            .field("reset_correction", &self.reset_correction.is_some())
            .finish()
    }
}

impl PartialEq for HybridModel {
    fn eq(&self, other: &Self) -> bool {
        let same_arc = |x: &Option<Arc<dyn FieldOverride>>, y: &Option<Arc<dyn FieldOverride>>| {
            match (x, y) {
                (None, None) => true,
                (Some(p), Some(q)) => Arc::ptr_eq(p, q),
                _ => false,
            }
        };
        let same_reset =
            |x: &Option<Arc<dyn ResetCorrection>>, y: &Option<Arc<dyn ResetCorrection>>| match (
                x, y,
            ) {
                (None, None) => true,
                (Some(p), Some(q)) => Arc::ptr_eq(p, q),
                _ => false,
            };
        self.n == other.n
            && self.a == other.a
            && self.a1 == other.a1
            && self.m == other.m
            && self.m1 == other.m1
            && self.b == other.b
            && self.c == other.c
            && self.nonlinear == other.nonlinear
            && self.has_drift == other.has_drift
            && same_arc(&self.field_override, &other.field_override)
            && same_reset(&self.reset_correction, &other.reset_correction)
    }
}

fn check_matrix(name: &str, m: &Matrix, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(BebError::invalid(format!("{name}: expected {n}×{n}")));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(BebError::invalid(format!("{name}: non-finite entry")));
    }
    Ok(())
}

fn check_vector(name: &str, v: &Vector, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(BebError::invalid(format!("{name}: expected length {n}")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(BebError::invalid(format!("{name}: non-finite entry")));
    }
    Ok(())
}

impl HybridModel {
    /// Linear model with A1 = 0, M1 = 0 and no quadratic terms.
    pub fn new(a: Matrix, m: Vector, b: Vector, c: Vector) -> Result<Self> {
        let n = a.nrows();
        if n < 2 {
            return Err(BebError::invalid("n: dimension must be at least 2"));
        }
        check_matrix("A", &a, n)?;
        check_vector("M", &m, n)?;
        check_vector("B", &b, n)?;
        check_vector("C", &c, n)?;
        Ok(HybridModel {
            n,
            a,
            a1: Matrix::zeros(n, n),
            m,
            m1: Vector::zeros(n),
            b,
            c,
            nonlinear: None,
            has_drift: true,
            field_override: None,
            reset_correction: None,
        })
    }

    pub fn with_a1(mut self, a1: Matrix) -> Result<Self> {
        check_matrix("A1", &a1, self.n)?;
        self.a1 = a1;
        Ok(self)
    }

    pub fn with_m1(mut self, m1: Vector) -> Result<Self> {
        check_vector("M1", &m1, self.n)?;
        self.m1 = m1;
        Ok(self)
    }

    pub fn with_nonlinear(mut self, q: QuadraticTerms) -> Result<Self> {
        if ![q.epsilon, q.q1, q.q2].iter().all(|x| x.is_finite()) {
            return Err(BebError::invalid("nonlinear: non-finite entry"));
        }
        if q.q2 != 0.0 && q.epsilon != 0.0 && self.n < 3 {
            return Err(BebError::invalid("nonlinear.q2: needs n >= 3"));
        }
        self.nonlinear = if q.is_zero() { None } else { Some(q) };
        Ok(self)
    }

    pub fn with_field_override(mut self, f: Arc<dyn FieldOverride>) -> Self {
        self.field_override = Some(f);
        self
    }

    pub fn with_reset_correction(mut self, w: Arc<dyn ResetCorrection>) -> Self {
        self.reset_correction = Some(w);
        self
    }

    /// Marks M as unknown (the model was supplied without drift data).
    pub fn without_drift(mut self) -> Self {
        self.has_drift = false;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn a1(&self) -> &Matrix {
        &self.a1
    }
    pub fn m(&self) -> &Vector {
        &self.m
    }
    pub fn m1(&self) -> &Vector {
        &self.m1
    }
    pub fn b(&self) -> &Vector {
        &self.b
    }
    pub fn c(&self) -> &Vector {
        &self.c
    }
    pub fn nonlinear(&self) -> Option<QuadraticTerms> {
        self.nonlinear
    }
    pub fn has_drift(&self) -> bool {
        self.has_drift
    }
    pub fn field_override(&self) -> Option<&Arc<dyn FieldOverride>> {
        self.field_override.as_ref()
    }
    pub fn reset_correction(&self) -> Option<&Arc<dyn ResetCorrection>> {
        self.reset_correction.as_ref()
    }

    /// True when F is affine in x for every parameter value.
    pub fn is_affine(&self) -> bool {
        self.nonlinear.is_none() && self.field_override.is_none()
    }

    /// A + mu A1.
    pub fn linear_part(&self, mu: f64) -> Matrix {
        &self.a + &self.a1 * mu
    }

    /// M + mu M1, the drift per unit mu.
    pub fn drift(&self, mu: f64) -> Vector {
        &self.m + &self.m1 * mu
    }

    fn check_dim(&self, x: &Vector) -> Result<()> {
        if x.len() != self.n {
            return Err(BebError::invalid(format!(
                "state: expected length {}, got {}",
                self.n,
                x.len()
            )));
        }
        Ok(())
    }

    pub fn eval_vector_field(&self, x: &Vector, p: ParamPoint) -> Result<Vector> {
        self.check_dim(x)?;
        Ok(self.field(x, p))
    }

    pub(crate) fn field(&self, x: &Vector, p: ParamPoint) -> Vector {
        if let Some(f) = &self.field_override {
            return f.eval(x, p);
        }
        let mut out = Vector::zeros(self.n);
        self.series_field_into(x.as_slice(), p.mu, out.as_mut_slice());
        out
    }

    /// The series field (A + mu A1) x + mu M + mu^2 M1 + quadratic term.
    pub(crate) fn series_field_into(&self, x: &[f64], mu: f64, out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = mu * self.m[i] + mu * mu * self.m1[i];
            for j in 0..n {
                s += (self.a[(i, j)] + mu * self.a1[(i, j)]) * x[j];
            }
            out[i] = s;
        }
        if let Some(q) = self.nonlinear {
            let x3 = if n > 2 { x[2] } else { 0.0 };
            out[0] += q.epsilon * (q.q1 * x[0] * x[1] + q.q2 * x[0] * x3);
        }
    }

    /// Evaluates (A + mu A1) y + (M + mu M1) / kappa + eps mu kappa (quadratic) e1.
    pub(crate) fn blown_up_series_into(&self, y: &[f64], mu: f64, kappa: f64, out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = (self.m[i] + mu * self.m1[i]) / kappa;
            for j in 0..n {
                s += (self.a[(i, j)] + mu * self.a1[(i, j)]) * y[j];
            }
            out[i] = s;
        }
        if let Some(q) = self.nonlinear {
            let y3 = if n > 2 { y[2] } else { 0.0 };
            out[0] += q.epsilon * mu * kappa * (q.q1 * y[0] * y[1] + q.q2 * y[0] * y3);
        }
    }

    /// Jacobian of the quadratic term at x, scaled by `factor`.
    pub(crate) fn quadratic_jacobian(&self, x: &[f64], factor: f64) -> Option<Matrix> {
        let q = self.nonlinear?;
        let n = self.n;
        let x3 = if n > 2 { x[2] } else { 0.0 };
        let mut j = Matrix::zeros(n, n);
        let e = q.epsilon * factor;
        j[(0, 0)] = e * (q.q1 * x[1] + q.q2 * x3);
        j[(0, 1)] = e * q.q1 * x[0];
        if n > 2 {
            j[(0, 2)] = e * q.q2 * x[0];
        }
        Some(j)
    }

    pub fn jacobian(&self, x: &Vector, p: ParamPoint) -> Matrix {
        if let Some(f) = &self.field_override {
            return f
                .jacobian(x, p)
                .unwrap_or_else(|| fd_jacobian(|y| f.eval(y, p), x));
        }
        let mut j = self.linear_part(p.mu);
        if let Some(q) = self.quadratic_jacobian(x.as_slice(), 1.0) {
            j += q;
        }
        j
    }

    /// W(x) = -B + correction(x).
    pub fn restitution_direction(&self, x: &Vector) -> Vector {
        let mut w = -&self.b;
        if let Some(r) = &self.reset_correction {
            w += r.eval(x);
        }
        w
    }

    pub fn lie_derivatives(&self, x: &Vector, p: ParamPoint) -> Result<LieDerivatives> {
        self.check_dim(x)?;
        let f = self.field(x, p);
        let jac = self.jacobian(x, p);
        let h = self.c.dot(x);
        let v = self.c.dot(&f);
        let grad_v = jac.transpose() * &self.c;
        let a = grad_v.dot(&f);
        let class = classify_point(h, v, a, x, &f, &jac);
        Ok(LieDerivatives {
            h,
            v,
            a,
            grad_v,
            class,
        })
    }

    /// x + W(x) v(x) for x on the surface with non-positive velocity.
    pub fn apply_reset(&self, x: &Vector, p: ParamPoint) -> Result<Vector> {
        self.check_dim(x)?;
        let h = self.c.dot(x);
        if h.abs() > boundary_tol(x) {
            return Err(BebError::domain(format!(
                "reset applied off the switching surface (H = {h:.3e})"
            )));
        }
        let f = self.field(x, p);
        let v = self.c.dot(&f);
        let scale = ZERO_RATE_TOL * f.norm().max(1.0);
        if v > scale {
            return Err(BebError::domain(format!(
                "reset applied with positive velocity v = {v:.3e}"
            )));
        }
        Ok(x + self.restitution_direction(x) * v)
    }

    /// F_s = (I - W grad_v^T / (grad_v^T W)) F.
    pub fn sticking_field(&self, x: &Vector, p: ParamPoint) -> Result<Vector> {
        self.check_dim(x)?;
        let f = self.field(x, p);
        let grad_v = self.jacobian(x, p).transpose() * &self.c;
        let w = self.restitution_direction(x);
        let denom = grad_v.dot(&w);
        if denom.abs() < 1e-14 * grad_v.norm().max(1.0) * w.norm().max(1.0) {
            return Err(BebError::degenerate(
                "grad v^T W vanishes; the reset does not reverse the velocity",
            ));
        }
        Ok(&f - &w * (grad_v.dot(&f) / denom))
    }

    pub fn validate_model(&self) -> ValidationReport {
        let mut checks = Vec::new();
        let c_norm = self.c.norm();
        checks.push(Check::new(
            "C nonzero",
            c_norm > 0.0,
            c_norm,
            "switching normal must be nonzero",
        ));

        let svd = self.a.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        checks.push(Check::new(
            "A invertible",
            cond < 1e12,
            cond,
            "condition number of A below 1e12",
        ));

        let ctab = self.c.dot(&(&self.a * &self.b));
        checks.push(Check::new(
            "CtAB positive",
            ctab > 0.0,
            ctab,
            "C^T A B > 0",
        ));

        // grad_v^T W < -1 on sampled grazing points near the boundary equilibrium.
        let mut worst = f64::NEG_INFINITY;
        for x in self.grazing_samples() {
            let grad_v = self.jacobian(&x, ParamPoint::default()).transpose() * &self.c;
            let w = self.restitution_direction(&x);
            worst = worst.max(grad_v.dot(&w));
        }
        checks.push(Check::new(
            "restitution bound",
            worst < -1.0,
            worst,
            "grad v^T W < -1 at grazing points (restitution coefficient positive)",
        ));

        // The reset must map the surface to itself.
        let ctw = self.c.dot(&self.restitution_direction(&Vector::zeros(self.n)));
        let scale = self.c.norm() * self.b.norm().max(1e-300);
        checks.push(Check::new(
            "reset tangent",
            ctw.abs() <= 1e-12 * scale.max(1.0),
            ctw,
            "C^T W = 0 so that impacts land on the switching surface",
        ));

        ValidationReport { checks }
    }

    /// Points of {H = 0, v = 0} at mu = 0 close to the origin.
    fn grazing_samples(&self) -> Vec<Vector> {
        let n = self.n;
        let mut out = vec![Vector::zeros(n)];
        // Null space of [C^T; C^T A], sampled along its basis vectors.
        let mut cons = Matrix::zeros(2, n);
        cons.set_row(0, &self.c.transpose());
        cons.set_row(1, &(self.c.transpose() * &self.a));
        let svd = cons.clone().svd(false, true);
        if let Some(vt) = svd.v_t {
            let rank = svd.singular_values.iter().filter(|s| **s > 1e-12).count();
            for k in rank..vt.nrows().min(rank + 3) {
                let dir: Vector = vt.row(k).transpose();
                for s in [1e-3, -1e-3] {
                    out.push(&dir * s);
                }
            }
        }
        out
    }
}

fn classify_point(h: f64, v: f64, a: f64, x: &Vector, f: &Vector, jac: &Matrix) -> Option<BoundaryClass> {
    if h.abs() > boundary_tol(x) {
        return None;
    }
    let v_tol = ZERO_RATE_TOL * f.norm().max(1.0);
    if v < -v_tol {
        return Some(BoundaryClass::Incoming);
    }
    if v > v_tol {
        return Some(BoundaryClass::Outgoing);
    }
    let a_tol = ZERO_RATE_TOL * (jac.norm() * f.norm()).max(1.0);
    if a > a_tol {
        Some(BoundaryClass::GrazingPositiveA)
    } else if a < -a_tol {
        Some(BoundaryClass::Sticking)
    } else {
        None
    }
}

/// Central-difference Jacobian with step 1e-6 * max(1, |x_j|).
pub fn fd_jacobian(f: impl Fn(&Vector) -> Vector, x: &Vector) -> Matrix {
    let n = x.len();
    let f0 = f(x);
    let mut j = Matrix::zeros(f0.len(), n);
    for k in 0..n {
        let h = 1e-6 * x[k].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let col = (f(&xp) - f(&xm)) / (2.0 * h);
        j.set_column(k, &col);
    }
    j
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, value: f64, detail: &str) -> Self {
        Check {
            name: name.to_string(),
            passed,
            value,
            detail: detail.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// A hybrid system as seen by the integrator: a smooth autonomous field, a
/// constant switching normal and a reset direction.
pub trait HybridSystem: Sync {
    fn dim(&self) -> usize;
    fn field_into(&self, y: &[f64], out: &mut [f64]);
    fn jacobian(&self, y: &Vector) -> Matrix;
    fn normal(&self) -> &Vector;
    /// W(y); the reset is y + W(y) v(y).
    fn restitution(&self, y: &Vector) -> Vector;
    fn restitution_is_constant(&self) -> bool {
        true
    }

    fn field(&self, y: &Vector) -> Vector {
        let mut out = Vector::zeros(self.dim());
        self.field_into(y.as_slice(), out.as_mut_slice());
        out
    }

    fn h(&self, y: &Vector) -> f64 {
        self.normal().dot(y)
    }

    fn velocity(&self, y: &Vector) -> f64 {
        self.normal().dot(&self.field(y))
    }

    fn grad_velocity(&self, y: &Vector) -> Vector {
        self.jacobian(y).transpose() * self.normal()
    }

    fn acceleration(&self, y: &Vector) -> f64 {
        self.grad_velocity(y).dot(&self.field(y))
    }

    fn reset(&self, y: &Vector) -> Vector {
        y + self.restitution(y) * self.velocity(y)
    }

    fn reset_jacobian(&self, y: &Vector) -> Matrix {
        let w = self.restitution(y);
        let mut dr = Matrix::identity(self.dim(), self.dim()) + &w * self.grad_velocity(y).transpose();
        if !self.restitution_is_constant() {
            let dw = fd_jacobian(|z| self.restitution(z), y);
            dr += dw * self.velocity(y);
        }
        dr
    }

    fn sticking_field(&self, y: &Vector) -> Vector {
        let f = self.field(y);
        let g = self.grad_velocity(y);
        let w = self.restitution(y);
        &f - &w * (g.dot(&f) / g.dot(&w))
    }
}

/// A model frozen at a parameter point, in original coordinates.
#[derive(Debug, Clone)]
pub struct ModelAt<'a> {
    pub model: &'a HybridModel,
    pub p: ParamPoint,
}

impl<'a> ModelAt<'a> {
    pub fn new(model: &'a HybridModel, p: ParamPoint) -> Self {
        ModelAt { model, p }
    }
}

impl HybridSystem for ModelAt<'_> {
    fn dim(&self) -> usize {
        self.model.n
    }

    fn field_into(&self, y: &[f64], out: &mut [f64]) {
        let m = self.model;
        if let Some(f) = &m.field_override {
            let v = f.eval(&Vector::from_column_slice(y), self.p);
            out.copy_from_slice(v.as_slice());
            return;
        }
        m.series_field_into(y, self.p.mu, out);
    }

    fn jacobian(&self, y: &Vector) -> Matrix {
        self.model.jacobian(y, self.p)
    }

    fn normal(&self) -> &Vector {
        &self.model.c
    }

    fn restitution(&self, y: &Vector) -> Vector {
        self.model.restitution_direction(y)
    }

    fn restitution_is_constant(&self) -> bool {
        self.model.reset_correction.is_none()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{pd_example, sn_example, PdParams, SnParams};

    fn planar() -> HybridModel {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.2]);
        HybridModel::new(a, Vector::from_vec(vec![0.0, -1.0]), Vector::from_vec(vec![0.0, 1.8]), Vector::from_vec(vec![1.0, 0.0]))
            .unwrap()
    }

    #[test]
    fn field_vanishes_at_origin_for_builtins() {
        for m in [sn_example(&SnParams::default()).unwrap(), pd_example(&PdParams::default()).unwrap()] {
            let f = m.eval_vector_field(&Vector::zeros(m.n()), ParamPoint::default()).unwrap();
            assert_eq!(f.norm(), 0.0);
        }
    }

    #[test]
    fn series_field_includes_drift_terms() {
        let m = planar()
            .with_a1(Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]))
            .unwrap()
            .with_m1(Vector::from_vec(vec![2.0, 0.0]))
            .unwrap();
        let x = Vector::from_vec(vec![0.5, 0.25]);
        let f = m.eval_vector_field(&x, ParamPoint::new(0.1, 0.0)).unwrap();
        // (A + mu A1) x + mu M + mu^2 M1
        assert!((f[0] - (0.25 + 0.05 + 0.02)).abs() < 1e-15);
        assert!((f[1] - (-0.5 - 0.05 - 0.1)).abs() < 1e-15);
    }

    #[test]
    fn reset_reverses_velocity_with_restitution() {
        let m = planar();
        let x = Vector::from_vec(vec![0.0, -0.3]);
        let p = ParamPoint::default();
        let v = m.lie_derivatives(&x, p).unwrap().v;
        let y = m.apply_reset(&x, p).unwrap();
        let v_post = m.lie_derivatives(&y, p).unwrap().v;
        // r = -1 - grad_v^T W = 0.8
        assert!((v_post + 0.8 * v).abs() < 1e-15);
    }

    #[test]
    fn reset_rejected_off_surface_or_outgoing() {
        let m = planar();
        let p = ParamPoint::default();
        assert!(matches!(m.apply_reset(&Vector::from_vec(vec![0.1, -0.3]), p), Err(BebError::Domain(_))));
        assert!(matches!(m.apply_reset(&Vector::from_vec(vec![0.0, 0.3]), p), Err(BebError::Domain(_))));
    }

    #[test]
    fn boundary_points_are_classified() {
        let m = planar();
        let p = ParamPoint::new(0.1, 0.0);
        let class = |x: [f64; 2]| m.lie_derivatives(&Vector::from_vec(x.to_vec()), p).unwrap().class;
        assert_eq!(class([0.0, -0.5]), Some(BoundaryClass::Incoming));
        assert_eq!(class([0.0, 0.5]), Some(BoundaryClass::Outgoing));
        // v = 0, a = x2' = -mu < 0
        assert_eq!(class([0.0, 0.0]), Some(BoundaryClass::Sticking));
        assert_eq!(class([0.2, 0.0]), None);
        let p_neg = ParamPoint::new(-0.1, 0.0);
        let d = m.lie_derivatives(&Vector::zeros(2), p_neg).unwrap();
        assert_eq!(d.class, Some(BoundaryClass::GrazingPositiveA));
    }

    #[test]
    fn sticking_field_is_tangent() {
        let m = sn_example(&SnParams::default()).unwrap();
        let p = ParamPoint::new(0.01, 0.0);
        // Grazing point: x1 = 0 and x2 = 0 (v = x2 here).
        let x = Vector::from_vec(vec![0.0, 0.0, 0.3]);
        let fs = m.sticking_field(&x, p).unwrap();
        assert!(m.c().dot(&fs).abs() < 1e-12 * fs.norm().max(1.0));
        let g = m.jacobian(&x, p).transpose() * m.c();
        assert!(g.dot(&fs).abs() < 1e-12 * fs.norm().max(1.0));
    }

    #[test]
    fn quadratic_jacobian_matches_differences() {
        let m = sn_example(&SnParams::default())
            .unwrap()
            .with_nonlinear(QuadraticTerms { epsilon: 0.5, q1: 1.5, q2: -2.0 })
            .unwrap();
        let p = ParamPoint::new(0.02, 0.0);
        let x = Vector::from_vec(vec![0.3, -0.2, 0.7]);
        let exact = m.jacobian(&x, p);
        let fd = fd_jacobian(|y| m.eval_vector_field(y, p).unwrap(), &x);
        assert!((exact - fd).norm() < 1e-8);
    }

    #[test]
    fn validation_names_failed_checks() {
        let m = HybridModel::new(Matrix::identity(2, 2), Vector::zeros(2), Vector::zeros(2), Vector::from_vec(vec![1.0, 0.0]))
            .unwrap();
        let r = m.validate_model();
        assert!(!r.passed());
        assert!(!r.get("CtAB positive").unwrap().passed);
        assert!(planar().validate_model().passed());
    }

    #[test]
    fn builtins_validate() {
        for m in [
            sn_example(&SnParams::default()).unwrap(),
            pd_example(&PdParams::default()).unwrap(),
            crate::models::airfoil_fixture(),
        ] {
            let r = m.validate_model();
            assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
        }
    }

    #[test]
    fn shape_errors_are_invalid() {
        let bad = HybridModel::new(Matrix::identity(3, 3), Vector::zeros(2), Vector::zeros(3), Vector::zeros(3));
        assert!(matches!(bad, Err(BebError::Invalid(_))));
        let m = planar();
        assert!(m.eval_vector_field(&Vector::zeros(3), ParamPoint::default()).is_err());
        assert!(m.clone().with_a1(Matrix::zeros(3, 3)).is_err());
    }
}
