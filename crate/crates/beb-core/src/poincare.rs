//! Blown-up coordinates near the boundary equilibrium, the section chart and
//! the impact-to-impact return map with its fixed points.
//!
//! With x = mu kappa y the field becomes
//! y' = (A + mu A1) y + (M + mu M1) / kappa + eps mu kappa (quadratic) e1,
//! which extends smoothly to mu = 0.

use nalgebra::Complex;
use rayon::prelude::*;

use crate::error::{BebError, Result};
use crate::flow::{integrate_to_section, FlowOptions, SectionHit};
use crate::model::{boundary_tol, fd_jacobian, HybridModel, HybridSystem, Matrix, ParamPoint, Vector};
use crate::models::ModelFamily;

#[derive(Debug, Clone, PartialEq)]
pub struct SectionChart {
    pub q: Matrix,
    pub s: Matrix,
    pub s_inverse: Matrix,
    /// Index of the coordinate left out of Q.
    pub dropped: usize,
}

impl SectionChart {
    pub fn new(c: &Vector) -> Result<Self> {
        let n = c.len();
        if n < 2 {
            return Err(BebError::invalid("C: dimension must be at least 2"));
        }
        if !c.iter().all(|v| v.is_finite()) || c.norm() == 0.0 {
            return Err(BebError::invalid("C: must be finite and nonzero"));
        }
        let dropped = c.iamax();
        let mut q = Matrix::zeros(n - 1, n);
        let mut row = 0;
        for j in 0..n {
            if j != dropped {
                q[(row, j)] = 1.0;
                row += 1;
            }
        }
        let mut s = Matrix::zeros(n, n);
        s.set_row(0, &c.transpose());
        s.view_mut((1, 0), (n - 1, n)).copy_from(&q);
        let s_inverse = s
            .clone()
            .try_inverse()
            .ok_or_else(|| BebError::degenerate("section chart matrix is singular"))?;
        Ok(SectionChart {
            q,
            s,
            s_inverse,
            dropped,
        })
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    /// u = Q y.
    pub fn to_section(&self, y: &Vector) -> Vector {
        &self.q * y
    }

    /// The point y on C^T y = 0 with Q y = u.
    pub fn from_section(&self, u: &Vector) -> Vector {
        let n = self.s.nrows();
        let mut rhs = Vector::zeros(n);
        rhs.rows_mut(1, n - 1).copy_from(u);
        &self.s_inverse * rhs
    }

    /// Tangent image of a section direction.
    pub fn lift_direction(&self, du: &Vector) -> Vector {
        self.from_section(du)
    }
}

pub fn section_chart(c: &Vector) -> Result<SectionChart> {
    SectionChart::new(c)
}

/// How state space is scaled by mu in the blow-up x = mu kappa y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlowUpScale {
    /// kappa = |C^T (A + mu A1)^-1 (M + mu M1)|, so the regular equilibrium
    /// sits at unit distance from the surface.
    #[default]
    Normalized,
    /// kappa = 1.
    Unit,
}

impl BlowUpScale {
    pub fn kappa(&self, model: &HybridModel, mu: f64) -> Result<f64> {
        match self {
            BlowUpScale::Unit => Ok(1.0),
            BlowUpScale::Normalized => {
                if !model.has_drift() {
                    return Err(BebError::degenerate(
                        "model has no drift term M; the blow-up scale is undefined",
                    ));
                }
                let a = model.linear_part(mu);
                let y = a
                    .lu()
                    .solve(&model.drift(mu))
                    .ok_or_else(|| BebError::degenerate("A + mu A1 is singular"))?;
                let k = model.c().dot(&y).abs();
                if !(k > 1e-300) || !k.is_finite() {
                    return Err(BebError::degenerate("C^T A^-1 M vanishes"));
                }
                Ok(k)
            }
        }
    }
}

/// The blown-up system at fixed (mu, eta).
#[derive(Debug, Clone)]
pub struct BlownUp<'a> {
    pub model: &'a HybridModel,
    pub p: ParamPoint,
    pub kappa: f64,
}

impl<'a> BlownUp<'a> {
    pub fn new(model: &'a HybridModel, p: ParamPoint, kappa: f64) -> Result<Self> {
        if model.field_override().is_some() && p.mu == 0.0 {
            return Err(BebError::domain(
                "blown-up field of a user-supplied vector field needs mu != 0",
            ));
        }
        if !model.has_drift() {
            return Err(BebError::degenerate("model has no drift term M"));
        }
        Ok(BlownUp { model, p, kappa })
    }

    /// Factor mu kappa taking blown-up states back to original ones.
    pub fn scale(&self) -> f64 {
        self.p.mu * self.kappa
    }
}

impl HybridSystem for BlownUp<'_> {
    fn dim(&self) -> usize {
        self.model.n()
    }

    fn field_into(&self, y: &[f64], out: &mut [f64]) {
        if let Some(f) = self.model.field_override() {
            let s = self.scale();
            let x = Vector::from_column_slice(y) * s;
            let v = f.eval(&x, self.p) / s;
            out.copy_from_slice(v.as_slice());
            return;
        }
        self.model.blown_up_series_into(y, self.p.mu, self.kappa, out);
    }

    fn jacobian(&self, y: &Vector) -> Matrix {
        if self.model.field_override().is_some() {
            let s = self.scale();
            return self.model.jacobian(&(y * s), self.p);
        }
        let mut j = self.model.linear_part(self.p.mu);
        if let Some(q) = self.model.quadratic_jacobian(y.as_slice(), self.scale()) {
            j += q;
        }
        j
    }

    fn normal(&self) -> &Vector {
        self.model.c()
    }

    fn restitution(&self, y: &Vector) -> Vector {
        self.model.restitution_direction(&(y * self.scale()))
    }

    fn restitution_is_constant(&self) -> bool {
        self.model.reset_correction().is_none()
    }
}

/// Which side of the impact the section coordinates describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SectionSide {
    /// u is a pre-impact point: reset, then flow back to the surface.
    #[default]
    PreImpact,
    /// u is a post-impact point: flow to the surface, then reset.
    PostImpact,
}

#[derive(Debug, Clone)]
pub struct MapStep {
    pub u_next: Vector,
    /// Flight time between the impacts.
    pub period: f64,
    /// Pre-impact point at the end of the flight (blown-up coordinates).
    pub y_minus: Vector,
    /// Post-impact point at the start of the flight.
    pub y_plus: Vector,
    /// Smallest interior local minimum of H along the flight.
    pub min_interior_h: Option<f64>,
}

/// The return map of the blown-up system at a parameter point.
#[derive(Debug, Clone)]
pub struct ReturnMap<'a> {
    pub model: &'a HybridModel,
    pub p: ParamPoint,
    pub chart: SectionChart,
    pub scale: BlowUpScale,
    pub side: SectionSide,
    pub kappa: f64,
    pub flow: FlowOptions,
}

impl<'a> ReturnMap<'a> {
    pub fn new(model: &'a HybridModel, p: ParamPoint) -> Result<Self> {
        Self::with_options(model, p, BlowUpScale::default(), SectionSide::default())
    }

    pub fn with_options(
        model: &'a HybridModel,
        p: ParamPoint,
        scale: BlowUpScale,
        side: SectionSide,
    ) -> Result<Self> {
        if !p.mu.is_finite() || !p.eta.is_finite() {
            return Err(BebError::invalid("parameters must be finite"));
        }
        let chart = SectionChart::new(model.c())?;
        let kappa = scale.kappa(model, p.mu)?;
        BlownUp::new(model, p, kappa)?;
        Ok(ReturnMap {
            model,
            p,
            chart,
            scale,
            side,
            kappa,
            flow: FlowOptions {
                t_max: 1000.0,
                ..FlowOptions::default()
            },
        })
    }

    pub fn with_flow(mut self, flow: FlowOptions) -> Self {
        self.flow = flow;
        self
    }

    pub fn system(&self) -> BlownUp<'a> {
        BlownUp {
            model: self.model,
            p: self.p,
            kappa: self.kappa,
        }
    }

    /// mu kappa: original state = amplitude_scale * blown-up state.
    pub fn amplitude_scale(&self) -> f64 {
        self.p.mu * self.kappa
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn lift(&self, u: &Vector) -> Vector {
        self.chart.from_section(u)
    }

    pub fn apply(&self, u: &Vector) -> Result<MapStep> {
        if u.len() != self.dim() {
            return Err(BebError::invalid(format!(
                "section point: expected length {}, got {}",
                self.dim(),
                u.len()
            )));
        }
        if !u.iter().all(|v| v.is_finite()) {
            return Err(BebError::invalid("section point is not finite"));
        }
        let sys = self.system();
        let y = self.lift(u);
        let vel = sys.velocity(&y);
        let vtol = self.flow.v_graze * sys.field(&y).norm().max(1.0);
        match self.side {
            SectionSide::PreImpact => {
                if vel > vtol {
                    return Err(BebError::domain(format!(
                        "section point is not incoming (v = {vel:.3e})"
                    )));
                }
                if vel.abs() <= vtol {
                    return Err(BebError::Grazing { time: 0.0, velocity: vel });
                }
                let y_plus = sys.reset(&y);
                let hit = self.fly(&sys, &y_plus)?;
                Ok(MapStep {
                    u_next: self.chart.to_section(&hit.y),
                    period: hit.t,
                    min_interior_h: hit.min_interior_h,
                    y_minus: hit.y,
                    y_plus,
                })
            }
            SectionSide::PostImpact => {
                if vel < -vtol {
                    return Err(BebError::domain(format!(
                        "section point is not outgoing (v = {vel:.3e})"
                    )));
                }
                let hit = self.fly(&sys, &y)?;
                let next = sys.reset(&hit.y);
                Ok(MapStep {
                    u_next: self.chart.to_section(&next),
                    period: hit.t,
                    min_interior_h: hit.min_interior_h,
                    y_minus: hit.y,
                    y_plus: y,
                })
            }
        }
    }

    fn fly(&self, sys: &BlownUp<'_>, y_plus: &Vector) -> Result<SectionHit> {
        if sys.velocity(y_plus) <= 0.0 && sys.h(y_plus).abs() <= boundary_tol(y_plus) {
            return Err(BebError::domain("post-impact velocity is not outgoing"));
        }
        let hit = integrate_to_section(sys, y_plus, &self.flow, false)?;
        if hit.grazing {
            return Err(BebError::Grazing {
                time: hit.t,
                velocity: hit.velocity,
            });
        }
        Ok(hit)
    }

    pub fn eval(&self, u: &Vector) -> Result<Vector> {
        Ok(self.apply(u)?.u_next)
    }

    /// k-th iterate of the map.
    pub fn iterate(&self, u: &Vector, k: usize) -> Result<Vector> {
        let mut u = u.clone();
        for _ in 0..k {
            u = self.eval(&u)?;
        }
        Ok(u)
    }

    /// Original-coordinate point mu kappa zeta^-1(u).
    pub fn to_original(&self, u: &Vector) -> Vector {
        self.lift(u) * self.amplitude_scale()
    }
}

/// u_next, flight time and landing point for the default map.
pub fn return_map(model: &HybridModel, u: &Vector, p: ParamPoint) -> Result<(Vector, f64, Vector)> {
    let map = ReturnMap::new(model, p)?;
    let s = map.apply(u)?;
    Ok((s.u_next, s.period, s.y_minus))
}

/// A return map depending on (mu, eta), as needed for unfoldings.
pub trait UnfoldingMap: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, u: &Vector, mu: f64, eta: f64) -> Result<Vector>;

    /// Full step information; maps without a flow report only `u_next`.
    fn apply(&self, u: &Vector, mu: f64, eta: f64) -> Result<MapStep> {
        let u_next = self.eval(u, mu, eta)?;
        Ok(MapStep {
            u_next,
            period: f64::NAN,
            y_minus: Vector::zeros(0),
            y_plus: Vector::zeros(0),
            min_interior_h: None,
        })
    }
}

/// Return maps of a model family; eta is the family parameter itself.
pub struct MapFamily<'f> {
    pub family: &'f dyn ModelFamily,
    pub scale: BlowUpScale,
    pub side: SectionSide,
    pub flow: FlowOptions,
    dim: usize,
}

impl<'f> MapFamily<'f> {
    pub fn new(family: &'f dyn ModelFamily, eta_probe: f64) -> Result<Self> {
        let m = family.model_at(eta_probe)?;
        Ok(MapFamily {
            family,
            scale: BlowUpScale::default(),
            side: SectionSide::default(),
            flow: FlowOptions::default(),
            dim: m.n() - 1,
        })
    }

    pub fn with_flow(mut self, flow: FlowOptions) -> Self {
        self.flow = flow;
        self
    }

    pub fn with_scale(mut self, scale: BlowUpScale) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_side(mut self, side: SectionSide) -> Self {
        self.side = side;
        self
    }

    /// Runs `f` on the return map at (mu, eta).
    pub fn with_map<T>(&self, mu: f64, eta: f64, f: impl FnOnce(&ReturnMap<'_>) -> Result<T>) -> Result<T> {
        let model = self.family.model_at(eta)?;
        let map = ReturnMap::with_options(&model, ParamPoint::new(mu, eta), self.scale, self.side)?
            .with_flow(self.flow);
        f(&map)
    }
}

impl UnfoldingMap for MapFamily<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, u: &Vector, mu: f64, eta: f64) -> Result<Vector> {
        self.with_map(mu, eta, |m| m.eval(u))
    }

    fn apply(&self, u: &Vector, mu: f64, eta: f64) -> Result<MapStep> {
        self.with_map(mu, eta, |m| m.apply(u))
    }
}

#[derive(Debug, Clone)]
pub struct FdJacobian {
    pub matrix: Matrix,
    /// Final step per column.
    pub steps: Vec<f64>,
    /// Largest relative change between the last two accepted estimates.
    pub rel_change: f64,
    pub converged: bool,
}

pub const FD_REL_TOL: f64 = 1e-8;
pub const FD_MIN_STEP: f64 = 1e-9;

/// Central-difference Jacobian of `f` at u with per-column step halving from
/// h0. Successive central differences are Richardson-combined and halving
/// stops once two combined estimates agree to `FD_REL_TOL` or h < `FD_MIN_STEP`.
/// The estimate whose change from its predecessor was smallest is kept.
pub fn fd_jacobian_adaptive<F>(f: F, u: &Vector, h0: f64) -> Result<FdJacobian>
where
    F: Fn(&Vector) -> Result<Vector> + Sync,
{
    let n = u.len();
    let cols: Vec<Result<(Vector, f64, f64, bool)>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let column = |h: f64| -> Result<Vector> {
                let mut up = u.clone();
                let mut um = u.clone();
                up[j] += h;
                um[j] -= h;
                Ok((f(&up)? - f(&um)?) / (2.0 * h))
            };
            let mut h = h0;
            let mut central = column(h)?;
            let mut prev: Option<Vector> = None;
            let mut best = (central.clone(), h, f64::INFINITY);
            loop {
                h *= 0.5;
                if h < FD_MIN_STEP {
                    return Ok((best.0, best.1, best.2, false));
                }
                let next = match column(h) {
                    Ok(c) => c,
                    Err(_) => return Ok((best.0, best.1, best.2, false)),
                };
                let cur = (&next * 4.0 - &central) / 3.0;
                central = next;
                if let Some(p) = &prev {
                    let change = (&cur - p).norm() / cur.norm().max(1.0);
                    if change < best.2 {
                        best = (cur.clone(), h, change);
                    }
                    if change < FD_REL_TOL {
                        return Ok((cur, h, change, true));
                    }
                }
                prev = Some(cur);
            }
        })
        .collect();
    let mut matrix = Matrix::zeros(0, 0);
    let mut steps = Vec::with_capacity(n);
    let mut rel_change: f64 = 0.0;
    let mut converged = true;
    for (j, c) in cols.into_iter().enumerate() {
        let (col, h, change, ok) = c?;
        if j == 0 {
            matrix = Matrix::zeros(col.len(), n);
        }
        matrix.set_column(j, &col);
        steps.push(h);
        rel_change = rel_change.max(change);
        converged &= ok;
    }
    Ok(FdJacobian {
        matrix,
        steps,
        rel_change,
        converged,
    })
}

/// Jacobian of the return map at u.
pub fn map_jacobian_fd(map: &ReturnMap<'_>, u: &Vector) -> Result<FdJacobian> {
    let h0 = 1e-2 * u.norm().max(1.0);
    fd_jacobian_adaptive(|v| map.eval(v), u, h0)
}

#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub u_hat: Vector,
    pub residual: f64,
    pub period: f64,
    pub multipliers: Vec<Complex<f64>>,
    pub jacobian: Matrix,
    pub iterations: usize,
    /// |G| after each Newton step, for convergence-order checks.
    pub history: Vec<f64>,
}

pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;
pub const FIXED_POINT_RESIDUAL: f64 = 1e-10;

/// Newton's method on G(u) = P^k(u) - u.
pub fn fixed_point_of<F>(g: F, u_guess: &Vector) -> Result<(Vector, f64, usize, Vec<f64>)>
where
    F: Fn(&Vector) -> Result<Vector> + Sync,
{
    let n = u_guess.len();
    let residual = |u: &Vector| -> Result<(Vector, f64)> {
        let r = g(u)? - u;
        let nr = r.norm();
        Ok((r, nr))
    };
    let mut u = u_guess.clone();
    let (mut r, mut nr) = residual(&u)?;
    let mut history = vec![nr];
    for it in 0..NEWTON_MAX_ITER {
        if nr <= NEWTON_TOL * u.norm().max(1.0) {
            return Ok((u, nr, it, history));
        }
        let h = (1e-7 * u.norm().max(1.0)).max(nr.sqrt() * 1e-3).min(1e-4 * u.norm().max(1.0));
        let jac_g = {
            let mut j = Matrix::zeros(n, n);
            let cols: Vec<Result<Vector>> = (0..n)
                .into_par_iter()
                .map(|k| {
                    let mut up = u.clone();
                    let mut um = u.clone();
                    up[k] += h;
                    um[k] -= h;
                    Ok((g(&up)? - up - (g(&um)? - um)) / (2.0 * h))
                })
                .collect();
            for (k, c) in cols.into_iter().enumerate() {
                j.set_column(k, &c?);
            }
            j
        };
        let step = jac_g
            .lu()
            .solve(&(-&r))
            .ok_or_else(|| BebError::degenerate("Newton Jacobian is singular"))?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=10 {
            let trial = &u + &step * lambda;
            if let Ok((rt, nrt)) = residual(&trial) {
                if nrt < nr || nrt <= NEWTON_TOL * trial.norm().max(1.0) {
                    u = trial;
                    r = rt;
                    nr = nrt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            // Stalled at the noise floor of the map evaluation.
            if nr <= FIXED_POINT_RESIDUAL {
                return Ok((u, nr, it, history));
            }
            return Err(BebError::no_convergence("fixed point", it + 1, nr));
        }
        history.push(nr);
    }
    if nr <= FIXED_POINT_RESIDUAL {
        return Ok((u, nr, NEWTON_MAX_ITER, history));
    }
    Err(BebError::no_convergence("fixed point", NEWTON_MAX_ITER, nr))
}

/// Fixed point of the return map near u_guess.
pub fn fixed_point(map: &ReturnMap<'_>, u_guess: &Vector) -> Result<FixedPointResult> {
    fixed_point_k(map, u_guess, 1)
}

/// Fixed point of the k-th iterate (k = 2 for period-doubled cycles).
pub fn fixed_point_k(map: &ReturnMap<'_>, u_guess: &Vector, k: usize) -> Result<FixedPointResult> {
    if u_guess.len() != map.dim() {
        return Err(BebError::invalid(format!(
            "initial guess: expected length {}",
            map.dim()
        )));
    }
    let k = k.max(1);
    let (u, residual, iterations, history) = fixed_point_of(|v| map.iterate(v, k), u_guess)?;
    let mut period = 0.0;
    let mut w = u.clone();
    for _ in 0..k {
        let s = map.apply(&w)?;
        period += s.period;
        w = s.u_next;
    }
    let h0 = 1e-2 * u.norm().max(1.0);
    let jac = fd_jacobian_adaptive(|v| map.iterate(v, k), &u, h0)?.matrix;
    let multipliers = jac.complex_eigenvalues().iter().copied().collect();
    Ok(FixedPointResult {
        u_hat: u,
        residual,
        period,
        multipliers,
        jacobian: jac,
        iterations,
        history,
    })
}

/// A one-impact cycle of the affine part of the blown-up field.
#[derive(Debug, Clone)]
pub struct CycleCandidate {
    pub u: Vector,
    pub period: f64,
    /// Velocity at the pre-impact point (negative for admissible cycles).
    pub velocity: f64,
}

/// Periodic one-impact orbits of the affine blown-up system at the map's
/// parameters, found from the roots T of det(I - exp(A T) R) where R is the
/// reset linearised about the regular equilibrium. Quadratic terms are
/// ignored, so candidates are seeds for `fixed_point`.
pub fn linear_cycle_candidates(map: &ReturnMap<'_>, t_max: f64, samples: usize) -> Result<Vec<CycleCandidate>> {
    let model = map.model;
    let n = model.n();
    let mu = map.p.mu;
    let a = model.linear_part(mu);
    let drift = model.drift(mu) / map.kappa;
    let lu = a.clone().lu();
    let y_reg = -lu
        .solve(&drift)
        .ok_or_else(|| BebError::degenerate("A + mu A1 is singular"))?;
    let c = model.c();
    let w0 = model.restitution_direction(&Vector::zeros(n));
    let r_lin = Matrix::identity(n, n) + &w0 * (c.transpose() * &a);
    let det_at = |t: f64| -> f64 {
        let phi = (&a * t).exp();
        (Matrix::identity(n, n) - phi * &r_lin).determinant()
    };
    let samples = samples.max(10);
    let dt = t_max / samples as f64;
    let mut roots = Vec::new();
    let mut t_prev = dt;
    let mut d_prev = det_at(t_prev);
    let mut d_prev2 = f64::NAN;
    for i in 2..=samples {
        let t = dt * i as f64;
        let d = det_at(t);
        if d_prev == 0.0 {
            roots.push(t_prev);
        } else if d_prev.signum() != d.signum() {
            roots.push(crate::flow::bracketed_root(det_at, t_prev, t, 1e-14 * t));
        } else if d_prev2.is_finite() && d_prev.abs() < d_prev2.abs() && d_prev.abs() < d.abs() {
            // Touching root: minimise |det| and accept it if it nearly vanishes.
            let (tm, dm) = golden_abs_min(&det_at, t_prev - dt, t);
            let scale = d_prev2.abs().max(d.abs());
            if dm.abs() < 1e-8 * scale.max(1e-300) {
                roots.push(tm);
            }
        }
        d_prev2 = d_prev;
        t_prev = t;
        d_prev = d;
    }

    let mut out = Vec::new();
    let sys = map.system();
    for t in roots {
        let phi = (&a * t).exp();
        let k_mat = Matrix::identity(n, n) - phi * &r_lin;
        let svd = k_mat.svd(false, true);
        let Some(vt) = svd.v_t else { continue };
        let idx = svd.singular_values.imin();
        let k: Vector = vt.row(idx).transpose();
        let ck = c.dot(&k);
        if ck.abs() < 1e-12 * k.norm() {
            continue;
        }
        let s = -c.dot(&y_reg) / ck;
        let y = &y_reg + &k * s;
        let vel = sys.velocity(&y);
        let u = map.chart.to_section(&y);
        let dup = out
            .iter()
            .any(|o: &CycleCandidate| (&o.u - &u).norm() <= 1e-7 * u.norm().max(1.0));
        if vel < 0.0 && !dup {
            out.push(CycleCandidate {
                u,
                period: t,
                velocity: vel,
            });
        }
    }
    Ok(out)
}

fn golden_abs_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1).abs();
    let mut f2 = f(x2).abs();
    for _ in 0..80 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1).abs();
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2).abs();
        }
    }
    if f1 < f2 {
        (x1, f(x1))
    } else {
        (x2, f(x2))
    }
}

/// Jacobian of the blown-up field, exposed for diagnostics.
pub fn blown_up_jacobian(map: &ReturnMap<'_>, y: &Vector) -> Matrix {
    let sys = map.system();
    if map.model.field_override().is_some() {
        return fd_jacobian(|z| sys.field(z), y);
    }
    sys.jacobian(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{pd_example, sn_example, PdParams, SnParams};

    #[test]
    fn chart_for_first_axis_normal() {
        let ch = SectionChart::new(&Vector::from_vec(vec![1.0, 0.0, 0.0])).unwrap();
        assert_eq!(ch.q, Matrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn chart_drops_largest_entry() {
        let mut c = Vector::zeros(8);
        c[2] = 1.0;
        let ch = SectionChart::new(&c).unwrap();
        assert_eq!(ch.dropped, 2);
        assert_eq!(ch.dim(), 7);
    }

    #[test]
    fn chart_oblique_normal_round_trip() {
        let c = Vector::from_vec(vec![1.0, 1.0]) / 2f64.sqrt();
        let ch = SectionChart::new(&c).unwrap();
        let u = Vector::from_vec(vec![0.7]);
        let y = ch.from_section(&u);
        assert!(c.dot(&y).abs() < 1e-15);
        assert!((ch.to_section(&y) - u).norm() < 1e-15);
    }

    #[test]
    fn zero_normal_rejected() {
        assert!(SectionChart::new(&Vector::zeros(3)).is_err());
    }

    #[test]
    fn sn_kappa_is_forty() {
        let m = sn_example(&SnParams::default()).unwrap();
        let k = BlowUpScale::Normalized.kappa(&m, 0.0).unwrap();
        assert!((k - 40.0).abs() < 1e-12);
    }

    #[test]
    fn pd_kappa_closed_form() {
        let m = pd_example(&PdParams::default()).unwrap();
        let mu = 0.02;
        let k = BlowUpScale::Normalized.kappa(&m, mu).unwrap();
        let expect = 1.0 / ((0.3 - mu) * (1.0 + 0.01));
        assert!((k - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn sn_linear_candidates_converge_to_fixed_point() {
        let m = sn_example(&SnParams::default()).unwrap();
        let map = ReturnMap::new(&m, ParamPoint::new(0.01, 0.0)).unwrap();
        let cands = linear_cycle_candidates(&map, 60.0, 3000).unwrap();
        assert!(!cands.is_empty());
        let mut found = false;
        for c in &cands {
            if let Ok(fp) = fixed_point(&map, &c.u) {
                assert!(fp.residual < FIXED_POINT_RESIDUAL);
                found = true;
            }
        }
        assert!(found);
    }

    #[test]
    fn affine_fd_jacobian_exact() {
        let k = Matrix::from_row_slice(2, 2, &[0.3, -1.2, 2.0, 0.5]);
        let b = Vector::from_vec(vec![0.1, -0.4]);
        let f = |u: &Vector| Ok(&k * u + &b);
        let j = fd_jacobian_adaptive(f, &Vector::from_vec(vec![1.0, 2.0]), 1e-2).unwrap();
        assert!((j.matrix - k).norm() < 1e-9);
    }
}
