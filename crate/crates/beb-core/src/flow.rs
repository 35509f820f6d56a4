//! Smooth arcs between impacts, full hybrid trajectories, and Floquet
//! multipliers from the variational equations with a saltation jump.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::dop853::{integrate, single_step, DenseStep, ScalarPoly, StepControl, Tolerances};
use crate::error::{BebError, Result};
use crate::model::{boundary_tol, HybridModel, HybridSystem, Matrix, ModelAt, ParamPoint, Vector};

pub const V_GRAZE: f64 = 1e-8;
pub const V_STICK: f64 = 1e-8;
pub const CHATTERING_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub tol: Tolerances,
    pub t_max: f64,
    pub v_graze: f64,
    /// Points per accepted step at which H is sampled for sign changes and
    /// interior minima.
    pub samples_per_step: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            tol: Tolerances::default(),
            t_max: 1000.0,
            v_graze: V_GRAZE,
            samples_per_step: 16,
        }
    }
}

impl FlowOptions {
    /// Tighter tolerances for maps that are differentiated numerically.
    pub fn precise() -> Self {
        FlowOptions {
            tol: Tolerances {
                rtol: 1e-12,
                atol: 1e-14,
                ..Tolerances::default()
            },
            ..FlowOptions::default()
        }
    }
}

/// First arrival on the switching surface.
#[derive(Debug, Clone)]
pub struct SectionHit {
    pub t: f64,
    pub y: Vector,
    pub velocity: f64,
    pub grazing: bool,
    /// Smallest interior local minimum of H along the arc, if the arc has one.
    pub min_interior_h: Option<f64>,
    /// Accepted steps, when recording was requested. The last one extends past `t`.
    pub steps: Vec<DenseStep>,
}

fn brent_root(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb * fc > 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return b;
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1 * xm.signum() };
        fb = f(b);
    }
    b
}

/// Scalar root of `f` in [a, b]; `f(a)` and `f(b)` must differ in sign.
pub fn bracketed_root(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    brent_root(f, a, b, tol)
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..60 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    if f1 < f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

struct Sample {
    t: f64,
    h: f64,
}

/// Integrates from y0 (on or above the surface) to the first downward crossing
/// of H = 0. Grazing arrivals are returned with `grazing = true`.
pub fn integrate_to_section<S: HybridSystem + ?Sized>(
    sys: &S,
    y0: &Vector,
    opts: &FlowOptions,
    record: bool,
) -> Result<SectionHit> {
    let n = sys.dim();
    if y0.len() != n {
        return Err(BebError::invalid(format!("state: expected length {n}")));
    }
    let c: Vec<f64> = sys.normal().iter().copied().collect();
    let h0 = sys.h(y0);
    if h0 < -boundary_tol(y0) {
        return Err(BebError::domain(format!("start below the switching surface (H = {h0:.3e})")));
    }
    let rhs = |y: &[f64], out: &mut [f64]| sys.field_into(y, out);

    let mut hit: Option<(usize, f64, f64)> = None; // (step index, ta, tb)
    let mut steps: Vec<DenseStep> = Vec::new();
    let mut prev_poly: Option<ScalarPoly> = None;
    let mut last_two: Vec<Sample> = Vec::with_capacity(2);
    let mut min_interior: Option<f64> = None;
    let mut armed = h0 > boundary_tol(y0);
    let samples = opts.samples_per_step.max(2);

    let mut current: Option<DenseStep> = None;
    let mut prev_step: Option<DenseStep> = None;
    let mut hit_in_prev = false;
    let outcome = integrate(rhs, 0.0, y0.as_slice(), opts.t_max, &opts.tol, |step| {
        let poly = step.project(&c);
        for i in 1..=samples {
            let t = step.t0 + step.h * i as f64 / samples as f64;
            let h = poly.eval(t);
            if armed && h <= 0.0 {
                let ta = t - step.h / samples as f64;
                hit = Some((steps.len(), ta, t));
                break;
            }
            if h > 0.0 {
                armed = true;
            }
            if last_two.len() == 2 {
                let (p2, p1) = (&last_two[0], &last_two[1]);
                if p1.h < p2.h && p1.h <= h && armed {
                    let lo = p2.t;
                    let hi = t;
                    let eval = |s: f64| {
                        if s >= step.t0 {
                            poly.eval(s)
                        } else if let Some(pp) = &prev_poly {
                            pp.eval(s)
                        } else {
                            poly.eval(s)
                        }
                    };
                    let (tmin, hmin) = golden_min(eval, lo, hi);
                    if hmin > 0.0 {
                        min_interior = Some(min_interior.map_or(hmin, |m: f64| m.min(hmin)));
                    } else {
                        // The flight dips through the surface between samples.
                        if lo < step.t0 && prev_poly.as_ref().is_some_and(|pp| pp.eval(step.t0) <= 0.0) {
                            hit = Some((steps.len(), lo, step.t0));
                            hit_in_prev = true;
                        } else {
                            hit = Some((steps.len(), lo.max(step.t0), tmin));
                        }
                        break;
                    }
                }
                last_two.remove(0);
            }
            last_two.push(Sample { t, h });
        }
        prev_poly = Some(poly);
        if record || hit.is_some() {
            steps.push(step.clone());
        }
        if hit.is_some() {
            current = if hit_in_prev { prev_step.take() } else { Some(step.clone()) };
            StepControl::Stop
        } else {
            prev_step = Some(step.clone());
            StepControl::Continue
        }
    })?;

    let Some((_, ta, tb)) = hit else {
        let _ = outcome;
        return Err(BebError::NoReturn(opts.t_max));
    };
    let step = current.expect("event step recorded");
    let poly = step.project(&c);
    let mut t_star = bracketed_root(|t| poly.eval(t), ta, tb, 1e-15 * step.h.max(1.0));

    // Polish with exact single steps from the start of the event step.
    let scale = step.y0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut y = Vector::from_vec(step.eval(t_star));
    let mut f = vec![0.0; n];
    for _ in 0..4 {
        let yy = single_step(&rhs, &step.y0, t_star - step.t0);
        rhs(&yy, &mut f);
        let h = c.iter().zip(&yy).map(|(a, b)| a * b).sum::<f64>();
        let v = c.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>();
        y = Vector::from_vec(yy);
        if v.abs() < opts.v_graze * scale.max(1.0) {
            break;
        }
        let dt = -h / v;
        if dt.abs() > step.h || !dt.is_finite() {
            break;
        }
        t_star += dt;
        if dt.abs() < 1e-16 * step.h.max(1.0) {
            break;
        }
    }
    let velocity = sys.velocity(&y);
    let grazing = velocity.abs() < opts.v_graze || velocity >= 0.0;
    if !record {
        steps.clear();
    }
    Ok(SectionHit {
        t: t_star,
        y,
        velocity,
        grazing,
        min_interior_h: min_interior,
        steps,
    })
}

/// Pre-impact point and travel time from y0 to the first crossing of the
/// surface. Grazing arrivals are errors.
pub fn flow_to_section<S: HybridSystem + ?Sized>(
    sys: &S,
    y0: &Vector,
    t_max: f64,
    opts: &FlowOptions,
) -> Result<(Vector, f64)> {
    let h0 = sys.h(y0);
    if h0.abs() <= boundary_tol(y0) && sys.velocity(y0) <= 0.0 {
        return Err(BebError::domain(
            "flow_to_section must start above the surface or on it with outgoing velocity",
        ));
    }
    let o = FlowOptions { t_max, ..*opts };
    let hit = integrate_to_section(sys, y0, &o, false)?;
    if hit.grazing {
        return Err(BebError::Grazing {
            time: hit.t,
            velocity: hit.velocity,
        });
    }
    Ok((hit.y, hit.t))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub flow: FlowOptions,
    pub v_stick: f64,
    pub chattering_cap: usize,
    pub max_events: usize,
    /// Keep dense steps for every arc (needed for trajectory output).
    pub record: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            flow: FlowOptions::default(),
            v_stick: V_STICK,
            chattering_cap: CHATTERING_CAP,
            max_events: 1_000_000,
            record: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactEvent {
    pub time: f64,
    pub state_pre: Vec<f64>,
    pub state_post: Vec<f64>,
    pub velocity_pre: f64,
    pub grazing_flag: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Free,
    Sticking,
}

#[derive(Debug, Clone)]
pub struct Segment {
    pub kind: SegmentKind,
    pub t_start: f64,
    pub t_end: f64,
    /// Dense steps in local time, starting at 0.
    pub steps: Vec<DenseStep>,
}

impl Segment {
    /// State at absolute time t, when t lies in this segment.
    pub fn eval(&self, t: f64) -> Option<Vec<f64>> {
        if t < self.t_start || t > self.t_end {
            return None;
        }
        let local = t - self.t_start;
        let step = self
            .steps
            .iter()
            .find(|s| local <= s.t1())
            .or_else(|| self.steps.last())?;
        Some(step.eval(local))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    TimeLimit,
    Sticking,
    ChatteringCap,
    EventCountCap,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub segments: Vec<Segment>,
    pub events: Vec<ImpactEvent>,
    pub terminated_by: Termination,
    pub final_time: f64,
    pub final_state: Vec<f64>,
}

pub fn simulate(
    model: &HybridModel,
    x0: &Vector,
    p: ParamPoint,
    t_end: f64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    if x0.len() != model.n() {
        return Err(BebError::invalid(format!("x0: expected length {}", model.n())));
    }
    if !x0.iter().all(|v| v.is_finite()) || !t_end.is_finite() {
        return Err(BebError::invalid("non-finite simulation input"));
    }
    simulate_system(&ModelAt::new(model, p), x0, t_end, opts)
}

fn project_to_surface<S: HybridSystem + ?Sized>(sys: &S, x: &Vector) -> Vector {
    let c = sys.normal();
    x - c * (c.dot(x) / c.dot(c))
}

pub fn simulate_system<S: HybridSystem + ?Sized>(
    sys: &S,
    x0: &Vector,
    t_end: f64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    let mut t = 0.0;
    let mut x = x0.clone();
    let mut segments = Vec::new();
    let mut events: Vec<ImpactEvent> = Vec::new();
    let mut chatter_run = 0usize;
    let mut last_gap = f64::INFINITY;
    let mut last_post_speed = f64::INFINITY;

    let finish = |segments, events, why, t, x: &Vector| Trajectory {
        segments,
        events,
        terminated_by: why,
        final_time: t,
        final_state: x.iter().copied().collect(),
    };

    loop {
        if t >= t_end {
            return Ok(finish(segments, events, Termination::TimeLimit, t, &x));
        }
        let on_surface = sys.h(&x).abs() <= boundary_tol(&x);
        let v = sys.velocity(&x);
        let f_scale = sys.field(&x).norm().max(1.0);

        if on_surface && v.abs() < opts.v_stick * f_scale && sys.acceleration(&x) < 0.0 {
            let (seg, t_rel, x_rel, released) = stick(sys, &x, t, t_end, opts)?;
            segments.push(seg);
            t = t_rel;
            x = x_rel;
            if !released {
                return Ok(finish(segments, events, Termination::Sticking, t, &x));
            }
            chatter_run = 0;
            last_gap = f64::INFINITY;
            last_post_speed = f64::INFINITY;
            continue;
        }

        let (x_pre, t_hit, seg) = if on_surface && v < 0.0 {
            (x.clone(), t, None)
        } else {
            let fo = FlowOptions {
                t_max: t_end - t,
                ..opts.flow
            };
            match integrate_to_section(sys, &x, &fo, opts.record) {
                Ok(hit) => {
                    let seg = Segment {
                        kind: SegmentKind::Free,
                        t_start: t,
                        t_end: t + hit.t,
                        steps: hit.steps,
                    };
                    (hit.y, t + hit.t, Some(seg))
                }
                Err(BebError::NoReturn(_)) => {
                    let (seg, x_end) = free_until(sys, &x, t, t_end, opts)?;
                    segments.push(seg);
                    return Ok(finish(segments, events, Termination::TimeLimit, t_end, &x_end));
                }
                Err(e) => return Err(e),
            }
        };
        if let Some(s) = seg {
            segments.push(s);
        }

        let x_pre = project_to_surface(sys, &x_pre);
        let v_pre = sys.velocity(&x_pre).min(0.0);
        let x_post = project_to_surface(sys, &(&x_pre + sys.restitution(&x_pre) * v_pre));
        let gap = t_hit - events.last().map_or(f64::NEG_INFINITY, |e| e.time);
        events.push(ImpactEvent {
            time: t_hit,
            state_pre: x_pre.iter().copied().collect(),
            state_post: x_post.iter().copied().collect(),
            velocity_pre: v_pre,
            grazing_flag: v_pre.abs() < opts.flow.v_graze,
        });
        t = t_hit;
        x = x_post;

        let post_speed = sys.velocity(&x).abs();
        if gap < last_gap && post_speed < last_post_speed {
            chatter_run += 1;
        } else {
            chatter_run = 0;
        }
        last_gap = gap;
        last_post_speed = post_speed;
        if chatter_run >= opts.chattering_cap {
            return Ok(finish(segments, events, Termination::ChatteringCap, t, &x));
        }
        if events.len() >= opts.max_events {
            return Ok(finish(segments, events, Termination::EventCountCap, t, &x));
        }
    }
}

fn free_until<S: HybridSystem + ?Sized>(
    sys: &S,
    x: &Vector,
    t: f64,
    t_end: f64,
    opts: &SimOptions,
) -> Result<(Segment, Vector)> {
    let rhs = |y: &[f64], out: &mut [f64]| sys.field_into(y, out);
    let mut steps = Vec::new();
    let out = integrate(rhs, 0.0, x.as_slice(), t_end - t, &opts.flow.tol, |s| {
        if opts.record {
            steps.push(s.clone());
        }
        StepControl::Continue
    })?;
    Ok((
        Segment {
            kind: SegmentKind::Free,
            t_start: t,
            t_end,
            steps,
        },
        Vector::from_vec(out.y),
    ))
}

/// Follows the sticking field until the relative acceleration turns
/// non-negative or t_end. Returns (segment, time, state, released).
fn stick<S: HybridSystem + ?Sized>(
    sys: &S,
    x: &Vector,
    t: f64,
    t_end: f64,
    opts: &SimOptions,
) -> Result<(Segment, f64, Vector, bool)> {
    let n = sys.dim();
    let rhs = |y: &[f64], out: &mut [f64]| {
        let fs = sys.sticking_field(&Vector::from_column_slice(y));
        out.copy_from_slice(fs.as_slice());
    };
    let accel = |y: &[f64]| sys.acceleration(&Vector::from_column_slice(y));
    let mut steps = Vec::new();
    let mut release: Option<(f64, Vec<f64>)> = None;
    let samples = opts.flow.samples_per_step.max(2);
    let mut buf = vec![0.0; n];
    integrate(rhs, 0.0, x.as_slice(), t_end - t, &opts.flow.tol, |s| {
        if opts.record {
            steps.push(s.clone());
        }
        let mut prev_t = s.t0;
        for i in 1..=samples {
            let ti = s.t0 + s.h * i as f64 / samples as f64;
            s.eval_into(ti, &mut buf);
            if accel(&buf) >= 0.0 {
                let tr = bracketed_root(
                    |tt| {
                        let y = s.eval(tt);
                        accel(&y)
                    },
                    prev_t,
                    ti,
                    1e-14,
                );
                release = Some((tr, s.eval(tr)));
                return StepControl::Stop;
            }
            prev_t = ti;
        }
        StepControl::Continue
    })
    .map(|_| ())?;
    match release {
        Some((tr, y)) => {
            let y = project_to_surface(sys, &Vector::from_vec(y));
            Ok((
                Segment {
                    kind: SegmentKind::Sticking,
                    t_start: t,
                    t_end: t + tr,
                    steps,
                },
                t + tr,
                y,
                true,
            ))
        }
        None => {
            let last = steps
                .last()
                .map(|s: &DenseStep| Vector::from_vec(s.y1.clone()))
                .unwrap_or_else(|| x.clone());
            Ok((
                Segment {
                    kind: SegmentKind::Sticking,
                    t_start: t,
                    t_end,
                    steps,
                },
                t_end,
                last,
                false,
            ))
        }
    }
}

#[derive(Debug, Clone)]
pub struct FloquetResult {
    pub period: f64,
    /// Eigenvalues of the full n×n product of saltation and monodromy.
    pub multipliers: Vec<Complex<f64>>,
    /// The n-1 multipliers left after removing the flow direction.
    pub nontrivial: Vec<Complex<f64>>,
    pub product: Matrix,
    pub saltation: Matrix,
    pub pre_impact: Vector,
}

/// S = DR + (F(R(x)) - DR F(x)) grad_H^T / v(x) at a pre-impact point x.
pub fn saltation_matrix<S: HybridSystem + ?Sized>(sys: &S, x_pre: &Vector) -> Result<Matrix> {
    let f_pre = sys.field(x_pre);
    let v = sys.normal().dot(&f_pre);
    let n = sys.dim();
    if v.abs() < V_GRAZE * f_pre.norm().max(1.0) {
        return Err(BebError::Grazing { time: 0.0, velocity: v });
    }
    let dr = sys.reset_jacobian(x_pre);
    let f_post = sys.field(&sys.reset(x_pre));
    let jump = f_post - &dr * &f_pre;
    let mut s = dr;
    s += (&jump * sys.normal().transpose()) / v;
    debug_assert_eq!(s.nrows(), n);
    Ok(s)
}

/// Multipliers of the cycle through the post-impact point `x_post`.
pub fn floquet_via_variational<S: HybridSystem + ?Sized>(
    sys: &S,
    x_post: &Vector,
    opts: &FlowOptions,
) -> Result<FloquetResult> {
    let n = sys.dim();
    let aug = |z: &[f64], out: &mut [f64]| {
        sys.field_into(&z[..n], &mut out[..n]);
        let j = sys.jacobian(&Vector::from_column_slice(&z[..n]));
        for col in 0..n {
            for row in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += j[(row, k)] * z[n + col * n + k];
                }
                out[n + col * n + row] = acc;
            }
        }
    };
    let mut z0 = vec![0.0; n + n * n];
    z0[..n].copy_from_slice(x_post.as_slice());
    for i in 0..n {
        z0[n + i * n + i] = 1.0;
    }

    // Locate the arrival with the state-only flow, then polish the augmented
    // state at that time with exact steps.
    let hit = integrate_to_section(sys, x_post, opts, false)?;
    if hit.grazing {
        return Err(BebError::Grazing {
            time: hit.t,
            velocity: hit.velocity,
        });
    }
    let mut z = z0.clone();
    let mut t = 0.0;
    integrate(aug, 0.0, &z0, hit.t, &opts.tol, |s| {
        t = s.t1();
        z.copy_from_slice(&s.y1);
        StepControl::Continue
    })?;
    if (t - hit.t).abs() > 1e-12 * hit.t.max(1.0) {
        z = single_step(&aug, &z, hit.t - t);
    }
    let x_pre = Vector::from_column_slice(&z[..n]);
    let phi = Matrix::from_column_slice(n, n, &z[n..]);
    let s = saltation_matrix(sys, &x_pre)?;
    let product = &s * &phi;

    let back = sys.reset(&x_pre);
    let mismatch = (&back - x_post).norm();
    if mismatch > 1e-6 * x_post.norm().max(1.0) {
        return Err(BebError::domain(format!(
            "state does not lie on a cycle (return mismatch {mismatch:.3e})"
        )));
    }

    let multipliers: Vec<Complex<f64>> = product.complex_eigenvalues().iter().copied().collect();
    let nontrivial = quotient_eigenvalues(&product, &sys.field(x_post));
    Ok(FloquetResult {
        period: hit.t,
        multipliers,
        nontrivial,
        product,
        saltation: s,
        pre_impact: x_pre,
    })
}

/// Eigenvalues of `m` on the quotient by the invariant direction `dir`.
fn quotient_eigenvalues(m: &Matrix, dir: &Vector) -> Vec<Complex<f64>> {
    let n = m.nrows();
    let d = dir.normalize();
    // Orthonormal basis with d first.
    let mut basis = Matrix::zeros(n, n);
    basis.set_column(0, &d);
    let mut k = 1;
    for e in 0..n {
        if k == n {
            break;
        }
        let mut v = Vector::zeros(n);
        v[e] = 1.0;
        for j in 0..k {
            let bj = basis.column(j).into_owned();
            v -= &bj * bj.dot(&v);
        }
        let nv = v.norm();
        if nv > 1e-8 {
            basis.set_column(k, &(v / nv));
            k += 1;
        }
    }
    let inv = basis.transpose();
    let t = &inv * m * &basis;
    let block = t.view((1, 1), (n - 1, n - 1)).into_owned();
    block.complex_eigenvalues().iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HybridModel, ModelAt, ParamPoint};
    use std::f64::consts::PI;

    /// x1'' = -x1 with impacts at x1 = 0 and restitution 0.5.
    fn bouncer() -> HybridModel {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        HybridModel::new(a, Vector::zeros(2), Vector::from_vec(vec![0.0, 1.5]), Vector::from_vec(vec![1.0, 0.0])).unwrap()
    }

    #[test]
    fn root_of_cosine() {
        let r = bracketed_root(f64::cos, 1.0, 2.0, 1e-15);
        assert!((r - PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn half_period_flight() {
        let m = bouncer();
        let sys = ModelAt::new(&m, ParamPoint::default());
        let hit = integrate_to_section(&sys, &Vector::from_vec(vec![0.0, 1.0]), &FlowOptions::default(), false).unwrap();
        assert!((hit.t - PI).abs() < 1e-9);
        assert!((hit.velocity + 1.0).abs() < 1e-9);
        assert!(!hit.grazing);
    }

    #[test]
    fn no_return_is_reported() {
        // x1' = 1: never comes back.
        let m = HybridModel::new(Matrix::zeros(2, 2), Vector::from_vec(vec![1.0, 0.0]), Vector::from_vec(vec![1.0, 0.0]), Vector::from_vec(vec![1.0, 0.0]))
            .unwrap();
        let sys = ModelAt::new(&m, ParamPoint::new(1.0, 0.0));
        let opts = FlowOptions { t_max: 5.0, ..FlowOptions::default() };
        let r = integrate_to_section(&sys, &Vector::from_vec(vec![0.1, 0.0]), &opts, false);
        assert!(matches!(r, Err(BebError::NoReturn(_))), "{r:?}");
    }

    #[test]
    fn impacts_decay_geometrically() {
        let m = bouncer();
        let tr = simulate(&m, &Vector::from_vec(vec![0.0, 1.0]), ParamPoint::default(), 3.5 * PI, &SimOptions::default()).unwrap();
        assert_eq!(tr.events.len(), 3);
        for (k, e) in tr.events.iter().enumerate() {
            assert!((e.time - PI * (k + 1) as f64).abs() < 1e-8, "{}", e.time);
            assert!((e.velocity_pre + 0.5f64.powi(k as i32)).abs() < 1e-8);
            assert!(e.state_pre[0].abs() < 1e-10);
            assert!((e.state_post[1] + 0.5 * e.state_pre[1]).abs() < 1e-12);
        }
        assert_eq!(tr.terminated_by, Termination::TimeLimit);
        assert!((tr.final_time - 3.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn recorded_segments_cover_flights() {
        let m = bouncer();
        let tr = simulate(&m, &Vector::from_vec(vec![0.5, 0.0]), ParamPoint::default(), 4.0, &SimOptions::default()).unwrap();
        let seg = &tr.segments[0];
        let mid = 0.5 * (seg.t_start + seg.t_end);
        let x = seg.eval(mid).unwrap();
        assert!((x[0] - 0.5 * mid.cos()).abs() < 1e-9);
        assert!(seg.eval(seg.t_end + 1.0).is_none());
    }

    #[test]
    fn saltation_maps_field_to_field() {
        let m = bouncer();
        let sys = ModelAt::new(&m, ParamPoint::default());
        let x = Vector::from_vec(vec![0.0, -0.7]);
        let s = saltation_matrix(&sys, &x).unwrap();
        let lhs = &s * sys.field(&x);
        let rhs = sys.field(&sys.reset(&x));
        assert!((lhs - rhs).norm() < 1e-14);
        assert!(matches!(saltation_matrix(&sys, &Vector::zeros(2)), Err(BebError::Grazing { .. })));
    }

    #[test]
    fn rejects_bad_input() {
        let m = bouncer();
        let p = ParamPoint::default();
        assert!(simulate(&m, &Vector::zeros(3), p, 1.0, &SimOptions::default()).is_err());
        assert!(simulate(&m, &Vector::from_vec(vec![f64::NAN, 0.0]), p, 1.0, &SimOptions::default()).is_err());
    }
}
