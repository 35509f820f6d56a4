//! Codimension-two points, branches of one-impact cycles in mu, curves of
//! saddle-node and period-doubling points in (mu, eta), and brute-force
//! bifurcation diagrams by simulation.

use nalgebra::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibria::pseudo_equilibrium;
use crate::error::{BebError, Result};
use crate::flow::{simulate, SimOptions};
use crate::model::{HybridModel, Matrix, ParamPoint, Vector};
use crate::models::ModelFamily;
use crate::normalform::BifKind;
use crate::poincare::{
    fd_jacobian_adaptive, fixed_point_of, linear_cycle_candidates, FixedPointResult, MapFamily,
    UnfoldingMap, FIXED_POINT_RESIDUAL,
};

/// Step for the directional derivative DP v inside the extended systems.
const DIR_STEP: f64 = 1e-3;
const EXT_TOL: f64 = 1e-10;
const EXT_MAX_ITER: usize = 50;

/// DP(u) v by a fourth-order central stencil.
fn directional<M: UnfoldingMap + ?Sized>(map: &M, u: &Vector, v: &Vector, mu: f64, eta: f64) -> Result<Vector> {
    let h = DIR_STEP;
    let p1 = map.eval(&(u + v * h), mu, eta)? - map.eval(&(u - v * h), mu, eta)?;
    let p2 = map.eval(&(u + v * (2.0 * h)), mu, eta)? - map.eval(&(u - v * (2.0 * h)), mu, eta)?;
    Ok((p1 * 8.0 - p2) / (12.0 * h))
}

/// Which parameters are unknowns of the extended system.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Free {
    Eta { mu: f64 },
    Mu { eta: f64 },
    Both,
}

/// Unknowns (u, v, params) with residual
/// [P(u) - u; DP(u) v - lambda0 v; |v|^2 - 1].
struct Extended<'a, M: UnfoldingMap + ?Sized> {
    map: &'a M,
    lambda0: f64,
    free: Free,
}

impl<M: UnfoldingMap + ?Sized> Extended<'_, M> {
    fn dim_u(&self) -> usize {
        self.map.dim()
    }

    fn split(&self, x: &Vector) -> (Vector, Vector, f64, f64) {
        let k = self.dim_u();
        let u = x.rows(0, k).into_owned();
        let v = x.rows(k, k).into_owned();
        let (mu, eta) = match self.free {
            Free::Eta { mu } => (mu, x[2 * k]),
            Free::Mu { eta } => (x[2 * k], eta),
            Free::Both => (x[2 * k], x[2 * k + 1]),
        };
        (u, v, mu, eta)
    }

    fn residual(&self, x: &Vector) -> Result<Vector> {
        let k = self.dim_u();
        let (u, v, mu, eta) = self.split(x);
        let pu = self.map.eval(&u, mu, eta)?;
        let dpv = directional(self.map, &u, &v, mu, eta)?;
        let mut r = Vector::zeros(2 * k + 1);
        r.rows_mut(0, k).copy_from(&(pu - &u));
        r.rows_mut(k, k).copy_from(&(dpv - &v * self.lambda0));
        r[2 * k] = v.dot(&v) - 1.0;
        Ok(r)
    }

    fn jacobian(&self, x: &Vector) -> Result<Matrix> {
        let m = 2 * self.dim_u() + 1;
        let cols: Vec<Result<Vector>> = (0..x.len())
            .into_par_iter()
            .map(|j| {
                let h = 1e-6 * x[j].abs().max(1.0);
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                Ok((self.residual(&xp)? - self.residual(&xm)?) / (2.0 * h))
            })
            .collect();
        let mut jac = Matrix::zeros(m, x.len());
        for (j, c) in cols.into_iter().enumerate() {
            jac.set_column(j, &c?);
        }
        Ok(jac)
    }

    /// Newton on the square system; `extra` appends a linear equation
    /// t^T (x - x_ref) = ds for pseudo-arclength steps.
    fn solve(&self, x0: &Vector, extra: Option<(&Vector, &Vector, f64)>) -> Result<(Vector, f64, usize)> {
        let eval = |x: &Vector| -> Result<Vector> {
            let r = self.residual(x)?;
            Ok(match extra {
                None => r,
                Some((t, xr, ds)) => {
                    let mut full = Vector::zeros(r.len() + 1);
                    full.rows_mut(0, r.len()).copy_from(&r);
                    full[r.len()] = t.dot(&(x - xr)) - ds;
                    full
                }
            })
        };
        let mut x = x0.clone();
        let mut r = eval(&x)?;
        let mut nr = r.norm();
        for it in 0..EXT_MAX_ITER {
            if nr < EXT_TOL {
                return Ok((x, nr, it));
            }
            let mut jac = self.jacobian(&x)?;
            if let Some((t, _, _)) = extra {
                let m = jac.nrows();
                jac = jac.insert_row(m, 0.0);
                jac.set_row(m, &t.transpose());
            }
            if jac.nrows() != jac.ncols() {
                return Err(BebError::invalid("extended system is not square"));
            }
            let dx = jac
                .lu()
                .solve(&(-&r))
                .ok_or_else(|| BebError::degenerate("extended Jacobian is singular"))?;
            let mut lam = 1.0;
            let mut accepted = false;
            for _ in 0..=10 {
                let trial = &x + &dx * lam;
                if let Ok(rt) = eval(&trial) {
                    if rt.norm() < nr {
                        x = trial;
                        nr = rt.norm();
                        r = rt;
                        accepted = true;
                        break;
                    }
                }
                lam *= 0.5;
            }
            if !accepted {
                if nr < 1e3 * EXT_TOL {
                    return Ok((x, nr, it));
                }
                return Err(BebError::no_convergence("extended system", it + 1, nr));
            }
            if dx.norm() * lam < 1e-13 * x.norm().max(1.0) && nr < 1e3 * EXT_TOL {
                return Ok((x, nr, it + 1));
            }
        }
        if nr < 1e3 * EXT_TOL {
            return Ok((x, nr, EXT_MAX_ITER));
        }
        Err(BebError::no_convergence("extended system", EXT_MAX_ITER, nr))
    }
}

fn stack(parts: &[&[f64]]) -> Vector {
    Vector::from_vec(parts.iter().flat_map(|p| p.iter().copied()).collect())
}

fn nearest_multiplier(ms: &[Complex<f64>], target: f64) -> Option<Complex<f64>> {
    ms.iter()
        .copied()
        .min_by(|a, b| {
            let da = (a - Complex::new(target, 0.0)).norm();
            let db = (b - Complex::new(target, 0.0)).norm();
            da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
        })
}

fn eigvec_near(jac: &Matrix, target: f64) -> Vector {
    let n = jac.nrows();
    let svd = (jac - Matrix::identity(n, n) * target).svd(false, true);
    let vt = svd.v_t.expect("V^T");
    let k = svd.singular_values.imin();
    let mut v: Vector = vt.row(k).transpose();
    v /= v.norm();
    if v[v.iamax()] < 0.0 {
        v = -v;
    }
    v
}

/// Fixed points of the blown-up map, seeded from the affine cycle candidates.
pub fn cycles_at(family: &MapFamily<'_>, mu: f64, eta: f64, t_max: f64) -> Vec<(Vector, FixedPointResult)> {
    let cands = family
        .with_map(mu, eta, |m| linear_cycle_candidates(m, t_max, (t_max * 40.0) as usize))
        .unwrap_or_default();
    let mut out: Vec<(Vector, FixedPointResult)> = Vec::new();
    for c in cands {
        let res = family.with_map(mu, eta, |m| crate::poincare::fixed_point(m, &c.u));
        if let Ok(fp) = res {
            if !out
                .iter()
                .any(|(u, _)| (u - &fp.u_hat).norm() < 1e-7 * u.norm().max(1.0))
            {
                out.push((fp.u_hat.clone(), fp));
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct Codim2Point {
    pub kind: BifKind,
    pub eta0: f64,
    pub u_hat: Vector,
    /// Critical eigenvector from the extended system.
    pub v: Vector,
    pub residual: f64,
    pub iterations: usize,
    pub fixed_point: FixedPointResult,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Codim2Options {
    pub scan_points: usize,
    /// Longest flight time searched for seeds.
    pub t_max: f64,
    /// Scan cycles tried as Newton seeds, nearest multiplier first.
    pub max_seeds: usize,
    pub flow: crate::flow::FlowOptions,
}

impl Default for Codim2Options {
    fn default() -> Self {
        Codim2Options {
            scan_points: 21,
            t_max: 60.0,
            max_seeds: 8,
            flow: crate::flow::FlowOptions::precise(),
        }
    }
}

/// Finds eta in the bracket where the blown-up map at mu = 0 has a fixed
/// point with multiplier lambda0. The bracket is scanned for the cycle whose
/// multiplier is closest to lambda0; the point is then solved from the
/// extended system in (u, v, eta), which stays regular at a fold.
pub fn find_codim2(
    family: &dyn ModelFamily,
    kind: BifKind,
    bracket: (f64, f64),
    opts: &Codim2Options,
) -> Result<Codim2Point> {
    let (lo, hi) = if bracket.0 <= bracket.1 { bracket } else { (bracket.1, bracket.0) };
    if !lo.is_finite() || !hi.is_finite() || lo == hi {
        return Err(BebError::invalid("bracket: need two distinct finite values"));
    }
    let fam = MapFamily::new(family, lo)?.with_flow(opts.flow);
    let lambda0 = kind.lambda0();
    let n = opts.scan_points.max(3);
    let scans: Vec<Vec<(f64, f64, Vector, Vector)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let eta = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let mut found = Vec::new();
            for (u, fp) in cycles_at(&fam, 0.0, eta, opts.t_max) {
                if let Some(l) = nearest_multiplier(&fp.multipliers, lambda0) {
                    let dist = (l - Complex::new(lambda0, 0.0)).norm();
                    found.push((dist, eta, u, eigvec_near(&fp.jacobian, l.re)));
                }
            }
            found
        })
        .collect();
    let mut seeds: Vec<(f64, f64, Vector, Vector)> = scans.into_iter().flatten().collect();
    if seeds.is_empty() {
        return Err(BebError::no_convergence("codim-2 scan: no cycle in bracket", n, f64::NAN));
    }
    seeds.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let ext = Extended {
        map: &fam,
        lambda0,
        free: Free::Eta { mu: 0.0 },
    };
    let span = hi - lo;
    let mut last_err = None;
    let mut solved = None;
    for (_, eta_s, u_s, v_s) in seeds.iter().take(opts.max_seeds.max(1)) {
        let x0 = stack(&[u_s.as_slice(), v_s.as_slice(), &[*eta_s]]);
        match ext.solve(&x0, None) {
            Ok((x, residual, iterations)) => {
                let (u, v, _, eta0) = ext.split(&x);
                if eta0 < lo - 1e-9 * span || eta0 > hi + 1e-9 * span {
                    last_err = Some(BebError::no_convergence(
                        format!("codim-2 point left the bracket (eta = {eta0})"),
                        iterations,
                        residual,
                    ));
                    continue;
                }
                solved = Some((u, v, eta0, residual, iterations));
                break;
            }
            Err(e) => last_err = Some(e),
        }
    }
    let Some((u, v, eta0, residual, iterations)) = solved else {
        return Err(last_err.unwrap_or_else(|| BebError::no_convergence("codim-2 point", 0, f64::NAN)));
    };
    let fixed_point = fam.with_map(0.0, eta0, |m| crate::poincare::fixed_point(m, &u))?;
    let mut v = &v / v.norm();
    if v[v.iamax()] < 0.0 {
        v = -v;
    }
    Ok(Codim2Point {
        kind,
        eta0,
        u_hat: fixed_point.u_hat.clone(),
        v,
        residual,
        iterations,
        fixed_point,
    })
}

/// Solves for the SN or PD point in mu at fixed eta, starting from (u, v, mu).
pub fn refine_in_mu<M: UnfoldingMap + ?Sized>(
    map: &M,
    kind: BifKind,
    u: &Vector,
    v: &Vector,
    mu: f64,
    eta: f64,
) -> Result<(f64, Vector, Vector)> {
    let ext = Extended {
        map,
        lambda0: kind.lambda0(),
        free: Free::Mu { eta },
    };
    let x0 = stack(&[u.as_slice(), v.as_slice(), &[mu]]);
    let (x, _, _) = ext.solve(&x0, None)?;
    let (u, v, mu, _) = ext.split(&x);
    Ok((mu, u, v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchEvent {
    #[serde(rename = "SN")]
    SaddleNode,
    #[serde(rename = "PD")]
    PeriodDoubling,
    #[serde(rename = "grazing")]
    Grazing,
    #[serde(rename = "BEB")]
    Beb,
}

#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub mu: f64,
    pub eta: f64,
    pub u_hat: Vector,
    pub period: f64,
    pub multipliers: Vec<Complex<f64>>,
    pub residual: f64,
    pub min_interior_h: Option<f64>,
    pub event: Option<BranchEvent>,
}

impl BranchPoint {
    /// The real multiplier nearest `target`.
    pub fn multiplier_near(&self, target: f64) -> Option<f64> {
        nearest_multiplier(&self.multipliers, target).map(|z| z.re)
    }
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    /// Why the branch stopped before the end of the range, if it did.
    pub truncated: Option<String>,
}

impl Branch {
    pub fn events(&self) -> impl Iterator<Item = &BranchPoint> {
        self.points.iter().filter(|p| p.event.is_some())
    }

    pub fn event(&self, e: BranchEvent) -> Option<&BranchPoint> {
        self.points.iter().find(|p| p.event == Some(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationOptions {
    pub step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub max_points: usize,
    /// Interior minimum of H below which the cycle counts as grazing.
    pub graze_h: f64,
    /// Resolution of event refinement in mu.
    pub event_tol: f64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            step: 1e-4,
            min_step: 1e-7,
            max_step: 1e-3,
            max_points: 100_000,
            graze_h: 1e-8,
            event_tol: 1e-8,
        }
    }
}

fn branch_point<M: UnfoldingMap + ?Sized>(map: &M, u: &Vector, mu: f64, eta: f64) -> Result<BranchPoint> {
    let (u_hat, residual, _, _) = fixed_point_of(|w| map.eval(w, mu, eta), u)?;
    if residual > FIXED_POINT_RESIDUAL {
        return Err(BebError::no_convergence("fixed point", 0, residual));
    }
    let step = map.apply(&u_hat, mu, eta)?;
    let jac = fd_jacobian_adaptive(|w| map.eval(w, mu, eta), &u_hat, 1e-2 * u_hat.norm().max(1e-2))?;
    Ok(BranchPoint {
        mu,
        eta,
        period: step.period,
        multipliers: jac.matrix.complex_eigenvalues().iter().copied().collect(),
        residual,
        min_interior_h: step.min_interior_h,
        event: None,
        u_hat,
    })
}

/// Continues a one-impact cycle in mu from (mu_start, u_seed) towards
/// mu_end at fixed eta, tagging SN, PD, grazing and mu = 0 crossings.
pub fn continue_cycle<M: UnfoldingMap + ?Sized>(
    map: &M,
    eta: f64,
    u_seed: &Vector,
    mu_range: (f64, f64),
    opts: &ContinuationOptions,
) -> Result<Branch> {
    let (mu0, mu1) = mu_range;
    let dir = if mu1 >= mu0 { 1.0 } else { -1.0 };
    let mut points = vec![branch_point(map, u_seed, mu0, eta)?];
    let mut h = opts.step.clamp(opts.min_step, opts.max_step);
    let mut truncated = None;
    while points.len() < opts.max_points {
        let last = points.last().expect("non-empty");
        if (mu1 - last.mu) * dir <= 0.0 {
            break;
        }
        let mu_next = if (last.mu + dir * h - mu1) * dir > 0.0 { mu1 } else { last.mu + dir * h };
        let guess = if points.len() >= 2 {
            let prev = &points[points.len() - 2];
            let s = (mu_next - last.mu) / (last.mu - prev.mu);
            &last.u_hat + (&last.u_hat - &prev.u_hat) * s
        } else {
            last.u_hat.clone()
        };
        match branch_point(map, &guess, mu_next, eta) {
            Ok(p) if (&p.u_hat - &last.u_hat).norm() < 0.1 * last.u_hat.norm().max(1e-3) + 1e-12 => {
                let grazing_now = p.min_interior_h.is_some_and(|m| m < opts.graze_h);
                let prev = points.last().expect("non-empty").clone();
                detect_events(map, eta, &prev, p, opts, &mut points);
                if grazing_now {
                    truncated = Some("grazing".into());
                    break;
                }
                h = (h * 1.5).min(opts.max_step);
            }
            _ => {
                h *= 0.5;
                if h < opts.min_step {
                    let last = points.last().expect("non-empty").clone();
                    let why = classify_failure(map, eta, &last, dir, opts, &mut points);
                    truncated = Some(why);
                    break;
                }
            }
        }
    }
    Ok(Branch { points, truncated })
}

/// Adds `p` to the branch, inserting refined event points between `prev` and `p`.
fn detect_events<M: UnfoldingMap + ?Sized>(
    map: &M,
    eta: f64,
    prev: &BranchPoint,
    mut p: BranchPoint,
    opts: &ContinuationOptions,
    points: &mut Vec<BranchPoint>,
) {
    if prev.mu != 0.0 && prev.mu.signum() != p.mu.signum() || p.mu == 0.0 {
        if let Ok(mut z) = branch_point(map, &prev.u_hat, 0.0, eta) {
            z.event = Some(BranchEvent::Beb);
            if p.mu == 0.0 {
                p.event = Some(BranchEvent::Beb);
            } else {
                points.push(z);
            }
        }
    }
    let pd_prev = prev.multiplier_near(-1.0).map(|l| l + 1.0);
    let pd_now = p.multiplier_near(-1.0).map(|l| l + 1.0);
    if let (Some(a), Some(b)) = (pd_prev, pd_now) {
        if a.signum() != b.signum() && a.abs() < 0.5 && b.abs() < 0.5 {
            if let Some(e) = bisect_event(map, eta, prev, &p, opts, |q| q.multiplier_near(-1.0).map(|l| l + 1.0)) {
                let mut e = e;
                e.event = Some(BranchEvent::PeriodDoubling);
                points.push(e);
            }
        }
    }
    let sn_prev = prev.multiplier_near(1.0).map(|l| l - 1.0);
    let sn_now = p.multiplier_near(1.0).map(|l| l - 1.0);
    if let (Some(a), Some(b)) = (sn_prev, sn_now) {
        if a.signum() != b.signum() && a.abs() < 0.5 && b.abs() < 0.5 {
            if let Some(mut e) = bisect_event(map, eta, prev, &p, opts, |q| q.multiplier_near(1.0).map(|l| l - 1.0)) {
                e.event = Some(BranchEvent::SaddleNode);
                points.push(e);
            }
        }
    }
    if p.min_interior_h.is_some_and(|m| m < opts.graze_h) {
        p.event = Some(BranchEvent::Grazing);
    }
    points.push(p);
}

fn bisect_event<M: UnfoldingMap + ?Sized>(
    map: &M,
    eta: f64,
    a: &BranchPoint,
    b: &BranchPoint,
    opts: &ContinuationOptions,
    g: impl Fn(&BranchPoint) -> Option<f64>,
) -> Option<BranchPoint> {
    let mut lo = a.clone();
    let mut hi = b.clone();
    let glo = g(&lo)?;
    while (hi.mu - lo.mu).abs() > opts.event_tol {
        let mid = 0.5 * (lo.mu + hi.mu);
        let guess = (&lo.u_hat + &hi.u_hat) * 0.5;
        let pm = branch_point(map, &guess, mid, eta).ok()?;
        let gm = g(&pm)?;
        if gm.signum() == glo.signum() {
            lo = pm;
        } else {
            hi = pm;
        }
    }
    Some(if g(&lo)?.abs() < g(&hi)?.abs() { lo } else { hi })
}

/// Explains why continuation could not step past `last`: a fold (refined in
/// the extended system) or a grazing boundary (refined by bisection).
fn classify_failure<M: UnfoldingMap + ?Sized>(
    map: &M,
    eta: f64,
    last: &BranchPoint,
    dir: f64,
    opts: &ContinuationOptions,
    points: &mut Vec<BranchPoint>,
) -> String {
    if let Some(l) = last.multiplier_near(1.0) {
        if (l - 1.0).abs() < 0.2 {
            let jac = fd_jacobian_adaptive(|w| map.eval(w, last.mu, eta), &last.u_hat, 1e-2 * last.u_hat.norm().max(1e-2));
            if let Ok(j) = jac {
                let v = eigvec_near(&j.matrix, l);
                if let Ok((mu_sn, u_sn, _)) = refine_in_mu(map, BifKind::SaddleNode, &last.u_hat, &v, last.mu, eta) {
                    if (mu_sn - last.mu) * dir >= -opts.min_step {
                        if let Ok(mut p) = branch_point(map, &u_sn, mu_sn, eta) {
                            p.event = Some(BranchEvent::SaddleNode);
                            points.push(p);
                            return "fold".into();
                        }
                    }
                }
            }
        }
    }
    if let Some(m) = last.min_interior_h {
        if m < 1e-2 {
            // Bisect on existence of a non-grazing cycle.
            let mut good = last.mu;
            let mut bad = last.mu + dir * opts.min_step * 2.0;
            let mut u = last.u_hat.clone();
            while (bad - good).abs() > opts.event_tol {
                let mid = 0.5 * (good + bad);
                match branch_point(map, &u, mid, eta) {
                    Ok(p) if p.min_interior_h.map_or(true, |m| m >= opts.graze_h) => {
                        good = mid;
                        u = p.u_hat;
                    }
                    _ => bad = mid,
                }
            }
            if let Ok(mut p) = branch_point(map, &u, good, eta) {
                p.event = Some(BranchEvent::Grazing);
                points.push(p);
            }
            return "grazing".into();
        }
    }
    "Newton failure at minimum step".into()
}

/// Continues every mu = 0 cycle on the slice eta = const towards `mu_max`
/// and returns the first `kind` event found together with its branch.
pub fn locate_on_slice(
    family: &MapFamily<'_>,
    kind: BifKind,
    eta: f64,
    mu_max: f64,
    t_max: f64,
    opts: &ContinuationOptions,
) -> Result<(BranchPoint, Branch)> {
    let want = match kind {
        BifKind::SaddleNode => BranchEvent::SaddleNode,
        BifKind::PeriodDoubling => BranchEvent::PeriodDoubling,
    };
    let mut cycles = cycles_at(family, 0.0, eta, t_max);
    cycles.sort_by(|(_, a), (_, b)| {
        let da = nearest_multiplier(&a.multipliers, kind.lambda0()).map_or(f64::INFINITY, |z| (z - kind.lambda0()).norm());
        let db = nearest_multiplier(&b.multipliers, kind.lambda0()).map_or(f64::INFINITY, |z| (z - kind.lambda0()).norm());
        da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
    });
    for (u, _) in cycles {
        let Ok(branch) = continue_cycle(family, eta, &u, (0.0, mu_max), opts) else {
            continue;
        };
        if let Some(p) = branch.event(want) {
            return Ok((p.clone(), branch));
        }
    }
    Err(BebError::no_convergence(
        format!("search for a {} point on the slice eta = {eta}", kind.as_str()),
        0,
        f64::NAN,
    ))
}

#[derive(Debug, Clone)]
pub struct CurvePoint {
    pub mu: f64,
    pub eta: f64,
    pub u_hat: Vector,
    pub v: Vector,
    pub period: f64,
    /// v^T DP v at the solution.
    pub lambda_crit: f64,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct BifurcationCurve {
    pub kind: BifKind,
    pub points: Vec<CurvePoint>,
    /// d eta / d mu at the first point, from the kernel of the extended Jacobian.
    pub tangent_at_origin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveOptions {
    pub ds: f64,
    pub min_ds: f64,
    pub max_ds: f64,
    pub steps: usize,
    /// Stop when mu leaves [mu_min, mu_max].
    pub mu_min: f64,
    pub mu_max: f64,
}

impl Default for CurveOptions {
    fn default() -> Self {
        CurveOptions {
            ds: 1e-3,
            min_ds: 1e-7,
            max_ds: 1e-2,
            steps: 50,
            mu_min: -f64::INFINITY,
            mu_max: f64::INFINITY,
        }
    }
}

fn kernel_direction(jac: &Matrix) -> Result<(Vector, f64)> {
    // Kernel of the m × (m + 1) Jacobian via the full SVD of its square padding.
    let (m, n) = jac.shape();
    let mut sq = Matrix::zeros(n, n);
    sq.view_mut((0, 0), (m, n)).copy_from(jac);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| BebError::degenerate("SVD failed"))?;
    let mut sv: Vec<(usize, f64)> = svd.singular_values.iter().copied().enumerate().collect();
    sv.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let t: Vector = vt.row(sv[0].0).transpose();
    // Ratio of the two smallest singular values of the padded matrix; the
    // padding row contributes one exact zero.
    let gap = if sv.len() > 2 { sv[1].1 / sv[2].1.max(1e-300) } else { 0.0 };
    Ok((t / vt.row(sv[0].0).norm(), gap))
}

/// Pseudo-arclength continuation of the SN or PD curve through
/// (mu0, eta0, u, v) in (mu, eta). The direction is chosen so mu increases.
pub fn continue_curve<M: UnfoldingMap + ?Sized>(
    map: &M,
    kind: BifKind,
    seed: (f64, f64, &Vector, &Vector),
    opts: &CurveOptions,
) -> Result<BifurcationCurve> {
    let (mu0, eta0, u0, v0) = seed;
    let ext = Extended {
        map,
        lambda0: kind.lambda0(),
        free: Free::Both,
    };
    let k = map.dim();
    let mut x = stack(&[u0.as_slice(), v0.as_slice(), &[mu0, eta0]]);
    // Correct the seed at fixed mu.
    {
        let e = Extended {
            map,
            lambda0: kind.lambda0(),
            free: Free::Eta { mu: mu0 },
        };
        let (xs, _, _) = e.solve(&stack(&[u0.as_slice(), v0.as_slice(), &[eta0]]), None)?;
        x.rows_mut(0, 2 * k).copy_from(&xs.rows(0, 2 * k));
        x[2 * k + 1] = xs[2 * k];
    }
    let (mut t, _) = kernel_direction(&ext.jacobian(&x)?)?;
    if t[2 * k] < 0.0 {
        t = -t;
    }
    let tangent_at_origin = t[2 * k + 1] / t[2 * k];
    let mk_point = |x: &Vector, residual: f64| -> Result<CurvePoint> {
        let (u, v, mu, eta) = ext.split(x);
        let dpv = directional(map, &u, &v, mu, eta)?;
        let step = map.apply(&u, mu, eta)?;
        Ok(CurvePoint {
            mu,
            eta,
            lambda_crit: v.dot(&dpv) / v.dot(&v),
            period: step.period,
            residual,
            u_hat: u,
            v,
        })
    };
    let r0 = ext.residual(&x)?.norm();
    let mut points = vec![mk_point(&x, r0)?];
    let mut ds = opts.ds;
    while points.len() <= opts.steps {
        let pred = &x + &t * ds;
        match ext.solve(&pred, Some((&t, &x, ds))) {
            Ok((xn, res, iters)) => {
                let (tn, _) = kernel_direction(&ext.jacobian(&xn)?)?;
                let tn = if tn.dot(&t) < 0.0 { -tn } else { tn };
                x = xn;
                t = tn;
                let p = mk_point(&x, res)?;
                let stop = p.mu < opts.mu_min || p.mu > opts.mu_max;
                points.push(p);
                if stop {
                    break;
                }
                if iters <= 3 {
                    ds = (ds * 1.5).min(opts.max_ds);
                }
            }
            Err(_) => {
                ds *= 0.5;
                if ds < opts.min_ds {
                    break;
                }
            }
        }
    }
    Ok(BifurcationCurve {
        kind,
        points,
        tangent_at_origin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// Velocity v just before each impact.
    ImpactVelocity,
    /// Largest x1 on each flight between impacts.
    MaxFirstState,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Seed {
    /// Absolute initial state.
    State(Vector),
    /// State mu kappa y for a blown-up point y.
    Scaled(Vector),
    /// The pseudo-equilibrium displaced by `offset` times mu along C.
    PseudoEquilibrium { offset: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagramOptions {
    pub transient: f64,
    /// Time recorded after the transient.
    pub window: f64,
    pub seeds: Vec<Seed>,
    /// Also start each mu from the final state of the previous mu (sequential).
    pub sweep_up: bool,
    pub sim: SimOptions,
}

impl Default for DiagramOptions {
    fn default() -> Self {
        DiagramOptions {
            transient: 500.0,
            window: 200.0,
            seeds: vec![Seed::PseudoEquilibrium { offset: 1.0 }],
            sweep_up: false,
            sim: SimOptions {
                record: false,
                ..SimOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagramSample {
    pub mu: f64,
    pub seed_id: usize,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct DiagramRun {
    pub samples: Vec<DiagramSample>,
    /// (mu, seed_id, reason) for runs that ended early or failed.
    pub flagged: Vec<(f64, usize, String)>,
}

/// Initial state for `seed` at (mu, eta).
pub fn seed_state(model: &HybridModel, seed: &Seed, mu: f64, eta: f64) -> Result<Vector> {
    let n = model.n();
    match seed {
        Seed::State(x) => Ok(x.clone()),
        Seed::Scaled(y) => {
            let k = crate::poincare::BlowUpScale::Normalized.kappa(model, mu)?;
            Ok(y * (mu * k))
        }
        Seed::PseudoEquilibrium { offset } => {
            let base = pseudo_equilibrium(model, ParamPoint::new(mu, eta))
                .map(|e| e.location)
                .unwrap_or_else(|_| Vector::zeros(n));
            let c = model.c();
            Ok(base + c * (offset * mu.abs() / c.norm_squared()))
        }
    }
}

fn run_one(
    model: &HybridModel,
    x0: &Vector,
    mu: f64,
    eta: f64,
    seed_id: usize,
    obs: Observable,
    opts: &DiagramOptions,
) -> (Vec<DiagramSample>, Option<String>, Vector) {
    let p = ParamPoint::new(mu, eta);
    let mut sim = opts.sim;
    let tr = match simulate(model, x0, p, opts.transient, &SimOptions { record: false, ..sim }) {
        Ok(t) => t,
        Err(e) => return (vec![], Some(e.to_string()), x0.clone()),
    };
    let x1 = Vector::from_vec(tr.final_state.clone());
    sim.record = obs == Observable::MaxFirstState;
    let run = match simulate(model, &x1, p, opts.window, &sim) {
        Ok(t) => t,
        Err(e) => return (vec![], Some(e.to_string()), x1),
    };
    let mut out = Vec::new();
    match obs {
        Observable::ImpactVelocity => {
            for e in &run.events {
                out.push(DiagramSample {
                    mu,
                    seed_id,
                    value: e.velocity_pre,
                });
            }
        }
        Observable::MaxFirstState => {
            for seg in &run.segments {
                let mut best = f64::NEG_INFINITY;
                for s in &seg.steps {
                    for i in 0..=8 {
                        let t = s.t0 + s.h * i as f64 / 8.0;
                        best = best.max(s.eval(t)[0]);
                    }
                }
                if best.is_finite() {
                    out.push(DiagramSample { mu, seed_id, value: best });
                }
            }
        }
    }
    let flag = match run.terminated_by {
        crate::flow::Termination::TimeLimit => None,
        other => Some(format!("{other:?}")),
    };
    (out, flag, Vector::from_vec(run.final_state))
}

/// Samples the attractor(s) at each mu by simulation. Results are ordered by
/// grid index, then seed, then time, and are identical across runs.
pub fn brute_force_diagram(
    model_at: &(dyn Fn(f64) -> Result<HybridModel> + Sync),
    eta: f64,
    mu_grid: &[f64],
    observable: Observable,
    opts: &DiagramOptions,
) -> Result<DiagramRun> {
    let per_mu = |mu: f64, prev: Option<&Vector>| -> Result<(Vec<DiagramSample>, Vec<(f64, usize, String)>, Option<Vector>)> {
        let model = model_at(mu)?;
        let mut samples = Vec::new();
        let mut flagged = Vec::new();
        let mut last = None;
        let mut starts: Vec<(usize, Vector)> = Vec::new();
        for (i, s) in opts.seeds.iter().enumerate() {
            starts.push((i, seed_state(&model, s, mu, eta)?));
        }
        if let Some(x) = prev {
            starts.push((opts.seeds.len(), x.clone()));
        }
        for (id, x0) in starts {
            let (s, flag, xf) = run_one(&model, &x0, mu, eta, id, observable, opts);
            samples.extend(s);
            if let Some(f) = flag {
                flagged.push((mu, id, f));
            }
            if id == opts.seeds.len() || (prev.is_none() && id == 0) {
                last = Some(xf);
            }
        }
        Ok((samples, flagged, last))
    };
    let mut samples = Vec::new();
    let mut flagged = Vec::new();
    if opts.sweep_up {
        let mut prev: Option<Vector> = None;
        for &mu in mu_grid {
            let (s, f, last) = per_mu(mu, prev.as_ref())?;
            samples.extend(s);
            flagged.extend(f);
            prev = last;
        }
    } else {
        let parts: Vec<Result<_>> = mu_grid.par_iter().map(|&mu| per_mu(mu, None)).collect();
        for p in parts {
            let (s, f, _) = p?;
            samples.extend(s);
            flagged.extend(f);
        }
    }
    Ok(DiagramRun { samples, flagged })
}

/// First grid value at which the attractor reached from `seed_id` has more
/// than `max_periodic` distinct impact values, with the last periodic value.
pub fn attractor_transition(
    run: &DiagramRun,
    mu_grid: &[f64],
    seed_id: usize,
    tol: f64,
    max_periodic: usize,
) -> Option<(f64, f64)> {
    let mut last_periodic = None;
    for &mu in mu_grid {
        let vals: Vec<f64> = run
            .samples
            .iter()
            .filter(|s| s.mu == mu && s.seed_id == seed_id)
            .map(|s| s.value)
            .collect();
        let k = distinct_values(&vals, tol).len();
        if k == 0 {
            continue;
        }
        if k > max_periodic {
            return last_periodic.map(|p| (p, mu));
        }
        last_periodic = Some(mu);
    }
    None
}

/// Groups values at one mu into clusters closer than `tol` (relative).
pub fn distinct_values(values: &[f64], tol: f64) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    let mut out: Vec<f64> = Vec::new();
    for x in v {
        match out.last() {
            Some(&l) if (x - l).abs() <= tol * scale => {}
            _ => out.push(x),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic;

    impl UnfoldingMap for Quadratic {
        fn dim(&self) -> usize {
            1
        }
        fn eval(&self, u: &Vector, mu: f64, _eta: f64) -> Result<Vector> {
            Ok(Vector::from_element(1, u[0] + mu - u[0] * u[0]))
        }
    }

    struct Flip;

    impl UnfoldingMap for Flip {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, u: &Vector, mu: f64, _eta: f64) -> Result<Vector> {
            let d0 = u[0] - 1.0;
            Ok(Vector::from_vec(vec![1.0 - (1.0 + mu) * d0 + 0.1 * d0 * d0, 0.5 * u[1]]))
        }
    }

    #[test]
    fn fold_of_quadratic_map() {
        let b = continue_cycle(&Quadratic, 0.0, &Vector::from_element(1, 0.2), (0.04, -0.01), &ContinuationOptions::default())
            .unwrap();
        let sn = b.event(BranchEvent::SaddleNode).expect("fold detected");
        assert!(sn.mu.abs() < 1e-6, "{}", sn.mu);
        assert!(sn.u_hat[0].abs() < 1e-3);
        assert_eq!(b.truncated.as_deref(), Some("fold"));
    }

    #[test]
    fn flip_of_linear_map() {
        let b = continue_cycle(&Flip, 0.0, &Vector::from_vec(vec![1.0, 0.0]), (-0.05, 0.05), &ContinuationOptions::default())
            .unwrap();
        let pd = b.event(BranchEvent::PeriodDoubling).expect("flip detected");
        assert!(pd.mu.abs() < 1e-7, "{}", pd.mu);
        assert!((pd.multiplier_near(-1.0).unwrap() + 1.0).abs() < 1e-6);
        assert!(b.truncated.is_none());
        assert!((b.points.last().unwrap().mu - 0.05).abs() < 1e-15);
    }

    #[test]
    fn clusters_values() {
        let v = [1.0, 1.0 + 1e-9, 2.0, f64::NAN, 2.0 - 1e-9, -3.0];
        assert_eq!(distinct_values(&v, 1e-6), vec![-3.0, 1.0, 2.0 - 1e-9]);
        assert!(distinct_values(&[], 1e-6).is_empty());
    }

    #[test]
    fn transition_is_first_nonperiodic_value() {
        let mut samples = Vec::new();
        let grid = [0.1, 0.2, 0.3, 0.4];
        for (i, &mu) in grid.iter().enumerate() {
            let k = if i < 2 { 2 } else { 40 };
            for j in 0..200 {
                samples.push(DiagramSample {
                    mu,
                    seed_id: 0,
                    value: -1.0 - (j % k) as f64 * 0.01,
                });
            }
        }
        let run = DiagramRun { samples, flagged: vec![] };
        assert_eq!(attractor_transition(&run, &grid, 0, 1e-6, 8), Some((0.2, 0.3)));
        assert_eq!(attractor_transition(&run, &grid, 1, 1e-6, 8), None);
    }
}
