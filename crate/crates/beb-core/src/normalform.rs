//! Critical eigendata of the return map and the coefficients of the
//! one-dimensional unfolding on the centre manifold.
//!
//! Saddle-node: z -> z + a mu + b eta + c z^2 + d mu z + e eta z + m mu^2 + n eta^2.
//! Period-doubling: z -> -z + a mu + b eta + c z^2 + d mu z + e eta z + f z^3.
//!
//! Every derivative of P is a central difference with step halving and one
//! level of Richardson extrapolation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{BebError, Result};
use crate::poincare::{fd_jacobian_adaptive, UnfoldingMap};
use crate::model::{Matrix, ParamPoint, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
pub enum BifKind {
    #[serde(rename = "SN")]
    SaddleNode,
    #[serde(rename = "PD")]
    PeriodDoubling,
}

impl BifKind {
    pub fn lambda0(&self) -> f64 {
        match self {
            BifKind::SaddleNode => 1.0,
            BifKind::PeriodDoubling => -1.0,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sn" => Ok(BifKind::SaddleNode),
            "pd" => Ok(BifKind::PeriodDoubling),
            other => Err(BebError::invalid(format!("type: expected sn or pd, got {other:?}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BifKind::SaddleNode => "SN",
            BifKind::PeriodDoubling => "PD",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalEigenData {
    /// The computed eigenvalue nearest the target.
    pub lambda: f64,
    pub lambda0: f64,
    pub v: Vector,
    pub w: Vector,
    pub normalization_residual: f64,
    pub right_residual: f64,
    pub left_residual: f64,
}

impl CriticalEigenData {
    /// The same eigenpair with (w, v) replaced by (-w, -v).
    pub fn flipped(&self) -> Self {
        CriticalEigenData {
            v: -&self.v,
            w: -&self.w,
            ..self.clone()
        }
    }
}

/// Tolerance for "simple eigenvalue near lambda0".
pub const EIG_WINDOW: f64 = 1e-4;

fn null_vector(m: &Matrix) -> Vector {
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let k = svd.singular_values.imin();
    vt.row(k).transpose()
}

/// Right and left eigenvectors of `dp` for the real eigenvalue nearest
/// `lambda0`, scaled so |v| = 1 with its largest entry positive and w^T v = 1.
pub fn critical_eigvecs(dp: &Matrix, lambda0: f64) -> Result<CriticalEigenData> {
    let n = dp.nrows();
    if n == 0 || dp.ncols() != n {
        return Err(BebError::invalid("Jacobian must be square and non-empty"));
    }
    let ev: Vec<_> = dp.complex_eigenvalues().iter().copied().collect();
    let mut order: Vec<usize> = (0..n).collect();
    let dist = |i: usize| (ev[i] - nalgebra::Complex::new(lambda0, 0.0)).norm();
    order.sort_by(|&i, &j| dist(i).partial_cmp(&dist(j)).unwrap_or(std::cmp::Ordering::Equal));
    let k = order[0];
    if dist(k) > EIG_WINDOW {
        return Err(BebError::degenerate(format!(
            "no eigenvalue within {EIG_WINDOW:e} of {lambda0} (nearest {:.6})",
            ev[k]
        )));
    }
    if n > 1 && dist(order[1]) <= EIG_WINDOW {
        return Err(BebError::degenerate(format!(
            "eigenvalue {lambda0} is not simple: two eigenvalues within {EIG_WINDOW:e}"
        )));
    }
    for &i in &order[1..] {
        if (ev[i].norm() - 1.0).abs() <= EIG_WINDOW {
            return Err(BebError::degenerate(format!(
                "another multiplier on the unit circle: {:.6}",
                ev[i]
            )));
        }
    }
    let lambda = ev[k].re;
    let id = Matrix::identity(n, n);
    let mut v = null_vector(&(dp - &id * lambda));
    v /= v.norm();
    if v[v.iamax()] < 0.0 {
        v = -v;
    }
    let mut w = null_vector(&(dp.transpose() - &id * lambda));
    let wv = w.dot(&v);
    if wv.abs() < 1e-12 {
        return Err(BebError::degenerate("left and right eigenvectors are orthogonal"));
    }
    w /= wv;
    Ok(CriticalEigenData {
        lambda,
        lambda0,
        normalization_residual: (w.dot(&v) - 1.0).abs(),
        right_residual: (dp * &v - &v * lambda).norm(),
        left_residual: (dp.transpose() * &w - &w * lambda).norm(),
        v,
        w,
    })
}

/// Solves (I - A) x = rhs. When `singular` the critical direction is removed
/// and the minimum-norm solution returned; the right-hand side must then be
/// annihilated by the left null vector `w`.
fn solve_homological(i_minus_a: &Matrix, rhs: &Vector, w: &Vector, singular: bool) -> Result<Vector> {
    if !singular {
        return i_minus_a
            .clone()
            .lu()
            .solve(rhs)
            .ok_or_else(|| BebError::degenerate("I - DP is singular"));
    }
    let scale = rhs.norm().max(1.0);
    let range_violation = w.dot(rhs).abs() / w.norm();
    if range_violation > 1e-8 * scale {
        return Err(BebError::degenerate(format!(
            "right-hand side not in the range of I - DP (|w^T r| = {range_violation:.3e})"
        )));
    }
    let svd = i_minus_a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("U");
    let vt = svd.v_t.as_ref().expect("V^T");
    let kmin = svd.singular_values.imin();
    let mut x = Vector::zeros(rhs.len());
    for k in 0..svd.singular_values.len() {
        if k == kmin {
            continue;
        }
        let coef = u.column(k).dot(rhs) / svd.singular_values[k];
        x += vt.row(k).transpose() * coef;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionVectors {
    pub w01: Vector,
    pub w11: Vector,
    pub w20: Vector,
    /// PD only: |(I-A)^-1 gamma - (w^T gamma / 2) w - w01|, the form with w
    /// in the last term.
    pub w01_alt_w_discrepancy: Option<f64>,
    /// PD only: the same with v in the last term.
    pub w01_alt_v_discrepancy: Option<f64>,
}

/// Centre-manifold corrections for a parameter direction with first
/// derivative `gamma`, quadratic term `b_vv = B(v, v)` and `b_v(x) = B(v, x)`.
pub fn cm_correction_vectors(
    dp: &Matrix,
    eig: &CriticalEigenData,
    kind: BifKind,
    gamma: &Vector,
    b_vv: &Vector,
    b_v: impl Fn(&Vector) -> Result<Vector>,
) -> Result<CorrectionVectors> {
    let n = dp.nrows();
    let id = Matrix::identity(n, n);
    let i_minus_a = &id - dp;
    let v = &eig.v;
    let w = &eig.w;
    let nu = w.dot(gamma);
    let h02 = b_vv - v * w.dot(b_vv);
    match kind {
        BifKind::SaddleNode => {
            let w01 = solve_homological(&i_minus_a, &(gamma - v * nu), w, true)?;
            let w20 = solve_homological(&i_minus_a, &h02, w, true)?;
            let bvw = b_v(&w01)?;
            let rhs = &bvw - v * w.dot(&bvw) - &w20 * nu;
            let rhs = &rhs - v * w.dot(&rhs);
            let w11 = solve_homological(&i_minus_a, &rhs, w, true)?;
            Ok(CorrectionVectors {
                w01,
                w11,
                w20,
                w01_alt_w_discrepancy: None,
                w01_alt_v_discrepancy: None,
            })
        }
        BifKind::PeriodDoubling => {
            let w01 = solve_homological(&i_minus_a, &(gamma - v * nu), w, false)?;
            let base = solve_homological(&i_minus_a, gamma, w, false)?;
            let alt_w = &base - w * (nu / 2.0);
            let alt_v = &base - v * (nu / 2.0);
            let w20 = solve_homological(&i_minus_a, &h02, w, false)?;
            let bvw = b_v(&w01)?;
            let rhs = &bvw - v * w.dot(&bvw) + &w20 * nu;
            let i_plus_a = &id + dp;
            let rhs = &rhs - v * w.dot(&rhs);
            let w11 = -solve_homological(&i_plus_a, &rhs, w, true)?;
            Ok(CorrectionVectors {
                w01_alt_w_discrepancy: Some((&alt_w - &w01).norm()),
                w01_alt_v_discrepancy: Some((&alt_v - &w01).norm()),
                w01,
                w11,
                w20,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdDiagnostic {
    /// Final step.
    pub h: f64,
    /// Relative change between the last two extrapolated estimates.
    pub change: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdOptions {
    /// First step for state directions.
    pub h0_state: f64,
    /// First step for parameter directions.
    pub h0_param: f64,
    pub rel_tol: f64,
    pub min_step: f64,
    /// Magnitude below which changes are measured absolutely.
    pub floor: f64,
}

impl Default for FdOptions {
    fn default() -> Self {
        FdOptions {
            h0_state: 2e-2,
            h0_param: 2e-2,
            rel_tol: 1e-6,
            min_step: 1e-5,
            floor: 1e-3,
        }
    }
}

/// Step halving on a second-order symmetric stencil `f(h)`. Successive
/// estimates are Richardson-combined; the one with the smallest change from
/// its predecessor is kept.
fn converge_vec(f: impl Fn(f64) -> Result<Vector>, h0: f64, o: &FdOptions) -> Result<(Vector, FdDiagnostic)> {
    let mut h = h0;
    let mut raw_prev = loop {
        match f(h) {
            Ok(v) => break v,
            Err(e) => {
                h *= 0.5;
                if h < o.min_step {
                    return Err(e);
                }
            }
        }
    };
    let mut rich_prev: Option<Vector> = None;
    let mut best: Option<(Vector, FdDiagnostic)> = None;
    loop {
        let h_next = h * 0.5;
        if h_next < o.min_step {
            break;
        }
        let raw = match f(h_next) {
            Ok(v) => v,
            Err(_) => break,
        };
        h = h_next;
        let rich = (&raw * 4.0 - &raw_prev) / 3.0;
        if let Some(rp) = &rich_prev {
            let change = (&rich - rp).norm() / rich.norm().max(o.floor);
            let better = best.as_ref().map_or(true, |(_, d)| change < d.change);
            if better {
                best = Some((
                    rich.clone(),
                    FdDiagnostic {
                        h,
                        change,
                        converged: change < o.rel_tol,
                    },
                ));
            }
            if change < o.rel_tol {
                break;
            }
        }
        rich_prev = Some(rich);
        raw_prev = raw;
    }
    match best {
        Some(b) => Ok(b),
        None => Ok((
            rich_prev.unwrap_or(raw_prev),
            FdDiagnostic {
                h,
                change: f64::INFINITY,
                converged: false,
            },
        )),
    }
}

/// Directional derivatives of an unfolding map at a base point.
struct Probe<'a, M: UnfoldingMap + ?Sized> {
    map: &'a M,
    u: &'a Vector,
    mu: f64,
    eta: f64,
    p0: Vector,
    opts: FdOptions,
}

impl<M: UnfoldingMap + ?Sized> Probe<'_, M> {
    fn at(&self, du: Option<(&Vector, f64)>, dmu: f64, deta: f64) -> Result<Vector> {
        let u = match du {
            Some((d, h)) => self.u + d * h,
            None => self.u.clone(),
        };
        self.map.eval(&u, self.mu + dmu, self.eta + deta)
    }

    fn at2(&self, x: &Vector, hx: f64, y: &Vector, hy: f64) -> Result<Vector> {
        let u = self.u + x * hx + y * hy;
        self.map.eval(&u, self.mu, self.eta)
    }

    fn d_param(&self, which: usize) -> Result<(Vector, FdDiagnostic)> {
        let (sm, se) = if which == 0 { (1.0, 0.0) } else { (0.0, 1.0) };
        converge_vec(
            |h| Ok((self.at(None, sm * h, se * h)? - self.at(None, -sm * h, -se * h)?) / (2.0 * h)),
            self.opts.h0_param,
            &self.opts,
        )
    }

    fn d2_param(&self, which: usize) -> Result<(Vector, FdDiagnostic)> {
        let (sm, se) = if which == 0 { (1.0, 0.0) } else { (0.0, 1.0) };
        converge_vec(
            |h| {
                let s = self.at(None, sm * h, se * h)? + self.at(None, -sm * h, -se * h)?;
                Ok((s - &self.p0 * 2.0) / (h * h))
            },
            self.opts.h0_param,
            &self.opts,
        )
    }

    /// B(x, y) by polarisation.
    fn bilinear(&self, x: &Vector, y: &Vector) -> Result<(Vector, FdDiagnostic)> {
        let scale = x.norm().max(y.norm()).max(1e-300);
        converge_vec(
            |h| {
                let h = h / scale;
                let a = self.at2(x, h, y, h)? - self.at2(x, h, y, -h)?;
                let b = self.at2(x, -h, y, h)? - self.at2(x, -h, y, -h)?;
                Ok((a - b) / (4.0 * h * h))
            },
            self.opts.h0_state,
            &self.opts,
        )
    }

    fn second_along(&self, v: &Vector) -> Result<(Vector, FdDiagnostic)> {
        converge_vec(
            |h| {
                let s = self.at(Some((v, h)), 0.0, 0.0)? + self.at(Some((v, -h)), 0.0, 0.0)?;
                Ok((s - &self.p0 * 2.0) / (h * h))
            },
            self.opts.h0_state,
            &self.opts,
        )
    }

    /// C(v, v, v).
    fn third_along(&self, v: &Vector) -> Result<(Vector, FdDiagnostic)> {
        converge_vec(
            |h| {
                let outer = self.at(Some((v, 2.0 * h)), 0.0, 0.0)? - self.at(Some((v, -2.0 * h)), 0.0, 0.0)?;
                let inner = self.at(Some((v, h)), 0.0, 0.0)? - self.at(Some((v, -h)), 0.0, 0.0)?;
                Ok((outer - inner * 2.0) / (2.0 * h * h * h))
            },
            self.opts.h0_state,
            &self.opts,
        )
    }

    /// D(dP/dparam) v.
    fn mixed(&self, v: &Vector, which: usize) -> Result<(Vector, FdDiagnostic)> {
        let (sm, se) = if which == 0 { (1.0, 0.0) } else { (0.0, 1.0) };
        converge_vec(
            |h| {
                let plus = self.at(Some((v, h)), sm * h, se * h)? - self.at(Some((v, -h)), sm * h, se * h)?;
                let minus = self.at(Some((v, h)), -sm * h, -se * h)? - self.at(Some((v, -h)), -sm * h, -se * h)?;
                Ok((plus - minus) / (4.0 * h * h))
            },
            self.opts.h0_state,
            &self.opts,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Genericity {
    pub transversal: bool,
    pub nondegenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalFormCoefficients {
    pub kind: BifKind,
    /// Computed critical multiplier.
    pub lambda0: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub m: f64,
    pub n: f64,
    pub genericity: Genericity,
    pub reference: ParamPoint,
    pub u_hat: Vector,
    pub eig: CriticalEigenData,
    pub jacobian: Matrix,
    /// Rate at which the fixed point drifts off the critical direction as mu
    /// varies: du/dmu minus its component along v.
    pub mu_shift: Vector,
    /// Second-order term of the centre manifold: u = u_hat + z v + z^2 h2.
    pub curvature: Vector,
    pub fd_diagnostics: BTreeMap<String, FdDiagnostic>,
    /// Alternative readings of some formulas, reported for comparison.
    pub variants: BTreeMap<String, f64>,
}

/// Relative size below which a genericity quantity counts as zero.
const GENERICITY_TOL: f64 = 1e-8;

impl NormalFormCoefficients {
    pub fn slope(&self) -> Result<f64> {
        bifurcation_slope(self)
    }

    /// Coefficients as they would be computed with (w, v) -> (-w, -v).
    pub fn sign_flipped(&self) -> Self {
        let mut out = self.clone();
        out.a = -self.a;
        out.b = -self.b;
        out.c = -self.c;
        out.m = -self.m;
        out.n = -self.n;
        out.eig = self.eig.flipped();
        out
    }
}

/// dEta/dMu of the emanating curve: -a/b (SN) or -(ac + d)/(bc + e) (PD).
pub fn bifurcation_slope(c: &NormalFormCoefficients) -> Result<f64> {
    slope_from(c.kind, c.a, c.b, c.c, c.d, c.e)
}

pub fn slope_from(kind: BifKind, a: f64, b: f64, c: f64, d: f64, e: f64) -> Result<f64> {
    let (num, den) = match kind {
        BifKind::SaddleNode => (a, b),
        BifKind::PeriodDoubling => (a * c + d, b * c + e),
    };
    if den.abs() <= GENERICITY_TOL * num.abs().max(1.0) {
        return Err(BebError::degenerate("transversality fails: slope denominator vanishes"));
    }
    Ok(-num / den)
}

pub fn genericity(kind: BifKind, a: f64, b: f64, c: f64, e: f64, f: f64) -> Genericity {
    let _ = a;
    match kind {
        BifKind::SaddleNode => Genericity {
            transversal: b.abs() > GENERICITY_TOL,
            nondegenerate: c.abs() > GENERICITY_TOL,
        },
        BifKind::PeriodDoubling => Genericity {
            transversal: (b * c + e).abs() > GENERICITY_TOL,
            nondegenerate: (c * c + f).abs() > GENERICITY_TOL,
        },
    }
}

/// Normal-form coefficients of `map` at the fixed point `u_hat` for the
/// parameters `reference`. Offsets in mu and eta are measured from there.
pub fn coefficients_fd<M: UnfoldingMap + ?Sized>(
    map: &M,
    u_hat: &Vector,
    reference: ParamPoint,
    kind: BifKind,
    opts: &FdOptions,
) -> Result<NormalFormCoefficients> {
    let jac = fd_jacobian_adaptive(
        |u| map.eval(u, reference.mu, reference.eta),
        u_hat,
        1e-2 * u_hat.norm().max(1e-2),
    )?;
    let eig = critical_eigvecs(&jac.matrix, kind.lambda0())?;
    let mut out = coefficients_with_eigvecs(map, u_hat, reference, kind, &jac.matrix, &eig, opts)?;
    out.fd_diagnostics.insert(
        "jacobian".into(),
        FdDiagnostic {
            h: jac.steps.iter().copied().fold(f64::INFINITY, f64::min),
            change: jac.rel_change,
            converged: jac.converged,
        },
    );
    Ok(out)
}

/// As `coefficients_fd` with the Jacobian and eigendata supplied.
pub fn coefficients_with_eigvecs<M: UnfoldingMap + ?Sized>(
    map: &M,
    u_hat: &Vector,
    reference: ParamPoint,
    kind: BifKind,
    dp: &Matrix,
    eig: &CriticalEigenData,
    opts: &FdOptions,
) -> Result<NormalFormCoefficients> {
    if u_hat.len() != map.dim() {
        return Err(BebError::invalid(format!(
            "fixed point: expected length {}",
            map.dim()
        )));
    }
    let p0 = map.eval(u_hat, reference.mu, reference.eta)?;
    let probe = Probe {
        map,
        u: u_hat,
        mu: reference.mu,
        eta: reference.eta,
        p0,
        opts: *opts,
    };
    let v = &eig.v;
    let w = &eig.w;
    let mut diag = BTreeMap::new();
    let mut variants = BTreeMap::new();

    let (p_mu, dg) = probe.d_param(0)?;
    diag.insert("a".to_string(), dg);
    let (p_eta, dg) = probe.d_param(1)?;
    diag.insert("b".to_string(), dg);
    let a = w.dot(&p_mu);
    let b = w.dot(&p_eta);

    let (b_vv, dg) = probe.second_along(v)?;
    diag.insert("c".to_string(), dg);
    let c = 0.5 * w.dot(&b_vv);

    let n_dim = dp.nrows();
    let i_minus_a = Matrix::identity(n_dim, n_dim) - dp;
    let singular = kind == BifKind::SaddleNode;

    let mut correction = |name: &str, gamma: &Vector, first: f64, which: usize| -> Result<(f64, f64)> {
        let (mixed, dg) = probe.mixed(v, which)?;
        diag.insert(format!("{name}_mixed"), dg);
        let x = solve_homological(&i_minus_a, &(gamma - v * first), w, singular)?;
        let corr = if x.norm() > 0.0 {
            let (bx, dg) = probe.bilinear(v, &x)?;
            diag.insert(format!("{name}_correction"), dg);
            w.dot(&bx)
        } else {
            0.0
        };
        let raw = w.dot(&mixed);
        if singular && x.norm() > 0.0 {
            // Same solve with the normalisation w^T x = 0 instead of minimum norm.
            let xb = &x - v * (w.dot(&x) / w.dot(v));
            let (bx, _) = probe.bilinear(v, &xb)?;
            variants.insert(format!("{name}_bordered"), raw + w.dot(&bx));
        }
        Ok((raw + corr, raw))
    };
    let (d, d_raw) = correction("d", &p_mu, a, 0)?;
    let (e, e_raw) = correction("e", &p_eta, b, 1)?;
    variants.insert("d_without_correction".into(), d_raw);
    variants.insert("e_without_correction".into(), e_raw);

    let (m, n) = if kind == BifKind::SaddleNode {
        let (pmm, dg) = probe.d2_param(0)?;
        diag.insert("m".to_string(), dg);
        let (pee, dg) = probe.d2_param(1)?;
        diag.insert("n".to_string(), dg);
        (0.5 * w.dot(&pmm), 0.5 * w.dot(&pee))
    } else {
        (f64::NAN, f64::NAN)
    };

    let (cvvv, dg) = probe.third_along(v)?;
    diag.insert("f_cubic".to_string(), dg);
    let r = w.dot(&cvvv) / 6.0;
    let f = match kind {
        BifKind::SaddleNode => {
            let h02 = &b_vv - v * w.dot(&b_vv);
            let x = solve_homological(&i_minus_a, &h02, w, true)?;
            let (bv, dg) = probe.bilinear(v, &x)?;
            diag.insert("f_correction".to_string(), dg);
            let (bw, _) = probe.bilinear(w, &x)?;
            variants.insert("f_w_slot".into(), r + 0.5 * w.dot(&bw));
            r + 0.5 * w.dot(&bv)
        }
        BifKind::PeriodDoubling => {
            let x = solve_homological(&i_minus_a, &b_vv, w, false)?;
            let (bv, dg) = probe.bilinear(v, &x)?;
            diag.insert("f_correction".to_string(), dg);
            let (bw, _) = probe.bilinear(w, &x)?;
            variants.insert("f_w_slot".into(), r - c * c + 0.5 * w.dot(&bw));
            r - c * c + 0.5 * w.dot(&bv)
        }
    };

    let mu_shift = {
        let x = solve_homological(&i_minus_a, &(&p_mu - v * a), w, singular)?;
        &x - v * (w.dot(&x) / w.dot(v))
    };
    let curvature = {
        let x = solve_homological(&i_minus_a, &(&b_vv * 0.5 - v * c), w, singular)?;
        &x - v * (w.dot(&x) / w.dot(v))
    };

    if kind == BifKind::PeriodDoubling {
        let base = i_minus_a
            .clone()
            .lu()
            .solve(&p_mu)
            .ok_or_else(|| BebError::degenerate("I - DP is singular"))?;
        let w01 = solve_homological(&i_minus_a, &(&p_mu - v * a), w, false)?;
        variants.insert("w01_mu_alt_w_discrepancy".into(), (&base - w * (a / 2.0) - &w01).norm());
        variants.insert("w01_mu_alt_v_discrepancy".into(), (&base - v * (a / 2.0) - &w01).norm());
    }

    Ok(NormalFormCoefficients {
        kind,
        lambda0: eig.lambda,
        a,
        b,
        c,
        d,
        e,
        f,
        m,
        n,
        genericity: genericity(kind, a, b, c, e, f),
        reference,
        u_hat: u_hat.clone(),
        eig: eig.clone(),
        jacobian: dp.clone(),
        mu_shift,
        curvature,
        fd_diagnostics: diag,
        variants,
    })
}

/// JSON report of a coefficient set.
pub fn coefficients_report(c: &NormalFormCoefficients) -> serde_json::Value {
    let num = |x: f64| {
        if x.is_finite() {
            serde_json::json!(x)
        } else {
            serde_json::Value::Null
        }
    };
    serde_json::json!({
        "kind": c.kind.as_str(),
        "lambda0": c.lambda0,
        "a": num(c.a),
        "b": num(c.b),
        "c": num(c.c),
        "d": num(c.d),
        "e": num(c.e),
        "f": num(c.f),
        "m": num(c.m),
        "n": num(c.n),
        "slope": c.slope().map(num).unwrap_or(serde_json::Value::Null),
        "genericity": c.genericity,
        "reference": {"mu": c.reference.mu, "eta": c.reference.eta},
        "u_hat": c.u_hat.as_slice(),
        "v": c.eig.v.as_slice(),
        "w": c.eig.w.as_slice(),
        "fd_diagnostics": c.fd_diagnostics,
        "variants": c.variants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_eigvecs() {
        let dp = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.5]));
        let e = critical_eigvecs(&dp, 1.0).unwrap();
        assert!((e.v - Vector::from_vec(vec![1.0, 0.0])).norm() < 1e-15);
        assert!((e.w - Vector::from_vec(vec![1.0, 0.0])).norm() < 1e-15);
    }

    #[test]
    fn double_eigenvalue_rejected() {
        let dp = Matrix::identity(2, 2);
        assert!(critical_eigvecs(&dp, 1.0).is_err());
    }

    #[test]
    fn second_unit_multiplier_rejected() {
        let dp = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -1.0, 0.2]));
        assert!(critical_eigvecs(&dp, 1.0).is_err());
    }

    #[test]
    fn zero_gamma_gives_zero_w01() {
        let dp = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.5]));
        let e = critical_eigvecs(&dp, 1.0).unwrap();
        let cv = cm_correction_vectors(
            &dp,
            &e,
            BifKind::SaddleNode,
            &Vector::zeros(2),
            &Vector::zeros(2),
            |_| Ok(Vector::zeros(2)),
        )
        .unwrap();
        assert_eq!(cv.w01.norm(), 0.0);
    }

    #[test]
    fn slope_arithmetic() {
        let s = slope_from(BifKind::SaddleNode, 5.1754, 44.1124, 0.0, 0.0, 0.0).unwrap();
        assert!((s + 0.1173).abs() < 1e-4);
    }
}
