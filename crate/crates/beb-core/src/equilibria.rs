//! Regular and pseudo-equilibria near the boundary equilibrium, and the
//! persistence / nonsmooth-fold classification.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{BebError, Result};
use crate::model::{boundary_tol, HybridModel, Matrix, ParamPoint, Vector};

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumKind {
    Regular,
    Pseudo,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Admissibility {
    Admissible,
    Virtual,
    Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumInfo {
    pub location: Vector,
    pub kind: EquilibriumKind,
    pub admissible: Admissibility,
    pub spectrum: Vec<Complex<f64>>,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BebVerdict {
    Persistence,
    NonsmoothFold,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BebClassification {
    pub ctab: f64,
    pub ctainvb: f64,
    pub ctainvm: f64,
    pub verdict: BebVerdict,
    /// The failed hypothesis when the verdict is degenerate.
    pub reason: Option<String>,
}

fn spectrum(j: &Matrix) -> Vec<Complex<f64>> {
    j.complex_eigenvalues().iter().copied().collect()
}

fn solve(m: &Matrix, rhs: &Vector, what: &str) -> Result<Vector> {
    let lu = m.clone().full_piv_lu();
    let x = lu
        .solve(rhs)
        .ok_or_else(|| BebError::degenerate(format!("{what} is singular")))?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(BebError::degenerate(format!("{what} is singular")));
    }
    Ok(x)
}

pub fn regular_equilibrium(model: &HybridModel, p: ParamPoint) -> Result<EquilibriumInfo> {
    let l = model.linear_part(p.mu);
    let offset = model.drift(p.mu) * p.mu;
    let mut x = solve(&l, &(-offset), "A + mu A1")?;
    if !model.is_affine() {
        let mut converged = false;
        let mut res = f64::INFINITY;
        for _ in 0..NEWTON_MAX {
            let f = model.eval_vector_field(&x, p)?;
            res = f.norm();
            if res < NEWTON_TOL * x.norm().max(1.0) {
                converged = true;
                break;
            }
            let j = model.jacobian(&x, p);
            x -= solve(&j, &f, "Jacobian")?;
        }
        if !converged {
            return Err(BebError::no_convergence("regular equilibrium Newton", NEWTON_MAX, res));
        }
    }
    let residual = model.eval_vector_field(&x, p)?.norm();
    let h = model.c().dot(&x);
    let (kind, admissible) = if h.abs() <= boundary_tol(&x) {
        (EquilibriumKind::Boundary, Admissibility::Boundary)
    } else if h > 0.0 {
        (EquilibriumKind::Regular, Admissibility::Admissible)
    } else {
        (EquilibriumKind::Regular, Admissibility::Virtual)
    };
    Ok(EquilibriumInfo {
        spectrum: spectrum(&model.jacobian(&x, p)),
        location: x,
        kind,
        admissible,
        residual,
    })
}

/// Leading-order relative acceleration at the pseudo-equilibrium,
/// a ~ (C^T A B)(C^T A^-1 M)/(C^T A^-1 B) mu.
pub fn pseudo_leading_order_acceleration(model: &HybridModel, mu: f64) -> Result<f64> {
    let cls = classify_beb(model);
    if cls.verdict == BebVerdict::Degenerate {
        return Err(BebError::degenerate(cls.reason.unwrap_or_default()));
    }
    Ok(cls.ctab * cls.ctainvm / cls.ctainvb * mu)
}

fn pseudo_residual(model: &HybridModel, x: &Vector, p: ParamPoint) -> Result<Vector> {
    let n = model.n();
    let ld = model.lie_derivatives(x, p)?;
    let fs = model.sticking_field(x, p)?;
    let mut r = Vector::zeros(n + 2);
    r[0] = ld.h;
    r[1] = ld.v;
    r.rows_mut(2, n).copy_from(&fs);
    Ok(r)
}

pub fn pseudo_equilibrium(model: &HybridModel, p: ParamPoint) -> Result<EquilibriumInfo> {
    let n = model.n();
    let st = sticking_spectrum(model)?;
    let scale = st.nonzero.iter().map(|z| z.norm()).fold(0.0f64, f64::max).max(1.0);
    let zero_tol = 1e-8 * scale;
    if st.removed.iter().any(|z| z.norm() > zero_tol) {
        return Err(BebError::degenerate(
            "sticking matrix lacks a double zero eigenvalue",
        ));
    }
    if st.nonzero.iter().any(|z| z.norm() <= zero_tol) {
        return Err(BebError::degenerate(
            "zero eigenvalue of the sticking matrix has multiplicity above two",
        ));
    }

    // Linear guess: C^T x = 0, C^T L x = -C^T m~, P_s (L x + m~) = 0.
    let l = model.linear_part(p.mu);
    let off = model.drift(p.mu) * p.mu;
    let c = model.c();
    let w = model.restitution_direction(&Vector::zeros(n));
    let gv = l.transpose() * c;
    let denom = gv.dot(&w);
    if denom.abs() < 1e-14 {
        return Err(BebError::degenerate("grad v^T W vanishes"));
    }
    let ps = Matrix::identity(n, n) - (&w * gv.transpose()) / denom;
    let mut sys = Matrix::zeros(n + 2, n);
    let mut rhs = Vector::zeros(n + 2);
    sys.set_row(0, &c.transpose());
    sys.set_row(1, &(c.transpose() * &l));
    rhs[1] = -c.dot(&off);
    sys.view_mut((2, 0), (n, n)).copy_from(&(&ps * &l));
    rhs.rows_mut(2, n).copy_from(&(-(&ps * &off)));
    let mut x = sys
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| BebError::degenerate(e.to_string()))?;

    let mut res = pseudo_residual(model, &x, p)?.norm();
    let mut iters = 0;
    while res > NEWTON_TOL * x.norm().max(1.0) && iters < NEWTON_MAX {
        let r = pseudo_residual(model, &x, p)?;
        let mut j = Matrix::zeros(n + 2, n);
        for k in 0..n {
            let h = 1e-7 * x[k].abs().max(1e-3 * p.mu.abs().max(1e-6));
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let col = (pseudo_residual(model, &xp, p)? - pseudo_residual(model, &xm, p)?) / (2.0 * h);
            j.set_column(k, &col);
        }
        let dx = j
            .svd(true, true)
            .solve(&r, 1e-14)
            .map_err(|e| BebError::degenerate(e.to_string()))?;
        x -= dx;
        let new_res = pseudo_residual(model, &x, p)?.norm();
        iters += 1;
        if !new_res.is_finite() {
            return Err(BebError::no_convergence("pseudo-equilibrium Newton", iters, new_res));
        }
        if new_res >= res && iters > 3 {
            res = new_res;
            break;
        }
        res = new_res;
    }
    if res > 1e-9 * x.norm().max(1.0) {
        return Err(BebError::no_convergence("pseudo-equilibrium Newton", iters, res));
    }

    let ld = model.lie_derivatives(&x, p)?;
    let f_scale = model.jacobian(&x, p).norm() * x.norm();
    let a_tol = 1e-12 * f_scale.max(1e-300);
    let (kind, admissible) = if x.norm() <= 1e-14 || ld.a.abs() <= a_tol {
        (EquilibriumKind::Boundary, Admissibility::Boundary)
    } else if ld.a < 0.0 {
        (EquilibriumKind::Pseudo, Admissibility::Admissible)
    } else {
        (EquilibriumKind::Pseudo, Admissibility::Virtual)
    };
    Ok(EquilibriumInfo {
        location: x,
        kind,
        admissible,
        spectrum: st.nonzero.clone(),
        residual: res,
    })
}

pub fn classify_beb(model: &HybridModel) -> BebClassification {
    let a = model.a();
    let b = model.b();
    let c = model.c();
    let m = model.m();
    let ctab = c.dot(&(a * b));
    let degenerate = |reason: &str, ctainvb: f64, ctainvm: f64| BebClassification {
        ctab,
        ctainvb,
        ctainvm,
        verdict: BebVerdict::Degenerate,
        reason: Some(reason.to_string()),
    };
    let lu = a.clone().full_piv_lu();
    let (Some(ainv_b), Some(ainv_m)) = (lu.solve(b), lu.solve(m)) else {
        return degenerate("A is singular", f64::NAN, f64::NAN);
    };
    let ctainvb = c.dot(&ainv_b);
    let ctainvm = if model.has_drift() { c.dot(&ainv_m) } else { f64::NAN };
    let scale = c.norm() * b.norm().max(m.norm()) / a.norm().max(1e-300);
    if !ctab.is_finite() || ctab <= 0.0 {
        return degenerate("C^T A B must be positive", ctainvb, ctainvm);
    }
    if !model.has_drift() {
        return degenerate("M is not available for this model", ctainvb, ctainvm);
    }
    if ctainvm.abs() <= 1e-12 * scale.max(1e-300) {
        return degenerate("C^T A^-1 M vanishes", ctainvb, ctainvm);
    }
    if ctainvb.abs() <= 1e-12 * scale.max(1e-300) {
        return degenerate("C^T A^-1 B vanishes", ctainvb, ctainvm);
    }
    BebClassification {
        ctab,
        ctainvb,
        ctainvm,
        verdict: if ctainvb < 0.0 {
            BebVerdict::Persistence
        } else {
            BebVerdict::NonsmoothFold
        },
        reason: None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StickingSpectrum {
    /// (I - B C^T A / C^T A B) A.
    pub a_s: Matrix,
    /// The two eigenvalues of smallest magnitude, discarded as the structural zeros.
    pub removed: [Complex<f64>; 2],
    /// The remaining n - 2 eigenvalues (the spectrum of the restricted matrix).
    pub nonzero: Vec<Complex<f64>>,
    pub det_restricted: f64,
    /// |det + (C^T A^-1 B / C^T A B) det A| relative to |det A C^T A^-1 B / C^T A B|.
    pub det_identity_residual: f64,
}

pub fn sticking_spectrum(model: &HybridModel) -> Result<StickingSpectrum> {
    let n = model.n();
    let a = model.a();
    let b = model.b();
    let c = model.c();
    let ctab = c.dot(&(a * b));
    if ctab.abs() < 1e-300 {
        return Err(BebError::degenerate("C^T A B vanishes"));
    }
    let a_s = (Matrix::identity(n, n) - (b * (c.transpose() * a)) / ctab) * a;
    let mut eig: Vec<Complex<f64>> = a_s.complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|x, y| x.norm().partial_cmp(&y.norm()).unwrap_or(std::cmp::Ordering::Equal));
    let removed = [eig[0], eig[1]];
    let nonzero: Vec<Complex<f64>> = eig[2..].to_vec();
    let det_restricted = nonzero
        .iter()
        .fold(Complex::new(1.0, 0.0), |acc, z| acc * z)
        .re;
    let ctainvb = a
        .clone()
        .full_piv_lu()
        .solve(b)
        .map(|x| c.dot(&x))
        .ok_or_else(|| BebError::degenerate("A is singular"))?;
    let rhs = -(ctainvb / ctab) * a.determinant();
    let det_identity_residual = (det_restricted - rhs).abs() / rhs.abs().max(1e-300);
    Ok(StickingSpectrum {
        a_s,
        removed,
        nonzero,
        det_restricted,
        det_identity_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;

    #[test]
    fn sn_regular_equilibrium_leading_order() {
        let m = models::sn_example(&models::SnParams::default()).unwrap();
        let mu = 1e-3;
        let eq = regular_equilibrium(&m, ParamPoint::new(mu, 0.0)).unwrap();
        // first row of (A + mu A1) x = -mu M gives x2 = (0.7 + mu) * 40 mu
        let expect = [-40.0, -40.0 * (0.7 + mu), -6.0];
        for i in 0..3 {
            assert!((eq.location[i] / mu - expect[i]).abs() < 1e-9 * 40.0);
        }
        assert_eq!(eq.admissible, Admissibility::Virtual);
    }

    #[test]
    fn regular_equilibrium_at_zero_is_boundary() {
        let m = models::pd_example(&models::PdParams::default()).unwrap();
        let eq = regular_equilibrium(&m, ParamPoint::default()).unwrap();
        assert_eq!(eq.kind, EquilibriumKind::Boundary);
        assert_eq!(eq.location.norm(), 0.0);
    }

    #[test]
    fn sn_classification_is_persistence() {
        let m = models::sn_example(&models::SnParams::default()).unwrap();
        let c = classify_beb(&m);
        assert!((c.ctab - 1.85).abs() < 1e-12);
        assert!((c.ctainvb + 64.0).abs() < 1e-9);
        assert!((c.ctainvm - 40.0).abs() < 1e-9);
        assert_eq!(c.verdict, BebVerdict::Persistence);
    }

    #[test]
    fn pd_classification_matches_closed_forms() {
        let p = models::PdParams {
            r: 0.66691,
            ..Default::default()
        };
        let m = models::pd_example(&p).unwrap();
        let c = classify_beb(&m);
        assert!((c.ctab - 1.66691).abs() < 1e-12);
        let ctainvb = (0.8 - 0.3 * 1.66691) / (0.3 * 1.01);
        assert!((c.ctainvb - ctainvb).abs() < 1e-12);
        assert!((c.ctainvm + 1.0 / (0.3 * 1.01)).abs() < 1e-12);
        assert_eq!(c.verdict, BebVerdict::NonsmoothFold);
    }

    #[test]
    fn zero_drift_is_degenerate() {
        let m = models::sn_example(&models::SnParams::default()).unwrap();
        let m0 = HybridModel::new(m.a().clone(), Vector::zeros(3), m.b().clone(), m.c().clone()).unwrap();
        let c = classify_beb(&m0);
        assert_eq!(c.verdict, BebVerdict::Degenerate);
        assert!(c.reason.unwrap().contains("A^-1 M"));
    }

    #[test]
    fn sn_sticking_matrix_has_double_zero() {
        let m = models::sn_example(&models::SnParams::default()).unwrap();
        let st = sticking_spectrum(&m).unwrap();
        // a defective double zero is only resolved to about sqrt(machine eps)
        assert!(st.removed[0].norm() < 1e-7 && st.removed[1].norm() < 1e-7);
        assert_eq!(st.nonzero.len(), 1);
        assert!(st.det_identity_residual < 1e-10);
    }

    #[test]
    fn sn_pseudo_equilibrium_is_admissible_for_positive_mu() {
        let m = models::sn_example(&models::SnParams::default()).unwrap();
        let eq = pseudo_equilibrium(&m, ParamPoint::new(1e-3, 0.0)).unwrap();
        assert_eq!(eq.admissible, Admissibility::Admissible);
        assert!(m.c().dot(&eq.location).abs() < 1e-14);
        let a_lead = pseudo_leading_order_acceleration(&m, 1e-3).unwrap();
        let ld = m.lie_derivatives(&eq.location, ParamPoint::new(1e-3, 0.0)).unwrap();
        assert!((ld.a - a_lead).abs() < 1e-9);
        let eq0 = pseudo_equilibrium(&m, ParamPoint::default()).unwrap();
        assert_eq!(eq0.kind, EquilibriumKind::Boundary);
    }
}
