//! Checks shared by the property tests and the acceptance run. Each check
//! returns the measured deviation or a description of what went wrong.
#![allow(dead_code)]

use beb_core::amplitude::{
    amplitude_coeffs, computed_orbit, pd_amplitudes, sn_branch_amplitudes, AmplitudeCoefficients,
};
use beb_core::continuation::{find_codim2, locate_on_slice, Codim2Options, ContinuationOptions};
use beb_core::equilibria::{classify_beb, sticking_spectrum};
use beb_core::flow::{floquet_via_variational, integrate_to_section, FlowOptions};
use beb_core::models::{BuiltinFamily, BuiltinName, BuiltinSpec};
use beb_core::normalform::{coefficients_fd, coefficients_with_eigvecs, BifKind, FdOptions, NormalFormCoefficients};
use beb_core::poincare::{map_jacobian_fd, BlowUpScale, BlownUp, MapFamily, ReturnMap, UnfoldingMap};
use beb_core::{Complex, HybridModel, HybridSystem, Matrix, ModelAt, ParamPoint, Result, Vector};
use proptest::prelude::*;

pub type Check = std::result::Result<f64, String>;

fn fail<E: std::fmt::Display>(what: &str) -> impl FnOnce(E) -> String + '_ {
    move |e| format!("{what}: {e}")
}

// ---------------------------------------------------------------------------
// Random linear models

/// Raw material for a random affine model; `build` rejects unusable draws.
#[derive(Debug, Clone)]
pub struct LinearDraw {
    pub n: usize,
    pub a: Vec<f64>,
    pub m: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl LinearDraw {
    /// A with a diagonal shift towards stability, B tangent to the surface,
    /// C^T A B > 0. `None` for near-singular draws.
    pub fn build(&self) -> Option<HybridModel> {
        let n = self.n;
        let mut a = Matrix::from_row_slice(n, n, &self.a[..n * n]);
        for i in 0..n {
            a[(i, i)] -= 0.5;
        }
        let c = Vector::from_column_slice(&self.c[..n]);
        if c.norm() < 0.2 {
            return None;
        }
        let mut b = Vector::from_column_slice(&self.b[..n]);
        b -= &c * (c.dot(&b) / c.dot(&c));
        let ctab = c.dot(&(&a * &b));
        if ctab.abs() < 0.05 {
            return None;
        }
        if ctab < 0.0 {
            b = -b;
        }
        if a.determinant().abs() < 0.05 {
            return None;
        }
        let m = Vector::from_column_slice(&self.m[..n]);
        let model = HybridModel::new(a, m, b, c).ok()?;
        let lu = model.a().clone().lu();
        let ctainvb = model.c().dot(&lu.solve(model.b())?);
        let ctainvm = model.c().dot(&lu.solve(model.m())?);
        (ctainvb.abs() > 1e-3 && ctainvm.abs() > 1e-3).then_some(model)
    }
}

pub fn linear_draw(dims: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = LinearDraw> {
    dims.prop_flat_map(|n| {
        let v = |k| prop::collection::vec(-2.0f64..2.0, k);
        (Just(n), v(n * n), v(n), v(n), v(n)).prop_map(|(n, a, m, b, c)| LinearDraw { n, a, m, b, c })
    })
}

pub fn linear_model() -> impl Strategy<Value = HybridModel> {
    linear_draw(3..=6).prop_filter_map("degenerate draw", |d| d.build())
}

/// A point on the surface with negative velocity, from a free draw.
pub fn incoming_point(model: &HybridModel, p: ParamPoint, raw: &[f64]) -> Option<Vector> {
    let c = model.c();
    let mut x = Vector::from_column_slice(&raw[..model.n()]);
    x -= c * (c.dot(&x) / c.dot(c));
    let sys = ModelAt::new(model, p);
    let mut v = sys.velocity(&x);
    if v > 0.0 && p.mu == 0.0 && model.is_affine() {
        x = -x;
        v = sys.velocity(&x);
    }
    (v < -1e-3 * sys.field(&x).norm().max(1.0)).then_some(x)
}

// ---------------------------------------------------------------------------
// Model-level identities

/// |v(R(x)) + r v(x)| / |v(x)| with r = -1 + C^T (A + mu A1) B for an affine field.
pub fn restitution_identity(model: &HybridModel, x: &Vector, p: ParamPoint) -> Check {
    let f = model.eval_vector_field(x, p).map_err(fail("field"))?;
    let v = model.c().dot(&f);
    let post = model.apply_reset(x, p).map_err(fail("reset"))?;
    let v_post = model.c().dot(&model.eval_vector_field(&post, p).map_err(fail("field"))?);
    let lin = model.a() + model.a1() * p.mu;
    let r = -1.0 + model.c().dot(&(lin * model.b()));
    Ok((v_post + r * v).abs() / v.abs())
}

/// Relative size of C^T F_s at a point of the grazing set {H = 0, v = 0}.
pub fn sticking_tangency(model: &HybridModel, raw: &[f64]) -> Check {
    let n = model.n();
    let c = model.c().clone();
    let g = model.a().transpose() * &c;
    let basis = Matrix::from_columns(&[c, g]);
    let x = Vector::from_column_slice(&raw[..n]);
    let gram = basis.transpose() * &basis;
    let coef = gram
        .lu()
        .solve(&(basis.transpose() * &x))
        .ok_or("surface normal and velocity gradient are parallel")?;
    let x = x - &basis * coef;
    let p = ParamPoint::new(0.0, 0.0);
    let fs = model.sticking_field(&x, p).map_err(fail("sticking field"))?;
    let f = model.eval_vector_field(&x, p).map_err(fail("field"))?;
    Ok(model.c().dot(&fs).abs() / (model.c().norm() * f.norm()).max(1e-300))
}

pub fn det_identity(model: &HybridModel) -> Check {
    sticking_spectrum(model)
        .map(|s| s.det_identity_residual)
        .map_err(fail("sticking spectrum"))
}

/// The classification with B, C and M scaled by positive factors.
pub fn classification_scaled(model: &HybridModel, sb: f64, sc: f64, sm: f64) -> std::result::Result<bool, String> {
    let scaled = HybridModel::new(model.a().clone(), model.m() * sm, model.b() * sb, model.c() * sc)
        .map_err(fail("scaled model"))?;
    Ok(classify_beb(model).verdict == classify_beb(&scaled).verdict)
}

// ---------------------------------------------------------------------------
// Blow-up scale invariance

/// `sn3d` at `b2` with A1 removed, so the drift is the only mu dependence.
pub fn truncated_sn(b2: f64) -> HybridModel {
    let m = BuiltinSpec::new(BuiltinName::Sn3d).with("b2", b2).build().expect("builtin");
    m.with_a1(Matrix::zeros(3, 3)).expect("shape")
}

/// Flies from the blown-up point `y0` at each mu, in blown-up coordinates and
/// in original coordinates scaled back by mu kappa. Returns the largest
/// difference from the first blown-up flight in arrival time or state.
pub fn scale_invariance(model: &HybridModel, y0: &Vector, mus: &[f64]) -> Check {
    let opts = FlowOptions::precise();
    let mut reference: Option<(f64, Vector)> = None;
    let mut worst = 0.0f64;
    for &mu in mus {
        let p = ParamPoint::new(mu, 0.0);
        let kappa = BlowUpScale::Normalized.kappa(model, mu).map_err(fail("kappa"))?;
        let blown = BlownUp::new(model, p, kappa).map_err(fail("blow-up"))?;
        let hb = integrate_to_section(&blown, y0, &opts, false).map_err(fail("blown-up flight"))?;
        let s = mu * kappa;
        let orig = ModelAt::new(model, p);
        let ho = integrate_to_section(&orig, &(y0 * s), &opts, false).map_err(fail("original flight"))?;
        let (t_ref, y_ref) = reference.get_or_insert_with(|| (hb.t, hb.y.clone()));
        let scale_t = t_ref.abs().max(1.0);
        let scale_y = y_ref.norm().max(1.0);
        worst = worst
            .max((hb.t - *t_ref).abs() / scale_t)
            .max((&hb.y - &*y_ref).norm() / scale_y)
            .max((ho.t - *t_ref).abs() / scale_t)
            .max((&ho.y / s - &*y_ref).norm() / scale_y);
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Multipliers: finite differences against saltation x monodromy

fn match_sets(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
    let mut left: Vec<Complex<f64>> = b.to_vec();
    let mut worst = 0.0f64;
    for x in a {
        let (k, d) = left
            .iter()
            .enumerate()
            .map(|(i, y)| (i, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .expect("sets of equal size");
        worst = worst.max(d / x.norm().max(1e-300));
        left.swap_remove(k);
    }
    worst
}

/// Largest relative multiplier difference over the cycles of `model` at mu.
/// `Ok(None)` when there are no non-grazing cycles to compare.
pub fn fd_vs_floquet(model: &HybridModel, mu: f64, t_max: f64) -> std::result::Result<Option<f64>, String> {
    let flow = FlowOptions::precise();
    let mf = MapFamily::new(model, 0.0).map_err(fail("map family"))?.with_flow(flow);
    let cycles = beb_core::continuation::cycles_at(&mf, mu, 0.0, t_max);
    let map = ReturnMap::new(model, ParamPoint::new(mu, 0.0))
        .map_err(fail("return map"))?
        .with_flow(flow);
    let mut worst: Option<f64> = None;
    for (u, _) in cycles {
        let step = map.apply(&u).map_err(fail("map step"))?;
        if step.min_interior_h.is_some_and(|h| h < 1e-3) {
            continue;
        }
        let fd = map_jacobian_fd(&map, &u).map_err(fail("FD Jacobian"))?;
        let fd_eigs: Vec<Complex<f64>> = fd.matrix.complex_eigenvalues().iter().copied().collect();
        let fl = floquet_via_variational(&map.system(), &step.y_plus, &flow).map_err(fail("Floquet"))?;
        if fl.nontrivial.len() != fd_eigs.len() {
            return Err(format!("{} Floquet vs {} FD multipliers", fl.nontrivial.len(), fd_eigs.len()));
        }
        let d = match_sets(&fl.nontrivial, &fd_eigs);
        worst = Some(worst.map_or(d, |w: f64| w.max(d)));
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Coefficients of a directly specified polynomial map

/// z -> lambda0 z + a mu + b eta + c z^2 + d mu z + e eta z + m mu^2 + n eta^2 + f z^3
/// with a decoupled contracting second coordinate.
#[derive(Debug, Clone, Copy)]
pub struct PlantedMap {
    pub kind: BifKind,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub m: f64,
    pub n: f64,
    pub stable: f64,
}

impl UnfoldingMap for PlantedMap {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, u: &Vector, mu: f64, eta: f64) -> Result<Vector> {
        let z = u[0];
        let zn = self.kind.lambda0() * z
            + self.a * mu
            + self.b * eta
            + self.c * z * z
            + self.d * mu * z
            + self.e * eta * z
            + self.m * mu * mu
            + self.n * eta * eta
            + self.f * z * z * z;
        Ok(Vector::from_vec(vec![zn, self.stable * u[1]]))
    }
}

/// Largest error of the recovered coefficients, relative to max(1, |planted|).
pub fn planted_recovery(map: &PlantedMap) -> Check {
    let nf = coefficients_fd(map, &Vector::zeros(2), ParamPoint::new(0.0, 0.0), map.kind, &FdOptions::default())
        .map_err(fail("coefficients"))?;
    let pairs: Vec<(f64, f64)> = match map.kind {
        BifKind::SaddleNode => vec![
            (nf.a, map.a),
            (nf.b, map.b),
            (nf.c, map.c),
            (nf.d, map.d),
            (nf.e, map.e),
            (nf.m, map.m),
            (nf.n, map.n),
        ],
        BifKind::PeriodDoubling => vec![
            (nf.a, map.a),
            (nf.b, map.b),
            (nf.c, map.c),
            (nf.d, map.d),
            (nf.e, map.e),
            (nf.f, map.f),
        ],
    };
    Ok(pairs
        .iter()
        .map(|(got, want)| (got - want).abs() / want.abs().max(1.0))
        .fold(0.0, f64::max))
}

/// A planted coefficient in [0.01, 10] in magnitude, either sign.
pub fn planted_value() -> impl Strategy<Value = f64> {
    (-2.0f64..1.0, any::<bool>()).prop_map(|(e, neg)| if neg { -(10f64.powf(e)) } else { 10f64.powf(e) })
}

// ---------------------------------------------------------------------------
// Built-in bifurcation points

/// Coefficients and map family at a codimension-two or slice bifurcation point.
pub struct Located {
    pub kind: BifKind,
    pub family: BuiltinFamily,
    pub model: HybridModel,
    pub nf: NormalFormCoefficients,
    /// mu at the bifurcation (zero at codimension-two points).
    pub mu_c: f64,
}

impl Located {
    pub fn map_family(&self) -> MapFamily<'_> {
        MapFamily::new(&self.family, self.nf.reference.eta)
            .expect("family")
            .with_flow(FlowOptions::precise())
    }

    pub fn amplitudes(&self) -> std::result::Result<AmplitudeCoefficients, String> {
        amplitude_coeffs(
            &self.model,
            BlowUpScale::Normalized,
            self.nf.reference,
            &self.nf.u_hat,
            &self.nf.eig.v,
        )
        .map_err(fail("amplitude coefficients"))
    }
}

/// The codimension-two point of `sn3d` in b2 with eta = b2, or of `pd3d` in r
/// with eta = sigma at r = r0.
pub fn codim2_point(kind: BifKind) -> std::result::Result<Located, String> {
    let (name, search, bracket) = match kind {
        BifKind::SaddleNode => (BuiltinName::Sn3d, "b2", (1.5, 2.0)),
        BifKind::PeriodDoubling => (BuiltinName::Pd3d, "r", (0.5, 0.8)),
    };
    let spec = BuiltinSpec::new(name);
    let search_family = BuiltinFamily::new(spec.clone(), search).map_err(fail("family"))?;
    let pt = find_codim2(&search_family, kind, bracket, &Codim2Options::default()).map_err(fail("codim-2"))?;
    let spec = spec.with(search, pt.eta0);
    let (family, eta) = match kind {
        BifKind::SaddleNode => (BuiltinFamily::new(spec, "b2").map_err(fail("family"))?, pt.eta0),
        BifKind::PeriodDoubling => {
            let sigma = spec.param("sigma").map_err(fail("sigma"))?;
            (BuiltinFamily::new(spec, "sigma").map_err(fail("family"))?, sigma)
        }
    };
    locate_at(kind, family, &pt.u_hat, 0.0, eta)
}

/// The fold (`sn3d`, b2 = 1.85) or flip (`pd3d`, sigma = 0.82) on its slice.
pub fn slice_point(kind: BifKind) -> std::result::Result<Located, String> {
    let (name, param, eta) = match kind {
        BifKind::SaddleNode => (BuiltinName::Sn3d, "b2", 1.85),
        BifKind::PeriodDoubling => (BuiltinName::Pd3d, "sigma", 0.82),
    };
    let family = BuiltinFamily::new(BuiltinSpec::new(name), param).map_err(fail("family"))?;
    let mf = MapFamily::new(&family, eta).map_err(fail("map family"))?.with_flow(FlowOptions::precise());
    let (bp, _) = locate_on_slice(&mf, kind, eta, 0.05, 60.0, &ContinuationOptions::default())
        .map_err(fail("slice search"))?;
    let u = bp.u_hat.clone();
    drop(mf);
    locate_at(kind, family, &u, bp.mu, eta)
}

fn locate_at(kind: BifKind, family: BuiltinFamily, u: &Vector, mu: f64, eta: f64) -> std::result::Result<Located, String> {
    use beb_core::models::ModelFamily;
    let model = family.model_at(eta).map_err(fail("model"))?;
    let mf = MapFamily::new(&family, eta).map_err(fail("map family"))?.with_flow(FlowOptions::precise());
    let nf = coefficients_fd(&mf, u, ParamPoint::new(mu, eta), kind, &FdOptions::default())
        .map_err(fail("coefficients"))?;
    drop(mf);
    Ok(Located {
        kind,
        family,
        model,
        nf,
        mu_c: mu,
    })
}

/// Deviations of the coefficients recomputed with (-w, -v) from the
/// predicted flip: {a, b, c, m, n} negated, {d, e, f} unchanged. The slope
/// of the flipped set must equal the original bit for bit.
pub fn flip_covariance(at: &Located) -> Check {
    let nf = &at.nf;
    let flipped = nf.sign_flipped();
    let s0 = nf.slope().map_err(fail("slope"))?;
    let s1 = flipped.slope().map_err(fail("slope"))?;
    if s0 != s1 {
        return Err(format!("slope changed under the flip: {s0} vs {s1}"));
    }
    let mf = at.map_family();
    let again = coefficients_with_eigvecs(
        &mf,
        &nf.u_hat,
        nf.reference,
        nf.kind,
        &nf.jacobian,
        &nf.eig.flipped(),
        &FdOptions::default(),
    )
    .map_err(fail("recomputed coefficients"))?;
    let mut worst = 0.0f64;
    for (got, want) in [
        (again.a, flipped.a),
        (again.b, flipped.b),
        (again.c, flipped.c),
        (again.d, flipped.d),
        (again.e, flipped.e),
        (again.f, flipped.f),
        (again.m, flipped.m),
        (again.n, flipped.n),
    ] {
        worst = worst.max((got - want).abs() / want.abs().max(1e-3));
    }
    let s2 = again.slope().map_err(fail("slope"))?;
    Ok(worst.max((s2 - s0).abs() / s0.abs()))
}

/// Largest difference between the predicted velocity sets before and after
/// the eigenvector flip, at each mu.
pub fn branch_swap(at: &Located, mus: &[f64]) -> Check {
    let ac = at.amplitudes()?;
    let nf_f = at.nf.sign_flipped();
    let ac_f = amplitude_coeffs(&at.model, BlowUpScale::Normalized, nf_f.reference, &nf_f.u_hat, &nf_f.eig.v)
        .map_err(fail("flipped amplitude coefficients"))?;
    let mut worst = 0.0f64;
    let set_gap = |p: (Option<f64>, Option<f64>), q: (Option<f64>, Option<f64>)| -> std::result::Result<f64, String> {
        match (p, q) {
            ((Some(a), Some(b)), (Some(c), Some(d))) => {
                let (lo1, hi1) = (a.min(b), a.max(b));
                let (lo2, hi2) = (c.min(d), c.max(d));
                Ok((lo1 - lo2).abs().max((hi1 - hi2).abs()))
            }
            ((None, None), (None, None)) => Ok(0.0),
            _ => Err("branch existence changed under the flip".into()),
        }
    };
    for &mu in mus {
        let gap = match at.kind {
            BifKind::SaddleNode => {
                let p = sn_branch_amplitudes(&at.nf, &ac, mu, at.mu_c).map_err(fail("amplitudes"))?;
                let q = sn_branch_amplitudes(&nf_f, &ac_f, mu, at.mu_c).map_err(fail("amplitudes"))?;
                set_gap((p.hat_plus, p.hat_minus), (q.hat_plus, q.hat_minus))?
            }
            BifKind::PeriodDoubling => {
                let p = pd_amplitudes(&at.nf, &ac, mu, at.mu_c).map_err(fail("amplitudes"))?;
                let q = pd_amplitudes(&nf_f, &ac_f, mu, at.mu_c).map_err(fail("amplitudes"))?;
                set_gap((p.hat_two_plus, p.hat_two_minus), (q.hat_two_plus, q.hat_two_minus))?
                    .max((p.hat_fixed - q.hat_fixed).abs())
            }
        };
        worst = worst.max(gap);
    }
    Ok(worst)
}

/// Computed blown-up velocities of the two branches at mu_c - delta: the
/// cycle pair at a fold, the two impacts of the period-two orbit at a flip.
pub fn computed_pair(at: &Located, mf: &MapFamily<'_>, delta: f64) -> std::result::Result<(f64, f64), String> {
    let ac = at.amplitudes()?;
    let mu = at.mu_c - delta;
    match at.kind {
        BifKind::SaddleNode => {
            let p = sn_branch_amplitudes(&at.nf, &ac, mu, at.mu_c).map_err(fail("amplitudes"))?;
            let (Some(zp), Some(zm)) = (p.z_plus, p.z_minus) else {
                return Err(format!("no predicted cycles at mu = {mu}"));
            };
            let a = computed_orbit(mf, &at.nf, mu, zp, 1).map_err(fail("upper cycle"))?.velocities[0];
            let b = computed_orbit(mf, &at.nf, mu, zm, 1).map_err(fail("lower cycle"))?.velocities[0];
            Ok((a, b))
        }
        BifKind::PeriodDoubling => {
            let p = pd_amplitudes(&at.nf, &ac, mu, at.mu_c).map_err(fail("amplitudes"))?;
            let Some(z) = p.z_two_plus else {
                return Err(format!("no predicted period-two orbit at mu = {mu}"));
            };
            let v = computed_orbit(mf, &at.nf, mu, z, 2).map_err(fail("period-two orbit"))?.velocities;
            Ok((v[0], v[1]))
        }
    }
}

/// Least-squares slope of log(branch separation) against log(delta).
pub fn separation_slope(at: &Located, fractions: &[f64]) -> Check {
    let mf = at.map_family();
    let mut pts = Vec::new();
    for &fr in fractions {
        let delta = fr * at.mu_c;
        let (a, b) = computed_pair(at, &mf, delta)?;
        let sep = (a - b).abs();
        if !(sep > 0.0) {
            return Err(format!("branches coincide at delta = {delta}"));
        }
        pts.push((delta.ln(), sep.ln()));
    }
    Ok(log_slope(&pts))
}

pub fn log_slope(pts: &[(f64, f64)]) -> f64 {
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
