//! Impact-velocity predictions for the limit cycles born at the
//! saddle-node and period-doubling curves.
//!
//! The blown-up impact velocity near the reference fixed point is
//! A_hat = l0 + l1 mu + L01 z + L11 mu z, with z the centre-manifold
//! coordinate along v. Original velocities are mu kappa A_hat.

use serde::{Deserialize, Serialize};

use crate::error::{BebError, Result};
use crate::model::{HybridModel, HybridSystem, ParamPoint, Vector};
use nalgebra::Complex;
use crate::normalform::{BifKind, NormalFormCoefficients};
use crate::poincare::{fixed_point_k, BlowUpScale, BlownUp, MapFamily, SectionChart};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeCoefficients {
    pub l0: f64,
    pub l1: f64,
    #[serde(rename = "L01")]
    pub l01: f64,
    #[serde(rename = "L11")]
    pub l11: f64,
    /// Blow-up factor at the reference point; original = mu * kappa * blown-up.
    pub kappa: f64,
    pub reference: ParamPoint,
    /// Velocity change per unit mu from the fixed point drifting off the
    /// critical direction. Zero unless set by `amplitude_coeffs_shifted`.
    #[serde(default)]
    pub shift: f64,
    /// Velocity change per z^2 from the curvature of the centre manifold.
    #[serde(default)]
    pub curvature: f64,
}

/// Blown-up velocity C^T F(y) and its gradient at the lift of `u`.
fn velocity_and_gradient(
    model: &HybridModel,
    chart: &SectionChart,
    scale: BlowUpScale,
    mu: f64,
    eta: f64,
    u: &Vector,
    v: &Vector,
) -> Result<(f64, f64, f64)> {
    let kappa = scale.kappa(model, mu)?;
    let sys = BlownUp::new(model, ParamPoint::new(mu, eta), kappa)?;
    let y = chart.from_section(u);
    let dy = chart.lift_direction(v);
    Ok((sys.velocity(&y), sys.grad_velocity(&y).dot(&dy), kappa))
}

/// l0, l1, L01, L11 for the fixed point `u_hat` with critical direction `v`
/// at `reference`. The mu-derivatives are central differences, so models with
/// A1, M1 or a mu-dependent blow-up scale are handled alike.
pub fn amplitude_coeffs(
    model: &HybridModel,
    scale: BlowUpScale,
    reference: ParamPoint,
    u_hat: &Vector,
    v: &Vector,
) -> Result<AmplitudeCoefficients> {
    let chart = SectionChart::new(model.c())?;
    let n = chart.dim();
    if u_hat.len() != n || v.len() != n {
        return Err(BebError::invalid(format!(
            "section vectors: expected length {n}, got {} and {}",
            u_hat.len(),
            v.len()
        )));
    }
    let ParamPoint { mu, eta } = reference;
    let (vel, grad, kappa) = velocity_and_gradient(model, &chart, scale, mu, eta, u_hat, v)?;
    let h = 1e-5 * mu.abs().max(1.0);
    let (vp, gp, _) = velocity_and_gradient(model, &chart, scale, mu + h, eta, u_hat, v)?;
    let (vm, gm, _) = velocity_and_gradient(model, &chart, scale, mu - h, eta, u_hat, v)?;
    let l1 = (vp - vm) / (2.0 * h);
    let l11 = (gp - gm) / (2.0 * h);
    let out = AmplitudeCoefficients {
        l0: vel - l1 * mu,
        l1,
        l01: grad - l11 * mu,
        l11,
        kappa,
        reference,
        shift: 0.0,
        curvature: 0.0,
    };
    if ![out.l0, out.l1, out.l01, out.l11].iter().all(|x| x.is_finite()) {
        return Err(BebError::degenerate("amplitude coefficients are not finite"));
    }
    Ok(out)
}

/// `amplitude_coeffs` at the reference of `nf`, plus the drift of the fixed
/// point along the non-critical directions and the curvature of the centre
/// manifold.
pub fn amplitude_coeffs_shifted(
    model: &HybridModel,
    scale: BlowUpScale,
    nf: &NormalFormCoefficients,
) -> Result<AmplitudeCoefficients> {
    let mut ac = amplitude_coeffs(model, scale, nf.reference, &nf.u_hat, &nf.eig.v)?;
    let chart = SectionChart::new(model.c())?;
    let ParamPoint { mu, eta } = nf.reference;
    let (_, g, _) = velocity_and_gradient(model, &chart, scale, mu, eta, &nf.u_hat, &nf.mu_shift)?;
    ac.shift = g;
    let (_, g2, _) = velocity_and_gradient(model, &chart, scale, mu, eta, &nf.u_hat, &nf.curvature)?;
    ac.curvature = g2;
    Ok(ac)
}

/// Blown-up and original velocities of the two cycles near a fold.
/// `None` where the branch does not exist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnAmplitudes {
    pub hat_plus: Option<f64>,
    pub hat_minus: Option<f64>,
    pub plus: Option<f64>,
    pub minus: Option<f64>,
    /// Centre-manifold coordinates of the two cycles.
    pub z_plus: Option<f64>,
    pub z_minus: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdAmplitudes {
    /// Single-impact cycle.
    pub hat_fixed: f64,
    /// The two impacts of the period-two cycle.
    pub hat_two_plus: Option<f64>,
    pub hat_two_minus: Option<f64>,
    pub fixed: f64,
    pub two_plus: Option<f64>,
    pub two_minus: Option<f64>,
    /// Two-impact values with the opposite sign on the midpoint term
    /// c (ca + d)(mu - mu_pd) / (2 (c^2 + f)).
    pub hat_two_plus_alt: Option<f64>,
    pub hat_two_minus_alt: Option<f64>,
    /// Centre-manifold coordinates of the fixed point and the two-impact points.
    pub z_fixed: f64,
    pub z_two_plus: Option<f64>,
    pub z_two_minus: Option<f64>,
}

/// Velocity change for centre-manifold coordinate z.
fn along(ac: &AmplitudeCoefficients, z: f64) -> f64 {
    ac.l01 * z + ac.curvature * z * z
}

fn expect_kind(nf: &NormalFormCoefficients, kind: BifKind) -> Result<()> {
    if nf.kind != kind {
        return Err(BebError::invalid(format!(
            "expected {} coefficients, got {}",
            kind.as_str(),
            nf.kind.as_str()
        )));
    }
    Ok(())
}

pub fn sn_branch_amplitudes(
    nf: &NormalFormCoefficients,
    ac: &AmplitudeCoefficients,
    mu: f64,
    mu_sn: f64,
) -> Result<SnAmplitudes> {
    expect_kind(nf, BifKind::SaddleNode)?;
    let (a, c, d, m) = (nf.a, nf.c, nf.d, nf.m);
    if c == 0.0 || !c.is_finite() {
        return Err(BebError::degenerate("c = 0: the fold is degenerate"));
    }
    let dm = mu - mu_sn;
    let base = ac.l0 + ac.l1 * mu + ac.shift * (mu - mu_sn);
    let shift = -d * dm / (2.0 * c);
    let radicand = -a * dm / c + (d * d - 4.0 * m * c) * dm * dm / (4.0 * c * c);
    let factor = mu * ac.kappa;
    let (z_plus, z_minus) = if radicand >= 0.0 {
        let r = radicand.sqrt();
        (Some(r + shift), Some(-r + shift))
    } else {
        (None, None)
    };
    let hat_plus = z_plus.map(|z| base + along(ac, z));
    let hat_minus = z_minus.map(|z| base + along(ac, z));
    Ok(SnAmplitudes {
        hat_plus,
        hat_minus,
        plus: hat_plus.map(|x| x * factor),
        minus: hat_minus.map(|x| x * factor),
        z_plus,
        z_minus,
    })
}

pub fn pd_amplitudes(
    nf: &NormalFormCoefficients,
    ac: &AmplitudeCoefficients,
    mu: f64,
    mu_pd: f64,
) -> Result<PdAmplitudes> {
    expect_kind(nf, BifKind::PeriodDoubling)?;
    let (a, c, d, f) = (nf.a, nf.c, nf.d, nf.f);
    let denom = c * c + f;
    if denom == 0.0 || !denom.is_finite() {
        return Err(BebError::degenerate("c^2 + f = 0: the flip is degenerate"));
    }
    let dm = mu - mu_pd;
    let base = ac.l0 + ac.l1 * mu + ac.shift * dm;
    let drift = a * dm / 2.0;
    let hat_fixed = base + along(ac, drift);
    // Period-two points z = s +- r of z -> -z + a dm + c z^2 + d dm z + f z^3:
    // summing the two orbit equations gives s = a dm / 2 + c r^2 / 2.
    let k = c * a + d;
    let radicand = -k * dm / denom;
    let mid = drift - c * k * dm / (2.0 * denom);
    let mid_alt = drift + c * k * dm / (2.0 * denom);
    let zs = |m: f64| {
        if radicand >= 0.0 {
            let r = radicand.sqrt();
            (Some(m + r), Some(m - r))
        } else {
            (None, None)
        }
    };
    let (zp, zq) = zs(mid);
    let (zp_alt, zq_alt) = zs(mid_alt);
    let vel = |z: Option<f64>| z.map(|z| base + along(ac, z));
    let (p, q) = (vel(zp), vel(zq));
    let (p_alt, q_alt) = (vel(zp_alt), vel(zq_alt));
    let factor = mu * ac.kappa;
    Ok(PdAmplitudes {
        hat_fixed,
        hat_two_plus: p,
        hat_two_minus: q,
        fixed: hat_fixed * factor,
        two_plus: p.map(|x| x * factor),
        two_minus: q.map(|x| x * factor),
        hat_two_plus_alt: p_alt,
        hat_two_minus_alt: q_alt,
        z_fixed: drift,
        z_two_plus: zp,
        z_two_minus: zq,
    })
}

/// A k-impact orbit found from a centre-manifold prediction.
#[derive(Debug, Clone)]
pub struct ComputedOrbit {
    /// Starting section point.
    pub u_hat: Vector,
    /// Blown-up velocity at each of the k impacts.
    pub velocities: Vec<f64>,
    /// Multipliers of the k-th iterate.
    pub multipliers: Vec<Complex<f64>>,
}

impl ComputedOrbit {
    pub fn is_stable(&self) -> bool {
        self.multipliers.iter().all(|z| z.norm() < 1.0)
    }
}

/// The k-impact orbit of `family` at `mu`, found by Newton from the
/// centre-manifold point with coordinate `z`.
pub fn computed_orbit(
    family: &MapFamily<'_>,
    nf: &NormalFormCoefficients,
    mu: f64,
    z: f64,
    k: usize,
) -> Result<ComputedOrbit> {
    let ParamPoint { mu: mu_c, eta } = nf.reference;
    let guess = &nf.u_hat + &nf.eig.v * z + &nf.mu_shift * (mu - mu_c) + &nf.curvature * (z * z);
    family.with_map(mu, eta, |m| {
        let fp = fixed_point_k(m, &guess, k)?;
        let sys = m.system();
        let mut u = fp.u_hat.clone();
        let mut velocities = Vec::with_capacity(k);
        for _ in 0..k {
            velocities.push(sys.velocity(&m.lift(&u)));
            u = m.eval(&u)?;
        }
        Ok(ComputedOrbit {
            u_hat: fp.u_hat,
            velocities,
            multipliers: fp.multipliers,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{sn_example, SnParams};

    #[test]
    fn linear_velocity_matches_closed_form() {
        let model = sn_example(&SnParams::default()).unwrap();
        let u = Vector::from_vec(vec![-0.3, 0.2]);
        let v = Vector::from_vec(vec![0.6, 0.8]);
        let ac = amplitude_coeffs(&model, BlowUpScale::Normalized, ParamPoint::new(0.0, 1.85), &u, &v).unwrap();
        // C = e1, first row of A is (t, 1, 0) and y1 = 0 on the section.
        assert!((ac.l0 - u[0]).abs() < 1e-12);
        assert_eq!(ac.l1, 0.0);
        assert!((ac.l01 - v[0]).abs() < 1e-12);
        assert_eq!(ac.l11, 0.0);
        assert!((ac.kappa - 40.0).abs() < 1e-9);
    }
}
