//! Built-in example systems and one-parameter families over them.

use std::collections::BTreeMap;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{BebError, Result};
use crate::model::{HybridModel, Matrix, QuadraticTerms, Vector};

/// Third-order companion system with a saddle-node codimension-two point in b2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnParams {
    pub lambda1: Complex<f64>,
    pub lambda2: Complex<f64>,
    pub lambda3: Complex<f64>,
    pub b2: f64,
    pub b3: f64,
    pub epsilon: f64,
    pub q1: f64,
    pub q2: f64,
}

impl Default for SnParams {
    fn default() -> Self {
        SnParams {
            lambda1: Complex::new(-0.1, 0.2),
            lambda2: Complex::new(-0.1, -0.2),
            lambda3: Complex::new(-0.5, 0.0),
            b2: 1.85,
            b3: 1.6,
            epsilon: 0.0,
            q1: 0.0,
            q2: 0.0,
        }
    }
}

fn is_conjugate_set(l: [Complex<f64>; 3]) -> bool {
    let tol = 1e-12;
    let real = |z: Complex<f64>| z.im.abs() <= tol * z.norm().max(1.0);
    let conj = |a: Complex<f64>, b: Complex<f64>| (a - b.conj()).norm() <= tol * a.norm().max(1.0);
    match l.iter().filter(|z| real(**z)).count() {
        3 => true,
        1 => {
            let (r, c): (Vec<&Complex<f64>>, Vec<&Complex<f64>>) = l.iter().partition(|z| real(**z));
            r.len() == 1 && conj(*c[0], *c[1])
        }
        _ => false,
    }
}

pub fn sn_example(p: &SnParams) -> Result<HybridModel> {
    let l = [p.lambda1, p.lambda2, p.lambda3];
    if !is_conjugate_set(l) {
        return Err(BebError::invalid(
            "lambda: complex eigenvalues must come as a conjugate pair",
        ));
    }
    let t = (l[0] + l[1] + l[2]).re;
    let m = -(l[0] * l[1] + l[0] * l[2] + l[1] * l[2]).re;
    let d = (l[0] * l[1] * l[2]).re;
    #[rustfmt::skip]
    let a = Matrix::from_row_slice(3, 3, &[
        t, 1.0, 0.0,
        m, 0.0, 1.0,
        d, 0.0, 0.0,
    ]);
    let mut a1 = Matrix::zeros(3, 3);
    a1[(0, 0)] = -1.0;
    HybridModel::new(
        a,
        Vector::from_vec(vec![0.0, 0.0, -1.0]),
        Vector::from_vec(vec![0.0, p.b2, p.b3]),
        Vector::from_vec(vec![1.0, 0.0, 0.0]),
    )?
    .with_a1(a1)?
    .with_nonlinear(QuadraticTerms {
        epsilon: p.epsilon,
        q1: p.q1,
        q2: p.q2,
    })
}

/// Oscillator with a slow third state, with a period-doubling codimension-two point in r.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdParams {
    pub rho: f64,
    pub omega: f64,
    pub lambda: f64,
    pub r: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub q1: f64,
    pub q2: f64,
}

impl Default for PdParams {
    fn default() -> Self {
        PdParams {
            rho: 0.1,
            omega: 1.0,
            lambda: 0.3,
            r: 0.66691,
            sigma: 0.8,
            epsilon: 0.0,
            q1: 0.0,
            q2: 0.0,
        }
    }
}

pub fn pd_example(p: &PdParams) -> Result<HybridModel> {
    #[rustfmt::skip]
    let a = Matrix::from_row_slice(3, 3, &[
        p.rho, p.omega, 0.0,
        -p.omega, p.rho, 1.0,
        0.0, 0.0, -p.lambda,
    ]);
    let mut a1 = Matrix::zeros(3, 3);
    a1[(2, 2)] = 1.0;
    HybridModel::new(
        a,
        Vector::from_vec(vec![0.0, 0.0, 1.0]),
        Vector::from_vec(vec![0.0, 1.0 + p.r, -p.sigma]),
        Vector::from_vec(vec![1.0, 0.0, 0.0]),
    )?
    .with_a1(a1)?
    .with_nonlinear(QuadraticTerms {
        epsilon: p.epsilon,
        q1: p.q1,
        q2: p.q2,
    })
}

pub const AIRFOIL_RESTITUTION: f64 = 0.72;

/// Linearisation of the aeroelastic airfoil with freeplay at its boundary
/// equilibrium (U = 0.64833, preload 0.01 rad). Only A, B and C are known; M
/// and A1 are not, so the model is flagged as having no drift.
pub fn airfoil_fixture() -> HybridModel {
    #[rustfmt::skip]
    let cols_1_3 = [
        [0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0],
        [-2.9340e3, 2.3800e3, -31.8848],
        [2.5143e3, -1.4569e4, -126.9591],
        [-1.5787e3, 3.9373e4, 119.8092],
        [0.0, 0.0, 0.0],
        [0.0, 64.8330, 35.6462],
    ];
    #[rustfmt::skip]
    let cols_4_8 = [
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0, 0.0],
        [-4.1409, -1.7578, -0.2147, -118.8655, -29.0256],
        [3.3583, -8.2454, -1.0773, 157.7863, 38.5297],
        [-3.2826, 17.0083, -1.9570, -328.2203, -80.1478],
        [0.0, 0.0, 0.0, 0.0, 1.0],
        [1.0, 0.9000, 0.1487, -57.3753, -22.3998],
    ];
    let mut a = Matrix::zeros(8, 8);
    for i in 0..8 {
        for j in 0..3 {
            a[(i, j)] = cols_1_3[i][j];
        }
        for j in 0..5 {
            a[(i, 3 + j)] = cols_4_8[i][j];
        }
    }
    let b = Vector::from_vec(vec![0.0, 0.0, 0.0, 0.0030, -0.0774, 1.0, 0.0, 0.0])
        * (1.0 + AIRFOIL_RESTITUTION);
    let mut c = Vector::zeros(8);
    c[2] = 1.0;
    HybridModel::new(a, Vector::zeros(8), b, c)
        .expect("fixture shapes are consistent")
        .without_drift()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BuiltinName {
    #[serde(rename = "sn3d")]
    Sn3d,
    #[serde(rename = "pd3d")]
    Pd3d,
    #[serde(rename = "airfoil_fixture")]
    AirfoilFixture,
}

impl BuiltinName {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sn3d" => Ok(BuiltinName::Sn3d),
            "pd3d" => Ok(BuiltinName::Pd3d),
            "airfoil_fixture" => Ok(BuiltinName::AirfoilFixture),
            other => Err(BebError::invalid(format!(
                "builtin.name: unknown model {other:?} (expected sn3d, pd3d or airfoil_fixture)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BuiltinName::Sn3d => "sn3d",
            BuiltinName::Pd3d => "pd3d",
            BuiltinName::AirfoilFixture => "airfoil_fixture",
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            BuiltinName::Sn3d => &[
                "lambda1_re", "lambda1_im", "lambda2_re", "lambda2_im", "lambda3", "b2", "b3", "epsilon",
                "q1", "q2",
            ],
            BuiltinName::Pd3d => &["rho", "omega", "lambda", "r", "sigma", "epsilon", "q1", "q2"],
            BuiltinName::AirfoilFixture => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuiltinSpec {
    pub name: BuiltinName,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl BuiltinSpec {
    pub fn new(name: BuiltinName) -> Self {
        BuiltinSpec {
            name,
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn build(&self) -> Result<HybridModel> {
        let allowed = self.name.param_names();
        for (k, v) in &self.params {
            if !allowed.contains(&k.as_str()) {
                return Err(BebError::invalid(format!(
                    "builtin.params.{k}: unknown parameter for {}",
                    self.name.as_str()
                )));
            }
            if !v.is_finite() {
                return Err(BebError::invalid(format!("builtin.params.{k}: not finite")));
            }
        }
        let get = |k: &str, d: f64| self.params.get(k).copied().unwrap_or(d);
        match self.name {
            BuiltinName::Sn3d => {
                let d = SnParams::default();
                sn_example(&SnParams {
                    lambda1: Complex::new(get("lambda1_re", d.lambda1.re), get("lambda1_im", d.lambda1.im)),
                    lambda2: Complex::new(get("lambda2_re", d.lambda2.re), get("lambda2_im", d.lambda2.im)),
                    lambda3: Complex::new(get("lambda3", d.lambda3.re), 0.0),
                    b2: get("b2", d.b2),
                    b3: get("b3", d.b3),
                    epsilon: get("epsilon", d.epsilon),
                    q1: get("q1", d.q1),
                    q2: get("q2", d.q2),
                })
            }
            BuiltinName::Pd3d => {
                let d = PdParams::default();
                pd_example(&PdParams {
                    rho: get("rho", d.rho),
                    omega: get("omega", d.omega),
                    lambda: get("lambda", d.lambda),
                    r: get("r", d.r),
                    sigma: get("sigma", d.sigma),
                    epsilon: get("epsilon", d.epsilon),
                    q1: get("q1", d.q1),
                    q2: get("q2", d.q2),
                })
            }
            BuiltinName::AirfoilFixture => Ok(airfoil_fixture()),
        }
    }

    /// Current value of a parameter, falling back to the builtin default.
    pub fn param(&self, key: &str) -> Result<f64> {
        if let Some(v) = self.params.get(key) {
            return Ok(*v);
        }
        let sn = SnParams::default();
        let pd = PdParams::default();
        let v = match (self.name, key) {
            (BuiltinName::Sn3d, "lambda1_re") => sn.lambda1.re,
            (BuiltinName::Sn3d, "lambda1_im") => sn.lambda1.im,
            (BuiltinName::Sn3d, "lambda2_re") => sn.lambda2.re,
            (BuiltinName::Sn3d, "lambda2_im") => sn.lambda2.im,
            (BuiltinName::Sn3d, "lambda3") => sn.lambda3.re,
            (BuiltinName::Sn3d, "b2") => sn.b2,
            (BuiltinName::Sn3d, "b3") => sn.b3,
            (BuiltinName::Sn3d, "epsilon") | (BuiltinName::Pd3d, "epsilon") => 0.0,
            (BuiltinName::Sn3d, "q1") | (BuiltinName::Pd3d, "q1") => 0.0,
            (BuiltinName::Sn3d, "q2") | (BuiltinName::Pd3d, "q2") => 0.0,
            (BuiltinName::Pd3d, "rho") => pd.rho,
            (BuiltinName::Pd3d, "omega") => pd.omega,
            (BuiltinName::Pd3d, "lambda") => pd.lambda,
            (BuiltinName::Pd3d, "r") => pd.r,
            (BuiltinName::Pd3d, "sigma") => pd.sigma,
            _ => {
                return Err(BebError::invalid(format!(
                    "builtin.params.{key}: unknown parameter for {}",
                    self.name.as_str()
                )))
            }
        };
        Ok(v)
    }
}

/// A family of models indexed by the second unfolding parameter eta.
pub trait ModelFamily: Send + Sync {
    fn model_at(&self, eta: f64) -> Result<HybridModel>;
}

impl ModelFamily for HybridModel {
    fn model_at(&self, _eta: f64) -> Result<HybridModel> {
        Ok(self.clone())
    }
}

impl<F> ModelFamily for F
where
    F: Fn(f64) -> Result<HybridModel> + Send + Sync,
{
    fn model_at(&self, eta: f64) -> Result<HybridModel> {
        self(eta)
    }
}

/// Varies one builtin parameter: eta is the parameter value itself.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinFamily {
    pub spec: BuiltinSpec,
    pub param: String,
}

impl BuiltinFamily {
    pub fn new(spec: BuiltinSpec, param: &str) -> Result<Self> {
        if !spec.name.param_names().contains(&param) {
            return Err(BebError::invalid(format!(
                "family parameter {param:?} is not a parameter of {}",
                spec.name.as_str()
            )));
        }
        Ok(BuiltinFamily {
            spec,
            param: param.to_string(),
        })
    }
}

impl ModelFamily for BuiltinFamily {
    fn model_at(&self, eta: f64) -> Result<HybridModel> {
        self.spec.clone().with(&self.param, eta).build()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamPoint;

    #[test]
    fn sn_defaults_give_symmetric_functions() {
        let m = sn_example(&SnParams::default()).unwrap();
        assert!((m.a()[(0, 0)] + 0.7).abs() < 1e-15);
        assert!((m.a()[(1, 0)] + 0.15).abs() < 1e-15);
        assert!((m.a()[(2, 0)] + 0.025).abs() < 1e-15);
    }

    #[test]
    fn sn_spectrum_matches_inputs() {
        let m = sn_example(&SnParams::default()).unwrap();
        let mut ev: Vec<Complex<f64>> = m.a().complex_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
        let expect = [Complex::new(-0.5, 0.0), Complex::new(-0.1, -0.2), Complex::new(-0.1, 0.2)];
        for (a, b) in ev.iter().zip(&expect) {
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn non_conjugate_eigenvalues_rejected() {
        let p = SnParams {
            lambda2: Complex::new(-0.2, -0.2),
            ..Default::default()
        };
        assert!(sn_example(&p).is_err());
    }

    #[test]
    fn quadratic_term_only_touches_first_component() {
        let lin = sn_example(&SnParams::default()).unwrap();
        let nl = sn_example(&SnParams {
            epsilon: 0.05,
            q1: -1.0,
            ..Default::default()
        })
        .unwrap();
        let x = Vector::from_vec(vec![0.3, -0.7, 0.2]);
        let p = ParamPoint::new(0.01, 0.0);
        let d = nl.eval_vector_field(&x, p).unwrap() - lin.eval_vector_field(&x, p).unwrap();
        assert!((d[0] + 0.05 * 0.3 * -0.7).abs() < 1e-15);
        assert_eq!(d[1], 0.0);
        assert_eq!(d[2], 0.0);
    }

    #[test]
    fn pd_spectrum() {
        let m = pd_example(&PdParams::default()).unwrap();
        let ev: Vec<Complex<f64>> = m.a().complex_eigenvalues().iter().copied().collect();
        for want in [Complex::new(0.1, 1.0), Complex::new(0.1, -1.0), Complex::new(-0.3, 0.0)] {
            assert!(ev.iter().any(|z| (z - want).norm() < 1e-12));
        }
    }

    #[test]
    fn airfoil_velocity_is_sixth_state() {
        let m = airfoil_fixture();
        let row = m.c().transpose() * m.a();
        for j in 0..8 {
            assert_eq!(row[j], if j == 5 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn unknown_builtin_parameter_rejected() {
        let s = BuiltinSpec::new(BuiltinName::Sn3d).with("b4", 1.0);
        assert!(s.build().is_err());
    }

    #[test]
    fn builtin_family_sets_parameter() {
        let fam = BuiltinFamily::new(BuiltinSpec::new(BuiltinName::Pd3d), "sigma").unwrap();
        let m = fam.model_at(0.82).unwrap();
        assert_eq!(m.b()[2], -0.82);
    }
}
