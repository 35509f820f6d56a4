//! Model specification files.
//!
//! Either an explicit model
//! `{"n": 3, "A": [[..],[..],[..]], "A1": .., "M": [..], "M1": .., "B": [..], "C": [..],
//!   "nonlinear": {"epsilon": .., "q1": .., "q2": ..}}`
//! or a builtin stanza `{"builtin": {"name": "sn3d", "params": {"b2": 1.85}}}`.
//! Matrices are nested rows or a flat row-major array. A missing `M` marks a
//! model without drift data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BebError, Result};
use crate::model::{HybridModel, Matrix, QuadraticTerms, Vector};
use crate::models::BuiltinSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixJson {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct ModelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub A: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub A1: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub M: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub M1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub B: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub C: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlinear: Option<QuadraticTerms>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<BuiltinSpec>,
}

/// A parsed specification: builtins keep their name and parameters so that
/// parameter families can be formed from them.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Builtin(BuiltinSpec),
    Explicit(HybridModel),
}

impl ModelSource {
    pub fn model(&self) -> Result<HybridModel> {
        match self {
            ModelSource::Builtin(b) => b.build(),
            ModelSource::Explicit(m) => Ok(m.clone()),
        }
    }

    pub fn builtin(&self) -> Option<&BuiltinSpec> {
        match self {
            ModelSource::Builtin(b) => Some(b),
            ModelSource::Explicit(_) => None,
        }
    }
}

fn matrix(name: &str, m: &MatrixJson, n: usize) -> Result<Matrix> {
    let bad = || BebError::invalid(format!("{name}: expected {n}×{n}"));
    match m {
        MatrixJson::Rows(rows) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(bad());
            }
            Ok(Matrix::from_fn(n, n, |i, j| rows[i][j]))
        }
        MatrixJson::Flat(v) => {
            if v.len() != n * n {
                return Err(bad());
            }
            Ok(Matrix::from_row_slice(n, n, v))
        }
    }
}

fn vector(name: &str, v: &[f64], n: usize) -> Result<Vector> {
    if v.len() != n {
        return Err(BebError::invalid(format!("{name}: expected length {n}, got {}", v.len())));
    }
    Ok(Vector::from_column_slice(v))
}

fn inferred_dim(a: &MatrixJson) -> usize {
    match a {
        MatrixJson::Rows(r) => r.len(),
        MatrixJson::Flat(v) => (v.len() as f64).sqrt().round() as usize,
    }
}

impl ModelSpec {
    pub fn resolve(&self) -> Result<ModelSource> {
        if let Some(b) = &self.builtin {
            let explicit = self.n.is_some()
                || self.A.is_some()
                || self.A1.is_some()
                || self.M.is_some()
                || self.M1.is_some()
                || self.B.is_some()
                || self.C.is_some()
                || self.nonlinear.is_some();
            if explicit {
                return Err(BebError::invalid(
                    "builtin: cannot be combined with explicit model fields",
                ));
            }
            b.build()?;
            return Ok(ModelSource::Builtin(b.clone()));
        }
        let a = self.A.as_ref().ok_or_else(|| BebError::invalid("A: missing"))?;
        let n = self.n.unwrap_or_else(|| inferred_dim(a));
        if n < 2 {
            return Err(BebError::invalid("n: dimension must be at least 2"));
        }
        let a = matrix("A", a, n)?;
        let b = vector("B", self.B.as_ref().ok_or_else(|| BebError::invalid("B: missing"))?, n)?;
        let c = vector("C", self.C.as_ref().ok_or_else(|| BebError::invalid("C: missing"))?, n)?;
        let m = match &self.M {
            Some(m) => vector("M", m, n)?,
            None => Vector::zeros(n),
        };
        let mut model = HybridModel::new(a, m, b, c)?;
        if let Some(a1) = &self.A1 {
            model = model.with_a1(matrix("A1", a1, n)?)?;
        }
        if let Some(m1) = &self.M1 {
            model = model.with_m1(vector("M1", m1, n)?)?;
        }
        if let Some(q) = self.nonlinear {
            model = model.with_nonlinear(q)?;
        }
        if self.M.is_none() {
            model = model.without_drift();
        }
        Ok(ModelSource::Explicit(model))
    }

    /// Explicit specification of a model.
    pub fn from_model(model: &HybridModel) -> Result<Self> {
        if model.field_override().is_some() || model.reset_correction().is_some() {
            return Err(BebError::invalid(
                "model with a user-supplied field or reset cannot be exported",
            ));
        }
        let rows = |m: &Matrix| MatrixJson::Rows((0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect());
        let vec = |v: &Vector| v.iter().copied().collect::<Vec<f64>>();
        let n = model.n();
        Ok(ModelSpec {
            n: Some(n),
            A: Some(rows(model.a())),
            A1: (model.a1() != &Matrix::zeros(n, n)).then(|| rows(model.a1())),
            M: model.has_drift().then(|| vec(model.m())),
            M1: (model.m1() != &Vector::zeros(n)).then(|| vec(model.m1())),
            B: Some(vec(model.b())),
            C: Some(vec(model.c())),
            nonlinear: model.nonlinear(),
            builtin: None,
        })
    }
}

pub fn parse_model_spec(text: &str) -> Result<ModelSource> {
    let spec: ModelSpec =
        serde_json::from_str(text).map_err(|e| BebError::invalid(format!("model spec: {e}")))?;
    spec.resolve()
}

pub fn load_model_spec(path: &Path) -> Result<ModelSource> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| BebError::invalid(format!("{}: {e}", path.display())))?;
    parse_model_spec(&text)
}

/// Pretty JSON of the explicit form of `model`.
pub fn export_model_json(model: &HybridModel) -> Result<String> {
    let spec = ModelSpec::from_model(model)?;
    serde_json::to_string_pretty(&spec).map_err(|e| BebError::invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::BuiltinName;

    #[test]
    fn builtin_stanza_resolves_with_overrides() {
        let src = parse_model_spec(r#"{"builtin":{"name":"sn3d","params":{"b2":1.85}}}"#).unwrap();
        let m = src.model().unwrap();
        assert_eq!(m.b()[1], 1.85);
        assert_eq!(src.builtin().unwrap().name, BuiltinName::Sn3d);
    }

    #[test]
    fn wrong_matrix_shape_is_named() {
        let text = r#"{"n":3,"A":[[1,0],[0,1],[0,0]],"M":[0,0,-1],"B":[0,1,1],"C":[1,0,0]}"#;
        let err = parse_model_spec(text).unwrap_err();
        assert!(err.to_string().contains("A: expected 3×3"), "{err}");
    }

    #[test]
    fn flat_and_nested_agree() {
        let nested = r#"{"A":[[1,2],[3,4]],"M":[0,1],"B":[1,1],"C":[1,0]}"#;
        let flat = r#"{"n":2,"A":[1,2,3,4],"M":[0,1],"B":[1,1],"C":[1,0]}"#;
        assert_eq!(parse_model_spec(nested).unwrap(), parse_model_spec(flat).unwrap());
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(parse_model_spec(r#"{"A":[[1,0],[0,1]],"B":[1,1],"C":[1,0],"Q":1}"#).is_err());
        assert!(parse_model_spec(r#"{"builtin":{"name":"sn3d"},"n":3}"#).is_err());
    }

    #[test]
    fn missing_drift_round_trips() {
        let m = crate::models::airfoil_fixture();
        let back = parse_model_spec(&export_model_json(&m).unwrap()).unwrap().model().unwrap();
        assert_eq!(back, m);
        assert!(!back.has_drift());
    }
}
