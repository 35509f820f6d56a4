//! Model selection and one-parameter families from command-line flags.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use beb_core::models::{BuiltinFamily, BuiltinName, BuiltinSpec, ModelFamily};
use beb_core::spec_io::{export_model_json, load_model_spec, ModelSource};
use beb_core::{HybridModel, Matrix, Vector};
use sha2::{Digest, Sha256};

use crate::parse::{parse_entry, Entry, EntryTarget};

/// The model a command runs on, before any family parameter is applied.
#[derive(Debug, Clone)]
pub struct ModelSetup {
    pub source: ModelSource,
    pub model: HybridModel,
}

impl ModelSetup {
    pub fn from_flags(model: Option<&Path>, builtin: Option<&str>, params: &[(String, f64)]) -> Result<Self> {
        let source = match (model, builtin) {
            (Some(_), Some(_)) => bail!("--model and --builtin are mutually exclusive"),
            (None, None) => bail!("one of --model or --builtin is required"),
            (None, Some(name)) => ModelSource::Builtin(BuiltinSpec::new(BuiltinName::parse(name)?)),
            (Some(path), None) => load_model_spec(path)?,
        };
        let source = match source {
            ModelSource::Builtin(mut spec) => {
                for (k, v) in params {
                    spec = spec.with(k, *v);
                }
                ModelSource::Builtin(spec)
            }
            ModelSource::Explicit(m) => {
                let mut m = m;
                for (k, v) in params {
                    m = with_entry(&m, &parse_entry(k).with_context(|| format!("--param {k}"))?, *v)?;
                }
                ModelSource::Explicit(m)
            }
        };
        let model = source.model()?;
        Ok(ModelSetup { source, model })
    }

    pub fn builtin_name(&self) -> Option<BuiltinName> {
        self.source.builtin().map(|b| b.name)
    }

    /// Hex SHA-256 of the exported explicit model.
    pub fn model_hash(&self) -> Result<String> {
        let json = export_model_json(&self.model)?;
        let digest = Sha256::digest(json.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Family varying `param`: a builtin parameter name, or an entry such as
    /// `B[1]` for explicit models. `None` keeps the model fixed.
    pub fn family(&self, param: Option<&str>) -> Result<Family> {
        match (param, &self.source) {
            (None, _) => Ok(Family::Fixed(self.model.clone())),
            (Some(p), ModelSource::Builtin(spec)) => Ok(Family::Builtin(BuiltinFamily::new(spec.clone(), p)?)),
            (Some(p), ModelSource::Explicit(m)) => {
                let entry = parse_entry(p)?;
                // Reject out-of-range indices up front.
                with_entry(m, &entry, 0.0)?;
                Ok(Family::Entry { base: m.clone(), entry })
            }
        }
    }

    /// The same setup with `param` fixed at `value`.
    pub fn with_value(&self, param: &str, value: f64) -> Result<ModelSetup> {
        let source = match &self.source {
            ModelSource::Builtin(spec) => ModelSource::Builtin(spec.clone().with(param, value)),
            ModelSource::Explicit(m) => ModelSource::Explicit(with_entry(m, &parse_entry(param)?, value)?),
        };
        let model = source.model()?;
        Ok(ModelSetup { source, model })
    }
}

pub enum Family {
    Fixed(HybridModel),
    Builtin(BuiltinFamily),
    Entry { base: HybridModel, entry: Entry },
}

impl Family {
    /// Current value of the family parameter.
    pub fn current(&self) -> Result<f64> {
        match self {
            Family::Fixed(_) => Ok(0.0),
            Family::Builtin(f) => Ok(f.spec.param(&f.param)?),
            Family::Entry { base, entry } => Ok(entry_value(base, entry)),
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, Family::Fixed(_))
    }
}

impl ModelFamily for Family {
    fn model_at(&self, eta: f64) -> beb_core::Result<HybridModel> {
        match self {
            Family::Fixed(m) => Ok(m.clone()),
            Family::Builtin(f) => f.model_at(eta),
            Family::Entry { base, entry } => {
                with_entry(base, entry, eta).map_err(|e| beb_core::BebError::invalid(e.to_string()))
            }
        }
    }
}

fn entry_value(m: &HybridModel, e: &Entry) -> f64 {
    let (i, j) = (e.row, e.col.unwrap_or(0));
    match e.target {
        EntryTarget::A => m.a()[(i, j)],
        EntryTarget::A1 => m.a1()[(i, j)],
        EntryTarget::M => m.m()[i],
        EntryTarget::M1 => m.m1()[i],
        EntryTarget::B => m.b()[i],
        EntryTarget::C => m.c()[i],
    }
}

/// Copy of `m` with one entry replaced.
pub fn with_entry(m: &HybridModel, e: &Entry, value: f64) -> Result<HybridModel> {
    let n = m.n();
    if e.row >= n || e.col.is_some_and(|c| c >= n) {
        return Err(anyhow!("entry index out of range for n = {n}"));
    }
    if m.field_override().is_some() || m.reset_correction().is_some() {
        bail!("entries of a model with user-supplied hooks cannot be varied");
    }
    let mut a: Matrix = m.a().clone();
    let mut a1: Matrix = m.a1().clone();
    let mut mm: Vector = m.m().clone();
    let mut m1: Vector = m.m1().clone();
    let mut b: Vector = m.b().clone();
    let mut c: Vector = m.c().clone();
    let j = e.col.unwrap_or(0);
    match e.target {
        EntryTarget::A => a[(e.row, j)] = value,
        EntryTarget::A1 => a1[(e.row, j)] = value,
        EntryTarget::M => mm[e.row] = value,
        EntryTarget::M1 => m1[e.row] = value,
        EntryTarget::B => b[e.row] = value,
        EntryTarget::C => c[e.row] = value,
    }
    let mut out = HybridModel::new(a, mm, b, c)?.with_a1(a1)?.with_m1(m1)?;
    if let Some(q) = m.nonlinear() {
        out = out.with_nonlinear(q)?;
    }
    if !m.has_drift() && e.target != EntryTarget::M {
        out = out.without_drift();
    }
    Ok(out)
}
