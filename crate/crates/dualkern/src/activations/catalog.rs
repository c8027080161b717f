//! The activation catalog: every activation family the DSL and CLI can name,
//! registered behind a common trait and looked up at runtime.

use super::{Activation, ActivationError};

/// Parameter shape a family expects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// No parameter (`relu`, `step`, `identity`).
    None,
    /// A real scale `a` (`exp(a=..)`, `sin(a=..)`).
    Scale,
    /// A non-negative integer degree `n` (`hermite(n=..)`).
    Degree,
}

/// One activation family, buildable by name.
pub trait ActivationFamily: Send + Sync {
    /// Token used in skeleton files and on the command line.
    fn name(&self) -> &'static str;
    fn param(&self) -> ParamKind;
    /// Construct the normalized member of this family.
    fn build(&self, param: Option<f64>) -> Result<Activation, ActivationError>;
}

struct Identity;
struct Relu;
struct Step;
struct Exponential;
struct Sine;
struct Hermite;

impl ActivationFamily for Identity {
    fn name(&self) -> &'static str {
        "identity"
    }
    fn param(&self) -> ParamKind {
        ParamKind::None
    }
    fn build(&self, param: Option<f64>) -> Result<Activation, ActivationError> {
        reject_param(self, param)?;
        Ok(Activation::identity())
    }
}

impl ActivationFamily for Relu {
    fn name(&self) -> &'static str {
        "relu"
    }
    fn param(&self) -> ParamKind {
        ParamKind::None
    }
    fn build(&self, param: Option<f64>) -> Result<Activation, ActivationError> {
        reject_param(self, param)?;
        Ok(Activation::relu())
    }
}

impl ActivationFamily for Step {
    fn name(&self) -> &'static str {
        "step"
    }
    fn param(&self) -> ParamKind {
        ParamKind::None
    }
    fn build(&self, param: Option<f64>) -> Result<Activation, ActivationError> {
        reject_param(self, param)?;
        Ok(Activation::step())
    }
}

impl ActivationFamily for Exponential {
    fn name(&self) -> &'static str {
        "exp"
    }
    fn param(&self) -> ParamKind {
        ParamKind::Scale
    }
    fn build(&self, param: Option<f64>) -> Result<Activation, ActivationError> {
        let a = require_param(self, param)?;
        Activation::exponential(a)
    }
}

impl ActivationFamily for Sine {
    fn name(&self) -> &'static str {
        "sin"
    }
    fn param(&self) -> ParamKind {
        ParamKind::Scale
    }
    fn build(&self, param: Option<f64>) -> Result<Activation, ActivationError> {
        let a = require_param(self, param)?;
        Activation::sine(a)
    }
}

impl ActivationFamily for Hermite {
    fn name(&self) -> &'static str {
        "hermite"
    }
    fn param(&self) -> ParamKind {
        ParamKind::Degree
    }
    fn build(&self, param: Option<f64>) -> Result<Activation, ActivationError> {
        let raw = require_param(self, param)?;
        if raw < 0.0 || raw.fract() != 0.0 || raw > u32::MAX as f64 {
            return Err(ActivationError::InvalidParam {
                kind: self.name(),
                reason: format!("degree must be a non-negative integer, got {raw}"),
            });
        }
        Ok(Activation::hermite(raw as u32))
    }
}

fn require_param(family: &dyn ActivationFamily, param: Option<f64>) -> Result<f64, ActivationError> {
    param.ok_or(ActivationError::MissingParam {
        kind: family.name(),
    })
}

fn reject_param(family: &dyn ActivationFamily, param: Option<f64>) -> Result<(), ActivationError> {
    match param {
        Some(_) => Err(ActivationError::InvalidParam {
            kind: family.name(),
            reason: "family takes no parameter".into(),
        }),
        None => Ok(()),
    }
}

static FAMILIES: &[&dyn ActivationFamily] =
    &[&Identity, &Relu, &Step, &Exponential, &Sine, &Hermite];

/// All registered families.
pub fn families() -> impl Iterator<Item = &'static dyn ActivationFamily> {
    FAMILIES.iter().copied()
}

/// Find a family by its token.
pub fn lookup(name: &str) -> Option<&'static dyn ActivationFamily> {
    FAMILIES.iter().copied().find(|f| f.name() == name)
}

/// Build a normalized catalog activation by name.
pub fn make_activation(name: &str, param: Option<f64>) -> Result<Activation, ActivationError> {
    lookup(name)
        .ok_or_else(|| ActivationError::UnknownKind(name.to_string()))?
        .build(param)
}
