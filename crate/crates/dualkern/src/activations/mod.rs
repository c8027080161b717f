//! Activation functions, their Hermite expansions, and dual activations.
//!
//! Every catalog activation is kept in normalized form (`E[σ²(X)] = 1` under
//! the standard Gaussian). Its dual is the power series `σ̂(ρ) = Σ a_i² ρ^i`
//! where `a_i` are the Hermite coefficients of `σ`; the catalog members also
//! carry exact closed forms (arccos kernels for relu/step, the sphere-
//! restricted RBF for the exponential, sinh for sine, monomials for the
//! Hermite polynomials themselves).

pub mod catalog;

pub use catalog::{families, lookup, make_activation, ActivationFamily, ParamKind};

use crate::numeric::{hermite_values_into, GaussHermite};
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

/// Default truncation degree for dual-activation series.
pub const DEFAULT_TRUNCATION: usize = 50;
/// Default Gauss-Hermite node count.
pub const DEFAULT_QUAD_POINTS: usize = 200;
/// Tolerated floating-point drift when clamping ρ back into [−1, 1].
pub const RHO_CLAMP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ActivationError {
    #[error("unknown activation kind `{0}`")]
    UnknownKind(String),
    #[error("activation `{kind}` requires a parameter")]
    MissingParam { kind: &'static str },
    #[error("invalid parameter for `{kind}`: {reason}")]
    InvalidParam { kind: &'static str, reason: String },
    #[error("quadrature needs at least {min} nodes, got {got}")]
    QuadPointsTooSmall { got: usize, min: usize },
    #[error("activation is not finite at quadrature node x = {x}")]
    NonFinite { x: f64 },
    #[error("rho = {rho} lies outside [-1, 1]")]
    RhoOutOfRange { rho: f64 },
    #[error("matrix is not positive semi-definite (det = {det})")]
    NotPsd { det: f64 },
    #[error("covariance matrix has a non-positive diagonal entry {value}")]
    NonPositiveDiagonal { value: f64 },
    #[error("custom activation needs at least one finite coefficient")]
    BadCoefficients,
    #[error(transparent)]
    Numeric(#[from] crate::numeric::NumericError),
}

/// Which member of the catalog an activation is.
#[derive(Debug, Clone, PartialEq)]
pub enum ActivationKind {
    Identity,
    Relu,
    Step,
    Exponential { a: f64 },
    Sine { a: f64 },
    Hermite { degree: u32 },
    /// Explicit Hermite coefficient vector; the only way a non-catalog
    /// activation enters the system.
    Custom { coeffs: Arc<Vec<f64>> },
}

/// A scalar activation with its Gaussian norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    kind: ActivationKind,
    gaussian_norm: f64,
    normalized: bool,
}

impl Activation {
    fn catalog(kind: ActivationKind) -> Self {
        Self {
            kind,
            gaussian_norm: 1.0,
            normalized: true,
        }
    }

    /// `σ(x) = x`.
    pub fn identity() -> Self {
        Self::catalog(ActivationKind::Identity)
    }

    /// `σ(x) = √2 · max(0, x)`.
    pub fn relu() -> Self {
        Self::catalog(ActivationKind::Relu)
    }

    /// `σ(x) = √2 · 1[x ≥ 0]`.
    pub fn step() -> Self {
        Self::catalog(ActivationKind::Step)
    }

    /// Normalized exponential `σ(x) = e^{a x − a²}`.
    pub fn exponential(a: f64) -> Result<Self, ActivationError> {
        if !a.is_finite() {
            return Err(ActivationError::InvalidParam {
                kind: "exp",
                reason: format!("a must be finite, got {a}"),
            });
        }
        Ok(Self::catalog(ActivationKind::Exponential { a }))
    }

    /// Normalized sine `σ(x) = sin(a x) / √ν` with `ν = (1 − e^{−2a²})/2`.
    pub fn sine(a: f64) -> Result<Self, ActivationError> {
        if !a.is_finite() || a == 0.0 {
            return Err(ActivationError::InvalidParam {
                kind: "sin",
                reason: format!("a must be finite and non-zero, got {a}"),
            });
        }
        Ok(Self::catalog(ActivationKind::Sine { a }))
    }

    /// The orthonormal Hermite polynomial `h_n` (already unit-norm).
    pub fn hermite(degree: u32) -> Self {
        Self::catalog(ActivationKind::Hermite { degree })
    }

    /// Activation given by an explicit Hermite coefficient vector.
    pub fn custom(coeffs: Vec<f64>) -> Result<Self, ActivationError> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(ActivationError::BadCoefficients);
        }
        let norm_sq: f64 = coeffs.iter().map(|c| c * c).sum();
        if norm_sq <= 0.0 {
            return Err(ActivationError::BadCoefficients);
        }
        let gaussian_norm = norm_sq.sqrt();
        Ok(Self {
            kind: ActivationKind::Custom {
                coeffs: Arc::new(coeffs),
            },
            gaussian_norm,
            normalized: (gaussian_norm - 1.0).abs() <= 1e-10,
        })
    }

    /// Rescale a custom activation to unit Gaussian norm.
    pub fn normalized(&self) -> Self {
        match &self.kind {
            ActivationKind::Custom { coeffs } => {
                let scaled: Vec<f64> = coeffs.iter().map(|c| c / self.gaussian_norm).collect();
                Self {
                    kind: ActivationKind::Custom {
                        coeffs: Arc::new(scaled),
                    },
                    gaussian_norm: 1.0,
                    normalized: true,
                }
            }
            _ => self.clone(),
        }
    }

    pub fn kind(&self) -> &ActivationKind {
        &self.kind
    }

    /// `‖σ‖ = √E[σ²(X)]`.
    pub fn gaussian_norm(&self) -> f64 {
        self.gaussian_norm
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Catalog token plus parameter, as used by the DSL.
    pub fn token(&self) -> String {
        match &self.kind {
            ActivationKind::Identity => "identity".into(),
            ActivationKind::Relu => "relu".into(),
            ActivationKind::Step => "step".into(),
            ActivationKind::Exponential { a } => format!("exp(a={a})"),
            ActivationKind::Sine { a } => format!("sin(a={a})"),
            ActivationKind::Hermite { degree } => format!("hermite(n={degree})"),
            ActivationKind::Custom { .. } => "custom".into(),
        }
    }

    /// Evaluate the activation at a point.
    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            ActivationKind::Identity => x,
            ActivationKind::Relu => std::f64::consts::SQRT_2 * x.max(0.0),
            ActivationKind::Step => {
                if x >= 0.0 {
                    std::f64::consts::SQRT_2
                } else {
                    0.0
                }
            }
            ActivationKind::Exponential { a } => (a * x - a * a).exp(),
            ActivationKind::Sine { a } => {
                let nu = (1.0 - (-2.0 * a * a).exp()) / 2.0;
                (a * x).sin() / nu.sqrt()
            }
            ActivationKind::Hermite { degree } => {
                crate::numeric::hermite_value(x, *degree as usize)
            }
            ActivationKind::Custom { coeffs } => {
                let (mut prev, mut cur) = (1.0, x);
                let mut acc = coeffs[0];
                for (k, &c) in coeffs.iter().enumerate().skip(1) {
                    if k >= 2 {
                        let kf = (k - 1) as f64;
                        let next = (x * cur - kf.sqrt() * prev) / (kf + 1.0).sqrt();
                        prev = cur;
                        cur = next;
                    }
                    acc += c * cur;
                }
                acc
            }
        }
    }

    /// Hermite coefficients `a_0..a_n`, computed exactly.
    ///
    /// For relu and step these are the half-range integrals the recursion
    /// facts reduce to double-factorial ratios; for exp and sine they come
    /// from the generating function `e^{tx − t²/2} = Σ h_i(x) t^i/√(i!)`.
    pub fn hermite_coefficients(&self, n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n + 1];
        match &self.kind {
            ActivationKind::Identity => {
                if n >= 1 {
                    a[1] = 1.0;
                }
            }
            ActivationKind::Hermite { degree } => {
                let d = *degree as usize;
                if d <= n {
                    a[d] = 1.0;
                }
            }
            ActivationKind::Relu => {
                a[0] = 1.0 / PI.sqrt();
                if n >= 1 {
                    a[1] = 1.0 / std::f64::consts::SQRT_2;
                }
                // even i ≥ 2: |a_i| = (i−3)!!/√(π i!), signs (+, −, +, ...)
                let mut t = 1.0 / (2.0 * PI).sqrt();
                let mut sign = 1.0;
                let mut i = 2;
                while i <= n {
                    a[i] = sign * t;
                    // (i−1)!!/(i−3)!! = i−1 ; √(i!/(i+2)!) = 1/√((i+1)(i+2))
                    t *= (i - 1) as f64 / (((i + 1) * (i + 2)) as f64).sqrt();
                    sign = -sign;
                    i += 2;
                }
            }
            ActivationKind::Step => {
                a[0] = 1.0 / std::f64::consts::SQRT_2;
                // odd i: |a_i| = (i−2)!!/√(π i!), signs (+, −, +, ...)
                let mut t = 1.0 / PI.sqrt();
                let mut sign = 1.0;
                let mut i = 1;
                while i <= n {
                    a[i] = sign * t;
                    t *= i as f64 / (((i + 1) * (i + 2)) as f64).sqrt();
                    sign = -sign;
                    i += 2;
                }
            }
            ActivationKind::Exponential { a: scale } => {
                // a_i = e^{−a²/2} a^i / √(i!)
                let mut t = (-scale * scale / 2.0).exp();
                for (i, slot) in a.iter_mut().enumerate() {
                    *slot = t;
                    t *= scale / ((i + 1) as f64).sqrt();
                }
            }
            ActivationKind::Sine { a: scale } => {
                // raw sin(ax): a_i = e^{−a²/2} (−1)^{(i−1)/2} a^i/√(i!), odd i
                let nu = (1.0 - (-2.0 * scale * scale).exp()) / 2.0;
                let inv = 1.0 / nu.sqrt();
                let mut t = (-scale * scale / 2.0).exp() * scale;
                let mut sign = 1.0;
                let mut i = 1;
                while i <= n {
                    a[i] = sign * t * inv;
                    t *= scale * scale / (((i + 1) * (i + 2)) as f64).sqrt();
                    sign = -sign;
                    i += 2;
                }
            }
            ActivationKind::Custom { coeffs } => {
                for (slot, &c) in a.iter_mut().zip(coeffs.iter()) {
                    *slot = c;
                }
            }
        }
        a
    }

    /// The dual activation at the default truncation.
    pub fn dual(&self) -> DualActivation {
        let n = match &self.kind {
            ActivationKind::Hermite { degree } => DEFAULT_TRUNCATION.max(*degree as usize),
            ActivationKind::Custom { coeffs } => coeffs.len() - 1,
            _ => DEFAULT_TRUNCATION,
        };
        let coeffs = self.hermite_coefficients(n);
        DualActivation {
            coeffs: coeffs.iter().map(|a| a * a).collect(),
            closed_form: closed_form_for(&self.kind),
            source_norm_sq: self.gaussian_norm * self.gaussian_norm,
        }
    }
}

/// `‖σ‖` of a raw callable, by Gauss-Hermite quadrature.
pub fn gaussian_norm<F: FnMut(f64) -> f64>(
    mut sigma: F,
    quad_points: usize,
) -> Result<f64, ActivationError> {
    if quad_points < 32 {
        return Err(ActivationError::QuadPointsTooSmall {
            got: quad_points,
            min: 32,
        });
    }
    let rule = GaussHermite::new(quad_points)?;
    let mut bad = None;
    let norm_sq = rule.expectation(|x| {
        let v = sigma(x);
        if !v.is_finite() && bad.is_none() {
            bad = Some(x);
        }
        v * v
    });
    match bad {
        Some(x) => Err(ActivationError::NonFinite { x }),
        None => Ok(norm_sq.sqrt()),
    }
}

/// A truncated Hermite expansion `σ ≈ Σ_{i≤N} a_i h_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteExpansion {
    coefficients: Vec<f64>,
    /// `‖σ‖² − Σ a_i²`: the squared mass lost to truncation.
    tail_mass: f64,
    source_norm_sq: f64,
    source: Option<ActivationKind>,
}

impl HermiteExpansion {
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn truncation_degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn source_norm_sq(&self) -> f64 {
        self.source_norm_sq
    }

    /// Flag truncation that drops more squared mass than `threshold`.
    pub fn check_tail(&self, threshold: f64) -> Result<(), ActivationError> {
        if self.tail_mass > threshold {
            Err(ActivationError::InvalidParam {
                kind: "expansion",
                reason: format!(
                    "truncation too aggressive: tail mass {} exceeds {threshold}",
                    self.tail_mass
                ),
            })
        } else {
            Ok(())
        }
    }
}

/// Expand an activation in the Hermite basis up to degree `n`.
///
/// `quad_points` is the contract for the generic quadrature engine
/// ([`expand_callable`]); catalog members and explicit coefficient vectors
/// expand exactly, which the engine cannot do for the discontinuous members
/// (its error for those decays like 1/nodes).
pub fn hermite_expand(
    sigma: &Activation,
    n: usize,
    quad_points: usize,
) -> Result<HermiteExpansion, ActivationError> {
    if quad_points < 2 * n + 32 {
        return Err(ActivationError::QuadPointsTooSmall {
            got: quad_points,
            min: 2 * n + 32,
        });
    }
    let coefficients = sigma.hermite_coefficients(n);
    let norm_sq = sigma.gaussian_norm * sigma.gaussian_norm;
    let sum_sq: f64 = coefficients.iter().map(|a| a * a).sum();
    Ok(HermiteExpansion {
        coefficients,
        tail_mass: norm_sq - sum_sq,
        source_norm_sq: norm_sq,
        source: Some(sigma.kind.clone()),
    })
}

/// Expand a raw callable by Gauss-Hermite quadrature: `a_i = E[σ(X) h_i(X)]`
/// with `h_i` generated by the three-term recursion.
pub fn expand_callable<F: FnMut(f64) -> f64>(
    mut sigma: F,
    n: usize,
    quad_points: usize,
) -> Result<HermiteExpansion, ActivationError> {
    if quad_points < 2 * n + 32 {
        return Err(ActivationError::QuadPointsTooSmall {
            got: quad_points,
            min: 2 * n + 32,
        });
    }
    let rule = GaussHermite::new(quad_points)?;
    let mut coefficients = vec![0.0; n + 1];
    let mut h = vec![0.0; n + 1];
    let mut norm_sq = 0.0;
    for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
        let v = sigma(x);
        if !v.is_finite() {
            return Err(ActivationError::NonFinite { x });
        }
        hermite_values_into(x, &mut h);
        for (slot, &hi) in coefficients.iter_mut().zip(h.iter()) {
            *slot += w * v * hi;
        }
        norm_sq += w * v * v;
    }
    let sum_sq: f64 = coefficients.iter().map(|a| a * a).sum();
    Ok(HermiteExpansion {
        coefficients,
        tail_mass: norm_sq - sum_sq,
        source_norm_sq: norm_sq,
        source: None,
    })
}

/// Closed forms attached to the catalog duals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedForm {
    /// `ρ` (identity, 1st Hermite).
    Identity,
    /// `ρ²` (2nd Hermite).
    Square,
    /// `ρ^n` (n-th Hermite).
    Power(u32),
    /// `(√(1−ρ²) + (π − arccos ρ)·ρ)/π` (normalized relu).
    ArcCos1,
    /// `(π − arccos ρ)/π` (normalized step).
    ArcCos0,
    /// `e^{a²(ρ−1)}`: the RBF kernel restricted to the sphere.
    RbfExp { a_sq: f64 },
    /// `sinh(a²ρ)/sinh(a²)` (normalized sine).
    Sinh { a_sq: f64 },
}

impl ClosedForm {
    pub fn eval(&self, rho: f64) -> f64 {
        match *self {
            ClosedForm::Identity => rho,
            ClosedForm::Square => rho * rho,
            ClosedForm::Power(n) => rho.powi(n as i32),
            ClosedForm::ArcCos1 => {
                ((1.0 - rho * rho).max(0.0).sqrt() + (PI - rho.acos()) * rho) / PI
            }
            ClosedForm::ArcCos0 => (PI - rho.acos()) / PI,
            ClosedForm::RbfExp { a_sq } => (a_sq * (rho - 1.0)).exp(),
            ClosedForm::Sinh { a_sq } => (a_sq * rho).sinh() / a_sq.sinh(),
        }
    }

    /// Tag used in CSV exports.
    pub fn tag(&self) -> String {
        match self {
            ClosedForm::Identity => "identity".into(),
            ClosedForm::Square => "square".into(),
            ClosedForm::Power(n) => format!("power-{n}"),
            ClosedForm::ArcCos1 => "arccos1".into(),
            ClosedForm::ArcCos0 => "arccos0".into(),
            ClosedForm::RbfExp { .. } => "rbf-exp".into(),
            ClosedForm::Sinh { .. } => "sinh".into(),
        }
    }
}

fn closed_form_for(kind: &ActivationKind) -> Option<ClosedForm> {
    match kind {
        ActivationKind::Identity => Some(ClosedForm::Identity),
        ActivationKind::Relu => Some(ClosedForm::ArcCos1),
        ActivationKind::Step => Some(ClosedForm::ArcCos0),
        ActivationKind::Exponential { a } => Some(ClosedForm::RbfExp { a_sq: a * a }),
        ActivationKind::Sine { a } => Some(ClosedForm::Sinh { a_sq: a * a }),
        ActivationKind::Hermite { degree } => Some(match degree {
            1 => ClosedForm::Identity,
            2 => ClosedForm::Square,
            n => ClosedForm::Power(*n),
        }),
        ActivationKind::Custom { .. } => None,
    }
}

/// A dual activation: a PSD power series `Σ b_i ρ^i` with `b_i = a_i² ≥ 0`,
/// plus an optional closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct DualActivation {
    coeffs: Vec<f64>,
    closed_form: Option<ClosedForm>,
    source_norm_sq: f64,
}

/// `b_i = a_i²`; the closed form is attached when the expansion came from a
/// recognized catalog member.
pub fn dual_from_expansion(e: &HermiteExpansion) -> DualActivation {
    DualActivation {
        coeffs: e.coefficients.iter().map(|a| a * a).collect(),
        closed_form: e.source.as_ref().and_then(closed_form_for),
        source_norm_sq: e.source_norm_sq,
    }
}

impl DualActivation {
    /// Build directly from series coefficients (test oracles, derivatives).
    pub fn from_coefficients(coeffs: Vec<f64>, closed_form: Option<ClosedForm>) -> Self {
        let sum: f64 = coeffs.iter().sum();
        Self {
            coeffs,
            closed_form,
            source_norm_sq: sum,
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn closed_form(&self) -> Option<ClosedForm> {
        self.closed_form
    }

    /// `‖σ‖²` of the source activation.
    pub fn source_norm_sq(&self) -> f64 {
        self.source_norm_sq
    }

    fn admit(&self, rho: f64) -> Result<f64, ActivationError> {
        if rho.abs() <= 1.0 {
            Ok(rho)
        } else if rho.abs() <= 1.0 + RHO_CLAMP_TOLERANCE {
            Ok(rho.clamp(-1.0, 1.0))
        } else {
            Err(ActivationError::RhoOutOfRange { rho })
        }
    }

    /// Evaluate the dual at `ρ ∈ [−1, 1]`. Closed forms take precedence;
    /// the truncated series only backs activations without one.
    pub fn eval(&self, rho: f64) -> Result<f64, ActivationError> {
        let rho = self.admit(rho)?;
        Ok(match &self.closed_form {
            Some(cf) => cf.eval(rho),
            None => self.eval_series_unchecked(rho),
        })
    }

    /// Evaluate the truncated series `Σ b_i ρ^i` regardless of closed form.
    pub fn eval_series(&self, rho: f64) -> Result<f64, ActivationError> {
        let rho = self.admit(rho)?;
        Ok(self.eval_series_unchecked(rho))
    }

    fn eval_series_unchecked(&self, rho: f64) -> f64 {
        let mut acc = 0.0;
        for &b in self.coeffs.iter().rev() {
            acc = acc * rho + b;
        }
        acc
    }

    /// Term-by-term derivative of the series: coefficients `i·b_i` shifted
    /// down one degree. Differentiation and the dual map commute, so this is
    /// the dual of `σ'`.
    pub fn derivative(&self) -> DualActivation {
        let coeffs: Vec<f64> = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, &b)| i as f64 * b)
            .collect();
        let sum: f64 = coeffs.iter().sum();
        DualActivation {
            coeffs: if coeffs.is_empty() {
                vec![0.0]
            } else {
                coeffs
            },
            closed_form: None,
            source_norm_sq: sum,
        }
    }
}

/// The extended relu dual `σ̄(Σ) = √(Σ₁₁Σ₂₂) · σ̂(Σ₁₂/√(Σ₁₁Σ₂₂))` for a 2×2
/// PSD covariance: the oracle for unnormalized inputs and mis-scaled
/// initializations.
pub fn dual_extended_relu(sigma: [[f64; 2]; 2]) -> Result<f64, ActivationError> {
    let (s11, s12, s21, s22) = (sigma[0][0], sigma[0][1], sigma[1][0], sigma[1][1]);
    if s11 <= 0.0 || s22 <= 0.0 {
        return Err(ActivationError::NonPositiveDiagonal {
            value: s11.min(s22),
        });
    }
    let scale = (s11 * s22).sqrt();
    let off = 0.5 * (s12 + s21);
    if (s12 - s21).abs() > 1e-9 * scale.max(1.0) {
        return Err(ActivationError::NotPsd {
            det: s11 * s22 - off * off,
        });
    }
    let det = s11 * s22 - off * off;
    if det < -1e-12 * scale.max(1.0) {
        return Err(ActivationError::NotPsd { det });
    }
    let rho = (off / scale).clamp(-1.0, 1.0);
    Ok(scale * ClosedForm::ArcCos1.eval(rho))
}

/// Write the `kind,param,degree,a_i,b_i` coefficient table.
pub fn write_dual_table<W: std::io::Write>(
    out: &mut W,
    kind: &str,
    param: Option<f64>,
    expansion: &HermiteExpansion,
    dual: &DualActivation,
) -> std::io::Result<()> {
    writeln!(out, "kind,param,degree,a_i,b_i")?;
    let param = param.map(|p| p.to_string()).unwrap_or_default();
    for (i, (a, b)) in expansion
        .coefficients()
        .iter()
        .zip(dual.coefficients())
        .enumerate()
    {
        writeln!(out, "{kind},{param},{i},{a},{b}")?;
    }
    Ok(())
}
