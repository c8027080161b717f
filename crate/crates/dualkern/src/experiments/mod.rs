//! Monte Carlo verification of the concentration theorems, bound
//! calculators, kernel ridge regression, last-layer training, and the
//! empirical-vs-analytic hypothesis-space comparison.

mod convergence;
mod learn;

pub use convergence::{run_convergence, ConvergenceConfig, ConvergenceReport, ConvergenceRow, RSummary};
pub use learn::{
    analytic_test_loss, approximation_experiment, last_layer_train, ridge_on_features,
    ComparisonRow, ComparisonTable, LastLayerFit,
};

use crate::compkernel::{GramMatrix, InputPoint, KernelError};
use crate::numeric::CounterRng;
use crate::realization::RealizeError;
use crate::skeleton::Skeleton;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("labels ({labels}) and inputs ({inputs}) disagree")]
    LabelCount { labels: usize, inputs: usize },
    #[error("system is numerically singular: {0}")]
    Singular(crate::numeric::NumericError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Realize(#[from] RealizeError),
}

/// Loss functions the learning experiments support.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    Squared,
    Hinge,
}

impl Loss {
    pub fn eval(&self, prediction: f64, label: f64) -> f64 {
        match self {
            Loss::Squared => {
                let d = prediction - label;
                d * d
            }
            Loss::Hinge => (1.0 - prediction * label).max(0.0),
        }
    }

    pub fn mean(&self, predictions: &[f64], labels: &[f64]) -> f64 {
        assert_eq!(predictions.len(), labels.len());
        predictions
            .iter()
            .zip(labels)
            .map(|(&p, &y)| self.eval(p, y))
            .sum::<f64>()
            / predictions.len() as f64
    }

    pub fn name(&self) -> &'static str {
        match self {
            Loss::Squared => "squared",
            Loss::Hinge => "hinge",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "squared" => Some(Loss::Squared),
            "hinge" => Some(Loss::Hinge),
            _ => None,
        }
    }
}

/// Which concentration theorem a bound is computed for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundMode {
    /// C-bounded activations: `r ≥ (4C⁴)^{depth+1} · ln(8|S|/δ) / ε²`.
    CBounded { c: f64 },
    /// ReLU activations: `r ≳ depth² · ln(|S|/δ) / ε²`, valid for
    /// `ε ≲ 1/depth`; the hidden universal constant is taken as 1.
    Relu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    /// Ceiling of the bound (saturating at u64::MAX).
    pub r: u64,
    /// The bound before rounding.
    pub r_raw: f64,
    /// For relu mode: whether `ε ≤ 1/depth` holds, the regime the theorem
    /// needs; `None` in C-bounded mode.
    pub relu_small_eps: Option<bool>,
}

/// Replication bound from explicit depth/size.
pub fn bound_from_dims(
    depth: usize,
    size: usize,
    mode: BoundMode,
    eps: f64,
    delta: f64,
) -> Result<BoundReport, ExperimentError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(ExperimentError::BadConfig(format!("eps must be > 0, got {eps}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ExperimentError::BadConfig(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if size == 0 {
        return Err(ExperimentError::BadConfig("skeleton size must be ≥ 1".into()));
    }
    let (r_raw, relu_small_eps) = match mode {
        BoundMode::CBounded { c } => {
            if !(c > 0.0 && c.is_finite()) {
                return Err(ExperimentError::BadConfig(format!("C must be > 0, got {c}")));
            }
            let base = 4.0 * c.powi(4);
            let raw = base.powi(depth as i32 + 1) * (8.0 * size as f64 / delta).ln() / (eps * eps);
            (raw, None)
        }
        BoundMode::Relu => {
            let d = depth as f64;
            let raw = d * d * (size as f64 / delta).ln() / (eps * eps);
            (raw, Some(eps * d <= 1.0))
        }
    };
    Ok(BoundReport {
        r: r_raw.ceil() as u64,
        r_raw,
        relu_small_eps,
    })
}

/// Replication bound for a skeleton.
pub fn theorem_bound_r(
    s: &Skeleton,
    mode: BoundMode,
    eps: f64,
    delta: f64,
) -> Result<BoundReport, ExperimentError> {
    bound_from_dims(s.depth(), s.size(), mode, eps, delta)
}

/// A ridge regression problem over a precomputed Gram matrix. `lambda`
/// plays the role of `1/R²` in the norm-constrained formulation.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    pub gram: GramMatrix,
    pub labels: Vec<f64>,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub alpha: Vec<f64>,
    pub fitted: Vec<f64>,
}

/// Solve `(Γ + λ m I) α = y`; fitted values are `Γ α`.
pub fn kernel_regression(p: &RegressionProblem) -> Result<RidgeFit, ExperimentError> {
    let m = p.labels.len();
    if p.gram.dim() != m {
        return Err(ExperimentError::LabelCount {
            labels: m,
            inputs: p.gram.dim(),
        });
    }
    if !(p.lambda > 0.0 && p.lambda.is_finite()) {
        return Err(ExperimentError::BadConfig(format!(
            "lambda must be > 0, got {}",
            p.lambda
        )));
    }
    let mut a = p.gram.data().to_vec();
    let ridge = p.lambda * m as f64;
    for i in 0..m {
        a[i * m + i] += ridge;
    }
    let alpha =
        crate::numeric::cholesky_solve(a, m, &p.labels).map_err(ExperimentError::Singular)?;
    let fitted = p
        .gram
        .data()
        .chunks_exact(m)
        .map(|row| row.iter().zip(&alpha).map(|(g, a)| g * a).sum())
        .collect();
    Ok(RidgeFit { alpha, fitted })
}

/// Kernel predictions at new points: `Σ_j α_j κ_S(x, x_j)`.
pub fn kernel_predict(
    s: &Skeleton,
    train: &[InputPoint],
    alpha: &[f64],
    test: &[InputPoint],
) -> Result<Vec<f64>, ExperimentError> {
    let evaluator = crate::compkernel::KernelEvaluator::new(s)?;
    let mut out = Vec::with_capacity(test.len());
    for x in test {
        let mut acc = 0.0;
        for (xj, &aj) in train.iter().zip(alpha) {
            acc += aj * evaluator.eval(x, xj)?;
        }
        out.push(acc);
    }
    Ok(out)
}

/// A labeled dataset of skeleton inputs.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Vec<InputPoint>,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Deterministic shuffled split; `train_fraction` in (0, 1).
    pub fn split(&self, train_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        let mut rng = CounterRng::new(seed, 0x5350_4c49);
        rng.shuffle(&mut order);
        let cut = ((self.len() as f64) * train_fraction).round() as usize;
        let cut = cut.clamp(1, self.len().saturating_sub(1).max(1));
        let pick = |ids: &[usize]| Dataset {
            inputs: ids.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: ids.iter().map(|&i| self.labels[i]).collect(),
        };
        (pick(&order[..cut]), pick(&order[cut..]))
    }
}

/// The convolution-vs-fully-connected testbed: uniform ±1 coordinates with
/// the label given by the parity of `q` adjacent coordinates (an even `q`
/// makes it symmetric under global sign flip). The window sits at
/// `(n − q)/2`.
pub fn adjacent_parity_dataset(n: usize, q: usize, m: usize, seed: u64) -> Dataset {
    assert!(q >= 1 && q <= n);
    let start = (n - q) / 2;
    let mut rng = CounterRng::new(seed, 0x4441_5441);
    let mut inputs = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for _ in 0..m {
        let signs: Vec<f64> = (0..n)
            .map(|_| if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 })
            .collect();
        let label: f64 = signs[start..start + q].iter().product();
        inputs.push(InputPoint::from_signs(&signs).expect("±1 coordinates are unit"));
        labels.push(label);
    }
    Dataset { inputs, labels }
}
