//! Last-layer training over random representations and the comparison
//! against regression in the analytic kernel space.

use super::{kernel_predict, kernel_regression, Dataset, ExperimentError, Loss, RegressionProblem};
use crate::compkernel::gram;
use crate::numeric::cholesky_solve;
use crate::realization::{representations, RepMatrix, WeightAssignment};
use crate::realization::{realize_representation, representation, Network};
use crate::skeleton::Skeleton;

/// Feature dimension above which the ridge solve switches from the primal
/// normal equations to the (equivalent) kernel route over the empirical
/// Gram matrix.
const PRIMAL_LIMIT: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct LastLayerFit {
    /// Linear weights over the normalized representation.
    pub v: Vec<f64>,
    pub fitted: Vec<f64>,
}

/// Ridge over explicit feature rows: minimize
/// `(1/m)·Σ (⟨v, ψ_i⟩ − y_i)² + λ‖v‖²`.
pub fn ridge_on_features(
    features: &RepMatrix,
    labels: &[f64],
    lambda: f64,
) -> Result<LastLayerFit, ExperimentError> {
    let m = features.rows();
    let q = features.width();
    if labels.len() != m {
        return Err(ExperimentError::LabelCount {
            labels: labels.len(),
            inputs: m,
        });
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(ExperimentError::BadConfig(format!(
            "lambda must be > 0, got {lambda}"
        )));
    }
    let v = if q <= PRIMAL_LIMIT {
        // (ΨᵀΨ + λ m I) v = Ψᵀ y
        let mut a = vec![0.0f64; q * q];
        for i in 0..m {
            let row = features.row(i);
            for p in 0..q {
                let rp = row[p];
                if rp == 0.0 {
                    continue;
                }
                let dst = &mut a[p * q..(p + 1) * q];
                for (slot, &rq) in dst.iter_mut().zip(row) {
                    *slot += rp * rq;
                }
            }
        }
        let ridge = lambda * m as f64;
        for p in 0..q {
            a[p * q + p] += ridge;
        }
        let mut rhs = vec![0.0f64; q];
        for (i, &y) in labels.iter().enumerate() {
            for (slot, &f) in rhs.iter_mut().zip(features.row(i)) {
                *slot += f * y;
            }
        }
        cholesky_solve(a, q, &rhs).map_err(ExperimentError::Singular)?
    } else {
        // representer form: v = Ψᵀ α with (Ψ Ψᵀ + λ m I) α = y
        let mut g = vec![0.0f64; m * m];
        for i in 0..m {
            for j in i..m {
                let v = features.pair_kernel(i, j);
                g[i * m + j] = v;
                g[j * m + i] = v;
            }
        }
        let ridge = lambda * m as f64;
        for i in 0..m {
            g[i * m + i] += ridge;
        }
        let alpha = cholesky_solve(g, m, labels).map_err(ExperimentError::Singular)?;
        let mut v = vec![0.0f64; q];
        for (i, &a) in alpha.iter().enumerate() {
            for (slot, &f) in v.iter_mut().zip(features.row(i)) {
                *slot += a * f;
            }
        }
        v
    };
    let fitted = (0..m)
        .map(|i| features.row(i).iter().zip(&v).map(|(f, w)| f * w).sum())
        .collect();
    Ok(LastLayerFit { v, fitted })
}

/// Train the last layer of a realized network on a dataset: ridge over the
/// normalized representations `Ψ_w(x_i)`.
pub fn last_layer_train(
    net: &Network,
    w: &WeightAssignment,
    dataset: &Dataset,
    lambda: f64,
) -> Result<LastLayerFit, ExperimentError> {
    let q = net.representation_width();
    let mut data = Vec::with_capacity(dataset.len() * q);
    for x in &dataset.inputs {
        data.extend_from_slice(&representation(net, w, x)?);
    }
    let features = RepMatrix::from_rows(dataset.len(), q, data);
    ridge_on_features(&features, &dataset.labels, lambda)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    /// `None` for the analytic-kernel rows.
    pub r: Option<usize>,
    pub space: &'static str,
    pub train_loss: f64,
    pub test_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    /// `r,space,train_loss,test_loss` rows.
    pub fn to_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "r,space,train_loss,test_loss")?;
        for row in &self.rows {
            let r = row.r.map(|r| r.to_string()).unwrap_or_default();
            writeln!(out, "{r},{},{},{}", row.space, row.train_loss, row.test_loss)?;
        }
        Ok(())
    }

    pub fn analytic(&self) -> Option<&ComparisonRow> {
        self.rows.iter().find(|row| row.space == "analytic")
    }

    pub fn empirical(&self, r: usize) -> Option<&ComparisonRow> {
        self.rows
            .iter()
            .find(|row| row.space == "empirical" && row.r == Some(r))
    }
}

/// Compare ridge regression in the analytic kernel space against last-layer
/// training over random representations, at each replication factor.
///
/// The empirical side runs at λ/2: the hypothesis-space approximation
/// guarantees match a norm ball of radius √2·R, which in Lagrangian form is
/// a halved ridge coefficient.
pub fn approximation_experiment(
    s: &Skeleton,
    r_list: &[usize],
    dataset: &Dataset,
    lambda: f64,
    loss: Loss,
    seed: u64,
    train_fraction: f64,
) -> Result<ComparisonTable, ExperimentError> {
    if dataset.len() < 2 {
        return Err(ExperimentError::BadConfig(
            "dataset needs at least two points".into(),
        ));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(ExperimentError::BadConfig(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let (train, test) = dataset.split(train_fraction, seed);
    let mut rows = Vec::new();

    // Analytic kernel space.
    let g = gram(s, &train.inputs)?;
    let fit = kernel_regression(&RegressionProblem {
        gram: g,
        labels: train.labels.clone(),
        lambda,
    })?;
    let test_pred = kernel_predict(s, &train.inputs, &fit.alpha, &test.inputs)?;
    rows.push(ComparisonRow {
        r: None,
        space: "analytic",
        train_loss: loss.mean(&fit.fitted, &train.labels),
        test_loss: loss.mean(&test_pred, &test.labels),
    });

    // Empirical spaces, one random representation per r.
    let mut all_inputs = train.inputs.clone();
    all_inputs.extend(test.inputs.iter().cloned());
    for (i, &r) in r_list.iter().enumerate() {
        let net = realize_representation(s, r)?;
        let rep_seed = crate::numeric::derive_seed(
            crate::numeric::derive_seed(seed, 0x5245_5053 ^ i as u64),
            r as u64,
        );
        let reps = representations(&net, rep_seed, s.beta(), &all_inputs)?;
        let (train_rep, test_rep) = reps.split_rows(train.inputs.len());
        let fit = ridge_on_features(&train_rep, &train.labels, lambda / 2.0)?;
        let test_pred: Vec<f64> = (0..test.inputs.len())
            .map(|i| {
                test_rep
                    .row(i)
                    .iter()
                    .zip(&fit.v)
                    .map(|(f, w)| f * w)
                    .sum()
            })
            .collect();
        rows.push(ComparisonRow {
            r: Some(r),
            space: "empirical",
            train_loss: loss.mean(&fit.fitted, &train.labels),
            test_loss: loss.mean(&test_pred, &test.labels),
        });
    }
    Ok(ComparisonTable { rows })
}

/// Convenience for the skeleton-vs-skeleton expressivity check: held-out
/// loss of analytic kernel ridge on a dataset.
pub fn analytic_test_loss(
    s: &Skeleton,
    dataset: &Dataset,
    lambda: f64,
    loss: Loss,
    seed: u64,
    train_fraction: f64,
) -> Result<f64, ExperimentError> {
    let table = approximation_experiment(s, &[], dataset, lambda, loss, seed, train_fraction)?;
    Ok(table.analytic().expect("analytic row always present").test_loss)
}
