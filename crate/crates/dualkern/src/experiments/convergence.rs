//! Monte Carlo concentration experiments: draw fresh random initializations,
//! compare empirical kernels against the analytic compositional kernel, and
//! summarize error quantiles and ε-failure rates per replication factor.

use super::ExperimentError;
use crate::compkernel::{InputPoint, KernelEvaluator};
use crate::numeric::{derive_seed, median, quantile, slope, wilson_interval, Z_95};
use crate::realization::{realize_representation, representations};
use crate::skeleton::Skeleton;
use rayon::prelude::*;
use serde::Serialize;

/// Configuration for one convergence run. Identical configurations produce
/// identical reports regardless of thread count.
#[derive(Debug, Clone)]
pub struct ConvergenceConfig {
    pub skeleton: Skeleton,
    pub r_list: Vec<usize>,
    pub trials: usize,
    pub pairs: Vec<(InputPoint, InputPoint)>,
    /// Error budget ε for the failure-rate summary.
    pub eps: f64,
    pub seed: u64,
    pub beta: f64,
}

impl ConvergenceConfig {
    /// `count` input pairs drawn uniformly from the sphere product, fixed by
    /// the master seed.
    pub fn random_pairs(s: &Skeleton, count: usize, seed: u64) -> Vec<(InputPoint, InputPoint)> {
        let mut rng = crate::numeric::CounterRng::new(seed, 0x5041_4952);
        (0..count)
            .map(|_| {
                (
                    InputPoint::random_unit(&mut rng, s.coordinate_count(), s.coordinate_dim()),
                    InputPoint::random_unit(&mut rng, s.coordinate_count(), s.coordinate_dim()),
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub r: usize,
    pub trial: usize,
    pub pair_id: usize,
    pub kappa_emp: f64,
    pub kappa_analytic: f64,
    pub abs_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RSummary {
    pub r: usize,
    pub median_abs_err: f64,
    pub p95_abs_err: f64,
    pub failures: u64,
    pub events: u64,
    pub failure_rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub eps: f64,
    pub summaries: Vec<RSummary>,
    #[serde(skip)]
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    /// `r,trial,pair_id,kappa_emp,kappa_analytic,abs_err` rows.
    pub fn to_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "r,trial,pair_id,kappa_emp,kappa_analytic,abs_err")?;
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                row.r, row.trial, row.pair_id, row.kappa_emp, row.kappa_analytic, row.abs_err
            )?;
        }
        Ok(())
    }

    /// Per-r quantiles, failure rates, and Wilson intervals as JSON.
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn summary_for(&self, r: usize) -> Option<&RSummary> {
        self.summaries.iter().find(|s| s.r == r)
    }

    /// Least-squares slope of `ln(median error)` against `ln r`.
    pub fn loglog_slope(&self) -> f64 {
        let xs: Vec<f64> = self.summaries.iter().map(|s| (s.r as f64).ln()).collect();
        let ys: Vec<f64> = self
            .summaries
            .iter()
            .map(|s| s.median_abs_err.max(1e-300).ln())
            .collect();
        slope(&xs, &ys)
    }
}

/// Run the experiment: for every `r` and trial, a fresh initialization with
/// a seed derived from `(master seed, r index, trial)`, empirical kernels on
/// every pair, and the analytic value alongside.
pub fn run_convergence(cfg: &ConvergenceConfig) -> Result<ConvergenceReport, ExperimentError> {
    if cfg.trials == 0 {
        return Err(ExperimentError::BadConfig("trials must be ≥ 1".into()));
    }
    if cfg.r_list.is_empty() {
        return Err(ExperimentError::BadConfig("r list must be non-empty".into()));
    }
    if cfg.r_list.contains(&0) {
        return Err(ExperimentError::BadConfig("every r must be ≥ 1".into()));
    }
    if cfg.pairs.is_empty() {
        return Err(ExperimentError::BadConfig("pair list must be non-empty".into()));
    }
    if !(cfg.eps.is_finite() && cfg.eps > 0.0) {
        return Err(ExperimentError::BadConfig(format!(
            "eps must be > 0, got {}",
            cfg.eps
        )));
    }

    // Deduplicate inputs so each trial propagates each distinct point once.
    let mut uniques: Vec<InputPoint> = Vec::new();
    let mut pair_ids: Vec<(usize, usize)> = Vec::with_capacity(cfg.pairs.len());
    for (x, y) in &cfg.pairs {
        let xi = intern(&mut uniques, x);
        let yi = intern(&mut uniques, y);
        pair_ids.push((xi, yi));
    }

    // Analytic values once per pair.
    let evaluator = KernelEvaluator::new(&cfg.skeleton)?;
    let analytic: Vec<f64> = cfg
        .pairs
        .iter()
        .map(|(x, y)| evaluator.eval(x, y))
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::with_capacity(cfg.r_list.len() * cfg.trials * cfg.pairs.len());
    let mut summaries = Vec::with_capacity(cfg.r_list.len());
    for (r_index, &r) in cfg.r_list.iter().enumerate() {
        let net = realize_representation(&cfg.skeleton, r)?;
        // Trials are independent work units keyed by derived seeds; the
        // schedule cannot change the outcome.
        let trial_results: Vec<Result<Vec<f64>, ExperimentError>> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let trial_seed = derive_seed(
                    cfg.seed,
                    ((r_index as u64) << 32) ^ trial as u64 ^ 0x54_5249_414c,
                );
                let reps = representations(&net, trial_seed, cfg.beta, &uniques)?;
                Ok(pair_ids
                    .iter()
                    .map(|&(xi, yi)| reps.pair_kernel(xi, yi))
                    .collect())
            })
            .collect();
        let mut errors = Vec::with_capacity(cfg.trials * cfg.pairs.len());
        for (trial, result) in trial_results.into_iter().enumerate() {
            let kappas = result?;
            for (pair_id, (&kappa_emp, &kappa_analytic)) in
                kappas.iter().zip(&analytic).enumerate()
            {
                let abs_err = (kappa_emp - kappa_analytic).abs();
                errors.push(abs_err);
                rows.push(ConvergenceRow {
                    r,
                    trial,
                    pair_id,
                    kappa_emp,
                    kappa_analytic,
                    abs_err,
                });
            }
        }
        errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let failures = errors.iter().filter(|&&e| e > cfg.eps).count() as u64;
        let events = errors.len() as u64;
        let (wilson_low, wilson_high) = wilson_interval(failures, events, Z_95);
        summaries.push(RSummary {
            r,
            median_abs_err: median(&errors),
            p95_abs_err: quantile(&errors, 0.95),
            failures,
            events,
            failure_rate: failures as f64 / events as f64,
            wilson_low,
            wilson_high,
        });
    }
    Ok(ConvergenceReport {
        eps: cfg.eps,
        summaries,
        rows,
    })
}

fn intern(uniques: &mut Vec<InputPoint>, p: &InputPoint) -> usize {
    match uniques.iter().position(|q| q == p) {
        Some(i) => i,
        None => {
            uniques.push(p.clone());
            uniques.len() - 1
        }
    }
}
