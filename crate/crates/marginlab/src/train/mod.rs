//! Full-batch first-order minimization of exact surrogate risk.
//!
//! Datasets are finite-support with exact conditional probabilities, so the
//! trainer descends the exact weighted risk (no sampling noise): heavy-ball
//! gradient descent with a capacity projection after every step. Traces
//! record surrogate risk, target risk, pairwise accuracy and the minimum
//! signed margin at every step.

mod experiments;

pub use experiments::{
    run_capacity_experiment, run_profile_sweep, run_synonym_experiment, CapacityConfig,
    CapacityReport, LossOutcome, NamedTrace, ProfileConfig, ProfileRow, ProfileTable,
    RunSummary, SynonymConfig, SynonymReport,
};

use serde::{Deserialize, Serialize};

use crate::data::{DataError, PreferenceDataset};
use crate::loss::{LossError, MarginSpec, SurrogateLoss};
use crate::model::{ModelError, ScoringModel};
use crate::numeric::KahanSum;
use crate::risk::{surrogate_risk, target_risk, RiskError};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at step {step}: surrogate risk is not finite")]
    Divergence { step: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Full-batch optimizer settings.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub step_size: f64,
    pub momentum: f64,
    pub max_steps: usize,
    /// Stop when the gradient max-norm falls below this.
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            step_size: 0.1,
            momentum: 0.9,
            max_steps: 1000,
            grad_tol: 1e-12,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(TrainError::InvalidConfig(format!(
                "step_size must be positive, got {}",
                self.step_size
            )));
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return Err(TrainError::InvalidConfig(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.max_steps < 1 {
            return Err(TrainError::InvalidConfig("max_steps must be >= 1".into()));
        }
        if !(self.grad_tol.is_finite() && self.grad_tol > 0.0) {
            return Err(TrainError::InvalidConfig(format!(
                "grad_tol must be positive, got {}",
                self.grad_tol
            )));
        }
        Ok(())
    }
}

/// Metrics snapshot after one optimization step.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub step: usize,
    pub surrogate_risk: f64,
    pub target_risk: f64,
    pub pairwise_accuracy: f64,
    pub min_signed_margin: f64,
}

/// Per-step records plus the trained model.
#[derive(Debug, Clone)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
    pub final_model: ScoringModel,
    /// Metrics of the final model (equals the last record when steps ran).
    pub final_metrics: TraceRecord,
}

impl TrainTrace {
    /// CSV with the columns
    /// `step,surrogate_risk,target_risk,pairwise_accuracy,min_signed_margin`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("step,surrogate_risk,target_risk,pairwise_accuracy,min_signed_margin\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.step, r.surrogate_risk, r.target_risk, r.pairwise_accuracy, r.min_signed_margin
            ));
        }
        out
    }
}

/// Mass-weighted accuracy against η-majority labels: a pair counts as correct
/// iff `sign(Δh) = sign(η − 1/2)`; pairs with `η = 1/2` leave the denominator.
/// Score ties are never correct. With no decisive pair the accuracy is
/// vacuously 1.
pub fn pairwise_accuracy(
    model: &ScoringModel,
    dataset: &PreferenceDataset,
) -> Result<f64, TrainError> {
    let mut correct = KahanSum::new();
    let mut total = KahanSum::new();
    for ex in dataset.examples() {
        if ex.eta == 0.5 {
            continue;
        }
        let majority = if ex.eta > 0.5 { 1.0 } else { -1.0 };
        let d = model.signed_margin(ex)?;
        total.add(ex.mass);
        if d != 0.0 && d.signum() == majority {
            correct.add(ex.mass);
        }
    }
    if total.value() == 0.0 {
        return Ok(1.0);
    }
    Ok(correct.value() / total.value())
}

/// Minimum over examples of the margin in the η-majority direction
/// (`η = 1/2` pairs use the stored orientation).
pub fn min_signed_margin(
    model: &ScoringModel,
    dataset: &PreferenceDataset,
) -> Result<f64, TrainError> {
    let mut min = f64::INFINITY;
    for ex in dataset.examples() {
        let d = model.signed_margin(ex)?;
        let signed = if ex.eta >= 0.5 { d } else { -d };
        min = min.min(signed);
    }
    Ok(min)
}

fn metrics(
    model: &ScoringModel,
    dataset: &PreferenceDataset,
    loss: &SurrogateLoss,
    spec: &MarginSpec,
    step: usize,
) -> Result<TraceRecord, TrainError> {
    Ok(TraceRecord {
        step,
        surrogate_risk: surrogate_risk(model, dataset, loss, spec)?,
        target_risk: target_risk(model, dataset)?,
        pairwise_accuracy: pairwise_accuracy(model, dataset)?,
        min_signed_margin: min_signed_margin(model, dataset)?,
    })
}

/// Heavy-ball gradient descent on the exact weighted surrogate risk.
///
/// The gradient of `Σ mass·[η·Φ_eff(Δh) + (1−η)·Φ_eff(−Δh)]` is accumulated
/// over both orientations of every example; the capacity projection runs
/// after each step when `capacity_K` is set. Stops when the gradient
/// max-norm falls below `grad_tol` or after `max_steps`.
pub fn train(
    model: &ScoringModel,
    dataset: &PreferenceDataset,
    loss: &SurrogateLoss,
    spec: &MarginSpec,
    cfg: &OptimizerConfig,
) -> Result<TrainTrace, TrainError> {
    cfg.validate()?;
    if !model.is_trainable() {
        return Err(ModelError::NotTrainable.into());
    }
    if !dataset.is_normalized() {
        return Err(RiskError::NotNormalized(dataset.total_mass()).into());
    }

    let mut model = model.clone();
    let mut velocity = vec![0.0; model.n_params()];
    let mut grad = vec![0.0; model.n_params()];
    let mut records = Vec::new();

    for step in 1..=cfg.max_steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for ex in dataset.examples() {
            if ex.eta > 0.0 {
                model.accumulate_grad(ex, loss, spec, 1.0, ex.mass * ex.eta, &mut grad)?;
            }
            if ex.eta < 1.0 {
                model.accumulate_grad(ex, loss, spec, -1.0, ex.mass * (1.0 - ex.eta), &mut grad)?;
            }
        }
        let grad_max = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if grad_max < cfg.grad_tol {
            break;
        }
        for ((param, v), g) in model.params_mut().iter_mut().zip(&mut velocity).zip(&grad) {
            *v = cfg.momentum * *v - cfg.step_size * g;
            *param += *v;
        }
        model.project_capacity();

        let record = metrics(&model, dataset, loss, spec, step)?;
        if !record.surrogate_risk.is_finite() {
            return Err(TrainError::Divergence { step });
        }
        records.push(record);
    }

    let final_step = records.last().map_or(0, |r| r.step);
    let final_metrics = match records.last() {
        Some(r) => r.clone(),
        None => metrics(&model, dataset, loss, spec, final_step)?,
    };
    Ok(TrainTrace {
        records,
        final_model: model,
        final_metrics,
    })
}

/// Worker cap for experiment fan-out: `LAB_THREADS` when set, otherwise the
/// number of logical processors.
pub(crate) fn worker_threads() -> usize {
    std::env::var("LAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Runs `f` over `items` on up to `workers` threads; results are merged back
/// in input order.
pub(crate) fn parallel_map<T, R, F>(items: Vec<T>, workers: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    let n = items.len();
    let workers = workers.clamp(1, n.max(1));
    if workers <= 1 || n <= 1 {
        return items.into_iter().map(f).collect();
    }
    let mut slots: Vec<Option<R>> = (0..n).map(|_| None).collect();
    let jobs: Vec<(usize, T)> = items.into_iter().enumerate().collect();
    let queue = std::sync::Mutex::new(jobs);
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let job = queue.lock().expect("queue lock").pop();
                match job {
                    Some((idx, item)) => {
                        let r = f(item);
                        results.lock().expect("results lock")[idx] = Some(r);
                    }
                    None => break,
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}
