//! Exact risks, minimizability/approximation gaps, and bound verification.
//!
//! Everything here is an exact expectation over a finite-support preference
//! distribution: the target 0-1 ranking risk, surrogate risks under margin
//! shifts, best-in-class conditional errors, and the left/right-hand sides of
//! the consistency bounds. Expectations accumulate with compensated summation
//! since gap quantities are differences of near-equal sums.
//!
//! Score ties count as ranking errors in both orientations (the `1_{u ≤ 0}`
//! convention): that makes every verified inequality hold literally, and
//! tabular models do hit exact ties.
//!
//! The model classes used for best-in-class quantities place a free score
//! difference on every support tuple, subject to the class constraint (a box,
//! a capacity box, or a margin-respecting quantized grid). For such classes
//! conditional and global optimization coincide, so both minimizability gaps
//! vanish identically.

mod checks;
mod infimum;

pub use checks::{
    bt_minimizability_check, negative_demo, scaling_sweep, tightness_witness, NegativeDemoRow,
    TightnessWitness,
};
pub use infimum::conditional_infimum;

use serde::Serialize;

use crate::data::{DataError, PreferenceDataset};
use crate::loss::{LossError, MarginSpec, SurrogateLoss};
use crate::model::{ModelError, ScoringModel};
use crate::numeric::KahanSum;

/// Default score-difference search box: surrogate values beyond `|u| = 50`
/// are below double-precision significance for the unbounded-decay families.
pub const DEFAULT_SEARCH_BOUND: f64 = 50.0;

/// Default golden-section interval tolerance.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Slack below this magnitude counts as a bound violation.
pub const SLACK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum RiskError {
    #[error("dataset is not normalized (total mass {0}); call normalize() first")]
    NotNormalized(f64),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(
        "hard-margin precondition violated on pair ({x}, {y}, {y_prime}): |Δh| = {margin} < {gamma}"
    )]
    MarginViolation {
        x: String,
        y: String,
        y_prime: String,
        margin: f64,
        gamma: f64,
    },
    #[error("tightness witness invalid: {0}")]
    WitnessInvalid(String),
    #[error("engine self-check failed: {0}")]
    CheckFailed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Hypothesis class for best-in-class quantities. Each class realizes any
/// per-pair score difference inside its constraint set, and both signs, so
/// the 0-1 conditional best is `min{η, 1−η}` throughout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelClass {
    /// Free score differences in `[−U, U]`.
    TabularFree { bound: f64 },
    /// Score differences clamped to `[−K, K]`.
    TabularCapacity { capacity: f64 },
    /// Margin-respecting quantized differences `{m·γ : m ≠ 0, |mγ| ≤ U}`.
    Quantized { gamma: f64, bound: f64 },
}

impl ModelClass {
    pub fn tabular_free(bound: f64) -> Result<Self, RiskError> {
        require_positive("bound", bound)?;
        Ok(Self::TabularFree { bound })
    }

    pub fn tabular_capacity(capacity: f64) -> Result<Self, RiskError> {
        require_positive("capacity", capacity)?;
        Ok(Self::TabularCapacity { capacity })
    }

    pub fn quantized(gamma: f64, bound: f64) -> Result<Self, RiskError> {
        require_positive("gamma", gamma)?;
        require_positive("bound", bound)?;
        if bound < gamma {
            return Err(RiskError::Precondition(format!(
                "quantized class is empty: bound {bound} below gamma {gamma}"
            )));
        }
        Ok(Self::Quantized { gamma, bound })
    }

    /// Best conditional surrogate error over the class for one example.
    fn conditional_best(
        &self,
        loss: &SurrogateLoss,
        spec: &MarginSpec,
        eta: f64,
        delta: f64,
        tol: f64,
    ) -> Result<(f64, f64), RiskError> {
        match *self {
            Self::TabularFree { bound } => conditional_infimum(loss, spec, eta, delta, bound, tol),
            Self::TabularCapacity { capacity } => {
                conditional_infimum(loss, spec, eta, delta, capacity, tol)
            }
            Self::Quantized { gamma, bound } => {
                infimum::quantized_infimum(loss, spec, eta, delta, gamma, bound, true)
            }
        }
    }

    fn search_bound(&self) -> f64 {
        match *self {
            Self::TabularFree { bound } => bound,
            Self::TabularCapacity { capacity } => capacity,
            Self::Quantized { bound, .. } => bound,
        }
    }
}

fn require_positive(name: &str, value: f64) -> Result<(), RiskError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(RiskError::Precondition(format!(
            "{name} must be positive, got {value}"
        )))
    }
}

/// All left/right-hand-side quantities of a consistency bound.
#[derive(Debug, Clone, Serialize)]
pub struct RiskReport {
    /// Target 0-1 risk `R`.
    pub target_risk: f64,
    /// Surrogate risk `R_Φ` under the given margin spec.
    pub surrogate_risk: f64,
    /// Best-in-class target risk `R*`.
    pub best_target: f64,
    /// Best-in-class surrogate risk `R*_Φ`.
    pub best_surrogate: f64,
    /// `M = R* − E[C*]`; identically zero for per-pair-free classes.
    pub minimizability_gap_target: f64,
    /// `M_Φ = R*_Φ − E[C*_Φ]`; identically zero for per-pair-free classes.
    pub minimizability_gap_surrogate: f64,
    /// Margin approximation gap `A_γ` (uniform: `E[C*_Φγ]/Φ(−γ) − E[C*]`;
    /// structure-aware: the inverse-weighted form `E[C*_L̃] − E[C*]`).
    pub approximation_gap: f64,
    /// Score-difference search box.
    pub search_bound: f64,
    /// Golden-section tolerance used for conditional infima.
    pub tolerance: f64,
}

/// Which theorem a [`BoundCheck`] instantiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    HardMargin,
    GammaShifted,
    StructureAware,
}

/// One evaluated consistency bound: `lhs ≤ rhs` with `slack = rhs − lhs`.
#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub bound_kind: BoundKind,
    /// `R(h) − R* + M`.
    pub lhs: f64,
    /// `coefficient · (R_Φ(h) − R*_Φ + M_Φ) + A`.
    pub rhs: f64,
    pub coefficient: f64,
    pub slack: f64,
}

fn require_normalized(dataset: &PreferenceDataset) -> Result<(), RiskError> {
    if dataset.is_normalized() {
        Ok(())
    } else {
        Err(RiskError::NotNormalized(dataset.total_mass()))
    }
}

/// Exact target 0-1 risk. Ties (`Δh = 0`) count as errors for both
/// orientations.
pub fn target_risk(model: &ScoringModel, dataset: &PreferenceDataset) -> Result<f64, RiskError> {
    require_normalized(dataset)?;
    let mut acc = KahanSum::new();
    for ex in dataset.examples() {
        let d = model.signed_margin(ex)?;
        let win_err = if d <= 0.0 { 1.0 } else { 0.0 };
        let lose_err = if -d <= 0.0 { 1.0 } else { 0.0 };
        acc.add(ex.mass * (ex.eta * win_err + (1.0 - ex.eta) * lose_err));
    }
    Ok(acc.value())
}

/// Exact surrogate risk
/// `Σ mass·[η·Φ_eff(Δh) + (1−η)·Φ_eff(−Δh)]` under the margin spec.
pub fn surrogate_risk(
    model: &ScoringModel,
    dataset: &PreferenceDataset,
    loss: &SurrogateLoss,
    spec: &MarginSpec,
) -> Result<f64, RiskError> {
    require_normalized(dataset)?;
    let mut acc = KahanSum::new();
    for ex in dataset.examples() {
        let d = model.signed_margin(ex)?;
        let win = loss.eval_shifted(spec, d, ex.delta)?;
        let lose = loss.eval_shifted(spec, -d, ex.delta)?;
        acc.add(ex.mass * (ex.eta * win + (1.0 - ex.eta) * lose));
    }
    Ok(acc.value())
}

/// Expected best-in-class 0-1 conditional error `E[C*] = E[min{η, 1−η}]`.
fn expected_target_best(dataset: &PreferenceDataset) -> f64 {
    let mut acc = KahanSum::new();
    for ex in dataset.examples() {
        acc.add(ex.mass * ex.eta.min(1.0 - ex.eta));
    }
    acc.value()
}

/// Expected best-in-class surrogate conditional error `E[C*_Φ]` under `spec`.
fn expected_surrogate_best(
    dataset: &PreferenceDataset,
    loss: &SurrogateLoss,
    spec: &MarginSpec,
    class: &ModelClass,
    tol: f64,
) -> Result<f64, RiskError> {
    let mut acc = KahanSum::new();
    for ex in dataset.examples() {
        let (value, _) = class.conditional_best(loss, spec, ex.eta, ex.delta, tol)?;
        acc.add(ex.mass * value);
    }
    Ok(acc.value())
}

/// The approximation gap for a margin spec over a class:
/// uniform `γ`: `E[C*_Φγ]/Φ(−γ) − E[C*]`; structure-aware: the
/// inverse-weighted `E[C*_L̃] − E[C*]` (weighting forced on).
fn approximation_gap(
    dataset: &PreferenceDataset,
    loss: &SurrogateLoss,
    spec: &MarginSpec,
    class: &ModelClass,
    tol: f64,
) -> Result<f64, RiskError> {
    let e_target = expected_target_best(dataset);
    match *spec {
        MarginSpec::None | MarginSpec::Uniform { .. } => {
            let gamma = spec.effective_margin(0.0);
            let norm = loss.eval(-gamma)?;
            if norm <= 0.0 {
                return Err(LossError::DegenerateNormalizer(gamma).into());
            }
            let e_surr = expected_surrogate_best(dataset, loss, spec, class, tol)?;
            Ok(e_surr / norm - e_target)
        }
        MarginSpec::StructureAware { tau, .. } => {
            let weighted = MarginSpec::structure_aware(tau, true).expect("tau validated");
            let e_surr = expected_surrogate_best(dataset, loss, &weighted, class, tol)?;
            Ok(e_surr - e_target)
        }
    }
}

/// Best-in-class risks and all gap quantities for a per-pair-free class.
///
/// The report's `target_risk`/`surrogate_risk` fields carry the class optima
/// (there is no distinguished model here); both minimizability gaps are zero
/// by construction for these classes.
pub fn gaps(
    dataset: &PreferenceDataset,
    loss: &SurrogateLoss,
    spec: &MarginSpec,
    class: &ModelClass,
) -> Result<RiskReport, RiskError> {
    require_normalized(dataset)?;
    let tol = DEFAULT_TOLERANCE;
    let e_target = expected_target_best(dataset);
    let e_surrogate = expected_surrogate_best(dataset, loss, spec, class, tol)?;
    let a_gamma = approximation_gap(dataset, loss, spec, class, tol)?;
    Ok(RiskReport {
        target_risk: e_target,
        surrogate_risk: e_surrogate,
        best_target: e_target,
        best_surrogate: e_surrogate,
        minimizability_gap_target: 0.0,
        minimizability_gap_surrogate: 0.0,
        approximation_gap: a_gamma,
        search_bound: class.search_bound(),
        tolerance: tol,
    })
}

/// Verifies the consistency bound selected by `spec` and `class` for a
/// concrete model:
///
/// - no shift on a quantized class → hard-margin bound with coefficient
///   `1/(Φ(−γ) − Φ(γ))` (membership `|Δh| ≥ γ` is checked on every pair);
/// - no shift on a box class → the `γ = 0` shifted bound;
/// - uniform `γ` → shifted bound with coefficient `1/Φ(−γ)` plus `A_γ`;
/// - structure-aware (inverse weighting required) → coefficient 1 plus `A_Γ`.
pub fn verify_bound(
    model: &ScoringModel,
    dataset: &PreferenceDataset,
    loss: &SurrogateLoss,
    spec: &MarginSpec,
    class: &ModelClass,
) -> Result<BoundCheck, RiskError> {
    verify_bound_scaled(model, dataset, loss, spec, class, 1.0)
}

/// [`verify_bound`] with the coefficient multiplied by `coefficient_scale`.
///
/// A falsifiability hook for the harness: scaling the coefficient below 1
/// must drive slacks negative, proving the checker can fail.
pub fn verify_bound_scaled(
    model: &ScoringModel,
    dataset: &PreferenceDataset,
    loss: &SurrogateLoss,
    spec: &MarginSpec,
    class: &ModelClass,
    coefficient_scale: f64,
) -> Result<BoundCheck, RiskError> {
    require_normalized(dataset)?;
    if !loss.is_non_increasing() {
        return Err(RiskError::Precondition(format!(
            "{} is not non-increasing; consistency bounds do not apply",
            loss.family()
        )));
    }
    let tol = DEFAULT_TOLERANCE;
    let e_target = expected_target_best(dataset);
    let r = target_risk(model, dataset)?;

    let (kind, coefficient, r_phi, e_surrogate, gap) = match (spec, class) {
        (MarginSpec::None, ModelClass::Quantized { gamma, .. }) => {
            for ex in dataset.examples() {
                let margin = model.signed_margin(ex)?;
                if margin.abs() < gamma * (1.0 - 1e-9) {
                    return Err(RiskError::MarginViolation {
                        x: ex.x.clone(),
                        y: ex.y.clone(),
                        y_prime: ex.y_prime.clone(),
                        margin: margin.abs(),
                        gamma: *gamma,
                    });
                }
            }
            let coefficient = loss.hard_margin_coefficient(*gamma)?;
            let r_phi = surrogate_risk(model, dataset, loss, spec)?;
            let e_surr = expected_surrogate_best(dataset, loss, spec, class, tol)?;
            (BoundKind::HardMargin, coefficient, r_phi, e_surr, 0.0)
        }
        (MarginSpec::None | MarginSpec::Uniform { .. }, _) => {
            let gamma = spec.effective_margin(0.0);
            let coefficient = loss.shifted_coefficient(gamma)?;
            let r_phi = surrogate_risk(model, dataset, loss, spec)?;
            let e_surr = expected_surrogate_best(dataset, loss, spec, class, tol)?;
            let gap = e_surr * coefficient - e_target;
            (BoundKind::GammaShifted, coefficient, r_phi, e_surr, gap)
        }
        (MarginSpec::StructureAware { .. }, _) => {
            if !spec.inverse_weighting() {
                return Err(RiskError::Precondition(
                    "the structure-aware bound is stated for the inverse-margin weighted loss; \
                     set inverse_weighting"
                        .into(),
                ));
            }
            let r_phi = surrogate_risk(model, dataset, loss, spec)?;
            let e_surr = expected_surrogate_best(dataset, loss, spec, class, tol)?;
            let gap = e_surr - e_target;
            (BoundKind::StructureAware, 1.0, r_phi, e_surr, gap)
        }
    };

    let coefficient = coefficient * coefficient_scale;
    let lhs = r - e_target;
    let rhs = coefficient * (r_phi - e_surrogate) + gap;
    Ok(BoundCheck {
        bound_kind: kind,
        lhs,
        rhs,
        coefficient,
        slack: rhs - lhs,
    })
}
