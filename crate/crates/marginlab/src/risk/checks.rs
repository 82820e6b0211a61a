//! Constructive checks: coefficient tightness, the no-margin failure mode,
//! gap scaling, and Bradley-Terry minimizability.

use serde::Serialize;

use crate::data::{BtData, NegativeConstruction, PreferenceDataset, PreferenceExample};
use crate::loss::{MarginSpec, SurrogateLoss};
use crate::model::ScoringModel;
use crate::numeric::KahanSum;

use super::{
    conditional_infimum, surrogate_risk, target_risk, BoundCheck, BoundKind, RiskError,
};

/// Relative size of the saturation gap below which a bounded loss no longer
/// distinguishes the margin from its large-margin limit.
const SATURATION_TOLERANCE: f64 = 1e-4;

/// Largest escape residual `Φ(U−γ)`, relative to `Φ(−γ)`, for which the
/// truncated witness still certifies the coefficient.
const ESCAPE_TOLERANCE: f64 = 1e-9;

/// Result of the coefficient-tightness construction.
#[derive(Debug, Clone, Serialize)]
pub struct TightnessWitness {
    pub check: BoundCheck,
    /// `lhs / R_Φγ(h_boundary)`; equals `1/Φ(−γ)` when the witness is valid,
    /// certifying that no smaller coefficient satisfies the bound.
    pub ratio: f64,
    /// Residual surrogate value `Φ(U−γ)` of the escape hypothesis.
    pub escape_value: f64,
}

/// Builds the single-tuple witness showing `1/Φ(−γ)` is the optimal shifted
/// coefficient: a boundary hypothesis with `Δh = 0` pays full ranking error 1
/// while its shifted surrogate risk is exactly `Φ(−γ)`; an escape hypothesis
/// with `Δh = U` drives every best-in-class term to the residual `Φ(U−γ)`.
///
/// The witness is rejected when the escape residual has not vanished inside
/// the box, or when a bounded loss (GCE, MAE) is saturated at `−γ` so the
/// coefficient is indistinguishable from its large-margin limit.
pub fn tightness_witness(
    loss: &SurrogateLoss,
    gamma: f64,
    search_bound: f64,
) -> Result<TightnessWitness, RiskError> {
    if !loss.is_non_increasing() {
        return Err(RiskError::Precondition(format!(
            "{} is not non-increasing; the tightness construction does not apply",
            loss.family()
        )));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(RiskError::Precondition(format!(
            "gamma must be nonnegative, got {gamma}"
        )));
    }
    if !(search_bound.is_finite() && search_bound > gamma) {
        return Err(RiskError::Precondition(format!(
            "search bound must exceed gamma, got {search_bound}"
        )));
    }

    let coefficient = loss.shifted_coefficient(gamma)?;
    let norm = loss.eval(-gamma)?;
    let escape_value = loss.eval(search_bound - gamma)?;
    if let Some(sat) = loss.saturation_value() {
        if (sat - norm) / sat < SATURATION_TOLERANCE {
            return Err(RiskError::WitnessInvalid(format!(
                "{} saturates at gamma = {gamma}: Phi(-gamma) = {norm} is within {SATURATION_TOLERANCE} \
                 (relative) of its supremum {sat}, so the coefficient cannot be pinned to this margin",
                loss.family()
            )));
        }
    }
    if escape_value > ESCAPE_TOLERANCE * norm {
        return Err(RiskError::WitnessInvalid(format!(
            "escape value Phi({} - {gamma}) = {escape_value} does not vanish relative to \
             Phi(-gamma) = {norm} within the search box",
            search_bound
        )));
    }

    let example = PreferenceExample::new("wit", "wit_y", "wit_y_prime", 1.0, 1.0, 1.0)?;
    let dataset = PreferenceDataset::from_examples(vec![example])?.0;
    let spec = MarginSpec::uniform(gamma)?;
    let boundary = witness_model(0.0);
    let escape = witness_model(search_bound);

    let r_boundary = target_risk(&boundary, &dataset)?;
    let r_phi_boundary = surrogate_risk(&boundary, &dataset, loss, &spec)?;
    let r_star = target_risk(&escape, &dataset)?;
    let r_phi_star = surrogate_risk(&escape, &dataset, loss, &spec)?;
    let approximation = r_phi_star / norm;

    let lhs = r_boundary - r_star;
    let rhs = coefficient * (r_phi_boundary - r_phi_star) + approximation;
    let ratio = lhs / r_phi_boundary;
    Ok(TightnessWitness {
        check: BoundCheck {
            bound_kind: BoundKind::GammaShifted,
            lhs,
            rhs,
            coefficient,
            slack: rhs - lhs,
        },
        ratio,
        escape_value,
    })
}

fn witness_model(diff: f64) -> ScoringModel {
    ScoringModel::tabular_with_scores(vec![
        (("wit".into(), "wit_y".into()), diff / 2.0),
        (("wit".into(), "wit_y_prime".into()), -diff / 2.0),
    ])
}

/// One step of the no-margin demonstration.
#[derive(Debug, Clone, Serialize)]
pub struct NegativeDemoRow {
    pub epsilon: f64,
    /// `R_Φ(h₀) − R*_Φ = Φ(0) − Φ(ε)`: vanishes as the class squashes.
    pub surrogate_estimation_error: f64,
    /// `R(h₀) − R* = 1` at every ε: the ranking error never improves.
    pub target_estimation_error: f64,
}

/// Demonstrates the no-margin inconsistency on the single-tuple construction:
/// within a class squashed to `|Δh| ≤ ε`, the zero hypothesis has surrogate
/// estimation error at most `Φ(0) − Φ(ε) → 0`, yet its target estimation
/// error stays pinned at 1 for every ε (the sign is never corrected).
pub fn negative_demo(
    loss: &SurrogateLoss,
    construction: &NegativeConstruction,
) -> Result<Vec<NegativeDemoRow>, RiskError> {
    if !loss.is_non_increasing() {
        return Err(RiskError::Precondition(format!(
            "{} is not non-increasing; the construction does not apply",
            loss.family()
        )));
    }
    let dataset = &construction.dataset;
    let example = &dataset.examples()[0];
    let zero = ScoringModel::tabular_with_scores(vec![
        ((example.x.clone(), example.y.clone()), 0.0),
        ((example.x.clone(), example.y_prime.clone()), 0.0),
    ]);
    let r_zero = target_risk(&zero, dataset)?;
    let r_phi_zero = surrogate_risk(&zero, dataset, loss, &MarginSpec::None)?;

    let mut rows = Vec::with_capacity(construction.epsilons.len());
    for &eps in &construction.epsilons {
        // Best member of the squashed class: correctly ranks within |Δh| ≤ ε.
        let best = ScoringModel::tabular_with_scores(vec![
            ((example.x.clone(), example.y.clone()), -eps / 2.0),
            ((example.x.clone(), example.y_prime.clone()), eps / 2.0),
        ]);
        let r_best = target_risk(&best, dataset)?;
        let r_phi_best = surrogate_risk(&best, dataset, loss, &MarginSpec::None)?;
        rows.push(NegativeDemoRow {
            epsilon: eps,
            surrogate_estimation_error: r_phi_zero - r_phi_best,
            target_estimation_error: r_zero - r_best,
        });
    }
    Ok(rows)
}

/// Upper-bounds the approximation gap `A_γ` along a scaling schedule: for a
/// separating model `h` with no capacity bound, the scaled witness gives
/// `A_γ(α·h) ≤ E[Φ(α·u(e) − γ)] / Φ(−γ)`, which is non-increasing in `α` and
/// vanishes as `α → ∞`.
pub fn scaling_sweep(
    model: &ScoringModel,
    dataset: &PreferenceDataset,
    loss: &SurrogateLoss,
    gamma: f64,
    alphas: &[f64],
) -> Result<Vec<(f64, f64)>, RiskError> {
    if model.capacity().is_some() {
        return Err(RiskError::Precondition(
            "scaling requires an unbounded model; capacity_K is set".into(),
        ));
    }
    if alphas.is_empty() {
        return Err(RiskError::Precondition("alpha schedule is empty".into()));
    }
    for w in alphas.windows(2) {
        if w[1] <= w[0] {
            return Err(RiskError::Precondition(
                "alpha schedule must be strictly increasing".into(),
            ));
        }
    }
    if alphas.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
        return Err(RiskError::Precondition("alphas must be positive".into()));
    }
    let r = target_risk(model, dataset)?;
    if r != 0.0 {
        return Err(RiskError::Precondition(format!(
            "model does not separate the data: target risk {r}"
        )));
    }
    let spec = MarginSpec::uniform(gamma)?;
    let norm = loss.eval(-gamma)?;
    if norm <= 0.0 {
        return Err(crate::loss::LossError::DegenerateNormalizer(gamma).into());
    }
    let mut out = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        // On separated data (η ∈ {0, 1}) the shifted surrogate risk is
        // exactly E[Φ(α·u(e) − γ)] with u the correctly-signed margin.
        let scaled = model.clone().scale(alpha)?;
        let value = surrogate_risk(&scaled, dataset, loss, &spec)? / norm;
        out.push((alpha, value));
    }
    Ok(out)
}

/// Computes the logistic minimizability gap of the tabular-free class on
/// Bradley-Terry data. The per-pair optimum sits at the log-odds
/// `ln(η/(1−η)) = Δr*`, which the latent rewards realize exactly, so the gap
/// must vanish up to the search tolerance. Also cross-checks every per-pair
/// argmin against the log-odds identity (within `10·tol`).
pub fn bt_minimizability_check(
    bt: &BtData,
    search_bound: f64,
    tol: f64,
) -> Result<f64, RiskError> {
    let dataset = &bt.dataset;
    super::require_normalized(dataset)?;
    let loss = SurrogateLoss::logistic(1.0).expect("unit beta is valid");
    let mut gap = KahanSum::new();
    for ex in dataset.examples() {
        let reward_gap = bt.reward_gap(ex).ok_or_else(|| {
            RiskError::Precondition(format!(
                "missing latent reward for pair ({}, {}, {})",
                ex.x, ex.y, ex.y_prime
            ))
        })?;
        let realized =
            ex.eta * loss.eval(reward_gap)? + (1.0 - ex.eta) * loss.eval(-reward_gap)?;
        let (best, argmin) =
            conditional_infimum(&loss, &MarginSpec::None, ex.eta, ex.delta, search_bound, tol)?;
        if (argmin - reward_gap).abs() > 10.0 * tol {
            return Err(RiskError::CheckFailed(format!(
                "argmin {argmin} does not match the log-odds {reward_gap} on pair ({}, {}, {})",
                ex.x, ex.y, ex.y_prime
            )));
        }
        gap.add(ex.mass * (realized - best));
    }
    Ok(gap.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_bradley_terry, gen_negative_construction, gen_synonym_stress};

    #[test]
    fn tightness_pinned_values() {
        let log1 = SurrogateLoss::logistic(1.0).unwrap();
        let w = tightness_witness(&log1, 1.0, 50.0).unwrap();
        // Oracle: Φ(−1) = ln(1 + e) ≈ 1.3132617, ratio = 1/Φ(−1).
        let phi_neg = (1.0 + std::f64::consts::E).ln();
        assert!((w.check.lhs - 1.0).abs() < 1e-15);
        assert!((w.ratio - 1.0 / phi_neg).abs() < 1e-9);
        assert!((w.ratio - w.check.coefficient).abs() < 1e-9);
        assert!(w.check.slack.abs() < 1e-12);

        let p2 = SurrogateLoss::poly_hinge(2).unwrap();
        let w = tightness_witness(&p2, 1.0, 50.0).unwrap();
        assert!((w.ratio - 0.25).abs() < 1e-12);
    }

    #[test]
    fn tightness_ratio_matches_coefficient_for_unbounded_decay() {
        for loss in [
            SurrogateLoss::logistic(1.0).unwrap(),
            SurrogateLoss::logistic(2.0).unwrap(),
            SurrogateLoss::exponential(1.0).unwrap(),
            SurrogateLoss::poly_hinge(1).unwrap(),
            SurrogateLoss::poly_hinge(3).unwrap(),
        ] {
            for &gamma in &[0.5, 1.0, 2.0] {
                let w = tightness_witness(&loss, gamma, 50.0).unwrap();
                let coeff = loss.shifted_coefficient(gamma).unwrap();
                assert!(
                    (w.ratio - coeff).abs() <= 1e-9,
                    "{} gamma {gamma}",
                    loss.family()
                );
            }
        }
    }

    #[test]
    fn tightness_rejects_saturated_bounded_loss() {
        let mae = SurrogateLoss::mae();
        let err = tightness_witness(&mae, 10.0, 50.0).unwrap_err();
        assert!(matches!(err, RiskError::WitnessInvalid(_)), "{err:?}");
        // Small margins keep the bounded loss usable.
        assert!(tightness_witness(&mae, 1.0, 50.0).is_ok());
    }

    #[test]
    fn tightness_rejects_unvanished_escape() {
        let log1 = SurrogateLoss::logistic(1.0).unwrap();
        let err = tightness_witness(&log1, 9.0, 10.0).unwrap_err();
        assert!(matches!(err, RiskError::WitnessInvalid(_)));
    }

    #[test]
    fn negative_demo_rows() {
        let log1 = SurrogateLoss::logistic(1.0).unwrap();
        let construction = gen_negative_construction(&[1e-1, 1e-2, 1e-3, 1e-4, 1e-5]).unwrap();
        let rows = negative_demo(&log1, &construction).unwrap();
        assert_eq!(rows.len(), 5);
        let mut prev = f64::INFINITY;
        for row in &rows {
            assert_eq!(row.target_estimation_error, 1.0);
            assert!(row.surrogate_estimation_error < prev);
            prev = row.surrogate_estimation_error;
        }
        // Direct evaluation: Φ(0) − Φ(0.01) ≈ σ(0)·0.01.
        assert!((rows[1].surrogate_estimation_error - 0.005).abs() < 1e-4);
        assert!(rows[4].surrogate_estimation_error < 1e-4);
        assert!(rows[2].surrogate_estimation_error < 1e-3);
    }

    #[test]
    fn scaling_sweep_decreases_to_zero() {
        let log1 = SurrogateLoss::logistic(1.0).unwrap();
        let ds = gen_synonym_stress(4, 0.0, 1).unwrap();
        let mut entries = Vec::new();
        for (i, key) in ds.score_keys().into_iter().enumerate() {
            // Winning response first per pair: margins of 0.5 each.
            let v = if i % 2 == 0 { 0.25 } else { -0.25 };
            entries.push((key, v));
        }
        let model = ScoringModel::tabular_with_scores(entries);
        let sweep = scaling_sweep(&model, &ds, &log1, 1.0, &[1.0, 10.0, 100.0]).unwrap();
        assert_eq!(sweep.len(), 3);
        assert!(sweep.windows(2).all(|w| w[1].1 <= w[0].1));
        assert!(sweep[2].1 < 1e-20);
        // α = 1 equals the unscaled witness value.
        let direct = surrogate_risk(&model, &ds, &log1, &MarginSpec::uniform(1.0).unwrap())
            .unwrap()
            / log1.eval(-1.0).unwrap();
        assert!((sweep[0].1 - direct).abs() < 1e-15);

        // Contract errors.
        let capped = model.clone().with_capacity(1.0).unwrap();
        assert!(scaling_sweep(&capped, &ds, &log1, 1.0, &[1.0]).is_err());
        let tied = ScoringModel::tabular(ds.score_keys());
        assert!(scaling_sweep(&tied, &ds, &log1, 1.0, &[1.0]).is_err());
        assert!(scaling_sweep(&model, &ds, &log1, 1.0, &[]).is_err());
        assert!(scaling_sweep(&model, &ds, &log1, 1.0, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn bt_gap_vanishes() {
        for seed in [1, 2, 3] {
            let data = gen_bradley_terry(3, 4, 2.0, seed).unwrap();
            let gap = bt_minimizability_check(&data, 50.0, 1e-8).unwrap();
            assert!(gap.abs() <= 1e-6, "seed {seed}: gap = {gap}");
        }
    }

    #[test]
    fn bt_gap_argmin_matches_log_odds() {
        // η = σ(2) pairs put the per-pair argmin at u* ≈ 2; the check passes
        // exactly when the stored latents match the log-odds.
        let data = gen_bradley_terry(1, 2, 2.0, 11).unwrap();
        let ex = &data.dataset.examples()[0];
        let gap = data.reward_gap(ex).unwrap();
        let (_, argmin) = conditional_infimum(
            &SurrogateLoss::logistic(1.0).unwrap(),
            &MarginSpec::None,
            ex.eta,
            ex.delta,
            50.0,
            1e-8,
        )
        .unwrap();
        assert!((argmin - gap).abs() < 1e-7);
    }
}
