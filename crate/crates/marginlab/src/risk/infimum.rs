//! Best-in-class conditional errors via one-dimensional minimization.
//!
//! The conditional surrogate error of a pair with preference probability `η`
//! at score difference `u` is `g(u) = η·Φ_eff(u) + (1−η)·Φ_eff(−u)`. The
//! engine minimizes `g` over the score differences a model class can realize:
//! an interval `[−U, U]` for free and capacity-clamped tabular classes, or
//! the grid of nonzero multiples of `γ` for margin-respecting quantized
//! classes.

use crate::loss::{LossError, MarginSpec, SurrogateLoss};

use super::RiskError;

/// `g(u) = η·Φ_eff(u) + (1−η)·Φ_eff(−u)` for a fixed example.
pub(crate) struct ConditionalError<'a> {
    loss: &'a SurrogateLoss,
    spec: &'a MarginSpec,
    eta: f64,
    delta: f64,
}

impl<'a> ConditionalError<'a> {
    pub fn new(loss: &'a SurrogateLoss, spec: &'a MarginSpec, eta: f64, delta: f64) -> Self {
        Self {
            loss,
            spec,
            eta,
            delta,
        }
    }

    pub fn eval(&self, u: f64) -> Result<f64, LossError> {
        Ok(self.eta * self.loss.eval_shifted(self.spec, u, self.delta)?
            + (1.0 - self.eta) * self.loss.eval_shifted(self.spec, -u, self.delta)?)
    }
}

/// Minimizes `g(u) = η·Φ_eff(u) + (1−η)·Φ_eff(−u)` over `u ∈ [−U, U]`.
///
/// A coarse grid of step `U/1000` locates the basin; golden-section search
/// refines it until the bracket is narrower than `tol`. Returns the best
/// evaluated `(value, argmin)`. Capacity-restricted classes pass `U = K`.
pub fn conditional_infimum(
    loss: &SurrogateLoss,
    spec: &MarginSpec,
    eta: f64,
    delta: f64,
    search_bound: f64,
    tol: f64,
) -> Result<(f64, f64), RiskError> {
    if !(search_bound.is_finite() && search_bound > 0.0) {
        return Err(RiskError::Precondition(format!(
            "search bound must be positive, got {search_bound}"
        )));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(RiskError::Precondition(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if !(eta.is_finite() && (0.0..=1.0).contains(&eta)) {
        return Err(RiskError::Precondition(format!(
            "eta must lie in [0, 1], got {eta}"
        )));
    }
    let g = ConditionalError::new(loss, spec, eta, delta);
    let step = search_bound / 1000.0;
    let mut best_u = -search_bound;
    let mut best_v = g.eval(best_u)?;
    for i in 1..=2000 {
        let u = -search_bound + step * i as f64;
        let v = g.eval(u)?;
        if v < best_v {
            best_v = v;
            best_u = u;
        }
    }
    let lo = (best_u - step).max(-search_bound);
    let hi = (best_u + step).min(search_bound);
    let (u, v) = golden_section(|u| g.eval(u), lo, hi, tol)?;
    Ok(if v < best_v { (v, u) } else { (best_v, best_u) })
}

/// Golden-section search on `[lo, hi]`; shrinks the bracket below `tol` and
/// returns the best `(argmin, value)` among evaluated points.
fn golden_section(
    f: impl Fn(f64) -> Result<f64, LossError>,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<(f64, f64), RiskError> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let mut best = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2)?;
        }
        let (x, v) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
        if v < best.1 {
            best = (x, v);
        }
    }
    Ok(best)
}

/// Minimizes the conditional error over the score differences realized by a
/// margin-respecting quantized class: `u ∈ {m·γ : m ∈ ℤ, m ≠ 0, |mγ| ≤ U}`
/// (with `m = 0` admitted when `require_margin` is false).
pub(crate) fn quantized_infimum(
    loss: &SurrogateLoss,
    spec: &MarginSpec,
    eta: f64,
    delta: f64,
    gamma: f64,
    search_bound: f64,
    require_margin: bool,
) -> Result<(f64, f64), RiskError> {
    let max_m = (search_bound / gamma * (1.0 + 1e-12)).floor() as i64;
    if max_m < 1 {
        return Err(RiskError::Precondition(format!(
            "quantized class is empty: search bound {search_bound} below gamma {gamma}"
        )));
    }
    let g = ConditionalError::new(loss, spec, eta, delta);
    let mut best: Option<(f64, f64)> = None;
    for m in -max_m..=max_m {
        if m == 0 && require_margin {
            continue;
        }
        let u = m as f64 * gamma;
        let v = g.eval(u)?;
        if best.map_or(true, |(bv, _)| v < bv) {
            best = Some((v, u));
        }
    }
    Ok(best.expect("at least one candidate exists"))
}
