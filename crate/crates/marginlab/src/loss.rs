//! Surrogate loss families for pairwise ranking and their margin shifts.
//!
//! A surrogate loss `Φ` is a nonnegative function of the signed score
//! difference `u = w·(h(x,y) − h(x,y'))` that stands in for the 0-1 ranking
//! loss. This module provides the loss zoo (logistic, exponential, polynomial
//! hinge, squared IPO, GCE, MAE), margin shifts `Φ(u − γ)` with optional
//! inverse-margin weighting, and the closed-form quantities that govern
//! consistency:
//!
//! - hard-margin coefficient `1 / (Φ(−γ) − Φ(γ))`,
//! - shifted coefficient `1 / Φ(−γ)`,
//! - margin-capacity profile `ρ(γ, K) = Φ(K − γ) / Φ(−γ)`,
//! - the optimal logistic margin `γ* = K + ln(ε/(βK))/β`,
//! - multiplicative shift-invariance detection (exponential loss).
//!
//! All functions here are pure; everything is safe to call from any number
//! of threads.

use serde::{Deserialize, Serialize};

/// Errors from loss construction and evaluation.
#[derive(Debug, thiserror::Error)]
pub enum LossError {
    /// Loss argument was NaN or infinite.
    #[error("loss input must be finite, got {0}")]
    NonFiniteInput(f64),
    /// Bad family parameter or an operation applied to an unsupported family.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// `Φ(−γ) − Φ(γ)` vanished: the hard-margin bound is vacuous.
    #[error("degenerate coefficient: Phi(-gamma) - Phi(gamma) vanishes at gamma = {0}")]
    DegenerateCoefficient(f64),
    /// `Φ(−γ)` vanished: normalized quantities are undefined.
    #[error("degenerate normalizer: Phi(-gamma) = 0 at gamma = {0}")]
    DegenerateNormalizer(f64),
}

/// Numerically stable logistic sigmoid `σ(x) = 1/(1+e^{−x})`.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^{−t})` with asymptotic branches beyond |t| > 35.
///
/// The linear branch preserves the `−t` tail exactly where `e^{t}` is below
/// double resolution; the decay branch keeps the `e^{−t}` tail instead of
/// flushing to zero.
fn softplus_neg(t: f64) -> f64 {
    if t > 35.0 {
        (-t).exp()
    } else if t < -35.0 {
        -t
    } else {
        (-t).exp().ln_1p()
    }
}

/// A surrogate loss family with its parameters.
///
/// Every family except [`SurrogateLoss::SquaredIpo`] is convex and
/// non-increasing in `u` (GCE and MAE are non-increasing but bounded, hence
/// not convex on all of the real line). `SquaredIpo` penalizes deviation on
/// both sides of `β/2`; it takes part in evaluation, gradients and training
/// but is rejected by the coefficient and profile operations, which assume a
/// non-increasing loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LossWire", into = "LossWire")]
pub enum SurrogateLoss {
    /// `Φ(u) = log(1 + e^{−βu})`.
    Logistic { beta: f64 },
    /// `Φ(u) = e^{−βu}`.
    Exponential { beta: f64 },
    /// `Φ(u) = max(0, 1 − u)^k`.
    PolyHinge { degree: u32 },
    /// `Φ(u) = (u − β/2)²`.
    SquaredIpo { beta: f64 },
    /// `Φ(u) = (1 − σ(u)^q)/q` for `q ∈ (0, 1]`.
    Gce { q: f64 },
    /// `Φ(u) = 1 − σ(u)`.
    Mae,
}

impl SurrogateLoss {
    pub fn logistic(beta: f64) -> Result<Self, LossError> {
        check_positive("beta", beta)?;
        Ok(Self::Logistic { beta })
    }

    pub fn exponential(beta: f64) -> Result<Self, LossError> {
        check_positive("beta", beta)?;
        Ok(Self::Exponential { beta })
    }

    pub fn poly_hinge(degree: u32) -> Result<Self, LossError> {
        if degree == 0 {
            return Err(LossError::InvalidParameter(
                "poly_hinge degree must be >= 1".into(),
            ));
        }
        Ok(Self::PolyHinge { degree })
    }

    pub fn squared_ipo(beta: f64) -> Result<Self, LossError> {
        check_positive("beta", beta)?;
        Ok(Self::SquaredIpo { beta })
    }

    pub fn gce(q: f64) -> Result<Self, LossError> {
        if !(q.is_finite() && q > 0.0 && q <= 1.0) {
            return Err(LossError::InvalidParameter(format!(
                "gce q must lie in (0, 1], got {q}"
            )));
        }
        Ok(Self::Gce { q })
    }

    pub fn mae() -> Self {
        Self::Mae
    }

    /// Family tag as used in the JSON wire format.
    pub fn family(&self) -> &'static str {
        match self {
            Self::Logistic { .. } => "logistic",
            Self::Exponential { .. } => "exponential",
            Self::PolyHinge { .. } => "poly_hinge",
            Self::SquaredIpo { .. } => "squared_ipo",
            Self::Gce { .. } => "gce",
            Self::Mae => "mae",
        }
    }

    /// Whether `Φ` is non-increasing on the whole real line.
    pub fn is_non_increasing(&self) -> bool {
        !matches!(self, Self::SquaredIpo { .. })
    }

    /// Limit of `Φ(u)` as `u → −∞` for the bounded families (GCE, MAE).
    pub fn saturation_value(&self) -> Option<f64> {
        match self {
            Self::Gce { q } => Some(1.0 / q),
            Self::Mae => Some(1.0),
            _ => None,
        }
    }

    /// Evaluates `Φ(u)`.
    ///
    /// Exact at kinks: the polynomial hinge returns 0 for every `u ≥ 1`.
    pub fn eval(&self, u: f64) -> Result<f64, LossError> {
        if !u.is_finite() {
            return Err(LossError::NonFiniteInput(u));
        }
        Ok(match *self {
            Self::Logistic { beta } => softplus_neg(beta * u),
            Self::Exponential { beta } => (-beta * u).exp(),
            Self::PolyHinge { degree } => {
                let m = 1.0 - u;
                if m <= 0.0 {
                    0.0
                } else {
                    m.powi(degree as i32)
                }
            }
            Self::SquaredIpo { beta } => {
                let d = u - beta / 2.0;
                d * d
            }
            Self::Gce { q } => (1.0 - sigmoid(u).powf(q)) / q,
            Self::Mae => sigmoid(-u),
        })
    }

    /// Evaluates `Φ′(u)`. The polynomial hinge kink at `u = 1` takes its
    /// right derivative 0, so satisfied margins are inert in training.
    pub fn grad(&self, u: f64) -> Result<f64, LossError> {
        if !u.is_finite() {
            return Err(LossError::NonFiniteInput(u));
        }
        Ok(match *self {
            Self::Logistic { beta } => -beta * sigmoid(-beta * u),
            Self::Exponential { beta } => -beta * (-beta * u).exp(),
            Self::PolyHinge { degree } => {
                let m = 1.0 - u;
                if m <= 0.0 {
                    0.0
                } else {
                    -(degree as f64) * m.powi(degree as i32 - 1)
                }
            }
            Self::SquaredIpo { beta } => 2.0 * (u - beta / 2.0),
            Self::Gce { q } => {
                let s = sigmoid(u);
                -s.powf(q) * (1.0 - s)
            }
            Self::Mae => -sigmoid(u) * sigmoid(-u),
        })
    }

    /// Evaluates the margin-shifted loss `Φ(u − γ_eff)` where the effective
    /// margin comes from `spec` (and `delta` for structure-aware margins).
    /// With inverse weighting on, returns `Φ(u − Γ)/Φ(−Γ)`.
    pub fn eval_shifted(&self, spec: &MarginSpec, u: f64, delta: f64) -> Result<f64, LossError> {
        if !delta.is_finite() || delta < 0.0 {
            return Err(LossError::InvalidParameter(format!(
                "delta must be a finite nonnegative distance, got {delta}"
            )));
        }
        let gamma = spec.effective_margin(delta);
        let value = self.eval(u - gamma)?;
        if spec.inverse_weighting() {
            let norm = self.eval(-gamma)?;
            if norm <= 0.0 {
                return Err(LossError::DegenerateNormalizer(gamma));
            }
            Ok(value / norm)
        } else {
            Ok(value)
        }
    }

    /// Derivative of [`eval_shifted`](Self::eval_shifted) with respect to `u`.
    pub fn grad_shifted(&self, spec: &MarginSpec, u: f64, delta: f64) -> Result<f64, LossError> {
        if !delta.is_finite() || delta < 0.0 {
            return Err(LossError::InvalidParameter(format!(
                "delta must be a finite nonnegative distance, got {delta}"
            )));
        }
        let gamma = spec.effective_margin(delta);
        let g = self.grad(u - gamma)?;
        if spec.inverse_weighting() {
            let norm = self.eval(-gamma)?;
            if norm <= 0.0 {
                return Err(LossError::DegenerateNormalizer(gamma));
            }
            Ok(g / norm)
        } else {
            Ok(g)
        }
    }

    /// Hard-margin consistency coefficient `1 / (Φ(−γ) − Φ(γ))`.
    ///
    /// For the logistic family this equals `1/(βγ)` exactly.
    pub fn hard_margin_coefficient(&self, gamma: f64) -> Result<f64, LossError> {
        self.require_non_increasing("hard_margin_coefficient")?;
        check_nonnegative("gamma", gamma)?;
        let diff = self.eval(-gamma)? - self.eval(gamma)?;
        if diff <= 0.0 {
            return Err(LossError::DegenerateCoefficient(gamma));
        }
        Ok(1.0 / diff)
    }

    /// Shifted consistency coefficient `1 / Φ(−γ)`.
    pub fn shifted_coefficient(&self, gamma: f64) -> Result<f64, LossError> {
        self.require_non_increasing("shifted_coefficient")?;
        check_nonnegative("gamma", gamma)?;
        let norm = self.eval(-gamma)?;
        if norm <= 0.0 {
            return Err(LossError::DegenerateNormalizer(gamma));
        }
        Ok(1.0 / norm)
    }

    /// Margin-capacity profile `ρ(γ, K) = Φ(K − γ) / Φ(−γ)`.
    ///
    /// Equals 1 exactly when `K = 0`. Smaller values mean the loss is more
    /// forgiving when the model's score range `K` cannot meet the margin `γ`.
    pub fn capacity_profile(&self, gamma: f64, capacity: f64) -> Result<f64, LossError> {
        self.require_non_increasing("capacity_profile")?;
        if !gamma.is_finite() {
            return Err(LossError::NonFiniteInput(gamma));
        }
        check_nonnegative("capacity", capacity)?;
        let norm = self.eval(-gamma)?;
        if norm <= 0.0 {
            return Err(LossError::DegenerateNormalizer(gamma));
        }
        Ok(self.eval(capacity - gamma)? / norm)
    }

    /// Detects multiplicative shift invariance `Φ(u − γ) = C·Φ(u)`.
    ///
    /// Checked on the grid `[−20, 20]` with step 0.4 at relative tolerance
    /// 1e−9. Returns the constant when the identity holds (exponential loss:
    /// `C = e^{βγ}`), `None` otherwise. A margin shift buys nothing for such
    /// a loss: the constant cancels out of the normalized bound.
    pub fn shift_invariance_factor(&self, gamma: f64) -> Result<Option<f64>, LossError> {
        check_nonnegative("gamma", gamma)?;
        if gamma == 0.0 {
            return Ok(Some(1.0));
        }
        if let Self::Exponential { beta } = *self {
            return Ok(Some((beta * gamma).exp()));
        }
        const STEP: f64 = 0.4;
        const TOL: f64 = 1e-9;
        let grid = (0..=100).map(|i| -20.0 + STEP * i as f64);
        let mut factor = None;
        for u in grid {
            let shifted = self.eval(u - gamma)?;
            let base = self.eval(u)?;
            if base == 0.0 {
                if shifted == 0.0 {
                    continue;
                }
                return Ok(None);
            }
            let c = shifted / base;
            match factor {
                None => factor = Some(c),
                Some(c0) => {
                    if (c - c0).abs() > TOL * (c.abs() + c0.abs()) {
                        return Ok(None);
                    }
                }
            }
        }
        Ok(factor)
    }

    fn require_non_increasing(&self, op: &str) -> Result<(), LossError> {
        if self.is_non_increasing() {
            Ok(())
        } else {
            Err(LossError::InvalidParameter(format!(
                "{} is not non-increasing; {op} is undefined for it",
                self.family()
            )))
        }
    }
}

/// Optimal margin for the logistic loss under score capacity `K`:
/// `γ* = K + ln(ε/(βK))/β`, where `ε` is the surrogate estimation error.
///
/// The result may be negative when the estimation error is small relative to
/// the capacity; callers should surface that as "capacity dominates".
pub fn optimal_logistic_margin(beta: f64, capacity: f64, epsilon: f64) -> Result<f64, LossError> {
    check_positive("beta", beta)?;
    check_positive("capacity", capacity)?;
    check_positive("epsilon", epsilon)?;
    Ok(capacity + (epsilon / (beta * capacity)).ln() / beta)
}

/// Margin policy applied to the signed score difference before the loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MarginWire", into = "MarginWire")]
pub enum MarginSpec {
    /// No shift: the plain surrogate `Φ(u)`.
    None,
    /// Uniform shift `Φ(u − γ)` with `γ ≥ 0`.
    Uniform { gamma: f64 },
    /// Per-example shift `Φ(u − τ·Δ(y, y'))`; with `inverse_weighting` the
    /// loss is normalized by `Φ(−τΔ)` so misranked pairs cost at least 1.
    StructureAware { tau: f64, inverse_weighting: bool },
}

impl MarginSpec {
    pub fn uniform(gamma: f64) -> Result<Self, LossError> {
        check_nonnegative("gamma", gamma)?;
        Ok(Self::Uniform { gamma })
    }

    pub fn structure_aware(tau: f64, inverse_weighting: bool) -> Result<Self, LossError> {
        check_positive("tau", tau)?;
        Ok(Self::StructureAware {
            tau,
            inverse_weighting,
        })
    }

    /// Effective margin for an example at semantic distance `delta`.
    pub fn effective_margin(&self, delta: f64) -> f64 {
        match *self {
            Self::None => 0.0,
            Self::Uniform { gamma } => gamma,
            Self::StructureAware { tau, .. } => tau * delta,
        }
    }

    pub fn inverse_weighting(&self) -> bool {
        matches!(
            self,
            Self::StructureAware {
                inverse_weighting: true,
                ..
            }
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Uniform { .. } => "uniform",
            Self::StructureAware { .. } => "structure_aware",
        }
    }
}

fn check_positive(name: &str, value: f64) -> Result<(), LossError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(LossError::InvalidParameter(format!(
            "{name} must be finite and positive, got {value}"
        )))
    }
}

fn check_nonnegative(name: &str, value: f64) -> Result<(), LossError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(LossError::InvalidParameter(format!(
            "{name} must be finite and nonnegative, got {value}"
        )))
    }
}

// ── JSON wire formats ────────────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LossWire {
    family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    degree: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
}

impl TryFrom<LossWire> for SurrogateLoss {
    type Error = LossError;

    fn try_from(w: LossWire) -> Result<Self, LossError> {
        let reject = |field: &str, set: bool| {
            if set {
                Err(LossError::InvalidParameter(format!(
                    "field `{field}` does not apply to family `{}`",
                    w.family
                )))
            } else {
                Ok(())
            }
        };
        match w.family.as_str() {
            "logistic" | "exponential" | "squared_ipo" => {
                reject("degree", w.degree.is_some())?;
                reject("q", w.q.is_some())?;
                let beta = w.beta.unwrap_or(1.0);
                match w.family.as_str() {
                    "logistic" => SurrogateLoss::logistic(beta),
                    "exponential" => SurrogateLoss::exponential(beta),
                    _ => SurrogateLoss::squared_ipo(beta),
                }
            }
            "poly_hinge" => {
                reject("beta", w.beta.is_some())?;
                reject("q", w.q.is_some())?;
                let degree = w.degree.ok_or_else(|| {
                    LossError::InvalidParameter("poly_hinge requires `degree`".into())
                })?;
                SurrogateLoss::poly_hinge(degree)
            }
            "gce" => {
                reject("beta", w.beta.is_some())?;
                reject("degree", w.degree.is_some())?;
                let q = w
                    .q
                    .ok_or_else(|| LossError::InvalidParameter("gce requires `q`".into()))?;
                SurrogateLoss::gce(q)
            }
            "mae" => {
                reject("beta", w.beta.is_some())?;
                reject("degree", w.degree.is_some())?;
                reject("q", w.q.is_some())?;
                Ok(SurrogateLoss::mae())
            }
            other => Err(LossError::InvalidParameter(format!(
                "unknown loss family `{other}`"
            ))),
        }
    }
}

impl From<SurrogateLoss> for LossWire {
    fn from(loss: SurrogateLoss) -> Self {
        let mut w = LossWire {
            family: loss.family().to_string(),
            beta: None,
            degree: None,
            q: None,
        };
        match loss {
            SurrogateLoss::Logistic { beta }
            | SurrogateLoss::Exponential { beta }
            | SurrogateLoss::SquaredIpo { beta } => w.beta = Some(beta),
            SurrogateLoss::PolyHinge { degree } => w.degree = Some(degree),
            SurrogateLoss::Gce { q } => w.q = Some(q),
            SurrogateLoss::Mae => {}
        }
        w
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarginWire {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inverse_weighting: Option<bool>,
}

impl TryFrom<MarginWire> for MarginSpec {
    type Error = LossError;

    fn try_from(w: MarginWire) -> Result<Self, LossError> {
        match w.kind.as_str() {
            "none" => {
                if w.gamma.is_some() || w.tau.is_some() || w.inverse_weighting.is_some() {
                    return Err(LossError::InvalidParameter(
                        "margin kind `none` takes no parameters".into(),
                    ));
                }
                Ok(MarginSpec::None)
            }
            "uniform" => {
                if w.tau.is_some() || w.inverse_weighting.is_some() {
                    return Err(LossError::InvalidParameter(
                        "margin kind `uniform` takes only `gamma`".into(),
                    ));
                }
                let gamma = w.gamma.ok_or_else(|| {
                    LossError::InvalidParameter("uniform margin requires `gamma`".into())
                })?;
                MarginSpec::uniform(gamma)
            }
            "structure_aware" => {
                if w.gamma.is_some() {
                    return Err(LossError::InvalidParameter(
                        "structure_aware margin takes `tau`, not `gamma`".into(),
                    ));
                }
                let tau = w.tau.ok_or_else(|| {
                    LossError::InvalidParameter("structure_aware margin requires `tau`".into())
                })?;
                MarginSpec::structure_aware(tau, w.inverse_weighting.unwrap_or(false))
            }
            other => Err(LossError::InvalidParameter(format!(
                "unknown margin kind `{other}`"
            ))),
        }
    }
}

impl From<MarginSpec> for MarginWire {
    fn from(spec: MarginSpec) -> Self {
        let mut w = MarginWire {
            kind: spec.kind().to_string(),
            gamma: None,
            tau: None,
            inverse_weighting: None,
        };
        match spec {
            MarginSpec::None => {}
            MarginSpec::Uniform { gamma } => w.gamma = Some(gamma),
            MarginSpec::StructureAware {
                tau,
                inverse_weighting,
            } => {
                w.tau = Some(tau);
                w.inverse_weighting = Some(inverse_weighting);
            }
        }
        w
    }
}
