//! Parametric scoring functions `h(x, y)` with capacity, quantization and
//! scaling.
//!
//! Three parameterizations: `tabular` (one free score per `(x, y)` key),
//! `linear` (weights over per-key feature vectors), and `global` (one score
//! per response id, independent of the context). Scores pass through three
//! transforms in order: multiply by `scale_alpha`, clamp to `[−K/2, K/2]`
//! when a capacity `K` is set (so every score difference obeys `|Δh| ≤ K`),
//! and round to the nearest multiple of `quantize_gamma` when set (ties round
//! toward +∞, so all emitted scores live on the grid `{k·γ}`).
//!
//! Models are value types: scoring is pure, training mutates a private clone.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::data::PreferenceExample;
use crate::loss::{LossError, MarginSpec, SurrogateLoss};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("no score for key ({x}, {y})")]
    MissingKey { x: String, y: String },
    #[error("no feature vector for key ({x}, {y})")]
    MissingFeature { x: String, y: String },
    #[error("quantized models are not trainable")]
    NotTrainable,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Feature vectors for linear models, keyed by `(x, y)`.
#[derive(Debug, Clone, Default)]
pub struct FeatureMap {
    map: BTreeMap<(String, String), Vec<f64>>,
    dim: usize,
}

impl FeatureMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        x: impl Into<String>,
        y: impl Into<String>,
        features: Vec<f64>,
    ) -> Result<(), ModelError> {
        if features.is_empty() {
            return Err(ModelError::InvalidParameter(
                "feature dimension must be >= 1".into(),
            ));
        }
        if self.dim == 0 {
            self.dim = features.len();
        } else if features.len() != self.dim {
            return Err(ModelError::InvalidParameter(format!(
                "feature dimension mismatch: expected {}, got {}",
                self.dim,
                features.len()
            )));
        }
        self.map.insert((x.into(), y.into()), features);
        Ok(())
    }

    pub fn get(&self, x: &str, y: &str) -> Option<&[f64]> {
        self.map
            .get(&(x.to_string(), y.to_string()))
            .map(|v| v.as_slice())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

#[derive(Debug, Clone)]
enum ModelParams {
    Tabular {
        keys: Vec<(String, String)>,
        index: HashMap<(String, String), usize>,
        values: Vec<f64>,
    },
    Linear {
        features: FeatureMap,
        weights: Vec<f64>,
    },
    Global {
        ids: Vec<String>,
        index: HashMap<String, usize>,
        values: Vec<f64>,
    },
}

/// A scoring function over `(context, response)` pairs.
#[derive(Debug, Clone)]
pub struct ScoringModel {
    params: ModelParams,
    capacity: Option<f64>,
    quantize: Option<f64>,
    scale_alpha: f64,
}

impl ScoringModel {
    /// Zero-initialized tabular model over the given keys. Zero init keeps
    /// the all-ties member of the class explicit.
    pub fn tabular(keys: Vec<(String, String)>) -> Self {
        let index = keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i))
            .collect();
        let values = vec![0.0; keys.len()];
        Self::plain(ModelParams::Tabular {
            keys,
            index,
            values,
        })
    }

    /// Tabular model with explicit scores.
    pub fn tabular_with_scores(entries: Vec<((String, String), f64)>) -> Self {
        let keys: Vec<(String, String)> = entries.iter().map(|(k, _)| k.clone()).collect();
        let index = keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i))
            .collect();
        let values = entries.into_iter().map(|(_, v)| v).collect();
        Self::plain(ModelParams::Tabular {
            keys,
            index,
            values,
        })
    }

    /// Linear model with seeded uniform init in `[−0.01, 0.01]`.
    pub fn linear(features: FeatureMap, seed: u64) -> Result<Self, ModelError> {
        if features.dim() == 0 {
            return Err(ModelError::InvalidParameter(
                "linear model needs a non-empty feature map".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..features.dim())
            .map(|_| rng.random_range(-0.01..=0.01))
            .collect();
        Ok(Self::plain(ModelParams::Linear { features, weights }))
    }

    /// Global model: one score per response id, independent of the context.
    pub fn global(entries: Vec<(String, f64)>) -> Self {
        let ids: Vec<String> = entries.iter().map(|(id, _)| id.clone()).collect();
        let index = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let values = entries.into_iter().map(|(_, v)| v).collect();
        Self::plain(ModelParams::Global { ids, index, values })
    }

    fn plain(params: ModelParams) -> Self {
        Self {
            params,
            capacity: None,
            quantize: None,
            scale_alpha: 1.0,
        }
    }

    pub fn with_capacity(mut self, k: f64) -> Result<Self, ModelError> {
        if !(k.is_finite() && k > 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "capacity_K must be positive, got {k}"
            )));
        }
        self.capacity = Some(k);
        Ok(self)
    }

    pub fn with_quantization(mut self, gamma: f64) -> Result<Self, ModelError> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "quantize_gamma must be positive, got {gamma}"
            )));
        }
        self.quantize = Some(gamma);
        Ok(self)
    }

    /// Multiplies the scale factor; raw parameters are untouched.
    pub fn scale(mut self, alpha: f64) -> Result<Self, ModelError> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        self.scale_alpha *= alpha;
        Ok(self)
    }

    pub fn kind(&self) -> &'static str {
        match self.params {
            ModelParams::Tabular { .. } => "tabular",
            ModelParams::Linear { .. } => "linear",
            ModelParams::Global { .. } => "global",
        }
    }

    pub fn capacity(&self) -> Option<f64> {
        self.capacity
    }

    pub fn quantize_gamma(&self) -> Option<f64> {
        self.quantize
    }

    pub fn scale_alpha(&self) -> f64 {
        self.scale_alpha
    }

    pub fn is_trainable(&self) -> bool {
        self.quantize.is_none()
    }

    pub fn n_params(&self) -> usize {
        self.raw_values().len()
    }

    pub fn params(&self) -> &[f64] {
        self.raw_values()
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match &mut self.params {
            ModelParams::Tabular { values, .. } | ModelParams::Global { values, .. } => values,
            ModelParams::Linear { weights, .. } => weights,
        }
    }

    fn raw_values(&self) -> &[f64] {
        match &self.params {
            ModelParams::Tabular { values, .. } | ModelParams::Global { values, .. } => values,
            ModelParams::Linear { weights, .. } => weights,
        }
    }

    fn raw_score(&self, x: &str, y: &str) -> Result<f64, ModelError> {
        match &self.params {
            ModelParams::Tabular { index, values, .. } => index
                .get(&(x.to_string(), y.to_string()))
                .map(|&i| values[i])
                .ok_or_else(|| ModelError::MissingKey {
                    x: x.to_string(),
                    y: y.to_string(),
                }),
            ModelParams::Linear { features, weights } => {
                let f = features.get(x, y).ok_or_else(|| ModelError::MissingFeature {
                    x: x.to_string(),
                    y: y.to_string(),
                })?;
                Ok(f.iter().zip(weights).map(|(a, w)| a * w).sum())
            }
            ModelParams::Global { index, values, .. } => index
                .get(y)
                .map(|&i| values[i])
                .ok_or_else(|| ModelError::MissingKey {
                    x: x.to_string(),
                    y: y.to_string(),
                }),
        }
    }

    /// Emitted score: `α·raw`, clamped to `[−K/2, K/2]`, then rounded to the
    /// nearest multiple of `quantize_gamma` (ties toward +∞).
    pub fn score(&self, x: &str, y: &str) -> Result<f64, ModelError> {
        let mut s = self.scale_alpha * self.raw_score(x, y)?;
        if let Some(k) = self.capacity {
            s = s.clamp(-k / 2.0, k / 2.0);
        }
        if let Some(g) = self.quantize {
            s = ((s / g) + 0.5).floor() * g;
        }
        Ok(s)
    }

    /// Unsigned score difference `h(x, y) − h(x, y')`; callers multiply by
    /// the preference label `w` as needed.
    pub fn signed_margin(&self, example: &PreferenceExample) -> Result<f64, ModelError> {
        Ok(self.score(&example.x, &example.y)? - self.score(&example.x, &example.y_prime)?)
    }

    /// Whether `α·raw` passes the capacity clamp untouched. The boundary
    /// takes the inside value, matching the projection subgradient.
    fn clamp_pass(&self, x: &str, y: &str) -> Result<f64, ModelError> {
        match self.capacity {
            None => Ok(1.0),
            Some(k) => {
                let s = self.scale_alpha * self.raw_score(x, y)?;
                Ok(if s.abs() <= k / 2.0 { 1.0 } else { 0.0 })
            }
        }
    }

    /// Gradient of `Φ_eff(w·Δh, Δ)` with respect to the raw parameters.
    ///
    /// Quantized models are not trainable. Clamped scores contribute zero
    /// gradient beyond the clamp.
    pub fn grad_params(
        &self,
        example: &PreferenceExample,
        loss: &SurrogateLoss,
        spec: &MarginSpec,
        label_w: f64,
    ) -> Result<Vec<f64>, ModelError> {
        let mut grad = vec![0.0; self.n_params()];
        self.accumulate_grad(example, loss, spec, label_w, 1.0, &mut grad)?;
        Ok(grad)
    }

    /// Adds `weight · ∂Φ_eff(w·Δh, Δ)/∂params` into `out`.
    pub(crate) fn accumulate_grad(
        &self,
        example: &PreferenceExample,
        loss: &SurrogateLoss,
        spec: &MarginSpec,
        label_w: f64,
        weight: f64,
        out: &mut [f64],
    ) -> Result<(), ModelError> {
        if !self.is_trainable() {
            return Err(ModelError::NotTrainable);
        }
        let u = label_w * self.signed_margin(example)?;
        let g = loss.grad_shifted(spec, u, example.delta)?;
        let pass_y = self.clamp_pass(&example.x, &example.y)?;
        let pass_yp = self.clamp_pass(&example.x, &example.y_prime)?;
        let gy = weight * g * label_w * self.scale_alpha * pass_y;
        let gyp = -weight * g * label_w * self.scale_alpha * pass_yp;
        match &self.params {
            ModelParams::Tabular { index, .. } => {
                out[index[&(example.x.clone(), example.y.clone())]] += gy;
                out[index[&(example.x.clone(), example.y_prime.clone())]] += gyp;
            }
            ModelParams::Global { index, .. } => {
                out[*index.get(&example.y).ok_or_else(|| ModelError::MissingKey {
                    x: example.x.clone(),
                    y: example.y.clone(),
                })?] += gy;
                out[*index
                    .get(&example.y_prime)
                    .ok_or_else(|| ModelError::MissingKey {
                        x: example.x.clone(),
                        y: example.y_prime.clone(),
                    })?] += gyp;
            }
            ModelParams::Linear { features, .. } => {
                let fy = features
                    .get(&example.x, &example.y)
                    .ok_or_else(|| ModelError::MissingFeature {
                        x: example.x.clone(),
                        y: example.y.clone(),
                    })?;
                let fyp = features.get(&example.x, &example.y_prime).ok_or_else(|| {
                    ModelError::MissingFeature {
                        x: example.x.clone(),
                        y: example.y_prime.clone(),
                    }
                })?;
                for (o, (a, b)) in out.iter_mut().zip(fy.iter().zip(fyp)) {
                    *o += gy * a + gyp * b;
                }
            }
        }
        Ok(())
    }

    /// Projects raw parameters back inside the capacity box. Tabular and
    /// global parameters are scores up to `α`, so the projection clamps them
    /// to `[−K/(2α), K/(2α)]`; linear weights are left alone (their scores
    /// are still clamped at evaluation time).
    pub(crate) fn project_capacity(&mut self) {
        let Some(k) = self.capacity else { return };
        let bound = k / (2.0 * self.scale_alpha);
        match &mut self.params {
            ModelParams::Tabular { values, .. } | ModelParams::Global { values, .. } => {
                for v in values {
                    *v = v.clamp(-bound, bound);
                }
            }
            ModelParams::Linear { .. } => {}
        }
    }

    /// Checkpoint as JSON: `{"kind", "params", "capacity_K",
    /// "quantize_gamma", "scale_alpha"}`.
    pub fn to_checkpoint(&self) -> Value {
        let params = match &self.params {
            ModelParams::Tabular { keys, values, .. } => {
                let mut by_x: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
                for ((x, y), v) in keys.iter().zip(values) {
                    by_x.entry(x).or_default().insert(y, *v);
                }
                serde_json::to_value(by_x).expect("string-keyed maps serialize")
            }
            ModelParams::Linear { weights, .. } => json!(weights),
            ModelParams::Global { ids, values, .. } => {
                let map: BTreeMap<&str, f64> =
                    ids.iter().map(|id| id.as_str()).zip(values.iter().copied()).collect();
                serde_json::to_value(map).expect("string-keyed maps serialize")
            }
        };
        json!({
            "kind": self.kind(),
            "params": params,
            "capacity_K": self.capacity,
            "quantize_gamma": self.quantize,
            "scale_alpha": self.scale_alpha,
        })
    }

    /// Restores a model from checkpoint JSON. Linear checkpoints carry only
    /// the weights; supply the feature map alongside.
    pub fn from_checkpoint(value: &Value, features: Option<FeatureMap>) -> Result<Self, ModelError> {
        let obj = value
            .as_object()
            .ok_or_else(|| ModelError::Checkpoint("expected a JSON object".into()))?;
        let kind = obj
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| ModelError::Checkpoint("missing `kind`".into()))?;
        let params = obj
            .get("params")
            .ok_or_else(|| ModelError::Checkpoint("missing `params`".into()))?;
        let mut model = match kind {
            "tabular" => {
                let by_x: BTreeMap<String, BTreeMap<String, f64>> =
                    serde_json::from_value(params.clone())
                        .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
                let entries = by_x
                    .into_iter()
                    .flat_map(|(x, ys)| {
                        ys.into_iter().map(move |(y, v)| ((x.clone(), y), v))
                    })
                    .collect();
                Self::tabular_with_scores(entries)
            }
            "global" => {
                let map: BTreeMap<String, f64> = serde_json::from_value(params.clone())
                    .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
                Self::global(map.into_iter().collect())
            }
            "linear" => {
                let weights: Vec<f64> = serde_json::from_value(params.clone())
                    .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
                let features = features.ok_or_else(|| {
                    ModelError::Checkpoint("linear checkpoints need a feature map".into())
                })?;
                if features.dim() != weights.len() {
                    return Err(ModelError::Checkpoint(format!(
                        "feature dim {} does not match {} weights",
                        features.dim(),
                        weights.len()
                    )));
                }
                Self::plain(ModelParams::Linear { features, weights })
            }
            other => {
                return Err(ModelError::Checkpoint(format!("unknown kind `{other}`")));
            }
        };
        if let Some(k) = obj.get("capacity_K").and_then(Value::as_f64) {
            model = model.with_capacity(k)?;
        }
        if let Some(g) = obj.get("quantize_gamma").and_then(Value::as_f64) {
            model = model.with_quantization(g)?;
        }
        if let Some(a) = obj.get("scale_alpha").and_then(Value::as_f64) {
            model.scale_alpha = a;
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PreferenceExample;

    fn pair_example() -> PreferenceExample {
        PreferenceExample::new("x", "a", "b", 1.0, 1.0, 0.2).unwrap()
    }

    fn two_score_model(sa: f64, sb: f64) -> ScoringModel {
        ScoringModel::tabular_with_scores(vec![
            (("x".into(), "a".into()), sa),
            (("x".into(), "b".into()), sb),
        ])
    }

    #[test]
    fn score_transform_order() {
        let m = two_score_model(0.0, 0.0);
        assert_eq!(m.score("x", "a").unwrap(), 0.0);

        let m = two_score_model(3.0, 0.0).with_capacity(2.0).unwrap();
        assert_eq!(m.score("x", "a").unwrap(), 1.0);

        let m = two_score_model(0.74, 0.0).with_quantization(0.5).unwrap();
        assert_eq!(m.score("x", "a").unwrap(), 0.5);

        // Quantization ties round toward +infinity.
        let m = two_score_model(0.25, -0.25).with_quantization(0.5).unwrap();
        assert_eq!(m.score("x", "a").unwrap(), 0.5);
        assert_eq!(m.score("x", "b").unwrap(), 0.0);
    }

    #[test]
    fn missing_key_is_an_error() {
        let m = two_score_model(0.0, 0.0);
        assert!(matches!(
            m.score("x", "zzz"),
            Err(ModelError::MissingKey { .. })
        ));
    }

    #[test]
    fn signed_margin_basics() {
        let ex = pair_example();
        assert_eq!(two_score_model(1.0, 1.0).signed_margin(&ex).unwrap(), 0.0);
        assert_eq!(two_score_model(2.0, 0.5).signed_margin(&ex).unwrap(), 1.5);
    }

    #[test]
    fn global_model_ignores_context() {
        let m = ScoringModel::global(vec![("a".into(), 1.0), ("b".into(), -1.0)]);
        assert_eq!(m.score("x1", "a").unwrap(), m.score("x2", "a").unwrap());
        let e1 = PreferenceExample::new("x1", "a", "b", 1.0, 0.5, 0.0).unwrap();
        let e2 = PreferenceExample::new("x2", "a", "b", 1.0, 0.5, 0.0).unwrap();
        assert_eq!(m.signed_margin(&e1).unwrap(), m.signed_margin(&e2).unwrap());
    }

    #[test]
    fn scale_is_multiplicative_and_clamped() {
        let ex = pair_example();
        let m = two_score_model(0.4, -0.4);
        let m1 = m.clone().scale(1.0).unwrap();
        assert_eq!(m1.signed_margin(&ex).unwrap(), m.signed_margin(&ex).unwrap());

        let m10 = m.clone().scale(10.0).unwrap();
        assert!((m10.signed_margin(&ex).unwrap() - 8.0).abs() < 1e-12);

        let capped = m.clone().with_capacity(1.0).unwrap().scale(10.0).unwrap();
        assert!(capped.signed_margin(&ex).unwrap().abs() <= 1.0 + 1e-12);

        assert!(m.scale(0.0).is_err());
    }

    #[test]
    fn argmax_invariance_of_scaling() {
        let ex = pair_example();
        for (sa, sb) in [(0.3, -0.2), (-1.0, 2.0), (0.7, 0.1)] {
            let m = two_score_model(sa, sb);
            let before = m.signed_margin(&ex).unwrap().signum();
            for alpha in [0.5, 3.0, 100.0] {
                let after = m.clone().scale(alpha).unwrap().signed_margin(&ex).unwrap();
                assert_eq!(before, after.signum());
            }
        }
    }

    #[test]
    fn grad_pinned_values() {
        let ex = pair_example();
        let loss = SurrogateLoss::logistic(1.0).unwrap();

        // Satisfied hinge margin: flat region, zero gradient.
        let p2 = SurrogateLoss::poly_hinge(2).unwrap();
        let spec = MarginSpec::uniform(1.0).unwrap();
        let m = two_score_model(3.0, 0.0);
        let g = m.grad_params(&ex, &p2, &spec, 1.0).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));

        // Logistic at u = 0: entries are ±0.5·w on the two touched scores.
        let m = two_score_model(0.0, 0.0);
        let g = m
            .grad_params(&ex, &loss, &MarginSpec::None, 1.0)
            .unwrap();
        assert!((g[0] + 0.5).abs() < 1e-12);
        assert!((g[1] - 0.5).abs() < 1e-12);
        let g = m
            .grad_params(&ex, &loss, &MarginSpec::None, -1.0)
            .unwrap();
        assert!((g[0] - 0.5).abs() < 1e-12);
        assert!((g[1] + 0.5).abs() < 1e-12);

        // Both scores strictly beyond the clamp: the clamp kills the gradient.
        let m = two_score_model(5.0, -5.0).with_capacity(1.0).unwrap();
        let g = m.grad_params(&ex, &loss, &MarginSpec::None, 1.0).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn quantized_models_are_not_trainable() {
        let ex = pair_example();
        let loss = SurrogateLoss::logistic(1.0).unwrap();
        let m = two_score_model(0.0, 0.0).with_quantization(0.5).unwrap();
        assert!(matches!(
            m.grad_params(&ex, &loss, &MarginSpec::None, 1.0),
            Err(ModelError::NotTrainable)
        ));
    }

    #[test]
    fn quantized_distinct_scores_are_gamma_apart() {
        let gamma = 0.3;
        let m = ScoringModel::tabular_with_scores(vec![
            (("x".into(), "a".into()), 0.10),
            (("x".into(), "b".into()), 0.50),
            (("x".into(), "c".into()), -0.40),
        ])
        .with_quantization(gamma)
        .unwrap();
        let scores: Vec<f64> = ["a", "b", "c"]
            .iter()
            .map(|y| m.score("x", y).unwrap())
            .collect();
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                let d = (scores[i] - scores[j]).abs();
                assert!(d < 1e-12 || d >= gamma - 1e-12);
            }
        }
    }

    #[test]
    fn finite_difference_gradients() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let losses = [
            SurrogateLoss::logistic(1.0).unwrap(),
            SurrogateLoss::logistic(2.0).unwrap(),
            SurrogateLoss::poly_hinge(2).unwrap(),
            SurrogateLoss::squared_ipo(1.0).unwrap(),
            SurrogateLoss::gce(0.5).unwrap(),
            SurrogateLoss::mae(),
        ];
        let h = 1e-5;
        let mut checked = 0;
        'outer: while checked < 100 {
            let loss = losses[rng.random_range(0..losses.len())];
            let spec = match rng.random_range(0..3) {
                0 => MarginSpec::None,
                1 => MarginSpec::uniform(rng.random_range(0.0..2.0)).unwrap(),
                _ => MarginSpec::structure_aware(rng.random_range(0.1..5.0), rng.random_bool(0.5))
                    .unwrap(),
            };
            let ex = PreferenceExample::new(
                "x",
                "a",
                "b",
                1.0,
                1.0,
                rng.random_range(0.0..0.5),
            )
            .unwrap();
            let capacity = if rng.random_bool(0.3) { Some(2.0) } else { None };
            let mut m = two_score_model(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            if let Some(k) = capacity {
                m = m.with_capacity(k).unwrap();
                // Stay away from the clamp boundary.
                for v in m.params_mut() {
                    if (v.abs() - k / 2.0).abs() < 1e-3 {
                        continue 'outer;
                    }
                }
            }
            let w = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            // Skip the hinge kink neighborhood.
            let u = w * m.signed_margin(&ex).unwrap();
            let gamma_eff = spec.effective_margin(ex.delta);
            if matches!(loss, SurrogateLoss::PolyHinge { .. }) && (u - gamma_eff - 1.0).abs() < 1e-3
            {
                continue;
            }
            let grad = m.grad_params(&ex, &loss, &spec, w).unwrap();
            let mut max_rel = 0.0f64;
            for i in 0..m.n_params() {
                let mut up = m.clone();
                up.params_mut()[i] += h;
                let mut dn = m.clone();
                dn.params_mut()[i] -= h;
                let f = |mm: &ScoringModel| {
                    loss.eval_shifted(&spec, w * mm.signed_margin(&ex).unwrap(), ex.delta)
                        .unwrap()
                };
                let fd = (f(&up) - f(&dn)) / (2.0 * h);
                let rel = (grad[i] - fd).abs() / (1.0 + fd.abs());
                max_rel = max_rel.max(rel);
            }
            assert!(max_rel <= 1e-4, "finite differences disagree: {max_rel}");
            checked += 1;
        }
    }

    #[test]
    fn capacity_bounds_every_margin() {
        let ex = pair_example();
        for (sa, sb, k) in [(5.0, -5.0, 1.0), (0.2, -0.1, 0.5), (100.0, 3.0, 2.0)] {
            let m = two_score_model(sa, sb).with_capacity(k).unwrap();
            assert!(m.signed_margin(&ex).unwrap().abs() <= k + 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = two_score_model(0.25, -0.75)
            .with_capacity(2.0)
            .unwrap()
            .scale(3.0)
            .unwrap();
        let v = m.to_checkpoint();
        assert_eq!(v["kind"], "tabular");
        assert_eq!(v["capacity_K"], 2.0);
        assert_eq!(v["quantize_gamma"], Value::Null);
        let back = ScoringModel::from_checkpoint(&v, None).unwrap();
        let ex = pair_example();
        assert_eq!(
            back.signed_margin(&ex).unwrap(),
            m.signed_margin(&ex).unwrap()
        );

        let mut features = FeatureMap::new();
        features.insert("x", "a", vec![1.0, 0.0]).unwrap();
        features.insert("x", "b", vec![0.0, 1.0]).unwrap();
        let lin = ScoringModel::linear(features.clone(), 3).unwrap();
        let v = lin.to_checkpoint();
        assert!(ScoringModel::from_checkpoint(&v, None).is_err());
        let back = ScoringModel::from_checkpoint(&v, Some(features)).unwrap();
        assert_eq!(back.params(), lin.params());
    }

    #[test]
    fn linear_scores_and_gradients() {
        let mut features = FeatureMap::new();
        features.insert("x", "a", vec![1.0, 2.0]).unwrap();
        features.insert("x", "b", vec![0.5, -1.0]).unwrap();
        let mut m = ScoringModel::linear(features, 1).unwrap();
        m.params_mut().copy_from_slice(&[1.0, 0.5]);
        assert!((m.score("x", "a").unwrap() - 2.0).abs() < 1e-12);
        assert!((m.score("x", "b").unwrap() - 0.0).abs() < 1e-12);

        let ex = pair_example();
        let loss = SurrogateLoss::logistic(1.0).unwrap();
        let g = m.grad_params(&ex, &loss, &MarginSpec::None, 1.0).unwrap();
        // dΦ(u)/dw = Φ'(u)·(f_a − f_b); u = 2 here.
        let gu = loss.grad(2.0).unwrap();
        assert!((g[0] - gu * 0.5).abs() < 1e-12);
        assert!((g[1] - gu * 3.0).abs() < 1e-12);
    }
}
