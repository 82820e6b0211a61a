//! Finite-support preference distributions.
//!
//! A [`PreferenceDataset`] is an explicit list of support tuples
//! `(x, y, y', η, mass, Δ)`: context, two distinct responses, the conditional
//! probability `η = P(y ≻ y' | x, y, y')`, the probability mass of the tuple,
//! and a semantic distance between the responses. Because `η` is stored
//! exactly, every risk downstream is an exact expectation, not an estimate.
//!
//! Submodules provide string/vector distances, seeded synthetic generators,
//! and the JSONL interchange format.

mod distance;
mod generate;
mod io;

pub use distance::{cosine_distance, normalized_edit_distance, DistanceSource};
pub use generate::{
    gen_bradley_terry, gen_generalized_bt, gen_negative_construction, gen_synonym_stress, BtData,
    NegativeConstruction,
};
pub use io::{load_embeddings, load_jsonl, save_jsonl};

use std::collections::BTreeMap;

use crate::numeric::kahan_sum;

/// Errors from dataset construction, generation and I/O.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("invalid example: {0}")]
    InvalidExample(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: schema error: {message}")]
    Schema { line: usize, message: String },
    #[error("no embedding for response id `{0}`")]
    MissingEmbedding(String),
    #[error("invalid embedding table: {0}")]
    InvalidEmbedding(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("degenerate pair: both generalized-BT weights are zero")]
    DegeneratePair,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One support tuple of a preference distribution.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceExample {
    /// Context identifier.
    pub x: String,
    /// First response identifier (the `w = 1` direction prefers this one).
    pub y: String,
    /// Second response identifier.
    pub y_prime: String,
    /// Conditional probability that `y` is preferred over `y_prime`.
    pub eta: f64,
    /// Probability mass of this tuple.
    pub mass: f64,
    /// Semantic distance between the two responses.
    pub delta: f64,
}

impl PreferenceExample {
    pub fn new(
        x: impl Into<String>,
        y: impl Into<String>,
        y_prime: impl Into<String>,
        eta: f64,
        mass: f64,
        delta: f64,
    ) -> Result<Self, DataError> {
        let ex = Self {
            x: x.into(),
            y: y.into(),
            y_prime: y_prime.into(),
            eta,
            mass,
            delta,
        };
        ex.validate()?;
        Ok(ex)
    }

    fn validate(&self) -> Result<(), DataError> {
        if self.y == self.y_prime {
            return Err(DataError::InvalidExample(format!(
                "y and y_prime must differ, both are `{}`",
                self.y
            )));
        }
        if !(self.eta.is_finite() && (0.0..=1.0).contains(&self.eta)) {
            return Err(DataError::InvalidExample(format!(
                "eta must lie in [0, 1], got {}",
                self.eta
            )));
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(DataError::InvalidExample(format!(
                "mass must be positive, got {}",
                self.mass
            )));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(DataError::InvalidExample(format!(
                "delta must be nonnegative, got {}",
                self.delta
            )));
        }
        Ok(())
    }

    fn key(&self) -> (String, String, String) {
        (self.x.clone(), self.y.clone(), self.y_prime.clone())
    }
}

/// An ordered finite-support preference distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceDataset {
    examples: Vec<PreferenceExample>,
    normalized: bool,
}

/// Masses within this distance of 1 count as normalized.
pub const MASS_TOLERANCE: f64 = 1e-9;

impl PreferenceDataset {
    /// Builds a dataset, merging duplicate `(x, y, y')` tuples by mass
    /// addition (eta and delta merge mass-weighted). Returns the dataset and
    /// the number of merged duplicates.
    pub fn from_examples(examples: Vec<PreferenceExample>) -> Result<(Self, usize), DataError> {
        let mut order: Vec<(String, String, String)> = Vec::new();
        let mut merged: BTreeMap<(String, String, String), PreferenceExample> = BTreeMap::new();
        let mut duplicates = 0;
        for ex in examples {
            ex.validate()?;
            let key = ex.key();
            match merged.get_mut(&key) {
                Some(prev) => {
                    duplicates += 1;
                    let total = prev.mass + ex.mass;
                    prev.eta = (prev.eta * prev.mass + ex.eta * ex.mass) / total;
                    prev.delta = (prev.delta * prev.mass + ex.delta * ex.mass) / total;
                    prev.mass = total;
                }
                None => {
                    order.push(key.clone());
                    merged.insert(key, ex);
                }
            }
        }
        let examples: Vec<PreferenceExample> = order
            .into_iter()
            .map(|k| merged.remove(&k).expect("key recorded on insert"))
            .collect();
        let mut ds = Self {
            examples,
            normalized: false,
        };
        ds.normalized = (ds.total_mass() - 1.0).abs() <= MASS_TOLERANCE;
        Ok((ds, duplicates))
    }

    pub fn examples(&self) -> &[PreferenceExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Whether masses sum to 1 within [`MASS_TOLERANCE`].
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn total_mass(&self) -> f64 {
        kahan_sum(self.examples.iter().map(|e| e.mass))
    }

    /// Rescales masses to sum to exactly 1.
    pub fn normalize(mut self) -> Self {
        let total = self.total_mass();
        for ex in &mut self.examples {
            ex.mass /= total;
        }
        self.normalized = true;
        self
    }

    /// Recomputes `delta` for every example from the chosen source.
    pub fn attach_distances(mut self, source: &DistanceSource) -> Result<Self, DataError> {
        for ex in &mut self.examples {
            ex.delta = source.distance(&ex.y, &ex.y_prime)?;
        }
        Ok(self)
    }

    /// All `(x, response)` scoring keys in first-appearance order.
    pub fn score_keys(&self) -> Vec<(String, String)> {
        let mut seen = std::collections::HashSet::new();
        let mut keys = Vec::new();
        for ex in &self.examples {
            for response in [&ex.y, &ex.y_prime] {
                let key = (ex.x.clone(), response.clone());
                if seen.insert(key.clone()) {
                    keys.push(key);
                }
            }
        }
        keys
    }

    /// All response identifiers in first-appearance order.
    pub fn response_ids(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        let mut ids = Vec::new();
        for ex in &self.examples {
            for response in [&ex.y, &ex.y_prime] {
                if seen.insert(response.clone()) {
                    ids.push(response.clone());
                }
            }
        }
        ids
    }
}

/// A table of precomputed response embeddings, all of one dimension.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    vectors: BTreeMap<String, Vec<f64>>,
    dim: usize,
}

impl EmbeddingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, vec: Vec<f64>) -> Result<(), DataError> {
        if vec.is_empty() {
            return Err(DataError::InvalidEmbedding(
                "embedding dimension must be >= 1".into(),
            ));
        }
        if vec.iter().all(|v| *v == 0.0) {
            return Err(DataError::InvalidEmbedding(
                "zero vectors are not allowed (cosine undefined)".into(),
            ));
        }
        if self.dim == 0 {
            self.dim = vec.len();
        } else if vec.len() != self.dim {
            return Err(DataError::DimensionMismatch(self.dim, vec.len()));
        }
        self.vectors.insert(id.into(), vec);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.vectors.get(id).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(x: &str, y: &str, yp: &str, eta: f64, mass: f64, delta: f64) -> PreferenceExample {
        PreferenceExample::new(x, y, yp, eta, mass, delta).unwrap()
    }

    #[test]
    fn example_validation() {
        assert!(PreferenceExample::new("x", "a", "a", 0.5, 1.0, 0.0).is_err());
        assert!(PreferenceExample::new("x", "a", "b", 1.5, 1.0, 0.0).is_err());
        assert!(PreferenceExample::new("x", "a", "b", 0.5, 0.0, 0.0).is_err());
        assert!(PreferenceExample::new("x", "a", "b", 0.5, 1.0, -0.1).is_err());
        // delta = 0 is allowed: synonyms.
        assert!(PreferenceExample::new("x", "a", "b", 0.5, 1.0, 0.0).is_ok());
    }

    #[test]
    fn duplicates_merge_by_mass_addition() {
        let (ds, merged) = PreferenceDataset::from_examples(vec![
            ex("x", "a", "b", 1.0, 0.3, 0.1),
            ex("x", "a", "b", 1.0, 0.2, 0.1),
            ex("x", "b", "c", 0.5, 0.5, 0.2),
        ])
        .unwrap();
        assert_eq!(merged, 1);
        assert_eq!(ds.len(), 2);
        assert!((ds.examples()[0].mass - 0.5).abs() < 1e-15);
        assert!(ds.is_normalized());
    }

    #[test]
    fn normalize_rescales_masses() {
        let (ds, _) = PreferenceDataset::from_examples(vec![
            ex("x", "a", "b", 1.0, 2.0, 0.0),
            ex("x", "b", "c", 0.0, 2.0, 0.0),
        ])
        .unwrap();
        assert!(!ds.is_normalized());
        let ds = ds.normalize();
        assert!(ds.is_normalized());
        assert!((ds.total_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn attach_constant_and_edit_distances() {
        let (ds, _) = PreferenceDataset::from_examples(vec![ex("x", "cat", "cart", 1.0, 1.0, 0.9)])
            .unwrap();
        let ds = ds.attach_distances(&DistanceSource::Constant(0.7)).unwrap();
        assert_eq!(ds.examples()[0].delta, 0.7);
        let ds = ds.attach_distances(&DistanceSource::Edit).unwrap();
        assert!((ds.examples()[0].delta - 0.25).abs() < 1e-15);
    }

    #[test]
    fn attach_embeddings_reports_missing_id() {
        let mut table = EmbeddingTable::new();
        table.insert("cat", vec![1.0, 0.0]).unwrap();
        let (ds, _) = PreferenceDataset::from_examples(vec![ex("x", "cat", "cart", 1.0, 1.0, 0.0)])
            .unwrap();
        let err = ds
            .attach_distances(&DistanceSource::Embeddings(table))
            .unwrap_err();
        assert!(matches!(err, DataError::MissingEmbedding(id) if id == "cart"));
    }

    #[test]
    fn identical_embeddings_give_zero_delta() {
        let mut table = EmbeddingTable::new();
        table.insert("a", vec![0.5, 0.5]).unwrap();
        table.insert("b", vec![0.5, 0.5]).unwrap();
        let (ds, _) =
            PreferenceDataset::from_examples(vec![ex("x", "a", "b", 1.0, 1.0, 0.3)]).unwrap();
        let ds = ds
            .attach_distances(&DistanceSource::Embeddings(table))
            .unwrap();
        assert!(ds.examples()[0].delta.abs() < 1e-12);
    }

    #[test]
    fn embedding_table_rejects_bad_vectors() {
        let mut table = EmbeddingTable::new();
        assert!(table.insert("z", vec![0.0, 0.0]).is_err());
        table.insert("a", vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            table.insert("b", vec![1.0]),
            Err(DataError::DimensionMismatch(2, 1))
        ));
    }
}
