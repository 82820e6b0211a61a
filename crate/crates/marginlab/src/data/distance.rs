//! Semantic distances between responses.

use super::{DataError, EmbeddingTable};

/// How to (re)compute the per-example distance `Δ(y, y')`.
#[derive(Debug, Clone)]
pub enum DistanceSource {
    /// Normalized Levenshtein distance over the response identifier strings.
    Edit,
    /// Cosine distance between precomputed embedding vectors.
    Embeddings(EmbeddingTable),
    /// The same constant for every pair.
    Constant(f64),
}

impl DistanceSource {
    pub fn distance(&self, y: &str, y_prime: &str) -> Result<f64, DataError> {
        match self {
            Self::Edit => Ok(normalized_edit_distance(y, y_prime)),
            Self::Embeddings(table) => {
                let u = table
                    .get(y)
                    .ok_or_else(|| DataError::MissingEmbedding(y.to_string()))?;
                let v = table
                    .get(y_prime)
                    .ok_or_else(|| DataError::MissingEmbedding(y_prime.to_string()))?;
                cosine_distance(u, v)
            }
            Self::Constant(c) => {
                if !(c.is_finite() && *c >= 0.0) {
                    return Err(DataError::InvalidParameter(format!(
                        "constant distance must be nonnegative, got {c}"
                    )));
                }
                Ok(*c)
            }
        }
    }
}

/// Levenshtein distance divided by the length of the longer string
/// (in chars). Two empty strings are at distance 0.
pub fn normalized_edit_distance(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    levenshtein(&a, &b) as f64 / longest as f64
}

/// Single-row dynamic program over char slices.
fn levenshtein(a: &[char], b: &[char]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut row: Vec<usize> = (0..=short.len()).collect();
    for (j, &cb) in long.iter().enumerate() {
        let mut diag = row[0];
        row[0] = j + 1;
        for (i, &ca) in short.iter().enumerate() {
            let above = row[i + 1];
            row[i + 1] = if ca == cb {
                diag
            } else {
                1 + diag.min(above).min(row[i])
            };
            diag = above;
        }
    }
    row[short.len()]
}

/// Cosine distance `1 − ⟨u, v⟩ / (‖u‖·‖v‖)`, in `[0, 2]`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64, DataError> {
    if u.len() != v.len() {
        return Err(DataError::DimensionMismatch(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(DataError::InvalidParameter(
            "cosine distance is undefined for zero vectors".into(),
        ));
    }
    Ok(1.0 - dot / (nu * nv))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edit_distance_pinned_values() {
        assert_eq!(normalized_edit_distance("cat", "cat"), 0.0);
        assert_eq!(normalized_edit_distance("", "ab"), 1.0);
        // DP oracle: one insertion, normalizer 4.
        assert_eq!(normalized_edit_distance("cat", "cart"), 0.25);
        assert_eq!(normalized_edit_distance("", ""), 0.0);
    }

    #[test]
    fn edit_distance_symmetric_and_zero_iff_equal() {
        let words = ["", "a", "ab", "kitten", "sitting", "ätt"];
        for a in words {
            for b in words {
                let d = normalized_edit_distance(a, b);
                assert_eq!(d, normalized_edit_distance(b, a));
                assert_eq!(d == 0.0, a == b);
                assert!((0.0..=1.0).contains(&d));
            }
        }
    }

    #[test]
    fn cosine_pinned_values() {
        let v = [0.3, -1.2, 4.0];
        assert!(cosine_distance(&v, &v).unwrap().abs() < 1e-12);
        assert!((cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        // Oracle: 1 − 1/√2.
        let d = cosine_distance(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((d - (1.0 - 1.0 / std::f64::consts::SQRT_2)).abs() < 1e-12);
        assert!((d - 0.292893).abs() < 1e-6);
    }

    #[test]
    fn cosine_rejects_zero_and_mismatched() {
        assert!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine_distance(&[1.0], &[1.0, 0.0]).is_err());
    }
}
