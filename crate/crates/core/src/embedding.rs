//! Embedding tables and the cosine-similarity matrices they induce.
//!
//! Every table keeps its entries ordered by ascending id, which fixes the row
//! and column order of every [`SimilarityMatrix`].

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::matrix::{dot, norm, Matrix};

const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbeddingError {
    #[error("vector {0:?} has zero norm")]
    ZeroVector(String),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("embedding dimension must be positive")]
    ZeroDim,
}

/// Mapping id -> vector of a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        Ok(EmbeddingTable { dim, entries: BTreeMap::new() })
    }

    pub fn from_entries<I, S>(dim: usize, entries: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut table = EmbeddingTable::new(dim)?;
        for (id, v) in entries {
            table.insert(id, v)?;
        }
        Ok(table)
    }

    pub fn insert(&mut self, id: impl Into<String>, vec: Vec<f64>) -> Result<(), EmbeddingError> {
        if vec.len() != self.dim {
            return Err(EmbeddingError::DimMismatch { expected: self.dim, found: vec.len() });
        }
        let id = id.into();
        if self.entries.contains_key(&id) {
            return Err(EmbeddingError::DuplicateId(id));
        }
        self.entries.insert(id, vec);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.entries.get(id).map(Vec::as_slice)
    }

    /// Ids in ascending order.
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// `(id, vector)` pairs in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

/// Scale every vector to unit Euclidean norm.
pub fn normalize_embeddings(table: &EmbeddingTable) -> Result<EmbeddingTable, EmbeddingError> {
    let mut out = EmbeddingTable::new(table.dim)?;
    for (id, v) in table.iter() {
        let unit = unit_vector(v).ok_or_else(|| EmbeddingError::ZeroVector(id.into()))?;
        out.entries.insert(id.into(), unit);
    }
    Ok(out)
}

/// `v / ||v||`, or `None` when the norm is below 1e-12.
pub fn unit_vector(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm(v);
    if n < ZERO_NORM {
        return None;
    }
    Some(v.iter().map(|x| x / n).collect())
}

/// Query-by-candidate similarity scores with their id labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub query_ids: Vec<String>,
    pub candidate_ids: Vec<String>,
    pub scores: Matrix,
}

impl SimilarityMatrix {
    pub fn new(query_ids: Vec<String>, candidate_ids: Vec<String>, scores: Matrix) -> Self {
        assert_eq!(scores.shape(), (query_ids.len(), candidate_ids.len()));
        SimilarityMatrix { query_ids, candidate_ids, scores }
    }

    pub fn transpose(&self) -> SimilarityMatrix {
        SimilarityMatrix {
            query_ids: self.candidate_ids.clone(),
            candidate_ids: self.query_ids.clone(),
            scores: self.scores.transpose(),
        }
    }
}

/// `S[j][k] = <query_j, candidate_k>` for tables already normalized to unit norm.
pub fn cosine_similarity_matrix(
    queries: &EmbeddingTable,
    candidates: &EmbeddingTable,
) -> Result<SimilarityMatrix, EmbeddingError> {
    if queries.dim != candidates.dim {
        return Err(EmbeddingError::DimMismatch { expected: queries.dim, found: candidates.dim });
    }
    let cand: Vec<&[f64]> = candidates.entries.values().map(Vec::as_slice).collect();
    let scores = Matrix::from_fn(queries.len(), cand.len(), {
        let qs: Vec<&[f64]> = queries.entries.values().map(Vec::as_slice).collect();
        move |j, k| dot(qs[j], cand[k])
    });
    Ok(SimilarityMatrix::new(
        queries.entries.keys().cloned().collect(),
        candidates.entries.keys().cloned().collect(),
        scores,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn table(entries: &[(&str, &[f64])]) -> EmbeddingTable {
        let dim = entries[0].1.len();
        EmbeddingTable::from_entries(dim, entries.iter().map(|(k, v)| (*k, v.to_vec()))).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let t = normalize_embeddings(&table(&[("a", &[3.0, 4.0])])).unwrap();
        let a = t.get("a").unwrap();
        assert!((a[0] - 0.6).abs() < 1e-15 && (a[1] - 0.8).abs() < 1e-15);

        let basis = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        assert_eq!(normalize_embeddings(&basis).unwrap(), basis);

        assert_eq!(
            normalize_embeddings(&table(&[("a", &[0.0, 0.0])])),
            Err(EmbeddingError::ZeroVector("a".into()))
        );
    }

    #[test]
    fn similarity_examples() {
        let q = table(&[("x", &[1.0, 0.0])]);
        let c = table(&[("p", &[1.0, 0.0]), ("q", &[0.0, 1.0])]);
        let s = cosine_similarity_matrix(&q, &c).unwrap();
        assert_eq!(s.scores.row(0), &[1.0, 0.0]);
        assert_eq!(s.candidate_ids, vec!["p", "q"]);

        assert_eq!(cosine_similarity_matrix(&q, &q).unwrap().scores.row(0), &[1.0]);

        let q = table(&[("x", &[0.6, 0.8])]);
        let c = table(&[("p", &[0.8, 0.6])]);
        let s = cosine_similarity_matrix(&q, &c).unwrap();
        assert!((s.scores[(0, 0)] - 0.96).abs() < 1e-15);
    }

    #[test]
    fn dim_mismatch() {
        let q = table(&[("x", &[1.0, 0.0])]);
        let c = table(&[("p", &[1.0, 0.0, 0.0])]);
        assert!(matches!(
            cosine_similarity_matrix(&q, &c),
            Err(EmbeddingError::DimMismatch { .. })
        ));
        let mut t = EmbeddingTable::new(2).unwrap();
        assert!(t.insert("a", vec![1.0]).is_err());
        t.insert("a", vec![1.0, 2.0]).unwrap();
        assert_eq!(t.insert("a", vec![1.0, 2.0]), Err(EmbeddingError::DuplicateId("a".into())));
    }

    fn arb_table() -> impl Strategy<Value = EmbeddingTable> {
        (1usize..6).prop_flat_map(arb_table_of_dim)
    }

    fn arb_table_of_dim(dim: usize) -> impl Strategy<Value = EmbeddingTable> {
        (1usize..8).prop_flat_map(move |n| {
            proptest::collection::vec(
                proptest::collection::vec(-10.0f64..10.0, dim)
                    .prop_filter("non-zero", |v| norm(v) > 1e-3),
                n,
            )
            .prop_map(move |vs| {
                EmbeddingTable::from_entries(
                    dim,
                    vs.into_iter().enumerate().map(|(i, v)| (alloc::format!("id{i:03}"), v)),
                )
                .unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(t in arb_table()) {
            let once = normalize_embeddings(&t).unwrap();
            let twice = normalize_embeddings(&once).unwrap();
            for ((_, a), (_, b)) in once.iter().zip(twice.iter()) {
                prop_assert!((norm(a) - 1.0).abs() < 1e-6);
                for (x, y) in a.iter().zip(b) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn self_similarity_has_unit_diagonal(t in arb_table()) {
            let t = normalize_embeddings(&t).unwrap();
            let s = cosine_similarity_matrix(&t, &t).unwrap();
            for i in 0..t.len() {
                prop_assert!((s.scores[(i, i)] - 1.0).abs() < 1e-9);
            }
            for x in s.scores.as_slice() {
                prop_assert!(*x >= -1.0 - 1e-9 && *x <= 1.0 + 1e-9);
            }
        }

        #[test]
        fn similarity_transposes_exactly((a, b) in (1usize..6).prop_flat_map(|d| (arb_table_of_dim(d), arb_table_of_dim(d)))) {
            let ab = cosine_similarity_matrix(&a, &b).unwrap();
            let ba = cosine_similarity_matrix(&b, &a).unwrap();
            prop_assert_eq!(ab, ba.transpose());
        }
    }
}
