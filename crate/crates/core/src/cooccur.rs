//! Concept co-occurrence counts and co-occurrence-ranked negative proposals.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::types::{Concept, SceneRecord};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CooccurError {
    #[error("no scenes to count")]
    EmptyDataset,
    #[error("duplicate scene id {0:?}")]
    DuplicateScene(alloc::string::String),
}

/// Symmetric counts of concepts appearing together among scene positives.
///
/// `counts[i][i]` is the number of scenes containing concept `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceMatrix {
    vocabulary: Vec<Concept>,
    index: BTreeMap<Concept, usize>,
    counts: Vec<u64>,
}

impl CooccurrenceMatrix {
    pub fn vocabulary(&self) -> &[Concept] {
        &self.vocabulary
    }

    pub fn len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocabulary.is_empty()
    }

    pub fn index_of(&self, c: &Concept) -> Option<usize> {
        self.index.get(c).copied()
    }

    pub fn count_at(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.vocabulary.len() + j]
    }

    /// Count for a concept pair; zero for concepts outside the vocabulary.
    pub fn count(&self, a: &Concept, b: &Concept) -> u64 {
        match (self.index_of(a), self.index_of(b)) {
            (Some(i), Some(j)) => self.count_at(i, j),
            _ => 0,
        }
    }

    pub fn diagonal(&self, c: &Concept) -> u64 {
        self.count(c, c)
    }

    /// Nonzero off-diagonal pairs `(a, b, n)` with `a < b`, in vocabulary order.
    pub fn nonzero_pairs(&self) -> impl Iterator<Item = (&Concept, &Concept, u64)> {
        let n = self.vocabulary.len();
        (0..n).flat_map(move |i| {
            (i + 1..n).filter_map(move |j| {
                let c = self.count_at(i, j);
                (c > 0).then(|| (&self.vocabulary[i], &self.vocabulary[j], c))
            })
        })
    }

    /// Rebuild from exported rows; missing pairs count zero.
    pub fn from_counts(
        diagonal: impl IntoIterator<Item = (Concept, u64)>,
        pairs: impl IntoIterator<Item = (Concept, Concept, u64)>,
    ) -> Self {
        let diag: BTreeMap<Concept, u64> = diagonal.into_iter().collect();
        let pairs: Vec<(Concept, Concept, u64)> = pairs.into_iter().collect();
        let mut vocab: BTreeSet<Concept> = diag.keys().cloned().collect();
        for (a, b, _) in &pairs {
            vocab.insert(a.clone());
            vocab.insert(b.clone());
        }
        let mut m = Self::with_vocabulary(vocab.into_iter().collect());
        let n = m.vocabulary.len();
        for (c, k) in diag {
            let i = m.index[&c];
            m.counts[i * n + i] = k;
        }
        for (a, b, k) in pairs {
            let (i, j) = (m.index[&a], m.index[&b]);
            m.counts[i * n + j] = k;
            m.counts[j * n + i] = k;
        }
        m
    }

    fn with_vocabulary(vocabulary: Vec<Concept>) -> Self {
        let index = vocabulary.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();
        let n = vocabulary.len();
        CooccurrenceMatrix { vocabulary, index, counts: alloc::vec![0; n * n] }
    }
}

pub fn build_cooccurrence(scenes: &[SceneRecord]) -> Result<CooccurrenceMatrix, CooccurError> {
    if scenes.is_empty() {
        return Err(CooccurError::EmptyDataset);
    }
    let mut seen = BTreeSet::new();
    for s in scenes {
        if !seen.insert(s.id.as_str()) {
            return Err(CooccurError::DuplicateScene(s.id.clone()));
        }
    }
    let vocab: BTreeSet<Concept> = scenes.iter().flat_map(|s| s.positives.iter().cloned()).collect();
    let mut m = CooccurrenceMatrix::with_vocabulary(vocab.into_iter().collect());
    let n = m.vocabulary.len();
    for s in scenes {
        let idx: Vec<usize> = s.positives.iter().map(|c| m.index[c]).collect();
        for &i in &idx {
            for &j in &idx {
                m.counts[i * n + j] += 1;
            }
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Present,
    Absent,
    Unknown,
}

/// Presence check for a concept in a media item, e.g. an object detector.
pub trait Verifier {
    fn verify(&mut self, media_ref: Option<&str>, concept: &Concept) -> Verdict;
}

impl<F> Verifier for F
where
    F: FnMut(Option<&str>, &Concept) -> Verdict,
{
    fn verify(&mut self, media_ref: Option<&str>, concept: &Concept) -> Verdict {
        self(media_ref, concept)
    }
}

/// Up to `k` absent concepts ranked by summed co-occurrence with the scene's positives.
///
/// Ties go to the lexicographically smaller name. Zero-score concepts only fill
/// remaining slots. A verifier drops `Present` verdicts always and `Unknown`
/// verdicts only when `strict`.
pub fn propose_negatives(
    scene: &SceneRecord,
    matrix: &CooccurrenceMatrix,
    k: usize,
    mut verifier: Option<&mut dyn Verifier>,
    strict: bool,
) -> Vec<Concept> {
    let positive_idx: Vec<usize> =
        scene.positives.iter().filter_map(|c| matrix.index_of(c)).collect();
    let mut ranked: Vec<(u64, &Concept)> = matrix
        .vocabulary
        .iter()
        .enumerate()
        .filter(|(_, c)| !scene.positives.contains(*c))
        .map(|(i, c)| (positive_idx.iter().map(|&p| matrix.count_at(i, p)).sum(), c))
        .collect();
    // Vocabulary is already ascending, so a stable sort on score keeps name order on ties.
    ranked.sort_by_key(|r| core::cmp::Reverse(r.0));

    let mut out = Vec::with_capacity(k);
    for (_, c) in ranked {
        if out.len() == k {
            break;
        }
        if let Some(v) = verifier.as_deref_mut() {
            match v.verify(scene.media_ref.as_deref(), c) {
                Verdict::Present => continue,
                Verdict::Unknown if strict => continue,
                _ => {}
            }
        }
        out.push(c.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    fn c(s: &str) -> Concept {
        Concept::new(s).unwrap()
    }

    fn scene(id: &str, pos: &[&str]) -> SceneRecord {
        SceneRecord::new(id, pos.iter().map(|s| c(s)), []).unwrap()
    }

    fn three_scenes() -> Vec<SceneRecord> {
        vec![scene("s1", &["a", "b"]), scene("s2", &["a", "b"]), scene("s3", &["a", "c"])]
    }

    #[test]
    fn counts_match_manual_enumeration() {
        let m = build_cooccurrence(&three_scenes()).unwrap();
        assert_eq!(m.count(&c("a"), &c("b")), 2);
        assert_eq!(m.count(&c("a"), &c("c")), 1);
        assert_eq!(m.count(&c("b"), &c("c")), 0);
        assert_eq!(m.diagonal(&c("a")), 3);
        assert_eq!(m.vocabulary(), &[c("a"), c("b"), c("c")]);
        let pairs: Vec<_> = m.nonzero_pairs().map(|(a, b, n)| (a.to_string(), b.to_string(), n)).collect();
        assert_eq!(pairs, vec![("a".into(), "b".into(), 2), ("a".into(), "c".into(), 1)]);
    }

    #[test]
    fn single_scene_and_empty() {
        let m = build_cooccurrence(&[scene("s", &["a"])]).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.diagonal(&c("a")), 1);
        assert_eq!(build_cooccurrence(&[]), Err(CooccurError::EmptyDataset));
        assert!(matches!(
            build_cooccurrence(&[scene("s", &["a"]), scene("s", &["b"])]),
            Err(CooccurError::DuplicateScene(_))
        ));
    }

    #[test]
    fn proposals_rank_by_summed_counts() {
        let m = build_cooccurrence(&three_scenes()).unwrap();
        assert_eq!(propose_negatives(&scene("q", &["a"]), &m, 2, None, false), vec![c("b"), c("c")]);
        assert!(propose_negatives(&scene("q", &["a", "b", "c"]), &m, 2, None, false).is_empty());

        let mut says_b_present = |_: Option<&str>, x: &Concept| {
            if x.as_str() == "b" { Verdict::Present } else { Verdict::Absent }
        };
        assert_eq!(
            propose_negatives(&scene("q", &["a"]), &m, 2, Some(&mut says_b_present), false),
            vec![c("c")]
        );
    }

    #[test]
    fn zero_scores_fill_in_name_order_and_unknown_needs_strict() {
        let scenes = vec![scene("1", &["a", "b"]), scene("2", &["d"]), scene("3", &["c"])];
        let m = build_cooccurrence(&scenes).unwrap();
        assert_eq!(
            propose_negatives(&scene("q", &["a"]), &m, 3, None, false),
            vec![c("b"), c("c"), c("d")]
        );
        let mut unknown = |_: Option<&str>, _: &Concept| Verdict::Unknown;
        assert_eq!(propose_negatives(&scene("q", &["a"]), &m, 3, Some(&mut unknown), false).len(), 3);
        assert!(propose_negatives(&scene("q", &["a"]), &m, 3, Some(&mut unknown), true).is_empty());
    }

    #[test]
    fn novel_positive_concepts_have_zero_counts() {
        let m = build_cooccurrence(&three_scenes()).unwrap();
        assert_eq!(propose_negatives(&scene("q", &["zebra"]), &m, 5, None, false), vec![c("a"), c("b"), c("c")]);
    }

    #[test]
    fn export_rows_rebuild_the_matrix() {
        let m = build_cooccurrence(&three_scenes()).unwrap();
        let diag: Vec<_> = m.vocabulary().iter().map(|x| (x.clone(), m.diagonal(x))).collect();
        let pairs: Vec<_> = m.nonzero_pairs().map(|(a, b, n)| (a.clone(), b.clone(), n)).collect();
        assert_eq!(CooccurrenceMatrix::from_counts(diag, pairs), m);
    }

    fn arb_scenes() -> impl Strategy<Value = Vec<SceneRecord>> {
        proptest::collection::vec(proptest::collection::btree_set(0u8..12, 1..5), 1..30).prop_map(|sets| {
            sets.into_iter()
                .enumerate()
                .map(|(i, s)| {
                    SceneRecord::new(format!("s{i}"), s.into_iter().map(|x| c(&format!("o{x:02}"))), []).unwrap()
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn matrix_invariants(scenes in arb_scenes()) {
            let m = build_cooccurrence(&scenes).unwrap();
            for i in 0..m.len() {
                for j in 0..m.len() {
                    prop_assert_eq!(m.count_at(i, j), m.count_at(j, i));
                    prop_assert!(m.count_at(i, j) <= m.count_at(i, i).min(m.count_at(j, j)));
                }
            }
        }

        #[test]
        fn proposals_disjoint_and_deterministic(scenes in arb_scenes(), k in 1usize..6) {
            let m = build_cooccurrence(&scenes).unwrap();
            for s in &scenes {
                let p = propose_negatives(s, &m, k, None, false);
                prop_assert!(p.len() <= k);
                prop_assert!(p.iter().all(|x| !s.positives.contains(x)));
                prop_assert_eq!(&p, &propose_negatives(s, &m, k, None, false));
            }
        }

        #[test]
        fn adding_supporting_scene_never_demotes(scenes in arb_scenes(), pick in 0usize..100) {
            // Add a scene holding {c, p} for a query positive p: c must not drop
            // below any concept whose score is unaffected.
            let query = &scenes[pick % scenes.len()];
            let m = build_cooccurrence(&scenes).unwrap();
            let before = propose_negatives(query, &m, m.len(), None, false);
            prop_assume!(before.len() >= 2);
            let target = before[before.len() - 1].clone();
            let p = query.positives.iter().next().unwrap().clone();
            let mut more = scenes.clone();
            more.push(SceneRecord::new("extra", [target.clone(), p], []).unwrap());
            let m2 = build_cooccurrence(&more).unwrap();
            let after = propose_negatives(query, &m2, m2.len(), None, false);
            let rank = |list: &[Concept], x: &Concept| list.iter().position(|y| y == x).unwrap();
            for other in &before {
                if other == &target {
                    continue;
                }
                if rank(&before, &target) < rank(&before, other) {
                    prop_assert!(rank(&after, &target) < rank(&after, other));
                }
            }
            prop_assert!(rank(&after, &target) <= rank(&before, &target));
        }
    }
}
