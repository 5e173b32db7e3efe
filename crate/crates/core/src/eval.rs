//! Retrieval and multiple-choice scoring, per-template breakdowns and video
//! frame pooling.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::embedding::{unit_vector, EmbeddingTable, SimilarityMatrix};
use crate::matrix::cosine;
use crate::types::{McqItem, OptionTruth, TemplateKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("query {0:?} is not a row of the similarity matrix")]
    MissingQuery(String),
    #[error("candidate {0:?} is not a column of the similarity matrix")]
    MissingCandidate(String),
    #[error("query {0:?} has no relevant candidates")]
    NoRelevant(String),
    #[error("missing embedding for {0:?}")]
    MissingEmbedding(String),
    #[error("item {item:?} has {options} options but {embeddings} embeddings")]
    OptionCount { item: String, options: usize, embeddings: usize },
    #[error("frame list is empty")]
    EmptyFrameList,
    #[error("frames have different dimensions")]
    FrameDim,
    #[error("pooled frame vector is zero")]
    ZeroVector,
}

/// Relevant candidate ids per query id.
pub type RetrievalGroundTruth = BTreeMap<String, BTreeSet<String>>;

/// Fraction of queries with a relevant candidate among their top `k`.
///
/// Candidates are ranked by descending score, ties by ascending candidate id.
/// Only queries present in `truth` are scored.
pub fn recall_at_k(s: &SimilarityMatrix, truth: &RetrievalGroundTruth, k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    let rows: BTreeMap<&str, usize> = s.query_ids.iter().enumerate().map(|(i, q)| (q.as_str(), i)).collect();
    let cols: BTreeMap<&str, usize> = s.candidate_ids.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    // Column order as a tie-break key, independent of how the matrix was laid out.
    let mut id_rank: Vec<usize> = (0..s.candidate_ids.len()).collect();
    id_rank.sort_by(|&a, &b| s.candidate_ids[a].cmp(&s.candidate_ids[b]));
    let mut rank_of = alloc::vec![0usize; id_rank.len()];
    for (r, &c) in id_rank.iter().enumerate() {
        rank_of[c] = r;
    }

    let mut hits = 0usize;
    for (q, relevant) in truth {
        let row = *rows.get(q.as_str()).ok_or_else(|| EvalError::MissingQuery(q.clone()))?;
        if relevant.is_empty() {
            return Err(EvalError::NoRelevant(q.clone()));
        }
        let scores = s.scores.row(row);
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(rank_of[a].cmp(&rank_of[b])));
        let top = &order[..k.min(order.len())];
        let mut hit = false;
        for id in relevant {
            let c = *cols.get(id.as_str()).ok_or_else(|| EvalError::MissingCandidate(id.clone()))?;
            hit |= top.contains(&c);
        }
        hits += usize::from(hit);
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    Ok(hits as f64 / truth.len() as f64)
}

/// Result of answering one MCQ item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqPrediction {
    #[serde(rename = "item")]
    pub item_id: String,
    #[serde(rename = "chosen")]
    pub chosen_index: usize,
    #[serde(rename = "template")]
    pub chosen_template: TemplateKind,
    #[serde(rename = "truth")]
    pub chosen_truth: OptionTruth,
    pub correct: bool,
    pub tie: bool,
}

/// Pick the highest-scoring option; ties go to the lowest index and set `tie`.
pub fn answer_from_scores(item: &McqItem, scores: &[f64]) -> McqPrediction {
    assert_eq!(scores.len(), item.num_options(), "one score per option");
    let mut best = 0;
    for (j, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = j;
        }
    }
    let tie = scores.iter().enumerate().any(|(j, &v)| j != best && v == scores[best]);
    McqPrediction {
        item_id: item.id.clone(),
        chosen_index: best,
        chosen_template: item.option_templates[best],
        chosen_truth: item.option_truth[best],
        correct: best == item.correct_index,
        tie,
    }
}

/// Id of option `j` of `item` in an option embedding table.
pub fn option_id(item_id: &str, j: usize) -> String {
    alloc::format!("{item_id}/{j}")
}

/// Answer each item by cosine between the scene image and each option.
///
/// Images are looked up by the item's scene id; options by [`option_id`].
pub fn answer_mcqs(
    images: &EmbeddingTable,
    options: &EmbeddingTable,
    items: &[McqItem],
) -> Result<Vec<McqPrediction>, EvalError> {
    items
        .iter()
        .map(|item| {
            let img = images.get(&item.scene_id).ok_or_else(|| EvalError::MissingEmbedding(item.scene_id.clone()))?;
            let present = (0..).take_while(|j| options.get(&option_id(&item.id, *j)).is_some()).count();
            if present != item.num_options() {
                if present == 0 {
                    return Err(EvalError::MissingEmbedding(option_id(&item.id, 0)));
                }
                return Err(EvalError::OptionCount { item: item.id.clone(), options: item.num_options(), embeddings: present });
            }
            let scores: Vec<f64> = (0..present).map(|j| cosine(img, options.get(&option_id(&item.id, j)).unwrap())).collect();
            Ok(answer_from_scores(item, &scores))
        })
        .collect()
}

/// Count and accuracy over one slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Rate {
    pub value: f64,
    pub count: usize,
}

impl Rate {
    fn of(hits: usize, count: usize) -> Rate {
        Rate { value: if count == 0 { 0.0 } else { hits as f64 / count as f64 }, count }
    }
}

/// MCQ accuracy overall and by the template of the correct option, plus the
/// selection statistics used for affirmation-bias analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct McqBreakdown {
    pub accuracy: Rate,
    pub per_template: BTreeMap<TemplateKind, Rate>,
    /// Share of all chosen options carrying each template.
    pub selection_frequency: BTreeMap<TemplateKind, Rate>,
    /// Share of wrong answers whose chosen option is a false negation; 0 with no errors.
    pub false_negation_selection_rate: Rate,
    pub ties: usize,
}

pub fn breakdown_by_template(predictions: &[McqPrediction], items: &[McqItem]) -> McqBreakdown {
    assert_eq!(predictions.len(), items.len(), "one prediction per item");
    let mut correct = 0;
    let mut per: BTreeMap<TemplateKind, (usize, usize)> = TemplateKind::ALL.iter().map(|k| (*k, (0, 0))).collect();
    let mut chosen: BTreeMap<TemplateKind, usize> = TemplateKind::ALL.iter().map(|k| (*k, 0)).collect();
    let (mut errors, mut false_neg, mut ties) = (0, 0, 0);
    for (p, item) in predictions.iter().zip(items) {
        debug_assert_eq!(p.item_id, item.id);
        let slot = per.get_mut(&item.correct_template()).unwrap();
        slot.1 += 1;
        if p.correct {
            correct += 1;
            slot.0 += 1;
        } else {
            errors += 1;
            false_neg += usize::from(p.chosen_truth == OptionTruth::FalseNegation);
        }
        *chosen.get_mut(&p.chosen_template).unwrap() += 1;
        ties += usize::from(p.tie);
    }
    let n = predictions.len();
    McqBreakdown {
        accuracy: Rate::of(correct, n),
        per_template: per.into_iter().map(|(k, (h, c))| (k, Rate::of(h, c))).collect(),
        selection_frequency: chosen.into_iter().map(|(k, c)| (k, Rate::of(c, n))).collect(),
        false_negation_selection_rate: Rate::of(false_neg, errors),
        ties,
    }
}

/// Accuracy over two-option items; `labels[i]` is the index of the true option.
/// Predictions tied between the options count as choosing index 0.
pub fn binary_accuracy(scores: &[[f64; 2]], labels: &[usize]) -> f64 {
    assert_eq!(scores.len(), labels.len());
    if scores.is_empty() {
        return 0.0;
    }
    let hits = scores.iter().zip(labels).filter(|(s, &l)| usize::from(s[1] > s[0]) == l).count();
    hits as f64 / scores.len() as f64
}

/// Componentwise mean of the frames, renormalized to unit length.
pub fn pool_video_frames(frames: &[Vec<f64>]) -> Result<Vec<f64>, EvalError> {
    let first = frames.first().ok_or(EvalError::EmptyFrameList)?;
    let dim = first.len();
    let mut mean = alloc::vec![0.0; dim];
    for f in frames {
        if f.len() != dim {
            return Err(EvalError::FrameDim);
        }
        for (m, x) in mean.iter_mut().zip(f) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= frames.len() as f64;
    }
    unit_vector(&mean).ok_or(EvalError::ZeroVector)
}

/// `count` frame indices spread uniformly over `0..total`, endpoints included.
pub fn sample_frame_indices(total: usize, count: usize) -> Vec<usize> {
    match (total, count) {
        (0, _) | (_, 0) => Vec::new(),
        (_, 1) => alloc::vec![0],
        _ => (0..count).map(|i| libm::round(i as f64 * (total - 1) as f64 / (count - 1) as f64) as usize).collect(),
    }
}

/// Everything `evaluate` reports. Absent sections are skipped when serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EvalReport {
    /// Keyed by k.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub recall_at_k: BTreeMap<usize, Rate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcq: Option<McqBreakdown>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary_accuracy: Option<Rate>,
}

/// One row of the flat report layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub name: String,
    pub slice: String,
    pub value: f64,
    pub count: usize,
}

impl EvalReport {
    pub fn rows(&self) -> Vec<MetricRow> {
        let row = |name: &str, slice: &str, r: &Rate| MetricRow {
            name: name.into(),
            slice: slice.into(),
            value: r.value,
            count: r.count,
        };
        let mut out = Vec::new();
        for (k, r) in &self.recall_at_k {
            out.push(row("recall_at_k", &alloc::format!("k={k}"), r));
        }
        if let Some(m) = &self.mcq {
            out.push(row("mcq_accuracy", "all", &m.accuracy));
            for (k, r) in &m.per_template {
                out.push(row("mcq_accuracy", k.as_str(), r));
            }
            for (k, r) in &m.selection_frequency {
                out.push(row("template_selection_frequency", k.as_str(), r));
            }
            out.push(row("false_negation_selection_rate", "errors", &m.false_negation_selection_rate));
            out.push(row("mcq_ties", "all", &Rate { value: m.ties as f64, count: m.accuracy.count }));
        }
        if let Some(b) = &self.binary_accuracy {
            out.push(row("binary_accuracy", "all", b));
        }
        out
    }
}
