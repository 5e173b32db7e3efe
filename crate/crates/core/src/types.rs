//! Domain records shared by every stage of the pipeline.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RecordError {
    #[error("concept name is empty after canonicalization")]
    EmptyConcept,
    #[error("scene {scene}: concept {concept:?} is both present and a negative candidate")]
    OverlappingConcepts { scene: String, concept: String },
    #[error("mcq {0}: {1}")]
    InvalidMcq(String, &'static str),
}

/// A canonical concept name: lowercase, trimmed, internal whitespace collapsed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Concept(String);

impl Concept {
    pub fn new(raw: &str) -> Result<Self, RecordError> {
        let canonical = canonicalize(raw);
        if canonical.is_empty() {
            return Err(RecordError::EmptyConcept);
        }
        Ok(Concept(canonical))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for Concept {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Concept {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Concept::new(&raw).map_err(serde::de::Error::custom)
    }
}

/// Lowercase, trim and collapse runs of whitespace to a single space.
pub fn canonicalize(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for word in raw.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        for ch in word.chars() {
            out.extend(ch.to_lowercase());
        }
    }
    out
}

/// One media item with its present concepts and verified-absent candidates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub id: String,
    pub positives: BTreeSet<Concept>,
    #[serde(default, rename = "negatives")]
    pub negative_candidates: BTreeSet<Concept>,
    #[serde(default)]
    pub captions: Vec<String>,
    #[serde(default, rename = "media", skip_serializing_if = "Option::is_none")]
    pub media_ref: Option<String>,
}

impl SceneRecord {
    pub fn new(
        id: impl Into<String>,
        positives: impl IntoIterator<Item = Concept>,
        negative_candidates: impl IntoIterator<Item = Concept>,
    ) -> Result<Self, RecordError> {
        let scene = SceneRecord {
            id: id.into(),
            positives: positives.into_iter().collect(),
            negative_candidates: negative_candidates.into_iter().collect(),
            captions: Vec::new(),
            media_ref: None,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn with_captions(mut self, captions: impl IntoIterator<Item = String>) -> Self {
        self.captions = captions.into_iter().collect();
        self
    }

    pub fn validate(&self) -> Result<(), RecordError> {
        if let Some(c) = self.positives.intersection(&self.negative_candidates).next() {
            return Err(RecordError::OverlappingConcepts {
                scene: self.id.clone(),
                concept: c.0.clone(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Affirmative,
    Negated,
    Hybrid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub id: String,
    #[serde(rename = "scene")]
    pub scene_id: String,
    pub text: String,
    pub polarity: Polarity,
    pub affirmed: BTreeSet<Concept>,
    pub negated: BTreeSet<Concept>,
}

impl CaptionRecord {
    /// True when the caption's claims hold for `scene`.
    pub fn is_correct_for(&self, scene: &SceneRecord) -> bool {
        self.affirmed.is_subset(&scene.positives) && self.negated.is_disjoint(&scene.positives)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateKind {
    Affirmation,
    Negation,
    Hybrid,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 3] =
        [TemplateKind::Affirmation, TemplateKind::Negation, TemplateKind::Hybrid];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateKind::Affirmation => "affirmation",
            TemplateKind::Negation => "negation",
            TemplateKind::Hybrid => "hybrid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptionTruth {
    Correct,
    FalseAffirmation,
    FalseNegation,
    FalseHybrid,
}

impl OptionTruth {
    pub fn as_str(self) -> &'static str {
        match self {
            OptionTruth::Correct => "correct",
            OptionTruth::FalseAffirmation => "false-affirmation",
            OptionTruth::FalseNegation => "false-negation",
            OptionTruth::FalseHybrid => "false-hybrid",
        }
    }
}

/// A multiple-choice question over one scene.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqItem {
    pub id: String,
    #[serde(rename = "scene")]
    pub scene_id: String,
    pub options: Vec<String>,
    #[serde(rename = "templates")]
    pub option_templates: Vec<TemplateKind>,
    #[serde(rename = "truth")]
    pub option_truth: Vec<OptionTruth>,
    #[serde(rename = "correct")]
    pub correct_index: usize,
}

impl McqItem {
    pub fn num_options(&self) -> usize {
        self.options.len()
    }

    pub fn correct_template(&self) -> TemplateKind {
        self.option_templates[self.correct_index]
    }

    pub fn validate(&self) -> Result<(), RecordError> {
        let bad = |why| Err(RecordError::InvalidMcq(self.id.clone(), why));
        let c = self.options.len();
        if c != 2 && c != 4 {
            return bad("option count must be 2 or 4");
        }
        if self.option_templates.len() != c || self.option_truth.len() != c {
            return bad("per-option tags do not match option count");
        }
        if self.correct_index >= c {
            return bad("correct index out of range");
        }
        let correct: Vec<usize> = (0..c)
            .filter(|&i| self.option_truth[i] == OptionTruth::Correct)
            .collect();
        if correct.as_slice() != [self.correct_index] {
            return bad("exactly one option must be tagged correct, at the correct index");
        }
        for i in 0..c {
            for j in i + 1..c {
                if self.options[i] == self.options[j] {
                    return bad("option texts must be pairwise distinct");
                }
            }
        }
        Ok(())
    }
}
