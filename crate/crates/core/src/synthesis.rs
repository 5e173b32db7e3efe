//! Negated captions, hard-negative MCQs and binary tasks built from scene annotations.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{render, TemplateCatalog};
use crate::text::{mentions, title_case};
use crate::types::{CaptionRecord, Concept, McqItem, OptionTruth, Polarity, SceneRecord, TemplateKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SynthesisError {
    #[error("caption is empty")]
    EmptyCaption,
    #[error("scene {0:?} has no captions")]
    NoCaptions(String),
    #[error("scene {scene:?}: insufficient concepts ({reason})")]
    InsufficientConcepts { scene: String, reason: &'static str },
    #[error("scene {scene:?}: negative {concept:?} is also a positive")]
    NegativeIsPositive { scene: String, concept: String },
    #[error("affirmation control needs a distractor different from the condition")]
    MissingDistractor,
    #[error("paraphraser failed: {0}")]
    Paraphrase(String),
}

/// Rewrites a caption without changing its meaning.
pub trait Paraphraser {
    fn paraphrase(&mut self, text: &str) -> Result<String, String>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityParaphraser;

impl Paraphraser for IdentityParaphraser {
    fn paraphrase(&mut self, text: &str) -> Result<String, String> {
        Ok(text.to_string())
    }
}

fn apply(p: &mut Option<&mut dyn Paraphraser>, text: String) -> Result<String, SynthesisError> {
    match p {
        None => Ok(text),
        Some(p) => {
            let out = p.paraphrase(&text).map_err(SynthesisError::Paraphrase)?;
            if out.trim().is_empty() {
                return Err(SynthesisError::Paraphrase(format!("empty paraphrase for {text:?}")));
            }
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    Prefix,
    Suffix,
}

impl Placement {
    pub fn as_str(self) -> &'static str {
        match self {
            Placement::Prefix => "prefix",
            Placement::Suffix => "suffix",
        }
    }
}

/// Caption generation with an owned catalog.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    catalog: TemplateCatalog,
}

impl Default for Synthesizer {
    fn default() -> Self {
        Synthesizer { catalog: TemplateCatalog::builtin() }
    }
}

impl Synthesizer {
    pub fn new(catalog: TemplateCatalog) -> Self {
        Synthesizer { catalog }
    }

    pub fn catalog(&self) -> &TemplateCatalog {
        &self.catalog
    }

    /// Join the "there is no x" sentence to `original` on the requested side.
    ///
    /// A suffix placement drops one trailing period from the original first.
    pub fn negate_caption(
        &self,
        scene: &SceneRecord,
        original: &str,
        x: &Concept,
        placement: Placement,
        mut paraphraser: Option<&mut dyn Paraphraser>,
    ) -> Result<CaptionRecord, SynthesisError> {
        self.negate_with(scene, original, x, placement, &mut paraphraser)
    }

    fn negate_with(
        &self,
        scene: &SceneRecord,
        original: &str,
        x: &Concept,
        placement: Placement,
        paraphraser: &mut Option<&mut dyn Paraphraser>,
    ) -> Result<CaptionRecord, SynthesisError> {
        let original = original.trim();
        if original.is_empty() {
            return Err(SynthesisError::EmptyCaption);
        }
        let negation = render(&self.catalog.retrieval_negation, &[("x", x.as_str())]);
        let text = match placement {
            Placement::Prefix => format!("{negation} {original}"),
            Placement::Suffix => {
                let body = original.strip_suffix('.').unwrap_or(original);
                format!("{body}. {negation}")
            }
        };
        let affirmed: BTreeSet<Concept> =
            scene.positives.iter().filter(|c| mentions(original, c)).cloned().collect();
        let polarity = if affirmed.is_empty() { Polarity::Negated } else { Polarity::Hybrid };
        Ok(CaptionRecord {
            id: format!("{}:neg:{}:{}", scene.id, x.as_str().replace(' ', "_"), placement.as_str()),
            scene_id: scene.id.clone(),
            text: apply(paraphraser, text)?,
            polarity,
            affirmed,
            negated: [x.clone()].into_iter().collect(),
        })
    }

    /// Three negation-enriched captions per scene.
    ///
    /// Record `i` negates `negatives[(i / 2) % n]` with placement prefix for even
    /// `i` and suffix for odd `i`, on caption `captions[(i / (2n)) % m]`.
    pub fn make_negcap_records(
        &self,
        scene: &SceneRecord,
        negatives: &[Concept],
        mut paraphraser: Option<&mut dyn Paraphraser>,
    ) -> Result<Vec<CaptionRecord>, SynthesisError> {
        if negatives.is_empty() {
            return Err(insufficient(scene, "no negatives"));
        }
        if scene.captions.is_empty() {
            return Err(SynthesisError::NoCaptions(scene.id.clone()));
        }
        check_disjoint(scene, negatives)?;
        let n = negatives.len();
        if 2 * n * scene.captions.len() < 3 {
            return Err(insufficient(scene, "one negative and one caption give only two distinct captions"));
        }
        (0..3)
            .map(|i| {
                let x = &negatives[(i / 2) % n];
                let placement = if i % 2 == 0 { Placement::Prefix } else { Placement::Suffix };
                let caption = &scene.captions[(i / (2 * n)) % scene.captions.len()];
                let mut rec = self.negate_with(scene, caption, x, placement, &mut paraphraser)?;
                rec.id = format!("{}:negcap:{i}", scene.id);
                Ok(rec)
            })
            .collect()
    }

    /// One Retrieval-Neg query per scene caption, cycling through the negatives.
    pub fn make_retrieval_queries<R: Rng + ?Sized>(
        &self,
        scene: &SceneRecord,
        negatives: &[Concept],
        rng: &mut R,
        mut paraphraser: Option<&mut dyn Paraphraser>,
    ) -> Result<Vec<CaptionRecord>, SynthesisError> {
        if negatives.is_empty() {
            return Err(insufficient(scene, "no negatives"));
        }
        if scene.captions.is_empty() {
            return Err(SynthesisError::NoCaptions(scene.id.clone()));
        }
        check_disjoint(scene, negatives)?;
        scene
            .captions
            .iter()
            .enumerate()
            .map(|(i, caption)| {
                let placement = if rng.random_bool(0.5) { Placement::Prefix } else { Placement::Suffix };
                let x = &negatives[i % negatives.len()];
                let mut rec = self.negate_with(scene, caption, x, placement, &mut paraphraser)?;
                rec.id = format!("{}:query:{i}", scene.id);
                Ok(rec)
            })
            .collect()
    }

    /// A four-option MCQ: one correct description and one distractor from each
    /// error family (false affirmation, false negation, false hybrid).
    pub fn make_mcq<R: Rng + ?Sized>(
        &self,
        scene: &SceneRecord,
        negatives: &[Concept],
        rng: &mut R,
        paraphraser: Option<&mut dyn Paraphraser>,
    ) -> Result<McqItem, SynthesisError> {
        self.build_mcq(format!("{}:mcq", scene.id), scene, negatives, rng, paraphraser)
    }

    /// Training-export variant of [`Synthesizer::make_mcq`].
    pub fn make_negmcq_record<R: Rng + ?Sized>(
        &self,
        scene: &SceneRecord,
        negatives: &[Concept],
        rng: &mut R,
    ) -> Result<McqItem, SynthesisError> {
        self.build_mcq(format!("{}:negmcq", scene.id), scene, negatives, rng, None)
    }

    fn build_mcq<R: Rng + ?Sized>(
        &self,
        id: String,
        scene: &SceneRecord,
        negatives: &[Concept],
        rng: &mut R,
        mut paraphraser: Option<&mut dyn Paraphraser>,
    ) -> Result<McqItem, SynthesisError> {
        let pos: Vec<&Concept> = scene.positives.iter().collect();
        let mut neg: Vec<&Concept> = Vec::with_capacity(negatives.len());
        for c in negatives {
            if !neg.contains(&c) {
                neg.push(c);
            }
        }
        if pos.is_empty() {
            return Err(insufficient(scene, "no positives"));
        }
        if neg.is_empty() {
            return Err(insufficient(scene, "no negatives"));
        }
        check_disjoint(scene, negatives)?;

        let kind = TemplateKind::ALL[rng.random_range(0..3)];
        let mut mirror = None;
        let correct = match kind {
            TemplateKind::Affirmation => {
                let a = *pos.choose(rng).unwrap();
                if pos.len() >= 2 && rng.random_bool(0.5) {
                    let c = pick_other(&pos, a, rng);
                    self.affirm_two(a, c)
                } else {
                    self.affirm(a)
                }
            }
            TemplateKind::Negation => self.negate(neg.choose(rng).unwrap()),
            TemplateKind::Hybrid => {
                let (a, b) = (*pos.choose(rng).unwrap(), *neg.choose(rng).unwrap());
                mirror = Some((b, a));
                self.hybrid(a, b)
            }
        };

        let mut options: Vec<(String, TemplateKind, OptionTruth)> = Vec::with_capacity(4);
        options.push((correct, kind, OptionTruth::Correct));

        const FAMILIES: [OptionTruth; 3] =
            [OptionTruth::FalseAffirmation, OptionTruth::FalseNegation, OptionTruth::FalseHybrid];
        const ATTEMPTS: usize = 16;
        let mut pending: Vec<OptionTruth> = FAMILIES.to_vec();
        // First pass keeps the one-per-family quota; later passes take a second
        // member of any family that can still produce a fresh text.
        for pass in 0..3 {
            let mut missed = Vec::new();
            for family in pending.drain(..) {
                let fresh = (0..ATTEMPTS).find_map(|attempt| {
                    let (text, tk) = self.distractor(family, &pos, &neg, mirror.filter(|_| attempt == 0), attempt, rng);
                    (!options.iter().any(|o| o.0 == text)).then_some((text, tk))
                });
                match fresh {
                    Some((text, tk)) => options.push((text, tk, family)),
                    None => missed.push(family),
                }
            }
            if options.len() == 4 {
                break;
            }
            if pass == 2 || missed.len() == 3 {
                return Err(insufficient(scene, "cannot form three distinct distractors"));
            }
            let need = 4 - options.len();
            pending = FAMILIES.iter().copied().filter(|f| !missed.contains(f)).cycle().take(need).collect();
            if pending.is_empty() {
                return Err(insufficient(scene, "cannot form three distinct distractors"));
            }
        }

        options.shuffle(rng);
        let correct_index = options.iter().position(|o| o.2 == OptionTruth::Correct).unwrap();
        let mut texts = Vec::with_capacity(4);
        for (text, _, _) in &options {
            texts.push(apply(&mut paraphraser, text.clone())?);
        }
        let item = McqItem {
            id,
            scene_id: scene.id.clone(),
            options: texts,
            option_templates: options.iter().map(|o| o.1).collect(),
            option_truth: options.iter().map(|o| o.2).collect(),
            correct_index,
        };
        item.validate()
            .map_err(|_| SynthesisError::Paraphrase("paraphrased options are no longer distinct".into()))?;
        Ok(item)
    }

    fn distractor<R: Rng + ?Sized>(
        &self,
        family: OptionTruth,
        pos: &[&Concept],
        neg: &[&Concept],
        mirror: Option<(&Concept, &Concept)>,
        attempt: usize,
        rng: &mut R,
    ) -> (String, TemplateKind) {
        match family {
            OptionTruth::FalseAffirmation => (self.affirm(neg.choose(rng).unwrap()), TemplateKind::Affirmation),
            OptionTruth::FalseNegation => (self.negate(pos.choose(rng).unwrap()), TemplateKind::Negation),
            OptionTruth::FalseHybrid => {
                // First choice affirms an absent concept and negates a present one,
                // the swapped roles of the correct hybrid when there is one.
                // Retries may instead get only one side wrong.
                if let Some((x, y)) = mirror {
                    return (self.hybrid(x, y), TemplateKind::Hybrid);
                }
                let mut variants = alloc::vec![0u8];
                if attempt > 0 && neg.len() >= 2 {
                    variants.push(1);
                }
                if attempt > 0 && pos.len() >= 2 {
                    variants.push(2);
                }
                let text = match *variants.choose(rng).unwrap() {
                    0 => self.hybrid(neg.choose(rng).unwrap(), pos.choose(rng).unwrap()),
                    1 => {
                        let x = *neg.choose(rng).unwrap();
                        self.hybrid(x, pick_other(neg, x, rng))
                    }
                    _ => {
                        let a = *pos.choose(rng).unwrap();
                        self.hybrid(a, pick_other(pos, a, rng))
                    }
                };
                (text, TemplateKind::Hybrid)
            }
            OptionTruth::Correct => unreachable!("correct option is not a distractor"),
        }
    }

    fn affirm(&self, a: &Concept) -> String {
        render(&self.catalog.mcq.affirmation[0], &[("A", a.as_str())])
    }

    fn affirm_two(&self, a: &Concept, c: &Concept) -> String {
        render(&self.catalog.mcq.affirmation_two[0], &[("A", a.as_str()), ("C", c.as_str())])
    }

    fn negate(&self, b: &Concept) -> String {
        render(&self.catalog.mcq.negation[0], &[("B", b.as_str())])
    }

    fn hybrid(&self, a: &Concept, b: &Concept) -> String {
        render(&self.catalog.mcq.hybrid[0], &[("A", a.as_str()), ("B", b.as_str())])
    }

    /// Two-option task over a single condition, condition-first, labelled as
    /// present (`correct_index = 0`). Use [`label_binary`] to apply a label.
    pub fn make_binary_task(
        &self,
        condition: &Concept,
        mode: BinaryMode,
        distractor: Option<&Concept>,
    ) -> Result<McqItem, SynthesisError> {
        let show = |c: &Concept| render(&self.catalog.binary.affirmation, &[("x", &title_case(c.as_str()))]);
        let (second, templates, truth) = match mode {
            BinaryMode::AffirmationControl => {
                let d = distractor.filter(|d| *d != condition).ok_or(SynthesisError::MissingDistractor)?;
                (show(d), [TemplateKind::Affirmation; 2], OptionTruth::FalseAffirmation)
            }
            BinaryMode::Negation => (
                render(&self.catalog.binary.negation, &[("x", &title_case(condition.as_str()))]),
                [TemplateKind::Affirmation, TemplateKind::Negation],
                OptionTruth::FalseNegation,
            ),
        };
        Ok(McqItem {
            id: format!("binary:{}:{}", mode.as_str(), condition.as_str().replace(' ', "_")),
            scene_id: String::new(),
            options: alloc::vec![show(condition), second],
            option_templates: templates.to_vec(),
            option_truth: alloc::vec![OptionTruth::Correct, truth],
            correct_index: 0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinaryMode {
    AffirmationControl,
    Negation,
}

impl BinaryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BinaryMode::AffirmationControl => "affirmation-control",
            BinaryMode::Negation => "negation",
        }
    }
}

/// Set the correct option of a binary item from the scene label.
///
/// When the condition is absent the second option is correct and the first
/// becomes a false affirmation.
pub fn label_binary(item: &mut McqItem, condition_present: bool) {
    debug_assert_eq!(item.options.len(), 2);
    if condition_present {
        item.correct_index = 0;
        if item.option_truth[0] != OptionTruth::Correct {
            let second = match item.option_templates[1] {
                TemplateKind::Negation => OptionTruth::FalseNegation,
                _ => OptionTruth::FalseAffirmation,
            };
            item.option_truth = alloc::vec![OptionTruth::Correct, second];
        }
    } else {
        item.correct_index = 1;
        item.option_truth = alloc::vec![OptionTruth::FalseAffirmation, OptionTruth::Correct];
    }
}

fn pick_other<'a, R: Rng + ?Sized>(pool: &[&'a Concept], not: &Concept, rng: &mut R) -> &'a Concept {
    let others: Vec<&Concept> = pool.iter().copied().filter(|c| *c != not).collect();
    others.choose(rng).copied().expect("caller guarantees at least two concepts")
}

fn insufficient(scene: &SceneRecord, reason: &'static str) -> SynthesisError {
    SynthesisError::InsufficientConcepts { scene: scene.id.clone(), reason }
}

fn check_disjoint(scene: &SceneRecord, negatives: &[Concept]) -> Result<(), SynthesisError> {
    match negatives.iter().find(|c| scene.positives.contains(*c)) {
        Some(c) => Err(SynthesisError::NegativeIsPositive { scene: scene.id.clone(), concept: c.to_string() }),
        None => Ok(()),
    }
}
