//! A synthetic stand-in for an image-text corpus: symbolic scenes, hard-negative
//! pairs, fixed featurizers and a linear two-tower encoder trained with the
//! contrastive and MCQ objectives.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cooccur::{build_cooccurrence, propose_negatives};
use crate::embedding::SimilarityMatrix;
use crate::eval::{answer_from_scores, breakdown_by_template, recall_at_k, McqBreakdown, RetrievalGroundTruth};
use crate::matrix::{dot, Matrix};
use crate::objectives::{clip_loss, mcq_loss, LossConfig, ObjectiveError};
use crate::seed::{fnv1a, rng_for};
use crate::synthesis::{SynthesisError, Synthesizer};
use crate::text::{scan, Item};
use crate::types::{CaptionRecord, Concept, McqItem, SceneRecord};

pub const DEFAULT_OBJECTS: [&str; 40] = [
    "cat", "dog", "horse", "sheep", "cow", "bird", "chair", "table", "sofa", "bed", "lamp", "clock", "vase", "book",
    "cup", "bottle", "bowl", "plate", "knife", "fork", "spoon", "car", "bus", "truck", "bicycle", "boat", "train",
    "kite", "umbrella", "bench", "tree", "flower", "laptop", "phone", "keyboard", "mouse", "backpack", "hat", "ball",
    "pizza",
];

/// Every non-object word used by the caption and template catalogs.
pub const FUNCTION_TOKENS: [&str; 52] = [
    "and", "appear", "appears", "are", "be", "both", "but", "can", "capture", "captures", "contain", "contains",
    "depict", "depicted", "depicts", "display", "displays", "do", "does", "feature", "featured", "features", "has",
    "image", "in", "include", "included", "includes", "is", "lacks", "neither", "no", "nor", "not", "of", "or", "part",
    "photo", "picture", "present", "see", "seen", "show", "shown", "shows", "the", "there", "this", "visible", "we",
    "without", "a",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ToyError {
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("loss became non-finite at step {0}")]
    DivergedLoss(usize),
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// Object names plus the closed set of function words a caption may use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyVocabulary {
    objects: Vec<Concept>,
    function_tokens: Vec<String>,
    function_index: BTreeMap<String, usize>,
}

impl ToyVocabulary {
    /// The first `v` default objects; `obj41`, `obj42`, ... beyond the named forty.
    pub fn with_objects(v: usize) -> Result<Self, ToyError> {
        if v < 4 {
            return Err(ToyError::Config("at least four objects are required"));
        }
        let objects = (0..v)
            .map(|i| match DEFAULT_OBJECTS.get(i) {
                Some(name) => Concept::new(name).unwrap(),
                None => Concept::new(&format!("obj{}", i + 1)).unwrap(),
            })
            .collect();
        Ok(Self::from_parts(objects, FUNCTION_TOKENS.iter().map(|s| s.to_string()).collect()))
    }

    fn from_parts(objects: Vec<Concept>, function_tokens: Vec<String>) -> Self {
        let function_index = function_tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        ToyVocabulary { objects, function_tokens, function_index }
    }

    pub fn objects(&self) -> &[Concept] {
        &self.objects
    }

    pub fn function_tokens(&self) -> &[String] {
        &self.function_tokens
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// Length of a text feature vector: affirmed and negated channel per object
    /// plus one count per function token.
    pub fn text_dim(&self) -> usize {
        2 * self.objects.len() + self.function_tokens.len()
    }

    pub fn is_known_word(&self, w: &str) -> bool {
        self.function_index.contains_key(w)
    }
}

impl Default for ToyVocabulary {
    fn default() -> Self {
        Self::with_objects(DEFAULT_OBJECTS.len()).unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextMode {
    /// Mentions after a negation cue go to the negated channel.
    Scoped,
    /// Every mention goes to the affirmed channel and function words are dropped.
    Bag,
}

pub fn featurize_text(text: &str, vocab: &ToyVocabulary, mode: TextMode) -> Result<Vec<f64>, ToyError> {
    let v = vocab.len();
    let mut out = alloc::vec![0.0; vocab.text_dim()];
    for item in scan(text, &vocab.objects) {
        match item {
            Item::Mention { concept, negated } => {
                let i = vocab.objects.iter().position(|c| c == concept).expect("scan only returns vocabulary concepts");
                let slot = if negated && mode == TextMode::Scoped { v + i } else { i };
                out[slot] += 1.0;
            }
            Item::Word(w) => {
                let f = *vocab.function_index.get(&w).ok_or(ToyError::UnknownToken(w))?;
                if mode == TextMode::Scoped {
                    out[2 * v + f] += 1.0;
                }
            }
        }
    }
    Ok(out)
}

/// Multi-hot over the positives plus Gaussian noise of standard deviation
/// `sigma`, drawn from a stream keyed by the scene id.
pub fn featurize_image(scene: &SceneRecord, vocab: &ToyVocabulary, dataset_seed: u64, sigma: f64) -> Vec<f64> {
    let mut rng = rng_for(dataset_seed, &format!("image:{}", scene.id));
    vocab
        .objects
        .iter()
        .map(|c| {
            let hot = if scene.positives.contains(c) { 1.0 } else { 0.0 };
            let z: f64 = StandardNormal.sample(&mut rng);
            hot + sigma * z
        })
        .collect()
}

/// A scene whose objects are drawn without replacement.
pub fn sample_scene<R: Rng + ?Sized>(
    rng: &mut R,
    vocab: &ToyVocabulary,
    id: &str,
    min_objects: usize,
    max_objects: usize,
) -> Result<SceneRecord, ToyError> {
    if min_objects == 0 || min_objects > max_objects || max_objects > vocab.len() {
        return Err(ToyError::Config("need 1 <= min objects <= max objects <= vocabulary size"));
    }
    let n = rng.random_range(min_objects..=max_objects);
    let picked: Vec<Concept> = vocab.objects.choose_multiple(rng, n).cloned().collect();
    let scene = SceneRecord::new(id, picked, []).unwrap();
    let caption = original_caption(&scene);
    Ok(scene.with_captions([caption]))
}

/// `This image includes A, B and C.`
pub fn original_caption(scene: &SceneRecord) -> String {
    let names: Vec<&str> = scene.positives.iter().map(Concept::as_str).collect();
    let list = match names.split_last() {
        None => String::new(),
        Some((last, [])) => last.to_string(),
        Some((last, rest)) => format!("{} and {last}", rest.join(", ")),
    };
    format!("This image includes {list}.")
}

/// Two scenes that differ only in `target`, present in the first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardNegativePair {
    pub id: String,
    pub present: SceneRecord,
    pub absent: SceneRecord,
    pub target: Concept,
}

pub fn make_hardneg_pair<R: Rng + ?Sized>(
    rng: &mut R,
    vocab: &ToyVocabulary,
    id: &str,
    max_objects: usize,
) -> Result<HardNegativePair, ToyError> {
    let present = sample_scene(rng, vocab, &format!("{id}a"), 2, max_objects.max(2))?;
    let target = present.positives.iter().nth(rng.random_range(0..present.positives.len())).unwrap().clone();
    let rest = present.positives.iter().filter(|c| **c != target).cloned();
    let absent = SceneRecord::new(format!("{id}b"), rest, [target.clone()]).unwrap();
    let caption = original_caption(&absent);
    Ok(HardNegativePair { id: id.to_string(), present, absent: absent.with_captions([caption]), target })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    /// Original captions, contrastive loss only.
    AffirmOnly,
    /// Negation-enriched captions, contrastive loss only.
    Negcap,
    /// Negation-enriched captions and MCQ items, weighted by `alpha`.
    Negfull,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::AffirmOnly => "affirm-only",
            Condition::Negcap => "negcap",
            Condition::Negfull => "negfull",
        }
    }
}

/// All knobs of a toy experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub seed: u64,
    #[serde(rename = "V")]
    pub objects: usize,
    pub pairs: usize,
    pub sigma: f64,
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
    pub alpha: f64,
    pub condition: Condition,
    pub mode: TextMode,
    pub dim: usize,
    pub temperature: f64,
    pub max_objects: usize,
    pub negatives: usize,
    /// Loss is recorded every this many steps.
    pub log_every: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            seed: 1,
            objects: 40,
            pairs: 2000,
            sigma: 0.05,
            lr: 0.1,
            steps: 3000,
            batch: 64,
            alpha: 0.99,
            condition: Condition::Negfull,
            mode: TextMode::Scoped,
            dim: 16,
            temperature: 0.07,
            max_objects: 3,
            negatives: 4,
            log_every: 100,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<(), ToyError> {
        if self.objects < 4 {
            return Err(ToyError::Config("V must be at least 4"));
        }
        if self.pairs < 2 {
            return Err(ToyError::Config("pairs must be at least 2"));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(ToyError::Config("sigma must be non-negative"));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(ToyError::Config("lr must be non-negative"));
        }
        if self.batch < 2 || self.dim == 0 || self.log_every == 0 || self.negatives == 0 {
            return Err(ToyError::Config("batch >= 2, dim >= 1, log_every >= 1, negatives >= 1"));
        }
        if self.max_objects < 2 || self.max_objects > self.objects {
            return Err(ToyError::Config("max_objects must lie in [2, V]"));
        }
        LossConfig::new(self.alpha, self.temperature)?;
        Ok(())
    }

    /// Contrastive weight actually used by `condition`.
    pub fn effective_alpha(&self) -> f64 {
        match self.condition {
            Condition::Negfull => self.alpha,
            _ => 1.0,
        }
    }
}

/// Scenes, features and synthesized records for one seed.
#[derive(Debug, Clone)]
pub struct ToyWorld {
    pub vocab: ToyVocabulary,
    pub mode: TextMode,
    pub pairs: Vec<HardNegativePair>,
    /// `2 * pairs` scenes: present then absent member of each pair.
    pub scenes: Vec<SceneRecord>,
    /// Ranked negatives per scene; an absent member lists its target first.
    pub negatives: Vec<Vec<Concept>>,
    pub images: Vec<Vec<f64>>,
    pub train: Vec<usize>,
    pub held_out: Vec<usize>,
    pub original: Vec<Vec<f64>>,
    pub negcap: Vec<[CaptionRecord; 3]>,
    pub negcap_features: Vec<[Vec<f64>; 3]>,
    pub negmcq: Vec<McqItem>,
    pub negmcq_features: Vec<Vec<Vec<f64>>>,
}

/// Held-out membership by hash of the pair id, about one pair in five.
pub fn is_held_out(pair_id: &str) -> bool {
    fnv1a(pair_id.as_bytes()).is_multiple_of(5)
}

impl ToyWorld {
    pub fn generate(cfg: &ToyConfig) -> Result<Self, ToyError> {
        cfg.validate()?;
        let vocab = ToyVocabulary::with_objects(cfg.objects)?;
        let synth = Synthesizer::default();
        let mut rng = rng_for(cfg.seed, "scenes");
        let pairs: Vec<HardNegativePair> = (0..cfg.pairs)
            .map(|i| make_hardneg_pair(&mut rng, &vocab, &format!("p{i:05}"), cfg.max_objects))
            .collect::<Result<_, _>>()?;
        let mut scenes = Vec::with_capacity(2 * pairs.len());
        for p in &pairs {
            scenes.push(p.present.clone());
            scenes.push(p.absent.clone());
        }
        let cooc = build_cooccurrence(&scenes).map_err(|_| ToyError::Config("empty corpus"))?;

        let mut negatives = Vec::with_capacity(scenes.len());
        for (i, scene) in scenes.iter_mut().enumerate() {
            let mut list: Vec<Concept> = scene.negative_candidates.iter().cloned().collect();
            for c in propose_negatives(scene, &cooc, cfg.negatives, None, false) {
                if list.len() < cfg.negatives && !list.contains(&c) {
                    list.push(c);
                }
            }
            scene.negative_candidates = list.iter().cloned().collect();
            debug_assert_eq!(i % 2 == 1, list.first() == Some(&pairs[i / 2].target));
            negatives.push(list);
        }

        let images = scenes.iter().map(|s| featurize_image(s, &vocab, cfg.seed, cfg.sigma)).collect();
        let (mut train, mut held_out) = (Vec::new(), Vec::new());
        for (i, p) in pairs.iter().enumerate() {
            let bucket = if is_held_out(&p.id) { &mut held_out } else { &mut train };
            bucket.extend([2 * i, 2 * i + 1]);
        }
        if train.len() < cfg.batch || held_out.is_empty() {
            return Err(ToyError::Config("too few pairs for the batch size and split"));
        }

        let feat = |t: &str| featurize_text(t, &vocab, cfg.mode);
        let mut original = Vec::with_capacity(scenes.len());
        let mut negcap = Vec::with_capacity(scenes.len());
        let mut negcap_features = Vec::with_capacity(scenes.len());
        let mut negmcq = Vec::with_capacity(scenes.len());
        let mut negmcq_features = Vec::with_capacity(scenes.len());
        for (scene, neg) in scenes.iter().zip(&negatives) {
            original.push(feat(&scene.captions[0])?);
            let recs: [CaptionRecord; 3] = synth.make_negcap_records(scene, neg, None)?.try_into().unwrap();
            negcap_features.push([feat(&recs[0].text)?, feat(&recs[1].text)?, feat(&recs[2].text)?]);
            negcap.push(recs);
            let item = synth.make_negmcq_record(scene, neg, &mut rng_for(cfg.seed, &format!("negmcq:{}", scene.id)))?;
            negmcq_features.push(item.options.iter().map(|o| feat(o)).collect::<Result<_, _>>()?);
            negmcq.push(item);
        }
        Ok(ToyWorld {
            vocab,
            mode: cfg.mode,
            pairs,
            scenes,
            negatives,
            images,
            train,
            held_out,
            original,
            negcap,
            negcap_features,
            negmcq,
            negmcq_features,
        })
    }

    pub fn featurize(&self, text: &str) -> Result<Vec<f64>, ToyError> {
        featurize_text(text, &self.vocab, self.mode)
    }
}

/// Linear image and text maps followed by unit normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoTowerModel {
    /// `d x V`.
    pub image_map: Matrix,
    /// `d x (2V + F)`.
    pub text_map: Matrix,
}

/// Scales of the pretrained-like initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitScales {
    /// Weight of the direction shared by every object vector.
    pub shared: f64,
    /// Scale of the function-word columns relative to object columns.
    pub function: f64,
    /// Typical norm of an object column.
    pub norm: f64,
}

impl Default for InitScales {
    fn default() -> Self {
        InitScales { shared: SHARED_INIT, function: FUNCTION_INIT, norm: NORM_INIT }
    }
}

const SHARED_INIT: f64 = 1.0;
const FUNCTION_INIT: f64 = 1.0;
const NORM_INIT: f64 = 0.2;

impl TwoTowerModel {
    /// A stand-in for a pretrained encoder: image and affirmed-text columns share
    /// one vector per object (a common direction plus an object-specific part),
    /// the negated channel copies the affirmed one so negation is ignored, and
    /// function words are random vectors of the same scale.
    pub fn pretrained(vocab: &ToyVocabulary, dim: usize, seed: u64) -> Self {
        Self::pretrained_with(vocab, dim, seed, InitScales::default())
    }

    pub fn pretrained_with(vocab: &ToyVocabulary, dim: usize, seed: u64, scales: InitScales) -> Self {
        let mut rng = rng_for(seed, "init");
        let v = vocab.len();
        let scale = scales.norm / libm::sqrt(dim as f64);
        let mut gauss = |s: f64| -> f64 {
            let z: f64 = StandardNormal.sample(&mut rng);
            s * z
        };
        let shared: Vec<f64> = (0..dim).map(|_| gauss(scale)).collect();
        let image_map = Matrix::from_fn(dim, v, |r, _| scales.shared * shared[r] + gauss(scale));
        let mut text_map = Matrix::zeros(dim, vocab.text_dim());
        for r in 0..dim {
            for i in 0..v {
                let a = image_map[(r, i)];
                text_map.row_mut(r)[i] = a;
                text_map.row_mut(r)[v + i] = a;
            }
        }
        for c in 2 * v..vocab.text_dim() {
            for r in 0..dim {
                text_map.row_mut(r)[c] = gauss(scales.function * scale);
            }
        }
        TwoTowerModel { image_map, text_map }
    }

    pub fn dim(&self) -> usize {
        self.image_map.rows()
    }

    pub fn embed_image(&self, features: &[f64]) -> Vec<f64> {
        project(&self.image_map, features).0
    }

    pub fn embed_text(&self, features: &[f64]) -> Vec<f64> {
        project(&self.text_map, features).0
    }

    pub fn is_finite(&self) -> bool {
        self.image_map.is_finite() && self.text_map.is_finite()
    }
}

/// `W x / ||W x||` and `||W x||`; a zero projection maps to the zero vector.
fn project(w: &Matrix, x: &[f64]) -> (Vec<f64>, f64) {
    let mut v = alloc::vec![0.0; w.rows()];
    for (c, &xc) in x.iter().enumerate() {
        if xc != 0.0 {
            for (r, out) in v.iter_mut().enumerate() {
                *out += w[(r, c)] * xc;
            }
        }
    }
    let n = libm::sqrt(dot(&v, &v));
    if n > 0.0 {
        v.iter_mut().for_each(|e| *e /= n);
    }
    (v, n)
}

/// Accumulate `dL/dW` given `dL/du` for `u = Wx/||Wx||`, using the Jacobian `(I - u u^T)/||Wx||`.
fn backprop(grad: &mut Matrix, x: &[f64], u: &[f64], n: f64, g_u: &[f64], weight: f64) {
    if n == 0.0 {
        return;
    }
    let along = dot(u, g_u);
    let g_v: Vec<f64> = g_u.iter().zip(u).map(|(g, ui)| weight * (g - ui * along) / n).collect();
    for (c, &xc) in x.iter().enumerate() {
        if xc != 0.0 {
            for (r, gv) in g_v.iter().enumerate() {
                grad.row_mut(r)[c] += gv * xc;
            }
        }
    }
}

struct Grads {
    image: Matrix,
    text: Matrix,
}

/// Contrastive loss of a paired batch with gradients scaled by `weight`.
fn clip_step(model: &TwoTowerModel, images: &[&[f64]], texts: &[&[f64]], cfg: &LossConfig, weight: f64, g: &mut Grads) -> Result<f64, ToyError> {
    let ui: Vec<(Vec<f64>, f64)> = images.iter().map(|x| project(&model.image_map, x)).collect();
    let ut: Vec<(Vec<f64>, f64)> = texts.iter().map(|x| project(&model.text_map, x)).collect();
    let b = images.len();
    let s = Matrix::from_fn(b, b, |i, j| dot(&ui[i].0, &ut[j].0));
    let res = clip_loss(&s, cfg)?;
    if weight != 0.0 {
        let d = model.dim();
        for i in 0..b {
            let mut gu = alloc::vec![0.0; d];
            let mut gt = alloc::vec![0.0; d];
            for j in 0..b {
                let gij = res.grad[(i, j)];
                let gji = res.grad[(j, i)];
                for r in 0..d {
                    gu[r] += gij * ut[j].0[r];
                    gt[r] += gji * ui[j].0[r];
                }
            }
            backprop(&mut g.image, images[i], &ui[i].0, ui[i].1, &gu, weight);
            backprop(&mut g.text, texts[i], &ut[i].0, ut[i].1, &gt, weight);
        }
    }
    Ok(res.value)
}

/// MCQ loss over `cos(image, option) / temperature` logits.
fn mcq_step(
    model: &TwoTowerModel,
    images: &[&[f64]],
    options: &[&[Vec<f64>]],
    correct: &[usize],
    cfg: &LossConfig,
    weight: f64,
    g: &mut Grads,
) -> Result<f64, ToyError> {
    let ui: Vec<(Vec<f64>, f64)> = images.iter().map(|x| project(&model.image_map, x)).collect();
    let uo: Vec<Vec<(Vec<f64>, f64)>> =
        options.iter().map(|opts| opts.iter().map(|x| project(&model.text_map, x)).collect()).collect();
    let c = options[0].len();
    let logits = Matrix::from_fn(images.len(), c, |i, j| dot(&ui[i].0, &uo[i][j].0) / cfg.temperature);
    let res = mcq_loss(&logits, correct)?;
    if weight != 0.0 {
        let d = model.dim();
        for i in 0..images.len() {
            let mut gu = alloc::vec![0.0; d];
            for j in 0..c {
                let gs = res.grad[(i, j)] / cfg.temperature;
                for r in 0..d {
                    gu[r] += gs * uo[i][j].0[r];
                }
                let go: Vec<f64> = ui[i].0.iter().map(|x| gs * x).collect();
                backprop(&mut g.text, &options[i][j], &uo[i][j].0, uo[i][j].1, &go, weight);
            }
            backprop(&mut g.image, images[i], &ui[i].0, ui[i].1, &gu, weight);
        }
    }
    Ok(res.value)
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    /// Weighted objective on the fixed probe batch.
    pub loss: f64,
    pub clip: f64,
    pub mcq: f64,
}

/// Plain gradient descent on both maps. The loss is recorded on a fixed probe
/// batch of training scenes every `log_every` steps and after the last step.
pub fn train(model: &TwoTowerModel, world: &ToyWorld, cfg: &ToyConfig) -> Result<(TwoTowerModel, Vec<LogRow>), ToyError> {
    cfg.validate()?;
    let mut model = model.clone();
    let alpha = cfg.effective_alpha();
    let loss_cfg = LossConfig::new(alpha, cfg.temperature)?;
    let use_mcq = cfg.condition == Condition::Negfull;
    let mut rng = rng_for(cfg.seed, &format!("train:{}", cfg.condition.as_str()));
    let probe: Vec<usize> = world.train[..cfg.batch].to_vec();
    let mut log = Vec::new();

    let caption_of = |s: usize, pick: usize| -> &[f64] {
        match cfg.condition {
            Condition::AffirmOnly => &world.original[s],
            _ => &world.negcap_features[s][pick],
        }
    };

    let evaluate = |model: &TwoTowerModel, batch: &[usize], picks: &[usize], g: Option<&mut Grads>| -> Result<(f64, f64, f64), ToyError> {
        let mut scratch;
        let (g, weighted) = match g {
            Some(g) => (g, true),
            None => {
                scratch = Grads { image: Matrix::zeros(0, 0), text: Matrix::zeros(0, 0) };
                (&mut scratch, false)
            }
        };
        let images: Vec<&[f64]> = batch.iter().map(|&s| world.images[s].as_slice()).collect();
        let texts: Vec<&[f64]> = batch.iter().zip(picks).map(|(&s, &p)| caption_of(s, p)).collect();
        let clip = if alpha > 0.0 {
            clip_step(model, &images, &texts, &loss_cfg, if weighted { alpha } else { 0.0 }, g)?
        } else {
            0.0
        };
        let mcq = if use_mcq && alpha < 1.0 {
            let opts: Vec<&[Vec<f64>]> = batch.iter().map(|&s| world.negmcq_features[s].as_slice()).collect();
            let correct: Vec<usize> = batch.iter().map(|&s| world.negmcq[s].correct_index).collect();
            mcq_step(model, &images, &opts, &correct, &loss_cfg, if weighted { 1.0 - alpha } else { 0.0 }, g)?
        } else {
            0.0
        };
        let total = if use_mcq { alpha * clip + (1.0 - alpha) * mcq } else { clip };
        Ok((total, clip, mcq))
    };

    let probe_picks: Vec<usize> = probe.iter().map(|s| s % 3).collect();
    let record = |model: &TwoTowerModel, step: usize, log: &mut Vec<LogRow>| -> Result<(), ToyError> {
        let (loss, clip, mcq) = evaluate(model, &probe, &probe_picks, None).map_err(|e| diverged(e, step))?;
        if !loss.is_finite() {
            return Err(ToyError::DivergedLoss(step));
        }
        log.push(LogRow { step, loss, clip, mcq });
        Ok(())
    };

    // Batches hold whole hard-negative pairs so each image meets its partner.
    let mut order: Vec<usize> = world.train.iter().copied().filter(|s| s % 2 == 0).collect();
    let pairs_per_batch = cfg.batch / 2;
    let mut cursor = order.len();
    let mut batch = Vec::with_capacity(cfg.batch);
    for step in 0..cfg.steps {
        if step % cfg.log_every == 0 {
            record(&model, step, &mut log)?;
        }
        if cursor + pairs_per_batch > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        batch.clear();
        for &p in &order[cursor..cursor + pairs_per_batch] {
            batch.extend([p, p + 1]);
        }
        cursor += pairs_per_batch;
        let batch = batch.as_slice();
        let picks: Vec<usize> = batch.iter().map(|_| rng.random_range(0..3)).collect();
        let mut g = Grads {
            image: Matrix::zeros(model.image_map.rows(), model.image_map.cols()),
            text: Matrix::zeros(model.text_map.rows(), model.text_map.cols()),
        };
        let (loss, _, _) = evaluate(&model, batch, &picks, Some(&mut g)).map_err(|e| diverged(e, step))?;
        if !loss.is_finite() || !g.image.is_finite() || !g.text.is_finite() {
            return Err(ToyError::DivergedLoss(step));
        }
        model.image_map.add_scaled(&g.image, -cfg.lr);
        model.text_map.add_scaled(&g.text, -cfg.lr);
    }
    record(&model, cfg.steps, &mut log)?;
    Ok((model, log))
}

fn diverged(e: ToyError, step: usize) -> ToyError {
    match e {
        ToyError::Objective(ObjectiveError::NonFinite) => ToyError::DivergedLoss(step),
        e => e,
    }
}

/// Held-out scores of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyMetrics {
    pub recall_at_5: f64,
    pub mcq: McqBreakdown,
    /// Share of held-out pairs where the target's affirmation scores higher on
    /// the image that contains it.
    pub hardneg_discrimination: f64,
}

/// Retrieval-Neg queries (one negated caption per held-out scene, target its
/// own image) and one fresh MCQ per held-out scene.
pub fn evaluate(model: &TwoTowerModel, world: &ToyWorld, seed: u64) -> Result<ToyMetrics, ToyError> {
    let synth = Synthesizer::default();
    let held = &world.held_out;
    let images: Vec<Vec<f64>> = held.iter().map(|&s| model.embed_image(&world.images[s])).collect();

    let mut query_ids = Vec::new();
    let mut queries = Vec::new();
    let mut truth = RetrievalGroundTruth::new();
    for &s in held {
        let scene = &world.scenes[s];
        let mut rng = rng_for(seed, &format!("query:{}", scene.id));
        for q in synth.make_retrieval_queries(scene, &world.negatives[s], &mut rng, None)? {
            queries.push(model.embed_text(&world.featurize(&q.text)?));
            truth.entry(q.id.clone()).or_default().insert(scene.id.clone());
            query_ids.push(q.id);
        }
    }
    let candidate_ids: Vec<String> = held.iter().map(|&s| world.scenes[s].id.clone()).collect();
    let scores = Matrix::from_fn(queries.len(), images.len(), |q, c| dot(&queries[q], &images[c]));
    let sim = SimilarityMatrix::new(query_ids, candidate_ids, scores);
    let recall = recall_at_k(&sim, &truth, 5).map_err(|_| ToyError::Config("retrieval set is empty"))?;

    let mut items = Vec::with_capacity(held.len());
    let mut preds = Vec::with_capacity(held.len());
    for (k, &s) in held.iter().enumerate() {
        let scene = &world.scenes[s];
        let item = synth.make_mcq(scene, &world.negatives[s], &mut rng_for(seed, &format!("mcq:{}", scene.id)), None)?;
        let scores: Vec<f64> = item
            .options
            .iter()
            .map(|o| Ok(dot(&images[k], &model.embed_text(&world.featurize(o)?))))
            .collect::<Result<_, ToyError>>()?;
        preds.push(answer_from_scores(&item, &scores));
        items.push(item);
    }

    let (mut wins, mut total) = (0usize, 0usize);
    for (i, p) in world.pairs.iter().enumerate() {
        if !is_held_out(&p.id) {
            continue;
        }
        let text = model.embed_text(&world.featurize(&synth.catalog().mcq.affirmation[0].replace("{A}", p.target.as_str()))?);
        let present = dot(&model.embed_image(&world.images[2 * i]), &text);
        let absent = dot(&model.embed_image(&world.images[2 * i + 1]), &text);
        wins += usize::from(present > absent);
        total += 1;
    }

    Ok(ToyMetrics {
        recall_at_5: recall,
        mcq: breakdown_by_template(&preds, &items),
        hardneg_discrimination: wins as f64 / total as f64,
    })
}

/// Generate, initialize, train and evaluate one configuration.
pub fn run_experiment(cfg: &ToyConfig) -> Result<(TwoTowerModel, Vec<LogRow>, ToyMetrics), ToyError> {
    let world = ToyWorld::generate(cfg)?;
    let init = TwoTowerModel::pretrained(&world.vocab, cfg.dim, cfg.seed);
    let (model, log) = train(&init, &world, cfg)?;
    let metrics = evaluate(&model, &world, cfg.seed)?;
    Ok((model, log, metrics))
}

/// Median over seeds for one alpha.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub recall_at_5: f64,
    pub mcq_accuracy: f64,
    pub seeds: usize,
}

/// Train `negfull` at every alpha for every seed and take medians.
pub fn run_alpha_sweep(base: &ToyConfig, alphas: &[f64], seeds: &[u64]) -> Result<Vec<SweepRow>, ToyError> {
    if seeds.is_empty() {
        return Err(ToyError::Config("at least one seed is required"));
    }
    alphas
        .iter()
        .map(|&alpha| {
            let mut recall = Vec::new();
            let mut mcq = Vec::new();
            for &seed in seeds {
                let cfg = ToyConfig { alpha, seed, condition: Condition::Negfull, ..base.clone() };
                let (_, _, m) = run_experiment(&cfg)?;
                recall.push(m.recall_at_5);
                mcq.push(m.mcq.accuracy.value);
            }
            Ok(SweepRow { alpha, recall_at_5: median(&mut recall), mcq_accuracy: median(&mut mcq), seeds: seeds.len() })
        })
        .collect()
}

/// Median; the mean of the two middle values for even counts.
pub fn median(xs: &mut [f64]) -> f64 {
    assert!(!xs.is_empty());
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}
