//! Command-line entry point.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use negsuite_core::catalog::TemplateCatalog;
use negsuite_core::cooccur::{build_cooccurrence, propose_negatives, CooccurrenceMatrix, Verifier};
use negsuite_core::diagnostics::{build_template_battery, diagnose_battery, BatteryCaption, BatteryInput};
use negsuite_core::embedding::{cosine_similarity_matrix, normalize_embeddings};
use negsuite_core::eval::{answer_mcqs, binary_accuracy, breakdown_by_template, option_id, recall_at_k, EvalReport, Rate};
use negsuite_core::matrix::cosine;
use negsuite_core::seed::rng_for;
use negsuite_core::synthesis::{label_binary, BinaryMode, Paraphraser, Synthesizer};
use negsuite_core::toyworld::{
    featurize_text, run_alpha_sweep, run_experiment, Condition, TextMode, ToyConfig, ToyVocabulary, FUNCTION_TOKENS,
};
use negsuite_core::types::{Concept, McqItem, SceneRecord};

use crate::config::{env_seed, parse_toy_config, resolve_seed, RunConfig};
use crate::error::{Error, Result};
use crate::formats::{self, Provenance};
use crate::hooks::{self, HookSpec};

#[derive(Debug, Parser)]
#[command(name = "negsuite", version, about = "Negation benchmarks, training objectives and diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count concept co-occurrence over a scene file.
    BuildCooccur(BuildCooccurArgs),
    /// Generate negated captions, MCQ items, training records or binary tasks.
    Synthesize(SynthesizeArgs),
    /// Score retrieval and multiple-choice items from precomputed embeddings.
    Evaluate(EvaluateArgs),
    /// Train the toy two-tower model.
    TrainToy(TrainToyArgs),
    /// Train the toy model over a grid of alpha values and seeds.
    SweepAlpha(SweepAlphaArgs),
    /// Build the template battery and project its embeddings.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// Global seed; falls back to the config file, then NEGSUITE_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BuildCooccurArgs {
    /// Scene records, one JSON object per line.
    pub scenes: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("kind").required(true).args(["mcq", "captions", "negcap", "binary"])))]
pub struct SynthesizeArgs {
    pub scenes: PathBuf,
    /// One four-option MCQ item per scene.
    #[arg(long)]
    pub mcq: bool,
    /// Negated retrieval queries, one per scene caption.
    #[arg(long)]
    pub captions: bool,
    /// Three negation-enriched training captions per scene.
    #[arg(long)]
    pub negcap: bool,
    /// Two-option presence tasks per scene concept.
    #[arg(long)]
    pub binary: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Negatives proposed per scene that lists none.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// `identity` or `command:<argv>`.
    #[arg(long, default_value = "identity")]
    pub paraphraser: HookSpec,
    /// `identity` or `command:<argv>`.
    #[arg(long, default_value = "identity")]
    pub verifier: HookSpec,
    /// Drop proposed negatives the verifier reports as unknown.
    #[arg(long)]
    pub strict: bool,
    /// Template catalog JSON replacing the built-in one.
    #[arg(long)]
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("task").required(true).multiple(true).args(["items", "truth"])))]
pub struct EvaluateArgs {
    /// Image (or video) embedding table; ids are scene ids.
    #[arg(long)]
    pub images: PathBuf,
    /// Text embedding table: query ids and MCQ option ids `<item>/<j>`.
    #[arg(long)]
    pub texts: PathBuf,
    /// MCQ or binary items.
    #[arg(long)]
    pub items: Option<PathBuf>,
    /// Retrieval ground truth, `{"query", "relevant"}` per line.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Cutoffs for recall@k.
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    pub k: Vec<usize>,
    /// Report JSON; a CSV with the same stem is written beside it.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ConditionArg {
    AffirmOnly,
    Negcap,
    Negfull,
}

impl From<ConditionArg> for Condition {
    fn from(c: ConditionArg) -> Self {
        match c {
            ConditionArg::AffirmOnly => Condition::AffirmOnly,
            ConditionArg::Negcap => Condition::Negcap,
            ConditionArg::Negfull => Condition::Negfull,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Scoped,
    Bag,
}

impl From<ModeArg> for TextMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Scoped => TextMode::Scoped,
            ModeArg::Bag => TextMode::Bag,
        }
    }
}

#[derive(Debug, Args)]
pub struct ToyArgs {
    /// TOML experiment config; missing keys take their defaults.
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum)]
    pub condition: Option<ConditionArg>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
}

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    #[command(flatten)]
    pub toy: ToyArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepAlphaArgs {
    #[command(flatten)]
    pub toy: ToyArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,0.9,0.99,1")]
    pub alphas: Vec<f64>,
    /// Seeds to take medians over; defaults to the resolved seed and the next two.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("inputs").required(true).multiple(true).args(["objects", "pairs"])))]
pub struct DiagnoseArgs {
    /// Objects for the single-object families.
    #[arg(long, value_delimiter = ',')]
    pub objects: Vec<String>,
    /// Object pairs `a:b` for all five families.
    #[arg(long, value_delimiter = ',')]
    pub pairs: Vec<String>,
    /// Embeddings of the battery captions, keyed by caption id.
    #[arg(long, conflicts_with = "toy_model")]
    pub embeddings: Option<PathBuf>,
    /// Directory written by train-toy; embeds the battery with its text tower.
    #[arg(long)]
    pub toy_model: Option<PathBuf>,
    /// Featurizer for --toy-model.
    #[arg(long, value_enum, default_value = "scoped")]
    pub mode: ModeArg,
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
}

pub fn run(cli: Cli) -> Result<()> {
    let env = env_seed();
    let env = env.as_deref();
    match cli.command {
        Command::BuildCooccur(a) => build_cooccur(a, env),
        Command::Synthesize(a) => synthesize(a, env),
        Command::Evaluate(a) => evaluate(a, env),
        Command::TrainToy(a) => train_toy(a, env),
        Command::SweepAlpha(a) => sweep_alpha(a, env),
        Command::Diagnose(a) => diagnose(a, env),
    }
}

fn build_cooccur(a: BuildCooccurArgs, env: Option<&str>) -> Result<()> {
    let seed = resolve_seed(a.seed.seed, None, env)?;
    let scenes = formats::read_scenes(&a.scenes)?;
    let m = build_cooccurrence(&scenes).map_err(|e| Error::Input(e.to_string()))?;
    let prov = Provenance::new(Some(seed));
    formats::write_atomic(&a.out, formats::render_cooccurrence(&m, &prov).as_bytes())?;
    RunConfig::new("build-cooccur", seed, &a.out).input(&a.scenes).write_beside(&a.out)
}

fn load_catalog(path: Option<&Path>) -> Result<TemplateCatalog> {
    match path {
        None => Ok(TemplateCatalog::builtin()),
        Some(p) => TemplateCatalog::parse(&formats::read_text(p)?).map_err(|e| Error::format(p, 0, e.to_string())),
    }
}

/// Listed negatives first, then proposals from the co-occurrence matrix when a scene lists none.
fn scene_negatives(
    scene: &SceneRecord,
    cooc: &CooccurrenceMatrix,
    k: usize,
    verifier: Option<&mut dyn Verifier>,
    strict: bool,
) -> Vec<Concept> {
    if scene.negative_candidates.is_empty() {
        propose_negatives(scene, cooc, k, verifier, strict)
    } else {
        scene.negative_candidates.iter().cloned().collect()
    }
}

fn synthesize(a: SynthesizeArgs, env: Option<&str>) -> Result<()> {
    let seed = resolve_seed(a.seed.seed, None, env)?;
    let scenes = formats::read_scenes(&a.scenes)?;
    let synth = Synthesizer::new(load_catalog(a.templates.as_deref())?);
    let cooc = build_cooccurrence(&scenes).map_err(|e| Error::Input(e.to_string()))?;
    let mut para = hooks::paraphraser(&a.paraphraser)?;
    let use_para = matches!(a.paraphraser, HookSpec::Command(_));
    let mut verifier = hooks::verifier(&a.verifier)?;
    let prov = Provenance::new(Some(seed));

    let mut negatives = Vec::with_capacity(scenes.len());
    for s in &scenes {
        let v = verifier.as_mut().map(|v| v as &mut dyn Verifier);
        negatives.push(scene_negatives(s, &cooc, a.k, v, a.strict));
    }
    if let Some(e) = verifier.as_ref().and_then(|v| v.last_error.as_ref()) {
        eprintln!("negsuite: verifier: {e}");
    }

    let (kind, body) = if a.mcq {
        let mut items = Vec::new();
        for (s, negs) in scenes.iter().zip(&negatives) {
            let mut rng = rng_for(seed, &s.id);
            items.push(synth.make_mcq(s, negs, &mut rng, hook(&mut para, use_para))?);
        }
        ("mcq", formats::render_records("mcq", &items, &prov))
    } else if a.captions {
        let mut recs = Vec::new();
        for (s, negs) in scenes.iter().zip(&negatives) {
            let mut rng = rng_for(seed, &s.id);
            recs.extend(synth.make_retrieval_queries(s, negs, &mut rng, hook(&mut para, use_para))?);
        }
        ("captions", formats::render_records("captions", &recs, &prov))
    } else if a.negcap {
        let mut recs = Vec::new();
        for (s, negs) in scenes.iter().zip(&negatives) {
            recs.extend(synth.make_negcap_records(s, negs, hook(&mut para, use_para))?);
        }
        ("negcap", formats::render_records("negcap", &recs, &prov))
    } else {
        let mut items = Vec::new();
        for (s, negs) in scenes.iter().zip(&negatives) {
            items.extend(binary_items(&synth, s, negs)?);
        }
        ("binary", formats::render_records("binary", &items, &prov))
    };
    formats::write_atomic(&a.out, body.as_bytes())?;
    RunConfig::new("synthesize", seed, &a.out)
        .input(&a.scenes)
        .option("kind", kind)
        .option("k", a.k)
        .option("paraphraser", hook_name(&a.paraphraser))
        .option("verifier", hook_name(&a.verifier))
        .option("strict", a.strict)
        .option("templates", a.templates.as_ref().map_or("builtin".into(), |p| p.display().to_string()))
        .write_beside(&a.out)
}

fn hook(para: &mut Box<dyn Paraphraser>, on: bool) -> Option<&mut dyn Paraphraser> {
    if on {
        Some(para.as_mut())
    } else {
        None
    }
}

fn hook_name(h: &HookSpec) -> String {
    match h {
        HookSpec::Identity => "identity".into(),
        HookSpec::Command(argv) => format!("command:{}", shlex::try_join(argv.iter().map(String::as_str)).unwrap_or_default()),
    }
}

/// For every positive and negative concept a negation-mode item labelled by
/// presence, and for every positive an affirmation control against the first negative.
fn binary_items(synth: &Synthesizer, scene: &SceneRecord, negatives: &[Concept]) -> Result<Vec<McqItem>> {
    let concepts: BTreeSet<&Concept> = scene.positives.iter().chain(negatives).collect();
    let mut out = Vec::new();
    for c in concepts {
        let mut item = synth.make_binary_task(c, BinaryMode::Negation, None)?;
        label_binary(&mut item, scene.positives.contains(c));
        out.push(item);
    }
    if let Some(d) = negatives.first() {
        for c in &scene.positives {
            out.push(synth.make_binary_task(c, BinaryMode::AffirmationControl, Some(d))?);
        }
    }
    for item in &mut out {
        item.id = format!("{}:{}", scene.id, item.id);
        item.scene_id = scene.id.clone();
    }
    Ok(out)
}

fn evaluate(a: EvaluateArgs, env: Option<&str>) -> Result<()> {
    let seed = resolve_seed(a.seed.seed, None, env)?;
    if a.k.contains(&0) {
        return Err(Error::Input("--k values must be at least 1".into()));
    }
    let images = normalize_embeddings(&formats::read_embedding_table(&a.images)?)?;
    let texts = normalize_embeddings(&formats::read_embedding_table(&a.texts)?)?;
    let mut report = EvalReport::default();
    let mut run = RunConfig::new("evaluate", seed, &a.out).input(&a.images).input(&a.texts);

    if let Some(path) = &a.truth {
        let truth = formats::parse_truth(&formats::read_text(path)?, path)?;
        let sim = cosine_similarity_matrix(&texts, &images)?;
        for &k in &a.k {
            let value = recall_at_k(&sim, &truth, k)?;
            report.recall_at_k.insert(k, Rate { value, count: truth.len() });
        }
        run = run.input(path);
    }
    if let Some(path) = &a.items {
        let rows: Vec<(usize, McqItem)> = formats::parse_records(&formats::read_text(path)?, path)?;
        for (n, item) in &rows {
            item.validate().map_err(|e| Error::format(path, *n, e.to_string()))?;
        }
        let items: Vec<McqItem> = rows.into_iter().map(|(_, i)| i).collect();
        let (binary, mcq): (Vec<McqItem>, Vec<McqItem>) = items.into_iter().partition(|i| i.num_options() == 2);
        if !mcq.is_empty() {
            let preds = answer_mcqs(&images, &texts, &mcq)?;
            report.mcq = Some(breakdown_by_template(&preds, &mcq));
        }
        if !binary.is_empty() {
            let mut scores = Vec::with_capacity(binary.len());
            for item in &binary {
                let img = images.get(&item.scene_id).ok_or_else(|| Error::Contract(format!("missing embedding for {:?}", item.scene_id)))?;
                let opt = |j| {
                    let id = option_id(&item.id, j);
                    texts.get(&id).map(|t| cosine(img, t)).ok_or_else(|| Error::Contract(format!("missing embedding for {id:?}")))
                };
                scores.push([opt(0)?, opt(1)?]);
            }
            let labels: Vec<usize> = binary.iter().map(|i| i.correct_index).collect();
            report.binary_accuracy = Some(Rate { value: binary_accuracy(&scores, &labels), count: binary.len() });
        }
        run = run.input(path);
    }

    let prov = Provenance::new(Some(seed));
    formats::write_atomic(&a.out, formats::render_document(&report, &prov).as_bytes())?;
    let csv = a.out.with_extension("csv");
    formats::write_atomic(&csv, formats::render_report_csv(&report, &prov).as_bytes())?;
    run.option("k", a.k.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")).write_beside(&a.out)
}

fn toy_config(a: &ToyArgs, env: Option<&str>) -> Result<ToyConfig> {
    let (mut cfg, file_seed) = match &a.config {
        Some(p) => {
            let text = formats::read_text(p)?;
            let has_seed = text.parse::<toml::Table>().map(|t| t.contains_key("seed")).unwrap_or(false);
            let cfg = parse_toy_config(&text, p)?;
            let seed = has_seed.then_some(cfg.seed);
            (cfg, seed)
        }
        None => (ToyConfig::default(), None),
    };
    cfg.seed = match (a.seed.seed, file_seed, env) {
        (None, None, None) => cfg.seed,
        (flag, file, env) => resolve_seed(flag, file, env)?,
    };
    if let Some(alpha) = a.alpha {
        cfg.alpha = alpha;
    }
    if let Some(c) = a.condition {
        cfg.condition = c.into();
    }
    if let Some(m) = a.mode {
        cfg.mode = m.into();
    }
    cfg.validate().map_err(|e| Error::Input(e.to_string()))?;
    Ok(cfg)
}

fn train_toy(a: TrainToyArgs, env: Option<&str>) -> Result<()> {
    let cfg = toy_config(&a.toy, env)?;
    let (model, log, metrics) = run_experiment(&cfg)?;
    let prov = Provenance::new(Some(cfg.seed));
    formats::write_model(&a.out, &model, &prov)?;
    formats::write_atomic(&a.out.join("training_log.csv"), formats::render_training_log(&log, &prov).as_bytes())?;
    let rows = formats::toy_metric_rows(&metrics);
    formats::write_atomic(&a.out.join("metrics.csv"), formats::render_metric_csv(&rows, &prov).as_bytes())?;
    formats::write_atomic(&a.out.join("metrics.json"), formats::render_document(&metrics, &prov).as_bytes())?;
    let mut run = RunConfig::new("train-toy", cfg.seed, &a.out);
    if let Some(p) = &a.toy.config {
        run = run.input(p);
    }
    run.toy = Some(cfg);
    run.write_to_dir(&a.out)
}

fn sweep_alpha(a: SweepAlphaArgs, env: Option<&str>) -> Result<()> {
    let cfg = toy_config(&a.toy, env)?;
    let seeds = a.seeds.clone().unwrap_or_else(|| (0..3).map(|i| cfg.seed.wrapping_add(i)).collect());
    if a.alphas.is_empty() || a.alphas.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::Input("--alphas must be values in [0, 1]".into()));
    }
    let rows = run_alpha_sweep(&cfg, &a.alphas, &seeds)?;
    let prov = Provenance::new(Some(cfg.seed));
    formats::write_atomic(&a.out, formats::render_sweep_csv(&rows, &prov).as_bytes())?;
    let mut run = RunConfig::new("sweep-alpha", cfg.seed, &a.out)
        .option("alphas", a.alphas.iter().map(ToString::to_string).collect::<Vec<_>>().join(","))
        .option("seeds", seeds.iter().map(ToString::to_string).collect::<Vec<_>>().join(","));
    if let Some(p) = &a.toy.config {
        run = run.input(p);
    }
    run.toy = Some(cfg);
    run.write_beside(&a.out)
}

fn concept(raw: &str) -> Result<Concept> {
    Concept::new(raw).map_err(|e| Error::Input(format!("{raw:?}: {e}")))
}

fn battery_inputs(a: &DiagnoseArgs) -> Result<Vec<BatteryInput>> {
    let mut inputs = Vec::new();
    for o in &a.objects {
        inputs.push(BatteryInput::Object(concept(o)?));
    }
    for p in &a.pairs {
        let (x, y) = p.split_once(':').ok_or_else(|| Error::Input(format!("pair {p:?} is not of the form a:b")))?;
        let (x, y) = (concept(x)?, concept(y)?);
        if x == y {
            return Err(Error::Input(format!("pair {p:?} repeats one object")));
        }
        inputs.push(BatteryInput::Pair(x, y));
    }
    Ok(inputs)
}

fn diagnose(a: DiagnoseArgs, env: Option<&str>) -> Result<()> {
    let seed = resolve_seed(a.seed.seed, None, env)?;
    let catalog = load_catalog(a.templates.as_deref())?;
    let battery = build_template_battery(&catalog, &battery_inputs(&a)?);
    let prov = Provenance::new(Some(seed));
    formats::write_atomic(&a.out.join("battery.jsonl"), formats::render_records("battery", &battery, &prov).as_bytes())?;
    let mut run = RunConfig::new("diagnose", seed, &a.out)
        .option("objects", a.objects.join(","))
        .option("pairs", a.pairs.join(","));

    let embeddings = if let Some(path) = &a.embeddings {
        run = run.input(path);
        let table = formats::read_embedding_table(path)?;
        Some(
            battery
                .iter()
                .map(|c| table.get(&c.id()).map(<[f64]>::to_vec).ok_or_else(|| Error::Input(format!("{}: no embedding for {:?}", path.display(), c.id()))))
                .collect::<Result<Vec<_>>>()?,
        )
    } else if let Some(dir) = &a.toy_model {
        run = run.input(dir).option("mode", format!("{:?}", a.mode).to_lowercase());
        Some(toy_embeddings(dir, &battery, a.mode.into())?)
    } else {
        None
    };

    // Without embeddings only the battery is written, for an external encoder to embed.
    if let Some(embeddings) = embeddings {
        let report = diagnose_battery(&battery, &embeddings)?;
        formats::write_atomic(&a.out.join("report.json"), formats::render_document(&report, &prov).as_bytes())?;
        formats::write_atomic(&a.out.join("scatter.csv"), formats::render_scatter_csv(&report.scatter, &prov).as_bytes())?;
        formats::write_atomic(&a.out.join("scatter.svg"), formats::render_scatter_svg(&report.scatter, &prov).as_bytes())?;
    }
    run.write_to_dir(&a.out)
}

fn toy_embeddings(dir: &Path, battery: &[BatteryCaption], mode: TextMode) -> Result<Vec<Vec<f64>>> {
    let model = formats::read_model(dir)?;
    let cols = model.text_map.cols();
    let v = cols.checked_sub(FUNCTION_TOKENS.len()).filter(|r| r % 2 == 0).map(|r| r / 2);
    let vocab = v
        .and_then(|v| ToyVocabulary::with_objects(v).ok())
        .ok_or_else(|| Error::Input(format!("{}: text tower width {cols} matches no toy vocabulary", dir.display())))?;
    battery
        .iter()
        .map(|c| {
            let f = featurize_text(&c.text, &vocab, mode).map_err(|e| Error::Contract(format!("{:?}: {e}", c.text)))?;
            Ok(model.embed_text(&f))
        })
        .collect()
}
