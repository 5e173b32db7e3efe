//! Template batteries, PCA projections and collapse scores over caption embeddings.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::catalog::{render, TemplateCatalog};
use crate::eval::{breakdown_by_template, McqPrediction, Rate};
use crate::matrix::{cosine, dot, norm};
use crate::types::{Concept, McqItem, TemplateKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiagnosticsError {
    #[error("need at least {0} inputs")]
    TooFew(usize),
    #[error("all points are identical")]
    DegenerateData,
    #[error("{requested} components requested but at most {max} are available")]
    Components { requested: usize, max: usize },
    #[error("vector of dimension {found} where {expected} was expected")]
    Dimension { expected: usize, found: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatteryFamily {
    AffirmSingle,
    NegSingle,
    AffirmTwo,
    Hybrid,
    DoubleNeg,
}

impl BatteryFamily {
    pub const ALL: [BatteryFamily; 5] = [
        BatteryFamily::AffirmSingle,
        BatteryFamily::NegSingle,
        BatteryFamily::AffirmTwo,
        BatteryFamily::Hybrid,
        BatteryFamily::DoubleNeg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BatteryFamily::AffirmSingle => "affirm_single",
            BatteryFamily::NegSingle => "neg_single",
            BatteryFamily::AffirmTwo => "affirm_two",
            BatteryFamily::Hybrid => "hybrid",
            BatteryFamily::DoubleNeg => "double_neg",
        }
    }

    pub fn is_single(self) -> bool {
        matches!(self, BatteryFamily::AffirmSingle | BatteryFamily::NegSingle)
    }

    pub fn patterns(self, catalog: &TemplateCatalog) -> &[String] {
        let b = &catalog.battery;
        match self {
            BatteryFamily::AffirmSingle => &b.affirm_single,
            BatteryFamily::NegSingle => &b.neg_single,
            BatteryFamily::AffirmTwo => &b.affirm_two,
            BatteryFamily::Hybrid => &b.hybrid,
            BatteryFamily::DoubleNeg => &b.double_neg,
        }
    }
}

/// What to render: a single object gets the two single-object families, an
/// ordered pair gets all five with its first member filling the single ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatteryInput {
    Object(Concept),
    Pair(Concept, Concept),
}

impl BatteryInput {
    fn first(&self) -> &Concept {
        match self {
            BatteryInput::Object(a) | BatteryInput::Pair(a, _) => a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatteryCaption {
    pub family: BatteryFamily,
    pub template_index: usize,
    pub input_index: usize,
    /// `A`, or `A` and `B` for two-object families.
    pub objects: Vec<Concept>,
    pub text: String,
}

impl BatteryCaption {
    /// Stable id, `{family}/{template}/{input}`.
    pub fn id(&self) -> String {
        alloc::format!("{}/{}/{}", self.family.as_str(), self.template_index, self.input_index)
    }

    /// Object label used in scatter output: `A` or `A+B`.
    pub fn object_label(&self) -> String {
        let names: Vec<&str> = self.objects.iter().map(Concept::as_str).collect();
        names.join("+")
    }
}

/// Captions ordered by family, then template index, then input.
pub fn build_template_battery(catalog: &TemplateCatalog, inputs: &[BatteryInput]) -> Vec<BatteryCaption> {
    let mut out = Vec::new();
    for family in BatteryFamily::ALL {
        for (t, pattern) in family.patterns(catalog).iter().enumerate() {
            for (i, input) in inputs.iter().enumerate() {
                let objects = match (family.is_single(), input) {
                    (true, _) => alloc::vec![input.first().clone()],
                    (false, BatteryInput::Pair(a, b)) => alloc::vec![a.clone(), b.clone()],
                    (false, BatteryInput::Object(_)) => continue,
                };
                let a = objects[0].as_str();
                let b = objects.get(1).map_or("", Concept::as_str);
                out.push(BatteryCaption {
                    family,
                    template_index: t,
                    input_index: i,
                    text: render(pattern, &[("A", a), ("B", b)]),
                    objects,
                });
            }
        }
    }
    out
}

/// Index pairs `(affirmative, negated)` of single-object captions sharing a
/// template index and input.
pub fn matched_single_pairs(battery: &[BatteryCaption]) -> Vec<(usize, usize)> {
    let negated: BTreeMap<(usize, usize), usize> = battery
        .iter()
        .enumerate()
        .filter(|(_, c)| c.family == BatteryFamily::NegSingle)
        .map(|(k, c)| ((c.template_index, c.input_index), k))
        .collect();
    battery
        .iter()
        .enumerate()
        .filter(|(_, c)| c.family == BatteryFamily::AffirmSingle)
        .filter_map(|(k, c)| negated.get(&(c.template_index, c.input_index)).map(|&n| (k, n)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    pub mean: Vec<f64>,
    /// Unit vectors, by descending eigenvalue.
    pub components: Vec<Vec<f64>>,
    /// Sample-covariance eigenvalues of the kept components.
    pub variances: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    /// One row per input point.
    pub coordinates: Vec<Vec<f64>>,
}

impl PcaResult {
    /// Map coordinates back to the input space.
    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (c, comp) in coords.iter().zip(&self.components) {
            x.iter_mut().zip(comp).for_each(|(xi, ci)| *xi += c * ci);
        }
        x
    }
}

/// Principal components of the mean-centred sample covariance. Each
/// component's largest-magnitude entry (the first, on ties) is made positive.
pub fn pca_project(points: &[Vec<f64>], n_components: usize) -> Result<PcaResult, DiagnosticsError> {
    let n = points.len();
    if n < 2 {
        return Err(DiagnosticsError::TooFew(2));
    }
    let d = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(DiagnosticsError::Dimension { expected: d, found: p.len() });
    }
    let max = (n - 1).min(d);
    if n_components == 0 || n_components > max {
        return Err(DiagnosticsError::Components { requested: n_components, max });
    }
    if points.iter().all(|p| p == &points[0]) {
        return Err(DiagnosticsError::DegenerateData);
    }
    let mut mean = alloc::vec![0.0; d];
    for p in points {
        mean.iter_mut().zip(p).for_each(|(m, x)| *m += x / n as f64);
    }
    let centred: Vec<Vec<f64>> = points.iter().map(|p| p.iter().zip(&mean).map(|(x, m)| x - m).collect()).collect();
    let cov = DMatrix::from_fn(d, d, |i, j| centred.iter().map(|c| c[i] * c[j]).sum::<f64>() / (n - 1) as f64);
    let total: f64 = cov.trace();
    let eig = SymmetricEigen::new(cov);

    let mut oriented: Vec<(f64, usize, Vec<f64>)> = (0..d)
        .map(|k| {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let lead = v.iter().enumerate().fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
            if v[lead] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            (eig.eigenvalues[k].max(0.0), lead, v)
        })
        .collect();
    oriented.sort_by(|a, b| b.0.total_cmp(&a.0));
    // Eigenvalues equal up to rounding are ordered by the position of their leading entry.
    let tol = 1e-10 * oriented[0].0.max(f64::MIN_POSITIVE);
    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        while end < d && oriented[start].0 - oriented[end].0 <= tol {
            end += 1;
        }
        oriented[start..end].sort_by_key(|e| e.1);
        start = end;
    }
    oriented.truncate(n_components);
    let variances: Vec<f64> = oriented.iter().map(|e| e.0).collect();
    let components: Vec<Vec<f64>> = oriented.into_iter().map(|e| e.2).collect();
    let coordinates = centred.iter().map(|c| components.iter().map(|v| dot(c, v)).collect()).collect();
    let explained_variance_ratio = variances.iter().map(|v| v / total).collect();
    Ok(PcaResult { mean, components, variances, explained_variance_ratio, coordinates })
}

fn checked_cosine(a: &[f64], b: &[f64]) -> Result<f64, DiagnosticsError> {
    if a.len() != b.len() {
        return Err(DiagnosticsError::Dimension { expected: a.len(), found: b.len() });
    }
    if norm(a) == 0.0 || norm(b) == 0.0 {
        return Err(DiagnosticsError::ZeroVector);
    }
    Ok(cosine(a, b).clamp(-1.0, 1.0))
}

/// Mean cosine between each affirmative embedding and its negated counterpart.
/// 1.0 means negation leaves the embedding unchanged.
pub fn negation_separation_score(pairs: &[(&[f64], &[f64])]) -> Result<f64, DiagnosticsError> {
    if pairs.is_empty() {
        return Err(DiagnosticsError::TooFew(1));
    }
    let mut sum = 0.0;
    for (a, n) in pairs {
        sum += checked_cosine(a, n)?;
    }
    Ok(sum / pairs.len() as f64)
}

/// Mean cosine over every pair of negated-caption embeddings belonging to
/// different objects. Values near 1.0 mean negated captions collapse together.
pub fn negation_object_collapse_score(by_object: &[Vec<&[f64]>]) -> Result<f64, DiagnosticsError> {
    if by_object.iter().filter(|v| !v.is_empty()).count() < 2 {
        return Err(DiagnosticsError::TooFew(2));
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for (i, a) in by_object.iter().enumerate() {
        for b in &by_object[i + 1..] {
            for u in a {
                for v in b {
                    sum += checked_cosine(u, v)?;
                    count += 1;
                }
            }
        }
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffirmationBiasReport {
    /// Share of errors that picked a false negation; 0 with no errors.
    pub false_negation_selection_rate: Rate,
    pub per_template_accuracy: BTreeMap<TemplateKind, Rate>,
    pub selection_frequency: BTreeMap<TemplateKind, Rate>,
    pub accuracy: Rate,
}

pub fn affirmation_bias_report(predictions: &[McqPrediction], items: &[McqItem]) -> AffirmationBiasReport {
    let b = breakdown_by_template(predictions, items);
    AffirmationBiasReport {
        false_negation_selection_rate: b.false_negation_selection_rate,
        per_template_accuracy: b.per_template,
        selection_frequency: b.selection_frequency,
        accuracy: b.accuracy,
    }
}

/// One point of a two-dimensional projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub x: f64,
    pub y: f64,
    pub family: BatteryFamily,
    pub object: String,
}

/// Scores and the first two principal coordinates of a battery's embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub captions: usize,
    pub negation_separation: f64,
    /// Absent with fewer than two objects.
    pub negation_object_collapse: Option<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub scatter: Vec<ScatterPoint>,
}

/// Unit-normalize `embeddings` (one per battery caption), project onto two
/// principal components and compute both collapse scores.
pub fn diagnose_battery(battery: &[BatteryCaption], embeddings: &[Vec<f64>]) -> Result<DiagnosticsReport, DiagnosticsError> {
    if battery.len() != embeddings.len() {
        return Err(DiagnosticsError::Dimension { expected: battery.len(), found: embeddings.len() });
    }
    let unit: Vec<Vec<f64>> = embeddings
        .iter()
        .map(|e| {
            let n = norm(e);
            if n == 0.0 {
                Err(DiagnosticsError::ZeroVector)
            } else {
                Ok(e.iter().map(|x| x / n).collect())
            }
        })
        .collect::<Result<_, _>>()?;

    let pairs: Vec<(&[f64], &[f64])> =
        matched_single_pairs(battery).into_iter().map(|(a, n)| (unit[a].as_slice(), unit[n].as_slice())).collect();
    let negation_separation = negation_separation_score(&pairs)?;

    let mut by_object: BTreeMap<&Concept, Vec<&[f64]>> = BTreeMap::new();
    for (c, e) in battery.iter().zip(&unit) {
        if c.family == BatteryFamily::NegSingle {
            by_object.entry(&c.objects[0]).or_default().push(e);
        }
    }
    let groups: Vec<Vec<&[f64]>> = by_object.into_values().collect();
    let negation_object_collapse = if groups.len() >= 2 { Some(negation_object_collapse_score(&groups)?) } else { None };

    let dim = unit.first().map_or(0, Vec::len);
    let k = 2.min(unit.len().saturating_sub(1)).min(dim);
    let pca = pca_project(&unit, k)?;
    let scatter = battery
        .iter()
        .zip(&pca.coordinates)
        .map(|(c, p)| ScatterPoint {
            x: p[0],
            y: p.get(1).copied().unwrap_or(0.0),
            family: c.family,
            object: c.object_label(),
        })
        .collect();
    Ok(DiagnosticsReport {
        captions: battery.len(),
        negation_separation,
        negation_object_collapse,
        explained_variance_ratio: pca.explained_variance_ratio,
        scatter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::answer_from_scores;
    use crate::seed::rng_from_seed;
    use crate::synthesis::Synthesizer;
    use crate::types::SceneRecord;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn c(s: &str) -> Concept {
        Concept::new(s).unwrap()
    }

    #[test]
    fn battery_sizes() {
        let cat = TemplateCatalog::builtin();
        let one = build_template_battery(&cat, &[BatteryInput::Object(c("cat"))]);
        assert_eq!(one.len(), 48);
        let pair = build_template_battery(&cat, &[BatteryInput::Pair(c("cat"), c("dog"))]);
        assert_eq!(pair.len(), 119);
        let counts: Vec<usize> =
            BatteryFamily::ALL.iter().map(|f| pair.iter().filter(|x| x.family == *f).count()).collect();
        assert_eq!(counts, vec![24, 24, 23, 24, 24]);
        assert!(build_template_battery(&cat, &[]).is_empty());
    }

    #[test]
    fn battery_order_and_rendering() {
        let cat = TemplateCatalog::builtin();
        let b = build_template_battery(&cat, &[BatteryInput::Object(c("cat")), BatteryInput::Pair(c("dog"), c("cup"))]);
        assert_eq!(b.len(), 48 + 119);
        assert_eq!(b[0].text, "This image includes cat");
        assert_eq!(b[1].text, "This image includes dog");
        assert_eq!(b[1].id(), "affirm_single/0/1");
        let keys: Vec<(BatteryFamily, usize, usize)> = b.iter().map(|x| (x.family, x.template_index, x.input_index)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        let hybrid = b.iter().find(|x| x.family == BatteryFamily::Hybrid).unwrap();
        assert_eq!(hybrid.object_label(), "dog+cup");
        assert!(hybrid.text.contains("dog") && hybrid.text.contains("cup"));
        assert!(b.iter().all(|x| !x.text.contains('{')));
        assert_eq!(matched_single_pairs(&b).len(), 48);
    }

    #[test]
    fn collinear_points() {
        let pts = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![4.0, 0.0]];
        let r = pca_project(&pts, 1).unwrap();
        assert_eq!(r.components[0], vec![1.0, 0.0]);
        assert!((r.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
        assert_eq!(r.coordinates, vec![vec![-2.0], vec![0.0], vec![2.0]]);
    }

    #[test]
    fn symmetric_axes_tie_by_leading_index() {
        let pts = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        let r = pca_project(&pts, 2).unwrap();
        assert!((r.variances[0] - r.variances[1]).abs() < 1e-12);
        assert_eq!(r.components, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn pca_errors() {
        assert_eq!(pca_project(&[vec![1.0]], 1), Err(DiagnosticsError::TooFew(2)));
        assert_eq!(pca_project(&vec![vec![0.1, 2.0]; 3], 1), Err(DiagnosticsError::DegenerateData));
        assert_eq!(
            pca_project(&[vec![1.0, 2.0], vec![0.0, 2.0]], 2),
            Err(DiagnosticsError::Components { requested: 2, max: 1 })
        );
        assert!(matches!(pca_project(&[vec![1.0, 2.0], vec![0.0]], 1), Err(DiagnosticsError::Dimension { .. })));
    }

    fn cloud(seed: u64, n: usize, d: usize) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
    }

    #[test]
    fn full_rank_reconstruction_is_exact() {
        let pts = cloud(11, 50, 16);
        let r = pca_project(&pts, 16).unwrap();
        let worst = pts
            .iter()
            .zip(&r.coordinates)
            .flat_map(|(p, c)| r.reconstruct(c).into_iter().zip(p).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        assert!(worst < 1e-8, "{worst}");
        assert!((r.explained_variance_ratio.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    /// Largest eigenvector by power iteration on the covariance.
    fn power_iteration(points: &[Vec<f64>]) -> (f64, Vec<f64>) {
        let n = points.len() as f64;
        let d = points[0].len();
        let mean: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n).collect();
        let cov = |v: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; d];
            for p in points {
                let c: Vec<f64> = p.iter().zip(&mean).map(|(x, m)| x - m).collect();
                let s = dot(&c, v) / (n - 1.0);
                out.iter_mut().zip(&c).for_each(|(o, ci)| *o += s * ci);
            }
            out
        };
        let mut v = vec![1.0; d];
        let mut lambda = 0.0;
        for _ in 0..5000 {
            let w = cov(&v);
            lambda = norm(&w);
            v = w.iter().map(|x| x / lambda).collect();
        }
        (lambda, v)
    }

    #[test]
    fn top_component_matches_power_iteration() {
        let mut pts = cloud(5, 40, 6);
        for p in &mut pts {
            p[2] *= 3.0;
        }
        let r = pca_project(&pts, 3).unwrap();
        let (lambda, v) = power_iteration(&pts);
        assert!((r.variances[0] - lambda).abs() < 1e-8);
        assert!((dot(&r.components[0], &v).abs() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn collapse_scores_on_trivial_inputs() {
        let a = [1.0, 0.0, 0.0];
        let b = [0.0, 1.0, 0.0];
        let na = [-1.0, 0.0, 0.0];
        assert_eq!(negation_separation_score(&[(&a, &a), (&b, &b)]).unwrap(), 1.0);
        assert_eq!(negation_separation_score(&[(&a, &na)]).unwrap(), -1.0);
        assert_eq!(negation_separation_score(&[]), Err(DiagnosticsError::TooFew(1)));
        assert_eq!(negation_separation_score(&[(&a, &[0.0, 0.0, 0.0])]), Err(DiagnosticsError::ZeroVector));

        assert_eq!(negation_object_collapse_score(&[vec![&a, &a], vec![&a]]).unwrap(), 1.0);
        let cc = [0.0, 0.0, 1.0];
        assert_eq!(negation_object_collapse_score(&[vec![&a], vec![&b], vec![&cc]]).unwrap(), 0.0);
        assert_eq!(negation_object_collapse_score(&[vec![&a]]), Err(DiagnosticsError::TooFew(2)));
    }

    #[test]
    fn perfect_predictor_has_no_false_negations() {
        let synth = Synthesizer::default();
        let mut items = Vec::new();
        let mut preds = Vec::new();
        for i in 0..50 {
            let scene = SceneRecord::new(alloc::format!("s{i}"), [c("cat"), c("dog")], [c("cup"), c("car")]).unwrap();
            let item = synth.make_mcq(&scene, &[c("cup"), c("car")], &mut rng_from_seed(i), None).unwrap();
            let scores: Vec<f64> = (0..4).map(|j| if j == item.correct_index { 1.0 } else { 0.0 }).collect();
            preds.push(answer_from_scores(&item, &scores));
            items.push(item);
        }
        let r = affirmation_bias_report(&preds, &items);
        assert_eq!(r.accuracy.value, 1.0);
        assert_eq!(r.false_negation_selection_rate.value, 0.0);
        assert_eq!(r.false_negation_selection_rate.count, 0);
    }

    #[test]
    fn report_over_a_two_object_battery() {
        let cat = TemplateCatalog::builtin();
        let battery = build_template_battery(&cat, &[BatteryInput::Object(c("cat")), BatteryInput::Object(c("dog"))]);
        let mut rng = rng_from_seed(2);
        let emb: Vec<Vec<f64>> = battery.iter().map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let r = diagnose_battery(&battery, &emb).unwrap();
        assert_eq!(r.captions, 96);
        assert_eq!(r.scatter.len(), 96);
        assert!(r.negation_object_collapse.is_some());
        assert_eq!(r.explained_variance_ratio.len(), 2);
        assert!(r.explained_variance_ratio[0] >= r.explained_variance_ratio[1]);
        assert_eq!(r.scatter[0].object, "cat");
    }

    fn rotation(seed: u64, d: usize) -> Vec<Vec<f64>> {
        let m = DMatrix::from_vec(d, d, cloud(seed, d, d).concat());
        let q = m.qr().q();
        (0..d).map(|i| q.row(i).iter().copied().collect()).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn components_are_orthonormal_and_ratios_descend(seed in any::<u64>(), n in 3usize..30, d in 2usize..8) {
            let pts = cloud(seed, n, d);
            let k = (n - 1).min(d);
            let r = pca_project(&pts, k).unwrap();
            for i in 0..k {
                for j in 0..k {
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((dot(&r.components[i], &r.components[j]) - want).abs() < 1e-8);
                }
            }
            prop_assert!(r.explained_variance_ratio.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(r.explained_variance_ratio.iter().sum::<f64>() <= 1.0 + 1e-9);
        }

        #[test]
        fn coordinates_survive_a_common_rotation(seed in any::<u64>(), rot in any::<u64>()) {
            let pts = cloud(seed, 30, 5);
            let q = rotation(rot, 5);
            let rotated: Vec<Vec<f64>> = pts.iter().map(|p| q.iter().map(|row| dot(row, p)).collect()).collect();
            let a = pca_project(&pts, 5).unwrap();
            let b = pca_project(&rotated, 5).unwrap();
            for k in 0..5 {
                let same = a.coordinates.iter().zip(&b.coordinates).all(|(x, y)| (x[k] - y[k]).abs() < 1e-8);
                let flipped = a.coordinates.iter().zip(&b.coordinates).all(|(x, y)| (x[k] + y[k]).abs() < 1e-8);
                prop_assert!(same || flipped);
            }
        }

        #[test]
        fn scores_stay_in_range(seed in any::<u64>()) {
            let pts = cloud(seed, 6, 4);
            let pairs: Vec<(&[f64], &[f64])> = pts.chunks(2).map(|c| (c[0].as_slice(), c[1].as_slice())).collect();
            let s = negation_separation_score(&pairs).unwrap();
            prop_assert!((-1.0..=1.0).contains(&s));
            let groups = vec![vec![pts[0].as_slice(), pts[1].as_slice()], vec![pts[2].as_slice()], vec![pts[3].as_slice()]];
            let c = negation_object_collapse_score(&groups).unwrap();
            prop_assert!((-1.0..=1.0).contains(&c));
        }
    }
}
