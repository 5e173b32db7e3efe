//! On-disk formats. Every writer has a pure `render_*` twin and every reader a
//! `parse_*` twin so formats can be tested without touching the filesystem.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use negsuite_core::cooccur::CooccurrenceMatrix;
use negsuite_core::diagnostics::{BatteryFamily, ScatterPoint};
use negsuite_core::embedding::EmbeddingTable;
use negsuite_core::eval::{EvalReport, MetricRow, RetrievalGroundTruth};
use negsuite_core::matrix::Matrix;
use negsuite_core::toyworld::{LogRow, SweepRow, ToyMetrics, TwoTowerModel};
use negsuite_core::types::{Concept, SceneRecord};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EMB_FORMAT: &str = "negsuite-emb";
pub const COOC_FORMAT: &str = "negsuite-cooc";
pub const RECORDS_FORMAT: &str = "negsuite-records";

/// Tool version and resolved seed, stamped on every output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(seed: Option<u64>) -> Self {
        Provenance { tool: format!("negsuite {}", env!("CARGO_PKG_VERSION")), seed }
    }

    /// `# negsuite 0.1.0 seed=7`, the first line of every CSV output.
    pub fn comment(&self) -> String {
        match self.seed {
            Some(s) => format!("# {} seed={s}", self.tool),
            None => format!("# {}", self.tool),
        }
    }
}

/// Write through a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let err = |source| Error::Write { path: path.to_path_buf(), source };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err)?;
    tmp.write_all(contents).map_err(err)?;
    tmp.as_file().sync_all().map_err(err)?;
    tmp.persist(path).map_err(|e| err(e.error))?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::read(path, e))
}

/// Non-blank lines with 1-based line numbers.
fn numbered(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty())
}

fn json_line<T: DeserializeOwned>(path: &Path, line: usize, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::format(path, line, e.to_string()))
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string(value).expect("in-memory values serialize")
}

#[derive(Debug, Serialize, Deserialize)]
struct EmbHeader {
    format: String,
    version: u32,
    dim: usize,
    count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tool: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbRow {
    id: String,
    vec: Vec<f64>,
}

pub fn render_embedding_table(table: &EmbeddingTable, prov: &Provenance) -> String {
    let header = EmbHeader {
        format: EMB_FORMAT.into(),
        version: 1,
        dim: table.dim(),
        count: table.len(),
        tool: Some(prov.tool.clone()),
        seed: prov.seed,
    };
    let mut out = to_json(&header);
    out.push('\n');
    for (id, v) in table.iter() {
        out.push_str(&to_json(&EmbRow { id: id.into(), vec: v.to_vec() }));
        out.push('\n');
    }
    out
}

pub fn parse_embedding_table(text: &str, path: &Path) -> Result<EmbeddingTable> {
    let mut lines = numbered(text);
    let Some((n, first)) = lines.next() else {
        return Err(Error::format(path, 1, "missing header"));
    };
    let header: EmbHeader = json_line(path, n, first)?;
    if header.format != EMB_FORMAT || header.version != 1 {
        return Err(Error::format(path, n, format!("expected {EMB_FORMAT} version 1")));
    }
    let mut table = EmbeddingTable::new(header.dim).map_err(|e| Error::format(path, n, e.to_string()))?;
    let mut last: Option<String> = None;
    let mut last_line = n;
    for (n, line) in lines {
        let row: EmbRow = json_line(path, n, line)?;
        if row.vec.len() != header.dim {
            return Err(Error::DimMismatch { path: path.into(), line: n, expected: header.dim, found: row.vec.len() });
        }
        match &last {
            Some(prev) if *prev == row.id => return Err(Error::format(path, n, format!("duplicate id {:?}", row.id))),
            Some(prev) if *prev > row.id => {
                return Err(Error::format(path, n, format!("id {:?} is out of ascending order", row.id)))
            }
            _ => {}
        }
        last = Some(row.id.clone());
        last_line = n;
        table.insert(row.id, row.vec).map_err(|e| Error::format(path, n, e.to_string()))?;
    }
    if table.len() != header.count {
        return Err(Error::format(path, last_line, format!("header count {} but {} rows", header.count, table.len())));
    }
    Ok(table)
}

pub fn read_embedding_table(path: &Path) -> Result<EmbeddingTable> {
    parse_embedding_table(&read_text(path)?, path)
}

pub fn write_embedding_table(table: &EmbeddingTable, path: &Path, prov: &Provenance) -> Result<()> {
    write_atomic(path, render_embedding_table(table, prov).as_bytes())
}

#[derive(Debug, Serialize, Deserialize)]
struct CoocHeader {
    format: String,
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tool: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum CoocRow {
    Pair { a: Concept, b: Concept, n: u64 },
    Diagonal { a: Concept, n: u64 },
}

/// Each concept's diagonal row, then its nonzero pairs with later concepts.
pub fn render_cooccurrence(m: &CooccurrenceMatrix, prov: &Provenance) -> String {
    let header = CoocHeader { format: COOC_FORMAT.into(), version: 1, tool: Some(prov.tool.clone()), seed: prov.seed };
    let mut out = to_json(&header);
    out.push('\n');
    let vocab = m.vocabulary();
    for (i, a) in vocab.iter().enumerate() {
        let row = CoocRow::Diagonal { a: a.clone(), n: m.count_at(i, i) };
        writeln!(out, "{}", to_json(&row)).unwrap();
        for (j, b) in vocab.iter().enumerate().skip(i + 1) {
            let n = m.count_at(i, j);
            if n > 0 {
                writeln!(out, "{}", to_json(&CoocRow::Pair { a: a.clone(), b: b.clone(), n })).unwrap();
            }
        }
    }
    out
}

pub fn parse_cooccurrence(text: &str, path: &Path) -> Result<CooccurrenceMatrix> {
    let mut lines = numbered(text);
    let Some((n, first)) = lines.next() else {
        return Err(Error::format(path, 1, "missing header"));
    };
    let header: CoocHeader = json_line(path, n, first)?;
    if header.format != COOC_FORMAT || header.version != 1 {
        return Err(Error::format(path, n, format!("expected {COOC_FORMAT} version 1")));
    }
    let (mut diag, mut pairs) = (Vec::new(), Vec::new());
    let mut seen = BTreeSet::new();
    for (n, line) in lines {
        let key = match json_line(path, n, line)? {
            CoocRow::Diagonal { a, n: count } => {
                diag.push((a.clone(), count));
                (a.clone(), a)
            }
            CoocRow::Pair { a, b, n: count } => {
                if a == b {
                    return Err(Error::format(path, n, "pair row with equal concepts"));
                }
                pairs.push((a.clone(), b.clone(), count));
                if a < b { (a, b) } else { (b, a) }
            }
        };
        if !seen.insert(key) {
            return Err(Error::format(path, n, "repeated row"));
        }
    }
    Ok(CooccurrenceMatrix::from_counts(diag, pairs))
}

pub fn read_cooccurrence(path: &Path) -> Result<CooccurrenceMatrix> {
    parse_cooccurrence(&read_text(path)?, path)
}

/// First line of a records file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordsHeader {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub count: usize,
    pub tool: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// A header line followed by one JSON object per item.
pub fn render_records<T: Serialize>(kind: &str, items: &[T], prov: &Provenance) -> String {
    let header = RecordsHeader {
        format: RECORDS_FORMAT.into(),
        version: 1,
        kind: kind.into(),
        count: items.len(),
        tool: prov.tool.clone(),
        seed: prov.seed,
    };
    let mut out = to_json(&header);
    out.push('\n');
    for item in items {
        out.push_str(&to_json(item));
        out.push('\n');
    }
    out
}

/// One object per line; a leading line carrying a `format` key is skipped.
pub fn parse_records<T: DeserializeOwned>(text: &str, path: &Path) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (k, (n, line)) in numbered(text).enumerate() {
        if k == 0 {
            let v: serde_json::Value = json_line(path, n, line)?;
            if v.get("format").is_some() {
                continue;
            }
        }
        out.push((n, json_line(path, n, line)?));
    }
    Ok(out)
}

pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    Ok(parse_records(&read_text(path)?, path)?.into_iter().map(|(_, t)| t).collect())
}

/// Scene records with unique ids and disjoint positive and negative sets.
pub fn parse_scenes(text: &str, path: &Path) -> Result<Vec<SceneRecord>> {
    let rows: Vec<(usize, SceneRecord)> = parse_records(text, path)?;
    if rows.is_empty() {
        return Err(Error::Input(format!("{}: no scenes", path.display())));
    }
    let mut ids = BTreeSet::new();
    for (n, s) in &rows {
        s.validate().map_err(|e| Error::format(path, *n, e.to_string()))?;
        if !ids.insert(s.id.clone()) {
            return Err(Error::format(path, *n, format!("duplicate scene id {:?}", s.id)));
        }
    }
    Ok(rows.into_iter().map(|(_, s)| s).collect())
}

pub fn read_scenes(path: &Path) -> Result<Vec<SceneRecord>> {
    parse_scenes(&read_text(path)?, path)
}

/// `{"query": id, "relevant": [ids]}` per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthRow {
    pub query: String,
    pub relevant: BTreeSet<String>,
}

pub fn parse_truth(text: &str, path: &Path) -> Result<RetrievalGroundTruth> {
    let mut truth = RetrievalGroundTruth::new();
    for (n, row) in parse_records::<TruthRow>(text, path)? {
        if row.relevant.is_empty() {
            return Err(Error::format(path, n, format!("query {:?} has no relevant candidates", row.query)));
        }
        if truth.insert(row.query.clone(), row.relevant).is_some() {
            return Err(Error::format(path, n, format!("duplicate query {:?}", row.query)));
        }
    }
    if truth.is_empty() {
        return Err(Error::Input(format!("{}: no queries", path.display())));
    }
    Ok(truth)
}

/// A JSON object with `tool` and `seed` next to the body's own fields.
pub fn render_document<T: Serialize>(body: &T, prov: &Provenance) -> String {
    #[derive(Serialize)]
    struct Document<'a, T> {
        #[serde(flatten)]
        prov: &'a Provenance,
        #[serde(flatten)]
        body: &'a T,
    }
    let mut s = serde_json::to_string_pretty(&Document { prov, body }).expect("in-memory values serialize");
    s.push('\n');
    s
}

fn csv_with_comment(prov: &Provenance, fill: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>) -> String {
    let mut buf = Vec::new();
    writeln!(buf, "{}", prov.comment()).unwrap();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        fill(&mut w).expect("writing CSV to memory");
        w.flush().unwrap();
    }
    String::from_utf8(buf).expect("CSV output is UTF-8")
}

fn serialize_rows<T: Serialize>(rows: &[T], prov: &Provenance) -> String {
    csv_with_comment(prov, |w| rows.iter().try_for_each(|r| w.serialize(r)))
}

/// `name,slice,value,count`.
pub fn render_metric_csv(rows: &[MetricRow], prov: &Provenance) -> String {
    serialize_rows(rows, prov)
}

pub fn render_report_csv(report: &EvalReport, prov: &Provenance) -> String {
    render_metric_csv(&report.rows(), prov)
}

pub fn toy_metric_rows(m: &ToyMetrics) -> Vec<MetricRow> {
    let report = EvalReport {
        // One retrieval query per held-out scene, as for the MCQs.
        recall_at_k: BTreeMap::from([(5, negsuite_core::eval::Rate { value: m.recall_at_5, count: m.mcq.accuracy.count })]),
        mcq: Some(m.mcq.clone()),
        binary_accuracy: None,
    };
    let mut rows = report.rows();
    rows.push(MetricRow {
        name: "hardneg_discrimination".into(),
        slice: "held_out_pairs".into(),
        value: m.hardneg_discrimination,
        // Each held-out pair contributes two scenes.
        count: m.mcq.accuracy.count / 2,
    });
    rows
}

pub fn render_training_log(log: &[LogRow], prov: &Provenance) -> String {
    serialize_rows(log, prov)
}

pub fn render_sweep_csv(rows: &[SweepRow], prov: &Provenance) -> String {
    serialize_rows(rows, prov)
}

#[derive(Debug, Serialize, Deserialize)]
struct ScatterRow {
    x: f64,
    y: f64,
    family: BatteryFamily,
    object: String,
}

/// `x,y,family,object`.
pub fn render_scatter_csv(points: &[ScatterPoint], prov: &Provenance) -> String {
    let rows: Vec<ScatterRow> =
        points.iter().map(|p| ScatterRow { x: p.x, y: p.y, family: p.family, object: p.object.clone() }).collect();
    serialize_rows(&rows, prov)
}

pub fn parse_scatter_csv(text: &str, path: &Path) -> Result<Vec<ScatterPoint>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    r.deserialize::<ScatterRow>()
        .map(|row| {
            let row = row.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                Error::format(path, line, e.to_string())
            })?;
            Ok(ScatterPoint { x: row.x, y: row.y, family: row.family, object: row.object })
        })
        .collect()
}

const FAMILY_COLORS: [(BatteryFamily, &str); 5] = [
    (BatteryFamily::AffirmSingle, "#1f77b4"),
    (BatteryFamily::NegSingle, "#d62728"),
    (BatteryFamily::AffirmTwo, "#2ca02c"),
    (BatteryFamily::Hybrid, "#9467bd"),
    (BatteryFamily::DoubleNeg, "#ff7f0e"),
];

/// Static scatter plot, one colour per family.
pub fn render_scatter_svg(points: &[ScatterPoint], prov: &Provenance) -> String {
    let (w, h, margin) = (640.0, 480.0, 40.0);
    let bounds = |f: fn(&ScatterPoint) -> f64| {
        let lo = points.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (-1.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 1.0, hi + 1.0)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = bounds(|p| p.x);
    let (y0, y1) = bounds(|p| p.y);
    let sx = |x: f64| margin + (x - x0) / (x1 - x0) * (w - 2.0 * margin);
    let sy = |y: f64| h - margin - (y - y0) / (y1 - y0) * (h - 2.0 * margin);
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#).unwrap();
    writeln!(s, "<!-- {} -->", prov.comment().trim_start_matches("# ")).unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r##"<rect x="{margin}" y="{margin}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
        w - 2.0 * margin,
        h - 2.0 * margin
    )
    .unwrap();
    writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">PC1</text>"#, w / 2.0, h - 12.0).unwrap();
    writeln!(s, r#"<text x="14" y="{}" font-size="12" transform="rotate(-90 14 {})">PC2</text>"#, h / 2.0, h / 2.0).unwrap();
    for p in points {
        let color = FAMILY_COLORS.iter().find(|(f, _)| *f == p.family).map_or("#000", |(_, c)| c);
        writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}" fill-opacity="0.75"><title>{} {}</title></circle>"#,
            sx(p.x),
            sy(p.y),
            p.family.as_str(),
            escape(&p.object)
        )
        .unwrap();
    }
    for (i, (family, color)) in FAMILY_COLORS.iter().enumerate() {
        let y = margin + 14.0 + 16.0 * i as f64;
        writeln!(s, r#"<circle cx="{}" cy="{}" r="4" fill="{color}"/>"#, w - margin - 110.0, y - 4.0).unwrap();
        writeln!(s, r#"<text x="{}" y="{y}" font-size="11">{}</text>"#, w - margin - 100.0, family.as_str()).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Rows of a matrix as an embedding table with ids `row00`, `row01`, ...
pub fn matrix_table(m: &Matrix) -> EmbeddingTable {
    let width = m.rows().saturating_sub(1).to_string().len().max(2);
    EmbeddingTable::from_entries(m.cols(), (0..m.rows()).map(|r| (format!("row{r:0width$}"), m.row(r).to_vec())))
        .expect("matrix rows share one width")
}

pub fn table_matrix(t: &EmbeddingTable) -> Matrix {
    Matrix::from_rows(&t.iter().map(|(_, v)| v.to_vec()).collect::<Vec<_>>())
}

pub const IMAGE_MAP_FILE: &str = "image_map.emb.jsonl";
pub const TEXT_MAP_FILE: &str = "text_map.emb.jsonl";

pub fn write_model(dir: &Path, model: &TwoTowerModel, prov: &Provenance) -> Result<()> {
    write_embedding_table(&matrix_table(&model.image_map), &dir.join(IMAGE_MAP_FILE), prov)?;
    write_embedding_table(&matrix_table(&model.text_map), &dir.join(TEXT_MAP_FILE), prov)
}

pub fn read_model(dir: &Path) -> Result<TwoTowerModel> {
    let image = read_embedding_table(&dir.join(IMAGE_MAP_FILE))?;
    let text = read_embedding_table(&dir.join(TEXT_MAP_FILE))?;
    if image.len() != text.len() {
        return Err(Error::Input(format!("{}: towers have different output dimensions", dir.display())));
    }
    Ok(TwoTowerModel { image_map: table_matrix(&image), text_map: table_matrix(&text) })
}
