//! The versioned template catalog shipped in `data/catalog_v1.json`.

use alloc::string::String;
use alloc::vec::Vec;

use serde::Deserialize;

pub const CATALOG_V1: &str = include_str!("../data/catalog_v1.json");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CatalogError {
    #[error("catalog is not valid JSON: {0}")]
    Parse(String),
    #[error("unsupported catalog {0:?} version {1}")]
    Version(String, u32),
    #[error("pattern {pattern:?} must contain {placeholder} exactly once")]
    Placeholder { pattern: String, placeholder: &'static str },
    #[error("family {family} has {found} templates, expected {expected}")]
    FamilySize { family: &'static str, found: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct McqTemplates {
    pub affirmation: Vec<String>,
    pub affirmation_two: Vec<String>,
    pub negation: Vec<String>,
    pub hybrid: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct BinaryTemplates {
    pub affirmation: String,
    pub negation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct BatteryTemplates {
    pub affirm_single: Vec<String>,
    pub neg_single: Vec<String>,
    pub affirm_two: Vec<String>,
    pub hybrid: Vec<String>,
    pub double_neg: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct TemplateCatalog {
    pub format: String,
    pub version: u32,
    /// Sentence appended or prepended to a caption; placeholder `{x}`.
    pub retrieval_negation: String,
    /// Placeholders `{A}`, `{C}` (affirmed) and `{B}` (negated).
    pub mcq: McqTemplates,
    /// Placeholder `{x}`.
    pub binary: BinaryTemplates,
    /// Placeholders `{A}` and `{B}`.
    pub battery: BatteryTemplates,
}

pub const BATTERY_SIZES: [(&str, usize); 5] =
    [("affirm_single", 24), ("neg_single", 24), ("affirm_two", 23), ("hybrid", 24), ("double_neg", 24)];

impl TemplateCatalog {
    /// The catalog compiled into the crate.
    pub fn builtin() -> Self {
        Self::parse(CATALOG_V1).expect("bundled catalog is valid")
    }

    pub fn parse(json: &str) -> Result<Self, CatalogError> {
        let cat: TemplateCatalog =
            serde_json::from_str(json).map_err(|e| CatalogError::Parse(alloc::format!("{e}")))?;
        if cat.format != "negsuite-catalog" || cat.version != 1 {
            return Err(CatalogError::Version(cat.format, cat.version));
        }
        cat.validate()?;
        Ok(cat)
    }

    fn validate(&self) -> Result<(), CatalogError> {
        check(&self.retrieval_negation, &["{x}"])?;
        check(&self.binary.affirmation, &["{x}"])?;
        check(&self.binary.negation, &["{x}"])?;
        check_all(&self.mcq.affirmation, &["{A}"])?;
        check_all(&self.mcq.affirmation_two, &["{A}", "{C}"])?;
        check_all(&self.mcq.negation, &["{B}"])?;
        check_all(&self.mcq.hybrid, &["{A}", "{B}"])?;
        let b = &self.battery;
        check_all(&b.affirm_single, &["{A}"])?;
        check_all(&b.neg_single, &["{A}"])?;
        check_all(&b.affirm_two, &["{A}", "{B}"])?;
        check_all(&b.hybrid, &["{A}", "{B}"])?;
        check_all(&b.double_neg, &["{A}", "{B}"])?;
        let found = [b.affirm_single.len(), b.neg_single.len(), b.affirm_two.len(), b.hybrid.len(), b.double_neg.len()];
        for ((family, expected), found) in BATTERY_SIZES.iter().zip(found) {
            if found != *expected {
                return Err(CatalogError::FamilySize { family, found, expected: *expected });
            }
        }
        if self.mcq.affirmation.is_empty()
            || self.mcq.affirmation_two.is_empty()
            || self.mcq.negation.is_empty()
            || self.mcq.hybrid.is_empty()
        {
            return Err(CatalogError::Parse("every MCQ family needs at least one pattern".into()));
        }
        Ok(())
    }
}

fn check_all(patterns: &[String], placeholders: &[&'static str]) -> Result<(), CatalogError> {
    patterns.iter().try_for_each(|p| check(p, placeholders))
}

fn check(pattern: &str, placeholders: &[&'static str]) -> Result<(), CatalogError> {
    for &ph in ["{A}", "{B}", "{C}", "{x}"].iter() {
        let n = pattern.matches(ph).count();
        let want = usize::from(placeholders.contains(&ph));
        if n != want {
            return Err(CatalogError::Placeholder { pattern: pattern.into(), placeholder: ph });
        }
    }
    Ok(())
}

/// Substitute `{name}` placeholders.
pub fn render(pattern: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::from(pattern);
    for (name, value) in values {
        out = out.replace(&alloc::format!("{{{name}}}"), value);
    }
    out
}
