//! Tokenization and scope-aware reading of which concepts a caption affirms
//! or negates.
//!
//! Clauses end at sentence punctuation and at the word "but". Inside a clause
//! "not" negates every mention in the clause ("A is not present"), while the
//! other cues (no, without, lacks, neither, nor) only negate mentions that
//! follow them ("A without B").

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::types::Concept;

pub const CLAUSE_WIDE_CUES: &[&str] = &["not"];
pub const FORWARD_CUES: &[&str] = &["no", "without", "lacks", "neither", "nor"];

pub fn is_negation_cue(token: &str) -> bool {
    CLAUSE_WIDE_CUES.contains(&token) || FORWARD_CUES.contains(&token)
}

/// A lowercase word or a clause break.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    Word(String),
    Break,
}

/// Lowercase words; `.`, `!`, `?` and `;` become clause breaks, other
/// punctuation separates words.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut Vec<Token>| {
        if !word.is_empty() {
            out.push(Token::Word(core::mem::take(word)));
        }
    };
    for ch in text.chars() {
        if ch.is_alphanumeric() || ch == '_' || ch == '-' || ch == '\'' {
            word.extend(ch.to_lowercase());
        } else {
            flush(&mut word, &mut out);
            if matches!(ch, '.' | '!' | '?' | ';') && !matches!(out.last(), None | Some(Token::Break)) {
                out.push(Token::Break);
            }
        }
    }
    flush(&mut word, &mut out);
    out
}

/// Words only, punctuation dropped.
pub fn words(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter_map(|t| match t {
            Token::Word(w) => Some(w),
            Token::Break => None,
        })
        .collect()
}

/// Word-boundary containment of a (possibly multi-word) concept.
pub fn mentions(text: &str, concept: &Concept) -> bool {
    let hay = words(text);
    let needle: Vec<&str> = concept.as_str().split(' ').collect();
    hay.windows(needle.len()).any(|w| w.iter().zip(&needle).all(|(a, b)| a == b))
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Claims {
    pub affirmed: BTreeSet<Concept>,
    pub negated: BTreeSet<Concept>,
    /// Words that are neither a known concept nor accepted by `is_known_word`.
    pub unknown: Vec<String>,
}

/// One concept mention found by [`scan`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item<'a> {
    Mention { concept: &'a Concept, negated: bool },
    Word(String),
}

/// Walk a caption clause by clause, resolving concept mentions (longest match
/// first) and their negation scope. Non-concept words are reported as `Item::Word`.
pub fn scan<'a>(text: &str, concepts: &'a [Concept]) -> Vec<Item<'a>> {
    let mut phrases: Vec<(Vec<&str>, &Concept)> =
        concepts.iter().map(|c| (c.as_str().split(' ').collect(), c)).collect();
    phrases.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.1.cmp(b.1)));

    let mut out = Vec::new();
    for clause in clauses(text) {
        let clause_negated = clause.iter().any(|w| CLAUSE_WIDE_CUES.contains(&w.as_str()));
        let mut forward = false;
        let mut i = 0;
        while i < clause.len() {
            let hit = phrases.iter().find(|(p, _)| {
                clause.len() - i >= p.len() && p.iter().zip(&clause[i..]).all(|(a, b)| *a == b.as_str())
            });
            if let Some((p, c)) = hit {
                out.push(Item::Mention { concept: c, negated: clause_negated || forward });
                i += p.len();
                continue;
            }
            let w = &clause[i];
            if FORWARD_CUES.contains(&w.as_str()) {
                forward = true;
            }
            out.push(Item::Word(w.clone()));
            i += 1;
        }
    }
    out
}

/// Scope-aware claims of `text` over the known `concepts`.
pub fn parse_claims(text: &str, concepts: &[Concept], is_known_word: impl Fn(&str) -> bool) -> Claims {
    let mut claims = Claims::default();
    for item in scan(text, concepts) {
        match item {
            Item::Mention { concept, negated: true } => {
                claims.negated.insert(concept.clone());
            }
            Item::Mention { concept, negated: false } => {
                claims.affirmed.insert(concept.clone());
            }
            Item::Word(w) if !is_known_word(&w) => claims.unknown.push(w),
            Item::Word(_) => {}
        }
    }
    claims
}

fn clauses(text: &str) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for tok in tokenize(text) {
        match tok {
            Token::Break => out.push(core::mem::take(&mut cur)),
            Token::Word(w) if w == "but" => out.push(core::mem::take(&mut cur)),
            Token::Word(w) => cur.push(w),
        }
    }
    out.push(cur);
    out.retain(|c| !c.is_empty());
    out
}

/// Capitalize the first letter of every word, e.g. `lung opacity` -> `Lung Opacity`.
pub fn title_case(s: &str) -> String {
    s.split(' ')
        .map(|w| {
            let mut cs = w.chars();
            match cs.next() {
                Some(f) => f.to_uppercase().chain(cs).collect::<String>(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Capitalize only the first character of a sentence.
pub fn capitalize_first(s: &str) -> String {
    let mut cs = s.chars();
    match cs.next() {
        Some(f) => f.to_uppercase().chain(cs).collect(),
        None => s.to_string(),
    }
}
