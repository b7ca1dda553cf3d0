//! Simple/complex word identification.
//!
//! Two identifiers share one contract: a human-ratings lexicon with an
//! inclusive score threshold, and a trainable contextual tagger. Tokens
//! without an ASCII letter are always tagged complex.

mod tagger;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

pub use tagger::{load_tagger, save_tagger, train_tagger, TaggerConfig, TaggerModel};

use crate::corpus::Sentence;
use crate::text::has_letter;
use crate::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ComplexityTag {
    Simple,
    Complex,
}

impl ComplexityTag {
    pub fn is_simple(self) -> bool {
        self == ComplexityTag::Simple
    }

    pub fn symbol(self) -> char {
        match self {
            ComplexityTag::Simple => 'S',
            ComplexityTag::Complex => 'C',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub tags: Vec<ComplexityTag>,
}

impl TaggedSentence {
    /// Builds a tagged sentence, forcing letterless tokens to complex.
    pub fn new(tokens: Vec<String>, tags: Vec<ComplexityTag>) -> Result<Self> {
        if tokens.len() != tags.len() {
            return Err(Error::usage(format!(
                "{} tokens but {} tags",
                tokens.len(),
                tags.len()
            )));
        }
        let tags = tokens
            .iter()
            .zip(tags)
            .map(|(t, tag)| if has_letter(t) { tag } else { ComplexityTag::Complex })
            .collect();
        Ok(TaggedSentence { tokens, tags })
    }

    pub fn simple_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.tags.iter().enumerate().filter(|(_, t)| t.is_simple()).map(|(i, _)| i)
    }

    /// `token/S token/C ...`
    pub fn to_line(&self) -> String {
        self.tokens
            .iter()
            .zip(&self.tags)
            .map(|(t, tag)| format!("{t}/{}", tag.symbol()))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn parse_line(line: &str) -> std::result::Result<Self, String> {
        let mut tokens = Vec::new();
        let mut tags = Vec::new();
        for item in line.split_whitespace() {
            let (tok, tag) = item
                .rsplit_once('/')
                .ok_or_else(|| format!("item '{item}' lacks a /S or /C tag"))?;
            if tok.is_empty() {
                return Err(format!("item '{item}' has an empty token"));
            }
            tags.push(match tag {
                "S" => ComplexityTag::Simple,
                "C" => ComplexityTag::Complex,
                other => return Err(format!("unknown tag '{other}' in '{item}'")),
            });
            tokens.push(tok.to_string());
        }
        if tokens.is_empty() {
            return Err("empty tagged sentence".into());
        }
        TaggedSentence::new(tokens, tags).map_err(|e| e.to_string())
    }
}

pub fn load_tagged(path: &Path) -> Result<Vec<TaggedSentence>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| TaggedSentence::parse_line(l).map_err(|m| Error::format_at(path, i + 1, m)))
        .collect()
}

/// Word complexity scores; a word is simple when its score is at most
/// the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    scores: BTreeMap<String, f64>,
    pub threshold: f64,
}

impl Lexicon {
    /// Duplicate words are averaged.
    pub fn from_entries<I, S>(entries: I, threshold: f64) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: AsRef<str>,
    {
        let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for (w, s) in entries {
            if !s.is_finite() {
                return Err(Error::format(format!("score for '{}' is not finite", w.as_ref())));
            }
            let e = sums.entry(w.as_ref().to_lowercase()).or_default();
            e.0 += s;
            e.1 += 1;
        }
        Ok(Lexicon {
            scores: sums.into_iter().map(|(w, (s, n))| (w, s / n as f64)).collect(),
            threshold,
        })
    }

    pub fn score(&self, word: &str) -> Option<f64> {
        self.scores.get(&word.to_lowercase()).copied()
    }

    pub fn is_simple(&self, word: &str) -> bool {
        has_letter(word) && self.score(word).is_some_and(|s| s <= self.threshold)
    }

    pub fn with_threshold(&self, threshold: f64) -> Self {
        Lexicon {
            scores: self.scores.clone(),
            threshold,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = (&str, f64)> {
        self.scores.iter().map(|(w, &s)| (w.as_str(), s))
    }
}

/// Reads `word \t score` rows.
pub fn build_lexicon(path: &Path, threshold: f64) -> Result<Lexicon> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (word, score) = line
            .split_once('\t')
            .ok_or_else(|| Error::format_at(path, i + 1, "expected 'word<TAB>score'"))?;
        let score: f64 = score
            .trim()
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| Error::format_at(path, i + 1, format!("score '{}' is not a number", score.trim())))?;
        rows.push((word.trim().to_string(), score));
    }
    Lexicon::from_entries(rows, threshold)
}

pub fn lexicon_identify(sentence: &Sentence, lexicon: &Lexicon) -> TaggedSentence {
    let tags = sentence
        .tokens
        .iter()
        .map(|t| {
            if lexicon.is_simple(t) {
                ComplexityTag::Simple
            } else {
                ComplexityTag::Complex
            }
        })
        .collect();
    TaggedSentence {
        tokens: sentence.tokens.clone(),
        tags,
    }
}

/// Either identifier behind one call.
#[derive(Debug, Clone)]
pub enum Identifier {
    Lexicon(Lexicon),
    Tagger { model: Box<TaggerModel>, cutoff: f64 },
}

impl Identifier {
    pub fn identify(&self, sentence: &Sentence) -> Result<TaggedSentence> {
        match self {
            Identifier::Lexicon(lex) => Ok(lexicon_identify(sentence, lex)),
            Identifier::Tagger { model, cutoff } => model.identify(sentence, *cutoff),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DisagreementReport {
    pub lexicon_simple_tagger_complex: usize,
    pub tagger_simple_lexicon_complex: usize,
    pub agree: usize,
}

impl DisagreementReport {
    pub fn total(&self) -> usize {
        self.lexicon_simple_tagger_complex + self.tagger_simple_lexicon_complex + self.agree
    }
}

/// Compares two taggings of the same sentences over letter-bearing tokens.
pub fn compare_taggings(lexicon_tags: &[TaggedSentence], tagger_tags: &[TaggedSentence]) -> DisagreementReport {
    let mut r = DisagreementReport::default();
    for (a, b) in lexicon_tags.iter().zip(tagger_tags) {
        for ((tok, ta), tb) in a.tokens.iter().zip(&a.tags).zip(&b.tags) {
            if !has_letter(tok) {
                continue;
            }
            match (ta.is_simple(), tb.is_simple()) {
                (true, false) => r.lexicon_simple_tagger_complex += 1,
                (false, true) => r.tagger_simple_lexicon_complex += 1,
                _ => r.agree += 1,
            }
        }
    }
    r
}

pub fn disagreement_report(
    sentences: &[Sentence],
    lexicon: &Lexicon,
    tagger: &TaggerModel,
    cutoff: f64,
) -> Result<DisagreementReport> {
    let lex: Vec<_> = sentences.iter().map(|s| lexicon_identify(s, lexicon)).collect();
    let nn = sentences
        .iter()
        .map(|s| tagger.identify(s, cutoff))
        .collect::<Result<Vec<_>>>()?;
    Ok(compare_taggings(&lex, &nn))
}
