//! Corpus ingestion, filtering and evaluation-dataset loaders.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::text::{normalize_sentence, tokenize, word_count};
use crate::{Error, Result};

/// Default minimum number of letter-bearing words a sentence must have.
/// Sentences with five or fewer are discarded.
pub const DEFAULT_MIN_WORDS: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub source_id: String,
    /// Difficulty level, 0 is the hardest and 4 the simplest.
    pub level: Option<u8>,
}

impl Sentence {
    pub fn new(tokens: Vec<String>) -> Self {
        Sentence {
            tokens,
            source_id: String::new(),
            level: None,
        }
    }

    pub fn from_text(text: &str) -> Self {
        Sentence::new(tokenize(text))
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn normalized(&self) -> String {
        normalize_sentence(&self.text())
    }

    pub fn word_count(&self) -> usize {
        word_count(&self.tokens)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    PlainLines,
    LeveledArticles,
}

impl std::str::FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" | "plain-lines" => Ok(CorpusFormat::PlainLines),
            "leveled" | "leveled-articles" => Ok(CorpusFormat::LeveledArticles),
            other => Err(Error::usage(format!("unknown corpus format '{other}'"))),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads sentences in file order. Blank lines are skipped.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<Sentence>> {
    let text = read(path)?;
    parse_corpus(&text, format, path)
}

pub fn parse_corpus(text: &str, format: CorpusFormat, path: &Path) -> Result<Vec<Sentence>> {
    let source_id = path.display().to_string();
    let mut level = None;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if format == CorpusFormat::LeveledArticles && trimmed.starts_with('#') {
            level = Some(parse_level_header(trimmed).ok_or_else(|| {
                Error::format_at(path, i + 1, format!("malformed level header '{trimmed}'"))
            })?);
            continue;
        }
        let tokens = tokenize(trimmed);
        if tokens.is_empty() {
            continue;
        }
        if format == CorpusFormat::LeveledArticles && level.is_none() {
            return Err(Error::format_at(
                path,
                i + 1,
                "sentence before the first #level=<0-4> header",
            ));
        }
        out.push(Sentence {
            tokens,
            source_id: source_id.clone(),
            level,
        });
    }
    Ok(out)
}

fn parse_level_header(line: &str) -> Option<u8> {
    let value = line.strip_prefix("#level=")?.trim();
    let level: u8 = value.parse().ok()?;
    (level <= 4).then_some(level)
}

/// Keeps sentences whose level is in `allowed`; unlevelled sentences are dropped.
pub fn filter_level<'a>(
    stream: impl IntoIterator<Item = Sentence> + 'a,
    allowed: &'a BTreeSet<u8>,
) -> impl Iterator<Item = Sentence> + 'a {
    stream
        .into_iter()
        .filter(move |s| s.level.is_some_and(|l| allowed.contains(&l)))
}

pub fn filter_short(
    stream: impl IntoIterator<Item = Sentence>,
    min_words: usize,
) -> impl Iterator<Item = Sentence> {
    stream.into_iter().filter(move |s| s.word_count() >= min_words)
}

pub fn dedup_against<'a>(
    stream: impl IntoIterator<Item = Sentence> + 'a,
    test_sentences: &'a HashSet<String>,
) -> impl Iterator<Item = Sentence> + 'a {
    stream
        .into_iter()
        .filter(move |s| !test_sentences.contains(&s.normalized()))
}

/// Stage counts for one preparation run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorpusManifest {
    pub sources: Vec<String>,
    pub loaded: usize,
    pub after_level: usize,
    pub after_short: usize,
    pub after_dedup: usize,
    pub dedup_removed: usize,
}

/// One input source for [`prepare`]. The level filter only applies to
/// leveled sources.
#[derive(Debug, Clone)]
pub struct CorpusSource {
    pub path: PathBuf,
    pub format: CorpusFormat,
}

#[derive(Debug, Clone)]
pub struct PrepareOptions {
    pub levels: BTreeSet<u8>,
    pub min_words: usize,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        PrepareOptions {
            levels: [2, 3, 4].into_iter().collect(),
            min_words: DEFAULT_MIN_WORDS,
        }
    }
}

/// load -> filter_level -> filter_short -> dedup, with stage counts.
pub fn prepare(
    sources: &[CorpusSource],
    test_sentences: &HashSet<String>,
    opts: &PrepareOptions,
) -> Result<(Vec<Sentence>, CorpusManifest)> {
    if opts.min_words == 0 {
        return Err(Error::usage("min_words must be at least 1"));
    }
    if let Some(bad) = opts.levels.iter().find(|&&l| l > 4) {
        return Err(Error::usage(format!("level {bad} outside 0..4")));
    }
    let mut manifest = CorpusManifest::default();
    let mut levelled = Vec::new();
    for src in sources {
        manifest.sources.push(src.path.display().to_string());
        let loaded = load_corpus(&src.path, src.format)?;
        manifest.loaded += loaded.len();
        match src.format {
            CorpusFormat::PlainLines => levelled.extend(loaded),
            CorpusFormat::LeveledArticles => levelled.extend(filter_level(loaded, &opts.levels)),
        }
    }
    manifest.after_level = levelled.len();
    let short: Vec<Sentence> = filter_short(levelled, opts.min_words).collect();
    manifest.after_short = short.len();
    let kept: Vec<Sentence> = dedup_against(short, test_sentences).collect();
    manifest.after_dedup = kept.len();
    manifest.dedup_removed = manifest.after_short - manifest.after_dedup;
    Ok((kept, manifest))
}

/// A lexical-simplification evaluation record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LsInstance {
    pub tokens: Vec<String>,
    pub target_index: usize,
    /// Lowercase gold substitutions, never containing the target.
    pub gold: BTreeSet<String>,
}

impl LsInstance {
    pub fn target(&self) -> &str {
        &self.tokens[self.target_index]
    }
}

pub fn load_ls_dataset(path: &Path) -> Result<Vec<LsInstance>> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_ls_line(line).map_err(|m| Error::format_at(path, i + 1, m))?);
    }
    Ok(out)
}

pub fn parse_ls_line(line: &str) -> std::result::Result<LsInstance, String> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() < 4 {
        return Err(format!("expected at least 4 tab-separated columns, found {}", cols.len()));
    }
    let tokens: Vec<String> = cols[0].split_whitespace().map(str::to_string).collect();
    let target_index: usize = cols[1]
        .trim()
        .parse()
        .map_err(|_| format!("target index '{}' is not a non-negative integer", cols[1]))?;
    if target_index >= tokens.len() {
        return Err(format!(
            "target index {target_index} out of range for {} tokens",
            tokens.len()
        ));
    }
    let target = tokens[target_index].to_lowercase();
    if target != cols[2].trim().to_lowercase() {
        return Err(format!(
            "token at index {target_index} is '{}', not '{}'",
            tokens[target_index],
            cols[2].trim()
        ));
    }
    let gold: BTreeSet<String> = cols[3..]
        .iter()
        .map(|g| g.trim().to_lowercase())
        .filter(|g| !g.is_empty() && *g != target)
        .collect();
    if gold.is_empty() {
        return Err("empty gold substitution set".into());
    }
    Ok(LsInstance {
        tokens,
        target_index,
        gold,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelPair {
    pub source: Sentence,
    pub references: Vec<Sentence>,
}

pub fn load_parallel_dataset(src_path: &Path, ref_paths: &[PathBuf]) -> Result<Vec<ParallelPair>> {
    if ref_paths.is_empty() {
        return Err(Error::usage("at least one reference file is required"));
    }
    let sources: Vec<String> = read(src_path)?.lines().map(str::to_string).collect();
    let mut refs = Vec::with_capacity(ref_paths.len());
    for p in ref_paths {
        let lines: Vec<String> = read(p)?.lines().map(str::to_string).collect();
        if lines.len() != sources.len() {
            return Err(Error::Format {
                path: Some(p.clone()),
                line: None,
                message: format!(
                    "line count mismatch: source has {} lines, reference has {}",
                    sources.len(),
                    lines.len()
                ),
            });
        }
        refs.push(lines);
    }
    let mut pairs = Vec::with_capacity(sources.len());
    for (i, src) in sources.iter().enumerate() {
        let source = Sentence::from_text(src);
        if source.tokens.is_empty() {
            return Err(Error::format_at(src_path, i + 1, "empty source sentence"));
        }
        let references = refs.iter().map(|r| Sentence::from_text(&r[i])).collect();
        pairs.push(ParallelPair { source, references });
    }
    Ok(pairs)
}

/// Normalized sentence set for deduplication, read from plain-lines files.
pub fn load_test_sentences(paths: &[PathBuf]) -> Result<HashSet<String>> {
    let mut set = HashSet::new();
    for p in paths {
        for line in read(p)?.lines() {
            let norm = normalize_sentence(&tokenize(line).join(" "));
            if !norm.is_empty() {
                set.insert(norm);
            }
        }
    }
    Ok(set)
}

/// Normalized sentence set taken from the sentence column of LS datasets.
pub fn ls_test_sentences(paths: &[PathBuf]) -> Result<HashSet<String>> {
    let mut set = HashSet::new();
    for p in paths {
        for inst in load_ls_dataset(p)? {
            set.insert(normalize_sentence(&tokenize(&inst.tokens.join(" ")).join(" ")));
        }
    }
    Ok(set)
}
