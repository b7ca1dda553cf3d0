//! Lexical simplification on top of an MLM: mask the target word, take the
//! most probable replacements, filter out the target and its variants,
//! then re-rank with frequency and context fit.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::corpus::LsInstance;
use crate::mlm::{MlmModel, Vocab};
use crate::text::has_letter;
use crate::{Error, Result};

/// Strips one of s/es/ed/ing/er/est, undoing consonant doubling, and drops
/// a final "e" so that "make" and "making" agree.
pub fn stem(word: &str) -> String {
    let w = word.to_lowercase();
    let mut s = w.as_str();
    for suffix in ["ing", "est", "ed", "er", "es", "s"] {
        let Some(rest) = s.strip_suffix(suffix) else { continue };
        if rest.len() < 2 || (suffix == "s" && rest.ends_with('s')) {
            continue;
        }
        if suffix == "es" && !["s", "x", "z", "ch", "sh"].iter().any(|e| rest.ends_with(e)) {
            // "makes" is make + s.
            s = &s[..s.len() - 1];
        } else {
            s = rest;
        }
        break;
    }
    let mut out = s.to_string();
    let b = out.as_bytes();
    if b.len() >= 3 && b[b.len() - 1] == b[b.len() - 2] && !b"aeioulsz".contains(&b[b.len() - 1]) && out.len() < w.len() {
        out.pop();
    }
    if out.len() > 2 && out.ends_with('e') {
        out.pop();
    }
    out
}

pub fn same_stem(a: &str, b: &str) -> bool {
    stem(a) == stem(b)
}

/// Candidates with scores, best first.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CandidateList {
    pub items: Vec<(String, f64)>,
}

impl CandidateList {
    pub fn words(&self) -> Vec<String> {
        self.items.iter().map(|(w, _)| w.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Input ids for the instance, windowed to fit the model, with the
/// position of the target inside the window.
fn encode_window(model: &MlmModel, vocab: &Vocab, inst: &LsInstance) -> (Vec<u32>, usize) {
    let window = model.config().max_seq_len - 2;
    let n = inst.tokens.len();
    let start = if n <= window {
        0
    } else {
        inst.target_index.saturating_sub(window / 2).min(n - window)
    };
    let end = (start + window).min(n);
    let mut ids = vec![Vocab::CLS_ID];
    ids.extend(inst.tokens[start..end].iter().map(|t| vocab.id(t)));
    ids.push(Vocab::SEP_ID);
    (ids, inst.target_index - start + 1)
}

fn by_score_then_word(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

pub fn eligible(word: &str, target: &str) -> bool {
    has_letter(word) && word != target.to_lowercase() && !same_stem(word, target)
}

/// The `k` most probable eligible words for the masked target slot.
pub fn generate_candidates(model: &MlmModel, vocab: &Vocab, inst: &LsInstance, k: usize) -> Result<CandidateList> {
    if k == 0 {
        return Err(Error::usage("k must be at least 1"));
    }
    if inst.target_index >= inst.tokens.len() {
        return Err(Error::usage("target index out of range"));
    }
    let (mut ids, pos) = encode_window(model, vocab, inst);
    ids[pos] = Vocab::MASK_ID;
    let dist = model.distribution_at(&ids, pos)?;
    let target = inst.target();
    let mut scored: Vec<(String, f64)> = dist
        .iter()
        .enumerate()
        .filter(|(id, _)| !Vocab::is_special(*id as u32))
        .map(|(id, &p)| (vocab.token(id as u32).to_string(), p))
        .filter(|(w, _)| eligible(w, target))
        .collect();
    scored.sort_by(by_score_then_word);
    scored.truncate(k);
    Ok(CandidateList { items: scored })
}

/// Mean probability, at the masked target slot, of the instance's gold
/// words.
pub fn simple_mass(model: &MlmModel, vocab: &Vocab, instances: &[LsInstance]) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::usage("no instances to measure"));
    }
    let mut total = 0.0;
    for inst in instances {
        let (mut ids, pos) = encode_window(model, vocab, inst);
        ids[pos] = Vocab::MASK_ID;
        let dist = model.distribution_at(&ids, pos)?;
        let gold: BTreeSet<u32> = inst.gold.iter().map(|g| vocab.id(g)).filter(|&id| id != Vocab::UNK_ID).collect();
        total += gold.iter().map(|&id| dist[id as usize]).sum::<f64>();
    }
    Ok(total / instances.len() as f64)
}

/// Word frequency scores, `log10(1 + count)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FreqTable {
    scores: BTreeMap<String, f64>,
}

impl FreqTable {
    pub fn from_counts<I, S>(counts: I) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: AsRef<str>,
    {
        let mut raw: BTreeMap<String, u64> = BTreeMap::new();
        for (w, c) in counts {
            *raw.entry(w.as_ref().to_lowercase()).or_default() += c;
        }
        FreqTable {
            scores: raw.into_iter().map(|(w, c)| (w, (1.0 + c as f64).log10())).collect(),
        }
    }

    /// Reads `word \t count` rows.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (w, c) = line
                .split_once('\t')
                .ok_or_else(|| Error::format_at(path, i + 1, "expected 'word<TAB>count'"))?;
            let c: u64 = c
                .trim()
                .parse()
                .map_err(|_| Error::format_at(path, i + 1, format!("count '{}' is not an integer", c.trim())))?;
            rows.push((w.trim().to_string(), c));
        }
        Ok(FreqTable::from_counts(rows))
    }

    pub fn score(&self, word: &str) -> f64 {
        self.scores.get(&word.to_lowercase()).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankWeights {
    pub lm: f64,
    pub freq: f64,
    pub ctx: f64,
}

impl Default for RankWeights {
    fn default() -> Self {
        RankWeights {
            lm: 1.0,
            freq: 1.0,
            ctx: 1.0,
        }
    }
}

impl RankWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lm, self.freq, self.ctx];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || all.iter().all(|w| *w == 0.0) {
            return Err(Error::usage("rank weights must be non-negative and not all zero"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateFeatures {
    pub word: String,
    pub mlm: f64,
    pub freq: f64,
    pub ctx: f64,
}

/// `(n - rank) / n` per candidate, rank 0 being the highest value.
fn rank_scores(features: &[CandidateFeatures], value: impl Fn(&CandidateFeatures) -> f64) -> Vec<f64> {
    let n = features.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        value(&features[b])
            .total_cmp(&value(&features[a]))
            .then_with(|| features[a].word.cmp(&features[b].word))
    });
    let mut out = vec![0.0; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = (n - rank) as f64 / n as f64;
    }
    out
}

/// Weighted sum of rank-normalized features, best first.
pub fn combine_features(features: &[CandidateFeatures], weights: &RankWeights) -> CandidateList {
    let lm = rank_scores(features, |f| f.mlm);
    let fq = rank_scores(features, |f| f.freq);
    let cx = rank_scores(features, |f| f.ctx);
    let mut items: Vec<(String, f64)> = features
        .iter()
        .enumerate()
        .map(|(i, f)| (f.word.clone(), weights.lm * lm[i] + weights.freq * fq[i] + weights.ctx * cx[i]))
        .collect();
    items.sort_by(by_score_then_word);
    CandidateList { items }
}

/// Probability of each candidate at the target slot when it is written
/// into the sentence (not masked).
pub fn context_fit(model: &MlmModel, vocab: &Vocab, inst: &LsInstance, words: &[String]) -> Result<Vec<f64>> {
    let (ids, pos) = encode_window(model, vocab, inst);
    words
        .iter()
        .map(|w| {
            let id = vocab.id(w);
            let mut with = ids.clone();
            with[pos] = id;
            Ok(model.distribution_at(&with, pos)?[id as usize])
        })
        .collect()
}

pub fn rank_substitutions(
    model: &MlmModel,
    vocab: &Vocab,
    cands: &CandidateList,
    inst: &LsInstance,
    freq: &FreqTable,
    weights: &RankWeights,
) -> Result<CandidateList> {
    weights.validate()?;
    let words = cands.words();
    let ctx = if weights.ctx > 0.0 {
        context_fit(model, vocab, inst, &words)?
    } else {
        vec![0.0; words.len()]
    };
    let features: Vec<CandidateFeatures> = cands
        .items
        .iter()
        .zip(ctx)
        .map(|((w, p), c)| CandidateFeatures {
            word: w.clone(),
            mlm: *p,
            freq: freq.score(w),
            ctx: c,
        })
        .collect();
    Ok(combine_features(&features, weights))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Simplification {
    /// `None` when no eligible candidate exists.
    pub chosen: Option<String>,
    pub ranked: CandidateList,
}

pub fn simplify_word(
    model: &MlmModel,
    vocab: &Vocab,
    inst: &LsInstance,
    k: usize,
    freq: &FreqTable,
    weights: &RankWeights,
) -> Result<Simplification> {
    let cands = generate_candidates(model, vocab, inst, k)?;
    let ranked = rank_substitutions(model, vocab, &cands, inst, freq, weights)?;
    Ok(Simplification {
        chosen: ranked.items.first().map(|(w, _)| w.clone()),
        ranked,
    })
}

/// `target \t chosen \t cand1,cand2,...`; "no candidate" is an empty field.
pub fn output_line(inst: &LsInstance, result: &Simplification) -> String {
    format!(
        "{}\t{}\t{}",
        inst.target(),
        result.chosen.as_deref().unwrap_or(""),
        result.ranked.words().join(",")
    )
}
