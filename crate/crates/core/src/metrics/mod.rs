//! Evaluation measures for substitution generation, the full lexical
//! simplification pipeline, and sentence simplification.

mod readability;
mod sari;

use std::borrow::Borrow;
use std::collections::{BTreeSet, HashSet};

use serde::Serialize;

pub use readability::{count_syllables, fkgl, fkgl_sentences};
pub use sari::{sari, sari_sentence, NgramScores, SariBreakdown};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SgScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Micro-averaged precision, recall and F1 of candidate lists against gold
/// sets. Candidates are compared lowercased; duplicates count once.
pub fn sg_prf<C, G>(candidates: &[C], gold: &[G]) -> Result<SgScore>
where
    C: AsRef<[String]>,
    G: Borrow<BTreeSet<String>>,
{
    if candidates.len() != gold.len() {
        return Err(Error::usage(format!(
            "{} candidate lists but {} gold sets",
            candidates.len(),
            gold.len()
        )));
    }
    let (mut hits, mut proposed, mut expected) = (0usize, 0usize, 0usize);
    for (c, g) in candidates.iter().zip(gold) {
        let c: HashSet<String> = c.as_ref().iter().map(|w| w.to_lowercase()).collect();
        let g = g.borrow();
        hits += c.iter().filter(|w| g.contains(*w)).count();
        proposed += c.len();
        expected += g.len();
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(hits, proposed);
    let recall = ratio(hits, expected);
    Ok(SgScore {
        precision,
        recall,
        f1: f1(precision, recall),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipelineScore {
    pub precision: f64,
    pub accuracy: f64,
    pub changed: usize,
    pub total: usize,
}

/// `chosen[i]` is `None` when the system produced no candidate.
///
/// precision = correct changes / changes; accuracy = correct changes / instances.
/// A change counts only when the chosen word differs from the target.
pub fn pipeline_pa<G: Borrow<BTreeSet<String>>>(
    chosen: &[Option<String>],
    gold: &[G],
    targets: &[String],
) -> Result<PipelineScore> {
    if chosen.len() != gold.len() || chosen.len() != targets.len() {
        return Err(Error::usage("pipeline inputs are not aligned"));
    }
    let (mut changed, mut correct) = (0usize, 0usize);
    for ((c, g), t) in chosen.iter().zip(gold).zip(targets) {
        let Some(word) = c else { continue };
        let word = word.to_lowercase();
        if word == t.to_lowercase() {
            continue;
        }
        changed += 1;
        if g.borrow().contains(&word) {
            correct += 1;
        }
    }
    let total = chosen.len();
    Ok(PipelineScore {
        precision: if changed == 0 { 0.0 } else { correct as f64 / changed as f64 },
        accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        changed,
        total,
    })
}
