//! SARI over lowercased whitespace tokens, n = 1..4.
//!
//! Per sentence and n-gram order, with source counts and output counts
//! replicated by the number of references (`R`) and reference counts summed:
//!
//! * add: set-based F1 of output-but-not-source n-grams against
//!   reference-but-not-source n-grams;
//! * keep: F1 where precision averages `min(keep, ref) / keep` over n-grams
//!   kept by the output and recall averages `min(keep, ref) / min(src, ref)`
//!   over n-grams the references retain from the source;
//! * delete: precision averaging `max(0, del - ref) / del` over n-grams the
//!   output removes from the source.
//!
//! Zero denominators score 0, except delete precision, which is 1 when
//! neither the output nor the references remove anything.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::f1;
use crate::{Error, Result};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct NgramScores {
    pub add_f1: f64,
    pub keep_f1: f64,
    pub del_precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SariBreakdown {
    /// Corpus means per n-gram order, index 0 is unigrams.
    pub per_order: [NgramScores; MAX_ORDER],
    pub add: f64,
    pub keep: f64,
    pub delete: f64,
    /// `100 * (add + keep + delete) / 3`, in [0, 100].
    pub total: f64,
}

type Counts<'a> = BTreeMap<&'a [String], usize>;

fn tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_lowercase).collect()
}

fn ngrams(toks: &[String], n: usize, scale: usize) -> Counts<'_> {
    let mut m = BTreeMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *m.entry(w).or_default() += scale;
        }
    }
    m
}

fn get(m: &Counts<'_>, g: &[String]) -> usize {
    m.get(g).copied().unwrap_or(0)
}

fn order_scores(src: &[String], out: &[String], refs: &[Vec<String>], n: usize) -> NgramScores {
    let r = refs.len();
    let s_rep = ngrams(src, n, r);
    let c_rep = ngrams(out, n, r);
    let mut ref_counts: Counts<'_> = BTreeMap::new();
    for rt in refs {
        for (g, c) in ngrams(rt, n, 1) {
            *ref_counts.entry(g).or_default() += c;
        }
    }

    // keep
    let kept: Vec<(&[String], usize)> = s_rep
        .iter()
        .filter_map(|(g, &s)| {
            let k = s.min(get(&c_rep, g));
            (k > 0).then_some((*g, k))
        })
        .collect();
    let keep_good = |g: &[String], k: usize| k.min(get(&ref_counts, g));
    let keep_p = if kept.is_empty() {
        0.0
    } else {
        kept.iter().map(|&(g, k)| keep_good(g, k) as f64 / k as f64).sum::<f64>() / kept.len() as f64
    };
    let kept_map: BTreeMap<&[String], usize> = kept.iter().copied().collect();
    let retained: Vec<(&[String], usize)> = s_rep
        .iter()
        .filter_map(|(g, &s)| {
            let a = s.min(get(&ref_counts, g));
            (a > 0).then_some((*g, a))
        })
        .collect();
    let keep_r = if retained.is_empty() {
        0.0
    } else {
        retained
            .iter()
            .map(|&(g, a)| keep_good(g, kept_map.get(g).copied().unwrap_or(0)) as f64 / a as f64)
            .sum::<f64>()
            / retained.len() as f64
    };

    // delete
    let deleted: Vec<(&[String], usize)> = s_rep
        .iter()
        .filter_map(|(g, &s)| {
            let d = s.saturating_sub(get(&c_rep, g));
            (d > 0).then_some((*g, d))
        })
        .collect();
    let refs_delete = s_rep.iter().any(|(g, &s)| s > get(&ref_counts, g));
    let del_p = if deleted.is_empty() {
        if refs_delete {
            0.0
        } else {
            1.0
        }
    } else {
        deleted
            .iter()
            .map(|&(g, d)| d.saturating_sub(get(&ref_counts, g)) as f64 / d as f64)
            .sum::<f64>()
            / deleted.len() as f64
    };

    // add
    let added_sys: BTreeSet<&[String]> = c_rep.keys().copied().filter(|g| !s_rep.contains_key(g)).collect();
    let added_ref: BTreeSet<&[String]> = ref_counts.keys().copied().filter(|g| !s_rep.contains_key(g)).collect();
    let good = added_sys.intersection(&added_ref).count();
    let add_p = if added_sys.is_empty() { 0.0 } else { good as f64 / added_sys.len() as f64 };
    let add_r = if added_ref.is_empty() { 0.0 } else { good as f64 / added_ref.len() as f64 };

    NgramScores {
        add_f1: f1(add_p, add_r),
        keep_f1: f1(keep_p, keep_r),
        del_precision: del_p,
    }
}

/// Component scores for one sentence, per n-gram order.
pub fn sari_sentence<S: AsRef<str>>(source: &str, output: &str, references: &[S]) -> Result<[NgramScores; MAX_ORDER]> {
    if references.is_empty() {
        return Err(Error::usage("SARI needs at least one reference"));
    }
    let src = tokens(source);
    let out = tokens(output);
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokens(r.as_ref())).collect();
    let mut scores = [NgramScores::default(); MAX_ORDER];
    for (n, s) in scores.iter_mut().enumerate() {
        *s = order_scores(&src, &out, &refs, n + 1);
    }
    Ok(scores)
}

/// Corpus SARI: each component is averaged over sentences and n-gram
/// orders before combining.
pub fn sari<A, B, R, S>(sources: &[A], outputs: &[B], references: &[R]) -> Result<SariBreakdown>
where
    A: AsRef<str>,
    B: AsRef<str>,
    R: AsRef<[S]>,
    S: AsRef<str>,
{
    if sources.len() != outputs.len() || sources.len() != references.len() {
        return Err(Error::usage(format!(
            "SARI inputs are not aligned: {} sources, {} outputs, {} reference lists",
            sources.len(),
            outputs.len(),
            references.len()
        )));
    }
    if sources.is_empty() {
        return Err(Error::usage("SARI needs at least one sentence"));
    }
    let mut per_order = [NgramScores::default(); MAX_ORDER];
    for ((s, o), r) in sources.iter().zip(outputs).zip(references) {
        let sent = sari_sentence(s.as_ref(), o.as_ref(), r.as_ref())?;
        for (acc, x) in per_order.iter_mut().zip(sent) {
            acc.add_f1 += x.add_f1;
            acc.keep_f1 += x.keep_f1;
            acc.del_precision += x.del_precision;
        }
    }
    let n = sources.len() as f64;
    for acc in per_order.iter_mut() {
        acc.add_f1 /= n;
        acc.keep_f1 /= n;
        acc.del_precision /= n;
    }
    let mean = |f: fn(&NgramScores) -> f64| per_order.iter().map(f).sum::<f64>() / MAX_ORDER as f64;
    let add = mean(|s| s.add_f1);
    let keep = mean(|s| s.keep_f1);
    let delete = mean(|s| s.del_precision);
    Ok(SariBreakdown {
        per_order,
        add,
        keep,
        delete,
        total: 100.0 * (add + keep + delete) / 3.0,
    })
}
