//! Independent reference implementations shared by the integration tests
//! and the acceptance runner.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use selmask::nn::ParamSet;

/// Set arithmetic with explicit loops, no hashing.
pub fn sg_oracle(cands: &[Vec<String>], gold: &[BTreeSet<String>]) -> (f64, f64, f64) {
    let mut hits = 0usize;
    let mut proposed = 0usize;
    let mut expected = 0usize;
    for (c, g) in cands.iter().zip(gold) {
        let mut seen: Vec<String> = Vec::new();
        for w in c {
            let w = w.to_lowercase();
            if !seen.contains(&w) {
                seen.push(w);
            }
        }
        proposed += seen.len();
        expected += g.len();
        hits += seen.iter().filter(|w| g.iter().any(|x| x == *w)).count();
    }
    let p = if proposed == 0 { 0.0 } else { hits as f64 / proposed as f64 };
    let r = if expected == 0 { 0.0 } else { hits as f64 / expected as f64 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

type Gram = Vec<String>;

/// Every n-gram occurrence, repeated `times`.
fn multiset(text: &str, n: usize, times: usize) -> Vec<Gram> {
    let toks: Vec<String> = text.split_whitespace().map(|t| t.to_lowercase()).collect();
    let mut out = Vec::new();
    for _ in 0..times {
        if toks.len() >= n {
            for i in 0..=toks.len() - n {
                out.push(toks[i..i + n].to_vec());
            }
        }
    }
    out
}

fn count(ms: &[Gram], g: &Gram) -> usize {
    ms.iter().filter(|x| *x == g).count()
}

fn distinct(ms: &[Gram]) -> Vec<Gram> {
    let mut d: Vec<Gram> = Vec::new();
    for g in ms {
        if !d.contains(g) {
            d.push(g.clone());
        }
    }
    d
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// (add F1, keep F1, delete precision) for one sentence and order.
pub fn sari_order_oracle(src: &str, out: &str, refs: &[String], n: usize) -> (f64, f64, f64) {
    let r = refs.len();
    let s = multiset(src, n, r);
    let c = multiset(out, n, r);
    let mut rf: Vec<Gram> = Vec::new();
    for x in refs {
        rf.extend(multiset(x, n, 1));
    }
    let src_set = distinct(&s);

    let mut kp = Vec::new();
    let mut kr_num = Vec::new();
    let mut retained = 0usize;
    let mut deleted = Vec::new();
    let mut refs_delete = false;
    for g in &src_set {
        let (sc, cc, rc) = (count(&s, g), count(&c, g), count(&rf, g));
        let kept = sc.min(cc);
        if kept > 0 {
            kp.push(kept.min(rc) as f64 / kept as f64);
        }
        let ret = sc.min(rc);
        if ret > 0 {
            retained += 1;
            kr_num.push(kept.min(rc) as f64 / ret as f64);
        }
        if sc > cc {
            let d = sc - cc;
            deleted.push(d.saturating_sub(rc) as f64 / d as f64);
        }
        if sc > rc {
            refs_delete = true;
        }
    }
    let keep_p = if kp.is_empty() { 0.0 } else { kp.iter().sum::<f64>() / kp.len() as f64 };
    let keep_r = if retained == 0 { 0.0 } else { kr_num.iter().sum::<f64>() / retained as f64 };
    let del_p = if deleted.is_empty() {
        if refs_delete {
            0.0
        } else {
            1.0
        }
    } else {
        deleted.iter().sum::<f64>() / deleted.len() as f64
    };

    let added: Vec<Gram> = distinct(&c).into_iter().filter(|g| !src_set.contains(g)).collect();
    let wanted: Vec<Gram> = distinct(&rf).into_iter().filter(|g| !src_set.contains(g)).collect();
    let good = added.iter().filter(|g| wanted.contains(g)).count();
    let add_p = if added.is_empty() { 0.0 } else { good as f64 / added.len() as f64 };
    let add_r = if wanted.is_empty() { 0.0 } else { good as f64 / wanted.len() as f64 };
    (f1(add_p, add_r), f1(keep_p, keep_r), del_p)
}

pub fn sari_oracle(srcs: &[String], outs: &[String], refs: &[Vec<String>]) -> f64 {
    let (mut a, mut k, mut d) = (0.0, 0.0, 0.0);
    for ((s, o), r) in srcs.iter().zip(outs).zip(refs) {
        for n in 1..=4 {
            let (x, y, z) = sari_order_oracle(s, o, r, n);
            a += x;
            k += y;
            d += z;
        }
    }
    let m = (srcs.len() * 4) as f64;
    100.0 * (a / m + k / m + d / m) / 3.0
}

const WORDS: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

fn random_sentence(rng: &mut ChaCha8Rng, max_len: usize) -> String {
    let n = rng.random_range(0..=max_len);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// Small SARI corpora over a six-word alphabet, so n-grams collide often.
pub fn random_sari_case(rng: &mut ChaCha8Rng) -> (Vec<String>, Vec<String>, Vec<Vec<String>>) {
    let m = rng.random_range(1..=3);
    let mut srcs = Vec::new();
    let mut outs = Vec::new();
    let mut refs = Vec::new();
    for _ in 0..m {
        srcs.push(random_sentence(rng, 6));
        outs.push(random_sentence(rng, 6));
        let r = rng.random_range(1..=3);
        refs.push((0..r).map(|_| random_sentence(rng, 6)).collect());
    }
    (srcs, outs, refs)
}

/// At most 5 instances of at most 6 words each.
pub fn random_sg_case(rng: &mut ChaCha8Rng) -> (Vec<Vec<String>>, Vec<BTreeSet<String>>) {
    let m = rng.random_range(1..=5);
    let mut cands = Vec::new();
    let mut gold = Vec::new();
    for _ in 0..m {
        let nc = rng.random_range(0..=6);
        cands.push((0..nc).map(|_| WORDS.choose(rng).unwrap().to_string()).collect());
        let ng = rng.random_range(0..=6);
        gold.push((0..ng).map(|_| WORDS.choose(rng).unwrap().to_string()).collect());
    }
    (cands, gold)
}

/// Sentences with hand-counted words and syllables.
pub const FKGL_FIXTURES: &[(&[&str], f64)] = &[
    // 6 words, 6 syllables
    (&["the cat sat on the mat ."], -1.45),
    // sim-ple ta-ble: 2 words, 4 syllables
    (&["simple table"], 8.79),
    // 2 sentences, 6 one-syllable words
    (&["i like cake .", "we ran home ."], -2.62),
    // beau-ti-ful day to-day: 3 words, 6 syllables
    (&["beautiful day today"], 9.18),
    // digits and punctuation are not words: 4 words, 4 syllables
    (&["he has 3 dogs , 2 cats ."], -2.23),
    // read-a-bil-i-ty
    (&["readability"], 43.8),
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Compares `analytic` with central differences of `loss` at `count`
/// sampled parameters. Returns the worst relative error.
pub fn grad_check(params: &ParamSet, analytic: &ParamSet, count: usize, loss: impl Fn(&ParamSet) -> f64) -> f64 {
    let total = params.num_params();
    let mut r = rng(99);
    let mut worst: f64 = 0.0;
    let h = 1e-5;
    for _ in 0..count {
        let k = r.random_range(0..total);
        let mut p = params.clone();
        let x = p.get_flat(k);
        p.set_flat(k, x + h);
        let up = loss(&p);
        p.set_flat(k, x - h);
        let down = loss(&p);
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.get_flat(k);
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}
