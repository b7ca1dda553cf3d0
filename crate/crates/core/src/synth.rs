//! Synthetic slot-filler data. Every sentence comes from a template with one
//! slot filled by a member of a synonym group, and each group splits into
//! simple and complex members that fit the same slots.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{LsInstance, ParallelPair, Sentence};
use crate::identify::{lexicon_identify, Lexicon, DEFAULT_THRESHOLD};
use crate::text::normalize_sentence;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SynonymGroup {
    pub name: &'static str,
    pub simple: &'static [&'static str],
    pub complex: &'static [&'static str],
    /// `{}` is the slot; `{person}`, `{place}`, `{time}`, `{thing}` are fillers.
    pub templates: &'static [&'static str],
}

pub const GROUPS: &[SynonymGroup] = &[
    SynonymGroup {
        name: "big",
        simple: &["big", "large"],
        complex: &["enormous", "immense", "colossal"],
        templates: &[
            "{person} saw a {} dog in {place} {time} .",
            "they built a {} house next to {place} .",
        ],
    },
    SynonymGroup {
        name: "small",
        simple: &["small", "little", "tiny"],
        complex: &["minuscule", "diminutive"],
        templates: &[
            "{person} picked up a {} stone near {place} .",
            "we live in a {} room above {place} .",
        ],
    },
    SynonymGroup {
        name: "help",
        simple: &["help", "aid"],
        complex: &["assist", "facilitate"],
        templates: &[
            "{person} will {} us move {thing} {time} .",
            "please {} the old people who live in {place} .",
        ],
    },
    SynonymGroup {
        name: "start",
        simple: &["start", "begin"],
        complex: &["commence", "initiate"],
        templates: &[
            "the class will {} in {place} {time} .",
            "{person} wants to {} the game soon .",
        ],
    },
    SynonymGroup {
        name: "end",
        simple: &["end", "stop"],
        complex: &["terminate", "conclude"],
        templates: &[
            "the show will {} when {person} goes home .",
            "we had to {} the long talk {time} .",
        ],
    },
    SynonymGroup {
        name: "buy",
        simple: &["buy", "get"],
        complex: &["purchase", "acquire"],
        templates: &[
            "{person} went to {place} to {} {thing} .",
            "i want to {} {thing} for my mother .",
        ],
    },
    SynonymGroup {
        name: "show",
        simple: &["show", "teach"],
        complex: &["demonstrate", "exhibit"],
        templates: &[
            "{person} will {} the kids how to swim .",
            "can you {} me the way to {place} ?",
        ],
    },
    SynonymGroup {
        name: "hard",
        simple: &["hard", "tough"],
        complex: &["arduous", "strenuous"],
        templates: &[
            "the walk to {place} was very {} .",
            "{person} said the test was {} {time} .",
        ],
    },
    SynonymGroup {
        name: "fast",
        simple: &["fast", "quick"],
        complex: &["rapid", "swift"],
        templates: &[
            "{person} drove a {} car to {place} .",
            "the water in {place} was {} and cold .",
        ],
    },
    SynonymGroup {
        name: "meet",
        simple: &["meet", "see"],
        complex: &["convene", "encounter"],
        templates: &[
            "the group will {} in {place} {time} .",
            "{person} hopes to {} the new doctor .",
        ],
    },
    SynonymGroup {
        name: "bad",
        simple: &["bad", "mean", "rude"],
        complex: &["derogatory", "malicious"],
        templates: &[
            "{person} said a {} word to the boy .",
            "it was a {} thing to say in {place} .",
        ],
    },
    SynonymGroup {
        name: "many",
        simple: &["many", "lots"],
        complex: &["numerous", "myriad"],
        templates: &[
            "there were {} birds in {place} {time} .",
            "{person} has {} friends at school .",
        ],
    },
];

const PERSON: &[&str] = &[
    "the man", "the woman", "my friend", "the teacher", "our team", "the boy", "the girl", "her father",
];
const PLACE: &[&str] = &["the city", "the park", "the school", "the town", "the farm", "the river"];
const TIME: &[&str] = &["today", "yesterday", "last week", "this morning", "every day", "at night"];
const THING: &[&str] = &["the car", "a book", "the bed", "some food", "a new phone", "the bike"];

/// One generated sentence and where its slot is.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotSentence {
    pub tokens: Vec<String>,
    pub slot: usize,
    pub group: usize,
    pub complex: bool,
}

impl SlotSentence {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn slot_word(&self) -> &str {
        &self.tokens[self.slot]
    }

    /// Same sentence with the slot replaced by `word`.
    pub fn with_slot(&self, word: &str) -> Vec<String> {
        let mut t = self.tokens.clone();
        t[self.slot] = word.to_string();
        t
    }
}

fn fill(template: &str, slot_word: &str, rng: &mut ChaCha8Rng) -> (Vec<String>, usize) {
    let mut tokens = Vec::new();
    let mut slot = 0;
    for piece in template.split_whitespace() {
        let filler = match piece {
            "{}" => {
                slot = tokens.len();
                tokens.push(slot_word.to_string());
                continue;
            }
            "{person}" => PERSON,
            "{place}" => PLACE,
            "{time}" => TIME,
            "{thing}" => THING,
            word => {
                tokens.push(word.to_string());
                continue;
            }
        };
        let choice = filler.choose(rng).expect("filler lists are non-empty");
        tokens.extend(choice.split_whitespace().map(str::to_string));
    }
    (tokens, slot)
}

/// `n` sentences whose slot holds a complex member with probability
/// `complex_rate`.
pub fn generate_sentences(rng: &mut ChaCha8Rng, n: usize, complex_rate: f64) -> Vec<SlotSentence> {
    (0..n)
        .map(|_| {
            let group = rng.random_range(0..GROUPS.len());
            let g = &GROUPS[group];
            let template = g.templates.choose(rng).expect("templates");
            let complex = rng.random_bool(complex_rate);
            let pool = if complex { g.complex } else { g.simple };
            let word = pool.choose(rng).expect("synonyms");
            let (tokens, slot) = fill(template, word, rng);
            SlotSentence {
                tokens,
                slot,
                group,
                complex,
            }
        })
        .collect()
}

pub const SIMPLE_SCORE: f64 = 1.5;
pub const COMPLEX_SCORE: f64 = 5.5;
pub const FILLER_SCORE: f64 = 2.0;

/// Every word the templates can produce, with complexity scores: complex
/// synonyms above the default threshold, everything else below it.
pub fn lexicon_entries() -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    let mut put_words = |s: &str, score: f64| {
        for w in s.split_whitespace().filter(|w| !w.starts_with('{') && w.chars().any(|c| c.is_ascii_alphabetic())) {
            m.entry(w.to_string()).or_insert(score);
        }
    };
    for g in GROUPS {
        g.simple.iter().for_each(|w| put_words(w, SIMPLE_SCORE));
        g.complex.iter().for_each(|w| put_words(w, COMPLEX_SCORE));
    }
    for g in GROUPS {
        g.templates.iter().for_each(|t| put_words(t, FILLER_SCORE));
    }
    for list in [PERSON, PLACE, TIME, THING] {
        list.iter().for_each(|w| put_words(w, FILLER_SCORE));
    }
    m
}

/// Counts standing in for a large reference corpus: simple synonyms are
/// common and complex ones rare.
pub fn frequency_counts() -> BTreeMap<String, u64> {
    lexicon_entries()
        .into_iter()
        .map(|(w, s)| {
            let c = if s == COMPLEX_SCORE {
                40
            } else if s == SIMPLE_SCORE {
                4000
            } else {
                20000
            };
            (w, c)
        })
        .collect()
}

/// Lexical-simplification record for a complex-slot sentence: the target
/// is the slot and the gold set is the group's simple members.
pub fn ls_instance(s: &SlotSentence) -> LsInstance {
    LsInstance {
        tokens: s.tokens.clone(),
        target_index: s.slot,
        gold: GROUPS[s.group].simple.iter().map(|w| w.to_string()).collect(),
    }
}

pub fn ls_line(inst: &LsInstance) -> String {
    let gold: Vec<&str> = inst.gold.iter().map(String::as_str).collect();
    format!(
        "{}\t{}\t{}\t{}",
        inst.tokens.join(" "),
        inst.target_index,
        inst.target(),
        gold.join("\t")
    )
}

/// A complex-slot sentence paired with its simplification, which uses the
/// simple member at the same index (mod the group size).
pub fn simplification_pair(s: &SlotSentence) -> ParallelPair {
    let g = &GROUPS[s.group];
    let word = if s.complex {
        let i = g.complex.iter().position(|w| *w == s.slot_word()).unwrap_or(0);
        g.simple[i % g.simple.len()]
    } else {
        s.slot_word()
    };
    ParallelPair {
        source: Sentence::new(s.tokens.clone()),
        references: vec![Sentence::new(s.with_slot(word))],
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub seed: u64,
    pub ordinary_sentences: usize,
    pub simple_sentences: usize,
    /// Complex-level (0 and 1) sentences mixed into the leveled corpus.
    pub hard_level_sentences: usize,
    pub ls_instances: usize,
    pub parallel_train: usize,
    pub parallel_test: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 17,
            ordinary_sentences: 1500,
            simple_sentences: 1500,
            hard_level_sentences: 300,
            ls_instances: 600,
            parallel_train: 200,
            parallel_test: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    /// Complex-heavy text, one sentence each.
    pub ordinary: Vec<SlotSentence>,
    /// Leveled corpus as (level, sentence).
    pub leveled: Vec<(u8, SlotSentence)>,
    /// Complex-slot sentences held out from both corpora.
    pub ls: Vec<LsInstance>,
    pub parallel_train: Vec<ParallelPair>,
    pub parallel_test: Vec<ParallelPair>,
}

pub const ORDINARY_COMPLEX_RATE: f64 = 0.7;
pub const SIMPLE_COMPLEX_RATE: f64 = 0.1;

pub fn generate(cfg: &SynthConfig) -> SyntheticData {
    let mut rng = seed::rng(seed::derive(cfg.seed, "synth-ordinary"));
    let ordinary = generate_sentences(&mut rng, cfg.ordinary_sentences, ORDINARY_COMPLEX_RATE);

    let mut rng = seed::rng(seed::derive(cfg.seed, "synth-leveled"));
    let mut leveled: Vec<(u8, SlotSentence)> = Vec::new();
    for s in generate_sentences(&mut rng, cfg.simple_sentences, SIMPLE_COMPLEX_RATE) {
        leveled.push((rng.random_range(2..=4), s));
    }
    for s in generate_sentences(&mut rng, cfg.hard_level_sentences, 0.9) {
        leveled.push((rng.random_range(0..=1), s));
    }
    leveled.sort_by_key(|(l, _)| *l);

    let seen: HashSet<String> = ordinary
        .iter()
        .chain(leveled.iter().map(|(_, s)| s))
        .map(|s| normalize_sentence(&s.text()))
        .collect();
    let mut rng = seed::rng(seed::derive(cfg.seed, "synth-ls"));
    let mut ls = Vec::new();
    let mut used: HashSet<String> = HashSet::new();
    let mut attempts = 0;
    while ls.len() < cfg.ls_instances && attempts < cfg.ls_instances * 200 {
        attempts += 1;
        let s = generate_sentences(&mut rng, 1, 1.0).pop().expect("one sentence");
        let key = normalize_sentence(&s.text());
        if !seen.contains(&key) && used.insert(key) {
            ls.push(ls_instance(&s));
        }
    }

    let mut rng = seed::rng(seed::derive(cfg.seed, "synth-parallel"));
    let pairs: Vec<ParallelPair> = generate_sentences(&mut rng, cfg.parallel_train + cfg.parallel_test, 1.0)
        .iter()
        .map(simplification_pair)
        .collect();
    let (train, test) = pairs.split_at(cfg.parallel_train);

    SyntheticData {
        ordinary,
        leveled,
        ls,
        parallel_train: train.to_vec(),
        parallel_test: test.to_vec(),
    }
}

/// Copy-task pairs: each target equals its source.
pub fn copy_pairs(seed_value: u64, n: usize) -> Vec<ParallelPair> {
    let mut rng = seed::rng(seed::derive(seed_value, "synth-copy"));
    let mut out = Vec::with_capacity(n);
    let mut used = BTreeSet::new();
    while out.len() < n {
        let s = generate_sentences(&mut rng, 1, 0.5).pop().expect("one sentence");
        if used.insert(s.text()) {
            let sent = Sentence::new(s.tokens.clone());
            out.push(ParallelPair {
                source: sent.clone(),
                references: vec![sent],
            });
        }
    }
    out
}

fn lines<I: IntoIterator<Item = String>>(it: I) -> String {
    let mut s = String::new();
    for l in it {
        s.push_str(&l);
        s.push('\n');
    }
    s
}

/// Writes the data set as the files the command line tools read.
pub fn write_dir(data: &SyntheticData, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let put = |name: &str, body: String| {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    put("ordinary.txt", lines(data.ordinary.iter().map(SlotSentence::text)))?;
    let mut leveled = String::new();
    let mut current = None;
    for (level, s) in &data.leveled {
        if current != Some(*level) {
            let _ = writeln!(leveled, "#level={level}");
            current = Some(*level);
        }
        let _ = writeln!(leveled, "{}", s.text());
    }
    put("simple_leveled.txt", leveled)?;
    put(
        "lexicon.tsv",
        lines(lexicon_entries().into_iter().map(|(w, s)| format!("{w}\t{s}"))),
    )?;
    put(
        "frequency.tsv",
        lines(frequency_counts().into_iter().map(|(w, c)| format!("{w}\t{c}"))),
    )?;
    put("ls.tsv", lines(data.ls.iter().map(ls_line)))?;
    for (name, pairs) in [("train", &data.parallel_train), ("test", &data.parallel_test)] {
        put(&format!("{name}.src"), lines(pairs.iter().map(|p| p.source.text())))?;
        put(&format!("{name}.ref"), lines(pairs.iter().map(|p| p.references[0].text())))?;
    }
    let lexicon = Lexicon::from_entries(lexicon_entries(), DEFAULT_THRESHOLD)?;
    put(
        "tagged.txt",
        lines(
            data.ordinary
                .iter()
                .take(400)
                .map(|s| lexicon_identify(&Sentence::new(s.tokens.clone()), &lexicon).to_line()),
        ),
    )?;
    let copy = copy_pairs(data.ordinary.len() as u64, 100);
    put("copy.src", lines(copy.iter().map(|p| p.source.text())))?;
    Ok(())
}
