//! Building MLM training instances from tagged sentences.
//!
//! Under [`MaskMode::Selective`] only simple-tagged words are candidates
//! and each is masked independently with probability `rate`. Under
//! [`MaskMode::Random`] every word is a candidate, which is the original
//! random-masking objective.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::identify::TaggedSentence;
use crate::mlm::Vocab;
use crate::{seed, Error, Result};

pub const DEFAULT_RATE: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MaskMode {
    Selective,
    Random,
}

impl std::str::FromStr for MaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "selective" => Ok(MaskMode::Selective),
            "random" => Ok(MaskMode::Random),
            other => Err(Error::usage(format!("unknown mask mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Replacement {
    /// The selected token always becomes `[MASK]`.
    PureMask,
    /// 80% `[MASK]`, 10% a random word, 10% unchanged.
    Bert801010,
}

impl std::str::FromStr for Replacement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mask" | "pure" => Ok(Replacement::PureMask),
            "bert" | "80-10-10" => Ok(Replacement::Bert801010),
            other => Err(Error::usage(format!("unknown replacement scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaskPolicy {
    pub mode: MaskMode,
    pub rate: f64,
    pub replacement: Replacement,
    pub whole_word: bool,
    pub seed: u64,
}

impl Default for MaskPolicy {
    fn default() -> Self {
        MaskPolicy {
            mode: MaskMode::Selective,
            rate: DEFAULT_RATE,
            replacement: Replacement::PureMask,
            whole_word: true,
            seed: 0,
        }
    }
}

impl MaskPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::usage(format!("mask rate {} outside [0, 1]", self.rate)));
        }
        Ok(())
    }

    /// Same policy with masks re-drawn for `epoch`.
    pub fn for_epoch(&self, epoch: usize) -> Self {
        MaskPolicy {
            seed: seed::derive_indexed(self.seed, "epoch", epoch as u64),
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedInstance {
    /// `[CLS] w_1 .. w_k [SEP]`, possibly followed by padding.
    pub input_ids: Vec<u32>,
    /// Strictly increasing, never the `[CLS]`/`[SEP]` slots.
    pub mask_positions: Vec<usize>,
    pub targets: Vec<u32>,
    /// Sequence length without padding.
    pub n: usize,
    /// Index of the source sentence in the tagged corpus.
    pub sentence_index: usize,
}

impl MaskedInstance {
    pub fn new(input_ids: Vec<u32>, mask_positions: Vec<usize>, targets: Vec<u32>, sentence_index: usize) -> Self {
        let n = input_ids.len();
        MaskedInstance {
            input_ids,
            mask_positions,
            targets,
            n,
            sentence_index,
        }
    }

    pub fn ids(&self) -> &[u32] {
        &self.input_ids[..self.n]
    }

    /// `input_ids \t mask_positions \t targets`, space-separated.
    pub fn to_line(&self) -> String {
        let join = |xs: &mut dyn Iterator<Item = String>| xs.collect::<Vec<_>>().join(" ");
        format!(
            "{}\t{}\t{}",
            join(&mut self.ids().iter().map(|x| x.to_string())),
            join(&mut self.mask_positions.iter().map(|x| x.to_string())),
            join(&mut self.targets.iter().map(|x| x.to_string())),
        )
    }

    pub fn parse_line(line: &str) -> std::result::Result<Self, String> {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(format!("expected 3 tab-separated columns, found {}", cols.len()));
        }
        fn nums<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, String> {
            s.split_whitespace()
                .map(|x| x.parse().map_err(|_| format!("'{x}' is not a number")))
                .collect()
        }
        let inst = MaskedInstance::new(nums(cols[0])?, nums(cols[1])?, nums(cols[2])?, 0);
        if inst.targets.len() != inst.mask_positions.len() {
            return Err("targets and mask positions differ in length".into());
        }
        if inst.mask_positions.windows(2).any(|w| w[0] >= w[1])
            || inst.mask_positions.iter().any(|&p| p == 0 || p + 1 >= inst.n)
        {
            return Err("mask positions must be increasing and inside the sentence".into());
        }
        Ok(inst)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MaskingStats {
    pub sentences: usize,
    pub truncated: usize,
    pub dropped_no_mask: usize,
}

/// Masks one sentence with the randomness of `(policy.seed, index)`.
///
/// Returns the instance (or `None` when nothing was masked) and whether
/// the sentence was truncated to fit `max_seq_len`.
pub fn make_instance(
    tagged: &TaggedSentence,
    index: usize,
    vocab: &Vocab,
    policy: &MaskPolicy,
    max_seq_len: usize,
) -> (Option<MaskedInstance>, bool) {
    let window = max_seq_len.saturating_sub(2);
    let truncated = tagged.tokens.len() > window;
    let words = &tagged.tokens[..tagged.tokens.len().min(window)];
    let mut rng = seed::rng(seed::derive_indexed(policy.seed, "mask", index as u64));

    // Decisions are drawn per word. With a word-level vocabulary each word
    // is one piece, so whole-word masking holds by construction.
    let mut ids = Vec::with_capacity(words.len() + 2);
    ids.push(Vocab::CLS_ID);
    ids.extend(words.iter().map(|w| vocab.id(w)));
    ids.push(Vocab::SEP_ID);
    let mut positions = Vec::new();
    let mut targets = Vec::new();
    for (i, tag) in tagged.tags[..words.len()].iter().enumerate() {
        let eligible = match policy.mode {
            MaskMode::Selective => tag.is_simple(),
            MaskMode::Random => true,
        };
        // One draw per word regardless of eligibility keeps the stream of
        // decisions aligned across modes.
        let draw: f64 = rng.random();
        if !eligible || draw >= policy.rate {
            continue;
        }
        let pos = i + 1;
        targets.push(ids[pos]);
        positions.push(pos);
        ids[pos] = match policy.replacement {
            Replacement::PureMask => Vocab::MASK_ID,
            Replacement::Bert801010 => {
                let r: f64 = rng.random();
                if r < 0.8 {
                    Vocab::MASK_ID
                } else if r < 0.9 && vocab.len() > Vocab::NUM_SPECIAL {
                    rng.random_range(Vocab::NUM_SPECIAL as u32..vocab.len() as u32)
                } else {
                    ids[pos]
                }
            }
        };
    }
    if positions.is_empty() {
        return (None, truncated);
    }
    (Some(MaskedInstance::new(ids, positions, targets, index)), truncated)
}

/// Masks a corpus; parallel over sentences with per-sentence seeds, so
/// the result equals serial generation.
pub fn make_instances(
    corpus: &[TaggedSentence],
    vocab: &Vocab,
    policy: &MaskPolicy,
    max_seq_len: usize,
) -> Result<(Vec<MaskedInstance>, MaskingStats)> {
    policy.validate()?;
    if max_seq_len < 3 {
        return Err(Error::usage("max_seq_len must leave room for one word"));
    }
    let results: Vec<(Option<MaskedInstance>, bool)> = corpus
        .par_iter()
        .enumerate()
        .map(|(i, s)| make_instance(s, i, vocab, policy, max_seq_len))
        .collect();
    let mut stats = MaskingStats {
        sentences: corpus.len(),
        ..MaskingStats::default()
    };
    let mut out = Vec::new();
    for (inst, truncated) in results {
        stats.truncated += truncated as usize;
        match inst {
            Some(i) => out.push(i),
            None => stats.dropped_no_mask += 1,
        }
    }
    if stats.truncated > 0 {
        log::warn!("{} sentences truncated to {} tokens", stats.truncated, max_seq_len);
    }
    Ok((out, stats))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MaskRateReport {
    pub simple_mask_rate: f64,
    pub complex_mask_rate: f64,
    pub total_masks: usize,
    pub simple_tokens: usize,
    pub complex_tokens: usize,
}

pub fn mask_rate_report(instances: &[MaskedInstance], corpus: &[TaggedSentence]) -> MaskRateReport {
    let mut r = MaskRateReport::default();
    for s in corpus {
        let simple = s.tags.iter().filter(|t| t.is_simple()).count();
        r.simple_tokens += simple;
        r.complex_tokens += s.tags.len() - simple;
    }
    let mut simple_masks = 0usize;
    let mut complex_masks = 0usize;
    for inst in instances {
        let tags = &corpus[inst.sentence_index].tags;
        for &pos in &inst.mask_positions {
            if tags[pos - 1].is_simple() {
                simple_masks += 1;
            } else {
                complex_masks += 1;
            }
        }
    }
    r.total_masks = simple_masks + complex_masks;
    let rate = |m: usize, n: usize| if n == 0 { 0.0 } else { m as f64 / n as f64 };
    r.simple_mask_rate = rate(simple_masks, r.simple_tokens);
    r.complex_mask_rate = rate(complex_masks, r.complex_tokens);
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identify::ComplexityTag::{Complex, Simple};
    use proptest::prelude::*;

    fn vocab() -> Vocab {
        let words: Vec<String> = (0..20).map(|i| format!("w{i}")).collect();
        Vocab::build(std::iter::once(&words[..]), 1)
    }

    fn sentence(tags: &[crate::identify::ComplexityTag]) -> TaggedSentence {
        let tokens = (0..tags.len()).map(|i| format!("w{}", i % 20)).collect();
        TaggedSentence::new(tokens, tags.to_vec()).unwrap()
    }

    fn policy(mode: MaskMode, rate: f64) -> MaskPolicy {
        MaskPolicy {
            mode,
            rate,
            seed: 11,
            ..MaskPolicy::default()
        }
    }

    #[test]
    fn rate_one_masks_exactly_simple() {
        let s = sentence(&[Simple, Complex, Simple]);
        let (inst, _) = make_instances(&[s], &vocab(), &policy(MaskMode::Selective, 1.0), 16).unwrap();
        assert_eq!(inst.len(), 1);
        assert_eq!(inst[0].mask_positions, vec![1, 3]);
        assert_eq!(inst[0].input_ids[1], Vocab::MASK_ID);
        assert_eq!(inst[0].input_ids[2], vocab().id("w1"));
        assert_eq!(inst[0].targets, vec![vocab().id("w0"), vocab().id("w2")]);
    }

    #[test]
    fn rate_zero_yields_nothing() {
        let s = sentence(&[Simple; 5]);
        let (inst, stats) = make_instances(&[s], &vocab(), &policy(MaskMode::Random, 0.0), 16).unwrap();
        assert!(inst.is_empty());
        assert_eq!(stats.dropped_no_mask, 1);
    }

    #[test]
    fn truncation_is_counted() {
        let s = sentence(&[Simple; 30]);
        let (inst, stats) = make_instances(&[s], &vocab(), &policy(MaskMode::Selective, 1.0), 10).unwrap();
        assert_eq!(stats.truncated, 1);
        assert_eq!(inst[0].n, 10);
        assert_eq!(*inst[0].mask_positions.last().unwrap(), 8);
    }

    #[test]
    fn bad_rate_rejected() {
        assert!(make_instances(&[], &vocab(), &policy(MaskMode::Random, 1.5), 16).is_err());
    }

    #[test]
    fn selective_rate_report() {
        let corpus: Vec<_> = (0..200).map(|_| sentence(&[Simple, Complex, Simple, Complex, Simple])).collect();
        let (inst, _) = make_instances(&corpus, &vocab(), &policy(MaskMode::Selective, 0.5), 16).unwrap();
        let r = mask_rate_report(&inst, &corpus);
        assert_eq!(r.complex_mask_rate, 0.0);
        assert!(r.total_masks > 0);
        assert_eq!(mask_rate_report(&[], &corpus).total_masks, 0);
    }

    #[test]
    fn seeds_and_epochs() {
        let corpus: Vec<_> = (0..100).map(|_| sentence(&[Simple; 10])).collect();
        let p = policy(MaskMode::Selective, 0.3);
        let a = make_instances(&corpus, &vocab(), &p, 16).unwrap().0;
        let b = make_instances(&corpus, &vocab(), &p, 16).unwrap().0;
        assert_eq!(a, b);
        let c = make_instances(&corpus, &vocab(), &p.for_epoch(1), 16).unwrap().0;
        assert_ne!(a, c);
    }

    #[test]
    fn bert_replacement_keeps_targets() {
        let corpus: Vec<_> = (0..300).map(|_| sentence(&[Simple; 10])).collect();
        let p = MaskPolicy {
            replacement: Replacement::Bert801010,
            ..policy(MaskMode::Selective, 0.5)
        };
        let (inst, _) = make_instances(&corpus, &vocab(), &p, 16).unwrap();
        let (mut masked, mut total) = (0, 0);
        for i in &inst {
            for (&pos, &t) in i.mask_positions.iter().zip(&i.targets) {
                total += 1;
                masked += (i.input_ids[pos] == Vocab::MASK_ID) as usize;
                assert_eq!(t, vocab().id(&corpus[i.sentence_index].tokens[pos - 1]));
            }
        }
        let frac = masked as f64 / total as f64;
        assert!((frac - 0.8).abs() < 0.05, "{frac}");
    }

    #[test]
    fn line_format() {
        let i = MaskedInstance::new(vec![2, 4, 7, 3], vec![1], vec![9], 0);
        let line = i.to_line();
        assert_eq!(line, "2 4 7 3\t1\t9");
        assert_eq!(MaskedInstance::parse_line(&line).unwrap(), i);
        assert!(MaskedInstance::parse_line("2 4 3\t0\t9").is_err());
    }

    fn tag_strategy() -> impl Strategy<Value = Vec<Vec<bool>>> {
        proptest::collection::vec(proptest::collection::vec(any::<bool>(), 1..15), 1..20)
    }

    proptest! {
        #[test]
        fn selective_masks_only_simple(tags in tag_strategy(), rate in 0.0f64..=1.0, seed in any::<u64>()) {
            let corpus: Vec<_> = tags.iter()
                .map(|ts| sentence(&ts.iter().map(|&s| if s { Simple } else { Complex }).collect::<Vec<_>>()))
                .collect();
            let p = MaskPolicy { seed, ..policy(MaskMode::Selective, rate) };
            let (inst, _) = make_instances(&corpus, &vocab(), &p, 12).unwrap();
            for i in &inst {
                prop_assert_eq!(i.targets.len(), i.mask_positions.len());
                prop_assert!(i.mask_positions.windows(2).all(|w| w[0] < w[1]));
                for &pos in &i.mask_positions {
                    prop_assert!(pos >= 1 && pos + 2 <= i.n);
                    prop_assert!(corpus[i.sentence_index].tags[pos - 1].is_simple());
                }
            }
        }
    }
}
