use crate::text::{has_letter, tokenize};
use crate::{Error, Result};

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Vowel groups (a e i o u y), minus a silent final "e" after a consonant,
/// never below 1. A final consonant + "le" ("simple", "table") keeps its
/// syllable.
pub fn count_syllables(word: &str) -> usize {
    let w: Vec<char> = word
        .chars()
        .filter(|c| c.is_ascii_alphabetic())
        .map(|c| c.to_ascii_lowercase())
        .collect();
    let mut groups = 0;
    let mut prev_vowel = false;
    for &c in &w {
        let v = is_vowel(c);
        if v && !prev_vowel {
            groups += 1;
        }
        prev_vowel = v;
    }
    let n = w.len();
    if n >= 2 && w[n - 1] == 'e' && !is_vowel(w[n - 2]) {
        let consonant_le = n >= 3 && w[n - 2] == 'l' && !is_vowel(w[n - 3]);
        if !consonant_le && groups > 1 {
            groups -= 1;
        }
    }
    groups.max(1)
}

/// Corpus-level Flesch-Kincaid grade over one sentence per entry:
/// `0.39 * words/sentences + 11.8 * syllables/words - 15.59`.
pub fn fkgl<S: AsRef<str>>(sentences: &[S]) -> Result<f64> {
    let toks: Vec<Vec<String>> = sentences.iter().map(|s| tokenize(s.as_ref())).collect();
    fkgl_sentences(&toks)
}

pub fn fkgl_sentences(sentences: &[Vec<String>]) -> Result<f64> {
    if sentences.is_empty() {
        return Err(Error::usage("FKGL needs at least one sentence"));
    }
    let mut words = 0usize;
    let mut syllables = 0usize;
    for s in sentences {
        for t in s.iter().filter(|t| has_letter(t)) {
            words += 1;
            syllables += count_syllables(t);
        }
    }
    if words == 0 {
        return Err(Error::usage("FKGL corpus has no words"));
    }
    let w = words as f64;
    Ok(0.39 * (w / sentences.len() as f64) + 11.8 * (syllables as f64 / w) - 15.59)
}
