//! Word-level text helpers shared by every module.

/// True when the token contains at least one ASCII letter.
///
/// Tokens without letters (numbers, punctuation) are never treated as
/// words that can be simple.
pub fn has_letter(token: &str) -> bool {
    token.bytes().any(|b| b.is_ascii_alphabetic())
}

/// Whitespace split, with leading and trailing punctuation detached into
/// one token per character.
pub fn tokenize(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in line.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut start = 0;
        let mut end = chars.len();
        while start < end && chars[start].is_ascii_punctuation() {
            start += 1;
        }
        while end > start && chars[end - 1].is_ascii_punctuation() {
            end -= 1;
        }
        // A chunk made only of punctuation is kept whole.
        if start == end {
            out.push(chunk.to_string());
            continue;
        }
        out.extend(chars[..start].iter().map(|c| c.to_string()));
        out.push(chars[start..end].iter().collect());
        out.extend(chars[end..].iter().map(|c| c.to_string()));
    }
    out
}

/// Lowercase and collapse whitespace. Used for every equality test
/// between sentences.
pub fn normalize_sentence(line: &str) -> String {
    line.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn word_count(tokens: &[String]) -> usize {
    tokens.iter().filter(|t| has_letter(t)).count()
}
