//! Text normalization and tokenization shared by every module.
//!
//! One tokenizer is used everywhere: lowercase, split on anything that is not
//! alphanumeric. The English stopword list is pinned in `stopwords_en.txt`.

use std::collections::HashSet;
use std::sync::OnceLock;

use unicode_normalization::UnicodeNormalization;

static STOPWORDS_EN: &str = include_str!("stopwords_en.txt");

fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_EN
            .lines()
            .map(str::trim)
            .filter(|w| !w.is_empty())
            .collect()
    })
}

pub fn is_stopword(token: &str) -> bool {
    stopwords().contains(token)
}

/// NFC normalization with surrounding whitespace removed.
pub fn normalize(s: &str) -> String {
    s.nfc().collect::<String>().trim().to_string()
}

/// Lowercased alphanumeric runs, in order.
pub fn word_tokens(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Word tokens with stopwords removed.
pub fn content_tokens(s: &str) -> Vec<String> {
    word_tokens(s)
        .into_iter()
        .filter(|t| !is_stopword(t))
        .collect()
}

/// Unigram and bigram candidate phrases.
///
/// A bigram never spans a stopword or punctuation other than a hyphen, so
/// "mining of text, graphs" yields `mining`, `text`, `graphs` and no bigram.
/// Output is in first-occurrence order with duplicates removed.
pub fn candidate_phrases(s: &str) -> Vec<String> {
    let lower = s.to_lowercase();
    // (token, preceded by a chunk-breaking separator)
    let mut tokens: Vec<(&str, bool)> = Vec::new();
    let mut start: Option<usize> = None;
    let mut breaking = false;
    for (i, c) in lower.char_indices() {
        if c.is_alphanumeric() {
            start.get_or_insert(i);
            continue;
        }
        if let Some(s0) = start.take() {
            tokens.push((&lower[s0..i], breaking));
            breaking = false;
        }
        if !(c.is_whitespace() || c == '-') {
            breaking = true;
        }
    }
    if let Some(s0) = start {
        tokens.push((&lower[s0..], breaking));
    }

    let mut chunks: Vec<Vec<&str>> = vec![Vec::new()];
    for (tok, breaks) in tokens {
        let stop = is_stopword(tok);
        if (breaks || stop) && !chunks.last().is_some_and(Vec::is_empty) {
            chunks.push(Vec::new());
        }
        if !stop {
            chunks.last_mut().expect("non-empty").push(tok);
        }
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for chunk in &chunks {
        for (i, tok) in chunk.iter().enumerate() {
            if seen.insert(tok.to_string()) {
                out.push(tok.to_string());
            }
            if let Some(next) = chunk.get(i + 1) {
                let bigram = format!("{tok} {next}");
                if seen.insert(bigram.clone()) {
                    out.push(bigram);
                }
            }
        }
    }
    out
}

/// Truncate to at most `max_chars` characters on a char boundary.
pub fn truncate_chars(s: &str, max_chars: usize) -> &str {
    match s.char_indices().nth(max_chars) {
        Some((idx, _)) => &s[..idx],
        None => s,
    }
}
