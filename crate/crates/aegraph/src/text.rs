//! Small text helpers shared by the encoder, chunker, and name canonicalization.

/// Case-folds and collapses internal whitespace runs to single spaces.
/// Used for canonical entity names and query dedup, so two surface forms
/// that differ only in case or spacing compare equal.
pub fn normalize(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut pending_space = false;
    for ch in s.trim().chars() {
        if ch.is_whitespace() {
            pending_space = true;
            continue;
        }
        if pending_space && !out.is_empty() {
            out.push(' ');
        }
        pending_space = false;
        for c in ch.to_lowercase() {
            out.push(c);
        }
    }
    out
}

/// Whitespace tokenization; the token unit used by the chunker and the
/// context budget accounting.
pub fn tokens(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

pub fn count_tokens(s: &str) -> usize {
    s.split_whitespace().count()
}
