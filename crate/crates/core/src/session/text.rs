/// Emits the whitespace-delimited words of `text` in reverse order, joined by
/// single spaces. Punctuation stays attached to its word.
pub fn reverse_words(text: &str) -> String {
    let words: Vec<&str> = text.split_whitespace().rev().collect();
    words.join(" ")
}

/// Number of Unicode scalar values in `text`.
pub fn character_count(text: &str) -> usize {
    text.chars().count()
}
