//! Whitespace tokenization and token normalization.
//!
//! Every word count and highlight index in the pipeline refers to the
//! tokens produced by [`tokenize`]: maximal runs of non-whitespace
//! characters, split on runs of Unicode whitespace. Normalization is only
//! used for quote matching and never changes the reported indices.

/// Splits `text` on runs of Unicode whitespace.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Number of whitespace tokens in `text`.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Lowercases a token and strips every non-alphanumeric character.
///
/// `"Fortnite",` becomes `fortnite`; a token of pure punctuation such as
/// `--` becomes the empty string.
pub fn normalize_token(token: &str) -> String {
    token
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(|c| c.to_lowercase())
        .collect()
}

/// Normalized forms of the whitespace tokens of `text`, position-aligned
/// with [`tokenize`]. Tokens that normalize to nothing stay in place as
/// empty strings so indices keep their meaning.
pub fn normalized_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(normalize_token).collect()
}
