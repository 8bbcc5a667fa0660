//! Title tokenisation shared by the linker and the word-embedding lookup.

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Splits on anything that is not alphanumeric and lower-cases each token.
pub fn tokenize(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Strips combining marks after canonical decomposition: `Família` → `Familia`.
pub fn fold_diacritics(s: &str) -> String {
    s.nfd().filter(|c| !is_combining_mark(*c)).nfc().collect()
}

/// Case-, diacritics- and punctuation-folded tokens.
pub fn folded_tokens(s: &str) -> Vec<String> {
    tokenize(&fold_diacritics(s))
}
