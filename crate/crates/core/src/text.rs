//! Character classes and tokenization shared by every stage of the pipeline.
//!
//! A *token* is a maximal run of alphanumeric characters (Unicode letters and
//! digits). Everything else is a separator. The same definition drives term
//! normalization, substitution-site matching, match boundary checks and token
//! counting, so the stages never disagree about where a word starts or ends.

use std::ops::Range;

/// Returns true for characters that survive normalization.
#[inline]
pub fn is_term_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Simple (one-to-one) lowercase mapping.
///
/// Characters whose full lowercase mapping expands to several code points
/// (`'İ'` becomes `"i\u{307}"`) map to the first code point, which is the
/// simple mapping in the Unicode character database. A one-to-one mapping
/// keeps every normalized character tied to exactly one original character.
#[inline]
pub fn fold_char(c: char) -> char {
    if c.is_ascii() {
        return c.to_ascii_lowercase();
    }
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        (Some(l), Some(_)) if is_term_char(l) => l,
        _ => c,
    }
}

/// Iterates over the byte ranges of the maximal alphanumeric runs of `text`.
pub fn token_spans(text: &str) -> TokenSpans<'_> {
    TokenSpans {
        text,
        chars: text.char_indices(),
        pending: None,
    }
}

/// Number of tokens in `text`.
pub fn count_tokens(text: &str) -> usize {
    token_spans(text).count()
}

/// Iterator returned by [`token_spans`].
pub struct TokenSpans<'a> {
    text: &'a str,
    chars: std::str::CharIndices<'a>,
    pending: Option<usize>,
}

impl Iterator for TokenSpans<'_> {
    type Item = Range<usize>;

    fn next(&mut self) -> Option<Range<usize>> {
        for (i, c) in self.chars.by_ref() {
            match (is_term_char(c), self.pending) {
                (true, None) => self.pending = Some(i),
                (false, Some(start)) => {
                    self.pending = None;
                    return Some(start..i);
                }
                _ => {}
            }
        }
        self.pending.take().map(|start| start..self.text.len())
    }
}
