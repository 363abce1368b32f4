//! Term-variant generation, normalization-insensitive dictionary tagging and
//! term-variation analytics for a small set of target entities.
//!
//! The pipeline runs in four steps:
//!
//! 1. [`generator::expand_fixpoint`] expands a base [`lexicon::Lexicon`] with
//!    substitution and expansion rules into candidate terms.
//! 2. [`tagger::tag_corpus`] finds candidates in a corpus, ignoring case,
//!    whitespace and punctuation, and drops embedded mentions.
//! 3. [`tagger::filter_unattested`] keeps the candidates that occur at least
//!    once; [`tagger::export_review_samples`] prepares them for human review.
//! 4. [`analytics`] reports frequencies, coverage, redundancy, weekly series
//!    and overlap with other dictionaries.
//!
//! ```
//! use termvar::corpus::DocumentRecord;
//! use termvar::lexicon::{load_dictionary, normalize};
//! use termvar::tagger::build_matcher;
//!
//! let dict = "COVID-19\tCOVID\tbase\nCOVID-19\tCOVID-19\tbase\nCOVID-19\tCOVID-19 disease\tbase\n";
//! let lexicon = load_dictionary(dict.as_bytes()).unwrap();
//! let matcher = build_matcher(&lexicon).unwrap();
//!
//! let date = termvar::corpus::parse_date("2020-03-02").unwrap();
//! let doc = DocumentRecord::new("1", date, "Outcomes of covid-19 Disease", "");
//! let mentions = matcher.tag_document(&doc);
//! assert_eq!(mentions.len(), 1);
//! assert_eq!(mentions[0].surface, "covid-19 Disease");
//! assert_eq!(mentions[0].term_key, normalize("COVID-19 disease"));
//! ```

pub mod analytics;
pub mod corpus;
pub mod generator;
pub mod lexicon;
pub mod report;
pub mod tagger;
pub mod text;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/normalization.md")]
    mod normalization {}
    #[doc = include_str!("../../../book/src/generation.md")]
    mod generation {}
    #[doc = include_str!("../../../book/src/tagging.md")]
    mod tagging {}
    #[doc = include_str!("../../../book/src/analytics.md")]
    mod analytics {}
    #[doc = include_str!("../../../book/src/comparison.md")]
    mod comparison {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
