//! Dictionary tagging on the normalized character stream.
//!
//! Each document field is normalized with an [`OffsetMap`] that remembers the
//! original byte span of every kept character. All dictionary keys are found
//! in one pass over the normalized stream, matches that start or end inside a
//! token of the original text are rejected, and spans are mapped back to the
//! original bytes. [`resolve_spans`] then drops embedded mentions and settles
//! partial overlaps leftmost-longest.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::ops::Range;
use std::str::FromStr;

use aho_corasick::{AhoCorasick, AhoCorasickBuilder, MatchKind};
use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{CorpusError, DocumentRecord};
use crate::lexicon::{normalize, Lexicon, NormalizedKey};
use crate::text::{fold_char, is_term_char};

#[derive(Debug, Error)]
pub enum TagError {
    #[error("cannot build a matcher from an empty lexicon")]
    EmptyLexicon,
    #[error("failed to build automaton: {0}")]
    Build(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Normalized text of one field plus the original byte span of each of its
/// characters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OffsetMap {
    normalized: String,
    spans: Vec<Range<usize>>,
    // byte offset of each normalized char; empty when the stream is ASCII
    char_starts: Vec<usize>,
}

impl OffsetMap {
    pub fn normalized(&self) -> &str {
        &self.normalized
    }

    /// Original byte span per normalized character.
    pub fn spans(&self) -> &[Range<usize>] {
        &self.spans
    }

    /// Number of normalized characters.
    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    fn char_index(&self, byte: usize) -> usize {
        if self.char_starts.is_empty() {
            byte
        } else if byte == self.normalized.len() {
            self.spans.len()
        } else {
            self.char_starts
                .binary_search(&byte)
                .expect("match offsets fall on char boundaries")
        }
    }

    /// True if normalized char `i` begins a token of the original text.
    fn starts_token(&self, i: usize) -> bool {
        i == 0 || self.spans[i - 1].end != self.spans[i].start
    }

    /// True if normalized char `j - 1` ends a token of the original text.
    fn ends_token(&self, j: usize) -> bool {
        j == self.spans.len() || self.spans[j - 1].end != self.spans[j].start
    }

    /// Original byte range covered by normalized chars `i..j`.
    pub fn original_range(&self, chars: Range<usize>) -> Range<usize> {
        self.spans[chars.start].start..self.spans[chars.end - 1].end
    }
}

/// Normalizes `text`, recording where each kept character came from.
///
/// ```
/// use termvar::tagger::normalize_with_offsets;
///
/// let map = normalize_with_offsets("CoV-2");
/// assert_eq!(map.normalized(), "cov2");
/// assert_eq!(map.spans(), &[0..1, 1..2, 2..3, 4..5]);
/// ```
pub fn normalize_with_offsets(text: &str) -> OffsetMap {
    let mut map = OffsetMap {
        normalized: String::with_capacity(text.len()),
        spans: Vec::with_capacity(text.len()),
        char_starts: Vec::new(),
    };
    let mut ascii = true;
    for (i, c) in text.char_indices() {
        if !is_term_char(c) {
            continue;
        }
        let folded = fold_char(c);
        if ascii && !folded.is_ascii() {
            ascii = false;
            map.char_starts = (0..map.normalized.len()).collect();
        }
        if !ascii {
            map.char_starts.push(map.normalized.len());
        }
        map.normalized.push(folded);
        map.spans.push(i..i + c.len_utf8());
    }
    map
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Field {
    Title,
    Abstract,
}

impl Field {
    pub fn as_str(self) -> &'static str {
        match self {
            Field::Title => "title",
            Field::Abstract => "abstract",
        }
    }

    pub fn of(self, record: &DocumentRecord) -> &str {
        match self {
            Field::Title => &record.title,
            Field::Abstract => &record.abstract_text,
        }
    }
}

impl FromStr for Field {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "title" => Ok(Field::Title),
            "abstract" => Ok(Field::Abstract),
            _ => Err(format!("unknown field {s:?}")),
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An occurrence of a dictionary key in one field of one document.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mention {
    pub doc_id: String,
    pub field: Field,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub term_key: NormalizedKey,
    pub entity: String,
}

impl Mention {
    pub fn span(&self) -> Range<usize> {
        self.start..self.end
    }

    fn sort_key(&self) -> (&str, Field, usize, usize, &NormalizedKey, &str) {
        (
            &self.doc_id,
            self.field,
            self.start,
            self.end,
            &self.term_key,
            &self.entity,
        )
    }
}

/// Multi-pattern matcher over the normalized keys of a lexicon.
pub struct Matcher {
    automaton: AhoCorasick,
    keys: Vec<NormalizedKey>,
    // sorted entity ids per pattern
    entities: Vec<Vec<String>>,
}

impl fmt::Debug for Matcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Matcher").field("keys", &self.keys.len()).finish()
    }
}

pub fn build_matcher(lexicon: &Lexicon) -> Result<Matcher, TagError> {
    let mut by_key: BTreeMap<NormalizedKey, Vec<String>> = BTreeMap::new();
    for term in lexicon.terms() {
        let ents = by_key.entry(term.key().clone()).or_default();
        if !ents.iter().any(|e| e == term.entity()) {
            ents.push(term.entity().to_owned());
        }
    }
    if by_key.is_empty() {
        return Err(TagError::EmptyLexicon);
    }
    let (keys, mut entities): (Vec<_>, Vec<_>) = by_key.into_iter().unzip();
    entities.iter_mut().for_each(|e: &mut Vec<String>| e.sort());
    let automaton = AhoCorasickBuilder::new()
        .match_kind(MatchKind::Standard)
        .build(keys.iter().map(NormalizedKey::as_str))
        .map_err(|e| TagError::Build(e.to_string()))?;
    Ok(Matcher {
        automaton,
        keys,
        entities,
    })
}

impl Matcher {
    /// Distinct keys, sorted.
    pub fn keys(&self) -> &[NormalizedKey] {
        &self.keys
    }

    /// Entities a key is bound to.
    pub fn entities_of(&self, key: &NormalizedKey) -> &[String] {
        match self.keys.binary_search(key) {
            Ok(i) => &self.entities[i],
            Err(_) => &[],
        }
    }

    /// Every token-aligned key occurrence in `text`, including nested and
    /// overlapping ones, in (start, end) order.
    pub fn raw_matches(&self, doc_id: &str, field: Field, text: &str, map: &OffsetMap) -> Vec<Mention> {
        let mut out = Vec::new();
        for m in self.automaton.find_overlapping_iter(map.normalized()) {
            let i = map.char_index(m.start());
            let j = map.char_index(m.end());
            if !map.starts_token(i) || !map.ends_token(j) {
                continue;
            }
            let span = map.original_range(i..j);
            let pattern = m.pattern().as_usize();
            for entity in &self.entities[pattern] {
                out.push(Mention {
                    doc_id: doc_id.to_owned(),
                    field,
                    start: span.start,
                    end: span.end,
                    surface: text[span.clone()].to_owned(),
                    term_key: self.keys[pattern].clone(),
                    entity: entity.clone(),
                });
            }
        }
        out.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        out
    }

    /// Resolved mentions of one field.
    pub fn tag_field(&self, doc_id: &str, field: Field, text: &str) -> Vec<Mention> {
        let map = normalize_with_offsets(text);
        resolve_spans(self.raw_matches(doc_id, field, text, &map))
    }

    /// Resolved mentions of a whole record, title first.
    pub fn tag_document(&self, record: &DocumentRecord) -> Vec<Mention> {
        let mut out = self.tag_field(&record.doc_id, Field::Title, &record.title);
        out.extend(self.tag_field(&record.doc_id, Field::Abstract, &record.abstract_text));
        out
    }
}

/// Drops embedded mentions, then resolves partial overlaps leftmost-longest.
///
/// Input must come from a single field. Among mentions with identical spans
/// the one with the smallest (key, entity) is kept.
pub fn resolve_spans(mut candidates: Vec<Mention>) -> Vec<Mention> {
    candidates.sort_by(|a, b| {
        (a.start, std::cmp::Reverse(a.end), &a.term_key, &a.entity).cmp(&(
            b.start,
            std::cmp::Reverse(b.end),
            &b.term_key,
            &b.entity,
        ))
    });
    candidates.dedup_by(|b, a| a.start == b.start && a.end == b.end);

    // In (start, -end) order a span is embedded in another iff an earlier
    // span reaches at least as far.
    let mut reach = 0;
    let mut outermost = Vec::with_capacity(candidates.len());
    for m in candidates {
        if !outermost.is_empty() && reach >= m.end {
            continue;
        }
        reach = reach.max(m.end);
        outermost.push(m);
    }

    let mut kept: Vec<Mention> = Vec::with_capacity(outermost.len());
    for m in outermost {
        if kept.last().is_none_or(|k| m.start >= k.end) {
            kept.push(m);
        }
    }
    kept
}

/// Mention counts for one (entity, key).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TermAggregate {
    pub mentions: usize,
    pub documents: usize,
}

/// Resolved mentions of a corpus with per-term and per-document totals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MentionIndex {
    mentions: Vec<Mention>,
    terms: BTreeMap<(String, NormalizedKey), TermAggregate>,
    per_document: BTreeMap<String, usize>,
    documents_tagged: usize,
    skipped: usize,
}

impl MentionIndex {
    /// Builds an index from resolved mentions in any order.
    pub fn from_mentions(mut mentions: Vec<Mention>) -> MentionIndex {
        mentions.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        let mut terms: BTreeMap<(String, NormalizedKey), TermAggregate> = BTreeMap::new();
        let mut per_document: BTreeMap<String, usize> = BTreeMap::new();
        let mut last_doc: HashMap<(&str, &NormalizedKey), &str> = HashMap::new();
        for m in &mentions {
            let agg = terms
                .entry((m.entity.clone(), m.term_key.clone()))
                .or_default();
            agg.mentions += 1;
            // mentions are sorted by doc id, so a new doc shows up as a change
            let prev = last_doc.insert((&m.entity, &m.term_key), &m.doc_id);
            if prev != Some(m.doc_id.as_str()) {
                agg.documents += 1;
            }
            *per_document.entry(m.doc_id.clone()).or_default() += 1;
        }
        MentionIndex {
            mentions,
            terms,
            per_document,
            documents_tagged: 0,
            skipped: 0,
        }
    }

    /// Mentions sorted by (doc_id, field, start).
    pub fn mentions(&self) -> &[Mention] {
        &self.mentions
    }

    pub fn len(&self) -> usize {
        self.mentions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mentions.is_empty()
    }

    /// Totals per (entity, key), sorted.
    pub fn terms(&self) -> &BTreeMap<(String, NormalizedKey), TermAggregate> {
        &self.terms
    }

    /// Mention count per document id.
    pub fn per_document(&self) -> &BTreeMap<String, usize> {
        &self.per_document
    }

    pub fn is_attested(&self, entity: &str, key: &NormalizedKey) -> bool {
        self.terms.contains_key(&(entity.to_owned(), key.clone()))
    }

    /// Entity ids with at least one mention, sorted.
    pub fn entities(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.terms.keys().map(|(e, _)| e.as_str()).collect();
        out.dedup();
        out
    }

    /// Documents processed by [`tag_corpus`]; zero for indexes read from disk.
    pub fn documents_tagged(&self) -> usize {
        self.documents_tagged
    }

    /// Records skipped as malformed or duplicate during [`tag_corpus`].
    pub fn skipped(&self) -> usize {
        self.skipped
    }
}

const BATCH: usize = 2048;

/// Tags every record of a corpus.
///
/// Malformed or duplicate records are counted and skipped; only I/O errors
/// abort. With `jobs > 1` batches of records are tagged on a thread pool; the
/// result is identical for every `jobs`.
pub fn tag_corpus<I>(matcher: &Matcher, records: I, jobs: usize) -> Result<MentionIndex, CorpusError>
where
    I: IntoIterator<Item = Result<DocumentRecord, CorpusError>>,
{
    let pool = if jobs > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| CorpusError::Io(io::Error::other(e)))?,
        )
    } else {
        None
    };

    let mut mentions = Vec::new();
    let mut documents = 0;
    let mut skipped = 0;
    let mut batch = Vec::with_capacity(BATCH);
    let mut records = records.into_iter().peekable();

    while records.peek().is_some() {
        batch.clear();
        for item in records.by_ref() {
            match item {
                Ok(r) => batch.push(r),
                Err(e) if e.is_fatal() => return Err(e),
                Err(_) => skipped += 1,
            }
            if batch.len() == BATCH {
                break;
            }
        }
        documents += batch.len();
        match &pool {
            Some(pool) => {
                let tagged: Vec<Vec<Mention>> =
                    pool.install(|| batch.par_iter().map(|r| matcher.tag_document(r)).collect());
                mentions.extend(tagged.into_iter().flatten());
            }
            None => {
                for r in &batch {
                    mentions.extend(matcher.tag_document(r));
                }
            }
        }
    }

    let mut index = MentionIndex::from_mentions(mentions);
    index.documents_tagged = documents;
    index.skipped = skipped;
    Ok(index)
}

/// Keeps the terms with at least one resolved mention under their own entity.
pub fn filter_unattested(candidates: &Lexicon, index: &MentionIndex) -> Lexicon {
    let out = candidates.retain(|t| index.is_attested(t.entity(), t.key()));
    if out.is_empty() && !candidates.is_empty() {
        warn!("none of the {} candidate terms is attested", candidates.len());
    }
    out
}

const MENTION_HEADER: &str = "doc_id\tfield\tstart\tend\tsurface\tterm_key\tentity";

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(format!("bad escape \\{}", other.map(String::from).unwrap_or_default())),
        }
    }
    Ok(out)
}

/// Writes mentions as TSV with a header row. Tabs, newlines and backslashes
/// inside surfaces are backslash-escaped.
pub fn write_mentions<W: Write>(mentions: &[Mention], mut out: W) -> io::Result<()> {
    writeln!(out, "{MENTION_HEADER}")?;
    for m in mentions {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            escape(&m.doc_id),
            m.field,
            m.start,
            m.end,
            escape(&m.surface),
            m.term_key,
            escape(&m.entity)
        )?;
    }
    out.flush()
}

pub fn read_mentions<R: BufRead>(reader: R) -> Result<MentionIndex, TagError> {
    let mut mentions = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        if (n == 0 && line == MENTION_HEADER) || line.is_empty() {
            continue;
        }
        let err = |message: String| TagError::Parse {
            line: line_no,
            message,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 7 {
            return Err(err(format!("expected 7 columns, found {}", cols.len())));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| err(format!("bad offset {s:?}")));
        let mention = Mention {
            doc_id: unescape(cols[0]).map_err(err)?,
            field: cols[1].parse().map_err(err)?,
            start: num(cols[2])?,
            end: num(cols[3])?,
            surface: unescape(cols[4]).map_err(err)?,
            term_key: NormalizedKey::from_normalized(cols[5])
                .filter(|k| !k.is_empty())
                .ok_or_else(|| err(format!("{:?} is not a normalized key", cols[5])))?,
            entity: unescape(cols[6]).map_err(err)?,
        };
        if mention.start >= mention.end {
            return Err(err("empty span".into()));
        }
        if normalize(&mention.surface) != mention.term_key {
            return Err(err(format!(
                "surface {:?} does not normalize to {}",
                mention.surface, mention.term_key
            )));
        }
        mentions.push(mention);
    }
    Ok(MentionIndex::from_mentions(mentions))
}

/// Field text by document id, for building context snippets.
pub trait FieldSource {
    fn field_text(&self, doc_id: &str, field: Field) -> Option<&str>;
}

impl FieldSource for HashMap<String, DocumentRecord> {
    fn field_text(&self, doc_id: &str, field: Field) -> Option<&str> {
        self.get(doc_id).map(|r| field.of(r))
    }
}

/// Bytes of context kept on each side of a mention.
pub const SNIPPET_CONTEXT: usize = 80;

/// A mention with surrounding text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snippet {
    pub doc_id: String,
    pub field: Field,
    pub start: usize,
    pub end: usize,
    pub before: String,
    pub mention: String,
    pub after: String,
}

impl fmt::Display for Snippet {
    /// `before<<mention>>after`, with line breaks and tabs shown as spaces.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flat = |s: &str| s.replace(['\n', '\r', '\t'], " ");
        write!(
            f,
            "{}<<{}>>{}",
            flat(&self.before),
            flat(&self.mention),
            flat(&self.after)
        )
    }
}

/// Cuts a snippet of `span` from `text` with up to [`SNIPPET_CONTEXT`] bytes
/// on each side, shrunk to character boundaries.
pub fn snippet(doc_id: &str, field: Field, text: &str, span: Range<usize>) -> Snippet {
    let mut lo = span.start.saturating_sub(SNIPPET_CONTEXT);
    while !text.is_char_boundary(lo) {
        lo += 1;
    }
    let mut hi = (span.end + SNIPPET_CONTEXT).min(text.len());
    while !text.is_char_boundary(hi) {
        hi -= 1;
    }
    Snippet {
        doc_id: doc_id.to_owned(),
        field,
        start: span.start,
        end: span.end,
        before: text[lo..span.start].to_owned(),
        mention: text[span.clone()].to_owned(),
        after: text[span.end..hi].to_owned(),
    }
}

/// Up to `k` context snippets for `key`, chosen by a seeded sample over the
/// key's mentions and returned in index order.
pub fn export_review_samples<S: FieldSource + ?Sized>(
    index: &MentionIndex,
    source: &S,
    key: &NormalizedKey,
    k: usize,
    seed: u64,
) -> Vec<Snippet> {
    let hits: Vec<&Mention> = index.mentions().iter().filter(|m| &m.term_key == key).collect();
    if hits.is_empty() {
        warn!("no mentions of {key:?} to sample");
        return Vec::new();
    }
    let chosen: Vec<usize> = if hits.len() <= k {
        (0..hits.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = rand::seq::index::sample(&mut rng, hits.len(), k).into_vec();
        picked.sort_unstable();
        picked
    };
    chosen
        .into_iter()
        .filter_map(|i| {
            let m = hits[i];
            match source.field_text(&m.doc_id, m.field) {
                Some(text) if text.get(m.span()).is_some() => {
                    Some(snippet(&m.doc_id, m.field, text, m.span()))
                }
                _ => {
                    warn!("no text for {} {} {}..{}", m.doc_id, m.field, m.start, m.end);
                    None
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{Entity, EntityKind, Provenance, Term};
    use proptest::prelude::*;

    fn lexicon(terms: &[(&str, &str)]) -> Lexicon {
        let mut lex = Lexicon::new();
        for (e, s) in terms {
            if lex.entity(e).is_none() {
                lex.add_entity(Entity::new(*e, EntityKind::Other)).unwrap();
            }
            lex.insert(Term::new(*s, *e, Provenance::Base).unwrap()).unwrap();
        }
        lex
    }

    fn covid_matcher() -> Matcher {
        build_matcher(&lexicon(&[
            ("COVID-19", "COVID"),
            ("COVID-19", "COVID-19"),
            ("COVID-19", "COVID-19 disease"),
        ]))
        .unwrap()
    }

    fn raw(matcher: &Matcher, text: &str) -> Vec<Mention> {
        matcher.raw_matches("d", Field::Title, text, &normalize_with_offsets(text))
    }

    fn surfaces(ms: &[Mention]) -> Vec<&str> {
        ms.iter().map(|m| m.surface.as_str()).collect()
    }

    fn mention(start: usize, end: usize, key: &str) -> Mention {
        Mention {
            doc_id: "d".into(),
            field: Field::Title,
            start,
            end,
            surface: key.into(),
            term_key: normalize(key),
            entity: "E".into(),
        }
    }

    #[test]
    fn offset_map_examples() {
        let m = normalize_with_offsets("CoV-2");
        assert_eq!(m.normalized(), "cov2");
        assert_eq!(m.spans(), &[0..1, 1..2, 2..3, 4..5]);

        assert!(normalize_with_offsets("").is_empty());

        // en dash is three bytes (5..8)
        let m = normalize_with_offsets("COVID–19");
        assert_eq!(m.normalized(), "covid19");
        assert_eq!(m.spans(), &[0..1, 1..2, 2..3, 3..4, 4..5, 8..9, 9..10]);
    }

    #[test]
    fn offset_map_non_ascii_stream() {
        let text = "Ärzte: naïve ÉTUDE";
        let m = normalize_with_offsets(text);
        assert_eq!(m.normalized(), "ärztenaïveétude");
        assert_eq!(m.len(), m.normalized().chars().count());
        let rebuilt: String = m.spans().iter().map(|r| &text[r.clone()]).collect();
        assert_eq!(normalize(&rebuilt).as_str(), m.normalized());
    }

    #[test]
    fn matcher_keys() {
        let m = covid_matcher();
        let keys: Vec<_> = m.keys().iter().map(|k| k.as_str()).collect();
        assert_eq!(keys, vec!["covid", "covid19", "covid19disease"]);

        let shared = build_matcher(&lexicon(&[("A", "SARS-CoV-2"), ("A", "sars cov 2"), ("B", "SARS CoV2")])).unwrap();
        assert_eq!(shared.keys().len(), 1);
        assert_eq!(shared.entities_of(&normalize("sarscov2")), ["A", "B"]);

        assert!(matches!(build_matcher(&Lexicon::new()), Err(TagError::EmptyLexicon)));
    }

    #[test]
    fn raw_matches_examples() {
        let m = covid_matcher();
        assert_eq!(
            surfaces(&raw(&m, "COVID-19 disease")),
            vec!["COVID", "COVID-19", "COVID-19 disease"]
        );
        assert!(raw(&m, "covidiot").is_empty());
        assert_eq!(surfaces(&raw(&m, "COVID19")), vec!["COVID19"]);
        // a key may not start mid-token either
        assert!(raw(&m, "precovid").is_empty());
        assert_eq!(surfaces(&raw(&m, "(COVID–19)")), vec!["COVID", "COVID–19"]);
    }

    #[test]
    fn resolve_examples() {
        let m = covid_matcher();
        let resolved = resolve_spans(raw(&m, "COVID-19 disease"));
        assert_eq!(surfaces(&resolved), vec!["COVID-19 disease"]);
        assert_eq!((resolved[0].start, resolved[0].end), (0, 16));

        let one = vec![mention(3, 5, "ab")];
        assert_eq!(resolve_spans(one.clone()), one);

        let kept = resolve_spans(vec![mention(4, 12, "b"), mention(0, 8, "a")]);
        assert_eq!(kept.iter().map(|m| (m.start, m.end)).collect::<Vec<_>>(), vec![(0, 8)]);
    }

    #[test]
    fn embedded_drop_precedes_overlap_resolution() {
        // [10,12) sits inside [2,20), which itself loses to [0,8)
        let out = resolve_spans(vec![mention(0, 8, "a"), mention(2, 20, "b"), mention(10, 12, "c")]);
        assert_eq!(out.iter().map(|m| (m.start, m.end)).collect::<Vec<_>>(), vec![(0, 8)]);
    }

    #[test]
    fn identical_spans_keep_smallest_entity() {
        let mut a = mention(0, 4, "abcd");
        let mut b = a.clone();
        a.entity = "Z".into();
        b.entity = "A".into();
        let out = resolve_spans(vec![a, b]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].entity, "A");
    }

    fn record(id: &str, title: &str, abs: &str) -> DocumentRecord {
        DocumentRecord::new(id, crate::corpus::week_epoch(), title, abs)
    }

    #[test]
    fn corpus_tagging() {
        let m = covid_matcher();
        let docs = vec![
            Ok(record("2", "COVID-19 disease outcomes", "We study covid19 and COVID.")),
            Err(CorpusError::Malformed { line: 2, message: "x".into() }),
            Ok(record("1", "Only the title says COVID", "")),
        ];
        let index = tag_corpus(&m, docs, 1).unwrap();
        assert_eq!(index.skipped(), 1);
        assert_eq!(index.documents_tagged(), 2);
        let got: Vec<_> = index
            .mentions()
            .iter()
            .map(|m| (m.doc_id.as_str(), m.field, m.start, m.end, m.surface.as_str()))
            .collect();
        assert_eq!(
            got,
            vec![
                ("1", Field::Title, 20, 25, "COVID"),
                ("2", Field::Title, 0, 16, "COVID-19 disease"),
                ("2", Field::Abstract, 9, 16, "covid19"),
                ("2", Field::Abstract, 21, 26, "COVID"),
            ]
        );
        let covid = &index.terms()[&("COVID-19".to_string(), normalize("covid"))];
        assert_eq!((covid.mentions, covid.documents), (2, 2));
        assert_eq!(index.per_document()["2"], 3);

        assert!(tag_corpus(&m, Vec::new(), 1).unwrap().is_empty());
    }

    #[test]
    fn parallel_tagging_matches_sequential() {
        let m = covid_matcher();
        let docs: Vec<_> = (0..5000)
            .map(|i| record(&format!("{i:05}"), if i % 3 == 0 { "COVID-19" } else { "x" }, "covid disease"))
            .collect();
        let one = tag_corpus(&m, docs.iter().cloned().map(Ok), 1).unwrap();
        let mut shuffled = docs.clone();
        shuffled.reverse();
        let four = tag_corpus(&m, shuffled.into_iter().map(Ok), 4).unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn attestation_filter() {
        let lex = lexicon(&[("A", "alpha"), ("A", "beta"), ("B", "alpha"), ("B", "gamma")]);
        let m = build_matcher(&lex).unwrap();
        let mut idx = tag_corpus(&m, vec![Ok(record("1", "alpha", ""))], 1).unwrap();
        // identical spans under two entities resolve to one mention
        assert_eq!(idx.len(), 1);
        let kept = filter_unattested(&lex, &idx);
        assert_eq!(kept.terms().iter().map(|t| (t.entity(), t.surface())).collect::<Vec<_>>(), vec![("A", "alpha")]);

        idx = MentionIndex::default();
        assert!(filter_unattested(&lex, &idx).is_empty());
    }

    #[test]
    fn mention_tsv_round_trip() {
        let mut odd = mention(0, 9, "COVID\t19\n");
        odd.surface = "COVID\t19\\\n".into();
        let ms = vec![mention(0, 5, "COVID"), odd];
        let mut buf = Vec::new();
        write_mentions(&ms, &mut buf).unwrap();
        let back = read_mentions(buf.as_slice()).unwrap();
        assert_eq!(back.mentions(), MentionIndex::from_mentions(ms).mentions());

        let bad = format!("{MENTION_HEADER}\nd\ttitle\t0\t5\tCOVID\tcovid19\tE\n");
        assert!(matches!(read_mentions(bad.as_bytes()), Err(TagError::Parse { line: 2, .. })));
    }

    fn store(docs: &[DocumentRecord]) -> HashMap<String, DocumentRecord> {
        docs.iter().map(|d| (d.doc_id.clone(), d.clone())).collect()
    }

    #[test]
    fn review_samples() {
        let m = covid_matcher();
        let few: Vec<_> = (0..3).map(|i| record(&i.to_string(), "COVID here", "")).collect();
        let idx = tag_corpus(&m, few.iter().cloned().map(Ok), 1).unwrap();
        let snips = export_review_samples(&idx, &store(&few), &normalize("covid"), 5, 7);
        assert_eq!(snips.len(), 3);
        assert_eq!(snips[0].to_string(), "<<COVID>> here");

        let many: Vec<_> = (0..100).map(|i| record(&format!("{i:03}"), "COVID", "")).collect();
        let idx = tag_corpus(&m, many.iter().cloned().map(Ok), 1).unwrap();
        let src = store(&many);
        let a = export_review_samples(&idx, &src, &normalize("covid"), 5, 42);
        let b = export_review_samples(&idx, &src, &normalize("covid"), 5, 42);
        assert_eq!(a.len(), 5);
        assert_eq!(a, b);
        let c = export_review_samples(&idx, &src, &normalize("covid"), 5, 43);
        assert_ne!(a.iter().map(|s| &s.doc_id).collect::<Vec<_>>(), c.iter().map(|s| &s.doc_id).collect::<Vec<_>>());

        assert!(export_review_samples(&idx, &src, &normalize("nothing"), 5, 1).is_empty());
    }

    #[test]
    fn snippet_clipping_respects_char_boundaries() {
        // 'é' is two bytes; place them so that mention ± 80 lands mid-char
        let left = "é".repeat(50);
        let text = format!("{left}x COVID y{left}");
        let start = text.find("COVID").unwrap();
        let s = snippet("d", Field::Title, &text, start..start + 5);
        assert_eq!(s.mention, "COVID");
        assert!(s.before.len() <= SNIPPET_CONTEXT && s.after.len() <= SNIPPET_CONTEXT);
        assert!(s.before.len() >= SNIPPET_CONTEXT - 1 && s.after.len() >= SNIPPET_CONTEXT - 1);
        assert!(text.contains(&format!("{}{}{}", s.before, s.mention, s.after)));

        let s = snippet("d", Field::Title, "COVID", 0..5);
        assert_eq!((s.before.as_str(), s.after.as_str()), ("", ""));
    }

    /// For every token-aligned span of the original text, test each key.
    fn oracle(keys: &[(String, String)], text: &str) -> Vec<(usize, usize, String, String)> {
        let mut starts = Vec::new();
        let mut ends = Vec::new();
        for r in crate::text::token_spans(text) {
            starts.push(r.start);
            ends.push(r.end);
        }
        let mut out = Vec::new();
        for &s in &starts {
            for &e in ends.iter().filter(|&&e| e > s) {
                let norm = normalize(&text[s..e]);
                for (entity, key) in keys {
                    if norm.as_str() == key {
                        out.push((s, e, key.clone(), entity.clone()));
                    }
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    fn word() -> impl Strategy<Value = String> {
        prop_oneof!["[a-c]{1,3}", "[0-9]{1,2}", Just("ä".to_string()), Just("Ab".to_string())]
    }

    proptest! {
        #[test]
        fn raw_matches_equal_oracle(
            terms in proptest::collection::vec((0usize..2, proptest::collection::vec(word(), 1..3)), 1..12),
            doc in proptest::collection::vec((word(), "[ \\-–,.]{0,2}"), 0..60),
        ) {
            let mut lex = Lexicon::with_entities([Entity::new("E0", EntityKind::Other), Entity::new("E1", EntityKind::Other)]).unwrap();
            for (e, words) in &terms {
                let _ = lex.insert(Term::new(words.join(" "), format!("E{e}"), Provenance::Base).unwrap());
            }
            let text: String = doc.iter().map(|(w, s)| format!("{w}{s}")).collect();
            let matcher = build_matcher(&lex).unwrap();
            let got: Vec<_> = raw(&matcher, &text)
                .into_iter()
                .map(|m| {
                    assert_eq!(normalize(&m.surface), m.term_key);
                    (m.start, m.end, m.term_key.to_string(), m.entity)
                })
                .collect();
            let keys: Vec<(String, String)> = lex.terms().iter().map(|t| (t.entity().to_owned(), t.key().to_string())).collect();
            let mut got_sorted = got.clone();
            got_sorted.sort();
            prop_assert_eq!(got_sorted, oracle(&keys, &text));
        }

        #[test]
        fn resolved_spans_are_disjoint(spans in proptest::collection::vec((0usize..40, 1usize..10), 0..30)) {
            let cands: Vec<Mention> = spans.iter().map(|&(s, l)| mention(s, s + l, "x")).collect();
            let out = resolve_spans(cands.clone());
            for w in out.windows(2) {
                prop_assert!(w[0].end <= w[1].start);
            }
            for m in &out {
                for c in &out {
                    let strictly_inside = c.start <= m.start && m.end <= c.end && (c.start, c.end) != (m.start, m.end);
                    prop_assert!(!strictly_inside);
                }
            }
            // every kept span was a candidate that no other candidate strictly contains
            for m in &out {
                prop_assert!(!cands.iter().any(|c| c.start <= m.start && m.end <= c.end && (c.start, c.end) != (m.start, m.end)));
            }
            // leftmost: the earliest candidate start is always covered
            if let Some(first) = cands.iter().map(|c| c.start).min() {
                prop_assert!(out.iter().any(|m| m.start <= first && first < m.end));
            }
        }

        #[test]
        fn offsets_rebuild_stream(text in any::<String>()) {
            let map = normalize_with_offsets(&text);
            prop_assert_eq!(map.len(), map.normalized().chars().count());
            for w in map.spans().windows(2) {
                prop_assert!(w[0].end <= w[1].start);
            }
            let rebuilt: String = map.spans().iter().map(|r| &text[r.clone()]).collect();
            prop_assert_eq!(normalize(&rebuilt).as_str().to_owned(), map.normalized());
            prop_assert_eq!(map.normalized(), normalize(&text).as_str().to_owned());
        }
    }
}
