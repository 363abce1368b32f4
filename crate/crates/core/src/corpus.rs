//! Document records, streaming JSON-Lines ingestion and the weekly calendar.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{self, BufRead};

use chrono::NaiveDate;
use log::warn;
use serde::Deserialize;
use thiserror::Error;

use crate::text;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate doc_id {doc_id:?}")]
    Duplicate { line: usize, doc_id: String },
    #[error("date {0} is before the first analysis week (2019-12-30)")]
    OutOfRange(NaiveDate),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CorpusError {
    /// I/O failures end the stream; everything else concerns a single record.
    pub fn is_fatal(&self) -> bool {
        matches!(self, CorpusError::Io(_))
    }
}

/// One corpus unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentRecord {
    pub doc_id: String,
    pub date_added: NaiveDate,
    pub title: String,
    pub abstract_text: String,
    pub token_count: usize,
}

impl DocumentRecord {
    pub fn new(
        doc_id: impl Into<String>,
        date_added: NaiveDate,
        title: impl Into<String>,
        abstract_text: impl Into<String>,
    ) -> Self {
        let mut record = DocumentRecord {
            doc_id: doc_id.into(),
            date_added,
            title: title.into(),
            abstract_text: abstract_text.into(),
            token_count: 0,
        };
        record.token_count = count_tokens(&record);
        record
    }

    pub fn week(&self) -> Result<WeekIndex, CorpusError> {
        week_of(self.date_added)
    }
}

/// Tokens (maximal alphanumeric runs) in title plus abstract.
pub fn count_tokens(record: &DocumentRecord) -> usize {
    text::count_tokens(&record.title) + text::count_tokens(&record.abstract_text)
}

/// Week number, with week 1 starting on Monday 2019-12-30.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WeekIndex(u32);

impl WeekIndex {
    pub fn new(week: u32) -> Option<Self> {
        (week >= 1).then_some(WeekIndex(week))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// The Monday this week starts on.
    pub fn start_date(self) -> NaiveDate {
        week_epoch() + chrono::Duration::days(7 * (self.0 as i64 - 1))
    }

    pub fn next(self) -> WeekIndex {
        WeekIndex(self.0 + 1)
    }
}

impl fmt::Display for WeekIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub fn week_epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(2019, 12, 30).expect("valid date")
}

pub fn week_of(date: NaiveDate) -> Result<WeekIndex, CorpusError> {
    let days = (date - week_epoch()).num_days();
    if days < 0 {
        return Err(CorpusError::OutOfRange(date));
    }
    Ok(WeekIndex(1 + (days / 7) as u32))
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    // chrono accepts unpadded fields; the file format requires YYYY-MM-DD
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return None;
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

#[derive(Deserialize)]
struct RawRecord {
    doc_id: String,
    date_added: String,
    title: String,
    #[serde(default, rename = "abstract")]
    abstract_text: Option<String>,
}

/// Streams records from a JSON-Lines corpus.
///
/// Malformed lines and repeated doc ids come back as `Err` items and the
/// stream continues; an I/O error is yielded once and ends the stream. Only
/// the set of seen doc ids is retained between records.
pub fn read_corpus<R: BufRead>(reader: R) -> CorpusReader<R> {
    CorpusReader {
        lines: reader.lines(),
        line_no: 0,
        seen: HashSet::new(),
        done: false,
    }
}

pub struct CorpusReader<R> {
    lines: io::Lines<R>,
    line_no: usize,
    seen: HashSet<String>,
    done: bool,
}

impl<R: BufRead> CorpusReader<R> {
    fn parse(&mut self, line: &str) -> Result<DocumentRecord, CorpusError> {
        let line_no = self.line_no;
        let malformed = |message: String| CorpusError::Malformed {
            line: line_no,
            message,
        };
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        if raw.doc_id.is_empty() {
            return Err(malformed("empty doc_id".into()));
        }
        let date = parse_date(&raw.date_added)
            .ok_or_else(|| malformed(format!("date_added {:?} is not YYYY-MM-DD", raw.date_added)))?;
        if !self.seen.insert(raw.doc_id.clone()) {
            return Err(CorpusError::Duplicate {
                line: line_no,
                doc_id: raw.doc_id,
            });
        }
        Ok(DocumentRecord::new(
            raw.doc_id,
            date,
            raw.title,
            raw.abstract_text.unwrap_or_default(),
        ))
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<DocumentRecord, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            self.line_no += 1;
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let item = self.parse(&line);
            if let Err(e) = &item {
                warn!("skipping corpus record: {e}");
            }
            return Some(item);
        }
    }
}

/// doc id → week, for every document of a corpus.
#[derive(Debug, Clone, Default)]
pub struct Calendar {
    weeks: HashMap<String, WeekIndex>,
}

impl Calendar {
    /// Collects the week of every valid record. Malformed and duplicate
    /// records are skipped; I/O errors and pre-2019-12-30 dates fail.
    pub fn from_records<I>(records: I) -> Result<Calendar, CorpusError>
    where
        I: IntoIterator<Item = Result<DocumentRecord, CorpusError>>,
    {
        let mut weeks = HashMap::new();
        for record in records {
            match record {
                Ok(r) => {
                    weeks.insert(r.doc_id, week_of(r.date_added)?);
                }
                Err(e) if e.is_fatal() => return Err(e),
                Err(_) => {}
            }
        }
        Ok(Calendar { weeks })
    }

    pub fn insert(&mut self, doc_id: impl Into<String>, week: WeekIndex) {
        self.weeks.insert(doc_id.into(), week);
    }

    pub fn week(&self, doc_id: &str) -> Option<WeekIndex> {
        self.weeks.get(doc_id).copied()
    }

    pub fn len(&self) -> usize {
        self.weeks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weeks.is_empty()
    }

    /// Earliest and latest week of any document.
    pub fn span(&self) -> Option<(WeekIndex, WeekIndex)> {
        let min = self.weeks.values().min()?;
        let max = self.weeks.values().max()?;
        Some((*min, *max))
    }

    /// Number of documents added in each week.
    pub fn documents_per_week(&self) -> HashMap<WeekIndex, usize> {
        let mut out = HashMap::new();
        for &w in self.weeks.values() {
            *out.entry(w).or_default() += 1;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn date(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    #[test]
    fn week_anchors() {
        assert_eq!(week_of(date("2019-12-30")).unwrap().get(), 1);
        assert_eq!(week_of(date("2020-01-05")).unwrap().get(), 1);
        assert_eq!(week_of(date("2020-01-13")).unwrap().get(), 3);
        assert_eq!(week_of(date("2020-02-11")).unwrap().get(), 7);
        assert!(matches!(week_of(date("2019-12-29")), Err(CorpusError::OutOfRange(_))));
        assert_eq!(WeekIndex::new(3).unwrap().start_date(), date("2020-01-13"));
        assert!(WeekIndex::new(0).is_none());
    }

    #[test]
    fn dates_must_be_padded() {
        assert!(parse_date("2020-1-13").is_none());
        assert!(parse_date("2020-02-30").is_none());
        assert!(parse_date("20200113").is_none());
    }

    #[test]
    fn token_counts() {
        let d = date("2020-03-01");
        assert_eq!(DocumentRecord::new("1", d, "COVID-19 update", "").token_count, 3);
        assert_eq!(DocumentRecord::new("1", d, "", "").token_count, 0);
        assert_eq!(DocumentRecord::new("1", d, "a-b-c", "").token_count, 3);
        assert_eq!(DocumentRecord::new("1", d, "a b", "c d e").token_count, 5);
    }

    #[test]
    fn reader_diagnostics() {
        let src = r#"{"doc_id":"1","date_added":"2020-03-01","title":"A b","abstract":"c"}
{"doc_id":"2","title":"no date"}

not json
{"doc_id":"3","date_added":"2020-03-02","title":"Title only"}
{"doc_id":"1","date_added":"2020-03-03","title":"again"}
{"doc_id":"4","date_added":"March 3","title":"x"}
"#;
        let items: Vec<_> = read_corpus(src.as_bytes()).collect();
        assert_eq!(items.len(), 6);
        let ok: Vec<_> = items.iter().filter_map(|r| r.as_ref().ok()).collect();
        assert_eq!(ok.iter().map(|r| r.doc_id.as_str()).collect::<Vec<_>>(), vec!["1", "3"]);
        assert_eq!(ok[0].token_count, 3);
        assert_eq!(ok[1].abstract_text, "");
        assert_eq!(ok[1].token_count, 2);
        assert!(matches!(items[1], Err(CorpusError::Malformed { line: 2, .. })));
        assert!(matches!(items[2], Err(CorpusError::Malformed { line: 4, .. })));
        assert!(matches!(items[4], Err(CorpusError::Duplicate { line: 6, .. })));
        assert!(matches!(items[5], Err(CorpusError::Malformed { line: 7, .. })));
    }

    #[test]
    fn calendar() {
        let src = r#"{"doc_id":"a","date_added":"2020-01-13","title":"x"}
{"doc_id":"b","date_added":"2020-02-11","title":"y"}
"#;
        let cal = Calendar::from_records(read_corpus(src.as_bytes())).unwrap();
        assert_eq!(cal.week("a").unwrap().get(), 3);
        assert_eq!(cal.span().map(|(a, b)| (a.get(), b.get())), Some((3, 7)));
        let early = r#"{"doc_id":"a","date_added":"2019-11-13","title":"x"}"#;
        assert!(Calendar::from_records(read_corpus(early.as_bytes())).is_err());
    }

    proptest! {
        #[test]
        fn weeks_step_every_seven_days(offset in 0i64..5000) {
            let d = week_epoch() + chrono::Duration::days(offset);
            let w = week_of(d).unwrap().get();
            let next = week_of(d + chrono::Duration::days(1)).unwrap().get();
            prop_assert!(next == w || next == w + 1);
            prop_assert_eq!(week_of(d + chrono::Duration::days(7)).unwrap().get(), w + 1);
        }

        #[test]
        fn token_counts_are_additive(a in "[a-z0-9 ,.-]{0,30}", b in "[a-z0-9 ,.-]{0,30}") {
            let r = DocumentRecord::new("x", week_epoch(), a.clone(), b.clone());
            // joined with a separator, the fields' tokens cannot merge
            prop_assert_eq!(r.token_count, text::count_tokens(&format!("{a} {b}")));
        }
    }
}
