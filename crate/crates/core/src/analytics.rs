//! Frequency, coverage, redundancy, time-series and dictionary-overlap
//! statistics over a [`MentionIndex`].
//!
//! Functions that take a `&[TermStats]` expect the stats of a single entity;
//! use [`TermFrequencies::for_entity`] to get them.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use log::warn;
use thiserror::Error;

use crate::corpus::{Calendar, WeekIndex};
use crate::lexicon::{detect_entity_conflicts, Lexicon, NormalizedKey};
use crate::tagger::MentionIndex;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("mention refers to document {0:?}, which is not in the corpus")]
    UnknownDocument(String),
    #[error("no mentions to compute a share over")]
    NoMentions,
    #[error("coverage fraction {0} is outside (0, 1]")]
    InvalidFraction(f64),
    #[error("dictionary comparison needs exactly 3 dictionaries, got {0}")]
    DictionaryCount(usize),
    #[error("dictionary {name:?} binds keys to more than one entity: {}", keys.join(", "))]
    Conflicts { name: String, keys: Vec<String> },
}

/// Corpus statistics for one attested (entity, key).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermStats {
    pub term_key: NormalizedKey,
    pub entity: String,
    pub mention_count: usize,
    pub document_count: usize,
    /// Earliest week of any document mentioning the term.
    pub first_week: WeekIndex,
    /// Most frequent surface form, ties broken lexically.
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntitySummary {
    pub entity: String,
    pub terms: usize,
    pub mentions: usize,
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermFrequencies {
    /// Sorted by descending mention count, then key, then entity.
    pub stats: Vec<TermStats>,
    /// One per entity, sorted by entity id.
    pub summaries: Vec<EntitySummary>,
}

impl TermFrequencies {
    pub fn for_entity(&self, entity: &str) -> Vec<TermStats> {
        self.stats.iter().filter(|s| s.entity == entity).cloned().collect()
    }

    pub fn entities(&self) -> impl Iterator<Item = &str> {
        self.summaries.iter().map(|s| s.entity.as_str())
    }

    pub fn summary(&self, entity: &str) -> Option<&EntitySummary> {
        self.summaries.iter().find(|s| s.entity == entity)
    }
}

fn by_frequency(a: &TermStats, b: &TermStats) -> std::cmp::Ordering {
    b.mention_count
        .cmp(&a.mention_count)
        .then_with(|| a.term_key.cmp(&b.term_key))
        .then_with(|| a.entity.cmp(&b.entity))
}

pub fn mean(values: &[usize]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<usize>() as f64 / values.len() as f64
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(values: &[usize]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid] as f64
    } else {
        (v[mid - 1] + v[mid]) as f64 / 2.0
    }
}

pub fn term_frequencies(index: &MentionIndex, calendar: &Calendar) -> Result<TermFrequencies, AnalyticsError> {
    struct Acc<'a> {
        first_week: WeekIndex,
        surfaces: HashMap<&'a str, usize>,
    }
    let mut acc: HashMap<(&str, &NormalizedKey), Acc> = HashMap::new();
    for m in index.mentions() {
        let week = calendar
            .week(&m.doc_id)
            .ok_or_else(|| AnalyticsError::UnknownDocument(m.doc_id.clone()))?;
        let a = acc.entry((&m.entity, &m.term_key)).or_insert_with(|| Acc {
            first_week: week,
            surfaces: HashMap::new(),
        });
        a.first_week = a.first_week.min(week);
        *a.surfaces.entry(&m.surface).or_default() += 1;
    }

    let mut stats: Vec<TermStats> = index
        .terms()
        .iter()
        .map(|((entity, key), agg)| {
            let a = &acc[&(entity.as_str(), key)];
            let surface = a
                .surfaces
                .iter()
                .max_by(|x, y| x.1.cmp(y.1).then_with(|| y.0.cmp(x.0)))
                .map(|(s, _)| s.to_string())
                .unwrap_or_default();
            TermStats {
                term_key: key.clone(),
                entity: entity.clone(),
                mention_count: agg.mentions,
                document_count: agg.documents,
                first_week: a.first_week,
                surface,
            }
        })
        .collect();
    stats.sort_by(by_frequency);

    let mut per_entity: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for s in &stats {
        per_entity.entry(&s.entity).or_default().push(s.mention_count);
    }
    let summaries = per_entity
        .into_iter()
        .map(|(entity, counts)| EntitySummary {
            entity: entity.to_owned(),
            terms: counts.len(),
            mentions: counts.iter().sum(),
            mean: mean(&counts),
            median: median(&counts),
        })
        .collect();
    Ok(TermFrequencies { stats, summaries })
}

/// Share of an entity's mentions that use `canonical`.
pub fn canonical_share(stats: &[TermStats], canonical: &NormalizedKey) -> Result<f64, AnalyticsError> {
    let total: usize = stats.iter().map(|s| s.mention_count).sum();
    if total == 0 {
        return Err(AnalyticsError::NoMentions);
    }
    match stats.iter().find(|s| &s.term_key == canonical) {
        Some(s) => Ok(s.mention_count as f64 / total as f64),
        None => {
            warn!("canonical term {canonical:?} has no mentions");
            Ok(0.0)
        }
    }
}

fn ranked(stats: &[TermStats]) -> Vec<&TermStats> {
    let mut v: Vec<&TermStats> = stats.iter().collect();
    v.sort_by(|a, b| by_frequency(a, b));
    v
}

/// (rank, mention count) with rank 1 the most frequent term.
pub fn rank_frequency(stats: &[TermStats]) -> Vec<(usize, usize)> {
    ranked(stats)
        .into_iter()
        .enumerate()
        .map(|(i, s)| (i + 1, s.mention_count))
        .collect()
}

/// Least-squares slope of ln(count) against ln(rank). `None` with fewer than
/// two distinct ranks.
pub fn zipf_slope(series: &[(usize, usize)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|&&(r, c)| r > 0 && c > 0)
        .map(|&(r, c)| ((r as f64).ln(), (c as f64).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Smallest number of most frequent terms whose mentions make up at least
/// `p` of the entity's mentions.
pub fn coverage_at(stats: &[TermStats], p: f64) -> Result<usize, AnalyticsError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(AnalyticsError::InvalidFraction(p));
    }
    let total: usize = stats.iter().map(|s| s.mention_count).sum();
    if total == 0 {
        return Ok(0);
    }
    let mut covered = 0;
    for (k, s) in ranked(stats).into_iter().enumerate() {
        covered += s.mention_count;
        if covered as f64 / total as f64 >= p {
            return Ok(k + 1);
        }
    }
    // floating point could leave p = 1.0 just out of reach
    Ok(stats.iter().filter(|s| s.mention_count > 0).count())
}

/// Keys of the terms that contain no strictly more frequent key of the same
/// entity, most frequent first.
pub fn non_redundant_terms(stats: &[TermStats]) -> Vec<NormalizedKey> {
    let order = ranked(stats);
    order
        .iter()
        .filter(|t| {
            !order.iter().any(|other| {
                other.entity == t.entity
                    && other.mention_count > t.mention_count
                    && t.term_key.contains(&other.term_key)
            })
        })
        .map(|t| t.term_key.clone())
        .collect()
}

/// Per entity, the number of distinct terms first seen in or before each
/// week, for every week the corpus spans.
pub fn unique_terms_over_time(
    index: &MentionIndex,
    calendar: &Calendar,
) -> Result<BTreeMap<String, Vec<(WeekIndex, usize)>>, AnalyticsError> {
    let freqs = term_frequencies(index, calendar)?;
    let mut out = BTreeMap::new();
    let Some((first, last)) = calendar.span() else {
        return Ok(out);
    };
    for entity in freqs.entities() {
        let mut new_terms: BTreeMap<WeekIndex, usize> = BTreeMap::new();
        for s in freqs.stats.iter().filter(|s| s.entity == entity) {
            *new_terms.entry(s.first_week).or_default() += 1;
        }
        let mut series = Vec::new();
        let mut total = 0;
        let mut w = first;
        while w <= last {
            total += new_terms.get(&w).copied().unwrap_or(0);
            series.push((w, total));
            w = w.next();
        }
        out.insert(entity.to_owned(), series);
    }
    Ok(out)
}

/// What the weekly @k share is a fraction of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Denominator {
    /// Articles added that week that mention the entity at all.
    #[default]
    Entity,
    /// All articles added that week.
    All,
}

/// The `k` keys of an entity with the most mentions, ties broken by key.
pub fn top_keys(stats: &[TermStats], k: usize) -> Vec<NormalizedKey> {
    ranked(stats).into_iter().take(k).map(|s| s.term_key.clone()).collect()
}

/// Per entity and week, the fraction of articles that mention the entity
/// with one of its `k` most frequent terms (ranked over the whole corpus).
/// Weeks with an empty denominator are left out.
pub fn common_term_article_share(
    index: &MentionIndex,
    calendar: &Calendar,
    k: usize,
    denominator: Denominator,
) -> Result<BTreeMap<String, Vec<(WeekIndex, f64)>>, AnalyticsError> {
    let freqs = term_frequencies(index, calendar)?;
    let all_docs = calendar.documents_per_week();
    let mut out = BTreeMap::new();
    for entity in freqs.entities() {
        let top: HashSet<NormalizedKey> = top_keys(&freqs.for_entity(entity), k).into_iter().collect();
        let mut any: HashSet<&str> = HashSet::new();
        let mut common: HashSet<&str> = HashSet::new();
        for m in index.mentions().iter().filter(|m| m.entity == entity) {
            any.insert(&m.doc_id);
            if top.contains(&m.term_key) {
                common.insert(&m.doc_id);
            }
        }
        let mut num: BTreeMap<WeekIndex, usize> = BTreeMap::new();
        let mut den: BTreeMap<WeekIndex, usize> = BTreeMap::new();
        for doc in &any {
            let w = calendar.week(doc).expect("checked by term_frequencies");
            *den.entry(w).or_default() += 1;
            if common.contains(doc) {
                *num.entry(w).or_default() += 1;
            }
        }
        if denominator == Denominator::All {
            den = all_docs.iter().map(|(&w, &n)| (w, n)).collect();
        }
        let series = den
            .into_iter()
            .filter(|&(_, d)| d > 0)
            .map(|(w, d)| (w, num.get(&w).copied().unwrap_or(0) as f64 / d as f64))
            .collect();
        out.insert(entity.to_owned(), series);
    }
    Ok(out)
}

/// One of the seven regions of a three-set diagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Region(u8);

impl Region {
    /// All regions: A, B, C, A&B, A&C, B&C, A&B&C.
    pub const ALL: [Region; 7] = [
        Region(0b001),
        Region(0b010),
        Region(0b100),
        Region(0b011),
        Region(0b101),
        Region(0b110),
        Region(0b111),
    ];

    pub fn from_membership(in_a: bool, in_b: bool, in_c: bool) -> Option<Region> {
        let mask = in_a as u8 | (in_b as u8) << 1 | (in_c as u8) << 2;
        (mask != 0).then_some(Region(mask))
    }

    pub fn contains(self, set: usize) -> bool {
        self.0 & (1 << set) != 0
    }

    fn slot(self) -> usize {
        Region::ALL.iter().position(|&r| r == self).expect("valid region")
    }

    /// `A`, `A&B`, ... by set position.
    pub fn code(self) -> String {
        ["A", "B", "C"]
            .iter()
            .enumerate()
            .filter(|&(i, _)| self.contains(i))
            .map(|(_, s)| *s)
            .collect::<Vec<_>>()
            .join("&")
    }

    /// Member dictionary names joined with `+`.
    pub fn label(self, names: &[String; 3]) -> String {
        names
            .iter()
            .enumerate()
            .filter(|&(i, _)| self.contains(i))
            .map(|(_, s)| s.as_str())
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// Per-entity overlap of three dictionaries' attested keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VennReport {
    pub names: [String; 3],
    regions: BTreeMap<String, [BTreeSet<NormalizedKey>; 7]>,
}

impl VennReport {
    pub fn entities(&self) -> impl Iterator<Item = &str> {
        self.regions.keys().map(String::as_str)
    }

    pub fn keys(&self, entity: &str, region: Region) -> Option<&BTreeSet<NormalizedKey>> {
        self.regions.get(entity).map(|r| &r[region.slot()])
    }

    pub fn count(&self, entity: &str, region: Region) -> usize {
        self.keys(entity, region).map_or(0, BTreeSet::len)
    }

    pub fn counts(&self, entity: &str) -> [usize; 7] {
        Region::ALL.map(|r| self.count(entity, r))
    }
}

/// Compares three dictionaries on the keys each contributes per entity,
/// after dropping keys that have no mention in `index`.
pub fn compare_dictionaries(dicts: &[(&str, &Lexicon)], index: &MentionIndex) -> Result<VennReport, AnalyticsError> {
    if dicts.len() != 3 {
        return Err(AnalyticsError::DictionaryCount(dicts.len()));
    }
    for (name, lex) in dicts {
        let conflicts = detect_entity_conflicts(lex);
        if !conflicts.is_empty() {
            return Err(AnalyticsError::Conflicts {
                name: name.to_string(),
                keys: conflicts.into_iter().map(|c| c.key.to_string()).collect(),
            });
        }
    }
    let attested: HashSet<&NormalizedKey> = index.mentions().iter().map(|m| &m.term_key).collect();

    // (entity, key) -> membership bits
    let mut membership: BTreeMap<(&str, &NormalizedKey), [bool; 3]> = BTreeMap::new();
    for (i, (_, lex)) in dicts.iter().enumerate() {
        for t in lex.terms().iter().filter(|t| attested.contains(t.key())) {
            membership.entry((t.entity(), t.key())).or_default()[i] = true;
        }
    }
    let mut regions: BTreeMap<String, [BTreeSet<NormalizedKey>; 7]> = BTreeMap::new();
    for ((entity, key), [a, b, c]) in membership {
        let region = Region::from_membership(a, b, c).expect("at least one member");
        regions.entry(entity.to_owned()).or_default()[region.slot()].insert(key.clone());
    }
    Ok(VennReport {
        names: [0, 1, 2].map(|i| dicts[i].0.to_owned()),
        regions,
    })
}
