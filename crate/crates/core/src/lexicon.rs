//! Entities, terms, normalized keys and the dictionary file format.
//!
//! A [`Lexicon`] binds surface strings to exactly one entity each. Two
//! surfaces of the same entity that normalize to the same key collapse to the
//! one added first; the same key under two entities is kept on both sides and
//! reported by [`detect_entity_conflicts`] for a curator to resolve.
//!
//! # Dictionary format
//!
//! UTF-8, one record per line, tab separated:
//!
//! ```text
//! #entity	COVID-19	disease
//! #entity	SARS-CoV-2	virus
//! COVID-19	coronavirus disease 2019	base
//! COVID-19	COVID-19 disease	generated	r3
//! ```
//!
//! `#entity` lines declare entities. Other lines starting with `#` and blank
//! lines are ignored. When a file declares no entity at all, entities are
//! introduced by first use with kind `other`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use log::warn;
use thiserror::Error;

use crate::text::{fold_char, is_term_char};

/// Errors produced while building or loading a lexicon.
#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("term {0:?} has no alphanumeric characters")]
    EmptyKey(String),
    #[error("unknown entity {0:?}")]
    UnknownEntity(String),
    #[error("entity {0:?} declared twice")]
    DuplicateEntity(String),
    #[error("entity id must be non-empty")]
    EmptyEntityId,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// What kind of concept an entity is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityKind {
    Disease,
    Virus,
    Other,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Disease => "disease",
            EntityKind::Virus => "virus",
            EntityKind::Other => "other",
        }
    }
}

impl FromStr for EntityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "disease" => Ok(EntityKind::Disease),
            "virus" => Ok(EntityKind::Virus),
            "other" => Ok(EntityKind::Other),
            _ => Err(format!("unknown entity kind {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub id: String,
    pub kind: EntityKind,
}

impl Entity {
    pub fn new(id: impl Into<String>, kind: EntityKind) -> Self {
        Entity {
            id: id.into(),
            kind,
        }
    }
}

/// A surface string with case, whitespace and punctuation removed.
///
/// Keys only ever contain lowercase letters and digits, which makes them the
/// unit of matching and deduplication everywhere in the crate.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NormalizedKey(String);

impl NormalizedKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Wraps a string that is already in normalized form.
    ///
    /// Returns `None` if `key` would change under [`normalize`].
    pub fn from_normalized(key: impl Into<String>) -> Option<Self> {
        let key = key.into();
        if normalize(&key).0 == key {
            Some(NormalizedKey(key))
        } else {
            None
        }
    }

    pub fn contains(&self, other: &NormalizedKey) -> bool {
        self.0.contains(other.as_str())
    }
}

impl fmt::Display for NormalizedKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for NormalizedKey {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Case-folds `surface` and drops every character that is not a Unicode
/// letter or digit.
///
/// ```
/// use termvar::lexicon::normalize;
///
/// assert_eq!(normalize("SARS-CoV-2").as_str(), "sarscov2");
/// assert_eq!(normalize("  CoViD — 19 ").as_str(), "covid19");
/// assert!(normalize("!!!").is_empty());
/// ```
pub fn normalize(surface: &str) -> NormalizedKey {
    NormalizedKey(
        surface
            .chars()
            .filter(|&c| is_term_char(c))
            .map(fold_char)
            .collect(),
    )
}

/// Where a term came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Provenance {
    Base,
    Generated,
    External,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Base => "base",
            Provenance::Generated => "generated",
            Provenance::External => "external",
        }
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "base" => Ok(Provenance::Base),
            "generated" => Ok(Provenance::Generated),
            "external" => Ok(Provenance::External),
            _ => Err(format!("unknown provenance {s:?}")),
        }
    }
}

/// A surface string bound to one entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    surface: String,
    entity: String,
    provenance: Provenance,
    derivation: Vec<String>,
    key: NormalizedKey,
}

impl Term {
    pub fn new(
        surface: impl Into<String>,
        entity: impl Into<String>,
        provenance: Provenance,
    ) -> Result<Self, LexiconError> {
        let surface = surface.into();
        let key = normalize(&surface);
        if key.is_empty() {
            return Err(LexiconError::EmptyKey(surface));
        }
        Ok(Term {
            surface,
            entity: entity.into(),
            provenance,
            derivation: Vec::new(),
            key,
        })
    }

    /// A generated term: `derivation` lists the rule ids applied, in order.
    pub fn derived(
        surface: impl Into<String>,
        entity: impl Into<String>,
        derivation: Vec<String>,
    ) -> Result<Self, LexiconError> {
        let mut term = Term::new(surface, entity, Provenance::Generated)?;
        term.derivation = derivation;
        Ok(term)
    }

    pub fn surface(&self) -> &str {
        &self.surface
    }

    pub fn entity(&self) -> &str {
        &self.entity
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn derivation(&self) -> &[String] {
        &self.derivation
    }

    pub fn key(&self) -> &NormalizedKey {
        &self.key
    }
}

/// A surface that was dropped because an earlier surface of the same entity
/// already claimed its key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Collision {
    pub entity: String,
    pub key: NormalizedKey,
    pub kept: String,
    pub dropped: String,
    pub line: Option<usize>,
}

/// Result of [`Lexicon::insert`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Insertion {
    Added,
    Duplicate,
}

/// An immutable-after-load set of terms with a key index.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entities: Vec<Entity>,
    terms: Vec<Term>,
    index: BTreeMap<NormalizedKey, Vec<usize>>,
    collisions: Vec<Collision>,
}

/// Equality ignores the collision log.
impl PartialEq for Lexicon {
    fn eq(&self, other: &Self) -> bool {
        self.entities == other.entities && self.terms == other.terms
    }
}

impl Lexicon {
    pub fn new() -> Self {
        Lexicon::default()
    }

    pub fn with_entities(entities: impl IntoIterator<Item = Entity>) -> Result<Self, LexiconError> {
        let mut lexicon = Lexicon::new();
        for entity in entities {
            lexicon.add_entity(entity)?;
        }
        Ok(lexicon)
    }

    pub fn add_entity(&mut self, entity: Entity) -> Result<(), LexiconError> {
        if entity.id.is_empty() {
            return Err(LexiconError::EmptyEntityId);
        }
        if self.entity(&entity.id).is_some() {
            return Err(LexiconError::DuplicateEntity(entity.id));
        }
        self.entities.push(entity);
        Ok(())
    }

    /// Adds `term`; a term whose (entity, key) pair is already present is
    /// dropped and recorded as a collision.
    pub fn insert(&mut self, term: Term) -> Result<Insertion, LexiconError> {
        self.insert_at(term, None)
    }

    fn insert_at(&mut self, term: Term, line: Option<usize>) -> Result<Insertion, LexiconError> {
        if self.entity(&term.entity).is_none() {
            return Err(LexiconError::UnknownEntity(term.entity));
        }
        let slot = self.index.entry(term.key.clone()).or_default();
        if let Some(&existing) = slot.iter().find(|&&i| self.terms[i].entity == term.entity) {
            let kept = &self.terms[existing];
            warn!(
                "duplicate key {:?} for {}: keeping {:?}, dropping {:?}{}",
                term.key.as_str(),
                term.entity,
                kept.surface,
                term.surface,
                line.map(|l| format!(" (line {l})")).unwrap_or_default()
            );
            self.collisions.push(Collision {
                entity: term.entity,
                key: term.key,
                kept: kept.surface.clone(),
                dropped: term.surface,
                line,
            });
            return Ok(Insertion::Duplicate);
        }
        slot.push(self.terms.len());
        self.terms.push(term);
        Ok(Insertion::Added)
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.id == id)
    }

    /// Terms in insertion order.
    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms stored under `key`, across all entities.
    pub fn lookup<'a>(&'a self, key: &NormalizedKey) -> impl Iterator<Item = &'a Term> + 'a {
        self.index
            .get(key)
            .into_iter()
            .flatten()
            .map(move |&i| &self.terms[i])
    }

    pub fn contains(&self, entity: &str, key: &NormalizedKey) -> bool {
        self.lookup(key).any(|t| t.entity == entity)
    }

    /// Distinct keys in sorted order.
    pub fn keys(&self) -> impl Iterator<Item = &NormalizedKey> {
        self.index.keys()
    }

    pub fn collisions(&self) -> &[Collision] {
        &self.collisions
    }

    /// A lexicon with the same entities holding only the terms accepted by
    /// `keep`, in the original order.
    pub fn retain(&self, mut keep: impl FnMut(&Term) -> bool) -> Lexicon {
        let mut out = Lexicon {
            entities: self.entities.clone(),
            ..Lexicon::default()
        };
        for term in self.terms.iter().filter(|t| keep(t)) {
            out.insert(term.clone())
                .expect("entities carried over from source lexicon");
        }
        out
    }
}

/// A normalized key bound to terms of more than one entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityConflict {
    pub key: NormalizedKey,
    /// Sorted entity ids.
    pub entities: Vec<String>,
}

/// Every key bound to two or more entities, sorted by key.
pub fn detect_entity_conflicts(lexicon: &Lexicon) -> Vec<EntityConflict> {
    lexicon
        .index
        .iter()
        .filter_map(|(key, slots)| {
            let entities: BTreeSet<&str> = slots
                .iter()
                .map(|&i| lexicon.terms[i].entity.as_str())
                .collect();
            (entities.len() > 1).then(|| EntityConflict {
                key: key.clone(),
                entities: entities.into_iter().map(str::to_owned).collect(),
            })
        })
        .collect()
}

fn parse_err(line: usize, message: impl Into<String>) -> LexiconError {
    LexiconError::Parse {
        line,
        message: message.into(),
    }
}

/// Reads a dictionary file.
pub fn load_dictionary<R: BufRead>(reader: R) -> Result<Lexicon, LexiconError> {
    let mut lexicon = Lexicon::new();
    let mut declared = false;
    // entity id -> first line it was used on, for implicit declaration
    let mut implicit: HashMap<String, usize> = HashMap::new();

    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#entity\t") {
            let cols: Vec<&str> = rest.split('\t').collect();
            if cols.len() != 2 {
                return Err(parse_err(line_no, "entity declaration needs id and kind"));
            }
            if !implicit.is_empty() {
                return Err(parse_err(
                    line_no,
                    "entity declaration after terms with undeclared entities",
                ));
            }
            let kind = cols[1].parse().map_err(|m: String| parse_err(line_no, m))?;
            lexicon
                .add_entity(Entity::new(cols[0], kind))
                .map_err(|e| parse_err(line_no, e.to_string()))?;
            declared = true;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }

        let cols: Vec<&str> = line.split('\t').collect();
        if !(3..=4).contains(&cols.len()) {
            return Err(parse_err(
                line_no,
                format!("expected 3 or 4 tab-separated columns, found {}", cols.len()),
            ));
        }
        let (entity, surface) = (cols[0], cols[1]);
        if entity.is_empty() {
            return Err(parse_err(line_no, "empty entity id"));
        }
        if lexicon.entity(entity).is_none() {
            if declared {
                return Err(parse_err(line_no, format!("unknown entity {entity:?}")));
            }
            implicit.insert(entity.to_owned(), line_no);
            lexicon.add_entity(Entity::new(entity, EntityKind::Other))?;
        }
        let provenance: Provenance = cols[2].parse().map_err(|m: String| parse_err(line_no, m))?;
        let derivation: Vec<String> = match cols.get(3) {
            Some(d) if !d.is_empty() => d.split(',').map(str::to_owned).collect(),
            _ => Vec::new(),
        };
        if !derivation.is_empty() && provenance != Provenance::Generated {
            return Err(parse_err(
                line_no,
                "only generated terms carry a derivation",
            ));
        }
        let mut term = Term::new(surface, entity, provenance).map_err(|_| {
            parse_err(
                line_no,
                format!("surface {surface:?} has no alphanumeric characters"),
            )
        })?;
        term.derivation = derivation;
        lexicon.insert_at(term, Some(line_no))?;
    }
    Ok(lexicon)
}

/// Writes `lexicon` in the dictionary format: entity declarations first, then
/// terms in lexicon order.
pub fn write_dictionary<W: Write>(lexicon: &Lexicon, mut out: W) -> io::Result<()> {
    for entity in &lexicon.entities {
        writeln!(out, "#entity\t{}\t{}", entity.id, entity.kind.as_str())?;
    }
    for term in &lexicon.terms {
        write!(
            out,
            "{}\t{}\t{}",
            term.entity,
            term.surface,
            term.provenance.as_str()
        )?;
        if !term.derivation.is_empty() {
            write!(out, "\t{}", term.derivation.join(","))?;
        }
        writeln!(out)?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn load(s: &str) -> Result<Lexicon, LexiconError> {
        load_dictionary(s.as_bytes())
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize("SARS-CoV-2").as_str(), "sarscov2");
        assert_eq!(normalize("  CoViD — 19 ").as_str(), "covid19");
        assert_eq!(normalize("!!!").as_str(), "");
        assert_eq!(normalize("COVID–19").as_str(), "covid19");
    }

    #[test]
    fn two_rows_one_entity() {
        let lex = load("COVID-19\tCOVID-19\tbase\nCOVID-19\tcoronavirus disease 2019\tbase\n").unwrap();
        assert_eq!(lex.len(), 2);
        assert_eq!(lex.entities().len(), 1);
    }

    #[test]
    fn undeclared_entity_rejected_with_line() {
        let src = "#entity\tCOVID-19\tdisease\n#entity\tSARS-CoV-2\tvirus\nCOVID-19\tCOVID\tbase\nFLU\tinfluenza\tbase\n";
        match load(src) {
            Err(LexiconError::Parse { line, message }) => {
                assert_eq!(line, 4);
                assert!(message.contains("FLU"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_rows() {
        assert!(matches!(load("COVID-19\tCOVID\n"), Err(LexiconError::Parse { line: 1, .. })));
        assert!(matches!(
            load("# c\nCOVID-19\t--\tbase\n"),
            Err(LexiconError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            load("COVID-19\tCOVID\tsomething\n"),
            Err(LexiconError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            load("COVID-19\tCOVID\tbase\tr1\n"),
            Err(LexiconError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            load("#entity\tX\tplanet\n"),
            Err(LexiconError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_keys_collapse_to_first() {
        let lex = load("COVID-19\tCovid-19\tbase\nCOVID-19\tCOVID 19\tbase\n").unwrap();
        assert_eq!(lex.len(), 1);
        assert_eq!(lex.keys().map(|k| k.as_str()).collect::<Vec<_>>(), vec!["covid19"]);
        assert_eq!(lex.terms()[0].surface(), "Covid-19");
        let c = &lex.collisions()[0];
        assert_eq!((c.dropped.as_str(), c.line), ("COVID 19", Some(2)));
    }

    #[test]
    fn conflicts() {
        let src = "#entity\tCOVID-19\tdisease\n#entity\tSARS-CoV-2\tvirus\n\
                   COVID-19\t2019 nCoV infection\tbase\nSARS-CoV-2\t2019-nCoV infection\tbase\n\
                   SARS-CoV-2\tSARS-CoV-2\tbase\n";
        let conflicts = detect_entity_conflicts(&load(src).unwrap());
        assert_eq!(
            conflicts,
            vec![EntityConflict {
                key: normalize("2019ncovinfection"),
                entities: vec!["COVID-19".into(), "SARS-CoV-2".into()],
            }]
        );
        let clean = load("A\tx\tbase\nB\ty\tbase\n").unwrap();
        assert!(detect_entity_conflicts(&clean).is_empty());
    }

    #[test]
    fn three_way_conflict() {
        let lex = load("C\tfoo bar\tbase\nA\tFoo-Bar\tbase\nB\tFOOBAR\texternal\nA\tother\tbase\n").unwrap();
        let conflicts = detect_entity_conflicts(&lex);
        assert_eq!(conflicts.len(), 1);
        assert_eq!(conflicts[0].key.as_str(), "foobar");
        assert_eq!(conflicts[0].entities, vec!["A", "B", "C"]);
    }

    #[test]
    fn canonical_file_round_trips_bit_exact() {
        let src = "#entity\tCOVID-19\tdisease\n#entity\tSARS-CoV-2\tvirus\n\
                   COVID-19\tCOVID-19\tbase\nSARS-CoV-2\tnovel coronavirus\texternal\n\
                   COVID-19\tCOVID-19 disease\tgenerated\tr1,r2\n";
        let mut out = Vec::new();
        write_dictionary(&load(src).unwrap(), &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), src);
    }

    #[test]
    fn from_normalized() {
        assert!(NormalizedKey::from_normalized("covid19").is_some());
        assert!(NormalizedKey::from_normalized("COVID").is_none());
        assert!(NormalizedKey::from_normalized("a b").is_none());
    }

    fn surface() -> impl Strategy<Value = String> {
        "[A-Za-z0-9 \\-,.()/'–é]{1,24}".prop_filter("needs an alphanumeric", |s| {
            s.chars().any(char::is_alphanumeric)
        })
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in any::<String>()) {
            let once = normalize(&s);
            prop_assert_eq!(normalize(once.as_str()), once);
        }

        #[test]
        fn key_alphabet(s in any::<String>()) {
            let key = normalize(&s);
            prop_assert!(key.as_str().chars().all(|c| c.is_alphanumeric()));
            prop_assert!(!key.as_str().chars().any(char::is_whitespace));
        }

        #[test]
        fn insensitive_to_separators_and_case(
            s in "[A-Za-z0-9]{1,20}",
            seps in proptest::collection::vec((0usize..21, "[ \\-_.,;:/()–—]{1,3}"), 0..5),
            upper in proptest::collection::vec(any::<bool>(), 20),
        ) {
            let mut perturbed: String = s
                .chars()
                .zip(upper.iter().cycle())
                .map(|(c, &u)| if u { c.to_ascii_uppercase() } else { c.to_ascii_lowercase() })
                .collect();
            for (pos, sep) in seps {
                let mut at = pos.min(perturbed.len());
                while !perturbed.is_char_boundary(at) { at -= 1; }
                perturbed.insert_str(at, &sep);
            }
            prop_assert_eq!(normalize(&perturbed), normalize(&s));
        }

        #[test]
        fn dictionary_round_trip(rows in proptest::collection::vec((0usize..3, surface(), 0usize..3), 0..30)) {
            let mut src = String::from("#entity\tA\tdisease\n#entity\tB\tvirus\n#entity\tC\tother\n");
            for (e, s, p) in rows {
                let prov = ["base", "generated", "external"][p];
                src.push_str(&format!("{}\t{}\t{}\n", ["A", "B", "C"][e], s.trim_end_matches('\r'), prov));
            }
            let first = load(&src).unwrap();
            let mut buf = Vec::new();
            write_dictionary(&first, &mut buf).unwrap();
            let second = load_dictionary(buf.as_slice()).unwrap();
            prop_assert_eq!(&first, &second);
            let mut again = Vec::new();
            write_dictionary(&second, &mut again).unwrap();
            prop_assert_eq!(buf, again);
        }

        #[test]
        fn conflict_free_iff_single_entity_per_key(rows in proptest::collection::vec((0usize..3, "[ab]{1,3}"), 0..12)) {
            let mut lex = Lexicon::with_entities(["A", "B", "C"].map(|id| Entity::new(id, EntityKind::Other))).unwrap();
            for (e, s) in rows {
                lex.insert(Term::new(s, ["A", "B", "C"][e], Provenance::Base).unwrap()).unwrap();
            }
            let mut per_key: BTreeMap<NormalizedKey, BTreeSet<String>> = BTreeMap::new();
            for t in lex.terms() {
                per_key.entry(t.key().clone()).or_default().insert(t.entity().to_owned());
            }
            let single = per_key.values().all(|s| s.len() == 1);
            prop_assert_eq!(detect_entity_conflicts(&lex).is_empty(), single);
        }
    }
}
