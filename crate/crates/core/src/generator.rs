//! Rule-driven expansion of a seed lexicon into candidate terms.
//!
//! Three kinds of rewrite are supported:
//!
//! * substitution of one phrase for another at a token boundary
//!   (`novel` ↔ `new`, `2019` ↔ `19`, `coronavirus` → `virus`),
//! * cross-entity expansion, attaching an affix that turns a term for one
//!   entity into a term for another (`+ infection`: virus → disease),
//! * same-entity expansion (`+ disease`: disease → disease).
//!
//! [`expand_fixpoint`] applies the rules repeatedly. Every rule may be used at
//! most `max_rule_applications_per_derivation` times along one derivation, so
//! the closure is finite even for rules such as `+ disease` that could
//! otherwise be stacked forever.
//!
//! # Rules format
//!
//! ```text
//! sub	s1	novel	new	synonym	bidir
//! sub	s2	2019	19	near_synonym	uni
//! exp	e1	infection	suffix	SARS-CoV-2	COVID-19
//! limit	max_term_tokens	10
//! ```

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::io::{self, BufRead};
use std::str::FromStr;

use thiserror::Error;

use crate::lexicon::{normalize, Entity, Lexicon, NormalizedKey, Term};
use crate::text::{count_tokens, token_spans};

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("capacity exceeded: more than {limit} candidates (max_candidates)")]
    Capacity { limit: usize },
    #[error("rule {rule} refers to entity {entity:?}, which the seed lexicon does not declare")]
    UnknownEntity { rule: String, entity: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Synonym,
    NearSynonym,
    Hypernym,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Synonym => "synonym",
            Relation::NearSynonym => "near_synonym",
            Relation::Hypernym => "hypernym",
        }
    }
}

impl FromStr for Relation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "synonym" => Ok(Relation::Synonym),
            "near_synonym" => Ok(Relation::NearSynonym),
            "hypernym" => Ok(Relation::Hypernym),
            _ => Err(format!("unknown relation {s:?}")),
        }
    }
}

/// Replaces one phrase with another wherever the phrase's tokens occur as
/// consecutive tokens of a term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubstitutionRule {
    pub id: String,
    pub lhs: String,
    pub rhs: String,
    pub relation: Relation,
    pub bidirectional: bool,
    lhs_tokens: Vec<NormalizedKey>,
    rhs_tokens: Vec<NormalizedKey>,
}

impl SubstitutionRule {
    pub fn new(
        id: impl Into<String>,
        lhs: impl Into<String>,
        rhs: impl Into<String>,
        relation: Relation,
        bidirectional: bool,
    ) -> Result<Self, String> {
        let (lhs, rhs) = (lhs.into(), rhs.into());
        let lhs_tokens = phrase_tokens(&lhs);
        let rhs_tokens = phrase_tokens(&rhs);
        if lhs_tokens.is_empty() || rhs_tokens.is_empty() {
            return Err("substitution phrases must contain alphanumeric characters".into());
        }
        if normalize(&lhs) == normalize(&rhs) {
            return Err(format!("{lhs:?} and {rhs:?} are the same after normalization"));
        }
        Ok(SubstitutionRule {
            id: id.into(),
            lhs,
            rhs,
            relation,
            bidirectional,
            lhs_tokens,
            rhs_tokens,
        })
    }
}

fn phrase_tokens(phrase: &str) -> Vec<NormalizedKey> {
    token_spans(phrase).map(|r| normalize(&phrase[r])).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    Prefix,
    Suffix,
}

impl Position {
    pub fn as_str(self) -> &'static str {
        match self {
            Position::Prefix => "prefix",
            Position::Suffix => "suffix",
        }
    }
}

/// Attaches an affix to a term of `source_entity`, producing a term of
/// `target_entity` (the same entity for same-entity rules).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpansionRule {
    pub id: String,
    pub affix: String,
    pub position: Position,
    pub source_entity: String,
    pub target_entity: String,
}

impl ExpansionRule {
    pub fn is_cross_entity(&self) -> bool {
        self.source_entity != self.target_entity
    }
}

/// Termination controls for [`expand_fixpoint`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationLimits {
    pub max_rule_applications_per_derivation: usize,
    pub max_term_tokens: usize,
    pub max_candidates: usize,
}

impl Default for GenerationLimits {
    fn default() -> Self {
        GenerationLimits {
            max_rule_applications_per_derivation: 1,
            max_term_tokens: 12,
            max_candidates: 500_000,
        }
    }
}

impl GenerationLimits {
    /// Sets a limit by its file name. Values must be positive.
    pub fn set(&mut self, name: &str, value: usize) -> Result<(), String> {
        if value == 0 {
            return Err(format!("limit {name} must be positive"));
        }
        match name {
            "max_rule_applications_per_derivation" => {
                self.max_rule_applications_per_derivation = value
            }
            "max_term_tokens" => self.max_term_tokens = value,
            "max_candidates" => self.max_candidates = value,
            _ => return Err(format!("unknown limit {name:?}")),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleSet {
    pub substitutions: Vec<SubstitutionRule>,
    pub expansions: Vec<ExpansionRule>,
    pub limits: GenerationLimits,
}

impl RuleSet {
    pub fn is_empty(&self) -> bool {
        self.substitutions.is_empty() && self.expansions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.substitutions.len() + self.expansions.len()
    }

    fn ids(&self) -> impl Iterator<Item = &str> {
        self.substitutions
            .iter()
            .map(|r| r.id.as_str())
            .chain(self.expansions.iter().map(|r| r.id.as_str()))
    }
}

/// Reads a rules file. Expansion rules must name entities from `entities`.
pub fn parse_ruleset<R: BufRead>(reader: R, entities: &[Entity]) -> Result<RuleSet, RuleError> {
    let mut rules = RuleSet::default();
    let mut ids = HashSet::new();
    let known = |id: &str| entities.iter().any(|e| e.id == id);

    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let err = |message: String| RuleError::Parse {
            line: line_no,
            message,
        };
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let arity = |want: usize| {
            if cols.len() == want {
                Ok(())
            } else {
                Err(err(format!(
                    "{} line needs {want} columns, found {}",
                    cols[0],
                    cols.len()
                )))
            }
        };
        match cols[0] {
            "sub" => {
                arity(6)?;
                let relation = cols[4].parse().map_err(err)?;
                let bidirectional = match cols[5] {
                    "bidir" => true,
                    "uni" => false,
                    other => return Err(err(format!("expected bidir or uni, found {other:?}"))),
                };
                let rule = SubstitutionRule::new(cols[1], cols[2], cols[3], relation, bidirectional)
                    .map_err(err)?;
                rules.substitutions.push(rule);
            }
            "exp" => {
                arity(6)?;
                let position = match cols[3] {
                    "prefix" => Position::Prefix,
                    "suffix" => Position::Suffix,
                    other => {
                        return Err(err(format!("expected prefix or suffix, found {other:?}")))
                    }
                };
                if normalize(cols[2]).is_empty() {
                    return Err(err("affix has no alphanumeric characters".into()));
                }
                for entity in [cols[4], cols[5]] {
                    if !known(entity) {
                        return Err(err(format!("unknown entity {entity:?}")));
                    }
                }
                rules.expansions.push(ExpansionRule {
                    id: cols[1].to_owned(),
                    affix: cols[2].to_owned(),
                    position,
                    source_entity: cols[4].to_owned(),
                    target_entity: cols[5].to_owned(),
                });
            }
            "limit" => {
                arity(3)?;
                let value: usize = cols[2]
                    .parse()
                    .map_err(|_| err(format!("limit value {:?} is not a count", cols[2])))?;
                rules.limits.set(cols[1], value).map_err(err)?;
                continue;
            }
            other => return Err(err(format!("unknown line type {other:?}"))),
        }
        let id = cols[1];
        if id.is_empty() {
            return Err(err("empty rule id".into()));
        }
        if !ids.insert(id.to_owned()) {
            return Err(err(format!("duplicate rule id {id:?}")));
        }
    }
    Ok(rules)
}

/// Rewrites one occurrence site of the rule's phrase per output term.
///
/// Sites are matched on whole tokens, case-insensitively; bidirectional
/// rules also rewrite occurrences of the right-hand side. Outputs are in
/// site order with duplicates removed.
pub fn apply_substitution(term: &Term, rule: &SubstitutionRule) -> Vec<Term> {
    let surface = term.surface();
    let spans: Vec<_> = token_spans(surface).collect();
    let tokens: Vec<NormalizedKey> = spans.iter().map(|r| normalize(&surface[r.clone()])).collect();

    let mut directions = vec![(&rule.lhs_tokens, &rule.rhs)];
    if rule.bidirectional {
        directions.push((&rule.rhs_tokens, &rule.lhs));
    }

    // (site start token, replacement) pairs, sorted so output order follows the text
    let mut sites = Vec::new();
    for (pattern, replacement) in directions {
        let width = pattern.len();
        if width > tokens.len() {
            continue;
        }
        for start in 0..=tokens.len() - width {
            if tokens[start..start + width] == pattern[..] {
                sites.push((start, width, replacement));
            }
        }
    }
    sites.sort_by_key(|&(start, width, _)| (start, width));

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (start, width, replacement) in sites {
        let from = spans[start].start;
        let to = spans[start + width - 1].end;
        let rewritten = format!("{}{}{}", &surface[..from], replacement, &surface[to..]);
        if rewritten == surface || !seen.insert(rewritten.clone()) {
            continue;
        }
        let mut derivation = term.derivation().to_vec();
        derivation.push(rule.id.clone());
        if let Ok(t) = Term::derived(rewritten, term.entity(), derivation) {
            out.push(t);
        }
    }
    out
}

/// Attaches the rule's affix, or returns `None` when the term belongs to a
/// different entity than the rule's source.
pub fn apply_expansion(term: &Term, rule: &ExpansionRule) -> Option<Term> {
    if term.entity() != rule.source_entity {
        return None;
    }
    let surface = match rule.position {
        Position::Prefix => format!("{} {}", rule.affix, term.surface()),
        Position::Suffix => format!("{} {}", term.surface(), rule.affix),
    };
    let mut derivation = term.derivation().to_vec();
    derivation.push(rule.id.clone());
    Term::derived(surface, rule.target_entity.as_str(), derivation).ok()
}

/// One explored surface together with how often each rule has been used to
/// reach it.
struct State {
    term: Term,
    usage: Vec<u16>,
}

fn dominates(a: &[u16], b: &[u16]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

/// Closes `seed` under `rules`.
///
/// The search is breadth-first over (surface, rule usage) states. A state is
/// skipped when the same surface was already reached with no more uses of
/// any rule, so the reachable key set equals the union over every derivation
/// that respects the per-rule cap. Each output key keeps the surface and
/// derivation found first. Seed terms are always kept; new terms longer than
/// `max_term_tokens` are discarded. The result is sorted by (entity, key).
pub fn expand_fixpoint(seed: &Lexicon, rules: &RuleSet) -> Result<Lexicon, GenerateError> {
    for rule in &rules.expansions {
        for entity in [&rule.source_entity, &rule.target_entity] {
            if seed.entity(entity).is_none() {
                return Err(GenerateError::UnknownEntity {
                    rule: rule.id.clone(),
                    entity: entity.clone(),
                });
            }
        }
    }

    let limits = rules.limits;
    let cap = limits.max_rule_applications_per_derivation.min(u16::MAX as usize) as u16;
    let n_subs = rules.substitutions.len();
    let n_rules = rules.len();
    // a derivation may record ids of rules from an earlier run that are not in this set
    let rule_index: HashMap<&str, usize> = rules.ids().enumerate().map(|(i, id)| (id, i)).collect();

    let mut outputs: BTreeMap<(String, NormalizedKey), Term> = BTreeMap::new();
    let mut explored: HashMap<(String, String), Vec<Vec<u16>>> = HashMap::new();
    let mut queue: VecDeque<State> = VecDeque::new();

    let mut admit = |term: Term,
                     usage: Vec<u16>,
                     is_seed: bool,
                     outputs: &mut BTreeMap<(String, NormalizedKey), Term>,
                     queue: &mut VecDeque<State>|
     -> Result<(), GenerateError> {
        if !is_seed && count_tokens(term.surface()) > limits.max_term_tokens {
            return Ok(());
        }
        let seen = explored
            .entry((term.entity().to_owned(), term.surface().to_owned()))
            .or_default();
        if seen.iter().any(|u| dominates(u, &usage)) {
            return Ok(());
        }
        seen.retain(|u| !dominates(&usage, u));
        seen.push(usage.clone());

        let id = (term.entity().to_owned(), term.key().clone());
        if !outputs.contains_key(&id) {
            if outputs.len() >= limits.max_candidates {
                return Err(GenerateError::Capacity {
                    limit: limits.max_candidates,
                });
            }
            outputs.insert(id, term.clone());
        }
        queue.push_back(State { term, usage });
        Ok(())
    };

    for term in seed.terms() {
        let mut usage = vec![0u16; n_rules];
        for id in term.derivation() {
            if let Some(&i) = rule_index.get(id.as_str()) {
                usage[i] = usage[i].saturating_add(1);
            }
        }
        admit(term.clone(), usage, true, &mut outputs, &mut queue)?;
    }

    while let Some(State { term, usage }) = queue.pop_front() {
        for (i, rule) in rules.substitutions.iter().enumerate() {
            if usage[i] >= cap {
                continue;
            }
            for next in apply_substitution(&term, rule) {
                let mut u = usage.clone();
                u[i] += 1;
                admit(next, u, false, &mut outputs, &mut queue)?;
            }
        }
        for (j, rule) in rules.expansions.iter().enumerate() {
            let i = n_subs + j;
            if usage[i] >= cap {
                continue;
            }
            if let Some(next) = apply_expansion(&term, rule) {
                let mut u = usage.clone();
                u[i] += 1;
                admit(next, u, false, &mut outputs, &mut queue)?;
            }
        }
    }

    let mut out = Lexicon::with_entities(seed.entities().iter().cloned())
        .expect("seed entities are valid");
    for term in outputs.into_values() {
        out.insert(term).expect("entity checked above");
    }
    Ok(out)
}
