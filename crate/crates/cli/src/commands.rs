use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::warn;
use termvar::analytics::{
    canonical_share, common_term_article_share, compare_dictionaries, coverage_at, non_redundant_terms,
    term_frequencies, top_keys, unique_terms_over_time, Denominator,
};
use termvar::corpus::{read_corpus, Calendar, DocumentRecord};
use termvar::generator::{expand_fixpoint, parse_ruleset};
use termvar::lexicon::{detect_entity_conflicts, load_dictionary, normalize, write_dictionary, Lexicon, Provenance};
use termvar::report;
use termvar::tagger::{build_matcher, export_review_samples, filter_unattested, read_mentions, tag_corpus, write_mentions, MentionIndex};

use crate::publish::Publisher;
use crate::{AnalyzeArgs, CompareArgs, DenominatorArg, ExpandArgs, ReviewArgs, TagArgs};

fn require(paths: &[&Path]) -> Result<()> {
    for p in paths {
        if !p.is_file() {
            bail!("input file {} does not exist", p.display());
        }
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
    ))
}

fn load_dict(path: &Path) -> Result<Lexicon> {
    load_dictionary(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn load_mentions(path: &Path) -> Result<MentionIndex> {
    read_mentions(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn mentions_path(explicit: &Option<PathBuf>, out: &Path) -> PathBuf {
    explicit.clone().unwrap_or_else(|| out.join("mentions.tsv"))
}

fn per_entity_counts(lexicon: &Lexicon) -> BTreeMap<&str, usize> {
    let mut counts: BTreeMap<&str, usize> = lexicon.entities().iter().map(|e| (e.id.as_str(), 0)).collect();
    for t in lexicon.terms() {
        *counts.entry(t.entity()).or_default() += 1;
    }
    counts
}

pub fn expand(args: ExpandArgs) -> Result<()> {
    require(&[&args.dict, &args.rules])?;
    let seed = load_dict(&args.dict)?;
    let mut rules = parse_ruleset(open(&args.rules)?, seed.entities())
        .with_context(|| format!("reading {}", args.rules.display()))?;
    let overrides = [
        ("max_candidates", args.max_candidates),
        ("max_term_tokens", args.max_term_tokens),
        ("max_rule_applications_per_derivation", args.max_rule_applications),
    ];
    for (name, value) in overrides {
        if let Some(v) = value {
            rules.limits.set(name, v).map_err(anyhow::Error::msg)?;
        }
    }

    let candidates = expand_fixpoint(&seed, &rules)?;
    let mut out = Publisher::new(&args.out)?;
    out.stage("candidates.tsv", |w| write_dictionary(&candidates, w))?;
    out.commit()?;

    for (entity, n) in per_entity_counts(&candidates) {
        println!("{entity}\t{n} candidates");
    }
    Ok(())
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn tag(args: TagArgs) -> Result<()> {
    require(&[&args.dict, &args.corpus])?;
    let lexicon = load_dict(&args.dict)?;
    let matcher = build_matcher(&lexicon)?;
    let index = tag_corpus(&matcher, read_corpus(open(&args.corpus)?), args.jobs.unwrap_or_else(default_jobs))
        .with_context(|| format!("reading {}", args.corpus.display()))?;
    if index.is_empty() {
        warn!("no dictionary terms found in the corpus");
    }
    let attested = filter_unattested(&lexicon, &index);

    let mut out = Publisher::new(&args.out)?;
    out.stage("mentions.tsv", |w| write_mentions(index.mentions(), w))?;
    out.stage("attested.tsv", |w| write_dictionary(&attested, w))?;
    out.commit()?;

    println!(
        "{} documents tagged, {} skipped",
        index.documents_tagged(),
        index.skipped()
    );
    let mut mentions: BTreeMap<&str, usize> = BTreeMap::new();
    for m in index.mentions() {
        *mentions.entry(&m.entity).or_default() += 1;
    }
    let unique = per_entity_counts(&attested);
    for (entity, terms) in unique {
        println!(
            "{entity}\t{} mentions\t{terms} unique terms",
            mentions.get(entity).copied().unwrap_or(0)
        );
    }
    Ok(())
}

fn load_calendar(path: &Path) -> Result<Calendar> {
    Calendar::from_records(read_corpus(open(path)?)).with_context(|| format!("reading {}", path.display()))
}

pub fn analyze(args: AnalyzeArgs) -> Result<()> {
    let mentions_file = mentions_path(&args.mentions, &args.out);
    require(&[&args.corpus, &mentions_file])?;
    if args.k == 0 {
        bail!("--k must be at least 1");
    }
    if let Some(p) = args.p.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        bail!("coverage fraction {p} is outside (0, 1]");
    }
    let mut canonical = HashMap::new();
    for spec in &args.canonical {
        let (entity, surface) = spec
            .split_once('=')
            .with_context(|| format!("--canonical {spec:?} is not ENTITY=SURFACE"))?;
        canonical.insert(entity.to_owned(), normalize(surface));
    }

    let index = load_mentions(&mentions_file)?;
    let calendar = load_calendar(&args.corpus)?;
    let freqs = term_frequencies(&index, &calendar)?;

    let mut coverage = Vec::new();
    for entity in freqs.entities() {
        let stats = freqs.for_entity(entity);
        for &p in &args.p {
            coverage.push((entity.to_owned(), p, coverage_at(&stats, p)?));
        }
    }
    let weekly = unique_terms_over_time(&index, &calendar)?;
    let denominator = match args.denominator {
        DenominatorArg::Entity => Denominator::Entity,
        DenominatorArg::All => Denominator::All,
    };
    let mut ks = vec![1, args.k];
    ks.dedup();
    let mut shares = Vec::new();
    for &k in &ks {
        shares.push((k, common_term_article_share(&index, &calendar, k, denominator)?));
    }

    let mut out = Publisher::new(&args.out)?;
    out.stage("term_stats.csv", |w| report::write_term_stats(&freqs, w))?;
    out.stage("rank_frequency.csv", |w| report::write_rank_frequency(&freqs, w))?;
    out.stage("coverage.csv", |w| report::write_coverage(&coverage, w))?;
    out.stage("nonredundant.csv", |w| report::write_nonredundant(&freqs, w))?;
    out.stage("weekly_unique.csv", |w| report::write_weekly_unique(&weekly, w))?;
    out.stage("weekly_share.csv", |w| report::write_weekly_share(&shares, w))?;
    out.commit()?;

    for summary in &freqs.summaries {
        let stats = freqs.for_entity(&summary.entity);
        let key = canonical
            .get(&summary.entity)
            .cloned()
            .unwrap_or_else(|| stats[0].term_key.clone());
        let share = canonical_share(&stats, &key)?;
        println!("{}", summary.entity);
        println!("  terms {}  mentions {}", summary.terms, summary.mentions);
        println!("  mean frequency {:.2}  median {:.1}", summary.mean, summary.median);
        println!("  canonical {key}: {:.1}%", share * 100.0);
        for (_, p, k) in coverage.iter().filter(|c| c.0 == summary.entity) {
            println!("  coverage@{p}: {k} terms");
        }
        println!("  non-redundant terms: {}", non_redundant_terms(&stats).len());
        let top: Vec<String> = top_keys(&stats, 5)
            .iter()
            .map(|k| stats.iter().find(|s| &s.term_key == k).map(|s| s.surface.clone()).unwrap_or_default())
            .collect();
        println!("  top 5: {}", top.join(" | "));
    }
    Ok(())
}

fn dictionary_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn compare(args: CompareArgs) -> Result<()> {
    if args.dict.len() != 3 {
        bail!("compare needs exactly 3 --dict paths, got {}", args.dict.len());
    }
    let mentions_file = mentions_path(&args.mentions, &args.out);
    let mut inputs: Vec<&Path> = args.dict.iter().map(PathBuf::as_path).collect();
    inputs.push(&mentions_file);
    require(&inputs)?;

    let mut dicts = Vec::new();
    for path in &args.dict {
        let lex = load_dict(path)?;
        let conflicts = detect_entity_conflicts(&lex);
        if !conflicts.is_empty() {
            for c in &conflicts {
                eprintln!("{}: {} -> {}", path.display(), c.key, c.entities.join(", "));
            }
            bail!(
                "{} binds {} key(s) to more than one entity; assign each to a single entity first",
                path.display(),
                conflicts.len()
            );
        }
        dicts.push((dictionary_name(path), lex));
    }
    let index = load_mentions(&mentions_file)?;
    let named: Vec<(&str, &Lexicon)> = dicts.iter().map(|(n, l)| (n.as_str(), l)).collect();
    let venn = compare_dictionaries(&named, &index)?;

    let mut out = Publisher::new(&args.out)?;
    out.stage("venn.csv", |w| report::write_venn(&venn, w))?;
    out.stage("venn_terms.csv", |w| report::write_venn_terms(&venn, w))?;
    out.commit()?;

    for entity in venn.entities() {
        let counts = venn.counts(entity);
        let line: Vec<String> = termvar::analytics::Region::ALL
            .iter()
            .zip(counts)
            .map(|(r, n)| format!("{}={n}", r.label(&venn.names)))
            .collect();
        println!("{entity}\t{}", line.join("\t"));
    }
    Ok(())
}

pub fn review(args: ReviewArgs) -> Result<()> {
    let mentions_file = mentions_path(&args.mentions, &args.out);
    require(&[&args.dict, &args.corpus, &mentions_file])?;
    if args.k == 0 {
        bail!("--k must be at least 1");
    }
    let lexicon = load_dict(&args.dict)?;
    let index = load_mentions(&mentions_file)?;
    let mut docs: HashMap<String, DocumentRecord> = HashMap::new();
    for record in read_corpus(open(&args.corpus)?) {
        match record {
            Ok(r) => {
                docs.insert(r.doc_id.clone(), r);
            }
            Err(e) if e.is_fatal() => return Err(e).context(format!("reading {}", args.corpus.display())),
            Err(_) => {}
        }
    }

    let filter = args.term.as_deref().map(normalize);
    let mut terms: Vec<(usize, &termvar::lexicon::Term)> = lexicon
        .terms()
        .iter()
        .filter(|t| t.provenance() == Provenance::Generated)
        .filter(|t| filter.as_ref().is_none_or(|k| k == t.key()))
        .filter_map(|t| {
            index
                .terms()
                .get(&(t.entity().to_owned(), t.key().clone()))
                .map(|agg| (agg.mentions, t))
        })
        .collect();
    terms.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.key().cmp(b.1.key())).then_with(|| a.1.entity().cmp(b.1.entity())));
    if terms.is_empty() {
        warn!("no attested generated terms to review");
    }

    let mut out = Publisher::new(&args.out)?;
    out.stage("review.txt", |w| {
        for (count, term) in &terms {
            writeln!(
                w,
                "## {}\t{}\t{}\t{} mentions\t{}",
                term.surface(),
                term.entity(),
                term.key(),
                count,
                term.derivation().join(",")
            )?;
            for s in export_review_samples(&index, &docs, term.key(), args.k, args.seed) {
                writeln!(w, "{}\t{}\t{}..{}\t{}", s.doc_id, s.field, s.start, s.end, s)?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    out.commit()?;
    println!("{} terms written to {}", terms.len(), args.out.join("review.txt").display());
    Ok(())
}
