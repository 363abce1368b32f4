//! CSV output for the analytics. Every file has a header row; fractions are
//! written with four decimal places.

use std::collections::BTreeMap;
use std::io::{self, Write};

use crate::analytics::{non_redundant_terms, rank_frequency, TermFrequencies, TermStats, VennReport, Region};
use crate::corpus::WeekIndex;

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

fn finish<W: Write>(w: csv::Writer<W>) -> io::Result<()> {
    w.into_inner().map_err(|e| e.into_error())?.flush()
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

pub fn fraction(x: f64) -> String {
    format!("{x:.4}")
}

/// `term_stats.csv`
pub fn write_term_stats<W: Write>(freqs: &TermFrequencies, out: W) -> io::Result<()> {
    let mut w = writer(out);
    w.write_record(["entity", "term_key", "surface", "mention_count", "document_count", "first_week"])
        .map_err(csv_err)?;
    for s in &freqs.stats {
        w.write_record([
            s.entity.as_str(),
            s.term_key.as_str(),
            s.surface.as_str(),
            &s.mention_count.to_string(),
            &s.document_count.to_string(),
            &s.first_week.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

fn per_entity(freqs: &TermFrequencies) -> impl Iterator<Item = (&str, Vec<TermStats>)> {
    freqs.entities().map(move |e| (e, freqs.for_entity(e)))
}

/// `rank_frequency.csv`
pub fn write_rank_frequency<W: Write>(freqs: &TermFrequencies, out: W) -> io::Result<()> {
    let mut w = writer(out);
    w.write_record(["entity", "rank", "term_key", "mention_count"]).map_err(csv_err)?;
    for (entity, stats) in per_entity(freqs) {
        // for_entity preserves frequency order, so rank i is stats[i - 1]
        for ((rank, count), s) in rank_frequency(&stats).into_iter().zip(&stats) {
            w.write_record([entity, &rank.to_string(), s.term_key.as_str(), &count.to_string()])
                .map_err(csv_err)?;
        }
    }
    finish(w)
}

/// `coverage.csv`: one row per (entity, p).
pub fn write_coverage<W: Write>(rows: &[(String, f64, usize)], out: W) -> io::Result<()> {
    let mut w = writer(out);
    w.write_record(["entity", "p", "terms"]).map_err(csv_err)?;
    for (entity, p, k) in rows {
        w.write_record([entity.as_str(), &fraction(*p), &k.to_string()]).map_err(csv_err)?;
    }
    finish(w)
}

/// `nonredundant.csv`
pub fn write_nonredundant<W: Write>(freqs: &TermFrequencies, out: W) -> io::Result<()> {
    let mut w = writer(out);
    w.write_record(["entity", "term_key", "mention_count"]).map_err(csv_err)?;
    for (entity, stats) in per_entity(freqs) {
        for key in non_redundant_terms(&stats) {
            let count = stats.iter().find(|s| s.term_key == key).map_or(0, |s| s.mention_count);
            w.write_record([entity, key.as_str(), &count.to_string()]).map_err(csv_err)?;
        }
    }
    finish(w)
}

/// `weekly_unique.csv`
pub fn write_weekly_unique<W: Write>(series: &BTreeMap<String, Vec<(WeekIndex, usize)>>, out: W) -> io::Result<()> {
    let mut w = writer(out);
    w.write_record(["entity", "week", "week_start", "unique_terms"]).map_err(csv_err)?;
    for (entity, points) in series {
        for (week, n) in points {
            w.write_record([
                entity.as_str(),
                &week.to_string(),
                &week.start_date().to_string(),
                &n.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

/// Weekly shares per entity, as returned by `common_term_article_share`.
pub type ShareSeries = BTreeMap<String, Vec<(WeekIndex, f64)>>;

/// `weekly_share.csv`: one block per k.
pub fn write_weekly_share<W: Write>(
    series: &[(usize, ShareSeries)],
    out: W,
) -> io::Result<()> {
    let mut w = writer(out);
    w.write_record(["entity", "k", "week", "week_start", "share"]).map_err(csv_err)?;
    for (k, by_entity) in series {
        for (entity, points) in by_entity {
            for (week, share) in points {
                w.write_record([
                    entity.as_str(),
                    &k.to_string(),
                    &week.to_string(),
                    &week.start_date().to_string(),
                    &fraction(*share),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    finish(w)
}

/// `venn.csv`: seven region counts per entity.
pub fn write_venn<W: Write>(report: &VennReport, out: W) -> io::Result<()> {
    let mut w = writer(out);
    w.write_record(["entity", "region", "dictionaries", "count"]).map_err(csv_err)?;
    for entity in report.entities() {
        for region in Region::ALL {
            w.write_record([
                entity,
                &region.code(),
                &region.label(&report.names),
                &report.count(entity, region).to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

/// `venn_terms.csv`: the keys behind every region count.
pub fn write_venn_terms<W: Write>(report: &VennReport, out: W) -> io::Result<()> {
    let mut w = writer(out);
    w.write_record(["entity", "region", "term_key"]).map_err(csv_err)?;
    for entity in report.entities() {
        for region in Region::ALL {
            for key in report.keys(entity, region).into_iter().flatten() {
                w.write_record([entity, &region.code(), key.as_str()]).map_err(csv_err)?;
            }
        }
    }
    finish(w)
}
