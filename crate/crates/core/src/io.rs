//! File formats: alignment XML output (with a companion reader used by
//! round-trip tests), Newick tree files (one tree per line), and the CSV
//! report formats of the validation driver.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::num::Real;
use crate::seq::Alignment;
use crate::stats::Histogram;
use crate::tree::{Tree, TreeError};
use crate::validation::{NamedFit, SuiteReport};

#[derive(Debug, Error)]
pub enum ReadError {
    #[error("malformed XML: {0}")]
    Xml(String),
    #[error("missing element <{0}>")]
    MissingElement(&'static str),
    #[error("sequence element needs attribute '{0}'")]
    MissingAttr(&'static str),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Current time as an ISO-8601 UTC timestamp (civil-from-days conversion,
/// no external clock crate).
pub fn iso8601_now() -> String {
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default();
    let secs = now.as_secs();
    let millis = now.subsec_millis();
    let days = (secs / 86_400) as i64;
    let rem = secs % 86_400;
    let (hour, minute, second) = (rem / 3600, (rem / 60) % 60, rem % 60);
    // Howard Hinnant's civil_from_days.
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let year = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = doy - (153 * mp + 2) / 5 + 1;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    let year = if month <= 2 { year + 1 } else { year };
    format!("{year:04}-{month:02}-{day:02}T{hour:02}:{minute:02}:{second:02}.{millis:03}Z")
}

/// Serialize an alignment in the output XML shape: a binary `data` element
/// with one `sequence` per taxon, a meaning-class comment listing the first
/// column of each class, and a creation-timestamp comment. Output is
/// byte-stable apart from the timestamp.
pub fn alignment_to_xml(align: &Alignment, data_id: &str, timestamp: &str) -> String {
    let mut out = String::new();
    out.push_str("<beast version='2.0'>\n");
    let _ = writeln!(out, "<data id='{data_id}' dataType='binary'>");
    for (i, taxon) in align.taxa().iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "    <sequence taxon='{taxon}' value='{}'/>",
            align.row(i).value_string()
        );
    }
    out.push_str("</data>\n\n");
    let positions: Vec<String> = align
        .class_start_positions()
        .into_iter()
        .map(|p| p.to_string())
        .collect();
    let _ = writeln!(out, "<!-- Meaning Classes: {} -->", positions.join(" "));
    let _ = writeln!(out, "<!-- Created at: {timestamp} -->");
    out.push_str("</beast>\n");
    out
}

pub fn write_alignment<W: Write>(
    align: &Alignment,
    data_id: &str,
    timestamp: &str,
    writer: &mut W,
) -> io::Result<()> {
    writer.write_all(alignment_to_xml(align, data_id, timestamp).as_bytes())
}

/// Alignment document as read back from the XML output.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentDoc {
    pub data_id: String,
    pub taxa: Vec<String>,
    pub values: Vec<String>,
    /// First column of each meaning class, from the trailing comment.
    pub class_positions: Vec<usize>,
}

/// Companion reader for the alignment XML output.
pub fn read_alignment_xml(text: &str) -> Result<AlignmentDoc, ReadError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| ReadError::Xml(e.to_string()))?;
    let data = doc
        .descendants()
        .find(|n| n.has_tag_name("data"))
        .ok_or(ReadError::MissingElement("data"))?;
    let data_id = data.attribute("id").unwrap_or("").to_owned();
    let mut taxa = Vec::new();
    let mut values = Vec::new();
    for seq in data.children().filter(|n| n.has_tag_name("sequence")) {
        taxa.push(
            seq.attribute("taxon")
                .ok_or(ReadError::MissingAttr("taxon"))?
                .to_owned(),
        );
        values.push(
            seq.attribute("value")
                .ok_or(ReadError::MissingAttr("value"))?
                .to_owned(),
        );
    }
    let mut class_positions = Vec::new();
    for node in doc.root().descendants() {
        if node.is_comment() {
            if let Some(rest) = node
                .text()
                .and_then(|t| t.trim().strip_prefix("Meaning Classes:"))
            {
                class_positions = rest
                    .split_whitespace()
                    .filter_map(|x| x.parse().ok())
                    .collect();
            }
        }
    }
    Ok(AlignmentDoc {
        data_id,
        taxa,
        values,
        class_positions,
    })
}

/// Read a tree file: one Newick string per non-empty line.
pub fn parse_tree_file<F: Real>(text: &str) -> Result<Vec<Tree<F>>, TreeError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(Tree::parse_newick)
        .collect()
}

pub fn trees_to_newick_file<F: Real>(trees: &[Tree<F>]) -> String {
    let mut out = String::new();
    for tree in trees {
        out.push_str(&tree.to_newick());
        out.push('\n');
    }
    out
}

/// Histogram CSV: `value,count` rows under a header.
pub fn histogram_csv(hist: &Histogram) -> String {
    let mut out = String::from("value,count\n");
    for (value, count) in hist.iter() {
        let _ = writeln!(out, "{value},{count}");
    }
    out
}

/// Fit-report CSV: `test,statistic,critical,pass` rows under a header.
pub fn fit_report_csv<F: Real>(fits: &[NamedFit<F>]) -> String {
    let mut out = String::from("test,statistic,critical,pass\n");
    for fit in fits {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fit.name,
            fit.outcome.statistic.as_f64(),
            fit.outcome.critical.as_f64(),
            fit.outcome.pass
        );
    }
    out
}

/// Write one suite's histogram and fit-report CSVs into `dir`.
pub fn write_suite_report<F: Real>(
    report: &SuiteReport<F>,
    dir: &std::path::Path,
) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, hist) in &report.histograms {
        std::fs::write(
            dir.join(format!("{}_{}_histogram.csv", report.suite, name)),
            histogram_csv(hist),
        )?;
    }
    std::fs::write(
        dir.join(format!("{}_fit_report.csv", report.suite)),
        fit_report_csv(&report.fits),
    )?;
    Ok(())
}
