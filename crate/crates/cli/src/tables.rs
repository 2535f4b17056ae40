//! Chart-ready table emission. Every table is UTF-8 with a deterministic
//! column order, rows sorted by row label, and shares printed with six
//! decimal places. Two encodings are supported: tab-delimited text and
//! line-delimited JSON records.

use anyhow::{bail, Context, Result};
use opiniontrend::analysis::InterestMatrix;
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TableFormat {
    Delimited,
    StructuredRecord,
}

#[derive(Debug, Clone)]
pub enum Product {
    /// Single labeled value, e.g. coverage.
    Scalar { name: String, label: String, value: f64 },
    /// Label → count rows, e.g. the affinity distribution.
    Distribution { name: String, rows: Vec<(String, u64)> },
    /// Counts plus row-normalized shares; emitted as two files.
    Matrix { name: String, matrix: InterestMatrix },
    /// Per-group (term, frequency) lists.
    TermLists {
        name: String,
        groups: Vec<(String, Vec<(String, u64)>)>,
    },
}

fn share(v: f64) -> String {
    format!("{v:.6}")
}

#[derive(Serialize)]
struct MatrixRecord<'a> {
    label: &'a str,
    columns: Vec<MatrixCell<'a>>,
}

#[derive(Serialize)]
struct MatrixCell<'a> {
    column: &'a str,
    count: u64,
    share: f64,
}

/// Matrix rows in row-label order: (label, counts, shares).
fn sorted_rows(m: &InterestMatrix) -> Vec<(&str, &[u64], &[f64])> {
    let mut rows: Vec<(&str, &[u64], &[f64])> = m
        .row_labels
        .iter()
        .zip(&m.counts)
        .zip(&m.shares)
        .map(|((l, c), s)| (l.as_str(), c.as_slice(), s.as_slice()))
        .collect();
    rows.sort_by_key(|(l, _, _)| *l);
    rows
}

fn write_file(dir: &Path, file: String, body: String) -> Result<PathBuf> {
    let path = dir.join(file);
    fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

/// Emit one file per product (two for matrices in delimited form: counts
/// and shares). Returns the written paths.
pub fn emit_tables(products: &[Product], format: TableFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    if products.is_empty() {
        bail!("no analysis products to emit");
    }
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut written = Vec::new();
    for product in products {
        match (product, format) {
            (Product::Scalar { name, label, value }, TableFormat::Delimited) => {
                let body = format!("metric\tvalue\n{label}\t{}\n", share(*value));
                written.push(write_file(dir, format!("{name}.tsv"), body)?);
            }
            (Product::Scalar { name, label, value }, TableFormat::StructuredRecord) => {
                let body = format!(
                    "{}\n",
                    serde_json::json!({"metric": label, "value": value})
                );
                written.push(write_file(dir, format!("{name}.jsonl"), body)?);
            }
            (Product::Distribution { name, rows }, fmt) => {
                let mut rows = rows.clone();
                rows.sort();
                let body = match fmt {
                    TableFormat::Delimited => {
                        let mut out = String::from("label\tcount\n");
                        for (label, count) in &rows {
                            out.push_str(&format!("{label}\t{count}\n"));
                        }
                        out
                    }
                    TableFormat::StructuredRecord => rows
                        .iter()
                        .map(|(label, count)| {
                            format!("{}\n", serde_json::json!({"label": label, "count": count}))
                        })
                        .collect(),
                };
                let ext = extension(fmt);
                written.push(write_file(dir, format!("{name}.{ext}"), body)?);
            }
            (Product::Matrix { name, matrix }, TableFormat::Delimited) => {
                let header = std::iter::once("label")
                    .chain(matrix.col_labels.iter().map(String::as_str))
                    .collect::<Vec<_>>()
                    .join("\t");
                let mut counts_body = format!("{header}\n");
                let mut shares_body = format!("{header}\n");
                for (label, counts, shares) in sorted_rows(matrix) {
                    counts_body.push_str(label);
                    for c in counts {
                        counts_body.push_str(&format!("\t{c}"));
                    }
                    counts_body.push('\n');
                    shares_body.push_str(label);
                    for s in shares {
                        shares_body.push_str(&format!("\t{}", share(*s)));
                    }
                    shares_body.push('\n');
                }
                written.push(write_file(dir, format!("{name}_counts.tsv"), counts_body)?);
                written.push(write_file(dir, format!("{name}_shares.tsv"), shares_body)?);
            }
            (Product::Matrix { name, matrix }, TableFormat::StructuredRecord) => {
                let mut body = String::new();
                for (label, counts, shares) in sorted_rows(matrix) {
                    let record = MatrixRecord {
                        label,
                        columns: matrix
                            .col_labels
                            .iter()
                            .zip(counts)
                            .zip(shares)
                            .map(|((column, count), s)| MatrixCell {
                                column,
                                count: *count,
                                share: *s,
                            })
                            .collect(),
                    };
                    body.push_str(&serde_json::to_string(&record).unwrap());
                    body.push('\n');
                }
                written.push(write_file(dir, format!("{name}.jsonl"), body)?);
            }
            (Product::TermLists { name, groups }, fmt) => {
                let mut groups = groups.clone();
                groups.sort_by(|a, b| a.0.cmp(&b.0));
                let body = match fmt {
                    TableFormat::Delimited => {
                        let mut out = String::from("group\tterm\tfrequency\n");
                        for (group, terms) in &groups {
                            for (term, freq) in terms {
                                out.push_str(&format!("{group}\t{term}\t{freq}\n"));
                            }
                        }
                        out
                    }
                    TableFormat::StructuredRecord => {
                        let mut out = String::new();
                        for (group, terms) in &groups {
                            for (term, freq) in terms {
                                out.push_str(&format!(
                                    "{}\n",
                                    serde_json::json!({
                                        "group": group, "term": term, "frequency": freq
                                    })
                                ));
                            }
                        }
                        out
                    }
                };
                let ext = extension(fmt);
                written.push(write_file(dir, format!("{name}.{ext}"), body)?);
            }
        }
    }
    Ok(written)
}

fn extension(fmt: TableFormat) -> &'static str {
    match fmt {
        TableFormat::Delimited => "tsv",
        TableFormat::StructuredRecord => "jsonl",
    }
}

/// Parse a delimited matrix counts file back into an InterestMatrix.
/// Shares are recomputed from counts; the Indeterminado row is recognized
/// by its label.
pub fn read_matrix(path: &Path) -> Result<InterestMatrix> {
    let raw = fs::read_to_string(path)
        .with_context(|| format!("cannot read table {}", path.display()))?;
    let mut lines = raw.lines();
    let header = lines
        .next()
        .with_context(|| format!("table {} is empty", path.display()))?;
    let col_labels: Vec<String> = header.split('\t').skip(1).map(str::to_string).collect();

    let mut row_labels = Vec::new();
    let mut counts: Vec<Vec<u64>> = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        row_labels.push(fields.next().unwrap_or_default().to_string());
        let row: Vec<u64> = fields
            .map(|f| f.parse())
            .collect::<Result<_, _>>()
            .with_context(|| format!("{}: bad count on data row {}", path.display(), i + 1))?;
        if row.len() != col_labels.len() {
            bail!(
                "{}: data row {} has {} values, expected {}",
                path.display(),
                i + 1,
                row.len(),
                col_labels.len()
            );
        }
        counts.push(row);
    }

    let shares = counts
        .iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            row.iter()
                .map(|c| if total == 0 { 0.0 } else { *c as f64 / total as f64 })
                .collect()
        })
        .collect();
    let indeterminate_row = row_labels.iter().position(|l| l == "Indeterminado");
    Ok(InterestMatrix {
        row_labels,
        col_labels,
        counts,
        shares,
        indeterminate_row,
    })
}
