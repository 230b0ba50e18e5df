//! Delimited-text readers and writers for expression, metadata and response
//! files. Writers emit LF line endings and 17 significant digits.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use super::{ExpressionMatrix, ResponseRecord, ResponseTable, Stage};
use crate::error::{LeapError, Result};

/// Tissue and dataset labels for one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleMeta {
    pub tissue: String,
    pub dataset_tag: String,
}

/// Canonical real formatting: 17 significant digits, scientific notation.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

struct Rows {
    header: Vec<String>,
    /// (1-based line number, cells)
    body: Vec<(u64, Vec<String>)>,
}

fn read_rows(path: &Path) -> Result<Rows> {
    let file = File::open(path).map_err(|e| LeapError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            LeapError::Parse {
                path: path.to_path_buf(),
                line,
                message: e.to_string(),
            }
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, rec.iter().map(|c| c.trim().to_string()).collect::<Vec<_>>()));
    }
    let mut iter = rows.into_iter();
    let (_, header) = iter.next().ok_or_else(|| LeapError::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: "empty file".into(),
    })?;
    Ok(Rows {
        header,
        body: iter.collect(),
    })
}

fn expect_header(path: &Path, header: &[String], expected: &[&str]) -> Result<()> {
    if header != expected {
        return Err(LeapError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!(
                "expected header \"{}\", got \"{}\"",
                expected.join(","),
                header.join(",")
            ),
        });
    }
    Ok(())
}

fn parse_real(path: &Path, line: u64, cell: &str) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| LeapError::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("non-numeric cell \"{cell}\""),
    })
}

/// Read a raw TPM expression file: header `sample_id,<gene>,...`, one row per sample.
pub fn load_expression(path: impl AsRef<Path>) -> Result<ExpressionMatrix> {
    let path = path.as_ref();
    let rows = read_rows(path)?;
    if rows.header.first().map(String::as_str) != Some("sample_id") {
        return Err(LeapError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "first header cell must be \"sample_id\"".into(),
        });
    }
    let gene_ids: Vec<String> = rows.header[1..].to_vec();
    let width = rows.header.len();
    let mut sample_ids = Vec::with_capacity(rows.body.len());
    let mut data = Vec::with_capacity(rows.body.len() * gene_ids.len());
    for (line, cells) in &rows.body {
        if cells.len() != width {
            return Err(LeapError::Parse {
                path: path.to_path_buf(),
                line: *line,
                message: format!("expected {width} cells, found {}", cells.len()),
            });
        }
        sample_ids.push(cells[0].clone());
        for cell in &cells[1..] {
            data.push(parse_real(path, *line, cell)?);
        }
    }
    let values = Array2::from_shape_vec((sample_ids.len(), gene_ids.len()), data)
        .map_err(|e| LeapError::Dimension(e.to_string()))?;
    ExpressionMatrix::new(sample_ids, gene_ids, values, Stage::RawTpm)
}

/// Read a metadata sidecar: header `sample_id,tissue,dataset_tag`.
pub fn load_metadata(path: impl AsRef<Path>) -> Result<BTreeMap<String, SampleMeta>> {
    let path = path.as_ref();
    let rows = read_rows(path)?;
    expect_header(path, &rows.header, &["sample_id", "tissue", "dataset_tag"])?;
    let mut out = BTreeMap::new();
    for (line, cells) in rows.body {
        if cells.len() != 3 {
            return Err(LeapError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected 3 cells, found {}", cells.len()),
            });
        }
        let meta = SampleMeta {
            tissue: cells[1].clone(),
            dataset_tag: cells[2].clone(),
        };
        if out.insert(cells[0].clone(), meta).is_some() {
            return Err(LeapError::validation(format!(
                "duplicate sample id \"{}\" in {}",
                cells[0],
                path.display()
            )));
        }
    }
    Ok(out)
}

/// Read an expression file and attach the labels from its metadata sidecar.
pub fn load_expression_with_metadata(
    expression: impl AsRef<Path>,
    metadata: impl AsRef<Path>,
) -> Result<ExpressionMatrix> {
    let m = load_expression(expression)?;
    let meta = load_metadata(metadata)?;
    let mut tissue = Vec::with_capacity(m.n_samples());
    let mut dataset = Vec::with_capacity(m.n_samples());
    for id in m.sample_ids() {
        let entry = meta
            .get(id)
            .ok_or_else(|| LeapError::validation(format!("sample \"{id}\" has no metadata")))?;
        tissue.push(entry.tissue.clone());
        dataset.push(entry.dataset_tag.clone());
    }
    m.with_annotations(Some(tissue), Some(dataset))
}

/// Read a response file: header `sample_id,perturbation_id,value,study_tag`.
pub fn load_responses(path: impl AsRef<Path>) -> Result<ResponseTable> {
    let path = path.as_ref();
    let rows = read_rows(path)?;
    expect_header(
        path,
        &rows.header,
        &["sample_id", "perturbation_id", "value", "study_tag"],
    )?;
    let mut records = Vec::with_capacity(rows.body.len());
    for (line, cells) in rows.body {
        if cells.len() != 4 {
            return Err(LeapError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected 4 cells, found {}", cells.len()),
            });
        }
        let value = parse_real(path, line, &cells[2])?;
        records.push(ResponseRecord::new(&cells[0], &cells[1], value, &cells[3]));
    }
    ResponseTable::new(records)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| LeapError::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| LeapError::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| LeapError::io(path, e))
}

pub fn write_expression(path: impl AsRef<Path>, m: &ExpressionMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| LeapError::io(path, e);
    write!(w, "sample_id").map_err(io)?;
    for g in m.gene_ids() {
        write!(w, ",{g}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for (id, row) in m.sample_ids().iter().zip(m.values().rows()) {
        write!(w, "{id}").map_err(io)?;
        for v in row {
            write!(w, ",{}", format_real(*v)).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    finish(path, w)
}

/// Write the metadata sidecar; samples without labels get empty cells.
pub fn write_metadata(path: impl AsRef<Path>, m: &ExpressionMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| LeapError::io(path, e);
    writeln!(w, "sample_id,tissue,dataset_tag").map_err(io)?;
    for (i, id) in m.sample_ids().iter().enumerate() {
        let tissue = m.tissue().map(|t| t[i].as_str()).unwrap_or("");
        let tag = m.dataset_tag().map(|t| t[i].as_str()).unwrap_or("");
        writeln!(w, "{id},{tissue},{tag}").map_err(io)?;
    }
    finish(path, w)
}

pub fn write_responses(path: impl AsRef<Path>, table: &ResponseTable) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| LeapError::io(path, e);
    writeln!(w, "sample_id,perturbation_id,value,study_tag").map_err(io)?;
    for r in table.records() {
        writeln!(
            w,
            "{},{},{},{}",
            r.sample_id,
            r.perturbation_id,
            format_real(r.value),
            r.study_tag
        )
        .map_err(io)?;
    }
    finish(path, w)
}
