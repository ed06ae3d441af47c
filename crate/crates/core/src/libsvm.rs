//! LibSVM text ingestion and serialization.
//!
//! Each nonempty line is `<label>[:<weight>] <idx>:<val> ...`. Indices are
//! 0-based unless [`LibsvmOptions::one_based`] is set. Values are written with
//! the shortest decimal representation that round-trips, so
//! `parse(write(m)) == m` bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;

use crate::data::{DataMatrix, Entry, MatrixBuilder};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct LibsvmOptions {
    pub one_based: bool,
    /// Forces the feature count; must cover every index seen.
    pub n_features: Option<usize>,
}

pub fn parse_libsvm<R: BufRead>(reader: R, options: &LibsvmOptions) -> Result<DataMatrix> {
    let mut builder = MatrixBuilder::new(0);
    let mut weights: Vec<f64> = Vec::new();
    let mut any_weight = false;
    let mut row: Vec<Entry> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        let line = line.trim_end_matches('\r');
        let mut tokens = line.split_ascii_whitespace();
        let Some(head) = tokens.next() else {
            continue;
        };

        let (label, weight) = match head.split_once(':') {
            Some((l, w)) => {
                any_weight = true;
                let w = parse_number(w, lineno, "instance weight")?;
                if w <= 0.0 {
                    return Err(Error::parse(lineno, "instance weight must be positive"));
                }
                (parse_number(l, lineno, "label")?, w)
            }
            None => (parse_number(head, lineno, "label")?, 1.0),
        };

        row.clear();
        for token in tokens {
            let (idx, val) = token
                .split_once(':')
                .ok_or_else(|| Error::parse(lineno, format!("malformed token `{token}`")))?;
            let mut idx: u64 = idx
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad feature index `{idx}`")))?;
            if options.one_based {
                if idx == 0 {
                    return Err(Error::parse(lineno, "index 0 in one-based input"));
                }
                idx -= 1;
            }
            let idx = u32::try_from(idx)
                .ok()
                .filter(|&i| i < u32::MAX)
                .ok_or_else(|| Error::parse(lineno, format!("feature index {idx} too large")))?;
            let value = parse_number(val, lineno, "feature value")?;
            if let Some(prev) = row.last() {
                if prev.index >= idx {
                    return Err(Error::parse(
                        lineno,
                        format!("feature indices not increasing ({} then {idx})", prev.index),
                    ));
                }
            }
            row.push(Entry::new(idx, value));
        }
        builder
            .push_row_growing(&row, label)
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
        weights.push(weight);
    }

    let matrix = builder.finish(any_weight.then_some(weights))?;
    match options.n_features {
        Some(m) => matrix.with_n_features(m),
        None => Ok(matrix),
    }
}

fn parse_number(text: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = text
        .parse()
        .map_err(|_| Error::parse(line, format!("bad {what} `{text}`")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite {what} `{text}`")));
    }
    Ok(v)
}

/// Reads a LibSVM file, transparently gunzipping paths ending in `.gz`.
pub fn read_libsvm_file(path: impl AsRef<Path>, options: &LibsvmOptions) -> Result<DataMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|ext| ext == "gz") {
        Box::new(MultiGzDecoder::new(file))
    } else {
        Box::new(file)
    };
    parse_libsvm(BufReader::new(reader), options)
}

pub fn write_libsvm<W: Write>(matrix: &DataMatrix, mut out: W) -> std::io::Result<()> {
    for (i, row) in matrix.rows().enumerate() {
        write!(out, "{}", matrix.labels()[i])?;
        if let Some(w) = matrix.weights() {
            write!(out, ":{}", w[i])?;
        }
        for e in row {
            write!(out, " {}:{}", e.index, e.value)?;
        }
        writeln!(out)?;
    }
    Ok(())
}
