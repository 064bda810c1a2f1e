use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One labeled embedding. Field order matches the JSON-lines schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub id: String,
    pub group_id: String,
    pub label: u8,
    pub embedding: Vec<f64>,
}

/// Validated, immutable collection of [`Record`]s sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    records: Vec<Record>,
    dim: usize,
}

impl EmbeddingDataset {
    /// Validate records: non-empty, uniform dimension, unique ids, binary labels.
    pub fn new(records: Vec<Record>) -> Result<Self> {
        let mut builder = Builder::default();
        for r in records {
            builder.push(r, None)?;
        }
        builder.finish()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn features(&self) -> Vec<&[f64]> {
        self.records
            .iter()
            .map(|r| r.embedding.as_slice())
            .collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn n_positive(&self) -> usize {
        self.records.iter().filter(|r| r.label == 1).count()
    }

    /// Subset by record index, preserving the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let records = indices
            .iter()
            .map(|&i| {
                self.records
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(records)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records always serialize"));
            out.push('\n');
        }
        out
    }
}

#[derive(Default)]
struct Builder {
    records: Vec<Record>,
    ids: HashSet<String>,
    dim: Option<usize>,
}

impl Builder {
    fn push(&mut self, r: Record, line: Option<usize>) -> Result<()> {
        if r.label > 1 {
            return Err(Error::schema(
                line,
                format!("label must be 0 or 1, got {}", r.label),
            ));
        }
        if r.embedding.is_empty() {
            return Err(Error::schema(line, "embedding must be non-empty"));
        }
        match self.dim {
            None => self.dim = Some(r.embedding.len()),
            Some(d) if d != r.embedding.len() => {
                return Err(Error::schema(
                    line,
                    format!(
                        "record {:?} has embedding length {}, expected {d}",
                        r.id,
                        r.embedding.len()
                    ),
                ))
            }
            Some(_) => {}
        }
        if !self.ids.insert(r.id.clone()) {
            return Err(Error::schema(line, format!("duplicate id {:?}", r.id)));
        }
        self.records.push(r);
        Ok(())
    }

    fn finish(self) -> Result<EmbeddingDataset> {
        match self.dim {
            None => Err(Error::invalid("empty dataset")),
            Some(dim) => Ok(EmbeddingDataset {
                records: self.records,
                dim,
            }),
        }
    }
}

/// Read a JSON-lines dataset. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut builder = Builder::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record =
            serde_json::from_str(&line).map_err(|e| Error::parse(Some(lineno), e.to_string()))?;
        builder.push(record, Some(lineno))?;
    }
    builder.finish()
}

pub fn save_dataset(dataset: &EmbeddingDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(dataset.to_jsonl().as_bytes())?;
    out.flush()?;
    Ok(())
}
