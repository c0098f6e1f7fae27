//! Delimited feature tables keyed by `(image_id, candidate_id)`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const KEY_COLUMNS: [&str; 3] = ["image_id", "candidate_id", "label"];

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub image_id: String,
    pub candidate_id: u32,
    /// Ground-truth class when known.
    pub label: Option<u8>,
    pub values: Vec<f64>,
}

/// A header of feature names followed by one row per candidate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn new(names: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            names: names.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: FeatureRow) -> Result<()> {
        if row.values.len() != self.dim() {
            return Err(Error::invalid(format!("row has {} values, table has {} columns", row.values.len(), self.dim())));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.values.clone()).collect()
    }

    /// Labels of every row; errors if any row is unlabeled.
    pub fn labels(&self) -> Result<Vec<u8>> {
        self.rows
            .iter()
            .map(|r| r.label.ok_or_else(|| Error::invalid(format!("candidate {}/{} has no label", r.image_id, r.candidate_id))))
            .collect()
    }

    /// Appends the columns of `other`, whose rows must carry the same keys
    /// in the same order.
    pub fn hstack(&self, other: &FeatureTable) -> Result<FeatureTable> {
        if self.len() != other.len() {
            return Err(Error::invalid(format!("tables have {} and {} rows", self.len(), other.len())));
        }
        let mut out = FeatureTable::new(self.names.iter().chain(&other.names).cloned());
        for (a, b) in self.rows.iter().zip(&other.rows) {
            if a.image_id != b.image_id || a.candidate_id != b.candidate_id {
                return Err(Error::invalid(format!(
                    "row keys differ: {}/{} vs {}/{}",
                    a.image_id, a.candidate_id, b.image_id, b.candidate_id
                )));
            }
            let label = match (a.label, b.label) {
                (Some(x), Some(y)) if x != y => {
                    return Err(Error::invalid(format!("conflicting labels for {}/{}", a.image_id, a.candidate_id)))
                }
                (x, y) => x.or(y),
            };
            let mut values = a.values.clone();
            values.extend_from_slice(&b.values);
            out.rows.push(FeatureRow {
                image_id: a.image_id.clone(),
                candidate_id: a.candidate_id,
                label,
                values,
            });
        }
        Ok(out)
    }

    /// Keeps the given columns, in the given order.
    pub fn select(&self, columns: &[usize]) -> Result<FeatureTable> {
        if let Some(&c) = columns.iter().find(|&&c| c >= self.dim()) {
            return Err(Error::invalid(format!("column {c} out of range")));
        }
        let mut out = FeatureTable::new(columns.iter().map(|&c| self.names[c].clone()));
        out.rows = self
            .rows
            .iter()
            .map(|r| FeatureRow {
                values: columns.iter().map(|&c| r.values[c]).collect(),
                ..r.clone()
            })
            .collect();
        Ok(out)
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let header = KEY_COLUMNS.iter().map(|s| s.to_string()).chain(self.names.iter().cloned());
        w.write_record(header).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![
                r.image_id.clone(),
                r.candidate_id.to_string(),
                r.label.map(|l| l.to_string()).unwrap_or_default(),
            ];
            // `Display` for f64 prints the shortest string that parses back
            // to the same value.
            rec.extend(r.values.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(input: impl Read) -> Result<FeatureTable> {
        let mut rd = csv::Reader::from_reader(input);
        let header = rd.headers().map_err(csv_err)?.clone();
        if header.len() < KEY_COLUMNS.len() || header.iter().zip(KEY_COLUMNS).any(|(a, b)| a != b) {
            return Err(Error::format("feature table", "header must start with image_id,candidate_id,label"));
        }
        let mut table = FeatureTable::new(header.iter().skip(KEY_COLUMNS.len()));
        for (n, rec) in rd.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let bad = |what: &str| Error::format("feature table", format!("row {}: bad {what}", n + 1));
            let candidate_id = rec[1].parse().map_err(|_| bad("candidate id"))?;
            let label = match &rec[2] {
                "" => None,
                "0" => Some(0),
                "1" => Some(1),
                _ => return Err(bad("label")),
            };
            let values = rec
                .iter()
                .skip(KEY_COLUMNS.len())
                .map(|s| s.parse::<f64>().map_err(|_| bad("number")))
                .collect::<Result<Vec<_>>>()?;
            table.push(FeatureRow {
                image_id: rec[0].to_string(),
                candidate_id,
                label,
                values,
            })?;
        }
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<FeatureTable> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::format("feature table", e.to_string())
}
