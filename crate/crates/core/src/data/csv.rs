use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClientData, FederatedDataset, Provenance, TabularDataset};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng::SeedTree;

/// Which columns carry the label and (optionally) the client id. All other
/// columns are numeric features, in file order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    #[serde(default = "default_label")]
    pub label: String,
    #[serde(default)]
    pub client_id: Option<String>,
}

fn default_label() -> String {
    "label".into()
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            label: default_label(),
            client_id: Some("client_id".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub dataset: TabularDataset,
    pub client_ids: Option<Vec<usize>>,
}

impl CsvTable {
    /// Splits rows by client id, preserving file order within each client.
    pub fn partition_by_client(&self) -> Result<Vec<TabularDataset>> {
        let Some(ids) = &self.client_ids else {
            return Ok(vec![self.dataset.clone()]);
        };
        let n_clients = ids.iter().max().map_or(0, |m| m + 1);
        let mut rows = vec![Vec::new(); n_clients];
        for (i, &c) in ids.iter().enumerate() {
            rows[c].push(i);
        }
        if let Some(missing) = rows.iter().position(Vec::is_empty) {
            return Err(Error::Data(format!(
                "client ids must be contiguous from 0; client {missing} has no rows"
            )));
        }
        Ok(rows.iter().map(|r| self.dataset.select(r)).collect())
    }
}

fn parse_integer(cell: &str, row: usize, column: &str) -> Result<usize> {
    let v: f64 = cell.trim().parse().map_err(|_| Error::Csv {
        row,
        column: column.into(),
        message: format!("`{cell}` is not a number"),
    })?;
    if v < 0.0 || v.fract() != 0.0 {
        return Err(Error::Csv {
            row,
            column: column.into(),
            message: format!("`{cell}` is not a non-negative integer"),
        });
    }
    Ok(v as usize)
}

/// Reads a comma-separated table with a header line. Rows are numbered
/// from 1 for the first data line in error messages.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<CsvTable> {
    let mut rdr = ::csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Data(format!("cannot read csv header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Csv {
            row: 0,
            column: name.into(),
            message: "missing column".into(),
        })
    };
    let label_col = find(&schema.label)?;
    let client_col = schema.client_id.as_deref().map(find).transpose()?;
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != label_col && Some(c) != client_col)
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::Data("csv has no feature columns".into()));
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut clients = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Csv {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        for &c in &feature_cols {
            let cell = rec.get(c).unwrap_or("");
            let v: f64 = cell.trim().parse().map_err(|_| Error::Csv {
                row,
                column: headers[c].clone(),
                message: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Csv {
                    row,
                    column: headers[c].clone(),
                    message: "value is not finite".into(),
                });
            }
            values.push(v);
        }
        labels.push(parse_integer(
            rec.get(label_col).unwrap_or(""),
            row,
            &headers[label_col],
        )?);
        if let Some(cc) = client_col {
            clients.push(parse_integer(rec.get(cc).unwrap_or(""), row, &headers[cc])?);
        }
    }
    if labels.is_empty() {
        return Err(Error::Data("csv has no data rows".into()));
    }
    let names = feature_cols.iter().map(|&c| headers[c].clone()).collect();
    let features = Matrix::new(labels.len(), feature_cols.len(), values)?;
    let dataset = TabularDataset::new(features, labels)?.with_feature_names(names)?;
    Ok(CsvTable {
        dataset,
        client_ids: client_col.map(|_| clients),
    })
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<CsvTable> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(std::io::BufReader::new(file), schema)
}

impl FederatedDataset {
    /// Builds per-client data from a training table and either a test table
    /// (partitioned the same way) or a held-out `test_fraction` of each client.
    pub fn from_csv(
        train_path: impl AsRef<Path>,
        test_path: Option<&Path>,
        schema: &CsvSchema,
        test_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        let train_parts = load_csv(train_path.as_ref(), schema)?.partition_by_client()?;
        let clients = match test_path {
            Some(tp) => {
                let test_parts = load_csv(tp, schema)?.partition_by_client()?;
                if test_parts.len() != train_parts.len() {
                    return Err(Error::Data(format!(
                        "train csv has {} clients but test csv has {}",
                        train_parts.len(),
                        test_parts.len()
                    )));
                }
                train_parts
                    .into_iter()
                    .zip(test_parts)
                    .enumerate()
                    .map(|(client_id, (train, test))| ClientData { client_id, train, test })
                    .collect()
            }
            None => {
                let tree = SeedTree::new(seed).child("test-split");
                train_parts
                    .into_iter()
                    .enumerate()
                    .map(|(client_id, all)| {
                        let (t, v) = super::split_indices(all.len(), 1.0 - test_fraction, &mut tree.stream(client_id))?;
                        Ok(ClientData {
                            client_id,
                            train: all.select(&t),
                            test: all.select(&v),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        FederatedDataset::new(
            clients,
            Provenance::Csv {
                train: train_path.as_ref().display().to_string(),
                test: test_path.map(|p| p.display().to_string()),
            },
        )
    }
}
