//! CSV and JSON file formats.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use interference_core::outcomes::PotentialTable;
use interference_core::partition::Stratification;
use interference_core::Clustering;

use crate::error::{CliError, CliResult};

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io { path: path.into(), source })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.into(), source })?;
    }
    fs::write(path, bytes).map_err(|source| CliError::Io { path: path.into(), source })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|source| CliError::Json { path: path.into(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| CliError::Json { path: path.into(), source })?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let csv_err = |source| CliError::Csv { path: path.into(), source };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
    reader.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let csv_err = |source| CliError::Csv { path: PathBuf::from(path), source };
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).map_err(csv_err)?;
    }
    let bytes = writer.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    write_bytes(path, &bytes)
}

/// Rows keyed by a dense id `0..n`: every id must occur exactly once.
fn dense<T>(path: &Path, what: &str, rows: Vec<(usize, T)>) -> CliResult<Vec<T>> {
    let n = rows.len();
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    for (id, value) in rows {
        match slots.get_mut(id) {
            Some(slot @ None) => *slot = Some(value),
            Some(Some(_)) => return Err(CliError::Usage(format!("{}: duplicate {what} {id}", path.display()))),
            None => return Err(CliError::Usage(format!("{}: {what} {id} outside 0..{n}", path.display()))),
        }
    }
    Ok(slots.into_iter().map(|s| s.expect("all ids present")).collect())
}

#[derive(Serialize, Deserialize)]
struct ClusterRow {
    unit_id: usize,
    cluster_id: usize,
}

pub fn read_clustering(path: &Path) -> CliResult<Clustering> {
    let rows: Vec<ClusterRow> = read_rows(path)?;
    let labels = dense(path, "unit_id", rows.into_iter().map(|r| (r.unit_id, r.cluster_id)).collect())?;
    let m = labels.iter().max().map_or(0, |&c| c + 1);
    Ok(Clustering::new(labels, m)?)
}

pub fn write_clustering(path: &Path, clustering: &Clustering) -> CliResult<()> {
    let rows: Vec<ClusterRow> = clustering
        .assignment()
        .iter()
        .enumerate()
        .map(|(unit_id, &cluster_id)| ClusterRow { unit_id, cluster_id })
        .collect();
    write_rows(path, &rows)
}

#[derive(Serialize, Deserialize)]
struct StratumRow {
    cluster_id: usize,
    stratum_id: usize,
}

pub fn read_stratification(path: &Path) -> CliResult<Stratification> {
    let rows: Vec<StratumRow> = read_rows(path)?;
    let strata = dense(path, "cluster_id", rows.into_iter().map(|r| (r.cluster_id, r.stratum_id)).collect())?;
    let l = strata.iter().max().map_or(0, |&s| s + 1);
    Ok(Stratification::new(strata, l)?)
}

pub fn write_stratification(path: &Path, strata: &Stratification) -> CliResult<()> {
    let rows: Vec<StratumRow> = strata
        .stratum_of
        .iter()
        .enumerate()
        .map(|(cluster_id, &stratum_id)| StratumRow { cluster_id, stratum_id })
        .collect();
    write_rows(path, &rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Cr,
    Cbr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentRow {
    pub unit_id: usize,
    pub cluster_id: usize,
    pub stratum_id: usize,
    pub arm: Arm,
    pub treatment: u8,
}

/// Rows ordered by unit id.
pub fn read_assignment(path: &Path) -> CliResult<Vec<AssignmentRow>> {
    let rows: Vec<AssignmentRow> = read_rows(path)?;
    if let Some(r) = rows.iter().find(|r| r.treatment > 1) {
        return Err(CliError::Usage(format!("{}: unit {} has treatment {}", path.display(), r.unit_id, r.treatment)));
    }
    dense(path, "unit_id", rows.into_iter().map(|r| (r.unit_id, r)).collect())
}

pub fn write_assignment(path: &Path, rows: &[AssignmentRow]) -> CliResult<()> {
    write_rows(path, rows)
}

#[derive(Serialize, Deserialize)]
struct OutcomeRow {
    unit_id: usize,
    y: f64,
}

/// Outcomes for units `0..n`; every unit must be present.
pub fn read_outcomes(path: &Path, n: usize) -> CliResult<Vec<f64>> {
    let rows: Vec<OutcomeRow> = read_rows(path)?;
    let mut y: Vec<Option<f64>> = vec![None; n];
    for r in rows {
        match y.get_mut(r.unit_id) {
            Some(slot) if slot.is_none() => *slot = Some(r.y),
            Some(_) => return Err(CliError::Usage(format!("{}: duplicate unit_id {}", path.display(), r.unit_id))),
            None => return Err(CliError::Usage(format!("{}: unit_id {} outside 0..{n}", path.display(), r.unit_id))),
        }
    }
    let missing: Vec<String> = (0..n).filter(|&u| y[u].is_none()).map(|u| u.to_string()).collect();
    if !missing.is_empty() {
        return Err(CliError::Usage(format!("{}: no outcome for units {}", path.display(), missing.join(", "))));
    }
    Ok(y.into_iter().map(|v| v.expect("checked")).collect())
}

pub fn write_outcomes(path: &Path, y: &[f64]) -> CliResult<()> {
    let rows: Vec<OutcomeRow> = y.iter().enumerate().map(|(unit_id, &y)| OutcomeRow { unit_id, y }).collect();
    write_rows(path, &rows)
}

#[derive(Serialize, Deserialize)]
struct TableRow {
    unit_id: usize,
    y1: f64,
    y0: f64,
}

pub fn read_table(path: &Path) -> CliResult<PotentialTable> {
    let rows: Vec<TableRow> = read_rows(path)?;
    let pairs = dense(path, "unit_id", rows.into_iter().map(|r| (r.unit_id, (r.y1, r.y0))).collect())?;
    let (y1, y0) = pairs.into_iter().unzip();
    Ok(PotentialTable::new(y1, y0)?)
}

pub fn write_table(path: &Path, table: &PotentialTable) -> CliResult<()> {
    let rows: Vec<TableRow> = (0..table.num_units())
        .map(|u| TableRow { unit_id: u, y1: table.y1()[u], y0: table.y0()[u] })
        .collect();
    write_rows(path, &rows)
}

/// Per-cluster covariates: a `cluster_id` column followed by any numeric
/// columns.
pub fn read_covariates(path: &Path, num_clusters: usize) -> CliResult<Vec<Vec<f64>>> {
    let rows: Vec<BTreeMap<String, f64>> = read_rows(path)?;
    let mut keyed = Vec::with_capacity(rows.len());
    for mut row in rows {
        let id = row
            .remove("cluster_id")
            .ok_or_else(|| CliError::Usage(format!("{}: missing cluster_id column", path.display())))?;
        keyed.push((id as usize, row.into_values().collect::<Vec<f64>>()));
    }
    if keyed.len() != num_clusters {
        return Err(CliError::Usage(format!("{}: {} rows for {num_clusters} clusters", path.display(), keyed.len())));
    }
    dense(path, "cluster_id", keyed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clustering_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let c = Clustering::new(vec![1, 0, 1, 0], 2).unwrap();
        write_clustering(&path, &c).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "unit_id,cluster_id\n0,1\n1,0\n2,1\n3,0\n");
        assert_eq!(read_clustering(&path).unwrap(), c);
    }

    #[test]
    fn missing_outcomes_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.csv");
        fs::write(&path, "unit_id,y\n0,1.5\n2,3\n").unwrap();
        let err = read_outcomes(&path, 5).unwrap_err().to_string();
        assert!(err.contains("units 1, 3, 4"), "{err}");
    }

    #[test]
    fn duplicate_units_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        fs::write(&path, "unit_id,cluster_id\n0,0\n0,1\n").unwrap();
        assert!(read_clustering(&path).is_err());
    }

    #[test]
    fn covariates_by_cluster() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        fs::write(&path, "cluster_id,pre\n1,2.5\n0,1.0\n").unwrap();
        assert_eq!(read_covariates(&path, 2).unwrap(), vec![vec![1.0], vec![2.5]]);
    }
}
