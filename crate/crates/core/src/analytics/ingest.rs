//! Loading participant series from episode logs and attribute tables from CSV.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::eval::ParticipantSeries;
use crate::error::{Error, Result};
use crate::model::FeedbackSample;
use crate::sim::{read_episode_log, read_interactions_csv, EpisodeLog, InteractionRow};

fn missing_feedback(id: &str, stage: usize) -> Error {
    Error::invalid(format!("participant {id}: no trust feedback at site {stage}"))
}

pub fn series_from_log(log: &EpisodeLog) -> Result<ParticipantSeries> {
    let id = &log.header.participant_id;
    let feedback = log
        .records
        .iter()
        .map(|r| {
            let v = r.trust_feedback.ok_or_else(|| missing_feedback(id, r.stage))?;
            FeedbackSample::new(r.stage, v)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut s = ParticipantSeries::new(id.clone(), feedback, log.performances())?;
    s.archetype = log.header.archetype;
    Ok(s)
}

pub fn series_from_rows(id: &str, rows: &[InteractionRow]) -> Result<ParticipantSeries> {
    let feedback = rows
        .iter()
        .map(|r| {
            let v = r.trust_feedback.ok_or_else(|| missing_feedback(id, r.stage))?;
            FeedbackSample::new(r.stage, v)
        })
        .collect::<Result<Vec<_>>>()?;
    ParticipantSeries::new(id, feedback, rows.iter().map(|r| r.performance).collect())
}

fn input_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && matches!(p.extension().and_then(|e| e.to_str()), Some("jsonl") | Some("csv"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Reads every `.jsonl` episode log and `.csv` interaction table in `dir`
/// (not recursive), sorted by participant id.
pub fn load_series_dir(dir: &Path) -> Result<Vec<ParticipantSeries>> {
    let files = input_files(dir)?;
    if files.is_empty() {
        return Err(Error::Precondition(format!(
            "no input: {} has no .jsonl or .csv files",
            dir.display()
        )));
    }
    let mut out: BTreeMap<String, ParticipantSeries> = BTreeMap::new();
    let mut add = |s: ParticipantSeries, path: &Path| {
        if out.contains_key(&s.participant_id) {
            return Err(Error::invalid(format!(
                "participant {} appears twice (again in {})",
                s.participant_id,
                path.display()
            )));
        }
        out.insert(s.participant_id.clone(), s);
        Ok(())
    };
    for path in &files {
        let file = File::open(path)?;
        if path.extension().and_then(|e| e.to_str()) == Some("jsonl") {
            let log = read_episode_log(BufReader::new(file))?;
            add(series_from_log(&log)?, path)?;
        } else {
            for (id, rows) in read_interactions_csv(file)? {
                add(series_from_rows(&id, &rows)?, path)?;
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Precondition(format!("no input: no participants in {}", dir.display())));
    }
    Ok(out.into_values().collect())
}

/// Episode logs in `dir` (JSON-lines only), sorted by file name.
pub fn load_logs_dir(dir: &Path) -> Result<Vec<EpisodeLog>> {
    let files: Vec<PathBuf> = input_files(dir)?
        .into_iter()
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("jsonl"))
        .collect();
    files
        .iter()
        .map(|p| read_episode_log(BufReader::new(File::open(p)?)))
        .collect()
}

/// Numeric per-participant attributes, e.g. pre-scored survey scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeTable {
    pub names: Vec<String>,
    pub rows: BTreeMap<String, Vec<f64>>,
}

impl AttributeTable {
    /// CSV with a header row; the first column holds participant ids, every
    /// other column is a finite number.
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let header = reader.headers()?.clone();
        if header.len() < 2 {
            return Err(Error::invalid("attribute table needs an id column and at least one attribute"));
        }
        let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
        let mut rows = BTreeMap::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            let id = rec.get(0).unwrap_or("").trim().to_string();
            if id.is_empty() {
                return Err(Error::invalid(format!("attribute row {}: empty participant id", line + 1)));
            }
            let values = names
                .iter()
                .enumerate()
                .map(|(j, name)| {
                    let cell = rec.get(j + 1).unwrap_or("").trim();
                    match cell.parse::<f64>() {
                        Ok(v) if v.is_finite() => Ok(v),
                        _ => Err(Error::invalid(format!(
                            "participant {id}: attribute {name} is not a finite number: {cell:?}"
                        ))),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            if rows.insert(id.clone(), values).is_some() {
                return Err(Error::invalid(format!("participant {id} listed twice")));
            }
        }
        Ok(AttributeTable { names, rows })
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        Self::read_csv(File::open(path)?)
    }

    /// Splits attribute `index` into one sample per group, where `groups`
    /// maps participant ids to group indices in `0..n_groups`. Both tables
    /// must cover the same participants.
    pub fn grouped(
        &self,
        index: usize,
        groups: &BTreeMap<String, usize>,
        n_groups: usize,
    ) -> Result<Vec<Vec<f64>>> {
        check_join(groups.keys(), self.rows.keys())?;
        let mut out = vec![Vec::new(); n_groups];
        for (id, &g) in groups {
            out[g].push(self.rows[id][index]);
        }
        Ok(out)
    }
}

/// Errors with every id present in one key set but not the other.
pub fn check_join<'a>(
    a: impl IntoIterator<Item = &'a String>,
    b: impl IntoIterator<Item = &'a String>,
) -> Result<()> {
    let a: BTreeSet<&String> = a.into_iter().collect();
    let b: BTreeSet<&String> = b.into_iter().collect();
    let missing: Vec<String> = a.symmetric_difference(&b).map(|s| s.to_string()).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::Join { missing })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attribute_table_parsing() {
        let t = AttributeTable::read_csv("id,extraversion,agree\np1,3.5,2\np2,4,1\n".as_bytes()).unwrap();
        assert_eq!(t.names, vec!["extraversion", "agree"]);
        assert_eq!(t.rows["p2"], vec![4.0, 1.0]);
        assert!(AttributeTable::read_csv("id,x\np1,\n".as_bytes()).is_err());
        assert!(AttributeTable::read_csv("id,x\np1,nan\n".as_bytes()).is_err());
        assert!(AttributeTable::read_csv("id,x\np1,1\np1,2\n".as_bytes()).is_err());
        assert!(AttributeTable::read_csv("id\np1\n".as_bytes()).is_err());
    }

    #[test]
    fn join_lists_missing_ids_from_both_sides() {
        let t = AttributeTable::read_csv("id,x\na,1\nb,2\n".as_bytes()).unwrap();
        let groups: BTreeMap<String, usize> = [("b".to_string(), 0), ("c".to_string(), 1)].into();
        match t.grouped(0, &groups, 2) {
            Err(Error::Join { missing }) => assert_eq!(missing, vec!["a", "c"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grouping() {
        let t = AttributeTable::read_csv("id,x\na,1\nb,2\nc,3\n".as_bytes()).unwrap();
        let groups: BTreeMap<String, usize> =
            [("a".to_string(), 1), ("b".to_string(), 0), ("c".to_string(), 1)].into();
        assert_eq!(t.grouped(0, &groups, 2).unwrap(), vec![vec![2.0], vec![1.0, 3.0]]);
    }

    #[test]
    fn empty_dir_is_no_input() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_series_dir(dir.path()).unwrap_err();
        assert!(err.to_string().contains("no input"), "{err}");
    }
}
