//! Binarization of raw columns into the predicates the solver splits on.
//!
//! Numeric columns get `value ≤ τ` predicates at the nine inner boundaries of
//! ten equal-frequency buckets, categorical columns get membership predicates
//! (the nine most frequent levels plus `other` beyond ten levels), and binary
//! columns map to themselves. Predicates that are nearly constant on the
//! training rows, or duplicate an earlier predicate, are dropped.

use std::collections::{HashMap, HashSet};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::bits::BitVector;
use crate::error::{Error, Result};
use crate::format::ser_f64;
use crate::model::Dataset;
use crate::table::{ColumnKind, ColumnSchema, RawTable};

pub const QUANTILE_BUCKETS: usize = 10;
pub const MAX_CATEGORIES: usize = 10;
/// Predicates true (or false) on fewer than this fraction of rows are dropped.
pub const RARE_FRACTION: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Test {
    /// `value ≤ threshold`
    Le {
        #[serde(serialize_with = "ser_f64")]
        threshold: f64,
    },
    /// `value == level`
    Eq { level: String },
    /// `value` is none of `known`.
    Other { known: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    /// Position in the solver's feature vector.
    pub index: usize,
    pub test: Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinarizationMap {
    pub schema: Vec<ColumnSchema>,
    /// Source column name to its surviving predicates.
    pub columns: IndexMap<String, Vec<Predicate>>,
}

fn parse_number(row: usize, column: &str, cell: &str) -> Result<f64> {
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::NotNumeric { row, column: column.to_string(), value: cell.to_string() })
}

fn same_level(a: &str, b: &str) -> bool {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

impl Test {
    fn eval(&self, row: usize, column: &str, cell: &str) -> Result<bool> {
        Ok(match self {
            Test::Le { threshold } => parse_number(row, column, cell)? <= *threshold,
            Test::Eq { level } => same_level(cell, level),
            Test::Other { known } => !known.iter().any(|k| same_level(cell, k)),
        })
    }
}

/// Thresholds at the inner boundaries of `buckets` equal-frequency buckets.
/// Each sits midway between the two observed values straddling the boundary;
/// a boundary inside a run of tied values moves to the end of the run.
pub fn quantile_thresholds(values: &[f64], buckets: usize) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut out: Vec<f64> = Vec::new();
    for k in 1..buckets {
        let mut idx = (k * n / buckets).max(1);
        while idx < n && v[idx - 1] == v[idx] {
            idx += 1;
        }
        if idx >= n {
            continue;
        }
        let tau = 0.5 * (v[idx - 1] + v[idx]);
        if out.last() != Some(&tau) {
            out.push(tau);
        }
    }
    out
}

/// Levels ordered by descending frequency, ties by first appearance.
fn ranked_levels<'a>(cells: impl Iterator<Item = &'a str>, declared: Option<&[String]>) -> Vec<String> {
    let mut order: Vec<String> = declared.map(|d| d.to_vec()).unwrap_or_default();
    let mut counts: HashMap<String, usize> = HashMap::new();
    for cell in cells {
        let key = order.iter().find(|l| same_level(l, cell)).cloned().unwrap_or_else(|| {
            order.push(cell.to_string());
            cell.to_string()
        });
        *counts.entry(key).or_default() += 1;
    }
    let mut ranked: Vec<(usize, String)> = order.into_iter().enumerate().collect();
    ranked.sort_by(|a, b| counts.get(&b.1).unwrap_or(&0).cmp(counts.get(&a.1).unwrap_or(&0)).then(a.0.cmp(&b.0)));
    ranked.into_iter().map(|(_, l)| l).collect()
}

fn candidate_tests(table: &RawTable, j: usize, col: &ColumnSchema) -> Result<Vec<Test>> {
    let cells: Vec<&str> = table
        .column(j)
        .enumerate()
        .map(|(row, c)| c.ok_or_else(|| Error::MissingValue { row, column: col.name.clone() }))
        .collect::<Result<_>>()?;
    Ok(match col.kind {
        ColumnKind::Numeric => {
            let values =
                cells.iter().enumerate().map(|(row, c)| parse_number(row, &col.name, c)).collect::<Result<Vec<f64>>>()?;
            quantile_thresholds(&values, QUANTILE_BUCKETS).into_iter().map(|threshold| Test::Le { threshold }).collect()
        }
        ColumnKind::Binary => {
            let level = match &col.categories {
                Some(levels) => levels[1].clone(),
                None => {
                    let mut distinct: Vec<&str> = Vec::new();
                    for c in &cells {
                        if !distinct.iter().any(|d| same_level(d, c)) {
                            distinct.push(c);
                        }
                    }
                    let numeric = distinct.iter().all(|d| d.parse::<f64>().is_ok());
                    distinct.sort_by(|a, b| {
                        if numeric {
                            a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap())
                        } else {
                            a.cmp(b)
                        }
                    });
                    distinct.last().map(|s| s.to_string()).unwrap_or_default()
                }
            };
            vec![Test::Eq { level }]
        }
        ColumnKind::Categorical => {
            let levels = ranked_levels(cells.iter().copied(), col.categories.as_deref());
            if levels.len() <= MAX_CATEGORIES {
                levels.into_iter().map(|level| Test::Eq { level }).collect()
            } else {
                let kept: Vec<String> = levels.into_iter().take(MAX_CATEGORIES - 1).collect();
                let mut tests: Vec<Test> = kept.iter().map(|l| Test::Eq { level: l.clone() }).collect();
                tests.push(Test::Other { known: kept });
                tests
            }
        }
    })
}

/// Fits the predicate set on a training table.
pub fn fit_binarizer(table: &RawTable, schema: &[ColumnSchema]) -> Result<BinarizationMap> {
    if table.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if schema.len() != table.feature_names.len() || schema.iter().zip(&table.feature_names).any(|(s, n)| &s.name != n) {
        return Err(Error::Schema("schema does not match the table's columns".into()));
    }
    let n = table.len();
    let min_count = (RARE_FRACTION * n as f64).ceil() as usize;
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let mut columns = IndexMap::new();
    let mut index = 0;
    for (j, col) in schema.iter().enumerate() {
        let mut kept = Vec::new();
        for test in candidate_tests(table, j, col)? {
            let mut truth = BitVector::zeros(n);
            for (row, cell) in table.column(j).enumerate() {
                if test.eval(row, &col.name, cell.unwrap_or_default())? {
                    truth.set(row, true);
                }
            }
            let ones = truth.count_ones();
            if ones < min_count || n - ones < min_count {
                continue;
            }
            if !seen.insert(truth.words().to_vec()) {
                continue;
            }
            kept.push(Predicate { index, test });
            index += 1;
        }
        columns.insert(col.name.clone(), kept);
    }
    if index == 0 {
        return Err(Error::DegenerateFeatureSpace);
    }
    Ok(BinarizationMap { schema: schema.to_vec(), columns })
}

impl BinarizationMap {
    pub fn predicate_count(&self) -> usize {
        self.columns.values().map(Vec::len).sum()
    }

    /// Human-readable predicate names in feature order.
    pub fn predicate_names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.predicate_count()];
        for (column, preds) in &self.columns {
            for p in preds {
                names[p.index] = match &p.test {
                    Test::Le { threshold } => format!("{column} <= {threshold}"),
                    Test::Eq { level } => format!("{column} == {level}"),
                    Test::Other { .. } => format!("{column} == other"),
                };
            }
        }
        names
    }

    /// Evaluates every predicate on one row; `cells` follow `names`.
    pub fn apply_row(&self, row: usize, names: &[String], cells: &[Option<String>]) -> Result<BitVector> {
        let mut bits = BitVector::zeros(self.predicate_count());
        for (column, preds) in &self.columns {
            if preds.is_empty() {
                continue;
            }
            let j = names.iter().position(|n| n == column).ok_or_else(|| Error::Schema(format!("column `{column}` is missing")))?;
            let cell = cells
                .get(j)
                .ok_or(Error::RowWidth { row, expected: names.len(), found: cells.len() })?
                .as_deref()
                .ok_or_else(|| Error::MissingValue { row, column: column.clone() })?;
            for p in preds {
                if p.test.eval(row, column, cell)? {
                    bits.set(p.index, true);
                }
            }
        }
        Ok(bits)
    }

    /// Binarizes a whole table into a solver dataset (without baseline).
    pub fn apply(&self, table: &RawTable) -> Result<Dataset> {
        let rows = (0..table.len())
            .map(|r| self.apply_row(r, &table.feature_names, &table.cells[r]))
            .collect::<Result<Vec<_>>>()?;
        Dataset::from_parts(&table.times, &table.events, rows, self.predicate_count())
    }
}

pub fn apply_binarizer(map: &BinarizationMap, table: &RawTable) -> Result<Dataset> {
    map.apply(table)
}
