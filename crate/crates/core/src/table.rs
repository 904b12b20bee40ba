//! Raw tabular input: `time`, `event`, then feature columns of mixed kind.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::sig17;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Binary,
    Categorical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    /// Categorical levels, or `[false_level, true_level]` for a binary column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

/// A parsed CSV. Feature cells stay textual until binarization; `None` marks
/// a missing value.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub feature_names: Vec<String>,
    pub times: Vec<f64>,
    pub events: Vec<bool>,
    pub cells: Vec<Vec<Option<String>>>,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "NaN" | "nan")
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 2 || header.get(0).map(str::trim) != Some("time") || header.get(1).map(str::trim) != Some("event") {
            return Err(Error::Csv { line: 1, reason: "header must start with `time,event`".into() });
        }
        let feature_names: Vec<String> = header.iter().skip(2).map(|s| s.trim().to_string()).collect();
        let mut seen = HashSet::new();
        if let Some(dup) = feature_names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::Csv { line: 1, reason: format!("duplicate column `{dup}`") });
        }
        let mut table = RawTable { feature_names, times: Vec::new(), events: Vec::new(), cells: Vec::new() };
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != header.len() {
                return Err(Error::Csv { line, reason: format!("expected {} fields, found {}", header.len(), record.len()) });
            }
            let time: f64 = record[0]
                .trim()
                .parse()
                .ok()
                .filter(|t: &f64| t.is_finite() && *t > 0.0)
                .ok_or_else(|| Error::Csv { line, reason: format!("time `{}` is not a positive number", &record[0]) })?;
            let event = match record[1].trim() {
                "1" => true,
                "0" => false,
                other => return Err(Error::Csv { line, reason: format!("event `{other}` is not 0 or 1") }),
            };
            table.times.push(time);
            table.events.push(event);
            table
                .cells
                .push(record.iter().skip(2).map(|c| if is_missing(c) { None } else { Some(c.trim().to_string()) }).collect());
        }
        if table.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(table)
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = Option<&str>> {
        self.cells.iter().map(move |row| row[j].as_deref())
    }

    /// Kind per column: at most two distinct non-missing values is binary,
    /// any non-numeric value makes it categorical, otherwise numeric.
    pub fn infer_schema(&self) -> Vec<ColumnSchema> {
        (0..self.feature_names.len())
            .map(|j| {
                let mut distinct: Vec<&str> = Vec::new();
                let mut numeric = true;
                for cell in self.column(j).flatten() {
                    numeric &= cell.parse::<f64>().is_ok_and(f64::is_finite);
                    if distinct.len() <= 2 && !distinct.contains(&cell) {
                        distinct.push(cell);
                    }
                }
                let kind = if distinct.len() <= 2 {
                    ColumnKind::Binary
                } else if numeric {
                    ColumnKind::Numeric
                } else {
                    ColumnKind::Categorical
                };
                ColumnSchema { name: self.feature_names[j].clone(), kind, categories: None }
            })
            .collect()
    }

    /// The inferred schema with entries of `overrides` replacing columns of
    /// the same name.
    pub fn resolve_schema(&self, overrides: &[ColumnSchema]) -> Result<Vec<ColumnSchema>> {
        let mut schema = self.infer_schema();
        let mut seen = HashSet::new();
        for col in overrides {
            if !seen.insert(col.name.as_str()) {
                return Err(Error::Schema(format!("column `{}` listed twice", col.name)));
            }
            let slot = schema
                .iter_mut()
                .find(|s| s.name == col.name)
                .ok_or_else(|| Error::Schema(format!("column `{}` is not in the table", col.name)))?;
            if let Some(cats) = &col.categories {
                if cats.is_empty() {
                    return Err(Error::Schema(format!("column `{}` has an empty category list", col.name)));
                }
                if col.kind == ColumnKind::Binary && cats.len() != 2 {
                    return Err(Error::Schema(format!("binary column `{}` needs exactly two levels", col.name)));
                }
                if col.kind == ColumnKind::Numeric {
                    return Err(Error::Schema(format!("numeric column `{}` cannot list categories", col.name)));
                }
            }
            *slot = col.clone();
        }
        Ok(schema)
    }
}

/// Writes the table back as CSV, numbers at 17 significant digits.
pub fn write_csv(table: &RawTable, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string(), "event".to_string()];
    header.extend(table.feature_names.iter().cloned());
    w.write_record(&header)?;
    for r in 0..table.len() {
        let mut record = vec![sig17(table.times[r]), if table.events[r] { "1" } else { "0" }.to_string()];
        record.extend(table.cells[r].iter().map(|c| c.clone().unwrap_or_default()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a schema override file: a JSON array of column schemas.
pub fn read_schema(path: &Path) -> Result<Vec<ColumnSchema>> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RawTable> {
        RawTable::from_reader(text.as_bytes())
    }

    #[test]
    fn reads_and_infers() {
        let t = parse("time,event,a,b,c,d\n1.5,1,0,x,3,red\n2,0,1,y,4.5,blue\n3,1,1,x,7,green\n").unwrap();
        assert_eq!(t.times, vec![1.5, 2.0, 3.0]);
        assert_eq!(t.events, vec![true, false, true]);
        let kinds: Vec<ColumnKind> = t.infer_schema().iter().map(|c| c.kind).collect();
        assert_eq!(kinds, vec![ColumnKind::Binary, ColumnKind::Binary, ColumnKind::Numeric, ColumnKind::Categorical]);
    }

    #[test]
    fn missing_cells_are_none() {
        let t = parse("time,event,a\n1,1,\n2,0,NA\n3,1,4\n").unwrap();
        assert_eq!(t.cells, vec![vec![None], vec![None], vec![Some("4".to_string())]]);
    }

    #[test]
    fn malformed_rows_report_lines() {
        assert!(matches!(parse("time,event,a\n1,1,0\n-2,0,1\n"), Err(Error::Csv { line: 3, .. })));
        assert!(matches!(parse("time,event,a\n1,2,0\n"), Err(Error::Csv { line: 2, .. })));
        assert!(matches!(parse("time,event,a\n1,1\n"), Err(Error::Csv { line: 2, .. })));
        assert!(matches!(parse("t,event\n1,1\n"), Err(Error::Csv { line: 1, .. })));
        assert!(matches!(parse("time,event,a\n"), Err(Error::EmptyDataset)));
    }

    #[test]
    fn schema_overrides() {
        let t = parse("time,event,a,b\n1,1,0,5\n2,0,1,6\n3,1,1,7\n").unwrap();
        let o = vec![ColumnSchema { name: "a".into(), kind: ColumnKind::Numeric, categories: None }];
        let s = t.resolve_schema(&o).unwrap();
        assert_eq!(s[0].kind, ColumnKind::Numeric);
        assert_eq!(s[1].kind, ColumnKind::Numeric);
        let bad = vec![ColumnSchema { name: "zz".into(), kind: ColumnKind::Numeric, categories: None }];
        assert!(matches!(t.resolve_schema(&bad), Err(Error::Schema(_))));
        let empty = vec![ColumnSchema { name: "b".into(), kind: ColumnKind::Categorical, categories: Some(vec![]) }];
        assert!(t.resolve_schema(&empty).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let text = "time,event,a,b\n0.10000000000000001,1,x,\n2.0,0,y,3\n";
        let t = parse(text).unwrap();
        let mut out = Vec::new();
        write_csv(&t, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn schema_json_shape() {
        let s: Vec<ColumnSchema> =
            serde_json::from_str(r#"[{"name":"a","kind":"categorical","categories":["x","y"]},{"name":"b","kind":"numeric"}]"#)
                .unwrap();
        assert_eq!(s[0].categories.as_deref(), Some(&["x".to_string(), "y".to_string()][..]));
        assert_eq!(s[1].kind, ColumnKind::Numeric);
    }
}
