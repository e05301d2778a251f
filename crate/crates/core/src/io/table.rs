//! Comma-separated numeric tables with a header row.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Default)]
pub struct NamedTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl NamedTable {
    pub fn new(columns: Vec<String>) -> Self {
        NamedTable {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::format(path, e.to_string())
    }
}

/// Writes the table with LF line endings. Numbers use the shortest
/// representation that parses back to the same `f64`.
pub fn write_csv_matrix(table: &NamedTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    w.write_record(&table.columns).map_err(|e| csv_err(path, e))?;
    for (i, row) in table.rows.iter().enumerate() {
        if row.len() != table.columns.len() {
            return Err(Error::Dimension(format!(
                "row {i} has {} values for {} columns",
                row.len(),
                table.columns.len()
            )));
        }
        w.write_record(row.iter().map(|v| format!("{v}")))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv_matrix(path: impl AsRef<Path>) -> Result<NamedTable> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let columns: Vec<String> = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::format(path, format!("row {}: `{s}` is not a number", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(NamedTable { columns, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_is_three_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.csv");
        let t = NamedTable {
            columns: vec!["a".into(), "b".into()],
            rows: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        write_csv_matrix(&t, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "a,b\n1,0\n0,1\n");
    }

    #[test]
    fn empty_table_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let t = NamedTable::new(vec!["k".into(), "volume".into()]);
        write_csv_matrix(&t, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "k,volume\n");
        assert_eq!(read_csv_matrix(&path).unwrap(), t);
    }

    #[test]
    fn ragged_row_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let t = NamedTable {
            columns: vec!["a".into()],
            rows: vec![vec![1.0, 2.0]],
        };
        assert!(write_csv_matrix(&t, dir.path().join("r.csv")).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn round_trip(rows in proptest::collection::vec(proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 3), 0..10)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("t.csv");
            let t = NamedTable { columns: vec!["x".into(), "y".into(), "z".into()], rows };
            write_csv_matrix(&t, &path).unwrap();
            prop_assert_eq!(read_csv_matrix(&path).unwrap(), t);
        }
    }
}
