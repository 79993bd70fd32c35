//! Plain-text CSV artifacts with round-trip exact decimals.
//!
//! Floats are written in scientific notation with 17 significant digits,
//! lines end in `\n`, and nothing depends on the locale.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Field {
    fn from(x: f64) -> Self {
        Field::Num(x)
    }
}

impl From<i64> for Field {
    fn from(x: i64) -> Self {
        Field::Int(x)
    }
}

impl From<u64> for Field {
    fn from(x: u64) -> Self {
        Field::Int(x as i64)
    }
}

impl From<usize> for Field {
    fn from(x: usize) -> Self {
        Field::Int(x as i64)
    }
}

impl From<bool> for Field {
    fn from(x: bool) -> Self {
        Field::Int(x as i64)
    }
}

impl From<&str> for Field {
    fn from(x: &str) -> Self {
        Field::Text(x.to_string())
    }
}

/// 17 significant digits, e.g. `1.0000000000000000e0`.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn render(field: &Field) -> String {
    match field {
        Field::Num(x) => format_float(*x),
        Field::Int(i) => i.to_string(),
        Field::Text(s) => s.clone(),
    }
}

fn csv_error(err: csv::Error) -> Error {
    Error::Io(err.to_string())
}

/// Renders a table; every row must have as many fields as the header.
pub fn to_csv_string<S: AsRef<str>>(header: &[S], rows: &[Vec<Field>]) -> Result<String> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer
        .write_record(header.iter().map(|h| h.as_ref()))
        .map_err(csv_error)?;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::InvalidArgument(format!(
                "CSV row {i} has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
        writer.write_record(row.iter().map(render)).map_err(csv_error)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

pub fn write_csv<S: AsRef<str>>(path: impl AsRef<Path>, header: &[S], rows: &[Vec<Field>]) -> Result<()> {
    let text = to_csv_string(header, rows)?;
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Column parsed as floats.
    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let j = self
            .column(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no CSV column `{name}`")))?;
        self.rows
            .iter()
            .map(|r| {
                r[j].parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("`{}` is not a number", r[j])))
            })
            .collect()
    }
}

pub fn parse_csv(text: &str) -> Result<CsvTable> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        rows.push(record.map_err(csv_error)?.iter().map(str::to_string).collect());
    }
    Ok(CsvTable { header, rows })
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<CsvTable> {
    parse_csv(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_two_by_two() {
        let rows = vec![vec![Field::Num(1.0), Field::Num(-0.1)], vec![Field::Num(1.0 / 3.0), Field::Num(2.5e-300)]];
        let text = to_csv_string(&["a", "b"], &rows).unwrap();
        assert_eq!(
            text,
            "a,b\n\
             1.0000000000000000e0,-1.0000000000000001e-1\n\
             3.3333333333333331e-1,2.5000000000000000e-300\n"
        );
    }

    #[test]
    fn empty_table_is_header_only() {
        assert_eq!(to_csv_string(&["x", "y", "z"], &[]).unwrap(), "x,y,z\n");
    }

    #[test]
    fn mixed_fields() {
        let rows = vec![vec![Field::from(3usize), Field::from("jump"), Field::from(true), Field::from(0.5)]];
        let text = to_csv_string(&["cycle", "kind", "flag", "v"], &rows).unwrap();
        assert_eq!(text, "cycle,kind,flag,v\n3,jump,1,5.0000000000000000e-1\n");
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let rows = vec![vec![Field::Num(1.0)]];
        assert!(to_csv_string(&["a", "b"], &rows).is_err());
        assert!(parse_csv("a,b\n1\n").is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join(format!("tskit-csv-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.csv");
        let rows = vec![vec![Field::Num(f64::MIN_POSITIVE), Field::Num(-1e308)]];
        write_csv(&path, &["p", "q"], &rows).unwrap();
        let table = read_csv(&path).unwrap();
        assert_eq!(table.floats("p").unwrap()[0].to_bits(), f64::MIN_POSITIVE.to_bits());
        assert_eq!(table.floats("q").unwrap()[0].to_bits(), (-1e308f64).to_bits());
        fs::remove_dir_all(&dir).unwrap();
    }

    mod prop {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn floats_round_trip_bitwise(values in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 0..20)) {
                let rows: Vec<Vec<Field>> = values.iter().map(|&x| vec![Field::Num(x)]).collect();
                let table = parse_csv(&to_csv_string(&["v"], &rows).unwrap()).unwrap();
                let back = table.floats("v").unwrap();
                prop_assert_eq!(back.len(), values.len());
                for (a, b) in values.iter().zip(&back) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
    }
}
