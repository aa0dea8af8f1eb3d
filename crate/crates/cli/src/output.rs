//! Versioned CSV tables.

use std::fs;
use std::path::Path;

use crate::error::{CliError, Result};

pub const SCHEMA_LINE: &str = "# schema=1";

/// A table written with a leading `# schema=1` comment line.
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Table {
        Table { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width does not match the header");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields");
        format!("{SCHEMA_LINE}\n{body}")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(CliError::io(path))
    }
}

/// Rows of a schema-1 table as maps from column name to field.
pub struct Rows {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Rows {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn get<'a>(&self, row: &'a [String], name: &str) -> &'a str {
        &row[self.column(name).expect("column checked on read")]
    }

    pub fn f64(&self, row: &[String], name: &str) -> f64 {
        self.get(row, name).parse().unwrap_or(f64::NAN)
    }
}

pub fn read(path: &Path, required: &[&str]) -> Result<Rows> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let Some(rest) = text.strip_prefix(SCHEMA_LINE).and_then(|r| r.strip_prefix('\n')) else {
        return Err(CliError::data(path, format!("missing {SCHEMA_LINE:?} header line")));
    };
    let mut r = csv::Reader::from_reader(rest.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| CliError::data(path, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    for c in required {
        if !header.iter().any(|h| h == c) {
            return Err(CliError::data(path, format!("missing column {c:?}")));
        }
    }
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_owned).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()
        .map_err(|e| CliError::data(path, e.to_string()))?;
    Ok(Rows { header, rows })
}

/// Shortest round-trip formatting, stable across runs.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}
