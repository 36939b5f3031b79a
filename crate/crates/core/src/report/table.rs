//! In-memory CSV tables with a single fixed dialect: comma separated, LF
//! line endings, quoting only when a field needs it.

use std::path::Path;

use crate::error::{Error, Result};
use crate::store::write_atomic;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row arity");
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn get<'a>(&'a self, row: &'a [String], name: &str) -> Option<&'a str> {
        self.column_index(name).and_then(|j| row.get(j)).map(String::as_str)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .quote_style(csv::QuoteStyle::Necessary)
            .from_writer(Vec::new());
        writer.write_record(&self.header).expect("write to vec");
        for row in &self.rows {
            writer.write_record(row).expect("write to vec");
        }
        writer.into_inner().expect("flush to vec")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn parse(bytes: &[u8], context: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
        let header = reader
            .headers()
            .map_err(|e| Error::parse(context, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = reader
            .records()
            .map(|r| {
                r.map(|rec| rec.iter().map(str::to_string).collect())
                    .map_err(|e| Error::parse(context, e))
            })
            .collect::<Result<Vec<Vec<String>>>>()?;
        Ok(Self { header, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Self::parse(&bytes, &path.display().to_string())
    }
}

/// Star counts and other count-derived quantities: one decimal.
pub fn fmt_stars(v: f64) -> String {
    fmt_fixed(v, 1)
}

pub fn fmt_p(v: f64) -> String {
    fmt_fixed(v, 2)
}

/// Model metrics (MAE, RMSE, R², importance scores): three decimals.
pub fn fmt_metric(v: f64) -> String {
    fmt_fixed(v, 3)
}

pub fn fmt_opt(v: Option<f64>, f: fn(f64) -> String) -> String {
    v.map(f).unwrap_or_default()
}

/// Fixed-point formatting that never prints a negative zero.
pub fn fmt_fixed(v: f64, decimals: usize) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}
