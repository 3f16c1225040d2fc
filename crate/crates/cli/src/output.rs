//! Plot-ready tables and atomic file writes.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::CliError;

/// A named file held in memory until the whole run has succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

/// Numeric CSV table. Values print with 17 significant digits, which is
/// enough to round-trip any `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Table {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: &[f64]) {
        self.push_cells(row.iter().map(|v| format_number(*v)).collect());
    }

    /// Row with preformatted cells, for tables that carry a status column.
    pub fn push_cells(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn into_file(self, name: &str) -> OutputFile {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in self.rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        OutputFile {
            name: name.to_string(),
            contents: s,
        }
    }
}

/// Scientific notation with 17 significant digits; `NaN` and infinities
/// print as `nan`, `inf`, `-inf`.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

/// Write through `.<name>.tmp` in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("output");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    fs::rename(&tmp, path).map_err(io)
}
