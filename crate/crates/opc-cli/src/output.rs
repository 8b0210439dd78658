//! CSV tables and key-value metadata sidecars.
//!
//! Numbers print through `Display`, the shortest decimal string that parses
//! back to the same value, so rerunning a command with the same seeds
//! rewrites every table byte for byte. Anything that varies between runs
//! (wall times, build id) goes into a `.meta` sidecar, never into a table.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Duration;

use crate::error::CliError;

/// Writes `text`, creating the parent directory on first use.
pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.to_owned(),
        source,
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io)?;
        }
    }
    fs::write(path, text).map_err(io)
}

/// A CSV table under construction. Rows must match the header width.
pub struct Table {
    buf: String,
    cols: usize,
}

impl Table {
    pub fn new(header: &str) -> Self {
        Table {
            buf: format!("{header}\n"),
            cols: header.split(',').count(),
        }
    }

    pub fn row(&mut self, cells: &[f64]) {
        assert_eq!(cells.len(), self.cols, "row width != header width");
        self.push_cells(cells, true);
    }

    /// A row whose leading cells are text rather than numbers. A comma in
    /// `label` separates cells, exactly as in the header.
    pub fn labeled_row(&mut self, label: &str, cells: &[f64]) {
        let label_cells = label.split(',').count();
        assert_eq!(
            cells.len() + label_cells,
            self.cols,
            "row width != header width"
        );
        self.buf.push_str(label);
        self.push_cells(cells, false);
    }

    fn push_cells(&mut self, cells: &[f64], first: bool) {
        for (i, v) in cells.iter().enumerate() {
            if i > 0 || !first {
                self.buf.push(',');
            }
            write!(self.buf, "{v}").unwrap();
        }
        self.buf.push('\n');
    }

    pub fn write(self, path: &Path) -> Result<(), CliError> {
        write_text(path, &self.buf)
    }
}

/// Header `t,<prefix>1,...,<prefix>d`.
pub fn series_header(prefix: &str, d: usize) -> String {
    let mut h = String::from("t");
    for i in 1..=d {
        write!(h, ",{prefix}{i}").unwrap();
    }
    h
}

/// The `.meta` sidecar written next to a command's primary artifact.
pub struct Meta {
    buf: String,
}

impl Meta {
    pub fn new(command: &str, config_name: &str) -> Self {
        let mut meta = Meta { buf: String::new() };
        meta.push("command", command);
        meta.push("config", config_name);
        meta
    }

    pub fn push(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        writeln!(self.buf, "{key}={value}").unwrap();
        self
    }

    pub fn wall_time(&mut self, elapsed: Duration) -> &mut Self {
        self.push("wall_time_s", format_args!("{:.6}", elapsed.as_secs_f64()))
    }

    pub fn write(&mut self, path: &Path) -> Result<(), CliError> {
        self.push("build", env!("OPC_BUILD"));
        write_text(path, &self.buf)
    }
}
