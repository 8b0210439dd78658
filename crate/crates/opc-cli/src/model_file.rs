//! Fitted models as sectioned text.
//!
//! `[model]` declares the step and the fit mode, `[a]` and `[b]` declare
//! their dimensions first and then one comma-separated row per line, and
//! `[memory]` carries the seed configuration the fit used. Values print in
//! shortest round-trip form, so save followed by load reproduces the exact
//! numbers on the same platform.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use opc::fit::{MemorySeedConfig, OpcModel};

use crate::error::CliError;
use crate::output::write_text;

pub fn save(path: &Path, model: &OpcModel) -> Result<(), CliError> {
    let mut buf = String::new();
    let mode = if model.b().is_some() {
        "unknown_b"
    } else {
        "known_b"
    };
    writeln!(buf, "[model]").unwrap();
    writeln!(buf, "format = 1").unwrap();
    writeln!(buf, "dt = {}", model.dt()).unwrap();
    writeln!(buf, "mode = {mode}").unwrap();

    push_matrix(&mut buf, "a", model.a());
    if let Some(b) = model.b() {
        push_matrix(&mut buf, "b", b);
    }

    let cfg = model.seed_cfg();
    writeln!(buf, "\n[memory]").unwrap();
    writeln!(buf, "sigma_n = {}", cfg.sigma_n).unwrap();
    writeln!(buf, "n_gen_count = {}", cfg.n_gen_count).unwrap();
    writeln!(buf, "seed = {}", cfg.seed).unwrap();
    writeln!(buf, "n_fit = {}", join(cfg.n_fit.iter())).unwrap();

    write_text(path, &buf)
}

fn push_matrix(buf: &mut String, name: &str, m: &DMatrix<f64>) {
    writeln!(buf, "\n[{name}]").unwrap();
    writeln!(buf, "rows = {}", m.nrows()).unwrap();
    writeln!(buf, "cols = {}", m.ncols()).unwrap();
    for r in 0..m.nrows() {
        writeln!(buf, "{}", join(m.row(r).iter())).unwrap();
    }
}

fn join<'a>(values: impl Iterator<Item = &'a f64>) -> String {
    values
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Loads a model saved by [`save`]. A missing file is reported as a missing
/// artifact pointing at `opc fit`.
pub fn load(path: &Path) -> Result<OpcModel, CliError> {
    if !path.exists() {
        return Err(CliError::Missing {
            path: path.to_owned(),
            hint: "run `opc fit` with this config first".into(),
        });
    }
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })?;
    Parser { path, text: &text }.model()
}

struct Parser<'a> {
    path: &'a Path,
    text: &'a str,
}

impl Parser<'_> {
    fn fail(&self, line: usize, what: impl Into<String>) -> CliError {
        CliError::Model {
            path: self.path.to_owned(),
            line: Some(line),
            what: what.into(),
        }
    }

    fn fail_file(&self, what: impl Into<String>) -> CliError {
        CliError::Model {
            path: self.path.to_owned(),
            line: None,
            what: what.into(),
        }
    }

    fn model(&self) -> Result<OpcModel, CliError> {
        let mut dt = None;
        let mut mode = None;
        let mut a = None;
        let mut b = None;
        let mut sigma_n = None;
        let mut n_gen_count = None;
        let mut seed = None;
        let mut n_fit = None;

        let mut lines = self.text.lines().enumerate().peekable();
        while let Some((idx, raw)) = lines.next() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            match trimmed {
                "[model]" => {
                    for (key, value, at) in self.entries(&mut lines)? {
                        match key.as_str() {
                            "format" => {
                                if value != "1" {
                                    return Err(
                                        self.fail(at, format!("unsupported format `{value}`"))
                                    );
                                }
                            }
                            "dt" => dt = Some(self.number(&value, at)?),
                            "mode" => mode = Some((value, at)),
                            other => {
                                return Err(self.fail(at, format!("unknown key `{other}`")))
                            }
                        }
                    }
                }
                "[a]" => a = Some(self.matrix(&mut lines, line)?),
                "[b]" => b = Some(self.matrix(&mut lines, line)?),
                "[memory]" => {
                    for (key, value, at) in self.entries(&mut lines)? {
                        match key.as_str() {
                            "sigma_n" => sigma_n = Some(self.number(&value, at)?),
                            "n_gen_count" => n_gen_count = Some(self.integer(&value, at)?),
                            "seed" => seed = Some(self.integer(&value, at)? as u64),
                            "n_fit" => n_fit = Some(self.row(&value, at)?),
                            other => {
                                return Err(self.fail(at, format!("unknown key `{other}`")))
                            }
                        }
                    }
                }
                other => return Err(self.fail(line, format!("unexpected `{other}`"))),
            }
        }

        let a = a.ok_or_else(|| self.fail_file("missing [a] section"))?;
        let dt = dt.ok_or_else(|| self.fail_file("missing dt in [model]"))?;
        let (mode, mode_line) = mode.ok_or_else(|| self.fail_file("missing mode in [model]"))?;
        match (mode.as_str(), b.is_some()) {
            ("known_b", false) | ("unknown_b", true) => {}
            ("known_b", true) => {
                return Err(self.fail(mode_line, "mode known_b but a [b] section is present"))
            }
            ("unknown_b", false) => {
                return Err(self.fail(mode_line, "mode unknown_b but no [b] section"))
            }
            (other, _) => return Err(self.fail(mode_line, format!("unknown mode `{other}`"))),
        }
        let cfg = MemorySeedConfig {
            sigma_n: sigma_n.ok_or_else(|| self.fail_file("missing sigma_n in [memory]"))?,
            n_fit: DVector::from_vec(
                n_fit.ok_or_else(|| self.fail_file("missing n_fit in [memory]"))?,
            ),
            n_gen_count: n_gen_count
                .ok_or_else(|| self.fail_file("missing n_gen_count in [memory]"))?,
            seed: seed.ok_or_else(|| self.fail_file("missing seed in [memory]"))?,
        };
        OpcModel::new(a, b, dt, cfg).map_err(|e| self.fail_file(e.to_string()))
    }

    /// Consumes `key = value` lines until the next section header.
    fn entries<'l>(
        &self,
        lines: &mut std::iter::Peekable<impl Iterator<Item = (usize, &'l str)>>,
    ) -> Result<Vec<(String, String, usize)>, CliError> {
        let mut out = Vec::new();
        while let Some((idx, raw)) = lines.peek() {
            let trimmed = raw.trim();
            if trimmed.starts_with('[') {
                break;
            }
            let at = idx + 1;
            if !trimmed.is_empty() && !trimmed.starts_with('#') {
                let Some((key, value)) = trimmed.split_once('=') else {
                    return Err(self.fail(at, format!("expected `key = value`, got `{trimmed}`")));
                };
                out.push((key.trim().to_string(), value.trim().to_string(), at));
            }
            lines.next();
        }
        Ok(out)
    }

    fn matrix<'l>(
        &self,
        lines: &mut std::iter::Peekable<impl Iterator<Item = (usize, &'l str)>>,
        section_line: usize,
    ) -> Result<DMatrix<f64>, CliError> {
        let mut rows: Option<usize> = None;
        let mut cols: Option<usize> = None;
        let mut data: Vec<Vec<f64>> = Vec::new();
        while let Some((idx, raw)) = lines.peek() {
            let trimmed = raw.trim();
            if trimmed.starts_with('[') {
                break;
            }
            let at = idx + 1;
            if trimmed.is_empty() || trimmed.starts_with('#') {
                lines.next();
                continue;
            }
            if let Some((key, value)) = trimmed.split_once('=') {
                match key.trim() {
                    "rows" => rows = Some(self.integer(value.trim(), at)?),
                    "cols" => cols = Some(self.integer(value.trim(), at)?),
                    other => return Err(self.fail(at, format!("unknown key `{other}`"))),
                }
            } else {
                data.push(self.row(trimmed, at)?);
            }
            lines.next();
        }
        let rows = rows.ok_or_else(|| self.fail(section_line, "matrix is missing `rows`"))?;
        let cols = cols.ok_or_else(|| self.fail(section_line, "matrix is missing `cols`"))?;
        if data.len() != rows {
            return Err(self.fail(
                section_line,
                format!("declared {rows} rows, found {}", data.len()),
            ));
        }
        if let Some(bad) = data.iter().find(|r| r.len() != cols) {
            return Err(self.fail(
                section_line,
                format!("declared {cols} columns, found a row with {}", bad.len()),
            ));
        }
        let flat: Vec<f64> = data.iter().flatten().copied().collect();
        Ok(DMatrix::from_row_slice(rows, cols, &flat))
    }

    fn number(&self, s: &str, line: usize) -> Result<f64, CliError> {
        s.parse()
            .map_err(|_| self.fail(line, format!("cannot parse `{s}` as a number")))
    }

    fn integer(&self, s: &str, line: usize) -> Result<usize, CliError> {
        s.parse()
            .map_err(|_| self.fail(line, format!("cannot parse `{s}` as a whole number")))
    }

    fn row(&self, s: &str, line: usize) -> Result<Vec<f64>, CliError> {
        s.split(',').map(|p| self.number(p.trim(), line)).collect()
    }
}
