//! Experiment configuration files.
//!
//! The format is INI-style: `[section]` headers, `key = value` entries, and
//! `#` or `;` comment lines. Vectors are comma-separated, matrices separate
//! rows with `;`. Only `[system]` and `[control]` are mandatory; every other
//! key falls back to the defaults of the reference experiments (dt 0.1,
//! 500 samples, 100 ensemble members, 1000 generated members). Unknown
//! sections or keys are rejected, so a typo surfaces as an error naming its
//! line instead of silently switching to a default.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use opc::dynamics::{
    test_problem_1, test_problem_2, tp2_init_sigma, ControlLaw, InitDistribution, SystemSpec,
    TrajectoryGrid,
};
use opc::fit::OptimizerConfig;

use crate::error::CliError;

/// Which measured system the experiment runs on.
#[derive(Clone, Debug, PartialEq)]
pub enum SystemKind {
    /// Coupled oscillator pair, resolved coordinates first.
    Tp1,
    /// Scale-separated variant with the unresolved pair faster by `eps`.
    Tp2 { eps: f64 },
}

/// The forcing applied while measuring, mirroring [`ControlLaw`].
#[derive(Clone, Debug, PartialEq)]
pub enum ControlKind {
    Constant(Vec<f64>),
    Damped(f64),
    Linear {
        gain: DMatrix<f64>,
        selector: Vec<usize>,
    },
}

/// Whether the fit treats the input operator as given or identifies it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitMode {
    KnownB,
    UnknownB,
}

impl FitMode {
    pub fn name(self) -> &'static str {
        match self {
            FitMode::KnownB => "known_b",
            FitMode::UnknownB => "unknown_b",
        }
    }
}

/// One fully validated experiment. Commands read the plain fields; the
/// accessor methods rebuild the library objects on demand.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    /// Config file stem, used to label bench rows and progress lines.
    pub name: String,
    pub system: SystemKind,
    pub control: ControlKind,
    pub dt: f64,
    pub steps: usize,
    /// Integration substeps per sampling interval for measurement and MC.
    pub oversample: usize,
    /// Resolved initial state; the unresolved coordinates draw from
    /// `N(0, sigma^2)`.
    pub x0: Vec<f64>,
    pub sigma: f64,
    pub init_seed: u64,
    pub mc_samples: usize,
    pub mc_seed: u64,
    pub mode: FitMode,
    pub iterations: usize,
    pub learning_rate: f64,
    pub sigma_n: f64,
    pub n_gen_count: usize,
    pub fit_seed: u64,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    /// Reads and validates `path`. `out` replaces the `[output] dir` value
    /// and `seed` replaces all three seeds.
    pub fn load(path: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut cfg = parse(path, &text, out)?;
        if let Some(seed) = seed {
            cfg.init_seed = seed;
            cfg.mc_seed = seed;
            cfg.fit_seed = seed;
        }
        Ok(cfg)
    }

    pub fn system(&self) -> SystemSpec {
        match self.system {
            SystemKind::Tp1 => test_problem_1(),
            SystemKind::Tp2 { eps } => test_problem_2(eps).expect("eps checked at load"),
        }
    }

    pub fn control_law(&self) -> ControlLaw {
        build_law(&self.control)
    }

    pub fn grid(&self) -> TrajectoryGrid {
        TrajectoryGrid::new(self.dt, self.steps).expect("grid checked at load")
    }

    pub fn init(&self) -> InitDistribution {
        let sys = self.system();
        let unresolved = sys.d_total() - sys.d_resolved();
        InitDistribution::new(
            DVector::from_vec(self.x0.clone()),
            DVector::from_element(unresolved, self.sigma),
        )
        .expect("init checked at load")
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            iterations: self.iterations,
            learning_rate: self.learning_rate,
            ..OptimizerConfig::default()
        }
    }
}

fn build_law(control: &ControlKind) -> ControlLaw {
    match control {
        ControlKind::Constant(c) => ControlLaw::Constant(DVector::from_vec(c.clone())),
        ControlKind::Damped(rate) => ControlLaw::Damped { rate: *rate },
        ControlKind::Linear { gain, selector } => ControlLaw::LinearState {
            gain: gain.clone(),
            selector: selector.clone(),
        },
    }
}

struct Entry {
    key: String,
    value: String,
    line: usize,
}

struct RawSection {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

fn diag(path: &Path, line: usize, what: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.to_owned(),
        line: Some(line),
        what: what.into(),
    }
}

fn diag_file(path: &Path, what: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.to_owned(),
        line: None,
        what: what.into(),
    }
}

fn split_sections(path: &Path, text: &str) -> Result<Vec<RawSection>, CliError> {
    let mut sections: Vec<RawSection> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
            continue;
        }
        if let Some(inner) = trimmed.strip_prefix('[') {
            let Some(name) = inner.strip_suffix(']') else {
                return Err(diag(path, line, "section header must look like [name]"));
            };
            let name = name.trim();
            if name.is_empty() {
                return Err(diag(path, line, "empty section name"));
            }
            if let Some(prev) = sections.iter().find(|s| s.name == name) {
                return Err(diag(
                    path,
                    line,
                    format!("section [{name}] already opened on line {}", prev.line),
                ));
            }
            sections.push(RawSection {
                name: name.to_string(),
                line,
                entries: Vec::new(),
            });
        } else if let Some((key, value)) = trimmed.split_once('=') {
            let key = key.trim();
            if key.is_empty() {
                return Err(diag(path, line, "entry has no key before `=`"));
            }
            let Some(section) = sections.last_mut() else {
                return Err(diag(
                    path,
                    line,
                    format!("`{key}` appears before any [section]"),
                ));
            };
            if let Some(prev) = section.entries.iter().find(|e| e.key == key) {
                return Err(diag(
                    path,
                    line,
                    format!(
                        "duplicate key `{key}` in [{}], first set on line {}",
                        section.name, prev.line
                    ),
                ));
            }
            section.entries.push(Entry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line,
            });
        } else {
            return Err(diag(
                path,
                line,
                format!("expected `key = value` or `[section]`, got `{trimmed}`"),
            ));
        }
    }
    Ok(sections)
}

/// One section's entries with bookkeeping for which keys were consumed, so
/// leftovers can be reported as unknown.
struct Fields<'a> {
    path: &'a Path,
    section: &'static str,
    entries: Vec<&'a Entry>,
    taken: Vec<bool>,
}

impl<'a> Fields<'a> {
    fn new(path: &'a Path, sections: &'a [RawSection], section: &'static str) -> Self {
        let entries: Vec<&Entry> = sections
            .iter()
            .find(|s| s.name == section)
            .map(|s| s.entries.iter().collect())
            .unwrap_or_default();
        let taken = vec![false; entries.len()];
        Fields {
            path,
            section,
            entries,
            taken,
        }
    }

    fn take(&mut self, key: &str) -> Option<&'a Entry> {
        let pos = self.entries.iter().position(|e| e.key == key)?;
        self.taken[pos] = true;
        Some(self.entries[pos])
    }

    fn value<T>(
        &mut self,
        key: &str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Option<T>, CliError> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => parse(&e.value)
                .map(Some)
                .map_err(|msg| diag(self.path, e.line, format!("[{}] {key}: {msg}", self.section))),
        }
    }

    fn require<T>(
        &mut self,
        key: &str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<(T, usize), CliError> {
        match self.take(key) {
            None => Err(diag_file(
                self.path,
                format!("[{}] is missing the `{key}` key", self.section),
            )),
            Some(e) => parse(&e.value)
                .map(|v| (v, e.line))
                .map_err(|msg| diag(self.path, e.line, format!("[{}] {key}: {msg}", self.section))),
        }
    }

    /// Errors on the first key no caller asked for.
    fn finish(self) -> Result<(), CliError> {
        for (entry, taken) in self.entries.iter().zip(&self.taken) {
            if !taken {
                return Err(diag(
                    self.path,
                    entry.line,
                    format!("unknown key `{}` in [{}]", entry.key, self.section),
                ));
            }
        }
        Ok(())
    }
}

fn number(s: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .map_err(|_| format!("cannot parse `{s}` as a number"))
}

fn positive(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if !v.is_finite() || v <= 0.0 {
        return Err(format!("must be positive, got `{s}`"));
    }
    Ok(v)
}

fn nonnegative(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!("must be zero or positive, got `{s}`"));
    }
    Ok(v)
}

fn count(s: &str) -> Result<usize, String> {
    let v: usize = s
        .parse()
        .map_err(|_| format!("cannot parse `{s}` as a whole number"))?;
    if v == 0 {
        return Err("must be at least 1".into());
    }
    Ok(v)
}

fn sample_count(s: &str) -> Result<usize, String> {
    let v = count(s)?;
    if v < 2 {
        return Err("need at least 2 samples".into());
    }
    Ok(v)
}

fn seed_value(s: &str) -> Result<u64, String> {
    s.parse::<u64>()
        .map_err(|_| format!("cannot parse `{s}` as a seed (unsigned integer)"))
}

fn vector(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|p| number(p.trim())).collect()
}

fn indices(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|p| {
            let p = p.trim();
            p.parse::<usize>()
                .map_err(|_| format!("cannot parse `{p}` as an index"))
        })
        .collect()
}

fn matrix(s: &str) -> Result<DMatrix<f64>, String> {
    let rows: Vec<Vec<f64>> = s
        .split(';')
        .map(|row| vector(row.trim()))
        .collect::<Result<_, _>>()?;
    let cols = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
        return Err(format!(
            "rows must all have the same length, got {} and {}",
            cols,
            bad.len()
        ));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

fn text(s: &str) -> Result<String, String> {
    Ok(s.to_string())
}

fn parse(path: &Path, body: &str, out: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    let sections = split_sections(path, body)?;
    const KNOWN: [&str; 7] = ["system", "control", "grid", "init", "mc", "opc", "output"];
    if let Some(bad) = sections.iter().find(|s| !KNOWN.contains(&s.name.as_str())) {
        return Err(diag(
            path,
            bad.line,
            format!("unknown section [{}]", bad.name),
        ));
    }
    for required in ["system", "control"] {
        if !sections.iter().any(|s| s.name == required) {
            return Err(diag_file(path, format!("missing [{required}] section")));
        }
    }

    let mut sys = Fields::new(path, &sections, "system");
    let (kind, kind_line) = sys.require("kind", text)?;
    let system = match kind.as_str() {
        "tp1" => SystemKind::Tp1,
        "tp2" => {
            let (eps, eps_line) = sys.require("eps", positive)?;
            test_problem_2(eps).map_err(|e| diag(path, eps_line, format!("[system] eps: {e}")))?;
            SystemKind::Tp2 { eps }
        }
        other => {
            return Err(diag(
                path,
                kind_line,
                format!("[system] kind: expected `tp1` or `tp2`, got `{other}`"),
            ))
        }
    };
    sys.finish()?;
    let spec = match system {
        SystemKind::Tp1 => test_problem_1(),
        SystemKind::Tp2 { eps } => test_problem_2(eps).expect("checked above"),
    };

    let mut ctl = Fields::new(path, &sections, "control");
    let (ckind, ckind_line) = ctl.require("kind", text)?;
    let control = match ckind.as_str() {
        "constant" => ControlKind::Constant(ctl.require("c", vector)?.0),
        "damped" => ControlKind::Damped(ctl.require("k", nonnegative)?.0),
        "linear" => ControlKind::Linear {
            gain: ctl.require("matrix", matrix)?.0,
            selector: ctl.require("selector", indices)?.0,
        },
        other => {
            return Err(diag(
                path,
                ckind_line,
                format!("[control] kind: expected `constant`, `damped` or `linear`, got `{other}`"),
            ))
        }
    };
    ctl.finish()?;
    build_law(&control)
        .check_dims(spec.d_total())
        .map_err(|e| diag(path, ckind_line, format!("[control] {e}")))?;

    let mut grid = Fields::new(path, &sections, "grid");
    let dt = grid.value("dt", positive)?.unwrap_or(0.1);
    let steps = grid.value("steps", sample_count)?.unwrap_or(500);
    let oversample = grid.value("oversample", count)?.unwrap_or(1);
    grid.finish()?;

    let mut init = Fields::new(path, &sections, "init");
    let x0 = init.value("x0", vector)?.unwrap_or_else(|| vec![1.0, 0.0]);
    let default_sigma = match system {
        SystemKind::Tp1 => 1.0,
        SystemKind::Tp2 { eps } => tp2_init_sigma(eps),
    };
    let sigma = init.value("sigma", nonnegative)?.unwrap_or(default_sigma);
    let init_seed = init.value("seed", seed_value)?.unwrap_or(0);
    init.finish()?;
    if x0.len() != spec.d_resolved() {
        return Err(diag_file(
            path,
            format!(
                "[init] x0 has length {}, {} has {} resolved coordinates",
                x0.len(),
                spec.name(),
                spec.d_resolved()
            ),
        ));
    }

    let mut mc = Fields::new(path, &sections, "mc");
    let mc_samples = mc.value("samples", count)?.unwrap_or(100);
    let mc_seed = mc.value("seed", seed_value)?.unwrap_or(0);
    mc.finish()?;

    let mut opc = Fields::new(path, &sections, "opc");
    let mode = match opc.take("mode") {
        None => FitMode::KnownB,
        Some(e) => match e.value.as_str() {
            "known_b" => FitMode::KnownB,
            "unknown_b" => FitMode::UnknownB,
            other => {
                return Err(diag(
                    path,
                    e.line,
                    format!("[opc] mode: expected `known_b` or `unknown_b`, got `{other}`"),
                ))
            }
        },
    };
    let iterations = opc.value("iterations", count)?.unwrap_or(150);
    let learning_rate = opc.value("learning_rate", positive)?.unwrap_or(1e-3);
    let sigma_n = opc.value("sigma_n", nonnegative)?.unwrap_or(sigma);
    let n_gen_count = opc.value("n_gen_count", count)?.unwrap_or(1000);
    let fit_seed = opc.value("seed", seed_value)?.unwrap_or(0);
    opc.finish()?;
    if mode == FitMode::UnknownB && !matches!(control, ControlKind::Linear { .. }) {
        return Err(diag_file(
            path,
            "[opc] mode unknown_b needs a linear control with a selector for the input record",
        ));
    }

    let mut output = Fields::new(path, &sections, "output");
    let dir = output.value("dir", text)?;
    output.finish()?;
    let out_dir = match (out, dir) {
        (Some(out), _) => out.to_owned(),
        (None, Some(dir)) => PathBuf::from(dir),
        (None, None) => {
            return Err(diag_file(
                path,
                "no output directory: set [output] dir or pass --out",
            ))
        }
    };

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "experiment".to_string());

    Ok(ExperimentConfig {
        name,
        system,
        control,
        dt,
        steps,
        oversample,
        x0,
        sigma,
        init_seed,
        mc_samples,
        mc_seed,
        mode,
        iterations,
        learning_rate,
        sigma_n,
        n_gen_count,
        fit_seed,
        out_dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load_str(body: &str) -> Result<ExperimentConfig, CliError> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.ini");
        std::fs::write(&path, body).unwrap();
        ExperimentConfig::load(&path, None, None)
    }

    const MINIMAL: &str =
        "[system]\nkind = tp1\n\n[control]\nkind = damped\nk = 0.01\n\n[output]\ndir = out\n";

    #[test]
    fn minimal_config_fills_in_the_experiment_defaults() {
        let cfg = load_str(MINIMAL).unwrap();
        assert_eq!(cfg.system, SystemKind::Tp1);
        assert_eq!(cfg.dt, 0.1);
        assert_eq!(cfg.steps, 500);
        assert_eq!(cfg.oversample, 1);
        assert_eq!(cfg.x0, vec![1.0, 0.0]);
        assert_eq!(cfg.sigma, 1.0);
        assert_eq!(cfg.mc_samples, 100);
        assert_eq!(cfg.mode, FitMode::KnownB);
        assert_eq!(cfg.iterations, 150);
        assert_eq!(cfg.learning_rate, 1e-3);
        assert_eq!(cfg.sigma_n, 1.0);
        assert_eq!(cfg.n_gen_count, 1000);
        assert_eq!(cfg.out_dir, PathBuf::from("out"));
        assert_eq!(cfg.name, "exp");
    }

    #[test]
    fn tp2_defaults_scale_the_initial_spread_by_eps() {
        let cfg = load_str(
            "[system]\nkind = tp2\neps = 10\n\n[control]\nkind = constant\nc = 0.1, 0.1, -0.01, 0.01\n\n[output]\ndir = out\n",
        )
        .unwrap();
        assert_eq!(cfg.system, SystemKind::Tp2 { eps: 10.0 });
        assert!((cfg.sigma - 0.1f64.sqrt()).abs() < 1e-15);
        assert_eq!(cfg.sigma_n, cfg.sigma);
    }

    #[test]
    fn parse_errors_name_the_line_and_key() {
        let err = load_str(
            "[system]\nkind = tp1\n\n[control]\nkind = damped\nk = 0.01\n\n[grid]\nsteps = many\n\n[output]\ndir = out\n",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(":9:"), "{msg}");
        assert!(msg.contains("[grid] steps"), "{msg}");
        assert!(msg.contains("`many`"), "{msg}");
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        let err = load_str(&format!("{MINIMAL}\n[grid]\nstride = 3\n")).unwrap_err();
        assert!(err.to_string().contains("unknown key `stride`"), "{err}");

        let err = load_str(&format!("{MINIMAL}\n[plotting]\nstyle = fancy\n")).unwrap_err();
        assert!(
            err.to_string().contains("unknown section [plotting]"),
            "{err}"
        );
    }

    #[test]
    fn duplicate_entries_point_back_at_the_first() {
        let err = load_str(
            "[system]\nkind = tp1\nkind = tp2\n\n[control]\nkind = damped\nk = 0.01\n\n[output]\ndir = out\n",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("duplicate key `kind`"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn control_dimensions_are_checked_against_the_system() {
        let err = load_str(
            "[system]\nkind = tp1\n\n[control]\nkind = constant\nc = 0.1, 0.1\n\n[output]\ndir = out\n",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[control]"), "{msg}");
        assert!(msg.contains("length 2"), "{msg}");
    }

    #[test]
    fn unknown_b_requires_an_input_selector() {
        let err = load_str(
            "[system]\nkind = tp1\n\n[control]\nkind = constant\nc = 0.1, 0.1, -0.01, 0.01\n\n[opc]\nmode = unknown_b\n\n[output]\ndir = out\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("selector"), "{err}");
    }

    #[test]
    fn linear_control_parses_rows_and_selector() {
        let cfg = load_str(
            "[system]\nkind = tp1\n\n[control]\nkind = linear\nmatrix = -0.1, 1; -1, 0; -1, 0.1; -0.1, -0.1\nselector = 0, 1\n\n[opc]\nmode = unknown_b\n\n[output]\ndir = out\n",
        )
        .unwrap();
        let ControlKind::Linear { gain, selector } = &cfg.control else {
            panic!("expected linear control");
        };
        assert_eq!(gain.nrows(), 4);
        assert_eq!(gain.ncols(), 2);
        assert_eq!(gain[(0, 1)], 1.0);
        assert_eq!(selector, &[0, 1]);
        assert_eq!(cfg.mode, FitMode::UnknownB);
    }

    #[test]
    fn seed_override_replaces_all_three_seeds() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.ini");
        std::fs::write(
            &path,
            "[system]\nkind = tp1\n\n[control]\nkind = damped\nk = 0.01\n\n[init]\nseed = 1\n\n[mc]\nseed = 2\n\n[opc]\nseed = 3\n\n[output]\ndir = out\n",
        )
        .unwrap();
        let cfg = ExperimentConfig::load(&path, Some(Path::new("elsewhere")), Some(9)).unwrap();
        assert_eq!(
            (cfg.init_seed, cfg.mc_seed, cfg.fit_seed, cfg.out_dir.clone()),
            (9, 9, 9, PathBuf::from("elsewhere"))
        );
    }

    #[test]
    fn missing_required_sections_are_reported_by_name() {
        let err = load_str("[control]\nkind = damped\nk = 0.01\n").unwrap_err();
        assert!(err.to_string().contains("missing [system]"), "{err}");

        let err =
            load_str("[system]\nkind = tp1\n\n[control]\nkind = damped\nk = 0.01\n").unwrap_err();
        assert!(err.to_string().contains("output directory"), "{err}");
    }

    #[test]
    fn accessors_rebuild_the_library_objects() {
        let cfg = load_str(MINIMAL).unwrap();
        assert_eq!(cfg.system().d_total(), 4);
        assert_eq!(cfg.grid().steps(), 500);
        assert_eq!(cfg.init().d_total(), 4);
        assert_eq!(cfg.optimizer().iterations, 150);
        assert!(matches!(cfg.control_law(), ControlLaw::Damped { .. }));
    }
}
