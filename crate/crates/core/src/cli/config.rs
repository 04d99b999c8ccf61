//! Run configuration: documented defaults, an optional flat `key = value` file,
//! and command-line flags, applied in that order.

use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::Side;
use crate::hvt::builtin_model_names;
use crate::observables::ParticleKind;
use crate::oumandel::Convention;

pub const DEFAULT_TRIALS: usize = 100_000;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_ANGLES_DEG: [f64; 4] = [0.0, 45.0, 22.5, 67.5];

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{key}`{} (valid keys: {})", at_line(*.line), KEYS.join(", "))]
    UnknownKey { key: String, line: Option<usize> },

    #[error("invalid value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },

    #[error("config line {line} is not `key = value`: `{text}`")]
    Syntax { line: usize, text: String },

    #[error("cannot read config file {path}: {reason}")]
    Unreadable { path: String, reason: String },

    #[error("{0}")]
    Usage(String),
}

fn at_line(line: Option<usize>) -> String {
    line.map(|l| format!(" at line {l}")).unwrap_or_default()
}

pub const KEYS: [&str; 14] = [
    "mode",
    "source",
    "model",
    "kind",
    "angles",
    "trials",
    "seed",
    "out",
    "table-out",
    "side",
    "tandem",
    "convention",
    "splitter",
    "workers",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    FourBin,
    RandomSettings,
    Sequential,
    IdentityChecks,
}

impl Mode {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "four-bin" => Some(Mode::FourBin),
            "random-settings" => Some(Mode::RandomSettings),
            "sequential" => Some(Mode::Sequential),
            "identity-checks" => Some(Mode::IdentityChecks),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::FourBin => "four-bin",
            Mode::RandomSettings => "random-settings",
            Mode::Sequential => "sequential",
            Mode::IdentityChecks => "identity-checks",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Singlet,
    Product,
    Hvt(String),
    OuMandel,
}

impl Source {
    pub fn label(&self) -> String {
        match self {
            Source::Singlet => "singlet".into(),
            Source::Product => "product".into(),
            Source::Hvt(m) => format!("hvt:{m}"),
            Source::OuMandel => "ou-mandel".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub source: Source,
    pub kind: ParticleKind,
    /// `[a, a′, b, b′]` in degrees.
    pub angles_deg: [f64; 4],
    pub trials: usize,
    pub seed: u64,
    pub side: Side,
    pub tandem: bool,
    pub convention: Convention,
    /// Transmissions `(Tx, Ty)` of the beam splitter for the `ou-mandel` source.
    pub splitter: (f64, f64),
    pub out: Option<PathBuf>,
    pub table_out: Option<PathBuf>,
    /// Not echoed: results do not depend on it.
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::FourBin,
            source: Source::Singlet,
            kind: ParticleKind::Photon,
            angles_deg: DEFAULT_ANGLES_DEG,
            trials: DEFAULT_TRIALS,
            seed: DEFAULT_SEED,
            side: Side::BSide,
            tandem: false,
            convention: Convention::Annihilation,
            splitter: (0.5, 0.5),
            out: None,
            table_out: None,
            workers: None,
        }
    }
}

fn bad(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

fn parse_float_list<const N: usize>(key: &str, value: &str) -> Result<[f64; N], ConfigError> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(bad(key, value, format!("expected {N} comma-separated numbers")));
    }
    let mut out = [0.0; N];
    for (slot, p) in out.iter_mut().zip(&parts) {
        let v: f64 = p
            .parse()
            .map_err(|_| bad(key, value, format!("`{p}` is not a number")))?;
        if !v.is_finite() {
            return Err(bad(key, value, format!("`{p}` is not finite")));
        }
        *slot = v;
    }
    Ok(out)
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

/// Raw settings before the source/model pair is resolved.
#[derive(Debug, Default)]
struct Pending {
    source: Option<String>,
    model: Option<String>,
}

impl RunConfig {
    fn apply(&mut self, pending: &mut Pending, key: &str, value: &str, line: Option<usize>) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "mode" => {
                self.mode = Mode::parse(value).ok_or_else(|| {
                    bad(
                        key,
                        value,
                        "expected four-bin|random-settings|sequential|identity-checks",
                    )
                })?
            }
            "source" => pending.source = Some(value.to_string()),
            "model" => pending.model = Some(value.to_string()),
            "kind" => self.kind = value.parse().map_err(|e: String| bad(key, value, e))?,
            "angles" => self.angles_deg = parse_float_list::<4>(key, value)?,
            "trials" => {
                let n: usize = value.parse().map_err(|_| bad(key, value, "expected a whole number"))?;
                if n < 2 {
                    return Err(bad(key, value, "need at least 2 trials"));
                }
                self.trials = n;
            }
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| bad(key, value, "expected an unsigned 64-bit integer"))?
            }
            "out" => self.out = Some(PathBuf::from(value)),
            "table-out" => self.table_out = Some(PathBuf::from(value)),
            "side" => self.side = value.parse().map_err(|e: String| bad(key, value, e))?,
            "tandem" => self.tandem = parse_bool(key, value)?,
            "convention" => self.convention = value.parse().map_err(|e: String| bad(key, value, e))?,
            "splitter" => {
                let [tx, ty] = parse_float_list::<2>(key, value)?;
                if !(0.0..=1.0).contains(&tx) || !(0.0..=1.0).contains(&ty) {
                    return Err(bad(key, value, "transmissions must lie in [0, 1]"));
                }
                self.splitter = (tx, ty);
            }
            "workers" => {
                let w: usize = value
                    .parse()
                    .map_err(|_| bad(key, value, "expected a positive whole number"))?;
                if w == 0 {
                    return Err(bad(key, value, "expected a positive whole number"));
                }
                self.workers = Some(w);
            }
            other => {
                return Err(ConfigError::UnknownKey {
                    key: other.to_string(),
                    line,
                })
            }
        }
        Ok(())
    }

    fn resolve_source(&mut self, pending: Pending) -> Result<(), ConfigError> {
        let model = pending.model;
        let raw = match pending.source {
            Some(s) => s,
            None if model.is_some() => "hvt".to_string(),
            None => return Ok(()),
        };
        self.source = match raw.as_str() {
            "singlet" => Source::Singlet,
            "product" => Source::Product,
            "ou-mandel" => Source::OuMandel,
            "hvt" => {
                let m = model.ok_or_else(|| bad("source", &raw, "`hvt` needs --model <name> or hvt:<name>"))?;
                Source::Hvt(m)
            }
            s if s.starts_with("hvt:") => Source::Hvt(s["hvt:".len()..].to_string()),
            _ => return Err(bad("source", &raw, "expected singlet|product|ou-mandel|hvt:<model>")),
        };
        if let Source::Hvt(name) = &self.source {
            if !builtin_model_names().contains(&name.as_str()) {
                return Err(bad(
                    "model",
                    name,
                    format!("expected one of {}", builtin_model_names().join(", ")),
                ));
            }
        }
        Ok(())
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String, usize)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.to_string(),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string(), i + 1));
    }
    Ok(out)
}

#[derive(Debug, Parser)]
#[command(
    name = "bell-lab",
    version,
    about = "Bell-test laboratory: CHSH, time-ordered bound, Ou-Mandel coincidences"
)]
struct Flags {
    /// Flat `key = value` config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// four-bin | random-settings | sequential | identity-checks
    #[arg(long)]
    mode: Option<String>,
    /// singlet | product | hvt:<model> | ou-mandel
    #[arg(long)]
    source: Option<String>,
    /// static-sign | collapse-rotation | qm-oracle (implies --source hvt)
    #[arg(long)]
    model: Option<String>,
    /// photon | electron
    #[arg(long)]
    kind: Option<String>,
    /// a,a',b,b' in degrees
    #[arg(long, allow_hyphen_values = true)]
    angles: Option<String>,
    /// Trials per correlation bin (total trials for random-settings)
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Write the machine-readable report (JSON) here
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the per-trial table here
    #[arg(long = "table-out")]
    table_out: Option<PathBuf>,
    /// A-side | B-side
    #[arg(long)]
    side: Option<String>,
    /// Use the two-experiment tandem-analyzer schedule
    #[arg(long)]
    tandem: bool,
    /// annihilation | creation (ou-mandel only)
    #[arg(long)]
    convention: Option<String>,
    /// Beam splitter transmissions Tx,Ty (ou-mandel only)
    #[arg(long)]
    splitter: Option<String>,
    /// Worker threads (results do not depend on this)
    #[arg(long)]
    workers: Option<String>,
}

pub enum Parsed {
    Run(RunConfig),
    /// `--help` or `--version`: print and exit successfully.
    Info(String),
}

/// Flags override file values, which override defaults.
pub fn parse_config<I, T>(args: I) -> Result<Parsed, ConfigError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let flags = match Flags::try_parse_from(args) {
        Ok(f) => f,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Ok(Parsed::Info(e.to_string())),
                _ => Err(ConfigError::Usage(first_line(&e.to_string()))),
            };
        }
    };
    let mut cfg = RunConfig::default();
    let mut pending = Pending::default();
    if let Some(path) = &flags.config {
        for (k, v, line) in read_config_file(path)? {
            cfg.apply(&mut pending, &k, &v, Some(line))?;
        }
    }
    let flag_values: [(&str, Option<String>); 12] = [
        ("mode", flags.mode),
        ("source", flags.source),
        ("model", flags.model),
        ("kind", flags.kind),
        ("angles", flags.angles),
        ("trials", flags.trials),
        ("seed", flags.seed),
        ("side", flags.side),
        ("convention", flags.convention),
        ("splitter", flags.splitter),
        ("workers", flags.workers),
        ("tandem", flags.tandem.then(|| "true".to_string())),
    ];
    for (k, v) in flag_values {
        if let Some(v) = v {
            cfg.apply(&mut pending, k, &v, None)?;
        }
    }
    if let Some(p) = flags.out {
        cfg.out = Some(p);
    }
    if let Some(p) = flags.table_out {
        cfg.table_out = Some(p);
    }
    cfg.resolve_source(pending)?;
    Ok(Parsed::Run(cfg))
}

fn first_line(s: &str) -> String {
    s.lines().next().unwrap_or("").trim_start_matches("error: ").to_string()
}

fn read_config_file(path: &Path) -> Result<Vec<(String, String, usize)>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_config_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig, ConfigError> {
        let mut full = vec!["bell-lab"];
        full.extend_from_slice(args);
        match parse_config(full)? {
            Parsed::Run(c) => Ok(c),
            Parsed::Info(_) => panic!("unexpected info"),
        }
    }

    #[test]
    fn defaults() {
        let c = parse(&[]).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.angles_deg, [0.0, 45.0, 22.5, 67.5]);
        assert_eq!(c.kind, ParticleKind::Photon);
        assert_eq!(c.trials, 100_000);
        assert_eq!(c.mode, Mode::FourBin);
    }

    #[test]
    fn electron_menu() {
        let c = parse(&["--kind", "electron", "--angles", "0,90,45,135"]).unwrap();
        assert_eq!(c.kind, ParticleKind::Electron);
        assert_eq!(c.angles_deg, [0.0, 90.0, 45.0, 135.0]);
    }

    #[test]
    fn negative_angles() {
        let c = parse(&["--angles", "-22.5,0,45,-67.5"]).unwrap();
        assert_eq!(c.angles_deg, [-22.5, 0.0, 45.0, -67.5]);
    }

    #[test]
    fn too_few_trials() {
        let err = parse(&["--trials", "1"]).unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { ref key, .. } if key == "trials"));
    }

    #[test]
    fn non_numeric_angle() {
        let err = parse(&["--angles", "0,45,x,67.5"]).unwrap_err();
        assert!(err.to_string().contains("`x` is not a number"));
    }

    #[test]
    fn model_forms() {
        let a = parse(&["--source", "hvt:static-sign"]).unwrap();
        let b = parse(&["--model", "static-sign"]).unwrap();
        assert_eq!(a.source, Source::Hvt("static-sign".into()));
        assert_eq!(a.source, b.source);
        assert!(parse(&["--source", "hvt:bogus"]).is_err());
        assert!(parse(&["--source", "hvt"]).is_err());
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        assert!(matches!(parse(&["--bogus", "1"]), Err(ConfigError::Usage(_))));
    }

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# demo\ntrials = 500\nseed=9\nkind = electron\n").unwrap();
        let p = path.to_str().unwrap();
        let c = parse(&["--config", p, "--seed", "10"]).unwrap();
        assert_eq!(c.trials, 500);
        assert_eq!(c.seed, 10);
        assert_eq!(c.kind, ParticleKind::Electron);
    }

    #[test]
    fn unknown_file_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "trials = 500\ncolour = blue\n").unwrap();
        let err = parse(&["--config", path.to_str().unwrap()]).unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownKey {
                key: "colour".into(),
                line: Some(2)
            }
        );
    }

    #[test]
    fn syntax_error_in_file() {
        assert!(matches!(
            parse_config_text("trials 5"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
    }
}
