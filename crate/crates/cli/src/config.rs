//! Flat `key = value` run configuration. Values come from an optional file
//! and from command-line flags; a flag always wins. Relative paths in a file
//! resolve against the file's directory, relative paths on the command line
//! against the working directory.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

/// Every key the configuration understands.
pub const KEYS: &[&str] = &[
    "kb",
    "corpus",
    "labeled",
    "unlabeled",
    "weights",
    "groups",
    "out",
    "seed",
    "workers",
    "window",
    "epochs",
    "learning_rate",
    "margin",
    "shuffle",
    "solver",
    "baseline",
    "restarts",
    "respot",
    "theta",
    "n",
    "classes",
    "mmd_tolerance",
    "mmd_iterations",
    "eps",
    "damping",
    "ppr_tolerance",
    "ppr_iterations",
    "center",
    "top_k",
];

#[derive(Debug, Clone)]
struct Value {
    text: String,
    /// Directory that relative paths in `text` are resolved against.
    base: PathBuf,
}

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<String, Value>,
}

fn field_error(key: &str, msg: impl Display) -> CliError {
    CliError::Data(format!("config field `{key}`: {msg}"))
}

impl RunConfig {
    /// Parse a config file. Blank lines and lines starting with `#` are
    /// ignored; unknown or repeated keys are errors.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("config file {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut cfg = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = || format!("{}:{}", path.display(), i + 1);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Data(format!("{}: expected key = value", at())))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(CliError::Data(format!("{}: unknown config field `{key}`", at())));
            }
            if cfg.values.contains_key(key) {
                return Err(CliError::Data(format!("{}: config field `{key}` given twice", at())));
            }
            cfg.values.insert(
                key.to_string(),
                Value {
                    text: value.trim().to_string(),
                    base: base.clone(),
                },
            );
        }
        Ok(cfg)
    }

    /// Set a value from the command line, replacing any file value.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        debug_assert!(KEYS.contains(&key), "unknown key {key}");
        self.values.insert(
            key.to_string(),
            Value {
                text: value.into(),
                base: PathBuf::new(),
            },
        );
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|v| v.text.as_str())
    }

    pub fn string(&self, key: &str) -> Result<String, CliError> {
        self.raw(key)
            .map(str::to_string)
            .ok_or_else(|| field_error(key, "is required"))
    }

    pub fn parse_or<T>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(s) => s.parse().map_err(|e| field_error(key, format!("{s:?}: {e}"))),
        }
    }

    pub fn parse<T>(&self, key: &str) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let s = self.string(key)?;
        s.parse().map_err(|e| field_error(key, format!("{s:?}: {e}")))
    }

    /// A real that must satisfy `ok`; `range` describes it for the message.
    pub fn real_or(&self, key: &str, default: f64, range: &str, ok: impl Fn(f64) -> bool) -> Result<f64, CliError> {
        let v: f64 = self.parse_or(key, default)?;
        if !ok(v) {
            return Err(field_error(key, format!("{v} must be {range}")));
        }
        Ok(v)
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.raw(key) {
            None => Ok(default),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(s) => Err(field_error(key, format!("{s:?} is not a boolean"))),
        }
    }

    fn resolve(&self, key: &str) -> Option<PathBuf> {
        self.values.get(key).map(|v| {
            let p = PathBuf::from(&v.text);
            if p.is_absolute() {
                p
            } else {
                v.base.join(p)
            }
        })
    }

    /// A path that must already exist.
    pub fn input_path(&self, key: &str) -> Result<PathBuf, CliError> {
        let p = self.resolve(key).ok_or_else(|| field_error(key, "is required"))?;
        if !p.exists() {
            return Err(field_error(key, format!("{} does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn optional_input_path(&self, key: &str) -> Result<Option<PathBuf>, CliError> {
        if self.has(key) {
            self.input_path(key).map(Some)
        } else {
            Ok(None)
        }
    }

    /// Output directory, created if needed. Defaults to the working directory.
    pub fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self.resolve("out").unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir).map_err(|e| field_error("out", format!("{}: {e}", dir.display())))?;
        Ok(dir)
    }

    pub fn workers(&self) -> Result<usize, CliError> {
        let w: usize = self.parse_or("workers", 1)?;
        if w == 0 {
            return Err(field_error("workers", "must be at least 1"));
        }
        Ok(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_paths_resolve() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# comment\nseed = 7\nkb = kbdir\n\nwindow=3\n").unwrap();
        let mut cfg = RunConfig::from_file(&path).unwrap();
        assert_eq!(cfg.parse::<u64>("seed").unwrap(), 7);
        cfg.set("seed", "9");
        assert_eq!(cfg.parse::<u64>("seed").unwrap(), 9);
        assert_eq!(cfg.resolve("kb").unwrap(), dir.path().join("kbdir"));
        assert!(cfg.input_path("kb").unwrap_err().to_string().contains("`kb`"));
        std::fs::create_dir(dir.path().join("kbdir")).unwrap();
        assert!(cfg.input_path("kb").is_ok());
    }

    #[test]
    fn rejects_bad_files_and_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.conf");
        std::fs::write(&path, "colour = red\n").unwrap();
        assert!(RunConfig::from_file(&path).unwrap_err().to_string().contains("colour"));
        std::fs::write(&path, "seed = 1\nseed = 2\n").unwrap();
        assert!(RunConfig::from_file(&path).is_err());
        std::fs::write(&path, "just text\n").unwrap();
        assert!(RunConfig::from_file(&path).is_err());

        let mut cfg = RunConfig::default();
        cfg.set("damping", "1.5");
        let err = cfg.real_or("damping", 0.85, "in (0, 1)", |d| d > 0.0 && d < 1.0);
        assert!(err.unwrap_err().to_string().contains("damping"));
        cfg.set("shuffle", "maybe");
        assert!(cfg.bool_or("shuffle", true).is_err());
        cfg.set("workers", "0");
        assert!(cfg.workers().is_err());
    }
}
