use std::path::{Path, PathBuf};
use std::str::FromStr;

use aidr_core::opsd::config::Config;
use anyhow::{Context, Result};

use crate::args::Cli;

pub const DEFAULT_SEED: u64 = 42;
pub const CONFIG_ENV: &str = "AIDR_CONFIG";

/// Raised for bad invocations that clap cannot catch; exits with 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Flags layered over the configuration file. Flags win.
#[derive(Debug)]
pub struct Settings {
    pub seed: u64,
    model: Option<PathBuf>,
    pub config: Config,
}

impl Settings {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let path = cli
            .config
            .clone()
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        let config = match &path {
            Some(p) => Config::load(p).with_context(|| format!("reading config {}", p.display()))?,
            None => Config::default(),
        };
        let seed = match cli.seed {
            Some(s) => s,
            None => config.get_or("seed", DEFAULT_SEED)?,
        };
        let model = cli.model.clone().or_else(|| config.get("model").map(PathBuf::from));
        Ok(Settings { seed, model, config })
    }

    /// `flag`, else the config key, else `default`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.config.get_or(key, default)?),
        }
    }

    pub fn opt<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.config.get_parsed(key)?)
    }

    /// Where a trained model goes: `--out`, then `--model`, then `default`.
    pub fn output(&self, out: Option<&Path>, default: &str) -> PathBuf {
        out.map(Path::to_path_buf)
            .or_else(|| self.model.clone())
            .unwrap_or_else(|| PathBuf::from(default))
    }

    /// The model to load: `--model`, then `default` when it exists.
    pub fn model(&self, default: &str) -> Result<PathBuf> {
        if let Some(m) = &self.model {
            return Ok(m.clone());
        }
        let p = PathBuf::from(default);
        if p.exists() {
            Ok(p)
        } else {
            Err(UsageError(format!("no model given: pass --model (looked for ./{default})")).into())
        }
    }

    pub fn alerts_file(&self, flag: Option<&Path>) -> Option<PathBuf> {
        flag.map(Path::to_path_buf)
            .or_else(|| self.config.get("alerts.jsonl").map(PathBuf::from))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    fn settings(conf: &str, extra: &[&str]) -> Settings {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("aidr.conf");
        std::fs::write(&path, conf).unwrap();
        let mut argv = vec!["aidr", "--config", path.to_str().unwrap()];
        argv.extend_from_slice(extra);
        argv.extend_from_slice(&["report", "show", "x"]);
        Settings::from_cli(&Cli::try_parse_from(argv).unwrap()).unwrap()
    }

    #[test]
    fn flags_beat_config_beat_defaults() {
        let s = settings("seed = 9\nforest.n_estimators = 12\n", &[]);
        assert_eq!(s.seed, 9);
        assert_eq!(s.pick(None, "forest.n_estimators", 100usize).unwrap(), 12);
        assert_eq!(s.pick(Some(3), "forest.n_estimators", 100usize).unwrap(), 3);
        assert_eq!(s.pick(None, "forest.min_samples_split", 2usize).unwrap(), 2);
        assert_eq!(settings("seed = 9\n", &["--seed", "5"]).seed, 5);
        assert_eq!(settings("", &[]).seed, DEFAULT_SEED);
    }

    #[test]
    fn bad_config_values_are_errors() {
        let s = settings("forest.n_estimators = many\n", &[]);
        let err = s.pick(None, "forest.n_estimators", 100usize).unwrap_err();
        assert!(err.to_string().contains("forest.n_estimators"), "{err}");
    }

    #[test]
    fn output_and_model_paths() {
        let s = settings("", &["--model", "m.aidr"]);
        assert_eq!(s.output(Some(Path::new("o.aidr")), "d.aidr"), PathBuf::from("o.aidr"));
        assert_eq!(s.output(None, "d.aidr"), PathBuf::from("m.aidr"));
        assert_eq!(s.model("d.aidr").unwrap(), PathBuf::from("m.aidr"));

        let s = settings("", &[]);
        assert_eq!(s.output(None, "d.aidr"), PathBuf::from("d.aidr"));
        let err = s.model("surely-missing-model.aidr").unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
    }

    #[test]
    fn alerts_file_from_config() {
        let s = settings("[alerts]\njsonl = a.jsonl\n", &[]);
        assert_eq!(s.alerts_file(None), Some(PathBuf::from("a.jsonl")));
        assert_eq!(
            s.alerts_file(Some(Path::new("b.jsonl"))),
            Some(PathBuf::from("b.jsonl"))
        );
    }
}
