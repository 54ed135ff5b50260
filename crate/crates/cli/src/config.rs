//! Run configuration: command-line flags layered over an optional TOML file
//! whose keys are the flag names.

use std::path::{Path, PathBuf};

use pseudotex::observer::ObserverModel;
use pseudotex::simulate::{SimConfig, StudySelector};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or configuration values. Exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Missing or unreadable inputs, failed writes. Exit code 3.
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl From<pseudotex::Error> for CliError {
    fn from(e: pseudotex::Error) -> Self {
        match e {
            pseudotex::Error::Config(_) | pseudotex::Error::Domain(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

/// Keys accepted in a `--config` file. `data-dir` may also be spelled
/// `data_dir`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub study: Option<StudyKey>,
    pub participants: Option<usize>,
    pub seed: Option<u64>,
    pub observer: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub port: Option<u16>,
    pub host: Option<String>,
    #[serde(alias = "data_dir")]
    pub data_dir: Option<PathBuf>,
}

/// `study = 1` and `study = "comparison"` are both fine.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum StudyKey {
    Number(u64),
    Name(String),
}

impl StudyKey {
    fn into_string(self) -> String {
        match self {
            StudyKey::Number(n) => n.to_string(),
            StudyKey::Name(s) => s,
        }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Relative paths in the file are resolved against the file's directory.
    pub fn rebase(mut self, base: &Path) -> Self {
        let dir = base.parent().unwrap_or(Path::new(""));
        for p in [&mut self.observer, &mut self.input, &mut self.out, &mut self.data_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        self
    }
}

pub fn parse_study(s: &str) -> Result<StudySelector, CliError> {
    s.parse().map_err(|e: pseudotex::Error| CliError::Usage(e.to_string()))
}

fn load_observer(path: Option<&Path>) -> Result<ObserverModel, CliError> {
    let Some(path) = path else {
        return Ok(ObserverModel::default());
    };
    if !path.exists() {
        return Err(CliError::Data(format!("observer config not found: {}", path.display())));
    }
    ObserverModel::load(path).map_err(|e| match e {
        pseudotex::Error::Io { .. } => CliError::Data(e.to_string()),
        other => CliError::Usage(format!("{}: {other}", path.display())),
    })
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing required option --{flag}")))
}

#[derive(Debug, Clone)]
pub struct SimulateRun {
    pub sim: SimConfig,
    pub out: PathBuf,
}

impl SimulateRun {
    pub fn resolve(
        study: Option<String>,
        participants: Option<usize>,
        seed: Option<u64>,
        observer: Option<PathBuf>,
        out: Option<PathBuf>,
        file: FileConfig,
    ) -> Result<Self, CliError> {
        let study = parse_study(&required(study.or(file.study.map(StudyKey::into_string)), "study")?)?;
        let participants = participants.or(file.participants).unwrap_or(10);
        let seed = seed.or(file.seed).unwrap_or(0);
        let mut sim = SimConfig::new(study, participants, seed);
        sim.observer = load_observer(observer.or(file.observer).as_deref())?;
        sim.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let out = out.or(file.out).unwrap_or_else(|| PathBuf::from("out"));
        Ok(Self { sim, out })
    }
}

#[derive(Debug, Clone)]
pub struct AnalyzeRun {
    pub input: PathBuf,
    pub out: PathBuf,
}

impl AnalyzeRun {
    pub fn resolve(input: Option<PathBuf>, out: Option<PathBuf>, file: FileConfig) -> Result<Self, CliError> {
        let out = out.or(file.out).unwrap_or_else(|| PathBuf::from("out"));
        // Default to the summary a simulate run leaves in the same directory.
        let mut input = input.or(file.input).unwrap_or_else(|| out.clone());
        if input.is_dir() {
            input = input.join("summary.csv");
        }
        Ok(Self { input, out })
    }
}

#[derive(Debug, Clone)]
pub struct ServeRun {
    pub host: String,
    pub port: u16,
    pub seed: u64,
    pub data_dir: PathBuf,
}

impl ServeRun {
    pub fn resolve(
        host: Option<String>,
        port: Option<u16>,
        seed: Option<u64>,
        data_dir: Option<PathBuf>,
        file: FileConfig,
    ) -> Result<Self, CliError> {
        Ok(Self {
            host: host.or(file.host).unwrap_or_else(|| "127.0.0.1".into()),
            port: required(port.or(file.port), "port")?,
            seed: seed.or(file.seed).unwrap_or(0),
            data_dir: data_dir.or(file.data_dir).unwrap_or_else(|| PathBuf::from("sessions")),
        })
    }
}
