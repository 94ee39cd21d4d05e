use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::TemplateRole;
use crate::clock::{parse_timestamp, Timestamp};
use crate::intake::{DatasetMeta, DuaItem};
use crate::score::Tenths;
use crate::track::Track;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AdapterKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub agent_id: String,
    pub model_family: String,
    pub model_version: String,
    #[serde(default)]
    pub config: BTreeMap<String, String>,
}

/// Run configuration, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub adapter: AdapterKind,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    /// Dataset fixture CSV; the shipped set when absent.
    pub datasets: Option<PathBuf>,
    /// Score table replayed by the mock adapter; shipped table when absent.
    pub score_table: Option<PathBuf>,
    pub seed: u64,
    pub parallelism: usize,
    pub start_time: String,
    pub accept_threshold: Tenths,
    pub presentation_budget_s: f64,
    pub words_per_minute: u32,
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub approver: String,
    pub base_url: String,
    pub publish_reviews: bool,
    pub ledger_dir: Option<PathBuf>,
    pub publish_dir: Option<PathBuf>,
    pub avatar_id: String,
    pub resolution: String,
    pub agents: BTreeMap<TemplateRole, AgentSpec>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            adapter: AdapterKind::Mock,
            endpoint: None,
            timeout_ms: 120_000,
            datasets: None,
            score_table: None,
            seed: 2025,
            parallelism: 4,
            start_time: "2025-10-01T09:00:00Z".into(),
            accept_threshold: Tenths::whole(7),
            presentation_budget_s: 600.0,
            words_per_minute: crate::presentation::DEFAULT_WPM,
            max_attempts: 3,
            initial_backoff_ms: 500,
            approver: "program-chair".into(),
            base_url: "https://proceedings.example.org/hikma/".into(),
            publish_reviews: true,
            ledger_dir: None,
            publish_dir: None,
            avatar_id: "library:presenter-01".into(),
            resolution: "1920x1080".into(),
            agents: BTreeMap::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("config: {0}")]
    Invalid(String),
    #[error("dataset fixtures: {0}")]
    Datasets(String),
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let c: Config = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    /// Reads a config file; relative paths inside it resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut c = Config::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut c.datasets, &mut c.score_table, &mut c.ledger_dir, &mut c.publish_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.adapter == AdapterKind::Http && self.endpoint.is_none() {
            return bad("http adapter needs an endpoint".into());
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1".into());
        }
        if self.words_per_minute == 0 {
            return bad("words_per_minute must be positive".into());
        }
        if !(self.presentation_budget_s.is_finite() && self.presentation_budget_s > 0.0) {
            return bad("presentation_budget_s must be positive".into());
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be at least 1".into());
        }
        self.start()?;
        Ok(())
    }

    pub fn start(&self) -> Result<Timestamp, ConfigError> {
        parse_timestamp(&self.start_time).map_err(|e| ConfigError::Invalid(format!("start_time: {e}")))
    }
}

/// One dataset in a fixture set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetFixture {
    pub track: Track,
    pub url: String,
    pub meta: DatasetMeta,
    pub license: String,
    pub dua: Vec<DuaItem>,
}

#[derive(Deserialize)]
struct FixtureRow {
    track: String,
    url: String,
    title: String,
    description: String,
    variables: String,
    license: String,
    dua: String,
}

/// CSV columns `track,url,title,description,variables,license,dua`;
/// variables are `;`-separated, DUA items are `item=yes|no` separated by `;`.
pub fn parse_dataset_fixtures(text: &str) -> Result<Vec<DatasetFixture>, ConfigError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<FixtureRow>().enumerate() {
        let row = row.map_err(|e| ConfigError::Datasets(e.to_string()))?;
        let bad = |m: String| ConfigError::Datasets(format!("row {}: {m}", i + 1));
        let track: Track = row.track.parse().map_err(|e: crate::track::UnknownTrack| bad(e.to_string()))?;
        let mut dua = Vec::new();
        for item in row.dua.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let (name, v) = item.rsplit_once('=').ok_or_else(|| bad(format!("DUA item {item:?} lacks =yes|no")))?;
            let satisfied = match v.trim() {
                "yes" => true,
                "no" => false,
                other => return Err(bad(format!("DUA value {other:?}"))),
            };
            dua.push(DuaItem::new(name.trim(), satisfied));
        }
        out.push(DatasetFixture {
            track,
            url: row.url,
            meta: DatasetMeta {
                title: row.title,
                description: row.description,
                variables: row.variables.split(';').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect(),
            },
            license: row.license,
            dua,
        });
    }
    Ok(out)
}

pub fn shipped_datasets() -> Vec<DatasetFixture> {
    parse_dataset_fixtures(include_str!("../../fixtures/datasets.csv")).expect("shipped datasets parse")
}
