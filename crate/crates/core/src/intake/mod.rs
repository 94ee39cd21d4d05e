//! Dataset registration: license classification, DUA checklists, IP risk.

mod license;

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use license::{classify_license, LicenseClass, Permission, Permissions};

use crate::clock::Timestamp;
use crate::digest::ContentHash;
use crate::ledger::{Action, Actor, Ledger, LedgerError, NewEvent, Subject};
use crate::track::Track;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DatasetId(String);

impl DatasetId {
    /// Derived from the (track, url) pair, which registration keeps unique.
    pub fn mint(track: Track, url: &str) -> Self {
        let h = ContentHash::of(format!("{}\n{}", track.code(), url).as_bytes());
        DatasetId(format!("ds-{}", &h.as_str()[..12]))
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        match s.strip_prefix("ds-") {
            Some(hex) if hex.len() == 12 && hex.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) => {
                Ok(DatasetId(s.to_string()))
            }
            _ => Err(format!("bad dataset id {s:?}")),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for DatasetId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        DatasetId::parse(s)
    }
}

impl TryFrom<String> for DatasetId {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        DatasetId::parse(&s)
    }
}

impl From<DatasetId> for String {
    fn from(d: DatasetId) -> String {
        d.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuaItem {
    pub item: String,
    pub satisfied: bool,
}

impl DuaItem {
    pub fn new(item: impl Into<String>, satisfied: bool) -> Self {
        DuaItem { item: item.into(), satisfied }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub dataset_id: DatasetId,
    pub url: String,
    pub track: Track,
    pub ingestion_date: NaiveDate,
    pub license_id: String,
    pub permissions: Permissions,
    pub dua_checklist: Vec<DuaItem>,
    pub ip_risk: bool,
    pub notes: String,
}

impl DatasetRecord {
    /// The pipeline gate predicate: papers on this dataset may leave intake.
    pub fn cleared_for_use(&self) -> bool {
        !self.ip_risk
    }

    pub fn registry_row(&self) -> RegistryRow {
        RegistryRow {
            dataset_id: self.dataset_id.clone(),
            url: self.url.clone(),
            track: self.track.code().to_string(),
            ingestion_date: self.ingestion_date,
            license_id: self.license_id.clone(),
            redistribution: self.permissions.redistribution,
            commercial_use: self.permissions.commercial_use,
            modification: self.permissions.modification,
            ip_risk: self.ip_risk,
        }
    }
}

/// Intended use is redistribution with modification for non-commercial
/// academic work, so commercial use may be denied but must be known.
pub fn evaluate_ip_risk(permissions: &Permissions, dua: &[DuaItem]) -> bool {
    permissions.redistribution != Permission::Yes
        || permissions.modification != Permission::Yes
        || permissions.commercial_use == Permission::Unknown
        || dua.iter().any(|d| !d.satisfied)
}

#[derive(Debug, thiserror::Error)]
pub enum IntakeError {
    #[error("malformed url {url:?}: {reason}")]
    MalformedUrl { url: String, reason: String },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("registry csv: {0}")]
    Csv(#[from] csv::Error),
}

fn check_url(raw: &str) -> Result<(), IntakeError> {
    let bad = |reason: &str| IntakeError::MalformedUrl { url: raw.to_string(), reason: reason.to_string() };
    if raw.trim().is_empty() {
        return Err(bad("empty"));
    }
    let parsed = url::Url::parse(raw).map_err(|e| bad(&e.to_string()))?;
    if !matches!(parsed.scheme(), "http" | "https") {
        return Err(bad("scheme must be http or https"));
    }
    if parsed.host_str().is_none_or(str::is_empty) {
        return Err(bad("missing host"));
    }
    Ok(())
}

/// Builds a dataset record without touching any ledger.
pub fn build_record(
    url: &str,
    track: Track,
    license_text: &str,
    dua_items: Vec<DuaItem>,
    ingestion_date: NaiveDate,
) -> Result<DatasetRecord, IntakeError> {
    check_url(url)?;
    let class = classify_license(license_text);
    let ip_risk = evaluate_ip_risk(&class.permissions, &dua_items);
    Ok(DatasetRecord {
        dataset_id: DatasetId::mint(track, url),
        url: url.to_string(),
        track,
        ingestion_date,
        license_id: class.license_id,
        permissions: class.permissions,
        dua_checklist: dua_items,
        ip_risk,
        notes: class.basis,
    })
}

pub fn register_dataset(
    ledger: &Ledger,
    url: &str,
    track: Track,
    license_text: &str,
    dua_items: Vec<DuaItem>,
    at: Timestamp,
    actor: Actor,
) -> Result<DatasetRecord, IntakeError> {
    let record = build_record(url, track, license_text, dua_items, at.date_naive())?;
    let ev = NewEvent::new(
        at,
        Subject::Dataset(record.dataset_id.clone()),
        Action::RegisterDataset { record: Box::new(record.clone()) },
        actor,
    );
    ledger.append(ev)?;
    Ok(record)
}

/// Descriptive metadata handed to the generation agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub title: String,
    pub description: String,
    pub variables: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryRow {
    pub dataset_id: DatasetId,
    pub url: String,
    pub track: String,
    pub ingestion_date: NaiveDate,
    pub license_id: String,
    pub redistribution: Permission,
    pub commercial_use: Permission,
    pub modification: Permission,
    pub ip_risk: bool,
}

pub fn export_registry<'a>(records: impl IntoIterator<Item = &'a DatasetRecord>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for r in records {
        w.serialize(r.registry_row()).expect("writing to memory");
    }
    let bytes = w.into_inner().expect("flush to memory");
    if bytes.is_empty() {
        return "dataset_id,url,track,ingestion_date,license_id,redistribution,commercial_use,modification,ip_risk\n"
            .to_string();
    }
    String::from_utf8(bytes).expect("utf-8")
}

pub fn import_registry(text: &str) -> Result<Vec<RegistryRow>, IntakeError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
