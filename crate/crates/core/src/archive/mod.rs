//! Release manifest, publication, post-release audit, proceedings and the
//! podcast feed.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clock::{format_timestamp, parse_timestamp, Timestamp};
use crate::digest::{ContentHash, HASH_ALGORITHM};
use crate::latex::Document;
use crate::ledger::{Action, Actor, ArtifactRole, Ledger, LedgerError, NewEvent, PaperRecord, Subject};
use crate::stage::Stage;
use crate::track::{PaperId, Track};

pub const MANIFEST_NAME: &str = "manifest";
pub const PODCAST_NAME: &str = "podcast_feed";
pub const PROCEEDINGS_NAME: &str = "proceedings";
/// Pseudo paper id for release-level documents in the manifest.
pub const RELEASE_SUBJECT: &str = "release";

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("{paper} is at {stage}; release needs CameraReady or later")]
    NotEligible { paper: String, stage: Stage },
    #[error("{0} has no camera-ready artifact")]
    MissingCameraReady(String),
    #[error("object {0} is not in the artifact store")]
    MissingObject(ContentHash),
    #[error("{0} has no locked fictional author set")]
    MissingAuthors(String),
    #[error("{0} is not archived")]
    NotArchived(String),
    #[error("cannot read published directory {path}: {source}")]
    UnreadableDir { path: PathBuf, source: std::io::Error },
    #[error("second episode for track {0}")]
    DuplicateEpisode(Track),
    #[error("invalid episode: {0}")]
    BadEpisode(String),
    #[error("malformed manifest: {0}")]
    Format(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleasePolicy {
    pub base_url: String,
    /// Whether reviews and response letters are published with the papers.
    pub publish_reviews: bool,
}

impl Default for ReleasePolicy {
    fn default() -> Self {
        ReleasePolicy { base_url: "https://proceedings.example.org/hikma/".into(), publish_reviews: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub paper_id: String,
    pub role: String,
    pub content_hash: ContentHash,
    pub byte_size: u64,
    pub public_url: String,
}

impl ManifestEntry {
    /// Location relative to the published root.
    pub fn path(&self) -> String {
        if self.paper_id == RELEASE_SUBJECT {
            return format!("release/{}.json", self.role);
        }
        let ext = self.role.parse::<ArtifactRole>().map_or("bin", |r| r.extension());
        format!("papers/{}/{}.{ext}", self.paper_id, self.role)
    }

    fn line(&self) -> String {
        format!("{}\t{}\t{}\t{}\t{}\n", self.paper_id, self.role, self.content_hash, self.byte_size, self.public_url)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleaseManifest {
    pub hash_algorithm: String,
    pub created_at: Timestamp,
    pub entries: Vec<ManifestEntry>,
    pub manifest_hash: ContentHash,
}

pub fn canonical_entries(entries: &[ManifestEntry]) -> String {
    entries.iter().map(ManifestEntry::line).collect()
}

impl ReleaseManifest {
    pub fn new(mut entries: Vec<ManifestEntry>, created_at: Timestamp) -> Self {
        entries.sort_by(|a, b| (&a.paper_id, &a.role).cmp(&(&b.paper_id, &b.role)));
        let manifest_hash = ContentHash::of(canonical_entries(&entries).as_bytes());
        ReleaseManifest { hash_algorithm: HASH_ALGORITHM.into(), created_at, entries, manifest_hash }
    }

    /// Two header lines, then one canonical line per entry.
    pub fn render(&self) -> String {
        format!(
            "algo: {}\ncreated: {}\n{}",
            self.hash_algorithm,
            format_timestamp(&self.created_at),
            canonical_entries(&self.entries)
        )
    }

    pub fn parse(text: &str) -> Result<Self, ArchiveError> {
        let bad = |m: &str| ArchiveError::Format(m.to_string());
        let mut lines = text.split_inclusive('\n');
        let algo = lines
            .next()
            .and_then(|l| l.trim_end().strip_prefix("algo: "))
            .ok_or_else(|| bad("missing algo header"))?;
        if algo != HASH_ALGORITHM {
            return Err(bad("unsupported hash algorithm"));
        }
        let created = lines
            .next()
            .and_then(|l| l.trim_end().strip_prefix("created: "))
            .ok_or_else(|| bad("missing created header"))?;
        let created_at = parse_timestamp(created).map_err(|_| bad("bad created timestamp"))?;
        let mut entries = Vec::new();
        for l in lines {
            let l = l.strip_suffix('\n').ok_or_else(|| bad("unterminated line"))?;
            let f: Vec<&str> = l.split('\t').collect();
            let [pid, role, hash, size, url] = f[..] else {
                return Err(bad("entry needs five fields"));
            };
            entries.push(ManifestEntry {
                paper_id: pid.into(),
                role: role.into(),
                content_hash: ContentHash::parse(hash).map_err(|_| bad("bad hash"))?,
                byte_size: size.parse().map_err(|_| bad("bad size"))?,
                public_url: url.into(),
            });
        }
        let m = ReleaseManifest::new(entries.clone(), created_at);
        if m.entries != entries {
            return Err(bad("entries out of order"));
        }
        Ok(m)
    }

    pub fn papers(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.paper_id.as_str()).filter(|p| *p != RELEASE_SUBJECT).collect()
    }
}

fn published_roles(rec: &PaperRecord, policy: &ReleasePolicy) -> Vec<ArtifactRole> {
    rec.artifact_refs
        .keys()
        .copied()
        .filter(|r| policy.publish_reviews || !r.is_review_material())
        .collect()
}

/// Manifest over every published role of `papers`, plus release documents.
pub fn build_manifest(
    ledger: &Ledger,
    papers: &[PaperId],
    extras: &[(&str, ContentHash)],
    policy: &ReleasePolicy,
    created_at: Timestamp,
) -> Result<ReleaseManifest, ArchiveError> {
    let snap = ledger.snapshot();
    let mut entries = Vec::new();
    let mut push = |paper_id: &str, role: &str, hash: &ContentHash, size: u64| -> Result<(), ArchiveError> {
        if !ledger.has_object(hash)? {
            return Err(ArchiveError::MissingObject(hash.clone()));
        }
        let mut e = ManifestEntry {
            paper_id: paper_id.into(),
            role: role.into(),
            content_hash: hash.clone(),
            byte_size: size,
            public_url: String::new(),
        };
        e.public_url = format!("{}{}", policy.base_url, e.path());
        entries.push(e);
        Ok(())
    };
    for id in papers {
        let rec = snap.paper(id).ok_or_else(|| LedgerError::UnknownPaper(id.to_string()))?;
        if rec.stage.order() < Stage::CameraReady.order() || rec.closed.is_some() {
            return Err(ArchiveError::NotEligible { paper: id.to_string(), stage: rec.stage });
        }
        if rec.artifact(ArtifactRole::CameraReady).is_none() {
            return Err(ArchiveError::MissingCameraReady(id.to_string()));
        }
        for role in published_roles(rec, policy) {
            let a = rec.artifact(role).expect("listed from the map");
            push(id.as_str(), role.as_str(), &a.content_hash, a.byte_size)?;
        }
    }
    for (name, hash) in extras {
        let size = ledger.get_artifact(hash)?.len() as u64;
        push(RELEASE_SUBJECT, name, hash, size)?;
    }
    Ok(ReleaseManifest::new(entries, created_at))
}

/// Stores the manifest and ties each listed paper to it.
pub fn record_manifest(ledger: &Ledger, manifest: &ReleaseManifest, at: Timestamp) -> Result<ContentHash, ArchiveError> {
    let text = manifest.render();
    let file_hash = ledger.put_blob(text.as_bytes())?;
    ledger.append(
        NewEvent::new(
            at,
            Subject::Release,
            Action::ReleaseArtifact { name: MANIFEST_NAME.into(), byte_size: text.len() as u64 },
            Actor::System,
        )
        .with_hashes(vec![file_hash.clone()]),
    )?;
    for p in manifest.papers() {
        let pid = PaperId::parse(p).map_err(|e| ArchiveError::Format(e.to_string()))?;
        ledger.append(NewEvent::for_paper(
            at,
            &pid,
            Action::ManifestEntry { manifest_hash: manifest.manifest_hash.clone() },
            Actor::System,
        ))?;
    }
    Ok(file_hash)
}

/// Stores a release document (feed, proceedings) and names it in the ledger.
pub fn record_release_document(ledger: &Ledger, name: &str, bytes: &[u8], at: Timestamp) -> Result<ContentHash, ArchiveError> {
    let hash = ledger.put_blob(bytes)?;
    ledger.append(
        NewEvent::new(
            at,
            Subject::Release,
            Action::ReleaseArtifact { name: name.into(), byte_size: bytes.len() as u64 },
            Actor::System,
        )
        .with_hashes(vec![hash.clone()]),
    )?;
    Ok(hash)
}

/// The most recently recorded manifest, if any.
pub fn latest_manifest(ledger: &Ledger) -> Result<Option<ReleaseManifest>, ArchiveError> {
    let Some(hash) = ledger.snapshot().release.get(MANIFEST_NAME).cloned() else {
        return Ok(None);
    };
    let bytes = ledger.get_artifact(&hash)?;
    let text = String::from_utf8(bytes).map_err(|_| ArchiveError::Format("manifest is not UTF-8".into()))?;
    ReleaseManifest::parse(&text).map(Some)
}

/// Copies every manifest entry into `dir` using the published layout, with
/// the manifest itself at the root.
pub fn publish(ledger: &Ledger, manifest: &ReleaseManifest, dir: &Path) -> Result<(), ArchiveError> {
    for e in &manifest.entries {
        let target = dir.join(e.path());
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(target, ledger.get_artifact(&e.content_hash)?)?;
    }
    fs::write(dir.join("manifest.txt"), manifest.render())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub paper_id: String,
    pub role: String,
    pub expected_hash: ContentHash,
    /// `None` when the published file is absent.
    pub actual_hash: Option<ContentHash>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub manifest_hash: ContentHash,
    pub checked: usize,
    pub matched: usize,
    pub discrepancies: Vec<Discrepancy>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.discrepancies.is_empty()
    }

    pub fn passed_for(&self, paper: &str) -> bool {
        !self.discrepancies.iter().any(|d| d.paper_id == paper)
    }
}

/// Re-hashes each published file and compares it with the manifest.
pub fn audit(manifest: &ReleaseManifest, published_dir: &Path) -> Result<AuditReport, ArchiveError> {
    fs::read_dir(published_dir).map_err(|source| ArchiveError::UnreadableDir { path: published_dir.to_path_buf(), source })?;
    let discrepancies: Vec<Discrepancy> = manifest
        .entries
        .par_iter()
        .filter_map(|e| {
            let actual = fs::read(published_dir.join(e.path())).ok().map(|b| ContentHash::of(&b));
            (actual.as_ref() != Some(&e.content_hash)).then(|| Discrepancy {
                paper_id: e.paper_id.clone(),
                role: e.role.clone(),
                expected_hash: e.content_hash.clone(),
                actual_hash: actual,
            })
        })
        .collect();
    let checked = manifest.entries.len();
    Ok(AuditReport { manifest_hash: manifest.manifest_hash.clone(), checked, matched: checked - discrepancies.len(), discrepancies })
}

pub fn record_audit(ledger: &Ledger, manifest: &ReleaseManifest, report: &AuditReport, at: Timestamp) -> Result<(), ArchiveError> {
    for p in manifest.papers() {
        let pid = PaperId::parse(p).map_err(|e| ArchiveError::Format(e.to_string()))?;
        ledger.append(NewEvent::for_paper(
            at,
            &pid,
            Action::Audit { passed: report.passed_for(p), manifest_hash: report.manifest_hash.clone() },
            Actor::System,
        ))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProceedingsEntry {
    pub paper_id: PaperId,
    pub title: String,
    pub authors: Vec<String>,
    pub institution: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub links: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackGroup {
    pub track: String,
    pub code: String,
    pub papers: Vec<ProceedingsEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proceedings {
    pub tracks: Vec<TrackGroup>,
}

impl Proceedings {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("proceedings serialize")
    }
}

fn abstract_of(ledger: &Ledger, rec: &PaperRecord) -> Result<String, ArchiveError> {
    let cr = rec.artifact(ArtifactRole::CameraReady).ok_or_else(|| ArchiveError::MissingCameraReady(rec.paper_id.to_string()))?;
    let src = String::from_utf8_lossy(&ledger.get_artifact(&cr.content_hash)?).into_owned();
    let doc = Document::parse(&src).map_err(|e| ArchiveError::Format(format!("{}: {e}", rec.paper_id)))?;
    Ok(doc
        .abstract_text
        .map(|r| src[r].split_whitespace().collect::<Vec<_>>().join(" "))
        .unwrap_or_default())
}

/// Archived papers grouped under all five tracks, sorted by paper id.
pub fn emit_proceedings(ledger: &Ledger, papers: &[PaperId], policy: &ReleasePolicy) -> Result<Proceedings, ArchiveError> {
    let snap = ledger.snapshot();
    let mut groups: BTreeMap<Track, Vec<ProceedingsEntry>> = Track::ALL.iter().map(|t| (*t, Vec::new())).collect();
    for id in papers {
        let rec = snap.paper(id).ok_or_else(|| LedgerError::UnknownPaper(id.to_string()))?;
        if rec.stage != Stage::Archived {
            return Err(ArchiveError::NotArchived(id.to_string()));
        }
        let set = rec.authors.as_ref().filter(|s| s.locked).ok_or_else(|| ArchiveError::MissingAuthors(id.to_string()))?;
        let links = [("manuscript", ArtifactRole::CameraReady), ("slides", ArtifactRole::Slides), ("video", ArtifactRole::VideoMeta)]
            .into_iter()
            .filter(|(_, r)| rec.artifact(*r).is_some())
            .map(|(k, r)| (k.to_string(), format!("{}papers/{id}/{}.{}", policy.base_url, r.as_str(), r.extension())))
            .collect();
        groups.get_mut(&rec.track).expect("all tracks present").push(ProceedingsEntry {
            paper_id: id.clone(),
            title: rec.title.clone().unwrap_or_default(),
            authors: set.names().into_iter().map(String::from).collect(),
            institution: set.institution.clone(),
            abstract_text: abstract_of(ledger, rec)?,
            links,
        });
    }
    let tracks = groups
        .into_iter()
        .map(|(t, mut papers)| {
            papers.sort_by(|a, b| a.paper_id.cmp(&b.paper_id));
            TrackGroup { track: t.display_name().into(), code: t.code().into(), papers }
        })
        .collect();
    Ok(Proceedings { tracks })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub track: Track,
    pub title: String,
    pub description: String,
    pub duration_s: f64,
    pub transcript_ref: ContentHash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PodcastFeed {
    pub title: String,
    pub episodes: Vec<Episode>,
}

impl PodcastFeed {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("feed serializes")
    }
}

/// At most one episode per track; ordered by track.
pub fn emit_podcast_feed(title: &str, mut episodes: Vec<Episode>) -> Result<PodcastFeed, ArchiveError> {
    let mut seen = BTreeSet::new();
    for e in &episodes {
        if !seen.insert(e.track) {
            return Err(ArchiveError::DuplicateEpisode(e.track));
        }
        if !(e.duration_s.is_finite() && e.duration_s >= 0.0) {
            return Err(ArchiveError::BadEpisode(format!("{}: duration {}", e.track.code(), e.duration_s)));
        }
        if e.title.trim().is_empty() {
            return Err(ArchiveError::BadEpisode(format!("{}: empty title", e.track.code())));
        }
    }
    episodes.sort_by_key(|e| e.track);
    Ok(PodcastFeed { title: title.into(), episodes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t0() -> Timestamp {
        parse_timestamp("2025-10-01T00:00:00Z").unwrap()
    }

    fn entry(p: &str, role: &str, bytes: &[u8]) -> ManifestEntry {
        let mut e = ManifestEntry {
            paper_id: p.into(),
            role: role.into(),
            content_hash: ContentHash::of(bytes),
            byte_size: bytes.len() as u64,
            public_url: String::new(),
        };
        e.public_url = format!("https://x/{}", e.path());
        e
    }

    #[test]
    fn empty_manifest_hash_is_hash_of_nothing() {
        let m = ReleaseManifest::new(vec![], t0());
        assert_eq!(m.manifest_hash, ContentHash::of(b""));
        assert_eq!(m.render(), "algo: sha256\ncreated: 2025-10-01T00:00:00.000Z\n");
    }

    #[test]
    fn entries_sorted_and_created_at_excluded() {
        let es = vec![entry("PT1-SOCP-02", "slides", b"b"), entry("PT1-SOCP-01", "slides", b"a"), entry("PT1-SOCP-01", "draft", b"c")];
        let a = ReleaseManifest::new(es.clone(), t0());
        let b = ReleaseManifest::new(es, t0() + chrono::Duration::days(3));
        assert_eq!(a.manifest_hash, b.manifest_hash);
        let order: Vec<_> = a.entries.iter().map(|e| (e.paper_id.as_str(), e.role.as_str())).collect();
        assert_eq!(order, vec![("PT1-SOCP-01", "draft"), ("PT1-SOCP-01", "slides"), ("PT1-SOCP-02", "slides")]);
        assert_eq!(ReleaseManifest::parse(&a.render()).unwrap(), a);
    }

    #[test]
    fn parse_rejects_edits() {
        let m = ReleaseManifest::new(vec![entry("PT1-SOCP-01", "draft", b"c")], t0());
        assert!(ReleaseManifest::parse(&m.render().replace("\tdraft\t", "\tdraft\tx\t")).is_err());
        assert!(ReleaseManifest::parse(&m.render().replace("algo: sha256", "algo: md5")).is_err());
    }

    #[test]
    fn audit_flags_flip_and_deletion() {
        let dir = tempfile::tempdir().unwrap();
        let es = vec![entry("PT1-SOCP-01", "draft", b"draft"), entry("PT1-SOCP-01", "slides", b"{}")];
        let m = ReleaseManifest::new(es, t0());
        for (e, b) in m.entries.iter().zip([b"draft".as_slice(), b"{}".as_slice()]) {
            let p = dir.path().join(e.path());
            fs::create_dir_all(p.parent().unwrap()).unwrap();
            fs::write(p, b).unwrap();
        }
        let r = audit(&m, dir.path()).unwrap();
        assert_eq!((r.checked, r.matched), (2, 2));
        fs::write(dir.path().join("papers/PT1-SOCP-01/draft.tex"), b"drafT").unwrap();
        fs::remove_file(dir.path().join("papers/PT1-SOCP-01/slides.json")).unwrap();
        let r = audit(&m, dir.path()).unwrap();
        assert_eq!(r.matched + r.discrepancies.len(), r.checked);
        assert_eq!(r.discrepancies.len(), 2);
        assert!(r.discrepancies.iter().any(|d| d.role == "slides" && d.actual_hash.is_none()));
        assert!(audit(&m, &dir.path().join("nope")).is_err());
    }

    #[test]
    fn feed_validation() {
        let ep = |t, d| Episode { track: t, title: "Ep".into(), description: String::new(), duration_s: d, transcript_ref: ContentHash::of(b"t") };
        let feed = emit_podcast_feed("F", Track::ALL.iter().rev().map(|t| ep(*t, 60.0)).collect()).unwrap();
        assert_eq!(feed.episodes[0].track, Track::SocialProgress);
        assert!(matches!(
            emit_podcast_feed("F", vec![ep(Track::Sustainability, 1.0), ep(Track::Sustainability, 2.0)]),
            Err(ArchiveError::DuplicateEpisode(_))
        ));
        assert!(matches!(emit_podcast_feed("F", vec![ep(Track::Sustainability, -1.0)]), Err(ArchiveError::BadEpisode(_))));
    }
}
