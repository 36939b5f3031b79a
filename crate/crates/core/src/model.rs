//! Records shared between stages and their JSONL encodings.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::store::write_atomic;
use crate::time::{format_ts, parse_ts};

/// `owner/name`, lower-cased so that identity comparison is case-insensitive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RepoSlug {
    owner: String,
    name: String,
}

impl RepoSlug {
    pub fn new(owner: &str, name: &str) -> Result<Self> {
        let owner = owner.trim().to_ascii_lowercase();
        let mut name = name.trim().to_ascii_lowercase();
        if let Some(stripped) = name.strip_suffix(".git") {
            name = stripped.to_string();
        }
        let valid = |s: &str| {
            !s.is_empty()
                && s.bytes()
                    .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'))
        };
        if !valid(&owner) || !valid(&name) || name == "." || name == ".." {
            return Err(Error::invalid(format!("invalid repository slug {owner:?}/{name:?}")));
        }
        Ok(Self { owner, name })
    }

    pub fn owner(&self) -> &str {
        &self.owner
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `<owner>__<name>`, used for per-repository file names.
    pub fn file_stem(&self) -> String {
        format!("{}__{}", self.owner, self.name)
    }
}

impl fmt::Display for RepoSlug {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.owner, self.name)
    }
}

impl FromStr for RepoSlug {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (owner, name) = s
            .split_once('/')
            .ok_or_else(|| Error::invalid(format!("expected owner/name, got {s:?}")))?;
        Self::new(owner, name)
    }
}

impl Serialize for RepoSlug {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RepoSlug {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HnPost {
    pub post_id: String,
    /// Posting instant; this is t0 for the repository it launches.
    #[serde(with = "crate::time::ts_format")]
    pub created_at: DateTime<Utc>,
    pub title: String,
    pub url: String,
    pub score: u64,
    pub num_comments: u64,
    pub is_show_hn: bool,
}

/// True when the trimmed title starts with "Show HN" in any letter case.
pub fn title_is_show_hn(title: &str) -> bool {
    title
        .trim_start()
        .get(..7)
        .is_some_and(|prefix| prefix.eq_ignore_ascii_case("show hn"))
}

/// Orders post ids numerically when both are numeric, lexically otherwise.
pub fn compare_post_ids(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaunchEvent {
    pub slug: RepoSlug,
    pub post: HnPost,
}

impl LaunchEvent {
    pub fn t0(&self) -> DateTime<Utc> {
        self.post.created_at
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoSnapshot {
    pub slug: RepoSlug,
    #[serde(with = "crate::time::ts_format")]
    pub created_at: DateTime<Utc>,
    pub license_id: Option<String>,
    /// README size in bytes; 0 when the repository has no README.
    pub readme_length: u64,
    pub topics: Vec<String>,
    pub owner_is_org: bool,
    /// Fetch-time star total. Post-launch quantity; never a pre-launch feature.
    pub stars_total: u64,
    #[serde(with = "crate::time::ts_format")]
    pub fetched_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StarEventLog {
    pub slug: RepoSlug,
    pub starred_at: Vec<DateTime<Utc>>,
    /// False when pagination was capped or access was refused.
    pub complete: bool,
    pub reason: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StarLogHeader {
    slug: RepoSlug,
    complete: bool,
    count: usize,
    reason: Option<String>,
}

/// File layout of the `data/` tree shared by every stage.
#[derive(Debug, Clone)]
pub struct DataLayout {
    pub root: PathBuf,
}

impl DataLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn hn_posts(&self) -> PathBuf {
        self.root.join("raw/hn_posts.jsonl")
    }
    pub fn pairs(&self) -> PathBuf {
        self.root.join("raw/pairs.jsonl")
    }
    pub fn repos(&self) -> PathBuf {
        self.root.join("raw/repos.jsonl")
    }
    pub fn stars_dir(&self) -> PathBuf {
        self.root.join("raw/stars")
    }
    pub fn star_log(&self, slug: &RepoSlug) -> PathBuf {
        self.stars_dir().join(format!("{}.jsonl", slug.file_stem()))
    }
    pub fn series(&self) -> PathBuf {
        self.root.join("aligned/series.jsonl")
    }
    pub fn exclusions(&self) -> PathBuf {
        self.root.join("aligned/exclusions.csv")
    }
    pub fn feature_rows(&self) -> PathBuf {
        self.root.join("features/rows.csv")
    }
    pub fn rejections(&self) -> PathBuf {
        self.root.join("features/rejections.csv")
    }
    pub fn matrix(&self, feature_set: &str, target: &str) -> PathBuf {
        self.root.join(format!("features/matrix_{feature_set}_{target}.csv"))
    }
    pub fn synth_manifest(&self) -> PathBuf {
        self.root.join("synth/ground_truth.json")
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).map_err(|e| Error::parse(path.display().to_string(), e))?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::parse(format!("{}:{}", path.display(), lineno + 1), e))?,
        );
    }
    Ok(out)
}

/// Header record carrying `complete`, then one quoted timestamp per line.
pub fn write_star_log(path: &Path, log: &StarEventLog) -> Result<()> {
    let header = StarLogHeader {
        slug: log.slug.clone(),
        complete: log.complete,
        count: log.starred_at.len(),
        reason: log.reason.clone(),
    };
    let mut buf = serde_json::to_vec(&header).expect("header serializes");
    buf.push(b'\n');
    for ts in &log.starred_at {
        writeln!(buf, "\"{}\"", format_ts(ts)).expect("write to vec");
    }
    write_atomic(path, &buf)
}

pub fn read_star_log(path: &Path) -> Result<StarEventLog> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: StarLogHeader = serde_json::from_str(
        lines
            .next()
            .ok_or_else(|| Error::parse(path.display().to_string(), "empty star log"))?,
    )
    .map_err(|e| Error::parse(path.display().to_string(), e))?;
    let starred_at = lines
        .map(|l| {
            let s: String = serde_json::from_str(l).map_err(|e| Error::parse(path.display().to_string(), e))?;
            parse_ts(&s)
        })
        .collect::<Result<Vec<_>>>()?;
    if starred_at.len() != header.count {
        return Err(Error::parse(
            path.display().to_string(),
            format!("header declares {} events, found {}", header.count, starred_at.len()),
        ));
    }
    Ok(StarEventLog {
        slug: header.slug,
        starred_at,
        complete: header.complete,
        reason: header.reason,
    })
}
