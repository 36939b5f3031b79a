//! GitHub REST ingestion: repository metadata and stargazer timestamps.

use chrono::{DateTime, Utc};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::http::{ApiClient, HttpRequest};
use crate::model::{RepoSlug, RepoSnapshot, StarEventLog};
use crate::store::Ttl;
use crate::time::parse_ts;

pub const GITHUB_API: &str = "https://api.github.com";
pub const STAR_PAGE_SIZE: usize = 100;
pub const DEFAULT_MAX_PAGES: u32 = 400;
pub const TOKEN_ENV: &str = "GITHUB_TOKEN";

const JSON_MEDIA: &str = "application/vnd.github+json";
const RAW_MEDIA: &str = "application/vnd.github.raw";
const STAR_MEDIA: &str = "application/vnd.github.star+json";

#[derive(Debug, Deserialize)]
struct RepoPayload {
    created_at: String,
    #[serde(default)]
    license: Option<LicensePayload>,
    #[serde(default)]
    topics: Vec<String>,
    owner: OwnerPayload,
    #[serde(default)]
    stargazers_count: u64,
}

#[derive(Debug, Deserialize)]
struct LicensePayload {
    spdx_id: Option<String>,
    key: Option<String>,
}

#[derive(Debug, Deserialize)]
struct OwnerPayload {
    #[serde(rename = "type")]
    kind: String,
}

#[derive(Debug, Deserialize)]
struct StarPayload {
    starred_at: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RepoFetch {
    Found(RepoSnapshot),
    /// The repository endpoint answered 404 (deleted, renamed away, private).
    Missing,
}

pub fn repo_request(base_url: &str, slug: &RepoSlug) -> HttpRequest {
    HttpRequest::get(format!("{base_url}/repos/{}/{}", slug.owner(), slug.name())).header("Accept", JSON_MEDIA)
}

pub fn readme_request(base_url: &str, slug: &RepoSlug) -> HttpRequest {
    HttpRequest::get(format!("{base_url}/repos/{}/{}/readme", slug.owner(), slug.name())).header("Accept", RAW_MEDIA)
}

pub fn stargazers_request(base_url: &str, slug: &RepoSlug, page: u32) -> HttpRequest {
    HttpRequest::get(format!("{base_url}/repos/{}/{}/stargazers", slug.owner(), slug.name()))
        .param("per_page", STAR_PAGE_SIZE)
        .param("page", page)
        .header("Accept", STAR_MEDIA)
}

pub struct GitHubApi<'a> {
    client: &'a ApiClient,
    base_url: String,
}

impl<'a> GitHubApi<'a> {
    pub fn new(client: &'a ApiClient) -> Self {
        Self::with_base_url(client, GITHUB_API)
    }

    pub fn with_base_url(client: &'a ApiClient, base_url: &str) -> Self {
        Self {
            client,
            base_url: base_url.trim_end_matches('/').to_string(),
        }
    }

    pub fn repo_request(&self, slug: &RepoSlug) -> HttpRequest {
        repo_request(&self.base_url, slug)
    }

    pub fn readme_request(&self, slug: &RepoSlug) -> HttpRequest {
        readme_request(&self.base_url, slug)
    }

    pub fn stargazers_request(&self, slug: &RepoSlug, page: u32) -> HttpRequest {
        stargazers_request(&self.base_url, slug, page)
    }

    /// Repository endpoint (topics included) plus the raw README.
    pub fn fetch_repo_metadata(&self, slug: &RepoSlug) -> Result<RepoFetch> {
        let repo = self.client.request(&self.repo_request(slug), Ttl::METADATA)?;
        match repo.status {
            404 | 410 | 451 => return Ok(RepoFetch::Missing),
            s if !(200..300).contains(&s) => {
                return Err(Error::Transport(format!(
                    "{slug}: repository endpoint returned HTTP {s}"
                )))
            }
            _ => {}
        }
        let payload: RepoPayload =
            serde_json::from_slice(&repo.body).map_err(|e| Error::parse(format!("repository {slug}"), e))?;

        let readme = self.client.request(&self.readme_request(slug), Ttl::METADATA)?;
        let readme_length = match readme.status {
            200..=299 => readme.body.len() as u64,
            404 => 0,
            s => return Err(Error::Transport(format!("{slug}: readme endpoint returned HTTP {s}"))),
        };

        let license_id = payload
            .license
            .and_then(|l| l.spdx_id.or(l.key))
            .filter(|id| !id.is_empty());
        Ok(RepoFetch::Found(RepoSnapshot {
            slug: slug.clone(),
            created_at: parse_ts(&payload.created_at)?,
            license_id,
            readme_length,
            topics: payload.topics,
            owner_is_org: payload.owner.kind.eq_ignore_ascii_case("organization"),
            stars_total: payload.stargazers_count,
            fetched_at: repo.fetched_at,
        }))
    }

    /// Walks the stargazer listing page by page. Access restrictions, page
    /// caps and persistent failures yield a partial log with
    /// `complete == false` and a reason; they never raise.
    pub fn fetch_star_events(
        &self,
        slug: &RepoSlug,
        max_pages: u32,
        stars_total: Option<u64>,
        warnings: &mut Vec<String>,
    ) -> StarEventLog {
        let mut starred_at: Vec<DateTime<Utc>> = Vec::new();
        let mut complete = false;
        let mut reason = None;
        let max_pages = max_pages.max(1);
        for page in 1..=max_pages {
            let resp = match self
                .client
                .request(&self.stargazers_request(slug, page), Ttl::STAR_PAGES)
            {
                Ok(resp) => resp,
                Err(e) => {
                    reason = Some(format!("stargazer page {page} failed: {e}"));
                    break;
                }
            };
            if matches!(resp.status, 401 | 403 | 404 | 410 | 451) {
                reason = Some(format!("stargazer listing restricted (HTTP {})", resp.status));
                break;
            }
            if !resp.is_success() {
                reason = Some(format!("stargazer page {page} returned HTTP {}", resp.status));
                break;
            }
            let items: Vec<StarPayload> = match serde_json::from_slice(&resp.body) {
                Ok(items) => items,
                Err(e) => {
                    reason = Some(format!("stargazer page {page} unparseable: {e}"));
                    break;
                }
            };
            let n = items.len();
            for item in items {
                match parse_ts(&item.starred_at) {
                    Ok(ts) => starred_at.push(ts),
                    Err(e) => {
                        reason = Some(format!("bad starred_at on page {page}: {e}"));
                    }
                }
            }
            if reason.is_some() {
                break;
            }
            if n < STAR_PAGE_SIZE {
                complete = true;
                break;
            }
            if page == max_pages {
                if stars_total == Some(starred_at.len() as u64) {
                    complete = true;
                } else {
                    reason = Some(format!("pagination cap of {max_pages} pages reached"));
                }
            }
        }
        starred_at.sort();
        if let Some(r) = &reason {
            warnings.push(format!("{slug}: {r}; keeping metadata only"));
        }
        StarEventLog {
            slug: slug.clone(),
            starred_at,
            complete,
            reason,
        }
    }
}
