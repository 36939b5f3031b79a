//! Hacker News ingestion through the Algolia search API.

use std::collections::BTreeMap;

use chrono::{DateTime, TimeZone, Utc};
use serde::Deserialize;
use url::Url;

use crate::error::{Error, Result};
use crate::http::{ApiClient, HttpRequest};
use crate::model::{compare_post_ids, title_is_show_hn, HnPost, LaunchEvent, RepoSlug};
use crate::store::Ttl;
use crate::time::parse_ts;

pub const ALGOLIA_BASE: &str = "https://hn.algolia.com/api/v1";
pub const DEFAULT_KEYWORDS: [&str; 4] = ["LLM", "transformers", "RAG", "agents"];
pub const HITS_PER_PAGE: u32 = 100;

/// Half-open `[start, end)` interval of posting instants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DateRange {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl DateRange {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self> {
        if start >= end {
            return Err(Error::invalid(format!("empty date range: {start} is not before {end}")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, ts: DateTime<Utc>) -> bool {
        ts >= self.start && ts < self.end
    }
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct SearchPage {
    hits: Vec<Hit>,
    #[serde(default)]
    nb_pages: u32,
}

#[derive(Debug, Deserialize)]
struct Hit {
    #[serde(rename = "objectID")]
    object_id: String,
    created_at: Option<String>,
    created_at_i: Option<i64>,
    title: Option<String>,
    url: Option<String>,
    points: Option<u64>,
    num_comments: Option<u64>,
    #[serde(rename = "_tags", default)]
    tags: Vec<String>,
}

impl Hit {
    fn into_post(self) -> Option<HnPost> {
        let created_at = match self.created_at_i {
            Some(secs) => Utc.timestamp_opt(secs, 0).single()?,
            None => parse_ts(self.created_at.as_deref()?).ok()?,
        };
        let title = self.title.unwrap_or_default();
        let is_show_hn = title_is_show_hn(&title) || self.tags.iter().any(|t| t == "show_hn");
        Some(HnPost {
            post_id: self.object_id,
            created_at,
            title,
            url: self.url.unwrap_or_default(),
            score: self.points.unwrap_or(0),
            num_comments: self.num_comments.unwrap_or(0),
            is_show_hn,
        })
    }
}

pub struct HnSearch<'a> {
    client: &'a ApiClient,
    base_url: String,
}

impl<'a> HnSearch<'a> {
    pub fn new(client: &'a ApiClient) -> Self {
        Self::with_base_url(client, ALGOLIA_BASE)
    }

    pub fn with_base_url(client: &'a ApiClient, base_url: &str) -> Self {
        Self {
            client,
            base_url: base_url.trim_end_matches('/').to_string(),
        }
    }

    /// One query per keyword, paginated up to `page_limit` pages, unioned by
    /// post id and sorted by posting time. Failures degrade to warnings.
    pub fn search_posts(
        &self,
        keywords: &[String],
        range: DateRange,
        page_limit: u32,
        warnings: &mut Vec<String>,
    ) -> Result<Vec<HnPost>> {
        if keywords.is_empty() {
            return Err(Error::invalid("at least one search keyword is required"));
        }
        let mut by_id: BTreeMap<String, HnPost> = BTreeMap::new();
        for keyword in keywords {
            let mut page = 0;
            loop {
                let request = search_request(&self.base_url, keyword, range, page);
                let response = match self.client.request(&request, Ttl::SEARCH) {
                    Ok(r) => r,
                    Err(e) => {
                        warnings.push(format!("HN search {keyword:?} page {page} failed: {e}"));
                        break;
                    }
                };
                if !response.is_success() {
                    warnings.push(format!(
                        "HN search {keyword:?} page {page} returned HTTP {}",
                        response.status
                    ));
                    break;
                }
                let parsed: SearchPage = match serde_json::from_slice(&response.body) {
                    Ok(p) => p,
                    Err(e) => {
                        warnings.push(format!("HN search {keyword:?} page {page} unparseable: {e}"));
                        break;
                    }
                };
                for post in parsed.hits.into_iter().filter_map(Hit::into_post) {
                    if range.contains(post.created_at) {
                        by_id.entry(post.post_id.clone()).or_insert(post);
                    }
                }
                page += 1;
                if page >= parsed.nb_pages {
                    break;
                }
                if page >= page_limit {
                    warnings.push(format!(
                        "HN search {keyword:?} truncated at {page_limit} of {} pages",
                        parsed.nb_pages
                    ));
                    break;
                }
            }
        }
        let mut posts: Vec<HnPost> = by_id.into_values().collect();
        sort_posts(&mut posts);
        Ok(posts)
    }
}

pub fn search_request(base_url: &str, keyword: &str, range: DateRange, page: u32) -> HttpRequest {
    HttpRequest::get(format!("{base_url}/search_by_date"))
        .param("query", keyword)
        .param("tags", "story")
        .param(
            "numericFilters",
            format!(
                "created_at_i>={},created_at_i<{}",
                range.start.timestamp(),
                range.end.timestamp()
            ),
        )
        .param("hitsPerPage", HITS_PER_PAGE)
        .param("page", page)
}

pub fn sort_posts(posts: &mut [HnPost]) {
    posts.sort_by(|a, b| {
        a.created_at
            .cmp(&b.created_at)
            .then_with(|| compare_post_ids(&a.post_id, &b.post_id))
    });
}

const RESERVED_OWNERS: &[&str] = &[
    "about",
    "apps",
    "collections",
    "customer-stories",
    "enterprise",
    "events",
    "explore",
    "features",
    "issues",
    "login",
    "marketplace",
    "notifications",
    "orgs",
    "pricing",
    "pulls",
    "search",
    "settings",
    "site",
    "sponsors",
    "topics",
    "trending",
    "users",
];

/// `github.com/<owner>/<name>[/...]` → slug. Gists, org pages and other hosts
/// yield `None`. Query strings, fragments and a trailing `.git` are ignored.
pub fn extract_repo_slug(raw: &str) -> Option<RepoSlug> {
    let raw = raw.trim();
    if raw.is_empty() {
        return None;
    }
    let url = Url::parse(raw)
        .or_else(|_| Url::parse(&format!("https://{raw}")))
        .ok()?;
    let host = url.host_str()?.to_ascii_lowercase();
    if host != "github.com" && host != "www.github.com" {
        return None;
    }
    let mut segments = url.path_segments()?.filter(|s| !s.is_empty());
    let owner = segments.next()?;
    let name = segments.next()?;
    if RESERVED_OWNERS.contains(&owner.to_ascii_lowercase().as_str()) {
        return None;
    }
    RepoSlug::new(owner, name).ok()
}

/// One launch per repository: the earliest post, ties to the smaller post id.
pub fn dedupe_earliest(pairs: &[(HnPost, RepoSlug)]) -> Vec<LaunchEvent> {
    let mut best: BTreeMap<&RepoSlug, &HnPost> = BTreeMap::new();
    for (post, slug) in pairs {
        best.entry(slug)
            .and_modify(|current| {
                let earlier = post
                    .created_at
                    .cmp(&current.created_at)
                    .then_with(|| compare_post_ids(&post.post_id, &current.post_id))
                    .is_lt();
                if earlier {
                    *current = post;
                }
            })
            .or_insert(post);
    }
    let mut events: Vec<LaunchEvent> = best
        .into_iter()
        .map(|(slug, post)| LaunchEvent {
            slug: slug.clone(),
            post: post.clone(),
        })
        .collect();
    events.sort_by(|a, b| {
        a.post
            .created_at
            .cmp(&b.post.created_at)
            .then_with(|| compare_post_ids(&a.post.post_id, &b.post.post_id))
            .then_with(|| a.slug.cmp(&b.slug))
    });
    events
}

/// Posts whose URL names a GitHub repository, paired with that repository.
pub fn github_pairs(posts: &[HnPost]) -> Vec<(HnPost, RepoSlug)> {
    posts
        .iter()
        .filter_map(|p| extract_repo_slug(&p.url).map(|s| (p.clone(), s)))
        .collect()
}
