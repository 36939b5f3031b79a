//! HTTP plumbing: request/response values, pluggable transports, the
//! sliding-window rate limiter and the caching retry client.

mod client;
mod limiter;

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use client::{ApiClient, ApiResponse, RetryPolicy};
pub use limiter::{RateBudget, RateLimiter};

use crate::error::{Error, Result};
use crate::store::canonical_request;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub method: String,
    pub url: String,
    pub params: Vec<(String, String)>,
    pub headers: Vec<(String, String)>,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>) -> Self {
        Self {
            method: "GET".into(),
            url: url.into(),
            params: Vec::new(),
            headers: Vec::new(),
        }
    }

    pub fn param(mut self, name: &str, value: impl ToString) -> Self {
        self.params.push((name.to_string(), value.to_string()));
        self
    }

    pub fn header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.to_string(), value.to_string()));
        self
    }

    pub fn canonical(&self) -> Result<String> {
        canonical_request(&self.method, &self.url, &self.params)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn new(status: u16, body: impl Into<Vec<u8>>) -> Self {
        Self {
            status,
            headers: Vec::new(),
            body: body.into(),
        }
    }

    pub fn with_header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.to_string(), value.to_string()));
        self
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Anything that can turn a request into a response. Network failures are
/// `Err`; HTTP error statuses are ordinary responses.
pub trait Transport: Send + Sync {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse>;
}

/// Live network transport.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl Default for UreqTransport {
    fn default() -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(std::time::Duration::from_secs(60)))
            .user_agent(concat!("launchpulse/", env!("CARGO_PKG_VERSION")))
            .build()
            .into();
        Self { agent }
    }
}

impl Transport for UreqTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse> {
        if request.method != "GET" {
            return Err(Error::Transport(format!("unsupported method {}", request.method)));
        }
        let mut builder = self.agent.get(&request.url);
        for (k, v) in &request.params {
            builder = builder.query(k, v);
        }
        for (k, v) in &request.headers {
            builder = builder.header(k, v);
        }
        let mut response = builder
            .call()
            .map_err(|e| Error::Transport(format!("{}: {e}", request.url)))?;
        let status = response.status().as_u16();
        let headers = response
            .headers()
            .iter()
            .filter_map(|(k, v)| Some((k.as_str().to_string(), v.to_str().ok()?.to_string())))
            .collect();
        let body = response
            .body_mut()
            .with_config()
            .limit(64 * 1024 * 1024)
            .read_to_vec()
            .map_err(|e| Error::Transport(format!("{}: {e}", request.url)))?;
        Ok(HttpResponse { status, headers, body })
    }
}

/// One line of a fixture directory's `index.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct FixtureRoute {
    pub request: String,
    pub status: u16,
    pub file: String,
}

pub const FIXTURE_INDEX: &str = "index.jsonl";

/// Serves canned responses from a directory: `index.jsonl` maps canonical
/// request strings to a status and a body file. Unknown requests get a 404.
#[derive(Debug)]
pub struct FixtureTransport {
    root: PathBuf,
    routes: HashMap<String, FixtureRoute>,
}

impl FixtureTransport {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let index = root.join(FIXTURE_INDEX);
        let file = fs::File::open(&index).map_err(|e| Error::io(&index, e))?;
        let mut routes = HashMap::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&index, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let route: FixtureRoute = serde_json::from_str(&line)
                .map_err(|e| Error::parse(format!("{}:{}", index.display(), lineno + 1), e))?;
            routes.insert(route.request.clone(), route);
        }
        Ok(Self { root, routes })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn route(&self, request: &HttpRequest) -> Option<&FixtureRoute> {
        request.canonical().ok().and_then(|c| self.routes.get(&c))
    }
}

impl Transport for FixtureTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse> {
        match self.route(request) {
            Some(route) => {
                let path = self.root.join(&route.file);
                let body = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                Ok(HttpResponse::new(route.status, body))
            }
            None => Ok(HttpResponse::new(404, b"{\"message\":\"no fixture\"}".to_vec())),
        }
    }
}

/// Wraps another transport and counts attempted sends.
pub struct CountingTransport {
    inner: Arc<dyn Transport>,
    calls: AtomicUsize,
}

impl CountingTransport {
    pub fn new(inner: Arc<dyn Transport>) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for CountingTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.send(request)
    }
}

/// Transport that refuses every request; used to prove offline runs never
/// reach the network.
#[derive(Debug, Default)]
pub struct DenyTransport;

impl Transport for DenyTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse> {
        Err(Error::Transport(format!("network access denied: {}", request.url)))
    }
}
