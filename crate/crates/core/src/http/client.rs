use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{HttpRequest, HttpResponse, RateLimiter, Transport};
use crate::error::{Error, Result};
use crate::store::{cache_key, CacheEntry, CacheStore, Ttl};
use crate::time::Clock;

/// Exponential backoff: `base * factor^(n-1)` scaled by a uniform jitter in
/// `[1 - jitter, 1 + jitter]`, for at most `max_attempts` sends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub base: Duration,
    pub factor: f64,
    pub jitter: f64,
    pub max_attempts: u32,
    /// Upper bound on a server-requested wait (rate-limit reset).
    pub max_reset_wait: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            base: Duration::from_secs(2),
            factor: 2.0,
            jitter: 0.25,
            max_attempts: 5,
            max_reset_wait: Duration::from_secs(3600),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiResponse {
    pub status: u16,
    pub body: Vec<u8>,
    pub fetched_at: DateTime<Utc>,
    pub from_cache: bool,
}

impl ApiResponse {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

/// Cache-first, rate-limited, retrying client for one API host.
pub struct ApiClient {
    transport: Arc<dyn Transport>,
    store: Arc<CacheStore>,
    limiter: Option<Arc<RateLimiter>>,
    clock: Arc<dyn Clock>,
    retry: RetryPolicy,
    jitter_rng: Mutex<ChaCha8Rng>,
    default_headers: Vec<(String, String)>,
}

impl ApiClient {
    pub fn new(
        transport: Arc<dyn Transport>,
        store: Arc<CacheStore>,
        limiter: Option<Arc<RateLimiter>>,
        clock: Arc<dyn Clock>,
        seed: u64,
    ) -> Self {
        Self {
            transport,
            store,
            limiter,
            clock,
            retry: RetryPolicy::default(),
            jitter_rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            default_headers: Vec::new(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_default_header(mut self, name: &str, value: &str) -> Self {
        self.default_headers.push((name.to_string(), value.to_string()));
        self
    }

    pub fn backoff_delay(&self, failed_attempts: u32) -> Duration {
        let exp = self.retry.factor.powi(failed_attempts.saturating_sub(1) as i32);
        let jitter = if self.retry.jitter > 0.0 {
            let mut rng = self.jitter_rng.lock().unwrap();
            rng.random_range(-self.retry.jitter..=self.retry.jitter)
        } else {
            0.0
        };
        self.retry.base.mul_f64(exp * (1.0 + jitter))
    }

    /// Serves `request` from the cache when a fresh entry exists; otherwise
    /// sends it under the rate budget, retrying rate-limit responses, server
    /// errors and transport failures. Final responses (including 404/403/451)
    /// are cached so replays never touch the network.
    pub fn request(&self, request: &HttpRequest, ttl: Ttl) -> Result<ApiResponse> {
        let key = cache_key(&request.method, &request.url, &request.params)?;
        if let Some(hit) = self.store.get(&key, ttl) {
            return Ok(ApiResponse {
                status: hit.status,
                body: hit.body,
                fetched_at: hit.fetched_at,
                from_cache: true,
            });
        }

        let mut outgoing = request.clone();
        for (k, v) in &self.default_headers {
            if !outgoing.headers.iter().any(|(h, _)| h.eq_ignore_ascii_case(k)) {
                outgoing.headers.push((k.clone(), v.clone()));
            }
        }

        let mut last_failure = String::new();
        for attempt in 1..=self.retry.max_attempts {
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            let wait = match self.transport.send(&outgoing) {
                Ok(resp) if is_rate_limited(&resp) => {
                    last_failure = format!("rate limited (HTTP {})", resp.status);
                    self.rate_limit_wait(&resp, attempt)
                }
                Ok(resp) if resp.status >= 500 => {
                    last_failure = format!("HTTP {}", resp.status);
                    self.backoff_delay(attempt)
                }
                Ok(resp) => {
                    let fetched_at = self.clock.now();
                    if is_cacheable(resp.status) {
                        self.store.put(&CacheEntry {
                            key: key.clone(),
                            body: resp.body.clone(),
                            status: resp.status,
                            fetched_at,
                        })?;
                    }
                    return Ok(ApiResponse {
                        status: resp.status,
                        body: resp.body,
                        fetched_at,
                        from_cache: false,
                    });
                }
                Err(e) => {
                    last_failure = e.to_string();
                    self.backoff_delay(attempt)
                }
            };
            if attempt < self.retry.max_attempts {
                log::warn!(
                    "{} attempt {attempt} failed ({last_failure}); retrying in {:.1}s",
                    request.url,
                    wait.as_secs_f64()
                );
                self.clock.sleep(wait);
            }
        }
        Err(Error::RetriesExhausted {
            url: request.url.clone(),
            attempts: self.retry.max_attempts,
            last: last_failure,
        })
    }

    fn rate_limit_wait(&self, resp: &HttpResponse, attempt: u32) -> Duration {
        let server_wait = resp
            .header("retry-after")
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs)
            .or_else(|| {
                let reset = resp.header("x-ratelimit-reset")?.trim().parse::<i64>().ok()?;
                let reset = Utc.timestamp_opt(reset, 0).single()?;
                Some((reset - self.clock.now()).to_std().unwrap_or(Duration::ZERO) + Duration::from_secs(1))
            });
        match server_wait {
            Some(wait) => wait.min(self.retry.max_reset_wait),
            None => self.backoff_delay(attempt),
        }
    }
}

fn is_rate_limited(resp: &HttpResponse) -> bool {
    resp.status == 429
        || (resp.status == 403
            && (resp.header("x-ratelimit-remaining").is_some_and(|v| v.trim() == "0")
                || resp.header("retry-after").is_some()))
}

fn is_cacheable(status: u16) -> bool {
    (200..300).contains(&status) || matches!(status, 403 | 404 | 410 | 451)
}
