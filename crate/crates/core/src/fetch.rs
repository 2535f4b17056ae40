//! Polite page fetching: per-host rate limiting, timeouts, retry with
//! exponential backoff. Transport and clock are injected so every test
//! runs offline and instantly.

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;
use thiserror::Error;
use url::Url;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FetchPolicy {
    pub min_interval_per_host: Duration,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub user_agent: String,
}

impl Default for FetchPolicy {
    fn default() -> Self {
        FetchPolicy {
            min_interval_per_host: Duration::from_millis(1000),
            timeout: Duration::from_secs(20),
            max_retries: 2,
            backoff_base: Duration::from_millis(500),
            user_agent: "opiniontrend/0.1".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPage {
    pub url: Url,
    pub fetched_at: DateTime<Utc>,
    pub status: u16,
    pub body: Vec<u8>,
    pub content_type: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub at_ms: u64,
    pub outcome: String,
}

#[derive(Debug)]
pub struct Fetched {
    pub page: RawPage,
    pub attempts: Vec<AttemptRecord>,
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("url {0} has no host")]
    NoHost(Url),
    #[error("non-retryable status {status} for {url}")]
    ClientStatus {
        url: Url,
        status: u16,
        attempts: Vec<AttemptRecord>,
    },
    #[error("retries exhausted for {url} after {} attempts", attempts.len())]
    Exhausted {
        url: Url,
        attempts: Vec<AttemptRecord>,
    },
    #[error("robots exclusion forbids {0}")]
    RobotsForbidden(Url),
}

#[derive(Debug, Error, Clone)]
pub enum TransportError {
    #[error("timeout")]
    Timeout,
    #[error("transport: {0}")]
    Io(String),
}

#[derive(Debug, Clone)]
pub struct TransportResponse {
    pub status: u16,
    pub body: Vec<u8>,
    pub content_type: String,
}

/// A single blocking HTTP GET. Implementations: real HTTP, a directory of
/// page snapshots, and scripted stubs in tests.
pub trait Transport: Send + Sync {
    fn get(&self, url: &Url, policy: &FetchPolicy) -> Result<TransportResponse, TransportError>;
}

/// Monotonic time source. `now` is an offset from an arbitrary epoch.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
    fn utc_now(&self) -> DateTime<Utc>;
}

pub struct SystemClock {
    start: std::time::Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock {
            start: std::time::Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.start.elapsed()
    }
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
    fn utc_now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Simulated clock: `sleep` advances time instantly.
#[derive(Default)]
pub struct SimClock {
    now: Mutex<Duration>,
}

impl SimClock {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Clock for SimClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }
    fn sleep(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }
    fn utc_now(&self) -> DateTime<Utc> {
        let base = Utc.with_ymd_and_hms(2024, 6, 24, 0, 0, 0).unwrap();
        base + chrono::Duration::from_std(self.now()).unwrap_or_default()
    }
}

/// Per-host spacing enforced across concurrent workers. Each host has its
/// own lock, held for the full request so at most one request per host is
/// in flight.
pub struct RateLimiter {
    min_interval: Duration,
    hosts: Mutex<HashMap<String, Arc<Mutex<Option<Duration>>>>>,
}

impl RateLimiter {
    pub fn new(min_interval: Duration) -> Self {
        RateLimiter {
            min_interval,
            hosts: Mutex::new(HashMap::new()),
        }
    }

    fn host_slot(&self, host: &str) -> Arc<Mutex<Option<Duration>>> {
        let mut map = self.hosts.lock().unwrap();
        map.entry(host.to_string())
            .or_insert_with(|| Arc::new(Mutex::new(None)))
            .clone()
    }
}

/// Fetch one page under the politeness policy.
///
/// Requests to the same host are spaced >= `min_interval_per_host` apart
/// (retries count as requests). 5xx and transport failures retry with
/// exponential backoff up to `max_retries`; 4xx fails immediately.
pub fn fetch_page(
    url: &Url,
    policy: &FetchPolicy,
    limiter: &RateLimiter,
    transport: &dyn Transport,
    clock: &dyn Clock,
) -> Result<Fetched, FetchError> {
    let host = url
        .host_str()
        .ok_or_else(|| FetchError::NoHost(url.clone()))?
        .to_string();
    let slot = limiter.host_slot(&host);
    let guard = slot.lock().unwrap();
    let mut last_request = *guard;

    let mut attempts: Vec<AttemptRecord> = Vec::new();
    let total_attempts = policy.max_retries + 1;

    for attempt in 0..total_attempts {
        if let Some(last) = last_request {
            let earliest = last + limiter.min_interval;
            let now = clock.now();
            if now < earliest {
                clock.sleep(earliest - now);
            }
        }
        let at = clock.now();
        last_request = Some(at);
        let result = transport.get(url, policy);
        let at_ms = at.as_millis() as u64;

        match result {
            Ok(resp) if resp.status >= 500 => {
                attempts.push(AttemptRecord {
                    at_ms,
                    outcome: format!("status {}", resp.status),
                });
            }
            Ok(resp) if (400..500).contains(&resp.status) => {
                attempts.push(AttemptRecord {
                    at_ms,
                    outcome: format!("status {}", resp.status),
                });
                let mut slot_guard = guard;
                *slot_guard = last_request;
                return Err(FetchError::ClientStatus {
                    url: url.clone(),
                    status: resp.status,
                    attempts,
                });
            }
            Ok(resp) => {
                attempts.push(AttemptRecord {
                    at_ms,
                    outcome: format!("status {}", resp.status),
                });
                let page = RawPage {
                    url: url.clone(),
                    fetched_at: clock.utc_now(),
                    status: resp.status,
                    body: resp.body,
                    content_type: resp.content_type,
                };
                let mut slot_guard = guard;
                *slot_guard = last_request;
                return Ok(Fetched { page, attempts });
            }
            Err(e) => {
                attempts.push(AttemptRecord {
                    at_ms,
                    outcome: e.to_string(),
                });
            }
        }

        if attempt + 1 < total_attempts {
            let backoff = policy.backoff_base * 2u32.pow(attempt);
            clock.sleep(backoff);
        }
    }

    let mut slot_guard = guard;
    *slot_guard = last_request;
    Err(FetchError::Exhausted {
        url: url.clone(),
        attempts,
    })
}

/// Real HTTP transport backed by a blocking client.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Self {
        HttpTransport {
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &Url, policy: &FetchPolicy) -> Result<TransportResponse, TransportError> {
        let resp = self
            .client
            .get(url.clone())
            .header(reqwest::header::USER_AGENT, &policy.user_agent)
            .timeout(policy.timeout)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    TransportError::Timeout
                } else {
                    TransportError::Io(e.to_string())
                }
            })?;
        let status = resp.status().as_u16();
        let content_type = resp
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .unwrap_or("application/octet-stream")
            .to_string();
        let body = resp
            .bytes()
            .map_err(|e| TransportError::Io(e.to_string()))?
            .to_vec();
        Ok(TransportResponse {
            status,
            body,
            content_type,
        })
    }
}

/// Offline transport serving pages from a snapshot directory. URLs map to
/// file names via [`url_to_filename`]; a missing file answers 404.
pub struct FileTransport {
    root: PathBuf,
}

impl FileTransport {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FileTransport { root: root.into() }
    }
}

/// Deterministic snapshot file name for a URL: host, path and query with
/// every character outside `[A-Za-z0-9.-]` replaced by `_`.
pub fn url_to_filename(url: &Url) -> String {
    let mut raw = String::new();
    raw.push_str(url.host_str().unwrap_or(""));
    raw.push_str(url.path());
    if let Some(q) = url.query() {
        raw.push('?');
        raw.push_str(q);
    }
    raw.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

impl Transport for FileTransport {
    fn get(&self, url: &Url, _policy: &FetchPolicy) -> Result<TransportResponse, TransportError> {
        let path = self.root.join(url_to_filename(url));
        match std::fs::read(&path) {
            Ok(body) => {
                let content_type = if path.extension().is_some() {
                    "application/octet-stream"
                } else if body.starts_with(b"<?xml") {
                    "application/xml"
                } else {
                    "text/html; charset=utf-8"
                };
                Ok(TransportResponse {
                    status: 200,
                    body,
                    content_type: content_type.to_string(),
                })
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(TransportResponse {
                status: 404,
                body: Vec::new(),
                content_type: "text/plain".to_string(),
            }),
            Err(e) => Err(TransportError::Io(e.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Scripted transport: pops one canned response per call.
    struct ScriptTransport {
        script: Mutex<Vec<Result<TransportResponse, TransportError>>>,
        calls: AtomicUsize,
    }

    impl ScriptTransport {
        fn new(script: Vec<Result<TransportResponse, TransportError>>) -> Self {
            ScriptTransport {
                script: Mutex::new(script),
                calls: AtomicUsize::new(0),
            }
        }
        fn calls(&self) -> usize {
            self.calls.load(Ordering::SeqCst)
        }
    }

    impl Transport for ScriptTransport {
        fn get(&self, _: &Url, _: &FetchPolicy) -> Result<TransportResponse, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let mut script = self.script.lock().unwrap();
            if script.is_empty() {
                Err(TransportError::Timeout)
            } else {
                script.remove(0)
            }
        }
    }

    fn ok(status: u16) -> Result<TransportResponse, TransportError> {
        Ok(TransportResponse {
            status,
            body: b"<html></html>".to_vec(),
            content_type: "text/html".to_string(),
        })
    }

    fn policy(min_interval_ms: u64, retries: u32) -> FetchPolicy {
        FetchPolicy {
            min_interval_per_host: Duration::from_millis(min_interval_ms),
            timeout: Duration::from_secs(5),
            max_retries: retries,
            backoff_base: Duration::from_millis(100),
            user_agent: "test".to_string(),
        }
    }

    fn url() -> Url {
        Url::parse("https://example.org/page").unwrap()
    }

    #[test]
    fn same_host_fetches_are_spaced() {
        let clock = SimClock::new();
        let policy = policy(500, 0);
        let limiter = RateLimiter::new(policy.min_interval_per_host);
        let transport = ScriptTransport::new(vec![ok(200), ok(200), ok(200)]);
        for _ in 0..3 {
            fetch_page(&url(), &policy, &limiter, &transport, &clock).unwrap();
        }
        assert!(clock.now() >= Duration::from_millis(1000));
    }

    #[test]
    fn retries_on_503_then_succeeds() {
        let clock = SimClock::new();
        let policy = policy(0, 2);
        let limiter = RateLimiter::new(policy.min_interval_per_host);
        let transport = ScriptTransport::new(vec![ok(503), ok(200)]);
        let fetched = fetch_page(&url(), &policy, &limiter, &transport, &clock).unwrap();
        assert_eq!(fetched.attempts.len(), 2);
        assert_eq!(fetched.page.status, 200);
        assert_eq!(transport.calls(), 2);
    }

    #[test]
    fn exhausts_retries_on_persistent_timeout() {
        let clock = SimClock::new();
        let policy = policy(0, 2);
        let limiter = RateLimiter::new(policy.min_interval_per_host);
        let transport = ScriptTransport::new(vec![
            Err(TransportError::Timeout),
            Err(TransportError::Timeout),
            Err(TransportError::Timeout),
        ]);
        let err = fetch_page(&url(), &policy, &limiter, &transport, &clock).unwrap_err();
        match err {
            FetchError::Exhausted { attempts, .. } => assert_eq!(attempts.len(), 3),
            other => panic!("expected exhaustion, got {other:?}"),
        }
        assert_eq!(transport.calls(), 3);
    }

    #[test]
    fn client_error_is_not_retried() {
        let clock = SimClock::new();
        let policy = policy(0, 3);
        let limiter = RateLimiter::new(policy.min_interval_per_host);
        let transport = ScriptTransport::new(vec![ok(404), ok(200)]);
        let err = fetch_page(&url(), &policy, &limiter, &transport, &clock).unwrap_err();
        match err {
            FetchError::ClientStatus { status, .. } => assert_eq!(status, 404),
            other => panic!("expected client status, got {other:?}"),
        }
        assert_eq!(transport.calls(), 1);
    }

    #[test]
    fn retry_requests_also_respect_spacing() {
        let clock = SimClock::new();
        let policy = FetchPolicy {
            min_interval_per_host: Duration::from_millis(500),
            backoff_base: Duration::from_millis(1),
            ..policy(500, 2)
        };
        let limiter = RateLimiter::new(policy.min_interval_per_host);
        let transport = ScriptTransport::new(vec![ok(503), ok(503), ok(200)]);
        fetch_page(&url(), &policy, &limiter, &transport, &clock).unwrap();
        // 3 requests, two gaps of >= 500ms each
        assert!(clock.now() >= Duration::from_millis(1000));
    }

    #[test]
    fn url_filename_is_stable_and_safe() {
        let u = Url::parse("https://example.org/spip.php?page=backend&id_rubrique=31").unwrap();
        assert_eq!(
            url_to_filename(&u),
            "example.org_spip.php_page_backend_id_rubrique_31"
        );
    }
}
