//! Blocking JSON-over-HTTP plumbing shared by the Perspective scorer and the
//! remote translation client: a token-bucket rate limiter, bounded
//! exponential backoff on 429, and a tiny local server for tests.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{DetoxError, Result};

/// Token bucket: `rate` tokens per second, at most `burst` stored.
#[derive(Debug)]
pub struct RateLimiter {
    rate: f64,
    burst: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn new(rate_per_sec: f64, burst: f64) -> Self {
        let burst = burst.max(1.0);
        RateLimiter {
            rate: rate_per_sec,
            burst,
            state: Mutex::new((burst, Instant::now())),
        }
    }

    /// A limiter that never blocks.
    pub fn unlimited() -> Self {
        RateLimiter::new(f64::INFINITY, 1.0)
    }

    /// Blocks until a token is available and takes it.
    pub fn acquire(&self) {
        if self.rate.is_infinite() {
            return;
        }
        loop {
            let wait = {
                let mut st = self.state.lock().unwrap();
                let now = Instant::now();
                let elapsed = now.duration_since(st.1).as_secs_f64();
                st.0 = (st.0 + elapsed * self.rate).min(self.burst);
                st.1 = now;
                if st.0 >= 1.0 {
                    st.0 -= 1.0;
                    return;
                }
                (1.0 - st.0) / self.rate
            };
            thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    /// Extra random fraction of the delay, in [0, jitter).
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 5,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
            jitter: 0.25,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let exp = self.base_delay_ms.saturating_mul(1u64 << attempt.min(20));
        let capped = exp.min(self.max_delay_ms) as f64;
        let jitter = if self.jitter > 0.0 {
            rand::rng().random::<f64>() * self.jitter
        } else {
            0.0
        };
        Duration::from_secs_f64(capped * (1.0 + jitter) / 1000.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientConfig {
    pub requests_per_second: f64,
    pub burst: f64,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            requests_per_second: 1.0,
            burst: 1.0,
            timeout_secs: 30,
            retry: RetryPolicy::default(),
        }
    }
}

/// Rate-limited JSON POST client with retry on 429.
#[derive(Debug)]
pub struct JsonClient {
    agent: ureq::Agent,
    limiter: RateLimiter,
    retry: RetryPolicy,
    requests: AtomicUsize,
}

impl JsonClient {
    pub fn new(cfg: &ClientConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .build()
            .into();
        JsonClient {
            agent,
            limiter: RateLimiter::new(cfg.requests_per_second, cfg.burst),
            retry: cfg.retry,
            requests: AtomicUsize::new(0),
        }
    }

    /// Number of HTTP requests actually sent.
    pub fn requests_sent(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn post_json(&self, url: &str, body: &Value) -> Result<Value> {
        let payload = serde_json::to_string(body)?;
        let mut attempt = 0u32;
        loop {
            self.limiter.acquire();
            self.requests.fetch_add(1, Ordering::SeqCst);
            let mut resp = self
                .agent
                .post(url)
                .header("Content-Type", "application/json")
                .send(payload.as_str())
                .map_err(|e| DetoxError::Transport(e.to_string()))?;
            let status = resp.status().as_u16();
            if status == 429 {
                if attempt >= self.retry.max_retries {
                    return Err(DetoxError::RateLimited(attempt + 1));
                }
                let retry_after = resp
                    .headers()
                    .get("retry-after")
                    .and_then(|v| v.to_str().ok())
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .map(Duration::from_secs_f64)
                    .unwrap_or_default();
                let wait = self.retry.delay(attempt).max(retry_after);
                log::debug!("429 from {url}; retry {} in {:?}", attempt + 1, wait);
                thread::sleep(wait);
                attempt += 1;
                continue;
            }
            let text = resp
                .body_mut()
                .read_to_string()
                .map_err(|e| DetoxError::Transport(e.to_string()))?;
            if !(200..300).contains(&status) {
                return Err(DetoxError::HttpStatus { status, body: text });
            }
            return serde_json::from_str(&text).map_err(|e| DetoxError::Unparseable(e.to_string()));
        }
    }
}

pub mod mock {
    //! Minimal HTTP/1.1 server on 127.0.0.1 for exercising clients offline.
    //! Each connection carries one request and is closed after the response.

    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::{TcpListener, TcpStream};
    use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
    use std::sync::Arc;
    use std::thread::{self, JoinHandle};
    use std::time::Duration;

    #[derive(Debug, Clone)]
    pub struct MockRequest {
        pub method: String,
        pub path: String,
        pub body: String,
    }

    #[derive(Debug, Clone)]
    pub struct MockResponse {
        pub status: u16,
        pub body: String,
        pub headers: Vec<(String, String)>,
    }

    impl MockResponse {
        pub fn json(status: u16, body: impl Into<String>) -> Self {
            MockResponse {
                status,
                body: body.into(),
                headers: Vec::new(),
            }
        }
    }

    type Handler = dyn Fn(&MockRequest) -> MockResponse + Send + Sync;

    pub struct MockServer {
        addr: String,
        hits: Arc<AtomicUsize>,
        stop: Arc<AtomicBool>,
        handle: Option<JoinHandle<()>>,
    }

    impl MockServer {
        pub fn start<F>(handler: F) -> std::io::Result<Self>
        where
            F: Fn(&MockRequest) -> MockResponse + Send + Sync + 'static,
        {
            let listener = TcpListener::bind("127.0.0.1:0")?;
            listener.set_nonblocking(true)?;
            let addr = format!("http://{}", listener.local_addr()?);
            let hits = Arc::new(AtomicUsize::new(0));
            let stop = Arc::new(AtomicBool::new(false));
            let handler: Arc<Handler> = Arc::new(handler);
            let (h, s) = (hits.clone(), stop.clone());
            let handle = thread::spawn(move || {
                while !s.load(Ordering::SeqCst) {
                    match listener.accept() {
                        Ok((stream, _)) => {
                            h.fetch_add(1, Ordering::SeqCst);
                            let handler = handler.clone();
                            thread::spawn(move || {
                                let _ = serve(stream, &*handler);
                            });
                        }
                        Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                            thread::sleep(Duration::from_millis(2));
                        }
                        Err(_) => break,
                    }
                }
            });
            Ok(MockServer {
                addr,
                hits,
                stop,
                handle: Some(handle),
            })
        }

        /// Base URL, e.g. `http://127.0.0.1:40123`.
        pub fn url(&self) -> &str {
            &self.addr
        }

        /// Requests received so far.
        pub fn hits(&self) -> usize {
            self.hits.load(Ordering::SeqCst)
        }
    }

    impl Drop for MockServer {
        fn drop(&mut self) {
            self.stop.store(true, Ordering::SeqCst);
            if let Some(h) = self.handle.take() {
                let _ = h.join();
            }
        }
    }

    fn serve(stream: TcpStream, handler: &Handler) -> std::io::Result<()> {
        stream.set_nonblocking(false)?;
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let mut parts = line.split_whitespace();
        let method = parts.next().unwrap_or_default().to_string();
        let path = parts.next().unwrap_or_default().to_string();
        let mut content_length = 0usize;
        loop {
            let mut h = String::new();
            if reader.read_line(&mut h)? == 0 || h.trim().is_empty() {
                break;
            }
            if let Some((k, v)) = h.split_once(':') {
                if k.trim().eq_ignore_ascii_case("content-length") {
                    content_length = v.trim().parse().unwrap_or(0);
                }
            }
        }
        let mut body = vec![0u8; content_length];
        reader.read_exact(&mut body)?;
        let req = MockRequest {
            method,
            path,
            body: String::from_utf8_lossy(&body).into_owned(),
        };
        let resp = handler(&req);
        let mut out = stream;
        let mut head = format!(
            "HTTP/1.1 {} MOCK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n",
            resp.status,
            resp.body.len()
        );
        for (k, v) in &resp.headers {
            head.push_str(&format!("{k}: {v}\r\n"));
        }
        head.push_str("\r\n");
        out.write_all(head.as_bytes())?;
        out.write_all(resp.body.as_bytes())?;
        out.flush()
    }
}
