//! Blocking JSON-over-HTTP client shared by the remote infiller, corrector and
//! classifier backends.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_ATTEMPTS: u32 = 3;
pub const DEFAULT_IN_FLIGHT: usize = 8;

#[derive(Debug, Error)]
pub enum HttpError {
    /// Network failure, timeout or 5xx after every attempt was used.
    #[error("request to {url} failed after {attempts} attempt(s): {message}")]
    Exhausted {
        url: String,
        attempts: u32,
        message: String,
    },
    #[error("{url} answered HTTP {status}: {body}")]
    Status {
        url: String,
        status: u16,
        body: String,
    },
    #[error("cannot decode response from {url}: {message}")]
    Decode { url: String, message: String },
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct InFlight {
    max: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn acquire(&self) -> Permit<'_> {
        let mut used = self.used.lock().unwrap_or_else(|e| e.into_inner());
        while *used >= self.max {
            used = self.freed.wait(used).unwrap_or_else(|e| e.into_inner());
        }
        *used += 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a InFlight);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut used = self.0.used.lock().unwrap_or_else(|e| e.into_inner());
        *used -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug, Clone)]
pub struct JsonClient {
    agent: ureq::Agent,
    attempts: u32,
    retry_delay: Duration,
    in_flight: Arc<InFlight>,
}

impl Default for JsonClient {
    fn default() -> Self {
        Self::new(DEFAULT_TIMEOUT, DEFAULT_ATTEMPTS, DEFAULT_IN_FLIGHT)
    }
}

impl JsonClient {
    pub fn new(timeout: Duration, attempts: u32, max_in_flight: usize) -> Self {
        JsonClient {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            attempts: attempts.max(1),
            retry_delay: Duration::from_millis(200),
            in_flight: Arc::new(InFlight {
                max: max_in_flight.max(1),
                used: Mutex::new(0),
                freed: Condvar::new(),
            }),
        }
    }

    pub fn with_retry_delay(mut self, delay: Duration) -> Self {
        self.retry_delay = delay;
        self
    }

    pub fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        url: &str,
        body: &Req,
    ) -> Result<Resp, HttpError> {
        let _permit = self.in_flight.acquire();
        let mut last = String::new();
        for attempt in 1..=self.attempts {
            match self.agent.post(url).send_json(body) {
                Ok(resp) => {
                    return resp.into_json::<Resp>().map_err(|e| HttpError::Decode {
                        url: url.to_string(),
                        message: e.to_string(),
                    });
                }
                Err(ureq::Error::Status(status, resp)) if status < 500 => {
                    return Err(HttpError::Status {
                        url: url.to_string(),
                        status,
                        body: resp.into_string().unwrap_or_default(),
                    });
                }
                Err(e) => {
                    log::debug!("{url}: attempt {attempt}/{} failed: {e}", self.attempts);
                    last = e.to_string();
                }
            }
            if attempt < self.attempts {
                std::thread::sleep(self.retry_delay * attempt);
            }
        }
        Err(HttpError::Exhausted {
            url: url.to_string(),
            attempts: self.attempts,
            message: last,
        })
    }
}

/// Parses a `remote:<url>` backend selector, returning the URL.
pub fn remote_url(selector: &str) -> Option<&str> {
    selector.strip_prefix("remote:").filter(|u| !u.is_empty())
}

/// Joins a base URL and a route, tolerating a trailing slash on the base and a
/// base that already names the route.
pub fn endpoint(base: &str, route: &str) -> String {
    let base = base.trim_end_matches('/');
    if base.ends_with(route) {
        base.to_string()
    } else {
        format!("{base}{route}")
    }
}
