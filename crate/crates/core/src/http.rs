//! Blocking JSON-over-HTTP client with bounded retries, shared by the remote
//! encoder and the remote generator.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct JsonClient {
    http: reqwest::blocking::Client,
    base: String,
    api_key: Option<String>,
    retries: usize,
    backoff: Duration,
}

impl JsonClient {
    /// `api_key_env` names an environment variable; its value is sent as a
    /// bearer token and never logged.
    pub fn new(
        base: &str,
        timeout: Duration,
        api_key_env: Option<&str>,
        retries: usize,
        backoff: Duration,
    ) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let api_key = api_key_env.and_then(|name| std::env::var(name).ok());
        Ok(Self {
            http,
            base: base.trim_end_matches('/').to_string(),
            api_key,
            retries,
            backoff,
        })
    }

    pub fn attempts(&self) -> usize {
        self.retries + 1
    }

    fn post_once<B: Serialize, R: DeserializeOwned>(
        &self,
        url: &str,
        body: &B,
    ) -> std::result::Result<R, String> {
        let mut req = self.http.post(url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("HTTP status {status}"));
        }
        resp.json::<R>().map_err(|e| format!("bad response body: {e}"))
    }

    /// POSTs `body` to `{base}{path}`, retrying transport errors, non-2xx
    /// statuses, undecodable bodies and responses rejected by `validate`.
    pub fn post<B, R, F>(&self, path: &str, body: &B, batch: usize, validate: F) -> Result<R>
    where
        B: Serialize,
        R: DeserializeOwned,
        F: Fn(&R) -> std::result::Result<(), String>,
    {
        let url = format!("{}{}", self.base, path);
        let mut last = String::new();
        for attempt in 0..self.attempts() {
            if attempt > 0 {
                std::thread::sleep(self.backoff * attempt as u32);
            }
            match self.post_once::<B, R>(&url, body) {
                Ok(r) => match validate(&r) {
                    Ok(()) => return Ok(r),
                    Err(e) => last = e,
                },
                Err(e) => last = e,
            }
            log::warn!("POST {url} (batch {batch}) attempt {} failed: {last}", attempt + 1);
        }
        Err(Error::Exhausted {
            batch,
            attempts: self.attempts(),
            reason: last,
        })
    }
}
