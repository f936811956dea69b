//! Blocking JSON-over-HTTP helper shared by the detection and embedding clients.

use std::time::Duration;

use serde::{de::DeserializeOwned, Serialize};

use crate::error::{Error, Result};

/// Connection settings for a remote inference service.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub endpoint: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Extra attempts after a timed-out request.
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    2
}

impl ServiceConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        ServiceConfig {
            endpoint: endpoint.into(),
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
        }
    }
}

pub(crate) struct JsonClient {
    agent: ureq::Agent,
    config: ServiceConfig,
}

impl JsonClient {
    pub(crate) fn new(config: ServiceConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build()
            .into();
        JsonClient { agent, config }
    }

    /// POST `body` and decode the reply. Timeouts are retried up to
    /// `config.retries` times; every other failure is returned immediately.
    pub(crate) fn post<B: Serialize, R: DeserializeOwned>(&self, body: &B) -> Result<R> {
        let attempts = self.config.retries + 1;
        for attempt in 1..=attempts {
            match self.agent.post(&self.config.endpoint).send_json(body) {
                Ok(mut resp) => {
                    let text = resp
                        .body_mut()
                        .read_to_string()
                        .map_err(|e| classify(e, attempt))?;
                    return serde_json::from_str(&text).map_err(|e| Error::Body(e.to_string()));
                }
                Err(e) if is_timeout(&e) => {
                    log::warn!(
                        "request to {} timed out (attempt {attempt}/{attempts})",
                        self.config.endpoint
                    );
                }
                Err(e) => return Err(classify(e, attempt)),
            }
        }
        Err(Error::Timeout { attempts })
    }
}

fn is_timeout(e: &ureq::Error) -> bool {
    match e {
        ureq::Error::Timeout(_) => true,
        ureq::Error::Io(io) => matches!(
            io.kind(),
            std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock
        ),
        _ => false,
    }
}

fn classify(e: ureq::Error, attempt: u32) -> Error {
    if is_timeout(&e) {
        return Error::Timeout { attempts: attempt };
    }
    match e {
        ureq::Error::StatusCode(code) => Error::Status(code),
        ureq::Error::Json(e) => Error::Body(e.to_string()),
        other => Error::Transport(other.to_string()),
    }
}
