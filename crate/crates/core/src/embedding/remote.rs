use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{truncate_embedding, EmbeddingProvider, EmbeddingVector, ProviderConfig, API_KEY_ENV};
use crate::error::{Error, Result};

const ATTEMPTS: u32 = 4;
const BASE_BACKOFF: Duration = Duration::from_millis(250);

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    inputs: &'a [&'a str],
    dimensions: usize,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// HTTP embedding client. POSTs `{model, inputs, dimensions}` and expects
/// `{vectors}` back; native vectors are truncated to the target dimension.
pub struct RemoteEmbedder {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    native_dim: usize,
    target_dim: usize,
    renormalize: bool,
    api_key: Option<String>,
    slots: Semaphore,
}

impl RemoteEmbedder {
    pub fn from_config(cfg: &ProviderConfig) -> Result<Self> {
        cfg.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        Ok(RemoteEmbedder {
            agent,
            endpoint: cfg.endpoint.clone().unwrap_or_default(),
            model: cfg.model_name.clone().unwrap_or_default(),
            native_dim: cfg.native_dim,
            target_dim: cfg.target_dim,
            renormalize: cfg.renormalize,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            slots: Semaphore::new(cfg.max_in_flight),
        })
    }

    fn request(&self, inputs: &[&str]) -> std::result::Result<EmbedResponse, (bool, String)> {
        let body = EmbedRequest {
            model: &self.model,
            inputs,
            dimensions: self.native_dim,
        };
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        match req.send_json(&body) {
            Ok(mut resp) => resp
                .body_mut()
                .read_json::<EmbedResponse>()
                .map_err(|e| (false, format!("bad response body: {e}"))),
            Err(ureq::Error::StatusCode(code)) => {
                let retry = code == 429 || code >= 500;
                Err((retry, format!("http status {code}")))
            }
            Err(e @ (ureq::Error::Timeout(_) | ureq::Error::Io(_) | ureq::Error::ConnectionFailed)) => {
                Err((true, e.to_string()))
            }
            Err(e) => Err((false, e.to_string())),
        }
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn fingerprint(&self) -> String {
        format!(
            "remote:{}:{}:native={}:dim={}:renorm={}",
            self.endpoint, self.model, self.native_dim, self.target_dim, self.renormalize
        )
    }

    fn dim(&self) -> usize {
        self.target_dim
    }

    fn embed_raw(&self, inputs: &[&str]) -> Result<Vec<EmbeddingVector>> {
        let _slot = self.slots.acquire();
        let mut last = String::new();
        for attempt in 0..ATTEMPTS {
            if attempt > 0 {
                std::thread::sleep(BASE_BACKOFF * 2u32.pow(attempt - 1));
            }
            match self.request(inputs) {
                Ok(resp) => {
                    if resp.vectors.len() != inputs.len() {
                        return Err(Error::Provider(format!(
                            "endpoint returned {} vectors for {} inputs",
                            resp.vectors.len(),
                            inputs.len()
                        )));
                    }
                    return resp
                        .vectors
                        .iter()
                        .map(|v| {
                            if v.len() != self.native_dim {
                                return Err(Error::Provider(format!(
                                    "endpoint returned a {}-d vector, expected {}",
                                    v.len(),
                                    self.native_dim
                                )));
                            }
                            truncate_embedding(v, self.target_dim, self.renormalize)
                        })
                        .collect();
                }
                Err((true, msg)) => last = msg,
                Err((false, msg)) => return Err(Error::Provider(msg)),
            }
        }
        Err(Error::Provider(format!(
            "giving up after {ATTEMPTS} attempts: {last}"
        )))
    }
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("semaphore lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("semaphore lock");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore lock") += 1;
        self.0.cv.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unreachable_endpoint_is_a_provider_error() {
        let mut cfg = ProviderConfig::remote("http://127.0.0.1:9/embed", "test", 8);
        cfg.target_dim = 4;
        let p = RemoteEmbedder::from_config(&cfg).unwrap();
        assert_eq!(p.dim(), 4);
        assert!(matches!(p.embed_raw(&["x"]), Err(Error::Provider(_))));
    }
}
