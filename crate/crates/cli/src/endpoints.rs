//! Endpoint selection: `mock://rigged?p=..&seed=..` for the deterministic
//! in-process endpoint, anything http(s) for the real client.

use anyhow::{anyhow, bail, Result};
use clap::Args;

use physrl_core::dataset::McqItem;
use physrl_core::rollout::{CompletionBackend, EndpointConfig, HttpEndpoint, MockEndpoint};

#[derive(Debug, Args)]
pub struct EndpointArgs {
    /// Endpoint base URL, e.g. http://host:8000/v1 or mock://rigged?p=0.7&seed=1
    #[arg(long)]
    pub endpoint: String,
    /// Environment variable holding the bearer token (never a flag or file).
    #[arg(long)]
    pub auth_env: Option<String>,
    #[arg(long, default_value_t = 120.0)]
    pub timeout: f64,
    #[arg(long, default_value_t = 3)]
    pub max_retries: u32,
    #[arg(long, default_value_t = 0.5)]
    pub backoff_base: f64,
    #[arg(long, default_value_t = 16)]
    pub max_in_flight: usize,
    #[arg(long, default_value = "default")]
    pub model: String,
}

impl EndpointArgs {
    fn http_config(&self) -> EndpointConfig {
        EndpointConfig {
            base_url: self.endpoint.clone(),
            auth_token_env: self.auth_env.clone(),
            timeout_secs: self.timeout,
            max_retries: self.max_retries,
            backoff_base_secs: self.backoff_base,
            max_in_flight: self.max_in_flight,
            model: self.model.clone(),
        }
    }

    /// Build the backend. Mock endpoints get their answer key from `items`.
    pub fn build(
        &self,
        items: &[McqItem],
        default_seed: u64,
    ) -> Result<Box<dyn CompletionBackend>> {
        if let Some(rest) = self.endpoint.strip_prefix("mock://") {
            let (mode, params) = rest.split_once('?').unwrap_or((rest, ""));
            let mut p = 0.5_f64;
            let mut seed = default_seed;
            for pair in params.split('&').filter(|s| !s.is_empty()) {
                let (key, value) = pair
                    .split_once('=')
                    .ok_or_else(|| anyhow!("bad mock parameter '{pair}'"))?;
                match key {
                    "p" => p = value.parse()?,
                    "seed" => seed = value.parse()?,
                    other => bail!("unknown mock parameter '{other}'"),
                }
            }
            match mode {
                "rigged" => {
                    if !(0.0..=1.0).contains(&p) {
                        bail!("mock p must be in [0, 1], got {p}");
                    }
                    Ok(Box::new(
                        MockEndpoint::rigged(p, seed).with_answer_key(items),
                    ))
                }
                other => bail!("unknown mock endpoint mode '{other}' (expected 'rigged')"),
            }
        } else if self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://") {
            Ok(Box::new(HttpEndpoint::new(self.http_config())?))
        } else {
            bail!(
                "endpoint '{}' must start with http://, https://, or mock://",
                self.endpoint
            )
        }
    }
}
