//! Client for a remote text-completion service.
//!
//! Wire contract: `POST <endpoint>` with JSON `{"prompt": str, "temperature": f64}`,
//! answered by JSON `{"completion": str}`. An optional bearer token is sent in
//! the `Authorization` header. Completions are read as `key: value` lines.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::provider::{
    check_complete, ActRequest, CriticRequest, Guidance, PlanRequest, Provider, ProviderKind, ReflectRequest,
    Reflection,
};
use crate::env::catalog::Catalog;
use crate::env::tracker::StateVector;
use crate::error::{Error, Result};

pub const ENDPOINT_VAR: &str = "DEMOREC_PROVIDER_ENDPOINT";
pub const TOKEN_VAR: &str = "DEMOREC_PROVIDER_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExternalConfig {
    pub endpoint: Option<String>,
    pub token: Option<String>,
    pub timeout_secs: u64,
    pub retries: u32,
}

impl Default for ExternalConfig {
    fn default() -> Self {
        ExternalConfig {
            endpoint: None,
            token: None,
            timeout_secs: 30,
            retries: 2,
        }
    }
}

impl ExternalConfig {
    /// Environment variables take precedence over configured values.
    pub fn with_env_overrides(mut self) -> Self {
        if let Ok(endpoint) = std::env::var(ENDPOINT_VAR) {
            self.endpoint = Some(endpoint);
        }
        if let Ok(token) = std::env::var(TOKEN_VAR) {
            self.token = Some(token);
        }
        self
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    temperature: f64,
}

#[derive(Deserialize)]
struct CompletionResponse {
    completion: String,
}

pub struct ExternalProvider {
    agent: ureq::Agent,
    endpoint: String,
    token: Option<String>,
    retries: u32,
    temperature: f64,
    catalog: Arc<Catalog>,
}

impl ExternalProvider {
    pub fn new(config: &ExternalConfig, temperature: f64, catalog: Arc<Catalog>) -> Result<Self> {
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| Error::config("expert.external.endpoint", format!("not set; configure it or export {ENDPOINT_VAR}")))?;
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(Error::config("expert.temperature", "must be non-negative"));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Ok(ExternalProvider {
            agent,
            endpoint,
            token: config.token.clone(),
            retries: config.retries,
            temperature,
            catalog,
        })
    }

    fn complete(&self, prompt: &str) -> Result<String> {
        let body = CompletionRequest {
            prompt,
            temperature: self.temperature,
        };
        let mut last_error = String::new();
        for attempt in 0..=self.retries {
            let mut request = self.agent.post(&self.endpoint);
            if let Some(token) = &self.token {
                request = request.header("Authorization", format!("Bearer {token}"));
            }
            match request.send_json(&body) {
                Ok(mut response) => match response.body_mut().read_json::<CompletionResponse>() {
                    Ok(r) => return Ok(r.completion),
                    Err(e) => last_error = format!("malformed response: {e}"),
                },
                Err(e) => last_error = e.to_string(),
            }
            log::warn!("provider attempt {} failed: {last_error}", attempt + 1);
        }
        Err(Error::Provider {
            retries: self.retries,
            message: last_error,
        })
    }

    fn describe_state(&self, state: &StateVector) -> String {
        let recent: Vec<String> = state
            .history
            .iter()
            .map(|&id| format!("{id}(category {})", self.catalog.items.get(id).map_or(0, |i| i.category)))
            .collect();
        format!("step {}; recent items oldest first: [{}]", state.step_index, recent.join(", "))
    }
}

/// Value after `key:` on the first line that has it, case-insensitive.
pub fn field<'a>(completion: &'a str, key: &str) -> Option<&'a str> {
    completion.lines().find_map(|line| {
        let (k, v) = line.split_once(':')?;
        k.trim().eq_ignore_ascii_case(key).then(|| v.trim())
    })
}

/// Integers in a value such as `[3, 1, 7]` or `3 1 7`.
pub fn integers(value: &str) -> Vec<usize> {
    value
        .split(|c: char| !c.is_ascii_digit())
        .filter(|t| !t.is_empty())
        .filter_map(|t| t.parse().ok())
        .collect()
}

fn malformed(what: &str, completion: &str) -> Error {
    Error::Provider {
        retries: 0,
        message: format!("completion lacks {what}: {completion:?}"),
    }
}

impl Provider for ExternalProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::External
    }

    fn reflect(&mut self, request: &ReflectRequest<'_>) -> Result<Reflection> {
        check_complete(request.trajectory)?;
        let steps: Vec<String> = request
            .trajectory
            .transitions
            .iter()
            .map(|t| format!("item {} rated {:.2}", t.action, t.reward))
            .collect();
        let prompt = format!(
            "{}\nSession ended by {:?}:\n{}",
            request.instructions,
            request.trajectory.terminated_by,
            steps.join("\n")
        );
        let completion = self.complete(&prompt)?;
        let c = self.catalog.n_categories;
        let top_categories = field(&completion, "top_categories")
            .map(integers)
            .unwrap_or_default()
            .into_iter()
            .filter(|&k| k < c)
            .collect();
        let over_recommended = field(&completion, "over_recommended")
            .and_then(|v| integers(v).first().copied())
            .filter(|&k| k < c);
        let text = if completion.trim().is_empty() { "(empty reflection)".to_string() } else { completion };
        Ok(Reflection {
            episode: request.episode,
            text,
            top_categories,
            over_recommended,
        })
    }

    fn plan(&mut self, request: &PlanRequest<'_>) -> Result<Guidance> {
        let memories: Vec<&str> = request.reflections.iter().map(|r| r.text.as_str()).collect();
        let prompt = format!(
            "{}\nUser features: {:?}\nState: {}\nReflections:\n{}",
            request.instructions,
            request.user.side_features,
            self.describe_state(request.state),
            memories.join("\n---\n")
        );
        let completion = self.complete(&prompt)?;
        let categories: Vec<usize> = field(&completion, "categories")
            .map(integers)
            .unwrap_or_default()
            .into_iter()
            .filter(|&k| k < self.catalog.n_categories)
            .collect();
        if categories.is_empty() {
            return Err(malformed("a `categories` line", &completion));
        }
        Ok(Guidance {
            text: completion,
            categories,
        })
    }

    fn act(&mut self, request: &ActRequest<'_>) -> Result<Vec<f64>> {
        let prompt = format!(
            "{}\nState: {}\nGuidance: {}\nAllowed categories: {:?}",
            request.instructions,
            self.describe_state(request.state),
            request.guidance.text,
            request.guidance.categories
        );
        let completion = self.complete(&prompt)?;
        let item = field(&completion, "item")
            .and_then(|v| integers(v).first().copied())
            .ok_or_else(|| malformed("an `item` line", &completion))?;
        Ok(self.catalog.item(item)?.embedding.clone())
    }

    fn critic(&mut self, request: &CriticRequest<'_>) -> Result<f64> {
        let prompt = format!(
            "{}\nState: {}\nSimilar past values: {:?}",
            request.instructions,
            self.describe_state(request.state),
            request.recalled_values
        );
        let completion = self.complete(&prompt)?;
        field(&completion, "value")
            .and_then(|v| v.parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .ok_or_else(|| malformed("a numeric `value` line", &completion))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::catalog::build_synthetic_catalog;
    use crate::env::catalog::UserProfile;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::thread;

    /// Serve `responses` in order, one connection each; returns the endpoint and request bodies seen.
    fn mock_server(responses: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        let handle = thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                counter.fetch_add(1, Ordering::SeqCst);
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut content_length = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        content_length = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; content_length];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(String::from_utf8(buf).unwrap());
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            bodies
        });
        (format!("http://{addr}/complete"), hits, handle)
    }

    fn provider(endpoint: String) -> ExternalProvider {
        let (items, _) = build_synthetic_catalog(1, 20, 4, 4).unwrap();
        let catalog = Arc::new(Catalog::new(items, 4).unwrap());
        let config = ExternalConfig {
            endpoint: Some(endpoint),
            token: Some("secret".into()),
            timeout_secs: 5,
            retries: 2,
        };
        ExternalProvider::new(&config, 0.5, catalog).unwrap()
    }

    fn state() -> StateVector {
        StateVector {
            encoding: vec![],
            history: vec![1, 2],
            step_index: 2,
            terminal: false,
        }
    }

    fn user() -> UserProfile {
        UserProfile {
            id: 0,
            preference: vec![1.0, 0.0, 0.0, 0.0],
            side_features: vec![1.0],
        }
    }

    #[test]
    fn plan_and_act_parse_completions() {
        let (endpoint, _, handle) = mock_server(vec![
            (200, r#"{"completion": "categories: [2, 0, 9]"}"#.into()),
            (200, r#"{"completion": "reasoning...\nitem: 5"}"#.into()),
        ]);
        let mut p = provider(endpoint);
        let (s, u) = (state(), user());
        let g = p
            .plan(&PlanRequest {
                state: &s,
                user: &u,
                reflections: &[],
                instructions: "plan",
            })
            .unwrap();
        assert_eq!(g.categories, vec![2, 0]);
        let ind = p
            .act(&ActRequest {
                state: &s,
                user: &u,
                guidance: &g,
                recalled: &[],
                instructions: "act",
                step_seed: 0,
            })
            .unwrap();
        assert_eq!(ind, p.catalog.items[5].embedding);
        let bodies = handle.join().unwrap();
        let first: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
        assert_eq!(first["temperature"], 0.5);
        assert!(first["prompt"].as_str().unwrap().starts_with("plan"));
    }

    #[test]
    fn failures_exhaust_retries() {
        let (endpoint, hits, handle) = mock_server(vec![(500, "{}".into()), (500, "{}".into()), (500, "{}".into())]);
        let mut p = provider(endpoint);
        let (s, u) = (state(), user());
        let err = p
            .critic(&CriticRequest {
                state: &s,
                user: &u,
                recalled_values: &[],
                instructions: "",
            })
            .unwrap_err();
        handle.join().unwrap();
        assert!(matches!(err, Error::Provider { retries: 2, .. }));
        assert_eq!(err.exit_code(), 4);
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn missing_endpoint_is_configuration_error() {
        let (items, _) = build_synthetic_catalog(1, 20, 4, 4).unwrap();
        let catalog = Arc::new(Catalog::new(items, 4).unwrap());
        let err = ExternalProvider::new(&ExternalConfig::default(), 0.5, catalog).err().unwrap();
        assert!(matches!(err, Error::Config { key, .. } if key == "expert.external.endpoint"));
    }

    #[test]
    fn field_parsing() {
        assert_eq!(field("a: 1\nValue: 12.5\n", "value"), Some("12.5"));
        assert_eq!(integers("[3, 1,7]"), vec![3, 1, 7]);
        assert_eq!(field("nothing", "value"), None);
    }
}
