use std::time::Duration;

use serde_json::{json, Value};

use super::HparamError;

pub const LLM_URL_ENV: &str = "OOALIGN_LLM_URL";
pub const LLM_KEY_ENV: &str = "OOALIGN_LLM_KEY";

/// Blocking client for a JSON chat-completion endpoint. Each prompt is sent
/// as one user message; a failed request is retried once.
#[derive(Debug, Clone)]
pub struct LlmClient {
    url: String,
    key: Option<String>,
    model: Option<String>,
    timeout: Duration,
}

impl LlmClient {
    pub fn new(url: impl Into<String>) -> Self {
        Self { url: url.into(), key: None, model: None, timeout: Duration::from_secs(60) }
    }

    /// Client configured from the environment, or None when no URL is set.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(LLM_URL_ENV).ok().filter(|u| !u.trim().is_empty())?;
        let mut c = Self::new(url.trim());
        c.key = std::env::var(LLM_KEY_ENV).ok().filter(|k| !k.is_empty());
        Some(c)
    }

    pub fn with_key(mut self, key: impl Into<String>) -> Self {
        self.key = Some(key.into());
        self
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = Some(model.into());
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Request body for one prompt.
    pub fn request_body(&self, prompt: &str) -> Value {
        let mut body = json!({ "messages": [{ "role": "user", "content": prompt }], "temperature": 0 });
        if let Some(m) = &self.model {
            body["model"] = json!(m);
        }
        body
    }

    fn send(&self, prompt: &str) -> Result<String, HparamError> {
        let client = reqwest::blocking::Client::builder().timeout(self.timeout).build().map_err(|e| HparamError::Request(e.to_string()))?;
        let mut req = client.post(&self.url).header("content-type", "application/json").body(self.request_body(prompt).to_string());
        if let Some(k) = &self.key {
            req = req.bearer_auth(k);
        }
        let resp = req.send().map_err(|e| HparamError::Request(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| HparamError::Request(e.to_string()))?;
        if !status.is_success() {
            return Err(HparamError::Request(format!("{} returned {status}: {text}", self.url)));
        }
        Ok(extract_text(&text))
    }

    /// Answer text for `prompt`.
    pub fn complete(&self, prompt: &str) -> Result<String, HparamError> {
        self.send(prompt).or_else(|e| {
            log::debug!("retrying after: {e}");
            self.send(prompt)
        })
    }
}

/// Message text from common chat-completion response shapes; the raw body
/// when none applies.
pub fn extract_text(body: &str) -> String {
    let Ok(v) = serde_json::from_str::<Value>(body) else {
        return body.to_string();
    };
    let candidates = [
        v.pointer("/choices/0/message/content"),
        v.pointer("/choices/0/text"),
        v.pointer("/content/0/text"),
        v.pointer("/content"),
        v.pointer("/output_text"),
    ];
    let found = candidates.into_iter().flatten().find_map(|c| c.as_str().map(str::to_string));
    found.unwrap_or_else(|| body.to_string())
}
