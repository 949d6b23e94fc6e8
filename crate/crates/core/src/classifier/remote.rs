//! HTTP-backed classifiers.
//!
//! Two wire protocols:
//!
//! - Instruction-following endpoint: OpenAI-compatible chat completion.
//!   `POST {endpoint}` with `{"model", "temperature": 0, "messages": [{"role": "user", "content": prompt}]}`;
//!   the answer is read from `choices[0].message.content`.
//! - Encoder endpoint: `POST {endpoint}` with [`EncoderRequest`], answered by
//!   [`EncoderResponse`] whose scores follow the canonical leaf order.
//!
//! Credentials are read from a named environment variable at call time and
//! sent as a bearer token.

use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::prompt::{build_prompt, parse_class_response, Exemplar, Prompt, PromptSpec};
use super::{
    check_scores, one_hot, ClassifyError, Classifier, InFlightLimit, Prediction, ScoreKind,
    PARSE_RETRIES,
};
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderResponse {
    pub scores: Vec<f64>,
    pub model_version: String,
}

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: [ChatMessage<'a>; 1],
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatContent,
}

#[derive(Debug, Deserialize)]
struct ChatContent {
    content: String,
}

/// Shared HTTP plumbing: timeout, transport retries, credentials, in-flight cap.
#[derive(Debug)]
struct HttpEndpoint {
    client: Client,
    url: String,
    credentials_env: Option<String>,
    timeout: Duration,
    retries: u32,
    limit: InFlightLimit,
}

fn retryable(status: StatusCode) -> bool {
    status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS
}

impl HttpEndpoint {
    fn new(
        url: &str,
        credentials_env: Option<String>,
        timeout: Duration,
        retries: u32,
        max_in_flight: usize,
    ) -> Result<Self, ClassifyError> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ClassifyError::Config(e.to_string()))?;
        Ok(Self {
            client,
            url: url.to_string(),
            credentials_env,
            timeout,
            retries,
            limit: InFlightLimit::new(max_in_flight),
        })
    }

    fn post<B: Serialize, R: for<'de> Deserialize<'de>>(&self, body: &B) -> Result<R, ClassifyError> {
        let token = match &self.credentials_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                ClassifyError::Config(format!("credentials variable {var} is not set"))
            })?),
            None => None,
        };
        let _slot = self.limit.acquire();
        let mut attempt = 0;
        loop {
            let mut req = self.client.post(&self.url).json(body);
            if let Some(t) = &token {
                req = req.bearer_auth(t);
            }
            let err = match req.send() {
                Ok(resp) if resp.status().is_success() => {
                    return resp
                        .json::<R>()
                        .map_err(|e| ClassifyError::Transport(format!("bad response body: {e}")));
                }
                Ok(resp) => {
                    let status = resp.status();
                    let body = resp.text().unwrap_or_default();
                    let err = ClassifyError::Http {
                        status: status.as_u16(),
                        body: body.chars().take(200).collect(),
                    };
                    if !retryable(status) {
                        return Err(err);
                    }
                    err
                }
                Err(e) if e.is_timeout() => ClassifyError::Timeout(self.timeout.as_secs_f64()),
                Err(e) => ClassifyError::Transport(e.to_string()),
            };
            if attempt >= self.retries {
                return Err(err);
            }
            attempt += 1;
            tracing::debug!(url = %self.url, attempt, error = %err, "retrying request");
            std::thread::sleep(Duration::from_millis(50 << attempt.min(6)));
        }
    }
}

/// Client for a chat-completion endpoint.
#[derive(Debug)]
pub struct ChatClient {
    endpoint: HttpEndpoint,
    model: String,
    temperature: f64,
}

impl ChatClient {
    pub fn new(
        url: &str,
        model: &str,
        credentials_env: Option<String>,
        timeout: Duration,
        retries: u32,
        max_in_flight: usize,
    ) -> Result<Self, ClassifyError> {
        Ok(Self {
            endpoint: HttpEndpoint::new(url, credentials_env, timeout, retries, max_in_flight)?,
            model: model.to_string(),
            temperature: 0.0,
        })
    }

    /// Sampling temperature; classification uses the default of 0.
    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    /// Single-turn completion.
    pub fn complete(&self, prompt: &str) -> Result<String, ClassifyError> {
        let req = ChatRequest {
            model: &self.model,
            temperature: self.temperature,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
        };
        let resp: ChatResponse = self.endpoint.post(&req)?;
        resp.choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ClassifyError::Transport("response has no choices".into()))
    }
}

/// Few-shot prompted classifier. Scores are one-hot.
#[derive(Debug)]
pub struct PromptClassifier {
    id: String,
    taxonomy: Taxonomy,
    prompt: Prompt,
    client: ChatClient,
}

impl PromptClassifier {
    pub fn new(
        id: &str,
        taxonomy: Taxonomy,
        shots: usize,
        seed: u64,
        pool: &[Exemplar],
        client: ChatClient,
    ) -> Result<Self, ClassifyError> {
        let prompt = build_prompt(&PromptSpec {
            taxonomy: &taxonomy,
            shots,
            seed,
            pool,
            locale: None,
        })
        .map_err(|e| ClassifyError::Config(e.to_string()))?;
        Ok(Self {
            id: id.to_string(),
            taxonomy,
            prompt,
            client,
        })
    }

    pub fn prompt(&self) -> &Prompt {
        &self.prompt
    }
}

impl Classifier for PromptClassifier {
    fn id(&self) -> &str {
        &self.id
    }

    fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    fn score_kind(&self) -> ScoreKind {
        ScoreKind::OneHot
    }

    fn shots(&self) -> Option<usize> {
        Some(self.prompt.shots())
    }

    fn classify(&self, text: &str) -> Result<Prediction, ClassifyError> {
        let start = std::time::Instant::now();
        let prompt = self.prompt.render(text);
        let mut last = String::new();
        for _ in 0..=PARSE_RETRIES {
            last = self.client.complete(&prompt)?;
            if let Ok(label) = parse_class_response(&self.taxonomy, &last) {
                let i = self.taxonomy.index_of(&label).expect("parsed from taxonomy");
                return Ok(Prediction {
                    label_id: label,
                    scores: one_hot(self.taxonomy.len(), i),
                    latency: start.elapsed().as_secs_f64(),
                    backend_id: self.id.clone(),
                });
            }
            tracing::debug!(backend = %self.id, response = %last, "unparseable class response");
        }
        Err(ClassifyError::Unparseable {
            attempts: PARSE_RETRIES + 1,
            last,
        })
    }
}

/// Remote encoder returning probabilistic scores.
#[derive(Debug)]
pub struct EncoderClassifier {
    id: String,
    taxonomy: Taxonomy,
    endpoint: HttpEndpoint,
}

impl EncoderClassifier {
    pub fn new(
        id: &str,
        taxonomy: Taxonomy,
        url: &str,
        credentials_env: Option<String>,
        timeout: Duration,
        retries: u32,
        max_in_flight: usize,
    ) -> Result<Self, ClassifyError> {
        Ok(Self {
            id: id.to_string(),
            taxonomy,
            endpoint: HttpEndpoint::new(url, credentials_env, timeout, retries, max_in_flight)?,
        })
    }
}

impl Classifier for EncoderClassifier {
    fn id(&self) -> &str {
        &self.id
    }

    fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    fn score_kind(&self) -> ScoreKind {
        ScoreKind::Probabilistic
    }

    fn classify(&self, text: &str) -> Result<Prediction, ClassifyError> {
        let start = std::time::Instant::now();
        let resp: EncoderResponse = self.endpoint.post(&EncoderRequest {
            text: text.to_string(),
        })?;
        check_scores(&resp.scores, self.taxonomy.len(), ScoreKind::Probabilistic)?;
        Prediction::from_scores(
            &self.taxonomy,
            resp.scores,
            start.elapsed().as_secs_f64(),
            &self.id,
        )
    }
}
