use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::prompt::{ChatMessage, END, START};
use crate::error::{Error, Result};
use crate::http::JsonClient;

/// Share of mock output slots drawn from the first seed text.
const MOCK_FIRST_SHARE: f64 = 0.7;

/// Deterministic stand-in for a class-conditioned generator.
///
/// Whitespace tokens of `t1` and `t2` are merged by a seeded schedule that
/// fills `len(t1)` slots, taking the next `t1` token with probability 0.7 and
/// the next `t2` token otherwise (falling through to the other source once
/// one runs dry). Each source keeps its internal order. The class name is
/// prepended.
pub fn mock_generate(t1: &str, t2: &str, class_name: &str, seed: u64) -> String {
    let first: Vec<&str> = t1.split_whitespace().collect();
    let second: Vec<&str> = t2.split_whitespace().collect();
    let slots = if first.is_empty() {
        second.len()
    } else {
        first.len()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut i, mut j) = (0, 0);
    let mut out: Vec<&str> = Vec::with_capacity(slots + 1);
    out.push(class_name);
    for _ in 0..slots {
        let want_first = rng.random::<f64>() < MOCK_FIRST_SHARE;
        if (want_first || j == second.len()) && i < first.len() {
            out.push(first[i]);
            i += 1;
        } else if j < second.len() {
            out.push(second[j]);
            j += 1;
        } else {
            break;
        }
    }
    out.join(" ")
}

/// One interpolation request as seen by a generator backend.
#[derive(Debug, Clone)]
pub struct GenerationJob<'a> {
    /// Position of the pair in the request list.
    pub index: usize,
    pub messages: &'a [ChatMessage],
    pub anchor_text: &'a str,
    pub partner_text: &'a str,
    pub class_name: &'a str,
    pub seed: u64,
}

pub trait TextGenerator: Sync {
    /// Stable identifier recorded in provenance and cache keys.
    fn id(&self) -> String;
    /// Raw generator output, still wrapped in its markers.
    fn generate(&self, job: &GenerationJob<'_>) -> Result<String>;
}

#[derive(Debug, Clone)]
pub struct MockGenerator {
    seed: u64,
}

impl MockGenerator {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl TextGenerator for MockGenerator {
    fn id(&self) -> String {
        format!("mock-{}", self.seed)
    }

    fn generate(&self, job: &GenerationJob<'_>) -> Result<String> {
        let text = mock_generate(job.anchor_text, job.partner_text, job.class_name, job.seed);
        Ok(format!("{START}{text}{END}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ChatResponse {
    pub choices: Vec<ChatChoice>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ChatChoice {
    pub message: ChatChoiceMessage,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ChatChoiceMessage {
    #[serde(default)]
    pub content: Option<String>,
}

/// Client for an OpenAI-compatible `/v1/chat/completions` endpoint.
#[derive(Debug, Clone)]
pub struct RemoteGenerator {
    client: JsonClient,
    model: String,
    temperature: f64,
    max_tokens: u32,
}

impl RemoteGenerator {
    pub fn new(cfg: &GeneratorConfig) -> Result<Self> {
        Ok(Self {
            client: JsonClient::new(
                &cfg.endpoint,
                Duration::from_secs(cfg.timeout_secs),
                cfg.api_key_env.as_deref(),
                cfg.retries,
                Duration::from_millis(cfg.backoff_ms),
            )?,
            model: cfg.model.clone(),
            temperature: cfg.temperature,
            max_tokens: cfg.max_tokens,
        })
    }

    /// Sends one transcript and returns `choices[0].message.content`.
    pub fn complete(&self, messages: &[ChatMessage], request_index: usize) -> Result<String> {
        let body = ChatRequest {
            model: self.model.clone(),
            messages: messages.to_vec(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        };
        let resp: ChatResponse =
            self.client
                .post("/v1/chat/completions", &body, request_index, |r: &ChatResponse| {
                    match r.choices.first().and_then(|c| c.message.content.as_ref()) {
                        Some(_) => Ok(()),
                        None => Err("response has no choices[0].message.content".into()),
                    }
                })?;
        Ok(resp.choices[0]
            .message
            .content
            .clone()
            .expect("validated above"))
    }
}

impl TextGenerator for RemoteGenerator {
    fn id(&self) -> String {
        self.model.clone()
    }

    fn generate(&self, job: &GenerationJob<'_>) -> Result<String> {
        self.complete(job.messages, job.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    pub temperature: f64,
    pub model: String,
    pub endpoint: String,
    pub max_tokens: u32,
    pub retries: usize,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    pub api_key_env: Option<String>,
    /// Seed of the mock generator.
    pub seed: u64,
    /// Upper bound on concurrent generator calls.
    pub max_in_flight: usize,
    pub parse_mode: super::ParseMode,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            kind: GeneratorKind::Mock,
            temperature: 0.8,
            model: "meta-llama/Meta-Llama-3-8B-Instruct".into(),
            endpoint: "http://127.0.0.1:8000".into(),
            max_tokens: 512,
            retries: 3,
            backoff_ms: 500,
            timeout_secs: 120,
            api_key_env: None,
            seed: 0,
            max_in_flight: 4,
            parse_mode: super::ParseMode::Lenient,
        }
    }
}

impl GeneratorConfig {
    pub fn mock(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) {
            return Err(Error::invalid("generator temperature must be >= 0"));
        }
        if self.max_in_flight == 0 {
            return Err(Error::invalid("max_in_flight must be positive"));
        }
        Ok(())
    }

    /// Identifier a generator built from this config reports.
    pub fn generator_id(&self) -> String {
        match self.kind {
            GeneratorKind::Mock => MockGenerator::new(self.seed).id(),
            GeneratorKind::Remote => self.model.clone(),
        }
    }
}

pub fn build_generator(cfg: &GeneratorConfig) -> Result<Box<dyn TextGenerator>> {
    cfg.validate()?;
    Ok(match cfg.kind {
        GeneratorKind::Mock => Box::new(MockGenerator::new(cfg.seed)),
        GeneratorKind::Remote => Box::new(RemoteGenerator::new(cfg)?),
    })
}
