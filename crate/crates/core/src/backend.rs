//! Text-generation and embedding providers.
//!
//! Three implementations share the [`Backend`] trait:
//!
//! - [`RemoteBackend`] speaks the JSON-over-HTTP protocol (`/generate`,
//!   `/embed`, `/classify`, `/health`) served by the inference sidecar.
//! - [`ReplayBackend`] returns recorded generations (and optionally
//!   embeddings) keyed by record id.
//! - [`StubBackend`] is a seeded, dependency-free stand-in used for tests and
//!   offline runs.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::similarity::{EmbeddingVector, SimilarityError};
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    Replay,
    Stub,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "remote" => Ok(BackendKind::Remote),
            "replay" => Ok(BackendKind::Replay),
            "stub" => Ok(BackendKind::Stub),
            other => Err(format!("unknown backend kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_path: Option<PathBuf>,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_max_new_tokens() -> u32 {
    32
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    2
}

impl BackendConfig {
    pub fn stub(seed: u64) -> Self {
        BackendConfig {
            kind: BackendKind::Stub,
            endpoint: None,
            fixture_path: None,
            max_new_tokens: default_max_new_tokens(),
            seed,
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_new_tokens == 0 {
            return Err(BackendError::Config("max_new_tokens must be at least 1".into()));
        }
        match self.kind {
            BackendKind::Remote if self.endpoint.is_none() => {
                Err(BackendError::Config("remote backend requires `endpoint`".into()))
            }
            BackendKind::Replay if self.fixture_path.is_none() => {
                Err(BackendError::Config("replay backend requires `fixture_path`".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("no fixture entry for id `{0}`")]
    FixtureMiss(String),
    #[error("fixture unavailable: {0}")]
    Fixture(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Embedding(#[from] SimilarityError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HealthStatus {
    Ready,
    Unavailable(String),
}

impl HealthStatus {
    pub fn is_ready(&self) -> bool {
        matches!(self, HealthStatus::Ready)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResult {
    pub generated_text: String,
    pub backend_kind: BackendKind,
    pub latency: Duration,
}

pub trait Backend: Send + Sync {
    fn kind(&self) -> BackendKind;

    fn health_check(&self) -> HealthStatus;

    /// Continuation of `prompt`. `id` identifies the source record.
    fn generate_text(&self, id: &str, prompt: &str) -> Result<GenerationResult, BackendError>;

    fn embed_text(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, BackendError>;

    /// Embeddings of a record's original and generated text.
    fn embed_pair(
        &self,
        _id: &str,
        original: &str,
        generated: &str,
    ) -> Result<(EmbeddingVector, EmbeddingVector), BackendError> {
        let mut v = self.embed_text(&[original, generated])?;
        let gen = v.pop().ok_or_else(|| BackendError::Protocol("missing embedding".into()))?;
        let orig = v.pop().ok_or_else(|| BackendError::Protocol("missing embedding".into()))?;
        Ok((orig, gen))
    }
}

pub fn build_backend(config: &BackendConfig) -> Result<Box<dyn Backend>, BackendError> {
    config.validate()?;
    Ok(match config.kind {
        BackendKind::Stub => Box::new(StubBackend::new(config.seed, config.max_new_tokens)),
        BackendKind::Replay => Box::new(ReplayBackend::open(
            config.fixture_path.as_deref().expect("validated"),
        )),
        BackendKind::Remote => Box::new(RemoteBackend::new(config)),
    })
}

/// 64-bit FNV-1a; stable across platforms and releases.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub const STUB_EMBEDDING_DIM: usize = 64;

/// Words mixed into stub generations alongside the prompt's own vocabulary.
pub const STUB_SYNTHETIC_VOCAB: [&str; 12] = [
    "جدا", "اليوم", "دائما", "كثيرا", "الجميع", "هنا", "ايضا", "حقا", "مكان", "كل", "في", "وقت",
];

/// Hashed bag-of-tokens embedding, L2-normalised. Empty text maps to the zero
/// vector.
pub fn hashed_embedding(text: &str) -> EmbeddingVector {
    let mut v = vec![0.0f64; STUB_EMBEDDING_DIM];
    for tok in tokenize(text) {
        v[(fnv1a64(tok.as_bytes()) % STUB_EMBEDDING_DIM as u64) as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    EmbeddingVector::new(v).expect("finite by construction")
}

#[derive(Debug, Clone)]
pub struct StubBackend {
    seed: u64,
    max_new_tokens: u32,
}

impl StubBackend {
    pub fn new(seed: u64, max_new_tokens: u32) -> Self {
        StubBackend {
            seed,
            max_new_tokens,
        }
    }

    /// Three to eight tokens drawn from the prompt's vocabulary and
    /// [`STUB_SYNTHETIC_VOCAB`]; a pure function of `(prompt, seed)`.
    pub fn continuation(&self, prompt: &str) -> String {
        let mut pool: Vec<String> = Vec::new();
        for tok in tokenize(prompt) {
            if !pool.contains(&tok) {
                pool.push(tok);
            }
        }
        for w in STUB_SYNTHETIC_VOCAB {
            if !pool.iter().any(|p| p == w) {
                pool.push(w.to_string());
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a64(prompt.as_bytes()));
        let n = rng.random_range(3..=8usize).min(self.max_new_tokens as usize);
        (0..n)
            .map(|_| pool[rng.random_range(0..pool.len())].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl Backend for StubBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Stub
    }

    fn health_check(&self) -> HealthStatus {
        HealthStatus::Ready
    }

    fn generate_text(&self, _id: &str, prompt: &str) -> Result<GenerationResult, BackendError> {
        let start = Instant::now();
        let generated_text = self.continuation(prompt);
        Ok(GenerationResult {
            generated_text,
            backend_kind: BackendKind::Stub,
            latency: start.elapsed(),
        })
    }

    fn embed_text(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, BackendError> {
        Ok(texts.iter().map(|t| hashed_embedding(t)).collect())
    }
}

/// One line of a replay fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub id: String,
    pub generated: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orig_embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen_embedding: Option<Vec<f64>>,
}

/// Recorded generations keyed by record id. Records whose entry carries no
/// embeddings, and plain [`Backend::embed_text`] calls, fall back to
/// [`hashed_embedding`].
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    path: PathBuf,
    entries: Result<HashMap<String, ReplayEntry>, String>,
}

impl ReplayBackend {
    pub fn open(path: &Path) -> Self {
        ReplayBackend {
            path: path.to_path_buf(),
            entries: Self::read(path),
        }
    }

    fn read(path: &Path) -> Result<HashMap<String, ReplayEntry>, String> {
        let file = File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => "fixture not found".to_string(),
            _ => format!("{}: {e}", path.display()),
        })?;
        let mut entries = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ReplayEntry =
                serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?;
            entries.insert(entry.id.clone(), entry);
        }
        Ok(entries)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn entries(&self) -> Result<&HashMap<String, ReplayEntry>, BackendError> {
        self.entries.as_ref().map_err(|e| BackendError::Fixture(e.clone()))
    }

    fn entry(&self, id: &str) -> Result<&ReplayEntry, BackendError> {
        self.entries()?
            .get(id)
            .ok_or_else(|| BackendError::FixtureMiss(id.to_string()))
    }
}

impl Backend for ReplayBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Replay
    }

    fn health_check(&self) -> HealthStatus {
        match &self.entries {
            Ok(_) => HealthStatus::Ready,
            Err(reason) => HealthStatus::Unavailable(reason.clone()),
        }
    }

    fn generate_text(&self, id: &str, _prompt: &str) -> Result<GenerationResult, BackendError> {
        let start = Instant::now();
        let entry = self.entry(id)?;
        Ok(GenerationResult {
            generated_text: entry.generated.clone(),
            backend_kind: BackendKind::Replay,
            latency: start.elapsed(),
        })
    }

    fn embed_text(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, BackendError> {
        self.entries()?;
        Ok(texts.iter().map(|t| hashed_embedding(t)).collect())
    }

    fn embed_pair(
        &self,
        id: &str,
        original: &str,
        generated: &str,
    ) -> Result<(EmbeddingVector, EmbeddingVector), BackendError> {
        let entry = self.entry(id)?;
        match (&entry.orig_embedding, &entry.gen_embedding) {
            (Some(o), Some(g)) => {
                if o.len() != g.len() {
                    return Err(BackendError::Protocol(format!(
                        "fixture `{id}` embeddings differ in dimension ({} vs {})",
                        o.len(),
                        g.len()
                    )));
                }
                Ok((EmbeddingVector::new(o.clone())?, EmbeddingVector::new(g.clone())?))
            }
            _ => Ok((hashed_embedding(original), hashed_embedding(generated))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub id: String,
    pub text: String,
    pub max_new_tokens: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub generated: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub embeddings: Vec<Vec<f64>>,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub texts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub predicted: Vec<String>,
    pub scores: Vec<Vec<f64>>,
    pub label_order: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    #[serde(default)]
    pub models: Vec<String>,
}

/// Body of a failed sidecar request (HTTP 5xx).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
}

/// Validates an `/embed` response against the request size.
pub fn check_embed_response(resp: EmbedResponse, expected: usize) -> Result<Vec<EmbeddingVector>, BackendError> {
    if resp.embeddings.len() != expected {
        return Err(BackendError::Protocol(format!(
            "expected {expected} embeddings, got {}",
            resp.embeddings.len()
        )));
    }
    if resp.dim == 0 {
        return Err(BackendError::Protocol("embedding dim is 0".into()));
    }
    resp.embeddings
        .into_iter()
        .enumerate()
        .map(|(i, e)| {
            if e.len() != resp.dim {
                return Err(BackendError::Protocol(format!(
                    "embedding {i} has dimension {} but dim = {}",
                    e.len(),
                    resp.dim
                )));
            }
            Ok(EmbeddingVector::new(e)?)
        })
        .collect()
}

/// Client for the inference sidecar.
pub struct RemoteBackend {
    endpoint: String,
    agent: ureq::Agent,
    max_new_tokens: u32,
    seed: u64,
    retries: u32,
}

impl RemoteBackend {
    pub fn new(config: &BackendConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout()))
            .build()
            .into();
        RemoteBackend {
            endpoint: config
                .endpoint
                .clone()
                .unwrap_or_default()
                .trim_end_matches('/')
                .to_string(),
            agent,
            max_new_tokens: config.max_new_tokens,
            seed: config.seed,
            retries: config.retries,
        }
    }

    fn url(&self, route: &str) -> String {
        format!("{}{route}", self.endpoint)
    }

    /// Runs `call` up to `1 + retries` times, retrying timeouts and transport
    /// failures only.
    fn with_retries<T>(&self, mut call: impl FnMut() -> Result<T, ureq::Error>) -> Result<T, BackendError> {
        let attempts = self.retries + 1;
        let mut last = BackendError::Transport("no attempt made".into());
        for attempt in 1..=attempts {
            match call() {
                Ok(v) => return Ok(v),
                Err(ureq::Error::Timeout(_)) => last = BackendError::Timeout { attempts: attempt },
                Err(ureq::Error::StatusCode(code)) if code < 500 => {
                    return Err(BackendError::Protocol(format!("HTTP {code}")))
                }
                Err(ureq::Error::StatusCode(code)) => last = BackendError::Transport(format!("HTTP {code}")),
                Err(ureq::Error::Json(e)) => return Err(BackendError::Protocol(e.to_string())),
                Err(e) => last = BackendError::Transport(e.to_string()),
            }
            log::debug!("attempt {attempt}/{attempts} failed: {last}");
        }
        Err(last)
    }

    fn post<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
        &self,
        route: &str,
        body: &Req,
    ) -> Result<Resp, BackendError> {
        let url = self.url(route);
        self.with_retries(|| self.agent.post(&url).send_json(body)?.body_mut().read_json::<Resp>())
    }

    pub fn health(&self) -> Result<HealthResponse, BackendError> {
        let url = self.url("/health");
        self.with_retries(|| self.agent.get(&url).call()?.body_mut().read_json::<HealthResponse>())
    }

    pub fn classify(&self, texts: &[&str], labels: Option<&[String]>) -> Result<ClassifyResponse, BackendError> {
        let req = ClassifyRequest {
            texts: texts.iter().map(|t| t.to_string()).collect(),
            labels: labels.map(<[String]>::to_vec),
        };
        let resp: ClassifyResponse = self.post("/classify", &req)?;
        if resp.predicted.len() != texts.len() || resp.scores.len() != texts.len() {
            return Err(BackendError::Protocol("classify response length mismatch".into()));
        }
        if resp.scores.iter().any(|row| row.len() != resp.label_order.len()) {
            return Err(BackendError::Protocol("score row width differs from label_order".into()));
        }
        Ok(resp)
    }
}

impl Backend for RemoteBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Remote
    }

    fn health_check(&self) -> HealthStatus {
        match self.health() {
            Ok(h) if h.status == "ok" => HealthStatus::Ready,
            Ok(h) => HealthStatus::Unavailable(format!("status `{}`", h.status)),
            Err(e) => HealthStatus::Unavailable(e.to_string()),
        }
    }

    fn generate_text(&self, id: &str, prompt: &str) -> Result<GenerationResult, BackendError> {
        let start = Instant::now();
        let req = GenerateRequest {
            id: id.to_string(),
            text: prompt.to_string(),
            max_new_tokens: self.max_new_tokens,
            seed: self.seed,
        };
        let resp: GenerateResponse = self.post("/generate", &req)?;
        Ok(GenerationResult {
            generated_text: resp.generated,
            backend_kind: BackendKind::Remote,
            latency: start.elapsed(),
        })
    }

    fn embed_text(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, BackendError> {
        let req = EmbedRequest {
            texts: texts.iter().map(|t| t.to_string()).collect(),
        };
        let resp: EmbedResponse = self.post("/embed", &req)?;
        check_embed_response(resp, texts.len())
    }
}
