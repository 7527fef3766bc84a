//! Uniform chat-completion access: remote OpenAI-compatible endpoints, offline
//! mocks, and replay from a recorded transcript cache.

mod cache;
mod http;
pub mod json;
mod mock;
mod ratelimit;
mod request;

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::seed;

pub use cache::{CacheRecord, ResponseCache};
pub use json::{extract_json_object, strip_thinking};
pub use mock::{Responder, SequenceResponder, StaticResponder};
pub use ratelimit::{Clock, RateLimiter, SystemClock, VirtualClock};
pub use request::{ChatRequest, Message, Role, DEFAULT_TEMPERATURE};

use http::{HttpFailure, OpenAiClient};

pub const JSON_REMINDER: &str = "Respond with valid JSON only.";
const BACKOFF_INITIAL: Duration = Duration::from_secs(1);
const BACKOFF_JITTER: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    HttpOpenaiCompatible,
    Mock,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default = "default_model")]
    pub model_id: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub max_tokens: Option<u32>,
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub credential: Option<String>,
    #[serde(default)]
    pub requests_per_minute: Option<usize>,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

fn default_model() -> String {
    "gpt-3.5-turbo-0125".into()
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

fn default_retry_limit() -> u32 {
    3
}

impl ProviderConfig {
    pub fn new(kind: ProviderKind) -> Self {
        ProviderConfig {
            kind,
            model_id: default_model(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: None,
            endpoint: None,
            credential: None,
            requests_per_minute: None,
            retry_limit: default_retry_limit(),
            cache_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) {
            return Err(Error::Configuration("temperature must be >= 0".into()));
        }
        if self.requests_per_minute == Some(0) {
            return Err(Error::Configuration("requests_per_minute must be > 0".into()));
        }
        match self.kind {
            ProviderKind::HttpOpenaiCompatible => {
                if self.endpoint.is_none() {
                    return Err(Error::Configuration("http provider needs an endpoint".into()));
                }
                if self.credential.is_none() {
                    return Err(Error::Configuration(
                        "http provider needs a credential environment variable name".into(),
                    ));
                }
                if self.requests_per_minute.is_none() {
                    return Err(Error::Configuration(
                        "http provider needs requests_per_minute".into(),
                    ));
                }
            }
            ProviderKind::Replay => {
                if self.cache_dir.is_none() {
                    return Err(Error::Configuration("replay provider needs a cache_dir".into()));
                }
            }
            ProviderKind::Mock => {}
        }
        Ok(())
    }
}

enum Backend {
    Http(OpenAiClient),
    Mock(Arc<dyn Responder>),
    Replay,
}

#[derive(Debug, Default)]
struct Counters {
    calls: AtomicU64,
    network_calls: AtomicU64,
    mock_calls: AtomicU64,
    replayed: AtomicU64,
    retries: AtomicU64,
    cache_writes: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayStats {
    pub calls: u64,
    pub network_calls: u64,
    pub mock_calls: u64,
    pub replayed: u64,
    pub retries: u64,
    pub cache_writes: u64,
}

/// A reply that never passed validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub raw: String,
    pub reason: String,
    pub attempts: usize,
}

/// Shareable chat-completion front end. Rate limiting and the cache are
/// internally synchronised.
pub struct Gateway {
    backend: Backend,
    cache: Option<Arc<ResponseCache>>,
    limiter: Option<RateLimiter>,
    retry_limit: u32,
    clock: Arc<dyn Clock>,
    jitter: Mutex<ChaCha8Rng>,
    model_id: String,
    temperature: f64,
    max_tokens: Option<u32>,
    counters: Counters,
}

impl Gateway {
    /// Build from configuration. A `mock` config needs a responder, so use
    /// [`Gateway::with_responder`] for that kind.
    pub fn from_config(config: &ProviderConfig) -> Result<Self> {
        Self::build(config, None, Arc::new(SystemClock::default()))
    }

    pub fn with_responder(config: &ProviderConfig, responder: Arc<dyn Responder>) -> Result<Self> {
        Self::build(config, Some(responder), Arc::new(SystemClock::default()))
    }

    /// Offline mock with default settings and no cache.
    pub fn mock(responder: impl Responder + 'static) -> Self {
        Self::with_responder(&ProviderConfig::new(ProviderKind::Mock), Arc::new(responder))
            .expect("default mock config is valid")
    }

    pub fn build(
        config: &ProviderConfig,
        responder: Option<Arc<dyn Responder>>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self> {
        config.validate()?;
        let backend = match config.kind {
            ProviderKind::HttpOpenaiCompatible => {
                let var = config.credential.as_deref().expect("validated");
                let key = std::env::var(var).map_err(|_| {
                    Error::Configuration(format!("credential environment variable `{var}` is not set"))
                })?;
                Backend::Http(OpenAiClient::new(config.endpoint.as_deref().expect("validated"), key)?)
            }
            ProviderKind::Mock => Backend::Mock(responder.ok_or_else(|| {
                Error::Configuration("mock provider requires a responder".into())
            })?),
            ProviderKind::Replay => Backend::Replay,
        };
        let cache = config
            .cache_dir
            .as_ref()
            .map(ResponseCache::open)
            .transpose()?
            .map(Arc::new);
        let limiter = config
            .requests_per_minute
            .map(|rpm| RateLimiter::new(rpm, clock.clone()));
        Ok(Gateway {
            backend,
            cache,
            limiter,
            retry_limit: config.retry_limit,
            clock,
            jitter: Mutex::new(seed::rng(0x6a17)),
            model_id: config.model_id.clone(),
            temperature: config.temperature,
            max_tokens: config.max_tokens,
            counters: Counters::default(),
        })
    }

    /// Request with this gateway's model, temperature and token limit.
    pub fn request(&self, messages: Vec<Message>) -> ChatRequest {
        ChatRequest::new(self.model_id.clone(), messages)
            .with_temperature(self.temperature)
            .with_max_tokens(self.max_tokens)
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_deref()
    }

    pub fn stats(&self) -> GatewayStats {
        let c = &self.counters;
        GatewayStats {
            calls: c.calls.load(Ordering::Relaxed),
            network_calls: c.network_calls.load(Ordering::Relaxed),
            mock_calls: c.mock_calls.load(Ordering::Relaxed),
            replayed: c.replayed.load(Ordering::Relaxed),
            retries: c.retries.load(Ordering::Relaxed),
            cache_writes: c.cache_writes.load(Ordering::Relaxed),
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let jitter = self
            .jitter
            .lock()
            .expect("jitter lock")
            .random_range(-BACKOFF_JITTER..=BACKOFF_JITTER);
        BACKOFF_INITIAL.mul_f64(2f64.powi(attempt as i32) * (1.0 + jitter))
    }

    /// Assistant text for `request`. Transport failures are retried with
    /// jittered exponential backoff; successful exchanges are appended to the
    /// cache when one is configured.
    pub fn complete(&self, request: &ChatRequest) -> Result<String> {
        request.validate()?;
        self.counters.calls.fetch_add(1, Ordering::Relaxed);
        if let Backend::Replay = self.backend {
            let cache = self.cache.as_ref().expect("replay has a cache");
            let reply = cache.replay(request)?;
            self.counters.replayed.fetch_add(1, Ordering::Relaxed);
            return Ok(reply);
        }
        let mut last_failure = String::new();
        for attempt in 0..=self.retry_limit {
            if attempt > 0 {
                self.counters.retries.fetch_add(1, Ordering::Relaxed);
                self.clock.sleep(self.backoff(attempt - 1));
            }
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            let outcome = match &self.backend {
                Backend::Http(client) => {
                    self.counters.network_calls.fetch_add(1, Ordering::Relaxed);
                    client.complete(request)
                }
                Backend::Mock(responder) => {
                    self.counters.mock_calls.fetch_add(1, Ordering::Relaxed);
                    responder.respond(request).map_err(|e| match e {
                        Error::Transport(msg) => HttpFailure::Retryable(msg),
                        other => HttpFailure::Fatal(other),
                    })
                }
                Backend::Replay => unreachable!(),
            };
            match outcome {
                Ok(reply) => {
                    if let Some(cache) = &self.cache {
                        cache.append(request, &reply)?;
                        self.counters.cache_writes.fetch_add(1, Ordering::Relaxed);
                    }
                    return Ok(reply);
                }
                Err(HttpFailure::Retryable(msg)) => last_failure = msg,
                Err(HttpFailure::Fatal(err)) => return Err(err),
            }
        }
        Err(Error::Transport(format!(
            "gave up after {} attempts: {last_failure}",
            self.retry_limit + 1
        )))
    }

    /// Ask, validate, and re-ask with a corrective user turn until `parse`
    /// accepts a reply or `retries` re-asks are used up.
    pub fn ask<T>(
        &self,
        request: &ChatRequest,
        retries: usize,
        reminder: &str,
        mut parse: impl FnMut(&str) -> std::result::Result<T, String>,
    ) -> Result<std::result::Result<T, Rejection>> {
        let mut current = request.clone();
        let mut last = Rejection {
            raw: String::new(),
            reason: String::new(),
            attempts: 0,
        };
        for attempt in 0..=retries {
            let raw = self.complete(&current)?;
            match parse(&raw) {
                Ok(v) => return Ok(Ok(v)),
                Err(reason) => {
                    current = request.followed_by(format!(
                        "Your previous reply could not be used ({reason}). {reminder}"
                    ));
                    last = Rejection {
                        raw,
                        reason,
                        attempts: attempt + 1,
                    };
                }
            }
        }
        Ok(Err(last))
    }

    /// Reply parsed as a JSON object. Makes at most `1 + max_json_retries`
    /// calls.
    pub fn complete_json(
        &self,
        request: &ChatRequest,
        max_json_retries: usize,
    ) -> Result<Map<String, Value>> {
        let outcome = self.ask(request, max_json_retries, JSON_REMINDER, |raw| {
            extract_json_object(raw).ok_or_else(|| "no JSON object found".to_string())
        })?;
        outcome.map_err(|r| Error::ElicitationParse { raw: r.raw })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(text: &str) -> ChatRequest {
        ChatRequest::new("m", vec![Message::user(text)])
    }

    #[test]
    fn static_mock_by_hash() {
        let r = req("say hello");
        let gw = Gateway::mock(StaticResponder::new().with_reply(&r, "hello"));
        assert_eq!(gw.complete(&r).unwrap(), "hello");
        assert!(matches!(gw.complete(&req("other")), Err(Error::Configuration(_))));
    }

    #[test]
    fn mock_is_referentially_transparent() {
        let gw = Gateway::mock(|r: &ChatRequest| Ok(format!("len={}", r.user_text().len())));
        let r = req("abc");
        assert_eq!(gw.complete(&r).unwrap(), gw.complete(&r).unwrap());
    }

    #[test]
    fn transport_failures_retry_with_backoff() {
        let clock = VirtualClock::new();
        let mut cfg = ProviderConfig::new(ProviderKind::Mock);
        cfg.retry_limit = 3;
        let responder = SequenceResponder::new([
            Err("down".to_string()),
            Err("down".to_string()),
            Ok("up".to_string()),
        ]);
        let gw = Gateway::build(&cfg, Some(Arc::new(responder)), clock.clone()).unwrap();
        assert_eq!(gw.complete(&req("x")).unwrap(), "up");
        let sleeps = clock.sleeps();
        assert_eq!(sleeps.len(), 2);
        let s0 = sleeps[0].as_secs_f64();
        let s1 = sleeps[1].as_secs_f64();
        assert!((0.8..=1.2).contains(&s0), "{s0}");
        assert!((1.6..=2.4).contains(&s1), "{s1}");
        assert_eq!(gw.stats().retries, 2);
    }

    #[test]
    fn exhausted_retries_are_transport_errors() {
        let clock = VirtualClock::new();
        let mut cfg = ProviderConfig::new(ProviderKind::Mock);
        cfg.retry_limit = 2;
        let responder = SequenceResponder::new([Err("down".to_string())]);
        let gw = Gateway::build(&cfg, Some(Arc::new(responder)), clock.clone()).unwrap();
        assert!(matches!(gw.complete(&req("x")), Err(Error::Transport(_))));
        assert_eq!(gw.stats().mock_calls, 3);
    }

    #[test]
    fn missing_credential_is_configuration_error() {
        let mut cfg = ProviderConfig::new(ProviderKind::HttpOpenaiCompatible);
        cfg.endpoint = Some("http://127.0.0.1:9".into());
        cfg.credential = Some("LLMPRIOR_TEST_SURELY_UNSET_VAR".into());
        cfg.requests_per_minute = Some(60);
        assert!(matches!(Gateway::from_config(&cfg), Err(Error::Configuration(_))));
        cfg.requests_per_minute = None;
        assert!(matches!(Gateway::from_config(&cfg), Err(Error::Configuration(_))));
    }

    #[test]
    fn json_parsing_and_retries() {
        let gw = Gateway::mock(StaticResponder::new().with_default(r#"{"a": {"mean": 0, "std": 1}}"#));
        assert_eq!(gw.complete_json(&req("q"), 3).unwrap().len(), 1);

        let gw = Gateway::mock(SequenceResponder::texts(["I cannot help"]));
        match gw.complete_json(&req("q"), 3) {
            Err(Error::ElicitationParse { raw }) => assert_eq!(raw, "I cannot help"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(gw.stats().mock_calls, 4);

        let gw = Gateway::mock(SequenceResponder::texts(["nope", "```json\n{\"b\": 2}\n```"]));
        assert_eq!(gw.complete_json(&req("q"), 3).unwrap()["b"], 2);
    }

    #[test]
    fn reask_appends_reminder_turn() {
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        let gw = Gateway::mock(move |r: &ChatRequest| {
            log.lock().unwrap().push(r.messages.len());
            Ok(if r.messages.len() == 1 { "junk".into() } else { r.messages[1].content.clone() })
        });
        let err = gw.complete_json(&req("q"), 1);
        assert!(err.is_err());
        assert_eq!(*seen.lock().unwrap(), vec![1, 2]);
    }

    #[test]
    fn record_then_replay_without_network() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ProviderConfig::new(ProviderKind::Mock);
        cfg.cache_dir = Some(dir.path().to_path_buf());
        let live = Gateway::with_responder(
            &cfg,
            Arc::new(|r: &ChatRequest| Ok(format!("echo {}", r.user_text()))),
        )
        .unwrap();
        let transcript: Vec<String> = ["a", "b", "a"].iter().map(|t| live.complete(&req(t)).unwrap()).collect();

        let mut replay_cfg = cfg.clone();
        replay_cfg.kind = ProviderKind::Replay;
        let replay = Gateway::from_config(&replay_cfg).unwrap();
        let again: Vec<String> = ["a", "b", "a"].iter().map(|t| replay.complete(&req(t)).unwrap()).collect();
        assert_eq!(transcript, again);
        assert_eq!(replay.stats().network_calls, 0);
        assert_eq!(replay.stats().replayed, 3);
        assert!(matches!(replay.complete(&req("cold")), Err(Error::CacheMiss { .. })));
    }
}
