use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;

use super::request::ChatRequest;
use crate::error::{Error, Result};

/// Anything that can answer a chat request offline.
pub trait Responder: Send + Sync {
    fn respond(&self, request: &ChatRequest) -> Result<String>;
}

impl<F> Responder for F
where
    F: Fn(&ChatRequest) -> Result<String> + Send + Sync,
{
    fn respond(&self, request: &ChatRequest) -> Result<String> {
        self(request)
    }
}

/// Fixed replies keyed by request hash, with an optional fallback.
#[derive(Debug, Clone, Default)]
pub struct StaticResponder {
    pub by_key: HashMap<String, String>,
    pub default: Option<String>,
}

impl StaticResponder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_reply(mut self, request: &ChatRequest, reply: impl Into<String>) -> Self {
        self.by_key.insert(request.cache_key(), reply.into());
        self
    }

    pub fn with_default(mut self, reply: impl Into<String>) -> Self {
        self.default = Some(reply.into());
        self
    }
}

impl Responder for StaticResponder {
    fn respond(&self, request: &ChatRequest) -> Result<String> {
        let key = request.cache_key();
        self.by_key
            .get(&key)
            .or(self.default.as_ref())
            .cloned()
            .ok_or_else(|| Error::Configuration(format!("mock has no reply for request {key}")))
    }
}

/// Replies handed out in order regardless of the request; the last entry
/// repeats once the queue is drained.
#[derive(Debug)]
pub struct SequenceResponder {
    queue: Mutex<VecDeque<Result<String, String>>>,
    last: Mutex<Option<Result<String, String>>>,
}

impl SequenceResponder {
    /// `Err` entries surface as transport failures.
    pub fn new(replies: impl IntoIterator<Item = Result<String, String>>) -> Self {
        SequenceResponder {
            queue: Mutex::new(replies.into_iter().collect()),
            last: Mutex::new(None),
        }
    }

    pub fn texts<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self::new(replies.into_iter().map(|s| Ok(s.into())))
    }
}

impl Responder for SequenceResponder {
    fn respond(&self, _request: &ChatRequest) -> Result<String> {
        let next = self.queue.lock().expect("mock lock").pop_front();
        let mut last = self.last.lock().expect("mock lock");
        let item = match next {
            Some(item) => {
                *last = Some(item.clone());
                item
            }
            None => last
                .clone()
                .ok_or_else(|| Error::Configuration("sequence mock is empty".into()))?,
        };
        item.map_err(Error::Transport)
    }
}
