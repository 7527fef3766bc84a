//! Append-only, content-addressed transcript store.
//!
//! Each exchange is one JSON file `<seq>-<key prefix>.json` holding
//! `{key, request, response, timestamp}`. Files are written to a temporary
//! name and renamed into place, so readers never see a partial record.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::request::ChatRequest;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: String,
    pub request: ChatRequest,
    pub response: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug, Default)]
struct Index {
    responses: HashMap<String, Vec<String>>,
    cursors: HashMap<String, usize>,
    next_seq: u64,
}

#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    index: Mutex<Index>,
}

impl ResponseCache {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let mut index = Index::default();
        for path in &files {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let record: CacheRecord = serde_json::from_str(&text)?;
            index.responses.entry(record.key).or_default().push(record.response);
        }
        index.next_seq = files.len() as u64;
        Ok(ResponseCache {
            dir,
            index: Mutex::new(index),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.index.lock().expect("cache lock").responses.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn append(&self, request: &ChatRequest, response: &str) -> Result<()> {
        let key = request.cache_key();
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        let record = CacheRecord {
            key: key.clone(),
            request: request.clone(),
            response: response.to_string(),
            timestamp,
        };
        let body = serde_json::to_string_pretty(&record)?;
        let mut index = self.index.lock().expect("cache lock");
        let name = format!("{:010}-{}.json", index.next_seq, &key[..16]);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        let path = self.dir.join(&name);
        fs::write(&tmp, body).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        index.next_seq += 1;
        index.responses.entry(key).or_default().push(response.to_string());
        Ok(())
    }

    /// Next recorded response for this request. Repeated identical requests
    /// replay their recordings in order; past the end the last one repeats.
    pub fn replay(&self, request: &ChatRequest) -> Result<String> {
        let key = request.cache_key();
        let mut index = self.index.lock().expect("cache lock");
        let Index {
            responses, cursors, ..
        } = &mut *index;
        let recorded = responses.get(&key).ok_or_else(|| Error::CacheMiss { key: key.clone() })?;
        let cursor = cursors.entry(key).or_insert(0);
        let out = recorded[(*cursor).min(recorded.len() - 1)].clone();
        *cursor += 1;
        Ok(out)
    }

    pub fn contains(&self, request: &ChatRequest) -> bool {
        self.index
            .lock()
            .expect("cache lock")
            .responses
            .contains_key(&request.cache_key())
    }
}
