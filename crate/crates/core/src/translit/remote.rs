//! HTTP transliteration client with an on-disk sentence cache.
//!
//! Wire format: `POST <url>` with a JSON array of UTF-8 sentences as the
//! body; the service answers with a JSON array of the same length holding
//! the transliterations in order.
//!
//! Cache format: one record per line, `<fnv64 hex> TAB <json sentence>
//! TAB <json result>`. The file is append-only; writers take an exclusive
//! advisory lock for each append.

use std::collections::HashMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::seed::fnv1a;

pub const CACHE_DIR_ENV: &str = "SHA_ASR_CACHE_DIR";
const CACHE_FILE: &str = "translit-cache.tsv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    Status(u16),
    Timeout,
    Io(String),
}

impl fmt::Display for TransportError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransportError::Status(c) => write!(f, "HTTP status {c}"),
            TransportError::Timeout => f.write_str("timed out"),
            TransportError::Io(e) => f.write_str(e),
        }
    }
}

pub trait Transport: Send + Sync + fmt::Debug {
    /// POSTs a JSON body and returns the response body.
    fn post_json(&self, url: &str, body: &str, timeout: Duration) -> Result<String, TransportError>;
}

#[derive(Debug, Default)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn post_json(&self, url: &str, body: &str, timeout: Duration) -> Result<String, TransportError> {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        match agent
            .post(url)
            .set("Content-Type", "application/json")
            .send_string(body)
        {
            Ok(resp) => resp.into_string().map_err(|e| TransportError::Io(e.to_string())),
            Err(ureq::Error::Status(code, _)) => Err(TransportError::Status(code)),
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                if msg.contains("timed out") {
                    Err(TransportError::Timeout)
                } else {
                    Err(TransportError::Io(msg))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub url: String,
    pub timeout: Duration,
    /// Total attempts per request, including the first.
    pub attempts: u32,
    pub max_in_flight: usize,
    /// Sentences per request.
    pub batch_size: usize,
    /// Delay before the second attempt; doubles after each failure.
    pub backoff: Duration,
    pub cache_path: Option<PathBuf>,
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            timeout: Duration::from_secs(10),
            attempts: 3,
            max_in_flight: 4,
            batch_size: 16,
            backoff: Duration::from_millis(200),
            cache_path: default_cache_path(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.url.is_empty() {
            return Err(Error::Config("remote transliteration needs an endpoint URL".into()));
        }
        if self.attempts == 0 || self.max_in_flight == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "attempts, max_in_flight and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `$SHA_ASR_CACHE_DIR/translit-cache.tsv` when the variable is set.
pub fn default_cache_path() -> Option<PathBuf> {
    std::env::var_os(CACHE_DIR_ENV).map(|d| PathBuf::from(d).join(CACHE_FILE))
}

#[derive(Debug, Default)]
pub struct TranslitCache {
    path: Option<PathBuf>,
    entries: HashMap<String, String>,
}

pub fn sentence_hash(sentence: &str) -> String {
    format!("{:016x}", fnv1a(sentence.as_bytes()))
}

/// Parses one cache record into `(sentence, result)`.
pub fn parse_cache_record(line: &str) -> std::result::Result<(String, String), String> {
    let mut parts = line.splitn(3, '\t');
    let (Some(hash), Some(src), Some(dst)) = (parts.next(), parts.next(), parts.next()) else {
        return Err("expected three tab-separated fields".into());
    };
    let src: String = serde_json::from_str(src).map_err(|e| format!("sentence: {e}"))?;
    let dst: String = serde_json::from_str(dst).map_err(|e| format!("result: {e}"))?;
    if sentence_hash(&src) != hash {
        return Err(format!("hash {hash} does not match sentence"));
    }
    Ok((src, dst))
}

pub fn render_cache_record(sentence: &str, result: &str) -> String {
    format!(
        "{}\t{}\t{}\n",
        sentence_hash(sentence),
        serde_json::to_string(sentence).expect("string serialises"),
        serde_json::to_string(result).expect("string serialises")
    )
}

impl TranslitCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(path)?;
            for (i, line) in text.lines().enumerate() {
                if line.is_empty() {
                    continue;
                }
                let (src, dst) = parse_cache_record(line).map_err(|m| Error::parse(i + 1, m))?;
                entries.insert(src, dst);
            }
        }
        Ok(Self {
            path: Some(path.to_path_buf()),
            entries,
        })
    }

    pub fn get(&self, sentence: &str) -> Option<&String> {
        self.entries.get(sentence)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, sentence: String, result: String) -> Result<()> {
        if let Some(path) = &self.path {
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            let file: File = OpenOptions::new().create(true).append(true).open(path)?;
            file.lock()?;
            let write = (&file).write_all(render_cache_record(&sentence, &result).as_bytes());
            file.unlock()?;
            write?;
        }
        self.entries.insert(sentence, result);
        Ok(())
    }
}

#[derive(Debug)]
pub struct RemoteClient {
    cfg: RemoteConfig,
    transport: Arc<dyn Transport>,
    cache: Mutex<TranslitCache>,
}

impl RemoteClient {
    pub fn new(cfg: RemoteConfig) -> Result<Self> {
        Self::with_transport(cfg, Arc::new(HttpTransport))
    }

    pub fn with_transport(cfg: RemoteConfig, transport: Arc<dyn Transport>) -> Result<Self> {
        cfg.validate()?;
        let cache = match &cfg.cache_path {
            Some(p) => TranslitCache::open(p)?,
            None => TranslitCache::in_memory(),
        };
        Ok(Self {
            cfg,
            transport,
            cache: Mutex::new(cache),
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    fn request(&self, batch: &[String]) -> Result<Vec<String>> {
        let body = serde_json::to_string(batch).expect("strings serialise");
        let mut delay = self.cfg.backoff;
        let mut last = None;
        for attempt in 0..self.cfg.attempts {
            if attempt > 0 {
                thread::sleep(delay);
                delay *= 2;
            }
            match self.transport.post_json(&self.cfg.url, &body, self.cfg.timeout) {
                Ok(text) => {
                    let out: Vec<String> = serde_json::from_str(&text)
                        .map_err(|e| Error::Service(format!("malformed response: {e}")))?;
                    if out.len() != batch.len() {
                        return Err(Error::Service(format!(
                            "{} results for {} sentences",
                            out.len(),
                            batch.len()
                        )));
                    }
                    return Ok(out);
                }
                Err(e) => last = Some(e),
            }
        }
        Err(Error::Service(format!(
            "{} attempt(s) failed, last: {}",
            self.cfg.attempts,
            last.expect("at least one attempt")
        )))
    }

    /// Transliterates each sentence, consulting the cache first. Failures
    /// are reported per sentence.
    pub fn transliterate_batch(&self, sentences: &[String]) -> Vec<Result<String>> {
        let mut pending: Vec<String> = Vec::new();
        {
            let cache = self.cache.lock().expect("cache lock");
            for s in sentences {
                if cache.get(s).is_none() && !pending.contains(s) {
                    pending.push(s.clone());
                }
            }
        }
        let requests: Vec<&[String]> = pending.chunks(self.cfg.batch_size).collect();
        let failures: Mutex<HashMap<String, String>> = Mutex::new(HashMap::new());
        let next = AtomicUsize::new(0);
        let workers = self.cfg.max_in_flight.min(requests.len());
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(batch) = requests.get(i) else { break };
                    match self.request(batch) {
                        Ok(results) => {
                            let mut cache = self.cache.lock().expect("cache lock");
                            for (s, r) in batch.iter().zip(results) {
                                if let Err(e) = cache.insert(s.clone(), r) {
                                    failures.lock().unwrap().insert(s.clone(), failure_message(&e));
                                }
                            }
                        }
                        Err(e) => {
                            let mut f = failures.lock().unwrap();
                            for s in batch.iter() {
                                f.insert(s.clone(), failure_message(&e));
                            }
                        }
                    }
                });
            }
        });
        let failures = failures.into_inner().unwrap();
        let cache = self.cache.lock().expect("cache lock");
        sentences
            .iter()
            .map(|s| match cache.get(s) {
                Some(r) => Ok(r.clone()),
                None => Err(Error::Service(
                    failures.get(s).cloned().unwrap_or_else(|| "no result".into()),
                )),
            })
            .collect()
    }
}

/// Text re-wrapped into a per-sentence service error without doubling its prefix.
fn failure_message(e: &Error) -> String {
    match e {
        Error::Service(m) => m.clone(),
        other => other.to_string(),
    }
}
