//! Rate-limited, resumable paging through a search API.
//!
//! Delivery is at-least-once: a crash between writing a page and saving the
//! state replays that page on restart. Run [`crate::tweet_store::dedup_exact`]
//! over the output to remove the duplicate.

mod budget;
mod mock;

pub use budget::{Decision, RateBudget, DEFAULT_LIMIT, DEFAULT_WINDOW};
pub use mock::{MockScript, MockTransport};

use std::cell::Cell;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::rc::Rc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::tweet_store::TweetRecord;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("transport: {0}")]
pub struct TransportError(pub String);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollectorError {
    #[error("sink: {0}")]
    Sink(String),
    #[error("state store: {0}")]
    State(String),
    #[error("state file line {line}: {reason}")]
    MalformedState { line: usize, reason: String },
    #[error("gave up after {restarts} restarts: {}", state.last_error.as_deref().unwrap_or("unknown error"))]
    RestartsExhausted {
        restarts: u32,
        state: Box<CollectorState>,
    },
}

/// One page of search results. `continuation` is `None` on the final page.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchPage {
    pub records: Vec<TweetRecord>,
    pub continuation: Option<String>,
}

pub trait Transport {
    fn search(&mut self, query: &str, cursor: Option<&str>) -> Result<SearchPage, TransportError>;
}

pub trait RecordSink {
    fn append(&mut self, records: &[TweetRecord]) -> Result<(), CollectorError>;
}

pub trait StateStore {
    fn save(&mut self, state: &CollectorState) -> Result<(), CollectorError>;
    fn load(&mut self) -> Result<Option<CollectorState>, CollectorError>;
}

/// Monotonic time source. Elapsed time is measured from an arbitrary origin.
pub trait Clock {
    fn now(&self) -> Duration;
    fn sleep(&mut self, d: Duration);
}

pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&mut self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Simulated clock; sleeping advances time instantly. Clones share time.
#[derive(Debug, Clone, Default)]
pub struct SimClock {
    now: Rc<Cell<Duration>>,
}

impl SimClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, d: Duration) {
        self.now.set(self.now.get() + d);
    }
}

impl Clock for SimClock {
    fn now(&self) -> Duration {
        self.now.get()
    }

    fn sleep(&mut self, d: Duration) {
        self.advance(d);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CollectorState {
    pub query: String,
    /// Continuation for the next request; `None` before the first page and
    /// after the last.
    pub cursor: Option<String>,
    pub pages_fetched: u64,
    pub records_written: u64,
    pub complete: bool,
    pub last_error: Option<String>,
}

impl CollectorState {
    pub fn new(query: &str) -> Self {
        Self {
            query: query.to_string(),
            ..Self::default()
        }
    }

    /// `key = value` lines. Values are single-line; newlines in errors are
    /// replaced by spaces.
    pub fn to_kv(&self) -> String {
        let clean = |s: &str| s.replace(['\n', '\r'], " ");
        let mut out = String::new();
        out.push_str(&format!("query = {}\n", clean(&self.query)));
        if let Some(c) = &self.cursor {
            out.push_str(&format!("cursor = {}\n", clean(c)));
        }
        out.push_str(&format!("pages_fetched = {}\n", self.pages_fetched));
        out.push_str(&format!("records_written = {}\n", self.records_written));
        out.push_str(&format!("complete = {}\n", self.complete));
        if let Some(e) = &self.last_error {
            out.push_str(&format!("last_error = {}\n", clean(e)));
        }
        out
    }

    pub fn from_kv(text: &str) -> Result<Self, CollectorError> {
        let mut state = Self::default();
        let mut seen_query = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let bad = |reason: String| CollectorError::MalformedState { line, reason };
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let (key, value) = raw
                .split_once(" = ")
                .ok_or_else(|| bad("expected `key = value`".into()))?;
            let num = |v: &str| v.parse::<u64>().map_err(|e| bad(e.to_string()));
            match key {
                "query" => {
                    state.query = value.to_string();
                    seen_query = true;
                }
                "cursor" => state.cursor = Some(value.to_string()),
                "pages_fetched" => state.pages_fetched = num(value)?,
                "records_written" => state.records_written = num(value)?,
                "complete" => {
                    state.complete = value.parse().map_err(|_| bad(format!("bad bool `{value}`")))?
                }
                "last_error" => state.last_error = Some(value.to_string()),
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        if !seen_query {
            return Err(CollectorError::MalformedState {
                line: 0,
                reason: "missing query".into(),
            });
        }
        Ok(state)
    }
}

impl RecordSink for Vec<TweetRecord> {
    fn append(&mut self, records: &[TweetRecord]) -> Result<(), CollectorError> {
        self.extend_from_slice(records);
        Ok(())
    }
}

/// Append-only JSON-lines file, flushed after every page.
pub struct JsonlSink {
    out: BufWriter<File>,
}

impl JsonlSink {
    pub fn open(path: &Path) -> Result<Self, CollectorError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| CollectorError::Sink(format!("{}: {e}", path.display())))?;
        Ok(Self {
            out: BufWriter::new(file),
        })
    }
}

impl RecordSink for JsonlSink {
    fn append(&mut self, records: &[TweetRecord]) -> Result<(), CollectorError> {
        let io = |e: std::io::Error| CollectorError::Sink(e.to_string());
        for r in records {
            writeln!(self.out, "{}", r.to_json_line()).map_err(io)?;
        }
        self.out.flush().map_err(io)?;
        self.out.get_ref().sync_data().map_err(io)
    }
}

#[derive(Debug, Clone, Default)]
pub struct MemoryStateStore {
    pub state: Option<CollectorState>,
    pub saves: usize,
}

impl StateStore for MemoryStateStore {
    fn save(&mut self, state: &CollectorState) -> Result<(), CollectorError> {
        self.state = Some(state.clone());
        self.saves += 1;
        Ok(())
    }

    fn load(&mut self) -> Result<Option<CollectorState>, CollectorError> {
        Ok(self.state.clone())
    }
}

/// State file replaced atomically by writing a sibling and renaming it.
pub struct FileStateStore {
    path: PathBuf,
}

impl FileStateStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }
}

impl StateStore for FileStateStore {
    fn save(&mut self, state: &CollectorState) -> Result<(), CollectorError> {
        let io = |e: std::io::Error| CollectorError::State(e.to_string());
        let tmp = self.path.with_extension("tmp");
        fs::write(&tmp, state.to_kv()).map_err(io)?;
        fs::rename(&tmp, &self.path).map_err(io)
    }

    fn load(&mut self) -> Result<Option<CollectorState>, CollectorError> {
        match fs::read_to_string(&self.path) {
            Ok(text) => CollectorState::from_kv(&text).map(Some),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(CollectorError::State(e.to_string())),
        }
    }
}

/// Everything a collection run touches besides its state.
pub struct Collector<'a> {
    pub transport: &'a mut dyn Transport,
    pub sink: &'a mut dyn RecordSink,
    pub store: &'a mut dyn StateStore,
    pub budget: &'a mut RateBudget,
    pub clock: &'a mut dyn Clock,
}

impl Collector<'_> {
    /// Fetches pages until the final one, writing records and then saving
    /// state after each. A transport error is recorded in the saved state
    /// and returned as `Ok` with `complete == false`.
    pub fn collect(&mut self, mut state: CollectorState) -> Result<CollectorState, CollectorError> {
        while !state.complete {
            match self.budget.acquire(self.clock.now()) {
                Decision::Wait(d) => {
                    self.clock.sleep(d);
                    continue;
                }
                Decision::Proceed => {}
            }
            match self.transport.search(&state.query, state.cursor.as_deref()) {
                Ok(page) => {
                    self.sink.append(&page.records)?;
                    state.pages_fetched += 1;
                    state.records_written += page.records.len() as u64;
                    state.complete = page.continuation.is_none();
                    state.cursor = page.continuation;
                    state.last_error = None;
                    self.store.save(&state)?;
                }
                Err(e) => {
                    state.last_error = Some(e.0);
                    self.store.save(&state)?;
                    return Ok(state);
                }
            }
        }
        Ok(state)
    }

    /// Runs [`Self::collect`] from the stored state (or a fresh one for
    /// `query`), restarting after transport errors with exponential backoff.
    pub fn supervise(
        &mut self,
        query: &str,
        max_restarts: u32,
        backoff: Backoff,
    ) -> Result<CollectorState, CollectorError> {
        let mut restarts = 0;
        loop {
            let state = match self.store.load()? {
                Some(s) if s.query == query => s,
                _ => CollectorState::new(query),
            };
            let state = self.collect(state)?;
            if state.complete {
                return Ok(state);
            }
            if restarts == max_restarts {
                return Err(CollectorError::RestartsExhausted {
                    restarts,
                    state: Box::new(state),
                });
            }
            self.clock.sleep(backoff.delay(restarts));
            restarts += 1;
        }
    }
}

/// Delay before restart `k` (0-based) is `initial * factor^k`, capped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub initial: Duration,
    pub factor: f64,
    pub max: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            initial: Duration::from_secs(5),
            factor: 2.0,
            max: Duration::from_secs(15 * 60),
        }
    }
}

impl Backoff {
    pub fn delay(&self, restart: u32) -> Duration {
        let secs = self.initial.as_secs_f64() * self.factor.powi(restart as i32);
        if secs.is_finite() && secs < self.max.as_secs_f64() {
            Duration::from_secs_f64(secs)
        } else {
            self.max
        }
    }
}
