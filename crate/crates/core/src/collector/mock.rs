//! Deterministic in-process transport driven by a script:
//!
//! ```text
//! # comment
//! page 20        one page of 20 generated records
//! fail timeout   the next request for the following page fails once
//! page 15
//! ```
//!
//! Cursors are `cursor-<k>` for page `k` (0-based); the first page needs no
//! cursor.

use std::collections::{BTreeMap, VecDeque};

use chrono::{DateTime, Duration as ChronoDuration, Utc};

use super::{SearchPage, Transport, TransportError};
use crate::tweet_store::TweetRecord;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockScript {
    /// Record count per page.
    pub pages: Vec<usize>,
    /// Queued failure messages, keyed by the page they precede.
    pub failures: BTreeMap<usize, Vec<String>>,
}

impl MockScript {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut pages = Vec::new();
        let mut failures: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (cmd, arg) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let arg = arg.trim();
            match cmd {
                "page" => pages.push(
                    arg.parse()
                        .map_err(|_| format!("line {}: bad page size `{arg}`", idx + 1))?,
                ),
                "fail" => {
                    let msg = if arg.is_empty() { "injected failure" } else { arg };
                    failures.entry(pages.len()).or_default().push(msg.to_string());
                }
                other => return Err(format!("line {}: unknown command `{other}`", idx + 1)),
            }
        }
        if pages.is_empty() {
            return Err("script has no pages".into());
        }
        if failures.keys().any(|&k| k >= pages.len()) {
            return Err("failure after the last page".into());
        }
        Ok(Self { pages, failures })
    }
}

#[derive(Debug, Clone)]
pub struct MockTransport {
    pages: Vec<Vec<TweetRecord>>,
    failures: BTreeMap<usize, VecDeque<String>>,
    served: Vec<TweetRecord>,
    requests: usize,
}

fn mock_record(query: &str, page: usize, item: usize) -> TweetRecord {
    let base: DateTime<Utc> = DateTime::from_timestamp(1_609_459_200, 0).expect("valid epoch");
    let n = (page * 1000 + item) as u64;
    TweetRecord {
        created_at: base + ChronoDuration::minutes(n as i64 * 7),
        text: format!("{query} update {page}-{item}"),
        favorite_count: n % 13,
        follower_count: 100 + n * 31 % 977,
        retweet_count: n % 5,
        verified: n.is_multiple_of(11),
    }
}

impl MockTransport {
    pub fn new(script: MockScript, query: &str) -> Self {
        let pages = script
            .pages
            .iter()
            .enumerate()
            .map(|(p, &count)| (0..count).map(|i| mock_record(query, p, i)).collect())
            .collect();
        let failures = script
            .failures
            .into_iter()
            .map(|(k, v)| (k, v.into()))
            .collect();
        Self {
            pages,
            failures,
            served: Vec::new(),
            requests: 0,
        }
    }

    /// Every record returned so far, in order, including repeats.
    pub fn served(&self) -> Vec<TweetRecord> {
        self.served.clone()
    }

    /// All records the script can produce, each once.
    pub fn ground_truth(&self) -> Vec<TweetRecord> {
        self.pages.concat()
    }

    pub fn requests(&self) -> usize {
        self.requests
    }
}

impl Transport for MockTransport {
    fn search(&mut self, _query: &str, cursor: Option<&str>) -> Result<SearchPage, TransportError> {
        self.requests += 1;
        let page = match cursor {
            None => 0,
            Some(c) => c
                .strip_prefix("cursor-")
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k < self.pages.len())
                .ok_or_else(|| TransportError(format!("unknown cursor `{c}`")))?,
        };
        if let Some(msg) = self.failures.get_mut(&page).and_then(VecDeque::pop_front) {
            return Err(TransportError(msg));
        }
        let records = self.pages[page].clone();
        self.served.extend_from_slice(&records);
        let continuation = (page + 1 < self.pages.len()).then(|| format!("cursor-{}", page + 1));
        Ok(SearchPage {
            records,
            continuation,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_script() {
        let s = MockScript::parse("# x\npage 3\nfail oops\nfail\npage 0\n").unwrap();
        assert_eq!(s.pages, vec![3, 0]);
        assert_eq!(s.failures[&1], vec!["oops".to_string(), "injected failure".to_string()]);
        assert!(MockScript::parse("").is_err());
        assert!(MockScript::parse("page x").is_err());
        assert!(MockScript::parse("page 1\nfail late").is_err());
        assert!(MockScript::parse("pages 1").is_err());
    }

    #[test]
    fn serves_pages_and_failures() {
        let mut t = MockTransport::new(MockScript::parse("page 2\nfail x\npage 1").unwrap(), "q");
        let p0 = t.search("q", None).unwrap();
        assert_eq!(p0.records.len(), 2);
        assert_eq!(p0.continuation.as_deref(), Some("cursor-1"));
        assert_eq!(t.search("q", Some("cursor-1")), Err(TransportError("x".into())));
        let p1 = t.search("q", Some("cursor-1")).unwrap();
        assert_eq!(p1.continuation, None);
        assert!(t.search("q", Some("cursor-7")).is_err());
        assert_eq!(t.served(), t.ground_truth());
        assert_eq!(t.requests(), 4);
    }

    #[test]
    fn records_are_distinct() {
        let t = MockTransport::new(MockScript::parse("page 30\npage 30").unwrap(), "q");
        let all = t.ground_truth();
        assert_eq!(crate::tweet_store::dedup_exact(all.clone()), all);
    }
}
