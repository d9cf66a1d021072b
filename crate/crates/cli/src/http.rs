//! Search transport over HTTP.
//!
//! `GET <endpoint>?q=<query>[&cursor=<cursor>]` must answer with
//! `{"records": [<post>, ...], "next": "<cursor>" | null}` where each post
//! has the JSON-lines ingest schema.

use std::time::Duration;

use serde_json::Value;
use stockcast::collector::{SearchPage, Transport, TransportError};
use stockcast::tweet_store::parse_tweet_jsonl;

pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    bearer: Option<String>,
}

impl HttpTransport {
    pub fn new(endpoint: &str, bearer: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .new_agent();
        Self {
            agent,
            endpoint: endpoint.to_string(),
            bearer,
        }
    }
}

fn parse_page(body: &str) -> Result<SearchPage, TransportError> {
    let err = |m: String| TransportError(m);
    let v: Value = serde_json::from_str(body).map_err(|e| err(format!("bad response: {e}")))?;
    let records = v
        .get("records")
        .and_then(Value::as_array)
        .ok_or_else(|| err("response has no `records` array".into()))?;
    let lines: Vec<String> = records.iter().map(Value::to_string).collect();
    let records = parse_tweet_jsonl(&lines.join("\n")).map_err(|e| err(e.to_string()))?;
    let continuation = match v.get("next") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(other) => return Err(err(format!("`next` must be a string, got {other}"))),
    };
    Ok(SearchPage {
        records,
        continuation,
    })
}

impl Transport for HttpTransport {
    fn search(&mut self, query: &str, cursor: Option<&str>) -> Result<SearchPage, TransportError> {
        let mut req = self.agent.get(&self.endpoint).query("q", query);
        if let Some(c) = cursor {
            req = req.query("cursor", c);
        }
        if let Some(token) = &self.bearer {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.call().map_err(|e| TransportError(e.to_string()))?;
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError(e.to_string()))?;
        parse_page(&body)
    }
}
