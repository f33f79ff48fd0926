//! Chat-completion client for generating preferred references.

use std::time::Duration;

use serde_json::{json, Value};

use crate::error::{Error, Result};

/// Environment variable holding the endpoint credential.
pub const API_KEY_ENV: &str = "SIMULPL_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRequest {
    pub prompt: String,
    pub model: String,
    pub endpoint: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationResponse {
    pub text: String,
    pub status: u16,
    pub attempts: usize,
}

#[derive(Debug, Clone)]
pub struct AnnotateClient {
    http: reqwest::blocking::Client,
    api_key: Option<String>,
    max_attempts: usize,
    backoff: Duration,
}

enum Attempt {
    Done(AnnotationResponse),
    Retry(String),
}

impl AnnotateClient {
    pub fn new(api_key: Option<String>) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(Self {
            http,
            api_key,
            max_attempts: 3,
            backoff: Duration::from_millis(500),
        })
    }

    pub fn from_env() -> Result<Self> {
        Self::new(std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()))
    }

    /// At most `max_attempts` tries, sleeping `backoff * 2^k` after the
    /// `k`-th failure.
    pub fn with_retry(mut self, max_attempts: usize, backoff: Duration) -> Self {
        self.max_attempts = max_attempts.max(1);
        self.backoff = backoff;
        self
    }

    fn attempt(&self, req: &AnnotationRequest, attempts: usize) -> Result<Attempt> {
        let body = json!({
            "model": req.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": 0,
        });
        let mut builder = self.http.post(&req.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = match builder.send() {
            Ok(r) => r,
            Err(e) => return Ok(Attempt::Retry(e.to_string())),
        };
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Ok(Attempt::Retry(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Error::Transport(format!("HTTP {status}")));
        }
        let text = resp.text().map_err(|e| Error::Transport(e.to_string()))?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("response is not JSON: {e}")))?;
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Protocol("response has no choices[0].message.content".into()))?;
        Ok(Attempt::Done(AnnotationResponse {
            text: content.trim().to_string(),
            status: status.as_u16(),
            attempts,
        }))
    }

    pub fn annotate(&self, req: &AnnotationRequest) -> Result<AnnotationResponse> {
        let mut last = String::new();
        for k in 0..self.max_attempts {
            match self.attempt(req, k + 1)? {
                Attempt::Done(r) => return Ok(r),
                Attempt::Retry(why) => last = why,
            }
            if k + 1 < self.max_attempts {
                std::thread::sleep(self.backoff * 2u32.pow(k as u32));
            }
        }
        Err(Error::Transport(format!(
            "giving up after {} attempts: {last}",
            self.max_attempts
        )))
    }

    /// Annotates all requests with at most `max_in_flight` concurrent
    /// calls; results keep input order.
    pub fn annotate_all(&self, reqs: &[AnnotationRequest], max_in_flight: usize) -> Vec<Result<AnnotationResponse>> {
        let mut out: Vec<Option<Result<AnnotationResponse>>> = (0..reqs.len()).map(|_| None).collect();
        for (chunk_reqs, chunk_out) in reqs
            .chunks(max_in_flight.max(1))
            .zip(out.chunks_mut(max_in_flight.max(1)))
        {
            std::thread::scope(|s| {
                for (req, slot) in chunk_reqs.iter().zip(chunk_out.iter_mut()) {
                    s.spawn(move || *slot = Some(self.annotate(req)));
                }
            });
        }
        out.into_iter().map(|r| r.expect("every slot filled")).collect()
    }
}

pub fn annotate_via_endpoint(client: &AnnotateClient, req: &AnnotationRequest) -> Result<AnnotationResponse> {
    client.annotate(req)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Serves `replies` (status, body) to successive connections.
    fn mock(replies: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for (status, body) in replies {
                let Ok((stream, _)) = listener.accept() else { return };
                let mut reader = BufReader::new(stream);
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                counter.fetch_add(1, Ordering::SeqCst);
                let mut stream = reader.into_inner();
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (url, hits)
    }

    fn ok_body(text: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
    }

    fn request(url: &str) -> AnnotationRequest {
        AnnotationRequest {
            prompt: "Translate: a b".into(),
            model: "test-model".into(),
            endpoint: url.into(),
        }
    }

    fn client() -> AnnotateClient {
        AnnotateClient::new(None)
            .unwrap()
            .with_retry(3, Duration::from_millis(1))
    }

    #[test]
    fn returns_first_candidate() {
        let (url, _) = mock(vec![(200, ok_body("hello there"))]);
        let r = annotate_via_endpoint(&client(), &request(&url)).unwrap();
        assert_eq!((r.text.as_str(), r.status, r.attempts), ("hello there", 200, 1));
    }

    #[test]
    fn retries_then_gives_up() {
        let (url, hits) = mock(vec![(500, "{}".into()); 3]);
        let err = client().annotate(&request(&url)).unwrap_err();
        assert!(matches!(err, Error::Transport(_)));
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn recovers_after_transient_failure() {
        let (url, _) = mock(vec![(503, "{}".into()), (200, ok_body("ok"))]);
        assert_eq!(client().annotate(&request(&url)).unwrap().attempts, 2);
    }

    #[test]
    fn malformed_body_is_protocol_error() {
        let (url, _) = mock(vec![(200, "not json".into())]);
        assert!(matches!(client().annotate(&request(&url)), Err(Error::Protocol(_))));
        let (url, _) = mock(vec![(200, "{\"choices\": []}".into())]);
        assert!(matches!(client().annotate(&request(&url)), Err(Error::Protocol(_))));
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, hits) = mock(vec![(400, "{}".into()), (200, ok_body("late"))]);
        assert!(matches!(client().annotate(&request(&url)), Err(Error::Transport(_))));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn batch_keeps_order() {
        let (url, _) = mock((0..5).map(|_| (200, ok_body("same"))).collect());
        let reqs: Vec<_> = (0..5).map(|_| request(&url)).collect();
        let out = client().annotate_all(&reqs, 2);
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|r| r.as_ref().unwrap().text == "same"));
    }
}
