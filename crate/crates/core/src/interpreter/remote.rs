use std::collections::BTreeSet;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{Interpretation, LanguageProvider, ProviderError, ProviderKind, Valence};

/// HTTP provider.
///
/// Speaks a small JSON protocol rooted at `endpoint`:
///
/// | path        | request                    | response                                                  |
/// |-------------|----------------------------|-----------------------------------------------------------|
/// | `/analyze`  | `{text}`                   | `{keywords, negated_keywords, valence, affect?}`          |
/// | `/embed`    | `{text, dimension}`        | `{embedding}`                                             |
/// | `/complete` | `{prompt}`                 | `{text}`                                                  |
///
/// Credentials, when set, go out as a bearer token.
pub struct RemoteProvider {
    id: String,
    endpoint: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl std::fmt::Debug for RemoteProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteProvider").field("endpoint", &self.endpoint).finish()
    }
}

#[derive(Serialize)]
struct TextRequest<'a> {
    text: &'a str,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
    dimension: usize,
}

#[derive(Serialize)]
struct CompleteRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct AnalyzeResponse {
    keywords: Vec<String>,
    #[serde(default)]
    negated_keywords: Vec<String>,
    valence: Valence,
    #[serde(default)]
    affect: Option<Valence>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct CompleteResponse {
    text: String,
}

impl RemoteProvider {
    pub fn new(endpoint: &str, token: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(10)))
            .build()
            .into();
        let endpoint = endpoint.trim_end_matches('/').to_string();
        Self {
            id: format!("remote:{endpoint}"),
            endpoint,
            token,
            agent,
        }
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, ProviderError> {
        let mut request = self.agent.post(format!("{}{}", self.endpoint, path));
        if let Some(token) = &self.token {
            request = request.header("Authorization", format!("Bearer {token}"));
        }
        let mut response = request
            .send_json(body)
            .map_err(|e| ProviderError::Unreachable(e.to_string()))?;
        response
            .body_mut()
            .read_json::<R>()
            .map_err(|e| ProviderError::InvalidResponse(e.to_string()))
    }
}

impl LanguageProvider for RemoteProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> ProviderKind {
        ProviderKind::Remote
    }

    fn interpret(&self, text: &str) -> Result<Interpretation, ProviderError> {
        let r: AnalyzeResponse = self.post("/analyze", &TextRequest { text })?;
        let keywords: BTreeSet<String> = r.keywords.into_iter().map(|k| k.to_lowercase()).collect();
        let negated_keywords = r
            .negated_keywords
            .into_iter()
            .map(|k| k.to_lowercase())
            .filter(|k| keywords.contains(k))
            .collect();
        Ok(Interpretation {
            keywords,
            negated_keywords,
            valence: r.valence,
            affect: r.affect.unwrap_or(r.valence),
        })
    }

    fn embed(&self, text: &str, dimension: usize) -> Result<Vec<f64>, ProviderError> {
        let r: EmbedResponse = self.post("/embed", &EmbedRequest { text, dimension })?;
        if r.embedding.iter().any(|x| !x.is_finite()) {
            return Err(ProviderError::InvalidResponse("non-finite embedding component".into()));
        }
        Ok(r.embedding)
    }

    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        let r: CompleteResponse = self.post("/complete", &CompleteRequest { prompt })?;
        Ok(r.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interpreter::TextInterpreter;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Serves canned JSON bodies keyed by request path; counts requests.
    fn mock_server(routes: Vec<(&'static str, String)>) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                reader.read_line(&mut request_line).unwrap();
                let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
                let mut content_length = 0;
                loop {
                    let mut header = String::new();
                    reader.read_line(&mut header).unwrap();
                    if header == "\r\n" || header.is_empty() {
                        break;
                    }
                    if let Some(v) = header.to_ascii_lowercase().strip_prefix("content-length:") {
                        content_length = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0; content_length];
                reader.read_exact(&mut body).unwrap();
                counter.fetch_add(1, Ordering::SeqCst);
                let reply = routes
                    .iter()
                    .find(|(p, _)| *p == path)
                    .map(|(_, b)| b.clone())
                    .unwrap_or_else(|| "{}".into());
                write!(
                    stream,
                    "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                    reply.len(),
                    reply
                )
                .unwrap();
            }
        });
        (format!("http://{addr}"), hits)
    }

    #[test]
    fn unreachable_endpoint_is_surfaced() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let provider = RemoteProvider::new(&format!("http://{addr}"), None);
        assert!(matches!(provider.interpret("hi"), Err(ProviderError::Unreachable(_))));
    }

    #[test]
    fn analysis_is_cached_by_content_hash() {
        let (url, hits) = mock_server(vec![
            (
                "/analyze",
                r#"{"keywords":["Love","you"],"negated_keywords":["love","ghost"],"valence":"negative","affect":"positive"}"#.into(),
            ),
            ("/embed", r#"{"embedding":[3.0,4.0]}"#.into()),
        ]);
        let interp = TextInterpreter::new(
            Arc::new(RemoteProvider::new(&url, Some("secret".into()))),
            2,
            Arc::new(crate::interpreter::EmbeddingCache::in_memory()),
        );
        let a = interp.analyze("I don't love you").unwrap();
        assert!(a.keywords.contains("love"));
        assert_eq!(a.negated_keywords.len(), 1, "unknown negated terms dropped");
        assert_eq!(a.valence, Valence::Negative);
        assert_eq!(a.affect, Valence::Positive);
        assert_eq!(a.embedding, vec![0.6, 0.8]);
        let b = interp.analyze("I don't love you").unwrap();
        assert_eq!(a, b);
        assert_eq!(hits.load(Ordering::SeqCst), 2, "second call served from caches");
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let (url, _) = mock_server(vec![("/embed", r#"{"embedding":[1.0,0.0,0.0]}"#.into())]);
        let interp = TextInterpreter::new(
            Arc::new(RemoteProvider::new(&url, None)),
            2,
            Arc::new(crate::interpreter::EmbeddingCache::in_memory()),
        );
        assert!(matches!(
            interp.embed("x"),
            Err(ProviderError::DimensionMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn completion_round_trip() {
        let (url, _) = mock_server(vec![("/complete", r#"{"text":"a caption"}"#.into())]);
        let provider = RemoteProvider::new(&url, None);
        assert_eq!(provider.complete("prompt").unwrap(), "a caption");
    }
}
