use serde_json::{json, Value};

use super::{ToxicityScore, ToxicityScorer};
use crate::error::{DetoxError, Result};
use crate::http::mock::{MockRequest, MockResponse};
use crate::http::{ClientConfig, JsonClient};

pub const API_KEY_VAR: &str = "PERSPECTIVE_API_KEY";
pub const DEFAULT_ENDPOINT: &str = "https://commentanalyzer.googleapis.com";

/// Perspective-compatible client requesting the TOXICITY attribute.
#[derive(Debug)]
pub struct PerspectiveScorer {
    endpoint: String,
    api_key: String,
    client: JsonClient,
}

impl PerspectiveScorer {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>, cfg: &ClientConfig) -> Self {
        PerspectiveScorer {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            client: JsonClient::new(cfg),
        }
    }

    /// Reads the key from `PERSPECTIVE_API_KEY`.
    pub fn from_env(endpoint: impl Into<String>, cfg: &ClientConfig) -> Result<Self> {
        let key = std::env::var(API_KEY_VAR).map_err(|_| DetoxError::MissingApiKey(API_KEY_VAR))?;
        Ok(PerspectiveScorer::new(endpoint, key, cfg))
    }

    pub fn requests_sent(&self) -> usize {
        self.client.requests_sent()
    }

    pub fn request_body(text: &str, language: &str) -> Value {
        json!({
            "comment": {"text": text},
            "languages": [language],
            "requestedAttributes": {"TOXICITY": {}},
        })
    }
}

/// Pulls `attributeScores.TOXICITY.summaryScore.value` out of a response.
pub fn parse_toxicity(body: &Value) -> Result<f64> {
    let v = body
        .pointer("/attributeScores/TOXICITY/summaryScore/value")
        .and_then(Value::as_f64)
        .ok_or_else(|| DetoxError::Unparseable("missing attributeScores.TOXICITY.summaryScore.value".into()))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(DetoxError::Unparseable(format!("toxicity {v} outside [0, 1]")));
    }
    Ok(v)
}

impl ToxicityScorer for PerspectiveScorer {
    fn id(&self) -> &str {
        "perspective"
    }

    fn score(&self, text: &str, language: &str) -> Result<ToxicityScore> {
        let url = format!("{}/v1alpha1/comments:analyze?key={}", self.endpoint, self.api_key);
        let body = self.client.post_json(&url, &Self::request_body(text, language))?;
        Ok(ToxicityScore {
            value: parse_toxicity(&body)?,
            scorer_id: self.id().to_string(),
            language: language.to_string(),
        })
    }
}

/// Request handler imitating the analyze endpoint: scores with `score_fn`,
/// answers 400 for languages outside `supported`.
pub fn perspective_mock_handler<F>(supported: Vec<String>, score_fn: F) -> impl Fn(&MockRequest) -> MockResponse + Send + Sync
where
    F: Fn(&str, &str) -> f64 + Send + Sync,
{
    move |req: &MockRequest| {
        if req.method != "POST" || !req.path.starts_with("/v1alpha1/comments:analyze") {
            return MockResponse::json(404, r#"{"error":{"code":404}}"#);
        }
        if !req.path.contains("key=") {
            return MockResponse::json(403, r#"{"error":{"code":403,"message":"missing key"}}"#);
        }
        let Ok(body) = serde_json::from_str::<Value>(&req.body) else {
            return MockResponse::json(400, r#"{"error":{"code":400,"message":"bad json"}}"#);
        };
        let text = body.pointer("/comment/text").and_then(Value::as_str).unwrap_or_default();
        let lang = body.pointer("/languages/0").and_then(Value::as_str).unwrap_or_default();
        if !supported.iter().any(|l| l == lang) {
            let msg = json!({"error": {"code": 400, "message": format!("Attribute TOXICITY does not support request languages: {lang}")}});
            return MockResponse::json(400, msg.to_string());
        }
        let value = score_fn(text, lang);
        let resp = json!({
            "attributeScores": {"TOXICITY": {
                "spanScores": [{"begin": 0, "end": text.len(), "score": {"value": value, "type": "PROBABILITY"}}],
                "summaryScore": {"value": value, "type": "PROBABILITY"}
            }},
            "languages": [lang],
        });
        MockResponse::json(200, resp.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_shape() {
        let b = PerspectiveScorer::request_body("hi", "en");
        assert_eq!(b["comment"]["text"], "hi");
        assert_eq!(b["languages"][0], "en");
        assert!(b["requestedAttributes"]["TOXICITY"].is_object());
    }

    #[test]
    fn parses_summary_score() {
        let body = json!({"attributeScores": {"TOXICITY": {"summaryScore": {"value": 0.91}}}});
        assert_eq!(parse_toxicity(&body).unwrap(), 0.91);
        assert!(parse_toxicity(&json!({"attributeScores": {}})).is_err());
        let out_of_range = json!({"attributeScores": {"TOXICITY": {"summaryScore": {"value": 3.0}}}});
        assert!(parse_toxicity(&out_of_range).is_err());
    }
}
