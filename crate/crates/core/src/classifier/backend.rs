//! Backends that turn a prompt into a structured-output payload.

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompt::{tool_definition, Message, FUNCTION_NAME};
use super::{ClassifyError, ErrorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub endpoint_url: String,
    pub model_id: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env_name: String,
    pub temperature: f64,
    pub timeout_seconds: u64,
    pub max_retries: u32,
    /// Base of the exponential backoff between attempts.
    pub backoff_base_ms: u64,
    /// Maximum characters of description sent per project.
    pub char_budget: usize,
    pub cache_dir: Option<PathBuf>,
    pub backend_kind: BackendKind,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            model_id: "gpt-3.5-turbo".into(),
            api_key_env_name: "OPENAI_API_KEY".into(),
            temperature: 0.0,
            timeout_seconds: 60,
            max_retries: 3,
            backoff_base_ms: 1000,
            char_budget: super::prompt::DEFAULT_CHAR_BUDGET,
            cache_dir: None,
            backend_kind: BackendKind::Mock,
        }
    }
}

impl BackendConfig {
    pub fn mock() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), ClassifyError> {
        let invalid = |msg: &str| Err(ClassifyError::new(ErrorKind::InvalidInput, msg, 0));
        if !(self.temperature >= 0.0) {
            return invalid("temperature must be >= 0");
        }
        if self.char_budget == 0 {
            return invalid("char_budget must be positive");
        }
        if self.backend_kind == BackendKind::Remote {
            if self.endpoint_url.trim().is_empty() {
                return invalid("endpoint_url is required for the remote backend");
            }
            if self.model_id.trim().is_empty() {
                return invalid("model_id is required for the remote backend");
            }
            if self.timeout_seconds == 0 {
                return invalid("timeout_seconds must be positive");
            }
        }
        Ok(())
    }
}

pub struct CompletionRequest<'a> {
    pub messages: &'a [Message],
    pub schema: &'a Value,
    pub temperature: f64,
}

/// Failure before a payload could be obtained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendFailure {
    Transport(String),
    Status { code: u16, body: String },
    /// The response envelope did not contain a function-call payload.
    Malformed(String),
}

pub trait Backend: Send + Sync {
    fn kind(&self) -> BackendKind;
    fn model_id(&self) -> &str;
    /// Returns the raw function-call arguments.
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendFailure>;
}

/// Chat-completions client using tool calling.
pub struct RemoteBackend {
    client: reqwest::blocking::Client,
    endpoint_url: String,
    model_id: String,
    api_key: Option<String>,
}

impl RemoteBackend {
    pub fn new(cfg: &BackendConfig) -> Result<Self, ClassifyError> {
        cfg.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_seconds))
            .build()
            .map_err(|e| ClassifyError::new(ErrorKind::Transport, e.to_string(), 0))?;
        let api_key = std::env::var(&cfg.api_key_env_name).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::warn!("{} is not set; sending requests without authorization", cfg.api_key_env_name);
        }
        Ok(RemoteBackend {
            client,
            endpoint_url: cfg.endpoint_url.clone(),
            model_id: cfg.model_id.clone(),
            api_key,
        })
    }
}

/// Request body in the chat-completions wire format.
pub fn request_body(model_id: &str, request: &CompletionRequest<'_>) -> Value {
    json!({
        "model": model_id,
        "temperature": request.temperature,
        "messages": request.messages,
        "tools": [tool_definition()],
        "tool_choice": { "type": "function", "function": { "name": FUNCTION_NAME } },
    })
}

/// Pulls the function-call arguments out of a chat-completions response.
/// Falls back to the legacy `function_call` field, then to message content.
pub fn extract_arguments(response: &Value) -> Result<String, BackendFailure> {
    let message = response
        .pointer("/choices/0/message")
        .ok_or_else(|| BackendFailure::Malformed("response has no choices[0].message".into()))?;
    let from_tools = message
        .get("tool_calls")
        .and_then(Value::as_array)
        .and_then(|calls| {
            calls
                .iter()
                .find(|c| c.pointer("/function/name").and_then(Value::as_str) == Some(FUNCTION_NAME))
                .or_else(|| calls.first())
        })
        .and_then(|c| c.pointer("/function/arguments"));
    let args = from_tools
        .or_else(|| message.pointer("/function_call/arguments"))
        .or_else(|| message.get("content").filter(|c| c.is_string()));
    match args {
        Some(Value::String(s)) => Ok(s.clone()),
        // Some servers return arguments as an already-decoded object.
        Some(v @ Value::Object(_)) => Ok(v.to_string()),
        _ => Err(BackendFailure::Malformed("response carries no function-call arguments".into())),
    }
}

impl Backend for RemoteBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Remote
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendFailure> {
        let mut http = self.client.post(&self.endpoint_url).json(&request_body(&self.model_id, request));
        if let Some(key) = &self.api_key {
            http = http.bearer_auth(key);
        }
        let response = http.send().map_err(|e| BackendFailure::Transport(e.to_string()))?;
        let status = response.status();
        let body = response.text().map_err(|e| BackendFailure::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendFailure::Status {
                code: status.as_u16(),
                body: body.chars().take(500).collect(),
            });
        }
        let value: Value = serde_json::from_str(&body)
            .map_err(|e| BackendFailure::Malformed(format!("response body is not JSON: {e}")))?;
        extract_arguments(&value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::prompt::Role;

    #[test]
    fn body_shape() {
        let messages = vec![
            Message { role: Role::System, content: "sys".into() },
            Message { role: Role::User, content: "user".into() },
        ];
        let schema = json!({});
        let body = request_body("gpt-3.5-turbo", &CompletionRequest { messages: &messages, schema: &schema, temperature: 0.0 });
        assert_eq!(body["model"], "gpt-3.5-turbo");
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "user");
        assert_eq!(body["tools"][0]["function"]["name"], FUNCTION_NAME);
        assert_eq!(body["tool_choice"]["function"]["name"], FUNCTION_NAME);
        assert_eq!(body["temperature"], 0.0);
    }

    #[test]
    fn extracts_tool_call_arguments() {
        let resp = json!({"choices":[{"message":{"tool_calls":[{"type":"function","function":{"name":FUNCTION_NAME,"arguments":"{\"contributions\":[]}"}}]}}]});
        assert_eq!(extract_arguments(&resp).unwrap(), "{\"contributions\":[]}");
        let legacy = json!({"choices":[{"message":{"function_call":{"name":FUNCTION_NAME,"arguments":"{}"}}}]});
        assert_eq!(extract_arguments(&legacy).unwrap(), "{}");
        let content = json!({"choices":[{"message":{"content":"{\"contributions\":[]}"}}]});
        assert_eq!(extract_arguments(&content).unwrap(), "{\"contributions\":[]}");
        assert!(matches!(extract_arguments(&json!({"choices":[]})), Err(BackendFailure::Malformed(_))));
        assert!(matches!(
            extract_arguments(&json!({"choices":[{"message":{"content":null}}]})),
            Err(BackendFailure::Malformed(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(BackendConfig::default().validate().is_ok());
        let cfg = BackendConfig { temperature: -0.1, ..BackendConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = BackendConfig { backend_kind: BackendKind::Remote, endpoint_url: "".into(), ..BackendConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg: BackendConfig = serde_json::from_str(r#"{"backend_kind":"remote","max_retries":0}"#).unwrap();
        assert_eq!(cfg.max_retries, 0);
        assert_eq!(cfg.temperature, 0.0);
    }
}
