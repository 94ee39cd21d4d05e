//! Adapter for a JSON-over-HTTP completion endpoint.
//!
//! Request body: `{"template_id", "prompt", "agent_id", "role"}`.
//! Response body: `{"output": "..."}`.

use std::time::Duration;

use serde::Deserialize;

use super::adapter::{AdapterError, AgentAdapter, AgentRequest};
use crate::clock::Clock;

#[derive(Debug, Clone)]
pub struct HttpAdapter {
    endpoint: url::Url,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct Completion {
    output: String,
}

impl HttpAdapter {
    pub fn new(endpoint: &str, timeout: Duration) -> Result<Self, url::ParseError> {
        let endpoint = url::Url::parse(endpoint)?;
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Ok(HttpAdapter { endpoint, agent })
    }

    pub fn endpoint(&self) -> &url::Url {
        &self.endpoint
    }
}

impl AgentAdapter for HttpAdapter {
    fn complete(&self, req: &AgentRequest, _clock: &dyn Clock) -> Result<String, AdapterError> {
        let body = serde_json::json!({
            "template_id": req.template_id,
            "prompt": req.prompt,
            "agent_id": req.agent_id,
            "role": req.role.as_str(),
        });
        let resp = match self.agent.post(self.endpoint.as_str()).send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, _)) if code == 429 || code >= 500 => {
                return Err(AdapterError::Transport(format!("HTTP {code}")));
            }
            Err(ureq::Error::Status(code, _)) => return Err(AdapterError::Protocol(format!("HTTP {code}"))),
            Err(ureq::Error::Transport(t)) => return Err(AdapterError::Transport(t.to_string())),
        };
        let c: Completion = resp.into_json().map_err(|e| AdapterError::Protocol(format!("bad response body: {e}")))?;
        Ok(c.output)
    }
}
