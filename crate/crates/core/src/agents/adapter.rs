use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::profile::AgentProfile;
use super::template::{PromptTemplate, TemplateRole};
use crate::clock::{Clock, Timestamp};
use crate::digest::ContentHash;
use crate::ledger::{Action, Actor, ArtifactRole, Ledger, LedgerError, NewEvent};
use crate::track::PaperId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AgentRequest {
    pub template_id: String,
    pub prompt: String,
    pub agent_id: String,
    #[serde(skip)]
    pub role: TemplateRole,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdapterError {
    /// Connection, timeout or server-side failure; worth retrying.
    #[error("transport: {0}")]
    Transport(String),
    /// The backend answered but the answer is unusable.
    #[error("protocol: {0}")]
    Protocol(String),
}

/// Text in, text out. Implementations must be shareable across workers.
pub trait AgentAdapter: Send + Sync {
    fn complete(&self, request: &AgentRequest, clock: &dyn Clock) -> Result<String, AdapterError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, initial_backoff_ms: 500 }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, failed_attempt: u32) -> Duration {
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(1 << failed_attempt.saturating_sub(1).min(16)))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("empty output")]
    EmptyOutput,
    #[error("template {0} is not locked")]
    UnlockedTemplate(String),
    #[error("template role {template} does not match agent role {agent}")]
    RoleMismatch { template: TemplateRole, agent: TemplateRole },
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: AdapterError },
    #[error(transparent)]
    Adapter(AdapterError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentResult {
    pub output_text: String,
    pub agent: AgentProfile,
    pub prompt_hash: ContentHash,
    pub output_hash: ContentHash,
    pub started: Timestamp,
    pub finished: Timestamp,
    pub attempts: u32,
}

/// Where `invoke_agent` records its work.
pub struct InvokeContext<'a> {
    pub ledger: &'a Ledger,
    pub clock: &'a dyn Clock,
    pub adapter: &'a dyn AgentAdapter,
    pub retry: RetryPolicy,
}

/// Runs one agent call with bounded retries on transport failures.
///
/// The prompt is stored as a blob and the output either bound to
/// `output_role` on the paper or stored as a blob. One `invoke` event
/// follows, carrying `[output_hash, prompt_hash]`; every failed attempt
/// leaves an `invoke_retry` event first.
pub fn invoke_agent(
    ctx: &InvokeContext<'_>,
    paper: &PaperId,
    profile: &AgentProfile,
    template: &PromptTemplate,
    prompt: &str,
    output_role: Option<ArtifactRole>,
) -> Result<AgentResult, AgentError> {
    let lock = template.lock_hash().cloned().ok_or_else(|| AgentError::UnlockedTemplate(template.template_id.clone()))?;
    if template.role != profile.role {
        return Err(AgentError::RoleMismatch { template: template.role, agent: profile.role });
    }
    if prompt.trim().is_empty() {
        return Err(AgentError::EmptyPrompt);
    }
    let actor = Actor::Agent(profile.agent_id.clone());
    let prompt_hash = ctx.ledger.put_blob(prompt.as_bytes())?;
    let request = AgentRequest {
        template_id: template.template_id.clone(),
        prompt: prompt.to_string(),
        agent_id: profile.agent_id.clone(),
        role: profile.role,
    };
    let started = ctx.clock.now();
    let mut attempt = 0;
    let output = loop {
        attempt += 1;
        match ctx.adapter.complete(&request, ctx.clock) {
            Ok(text) => break text,
            Err(AdapterError::Protocol(msg)) => return Err(AgentError::Adapter(AdapterError::Protocol(msg))),
            Err(AdapterError::Transport(msg)) => {
                let ev = Action::InvokeRetry { agent_id: profile.agent_id.clone(), attempt, error: msg.clone() };
                ctx.ledger.append(NewEvent::for_paper(ctx.clock.now(), paper, ev, actor.clone()))?;
                if attempt >= ctx.retry.max_attempts {
                    return Err(AgentError::Exhausted { attempts: attempt, last: AdapterError::Transport(msg) });
                }
                ctx.clock.sleep(ctx.retry.backoff(attempt));
            }
        }
    };
    if output.trim().is_empty() {
        return Err(AgentError::EmptyOutput);
    }
    let finished = ctx.clock.now();
    let output_hash = match output_role {
        Some(role) => ctx.ledger.put_artifact(paper, role, output.as_bytes(), finished, actor.clone())?.content_hash,
        None => ctx.ledger.put_blob(output.as_bytes())?,
    };
    let ev = Action::Invoke {
        role: profile.role,
        template_id: template.template_id.clone(),
        template_lock: lock,
        agent_id: profile.agent_id.clone(),
        model_family: profile.model_family.clone(),
        model_version: profile.model_version.clone(),
        attempts: attempt,
        started,
        finished,
    };
    ctx.ledger.append(
        NewEvent::for_paper(finished, paper, ev, actor).with_hashes(vec![output_hash.clone(), prompt_hash.clone()]),
    )?;
    Ok(AgentResult {
        output_text: output,
        agent: profile.clone(),
        prompt_hash,
        output_hash,
        started,
        finished,
        attempts: attempt,
    })
}
