//! Agent invocation: locked prompt templates, profiles, and the adapter
//! boundary to model backends.

mod adapter;
mod http;
mod mock;
mod profile;
mod template;

pub use adapter::{invoke_agent, AdapterError, AgentAdapter, AgentError, AgentRequest, AgentResult, InvokeContext, RetryPolicy};
pub use http::HttpAdapter;
pub use mock::{MockAdapter, ScoreBook, ScoreBookError, ScoreRow};
pub use profile::{check_coi, fingerprint, AgentProfile, CoiViolation, ProfileError};
pub use template::{PromptTemplate, TemplateError, TemplateRole, TemplateSet};
