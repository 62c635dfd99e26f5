//! Coordinator and responder services and their prompts.

pub mod coordinator;
pub mod prompts;
pub mod responder;

pub use coordinator::{
    AgentError, AskRequest, AskResponse, Coordinator, CoordinatorConfig, LoadReport, StageTimings,
};
pub use prompts::{PromptTemplates, IDK_SENTENCE};
pub use responder::{responder_answer, serve_responder, AnswerRequest, AnswerResponse};
