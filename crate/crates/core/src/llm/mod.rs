//! Two-stage LLM annotation: a relevance filter followed by multi-label framing.

mod batch;
mod client;
mod parse;
mod prompt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use batch::{annotate_two_stage, BatchOptions, BatchOutcome, Failure, RawLogRecord};
pub use client::{ChatClient, ChatRequest, ClientError, HttpChatClient, LlmClientConfig};
pub use parse::{
    parse_filter_response, parse_filter_response_with, parse_frames_response, parse_frames_response_with,
    parse_response, render_filter_response, render_frames_response, FilterDecision, ParseMode, ParsedResponse,
};
pub use prompt::{
    apply_guideline_edit, build_prompt, GuidelineEdit, LabelBlock, PromptTemplate, Stage, OTHER_TAG,
    POST_PLACEHOLDER, RELEVANT_TAG,
};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("instruction text has no `{{post}}` placeholder")]
    MissingPlaceholder,
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("guideline edits apply to the frames stage only")]
    WrongStage,
    #[error("unknown frame `{0}`")]
    UnknownFrame(String),
    #[error("unparseable response: {0}")]
    ParseError(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: content.into() }
    }
}
