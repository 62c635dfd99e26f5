//! Coordinator and responder prompt templates.

use serde::{Deserialize, Serialize};

/// The exact refusal the responder must give when memories are insufficient.
pub const IDK_SENTENCE: &str = "I don't know based on the given memories.";

pub const COORDINATOR_SYSTEM: &str = "You are a helpful assistant with access to memory search and question answering tools.
You MUST use these tools in the following order:
1. ALWAYS call search_memory first with the user's question.
2. ALWAYS call answer_question next to get the final answer.
DO NOT answer directly.
You MUST use both tools in sequence.
All information is from fictional/test data for research purposes.";

pub const RESPONDER_SYSTEM: &str = "You are a helpful assistant.
You MUST answer questions using ONLY the information provided in the MEMORIES.
You ARE allowed to do simple reasoning and calculations using those MEMORIES (for example, converting relative time expressions like 'last year' into a calendar year if a dated event is available).
You MUST NOT use outside/world knowledge or invent facts that are not logically implied by the MEMORIES.
If the MEMORIES do not contain enough information to answer, you MUST reply exactly:
\"I don't know based on the given memories.\"
Be concise and factual.";

pub const RESPONDER_USER: &str = "MEMORIES:
{memory}
QUESTION:
{question}
Answer using ONLY the MEMORIES above.
You may combine information from different memories and perform simple logical or temporal reasoning.
For temporal questions, use timestamps from the memories and, if possible, convert relative expressions (e.g. 'last year', 'two years later') into human-readable dates based only on those timestamps.
If the answer is not supported by the memories, reply exactly:
\"I don't know based on the given memories.\"";

const MEMORY_SLOT: &str = "{memory}";
const QUESTION_SLOT: &str = "{question}";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("responder templates must contain the refusal sentence verbatim")]
    MissingIdk,
    #[error("responder user template must contain the {{memory}} and {{question}} slots")]
    MissingSlot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplates {
    pub coordinator_system: String,
    pub responder_system: String,
    pub responder_user: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            coordinator_system: COORDINATOR_SYSTEM.into(),
            responder_system: RESPONDER_SYSTEM.into(),
            responder_user: RESPONDER_USER.into(),
        }
    }
}

impl PromptTemplates {
    pub fn validate(&self) -> Result<(), TemplateError> {
        if !self.responder_system.contains(IDK_SENTENCE)
            || !self.responder_user.contains(IDK_SENTENCE)
        {
            return Err(TemplateError::MissingIdk);
        }
        if !self.responder_user.contains(MEMORY_SLOT) || !self.responder_user.contains(QUESTION_SLOT)
        {
            return Err(TemplateError::MissingSlot);
        }
        Ok(())
    }

    /// Fills the user template in a single pass, so slot markers inside the
    /// substituted values are left alone.
    pub fn render_user(&self, memory: &str, question: &str) -> String {
        let tpl = self.responder_user.as_str();
        let mut out = String::with_capacity(tpl.len() + memory.len() + question.len());
        let mut rest = tpl;
        loop {
            let next = [(MEMORY_SLOT, memory), (QUESTION_SLOT, question)]
                .into_iter()
                .filter_map(|(slot, val)| rest.find(slot).map(|at| (at, slot, val)))
                .min_by_key(|(at, _, _)| *at);
            match next {
                Some((at, slot, val)) => {
                    out.push_str(&rest[..at]);
                    out.push_str(val);
                    rest = &rest[at + slot.len()..];
                }
                None => {
                    out.push_str(rest);
                    return out;
                }
            }
        }
    }
}

/// Splits a rendered responder prompt back into its memory block and
/// question. Returns `None` for prompts that are not responder prompts.
pub fn parse_responder_prompt(prompt: &str) -> Option<(Vec<&str>, String)> {
    let mut lines = prompt.lines();
    lines.by_ref().find(|l| l.trim() == "MEMORIES:")?;
    let mut memories = Vec::new();
    let mut found_question = false;
    for line in lines.by_ref() {
        if line.trim() == "QUESTION:" {
            found_question = true;
            break;
        }
        if !line.trim().is_empty() {
            memories.push(line);
        }
    }
    if !found_question {
        return None;
    }
    let question: Vec<&str> = lines
        .take_while(|l| !l.starts_with("Answer using ONLY"))
        .collect();
    Some((memories, question.join("\n").trim().to_string()))
}
