use alloc::string::String;
use alloc::vec::Vec;

use crate::backend::{ChatBackend, Completion, CompletionRequest, Message};
use crate::config::AbcaConfig;
use crate::error::{Error, Result};
use crate::templates::RETRY_INSTRUCTION;

/// Outcome of one logical agent call, after any parse retries.
pub(crate) struct JsonReply<T> {
    pub value: T,
    pub raw: String,
    pub completion: Completion,
}

pub(crate) fn agent_request(cfg: &AbcaConfig, backend: &dyn ChatBackend, messages: Vec<Message>) -> CompletionRequest {
    let mut req = CompletionRequest::new(backend.model_id(), messages);
    req.temperature = cfg.agent_temperature;
    req.max_tokens = cfg.max_tokens;
    req
}

/// Sends `req`; when `parse` rejects the reply as malformed, re-prompts with the
/// bare-JSON instruction up to `cfg.parse_retries` times.
pub(crate) fn ask_json<T>(
    cfg: &AbcaConfig,
    backend: &dyn ChatBackend,
    mut req: CompletionRequest,
    mut parse: impl FnMut(&Completion) -> Result<T>,
) -> Result<JsonReply<T>> {
    let mut attempt = 0;
    loop {
        let completion = backend.complete(&req)?;
        match parse(&completion) {
            Ok(value) => {
                return Ok(JsonReply { value, raw: completion.text.clone(), completion });
            }
            Err(e) if e.is_payload_error() && attempt < cfg.parse_retries => {
                attempt += 1;
                req.messages.push(Message::assistant(completion.text));
                req.messages.push(Message::user(RETRY_INSTRUCTION));
            }
            Err(e) => return Err(e),
        }
    }
}

pub(crate) fn describe(err: &Error) -> String {
    alloc::format!("{err}")
}
