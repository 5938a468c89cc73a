//! Bit-exact template:
//!
//! ```text
//! <|im_start|>{role}\n{body}<|im_end|>\n
//! ```
//!
//! Assistant bodies wrap the code change as `<|next_start|>{payload}<|next_end|>`
//! followed by `\n{chat}`; with `chat_first` the chat comes first, then `\n`,
//! then the wrapped change. History snippets after the first are shown as an
//! edit from the previous snippet in the chosen format (whole file for WF).
//! In LC mode the current code carries `k|` line numbers.

use super::{
    annotate_target, tokens, validate_order, Conversation, ConversationError, Message, Result, Role,
};
use crate::edit_codec::{number_lines, render_change, EditFormat, TextDocument};

fn check(position: usize, text: &str) -> Result<()> {
    match tokens::find_reserved(text) {
        Some(token) => Err(ConversationError::SpecialTokenInBody { position, token }),
        None => Ok(()),
    }
}

/// Assistant body text for a code payload and/or chat.
pub fn render_assistant_body(code: Option<&str>, chat: Option<&str>, chat_first: bool) -> String {
    let code = code.map(|c| [tokens::NEXT_START, c, tokens::NEXT_END].concat());
    match (code, chat) {
        (Some(code), Some(chat)) if chat_first => format!("{chat}\n{code}"),
        (Some(code), Some(chat)) => format!("{code}\n{chat}"),
        (Some(code), None) => code,
        (None, Some(chat)) => chat.to_owned(),
        (None, None) => String::new(),
    }
}

/// Renders one message. `previous_history` is the body of the preceding
/// history message, if any; `position` is 1-based and only used in errors.
pub fn render_message(
    msg: &Message,
    previous_history: Option<&str>,
    format: EditFormat,
    position: usize,
) -> Result<String> {
    let body = match msg.role {
        Role::System | Role::User => {
            check(position, &msg.body)?;
            msg.body.clone()
        }
        Role::History => {
            check(position, &msg.body)?;
            match previous_history {
                Some(prev) if format != EditFormat::Wf => {
                    render_change(
                        &TextDocument::new(prev),
                        &TextDocument::new(&msg.body),
                        format,
                    )?
                    .payload
                }
                _ => msg.body.clone(),
            }
        }
        Role::Current => {
            check(position, &msg.body)?;
            let annotated = annotate_target(&msg.body, msg.annotation.unwrap_or_default())?;
            if format == EditFormat::Lc {
                number_lines(&TextDocument::new(annotated))
            } else {
                annotated
            }
        }
        Role::Assistant => {
            let code = msg.code_change.as_ref().map(|c| c.payload.as_str());
            let chat = msg.chat.as_deref();
            if code.is_none() && chat.is_none() {
                return Err(ConversationError::EmptyAssistant { position });
            }
            if let Some(code) = code {
                check(position, code)?;
            }
            if let Some(chat) = chat {
                check(position, chat)?;
            }
            render_assistant_body(code, chat, msg.chat_first)
        }
    };
    Ok([
        tokens::IM_START,
        msg.role.as_str(),
        "\n",
        &body,
        tokens::IM_END,
        "\n",
    ]
    .concat())
}

/// Renders a whole conversation. Rendering is append-only: the output for a
/// conversation is a byte prefix of the output for any extension of it.
pub fn render_template(conv: &Conversation, format: EditFormat) -> Result<String> {
    validate_order(conv)?;
    let mut out = String::new();
    let mut previous_history: Option<&str> = None;
    for (idx, msg) in conv.messages.iter().enumerate() {
        out.push_str(&render_message(msg, previous_history, format, idx + 1)?);
        if msg.role == Role::History {
            previous_history = Some(&msg.body);
        }
    }
    Ok(out)
}

/// The rendered conversation followed by an open assistant turn.
pub fn generation_prompt(conv: &Conversation, format: EditFormat) -> Result<String> {
    let mut out = render_template(conv, format)?;
    out.push_str(tokens::IM_START);
    out.push_str("assistant\n");
    Ok(out)
}

/// Splits assistant output into its code-change payload and chat.
///
/// The payload is the text between the first `<|next_start|>` and the next
/// `<|next_end|>`; everything else, trimmed, is chat.
pub fn parse_assistant(text: &str) -> Result<(Option<String>, Option<String>)> {
    let start = text.find(tokens::NEXT_START);
    let end = text.find(tokens::NEXT_END);
    let (code, rest) = match (start, end) {
        (None, None) => (None, text.to_owned()),
        (Some(_), None) => return Err(ConversationError::UnbalancedTokens("start without end")),
        (None, Some(_)) => return Err(ConversationError::UnbalancedTokens("end without start")),
        (Some(s), Some(e)) if e < s => {
            return Err(ConversationError::UnbalancedTokens("end before start"))
        }
        (Some(s), Some(e)) => {
            let code = &text[s + tokens::NEXT_START.len()..e];
            let before = text[..s].trim();
            let after = text[e + tokens::NEXT_END.len()..].trim();
            let rest = match (before.is_empty(), after.is_empty()) {
                (false, false) => format!("{before}\n{after}"),
                (false, true) => before.to_owned(),
                _ => after.to_owned(),
            };
            (Some(code.to_owned()), rest)
        }
    };
    let rest = rest.trim();
    let chat = (!rest.is_empty()).then(|| rest.to_owned());
    Ok((code, chat))
}
