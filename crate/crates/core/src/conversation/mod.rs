//! Assistant conversations: system, history, current, user and assistant
//! messages in that order, rendered through a ChatML-style template.

mod template;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edit_codec::{EditError, RenderedEdit, TextDocument};

pub use template::{
    generation_prompt, parse_assistant, render_assistant_body, render_message, render_template,
};

/// Reserved tokens of the template. None of them may appear in message content.
pub mod tokens {
    pub const IM_START: &str = "<|im_start|>";
    pub const IM_END: &str = "<|im_end|>";
    pub const NEXT_START: &str = "<|next_start|>";
    pub const NEXT_END: &str = "<|next_end|>";
    pub const TARGET: &str = "<|target|>";
    pub const TARGET_START: &str = "<|target_start|>";
    pub const TARGET_END: &str = "<|target_end|>";
    pub const MESSAGES_START: &str = "<|messages_start|>";
    pub const MESSAGES_END: &str = "<|messages_end|>";

    pub const RESERVED: [&str; 9] = [
        IM_START,
        IM_END,
        NEXT_START,
        NEXT_END,
        TARGET,
        TARGET_START,
        TARGET_END,
        MESSAGES_START,
        MESSAGES_END,
    ];

    /// First reserved token contained in `text`, if any.
    pub fn find_reserved(text: &str) -> Option<&'static str> {
        if !text.contains("<|") {
            return None;
        }
        RESERVED.iter().copied().find(|t| text.contains(t))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConversationError {
    #[error(transparent)]
    Order(#[from] OrderViolation),
    #[error("message {position} contains the reserved token {token}")]
    SpecialTokenInBody {
        position: usize,
        token: &'static str,
    },
    #[error("unbalanced code-change tokens: {0}")]
    UnbalancedTokens(&'static str),
    #[error("target index {index} is outside a document of {len} characters")]
    AnnotationOutOfBounds { index: usize, len: usize },
    #[error("selection start {start} is after its end {end}")]
    ReversedSelection { start: usize, end: usize },
    #[error("cannot promote: {0}")]
    InvalidPromotion(String),
    #[error("assistant message {position} carries neither a code change nor chat")]
    EmptyAssistant { position: usize },
    #[error(transparent)]
    Edit(#[from] EditError),
}

pub type Result<T, E = ConversationError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    History,
    Current,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::History => "history",
            Role::Current => "current",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where in the current code the programmer is pointing. Offsets count
/// Unicode scalar values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TargetAnnotation {
    #[default]
    None,
    Cursor {
        offset: usize,
    },
    Selection {
        start: usize,
        end: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    #[serde(default)]
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<TargetAnnotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_change: Option<RenderedEdit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chat: Option<String>,
    /// Assistant only: put the chat before the code change (reasoning first).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub chat_first: bool,
}

impl Message {
    fn plain(role: Role, body: impl Into<String>) -> Self {
        Self {
            role,
            body: body.into(),
            annotation: None,
            code_change: None,
            chat: None,
            chat_first: false,
        }
    }

    pub fn system(body: impl Into<String>) -> Self {
        Self::plain(Role::System, body)
    }

    pub fn history(code: &TextDocument) -> Self {
        Self::plain(Role::History, code.content())
    }

    pub fn current(code: &TextDocument) -> Self {
        Self::plain(Role::Current, code.content())
    }

    pub fn current_with_target(code: &TextDocument, annotation: TargetAnnotation) -> Self {
        let mut msg = Self::current(code);
        if annotation != TargetAnnotation::None {
            msg.annotation = Some(annotation);
        }
        msg
    }

    pub fn user(instruction: impl Into<String>) -> Self {
        Self::plain(Role::User, instruction)
    }

    pub fn assistant(code_change: Option<RenderedEdit>, chat: Option<String>) -> Self {
        Self {
            code_change,
            chat: chat.filter(|c| !c.trim().is_empty()),
            ..Self::plain(Role::Assistant, "")
        }
    }

    pub fn with_chat_first(mut self, chat_first: bool) -> Self {
        self.chat_first = chat_first;
        self
    }
}

/// An ordered message list plus the user/assistant turns retired by [`promote`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub messages: Vec<Message>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub archive: Vec<Message>,
}

impl Conversation {
    pub fn new(messages: Vec<Message>) -> Self {
        Self {
            messages,
            archive: Vec::new(),
        }
    }

    pub fn push(&mut self, message: Message) {
        self.messages.push(message);
    }

    pub fn roles(&self) -> Vec<Role> {
        self.messages.iter().map(|m| m.role).collect()
    }

    pub fn count(&self, role: Role) -> usize {
        self.messages.iter().filter(|m| m.role == role).count()
    }

    pub fn find(&self, role: Role) -> Option<&Message> {
        self.messages.iter().find(|m| m.role == role)
    }

    pub fn history(&self) -> impl Iterator<Item = &Message> {
        self.messages.iter().filter(|m| m.role == Role::History)
    }

    /// Keeps only the `k` most recent history messages.
    pub fn with_history_window(&self, k: usize) -> Conversation {
        let history: Vec<Message> = self.history().cloned().collect();
        let kept = slide_window(&history, k);
        let mut messages = Vec::with_capacity(self.messages.len());
        let mut inserted = false;
        for msg in &self.messages {
            if msg.role == Role::History {
                if !inserted {
                    messages.extend(kept.iter().cloned());
                    inserted = true;
                }
            } else {
                messages.push(msg.clone());
            }
        }
        Conversation {
            messages,
            archive: self.archive.clone(),
        }
    }
}

/// Where a conversation first breaks the `S? H* C U? A?` shape.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("message {position}: {found} where {expected} was expected")]
pub struct OrderViolation {
    /// 1-based; `len + 1` when the conversation ends too early.
    pub position: usize,
    pub found: String,
    pub expected: &'static str,
}

/// Accepts exactly `S? H* C U? A?`. The empty conversation is accepted too.
pub fn validate_order(conv: &Conversation) -> Result<(), OrderViolation> {
    if conv.messages.is_empty() {
        return Ok(());
    }
    // Furthest stage reached: 0 start, 1 system, 2 history, 3 current, 4 user, 5 assistant.
    let mut stage = 0;
    for (idx, msg) in conv.messages.iter().enumerate() {
        let (allowed, expected) = match (stage, msg.role) {
            (0, Role::System) => (true, ""),
            (0..=2, Role::History) => (true, ""),
            (0..=2, Role::Current) => (true, ""),
            (3, Role::User) => (true, ""),
            (3 | 4, Role::Assistant) => (true, ""),
            (0..=2, _) => (false, "history or current"),
            (3, _) => (false, "user or assistant"),
            (4, _) => (false, "assistant"),
            _ => (false, "end of conversation"),
        };
        if !allowed {
            return Err(OrderViolation {
                position: idx + 1,
                found: msg.role.to_string(),
                expected,
            });
        }
        stage = match msg.role {
            Role::System => 1,
            Role::History => 2,
            Role::Current => 3,
            Role::User => 4,
            Role::Assistant => 5,
        };
    }
    if stage < 3 {
        return Err(OrderViolation {
            position: conv.messages.len() + 1,
            found: "end of conversation".into(),
            expected: "current",
        });
    }
    Ok(())
}

fn char_to_byte(text: &str, index: usize) -> Option<usize> {
    if index == 0 {
        return Some(0);
    }
    text.char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(text.len()))
        .nth(index)
}

/// Inserts the target tokens for `annotation` into `code`.
pub fn annotate_target(code: &str, annotation: TargetAnnotation) -> Result<String> {
    let len = code.chars().count();
    let at = |index: usize| {
        char_to_byte(code, index).ok_or(ConversationError::AnnotationOutOfBounds { index, len })
    };
    match annotation {
        TargetAnnotation::None => Ok(code.to_owned()),
        TargetAnnotation::Cursor { offset } => {
            let b = at(offset)?;
            Ok([&code[..b], tokens::TARGET, &code[b..]].concat())
        }
        TargetAnnotation::Selection { start, end } => {
            if start > end {
                return Err(ConversationError::ReversedSelection { start, end });
            }
            let (s, e) = (at(start)?, at(end)?);
            Ok([
                &code[..s],
                tokens::TARGET_START,
                &code[s..e],
                tokens::TARGET_END,
                &code[e..],
            ]
            .concat())
        }
    }
}

/// Removes every target token, undoing [`annotate_target`].
pub fn strip_target_tokens(text: &str) -> String {
    text.replace(tokens::TARGET_START, "")
        .replace(tokens::TARGET_END, "")
        .replace(tokens::TARGET, "")
}

/// The most recent `min(k, n)` entries, oldest first.
pub fn slide_window(history: &[Message], k: usize) -> Vec<Message> {
    history[history.len().saturating_sub(k)..].to_vec()
}

/// Starts the next request of a session: the old current code joins the
/// history, `new_current` takes its place, and any user/assistant turns move
/// to the archive.
pub fn promote(conv: &Conversation, new_current: Message) -> Result<Conversation> {
    if new_current.role != Role::Current {
        return Err(ConversationError::InvalidPromotion(format!(
            "replacement has role {}",
            new_current.role
        )));
    }
    validate_order(conv)?;
    if conv.count(Role::Current) == 0 {
        return Err(ConversationError::InvalidPromotion(
            "conversation has no current message".into(),
        ));
    }
    let mut messages = Vec::with_capacity(conv.messages.len() + 1);
    let mut archive = conv.archive.clone();
    for msg in &conv.messages {
        match msg.role {
            Role::System | Role::History => messages.push(msg.clone()),
            Role::Current => messages.push(Message::plain(Role::History, msg.body.clone())),
            Role::User | Role::Assistant => archive.push(msg.clone()),
        }
    }
    messages.push(new_current);
    Ok(Conversation { messages, archive })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(roles: &[Role]) -> Conversation {
        Conversation::new(
            roles
                .iter()
                .map(|&r| match r {
                    Role::Assistant => Message::assistant(None, Some("ok".into())),
                    r => Message::plain(r, "x\n"),
                })
                .collect(),
        )
    }

    #[test]
    fn order_examples() {
        use Role::*;
        assert!(
            validate_order(&conv(&[System, History, History, Current, User, Assistant])).is_ok()
        );
        assert!(validate_order(&conv(&[Current])).is_ok());
        let err = validate_order(&conv(&[Current, History])).unwrap_err();
        assert_eq!(err.position, 2);
        assert_eq!(err.found, "history");
    }

    #[test]
    fn order_rejects_misplaced_roles() {
        use Role::*;
        for bad in [
            vec![History, System, Current],
            vec![System],
            vec![Current, Current],
            vec![Current, Assistant, User],
            vec![User],
            vec![History, Current, History],
            vec![Current, User, User],
        ] {
            assert!(validate_order(&conv(&bad)).is_err(), "{bad:?}");
        }
        assert_eq!(validate_order(&conv(&[System])).unwrap_err().position, 2);
    }

    #[test]
    fn annotation_examples() {
        assert_eq!(
            annotate_target("abc", TargetAnnotation::None).unwrap(),
            "abc"
        );
        assert_eq!(
            annotate_target("ab", TargetAnnotation::Cursor { offset: 1 }).unwrap(),
            "a<|target|>b"
        );
        assert_eq!(
            annotate_target("abcd", TargetAnnotation::Selection { start: 1, end: 3 }).unwrap(),
            "a<|target_start|>bc<|target_end|>d"
        );
    }

    #[test]
    fn annotation_counts_characters_not_bytes() {
        assert_eq!(
            annotate_target("éa", TargetAnnotation::Cursor { offset: 1 }).unwrap(),
            "é<|target|>a"
        );
        assert_eq!(
            annotate_target("éa", TargetAnnotation::Cursor { offset: 2 }).unwrap(),
            "éa<|target|>"
        );
    }

    #[test]
    fn annotation_bounds() {
        assert_eq!(
            annotate_target("ab", TargetAnnotation::Cursor { offset: 3 }),
            Err(ConversationError::AnnotationOutOfBounds { index: 3, len: 2 })
        );
        assert!(matches!(
            annotate_target("ab", TargetAnnotation::Selection { start: 2, end: 1 }),
            Err(ConversationError::ReversedSelection { .. })
        ));
    }

    #[test]
    fn window_examples() {
        let hist: Vec<Message> = (1..=5)
            .map(|i| Message::plain(Role::History, format!("h{i}")))
            .collect();
        let bodies = |v: Vec<Message>| v.into_iter().map(|m| m.body).collect::<Vec<_>>();
        assert_eq!(bodies(slide_window(&hist, 3)), ["h3", "h4", "h5"]);
        assert_eq!(bodies(slide_window(&hist[..2], 5)), ["h1", "h2"]);
        assert!(slide_window(&hist, 0).is_empty());
    }

    #[test]
    fn promote_examples() {
        let c1 = Message::plain(Role::Current, "one\n");
        let c2 = Message::plain(Role::Current, "two\n");
        let c3 = Message::plain(Role::Current, "three\n");

        let p = promote(&Conversation::new(vec![c1.clone()]), c2.clone()).unwrap();
        assert_eq!(p.roles(), [Role::History, Role::Current]);
        assert_eq!(p.messages[0].body, "one\n");

        let full = Conversation::new(vec![
            Message::system("sys"),
            c1.clone(),
            Message::user("do it"),
            Message::assistant(None, Some("done".into())),
        ]);
        let p = promote(&full, c2.clone()).unwrap();
        assert_eq!(p.roles(), [Role::System, Role::History, Role::Current]);
        assert_eq!(p.archive.len(), 2);

        let twice = promote(&p, c3).unwrap();
        let hist: Vec<&str> = twice.history().map(|m| m.body.as_str()).collect();
        assert_eq!(hist, ["one\n", "two\n"]);
        assert_eq!(twice.archive.len(), 2);
    }

    #[test]
    fn promote_requires_current_role() {
        let c = Conversation::new(vec![Message::plain(Role::Current, "x")]);
        assert!(promote(&c, Message::user("u")).is_err());
    }

    #[test]
    fn json_schema_round_trip() {
        let c = Conversation::new(vec![
            Message::system("sys"),
            Message::current_with_target(
                &TextDocument::new("ab\n"),
                TargetAnnotation::Cursor { offset: 1 },
            ),
            Message::assistant(
                Some(RenderedEdit {
                    format: crate::edit_codec::EditFormat::Wf,
                    payload: "b\n".into(),
                }),
                Some("why".into()),
            ),
        ]);
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains(r#""annotation":{"kind":"cursor","offset":1}"#));
        let back: Conversation = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }
}
