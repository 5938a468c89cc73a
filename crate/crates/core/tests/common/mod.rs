//! Fixtures shared by the integration test targets.

#![allow(dead_code)]

use std::path::PathBuf;

use assistkit::conversation::{Conversation, Message, TargetAnnotation};
use assistkit::edit_codec::{render_change, EditFormat, TextDocument};
use assistkit::pipeline::SampleType;

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("golden")
}

pub fn golden_name_for_type(t: SampleType) -> String {
    format!("type_{}.txt", t.as_str().to_lowercase())
}

pub fn golden_name_for_format(f: EditFormat) -> String {
    format!("format_{}.txt", f.as_str().to_lowercase())
}

/// Two history steps, the current code and the target of a small session.
pub fn snapshots() -> [TextDocument; 4] {
    [
        TextDocument::new("def mean(xs):\n    pass\n"),
        TextDocument::new("def mean(xs):\n    total = 0\n    for x in xs:\n        total += x\n"),
        TextDocument::new("def mean(xs):\n    total = 0\n    for x in xs:\n        total += x\n    return total / len(xs)\n"),
        TextDocument::new(
            "def mean(xs):\n    if not xs:\n        return 0.0\n    total = 0\n    for x in xs:\n        total += x\n    return total / len(xs)\n",
        ),
    ]
}

/// The golden conversation for one sample type and edit format.
pub fn conversation(sample_type: SampleType, format: EditFormat) -> Conversation {
    let [h1, h2, current, target] = snapshots();
    let mut messages = vec![Message::system("You are a helpful programming assistant.")];
    if sample_type.has_history() {
        messages.push(Message::history(&h1));
        messages.push(Message::history(&h2));
    }
    messages.push(Message::current_with_target(
        &current,
        TargetAnnotation::Cursor { offset: 14 },
    ));
    if sample_type.has_user() {
        messages.push(Message::user("Return 0.0 for an empty list."));
    }
    let change = render_change(&current, &target, format).unwrap();
    messages.push(Message::assistant(
        Some(change),
        Some("An empty list would divide by zero, so I return early.".into()),
    ));
    Conversation::new(messages)
}
