use std::borrow::Cow;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A newline-normalized block of source text.
///
/// Carriage returns are folded into `\n` on construction and a non-empty
/// document always ends with a newline. When the newline had to be appended,
/// [`TextDocument::original`] drops it again so the input can be reproduced.
#[derive(Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct TextDocument {
    content: String,
    newline_appended: bool,
}

impl TextDocument {
    pub fn new(raw: impl AsRef<str>) -> Self {
        let raw = raw.as_ref();
        let mut content = if raw.contains('\r') {
            raw.replace("\r\n", "\n").replace('\r', "\n")
        } else {
            raw.to_owned()
        };
        let newline_appended = !content.is_empty() && !content.ends_with('\n');
        if newline_appended {
            content.push('\n');
        }
        Self {
            content,
            newline_appended,
        }
    }

    /// Builds a document from lines that carry no terminators.
    pub fn from_lines<I, S>(lines: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut content = String::new();
        for line in lines {
            content.push_str(line.as_ref());
            content.push('\n');
        }
        Self::new(content)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn content(&self) -> &str {
        &self.content
    }

    /// The text as it was handed to [`TextDocument::new`], minus carriage returns.
    pub fn original(&self) -> Cow<'_, str> {
        if self.newline_appended {
            Cow::Borrowed(&self.content[..self.content.len() - 1])
        } else {
            Cow::Borrowed(&self.content)
        }
    }

    pub fn newline_appended(&self) -> bool {
        self.newline_appended
    }

    /// Lines without their terminators. Line `k` (1-based) is `lines()[k - 1]`.
    pub fn lines(&self) -> Vec<&str> {
        self.content.split_terminator('\n').collect()
    }

    pub fn line_count(&self) -> usize {
        self.content.bytes().filter(|&b| b == b'\n').count()
    }

    pub fn is_empty(&self) -> bool {
        self.content.is_empty()
    }

    /// Length in Unicode scalar values, the unit used by target annotations.
    pub fn char_len(&self) -> usize {
        self.content.chars().count()
    }
}

impl fmt::Debug for TextDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("TextDocument").field(&self.content).finish()
    }
}

impl fmt::Display for TextDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.content)
    }
}

impl From<String> for TextDocument {
    fn from(raw: String) -> Self {
        Self::new(raw)
    }
}

impl From<&str> for TextDocument {
    fn from(raw: &str) -> Self {
        Self::new(raw)
    }
}

impl From<TextDocument> for String {
    fn from(doc: TextDocument) -> Self {
        doc.original().into_owned()
    }
}

/// Prefixes every line with `k|`, `k` counting from 1.
pub fn number_lines(doc: &TextDocument) -> String {
    let mut out = String::with_capacity(doc.content().len() + doc.line_count() * 4);
    for (idx, line) in doc.lines().iter().enumerate() {
        out.push_str(&(idx + 1).to_string());
        out.push('|');
        out.push_str(line);
        out.push('\n');
    }
    out
}

/// Inverse of [`number_lines`]. Lines without a `k|` prefix are kept verbatim.
pub fn strip_line_numbers(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.split_inclusive('\n') {
        match line.split_once('|') {
            Some((num, rest)) if !num.is_empty() && num.bytes().all(|b| b.is_ascii_digit()) => {
                out.push_str(rest)
            }
            _ => out.push_str(line),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_carriage_returns() {
        let doc = TextDocument::new("a\r\nb\rc\n");
        assert_eq!(doc.content(), "a\nb\nc\n");
        assert!(!doc.content().contains('\r'));
    }

    #[test]
    fn appends_missing_newline_and_remembers() {
        let doc = TextDocument::new("x = 1");
        assert_eq!(doc.content(), "x = 1\n");
        assert!(doc.newline_appended());
        assert_eq!(doc.original(), "x = 1");

        let doc = TextDocument::new("x = 1\n");
        assert!(!doc.newline_appended());
        assert_eq!(doc.original(), "x = 1\n");
    }

    #[test]
    fn lines_join_back_to_content() {
        for raw in ["", "a\n", "a\n\nb\n", "\n\n"] {
            let doc = TextDocument::new(raw);
            let mut joined = doc.lines().join("\n");
            if !doc.is_empty() {
                joined.push('\n');
            }
            assert_eq!(joined, doc.content());
            assert_eq!(doc.lines().len(), doc.line_count());
        }
    }

    #[test]
    fn number_lines_examples() {
        assert_eq!(number_lines(&TextDocument::new("")), "");
        assert_eq!(number_lines(&TextDocument::new("a\nb\n")), "1|a\n2|b\n");
        let rename = TextDocument::new("a = 1\nb = 2\nc = a + b\n");
        assert_eq!(number_lines(&rename), "1|a = 1\n2|b = 2\n3|c = a + b\n");
    }

    #[test]
    fn strip_recovers_numbered_doc() {
        let doc = TextDocument::new("x|y\n\n12|z\n");
        assert_eq!(strip_line_numbers(&number_lines(&doc)), doc.content());
    }

    #[test]
    fn serde_round_trips_original_text() {
        let doc = TextDocument::new("no newline");
        let json = serde_json::to_string(&doc).unwrap();
        assert_eq!(json, "\"no newline\"");
        let back: TextDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(back, doc);
    }
}
