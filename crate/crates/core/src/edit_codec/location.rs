//! Location-and-change entries.
//!
//! ```text
//! <a>,<b> c
//! <replacement line>
//! ...
//! ```
//!
//! `a..=b` is a closed, 1-based range in the original numbering and every
//! entry applies to the original simultaneously. `0,0 c` prepends. A pure
//! insertion after line `k` is written as `k,k c` whose replacement repeats
//! line `k` before the inserted lines.

use std::sync::OnceLock;

use regex::Regex;

use super::{EditError, EditFormat, EditScript, Result, TextDocument};

pub const LC_HEADER_PATTERN: &str = r"^(\d+),(\d+) c$";
pub const LC_PREPEND: &str = "0,0 c";

fn header() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(LC_HEADER_PATTERN).unwrap())
}

pub(super) fn render(script: &EditScript, old: &TextDocument) -> Result<String> {
    let lines = old.lines();
    let mut out = String::new();
    for hunk in &script.hunks {
        let mut replacement: Vec<&str> = Vec::with_capacity(hunk.new_len() + 1);
        if hunk.old_len() > 0 {
            out.push_str(&format!("{},{} c\n", hunk.old_start, hunk.old_end() - 1));
        } else if hunk.old_start == 1 {
            out.push_str(LC_PREPEND);
            out.push('\n');
        } else {
            let anchor = hunk.old_start - 1;
            out.push_str(&format!("{anchor},{anchor} c\n"));
            replacement.push(lines[anchor - 1]);
        }
        replacement.extend(hunk.new_lines.iter().map(String::as_str));
        for line in replacement {
            if header().is_match(line) {
                return Err(EditError::MarkerCollision {
                    format: EditFormat::Lc,
                    line: line.to_owned(),
                });
            }
            out.push_str(line);
            out.push('\n');
        }
    }
    Ok(out)
}

struct Entry<'a> {
    /// Zero-based half-open range in the original.
    start: usize,
    end: usize,
    replacement: Vec<&'a str>,
}

fn parse_error(line: usize, message: impl Into<String>) -> EditError {
    EditError::Parse {
        format: EditFormat::Lc,
        line,
        message: message.into(),
    }
}

pub(super) fn apply(payload: &str, old: &TextDocument) -> Result<TextDocument> {
    let old_lines = old.lines();
    let mut entries: Vec<Entry> = Vec::new();
    for (idx, line) in payload.split_terminator('\n').enumerate() {
        let line_no = idx + 1;
        if let Some(caps) = header().captures(line) {
            let a: usize = caps[1]
                .parse()
                .map_err(|_| parse_error(line_no, "line number out of range"))?;
            let b: usize = caps[2]
                .parse()
                .map_err(|_| parse_error(line_no, "line number out of range"))?;
            let (start, end) = match (a, b) {
                (0, 0) => (0, 0),
                (0, _) => return Err(parse_error(line_no, "only `0,0` may start at line 0")),
                (a, b) if a > b => {
                    return Err(parse_error(line_no, format!("range {a},{b} is reversed")))
                }
                (a, b) => (a - 1, b),
            };
            if end > old_lines.len() {
                return Err(parse_error(
                    line_no,
                    format!(
                        "range ends at line {b} but the document has {}",
                        old_lines.len()
                    ),
                ));
            }
            if let Some(prev) = entries.last() {
                if start < prev.end || (start == 0 && end == 0) {
                    return Err(parse_error(line_no, "entries overlap or are out of order"));
                }
            }
            entries.push(Entry {
                start,
                end,
                replacement: Vec::new(),
            });
        } else {
            match entries.last_mut() {
                Some(entry) => entry.replacement.push(line),
                None => {
                    return Err(parse_error(
                        line_no,
                        format!("expected `<a>,<b> c`, found {line:?}"),
                    ))
                }
            }
        }
    }

    let mut out: Vec<&str> = Vec::with_capacity(old_lines.len());
    let mut copied = 0;
    for entry in &entries {
        out.extend_from_slice(&old_lines[copied..entry.start]);
        out.extend_from_slice(&entry.replacement);
        copied = entry.end;
    }
    out.extend_from_slice(&old_lines[copied..]);
    Ok(TextDocument::from_lines(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edit_codec::{diff, parse_edit, render_edit, RenderedEdit};

    fn lc(payload: &str) -> RenderedEdit {
        RenderedEdit {
            format: EditFormat::Lc,
            payload: payload.to_owned(),
        }
    }

    #[test]
    fn rename_example_is_one_entry() {
        let old = TextDocument::new("a = 1\nb = 2\nc = a + b\n");
        let new = TextDocument::new("i = 1\nj = 2\nk = i + j\n");
        let rendered = render_edit(&diff(&old, &new), &old, &new, EditFormat::Lc).unwrap();
        assert_eq!(rendered.payload, "1,3 c\ni = 1\nj = 2\nk = i + j\n");
        let script = parse_edit(&rendered, &old).unwrap();
        assert_eq!(script, diff(&old, &new));
        assert_eq!(script.len(), 1);
        assert_eq!(script.hunks[0].old_len(), 3);
    }

    #[test]
    fn insertion_repeats_anchor_line() {
        let old = TextDocument::new("x=1\ny=2\n");
        let new = TextDocument::new("x=1\nz=3\ny=2\n");
        let rendered = render_edit(&diff(&old, &new), &old, &new, EditFormat::Lc).unwrap();
        assert_eq!(rendered.payload, "1,1 c\nx=1\nz=3\n");
        assert_eq!(parse_edit(&rendered, &old).unwrap(), diff(&old, &new));
    }

    #[test]
    fn empty_document_prepends() {
        let old = TextDocument::empty();
        let new = TextDocument::new("a\n");
        let rendered = render_edit(&diff(&old, &new), &old, &new, EditFormat::Lc).unwrap();
        assert_eq!(rendered.payload, "0,0 c\na\n");
        assert_eq!(parse_edit(&rendered, &old).unwrap(), diff(&old, &new));
    }

    #[test]
    fn deletion_has_no_replacement_lines() {
        let old = TextDocument::new("a\nb\nc\n");
        let new = TextDocument::new("a\nc\n");
        let rendered = render_edit(&diff(&old, &new), &old, &new, EditFormat::Lc).unwrap();
        assert_eq!(rendered.payload, "2,2 c\n");
    }

    #[test]
    fn entries_use_original_numbering() {
        let old = TextDocument::new("a\nb\nc\nd\n");
        let new = apply("1,1 c\nA\nA2\n3,3 c\nC\n", &old).unwrap();
        assert_eq!(new.content(), "A\nA2\nb\nC\nd\n");
    }

    #[test]
    fn header_collision_is_rejected_at_render() {
        let old = TextDocument::new("a\n");
        let new = TextDocument::new("1,2 c\n");
        let err = render_edit(&diff(&old, &new), &old, &new, EditFormat::Lc).unwrap_err();
        assert!(matches!(
            err,
            EditError::MarkerCollision {
                format: EditFormat::Lc,
                ..
            }
        ));
    }

    #[test]
    fn malformed_payloads() {
        let old = TextDocument::new("a\nb\n");
        for bad in [
            "stray\n",
            "3,1 c\n",
            "1,9 c\n",
            "2,2 c\nx\n1,1 c\ny\n",
            "0,1 c\n",
        ] {
            assert!(
                matches!(parse_edit(&lc(bad), &old), Err(EditError::Parse { .. })),
                "{bad:?}"
            );
        }
    }
}
