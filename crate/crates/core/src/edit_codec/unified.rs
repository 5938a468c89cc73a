use std::sync::OnceLock;

use regex::Regex;

use super::{EditError, EditFormat, EditScript, Result, TextDocument};

pub const UD_CONTEXT_LINES: usize = 3;
pub const UD_OLD_HEADER: &str = "--- original";
pub const UD_NEW_HEADER: &str = "+++ modified";

fn hunk_header() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@").unwrap())
}

fn range_field(start0: usize, len: usize) -> String {
    // GNU convention: an empty range names the line before it.
    let start = if len == 0 { start0 } else { start0 + 1 };
    if len == 1 {
        start.to_string()
    } else {
        format!("{start},{len}")
    }
}

pub(super) fn render(script: &EditScript, old: &TextDocument) -> String {
    let lines = old.lines();
    let mut out = String::new();
    if script.is_empty() {
        return out;
    }
    out.push_str(UD_OLD_HEADER);
    out.push('\n');
    out.push_str(UD_NEW_HEADER);
    out.push('\n');

    // Group change hunks whose context windows touch.
    let mut groups: Vec<std::ops::Range<usize>> = Vec::new();
    for (idx, hunk) in script.hunks.iter().enumerate() {
        match groups.last_mut() {
            Some(group)
                if hunk.old_range().start - script.hunks[group.end - 1].old_range().end
                    <= 2 * UD_CONTEXT_LINES =>
            {
                group.end = idx + 1
            }
            _ => groups.push(idx..idx + 1),
        }
    }

    let mut delta: isize = 0;
    for group in groups {
        let hunks = &script.hunks[group];
        let first = &hunks[0];
        let last = &hunks[hunks.len() - 1];
        let from = first.old_range().start.saturating_sub(UD_CONTEXT_LINES);
        let to = (last.old_range().end + UD_CONTEXT_LINES).min(lines.len());
        let group_delta: isize = hunks
            .iter()
            .map(|h| h.new_len() as isize - h.old_len() as isize)
            .sum();
        let old_len = to - from;
        let new_len = (old_len as isize + group_delta) as usize;
        let new_from = (from as isize + delta) as usize;
        out.push_str(&format!(
            "@@ -{} +{} @@\n",
            range_field(from, old_len),
            range_field(new_from, new_len)
        ));

        let mut cursor = from;
        for hunk in hunks {
            let range = hunk.old_range();
            for line in &lines[cursor..range.start] {
                out.push(' ');
                out.push_str(line);
                out.push('\n');
            }
            for line in &hunk.old_lines {
                out.push('-');
                out.push_str(line);
                out.push('\n');
            }
            for line in &hunk.new_lines {
                out.push('+');
                out.push_str(line);
                out.push('\n');
            }
            cursor = range.end;
        }
        for line in &lines[cursor..to] {
            out.push(' ');
            out.push_str(line);
            out.push('\n');
        }
        delta += group_delta;
    }
    out
}

fn parse_error(line: usize, message: impl Into<String>) -> EditError {
    EditError::Parse {
        format: EditFormat::Ud,
        line,
        message: message.into(),
    }
}

/// Applies a unified diff to `old`. File headers are optional; every hunk's
/// context and deleted lines must match `old` exactly.
pub(super) fn apply(payload: &str, old: &TextDocument) -> Result<TextDocument> {
    let old_lines = old.lines();
    let payload_lines: Vec<&str> = payload.split_terminator('\n').collect();
    let mut out: Vec<&str> = Vec::with_capacity(old_lines.len());
    let mut copied = 0usize;
    let mut hunk_no = 0usize;
    let mut idx = 0usize;

    while idx < payload_lines.len() {
        let line = payload_lines[idx];
        let line_no = idx + 1;
        if line.starts_with("--- ") || line.starts_with("+++ ") || line.starts_with("diff ") {
            if hunk_no > 0 {
                return Err(parse_error(line_no, "multi-file patches are not supported"));
            }
            idx += 1;
            continue;
        }
        if !line.starts_with("@@") {
            if line.trim().is_empty() {
                idx += 1;
                continue;
            }
            return Err(parse_error(
                line_no,
                format!("expected a hunk header, found {line:?}"),
            ));
        }
        let caps = hunk_header()
            .captures(line)
            .ok_or_else(|| parse_error(line_no, format!("malformed hunk header {line:?}")))?;
        let num = |i: usize, default: usize| -> Result<usize> {
            caps.get(i)
                .map(|m| m.as_str().parse::<usize>())
                .transpose()
                .map(|v| v.unwrap_or(default))
                .map_err(|_| parse_error(line_no, "hunk header number out of range"))
        };
        let old_start = num(1, 0)?;
        let old_len = num(2, 1)?;
        let _new_start = num(3, 0)?;
        let new_len = num(4, 1)?;
        hunk_no += 1;

        let start0 = if old_len == 0 {
            old_start
        } else {
            old_start.saturating_sub(1)
        };
        if old_len > 0 && old_start == 0 {
            return Err(parse_error(line_no, "hunk starts at line 0"));
        }
        if start0 < copied || start0 + old_len > old_lines.len() {
            return Err(EditError::ContextMismatch {
                hunk: hunk_no,
                line: old_start,
            });
        }
        out.extend_from_slice(&old_lines[copied..start0]);
        copied = start0;

        let (mut seen_old, mut seen_new) = (0usize, 0usize);
        idx += 1;
        while seen_old < old_len || seen_new < new_len {
            let Some(&body) = payload_lines.get(idx) else {
                return Err(parse_error(idx + 1, "hunk body ends early"));
            };
            let (tag, text) = match body.chars().next() {
                Some(c @ (' ' | '-' | '+' | '\\')) => (c, &body[1..]),
                // Some tools strip the space from blank context lines.
                None => (' ', ""),
                Some(_) => {
                    return Err(parse_error(
                        idx + 1,
                        format!("unexpected hunk line {body:?}"),
                    ));
                }
            };
            match tag {
                ' ' | '-' => {
                    if copied >= old_lines.len() || old_lines[copied] != text {
                        return Err(EditError::ContextMismatch {
                            hunk: hunk_no,
                            line: copied + 1,
                        });
                    }
                    if tag == ' ' {
                        out.push(old_lines[copied]);
                        seen_new += 1;
                    }
                    copied += 1;
                    seen_old += 1;
                }
                '+' => {
                    out.push(text);
                    seen_new += 1;
                }
                _ => {}
            }
            if seen_old > old_len || seen_new > new_len {
                return Err(parse_error(idx + 1, "hunk body longer than its header"));
            }
            idx += 1;
        }
        // A trailing "\ No newline at end of file" marker carries no content here.
        while payload_lines.get(idx).is_some_and(|l| l.starts_with('\\')) {
            idx += 1;
        }
    }
    out.extend_from_slice(&old_lines[copied..]);
    Ok(TextDocument::from_lines(out))
}
