//! Search-and-replace blocks.
//!
//! ```text
//! <<<<<<< SEARCH
//! <lines of the original>
//! =======
//! <replacement lines>
//! >>>>>>> REPLACE
//! ```
//!
//! Search blocks are matched line-aligned and must occur exactly once in the
//! original. Blocks apply simultaneously and may not overlap. An empty search
//! block is only valid against an empty document.

use super::{EditError, EditFormat, EditScript, Result, TextDocument};

pub const SR_SEARCH_FENCE: &str = "<<<<<<< SEARCH";
pub const SR_DIVIDER: &str = "=======";
pub const SR_REPLACE_FENCE: &str = ">>>>>>> REPLACE";

fn is_fence(line: &str) -> bool {
    line == SR_SEARCH_FENCE || line == SR_DIVIDER || line == SR_REPLACE_FENCE
}

/// Line-aligned occurrences of `needle` in `haystack`, capped at two.
fn occurrences(haystack: &[&str], needle: &[&str]) -> Vec<usize> {
    if needle.is_empty() {
        return (0..=haystack.len()).take(2).collect();
    }
    if needle.len() > haystack.len() {
        return Vec::new();
    }
    let mut hits = Vec::new();
    for start in 0..=haystack.len() - needle.len() {
        if haystack[start..start + needle.len()] == *needle {
            hits.push(start);
            if hits.len() == 2 {
                break;
            }
        }
    }
    hits
}

/// A search span over the original, covering a run of script hunks.
#[derive(Debug, Clone)]
struct Block {
    lo: usize,
    hi: usize,
    first_hunk: usize,
    last_hunk: usize,
}

pub(super) fn render(script: &EditScript, old: &TextDocument) -> Result<String> {
    let lines = old.lines();
    let n = lines.len();
    let mut blocks: Vec<Block> = script
        .hunks
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let r = h.old_range();
            Block {
                lo: r.start,
                hi: r.end,
                first_hunk: i,
                last_hunk: i,
            }
        })
        .collect();

    loop {
        // Grow each block symmetrically until its text is unique.
        for (idx, block) in blocks.iter_mut().enumerate() {
            loop {
                let unique = if n == 0 {
                    true
                } else {
                    block.hi > block.lo
                        && occurrences(&lines, &lines[block.lo..block.hi]).len() == 1
                };
                if unique {
                    break;
                }
                if block.lo == 0 && block.hi == n {
                    return Err(EditError::SearchAmbiguous {
                        block: idx + 1,
                        matches: occurrences(&lines, &lines[block.lo..block.hi]).len(),
                    });
                }
                block.lo = block.lo.saturating_sub(1);
                block.hi = (block.hi + 1).min(n);
            }
        }
        // Overlapping spans cannot be applied simultaneously; fuse them and
        // re-check uniqueness.
        let mut merged: Vec<Block> = Vec::with_capacity(blocks.len());
        let mut fused = false;
        for block in blocks {
            match merged.last_mut() {
                Some(prev) if block.lo < prev.hi => {
                    prev.hi = prev.hi.max(block.hi);
                    prev.last_hunk = block.last_hunk;
                    fused = true;
                }
                _ => merged.push(block),
            }
        }
        blocks = merged;
        if !fused {
            break;
        }
    }

    let mut out = String::new();
    for block in &blocks {
        if lines[block.lo..block.hi].iter().any(|l| is_fence(l)) {
            let line = lines[block.lo..block.hi]
                .iter()
                .find(|l| is_fence(l))
                .unwrap();
            return Err(EditError::MarkerCollision {
                format: EditFormat::Sr,
                line: (*line).to_owned(),
            });
        }
        let mut replacement: Vec<&str> = Vec::new();
        let mut cursor = block.lo;
        for hunk in &script.hunks[block.first_hunk..=block.last_hunk] {
            let r = hunk.old_range();
            replacement.extend_from_slice(&lines[cursor..r.start]);
            replacement.extend(hunk.new_lines.iter().map(String::as_str));
            cursor = r.end;
        }
        replacement.extend_from_slice(&lines[cursor..block.hi]);
        if let Some(line) = replacement.iter().find(|l| is_fence(l)) {
            return Err(EditError::MarkerCollision {
                format: EditFormat::Sr,
                line: (*line).to_owned(),
            });
        }

        out.push_str(SR_SEARCH_FENCE);
        out.push('\n');
        for line in &lines[block.lo..block.hi] {
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(SR_DIVIDER);
        out.push('\n');
        for line in replacement {
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(SR_REPLACE_FENCE);
        out.push('\n');
    }
    Ok(out)
}

struct ParsedBlock<'a> {
    search: Vec<&'a str>,
    replace: Vec<&'a str>,
}

fn parse_error(line: usize, message: impl Into<String>) -> EditError {
    EditError::Parse {
        format: EditFormat::Sr,
        line,
        message: message.into(),
    }
}

fn parse_blocks(payload: &str) -> Result<Vec<ParsedBlock<'_>>> {
    enum State {
        Outside,
        Search,
        Replace,
    }
    let mut state = State::Outside;
    let mut blocks: Vec<ParsedBlock> = Vec::new();
    let mut last_line = 0;
    for (idx, line) in payload.split_terminator('\n').enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        state = match (state, line) {
            (State::Outside, SR_SEARCH_FENCE) => {
                blocks.push(ParsedBlock {
                    search: Vec::new(),
                    replace: Vec::new(),
                });
                State::Search
            }
            (State::Outside, l) if l.trim().is_empty() => State::Outside,
            (State::Outside, l) => {
                return Err(parse_error(
                    line_no,
                    format!("expected `{SR_SEARCH_FENCE}`, found {l:?}"),
                ))
            }
            (State::Search, SR_DIVIDER) => State::Replace,
            (State::Search, l) if is_fence(l) => {
                return Err(parse_error(
                    line_no,
                    format!("unexpected {l:?} inside a search block"),
                ))
            }
            (State::Search, l) => {
                blocks.last_mut().unwrap().search.push(l);
                State::Search
            }
            (State::Replace, SR_REPLACE_FENCE) => State::Outside,
            (State::Replace, l) if is_fence(l) => {
                return Err(parse_error(
                    line_no,
                    format!("unexpected {l:?} inside a replace block"),
                ))
            }
            (State::Replace, l) => {
                blocks.last_mut().unwrap().replace.push(l);
                State::Replace
            }
        };
    }
    match state {
        State::Outside => Ok(blocks),
        _ => Err(parse_error(last_line, "unterminated block")),
    }
}

pub(super) fn apply(payload: &str, old: &TextDocument) -> Result<TextDocument> {
    let lines = old.lines();
    let blocks = parse_blocks(payload)?;

    let mut located: Vec<(usize, usize, &[&str])> = Vec::with_capacity(blocks.len());
    for (idx, block) in blocks.iter().enumerate() {
        if block.search.is_empty() && lines.is_empty() {
            located.push((0, 0, &block.replace));
            continue;
        }
        let hits = occurrences(&lines, &block.search);
        match hits.len() {
            0 => return Err(EditError::SearchNotFound { block: idx + 1 }),
            1 => located.push((hits[0], hits[0] + block.search.len(), &block.replace)),
            _ => {
                let total = if block.search.is_empty() {
                    lines.len() + 1
                } else {
                    (0..=lines.len() - block.search.len())
                        .filter(|&s| lines[s..s + block.search.len()] == *block.search)
                        .count()
                };
                return Err(EditError::SearchAmbiguous {
                    block: idx + 1,
                    matches: total,
                });
            }
        }
    }

    located.sort_by_key(|&(start, end, _)| (start, end));
    for pair in located.windows(2) {
        if pair[1].0 < pair[0].1 || (pair[0].0 == pair[0].1 && pair[1].0 == pair[0].0) {
            return Err(parse_error(0, "search blocks overlap"));
        }
    }

    let mut out: Vec<&str> = Vec::with_capacity(lines.len());
    let mut copied = 0;
    for (start, end, replace) in located {
        out.extend_from_slice(&lines[copied..start]);
        out.extend_from_slice(replace);
        copied = end;
    }
    out.extend_from_slice(&lines[copied..]);
    Ok(TextDocument::from_lines(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edit_codec::{diff, parse_edit, render_edit, RenderedEdit};

    fn sr(payload: &str) -> RenderedEdit {
        RenderedEdit {
            format: EditFormat::Sr,
            payload: payload.to_owned(),
        }
    }

    #[test]
    fn rename_example_searches_whole_hunk() {
        let old = TextDocument::new("a = 1\nb = 2\nc = a + b\n");
        let new = TextDocument::new("i = 1\nj = 2\nk = i + j\n");
        let rendered = render_edit(&diff(&old, &new), &old, &new, EditFormat::Sr).unwrap();
        assert_eq!(
            rendered.payload,
            "<<<<<<< SEARCH\na = 1\nb = 2\nc = a + b\n=======\ni = 1\nj = 2\nk = i + j\n>>>>>>> REPLACE\n"
        );
    }

    #[test]
    fn repeated_lines_pull_in_context() {
        let old = TextDocument::new("x\nfoo\ny\nfoo\nz\n");
        let new = TextDocument::new("x\nfoo\ny\nbar\nz\n");
        let rendered = render_edit(&diff(&old, &new), &old, &new, EditFormat::Sr).unwrap();
        assert_eq!(
            rendered.payload,
            "<<<<<<< SEARCH\ny\nfoo\nz\n=======\ny\nbar\nz\n>>>>>>> REPLACE\n"
        );
        assert_eq!(parse_edit(&rendered, &old).unwrap(), diff(&old, &new));
    }

    #[test]
    fn pure_insertion_uses_neighbours_as_anchor() {
        let old = TextDocument::new("x=1\ny=2\n");
        let new = TextDocument::new("x=1\nz=3\ny=2\n");
        let rendered = render_edit(&diff(&old, &new), &old, &new, EditFormat::Sr).unwrap();
        assert_eq!(
            rendered.payload,
            "<<<<<<< SEARCH\nx=1\ny=2\n=======\nx=1\nz=3\ny=2\n>>>>>>> REPLACE\n"
        );
    }

    #[test]
    fn empty_document_is_a_full_insert() {
        let old = TextDocument::empty();
        let new = TextDocument::new("a\nb\n");
        let rendered = render_edit(&diff(&old, &new), &old, &new, EditFormat::Sr).unwrap();
        assert_eq!(
            rendered.payload,
            "<<<<<<< SEARCH\n=======\na\nb\n>>>>>>> REPLACE\n"
        );
        assert_eq!(parse_edit(&rendered, &old).unwrap(), diff(&old, &new));
    }

    #[test]
    fn close_hunks_fuse_into_one_block() {
        let old = TextDocument::new("a\na\nb\na\na\n");
        let new = TextDocument::new("c\na\nb\na\nc\n");
        let rendered = render_edit(&diff(&old, &new), &old, &new, EditFormat::Sr).unwrap();
        assert_eq!(rendered.payload.matches(SR_SEARCH_FENCE).count(), 1);
        assert_eq!(parse_edit(&rendered, &old).unwrap(), diff(&old, &new));
    }

    #[test]
    fn not_found_and_ambiguous() {
        let old = TextDocument::new("a\nb\na\n");
        let missing = sr("<<<<<<< SEARCH\nq\n=======\nr\n>>>>>>> REPLACE\n");
        assert_eq!(
            parse_edit(&missing, &old),
            Err(EditError::SearchNotFound { block: 1 })
        );
        let ambiguous = sr("<<<<<<< SEARCH\na\n=======\nr\n>>>>>>> REPLACE\n");
        assert_eq!(
            parse_edit(&ambiguous, &old),
            Err(EditError::SearchAmbiguous {
                block: 1,
                matches: 2
            })
        );
    }

    #[test]
    fn unterminated_block_is_a_parse_error() {
        let old = TextDocument::new("a\n");
        let err = parse_edit(&sr("<<<<<<< SEARCH\na\n=======\nb\n"), &old).unwrap_err();
        assert!(matches!(
            err,
            EditError::Parse {
                format: EditFormat::Sr,
                ..
            }
        ));
    }
}
