use std::collections::HashMap;

use super::{ChangeHunk, EditScript, TextDocument};

/// Minimal line-based edit script turning `old` into `new`.
///
/// Minimal means the fewest deleted plus inserted lines. Among equally short
/// scripts the one whose changes sit highest in the file wins: at every step
/// the walk below prefers deleting, then inserting, over keeping a line, as
/// long as the remaining suffixes can still reach the optimum.
pub fn diff(old: &TextDocument, new: &TextDocument) -> EditScript {
    let old_lines = old.lines();
    let new_lines = new.lines();

    // Interning keeps the table fill to integer compares.
    let mut ids: HashMap<&str, u32> = HashMap::new();
    let mut a = Vec::with_capacity(old_lines.len());
    for line in &old_lines {
        let next = ids.len() as u32;
        a.push(*ids.entry(line).or_insert(next));
    }
    let mut b = Vec::with_capacity(new_lines.len());
    for line in &new_lines {
        let next = ids.len() as u32;
        b.push(*ids.entry(line).or_insert(next));
    }

    // A shared suffix is always matched at the end, which agrees with the
    // "changes as early as possible" preference.
    let mut n = a.len();
    let mut m = b.len();
    while n > 0 && m > 0 && a[n - 1] == b[m - 1] {
        n -= 1;
        m -= 1;
    }

    // TODO: the suffix table is O(n*m); large inputs want a linear-space
    // divide-and-conquer pass that keeps the same tie-breaking.
    let width = m + 1;
    let mut lcs = vec![0u32; (n + 1) * width];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i * width + j] = if a[i] == b[j] {
                lcs[(i + 1) * width + j + 1] + 1
            } else {
                lcs[(i + 1) * width + j].max(lcs[i * width + j + 1])
            };
        }
    }

    let mut hunks = Vec::new();
    let mut pending: Option<ChangeHunk> = None;
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        let here = if i < n && j < m {
            lcs[i * width + j]
        } else {
            0
        };
        let delete = i < n && (j == m || lcs[(i + 1) * width + j] == here);
        let insert = !delete && j < m && (i == n || lcs[i * width + j + 1] == here);
        if delete || insert {
            let hunk =
                pending.get_or_insert_with(|| ChangeHunk::new(i + 1, Vec::new(), Vec::new()));
            if delete {
                hunk.old_lines.push(old_lines[i].to_owned());
                i += 1;
            } else {
                hunk.new_lines.push(new_lines[j].to_owned());
                j += 1;
            }
        } else {
            debug_assert_eq!(a[i], b[j]);
            hunks.extend(pending.take());
            i += 1;
            j += 1;
        }
    }
    hunks.extend(pending.take());
    EditScript::new(hunks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edit_codec::apply_edit;
    use proptest::prelude::*;

    /// Minimum over every alignment of two short line lists (memoized recursion).
    fn brute_force_cost(a: &[&str], b: &[&str]) -> usize {
        fn go(a: &[&str], b: &[&str], memo: &mut HashMap<(usize, usize), usize>) -> usize {
            let key = (a.len(), b.len());
            if let Some(&hit) = memo.get(&key) {
                return hit;
            }
            let best = match (a.split_first(), b.split_first()) {
                (None, _) => b.len(),
                (_, None) => a.len(),
                (Some((x, ra)), Some((y, rb))) => {
                    let mut best = 1 + go(ra, b, memo);
                    best = best.min(1 + go(a, rb, memo));
                    if x == y {
                        best = best.min(go(ra, rb, memo));
                    }
                    best
                }
            };
            memo.insert(key, best);
            best
        }
        go(a, b, &mut HashMap::new())
    }

    #[test]
    fn identical_documents_give_empty_script() {
        let doc = TextDocument::new("a=1\n");
        assert!(diff(&doc, &doc).is_empty());
    }

    #[test]
    fn rename_example_is_one_three_line_hunk() {
        let old = TextDocument::new("a = 1\nb = 2\nc = a + b\n");
        let new = TextDocument::new("i = 1\nj = 2\nk = i + j\n");
        let script = diff(&old, &new);
        assert_eq!(
            script.hunks,
            vec![ChangeHunk::new(
                1,
                vec!["a = 1".into(), "b = 2".into(), "c = a + b".into()],
                vec!["i = 1".into(), "j = 2".into(), "k = i + j".into()],
            )]
        );
    }

    #[test]
    fn single_insertion_lands_before_line_two() {
        let old = TextDocument::new("x=1\ny=2\n");
        let new = TextDocument::new("x=1\nz=3\ny=2\n");
        assert_eq!(brute_force_cost(&old.lines(), &new.lines()), 1);
        let script = diff(&old, &new);
        assert_eq!(
            script.hunks,
            vec![ChangeHunk::new(2, vec![], vec!["z=3".into()])]
        );
    }

    #[test]
    fn ties_prefer_the_topmost_placement() {
        let old = TextDocument::new("a\n");
        let new = TextDocument::new("a\na\n");
        let script = diff(&old, &new);
        assert_eq!(
            script.hunks,
            vec![ChangeHunk::new(1, vec![], vec!["a".into()])]
        );
    }

    #[test]
    fn empty_sides() {
        let empty = TextDocument::empty();
        let doc = TextDocument::new("a\nb\n");
        assert_eq!(
            diff(&empty, &doc).hunks,
            vec![ChangeHunk::new(1, vec![], vec!["a".into(), "b".into()])]
        );
        assert_eq!(
            diff(&doc, &empty).hunks,
            vec![ChangeHunk::new(1, vec!["a".into(), "b".into()], vec![])]
        );
        assert!(diff(&empty, &empty).is_empty());
    }

    fn small_doc() -> impl Strategy<Value = TextDocument> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", ""]), 0..7)
            .prop_map(TextDocument::from_lines)
    }

    proptest! {
        #[test]
        fn diff_is_minimal_against_brute_force(old in small_doc(), new in small_doc()) {
            let script = diff(&old, &new);
            prop_assert_eq!(script.cost(), brute_force_cost(&old.lines(), &new.lines()));
        }

        #[test]
        fn diff_applies_and_hunks_are_ordered(old in small_doc(), new in small_doc()) {
            let script = diff(&old, &new);
            prop_assert!(script.validate().is_ok());
            for pair in script.hunks.windows(2) {
                // Maximal hunks: at least one unchanged line between neighbours.
                prop_assert!(pair[0].old_end() < pair[1].old_start);
            }
            prop_assert_eq!(apply_edit(&script, &old).unwrap(), new);
        }
    }
}
