//! Seeded inputs shared by the benchmarks.

use assistkit::edit_codec::TextDocument;
use assistkit::packing::SizedItem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A `lines`-line document and a copy with `edits` scattered one-line changes.
pub fn doc_pair(seed: u64, lines: usize, edits: usize) -> (TextDocument, TextDocument) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let old: Vec<String> = (0..lines)
        .map(|i| {
            format!(
                "    value_{} = compute({i}, {})",
                rng.gen_range(0..50),
                rng.gen_range(0..9)
            )
        })
        .collect();
    let mut new = old.clone();
    for _ in 0..edits {
        let at = rng.gen_range(0..new.len().max(1));
        match rng.gen_range(0..3) {
            0 => new.insert(at, format!("    inserted_{at} = None")),
            1 if !new.is_empty() => {
                new.remove(at.min(new.len() - 1));
            }
            _ if !new.is_empty() => {
                let idx = at.min(new.len() - 1);
                new[idx] = format!("    changed_{at} = 1");
            }
            _ => new.push("    tail = 0".into()),
        }
    }
    (TextDocument::from_lines(old), TextDocument::from_lines(new))
}

/// `n` items with lengths in `1..=max_len`.
pub fn items(seed: u64, n: usize, max_len: usize) -> Vec<SizedItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| SizedItem::new(format!("s{i}"), rng.gen_range(1..=max_len)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_deterministic() {
        assert_eq!(doc_pair(3, 50, 5), doc_pair(3, 50, 5));
        assert_ne!(doc_pair(3, 50, 5).0, doc_pair(3, 50, 5).1);
        assert_eq!(items(1, 10, 9), items(1, 10, 9));
        assert!(items(1, 100, 9).iter().all(|i| (1..=9).contains(&i.length)));
    }
}
