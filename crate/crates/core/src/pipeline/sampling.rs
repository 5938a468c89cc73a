//! Random choices of the pipeline. Every function takes the RNG explicitly so
//! a run is reproducible from its seeds.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use super::{ChangeSegment, PipelineError, ProcessRecord, Result, SampleType};
use crate::conversation::TargetAnnotation;
use crate::edit_codec::{apply_edit, diff, ChangeHunk, EditScript, TextDocument};

pub const DEFAULT_TIMEPOINT_DECAY: f64 = 0.9;

/// Mixes a global seed with string parts into a 64-bit seed.
pub fn derive_seed(global_seed: u64, parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(global_seed.to_le_bytes());
    for part in parts {
        // Length prefix keeps ["ab","c"] and ["a","bc"] apart.
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn rng_for(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Splits multi-hunk steps into single-hunk chains with probability `p` per step.
pub fn decompose<R: Rng + ?Sized>(record: &ProcessRecord, p: f64, rng: &mut R) -> ProcessRecord {
    let p = p.clamp(0.0, 1.0);
    let mut snapshots = vec![record.snapshots[0].clone()];
    for pair in record.snapshots.windows(2) {
        let (before, after) = (&pair[0], &pair[1]);
        let script = diff(before, after);
        if script.len() > 1 && rng.gen_bool(p) {
            let mut order: Vec<usize> = (0..script.len()).collect();
            order.shuffle(rng);
            for k in 1..order.len() {
                let partial = script.select(&order[..k]);
                snapshots.push(apply_edit(&partial, before).expect("sub-script of a diff applies"));
            }
        }
        snapshots.push(after.clone());
    }
    ProcessRecord {
        snapshots,
        ..record.clone()
    }
}

/// Normalized weights `decay^i` for current-code indices `0..n-1`; the final
/// snapshot is never a candidate.
pub fn timepoint_weights(n: usize, decay: f64) -> Vec<f64> {
    let candidates = n.saturating_sub(1);
    let raw: Vec<f64> = (0..candidates).map(|i| decay.powi(i as i32)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Zero-based index of the current snapshot, biased toward early time points.
pub fn pick_timepoint<R: Rng + ?Sized>(record: &ProcessRecord, decay: f64, rng: &mut R) -> usize {
    pick_from(0, record.len(), decay, rng)
}

/// Like [`pick_timepoint`] but restricted to indices `first..n-1`, with the
/// weights restarting at `first`.
pub(crate) fn pick_from<R: Rng + ?Sized>(first: usize, n: usize, decay: f64, rng: &mut R) -> usize {
    debug_assert!(first + 1 < n, "need at least one candidate");
    let weights = timepoint_weights(n - first, decay);
    if weights.len() == 1 {
        return first;
    }
    let dist = WeightedIndex::new(&weights).expect("decay yields positive weights");
    first + dist.sample(rng)
}

pub fn assign_type<R: Rng + ?Sized>(rng: &mut R) -> SampleType {
    SampleType::ALL[rng.gen_range(0..SampleType::ALL.len())]
}

/// Hunks of `diff(current, final)`, merging hunks with no unchanged line between them.
pub fn segment_changes(
    current: &TextDocument,
    final_doc: &TextDocument,
) -> Result<Vec<ChangeSegment>> {
    let script = diff(current, final_doc);
    if script.is_empty() {
        return Err(PipelineError::NoChanges);
    }
    let mut groups: Vec<Vec<ChangeHunk>> = Vec::new();
    for hunk in script.hunks {
        match groups.last_mut() {
            Some(group) if group.last().map(ChangeHunk::old_end) == Some(hunk.old_start) => {
                group.push(hunk)
            }
            _ => groups.push(vec![hunk]),
        }
    }
    Ok(groups
        .into_iter()
        .map(|hunks| ChangeSegment {
            hunks: EditScript::new(hunks),
            kept: None,
        })
        .collect())
}

/// Char offset of the start of each line, plus the total length at the end.
fn line_offsets(code: &TextDocument) -> Vec<usize> {
    let mut offsets = vec![0];
    let mut acc = 0;
    for line in code.lines() {
        acc += line.chars().count() + 1;
        offsets.push(acc);
    }
    offsets
}

/// Picks none, cursor or selection uniformly, anchored on the kept hunks'
/// old-line span. Returns `None` when nothing is kept.
pub fn annotate_target_random<R: Rng + ?Sized>(
    current: &TextDocument,
    segments: &[ChangeSegment],
    rng: &mut R,
) -> TargetAnnotation {
    let kept: Vec<&ChangeHunk> = segments
        .iter()
        .filter(|s| s.is_kept())
        .flat_map(|s| s.hunks.hunks.iter())
        .collect();
    let (Some(first), Some(last)) = (kept.first(), kept.last()) else {
        return TargetAnnotation::None;
    };
    let offsets = line_offsets(current);
    let at_line = |line: usize| offsets[(line - 1).min(offsets.len() - 1)];
    let start = at_line(first.old_start);
    match rng.gen_range(0..3) {
        0 => TargetAnnotation::None,
        1 => TargetAnnotation::Cursor { offset: start },
        _ => TargetAnnotation::Selection {
            start,
            end: at_line(last.old_end()).max(start),
        },
    }
}
