use crate::error::DataError;
use crate::rng::{tags, RngState};

use super::manifest::Manifest;

/// Guards `floor(fraction * n)` against representation error such as
/// `0.7 * 10 = 6.999...`.
const FLOOR_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

fn per_class_indices(manifest: &Manifest) -> Result<Vec<Vec<usize>>, DataError> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); manifest.num_classes()];
    for (i, e) in manifest.entries.iter().enumerate() {
        let label = e
            .label
            .ok_or_else(|| DataError::Invalid(format!("entry `{}` has no label", e.path.display())))?;
        if label >= by_class.len() {
            by_class.resize(label + 1, Vec::new());
        }
        by_class[label].push(i);
    }
    Ok(by_class)
}

// Shuffle each class with its own substream and mark the first `take(n)`
// members; returns a per-entry flag in manifest order.
fn choose_per_class(
    manifest: &Manifest,
    seed: u64,
    tag: u64,
    take: impl Fn(usize) -> usize,
) -> Result<Vec<bool>, DataError> {
    let root = RngState::new(seed);
    let mut chosen = vec![false; manifest.len()];
    for (class, mut members) in per_class_indices(manifest)?.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        root.path(&[tag, class as u64]).shuffle(&mut members);
        for &i in &members[..take(members.len())] {
            chosen[i] = true;
        }
    }
    Ok(chosen)
}

fn partition(manifest: &Manifest, chosen: &[bool], strip_rest: bool) -> (Manifest, Manifest) {
    let mut first = Vec::new();
    let mut rest = Vec::new();
    for (e, &c) in manifest.entries.iter().zip(chosen) {
        if c {
            first.push(e.clone());
        } else if strip_rest {
            let mut e = e.clone();
            e.label = None;
            e.class_name.clear();
            rest.push(e);
        } else {
            rest.push(e.clone());
        }
    }
    let wrap = |entries| Manifest::new(entries, manifest.class_names.clone(), &manifest.root);
    (wrap(first), wrap(rest))
}

/// Per-class train/test partition. Each class contributes
/// `floor(train_fraction * n_c)` samples to train, clamped to leave at least
/// one sample on each side. Both outputs keep the input order.
pub fn stratified_split(manifest: &Manifest, spec: &SplitSpec) -> Result<(Manifest, Manifest), DataError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(DataError::Invalid(format!("train fraction must be in (0, 1), got {}", spec.train_fraction)));
    }
    for (class, members) in per_class_indices(manifest)?.iter().enumerate() {
        if members.len() == 1 {
            return Err(DataError::ClassTooSmall { name: manifest.class_name(class), count: 1 });
        }
    }
    let f = spec.train_fraction;
    let chosen = choose_per_class(manifest, spec.seed, tags::SPLIT, |n| {
        ((f * n as f64 + FLOOR_SLACK).floor() as usize).clamp(1, n - 1)
    })?;
    Ok(partition(manifest, &chosen, false))
}

/// Keep labels on `floor(ratio * n_c)` samples per class (at least one per
/// non-empty class); the remainder is returned with labels stripped.
pub fn label_ratio_subset(manifest: &Manifest, ratio: f64, seed: u64) -> Result<(Manifest, Manifest), DataError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(DataError::Invalid(format!("label ratio must be in (0, 1], got {ratio}")));
    }
    let chosen = choose_per_class(manifest, seed, tags::SUBSET, |n| {
        ((ratio * n as f64 + FLOOR_SLACK).floor() as usize).clamp(1, n)
    })?;
    Ok(partition(manifest, &chosen, true))
}
