use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// What fold assignment needs to know about a recording.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub id: String,
    pub scene_class: String,
    /// Recordings sharing a location always land on the same side of a split.
    pub location_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_id: usize,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// Grouped, scene-stratified k-fold split.
///
/// Each scene's locations are shuffled and dealt round-robin to folds.
/// Within a fold's training portion, `round(validation_fraction * n)` of
/// each scene's `n` training locations (at least one) become validation.
pub fn make_folds(records: &[FoldRecord], k: usize, validation_fraction: f64, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(invalid("need at least two folds"));
    }
    if !(0.0..1.0).contains(&validation_fraction) {
        return Err(invalid("validation fraction must be in [0, 1)"));
    }
    let mut by_scene: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut location_scene: BTreeMap<&str, &str> = BTreeMap::new();
    for r in records {
        if let Some(prev) = location_scene.insert(&r.location_id, &r.scene_class) {
            if prev != r.scene_class {
                return Err(invalid(format!("location `{}` used by two scenes", r.location_id)));
            }
        }
        by_scene.entry(&r.scene_class).or_default().insert(&r.location_id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // scene -> shuffled locations, and location -> test fold
    let mut shuffled: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut fold_of: BTreeMap<&str, usize> = BTreeMap::new();
    for (scene, locs) in &by_scene {
        if locs.len() < k {
            return Err(invalid(format!(
                "scene `{scene}` has {} locations, fewer than {k} folds",
                locs.len()
            )));
        }
        let mut locs: Vec<&str> = locs.iter().copied().collect();
        locs.shuffle(&mut rng);
        for (i, l) in locs.iter().enumerate() {
            fold_of.insert(l, i % k);
        }
        shuffled.insert(scene, locs);
    }

    let mut folds = Vec::with_capacity(k);
    for fold_id in 0..k {
        let mut validation_locs = BTreeSet::new();
        for locs in shuffled.values() {
            let train_locs: Vec<&str> = locs.iter().copied().filter(|l| fold_of[l] != fold_id).collect();
            let n_val = ((validation_fraction * train_locs.len() as f64).round() as usize)
                .max(usize::from(validation_fraction > 0.0))
                .min(train_locs.len().saturating_sub(1));
            validation_locs.extend(train_locs.into_iter().take(n_val));
        }
        let mut split = FoldSplit {
            fold_id,
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
        };
        for r in records {
            let l = r.location_id.as_str();
            let bucket = if fold_of[l] == fold_id {
                &mut split.test
            } else if validation_locs.contains(l) {
                &mut split.validation
            } else {
                &mut split.train
            };
            bucket.push(r.id.clone());
        }
        split.train.sort();
        split.validation.sort();
        split.test.sort();
        folds.push(split);
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `scenes` classes, `locations` per class, `per_location` recordings each.
    fn dataset(scenes: usize, locations: usize, per_location: usize) -> Vec<FoldRecord> {
        let mut out = Vec::new();
        for s in 0..scenes {
            for l in 0..locations {
                for r in 0..per_location {
                    out.push(FoldRecord {
                        id: format!("rec_{s}_{l}_{r}"),
                        scene_class: format!("scene{s}"),
                        location_id: format!("loc_{s}_{l}"),
                    });
                }
            }
        }
        out
    }

    #[test]
    fn full_scale_fold_sizes() {
        // 100 backgrounds, 10 scenes each, 3 pitch variants.
        let records = dataset(10, 10, 30);
        let folds = make_folds(&records, 5, 0.125, 7).unwrap();
        for f in &folds {
            assert_eq!((f.train.len(), f.validation.len(), f.test.len()), (2100, 300, 600));
        }
    }

    #[test]
    fn test_folds_partition_and_group() {
        let records = dataset(3, 6, 4);
        let folds = make_folds(&records, 3, 0.125, 1).unwrap();
        let loc: BTreeMap<&str, &str> = records.iter().map(|r| (r.id.as_str(), r.location_id.as_str())).collect();
        let mut all_test: Vec<&String> = folds.iter().flat_map(|f| &f.test).collect();
        all_test.sort();
        let before = all_test.len();
        all_test.dedup();
        assert_eq!(before, all_test.len());
        assert_eq!(all_test.len(), records.len());
        for f in &folds {
            let test_locs: BTreeSet<&str> = f.test.iter().map(|id| loc[id.as_str()]).collect();
            for id in f.train.iter().chain(&f.validation) {
                assert!(!test_locs.contains(loc[id.as_str()]));
            }
            let val_locs: BTreeSet<&str> = f.validation.iter().map(|id| loc[id.as_str()]).collect();
            for id in &f.train {
                assert!(!val_locs.contains(loc[id.as_str()]));
            }
            // Stratified: each scene contributes two locations to every test fold.
            assert_eq!(f.test.len(), 3 * 2 * 4);
        }
    }

    #[test]
    fn too_few_locations_rejected() {
        assert!(make_folds(&dataset(2, 2, 1), 3, 0.125, 0).is_err());
    }

    #[test]
    fn seeded_and_deterministic() {
        let records = dataset(3, 6, 2);
        assert_eq!(make_folds(&records, 3, 0.2, 9).unwrap(), make_folds(&records, 3, 0.2, 9).unwrap());
    }
}
