use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{LeapError, Result};
use crate::seed::derived_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    RepeatedHoldout,
    LeaveOneTissueOut,
    Transfer,
}

/// One train/test split. Repeats that share a `family` share the same
/// training set, so a model fitted once can be scored on each of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRepeat {
    pub family: String,
    pub label: String,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub strategy: SplitStrategy,
    pub seed: u64,
    pub repeats: Vec<SplitRepeat>,
}

impl SplitPlan {
    /// Repeats grouped by family, in first-appearance order.
    pub fn families(&self) -> Vec<(&str, Vec<&SplitRepeat>)> {
        let mut order: Vec<&str> = Vec::new();
        let mut groups: BTreeMap<&str, Vec<&SplitRepeat>> = BTreeMap::new();
        for r in &self.repeats {
            if !groups.contains_key(r.family.as_str()) {
                order.push(&r.family);
            }
            groups.entry(&r.family).or_default().push(r);
        }
        order.into_iter().map(|f| (f, groups.remove(f).unwrap())).collect()
    }
}

/// `k` of `pool` chosen without replacement, returned in pool order.
fn choose<'a>(pool: &[&'a String], k: usize, rng: &mut impl rand::Rng) -> (Vec<&'a String>, Vec<&'a String>) {
    let mut picked = vec![false; pool.len()];
    for i in rand::seq::index::sample(rng, pool.len(), k) {
        picked[i] = true;
    }
    let (mut chosen, mut rest) = (Vec::new(), Vec::new());
    for (s, p) in pool.iter().zip(picked) {
        if p {
            chosen.push(*s);
        } else {
            rest.push(*s);
        }
    }
    (chosen, rest)
}

fn owned(v: Vec<&String>) -> Vec<String> {
    v.into_iter().cloned().collect()
}

/// Hold out round(fraction·n) samples per repeat, independently each time.
pub fn plan_repeated_holdout(samples: &[String], fraction: f64, repeats: usize, seed: u64) -> Result<SplitPlan> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(LeapError::validation("holdout fraction must lie in (0, 1)"));
    }
    let n = samples.len();
    let n_test = (fraction * n as f64).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(LeapError::validation(format!(
            "{n} samples cannot give a non-empty {fraction} holdout with a non-empty training set"
        )));
    }
    let pool: Vec<&String> = samples.iter().collect();
    let repeats = (0..repeats)
        .map(|r| {
            let label = format!("repeat_{r}");
            let mut rng = derived_rng(seed, &["split", "holdout", &label]);
            let (test, train) = choose(&pool, n_test, &mut rng);
            SplitRepeat {
                family: label.clone(),
                label,
                train: owned(train),
                test: owned(test),
            }
        })
        .collect();
    Ok(SplitPlan {
        strategy: SplitStrategy::RepeatedHoldout,
        seed,
        repeats,
    })
}

/// For each tissue with at least `test_subset_size + 5` samples: train on
/// every other tissue, and test on `n_bootstrap` random subsets that each
/// leave `test_subset_size` target samples out.
pub fn plan_leave_one_tissue_out(
    samples: &[String],
    tissues: &[String],
    test_subset_size: usize,
    n_bootstrap: usize,
    seed: u64,
) -> Result<SplitPlan> {
    if samples.len() != tissues.len() {
        return Err(LeapError::Dimension("one tissue label per sample required".into()));
    }
    if n_bootstrap == 0 {
        return Err(LeapError::validation("n_bootstrap must be at least 1"));
    }
    let mut by_tissue: BTreeMap<&str, Vec<&String>> = BTreeMap::new();
    for (s, t) in samples.iter().zip(tissues) {
        by_tissue.entry(t).or_default().push(s);
    }
    let mut repeats = Vec::new();
    for (tissue, members) in &by_tissue {
        if members.len() < test_subset_size + 5 || by_tissue.len() < 2 {
            continue;
        }
        let family = format!("tissue={tissue}");
        let train: Vec<String> = samples
            .iter()
            .zip(tissues)
            .filter(|(_, t)| t.as_str() != *tissue)
            .map(|(s, _)| s.clone())
            .collect();
        for b in 0..n_bootstrap {
            let mut rng = derived_rng(seed, &["split", "loto", tissue, &b.to_string()]);
            let (_, test) = choose(members, test_subset_size, &mut rng);
            repeats.push(SplitRepeat {
                family: family.clone(),
                label: format!("{tissue}/boot_{b}"),
                train: train.clone(),
                test: owned(test),
            });
        }
    }
    if repeats.is_empty() {
        return Err(LeapError::validation(format!(
            "no tissue has the {} samples needed for leave-one-tissue-out",
            test_subset_size + 5
        )));
    }
    Ok(SplitPlan {
        strategy: SplitStrategy::LeaveOneTissueOut,
        seed,
        repeats,
    })
}

/// Train on the whole source domain; each repeat tests on the target domain
/// minus `removed_per_repeat` random samples.
pub fn plan_transfer(
    train_domain: &[String],
    test_domain: &[String],
    removed_per_repeat: usize,
    repeats: usize,
    seed: u64,
) -> Result<SplitPlan> {
    if train_domain.is_empty() {
        return Err(LeapError::validation("transfer needs a non-empty training domain"));
    }
    if test_domain.len() < removed_per_repeat + 2 {
        return Err(LeapError::validation(format!(
            "test domain has {} samples; need at least {}",
            test_domain.len(),
            removed_per_repeat + 2
        )));
    }
    if let Some(s) = test_domain.iter().find(|s| train_domain.contains(s)) {
        return Err(LeapError::validation(format!("sample \"{s}\" is in both domains")));
    }
    let pool: Vec<&String> = test_domain.iter().collect();
    let repeats = (0..repeats)
        .map(|r| {
            let label = format!("repeat_{r}");
            let mut rng = derived_rng(seed, &["split", "transfer", &label]);
            let (_, test) = choose(&pool, removed_per_repeat, &mut rng);
            SplitRepeat {
                family: "transfer".into(),
                label,
                train: train_domain.to_vec(),
                test: owned(test),
            }
        })
        .collect();
    Ok(SplitPlan {
        strategy: SplitStrategy::Transfer,
        seed,
        repeats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i:03}")).collect()
    }

    fn disjoint(r: &SplitRepeat) -> bool {
        let train: HashSet<&String> = r.train.iter().collect();
        r.test.iter().all(|t| !train.contains(t))
    }

    #[test]
    fn holdout_sizes_and_disjointness() {
        let plan = plan_repeated_holdout(&ids("s", 10), 0.2, 10, 3).unwrap();
        assert_eq!(plan.repeats.len(), 10);
        let distinct: HashSet<&Vec<String>> = plan.repeats.iter().map(|r| &r.test).collect();
        assert!(distinct.len() > 1);
        for r in &plan.repeats {
            assert_eq!(r.test.len(), 2);
            assert_eq!(r.train.len(), 8);
            assert!(disjoint(r));
        }
    }

    #[test]
    fn holdout_rejects_bad_fraction() {
        assert!(plan_repeated_holdout(&ids("s", 10), 0.0, 1, 0).is_err());
        assert!(plan_repeated_holdout(&ids("s", 10), 1.0, 1, 0).is_err());
    }

    #[test]
    fn no_sample_is_test_only_across_repeats() {
        let samples = ids("s", 100);
        let plan = plan_repeated_holdout(&samples, 0.2, 10, 5).unwrap();
        for s in &samples {
            assert!(plan.repeats.iter().any(|r| r.train.contains(s)), "{s} never trained on");
        }
    }

    #[test]
    fn leave_one_tissue_out_families() {
        let samples = ids("s", 90);
        let tissues: Vec<String> = (0..90).map(|i| format!("t{}", i % 3)).collect();
        let plan = plan_leave_one_tissue_out(&samples, &tissues, 10, 4, 1).unwrap();
        let families = plan.families();
        assert_eq!(families.len(), 3);
        for (family, reps) in families {
            let tissue = family.trim_start_matches("tissue=");
            assert_eq!(reps.len(), 4);
            for r in reps {
                assert_eq!(r.test.len(), 20);
                for s in &r.train {
                    let i = samples.iter().position(|x| x == s).unwrap();
                    assert_ne!(tissues[i], tissue);
                }
            }
        }
    }

    #[test]
    fn single_bootstrap_is_seed_deterministic() {
        let samples = ids("s", 40);
        let tissues: Vec<String> = (0..40).map(|i| format!("t{}", i % 2)).collect();
        let a = plan_leave_one_tissue_out(&samples, &tissues, 10, 1, 7).unwrap();
        let b = plan_leave_one_tissue_out(&samples, &tissues, 10, 1, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.repeats.len(), 2);
    }

    #[test]
    fn small_tissues_are_ineligible() {
        let samples = ids("s", 20);
        let tissues: Vec<String> = (0..20).map(|i| format!("t{}", i % 2)).collect();
        assert!(plan_leave_one_tissue_out(&samples, &tissues, 10, 5, 0).is_err());
    }

    #[test]
    fn transfer_keeps_train_fixed() {
        let plan = plan_transfer(&ids("c", 50), &ids("x", 140), 10, 10, 2).unwrap();
        for r in &plan.repeats {
            assert_eq!(r.train, ids("c", 50));
            assert_eq!(r.test.len(), 130);
        }
        let one = plan_transfer(&ids("c", 5), &ids("x", 6), 0, 1, 0).unwrap();
        assert_eq!(one.repeats[0].test, ids("x", 6));
        assert!(plan_transfer(&ids("c", 5), &ids("x", 11), 10, 1, 0).is_err());
    }
}
