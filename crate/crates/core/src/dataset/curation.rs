//! Response-table curation: within-study aggregation, cross-study
//! deduplication by study priority, and perturbation filters.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{ResponseRecord, ResponseTable};
use crate::error::{LeapError, Result};

/// Study order used for drug-response deduplication; earlier wins.
pub const DEFAULT_STUDY_PRIORITY: [&str; 5] = ["GDSC v2", "GDSC v1", "CCLE", "CTRP", "PRISM"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationParams {
    /// Empty means a single-study table: deduplication is skipped.
    pub study_priority: Vec<String>,
    pub min_samples: usize,
    pub min_label_sd: Option<f64>,
    /// Samples excluded up front (e.g. outliers found by inspection).
    pub exclude_samples: Vec<String>,
}

impl Default for CurationParams {
    fn default() -> Self {
        Self {
            study_priority: Vec::new(),
            min_samples: 1,
            min_label_sd: None,
            exclude_samples: Vec::new(),
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Collapse duplicate (sample, perturbation) records within each study to
/// their median. Records from different studies are left alone.
pub fn aggregate_within_study(table: &ResponseTable) -> ResponseTable {
    let mut groups: BTreeMap<(&str, &str, &str), Vec<f64>> = BTreeMap::new();
    for r in table.records() {
        groups
            .entry((&r.perturbation_id, &r.sample_id, &r.study_tag))
            .or_default()
            .push(r.value);
    }
    let records = groups
        .into_iter()
        .map(|((p, s, study), mut vals)| ResponseRecord::new(s, p, median(&mut vals), study))
        .collect();
    ResponseTable { records }
}

/// Keep, for each (sample, perturbation), only the record from the
/// highest-priority study. Within one study the first record wins.
pub fn dedup_across_studies<S: AsRef<str>>(table: &ResponseTable, priority: &[S]) -> Result<ResponseTable> {
    let rank: HashMap<&str, usize> = priority.iter().enumerate().map(|(i, s)| (s.as_ref(), i)).collect();
    let mut best: BTreeMap<(&str, &str), (usize, &ResponseRecord)> = BTreeMap::new();
    for r in table.records() {
        let Some(&rk) = rank.get(r.study_tag.as_str()) else {
            return Err(LeapError::validation(format!(
                "study \"{}\" is not in the priority list",
                r.study_tag
            )));
        };
        let key = (r.perturbation_id.as_str(), r.sample_id.as_str());
        match best.get(&key) {
            Some((current, _)) if *current <= rk => {}
            _ => {
                best.insert(key, (rk, r));
            }
        }
    }
    Ok(ResponseTable {
        records: best.into_values().map(|(_, r)| r.clone()).collect(),
    })
}

/// Keep perturbations observed in at least `min_samples` distinct samples
/// and, when `min_label_sd` is set, whose population standard deviation is
/// strictly above it.
pub fn filter_perturbations(
    table: &ResponseTable,
    min_samples: usize,
    min_label_sd: Option<f64>,
) -> Result<ResponseTable> {
    if min_samples == 0 {
        return Err(LeapError::validation("min_samples must be at least 1"));
    }
    let mut groups: HashMap<&str, (HashSet<&str>, Vec<f64>)> = HashMap::new();
    for r in table.records() {
        let g = groups.entry(&r.perturbation_id).or_default();
        g.0.insert(&r.sample_id);
        g.1.push(r.value);
    }
    let keep: HashSet<&str> = groups
        .iter()
        .filter(|(_, (samples, values))| {
            samples.len() >= min_samples && min_label_sd.is_none_or(|t| crate::stats::population_sd(values) > t)
        })
        .map(|(p, _)| *p)
        .collect();
    Ok(ResponseTable {
        records: table
            .records()
            .iter()
            .filter(|r| keep.contains(r.perturbation_id.as_str()))
            .cloned()
            .collect(),
    })
}

pub fn exclude_samples<S: AsRef<str>>(table: &ResponseTable, excluded: &[S]) -> ResponseTable {
    let drop: HashSet<&str> = excluded.iter().map(AsRef::as_ref).collect();
    ResponseTable {
        records: table
            .records()
            .iter()
            .filter(|r| !drop.contains(r.sample_id.as_str()))
            .cloned()
            .collect(),
    }
}

/// exclusion → aggregation → deduplication → filtering.
pub fn curate(table: &ResponseTable, params: &CurationParams) -> Result<ResponseTable> {
    let t = exclude_samples(table, &params.exclude_samples);
    let t = aggregate_within_study(&t);
    let t = if params.study_priority.is_empty() {
        let studies: HashSet<&str> = t.records().iter().map(|r| r.study_tag.as_str()).collect();
        if studies.len() > 1 {
            return Err(LeapError::validation(
                "responses come from several studies; set curation.study_priority",
            ));
        }
        t
    } else {
        dedup_across_studies(&t, &params.study_priority)?
    };
    filter_perturbations(&t, params.min_samples, params.min_label_sd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(s: &str, p: &str, v: f64, st: &str) -> ResponseRecord {
        ResponseRecord::new(s, p, v, st)
    }

    fn table(records: Vec<ResponseRecord>) -> ResponseTable {
        ResponseTable::new(records).unwrap()
    }

    #[test]
    fn median_of_three_and_two() {
        let t = table(vec![
            rec("a", "p", 0.1, "S"),
            rec("a", "p", 0.3, "S"),
            rec("a", "p", 0.2, "S"),
        ]);
        let out = aggregate_within_study(&t);
        assert_eq!(out.len(), 1);
        assert_eq!(out.records()[0].value, 0.2);

        let t = table(vec![rec("a", "p", 0.1, "S"), rec("a", "p", 0.3, "S")]);
        assert!((aggregate_within_study(&t).records()[0].value - 0.2).abs() < 1e-15);
    }

    #[test]
    fn cross_study_duplicates_survive_aggregation() {
        let t = table(vec![rec("a", "p", 0.1, "S1"), rec("a", "p", 0.3, "S2")]);
        assert_eq!(aggregate_within_study(&t).len(), 2);
    }

    #[test]
    fn priority_keeps_gdsc_v1_over_ctrp() {
        let t = table(vec![rec("a", "p", 0.9, "CTRP"), rec("a", "p", 0.5, "GDSC v1")]);
        let out = dedup_across_studies(&t, &DEFAULT_STUDY_PRIORITY).unwrap();
        assert_eq!(out.records(), &[rec("a", "p", 0.5, "GDSC v1")]);
    }

    #[test]
    fn single_study_pair_is_unchanged() {
        let t = table(vec![rec("a", "p", 0.9, "PRISM")]);
        assert_eq!(dedup_across_studies(&t, &DEFAULT_STUDY_PRIORITY).unwrap(), t);
    }

    #[test]
    fn unknown_study_is_rejected() {
        let t = table(vec![rec("a", "p", 0.9, "NCI60")]);
        assert!(dedup_across_studies(&t, &DEFAULT_STUDY_PRIORITY).is_err());
    }

    #[test]
    fn drops_perturbation_seen_in_74_samples() {
        let mut recs = Vec::new();
        for i in 0..74 {
            recs.push(rec(&format!("s{i}"), "few", i as f64, "S"));
        }
        for i in 0..75 {
            recs.push(rec(&format!("s{i}"), "enough", i as f64, "S"));
        }
        let out = filter_perturbations(&table(recs), 75, None).unwrap();
        assert_eq!(out.perturbation_ids(), vec!["enough".to_string()]);
    }

    #[test]
    fn constant_perturbation_fails_sd_threshold() {
        let recs = (0..10).map(|i| rec(&format!("s{i}"), "p", 0.7, "S")).collect();
        let out = filter_perturbations(&table(recs), 1, Some(0.2)).unwrap();
        assert!(out.is_empty());
    }

    fn arb_table() -> impl Strategy<Value = Vec<ResponseRecord>> {
        let study = prop::sample::select(vec!["GDSC v2", "GDSC v1", "CCLE", "CTRP", "PRISM"]);
        prop::collection::vec((0..6u8, 0..4u8, -20i32..20, study), 0..80).prop_map(|v| {
            v.into_iter()
                .map(|(s, p, x, st)| rec(&format!("s{s}"), &format!("p{p}"), x as f64 / 8.0, st))
                .collect()
        })
    }

    // group-by oracles written with plain loops over the raw records
    fn oracle_median(records: &[ResponseRecord]) -> Vec<(String, String, String, f64)> {
        let mut keys: Vec<(String, String, String)> = records
            .iter()
            .map(|r| (r.perturbation_id.clone(), r.sample_id.clone(), r.study_tag.clone()))
            .collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .map(|k| {
                let mut vals: Vec<f64> = records
                    .iter()
                    .filter(|r| r.perturbation_id == k.0 && r.sample_id == k.1 && r.study_tag == k.2)
                    .map(|r| r.value)
                    .collect();
                vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let n = vals.len();
                let m = if n % 2 == 1 {
                    vals[n / 2]
                } else {
                    (vals[n / 2 - 1] + vals[n / 2]) / 2.0
                };
                (k.0, k.1, k.2, m)
            })
            .collect()
    }

    proptest! {
        #[test]
        fn aggregation_matches_group_by_oracle(records in arb_table()) {
            let out = aggregate_within_study(&table(records.clone()));
            let mut got: Vec<_> = out.records().iter()
                .map(|r| (r.perturbation_id.clone(), r.sample_id.clone(), r.study_tag.clone(), r.value))
                .collect();
            got.sort_by(|a, b| (&a.0, &a.1, &a.2).cmp(&(&b.0, &b.1, &b.2)));
            prop_assert_eq!(got, oracle_median(&records));
        }

        #[test]
        fn dedup_matches_first_by_priority_oracle(records in arb_table()) {
            let t = aggregate_within_study(&table(records));
            let out = dedup_across_studies(&t, &DEFAULT_STUDY_PRIORITY).unwrap();
            prop_assert!(out.len() <= t.len());
            for r in out.records() {
                let best = DEFAULT_STUDY_PRIORITY.iter().find_map(|study| {
                    t.records().iter().find(|x| {
                        x.sample_id == r.sample_id && x.perturbation_id == r.perturbation_id && x.study_tag == *study
                    })
                }).unwrap();
                prop_assert_eq!(best, r);
            }
            let mut keys_in: Vec<_> = t.records().iter().map(|r| (&r.sample_id, &r.perturbation_id)).collect();
            keys_in.sort();
            keys_in.dedup();
            prop_assert_eq!(keys_in.len(), out.len());
        }

        #[test]
        fn filter_matches_direct_recomputation(records in arb_table(), min_samples in 1usize..6, sd in 0.0f64..1.5) {
            let t = table(records);
            let out = filter_perturbations(&t, min_samples, Some(sd)).unwrap();
            for p in t.perturbation_ids() {
                let vals: Vec<f64> = t.records().iter().filter(|r| r.perturbation_id == p).map(|r| r.value).collect();
                let mut samples: Vec<&String> = t.records().iter().filter(|r| r.perturbation_id == p).map(|r| &r.sample_id).collect();
                samples.sort();
                samples.dedup();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
                let expect_kept = samples.len() >= min_samples && var.sqrt() > sd;
                let kept = out.records().iter().any(|r| r.perturbation_id == p);
                prop_assert_eq!(kept, expect_kept, "perturbation {}", p);
            }
        }

        #[test]
        fn curation_is_idempotent(records in arb_table(), min_samples in 1usize..4) {
            let params = CurationParams {
                study_priority: DEFAULT_STUDY_PRIORITY.iter().map(|s| s.to_string()).collect(),
                min_samples,
                min_label_sd: Some(0.1),
                exclude_samples: vec!["s0".into()],
            };
            let once = curate(&table(records), &params).unwrap();
            let twice = curate(&once, &params).unwrap();
            let mut a = once.into_records();
            let mut b = twice.into_records();
            let key = |r: &ResponseRecord| (r.perturbation_id.clone(), r.sample_id.clone());
            a.sort_by_key(key);
            b.sort_by_key(key);
            prop_assert_eq!(a, b);
        }
    }
}
