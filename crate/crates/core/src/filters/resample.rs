//! Category distribution reshaping.
//!
//! Given the observed category distribution of a corpus and a target
//! distribution, computes per-category acceptance probabilities: keep a
//! clip of category `c` with probability `acceptance_c`. Probabilities are
//! scaled so the most-upsampled category is never rejected and the expected
//! post-sampling distribution equals the target exactly.

use std::collections::BTreeMap;

use super::FilterError;

/// Default target mix for the curated corpus.
pub fn default_category_targets() -> BTreeMap<String, f64> {
    [
        ("driving", 0.11),
        ("hand_motion_and_object_manipulation", 0.16),
        ("human_motion_and_activity", 0.10),
        ("spatial_awareness_and_navigation", 0.16),
        ("first_person_point_of_view", 0.08),
        ("nature_dynamics", 0.20),
        ("dynamic_camera_movements", 0.08),
        ("synthetically_rendered", 0.04),
        ("others", 0.07),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn check_normalized(name: &'static str, dist: &BTreeMap<String, f64>) -> Result<(), FilterError> {
    let sum: f64 = dist.values().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(FilterError::NotNormalized(name, sum));
    }
    Ok(())
}

/// Computes acceptance probabilities per category.
///
/// `acceptance_c = (target_c / observed_c) / max_k(target_k / observed_k)`,
/// so every probability lies in `(0, 1]` and
/// `observed_c * acceptance_c ∝ target_c`.
pub fn resample_weights(
    observed: &BTreeMap<String, f64>,
    target: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, f64>, FilterError> {
    if observed.len() != target.len() || observed.keys().any(|k| !target.contains_key(k)) {
        let missing: Vec<&str> = observed
            .keys()
            .filter(|k| !target.contains_key(*k))
            .chain(target.keys().filter(|k| !observed.contains_key(*k)))
            .map(String::as_str)
            .collect();
        return Err(FilterError::CategoryMismatch(missing.join(", ")));
    }
    check_normalized("observed", observed)?;
    check_normalized("target", target)?;

    let mut raw = BTreeMap::new();
    for (category, &obs) in observed {
        if obs <= 0.0 {
            return Err(FilterError::ZeroObserved(category.clone()));
        }
        raw.insert(category.clone(), target[category] / obs);
    }
    let max_raw = raw.values().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(raw
        .into_iter()
        .map(|(category, r)| (category, r / max_raw))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dist(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect()
    }

    #[test]
    fn matching_distributions_accept_everything() {
        let d = dist(&[("a", 0.3), ("b", 0.7)]);
        let acc = resample_weights(&d, &d).unwrap();
        for v in acc.values() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn hand_computed_two_category_case() {
        let observed = dist(&[("a", 0.5), ("b", 0.5)]);
        let target = dist(&[("a", 0.25), ("b", 0.75)]);
        let acc = resample_weights(&observed, &target).unwrap();
        assert_abs_diff_eq!(acc["a"], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(acc["b"], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn uniform_observed_against_default_targets() {
        let targets = default_category_targets();
        let n = targets.len() as f64;
        let observed: BTreeMap<String, f64> =
            targets.keys().map(|k| (k.clone(), 1.0 / n)).collect();
        let acc = resample_weights(&observed, &targets).unwrap();
        // The largest target category is fully kept; all others are
        // proportional to their target share.
        assert_abs_diff_eq!(acc["nature_dynamics"], 1.0, epsilon = 1e-12);
        for (category, target) in &targets {
            assert_abs_diff_eq!(acc[category], target / 0.20, epsilon = 1e-12);
        }
    }

    #[test]
    fn expected_post_sampling_distribution_equals_target() {
        let observed = dist(&[("a", 0.6), ("b", 0.25), ("c", 0.15)]);
        let target = dist(&[("a", 0.2), ("b", 0.5), ("c", 0.3)]);
        let acc = resample_weights(&observed, &target).unwrap();
        let total: f64 = observed.iter().map(|(k, o)| o * acc[k]).sum();
        for (k, o) in &observed {
            assert_abs_diff_eq!(o * acc[k] / total, target[k], epsilon = 1e-9);
        }
    }

    #[test]
    fn category_mismatch_rejected() {
        let observed = dist(&[("a", 0.5), ("b", 0.5)]);
        let target = dist(&[("a", 0.5), ("c", 0.5)]);
        match resample_weights(&observed, &target) {
            Err(FilterError::CategoryMismatch(msg)) => {
                assert!(msg.contains('b') && msg.contains('c'));
            }
            other => panic!("expected CategoryMismatch, got {other:?}"),
        }
    }

    #[test]
    fn zero_observed_rejected() {
        let observed = dist(&[("a", 1.0), ("b", 0.0)]);
        let target = dist(&[("a", 0.5), ("b", 0.5)]);
        assert!(matches!(
            resample_weights(&observed, &target),
            Err(FilterError::ZeroObserved(c)) if c == "b"
        ));
    }

    #[test]
    fn unnormalized_input_rejected() {
        let observed = dist(&[("a", 0.5), ("b", 0.6)]);
        let target = dist(&[("a", 0.5), ("b", 0.5)]);
        assert!(matches!(
            resample_weights(&observed, &target),
            Err(FilterError::NotNormalized("observed", _))
        ));
    }
}
