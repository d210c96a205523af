use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub correct: usize,
    pub accuracy: f64,
}

/// Candidate thresholds in ascending order: `-inf`, the midpoints between
/// consecutive distinct scores, `+inf`.
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut unique: Vec<f64> = scores.to_vec();
    unique.sort_by(f64::total_cmp);
    unique.dedup();
    let mut out = Vec::with_capacity(unique.len() + 1);
    out.push(f64::NEG_INFINITY);
    out.extend(unique.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    out.push(f64::INFINITY);
    out
}

/// Threshold maximizing the accuracy of "entailment iff score < threshold".
/// Ties go to the smallest threshold.
pub fn select_threshold(scores: &[f64], entailment: &[bool]) -> Result<ThresholdChoice> {
    if scores.is_empty() {
        return Err(Error::EmptySequence);
    }
    if scores.len() != entailment.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            found: entailment.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("score".into()));
    }
    let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(entailment.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // entail_prefix[k] = number of entailment samples among the k lowest scores
    let mut entail_prefix = Vec::with_capacity(pairs.len() + 1);
    entail_prefix.push(0usize);
    for &(_, e) in &pairs {
        entail_prefix.push(entail_prefix.last().unwrap() + usize::from(e));
    }
    let n = pairs.len();
    let total_entail = entail_prefix[n];
    let mut best: Option<ThresholdChoice> = None;
    for t in candidate_thresholds(scores) {
        let below = pairs.partition_point(|&(s, _)| s < t);
        let e_below = entail_prefix[below];
        let non_e_above = (n - below) - (total_entail - e_below);
        let correct = e_below + non_e_above;
        if best.is_none_or(|b| correct > b.correct) {
            best = Some(ThresholdChoice {
                threshold: t,
                correct,
                accuracy: correct as f64 / n as f64,
            });
        }
    }
    Ok(best.expect("at least two candidates"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(scores: &[f64], labels: &[bool]) -> (f64, usize) {
        let mut best = (f64::NAN, 0usize);
        let mut first = true;
        for t in candidate_thresholds(scores) {
            let correct = scores.iter().zip(labels).filter(|(&s, &e)| (s < t) == e).count();
            if first || correct > best.1 {
                best = (t, correct);
                first = false;
            }
        }
        best
    }

    #[test]
    fn two_samples() {
        let c = select_threshold(&[0.1, 0.9], &[true, false]).unwrap();
        assert_eq!(c.threshold, 0.5);
        assert_eq!(c.accuracy, 1.0);
    }

    #[test]
    fn separable_returns_lowest_perfect_midpoint() {
        let c = select_threshold(&[0.3, 0.1, 0.7, 0.2, 0.9], &[true, true, false, true, false]).unwrap();
        assert_eq!(c.threshold, 0.5);
        assert_eq!(c.accuracy, 1.0);
    }

    #[test]
    fn infinite_candidates() {
        let all_neg = select_threshold(&[0.2, 0.4], &[false, false]).unwrap();
        assert_eq!(all_neg.threshold, f64::NEG_INFINITY);
        let all_pos = select_threshold(&[0.2, 0.4], &[true, true]).unwrap();
        assert_eq!(all_pos.threshold, f64::INFINITY);
        let single = select_threshold(&[0.2], &[true]).unwrap();
        assert_eq!(single.threshold, f64::INFINITY);
    }

    #[test]
    fn errors() {
        assert!(select_threshold(&[], &[]).is_err());
        assert!(select_threshold(&[0.1], &[]).is_err());
        assert!(select_threshold(&[f64::NAN], &[true]).is_err());
    }

    #[test]
    fn matches_brute_force_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let n = rng.gen_range(1..100);
            // coarse grid so equal scores are common
            let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..12)) / 4.0).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            let got = select_threshold(&scores, &labels).unwrap();
            let (t, correct) = brute_force(&scores, &labels);
            assert_eq!(got.threshold, t);
            assert_eq!(got.correct, correct);
        }
    }
}
