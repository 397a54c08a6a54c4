//! Feature screening and reduction.
//!
//! Every one of the 100 frame features is scored on its own: a probe is
//! verified against a claimed user by its minimal single-feature DTW
//! distance to that user's samples (leave-one-out for the probe's own
//! user), and the resulting genuine/impostor score sets give the feature an
//! EER. Features whose EER reaches 0.5 carry no identity information and
//! are discarded; the survivors get weights proportional to `0.5 - EER`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dtw::{dtw_per_feature, DtwParams};
use crate::error::{Error, Result};
use crate::features::{fit_normalizer, ExtractedSample, NormStats, FRAME_FEATURES};
use crate::metrics::{compute_eer, ScoreSet};

/// Minimum raw weight so kept features never vanish entirely.
const WEIGHT_EPSILON: f64 = 1e-6;
/// Features are screened in chunks to bound the score-buffer memory on
/// large corpora.
const SCREEN_CHUNK: usize = 10;

/// The kept feature columns, their weights, and the statistics everything
/// downstream must normalize with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    /// Kept column indices, ascending.
    pub kept: Vec<usize>,
    /// Positive weights aligned with `kept`, summing to 1.
    pub weights: Vec<f64>,
    pub norm_stats: NormStats,
    /// Screening EER of every column, kept or not.
    pub per_feature_eer: Vec<f64>,
}

impl FeatureSelection {
    pub fn validate(&self) -> Result<()> {
        if self.kept.is_empty() {
            return Err(Error::data("feature selection kept no columns"));
        }
        if self.kept.len() != self.weights.len() {
            return Err(Error::data("kept/weights length mismatch"));
        }
        if self.kept.iter().any(|&c| c >= FRAME_FEATURES) {
            return Err(Error::data("kept column out of range"));
        }
        if self.weights.iter().any(|w| *w <= 0.0) {
            return Err(Error::data("weights must be strictly positive"));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::data(format!("weights sum to {sum}, expected 1")));
        }
        if self.per_feature_eer.len() != FRAME_FEATURES {
            return Err(Error::data("per_feature_eer must cover all 100 columns"));
        }
        for &c in &self.kept {
            if self.per_feature_eer[c] >= 0.5 {
                return Err(Error::data(format!("kept column {c} has EER >= 0.5")));
            }
        }
        Ok(())
    }
}

/// Groups corpus indices by user in deterministic (sorted) order.
fn user_groups(corpus: &[ExtractedSample]) -> BTreeMap<&str, Vec<usize>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, item) in corpus.iter().enumerate() {
        groups.entry(item.user_id.as_str()).or_default().push(i);
    }
    groups
}

fn check_screening_corpus(corpus: &[ExtractedSample]) -> Result<BTreeMap<&str, Vec<usize>>> {
    let groups = user_groups(corpus);
    if groups.len() < 2 {
        return Err(Error::degenerate("feature screening needs at least 2 users"));
    }
    if let Some((user, idxs)) = groups.iter().find(|(_, v)| v.len() < 2) {
        return Err(Error::degenerate(format!(
            "feature screening needs at least 2 samples per user; {user} has {}",
            idxs.len()
        )));
    }
    Ok(groups)
}

/// Genuine/impostor score sets of the single-feature verifier for each of
/// the given columns. Scores are negated distances so higher means more
/// genuine-like.
fn per_feature_score_sets(
    corpus: &[ExtractedSample],
    features: &[usize],
    params: &DtwParams,
) -> Result<Vec<ScoreSet>> {
    let groups = check_screening_corpus(corpus)?;
    let group_list: Vec<(&str, &[usize])> =
        groups.iter().map(|(u, v)| (*u, v.as_slice())).collect();
    let nf = features.len();

    // One row per probe: the min distance to every user's samples, probe
    // itself excluded. Rows are independent, so this parallelizes without
    // affecting the result.
    let probe_rows: Vec<Result<(usize, Vec<f64>)>> = (0..corpus.len())
        .into_par_iter()
        .map(|probe| {
            let mut mins = vec![f64::INFINITY; group_list.len() * nf];
            let mut own_group = usize::MAX;
            for (g, (user, idxs)) in group_list.iter().enumerate() {
                if *user == corpus[probe].user_id {
                    own_group = g;
                }
                for &other in idxs.iter() {
                    if other == probe {
                        continue;
                    }
                    let d = dtw_per_feature(
                        &corpus[probe].seq,
                        &corpus[other].seq,
                        features,
                        params,
                    )?;
                    for (f, dist) in d.into_iter().enumerate() {
                        let slot = &mut mins[g * nf + f];
                        if dist < *slot {
                            *slot = dist;
                        }
                    }
                }
            }
            Ok((own_group, mins))
        })
        .collect();

    let mut sets = vec![ScoreSet::default(); nf];
    for row in probe_rows {
        let (own_group, mins) = row?;
        for g in 0..group_list.len() {
            for f in 0..nf {
                let score = -mins[g * nf + f];
                if g == own_group {
                    sets[f].genuine.push(score);
                } else {
                    sets[f].impostor.push(score);
                }
            }
        }
    }
    Ok(sets)
}

fn eer_of_scores(set: &ScoreSet) -> Result<f64> {
    if set.genuine.is_empty() || set.impostor.is_empty() {
        return Err(Error::degenerate("feature screening produced an empty score side"));
    }
    // A feature whose scores are all identical (constant columns: every
    // distance is zero) separates nothing; its error tradeoff is chance.
    let first = set.genuine[0];
    if set.genuine.iter().chain(&set.impostor).all(|&s| s == first) {
        return Ok(0.5);
    }
    Ok(compute_eer(set)?.eer)
}

/// EER of the single-feature verifier for one column: genuine scores come
/// from same-user claims (leave-one-out), impostor scores from every
/// cross-user claim.
pub fn single_feature_eer(
    corpus: &[ExtractedSample],
    feature: usize,
    params: &DtwParams,
) -> Result<f64> {
    if feature >= FRAME_FEATURES {
        return Err(Error::DimensionMismatch(format!("feature index {feature} out of range")));
    }
    let sets = per_feature_score_sets(corpus, &[feature], params)?;
    eer_of_scores(&sets[0])
}

/// Screens all 100 columns and keeps those with EER below 0.5, weighting
/// them by `max(0.5 - EER, epsilon)` normalized to sum 1. Fails with the
/// full EER table when nothing qualifies.
pub fn select_features(corpus: &[ExtractedSample], params: &DtwParams) -> Result<FeatureSelection> {
    check_screening_corpus(corpus)?;
    let mut eers = Vec::with_capacity(FRAME_FEATURES);
    let all: Vec<usize> = (0..FRAME_FEATURES).collect();
    for chunk in all.chunks(SCREEN_CHUNK) {
        let sets = per_feature_score_sets(corpus, chunk, params)?;
        for set in &sets {
            eers.push(eer_of_scores(set)?);
        }
    }

    let kept: Vec<usize> = (0..FRAME_FEATURES).filter(|&f| eers[f] < 0.5).collect();
    if kept.is_empty() {
        let table = eers
            .iter()
            .enumerate()
            .map(|(f, e)| format!("{}={e:.3}", crate::features::column_names()[f]))
            .collect::<Vec<_>>()
            .join(", ");
        return Err(Error::degenerate(format!(
            "no feature achieved EER below 0.5; per-feature EERs: {table}"
        )));
    }
    let raw: Vec<f64> = kept.iter().map(|&f| (0.5 - eers[f]).max(WEIGHT_EPSILON)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.into_iter().map(|w| w / total).collect();

    let norm_stats = fit_normalizer(&corpus.iter().map(|c| c.seq.clone()).collect::<Vec<_>>())?;
    let selection = FeatureSelection { kept, weights, norm_stats, per_feature_eer: eers };
    selection.validate()?;
    Ok(selection)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureSequence;
    use crate::gesture::GestureType;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    /// Builds a corpus where the given columns carry a per-user constant and
    /// everything else is white noise.
    pub(crate) fn engineered_corpus(
        users: usize,
        samples_per_user: usize,
        rows: usize,
        informative: &[usize],
        rng: &mut ChaCha12Rng,
    ) -> Vec<ExtractedSample> {
        let mut corpus = Vec::new();
        for u in 0..users {
            for s in 0..samples_per_user {
                let mut data = vec![0.0; rows * FRAME_FEATURES];
                for r in 0..rows {
                    for c in 0..FRAME_FEATURES {
                        data[r * FRAME_FEATURES + c] = rng.gen::<f64>() * 2.0 - 1.0;
                    }
                }
                for &c in informative {
                    let value = 10.0 * (u as f64 + 1.0) + c as f64;
                    for r in 0..rows {
                        data[r * FRAME_FEATURES + c] = value;
                    }
                }
                corpus.push(ExtractedSample {
                    user_id: format!("u{u:03}"),
                    gesture: GestureType::Sig,
                    batch: 1,
                    seq: FeatureSequence::from_rows(format!("u{u:03}-s{s:03}"), data).unwrap(),
                });
            }
        }
        corpus
    }

    #[test]
    fn per_user_constant_feature_has_zero_eer() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let corpus = engineered_corpus(3, 4, 3, &[7], &mut rng);
        let eer = single_feature_eer(&corpus, 7, &DtwParams::default()).unwrap();
        assert_eq!(eer, 0.0);
    }

    #[test]
    fn noise_feature_sits_near_chance() {
        // Monte-Carlo over independent corpora: the mean screening EER of a
        // pure-noise feature lands at 0.5 within 0.05.
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let params = DtwParams::default();
        let trials = 200;
        let mut total = 0.0;
        for _ in 0..trials {
            let corpus = engineered_corpus(4, 5, 3, &[], &mut rng);
            total += single_feature_eer(&corpus, 0, &params).unwrap();
        }
        let mean = total / trials as f64;
        assert!((mean - 0.5).abs() < 0.05, "mean noise EER {mean}");
    }

    #[test]
    fn constant_everywhere_feature_counts_as_chance() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut corpus = engineered_corpus(3, 3, 3, &[], &mut rng);
        for item in &mut corpus {
            let mut data = item.seq.as_slice().to_vec();
            for r in 0..item.seq.rows() {
                data[r * FRAME_FEATURES + 4] = 42.0;
            }
            item.seq = FeatureSequence::from_rows(item.seq.sample_id.clone(), data).unwrap();
        }
        let eer = single_feature_eer(&corpus, 4, &DtwParams::default()).unwrap();
        assert_eq!(eer, 0.5);
    }

    #[test]
    fn select_features_keeps_informative_columns() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let corpus = engineered_corpus(12, 5, 3, &[3, 41, 88], &mut rng);
        let selection = select_features(&corpus, &DtwParams::default()).unwrap();
        for f in [3usize, 41, 88] {
            assert!(selection.kept.contains(&f), "informative column {f} not kept");
            assert!(selection.per_feature_eer[f] < 0.1);
        }
        selection.validate().unwrap();
        // weights ordered inversely to EER
        let mut pairs: Vec<(f64, f64)> = selection
            .kept
            .iter()
            .zip(&selection.weights)
            .map(|(&f, &w)| (selection.per_feature_eer[f], w))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in pairs.windows(2) {
            assert!(w[0].1 >= w[1].1, "weights not inverse to EER: {pairs:?}");
        }
    }

    #[test]
    fn identical_users_fail_with_diagnostic() {
        // every user produces the same constant matrix: nothing separates
        let mut corpus = Vec::new();
        for u in 0..3 {
            for s in 0..3 {
                let data = vec![1.5; 3 * FRAME_FEATURES];
                corpus.push(ExtractedSample {
                    user_id: format!("u{u}"),
                    gesture: GestureType::Sig,
                    batch: 1,
                    seq: FeatureSequence::from_rows(format!("u{u}-s{s}"), data).unwrap(),
                });
            }
        }
        let err = select_features(&corpus, &DtwParams::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("no feature achieved"), "{msg}");
        assert!(msg.contains("grab_strength=0.500"), "{msg}");
    }

    #[test]
    fn degenerate_corpora_rejected() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let one_user = engineered_corpus(1, 4, 3, &[], &mut rng);
        assert!(single_feature_eer(&one_user, 0, &DtwParams::default()).is_err());
        let one_sample = engineered_corpus(3, 1, 3, &[], &mut rng);
        assert!(single_feature_eer(&one_sample, 0, &DtwParams::default()).is_err());
    }

    #[test]
    fn single_and_batched_screening_agree() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let corpus = engineered_corpus(3, 3, 4, &[10], &mut rng);
        let params = DtwParams::default();
        let sets = per_feature_score_sets(&corpus, &[0, 10, 55], &params).unwrap();
        for (k, f) in [0usize, 10, 55].into_iter().enumerate() {
            let single = single_feature_eer(&corpus, f, &params).unwrap();
            assert_eq!(single, eer_of_scores(&sets[k]).unwrap());
        }
    }
}
