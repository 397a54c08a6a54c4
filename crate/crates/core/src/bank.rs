//! The shared template bank and DTW-distance feature vectors.
//!
//! Every classifier in the system sees feature vectors expressed in the
//! same coordinate system: the DTW distances of a sample to each of the
//! `W = M * T` bank templates, ordered user-major then template-minor. The
//! flat order is frozen when the bank is built; enrolling a new user only
//! ever appends to it.

use std::collections::BTreeMap;

use crate::dtw::{dtw_distance, dtw_prepared, DtwParams, PreparedSequence};
use crate::error::{Error, Result};
use crate::features::{apply_normalizer, ExtractedSample, FeatureSequence};
use crate::selection::FeatureSelection;

/// The fixed-order template set shared by all classifiers. Sequences are
/// stored as extracted (unnormalized) features; normalization is applied
/// against a selection when the bank is prepared for distance computation.
#[derive(Debug, Clone)]
pub struct TemplateBank {
    users: Vec<String>,
    templates_per_user: usize,
    /// Flat user-major, template-minor order.
    sample_ids: Vec<String>,
    sequences: Vec<FeatureSequence>,
}

impl TemplateBank {
    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn templates_per_user(&self) -> usize {
        self.templates_per_user
    }

    /// Feature dimension W = M * T.
    pub fn w(&self) -> usize {
        self.users.len() * self.templates_per_user
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn sequences(&self) -> &[FeatureSequence] {
        &self.sequences
    }

    pub fn user_index(&self, user_id: &str) -> Option<usize> {
        self.users.iter().position(|u| u == user_id)
    }

    /// Rebuilds a bank from its manifest parts (model-file loading path).
    pub fn from_parts(
        users: Vec<String>,
        templates_per_user: usize,
        sample_ids: Vec<String>,
        sequences: Vec<FeatureSequence>,
    ) -> Result<TemplateBank> {
        if templates_per_user == 0 || users.is_empty() {
            return Err(Error::data("bank manifest has no users or zero templates"));
        }
        if sample_ids.len() != users.len() * templates_per_user
            || sequences.len() != sample_ids.len()
        {
            return Err(Error::data("bank manifest sizes are inconsistent"));
        }
        for (id, seq) in sample_ids.iter().zip(&sequences) {
            if &seq.sample_id != id {
                return Err(Error::data(format!(
                    "bank sequence {} does not match manifest id {id}",
                    seq.sample_id
                )));
            }
        }
        Ok(TemplateBank { users, templates_per_user, sample_ids, sequences })
    }

    /// Appends a new user's templates, preserving the existing flat order.
    pub fn extended(&self, user_id: &str, templates: Vec<FeatureSequence>) -> Result<TemplateBank> {
        if self.users.iter().any(|u| u == user_id) {
            return Err(Error::DuplicateUser(user_id.into()));
        }
        if templates.len() != self.templates_per_user {
            return Err(Error::data(format!(
                "expected {} templates for {user_id}, got {}",
                self.templates_per_user,
                templates.len()
            )));
        }
        let mut users = self.users.clone();
        users.push(user_id.to_string());
        let mut sample_ids = self.sample_ids.clone();
        sample_ids.extend(templates.iter().map(|t| t.sample_id.clone()));
        let mut sequences = self.sequences.clone();
        sequences.extend(templates);
        Ok(TemplateBank { users, templates_per_user: self.templates_per_user, sample_ids, sequences })
    }
}

/// Picks each user's first `t` samples (by sample id) as templates and
/// freezes the flat user-major order. Users are ordered by id.
pub fn build_bank(corpus: &[ExtractedSample], t: usize) -> Result<TemplateBank> {
    if t == 0 {
        return Err(Error::Config("template count T must be positive".into()));
    }
    let mut by_user: BTreeMap<&str, Vec<&ExtractedSample>> = BTreeMap::new();
    for item in corpus {
        by_user.entry(item.user_id.as_str()).or_default().push(item);
    }
    if by_user.is_empty() {
        return Err(Error::degenerate("cannot build a bank from an empty corpus"));
    }
    let mut users = Vec::with_capacity(by_user.len());
    let mut sample_ids = Vec::new();
    let mut sequences = Vec::new();
    for (user, mut items) in by_user {
        items.sort_by(|a, b| a.seq.sample_id.cmp(&b.seq.sample_id));
        if items.len() < t {
            return Err(Error::data(format!(
                "user {user} has {} samples, needs at least {t} templates",
                items.len()
            )));
        }
        users.push(user.to_string());
        for item in items.into_iter().take(t) {
            sample_ids.push(item.seq.sample_id.clone());
            sequences.push(item.seq.clone());
        }
    }
    Ok(TemplateBank { users, templates_per_user: t, sample_ids, sequences })
}

/// A bank normalized and restricted to a selection, ready for fast DTW.
#[derive(Debug, Clone)]
pub struct PreparedBank {
    prepared: Vec<PreparedSequence>,
}

impl PreparedBank {
    pub fn new(bank: &TemplateBank, selection: &FeatureSelection) -> PreparedBank {
        let prepared = bank
            .sequences
            .iter()
            .map(|seq| {
                let normed = apply_normalizer(seq, &selection.norm_stats);
                PreparedSequence::from_selection(&normed, selection)
            })
            .collect();
        PreparedBank { prepared }
    }

    pub fn len(&self) -> usize {
        self.prepared.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prepared.is_empty()
    }

    /// DTW distances of an already normalized-and-prepared probe to every
    /// template, in bank order.
    pub fn feature_vector(&self, probe: &PreparedSequence, params: &DtwParams) -> Result<DtwFeatureVector> {
        let values = self
            .prepared
            .iter()
            .map(|t| dtw_prepared(probe, t, params))
            .collect::<Result<Vec<f64>>>()?;
        Ok(DtwFeatureVector { values })
    }

    pub fn prepared(&self) -> &[PreparedSequence] {
        &self.prepared
    }
}

/// A sample's DTW distances to each bank template, in bank order.
#[derive(Debug, Clone, PartialEq)]
pub struct DtwFeatureVector {
    pub values: Vec<f64>,
}

impl DtwFeatureVector {
    pub fn validate(&self, w: usize) -> Result<()> {
        if self.values.len() != w {
            return Err(Error::DimensionMismatch(format!(
                "feature vector has {} entries, bank W is {w}",
                self.values.len()
            )));
        }
        if self.values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::data("feature vector entries must be finite and non-negative"));
        }
        Ok(())
    }
}

/// DTW feature vector of a raw (extracted, unnormalized) sample against the
/// bank: entry `j` is the weighted DTW distance to the j-th flat template.
pub fn dtw_feature(
    sample: &FeatureSequence,
    bank: &TemplateBank,
    selection: &FeatureSelection,
    params: &DtwParams,
) -> Result<DtwFeatureVector> {
    let probe = apply_normalizer(sample, &selection.norm_stats);
    let values = bank
        .sequences
        .iter()
        .map(|t| {
            let template = apply_normalizer(t, &selection.norm_stats);
            dtw_distance(&probe, &template, selection, params)
        })
        .collect::<Result<Vec<f64>>>()?;
    let vector = DtwFeatureVector { values };
    vector.validate(bank.w())?;
    Ok(vector)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureSequence, NormStats, FRAME_FEATURES};
    use crate::gesture::GestureType;

    fn item(user: &str, sample: &str, fill: f64, rows: usize) -> ExtractedSample {
        let mut data = vec![0.0; rows * FRAME_FEATURES];
        for (i, v) in data.iter_mut().enumerate() {
            *v = fill + (i % 7) as f64 * 0.1;
        }
        ExtractedSample {
            user_id: user.into(),
            gesture: GestureType::Circle,
            batch: 1,
            seq: FeatureSequence::from_rows(sample, data).unwrap(),
        }
    }

    fn identity_selection() -> FeatureSelection {
        FeatureSelection {
            kept: vec![0, 1, 2],
            weights: vec![0.5, 0.25, 0.25],
            norm_stats: NormStats {
                mean: vec![0.0; FRAME_FEATURES],
                std: vec![1.0; FRAME_FEATURES],
            },
            per_feature_eer: vec![0.1; FRAME_FEATURES],
        }
    }

    fn corpus(m: usize, t: usize) -> Vec<ExtractedSample> {
        let mut out = Vec::new();
        for u in 0..m {
            for s in 0..t + 1 {
                out.push(item(&format!("u{u:02}"), &format!("u{u:02}-s{s:02}"), u as f64, 3));
            }
        }
        out
    }

    #[test]
    fn w_is_users_times_templates() {
        let bank = build_bank(&corpus(2, 4), 4).unwrap();
        assert_eq!(bank.w(), 8);
        let bank = build_bank(&corpus(32, 4), 4).unwrap();
        assert_eq!(bank.w(), 128);
    }

    #[test]
    fn flat_order_is_user_major() {
        let bank = build_bank(&corpus(3, 2), 2).unwrap();
        assert_eq!(bank.users(), &["u00", "u01", "u02"]);
        assert_eq!(
            bank.sample_ids(),
            &["u00-s00", "u00-s01", "u01-s00", "u01-s01", "u02-s00", "u02-s01"]
        );
    }

    #[test]
    fn bank_build_is_deterministic() {
        let mut shuffled = corpus(4, 3);
        shuffled.reverse();
        let a = build_bank(&corpus(4, 3), 3).unwrap();
        let b = build_bank(&shuffled, 3).unwrap();
        assert_eq!(a.sample_ids(), b.sample_ids());
        assert_eq!(a.users(), b.users());
    }

    #[test]
    fn too_few_samples_rejected() {
        assert!(build_bank(&corpus(2, 2), 4).is_err());
    }

    #[test]
    fn own_template_has_zero_entry() {
        let corpus = corpus(2, 4);
        let bank = build_bank(&corpus, 4).unwrap();
        let sel = identity_selection();
        let params = DtwParams::default();
        let vector = dtw_feature(&bank.sequences()[0], &bank, &sel, &params).unwrap();
        assert_eq!(vector.values[0], 0.0);
        assert_eq!(vector.values.len(), 8);
    }

    #[test]
    fn vector_matches_independent_distance_calls() {
        let corpus = corpus(2, 4);
        let bank = build_bank(&corpus, 4).unwrap();
        let sel = identity_selection();
        let params = DtwParams::default();
        let probe = &corpus[1].seq;
        let vector = dtw_feature(probe, &bank, &sel, &params).unwrap();
        let probe_n = apply_normalizer(probe, &sel.norm_stats);
        for (j, template) in bank.sequences().iter().enumerate() {
            let t_n = apply_normalizer(template, &sel.norm_stats);
            let d = dtw_distance(&probe_n, &t_n, &sel, &params).unwrap();
            assert_eq!(vector.values[j], d, "entry {j}");
        }
        // the prepared fast path agrees exactly
        let prepared_bank = PreparedBank::new(&bank, &sel);
        let prepared_probe = PreparedSequence::from_selection(
            &apply_normalizer(probe, &sel.norm_stats),
            &sel,
        );
        let fast = prepared_bank.feature_vector(&prepared_probe, &params).unwrap();
        assert_eq!(fast.values, vector.values);
    }

    #[test]
    fn extension_preserves_prefix() {
        let base = build_bank(&corpus(2, 3), 3).unwrap();
        let extra = vec![
            item("zz", "zz-s00", 9.0, 3).seq,
            item("zz", "zz-s01", 9.1, 3).seq,
            item("zz", "zz-s02", 9.2, 3).seq,
        ];
        let extended = base.extended("zz", extra).unwrap();
        assert_eq!(extended.w(), base.w() + 3);
        assert_eq!(&extended.sample_ids()[..base.w()], base.sample_ids());
        assert_eq!(&extended.users()[..2], base.users());
        assert!(base.extended("u00", vec![]).is_err());
    }
}
