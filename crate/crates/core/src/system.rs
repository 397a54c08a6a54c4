//! The trained authentication system: one soft-margin RBF classifier per
//! user over the shared DTW-feature coordinate system.
//!
//! Training takes each user's T templates as positives and everyone else's
//! `(M-1) * T` templates as negatives. The class imbalance is absorbed by
//! per-class penalty weighting (`C_pos = C * (M-1)`, `C_neg = C`) so the
//! penalty mass of both classes matches. Enrollment appends the new user's
//! templates to the bank, grows every feature vector by T, and retrains all
//! classifiers from scratch.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bank::{build_bank, DtwFeatureVector, PreparedBank, TemplateBank};
use crate::dtw::{dtw_prepared, DtwParams, PreparedSequence};
use crate::error::{Error, Result};
use crate::features::{apply_normalizer, extract_features, ExtractedSample, FeatureSequence};
use crate::gesture::RawSample;
use crate::io::atomic_write;
use crate::selection::{select_features, FeatureSelection};
use crate::svm::{smo_solve, RbfKernel, SmoParams};

pub const MODEL_FORMAT: &str = "airgate-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Functional margins below this flag a model as low-margin.
const LOW_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Templates per user.
    pub t: usize,
    /// Soft-margin penalty; positives are additionally weighted by (M-1).
    pub c: f64,
    /// RBF gamma; `None` selects `1 / (W * var)` per training run.
    pub gamma: Option<f64>,
    /// Decision threshold: accept when the decision value exceeds it.
    pub threshold: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams { t: 4, c: 10.0, gamma: None, threshold: 0.0 }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.t == 0 {
            return Err(Error::Config("T must be positive".into()));
        }
        if !(self.c > 0.0) {
            return Err(Error::Config("C must be positive".into()));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) {
                return Err(Error::Config("gamma must be positive".into()));
            }
        }
        Ok(())
    }
}

/// One user's trained classifier over W-dimensional DTW feature vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserModel {
    pub user_id: String,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub dual_coefficients: Vec<f64>,
    pub bias: f64,
    pub kernel_gamma: f64,
    pub trained_on_w: usize,
    /// False when SMO hit its iteration cap before meeting the KKT tolerance.
    pub converged: bool,
    /// True when some training point sits at or inside the margin.
    pub low_margin: bool,
}

impl UserModel {
    /// SVM decision value for a feature vector.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.trained_on_w {
            return Err(Error::DimensionMismatch(format!(
                "model {} expects {}-dimensional vectors, got {}",
                self.user_id,
                self.trained_on_w,
                x.len()
            )));
        }
        let kernel = RbfKernel { gamma: self.kernel_gamma };
        let mut f = self.bias;
        for (sv, coef) in self.support_vectors.iter().zip(&self.dual_coefficients) {
            f += coef * kernel.eval(sv, x);
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub accept: bool,
    pub score: f64,
}

/// A fully trained system: bank, feature selection, and one model per user.
#[derive(Debug, Clone)]
pub struct AuthSystem {
    bank: TemplateBank,
    selection: FeatureSelection,
    models: Vec<UserModel>,
    hyperparams: Hyperparams,
    dtw_params: DtwParams,
    prepared_bank: PreparedBank,
    warnings: Vec<String>,
}

impl AuthSystem {
    pub fn bank(&self) -> &TemplateBank {
        &self.bank
    }

    pub fn selection(&self) -> &FeatureSelection {
        &self.selection
    }

    pub fn models(&self) -> &[UserModel] {
        &self.models
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyperparams
    }

    pub fn dtw_params(&self) -> &DtwParams {
        &self.dtw_params
    }

    /// Training warnings (non-convergence, low margins), empty when clean.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn model_for(&self, user_id: &str) -> Result<&UserModel> {
        self.models
            .iter()
            .find(|m| m.user_id == user_id)
            .ok_or_else(|| Error::UnknownUser(user_id.into()))
    }

    /// Normalizes and restricts an extracted sequence for DTW against the bank.
    pub fn prepare_probe(&self, seq: &FeatureSequence) -> PreparedSequence {
        let normed = apply_normalizer(seq, &self.selection.norm_stats);
        PreparedSequence::from_selection(&normed, &self.selection)
    }

    pub fn feature_vector(&self, probe: &PreparedSequence) -> Result<DtwFeatureVector> {
        let v = self.prepared_bank.feature_vector(probe, &self.dtw_params)?;
        v.validate(self.bank.w())?;
        Ok(v)
    }

    pub fn decision(&self, user_id: &str, vector: &DtwFeatureVector) -> Result<f64> {
        self.model_for(user_id)?.decision(&vector.values)
    }

    /// Scores an extracted sequence against a claimed user.
    pub fn score_sequence(&self, seq: &FeatureSequence, claimed_user: &str) -> Result<f64> {
        let model = self.model_for(claimed_user)?;
        let probe = self.prepare_probe(seq);
        let vector = self.feature_vector(&probe)?;
        model.decision(&vector.values)
    }
}

/// Resolved gamma plus the shared template kernel matrix.
struct TrainingContext {
    vectors: Vec<Vec<f64>>,
    kernel: Vec<Vec<f64>>,
    gamma: f64,
}

/// All-pairs DTW feature vectors of the bank templates against themselves.
/// Self-distances are exactly zero and kept in place.
fn template_vectors(prepared: &PreparedBank, params: &DtwParams) -> Result<Vec<Vec<f64>>> {
    let w = prepared.len();
    let seqs = prepared.prepared();
    let pairs: Vec<(usize, usize)> =
        (0..w).flat_map(|i| (i + 1..w).map(move |j| (i, j))).collect();
    let distances: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| dtw_prepared(&seqs[i], &seqs[j], params))
        .collect();
    let mut matrix = vec![vec![0.0; w]; w];
    for (&(i, j), d) in pairs.iter().zip(distances) {
        let d = d?;
        matrix[i][j] = d;
        matrix[j][i] = d;
    }
    Ok(matrix)
}

fn training_context(
    prepared: &PreparedBank,
    hp: &Hyperparams,
    params: &DtwParams,
) -> Result<TrainingContext> {
    let vectors = template_vectors(prepared, params)?;
    let gamma = match hp.gamma {
        Some(g) => g,
        None => RbfKernel::scale_gamma(&vectors),
    };
    let kernel = RbfKernel::new(gamma)?.matrix(&vectors);
    Ok(TrainingContext { vectors, kernel, gamma })
}

/// Trains the per-user models over a shared bank/kernel.
fn train_models(
    bank: &TemplateBank,
    ctx: &TrainingContext,
    hp: &Hyperparams,
) -> Result<(Vec<UserModel>, Vec<String>)> {
    let m = bank.users().len();
    let t = bank.templates_per_user();
    let w = bank.w();
    let smo_params = SmoParams::default();

    let results: Vec<Result<UserModel>> = (0..m)
        .into_par_iter()
        .map(|u| {
            let mut labels = vec![-1.0; w];
            let mut bounds = vec![hp.c; w];
            for k in u * t..(u + 1) * t {
                labels[k] = 1.0;
                bounds[k] = hp.c * (m - 1) as f64;
            }
            let sol = smo_solve(&ctx.kernel, &labels, &bounds, &smo_params)?;
            let mut support_vectors = Vec::new();
            let mut dual_coefficients = Vec::new();
            for i in 0..w {
                if sol.alpha[i] > 0.0 {
                    support_vectors.push(ctx.vectors[i].clone());
                    dual_coefficients.push(sol.alpha[i] * labels[i]);
                }
            }
            let model = UserModel {
                user_id: bank.users()[u].clone(),
                support_vectors,
                dual_coefficients,
                bias: sol.bias,
                kernel_gamma: ctx.gamma,
                trained_on_w: w,
                converged: sol.converged,
                low_margin: false,
            };
            // functional margin over the training set
            let mut min_margin = f64::INFINITY;
            for i in 0..w {
                let f = model.decision(&ctx.vectors[i])?;
                min_margin = min_margin.min(labels[i] * f);
            }
            Ok(UserModel { low_margin: min_margin < LOW_MARGIN, ..model })
        })
        .collect();

    let mut models = Vec::with_capacity(m);
    let mut warnings = Vec::new();
    for r in results {
        let model = r?;
        if !model.converged {
            warnings.push(format!("model {}: SMO stopped at the iteration cap", model.user_id));
        }
        if model.low_margin {
            warnings.push(format!("model {}: low margin on its training set", model.user_id));
        }
        models.push(model);
    }
    Ok((models, warnings))
}

fn group_by_user(corpus: &[ExtractedSample]) -> BTreeMap<&str, Vec<&ExtractedSample>> {
    let mut groups: BTreeMap<&str, Vec<&ExtractedSample>> = BTreeMap::new();
    for item in corpus {
        groups.entry(item.user_id.as_str()).or_default().push(item);
    }
    groups
}

/// Trains a complete system from a corpus. Each user's first T samples (by
/// sample id) become their templates; feature selection runs on exactly that
/// template portion.
pub fn train_all(
    corpus: &[ExtractedSample],
    hp: &Hyperparams,
    dtw_params: &DtwParams,
) -> Result<AuthSystem> {
    hp.validate()?;
    let groups = group_by_user(corpus);
    if groups.len() < 2 {
        return Err(Error::degenerate("training needs at least 2 users"));
    }
    let mut templates = Vec::new();
    for (user, mut items) in groups {
        items.sort_by(|a, b| a.seq.sample_id.cmp(&b.seq.sample_id));
        if items.len() < hp.t {
            return Err(Error::data(format!(
                "user {user} has {} samples, needs at least T={}",
                items.len(),
                hp.t
            )));
        }
        templates.extend(items.into_iter().take(hp.t).cloned());
    }
    train_from_templates(&templates, hp, dtw_params)
}

/// Trains from an explicit template set (exactly T samples per user), the
/// entry point used by the evaluation harness with fold assignments.
pub fn train_from_templates(
    templates: &[ExtractedSample],
    hp: &Hyperparams,
    dtw_params: &DtwParams,
) -> Result<AuthSystem> {
    hp.validate()?;
    let selection = select_features(templates, dtw_params)?;
    let bank = build_bank(templates, hp.t)?;
    if bank.sample_ids().len() != templates.len() {
        return Err(Error::data("template set must contain exactly T samples per user"));
    }
    let prepared_bank = PreparedBank::new(&bank, &selection);
    let ctx = training_context(&prepared_bank, hp, dtw_params)?;
    let (models, warnings) = train_models(&bank, &ctx, hp)?;
    Ok(AuthSystem {
        bank,
        selection,
        models,
        hyperparams: *hp,
        dtw_params: *dtw_params,
        prepared_bank,
        warnings,
    })
}

/// Verifies a claimed identity for a raw sample. Accepts when the claimed
/// user's decision value exceeds the system threshold.
pub fn verify(sample: &RawSample, claimed_user: &str, system: &AuthSystem) -> Result<Verification> {
    let seq = extract_features(sample)?;
    let score = system.score_sequence(&seq, claimed_user)?;
    Ok(Verification { accept: score > system.hyperparams.threshold, score })
}

/// Enrolls a new user: appends their T templates to the bank (the existing
/// flat order is untouched), recomputes every template's feature vector at
/// the new dimension W + T, and retrains all classifiers. Feature selection
/// and normalization statistics stay frozen from the original training run.
pub fn enroll(
    system: &AuthSystem,
    new_user_samples: &[ExtractedSample],
    t: usize,
) -> Result<AuthSystem> {
    if t != system.hyperparams.t {
        return Err(Error::Config(format!(
            "enrollment T={t} differs from the system's T={}",
            system.hyperparams.t
        )));
    }
    let user_id = match new_user_samples.first() {
        Some(first) => first.user_id.clone(),
        None => return Err(Error::data("enrollment needs samples")),
    };
    if new_user_samples.iter().any(|s| s.user_id != user_id) {
        return Err(Error::data("enrollment samples must all belong to one user"));
    }
    if system.bank.user_index(&user_id).is_some() {
        return Err(Error::DuplicateUser(user_id));
    }
    if new_user_samples.len() < t {
        return Err(Error::data(format!(
            "user {user_id} has {} samples, needs at least T={t}",
            new_user_samples.len()
        )));
    }
    let mut sorted: Vec<&ExtractedSample> = new_user_samples.iter().collect();
    sorted.sort_by(|a, b| a.seq.sample_id.cmp(&b.seq.sample_id));
    let templates: Vec<FeatureSequence> =
        sorted.into_iter().take(t).map(|s| s.seq.clone()).collect();

    let bank = system.bank.extended(&user_id, templates)?;
    let prepared_bank = PreparedBank::new(&bank, &system.selection);
    let ctx = training_context(&prepared_bank, &system.hyperparams, &system.dtw_params)?;
    let (models, warnings) = train_models(&bank, &ctx, &system.hyperparams)?;
    Ok(AuthSystem {
        bank,
        selection: system.selection.clone(),
        models,
        hyperparams: system.hyperparams,
        dtw_params: system.dtw_params,
        prepared_bank,
        warnings,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankManifest {
    pub user_ids: Vec<String>,
    pub t: usize,
    /// Flat template sample ids in bank order; sequences are stored by
    /// reference into the corpus file.
    pub sample_ids: Vec<String>,
    pub corpus_path: String,
    pub corpus_hash: String,
}

/// On-disk model document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub hyperparams: Hyperparams,
    pub dtw_params: DtwParams,
    pub selection: FeatureSelection,
    pub bank_manifest: BankManifest,
    pub models: Vec<UserModel>,
}

/// Saves a trained system; bank templates are referenced by sample id plus
/// the corpus file's content hash.
pub fn save_model(
    system: &AuthSystem,
    path: impl AsRef<Path>,
    corpus_path: &str,
    corpus_hash: &str,
) -> Result<()> {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_FORMAT_VERSION,
        hyperparams: system.hyperparams,
        dtw_params: system.dtw_params,
        selection: system.selection.clone(),
        bank_manifest: BankManifest {
            user_ids: system.bank.users().to_vec(),
            t: system.bank.templates_per_user(),
            sample_ids: system.bank.sample_ids().to_vec(),
            corpus_path: corpus_path.into(),
            corpus_hash: corpus_hash.into(),
        },
        models: system.models.clone(),
    };
    let mut bytes = serde_json::to_vec_pretty(&file)?;
    bytes.push(b'\n');
    atomic_write(path.as_ref(), &bytes)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let bytes = std::fs::read(path.as_ref())?;
    let file: ModelFile = serde_json::from_slice(&bytes)?;
    if file.format != MODEL_FORMAT {
        return Err(Error::data(format!("unexpected model format {:?}", file.format)));
    }
    if file.version != MODEL_FORMAT_VERSION {
        return Err(Error::data(format!("unsupported model version {}", file.version)));
    }
    Ok(file)
}

/// Rebuilds a runnable system from a model document plus the corpus holding
/// the referenced bank templates.
pub fn system_from_model(file: &ModelFile, corpus: &[RawSample]) -> Result<AuthSystem> {
    file.selection.validate()?;
    let by_id: BTreeMap<&str, &RawSample> =
        corpus.iter().map(|s| (s.sample_id.as_str(), s)).collect();
    let mut sequences = Vec::with_capacity(file.bank_manifest.sample_ids.len());
    for id in &file.bank_manifest.sample_ids {
        let sample = by_id.get(id.as_str()).ok_or_else(|| {
            Error::data(format!("bank template {id} not found in the corpus file"))
        })?;
        sequences.push(extract_features(sample)?);
    }
    let bank = TemplateBank::from_parts(
        file.bank_manifest.user_ids.clone(),
        file.bank_manifest.t,
        file.bank_manifest.sample_ids.clone(),
        sequences,
    )?;
    if file.models.len() != bank.users().len() {
        return Err(Error::data("model count does not match bank users"));
    }
    for model in &file.models {
        if model.trained_on_w != bank.w() {
            return Err(Error::data(format!(
                "model {} trained on W={}, bank W is {}",
                model.user_id,
                model.trained_on_w,
                bank.w()
            )));
        }
    }
    let prepared_bank = PreparedBank::new(&bank, &file.selection);
    Ok(AuthSystem {
        bank,
        selection: file.selection.clone(),
        models: file.models.clone(),
        hyperparams: file.hyperparams,
        dtw_params: file.dtw_params,
        prepared_bank,
        warnings: Vec::new(),
    })
}
