//! Embedding, trial and score containers.
//!
//! All types validate their invariants on construction and are immutable
//! afterwards, so they can be shared freely across scoring workers.

mod bin;
mod io;

pub use io::{
    read_embeddings, read_enrollment_map, read_key, read_scores, read_trials, write_embeddings,
    write_enrollment_map, write_key, write_scores, write_trials, Format,
};

pub(crate) use bin::{
    expect_magic as bin_expect_magic, read_f64_vec_ctx as bin_read_f64_vec,
    read_u32_ctx as bin_read_u32, write_io as bin_write,
};

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

/// One utterance embedding, optionally tagged with its speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub utterance_id: String,
    pub speaker_id: Option<String>,
    pub vector: Vec<f64>,
}

/// Ordered collection of embeddings with a common dimensionality.
///
/// A set is either fully labeled (every record carries a speaker id) or
/// fully unlabeled; mixing is rejected.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    dim: usize,
    records: Vec<EmbeddingRecord>,
    index: HashMap<String, usize>,
}

impl EmbeddingSet {
    pub fn new(dim: usize, records: Vec<EmbeddingRecord>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "embedding dimension must be positive"));
        }
        let mut index = HashMap::with_capacity(records.len());
        let labeled = records.first().map(|r| r.speaker_id.is_some());
        for (i, rec) in records.iter().enumerate() {
            if rec.vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: rec.vector.len(),
                    context: format!("record {} (`{}`)", i + 1, rec.utterance_id),
                });
            }
            if !rec.vector.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("record {} (`{}`)", i + 1, rec.utterance_id),
                });
            }
            if rec.speaker_id.is_some() != labeled.unwrap() {
                return Err(Error::invalid(
                    "speaker_id",
                    format!(
                        "record {} (`{}`): speaker labels must be present on all records or none",
                        i + 1,
                        rec.utterance_id
                    ),
                ));
            }
            if index.insert(rec.utterance_id.clone(), i).is_some() {
                return Err(Error::DuplicateId {
                    id: rec.utterance_id.clone(),
                    context: format!("embedding set, record {}", i + 1),
                });
            }
        }
        Ok(EmbeddingSet {
            dim,
            records,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    /// True when every record carries a speaker id (vacuously true only
    /// for non-empty sets; an empty set is reported unlabeled).
    pub fn is_labeled(&self) -> bool {
        self.records.first().is_some_and(|r| r.speaker_id.is_some())
    }

    pub fn get(&self, utterance_id: &str) -> Option<&EmbeddingRecord> {
        self.index.get(utterance_id).map(|&i| &self.records[i])
    }

    pub fn index_of(&self, utterance_id: &str) -> Option<usize> {
        self.index.get(utterance_id).copied()
    }

    /// Records grouped by speaker, in order of first appearance.
    /// Errors when the set is unlabeled.
    pub fn by_speaker(&self) -> Result<Vec<(&str, Vec<usize>)>> {
        if !self.is_labeled() {
            return Err(Error::invalid(
                "embedding set",
                "speaker labels required for this operation",
            ));
        }
        let mut order: Vec<(&str, Vec<usize>)> = Vec::new();
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (i, rec) in self.records.iter().enumerate() {
            let spk = rec.speaker_id.as_deref().unwrap();
            match seen.get(spk) {
                Some(&slot) => order[slot].1.push(i),
                None => {
                    seen.insert(spk, order.len());
                    order.push((spk, vec![i]));
                }
            }
        }
        Ok(order)
    }
}

/// An (enrollment, test) pair to be scored.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trial {
    pub enroll_id: String,
    pub test_id: String,
}

impl Trial {
    pub fn new(enroll_id: impl Into<String>, test_id: impl Into<String>) -> Self {
        Trial {
            enroll_id: enroll_id.into(),
            test_id: test_id.into(),
        }
    }
}

/// Ordered list of trials without ground truth.
#[derive(Debug, Clone)]
pub struct TrialList {
    trials: Vec<Trial>,
}

impl TrialList {
    pub fn new(trials: Vec<Trial>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(trials.len());
        for t in &trials {
            if !seen.insert((t.enroll_id.as_str(), t.test_id.as_str())) {
                return Err(Error::DuplicateId {
                    id: format!("({}, {})", t.enroll_id, t.test_id),
                    context: "trial list".into(),
                });
            }
        }
        Ok(TrialList { trials })
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }
}

/// Ground-truth class of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialLabel {
    Target,
    Nontarget,
}

impl std::fmt::Display for TrialLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrialLabel::Target => write!(f, "target"),
            TrialLabel::Nontarget => write!(f, "nontarget"),
        }
    }
}

/// One keyed trial.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyEntry {
    pub trial: Trial,
    pub label: TrialLabel,
}

/// Trials with ground truth labels.
#[derive(Debug, Clone)]
pub struct TrialKey {
    entries: Vec<KeyEntry>,
}

impl TrialKey {
    pub fn new(entries: Vec<KeyEntry>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if !seen.insert((e.trial.enroll_id.as_str(), e.trial.test_id.as_str())) {
                return Err(Error::DuplicateId {
                    id: format!("({}, {})", e.trial.enroll_id, e.trial.test_id),
                    context: "trial key".into(),
                });
            }
        }
        Ok(TrialKey { entries })
    }

    pub fn entries(&self) -> &[KeyEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, label: TrialLabel) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }

    /// The unlabeled trial list, in key order.
    pub fn to_trial_list(&self) -> TrialList {
        TrialList {
            trials: self.entries.iter().map(|e| e.trial.clone()).collect(),
        }
    }
}

/// One scored trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTrial {
    pub trial: Trial,
    pub score: f64,
}

/// Ordered per-trial scores.
#[derive(Debug, Clone)]
pub struct ScoreSet {
    scores: Vec<ScoredTrial>,
}

impl ScoreSet {
    pub fn new(scores: Vec<ScoredTrial>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(scores.len());
        for s in &scores {
            if !s.score.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("score for ({}, {})", s.trial.enroll_id, s.trial.test_id),
                });
            }
            if !seen.insert((s.trial.enroll_id.as_str(), s.trial.test_id.as_str())) {
                return Err(Error::DuplicateId {
                    id: format!("({}, {})", s.trial.enroll_id, s.trial.test_id),
                    context: "score set".into(),
                });
            }
        }
        Ok(ScoreSet { scores })
    }

    pub fn scores(&self) -> &[ScoredTrial] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Lookup map keyed by (enroll_id, test_id).
    pub fn pair_map(&self) -> HashMap<(&str, &str), f64> {
        self.scores
            .iter()
            .map(|s| ((s.trial.enroll_id.as_str(), s.trial.test_id.as_str()), s.score))
            .collect()
    }
}

/// Enrollment model backed by one or more utterances.
#[derive(Debug, Clone, PartialEq)]
pub struct EnrollmentModel {
    pub model_id: String,
    pub utterance_ids: Vec<String>,
}

/// Mapping from enrollment model ids to their utterances.
#[derive(Debug, Clone)]
pub struct EnrollmentMap {
    models: Vec<EnrollmentModel>,
    index: HashMap<String, usize>,
}

impl EnrollmentMap {
    pub fn new(models: Vec<EnrollmentModel>) -> Result<Self> {
        let mut index = HashMap::with_capacity(models.len());
        for (i, m) in models.iter().enumerate() {
            if m.utterance_ids.is_empty() {
                return Err(Error::invalid(
                    "enrollment map",
                    format!("model `{}` has no utterances", m.model_id),
                ));
            }
            if index.insert(m.model_id.clone(), i).is_some() {
                return Err(Error::DuplicateId {
                    id: m.model_id.clone(),
                    context: "enrollment map".into(),
                });
            }
        }
        Ok(EnrollmentMap { models, index })
    }

    /// Identity map: every utterance of `set` enrolls a model of the
    /// same name.
    pub fn identity(set: &EmbeddingSet) -> Self {
        let models = set
            .records()
            .iter()
            .map(|r| EnrollmentModel {
                model_id: r.utterance_id.clone(),
                utterance_ids: vec![r.utterance_id.clone()],
            })
            .collect();
        EnrollmentMap::new(models).expect("utterance ids are unique")
    }

    /// One model per speaker, enrolling all of the speaker's utterances.
    /// Errors when the set is unlabeled.
    pub fn per_speaker(set: &EmbeddingSet) -> Result<Self> {
        let models = set
            .by_speaker()?
            .into_iter()
            .map(|(spk, idxs)| EnrollmentModel {
                model_id: spk.to_string(),
                utterance_ids: idxs
                    .into_iter()
                    .map(|i| set.records()[i].utterance_id.clone())
                    .collect(),
            })
            .collect();
        EnrollmentMap::new(models)
    }

    pub fn models(&self) -> &[EnrollmentModel] {
        &self.models
    }

    pub fn get(&self, model_id: &str) -> Option<&EnrollmentModel> {
        self.index.get(model_id).map(|&i| &self.models[i])
    }

    /// Resolves every trial against this map and an embedding set.
    /// Enrollment ids must name a model here; test ids and all model
    /// utterances must name records in `set`. The offending id and the
    /// trial index are reported on failure.
    pub fn resolve_trials(&self, set: &EmbeddingSet, trials: &TrialList) -> Result<ResolvedTrials> {
        let mut models: Vec<Vec<usize>> = Vec::new();
        let mut slots: HashMap<&str, usize> = HashMap::new();
        let mut pairs = Vec::with_capacity(trials.len());
        for (i, trial) in trials.trials().iter().enumerate() {
            let slot = match slots.get(trial.enroll_id.as_str()) {
                Some(&s) => s,
                None => {
                    let model = self.get(&trial.enroll_id).ok_or_else(|| Error::UnresolvedId {
                        id: trial.enroll_id.clone(),
                        index: i,
                    })?;
                    let idxs = model
                        .utterance_ids
                        .iter()
                        .map(|u| {
                            set.index_of(u).ok_or_else(|| Error::UnresolvedId {
                                id: u.clone(),
                                index: i,
                            })
                        })
                        .collect::<Result<Vec<usize>>>()?;
                    let s = models.len();
                    models.push(idxs);
                    slots.insert(trial.enroll_id.as_str(), s);
                    s
                }
            };
            let test_idx = set.index_of(&trial.test_id).ok_or_else(|| Error::UnresolvedId {
                id: trial.test_id.clone(),
                index: i,
            })?;
            pairs.push((slot, test_idx));
        }
        Ok(ResolvedTrials { models, pairs })
    }
}

/// Trials mapped to record indices: `pairs[i] = (model_slot, test_idx)`
/// where `models[model_slot]` lists the enrollment record indices.
#[derive(Debug, Clone)]
pub struct ResolvedTrials {
    pub models: Vec<Vec<usize>>,
    pub pairs: Vec<(usize, usize)>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, spk: Option<&str>, v: &[f64]) -> EmbeddingRecord {
        EmbeddingRecord {
            utterance_id: id.into(),
            speaker_id: spk.map(String::from),
            vector: v.to_vec(),
        }
    }

    #[test]
    fn rejects_dimension_mismatch_with_record_index() {
        let err = EmbeddingSet::new(
            3,
            vec![
                rec("a", None, &[1.0, 2.0, 3.0]),
                rec("b", None, &[1.0, 2.0, 3.0]),
                rec("c", None, &[1.0, 2.0, 3.0, 4.0]),
            ],
        )
        .unwrap_err();
        match err {
            Error::DimensionMismatch { context, got, .. } => {
                assert!(context.contains("record 3"), "{context}");
                assert_eq!(got, 4);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicate_and_nonfinite_and_mixed_labels() {
        assert!(matches!(
            EmbeddingSet::new(1, vec![rec("a", None, &[1.0]), rec("a", None, &[2.0])]),
            Err(Error::DuplicateId { .. })
        ));
        assert!(matches!(
            EmbeddingSet::new(1, vec![rec("a", None, &[f64::NAN])]),
            Err(Error::NonFinite { .. })
        ));
        assert!(matches!(
            EmbeddingSet::new(1, vec![rec("a", Some("s"), &[1.0]), rec("b", None, &[1.0])]),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn empty_set_is_valid() {
        let set = EmbeddingSet::new(10, Vec::new()).unwrap();
        assert_eq!(set.dim(), 10);
        assert!(set.is_empty());
        assert!(!set.is_labeled());
    }

    #[test]
    fn by_speaker_groups_in_first_appearance_order() {
        let set = EmbeddingSet::new(
            1,
            vec![
                rec("u1", Some("s2"), &[0.0]),
                rec("u2", Some("s1"), &[0.0]),
                rec("u3", Some("s2"), &[0.0]),
            ],
        )
        .unwrap();
        let groups = set.by_speaker().unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].0, "s2");
        assert_eq!(groups[0].1, vec![0, 2]);
        assert_eq!(groups[1].1, vec![1]);
    }

    #[test]
    fn duplicate_trial_pairs_rejected() {
        let t = vec![Trial::new("e", "t"), Trial::new("e", "t")];
        assert!(matches!(TrialList::new(t), Err(Error::DuplicateId { .. })));
    }

    #[test]
    fn score_set_rejects_nan() {
        let s = vec![ScoredTrial {
            trial: Trial::new("e", "t"),
            score: f64::INFINITY,
        }];
        assert!(matches!(ScoreSet::new(s), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn enrollment_map_validates() {
        assert!(EnrollmentMap::new(vec![EnrollmentModel {
            model_id: "m".into(),
            utterance_ids: vec![],
        }])
        .is_err());
        let m = EnrollmentMap::new(vec![EnrollmentModel {
            model_id: "m".into(),
            utterance_ids: vec!["u1".into(), "u2".into()],
        }])
        .unwrap();
        assert_eq!(m.get("m").unwrap().utterance_ids.len(), 2);
        assert!(m.get("x").is_none());
    }
}
