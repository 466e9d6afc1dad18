//! Hard-voting ensembles over prediction sets.
//!
//! Emotions are decided by a weighted plurality vote; explanations cannot be
//! voted on, so they are copied from one configured source model. The fold
//! ensemble (k fold models, explanations from the best-BLEU fold) and the
//! hybrid LM + LVLM ensemble (explanations from the LVLM) are both just
//! configurations of [`combine`].

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::prompting::Prediction;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnsembleError {
    #[error("ensemble needs at least one voter")]
    NoVoters,
    #[error("voter `{0}` listed more than once")]
    DuplicateVoter(String),
    #[error("multiplicity given for `{0}`, which is not a voter")]
    StrayMultiplicity(String),
    #[error("record `{0}` has no votes")]
    NoVotes(String),
    #[error("record `{record}`: vote from `{model}`, which is not a voter")]
    UnknownVoter { record: String, model: String },
    #[error("record `{record}`: `{model}` voted more than once")]
    DuplicateVote { record: String, model: String },
    #[error("record `{record}`: tie between {emotions:?}")]
    Tie {
        record: String,
        emotions: Vec<String>,
    },
    #[error("no prediction set loaded for model `{0}`")]
    MissingSet(String),
    #[error("model `{model}` has two predictions for record `{record}`")]
    DuplicatePrediction { model: String, record: String },
    #[error("explanation source `{model}` is missing {} record(s): {}", .ids.len(), .ids.join(", "))]
    SourceMissing { model: String, ids: Vec<String> },
    #[error("voters cover different records; {} id(s) not shared by all: {}", .0.len(), .0.join(", "))]
    CoverageMismatch(Vec<String>),
    #[error("invalid ensemble config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieBreak {
    /// Among the tied emotions, take the one voted by the earliest voter.
    #[default]
    Priority,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum ExplanationSource {
    #[default]
    FirstVoter,
    Model(String),
}

impl From<String> for ExplanationSource {
    fn from(s: String) -> Self {
        if s == "first_voter" {
            Self::FirstVoter
        } else {
            Self::Model(s)
        }
    }
}

impl From<ExplanationSource> for String {
    fn from(s: ExplanationSource) -> Self {
        match s {
            ExplanationSource::FirstVoter => "first_voter".to_string(),
            ExplanationSource::Model(m) => m,
        }
    }
}

impl fmt::Display for ExplanationSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::FirstVoter => f.write_str("first_voter"),
            Self::Model(m) => f.write_str(m),
        }
    }
}

fn default_name() -> String {
    "ensemble".to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    #[serde(default = "default_name")]
    pub name: String,
    /// Voter order doubles as tie-break priority, highest first.
    pub voters: Vec<String>,
    #[serde(default)]
    pub tie_break: TieBreak,
    #[serde(default)]
    pub explanation_source: ExplanationSource,
    /// Votes per model; voters not listed count once. Zero mutes a voter.
    #[serde(default)]
    pub multiplicity: BTreeMap<String, u32>,
}

impl EnsembleConfig {
    pub fn new(name: impl Into<String>, voters: Vec<String>) -> Self {
        Self {
            name: name.into(),
            voters,
            tie_break: TieBreak::Priority,
            explanation_source: ExplanationSource::FirstVoter,
            multiplicity: BTreeMap::new(),
        }
    }

    /// k fold models voting with equal weight, explanations from one fold.
    pub fn fold_ensemble(
        name: impl Into<String>,
        folds: Vec<String>,
        explanation_model: impl Into<String>,
    ) -> Self {
        Self {
            explanation_source: ExplanationSource::Model(explanation_model.into()),
            ..Self::new(name, folds)
        }
    }

    /// Two voters, the LM ensemble first so it wins every disagreement, with
    /// explanations taken from the LVLM.
    pub fn hybrid_paper(lm_ensemble: impl Into<String>, lvlm: impl Into<String>) -> Self {
        let lvlm = lvlm.into();
        Self {
            explanation_source: ExplanationSource::Model(lvlm.clone()),
            ..Self::new("hybrid-paper", vec![lm_ensemble.into(), lvlm])
        }
    }

    pub fn from_json(text: &str) -> Result<Self, EnsembleError> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| EnsembleError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.voters.is_empty() {
            return Err(EnsembleError::NoVoters);
        }
        let mut seen = HashSet::new();
        for v in &self.voters {
            if !seen.insert(v.as_str()) {
                return Err(EnsembleError::DuplicateVoter(v.clone()));
            }
        }
        if let Some(stray) = self.multiplicity.keys().find(|m| !seen.contains(m.as_str())) {
            return Err(EnsembleError::StrayMultiplicity(stray.clone()));
        }
        Ok(())
    }

    pub fn weight(&self, model: &str) -> u64 {
        self.multiplicity.get(model).copied().unwrap_or(1) as u64
    }

    pub fn source_model(&self) -> &str {
        match &self.explanation_source {
            ExplanationSource::FirstVoter => &self.voters[0],
            ExplanationSource::Model(m) => m,
        }
    }

    pub fn output_model_id(&self) -> String {
        format!("ensemble:{}", self.name)
    }
}

/// Decides one record. `votes` holds `(model_id, emotion)` pairs.
pub fn vote_record(
    record: &str,
    votes: &[(String, String)],
    config: &EnsembleConfig,
) -> Result<String, EnsembleError> {
    let mut by_voter: HashMap<&str, &str> = HashMap::with_capacity(votes.len());
    let mut tally: BTreeMap<&str, u64> = BTreeMap::new();
    for (model, emotion) in votes {
        if !config.voters.contains(model) {
            return Err(EnsembleError::UnknownVoter {
                record: record.to_string(),
                model: model.clone(),
            });
        }
        if by_voter.insert(model, emotion).is_some() {
            return Err(EnsembleError::DuplicateVote {
                record: record.to_string(),
                model: model.clone(),
            });
        }
        let w = config.weight(model);
        if w > 0 {
            *tally.entry(emotion).or_insert(0) += w;
        }
    }
    let Some(&top) = tally.values().max() else {
        return Err(EnsembleError::NoVotes(record.to_string()));
    };
    let tied: Vec<&str> = tally
        .iter()
        .filter(|(_, &t)| t == top)
        .map(|(e, _)| *e)
        .collect();
    if let [winner] = tied.as_slice() {
        return Ok(winner.to_string());
    }
    match config.tie_break {
        TieBreak::Error => Err(EnsembleError::Tie {
            record: record.to_string(),
            emotions: tied.iter().map(|e| e.to_string()).collect(),
        }),
        TieBreak::Priority => {
            let winner = config
                .voters
                .iter()
                .filter(|v| config.weight(v) > 0)
                .filter_map(|v| by_voter.get(v.as_str()))
                .find(|e| tied.contains(e))
                .expect("a tied emotion always has a positive-weight voter");
            Ok(winner.to_string())
        }
    }
}

pub fn hard_vote(
    votes_per_record: &BTreeMap<String, Vec<(String, String)>>,
    config: &EnsembleConfig,
) -> Result<BTreeMap<String, String>, EnsembleError> {
    config.validate()?;
    votes_per_record
        .iter()
        .map(|(id, votes)| Ok((id.clone(), vote_record(id, votes, config)?)))
        .collect()
}

type IdIndex<'a> = BTreeMap<&'a str, &'a Prediction>;

fn index_set<'a>(model: &str, set: &'a [Prediction]) -> Result<IdIndex<'a>, EnsembleError> {
    let mut idx = BTreeMap::new();
    for p in set {
        if idx.insert(p.record_id.as_str(), p).is_some() {
            return Err(EnsembleError::DuplicatePrediction {
                model: model.to_string(),
                record: p.record_id.clone(),
            });
        }
    }
    Ok(idx)
}

fn lookup<'a>(
    sets: &'a BTreeMap<String, Vec<Prediction>>,
    model: &str,
) -> Result<&'a [Prediction], EnsembleError> {
    sets.get(model)
        .map(Vec::as_slice)
        .ok_or_else(|| EnsembleError::MissingSet(model.to_string()))
}

fn explanations_for<'a>(
    sets: &'a BTreeMap<String, Vec<Prediction>>,
    config: &EnsembleConfig,
    universe: impl Iterator<Item = &'a str>,
) -> Result<BTreeMap<String, String>, EnsembleError> {
    let model = config.source_model();
    let source = index_set(model, lookup(sets, model)?)?;
    let mut out = BTreeMap::new();
    let mut missing = Vec::new();
    for id in universe {
        match source.get(id) {
            Some(p) => {
                out.insert(id.to_string(), p.explanation.clone());
            }
            None => missing.push(id.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(EnsembleError::SourceMissing {
            model: model.to_string(),
            ids: missing,
        });
    }
    Ok(out)
}

/// Explanation per record, copied verbatim from the configured source. The
/// record universe is every id predicted by any voter.
pub fn select_explanations(
    prediction_sets: &BTreeMap<String, Vec<Prediction>>,
    config: &EnsembleConfig,
) -> Result<BTreeMap<String, String>, EnsembleError> {
    config.validate()?;
    let mut universe = BTreeSet::new();
    for v in &config.voters {
        universe.extend(lookup(prediction_sets, v)?.iter().map(|p| p.record_id.as_str()));
    }
    explanations_for(prediction_sets, config, universe.into_iter())
}

/// One prediction per record, sorted by record id.
pub fn combine(
    prediction_sets: &BTreeMap<String, Vec<Prediction>>,
    config: &EnsembleConfig,
) -> Result<Vec<Prediction>, EnsembleError> {
    config.validate()?;
    let mut indexed = Vec::with_capacity(config.voters.len());
    for v in &config.voters {
        indexed.push((v, index_set(v, lookup(prediction_sets, v)?)?));
    }

    let mut union: BTreeSet<&str> = BTreeSet::new();
    for (_, idx) in &indexed {
        union.extend(idx.keys().copied());
    }
    let not_shared: Vec<String> = union
        .iter()
        .filter(|id| indexed.iter().any(|(_, idx)| !idx.contains_key(*id)))
        .map(|id| id.to_string())
        .collect();
    if !not_shared.is_empty() {
        return Err(EnsembleError::CoverageMismatch(not_shared));
    }

    let votes: BTreeMap<String, Vec<(String, String)>> = union
        .iter()
        .map(|&id| {
            let ballots = indexed
                .iter()
                .map(|(v, idx)| (v.to_string(), idx[id].emotion.clone()))
                .collect();
            (id.to_string(), ballots)
        })
        .collect();
    let emotions = hard_vote(&votes, config)?;
    let mut explanations = explanations_for(prediction_sets, config, union.iter().copied())?;

    let model_id = config.output_model_id();
    Ok(emotions
        .into_iter()
        .map(|(id, emotion)| Prediction {
            explanation: explanations.remove(&id).unwrap_or_default(),
            record_id: id,
            model_id: model_id.clone(),
            emotion,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HybridOptions {
    pub name: String,
    pub tie_break: TieBreak,
    pub multiplicity: BTreeMap<String, u32>,
}

impl Default for HybridOptions {
    fn default() -> Self {
        Self {
            name: "hybrid".to_string(),
            tie_break: TieBreak::Priority,
            multiplicity: BTreeMap::new(),
        }
    }
}

/// Votes over every LM set (in key order) plus the LVLM set, which comes last
/// in priority and supplies all explanations.
pub fn hybrid_combine(
    lm_sets: &BTreeMap<String, Vec<Prediction>>,
    lvlm_id: &str,
    lvlm_set: &[Prediction],
    options: &HybridOptions,
) -> Result<Vec<Prediction>, EnsembleError> {
    if lm_sets.contains_key(lvlm_id) {
        return Err(EnsembleError::DuplicateVoter(lvlm_id.to_string()));
    }
    let mut voters: Vec<String> = lm_sets.keys().cloned().collect();
    voters.push(lvlm_id.to_string());
    let config = EnsembleConfig {
        name: options.name.clone(),
        voters,
        tie_break: options.tie_break,
        explanation_source: ExplanationSource::Model(lvlm_id.to_string()),
        multiplicity: options.multiplicity.clone(),
    };
    let mut sets = lm_sets.clone();
    sets.insert(lvlm_id.to_string(), lvlm_set.to_vec());
    combine(&sets, &config)
}
