//! Weighted F1, corpus BLEU and the leaderboard total score.
//!
//! BLEU is corpus-level: clipped and total n-gram counts are pooled over all
//! pairs before the precisions are formed, and the brevity penalty uses the
//! pooled hypothesis length against the pooled closest-reference length.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::DialogRecord;
use crate::prompting::Prediction;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("n-gram order must be at least 1, got {0}")]
    BadOrder(usize),
    #[error("BLEU needs at least one hypothesis/reference pair")]
    NoPairs,
    #[error("pair {0} has no references")]
    NoReferences(usize),
    #[error("gold has {gold} labels but predictions have {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("no gold labels to score")]
    Empty,
    #[error("total support is zero")]
    ZeroSupport,
    #[error("{name} = {value} outside [{lo}, {hi}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("missing predictions for {} record(s): {}", .0.len(), .0.join(", "))]
    MissingPredictions(Vec<String>),
    #[error("duplicate prediction for record `{0}`")]
    DuplicatePrediction(String),
    #[error("prediction for unknown record `{0}`")]
    UnknownRecord(String),
    #[error("unknown smoothing `{0}` (expected none or add_one)")]
    UnknownSmoothing(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    #[default]
    None,
    /// `(clipped + 1) / (total + 1)` for orders two and up.
    AddOne,
}

impl FromStr for Smoothing {
    type Err = MetricsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "add_one" | "add-one" => Ok(Self::AddOne),
            _ => Err(MetricsError::UnknownSmoothing(s.to_string())),
        }
    }
}

/// Lower-cases, splits on whitespace and peels ASCII punctuation off both
/// ends of every word, one token per punctuation character.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.to_lowercase().split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        let lead = chars.iter().take_while(|c| c.is_ascii_punctuation()).count();
        let trail = chars[lead..]
            .iter()
            .rev()
            .take_while(|c| c.is_ascii_punctuation())
            .count();
        let core_end = chars.len() - trail;
        tokens.extend(chars[..lead].iter().map(|c| c.to_string()));
        if lead < core_end {
            tokens.push(chars[lead..core_end].iter().collect());
        }
        tokens.extend(chars[core_end..].iter().map(|c| c.to_string()));
    }
    tokens
}

pub fn ngram_counts<T: Eq + std::hash::Hash>(
    tokens: &[T],
    n: usize,
) -> Result<HashMap<&[T], u64>, MetricsError> {
    if n == 0 {
        return Err(MetricsError::BadOrder(n));
    }
    let mut counts = HashMap::new();
    for window in tokens.windows(n) {
        *counts.entry(window).or_insert(0) += 1;
    }
    Ok(counts)
}

/// Returns `(clipped, total)` for order `n`.
pub fn modified_precision<T: Eq + std::hash::Hash>(
    hypothesis: &[T],
    references: &[Vec<T>],
    n: usize,
) -> Result<(u64, u64), MetricsError> {
    let hyp = ngram_counts(hypothesis, n)?;
    let total: u64 = hyp.values().sum();
    if total == 0 {
        return Ok((0, 0));
    }
    let mut max_ref: HashMap<&[T], u64> = HashMap::new();
    for r in references {
        for (gram, count) in ngram_counts(r, n)? {
            if hyp.contains_key(gram) {
                let slot = max_ref.entry(gram).or_insert(0);
                *slot = (*slot).max(count);
            }
        }
    }
    let clipped = hyp
        .iter()
        .map(|(gram, &count)| count.min(max_ref.get(gram).copied().unwrap_or(0)))
        .sum();
    Ok((clipped, total))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderCounts {
    pub n: usize,
    pub clipped: u64,
    pub total: u64,
}

/// Sufficient statistics for corpus BLEU. Adding two of these is how
/// per-pair counts are pooled, in any order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BleuStats {
    pub orders: Vec<OrderCounts>,
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuStats {
    pub fn zero(max_n: usize) -> Self {
        Self {
            orders: (1..=max_n)
                .map(|n| OrderCounts {
                    n,
                    clipped: 0,
                    total: 0,
                })
                .collect(),
            hyp_len: 0,
            ref_len: 0,
        }
    }

    pub fn for_pair(
        hypothesis: &[String],
        references: &[Vec<String>],
        max_n: usize,
    ) -> Result<Self, MetricsError> {
        let mut stats = Self::zero(max_n);
        for slot in &mut stats.orders {
            let (clipped, total) = modified_precision(hypothesis, references, slot.n)?;
            slot.clipped = clipped;
            slot.total = total;
        }
        stats.hyp_len = hypothesis.len() as u64;
        stats.ref_len = closest_ref_len(hypothesis.len(), references) as u64;
        Ok(stats)
    }

    pub fn add(&mut self, other: &Self) {
        for (a, b) in self.orders.iter_mut().zip(&other.orders) {
            a.clipped += b.clipped;
            a.total += b.total;
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    pub fn score(&self, smoothing: Smoothing) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        let max_n = self.orders.len() as f64;
        let mut log_sum = 0.0;
        for o in &self.orders {
            assert!(o.clipped <= o.total, "clipped exceeds total at order {}", o.n);
            let (num, den) = match smoothing {
                Smoothing::AddOne if o.n >= 2 => (o.clipped + 1, o.total + 1),
                _ => (o.clipped, o.total),
            };
            if num == 0 || den == 0 {
                return 0.0;
            }
            log_sum += (num as f64 / den as f64).ln() / max_n;
        }
        self.brevity_penalty() * log_sum.exp()
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len > self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        }
    }
}

/// Reference length closest to `hyp_len`; ties go to the shorter reference.
fn closest_ref_len(hyp_len: usize, references: &[Vec<String>]) -> usize {
    references
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| (len.abs_diff(hyp_len), len))
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuDetails {
    pub max_n: usize,
    pub smoothing: Smoothing,
    pub orders: Vec<OrderCounts>,
    pub hyp_len: u64,
    pub ref_len: u64,
    pub brevity_penalty: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuScore {
    pub bleu: f64,
    pub details: BleuDetails,
}

/// Corpus BLEU in `[0, 1]` over `(hypothesis, references)` pairs.
pub fn corpus_bleu<H, R>(
    pairs: &[(H, Vec<R>)],
    max_n: usize,
    smoothing: Smoothing,
) -> Result<BleuScore, MetricsError>
where
    H: AsRef<str>,
    R: AsRef<str>,
{
    if max_n == 0 {
        return Err(MetricsError::BadOrder(0));
    }
    if pairs.is_empty() {
        return Err(MetricsError::NoPairs);
    }
    let mut pooled = BleuStats::zero(max_n);
    for (i, (hyp, refs)) in pairs.iter().enumerate() {
        if refs.is_empty() {
            return Err(MetricsError::NoReferences(i));
        }
        let hyp = tokenize(hyp.as_ref());
        let refs: Vec<Vec<String>> = refs.iter().map(|r| tokenize(r.as_ref())).collect();
        pooled.add(&BleuStats::for_pair(&hyp, &refs, max_n)?);
    }
    Ok(BleuScore {
        bleu: pooled.score(smoothing),
        details: BleuDetails {
            max_n,
            smoothing,
            brevity_penalty: pooled.brevity_penalty(),
            orders: pooled.orders,
            hyp_len: pooled.hyp_len,
            ref_len: pooled.ref_len,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub label: String,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub support: u64,
}

impl ClassCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Zero whenever precision or recall is undefined or both are zero.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// One-vs-rest counts for every label seen in either list, sorted by label.
pub fn confusion_counts<S: AsRef<str>>(
    gold: &[S],
    pred: &[S],
) -> Result<Vec<ClassCounts>, MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut by_label: BTreeMap<&str, ClassCounts> = BTreeMap::new();
    fn slot<'a, 'm>(
        map: &'m mut BTreeMap<&'a str, ClassCounts>,
        label: &'a str,
    ) -> &'m mut ClassCounts {
        map.entry(label).or_insert_with(|| ClassCounts {
            label: label.to_string(),
            tp: 0,
            fp: 0,
            fn_: 0,
            support: 0,
        })
    }
    for (g, p) in gold.iter().zip(pred) {
        let (g, p) = (g.as_ref(), p.as_ref());
        let gold_slot = slot(&mut by_label, g);
        gold_slot.support += 1;
        if g == p {
            gold_slot.tp += 1;
        } else {
            gold_slot.fn_ += 1;
            slot(&mut by_label, p).fp += 1;
        }
    }
    Ok(by_label.into_values().collect())
}

/// Support-weighted mean of per-class F1, as a percentage.
pub fn weighted_f1(counts: &[ClassCounts]) -> Result<f64, MetricsError> {
    let support: u64 = counts.iter().map(|c| c.support).sum();
    if support == 0 {
        return Err(MetricsError::ZeroSupport);
    }
    let weighted: f64 = counts
        .iter()
        .map(|c| c.support as f64 * c.f1())
        .sum::<f64>();
    Ok(100.0 * weighted / support as f64)
}

fn check_range(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<(), MetricsError> {
    if value.is_finite() && (lo..=hi).contains(&value) {
        Ok(())
    } else {
        Err(MetricsError::OutOfRange { name, value, lo, hi })
    }
}

/// Leaderboard total: the plain mean of weighted F1 (percent) and BLEU
/// (unit interval). Reproduces the published 26.31 from 52.36 and 0.26.
pub fn total_score(weighted_f1: f64, bleu: f64) -> Result<f64, MetricsError> {
    check_range("weighted_f1", weighted_f1, 0.0, 100.0)?;
    check_range("bleu", bleu, 0.0, 1.0)?;
    Ok((weighted_f1 + bleu) / 2.0)
}

pub fn mean_scores(per_fold: &[(f64, f64)]) -> Result<(f64, f64), MetricsError> {
    if per_fold.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = per_fold.len() as f64;
    let (f1, bleu) = per_fold
        .iter()
        .fold((0.0, 0.0), |(a, b), &(f, u)| (a + f, b + u));
    Ok((f1 / n, bleu / n))
}

/// Rounds half away from zero at `decimals` places. A few-ulp nudge keeps
/// values like `1.0005` (stored as `1.000499...`) rounding up.
pub fn round_half_away(value: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let scaled = value * scale;
    let nudged = scaled + scaled.signum() * scaled.abs() * f64::EPSILON * 4.0;
    nudged.round() / scale
}

pub fn format_fixed(value: f64, decimals: u32) -> String {
    format!(
        "{:.*}",
        decimals as usize,
        round_half_away(value, decimals)
    )
}

pub const F1_DECIMALS: u32 = 3;
pub const BLEU_DECIMALS: u32 = 4;
pub const TOTAL_DECIMALS: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    #[serde(flatten)]
    pub counts: ClassCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<ClassCounts> for ClassScore {
    fn from(counts: ClassCounts) -> Self {
        Self {
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
            counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n_records: usize,
    pub weighted_f1: f64,
    pub bleu: f64,
    pub total: f64,
    pub per_class: Vec<ClassScore>,
    pub bleu_details: BleuDetails,
}

impl MetricReport {
    /// `"Weighted F1 | BLEU | Total"` at display precision.
    pub fn summary_line(&self) -> String {
        format!(
            "{} | {} | {}",
            format_fixed(self.weighted_f1, F1_DECIMALS),
            format_fixed(self.bleu, BLEU_DECIMALS),
            format_fixed(self.total, TOTAL_DECIMALS)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub max_n: usize,
    pub smoothing: Smoothing,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            max_n: 4,
            smoothing: Smoothing::None,
        }
    }
}

/// Scores predictions against gold records, aligning by record id.
pub fn evaluate(
    gold: &[DialogRecord],
    predictions: &[Prediction],
    options: EvalOptions,
) -> Result<MetricReport, MetricsError> {
    let gold_ids: HashSet<&str> = gold.iter().map(|r| r.id.as_str()).collect();
    let mut by_id: HashMap<&str, &Prediction> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if !gold_ids.contains(p.record_id.as_str()) {
            return Err(MetricsError::UnknownRecord(p.record_id.clone()));
        }
        if by_id.insert(&p.record_id, p).is_some() {
            return Err(MetricsError::DuplicatePrediction(p.record_id.clone()));
        }
    }
    let missing: Vec<String> = gold
        .iter()
        .filter(|r| !by_id.contains_key(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(MetricsError::MissingPredictions(missing));
    }

    let aligned: Vec<(&DialogRecord, &Prediction)> =
        gold.iter().map(|r| (r, by_id[r.id.as_str()])).collect();
    let gold_labels: Vec<&str> = aligned.iter().map(|(r, _)| r.label_emotion.as_str()).collect();
    let pred_labels: Vec<&str> = aligned.iter().map(|(_, p)| p.emotion.as_str()).collect();
    let counts = confusion_counts(&gold_labels, &pred_labels)?;
    let f1 = weighted_f1(&counts)?;

    let pairs: Vec<(&str, Vec<&str>)> = aligned
        .iter()
        .map(|(r, p)| (p.explanation.as_str(), vec![r.explanation.as_str()]))
        .collect();
    let bleu = corpus_bleu(&pairs, options.max_n, options.smoothing)?;

    Ok(MetricReport {
        n_records: gold.len(),
        weighted_f1: f1,
        bleu: bleu.bleu,
        total: total_score(f1, bleu.bleu)?,
        per_class: counts.into_iter().map(ClassScore::from).collect(),
        bleu_details: bleu.details,
    })
}
