//! Random synthetic records for round-trip and pipeline tests.

#![allow(dead_code)]

use dialemo::dataset::{DialogRecord, DialogTurn, Speaker};
use rand::seq::SliceRandom;
use rand::Rng;

pub const EMOTIONS: &[&str] = &[
    "amusement",
    "anger",
    "awe",
    "contentment",
    "disgust",
    "excitement",
    "fear",
    "sadness",
    "something else",
];

pub const WORDS: &[&str] = &[
    "the", "waves", "look", "huge", "and", "dark", "colors", "are", "warm", "a", "lonely",
    "figure", "in", "fog", "soft", "light", "over", "hills", "café", "naïve", "it's", "sky,",
    "vast.", "(quiet)", "really!", "because", "Choice:", "Explanation:",
];

pub fn words<R: Rng>(rng: &mut R, min: usize, max: usize) -> String {
    let n = rng.gen_range(min..=max);
    (0..n)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Explanations deliberately include "because", "Choice:" and
/// "Explanation:": the parsers split on the first marker, which always
/// precedes the explanation in a rendered response.
pub fn explanation<R: Rng>(rng: &mut R) -> String {
    words(rng, 4, 16)
}

pub fn record<R: Rng>(rng: &mut R, id: usize) -> DialogRecord {
    let k = rng.gen_range(2..=4);
    let candidates: Vec<String> = EMOTIONS
        .choose_multiple(rng, k)
        .map(|s| s.to_string())
        .collect();
    let label = candidates.choose(rng).unwrap().clone();
    let turns = rng.gen_range(1..=6);
    let dialog = (0..turns)
        .map(|t| DialogTurn {
            speaker: if t % 2 == 0 {
                Speaker::Questioner
            } else {
                Speaker::Answerer
            },
            text: words(rng, 1, 8),
        })
        .collect();
    DialogRecord {
        id: format!("rec-{id:05}"),
        image_ref: format!("images/{id}.jpg"),
        caption: words(rng, 0, 10),
        dialog,
        emotion_candidates: candidates,
        label_emotion: label,
        explanation: explanation(rng),
        extra: Default::default(),
    }
}

pub fn records<R: Rng>(rng: &mut R, n: usize) -> Vec<DialogRecord> {
    (0..n).map(|i| record(rng, i)).collect()
}

/// A minimal valid record with the given label.
pub fn labeled(id: usize, candidates: &[&str], label: &str) -> DialogRecord {
    DialogRecord {
        id: format!("rec-{id:05}"),
        image_ref: format!("images/{id}.jpg"),
        caption: "a painting".to_string(),
        dialog: vec![DialogTurn {
            speaker: Speaker::Questioner,
            text: "what is shown?".to_string(),
        }],
        emotion_candidates: candidates.iter().map(|s| s.to_string()).collect(),
        label_emotion: label.to_string(),
        explanation: "it is striking".to_string(),
        extra: Default::default(),
    }
}
