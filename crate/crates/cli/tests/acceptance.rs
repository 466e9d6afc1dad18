//! Acceptance checks, one line per criterion. Run with
//! `cargo test -p dialemo-cli --test acceptance`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;
#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use dialemo::ensemble::{vote_record, EnsembleConfig, TieBreak};
use dialemo::metrics::{
    self, confusion_counts, corpus_bleu, evaluate, format_fixed, mean_scores, total_score,
    EvalOptions, Smoothing,
};
use dialemo::prompting::{parse_response, render_prompt, ParseMode, Prediction, Template};
use dialemo::report::{fold_table, ScoreSummary};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{oracles, synth};
use tempfile::tempdir;

type Check = fn() -> Result<(), String>;

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let elapsed = start.elapsed();
    if elapsed < limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:?}, limit {limit:?}"))
    }
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ac1_total_score() -> Result<(), String> {
    let t = total_score(52.36, 0.26).map_err(|e| e.to_string())?;
    ensure!((t - 26.31).abs() < 1e-9, "total(52.36, 0.26) = {t}");
    ensure!(format_fixed(t, 2) == "26.31", "displayed {}", format_fixed(t, 2));
    let t = total_score(52.361, 0.2641).map_err(|e| e.to_string())?;
    ensure!((t - 26.31255).abs() < 1e-9, "total(52.361, 0.2641) = {t}");
    ensure!(format_fixed(t, 2) == "26.31", "displayed {}", format_fixed(t, 2));
    ensure!(total_score(101.0, 0.5).is_err(), "F1 above 100 accepted");
    ensure!(total_score(50.0, 1.5).is_err(), "BLEU above 1 accepted");
    Ok(())
}

fn ac2_fold_means() -> Result<(), String> {
    let folds = [
        (51.058, 0.2416),
        (51.536, 0.2394),
        (51.869, 0.2390),
        (51.942, 0.2429),
        (52.368, 0.2402),
    ];
    let (f, b) = mean_scores(&folds).map_err(|e| e.to_string())?;
    ensure!((f - 51.7546).abs() < 1e-9, "mean F1 {f}");
    ensure!((b - 0.24062).abs() < 1e-12, "mean BLEU {b}");
    let rows: Vec<_> = folds
        .iter()
        .enumerate()
        .map(|(i, &(f, b))| (format!("Fold {}", i + 1), ScoreSummary::new(f, b)))
        .collect();
    let table = fold_table(&rows).map_err(|e| e.to_string())?;
    let avg = table.rows.last().unwrap();
    ensure!(avg == &["Average", "51.755", "0.2406"], "average row {avg:?}");
    Ok(())
}

const VOCAB: &[&str] = &["a", "b", "c", "d", "e", "f"];

fn tokens(rng: &mut impl Rng) -> Vec<String> {
    let n = rng.gen_range(0..=12);
    (0..n).map(|_| VOCAB.choose(rng).unwrap().to_string()).collect()
}

fn ac3_bleu_oracle() -> Result<(), String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xAC3);
    let mut nonzero = 0;
    for trial in 0..300 {
        let n = if trial == 0 { 250 } else { rng.gen_range(1..=8) };
        let pairs: Vec<(Vec<String>, Vec<Vec<String>>)> = (0..n)
            .map(|_| {
                let refs = rng.gen_range(1..=3);
                (tokens(&mut rng), (0..refs).map(|_| tokens(&mut rng)).collect())
            })
            .collect();
        let text: Vec<(String, Vec<String>)> = pairs
            .iter()
            .map(|(h, rs)| (h.join(" "), rs.iter().map(|r| r.join(" ")).collect()))
            .collect();
        for (smoothing, add_one) in [(Smoothing::None, false), (Smoothing::AddOne, true)] {
            let got = corpus_bleu(&text, 4, smoothing).map_err(|e| e.to_string())?.bleu;
            let want = oracles::bleu(&pairs, 4, add_one);
            ensure!(
                (got - want).abs() <= 1e-9,
                "trial {trial} {smoothing:?}: {got} vs oracle {want}"
            );
            nonzero += usize::from(got > 0.0);
        }
    }
    ensure!(nonzero > 100, "only {nonzero} non-degenerate cases");
    within(Duration::from_secs(5), start)
}

fn library_f1(gold: &[usize], pred: &[usize]) -> Result<f64, String> {
    let name = |v: &[usize]| v.iter().map(|i| format!("L{i}")).collect::<Vec<_>>();
    let counts = confusion_counts(&name(gold), &name(pred)).map_err(|e| e.to_string())?;
    metrics::weighted_f1(&counts).map_err(|e| e.to_string())
}

fn ac4_weighted_f1_oracle() -> Result<(), String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xAC4);
    let mut cases: Vec<(Vec<usize>, Vec<usize>, usize)> = vec![
        (vec![0, 0, 1, 2, 2, 1], vec![0, 3, 1, 0, 1, 1], 4),
        (vec![0, 0, 0], vec![1, 1, 1], 2),
        (vec![0, 1, 2], vec![0, 1, 2], 3),
        (vec![1], vec![0], 2),
    ];
    for _ in 0..10_000 {
        let k = rng.gen_range(1..=4);
        let len = rng.gen_range(1..=50);
        let gold = (0..len).map(|_| rng.gen_range(0..k)).collect();
        let pred = (0..len).map(|_| rng.gen_range(0..k)).collect();
        cases.push((gold, pred, k));
    }
    for (gold, pred, k) in &cases {
        let got = library_f1(gold, pred)?;
        let want = oracles::weighted_f1(gold, pred, *k);
        ensure!((got - want).abs() <= 1e-9, "{gold:?} {pred:?}: {got} vs {want}");
        ensure!((0.0..=100.0).contains(&got), "out of range {got}");
    }
    within(Duration::from_secs(5), start)
}

fn ac5_round_trip() -> Result<(), String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xAC5);
    let gold = synth::records(&mut rng, 1000);
    for template in [Template::Lm, Template::Lvlm] {
        let preds = gold
            .iter()
            .map(|r| {
                let text = render_prompt(r, template).response_text;
                let (emotion, explanation) =
                    parse_response(&text, &r.emotion_candidates, template, ParseMode::Strict)
                        .map_err(|e| format!("{template} {}: {e}", r.id))?;
                Ok(Prediction {
                    record_id: r.id.clone(),
                    model_id: "echo".into(),
                    emotion,
                    explanation,
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        let report = evaluate(&gold, &preds, EvalOptions::default()).map_err(|e| e.to_string())?;
        ensure!(report.weighted_f1 == 100.0, "{template}: F1 {}", report.weighted_f1);
        ensure!(report.bleu == 1.0, "{template}: BLEU {}", report.bleu);
    }
    within(Duration::from_secs(10), start)
}

fn expected_vote(votes: &[usize], n_emotions: usize) -> (Vec<usize>, usize) {
    let mut tally = vec![0; n_emotions];
    for &v in votes {
        tally[v] += 1;
    }
    let top = *tally.iter().max().unwrap();
    let tied: Vec<usize> = (0..n_emotions).filter(|&e| tally[e] == top).collect();
    let winner = *votes.iter().find(|v| tied.contains(v)).unwrap();
    (tied, winner)
}

fn ac6_exhaustive_voting() -> Result<(), String> {
    let start = Instant::now();
    const EMOS: [&str; 3] = ["anger", "awe", "fear"];
    let mut cases = 0;
    for n_voters in 1..=5 {
        let voters: Vec<String> = (0..n_voters).map(|i| format!("m{i}")).collect();
        let priority = EnsembleConfig::new("x", voters.clone());
        let mut strict = priority.clone();
        strict.tie_break = TieBreak::Error;
        for n_emotions in 1usize..=3 {
            for index in 0..n_emotions.pow(n_voters as u32) {
                let mut c = index;
                let votes: Vec<usize> = (0..n_voters)
                    .map(|_| {
                        let d = c % n_emotions;
                        c /= n_emotions;
                        d
                    })
                    .collect();
                let pairs: Vec<(String, String)> = votes
                    .iter()
                    .enumerate()
                    .map(|(i, &e)| (voters[i].clone(), EMOS[e].to_string()))
                    .collect();
                let (tied, winner) = expected_vote(&votes, n_emotions);
                let got = vote_record("r", &pairs, &priority).map_err(|e| e.to_string())?;
                ensure!(got == EMOS[winner], "{votes:?}: got {got}, want {}", EMOS[winner]);
                let strict_result = vote_record("r", &pairs, &strict);
                ensure!(
                    strict_result.is_err() == (tied.len() > 1),
                    "{votes:?}: error tie-break gave {strict_result:?}"
                );
                if n_emotions == 2 && n_voters % 2 == 1 {
                    ensure!(tied.len() == 1, "{votes:?}: odd voters tied");
                }
                // shuffling the vote list must not matter
                let mut rev = pairs.clone();
                rev.reverse();
                let again = vote_record("r", &rev, &priority).map_err(|e| e.to_string())?;
                ensure!(again == got, "{votes:?}: order-dependent result");
                cases += 1;
            }
        }
    }
    let want: usize = (1..=5u32).map(|n| 1 + 2usize.pow(n) + 3usize.pow(n)).sum();
    ensure!(cases == want, "{cases} cases, want {want}");
    within(Duration::from_secs(1), start)
}

fn run_pipeline(dir: &std::path::Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let gold = fixture("gold.jsonl");
    let g = p(&gold);
    let run = |args: Vec<String>| -> Result<Vec<u8>, String> {
        let o = dialemo(&args);
        if code(&o) != 0 {
            return Err(format!("{args:?}: exit {} {}", code(&o), stderr(&o)));
        }
        Ok(o.stdout)
    };
    let path = |name: &str| p(&dir.join(name)).to_string();
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let mut out = BTreeMap::new();

    out.insert("split.stdout".into(), run(s(&["split", "--input", g, "--k", "3", "--seed", "42", "--out", &path("folds.json")]))?);
    out.insert(
        "stratified.stdout".into(),
        run(s(&["split", "--input", g, "--k", "3", "--seed", "42", "--stratify", "--out", &path("strat.json")]))?,
    );
    out.insert("render.stdout".into(), run(s(&["render", "--input", g, "--template", "lm", "--out", &path("lm.jsonl")]))?);

    let raw: String = fs::read_to_string(dir.join("lm.jsonl"))
        .map_err(|e| e.to_string())?
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            serde_json::json!({"id": v["id"], "model": "echo", "text": v["response"]}).to_string() + "\n"
        })
        .collect();
    fs::write(dir.join("raw.jsonl"), raw).map_err(|e| e.to_string())?;
    out.insert(
        "parse.stdout".into(),
        run(s(&["parse", "--input", &path("raw.jsonl"), "--dataset", g, "--out", &path("parsed.jsonl")]))?,
    );

    let mut vote = s(&["vote", "--predictions"]);
    vote.extend((1..=5).map(|i| p(&fixture(&format!("fold{i}.jsonl"))).to_string()));
    vote.extend(s(&["--ensemble", p(&fixture("lm5.json")), "--out", &path("lm5.jsonl")]));
    out.insert("vote.stdout".into(), run(vote)?);
    out.insert(
        "hybrid.stdout".into(),
        run(s(&[
            "vote", "--predictions", &path("lm5.jsonl"), p(&fixture("lvlm.jsonl")),
            "--preset", "hybrid-paper", "--lm-model", "ensemble:lm5", "--lvlm-model", "lvlm",
            "--out", &path("hybrid.jsonl"),
        ]))?,
    );
    out.insert(
        "score.stdout".into(),
        run(s(&["score", "--dataset", g, "--predictions", &path("hybrid.jsonl"), "--out", &path("bundle"), "--recipe", "lvlm"]))?,
    );
    out.insert(
        "report.stdout".into(),
        run(s(&["report", "--kind", "comparison", "--inputs", &path("bundle/report.json")]))?,
    );

    for f in [
        "folds.json", "strat.json", "lm.jsonl", "parsed.jsonl", "lm5.jsonl", "hybrid.jsonl",
        "bundle/report.json", "bundle/tables/score.md", "bundle/tables/score.csv",
    ] {
        out.insert(f.into(), fs::read(dir.join(f)).map_err(|e| format!("{f}: {e}"))?);
    }
    Ok(out)
}

fn ac7_determinism() -> Result<(), String> {
    let a = tempdir().map_err(|e| e.to_string())?;
    let b = tempdir().map_err(|e| e.to_string())?;
    let first = run_pipeline(a.path())?;
    let second = run_pipeline(b.path())?;
    for (name, bytes) in &first {
        ensure!(second.get(name) == Some(bytes), "{name} differs between runs");
    }
    let golden = |f: &str| fs::read(fixture(f)).map_err(|e| e.to_string());
    ensure!(first["folds.json"] == golden("folds_k3_seed42.json")?, "split differs from golden");
    ensure!(
        first["strat.json"] == golden("folds_k3_seed42_stratified.json")?,
        "stratified split differs from golden"
    );
    ensure!(first["lm5.jsonl"] == golden("expected_lm5.jsonl")?, "vote differs from golden");
    ensure!(first["hybrid.jsonl"] == golden("expected_hybrid.jsonl")?, "hybrid differs from golden");
    Ok(())
}

fn ac8_fixture_report() -> Result<(), String> {
    let dir = tempdir().map_err(|e| e.to_string())?;
    let o = dialemo([
        "score", "--dataset", p(&fixture("gold.jsonl")), "--predictions",
        p(&fixture("predictions.jsonl")), "--out", p(&dir.path().join("b")),
    ]);
    ensure!(code(&o) == 0, "exit {}: {}", code(&o), stderr(&o));
    ensure!(stdout(&o) == "60.000 | 0.6903 | 30.35\n", "stdout {:?}", stdout(&o));
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("b/report.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let r = &json["reports"][0]["report"];
    let f1 = r["weighted_f1"].as_f64().unwrap_or(f64::NAN);
    let bleu = r["bleu"].as_f64().unwrap_or(f64::NAN);
    ensure!((f1 - 60.0).abs() < 1e-9, "F1 {f1}");
    ensure!((bleu - 0.6903013717629753).abs() < 1e-12, "BLEU {bleu}");
    let readme = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md"))
        .map_err(|e| format!("README: {e}"))?;
    ensure!(
        readme.contains("## Reproducibility limits") && readme.contains("hidden test split"),
        "README lacks the reproducibility disclosure"
    );
    Ok(())
}

fn main() -> ExitCode {
    let checks: [(&str, &str, Check); 8] = [
        ("AC1", "total score from F1 and BLEU", ac1_total_score),
        ("AC2", "fold means and average row", ac2_fold_means),
        ("AC3", "corpus BLEU matches brute-force oracle", ac3_bleu_oracle),
        ("AC4", "weighted F1 matches confusion-matrix oracle", ac4_weighted_f1_oracle),
        ("AC5", "render/parse round trip scores perfectly", ac5_round_trip),
        ("AC6", "exhaustive hard voting", ac6_exhaustive_voting),
        ("AC7", "CLI outputs are deterministic and match goldens", ac7_determinism),
        ("AC8", "fixture golden report and reproducibility disclosure", ac8_fixture_report),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, what, check) in checks {
        let result = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| Err(format!("panicked: {:?}", e.downcast_ref::<String>().map(String::as_str).or(e.downcast_ref::<&str>().copied()))));
        match result {
            Ok(()) => println!("{id} PASS {what}"),
            Err(why) => {
                failed += 1;
                println!("{id} FAIL {what}: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
