//! Brute-force reference implementations used only by tests.
//!
//! Each one works directly from the metric's definition and shares no code
//! with the library: no hash maps, no pooled-statistics structs, and
//! precisions combined as a product rather than a log-sum.

#![allow(dead_code)]

fn occurrences(seq: &[String], gram: &[String]) -> u64 {
    if gram.len() > seq.len() {
        return 0;
    }
    (0..=seq.len() - gram.len())
        .filter(|&i| &seq[i..i + gram.len()] == gram)
        .count() as u64
}

/// Corpus BLEU over pre-tokenized `(hypothesis, references)` pairs.
pub fn bleu(pairs: &[(Vec<String>, Vec<Vec<String>>)], max_n: usize, add_one: bool) -> f64 {
    let mut clipped = vec![0u64; max_n + 1];
    let mut total = vec![0u64; max_n + 1];
    let mut c = 0u64;
    let mut r = 0u64;
    for (hyp, refs) in pairs {
        c += hyp.len() as u64;
        let mut best = refs[0].len();
        for reference in refs {
            let d_new = (reference.len() as i64 - hyp.len() as i64).abs();
            let d_best = (best as i64 - hyp.len() as i64).abs();
            if d_new < d_best || (d_new == d_best && reference.len() < best) {
                best = reference.len();
            }
        }
        r += best as u64;
        for n in 1..=max_n {
            if hyp.len() < n {
                continue;
            }
            for i in 0..=hyp.len() - n {
                total[n] += 1;
                let gram = &hyp[i..i + n];
                let first = (0..i).all(|j| &hyp[j..j + n] != gram);
                if first {
                    let in_hyp = occurrences(hyp, gram);
                    let in_ref = refs.iter().map(|x| occurrences(x, gram)).max().unwrap_or(0);
                    clipped[n] += in_hyp.min(in_ref);
                }
            }
        }
    }
    if c == 0 {
        return 0.0;
    }
    let mut product = 1.0f64;
    for n in 1..=max_n {
        let (num, den) = if add_one && n >= 2 {
            (clipped[n] + 1, total[n] + 1)
        } else {
            (clipped[n], total[n])
        };
        if num == 0 || den == 0 {
            return 0.0;
        }
        product *= num as f64 / den as f64;
    }
    let bp = if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    bp * product.powf(1.0 / max_n as f64)
}

/// Weighted F1 in percent from a full confusion matrix over label indices.
#[allow(clippy::needless_range_loop)]
pub fn weighted_f1(gold: &[usize], pred: &[usize], n_labels: usize) -> f64 {
    let mut m = vec![vec![0u64; n_labels]; n_labels];
    for (&g, &p) in gold.iter().zip(pred) {
        m[g][p] += 1;
    }
    let n = gold.len() as f64;
    let mut acc = 0.0;
    for k in 0..n_labels {
        let tp = m[k][k] as f64;
        let row: u64 = m[k].iter().sum();
        let col: u64 = (0..n_labels).map(|g| m[g][k]).sum();
        if row == 0 {
            continue;
        }
        let precision = if col == 0 { 0.0 } else { tp / col as f64 };
        let recall = tp / row as f64;
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        acc += (row as f64 / n) * f1;
    }
    100.0 * acc
}
