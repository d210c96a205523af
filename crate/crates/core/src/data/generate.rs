//! Synthetic entailment datasets.
//!
//! Adjective-noun: with a vocabulary of `N` words, `a1..a{N/2}` are adjectives
//! and `n{N/2+1}..nN` are nouns. `"n_i"` entails `"a_j n_i"` and does not
//! entail `"a_j n_k"` for `k != i`.
//!
//! Numbers: two 4-digit numbers, each written as four single-digit tokens;
//! the pair is an entailment iff the first is smaller.
//!
//! Each split is exactly balanced (the odd sample, if any, goes to a seeded
//! coin) and no (premise, hypothesis) pair repeats within one generator run.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetSplit, Label, RawSample, RawSentence};
use crate::error::{Error, Result};

/// Attempts at rejection sampling before falling back to enumeration.
const MAX_DRAWS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdjNounConfig {
    pub vocab_size: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for AdjNounConfig {
    fn default() -> Self {
        Self {
            vocab_size: 1000,
            train: 2000,
            validation: 20000,
            test: 20000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NumbersConfig {
    pub lo: u32,
    pub hi: u32,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for NumbersConfig {
    fn default() -> Self {
        Self {
            lo: 1000,
            hi: 9999,
            train: 8000,
            validation: 1000,
            test: 1000,
            seed: 0,
        }
    }
}

/// Exactly balanced, shuffled label sequence.
fn balanced_labels<R: Rng>(n: usize, rng: &mut R) -> Vec<bool> {
    let mut positives = n / 2;
    if n % 2 == 1 && rng.gen_bool(0.5) {
        positives += 1;
    }
    let mut labels: Vec<bool> = (0..n).map(|i| i < positives).collect();
    labels.shuffle(rng);
    labels
}

fn count_labels(sizes: &[usize], rng: &mut ChaCha8Rng) -> Vec<Vec<bool>> {
    sizes.iter().map(|&n| balanced_labels(n, rng)).collect()
}

fn adjective(j: usize) -> String {
    format!("a{j}")
}

fn noun(i: usize) -> String {
    format!("n{i}")
}

fn adjnoun_sample(j: usize, premise_noun: usize, hyp_noun: usize) -> RawSample {
    RawSample {
        premise: RawSentence::Tokens(vec![noun(premise_noun)]),
        hypothesis: RawSentence::Tokens(vec![adjective(j), noun(hyp_noun)]),
        label: if premise_noun == hyp_noun {
            Label::Entailment
        } else {
            Label::Contradiction
        },
    }
}

pub fn gen_adjnoun(cfg: &AdjNounConfig) -> Result<DatasetSplit> {
    let n = cfg.vocab_size;
    if n < 4 || !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "vocabulary size must be even and at least 4, got {n}"
        )));
    }
    let half = n / 2;
    if cfg.train < half {
        return Err(Error::InvalidArgument(format!(
            "training set of {} cannot cover {half} adjectives",
            cfg.train
        )));
    }
    let pos_capacity = half * half;
    let neg_capacity = half * half * (half - 1);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let labels = count_labels(&[cfg.train, cfg.validation, cfg.test], &mut rng);
    let pos_needed: usize = labels.iter().flatten().filter(|&&l| l).count();
    let neg_needed: usize = labels.iter().flatten().filter(|&&l| !l).count();
    if pos_needed > pos_capacity || neg_needed > neg_capacity {
        return Err(Error::InvalidArgument(format!(
            "requested {pos_needed} positive / {neg_needed} negative pairs but only \
             {pos_capacity} / {neg_capacity} exist for vocabulary size {n}"
        )));
    }

    let adjectives: Vec<usize> = (1..=half).collect();
    let nouns: Vec<usize> = (half + 1..=n).collect();
    let mut used: HashSet<(usize, usize, usize)> = HashSet::new();

    // Coverage: the first `half` training samples use every adjective once and
    // every noun once as premise.
    let mut covering_nouns = nouns.clone();
    covering_nouns.shuffle(&mut rng);
    let mut splits: Vec<Vec<RawSample>> = Vec::with_capacity(3);
    for (split_idx, split_labels) in labels.iter().enumerate() {
        let mut samples = Vec::with_capacity(split_labels.len());
        for (k, &positive) in split_labels.iter().enumerate() {
            let fixed = (split_idx == 0 && k < half).then(|| (adjectives[k], covering_nouns[k]));
            let triple = draw_adjnoun(&mut rng, &mut used, &adjectives, &nouns, positive, fixed)?;
            samples.push(adjnoun_sample(triple.0, triple.1, triple.2));
        }
        splits.push(samples);
    }
    splits[0].shuffle(&mut rng);
    let test = splits.pop().expect("three splits");
    let validation = splits.pop().expect("three splits");
    let train = splits.pop().expect("three splits");
    Ok(DatasetSplit::new(train, validation, test))
}

/// Draws an unused (adjective, premise noun, hypothesis noun) triple.
fn draw_adjnoun(
    rng: &mut ChaCha8Rng,
    used: &mut HashSet<(usize, usize, usize)>,
    adjectives: &[usize],
    nouns: &[usize],
    positive: bool,
    fixed: Option<(usize, usize)>,
) -> Result<(usize, usize, usize)> {
    let pick_hyp = |rng: &mut ChaCha8Rng, i: usize| -> usize {
        if positive {
            i
        } else {
            loop {
                let k = *nouns.choose(rng).expect("nouns");
                if k != i {
                    return k;
                }
            }
        }
    };
    for _ in 0..MAX_DRAWS {
        let (j, i) = fixed.unwrap_or_else(|| {
            (
                *adjectives.choose(rng).expect("adjectives"),
                *nouns.choose(rng).expect("nouns"),
            )
        });
        let k = pick_hyp(rng, i);
        if used.insert((j, i, k)) {
            return Ok((j, i, k));
        }
    }
    // Dense regime: enumerate what is left.
    let mut free = Vec::new();
    let js: Vec<usize> = fixed.map_or_else(|| adjectives.to_vec(), |f| vec![f.0]);
    let is: Vec<usize> = fixed.map_or_else(|| nouns.to_vec(), |f| vec![f.1]);
    for &j in &js {
        for &i in &is {
            for &k in nouns {
                if (k == i) == positive && !used.contains(&(j, i, k)) {
                    free.push((j, i, k));
                }
            }
        }
    }
    let triple = *free
        .choose(rng)
        .ok_or_else(|| Error::InvalidArgument("ran out of distinct adjective-noun pairs".into()))?;
    used.insert(triple);
    Ok(triple)
}

fn digits(x: u32) -> RawSentence {
    RawSentence::Tokens(x.to_string().chars().map(|c| c.to_string()).collect())
}

pub fn gen_numbers(cfg: &NumbersConfig) -> Result<DatasetSplit> {
    if cfg.lo < 1000 || cfg.hi > 9999 || cfg.lo >= cfg.hi {
        return Err(Error::InvalidArgument(format!(
            "number range must satisfy 1000 <= lo < hi <= 9999, got {}..={}",
            cfg.lo, cfg.hi
        )));
    }
    let m = (cfg.hi - cfg.lo + 1) as usize;
    let capacity = m * (m - 1) / 2;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let labels = count_labels(&[cfg.train, cfg.validation, cfg.test], &mut rng);
    let pos_needed: usize = labels.iter().flatten().filter(|&&l| l).count();
    let neg_needed: usize = labels.iter().flatten().filter(|&&l| !l).count();
    if pos_needed > capacity || neg_needed > capacity {
        return Err(Error::InvalidArgument(format!(
            "requested {pos_needed} positive / {neg_needed} negative pairs but only {capacity} \
             of each exist in {}..={}",
            cfg.lo, cfg.hi
        )));
    }

    let mut used: HashSet<(u32, u32)> = HashSet::new();
    let mut splits = Vec::with_capacity(3);
    for split_labels in &labels {
        let mut samples = Vec::with_capacity(split_labels.len());
        for &positive in split_labels {
            let (a, b) = draw_numbers(&mut rng, &mut used, cfg.lo, cfg.hi, positive)?;
            samples.push(RawSample {
                premise: digits(a),
                hypothesis: digits(b),
                label: if a < b { Label::Entailment } else { Label::Contradiction },
            });
        }
        splits.push(samples);
    }
    let test = splits.pop().expect("three splits");
    let validation = splits.pop().expect("three splits");
    let train = splits.pop().expect("three splits");
    Ok(DatasetSplit::new(train, validation, test))
}

fn draw_numbers(
    rng: &mut ChaCha8Rng,
    used: &mut HashSet<(u32, u32)>,
    lo: u32,
    hi: u32,
    positive: bool,
) -> Result<(u32, u32)> {
    let orient = |x: u32, y: u32| {
        let (s, l) = if x < y { (x, y) } else { (y, x) };
        if positive {
            (s, l)
        } else {
            (l, s)
        }
    };
    for _ in 0..MAX_DRAWS {
        let x = rng.gen_range(lo..=hi);
        let y = rng.gen_range(lo..=hi);
        if x == y {
            continue;
        }
        let pair = orient(x, y);
        if used.insert(pair) {
            return Ok(pair);
        }
    }
    let mut free = Vec::new();
    for x in lo..=hi {
        for y in x + 1..=hi {
            let pair = orient(x, y);
            if !used.contains(&pair) {
                free.push(pair);
            }
        }
    }
    let pair = *free
        .choose(rng)
        .ok_or_else(|| Error::InvalidArgument("ran out of distinct number pairs".into()))?;
    used.insert(pair);
    Ok(pair)
}
