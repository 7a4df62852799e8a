//! Pattern-free sets by the deletion method.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::census::{delta_for_mean, family_size};
use crate::error::{Error, Result};
use crate::patterns::{PatternFamily, PatternKind};
use crate::sampler::{sample_bernoulli, SampleSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeSetResult {
    pub family: String,
    pub q: u32,
    pub n: usize,
    pub m: Option<usize>,
    pub seed: u64,
    pub delta: f64,
    /// Sorted point indices of the surviving set.
    pub points: Vec<usize>,
    pub size: usize,
    pub initial_size: usize,
    /// Patterns contained in the initial sample.
    pub initial_x: u64,
    pub deletions: usize,
    pub certified: bool,
}

/// `δ` with `|A| δ^a = 1/2`.
pub fn deletion_delta(family: &PatternFamily) -> Result<f64> {
    Ok(delta_for_mean(&family_size(family)?, family.a(), 0.5))
}

/// True iff `set` contains no pattern.
pub fn verify_free(family: &PatternFamily, set: &SampleSet) -> Result<bool> {
    Ok(!family.contains_any(set)?)
}

/// Sample at the deletion density, then delete the lowest point of the
/// lexicographically smallest surviving pattern until none is left.
pub fn deletion_construct(family: &PatternFamily, seed: u64) -> Result<FreeSetResult> {
    let delta = deletion_delta(family)?;
    construct_at(family, delta, seed)
}

fn construct_at(family: &PatternFamily, delta: f64, seed: u64) -> Result<FreeSetResult> {
    let expected = family.space().size() as f64 * delta;
    if expected < 100.0 {
        log::warn!(
            "q^n delta = {expected:.2} is below 100 for {} over F_{}^{}",
            family.kind(),
            family.q(),
            family.n()
        );
    }
    let mut set = sample_bernoulli(family.space().clone(), delta, seed, 0)?;
    let initial_size = set.len();
    // Deleting points only kills patterns, so walking the sorted list once
    // visits the smallest surviving pattern at every step.
    let inside = family.contained(&set)?;
    let mut deletions = 0;
    for t in &inside {
        if t.points().iter().all(|&x| set.contains(x)) {
            set.remove(t.points()[0]);
            deletions += 1;
        }
    }
    let certified = verify_free(family, &set)?;
    if !certified {
        return Err(Error::Invariant("deletion left a pattern behind".into()));
    }
    Ok(FreeSetResult {
        family: family.kind().name().to_string(),
        q: family.q(),
        n: family.n(),
        m: family.kind().m(),
        seed,
        delta,
        size: set.len(),
        points: set.points(),
        initial_size,
        initial_x: inside.len() as u64,
        deletions,
        certified,
    })
}

/// Lower-bound rate for `ex(F_q^n, A)`.
pub fn extremal_rate(kind: PatternKind, q: u32, n: usize) -> f64 {
    let (qf, nf) = (q as f64, n as f64);
    match kind {
        PatternKind::ThreeAp => qf.powf(nf / 3.0),
        PatternKind::Parallelogram => qf.powf(nf / 4.0),
        PatternKind::RightTriangle => qf.powf(1.0 / 3.0),
        PatternKind::Plane { m } => qf.powf(nf * (1.0 - (m + 1) as f64 / qf.powi(m as i32))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremalRow {
    pub family: String,
    pub q: u32,
    pub n: usize,
    pub m: Option<usize>,
    pub delta: f64,
    pub seeds: u64,
    pub best_seed: u64,
    pub size: usize,
    pub rate: f64,
    pub ratio: f64,
    pub certified: bool,
    pub points: Vec<usize>,
}

impl ExtremalRow {
    pub const CSV_HEADER: [&'static str; 11] = [
        "family", "q", "n", "m", "delta", "seeds", "best_seed", "size", "rate", "ratio", "certified",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.family.clone(),
            self.q.to_string(),
            self.n.to_string(),
            self.m.map(|m| m.to_string()).unwrap_or_default(),
            self.delta.to_string(),
            self.seeds.to_string(),
            self.best_seed.to_string(),
            self.size.to_string(),
            self.rate.to_string(),
            self.ratio.to_string(),
            self.certified.to_string(),
        ]
    }
}

/// Best construction over seeds `0..seeds` for one family.
pub fn extremal_row(family: &PatternFamily, seeds: u64) -> Result<ExtremalRow> {
    if seeds == 0 {
        return Err(Error::bad("seed budget must be at least 1"));
    }
    let delta = deletion_delta(family)?;
    let results = (0..seeds)
        .into_par_iter()
        .map(|s| construct_at(family, delta, s))
        .collect::<Result<Vec<_>>>()?;
    // largest set, earliest seed on ties
    let best = results
        .into_iter()
        .reduce(|a, b| if b.size > a.size { b } else { a })
        .expect("at least one seed");
    let rate = extremal_rate(family.kind(), family.q(), family.n());
    Ok(ExtremalRow {
        family: best.family,
        q: best.q,
        n: best.n,
        m: best.m,
        delta,
        seeds,
        best_seed: best.seed,
        size: best.size,
        rate,
        ratio: best.size as f64 / rate,
        certified: best.certified,
        points: best.points,
    })
}

/// One row per `(q, n)`.
pub fn extremal_table(kind: PatternKind, sizes: &[(u32, usize)], seeds: u64) -> Result<Vec<ExtremalRow>> {
    sizes
        .iter()
        .map(|&(q, n)| {
            let space = std::sync::Arc::new(crate::field::Space::new(crate::field::make_field(q as u64)?, n)?);
            extremal_row(&PatternFamily::new(space, kind)?, seeds)
        })
        .collect()
}
