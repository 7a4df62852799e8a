//! Monte Carlo estimates over the Bernoulli model: containment probability,
//! the law of `X`, factorial moments, Poisson fits and coupled threshold sweeps.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::census::{expected_x, family_size, threshold};
use crate::error::{Error, Result};
use crate::patterns::PatternFamily;
use crate::sampler::{sample_bernoulli, CoupledDraw};

/// Default number of factorial moments reported.
pub const R_MAX: usize = 4;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: BTreeMap<u64, u64>,
    pub trials: u64,
}

fn falling(x: u64, r: usize) -> f64 {
    (0..r as u64).map(|i| x.saturating_sub(i) as f64).product()
}

impl Histogram {
    pub fn from_values(values: impl IntoIterator<Item = u64>) -> Self {
        let mut h = Histogram::default();
        for v in values {
            h.add(v);
        }
        h
    }

    pub fn add(&mut self, value: u64) {
        *self.counts.entry(value).or_insert(0) += 1;
        self.trials += 1;
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (&v, &c) in &other.counts {
            *self.counts.entry(v).or_insert(0) += c;
        }
        self.trials += other.trials;
    }

    pub fn count(&self, value: u64) -> u64 {
        self.counts.get(&value).copied().unwrap_or(0)
    }

    pub fn max_value(&self) -> u64 {
        self.counts.keys().next_back().copied().unwrap_or(0)
    }

    /// Empirical mean of `g(X)` and its standard error.
    fn mean_of(&self, g: impl Fn(u64) -> f64) -> (f64, f64) {
        let t = self.trials as f64;
        let mean = self.counts.iter().map(|(&v, &c)| g(v) * c as f64).sum::<f64>() / t;
        let var = if self.trials > 1 {
            self.counts
                .iter()
                .map(|(&v, &c)| (g(v) - mean).powi(2) * c as f64)
                .sum::<f64>()
                / (t - 1.0)
        } else {
            0.0
        };
        (mean, (var / t).sqrt())
    }

    pub fn mean(&self) -> f64 {
        self.mean_of(|v| v as f64).0
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let (_, se) = self.mean_of(|v| v as f64);
        se * se * self.trials as f64
    }

    /// Empirical `E((X)_r)` with its standard error.
    pub fn factorial_moment(&self, r: usize) -> (f64, f64) {
        self.mean_of(|v| falling(v, r))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorialMoment {
    pub r: usize,
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoissonFit {
    pub lambda: f64,
    pub tv_distance: f64,
    pub moments: Vec<FactorialMoment>,
}

/// `Po(λ)` masses at `0..=k_max`.
pub fn poisson_pmf(lambda: f64, k_max: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(k_max as usize + 1);
    let mut p = (-lambda).exp();
    for k in 0..=k_max {
        if k > 0 {
            p *= lambda / k as f64;
        }
        out.push(p);
    }
    out
}

/// Total variation distance between two mass functions on `0, 1, 2, ...`;
/// missing entries count as zero mass.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    let len = p.len().max(q.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let l1: f64 = (0..len).map(|i| (at(p, i) - at(q, i)).abs()).sum();
    (0.5 * l1).clamp(0.0, 1.0)
}

/// TV distance to `Po(λ)` (Poisson tail beyond the support included) and factorial moments.
pub fn poisson_fit(hist: &Histogram, lambda: f64, r_max: usize) -> Result<PoissonFit> {
    if hist.trials == 0 {
        return Err(Error::EmptySet);
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::bad(format!("poisson fit needs lambda > 0 (got {lambda})")));
    }
    let k_max = hist.max_value();
    let pmf = poisson_pmf(lambda, k_max);
    let t = hist.trials as f64;
    let mut l1 = 0.0;
    for (k, p) in pmf.iter().enumerate() {
        l1 += (hist.count(k as u64) as f64 / t - p).abs();
    }
    l1 += (1.0 - pmf.iter().sum::<f64>()).max(0.0);
    let moments = (1..=r_max)
        .map(|r| {
            let (estimate, stderr) = hist.factorial_moment(r);
            FactorialMoment { r, estimate, stderr }
        })
        .collect();
    Ok(PoissonFit {
        lambda,
        tv_distance: (0.5 * l1).clamp(0.0, 1.0),
        moments,
    })
}

fn check_run(delta: f64, trials: u64) -> Result<()> {
    if trials == 0 {
        return Err(Error::bad("trials must be at least 1"));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::bad(format!("delta must lie in [0, 1] (got {delta})")));
    }
    Ok(())
}

/// Binomial standard error of a proportion.
pub fn binomial_stderr(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

/// Fraction of trials whose sample contains a pattern, with its standard error.
pub fn estimate_p_contains(family: &PatternFamily, delta: f64, trials: u64, seed: u64) -> Result<(f64, f64)> {
    check_run(delta, trials)?;
    let hits = (0..trials)
        .into_par_iter()
        .map(|t| {
            let e = sample_bernoulli(family.space().clone(), delta, seed, t)?;
            family.contains_any(&e).map(u64::from)
        })
        .collect::<Result<Vec<u64>>>()?
        .into_iter()
        .sum::<u64>();
    let p = hits as f64 / trials as f64;
    Ok((p, binomial_stderr(p, trials)))
}

/// Per-trial `X` values in trial order.
pub fn sample_x(family: &PatternFamily, delta: f64, trials: u64, seed: u64) -> Result<Vec<u64>> {
    check_run(delta, trials)?;
    (0..trials)
        .into_par_iter()
        .map(|t| family.count_x(&sample_bernoulli(family.space().clone(), delta, seed, t)?))
        .collect()
}

/// Histogram of `X` over `trials` independent Bernoulli samples.
pub fn distribution_x(family: &PatternFamily, delta: f64, trials: u64, seed: u64) -> Result<Histogram> {
    Ok(Histogram::from_values(sample_x(family, delta, trials, seed)?))
}

/// Mean of `Y` over `trials` samples with its standard error.
pub fn empirical_ey(family: &PatternFamily, delta: f64, trials: u64, seed: u64) -> Result<(f64, f64)> {
    check_run(delta, trials)?;
    let ys = (0..trials)
        .into_par_iter()
        .map(|t| family.count_y(&sample_bernoulli(family.space().clone(), delta, seed, t)?))
        .collect::<Result<Vec<u64>>>()?;
    Ok(Histogram::from_values(ys).mean_of(|v| v as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub family: String,
    pub q: u32,
    pub n: usize,
    pub m: Option<usize>,
    pub scale: f64,
    pub delta: f64,
    pub trials: u64,
    pub seed: u64,
    pub p_hat: f64,
    pub stderr: f64,
    pub e_x: f64,
    pub mean_x: f64,
    pub tv: f64,
    pub moments: [f64; R_MAX],
}

impl SweepRow {
    pub const CSV_HEADER: [&'static str; 16] = [
        "family", "q", "n", "m", "delta", "trials", "seed", "p_hat", "stderr", "E_X", "mean_X", "tv", "r1", "r2",
        "r3", "r4",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        let mut rec = vec![
            self.family.clone(),
            self.q.to_string(),
            self.n.to_string(),
            self.m.map(|m| m.to_string()).unwrap_or_default(),
            self.delta.to_string(),
            self.trials.to_string(),
            self.seed.to_string(),
            self.p_hat.to_string(),
            self.stderr.to_string(),
            self.e_x.to_string(),
            self.mean_x.to_string(),
            self.tv.to_string(),
        ];
        rec.extend(self.moments.iter().map(|m| m.to_string()));
        rec
    }
}

/// Summary row for one `δ` given the per-trial values of `X`.
pub fn summarize(family: &PatternFamily, scale: f64, delta: f64, e_x: f64, xs: &[u64], seed: u64) -> SweepRow {
    let hist = Histogram::from_values(xs.iter().copied());
    let trials = hist.trials;
    let p_hat = (trials - hist.count(0)) as f64 / trials as f64;
    let pmf = poisson_pmf(e_x, hist.max_value());
    let empirical: Vec<f64> = (0..=hist.max_value())
        .map(|k| hist.count(k) as f64 / trials as f64)
        .collect();
    let tail = (1.0 - pmf.iter().sum::<f64>()).max(0.0);
    let tv = (tv_distance(&empirical, &pmf) + 0.5 * tail).clamp(0.0, 1.0);
    let mut moments = [0.0; R_MAX];
    for (r, slot) in moments.iter_mut().enumerate() {
        *slot = hist.factorial_moment(r + 1).0;
    }
    SweepRow {
        family: family.kind().name().to_string(),
        q: family.q(),
        n: family.n(),
        m: family.kind().m(),
        scale,
        delta,
        trials,
        seed,
        p_hat,
        stderr: binomial_stderr(p_hat, trials),
        e_x,
        mean_x: hist.mean(),
        tv,
        moments,
    }
}

/// One row per scale `s` at `δ_s = clamp(s · t(n,q), 0, 1)`, all scales sharing
/// the same coupled uniforms in each trial.
pub fn threshold_sweep(family: &PatternFamily, scales: &[f64], trials: u64, seed: u64) -> Result<Vec<SweepRow>> {
    if trials == 0 {
        return Err(Error::bad("trials must be at least 1"));
    }
    if scales.is_empty() || scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::bad("scales must be positive"));
    }
    let t = threshold(family.kind(), family.q(), family.n());
    let deltas: Vec<f64> = scales.iter().map(|s| (s * t).clamp(0.0, 1.0)).collect();
    let size = family_size(family)?;
    let space = family.space().clone();
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let draw = CoupledDraw::new(&space, seed, trial)?;
            deltas
                .iter()
                .map(|&d| family.count_x(&draw.at(space.clone(), d)?))
                .collect::<Result<Vec<u64>>>()
        })
        .collect::<Result<Vec<Vec<u64>>>>()?;
    Ok(scales
        .iter()
        .zip(&deltas)
        .enumerate()
        .map(|(i, (&s, &d))| {
            let xs: Vec<u64> = per_trial.iter().map(|row| row[i]).collect();
            summarize(family, s, d, expected_x(&size, family.a(), d), &xs, seed)
        })
        .collect())
}
