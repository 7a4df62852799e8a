//! Reproducible random subsets of `F_q^n`.
//!
//! Randomness comes from ChaCha20 (`rand_chacha` 0.9) used as a counter-based
//! generator. Generator identity, pinned as part of the reproducibility contract:
//!
//! - key: bytes `0..8` = seed (little endian), bytes `8..16` = model tag
//!   (`1` Bernoulli, `2` uniform-M), remaining bytes zero;
//! - stream: trial index;
//! - Bernoulli: point `x` consumes 64-bit word `x` of the keystream and is kept
//!   iff `(w >> 11) · 2^-53 < δ`;
//! - uniform-M: partial Fisher-Yates over `0..q^n`, drawing bounded integers by
//!   Lemire's widening-multiply rejection method from the sequential stream.
//!
//! Because a point's uniform depends only on `(seed, trial, x)`, thresholding
//! one draw at several densities gives nested sets (see [`coupled_sweep`]).

use std::fmt;
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Space;

/// Largest space the sampler will materialise, in points.
pub const SPACE_CAP: usize = 1 << 24;

pub const GENERATOR_ID: &str = "chacha20/rand_chacha-0.9/v1";

const TAG_BERNOULLI: u64 = 1;
const TAG_UNIFORM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    Bernoulli { delta: f64 },
    UniformM { m: usize },
    /// Built from an explicit point list.
    Explicit,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(flatten)]
    pub model: Model,
    pub seed: u64,
    pub trial: u64,
}

/// A subset `E ⊆ F_q^n` stored as a membership bitset.
#[derive(Clone)]
pub struct SampleSet {
    space: Arc<Space>,
    bits: FixedBitSet,
    pub provenance: Provenance,
}

impl fmt::Debug for SampleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SampleSet")
            .field("q", &self.space.q())
            .field("n", &self.space.n())
            .field("len", &self.len())
            .field("provenance", &self.provenance)
            .finish()
    }
}

impl PartialEq for SampleSet {
    fn eq(&self, other: &Self) -> bool {
        self.space.q() == other.space.q() && self.space.n() == other.space.n() && self.bits == other.bits
    }
}

fn check_space(space: &Space) -> Result<()> {
    if space.size() > SPACE_CAP {
        return Err(Error::too_large("q^n", space.size() as u64, SPACE_CAP as u64));
    }
    Ok(())
}

impl SampleSet {
    pub fn empty(space: Arc<Space>) -> Result<Self> {
        check_space(&space)?;
        let bits = FixedBitSet::with_capacity(space.size());
        Ok(SampleSet {
            space,
            bits,
            provenance: Provenance {
                model: Model::Explicit,
                seed: 0,
                trial: 0,
            },
        })
    }

    pub fn full(space: Arc<Space>) -> Result<Self> {
        let mut s = Self::empty(space)?;
        s.bits.insert_range(..);
        Ok(s)
    }

    pub fn from_points(space: Arc<Space>, points: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut s = Self::empty(space)?;
        for x in points {
            if x >= s.space.size() {
                return Err(Error::bad(format!("point {x} outside F_q^n ({} points)", s.space.size())));
            }
            s.bits.insert(x);
        }
        Ok(s)
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_clear()
    }

    #[inline]
    pub fn contains(&self, x: usize) -> bool {
        self.bits.contains(x)
    }

    pub fn insert(&mut self, x: usize) {
        self.bits.insert(x);
    }

    pub fn remove(&mut self, x: usize) {
        self.bits.set(x, false);
    }

    /// Members in ascending order.
    pub fn points(&self) -> Vec<usize> {
        self.bits.ones().collect()
    }

    pub fn is_subset(&self, other: &SampleSet) -> bool {
        self.bits.is_subset(&other.bits)
    }

    /// Bitset as hex: byte `j` bit `i` (LSB first) is point `8j + i`.
    pub fn to_hex(&self) -> String {
        let nbytes = self.space.size().div_ceil(8);
        let bytes: Vec<u8> = self
            .bits
            .as_slice()
            .iter()
            .flat_map(|block| block.to_le_bytes())
            .take(nbytes)
            .collect();
        hex::encode(bytes)
    }
}

fn keyed_stream(seed: u64, tag: u64, trial: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&tag.to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(trial);
    rng
}

#[inline]
fn to_unit(w: u64) -> f64 {
    (w >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in `[0, bound)` by Lemire's method.
fn bounded(rng: &mut ChaCha20Rng, bound: u64) -> u64 {
    let mut m = rng.next_u64() as u128 * bound as u128;
    if (m as u64) < bound {
        let threshold = bound.wrapping_neg() % bound;
        while (m as u64) < threshold {
            m = rng.next_u64() as u128 * bound as u128;
        }
    }
    (m >> 64) as u64
}

/// Per-point uniforms `u_x ∈ [0, 1)` for one `(seed, trial)`; `E(δ) = {x : u_x < δ}`.
pub struct CoupledDraw {
    uniforms: Vec<f64>,
    seed: u64,
    trial: u64,
}

impl CoupledDraw {
    pub fn new(space: &Space, seed: u64, trial: u64) -> Result<Self> {
        check_space(space)?;
        let mut rng = keyed_stream(seed, TAG_BERNOULLI, trial);
        let uniforms = (0..space.size()).map(|_| to_unit(rng.next_u64())).collect();
        Ok(CoupledDraw { uniforms, seed, trial })
    }

    /// Uniform for point `x`, computed directly from its keystream position.
    pub fn uniform_at(seed: u64, trial: u64, x: usize) -> f64 {
        let mut rng = keyed_stream(seed, TAG_BERNOULLI, trial);
        rng.set_word_pos(2 * x as u128);
        to_unit(rng.next_u64())
    }

    pub fn uniforms(&self) -> &[f64] {
        &self.uniforms
    }

    pub fn at(&self, space: Arc<Space>, delta: f64) -> Result<SampleSet> {
        check_delta(delta)?;
        let mut s = SampleSet::empty(space)?;
        for (x, &u) in self.uniforms.iter().enumerate() {
            if u < delta {
                s.bits.insert(x);
            }
        }
        s.provenance = Provenance {
            model: Model::Bernoulli { delta },
            seed: self.seed,
            trial: self.trial,
        };
        Ok(s)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::bad(format!("delta = {delta} outside [0, 1]")));
    }
    Ok(())
}

/// `E ~ Ω(F_q^n, δ)`: every point kept independently with probability `δ`.
pub fn sample_bernoulli(space: Arc<Space>, delta: f64, seed: u64, trial: u64) -> Result<SampleSet> {
    check_delta(delta)?;
    CoupledDraw::new(&space, seed, trial)?.at(space, delta)
}

/// `E ~ Ω(F_q^n, M)`: a uniformly random `M`-subset.
pub fn sample_uniform_m(space: Arc<Space>, m: usize, seed: u64, trial: u64) -> Result<SampleSet> {
    check_space(&space)?;
    let size = space.size();
    if m > size {
        return Err(Error::bad(format!("M = {m} exceeds q^n = {size}")));
    }
    let mut rng = keyed_stream(seed, TAG_UNIFORM, trial);
    let mut perm: Vec<usize> = (0..size).collect();
    for i in 0..m {
        let j = i + bounded(&mut rng, (size - i) as u64) as usize;
        perm.swap(i, j);
    }
    let mut s = SampleSet::from_points(space, perm[..m].iter().copied())?;
    s.provenance = Provenance {
        model: Model::UniformM { m },
        seed,
        trial,
    };
    Ok(s)
}

/// Nested sets `E(δ_1) ⊆ E(δ_2) ⊆ …` from a single coupled draw.
pub fn coupled_sweep(space: Arc<Space>, deltas: &[f64], seed: u64, trial: u64) -> Result<Vec<SampleSet>> {
    if deltas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::bad("delta list must be sorted ascending"));
    }
    for &d in deltas {
        check_delta(d)?;
    }
    let draw = CoupledDraw::new(&space, seed, trial)?;
    deltas.iter().map(|&d| draw.at(space.clone(), d)).collect()
}
