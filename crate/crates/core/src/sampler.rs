//! Counter-based edge variates.
//!
//! Every edge of the lattice carries a Uniform[0,1) variate that is a pure
//! function of `(seed, trial, edge)`. An edge is open at parameter `p` iff its
//! variate is `< p`, so one trial realizes every `p` at once and the open
//! edge set grows monotonically in `p`.
//!
//! The mapping is frozen (`edgehash-v1`); fixture vectors live in
//! `tests/fixtures/sampler_vectors.json`:
//!
//! ```text
//! mix(z)  = z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//!           z ^= z >> 27; z *= 0x94D049BB133111EB; z ^ (z >> 31)
//! h       = mix(seed ^ 0x9E3779B97F4A7C15)
//! h       = mix(h ^ trial)
//! bytes   = d, a(1..d), b(1..d) as little-endian i32 (a < b lexicographically)
//! for each 8-byte little-endian word w of bytes (last word zero-padded):
//!     h = mix(h ^ w)
//! h       = mix(h ^ len(bytes))
//! u       = (h >> 11) * 2^-53
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Edge, LatticeModel, Vertex};

pub const SAMPLER_ID: &str = "edgehash-v1";

const SEED_KEY: u64 = 0x9E37_79B9_7F4A_7C15;
const UNIT: f64 = 1.0 / (1u64 << 53) as f64;

#[inline(always)]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identifies one realization of the edge field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub seed: u64,
    pub trial: u64,
    pub model: LatticeModel,
    #[serde(skip, default = "default_unit")]
    unit: f64,
}

fn default_unit() -> f64 {
    UNIT
}

impl SamplerConfig {
    pub fn new(seed: u64, trial: u64, model: LatticeModel) -> Self {
        SamplerConfig {
            seed,
            trial,
            model,
            unit: UNIT,
        }
    }

    pub fn with_trial(&self, trial: u64) -> Self {
        SamplerConfig { trial, ..*self }
    }

    /// Replaces the mantissa scale constant. Only for fault-injection tests:
    /// any value other than `2^-53` breaks the uniform marginal.
    #[doc(hidden)]
    pub fn with_corrupted_unit(self, unit: f64) -> Self {
        SamplerConfig { unit, ..self }
    }

    pub fn field(&self) -> EdgeField {
        EdgeField {
            prefix: mix(mix(self.seed ^ SEED_KEY) ^ self.trial),
            unit: self.unit,
        }
    }

    /// Variate of the edge `{x, y}`, in either endpoint order.
    pub fn uniform(&self, x: &Vertex, y: &Vertex) -> Result<f64> {
        if !self.model.is_edge(x, y) {
            return Err(Error::arg(format!("{x}-{y} is not an edge of {:?}", self.model)));
        }
        Ok(self.field().uniform(x, y))
    }

    pub fn uniform_edge(&self, e: &Edge) -> Result<f64> {
        self.uniform(e.a(), e.b())
    }

    pub fn is_open(&self, x: &Vertex, y: &Vertex, p: f64) -> Result<bool> {
        check_probability(p)?;
        Ok(self.uniform(x, y)? < p)
    }
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::arg(format!("probability must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// Per-trial hashing state with the `(seed, trial)` prefix already absorbed.
#[derive(Clone, Copy, Debug)]
pub struct EdgeField {
    prefix: u64,
    unit: f64,
}

impl EdgeField {
    /// Raw 64-bit state for the edge `{x, y}` (endpoints in any order, no
    /// adjacency check).
    #[inline]
    pub fn bits(&self, x: &Vertex, y: &Vertex) -> u64 {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        let d = a.dim();
        let mut h = self.prefix;
        let mut word: u64 = d as u32 as u64;
        let mut filled = 1usize;
        for c in a.coords().iter().chain(b.coords()) {
            let w = *c as u32 as u64;
            if filled == 0 {
                word = w;
                filled = 1;
            } else {
                h = mix(h ^ (word | (w << 32)));
                filled = 0;
            }
        }
        if filled == 1 {
            h = mix(h ^ word);
        }
        let len = 4 * (1 + 2 * d) as u64;
        mix(h ^ len)
    }

    #[inline]
    pub fn uniform(&self, x: &Vertex, y: &Vertex) -> f64 {
        (self.bits(x, y) >> 11) as f64 * self.unit
    }

    #[inline]
    pub fn is_open(&self, x: &Vertex, y: &Vertex, p: f64) -> bool {
        self.uniform(x, y) < p
    }
}
