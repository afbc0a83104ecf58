//! Seeded random streams.
//!
//! One master seed expands into independent substreams keyed by
//! `(agent, role)`. Each substream is a ChaCha20 generator seeded with
//! a SplitMix64-style hash of the triple, so adding an agent or a role never
//! shifts the draws of another stream. Gaussian variates use the ziggurat
//! sampler of `rand_distr::StandardNormal`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// Generator type used for every stream in the crate.
pub type StreamRng = ChaCha20Rng;

/// What a substream is used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamRole {
    /// Output privacy noise vᵢ(k).
    OutputNoise,
    /// Process noise wᵢ(k).
    ProcessNoise,
    /// Reference privacy noise w̄ᵢ.
    ReferenceNoise,
    /// Draw of the true initial state xᵢ(0).
    InitialState,
    /// Random off-diagonal cost weights.
    CostWeights,
}

impl StreamRole {
    fn tag(self) -> u64 {
        match self {
            StreamRole::OutputNoise => 0x7631,
            StreamRole::ProcessNoise => 0x7731,
            StreamRole::ReferenceNoise => 0x7762,
            StreamRole::InitialState => 0x7830,
            StreamRole::CostWeights => 0x5171,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `(agent, role)` substream of `master`.
pub fn substream_seed(master: u64, agent: u64, role: StreamRole) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ agent) ^ role.tag())
}

/// Master seed of Monte-Carlo run `run` derived from the scenario seed.
pub fn run_seed(master: u64, run: u64) -> u64 {
    splitmix64(splitmix64(master ^ 0x5255_4E00) ^ run)
}

/// Independent generator for the `(agent, role)` substream of `master`.
pub fn substream(master: u64, agent: u64, role: StreamRole) -> StreamRng {
    StreamRng::seed_from_u64(substream_seed(master, agent, role))
}

/// One standard normal variate.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Fills `out` with i.i.d. N(0, σ²) draws.
pub fn fill_normal<R: Rng + ?Sized>(rng: &mut R, sigma: f64, out: &mut [f64]) {
    for o in out.iter_mut() {
        *o = sigma * standard_normal(rng);
    }
}
