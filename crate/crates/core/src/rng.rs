//! Reproducible random streams.
//!
//! A stream is identified by `(master_seed, stream_id)`. The master seed keys
//! a ChaCha8 generator and the stream id selects one of its 2^64 independent
//! keystreams, so distinct ids never overlap. Ids for replicas and algorithm
//! phases are derived with [`stream_id`] so that a given (phase, replica)
//! pair always receives the same stream.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream-id slot reserved for the orchestrating walker of a phase.
pub const REFERENCE_SLOT: u64 = u64::MAX;
/// Stream-id slot reserved for resampling decisions (Fleming–Viot teleports).
pub const CONTROL_SLOT: u64 = u64::MAX - 1;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a stream id from a path of integers such as `[phase, replica]`.
pub fn stream_id(path: &[u64]) -> u64 {
    path.iter()
        .fold(0x5bd1_e995_u64, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

#[derive(Debug, Clone)]
enum Source {
    ChaCha(Box<ChaCha8Rng>),
    /// Every normal draw is zero and every uniform draw is one half.
    Zero,
}

#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    source: Source,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        Self {
            master_seed,
            stream_id,
            source: Source::ChaCha(Box::new(rng)),
        }
    }

    /// Stream for the node `path` under `master_seed`.
    pub fn derive(master_seed: u64, path: &[u64]) -> Self {
        Self::new(master_seed, stream_id(path))
    }

    /// A degenerate stream for deterministic tests: noise is identically zero.
    pub fn zero() -> Self {
        Self {
            master_seed: 0,
            stream_id: 0,
            source: Source::Zero,
        }
    }

    /// Child stream `index` of this stream; children of the zero stream are
    /// zero streams.
    pub fn child(&self, index: u64) -> Self {
        match self.source {
            Source::Zero => Self::zero(),
            Source::ChaCha(_) => Self::derive(self.master_seed, &[self.stream_id, index]),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn draw_normal(&mut self) -> f64 {
        match &mut self.source {
            Source::ChaCha(rng) => rng.sample(StandardNormal),
            Source::Zero => 0.0,
        }
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn draw_uniform(&mut self) -> f64 {
        match &mut self.source {
            Source::ChaCha(rng) => loop {
                let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                if u > 0.0 {
                    return u;
                }
            },
            Source::Zero => 0.5,
        }
    }

    /// Uniform index in `0..n`.
    pub fn draw_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "draw_index over an empty range");
        match &mut self.source {
            Source::ChaCha(rng) => rng.random_range(0..n),
            Source::Zero => 0,
        }
    }

    /// Exponential draw with the given rate, by inversion.
    pub fn draw_exponential(&mut self, rate: f64) -> f64 {
        -self.draw_uniform().ln() / rate
    }
}
