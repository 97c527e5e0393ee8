//! Seeded random streams. Every consumer derives its generator from a root
//! seed plus a stream id, so results do not depend on execution order.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

pub fn stream(seed: u64, stream_id: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

pub fn standard_normals<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Stream ids used inside one replication.
pub mod streams {
    pub const FEATURES: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const RANDOMIZATION: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const INTERACTIONS: u64 = 5;
}

/// Mix a root seed with an index (splitmix64 finalizer).
pub fn derive_seed(root: u64, index: u64) -> u64 {
    let mut z = root ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
