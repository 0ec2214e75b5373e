//! Counter-based random streams addressed by `(master_seed, lane)`.
//!
//! Every stream is a ChaCha8 keystream whose 256-bit key and 64-bit stream id
//! are hashed from the master seed and the lane tuple. Output of a stream
//! therefore depends only on its address and on how many values have been
//! drawn from it, never on the order in which other streams were consumed.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const SALTS: [u64; 5] =
    [0x243F_6A88_85A3_08D3, 0x1319_8A2E_0370_7344, 0xA409_3822_299F_31D0, 0x082E_FA98_EC4E_6C89, 0x4528_21E6_38D0_1377];

/// Lane purposes used across the crate. The first lane component names the
/// consumer so that distinct subsystems never share randomness.
pub mod purpose {
    pub const PATHS: u64 = 1;
    pub const RANDOM_FEATURES: u64 = 2;
    pub const DENSE_INIT: u64 = 3;
    pub const ORACLE: u64 = 4;
    pub const RUN: u64 = 5;
    pub const INITIAL_LAW: u64 = 6;
    pub const VG_EXACT: u64 = 7;
    pub const SHUFFLE: u64 = 8;
}

#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lane_hash(master_seed: u64, lane: &[u64], salt: u64) -> u64 {
    let mut h = mix64(master_seed ^ salt);
    for (i, &v) in lane.iter().enumerate() {
        let tagged = v.wrapping_add(GOLDEN.wrapping_mul(i as u64 + 1));
        h = mix64(h.wrapping_add(GOLDEN) ^ mix64(tagged));
    }
    mix64(h ^ (lane.len() as u64).wrapping_mul(GOLDEN))
}

/// Derives a child seed from a master seed and a lane, e.g. the seed of run
/// `r` of dimension `d` in a sweep.
pub fn derive_seed(master_seed: u64, lane: &[u64]) -> u64 {
    lane_hash(master_seed, lane, SALTS[0] ^ SALTS[4])
}

/// A single-consumer random stream.
#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    lane: Vec<u64>,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn lane(&self) -> &[u64] {
        &self.lane
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        const DEN: f64 = (1u64 << 53) as f64;
        (self.inner.next_u64() >> 11) as f64 / DEN
    }

    /// Uniform draw in `(0, 1]`; never returns zero.
    #[inline]
    pub fn uniform_open0(&mut self) -> f64 {
        1.0 - self.uniform()
    }
}

/// Opens the stream at `(master_seed, lane)`.
pub fn substream(master_seed: u64, lane: &[u64]) -> RngStream {
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
        chunk.copy_from_slice(&lane_hash(master_seed, lane, SALTS[i]).to_le_bytes());
    }
    let mut inner = ChaCha8Rng::from_seed(key);
    inner.set_stream(lane_hash(master_seed, lane, SALTS[4]));
    RngStream { master_seed, lane: lane.to_vec(), inner }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
