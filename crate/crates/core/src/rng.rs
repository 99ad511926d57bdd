//! Seeded, platform-independent random streams.
//!
//! Every consumer of randomness owns a [`RandomStream`]. Streams are keyed by
//! a 64-bit seed plus a path of derivation tags, so two consumers never share
//! state and the values drawn depend only on `(seed, path, draw index)`, not on
//! thread scheduling or record order.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// splitmix64 finalizer; used only to fold derivation tags into key material.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn tag_hash(tag: &str) -> u64 {
    // FNV-1a
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// A deterministic ChaCha20 stream.
#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    key: u64,
    rng: ChaCha20Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self::from_key(seed, mix64(seed))
    }

    fn from_key(seed: u64, key: u64) -> Self {
        Self {
            seed,
            key,
            rng: ChaCha20Rng::seed_from_u64(key),
        }
    }

    /// The user-facing seed this stream descends from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream for a named purpose. Does not advance `self`.
    pub fn fork(&self, tag: &str) -> RandomStream {
        Self::from_key(self.seed, mix64(self.key ^ tag_hash(tag)))
    }

    /// Child stream for an indexed consumer (a record id, a matrix row).
    /// Does not advance `self`.
    pub fn substream(&self, index: u64) -> RandomStream {
        let mut child = Self::from_key(self.seed, mix64(self.key ^ tag_hash("substream")));
        child.rng.set_stream(index);
        child
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn next_uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in the open interval `(0, 1)`.
    pub fn next_open_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` (unbiased, Lemire rejection).
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = u128::from(self.next_u64()) * u128::from(n);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}
