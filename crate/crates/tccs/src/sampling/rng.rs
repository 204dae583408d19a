//! Deterministic random streams for masks, plans, and experiments.
//!
//! Reproducibility contract: every draw is defined in terms of the raw
//! 64-bit output stream of a ChaCha8 generator, so any implementation with
//! ChaCha8 and SHA-256 at hand can replay a mask from its recorded seed.
//!
//! - seeding: the 32-byte ChaCha8 key is `SHA-256("tccs.rng.v1" || seed_le)`
//!   where `seed_le` is the u64 seed in little-endian bytes. Derived streams
//!   (one per experiment trial) hash `"tccs.stream.v1" || master_le || label_le...`
//!   the same way.
//! - `uniform_below(n)`: rejection sampling; draw u64 words, accept `x` when
//!   `x < 2^64 - (2^64 mod n)`, return `x mod n`.
//! - `uniform_f64()`: `(next_u64() >> 11) * 2^-53`, uniform on [0, 1).
//! - `bernoulli(p)`: `uniform_f64() < p`.
//! - `normal()`: Box-Muller on `u1 = ((next_u64() >> 11) + 1) * 2^-53` (so
//!   the log argument is in (0,1]) and `u2 = uniform_f64()`; the pair
//!   `(r cos th, r sin th)` is consumed in order, one value per call.
//! - `choose(n, m)` without replacement: partial Fisher-Yates over `0..n`,
//!   swapping position `t` with `t + uniform_below(n - t)` for `t < m`;
//!   the first `m` pool entries, in selection order, are the sample.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

const SEED_DOMAIN: &[u8] = b"tccs.rng.v1";
const STREAM_DOMAIN: &[u8] = b"tccs.stream.v1";

/// Seedable, counter-based random stream (ChaCha8 core).
#[derive(Clone, Debug)]
pub struct PlanRng {
    rng: ChaCha8Rng,
    pending_normal: Option<f64>,
}

impl PlanRng {
    /// Stream keyed by a bare u64 seed.
    pub fn from_seed(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(SEED_DOMAIN);
        h.update(seed.to_le_bytes());
        Self::from_key(h.finalize().into())
    }

    /// Independent sub-stream: one master seed fanned out by integer labels
    /// (experiment cell, trial, role). Distinct label vectors give
    /// independent streams.
    pub fn derive(master: u64, labels: &[u64]) -> Self {
        let mut h = Sha256::new();
        h.update(STREAM_DOMAIN);
        h.update(master.to_le_bytes());
        for l in labels {
            h.update(l.to_le_bytes());
        }
        Self::from_key(h.finalize().into())
    }

    fn from_key(key: [u8; 32]) -> Self {
        PlanRng {
            rng: ChaCha8Rng::from_seed(key),
            pending_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    pub fn uniform_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "uniform_below(0)");
        // 2^64 mod n, computed without 128-bit arithmetic.
        let rem = (u64::MAX % n + 1) % n;
        let limit = u64::MAX - rem; // accept x <= limit, i.e. x < 2^64 - rem
        loop {
            let x = self.next_u64();
            if x <= limit {
                return x % n;
            }
        }
    }

    /// Uniform on [0, 1) with 53-bit resolution.
    pub fn uniform_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform_f64() < p
    }

    /// Standard normal via Box-Muller; values delivered in pair order.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.pending_normal.take() {
            return z;
        }
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let th = 2.0 * std::f64::consts::PI * u2;
        self.pending_normal = Some(r * th.sin());
        r * th.cos()
    }

    /// m distinct values from 0..n, in selection order (partial Fisher-Yates).
    pub fn choose(&mut self, n: usize, m: usize) -> Vec<usize> {
        assert!(m <= n, "choose({n}, {m})");
        let mut pool: Vec<usize> = (0..n).collect();
        for t in 0..m {
            let pick = t + self.uniform_below((n - t) as u64) as usize;
            pool.swap(t, pick);
        }
        pool.truncate(m);
        pool
    }

    /// m values from 0..n, independently uniform (duplicates possible).
    pub fn choose_with_replacement(&mut self, n: usize, m: usize) -> Vec<usize> {
        assert!(n > 0, "choose_with_replacement from empty range");
        (0..m).map(|_| self.uniform_below(n as u64) as usize).collect()
    }
}
