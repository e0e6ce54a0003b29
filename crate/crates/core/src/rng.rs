//! Seeded weight initialization.
//!
//! Generator: ChaCha8 with a 32-byte key whose first 8 bytes are the seed in
//! little-endian order and whose remaining bytes are zero (stream 0, word
//! position 0). Each entry consumes one `u64` draw `x`, mapped to
//! `u = (x >> 11) * 2^-53` in `[0, 1)` and then to `r * (2u - 1)` with
//! `r = 1 / sqrt(fan_in)` and `fan_in = cols`. Entries are filled in
//! row-major order.
//!
//! Named parameter blocks derive their seed as `base_seed ^ fnv1a64(key)`,
//! so every block is independent of which other blocks are present.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::matrix::DenseMatrix;

fn generator(seed: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn unit_draw(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform `(-r, r)` matrix with `r = 1/sqrt(cols)`. Zero-sized shapes give
/// an empty matrix.
pub fn seeded_init(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    if rows == 0 || cols == 0 {
        return DenseMatrix::zeros(rows, cols);
    }
    let bound = 1.0 / (cols as f64).sqrt();
    let mut rng = generator(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| bound * (2.0 * unit_draw(&mut rng) - 1.0))
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

pub fn block_seed(base_seed: u64, key: &str) -> u64 {
    base_seed ^ fnv1a64(key.as_bytes())
}
