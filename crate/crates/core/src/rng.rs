//! Seed derivation.
//!
//! Every random draw in the crate comes from a ChaCha8 stream keyed by the
//! run's master seed and a 64-bit stream id. Stream ids are packed from the
//! role of the stream (bank chunk, cross-check chunk, ...) so the same
//! `(seed, role)` always yields the same numbers, independent of how many
//! worker threads consume the streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::Sign;

pub type StreamRng = ChaCha8Rng;

/// An independent stream for `(master_seed, stream_id)`.
pub fn stream(master_seed: u64, stream_id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id);
    rng
}

/// What a stream is used for; occupies the top byte of the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Bank = 1,
    Crosscheck = 2,
    Constants = 3,
    Test = 0xff,
}

/// Packs `(purpose, measure, sign, chunk)` into a stream id.
///
/// Layout: 8 bits purpose | 16 bits measure | 1 bit sign | 39 bits chunk.
pub fn stream_id(purpose: Purpose, measure: usize, sign: Sign, chunk: u64) -> u64 {
    assert!(measure < 1 << 16, "measure index too large for stream layout");
    assert!(chunk < 1 << 39, "chunk index too large for stream layout");
    let sign_bit = match sign {
        Sign::Plus => 0,
        Sign::Minus => 1,
    };
    ((purpose as u64) << 56) | ((measure as u64) << 40) | (sign_bit << 39) | chunk
}
