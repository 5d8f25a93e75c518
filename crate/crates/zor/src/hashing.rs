//! Deterministic key digesting, segment-local cell derivation, fingerprint
//! extraction, and partition routing.
//!
//! Every random-looking quantity in this crate is derived here from fixed
//! constants, so two builds from identical inputs produce identical filters
//! on any platform. The constants below are part of the serialization
//! contract and must not change.

use crate::error::{Error, Result};

/// Largest supported arity (hash locations per key).
pub const MAX_ARITY: usize = 8;

/// Widest supported fingerprint / cell width in bits. A field of this width
/// always fits a single 8-byte window regardless of bit alignment.
pub const MAX_FINGERPRINT_BITS: u32 = 56;

/// Odd increment used to derive the per-location mixing constants.
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Domain-separation tweak for fingerprint extraction.
const FINGERPRINT_TWEAK: u64 = 0xD1B5_4A32_D192_ED03;

/// 64-bit avalanche finalizer (xorshift-multiply, splitmix-style). A
/// bijection on `u64`; note `mix64(0) == 0`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    z
}

/// 64-bit digest of one key under a key seed.
///
/// Equal keys under the same seed always digest equally; the digest is a
/// pure function of the key bytes and the seed. Distinct keys whose digests
/// collide are treated as duplicates by the builders.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyDigest(pub u64);

/// Digests a byte-sequence key: folds 8-byte little-endian chunks (the
/// final short chunk zero-padded) with `mix64`, premixing chunk `i` with
/// `mix64(key_seed + i)`, then mixes in the key length.
pub fn digest(key: &[u8], key_seed: u64) -> KeyDigest {
    // Offsetting the accumulator keeps it distinct from the chunk-0 premix.
    let mut h = mix64(key_seed ^ GOLDEN_GAMMA);
    for (i, chunk) in key.chunks(8).enumerate() {
        let mut buf = [0u8; 8];
        buf[..chunk.len()].copy_from_slice(chunk);
        let word = u64::from_le_bytes(buf);
        h = mix64(h ^ word ^ mix64(key_seed.wrapping_add(i as u64)));
    }
    KeyDigest(mix64(h ^ key.len() as u64))
}

/// Cell-array layout: `segment_count` segments of `segment_len` cells each,
/// with every key touching one cell in each of `arity` consecutive
/// segments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SegmentGeometry {
    /// Cells per segment; a power of two.
    pub segment_len: usize,
    /// Total number of segments; at least `arity`.
    pub segment_count: usize,
    /// Hash locations per key.
    pub arity: usize,
}

impl SegmentGeometry {
    pub fn new(segment_len: usize, segment_count: usize, arity: usize) -> Result<Self> {
        if !segment_len.is_power_of_two() {
            return Err(Error::InvalidConfig("segment length must be a power of two"));
        }
        if !(2..=MAX_ARITY).contains(&arity) {
            return Err(Error::InvalidConfig("arity must be between 2 and 8"));
        }
        if segment_count < arity {
            return Err(Error::InvalidConfig("segment count must be at least the arity"));
        }
        Ok(SegmentGeometry { segment_len, segment_count, arity })
    }

    /// Geometry for exactly-one-cell-per-key sizing: `key_count` cells,
    /// padded up to whole segments and to at least `arity` segments.
    pub fn for_keys(key_count: usize, segment_len: usize, arity: usize) -> Result<Self> {
        if !segment_len.is_power_of_two() {
            return Err(Error::InvalidConfig("segment length must be a power of two"));
        }
        let segments = key_count.div_ceil(segment_len).max(arity);
        SegmentGeometry::new(segment_len, segments, arity)
    }

    /// Total number of cells.
    #[inline]
    pub fn total_cells(&self) -> usize {
        self.segment_len * self.segment_count
    }
}

/// The cell indices a key hashes to: one per consecutive segment, hence
/// always pairwise distinct.
#[derive(Clone, Copy, Debug)]
pub struct Locations {
    cells: [usize; MAX_ARITY],
    len: usize,
}

impl Locations {
    #[inline]
    pub fn as_slice(&self) -> &[usize] {
        &self.cells[..self.len]
    }
}

/// Derives the cell locations of a digest.
///
/// The start segment comes from fixed-point range reduction of the top hash
/// bits over `[0, segment_count - arity]`; the offset inside segment
/// `start + i` is masked from `mix64(h + GOLDEN_GAMMA * (i + 1))`.
#[inline]
pub fn locations(d: KeyDigest, filter_seed: u64, geometry: &SegmentGeometry) -> Locations {
    let h = mix64(d.0 ^ filter_seed);
    let range = (geometry.segment_count - geometry.arity + 1) as u128;
    let start = (((h >> 32) as u128 * range) >> 32) as usize;
    let mask = (geometry.segment_len - 1) as u64;
    let mut cells = [0usize; MAX_ARITY];
    for (i, cell) in cells.iter_mut().enumerate().take(geometry.arity) {
        let offset = (mix64(h.wrapping_add(GOLDEN_GAMMA.wrapping_mul(i as u64 + 1))) & mask) as usize;
        *cell = (start + i) * geometry.segment_len + offset;
    }
    Locations { cells, len: geometry.arity }
}

/// Extracts a `width`-bit fingerprint of a digest. Zero is a permitted
/// fingerprint value.
pub fn fingerprint(d: KeyDigest, filter_seed: u64, width: u32) -> Result<u64> {
    if !(1..=MAX_FINGERPRINT_BITS).contains(&width) {
        return Err(Error::InvalidConfig("fingerprint width must be between 1 and 56 bits"));
    }
    Ok(fingerprint_unchecked(d, filter_seed, width))
}

/// Fingerprint extraction on a width already validated by the caller.
#[inline]
pub(crate) fn fingerprint_unchecked(d: KeyDigest, filter_seed: u64, width: u32) -> u64 {
    debug_assert!((1..=MAX_FINGERPRINT_BITS).contains(&width));
    mix64(d.0 ^ filter_seed ^ FINGERPRINT_TWEAK) & ((1u64 << width) - 1)
}

/// Routes a digest to one of `partition_count` buckets. Independent of any
/// filter seed, so routing stays stable across per-partition seeds.
#[inline]
pub fn partition_of(d: KeyDigest, partition_count: usize, partition_seed: u64) -> usize {
    debug_assert!(partition_count >= 1);
    let h = mix64(d.0 ^ partition_seed);
    (((h >> 32) as u128 * partition_count as u128) >> 32) as usize
}

/// Deterministic workload generator: synthetic key `index` under `key_seed`
/// is the little-endian encoding of `mix64(key_seed + index)`. Distinct
/// indices yield distinct keys because `mix64` is a bijection.
#[inline]
pub fn synthetic_key(index: u64, key_seed: u64) -> [u8; 8] {
    mix64(key_seed.wrapping_add(index)).to_le_bytes()
}
