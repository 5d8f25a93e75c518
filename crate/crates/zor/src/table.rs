//! Bit-packed cell storage for filter payloads.

use crate::error::{Error, Result};
use crate::hashing::{SegmentGeometry, MAX_FINGERPRINT_BITS};

/// Immutable-after-build array of fixed-width cells, bit-packed LSB-first:
/// cell `j` occupies bits `[j * width, (j + 1) * width)` of the byte stream,
/// with bit `k` stored at bit `k % 8` of byte `k / 8`. This layout is the
/// serialization contract.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellTable {
    geometry: SegmentGeometry,
    width: u32,
    bits: Vec<u8>,
}

impl CellTable {
    /// A zero-initialized table covering `geometry.total_cells()` cells.
    pub fn zeroed(geometry: SegmentGeometry, width: u32) -> Result<Self> {
        if width == 0 || width > MAX_FINGERPRINT_BITS {
            return Err(Error::InvalidConfig("cell width must be between 1 and 56 bits"));
        }
        let total_bits = geometry.total_cells() as u64 * width as u64;
        let bytes = total_bits.div_ceil(8) as usize;
        Ok(CellTable { geometry, width, bits: vec![0u8; bytes] })
    }

    /// Rebuilds a table from its packed byte representation.
    pub fn from_bytes(geometry: SegmentGeometry, width: u32, bits: Vec<u8>) -> Result<Self> {
        let mut table = CellTable::zeroed(geometry, width)?;
        if bits.len() != table.bits.len() {
            return Err(Error::InvalidConfig("packed cell data has the wrong length"));
        }
        table.bits = bits;
        Ok(table)
    }

    #[inline]
    pub fn geometry(&self) -> &SegmentGeometry {
        &self.geometry
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    /// Number of cells.
    #[inline]
    pub fn num_cells(&self) -> usize {
        self.geometry.total_cells()
    }

    /// Total payload size in bits (`cells * width`).
    #[inline]
    pub fn payload_bits(&self) -> u64 {
        self.num_cells() as u64 * self.width as u64
    }

    #[inline]
    pub fn as_bytes(&self) -> &[u8] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, cell: usize) -> u64 {
        debug_assert!(cell < self.num_cells());
        let bit = cell as u64 * self.width as u64;
        let byte = (bit / 8) as usize;
        let shift = (bit % 8) as u32;
        let mut window = [0u8; 8];
        let avail = (self.bits.len() - byte).min(8);
        window[..avail].copy_from_slice(&self.bits[byte..byte + avail]);
        (u64::from_le_bytes(window) >> shift) & self.mask()
    }

    #[inline]
    pub fn set(&mut self, cell: usize, value: u64) {
        debug_assert!(cell < self.num_cells());
        debug_assert!(value <= self.mask());
        let bit = cell as u64 * self.width as u64;
        let byte = (bit / 8) as usize;
        let shift = (bit % 8) as u32;
        let mut window = [0u8; 8];
        let avail = (self.bits.len() - byte).min(8);
        window[..avail].copy_from_slice(&self.bits[byte..byte + avail]);
        let mut word = u64::from_le_bytes(window);
        word &= !(self.mask() << shift);
        word |= value << shift;
        self.bits[byte..byte + avail].copy_from_slice(&word.to_le_bytes()[..avail]);
    }

    #[inline]
    fn mask(&self) -> u64 {
        (1u64 << self.width) - 1
    }
}

/// Packs `width`-bit values LSB-first into bytes; the same layout as
/// [`CellTable`] but for flat value lists.
pub(crate) fn pack_values(values: &[u64], width: u32) -> Vec<u8> {
    let total_bits = values.len() as u64 * width as u64;
    let mut out = vec![0u8; total_bits.div_ceil(8) as usize];
    for (i, &v) in values.iter().enumerate() {
        debug_assert!(width == 64 || v < (1u64 << width));
        let bit = i as u64 * width as u64;
        let byte = (bit / 8) as usize;
        let shift = (bit % 8) as u32;
        let mut window = [0u8; 8];
        let avail = (out.len() - byte).min(8);
        window[..avail].copy_from_slice(&out[byte..byte + avail]);
        let word = u64::from_le_bytes(window) | (v << shift);
        out[byte..byte + avail].copy_from_slice(&word.to_le_bytes()[..avail]);
    }
    out
}

/// Inverse of [`pack_values`].
pub(crate) fn unpack_values(bytes: &[u8], count: usize, width: u32) -> Vec<u64> {
    let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let bit = i as u64 * width as u64;
        let byte = (bit / 8) as usize;
        let shift = (bit % 8) as u32;
        let mut window = [0u8; 8];
        let avail = (bytes.len() - byte).min(8);
        window[..avail].copy_from_slice(&bytes[byte..byte + avail]);
        out.push((u64::from_le_bytes(window) >> shift) & mask);
    }
    out
}
