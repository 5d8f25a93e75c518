//! Restart-on-failure fuse filter, used as the auxiliary structure and as
//! a size baseline.
//!
//! Plain peeling only ever removes keys at degree-1 cells, so the builder
//! gets away with two per-cell aggregates (a counter and the XOR of the
//! incident digests) instead of incidence lists; a stuck core is handled by
//! reseeding and growing the table, not by abandoning keys.

use crate::build::query_main;
use crate::error::{Error, Result};
use crate::hashing::{self, KeyDigest, SegmentGeometry};
use crate::table::CellTable;

/// Auxiliary fuse filters are 4-wise unless configured otherwise.
pub const FUSE_DEFAULT_ARITY: usize = 4;
/// Default retry budget.
pub const FUSE_MAX_ATTEMPTS: u32 = 100;

/// Size factor over the key count for the first attempt; slightly above
/// the asymptotic fuse constants to absorb finite-size effects.
fn size_factor(arity: usize) -> f64 {
    if arity <= 3 {
        1.15
    } else {
        1.13
    }
}

/// A fully peeled fuse filter: no abandoned keys, hence no false negatives.
/// The empty-set filter stores no table at all, which keeps it unambiguous
/// even though 0 is a legal fingerprint.
#[derive(Clone, Debug)]
pub struct FuseFilter {
    width: u32,
    seed: u64,
    arity: usize,
    table: Option<CellTable>,
    attempts: u32,
}

impl FuseFilter {
    /// Builds over deduplicated digests, reseeding and growing the table by
    /// 5% per failed peel, up to `max_attempts`.
    pub fn build(
        digests: &[KeyDigest],
        width: u32,
        arity: usize,
        segment_len: usize,
        base_seed: u64,
        max_attempts: u32,
    ) -> Result<FuseFilter> {
        if !(2..=hashing::MAX_ARITY).contains(&arity) {
            return Err(Error::InvalidConfig("arity must be between 2 and 8"));
        }
        if max_attempts == 0 {
            return Err(Error::InvalidConfig("max_attempts must be at least 1"));
        }
        if digests.is_empty() {
            return Ok(FuseFilter { width, seed: base_seed, arity, table: None, attempts: 0 });
        }

        let n = digests.len();
        let floor = n + 64;
        let mut target = (n as f64 * size_factor(arity)).ceil();
        let mut seed = base_seed;
        for attempt in 1..=max_attempts {
            let cells = (target as usize).max(floor).max(arity * segment_len);
            let geometry = SegmentGeometry::for_keys(cells, segment_len, arity)?;
            if let Some(stack) = try_peel(digests, seed, &geometry) {
                let table = assign(&stack, seed, &geometry, width)?;
                return Ok(FuseFilter { width, seed, arity, table: Some(table), attempts: attempt });
            }
            seed = hashing::mix64(seed.wrapping_add(1));
            target *= 1.05;
        }
        Err(Error::ConstructionExhausted { attempts: max_attempts })
    }

    /// True when the digest is (probably) in the set; false when it is
    /// definitely not. The empty filter rejects everything.
    #[inline]
    pub fn contains(&self, d: KeyDigest) -> bool {
        match &self.table {
            None => false,
            Some(table) => query_main(table, d, self.seed),
        }
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Number of attempts the successful build used (0 for the empty
    /// filter or a deserialized one).
    #[inline]
    pub fn attempts(&self) -> u32 {
        self.attempts
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.table.is_none()
    }

    /// Table cells, or 0 for the empty filter.
    #[inline]
    pub fn num_cells(&self) -> usize {
        self.table.as_ref().map_or(0, CellTable::num_cells)
    }

    /// Cell payload bits (`cells * width`).
    #[inline]
    pub fn payload_bits(&self) -> u64 {
        self.num_cells() as u64 * self.width as u64
    }

    pub(crate) fn table(&self) -> Option<&CellTable> {
        self.table.as_ref()
    }

    pub(crate) fn from_parts(
        width: u32,
        seed: u64,
        arity: usize,
        table: Option<CellTable>,
    ) -> FuseFilter {
        FuseFilter { width, seed, arity, table, attempts: 0 }
    }
}

/// One peel attempt with count+XOR aggregates; returns the peel order as
/// `(digest, resolved cell)` or `None` on a stuck core.
fn try_peel(digests: &[KeyDigest], seed: u64, geometry: &SegmentGeometry) -> Option<Vec<(u64, u32)>> {
    let m = geometry.total_cells();
    let mut counts = vec![0u32; m];
    let mut xors = vec![0u64; m];
    for &d in digests {
        for &cell in hashing::locations(d, seed, geometry).as_slice() {
            counts[cell] += 1;
            xors[cell] ^= d.0;
        }
    }

    let mut queue: Vec<u32> =
        (0..m as u32).filter(|&c| counts[c as usize] == 1).collect();
    let mut stack = Vec::with_capacity(digests.len());
    while let Some(cell) = queue.pop() {
        if counts[cell as usize] != 1 {
            continue;
        }
        // With a single incident key left, the XOR aggregate is its digest.
        let d = xors[cell as usize];
        stack.push((d, cell));
        for &other in hashing::locations(KeyDigest(d), seed, geometry).as_slice() {
            counts[other] -= 1;
            xors[other] ^= d;
            if counts[other] == 1 {
                queue.push(other as u32);
            }
        }
    }
    (stack.len() == digests.len()).then_some(stack)
}

fn assign(
    stack: &[(u64, u32)],
    seed: u64,
    geometry: &SegmentGeometry,
    width: u32,
) -> Result<CellTable> {
    let mut table = CellTable::zeroed(*geometry, width)?;
    for &(d, cell) in stack.iter().rev() {
        let d = KeyDigest(d);
        let mut value = hashing::fingerprint_unchecked(d, seed, width);
        for &other in hashing::locations(d, seed, geometry).as_slice() {
            if other != cell as usize {
                value ^= table.get(other);
            }
        }
        table.set(cell as usize, value);
    }
    Ok(table)
}
