//! Versioned, little-endian, bit-exact serialization.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "ZORF" | version u8 | width u8 | arity u8 | log2(segment_len) u8
//! policy u8 | aux_kind u8 | reserved u16 = 0
//! filter_seed u64 | key_seed u64 | key_count u64 | cells u64
//! abandoned u64 | aux_stored u64
//! main cell bits, LSB-first, ceil(cells * width / 8) bytes
//! aux blob:
//!   kind 0 (none):    empty
//!   kind 1 (fuse):    width u8 | arity u8 | seed u64 | cells u64 | cell bits
//!   kind 2 (list):    width u8 | count u64 | packed values
//!   kind 3 (cascade): a complete nested filter in this same format
//! ```
//!
//! Unused bits of a final partial byte must be zero, so decoding a valid
//! stream and re-encoding it reproduces it byte for byte.

use crate::build::Policy;
use crate::error::{Error, Result};
use crate::filter::{
    aux_segment_len, derive_aux_seed, AuxMode, Auxiliary, BuildMeta, FilterParams,
    FingerprintList, ZorFilter,
};
use crate::fuse::FuseFilter;
use crate::hashing::{SegmentGeometry, MAX_ARITY, MAX_FINGERPRINT_BITS};
use crate::table::{pack_values, unpack_values, CellTable};

const MAGIC: [u8; 4] = *b"ZORF";
const VERSION: u8 = 1;

const AUX_KIND_NONE: u8 = 0;
const AUX_KIND_FUSE: u8 = 1;
const AUX_KIND_LIST: u8 = 2;
const AUX_KIND_CASCADE: u8 = 3;

pub(crate) fn serialize(filter: &ZorFilter) -> Vec<u8> {
    let mut out = Vec::new();
    write_filter(&mut out, filter);
    out
}

fn write_filter(out: &mut Vec<u8>, filter: &ZorFilter) {
    let params = &filter.params;
    let main = filter.main();
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(params.fingerprint_bits as u8);
    out.push(params.arity as u8);
    out.push(params.segment_len.expect("built filters carry a resolved segment length").trailing_zeros() as u8);
    out.push(params.policy.wire_id());
    out.push(aux_kind(&filter.aux));
    out.extend_from_slice(&[0u8; 2]);
    out.extend_from_slice(&params.filter_seed.to_le_bytes());
    out.extend_from_slice(&params.key_seed.to_le_bytes());
    out.extend_from_slice(&filter.meta.key_count.to_le_bytes());
    out.extend_from_slice(&(main.num_cells() as u64).to_le_bytes());
    out.extend_from_slice(&filter.meta.abandoned.to_le_bytes());
    out.extend_from_slice(&filter.meta.aux_stored.to_le_bytes());
    out.extend_from_slice(main.as_bytes());
    match &filter.aux {
        Auxiliary::None => {}
        Auxiliary::Fuse(fuse) => {
            out.push(fuse.width() as u8);
            out.push(fuse.arity() as u8);
            out.extend_from_slice(&fuse.seed().to_le_bytes());
            out.extend_from_slice(&(fuse.num_cells() as u64).to_le_bytes());
            if let Some(table) = fuse.table() {
                out.extend_from_slice(table.as_bytes());
            }
        }
        Auxiliary::List(list) => {
            out.push(list.width() as u8);
            out.extend_from_slice(&(list.len() as u64).to_le_bytes());
            out.extend_from_slice(&pack_values(list.values(), list.width()));
        }
        Auxiliary::Cascade(nested) => {
            debug_assert!(
                !matches!(nested.aux, Auxiliary::Cascade(_)),
                "cascades are depth-limited at build time"
            );
            write_filter(out, nested);
        }
    }
}

fn aux_kind(aux: &Auxiliary) -> u8 {
    match aux {
        Auxiliary::None => AUX_KIND_NONE,
        Auxiliary::Fuse(_) => AUX_KIND_FUSE,
        Auxiliary::List(_) => AUX_KIND_LIST,
        Auxiliary::Cascade(_) => AUX_KIND_CASCADE,
    }
}

pub(crate) fn deserialize(bytes: &[u8]) -> Result<ZorFilter> {
    let mut reader = Reader { bytes, pos: 0 };
    let filter = read_filter(&mut reader, true)?;
    if reader.pos != bytes.len() {
        return Err(Error::Format { offset: reader.pos, reason: "trailing bytes after filter" });
    }
    Ok(filter)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < len {
            return Err(Error::Format { offset: self.pos, reason: "truncated input" });
        }
        let slice = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn fail_at<T>(&self, offset: usize, reason: &'static str) -> Result<T> {
        Err(Error::Format { offset, reason })
    }
}

/// Reads packed `width`-bit fields and verifies the padding bits of a final
/// partial byte are zero.
fn read_packed<'a>(reader: &mut Reader<'a>, count: u64, width: u32) -> Result<&'a [u8]> {
    let total_bits = count
        .checked_mul(width as u64)
        .filter(|&b| b / 8 < usize::MAX as u64)
        .ok_or(Error::Format { offset: reader.pos, reason: "payload size overflow" })?;
    let len = total_bits.div_ceil(8) as usize;
    let start = reader.pos;
    let bytes = reader.take(len)?;
    if total_bits % 8 != 0 {
        let used = (total_bits % 8) as u32;
        if bytes[len - 1] >> used != 0 {
            return Err(Error::Format { offset: start + len - 1, reason: "nonzero padding bits" });
        }
    }
    Ok(bytes)
}

fn read_filter(reader: &mut Reader<'_>, top_level: bool) -> Result<ZorFilter> {
    let header_start = reader.pos;
    if reader.take(4)? != MAGIC {
        return reader.fail_at(header_start, "bad magic");
    }
    if reader.u8()? != VERSION {
        return reader.fail_at(header_start + 4, "unsupported version");
    }
    let width = reader.u8()? as u32;
    // Nested cascade stages may use the wider auxiliary range.
    let width_cap = if top_level { 32 } else { MAX_FINGERPRINT_BITS };
    if width == 0 || width > width_cap {
        return reader.fail_at(header_start + 5, "invalid fingerprint width");
    }
    let arity = reader.u8()? as usize;
    if !(2..=MAX_ARITY).contains(&arity) {
        return reader.fail_at(header_start + 6, "invalid arity");
    }
    let log2_segment = reader.u8()?;
    if log2_segment > 30 {
        return reader.fail_at(header_start + 7, "invalid segment length");
    }
    let segment_len = 1usize << log2_segment;
    let policy = Policy::from_wire_id(reader.u8()?)
        .ok_or(Error::Format { offset: header_start + 8, reason: "unknown policy" })?;
    let kind = reader.u8()?;
    if kind > AUX_KIND_CASCADE {
        return reader.fail_at(header_start + 9, "unknown auxiliary kind");
    }
    if kind == AUX_KIND_CASCADE && !top_level {
        return reader.fail_at(header_start + 9, "cascade nested beyond depth two");
    }
    if reader.take(2)? != [0, 0] {
        return reader.fail_at(header_start + 10, "reserved bytes must be zero");
    }
    let filter_seed = reader.u64()?;
    let key_seed = reader.u64()?;
    let key_count = reader.u64()?;
    let cells = reader.u64()?;
    let abandoned = reader.u64()?;
    let aux_stored = reader.u64()?;
    if abandoned > key_count {
        return reader.fail_at(header_start + 44, "abandoned count exceeds key count");
    }
    if aux_stored > abandoned {
        return reader.fail_at(header_start + 52, "auxiliary count exceeds abandoned count");
    }

    if cells > usize::MAX as u64 || cells % segment_len as u64 != 0 {
        return reader.fail_at(header_start + 36, "cell count not a whole number of segments");
    }
    let segments = cells as usize / segment_len;
    if segments < arity {
        return reader.fail_at(header_start + 36, "fewer segments than the arity");
    }
    let geometry = SegmentGeometry::new(segment_len, segments, arity)
        .map_err(|_| Error::Format { offset: header_start + 36, reason: "inconsistent geometry" })?;

    let main_bytes = read_packed(reader, cells, width)?;
    let main = CellTable::from_bytes(geometry, width, main_bytes.to_vec())
        .expect("validated geometry and width");

    let aux = match kind {
        AUX_KIND_NONE => Auxiliary::None,
        AUX_KIND_FUSE => {
            let aux_width_at = reader.pos;
            let aux_width = reader.u8()? as u32;
            if aux_width < width || aux_width > MAX_FINGERPRINT_BITS {
                return reader.fail_at(aux_width_at, "invalid auxiliary width");
            }
            let aux_arity_at = reader.pos;
            let aux_arity = reader.u8()? as usize;
            if !(2..=MAX_ARITY).contains(&aux_arity) {
                return reader.fail_at(aux_arity_at, "invalid auxiliary arity");
            }
            let seed = reader.u64()?;
            let cells_at = reader.pos;
            let aux_cells = reader.u64()?;
            let table = if aux_cells == 0 {
                None
            } else {
                // The auxiliary segment length is not stored; it is
                // re-derived from the auxiliary key count in the header.
                let aux_segment = aux_segment_len(aux_stored as usize);
                if aux_cells % aux_segment as u64 != 0 {
                    return reader.fail_at(cells_at, "auxiliary cells not a whole number of segments");
                }
                let aux_segments = (aux_cells as usize) / aux_segment;
                if aux_segments < aux_arity {
                    return reader.fail_at(cells_at, "auxiliary has fewer segments than its arity");
                }
                let aux_geometry = SegmentGeometry::new(aux_segment, aux_segments, aux_arity)
                    .map_err(|_| Error::Format { offset: cells_at, reason: "inconsistent auxiliary geometry" })?;
                let bytes = read_packed(reader, aux_cells, aux_width)?;
                Some(
                    CellTable::from_bytes(aux_geometry, aux_width, bytes.to_vec())
                        .expect("validated geometry and width"),
                )
            };
            Auxiliary::Fuse(FuseFilter::from_parts(aux_width, seed, aux_arity, table))
        }
        AUX_KIND_LIST => {
            let aux_width_at = reader.pos;
            let aux_width = reader.u8()? as u32;
            if aux_width < width || aux_width > MAX_FINGERPRINT_BITS {
                return reader.fail_at(aux_width_at, "invalid auxiliary width");
            }
            let count_at = reader.pos;
            let count = reader.u64()?;
            if count > aux_stored {
                return reader.fail_at(count_at, "list is larger than the auxiliary key count");
            }
            let bytes = read_packed(reader, count, aux_width)?;
            let values = unpack_values(bytes, count as usize, aux_width);
            if values.windows(2).any(|w| w[0] >= w[1]) {
                return reader.fail_at(count_at, "fingerprint list not sorted");
            }
            Auxiliary::List(FingerprintList::from_parts(
                aux_width,
                derive_aux_seed(filter_seed),
                values,
            ))
        }
        AUX_KIND_CASCADE => Auxiliary::Cascade(Box::new(read_filter(reader, false)?)),
        _ => unreachable!("kind validated above"),
    };

    let (aux_mode, aux_bits, cascade_bits) = match &aux {
        Auxiliary::None => (AuxMode::None, None, None),
        Auxiliary::Fuse(f) => (AuxMode::Fuse, Some(f.width()), None),
        Auxiliary::List(l) => (AuxMode::Fuse, Some(l.width()), None),
        Auxiliary::Cascade(nested) => {
            let last = match &nested.aux {
                Auxiliary::Fuse(f) => Some(f.width()),
                Auxiliary::List(l) => Some(l.width()),
                _ => None,
            };
            (AuxMode::Cascade, Some(nested.params.fingerprint_bits), last)
        }
    };

    let params = FilterParams {
        fingerprint_bits: width,
        arity,
        segment_len: Some(segment_len),
        filter_seed,
        key_seed,
        policy,
        scan_budget: FilterParams::default().scan_budget,
        aux_mode,
        aux_bits,
        cascade_bits,
        partitions: 1,
    };
    let meta = BuildMeta {
        key_count,
        abandoned,
        aux_stored,
        alpha: if key_count == 0 { 0.0 } else { abandoned as f64 / key_count as f64 },
        fuse_attempts: 0,
        build_nanos: 0,
    };
    Ok(ZorFilter::from_parts(params, main, aux, meta))
}
