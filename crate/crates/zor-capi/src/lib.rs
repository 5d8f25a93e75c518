//! C ABI for ZOR filters.
//!
//! Filters are opaque handles created by `zor_filter_build` or
//! `zor_filter_deserialize` and released with `zor_filter_free`. Every
//! function returns a `ZorStatus`; results travel through out-pointers.
//! Handles are immutable after construction and safe to share across
//! threads. The generated header lives at `include/zor.h`.

use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use zor::{AuxMode, FilterParams, Policy};

/// Status code of every C-ABI call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZorStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A parameter value is out of its supported range.
    InvalidArgument = 2,
    /// Construction failed (auxiliary retries exhausted).
    BuildFailed = 3,
    /// Serialized filter data is malformed or truncated.
    FormatError = 4,
    /// The library caught an internal panic instead of unwinding into C.
    InternalPanic = 5,
}

/// Build-time knobs. Zero-initialise and fill, or start from
/// `zor_params_default`. A zero `segment_len`, `aux_bits` or
/// `cascade_bits` selects the built-in default.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct ZorBuildParams {
    /// Main fingerprint bits (1..=32).
    pub fingerprint_bits: u32,
    /// Hash locations per key (2..=8).
    pub arity: u32,
    /// Main-table segment length (power of two), or 0 to size from n.
    pub segment_len: u32,
    /// Seed for cell locations and fingerprints.
    pub filter_seed: u64,
    /// Seed for key digesting.
    pub key_seed: u64,
    /// Intervention policy: 0 random, 1 lightest, 2 heaviest, 3 most-deg2,
    /// 4 min-max-degree.
    pub policy: u32,
    /// Minimal-degree cells examined per blocking event (>= 1).
    pub scan_budget: u32,
    /// Abandoned-key handling: 0 none (pure ZOR), 1 fuse, 2 cascade.
    pub aux_mode: u32,
    /// Auxiliary fingerprint bits, or 0 for fingerprint_bits + 8.
    pub aux_bits: u32,
    /// Cascade final-stage bits, or 0 for aux_bits + 8.
    pub cascade_bits: u32,
}

/// Read-only build statistics of a filter.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct ZorStats {
    /// Distinct keys the filter was built over.
    pub key_count: u64,
    /// Keys abandoned during peeling.
    pub abandoned: u64,
    /// Abandoned keys covered by the auxiliary stage.
    pub aux_stored: u64,
    /// abandoned / key_count.
    pub alpha: f64,
    /// Payload bits per key (0 for an empty filter).
    pub bits_per_key: f64,
    /// Analytic combined false-positive rate.
    pub epsilon_tot: f64,
}

/// Opaque filter handle.
pub struct ZorFilter {
    inner: zor::ZorFilter,
}

fn params_from_c(params: &ZorBuildParams) -> Result<FilterParams, ZorStatus> {
    let policy = Policy::ALL
        .into_iter()
        .find(|p| u32::from(policy_id(*p)) == params.policy)
        .ok_or(ZorStatus::InvalidArgument)?;
    let aux_mode = match params.aux_mode {
        0 => AuxMode::None,
        1 => AuxMode::Fuse,
        2 => AuxMode::Cascade,
        _ => return Err(ZorStatus::InvalidArgument),
    };
    let converted = FilterParams {
        fingerprint_bits: params.fingerprint_bits,
        arity: params.arity as usize,
        segment_len: (params.segment_len > 0).then_some(params.segment_len as usize),
        filter_seed: params.filter_seed,
        key_seed: params.key_seed,
        policy,
        scan_budget: params.scan_budget,
        aux_mode,
        aux_bits: (params.aux_bits > 0).then_some(params.aux_bits),
        cascade_bits: (params.cascade_bits > 0).then_some(params.cascade_bits),
        partitions: 1,
    };
    converted.validate().map_err(|_| ZorStatus::InvalidArgument)?;
    Ok(converted)
}

fn policy_id(policy: Policy) -> u8 {
    match policy {
        Policy::Random => 0,
        Policy::Lightest => 1,
        Policy::Heaviest => 2,
        Policy::MostDeg2 => 3,
        Policy::MinMaxDegree => 4,
    }
}

fn status_of(error: &zor::Error) -> ZorStatus {
    match error {
        zor::Error::InvalidConfig(_) => ZorStatus::InvalidArgument,
        zor::Error::ConstructionExhausted { .. } => ZorStatus::BuildFailed,
        zor::Error::Format { .. } => ZorStatus::FormatError,
    }
}

fn guarded(body: impl FnOnce() -> ZorStatus) -> ZorStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => ZorStatus::InternalPanic,
    }
}

/// Fills `params` with the default configuration (16-bit fingerprints,
/// 5-wise, fuse auxiliary).
///
/// # Safety
/// `params` must be valid for writes (or null, which is reported).
#[no_mangle]
pub unsafe extern "C" fn zor_params_default(params: *mut ZorBuildParams) -> ZorStatus {
    if params.is_null() {
        return ZorStatus::NullPointer;
    }
    let defaults = FilterParams::default();
    unsafe {
        *params = ZorBuildParams {
            fingerprint_bits: defaults.fingerprint_bits,
            arity: defaults.arity as u32,
            segment_len: 0,
            filter_seed: defaults.filter_seed,
            key_seed: defaults.key_seed,
            policy: u32::from(policy_id(defaults.policy)),
            scan_budget: defaults.scan_budget,
            aux_mode: 1,
            aux_bits: 0,
            cascade_bits: 0,
        };
    }
    ZorStatus::Ok
}

/// Builds a filter over `key_count` byte-sequence keys. `keys[i]` points
/// at `key_lens[i]` bytes (a null pointer is allowed for zero-length
/// keys). On success `*out` owns the filter; release it with
/// `zor_filter_free`.
///
/// # Safety
/// `keys` and `key_lens` must be valid for `key_count` reads and each
/// `keys[i]` readable for `key_lens[i]` bytes.
#[no_mangle]
pub unsafe extern "C" fn zor_filter_build(
    keys: *const *const u8,
    key_lens: *const usize,
    key_count: usize,
    params: *const ZorBuildParams,
    out: *mut *mut ZorFilter,
) -> ZorStatus {
    if params.is_null() || out.is_null() || (key_count > 0 && (keys.is_null() || key_lens.is_null())) {
        return ZorStatus::NullPointer;
    }
    guarded(|| {
        let converted = match params_from_c(unsafe { &*params }) {
            Ok(p) => p,
            Err(status) => return status,
        };
        let mut digests = Vec::with_capacity(key_count);
        for i in 0..key_count {
            let len = unsafe { *key_lens.add(i) };
            let ptr = unsafe { *keys.add(i) };
            if ptr.is_null() && len > 0 {
                return ZorStatus::NullPointer;
            }
            let key: &[u8] =
                if len == 0 { &[] } else { unsafe { std::slice::from_raw_parts(ptr, len) } };
            digests.push(zor::digest(key, converted.key_seed));
        }
        match zor::ZorFilter::build_from_digests(digests, &converted) {
            Ok(filter) => {
                unsafe { *out = Box::into_raw(Box::new(ZorFilter { inner: filter })) };
                ZorStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Membership test: sets `*found` to true when the key is (probably) in
/// the set, false when it is definitely not.
///
/// # Safety
/// `key` must be readable for `key_len` bytes (null allowed when
/// `key_len` is 0).
#[no_mangle]
pub unsafe extern "C" fn zor_filter_contains(
    filter: *const ZorFilter,
    key: *const u8,
    key_len: usize,
    found: *mut bool,
) -> ZorStatus {
    if filter.is_null() || found.is_null() || (key.is_null() && key_len > 0) {
        return ZorStatus::NullPointer;
    }
    guarded(|| {
        let bytes: &[u8] =
            if key_len == 0 { &[] } else { unsafe { std::slice::from_raw_parts(key, key_len) } };
        unsafe { *found = (*filter).inner.contains(bytes) };
        ZorStatus::Ok
    })
}

/// Copies the filter's build statistics into `*stats`.
///
/// # Safety
/// `filter` must be a live handle from this library and `stats` valid for
/// writes (either may be null, which is reported).
#[no_mangle]
pub unsafe extern "C" fn zor_filter_stats(filter: *const ZorFilter, stats: *mut ZorStats) -> ZorStatus {
    if filter.is_null() || stats.is_null() {
        return ZorStatus::NullPointer;
    }
    guarded(|| {
        let inner = unsafe { &(*filter).inner };
        let meta = inner.meta();
        let report = inner.size_report();
        unsafe {
            *stats = ZorStats {
                key_count: meta.key_count,
                abandoned: meta.abandoned,
                aux_stored: meta.aux_stored,
                alpha: meta.alpha,
                bits_per_key: report.map_or(0.0, |r| r.bits_per_key),
                epsilon_tot: inner.epsilon_tot(),
            };
        }
        ZorStatus::Ok
    })
}

/// Serializes the filter. On success `*bytes` points at `*len` bytes owned
/// by the library; release them with `zor_bytes_free`.
///
/// # Safety
/// `filter` must be a live handle from this library; `bytes` and `len`
/// must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn zor_filter_serialize(
    filter: *const ZorFilter,
    bytes: *mut *mut u8,
    len: *mut usize,
) -> ZorStatus {
    if filter.is_null() || bytes.is_null() || len.is_null() {
        return ZorStatus::NullPointer;
    }
    guarded(|| {
        let encoded = unsafe { &(*filter).inner }.to_bytes().into_boxed_slice();
        unsafe {
            *len = encoded.len();
            *bytes = Box::into_raw(encoded) as *mut u8;
        }
        ZorStatus::Ok
    })
}

/// Decodes a serialized filter. On success `*out` owns the new handle.
///
/// # Safety
/// `bytes` must be readable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn zor_filter_deserialize(
    bytes: *const u8,
    len: usize,
    out: *mut *mut ZorFilter,
) -> ZorStatus {
    if bytes.is_null() || out.is_null() {
        return ZorStatus::NullPointer;
    }
    guarded(|| {
        let data = unsafe { std::slice::from_raw_parts(bytes, len) };
        match zor::ZorFilter::from_bytes(data) {
            Ok(filter) => {
                unsafe { *out = Box::into_raw(Box::new(ZorFilter { inner: filter })) };
                ZorStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Releases a filter handle. Null is a no-op.
///
/// # Safety
/// `filter` must be null or a handle obtained from this library that has
/// not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn zor_filter_free(filter: *mut ZorFilter) {
    if !filter.is_null() {
        drop(unsafe { Box::from_raw(filter) });
    }
}

/// Releases a byte buffer returned by `zor_filter_serialize`. The length
/// must be the one the library reported. Null is a no-op.
///
/// # Safety
/// `bytes` must be null or exactly the (pointer, length) pair returned by
/// `zor_filter_serialize`, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn zor_bytes_free(bytes: *mut u8, len: usize) {
    if !bytes.is_null() {
        drop(unsafe { Box::from_raw(std::ptr::slice_from_raw_parts_mut(bytes, len)) });
    }
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn zor_status_message(status: ZorStatus) -> *const c_char {
    let message: &'static [u8] = match status {
        ZorStatus::Ok => b"ok\0",
        ZorStatus::NullPointer => b"a required pointer argument was null\0",
        ZorStatus::InvalidArgument => b"a parameter value is out of range\0",
        ZorStatus::BuildFailed => b"construction failed\0",
        ZorStatus::FormatError => b"malformed filter data\0",
        ZorStatus::InternalPanic => b"internal panic\0",
    };
    message.as_ptr() as *const c_char
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_params() -> ZorBuildParams {
        let mut params = std::mem::MaybeUninit::uninit();
        assert_eq!(unsafe { zor_params_default(params.as_mut_ptr()) }, ZorStatus::Ok);
        unsafe { params.assume_init() }
    }

    fn build_sample(n: u64) -> *mut ZorFilter {
        let keys: Vec<[u8; 8]> = (0..n).map(|i| zor::synthetic_key(i, 9)).collect();
        let ptrs: Vec<*const u8> = keys.iter().map(|k| k.as_ptr()).collect();
        let lens: Vec<usize> = keys.iter().map(|k| k.len()).collect();
        let mut params = default_params();
        params.key_seed = 9;
        let mut handle: *mut ZorFilter = std::ptr::null_mut();
        let status = unsafe {
            zor_filter_build(ptrs.as_ptr(), lens.as_ptr(), keys.len(), &params, &mut handle)
        };
        assert_eq!(status, ZorStatus::Ok);
        assert!(!handle.is_null());
        handle
    }

    #[test]
    fn build_query_free_round_trip() {
        let handle = build_sample(20_000);
        let mut found = false;
        for i in 0..20_000u64 {
            let key = zor::synthetic_key(i, 9);
            let status =
                unsafe { zor_filter_contains(handle, key.as_ptr(), key.len(), &mut found) };
            assert_eq!(status, ZorStatus::Ok);
            assert!(found, "key {i} missing through the C ABI");
        }
        let miss_rate = (0..20_000u64)
            .filter(|i| {
                let key = zor::synthetic_key(i + 1_000_000, 9);
                unsafe { zor_filter_contains(handle, key.as_ptr(), key.len(), &mut found) };
                found
            })
            .count();
        assert!(miss_rate < 40, "false-positive count {miss_rate} is far above 2^-16 scale");
        unsafe { zor_filter_free(handle) };
    }

    #[test]
    fn stats_are_populated() {
        let handle = build_sample(10_000);
        let mut stats = std::mem::MaybeUninit::<ZorStats>::uninit();
        assert_eq!(unsafe { zor_filter_stats(handle, stats.as_mut_ptr()) }, ZorStatus::Ok);
        let stats = unsafe { stats.assume_init() };
        assert_eq!(stats.key_count, 10_000);
        assert!(stats.alpha > 0.0 && stats.alpha < 0.2);
        assert!(stats.bits_per_key >= 16.0);
        assert!(stats.epsilon_tot > 0.0);
        unsafe { zor_filter_free(handle) };
    }

    #[test]
    fn serialize_deserialize_round_trip() {
        let handle = build_sample(5_000);
        let mut bytes: *mut u8 = std::ptr::null_mut();
        let mut len = 0usize;
        assert_eq!(unsafe { zor_filter_serialize(handle, &mut bytes, &mut len) }, ZorStatus::Ok);
        assert!(len > 60);

        let mut decoded: *mut ZorFilter = std::ptr::null_mut();
        let status = unsafe { zor_filter_deserialize(bytes, len, &mut decoded) };
        assert_eq!(status, ZorStatus::Ok);
        let mut found = false;
        let key = zor::synthetic_key(123, 9);
        unsafe { zor_filter_contains(decoded, key.as_ptr(), key.len(), &mut found) };
        assert!(found);

        // A truncated buffer must be rejected cleanly.
        let mut truncated: *mut ZorFilter = std::ptr::null_mut();
        let status = unsafe { zor_filter_deserialize(bytes, len - 1, &mut truncated) };
        assert_eq!(status, ZorStatus::FormatError);
        assert!(truncated.is_null());

        unsafe {
            zor_bytes_free(bytes, len);
            zor_filter_free(decoded);
            zor_filter_free(handle);
        }
    }

    #[test]
    fn null_and_invalid_arguments_are_reported() {
        assert_eq!(unsafe { zor_params_default(std::ptr::null_mut()) }, ZorStatus::NullPointer);

        let mut handle: *mut ZorFilter = std::ptr::null_mut();
        let status = unsafe {
            zor_filter_build(std::ptr::null(), std::ptr::null(), 5, &default_params(), &mut handle)
        };
        assert_eq!(status, ZorStatus::NullPointer);

        let mut params = default_params();
        params.fingerprint_bits = 99;
        let status = unsafe {
            zor_filter_build(std::ptr::null(), std::ptr::null(), 0, &params, &mut handle)
        };
        assert_eq!(status, ZorStatus::InvalidArgument);

        params = default_params();
        params.policy = 17;
        let status = unsafe {
            zor_filter_build(std::ptr::null(), std::ptr::null(), 0, &params, &mut handle)
        };
        assert_eq!(status, ZorStatus::InvalidArgument);

        let mut found = false;
        let status =
            unsafe { zor_filter_contains(std::ptr::null(), std::ptr::null(), 0, &mut found) };
        assert_eq!(status, ZorStatus::NullPointer);

        let message = zor_status_message(ZorStatus::FormatError);
        let text = unsafe { std::ffi::CStr::from_ptr(message) }.to_str().unwrap();
        assert_eq!(text, "malformed filter data");
    }

    #[test]
    fn empty_key_set_builds_an_always_false_filter() {
        let params = default_params();
        let mut handle: *mut ZorFilter = std::ptr::null_mut();
        let status = unsafe {
            zor_filter_build(std::ptr::null(), std::ptr::null(), 0, &params, &mut handle)
        };
        assert_eq!(status, ZorStatus::Ok);
        let mut found = true;
        unsafe { zor_filter_contains(handle, b"anything".as_ptr(), 8, &mut found) };
        assert!(!found);
        unsafe { zor_filter_free(handle) };
    }
}
