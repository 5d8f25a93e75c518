//! The user-facing composite filter: a deterministic-peel main table plus
//! an auxiliary structure covering the abandoned keys the main table does
//! not already accept by chance.

use std::time::Instant;

use crate::analysis;
use crate::build::{query_main, BuildGraph, Policy};
use crate::error::{Error, Result};
use crate::fuse::{FuseFilter, FUSE_DEFAULT_ARITY, FUSE_MAX_ATTEMPTS};
use crate::hashing::{self, KeyDigest, SegmentGeometry, MAX_FINGERPRINT_BITS};
use crate::table::CellTable;

/// Auxiliary sets smaller than this skip the fuse filter and store a plain
/// sorted fingerprint list instead.
pub(crate) const LIST_FALLBACK_THRESHOLD: usize = 64;

/// Seed tweak separating auxiliary hashing from the main structure. Part
/// of the serialization contract: the fingerprint-list seed is re-derived
/// from the header seed on load.
const AUX_SEED_TWEAK: u64 = 0xD6E8_FEB8_6659_FD93;

pub(crate) fn derive_aux_seed(filter_seed: u64) -> u64 {
    hashing::mix64(filter_seed ^ AUX_SEED_TWEAK)
}

/// Tweak for the partition-routing seed. Routing must not share a hash
/// with any per-partition location seed: a partition whose keys were
/// selected by the same hash that places their cells crowds one side of
/// its table and abandonment explodes.
const PARTITION_SEED_TWEAK: u64 = 0x2545_F491_4F6C_DD1D;

fn derive_partition_seed(key_seed: u64) -> u64 {
    hashing::mix64(key_seed ^ PARTITION_SEED_TWEAK)
}

/// Default segment length for a key count: the power of two nearest to
/// `sqrt(n)`, clamped to `[256, 4096]`.
///
/// Segment sweeps show abandonment is minimised by balancing two effects
/// that both grow it: short segments weaken the local structure (the
/// fluctuation floor scales like `1 / sqrt(arity * segment_len)`), while
/// long segments leave too few segments for peeling to propagate across.
/// The lower clamp keeps tiny sets on few whole segments, where the
/// round-up padding gives peeling enough slack to finish nearly complete.
pub fn auto_segment_len(key_count: usize) -> usize {
    if key_count == 0 {
        return 256;
    }
    let exp = ((key_count as f64).log2() / 2.0).round() as u32;
    (1usize << exp.min(12)).clamp(256, 4096)
}

/// Segment length for an auxiliary fuse filter over `aux_keys` keys: the
/// power of two nearest to `2.5 * sqrt(k)`, clamped to `[64, 2048]`.
/// Derived from the serialized auxiliary key count on load, so it is part
/// of the serialization contract.
///
/// Over the 1k..60k range this tracks the segment length that minimises
/// the final table size under the retry-and-grow schedule; fixed 64-cell
/// segments never peel on the first attempt at these sizes and land
/// 5-10% larger.
pub(crate) fn aux_segment_len(aux_keys: usize) -> usize {
    if aux_keys == 0 {
        return 64;
    }
    let exp = (2.5 * (aux_keys as f64).sqrt()).log2().round() as u32;
    (1usize << exp.min(11)).clamp(64, 2048)
}

/// How abandoned keys are covered.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AuxMode {
    /// Pure ZOR: no auxiliary, keys in the residual set are false
    /// negatives.
    None,
    /// A 4-wise fuse filter (or a sorted fingerprint list for tiny sets).
    Fuse,
    /// A second deterministic-peel stage whose own remainder goes to a
    /// final fuse filter or list; depth is capped at two peel stages.
    Cascade,
}

impl AuxMode {
    pub fn name(&self) -> &'static str {
        match self {
            AuxMode::None => "none",
            AuxMode::Fuse => "fuse",
            AuxMode::Cascade => "cascade",
        }
    }
}

impl std::fmt::Display for AuxMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AuxMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<AuxMode> {
        match s {
            "none" => Ok(AuxMode::None),
            "fuse" => Ok(AuxMode::Fuse),
            "cascade" => Ok(AuxMode::Cascade),
            _ => Err(Error::InvalidConfig("unknown aux mode (expected none, fuse or cascade)")),
        }
    }
}

/// All build-time knobs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterParams {
    /// Main cell and fingerprint width in bits (1..=32).
    pub fingerprint_bits: u32,
    /// Hash locations per key (2..=8).
    pub arity: usize,
    /// Main-table segment length in cells; a power of two. `None` sizes it
    /// from the key count via [`auto_segment_len`].
    pub segment_len: Option<usize>,
    /// Seed for location and fingerprint hashing.
    pub filter_seed: u64,
    /// Seed for key digesting (and partition routing).
    pub key_seed: u64,
    /// Intervention policy at blocking events.
    pub policy: Policy,
    /// Minimal-degree cells examined per blocking event.
    pub scan_budget: u32,
    /// Auxiliary handling of abandoned keys.
    pub aux_mode: AuxMode,
    /// Auxiliary fingerprint bits; defaults to `fingerprint_bits + 8`.
    pub aux_bits: Option<u32>,
    /// Final-stage bits for cascades; defaults to `aux_bits + 8`.
    pub cascade_bits: Option<u32>,
    /// Independent buckets for partitioned builds (>= 1).
    pub partitions: usize,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            fingerprint_bits: 16,
            arity: 5,
            segment_len: None,
            filter_seed: 0,
            key_seed: 0,
            policy: Policy::MostDeg2,
            scan_budget: 8,
            aux_mode: AuxMode::Fuse,
            aux_bits: None,
            cascade_bits: None,
            partitions: 1,
        }
    }
}

impl FilterParams {
    /// Resolved auxiliary width.
    pub fn aux_bits(&self) -> u32 {
        self.aux_bits.unwrap_or(self.fingerprint_bits + 8)
    }

    /// Resolved cascade final-stage width.
    pub fn cascade_bits(&self) -> u32 {
        self.cascade_bits.unwrap_or(self.aux_bits() + 8)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fingerprint_bits == 0 || self.fingerprint_bits > 32 {
            return Err(Error::InvalidConfig("fingerprint width must be between 1 and 32 bits"));
        }
        if self.arity < 2 || self.arity > hashing::MAX_ARITY {
            return Err(Error::InvalidConfig("arity must be between 2 and 8"));
        }
        if let Some(len) = self.segment_len {
            if !len.is_power_of_two() || len > (1 << 30) {
                return Err(Error::InvalidConfig("segment length must be a power of two up to 2^30"));
            }
        }
        if self.scan_budget == 0 {
            return Err(Error::InvalidConfig("scan budget must be at least 1"));
        }
        if self.partitions == 0 {
            return Err(Error::InvalidConfig("partition count must be at least 1"));
        }
        if self.aux_mode != AuxMode::None {
            let aux = self.aux_bits();
            if aux < self.fingerprint_bits || aux > MAX_FINGERPRINT_BITS {
                return Err(Error::InvalidConfig(
                    "auxiliary width must be between the main width and 56 bits",
                ));
            }
        }
        if self.aux_mode == AuxMode::Cascade {
            let last = self.cascade_bits();
            if last < self.aux_bits() || last > MAX_FINGERPRINT_BITS {
                return Err(Error::InvalidConfig(
                    "cascade final width must be between the auxiliary width and 56 bits",
                ));
            }
        }
        Ok(())
    }
}

/// The auxiliary structure actually built.
#[derive(Clone, Debug)]
pub enum Auxiliary {
    None,
    Fuse(FuseFilter),
    List(FingerprintList),
    Cascade(Box<ZorFilter>),
}

/// Sorted, deduplicated fingerprints of the residual keys; the fallback
/// for sets too small to be worth a fuse filter.
#[derive(Clone, Debug)]
pub struct FingerprintList {
    width: u32,
    seed: u64,
    values: Vec<u64>,
}

impl FingerprintList {
    pub(crate) fn build(digests: &[KeyDigest], width: u32, seed: u64) -> FingerprintList {
        let mut values: Vec<u64> =
            digests.iter().map(|&d| hashing::fingerprint_unchecked(d, seed, width)).collect();
        values.sort_unstable();
        values.dedup();
        FingerprintList { width, seed, values }
    }

    pub(crate) fn from_parts(width: u32, seed: u64, values: Vec<u64>) -> FingerprintList {
        FingerprintList { width, seed, values }
    }

    #[inline]
    pub fn contains(&self, d: KeyDigest) -> bool {
        self.values
            .binary_search(&hashing::fingerprint_unchecked(d, self.seed, self.width))
            .is_ok()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    pub(crate) fn values(&self) -> &[u64] {
        &self.values
    }
}

/// Build statistics of one filter.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BuildMeta {
    /// Distinct keys the filter was built over.
    pub key_count: u64,
    /// Keys abandoned by interventions.
    pub abandoned: u64,
    /// Abandoned keys the main table misses, i.e. the auxiliary's input.
    pub aux_stored: u64,
    /// `abandoned / key_count` (0 for the empty filter).
    pub alpha: f64,
    /// Attempts the auxiliary fuse build used (0 when no fuse was built).
    pub fuse_attempts: u32,
    /// Wall-clock build time; 0 for deserialized filters.
    pub build_nanos: u64,
}

/// Derived size and error figures; available once the filter holds keys.
#[derive(Clone, Copy, Debug)]
pub struct SizeReport {
    /// Cell and list payload bits per key, headers excluded.
    pub bits_per_key: f64,
    /// Analytic combined false-positive rate.
    pub epsilon_tot: f64,
    /// `bits_per_key / -log2(epsilon_tot)`.
    pub overhead_rho: f64,
    /// `aux_stored / key_count`; only for pure ZOR, where the residual
    /// keys stay false negatives.
    pub false_negative_rate: Option<f64>,
}

/// An immutable composite filter.
#[derive(Clone, Debug)]
pub struct ZorFilter {
    pub(crate) params: FilterParams,
    pub(crate) main: CellTable,
    pub(crate) aux: Auxiliary,
    pub(crate) meta: BuildMeta,
}

/// Digests, deduplicates and sorts a key set.
pub fn digest_keys<I, K>(keys: I, key_seed: u64) -> Vec<KeyDigest>
where
    I: IntoIterator<Item = K>,
    K: AsRef<[u8]>,
{
    let mut digests: Vec<KeyDigest> =
        keys.into_iter().map(|k| hashing::digest(k.as_ref(), key_seed)).collect();
    digests.sort_unstable();
    digests.dedup();
    digests
}

impl ZorFilter {
    /// Builds a filter over a key set. Keys are deduplicated by digest;
    /// `params.partitions` is ignored here (see
    /// [`PartitionedZorFilter::build`]).
    pub fn build<I, K>(keys: I, params: &FilterParams) -> Result<ZorFilter>
    where
        I: IntoIterator<Item = K>,
        K: AsRef<[u8]>,
    {
        params.validate()?;
        Self::build_from_digests(digest_keys(keys, params.key_seed), params)
    }

    /// Builds from pre-computed digests (sorted and deduplicated
    /// internally).
    pub fn build_from_digests(mut digests: Vec<KeyDigest>, params: &FilterParams) -> Result<ZorFilter> {
        params.validate()?;
        digests.sort_unstable();
        digests.dedup();
        let start = Instant::now();
        let mut filter = Self::build_stage(&digests, params, true)?;
        filter.meta.build_nanos = start.elapsed().as_nanos() as u64;
        Ok(filter)
    }

    /// One deterministic-peel stage plus its auxiliary. `digests` must be
    /// sorted and deduplicated. `allow_cascade` is cleared for the nested
    /// stage, capping cascades at depth two.
    fn build_stage(digests: &[KeyDigest], params: &FilterParams, allow_cascade: bool) -> Result<ZorFilter> {
        let n = digests.len();
        let segment_len = params.segment_len.unwrap_or_else(|| auto_segment_len(n));
        let params = FilterParams { segment_len: Some(segment_len), ..*params };
        let geometry = SegmentGeometry::for_keys(n, segment_len, params.arity)?;
        let mut graph = BuildGraph::new(digests, params.filter_seed, geometry)?;
        graph.peel(params.policy, params.scan_budget);
        let main = graph.assign_payloads(params.fingerprint_bits)?;
        let abandoned_count = graph.abandoned().len();

        // Opportunistic skip: an abandoned key the main table already
        // accepts can never be a false negative, so it needs no coverage.
        let mut residual: Vec<KeyDigest> = graph
            .abandoned()
            .iter()
            .map(|&k| digests[k as usize])
            .filter(|&d| !query_main(&main, d, params.filter_seed))
            .collect();
        drop(graph);
        residual.sort_unstable();

        let mut fuse_attempts = 0;
        let aux = match params.aux_mode {
            AuxMode::None => Auxiliary::None,
            AuxMode::Fuse => {
                let aux = build_fuse_or_list(&residual, params.aux_bits(), derive_aux_seed(params.filter_seed))?;
                if let Auxiliary::Fuse(f) = &aux {
                    fuse_attempts = f.attempts();
                }
                aux
            }
            AuxMode::Cascade if allow_cascade => {
                let nested_params = FilterParams {
                    fingerprint_bits: params.aux_bits(),
                    arity: params.arity,
                    segment_len: None,
                    filter_seed: derive_aux_seed(params.filter_seed),
                    key_seed: params.key_seed,
                    policy: params.policy,
                    scan_budget: params.scan_budget,
                    aux_mode: AuxMode::Fuse,
                    aux_bits: Some(params.cascade_bits()),
                    cascade_bits: None,
                    partitions: 1,
                };
                let nested = Self::build_stage(&residual, &nested_params, false)?;
                fuse_attempts = nested.meta.fuse_attempts;
                Auxiliary::Cascade(Box::new(nested))
            }
            AuxMode::Cascade => {
                return Err(Error::InvalidConfig("cascades cannot nest beyond depth two"))
            }
        };

        Ok(ZorFilter {
            params,
            main,
            aux,
            meta: BuildMeta {
                key_count: n as u64,
                abandoned: abandoned_count as u64,
                aux_stored: residual.len() as u64,
                alpha: if n == 0 { 0.0 } else { abandoned_count as f64 / n as f64 },
                fuse_attempts,
                build_nanos: 0,
            },
        })
    }

    /// True when `key` is (probably) in the set; false when it is
    /// definitely not. With an auxiliary enabled there are no false
    /// negatives over the build set.
    pub fn contains(&self, key: &[u8]) -> bool {
        self.contains_digest(hashing::digest(key, self.params.key_seed))
    }

    /// Membership test on a pre-computed digest; checks the main table
    /// first and consults the auxiliary only on a miss.
    pub fn contains_digest(&self, d: KeyDigest) -> bool {
        if self.meta.key_count == 0 {
            return false;
        }
        if query_main(&self.main, d, self.params.filter_seed) {
            return true;
        }
        match &self.aux {
            Auxiliary::None => false,
            Auxiliary::Fuse(f) => f.contains(d),
            Auxiliary::List(l) => l.contains(d),
            Auxiliary::Cascade(nested) => nested.contains_digest(d),
        }
    }

    #[inline]
    pub fn params(&self) -> &FilterParams {
        &self.params
    }

    #[inline]
    pub fn meta(&self) -> &BuildMeta {
        &self.meta
    }

    #[inline]
    pub fn aux(&self) -> &Auxiliary {
        &self.aux
    }

    pub(crate) fn main(&self) -> &CellTable {
        &self.main
    }

    /// Geometry of the main table (for probe ordering and reporting).
    pub fn main_geometry(&self) -> &SegmentGeometry {
        self.main.geometry()
    }

    /// Total cell and list payload bits, all stages, headers excluded.
    pub fn payload_bits(&self) -> u64 {
        self.main.payload_bits()
            + match &self.aux {
                Auxiliary::None => 0,
                Auxiliary::Fuse(f) => f.payload_bits(),
                Auxiliary::List(l) => l.len() as u64 * l.width() as u64,
                Auxiliary::Cascade(nested) => nested.payload_bits(),
            }
    }

    /// Analytic combined false-positive rate of all stages. The list
    /// fallback is charged its `count * 2^-width` union bound.
    pub fn epsilon_tot(&self) -> f64 {
        let main = 2f64.powi(-(self.params.fingerprint_bits as i32));
        let aux = match &self.aux {
            Auxiliary::None => 0.0,
            Auxiliary::Fuse(f) => 2f64.powi(-(f.width() as i32)),
            Auxiliary::List(l) => (l.len() as f64 * 2f64.powi(-(l.width() as i32))).min(1.0),
            Auxiliary::Cascade(nested) => nested.epsilon_tot(),
        };
        analysis::epsilon_tot(main, aux).expect("stage rates are probabilities")
    }

    /// Size and error figures; `None` for the empty filter, where bits per
    /// key is undefined.
    pub fn size_report(&self) -> Option<SizeReport> {
        if self.meta.key_count == 0 {
            return None;
        }
        let bits_per_key = self.payload_bits() as f64 / self.meta.key_count as f64;
        let epsilon_tot = self.epsilon_tot();
        Some(SizeReport {
            bits_per_key,
            epsilon_tot,
            overhead_rho: analysis::overhead_rho(bits_per_key, epsilon_tot),
            false_negative_rate: match self.aux {
                Auxiliary::None => {
                    Some(self.meta.aux_stored as f64 / self.meta.key_count as f64)
                }
                _ => None,
            },
        })
    }

    /// Serializes to the versioned on-disk format; bit-exact across
    /// platforms.
    pub fn to_bytes(&self) -> Vec<u8> {
        crate::serial::serialize(self)
    }

    /// Decodes a serialized filter.
    pub fn from_bytes(bytes: &[u8]) -> Result<ZorFilter> {
        crate::serial::deserialize(bytes)
    }

    pub(crate) fn from_parts(
        params: FilterParams,
        main: CellTable,
        aux: Auxiliary,
        meta: BuildMeta,
    ) -> ZorFilter {
        ZorFilter { params, main, aux, meta }
    }
}

fn build_fuse_or_list(residual: &[KeyDigest], width: u32, seed: u64) -> Result<Auxiliary> {
    if residual.len() < LIST_FALLBACK_THRESHOLD {
        return Ok(Auxiliary::List(FingerprintList::build(residual, width, seed)));
    }
    match FuseFilter::build(
        residual,
        width,
        FUSE_DEFAULT_ARITY,
        aux_segment_len(residual.len()),
        seed,
        FUSE_MAX_ATTEMPTS,
    ) {
        Ok(f) => Ok(Auxiliary::Fuse(f)),
        Err(Error::ConstructionExhausted { .. }) => {
            Ok(Auxiliary::List(FingerprintList::build(residual, width, seed)))
        }
        Err(e) => Err(e),
    }
}

/// Aggregate statistics of a partitioned build.
#[derive(Clone, Copy, Debug, Default)]
pub struct AggregateMeta {
    pub key_count: u64,
    pub abandoned: u64,
    pub aux_stored: u64,
    /// Keyset-weighted abandoned fraction.
    pub alpha: f64,
    pub payload_bits: u64,
    /// Wall-clock time of the whole partitioned build.
    pub build_nanos: u64,
}

/// `partitions` independent filters with hash routing; equivalent to
/// querying the single filter the key's partition routes to.
#[derive(Clone, Debug)]
pub struct PartitionedZorFilter {
    key_seed: u64,
    partition_seed: u64,
    parts: Vec<ZorFilter>,
    build_nanos: u64,
}

impl PartitionedZorFilter {
    /// Routes keys into `params.partitions` buckets and builds the bucket
    /// filters concurrently, each under its own derived seed.
    pub fn build<I, K>(keys: I, params: &FilterParams) -> Result<PartitionedZorFilter>
    where
        I: IntoIterator<Item = K>,
        K: AsRef<[u8]>,
    {
        params.validate()?;
        Self::build_from_digests(digest_keys(keys, params.key_seed), params)
    }

    pub fn build_from_digests(
        mut digests: Vec<KeyDigest>,
        params: &FilterParams,
    ) -> Result<PartitionedZorFilter> {
        params.validate()?;
        digests.sort_unstable();
        digests.dedup();
        let start = Instant::now();

        let count = params.partitions;
        let partition_seed = derive_partition_seed(params.key_seed);
        let mut buckets: Vec<Vec<KeyDigest>> = vec![Vec::new(); count];
        for d in digests {
            buckets[hashing::partition_of(d, count, partition_seed)].push(d);
        }

        let mut part_params: Vec<FilterParams> = Vec::with_capacity(count);
        for index in 0..count {
            part_params.push(FilterParams {
                filter_seed: hashing::mix64(params.filter_seed.wrapping_add(index as u64)),
                partitions: 1,
                ..*params
            });
        }

        let parts = build_all(buckets, &part_params)?;
        Ok(PartitionedZorFilter {
            key_seed: params.key_seed,
            partition_seed,
            parts,
            build_nanos: start.elapsed().as_nanos() as u64,
        })
    }

    pub fn contains(&self, key: &[u8]) -> bool {
        self.contains_digest(hashing::digest(key, self.key_seed))
    }

    #[inline]
    pub fn contains_digest(&self, d: KeyDigest) -> bool {
        self.parts[self.route(d)].contains_digest(d)
    }

    /// The partition a digest routes to.
    #[inline]
    pub fn route(&self, d: KeyDigest) -> usize {
        hashing::partition_of(d, self.parts.len(), self.partition_seed)
    }

    #[inline]
    pub fn partitions(&self) -> &[ZorFilter] {
        &self.parts
    }

    pub fn aggregate_meta(&self) -> AggregateMeta {
        let mut agg = AggregateMeta { build_nanos: self.build_nanos, ..Default::default() };
        for part in &self.parts {
            agg.key_count += part.meta.key_count;
            agg.abandoned += part.meta.abandoned;
            agg.aux_stored += part.meta.aux_stored;
            agg.payload_bits += part.payload_bits();
        }
        if agg.key_count > 0 {
            agg.alpha = agg.abandoned as f64 / agg.key_count as f64;
        }
        agg
    }
}

/// Builds one filter per bucket on a small worker pool; results are merged
/// in partition order.
fn build_all(buckets: Vec<Vec<KeyDigest>>, params: &[FilterParams]) -> Result<Vec<ZorFilter>> {
    use std::sync::atomic::{AtomicUsize, Ordering};

    let count = buckets.len();
    if count == 1 {
        let bucket = buckets.into_iter().next().unwrap();
        return Ok(vec![ZorFilter::build_stage(&bucket, &params[0], true)?]);
    }

    let workers = std::thread::available_parallelism().map_or(1, |p| p.get()).min(count);
    let next = AtomicUsize::new(0);
    let mut results: Vec<Result<Option<ZorFilter>>> = Vec::new();
    results.resize_with(count, || Ok(None));
    let slots: Vec<std::sync::Mutex<&mut Result<Option<ZorFilter>>>> =
        results.iter_mut().map(std::sync::Mutex::new).collect();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= count {
                    break;
                }
                let built = ZorFilter::build_stage(&buckets[index], &params[index], true);
                **slots[index].lock().unwrap() = built.map(Some);
            });
        }
    });

    let mut parts = Vec::with_capacity(count);
    for slot in results {
        parts.push(slot?.expect("every partition index was claimed by a worker"));
    }
    Ok(parts)
}
