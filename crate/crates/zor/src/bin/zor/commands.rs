use std::fs::File;
use std::hint::black_box;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde_json::Value;
use zor::{
    analysis, digest_keys, synthetic_key, AuxMode, FilterParams, FuseFilter, KeyDigest,
    PartitionedZorFilter, Policy, ZorFilter,
};

use crate::report::{num, Report, Row};
use crate::{CliError, CliResult, FilterArgs, OutputArgs};

fn synthetic_digests(n: u64, key_seed: u64) -> Vec<KeyDigest> {
    digest_keys((0..n).map(|i| synthetic_key(i, key_seed)), key_seed)
}

/// Negative probes: synthetic indices starting past the build range, which
/// yields keys disjoint from the build set.
fn negative_digests(n: u64, queries: u64, key_seed: u64) -> Vec<KeyDigest> {
    (0..queries).map(|i| zor::digest(&synthetic_key(n + i, key_seed), key_seed)).collect()
}

/// Configuration echo carried by every report row.
fn config_columns(params: &FilterParams, n: u64) -> Row {
    let segment_len =
        params.segment_len.unwrap_or_else(|| zor::auto_segment_len(n as usize));
    vec![
        ("n", Value::from(n)),
        ("bits", Value::from(params.fingerprint_bits)),
        ("arity", Value::from(params.arity)),
        ("segment_len", Value::from(segment_len)),
        ("policy", Value::from(params.policy.name())),
        ("scan_budget", Value::from(params.scan_budget)),
        ("aux_mode", Value::from(params.aux_mode.name())),
        (
            "aux_bits",
            if params.aux_mode == AuxMode::None {
                Value::Null
            } else {
                Value::from(params.aux_bits())
            },
        ),
        (
            "cascade_bits",
            if params.aux_mode == AuxMode::Cascade {
                Value::from(params.cascade_bits())
            } else {
                Value::Null
            },
        ),
        ("partitions", Value::from(params.partitions)),
        ("filter_seed", Value::from(params.filter_seed)),
        ("key_seed", Value::from(params.key_seed)),
    ]
}

/// Runs sweep cells, optionally on a small worker pool; row order follows
/// the cell order either way.
fn run_cells<T, F>(cells: Vec<T>, parallel: bool, run: F) -> Vec<Row>
where
    T: Send + Sync,
    F: Fn(&T) -> Row + Sync,
{
    use std::sync::atomic::{AtomicUsize, Ordering};
    if !parallel || cells.len() <= 1 {
        return cells.iter().map(&run).collect();
    }
    let workers = std::thread::available_parallelism().map_or(1, |p| p.get()).min(cells.len());
    let next = AtomicUsize::new(0);
    let mut rows: Vec<Option<Row>> = Vec::new();
    rows.resize_with(cells.len(), || None);
    let slots: Vec<std::sync::Mutex<&mut Option<Row>>> =
        rows.iter_mut().map(std::sync::Mutex::new).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= cells.len() {
                    break;
                }
                let row = run(&cells[index]);
                **slots[index].lock().unwrap() = Some(row);
            });
        }
    });
    rows.into_iter().map(|r| r.expect("every cell was claimed")).collect()
}

/// One sweep build: returns the measurement columns or an error marker, so
/// a failing cell does not abort the sweep.
fn sweep_row(params: &FilterParams, n: u64) -> Row {
    let mut row = config_columns(params, n);
    let digests = synthetic_digests(n, params.key_seed);
    let started = Instant::now();
    match ZorFilter::build_from_digests(digests, params) {
        Ok(filter) => {
            let meta = filter.meta();
            row.extend([
                ("alpha", num(meta.alpha)),
                ("abandoned", Value::from(meta.abandoned)),
                ("aux_stored", Value::from(meta.aux_stored)),
                ("build_ns", Value::from(meta.build_nanos)),
                ("error", Value::String(String::new())),
            ]);
        }
        Err(e) => {
            let _ = started.elapsed();
            row.extend([
                ("alpha", Value::Null),
                ("abandoned", Value::Null),
                ("aux_stored", Value::Null),
                ("build_ns", Value::Null),
                ("error", Value::String(e.to_string())),
            ]);
        }
    }
    row
}

pub fn build(
    keys_path: Option<&Path>,
    synthetic: Option<u64>,
    out: &Path,
    partitions: usize,
    arity: usize,
    args: &FilterArgs,
) -> CliResult<()> {
    let params = args.to_params(arity);
    if partitions > 1 {
        return Err(CliError::Usage(
            "the filter file format holds a single partition; use --partitions 1".to_string(),
        ));
    }
    let digests = match (keys_path, synthetic) {
        (Some(path), None) => file_digests(path, params.key_seed)?,
        (None, Some(n)) => synthetic_digests(n, params.key_seed),
        _ => return Err(CliError::Usage("provide a key file or --synthetic N".to_string())),
    };
    let filter = ZorFilter::build_from_digests(digests, &params)?;
    let bytes = filter.to_bytes();
    std::fs::write(out, &bytes)?;
    eprintln!(
        "built filter over {} keys (alpha {:.4}%, {} auxiliary keys), {} bytes -> {}",
        filter.meta().key_count,
        filter.meta().alpha * 100.0,
        filter.meta().aux_stored,
        bytes.len(),
        out.display()
    );
    Ok(())
}

fn file_digests(path: &Path, key_seed: u64) -> CliResult<Vec<KeyDigest>> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut digests = Vec::new();
    let mut line = Vec::new();
    loop {
        line.clear();
        let read = reader.read_until(b'\n', &mut line)?;
        if read == 0 {
            break;
        }
        if line.last() == Some(&b'\n') {
            line.pop();
        }
        if line.last() == Some(&b'\r') {
            line.pop();
        }
        digests.push(zor::digest(&line, key_seed));
    }
    Ok(digests)
}

pub fn query(filter_path: &Path, probes: Option<&Path>) -> CliResult<()> {
    let bytes = std::fs::read(filter_path)?;
    let filter = ZorFilter::from_bytes(&bytes)?;
    let stdin = std::io::stdin();
    let mut reader: Box<dyn BufRead> = match probes {
        Some(path) => Box::new(BufReader::new(File::open(path)?)),
        None => Box::new(stdin.lock()),
    };
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let mut line = Vec::new();
    loop {
        line.clear();
        let read = reader.read_until(b'\n', &mut line)?;
        if read == 0 {
            break;
        }
        if line.last() == Some(&b'\n') {
            line.pop();
        }
        if line.last() == Some(&b'\r') {
            line.pop();
        }
        out.write_all(if filter.contains(&line) { b"1\n" } else { b"0\n" })?;
    }
    out.flush()?;
    Ok(())
}

pub fn abandon_sweep(
    n_list: &[u64],
    arities: &[usize],
    parallel: bool,
    args: &FilterArgs,
    output: &OutputArgs,
) -> CliResult<()> {
    let mut cells = Vec::new();
    for &n in n_list {
        for &arity in arities {
            cells.push((n, args.to_params(arity)));
        }
    }
    let rows = run_cells(cells, parallel, |(n, params)| sweep_row(params, *n));
    let mut report = Report::default();
    rows.into_iter().for_each(|r| report.push(r));
    report.write(output.json, output.out.as_deref())
}

pub fn segment_sweep(
    n: u64,
    segment_lens: &[usize],
    arities: &[usize],
    parallel: bool,
    args: &FilterArgs,
    output: &OutputArgs,
) -> CliResult<()> {
    let mut cells = Vec::new();
    for &arity in arities {
        for &len in segment_lens {
            cells.push(FilterParams { segment_len: Some(len), ..args.to_params(arity) });
        }
    }
    let rows = run_cells(cells, parallel, |params| sweep_row(params, n));
    let mut report = Report::default();
    rows.into_iter().for_each(|r| report.push(r));
    report.write(output.json, output.out.as_deref())
}

pub fn policy_sweep(
    n: u64,
    policies: &[Policy],
    scan_budgets: &[u32],
    parallel: bool,
    arity: usize,
    args: &FilterArgs,
    output: &OutputArgs,
) -> CliResult<()> {
    let mut cells = Vec::new();
    for &policy in policies {
        for &scan_budget in scan_budgets {
            cells.push(FilterParams { policy, scan_budget, ..args.to_params(arity) });
        }
    }
    let rows = run_cells(cells, parallel, |params| sweep_row(params, n));
    let mut report = Report::default();
    rows.into_iter().for_each(|r| report.push(r));
    report.write(output.json, output.out.as_deref())
}

pub fn fpr(
    n: u64,
    queries: u64,
    partitions: usize,
    arity: usize,
    args: &FilterArgs,
    output: &OutputArgs,
) -> CliResult<()> {
    if queries < 100_000 {
        return Err(CliError::Usage(
            "fpr needs at least 100000 probes for a stable estimate".to_string(),
        ));
    }
    let params = FilterParams { partitions, ..args.to_params(arity) };
    let filter = PartitionedZorFilter::build_from_digests(
        synthetic_digests(n, params.key_seed),
        &params,
    )?;

    let probes = negative_digests(n, queries, params.key_seed);
    let hits = probes.iter().filter(|&&d| filter.contains_digest(d)).count();
    let measured = hits as f64 / queries as f64;
    let analytic = filter.partitions().iter().map(ZorFilter::epsilon_tot).sum::<f64>()
        / filter.partitions().len() as f64;
    let sigma = (analytic * (1.0 - analytic) / queries as f64).sqrt();
    let z = (measured - analytic) / sigma;

    let agg = filter.aggregate_meta();
    let mut row = config_columns(&params, n);
    row.extend([
        ("queries", Value::from(queries)),
        ("fpr_measured", num(measured)),
        ("epsilon_tot", num(analytic)),
        ("z_score", num(z)),
        ("alpha", num(agg.alpha)),
        (
            "false_negative_rate",
            if params.aux_mode == AuxMode::None && agg.key_count > 0 {
                num(agg.aux_stored as f64 / agg.key_count as f64)
            } else {
                Value::Null
            },
        ),
    ]);
    let mut report = Report::default();
    report.push(row);
    report.write(output.json, output.out.as_deref())
}

/// Warm-cache timing: 3 warmup passes, 5 measured passes, mean and median
/// of the per-pass nanoseconds per query.
fn time_probes(filter: &PartitionedZorFilter, probes: &[KeyDigest]) -> (f64, f64, u64) {
    const WARMUPS: usize = 3;
    const PASSES: usize = 5;
    let mut hits = 0u64;
    for _ in 0..WARMUPS {
        hits = probes.iter().filter(|&&d| filter.contains_digest(d)).count() as u64;
        black_box(hits);
    }
    let mut per_pass = Vec::with_capacity(PASSES);
    for _ in 0..PASSES {
        let started = Instant::now();
        let mut pass_hits = 0u64;
        for &d in probes {
            pass_hits += u64::from(filter.contains_digest(d));
        }
        let elapsed = started.elapsed().as_nanos() as f64;
        black_box(pass_hits);
        per_pass.push(elapsed / probes.len() as f64);
    }
    per_pass.sort_by(f64::total_cmp);
    let mean = per_pass.iter().sum::<f64>() / per_pass.len() as f64;
    let p50 = per_pass[per_pass.len() / 2];
    (mean, p50, hits)
}

/// Sorts probes by (partition, start segment) so successive lookups touch
/// nearby memory.
fn order_probes(filter: &PartitionedZorFilter, probes: &mut [KeyDigest]) {
    probes.sort_by_key(|&d| {
        let part = filter.route(d);
        let target = &filter.partitions()[part];
        let geometry = target.main_geometry();
        let first_cell =
            zor::locations(d, target.params().filter_seed, geometry).as_slice()[0];
        (part, first_cell / geometry.segment_len)
    });
}

pub fn query_bench(
    n: u64,
    queries: u64,
    ordered: bool,
    partitions: usize,
    arity: usize,
    args: &FilterArgs,
    output: &OutputArgs,
) -> CliResult<()> {
    if n == 0 || queries == 0 {
        let report = Report::default();
        report.write(output.json, output.out.as_deref())?;
        return Ok(());
    }
    let params = FilterParams { partitions, ..args.to_params(arity) };
    let build_keys = synthetic_digests(n, params.key_seed);
    let filter = PartitionedZorFilter::build_from_digests(build_keys.clone(), &params)?;

    let mut positive: Vec<KeyDigest> =
        (0..queries).map(|i| build_keys[(i % n) as usize]).collect();
    let mut negative = negative_digests(n, queries, params.key_seed);
    if ordered {
        order_probes(&filter, &mut positive);
        order_probes(&filter, &mut negative);
    }

    let mut report = Report::default();
    for (workload, probes, expect_all) in
        [("positive", &positive, true), ("negative", &negative, false)]
    {
        let (mean_ns, p50_ns, hits) = time_probes(&filter, probes);
        if expect_all {
            assert_eq!(hits, queries, "positive probes must all hit");
        }
        let mut row = config_columns(&params, n);
        row.extend([
            ("queries", Value::from(queries)),
            ("ordered", Value::from(ordered)),
            ("workload", Value::from(workload)),
            ("mean_ns_per_query", num(mean_ns)),
            ("p50_ns_per_query", num(p50_ns)),
            ("hit_fraction", num(hits as f64 / queries as f64)),
        ]);
        report.push(row);
    }
    report.write(output.json, output.out.as_deref())
}

pub fn build_bench(
    n_list: &[u64],
    partition_counts: &[usize],
    arity: usize,
    args: &FilterArgs,
    output: &OutputArgs,
) -> CliResult<()> {
    let mut report = Report::default();
    for &n in n_list {
        let digests = synthetic_digests(n, args.key_seed);
        let mut single_ns = None;
        for &partitions in partition_counts {
            let params = FilterParams { partitions, ..args.to_params(arity) };
            let started = Instant::now();
            let filter = PartitionedZorFilter::build_from_digests(digests.clone(), &params)?;
            let elapsed = started.elapsed().as_nanos() as u64;
            black_box(&filter);
            if partitions == 1 {
                single_ns = Some(elapsed);
            }
            let keys_per_sec = n as f64 / (elapsed as f64 / 1e9);
            let efficiency = single_ns
                .map(|t1| (t1 as f64 / elapsed as f64) / partitions as f64)
                .map(num)
                .unwrap_or(Value::Null);
            let agg = filter.aggregate_meta();
            let mut row = config_columns(&params, n);
            row.extend([
                ("build_ns", Value::from(elapsed)),
                ("keys_per_sec", num(keys_per_sec)),
                ("efficiency_vs_single", efficiency),
                ("alpha", num(agg.alpha)),
            ]);
            report.push(row);
        }
    }
    report.write(output.json, output.out.as_deref())
}

pub fn size_report(n: u64, arity: usize, args: &FilterArgs, output: &OutputArgs) -> CliResult<()> {
    let digests = synthetic_digests(n, args.key_seed);
    let bits = args.bits;
    let params = args.to_params(arity);
    let filter = ZorFilter::build_from_digests(digests.clone(), &params)?;
    let size = filter
        .size_report()
        .ok_or(CliError::Usage("size report needs a non-empty key set".to_string()))?;

    // Measured 4-wise fuse baseline over the same keys at the same
    // fingerprint width, alongside its theoretical sizing constant.
    let fuse_segment = zor::auto_segment_len(digests.len());
    let fuse = FuseFilter::build(&digests, bits, 4, fuse_segment, params.filter_seed, 100)?;
    let fuse_bits_per_key = fuse.payload_bits() as f64 / n as f64;
    let fuse_epsilon = 2f64.powi(-(bits as i32));

    let mut row = config_columns(&params, n);
    row.extend([
        ("alpha", num(filter.meta().alpha)),
        ("aux_stored", Value::from(filter.meta().aux_stored)),
        ("zor_bits_per_key", num(size.bits_per_key)),
        ("zor_epsilon_tot", num(size.epsilon_tot)),
        ("zor_rho", num(size.overhead_rho)),
        (
            "zor_false_negative_rate",
            size.false_negative_rate.map(num).unwrap_or(Value::Null),
        ),
        ("fuse_bits_per_key", num(fuse_bits_per_key)),
        ("fuse_rho", num(analysis::overhead_rho(fuse_bits_per_key, fuse_epsilon))),
        ("fuse_rho_theory", num(1.075)),
        ("mphf_bits_per_key", num(analysis::mphf_baseline_bits(bits))),
        (
            "mphf_rho",
            num(analysis::overhead_rho(analysis::mphf_baseline_bits(bits), fuse_epsilon)),
        ),
    ]);
    let mut report = Report::default();
    report.push(row);
    report.write(output.json, output.out.as_deref())
}
