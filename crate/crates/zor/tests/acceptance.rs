//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `cargo test --test acceptance -- --nocapture`
//! to see the measurements).

use zor::{
    analysis, digest_keys, fingerprint, locations, mix64, synthetic_key, AuxMode, BuildGraph,
    FilterParams, KeyDigest, PartitionedZorFilter, Policy, SegmentGeometry, ZorFilter,
};

fn synthetic_digests(n: u64, key_seed: u64) -> Vec<KeyDigest> {
    digest_keys((0..n).map(|i| synthetic_key(i, key_seed)), key_seed)
}

fn negative_digests(n: u64, queries: u64, key_seed: u64) -> Vec<KeyDigest> {
    (0..queries).map(|i| zor::digest(&synthetic_key(n + i, key_seed), key_seed)).collect()
}

/// Criterion 1: with a fuse auxiliary there are no false negatives, for
/// every arity, fingerprint width and set size in the grid, exhaustively.
#[test]
fn criterion_01_zero_false_negatives() {
    for n in [1_000u64, 100_000, 1_000_000] {
        let digests = synthetic_digests(n, n);
        for arity in 3..=8usize {
            for bits in [8u32, 16] {
                let params = FilterParams {
                    fingerprint_bits: bits,
                    arity,
                    aux_mode: AuxMode::Fuse,
                    key_seed: n,
                    ..FilterParams::default()
                };
                let filter = ZorFilter::build_from_digests(digests.clone(), &params).unwrap();
                let misses = digests.iter().filter(|&&d| !filter.contains_digest(d)).count();
                assert_eq!(
                    misses, 0,
                    "false negatives at n={n} arity={arity} bits={bits}"
                );
            }
        }
    }
    println!("criterion 1 (zero false negatives, 36-cell grid): PASS");
}

/// Criterion 2: the maintained query agrees with a from-scratch XOR
/// recomputation for every key, and kept keys satisfy the identity exactly.
#[test]
fn criterion_02_xor_identity_oracle() {
    for (n, arity, bits) in [(0u64, 3usize, 8u32), (1, 2, 8), (37, 8, 16), (1_000, 3, 8), (1_000, 5, 13)] {
        let digests = synthetic_digests(n, 7 + n);
        let seed = 0x5EED ^ n;
        let segment_len = zor::auto_segment_len(digests.len());
        let geometry = SegmentGeometry::for_keys(digests.len(), segment_len, arity).unwrap();
        let mut graph = BuildGraph::new(&digests, seed, geometry).unwrap();
        graph.peel(Policy::MostDeg2, 8);
        let table = graph.assign_payloads(bits).unwrap();

        let abandoned: std::collections::HashSet<u32> =
            graph.abandoned().iter().copied().collect();
        for (index, &d) in digests.iter().enumerate() {
            let mut acc = 0u64;
            for &cell in locations(d, seed, &geometry).as_slice() {
                acc ^= table.get(cell);
            }
            let holds = acc == fingerprint(d, seed, bits).unwrap();
            assert_eq!(
                holds,
                zor::query_main(&table, d, seed),
                "query_main diverges from the recomputation at key {index}"
            );
            if !abandoned.contains(&(index as u32)) {
                assert!(holds, "kept key {index} violates the XOR identity (n={n})");
            }
        }
        assert_eq!(graph.peel_order().len() + graph.abandoned().len(), n as usize);
    }
    println!("criterion 2 (XOR identity oracle): PASS");
}

/// Criterion 3: measured FPR within 4 sigma of the two-stage composition
/// at F=8, G=16, a million keys and a million disjoint negative probes.
#[test]
fn criterion_03_false_positive_rate() {
    let n = 1_000_000u64;
    let queries = 1_000_000u64;
    let params = FilterParams {
        fingerprint_bits: 8,
        aux_bits: Some(16),
        aux_mode: AuxMode::Fuse,
        ..FilterParams::default()
    };
    let filter = ZorFilter::build_from_digests(synthetic_digests(n, 0), &params).unwrap();
    let hits =
        negative_digests(n, queries, 0).iter().filter(|&&d| filter.contains_digest(d)).count();
    let measured = hits as f64 / queries as f64;
    let analytic = 2f64.powi(-8) + 2f64.powi(-16) - 2f64.powi(-24);
    let sigma = (analytic * (1.0 - analytic) / queries as f64).sqrt();
    let z = (measured - analytic) / sigma;
    assert!(
        z.abs() <= 4.0,
        "measured FPR {measured:.6} vs analytic {analytic:.6} is {z:.2} sigma off"
    );
    println!(
        "criterion 3 (FPR composition): PASS: measured {measured:.6}, analytic {analytic:.6}, z = {z:+.2}"
    );
}

/// Criterion 4: abandonment magnitudes at a million keys under default
/// policy and segment sizing, medians over 5 seeds, within [0.5x, 2x] of
/// the reference values and non-increasing in the arity.
#[test]
fn criterion_04_abandonment_magnitudes() {
    let n = 1_000_000u64;
    let reference = [(3usize, 0.061f64), (4, 0.021), (5, 0.009), (6, 0.006), (7, 0.005), (8, 0.004)];
    let mut medians = Vec::new();
    for &(arity, _) in &reference {
        let mut alphas: Vec<f64> = (0..5u64)
            .map(|seed| {
                let params = FilterParams {
                    fingerprint_bits: 8,
                    arity,
                    aux_mode: AuxMode::None,
                    filter_seed: seed,
                    key_seed: seed,
                    ..FilterParams::default()
                };
                ZorFilter::build_from_digests(synthetic_digests(n, seed), &params)
                    .unwrap()
                    .meta()
                    .alpha
            })
            .collect();
        alphas.sort_by(f64::total_cmp);
        medians.push(alphas[2]);
    }

    let mut failures = Vec::new();
    for ((arity, reference_alpha), median) in reference.iter().zip(&medians) {
        let (low, high) = (0.5 * reference_alpha, 2.0 * reference_alpha);
        if !(low..=high).contains(median) {
            failures.push(format!(
                "arity {arity}: median alpha {:.4}% outside [{:.4}%, {:.4}%]",
                median * 100.0,
                low * 100.0,
                high * 100.0
            ));
        }
    }
    for window in medians.windows(2).zip(reference.windows(2)) {
        let (pair, arities) = window;
        if pair[1] > pair[0] {
            failures.push(format!(
                "alpha increased from arity {} ({:.4}%) to {} ({:.4}%)",
                arities[0].0,
                pair[0] * 100.0,
                arities[1].0,
                pair[1] * 100.0
            ));
        }
    }
    let table: Vec<String> = reference
        .iter()
        .zip(&medians)
        .map(|((a, r), m)| format!("N={a}: {:.3}% (reference {:.1}%)", m * 100.0, r * 100.0))
        .collect();
    if failures.is_empty() {
        println!("criterion 4 (abandonment magnitudes): PASS: {}", table.join(", "));
    } else {
        println!("criterion 4 (abandonment magnitudes): FAIL: {}", table.join(", "));
        panic!("abandonment out of band at n=10^6:\n  {}", failures.join("\n  "));
    }
}

/// Criterion 5: near-optimal space at F=32, N=8, G=40 over a million keys.
#[test]
fn criterion_05_near_optimal_space() {
    let n = 1_000_000u64;
    let params = FilterParams {
        fingerprint_bits: 32,
        arity: 8,
        aux_bits: Some(40),
        aux_mode: AuxMode::Fuse,
        ..FilterParams::default()
    };
    let filter = ZorFilter::build_from_digests(synthetic_digests(n, 0), &params).unwrap();
    let report = filter.size_report().unwrap();
    let line = format!(
        "bits/key {:.5}, epsilon_tot {:.3e}, rho {:.5} (alpha {:.4}%)",
        report.bits_per_key,
        report.epsilon_tot,
        report.overhead_rho,
        filter.meta().alpha * 100.0
    );
    if report.overhead_rho <= 1.02 {
        println!("criterion 5 (near-optimal space): PASS: {line}");
    } else {
        println!("criterion 5 (near-optimal space): FAIL: {line}");
        panic!("overhead rho {} exceeds 1.02", report.overhead_rho);
    }
}

/// Criterion 6: the closed-form auxiliary width matches the brute-force
/// grid minimizer within 0.1 bits, and the minimizer balances b = alpha*a
/// within 1%, across the (F, alpha) grid.
#[test]
fn criterion_06_appendix_oracle() {
    for bits in [4u32, 8, 16, 24, 32] {
        for alpha in [1e-4f64, 1e-3, 1e-2, 1e-1] {
            let eps = 2f64.powi(-(bits as i32)) * (1.0 + alpha);
            let (a, b) = analysis::numeric_optimal_split(eps, alpha);
            let oracle_bits = -b.log2();
            let closed_form = analysis::optimal_aux_bits(bits, alpha).unwrap().unwrap().exact;
            assert!(
                (oracle_bits - closed_form).abs() <= 0.1,
                "F={bits} alpha={alpha}: oracle {oracle_bits:.4} vs closed form {closed_form:.4}"
            );
            assert!(
                (b / a - alpha).abs() <= 0.01 * alpha,
                "F={bits} alpha={alpha}: balance ratio {} is off by more than 1%",
                b / a
            );
        }
    }
    println!("criterion 6 (balance-condition oracle over 20-cell grid): PASS");
}

/// Criterion 7: the worked cascade overhead numbers.
#[test]
fn criterion_07_cascade_deltas() {
    let fuse = analysis::cascade_delta(0.005, 16, 1.075);
    let cascaded = analysis::cascade_delta(0.005, 16, 1.01);
    assert!(
        (0.0080..=0.0082).contains(&fuse),
        "fuse-auxiliary delta {fuse} outside [0.80%, 0.82%]"
    );
    assert!(
        (0.0075..=0.0077).contains(&cascaded),
        "cascaded delta {cascaded} outside [0.75%, 0.77%]"
    );
    println!(
        "criterion 7 (cascade deltas): PASS: {:.4}% and {:.4}%",
        fuse * 100.0,
        cascaded * 100.0
    );
}

/// Criterion 8: builds are deterministic, serialization round-trips to the
/// byte, and a decoded filter answers identically on 100k probes.
#[test]
fn criterion_08_determinism_and_format() {
    for params in [
        FilterParams::default(),
        FilterParams { aux_mode: AuxMode::None, ..FilterParams::default() },
        FilterParams { aux_mode: AuxMode::Cascade, ..FilterParams::default() },
    ] {
        let n = 60_000u64;
        let first =
            ZorFilter::build_from_digests(synthetic_digests(n, 1), &params).unwrap().to_bytes();
        let second =
            ZorFilter::build_from_digests(synthetic_digests(n, 1), &params).unwrap().to_bytes();
        assert_eq!(first, second, "two builds from identical inputs must be byte-identical");

        let decoded = ZorFilter::from_bytes(&first).unwrap();
        assert_eq!(decoded.to_bytes(), first, "serialize(deserialize(x)) must be x");

        let original = ZorFilter::from_bytes(&first).unwrap();
        for i in 0..100_000u64 {
            let key = synthetic_key(i * 7 + 3, 999);
            assert_eq!(original.contains(&key), decoded.contains(&key));
        }
    }
    println!("criterion 8 (determinism and format round-trip): PASS");
}

/// Criterion 9: a thousand random configurations all terminate with every
/// key either peeled or abandoned.
#[test]
fn criterion_09_termination_fuzz() {
    let mut state = 0xF00D_F00Du64;
    let mut rng = move || {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        mix64(state)
    };
    for round in 0..1_000u32 {
        let n = rng() % 10_001;
        let arity = 2 + (rng() % 7) as usize;
        let segment_len = 1usize << (rng() % 12); // 1..=2048 cells
        let policy = Policy::ALL[(rng() % 5) as usize];
        let scan_budget = 1 + (rng() % 16) as u32;
        let filter_seed = rng();
        let key_seed = rng();

        let digests = synthetic_digests(n, key_seed);
        let geometry = SegmentGeometry::for_keys(digests.len(), segment_len, arity).unwrap();
        let mut graph = BuildGraph::new(&digests, filter_seed, geometry).unwrap();
        graph.peel(policy, scan_budget);
        assert_eq!(
            graph.peel_order().len() + graph.abandoned().len(),
            n as usize,
            "round {round}: peel accounting broken (n={n}, arity={arity}, l={segment_len}, {policy})"
        );

        // Every tenth round, push the same configuration through the
        // composite (with a random auxiliary mode) end to end.
        if round % 10 == 0 {
            let params = FilterParams {
                fingerprint_bits: 1 + (rng() % 32) as u32,
                arity,
                segment_len: Some(segment_len),
                filter_seed,
                key_seed,
                policy,
                scan_budget,
                aux_mode: [AuxMode::None, AuxMode::Fuse, AuxMode::Cascade][(rng() % 3) as usize],
                aux_bits: None,
                cascade_bits: None,
                partitions: 1,
            };
            let filter = ZorFilter::build_from_digests(digests, &params).unwrap();
            assert_eq!(filter.meta().key_count, n);
            assert!(filter.meta().aux_stored <= filter.meta().abandoned);
            assert!(filter.meta().abandoned <= n);
        }
    }
    println!("criterion 9 (termination fuzz, 1000 configurations): PASS");
}

/// Supplementary reference run for criteria 4 and 5 (not itself a
/// criterion, and ignored by default for its ten-million-key builds; run
/// with `-- --ignored`): at ten times the suite's scale the same defaults
/// land inside every abandonment band and far under the space gate.
#[test]
#[ignore = "ten-million-key builds (roughly two minutes); run with -- --ignored"]
fn reference_scale_abandonment_and_space() {
    let n = 10_000_000u64;
    let digests = synthetic_digests(n, 0);
    let reference = [(3usize, 0.061f64), (4, 0.021), (5, 0.009), (6, 0.006), (7, 0.005), (8, 0.004)];
    let mut measured = Vec::new();
    for &(arity, reference_alpha) in &reference {
        let params = FilterParams {
            fingerprint_bits: 8,
            arity,
            aux_mode: AuxMode::None,
            ..FilterParams::default()
        };
        let alpha =
            ZorFilter::build_from_digests(digests.clone(), &params).unwrap().meta().alpha;
        measured.push(alpha);
        assert!(
            (0.5 * reference_alpha..=2.0 * reference_alpha).contains(&alpha),
            "arity {arity}: alpha {:.4}% out of band at n=10^7",
            alpha * 100.0
        );
    }
    assert!(measured.windows(2).all(|w| w[1] <= w[0]), "alpha not monotone at n=10^7");

    let params = FilterParams {
        fingerprint_bits: 32,
        arity: 8,
        aux_bits: Some(40),
        ..FilterParams::default()
    };
    let filter = ZorFilter::build_from_digests(digests, &params).unwrap();
    let rho = filter.size_report().unwrap().overhead_rho;
    assert!(rho <= 1.02, "rho {rho} exceeds the gate even at n=10^7");
    let table: Vec<String> = reference
        .iter()
        .zip(&measured)
        .map(|((a, _), m)| format!("N={a}: {:.3}%", m * 100.0))
        .collect();
    println!(
        "reference scale n=10^7: PASS: {}, rho {:.5}",
        table.join(", "),
        rho
    );
}

/// Criterion 10: performance trends, reported but not gated.
#[test]
fn criterion_10_performance_trends_reported() {
    let n = 500_000u64;
    let queries = 500_000u64;
    let params = FilterParams::default();
    let digests = synthetic_digests(n, 3);
    let filter = ZorFilter::build_from_digests(digests.clone(), &params).unwrap();

    let positives: Vec<KeyDigest> = digests.iter().copied().take(queries as usize).collect();
    let negatives = negative_digests(n, queries, 3);
    let geometry = *filter.main_geometry();
    let order_key = |d: &KeyDigest| {
        locations(*d, params.filter_seed, &geometry).as_slice()[0] / geometry.segment_len
    };
    let mut positives_ordered = positives.clone();
    positives_ordered.sort_by_key(order_key);
    let mut negatives_ordered = negatives.clone();
    negatives_ordered.sort_by_key(order_key);

    let time = |probes: &[KeyDigest]| {
        for _ in 0..3 {
            std::hint::black_box(probes.iter().filter(|&&d| filter.contains_digest(d)).count());
        }
        let mut per_pass = Vec::new();
        for _ in 0..5 {
            let started = std::time::Instant::now();
            let hits = probes.iter().filter(|&&d| filter.contains_digest(d)).count();
            let elapsed = started.elapsed().as_nanos() as f64;
            std::hint::black_box(hits);
            per_pass.push(elapsed / probes.len() as f64);
        }
        per_pass.iter().sum::<f64>() / per_pass.len() as f64
    };
    let positive_ns = time(&positives);
    let negative_ns = time(&negatives);
    let positive_ordered_ns = time(&positives_ordered);
    let negative_ordered_ns = time(&negatives_ordered);

    let build_time = |arity: usize| {
        let p = FilterParams { arity, ..params };
        let started = std::time::Instant::now();
        std::hint::black_box(ZorFilter::build_from_digests(digests.clone(), &p).unwrap());
        started.elapsed().as_secs_f64()
    };
    let narrow = build_time(2);
    let wide = build_time(8);

    let cores = std::thread::available_parallelism().map_or(1, |p| p.get());
    let partitioned = FilterParams { partitions: cores, ..params };
    let started = std::time::Instant::now();
    std::hint::black_box(
        PartitionedZorFilter::build_from_digests(digests.clone(), &partitioned).unwrap(),
    );
    let parted_time = started.elapsed().as_secs_f64();
    let single = build_time(params.arity);
    let efficiency = (single / parted_time) / cores as f64;

    println!("criterion 10 (performance trends; reported, not gated): PASS");
    println!("  negative {negative_ns:.0} ns >= positive {positive_ns:.0} ns per query: {}",
        negative_ns >= positive_ns);
    println!(
        "  ordered <= unordered: positive {positive_ordered_ns:.0} vs {positive_ns:.0} ns ({}), negative {negative_ordered_ns:.0} vs {negative_ns:.0} ns ({})",
        positive_ordered_ns <= positive_ns,
        negative_ordered_ns <= negative_ns
    );
    println!(
        "  build time arity 8 vs 2: {:.2}x (reference band 1.5x..3x: {})",
        wide / narrow,
        (1.5..=3.0).contains(&(wide / narrow))
    );
    println!(
        "  partitioned build efficiency at P={cores}: {:.2} (soft target >= 0.7: {})",
        efficiency,
        efficiency >= 0.7
    );
}
