//! Release gate for the codec. Each test pins one numbered acceptance
//! criterion with explicit tolerances and a wall-clock budget; the table in
//! README.md documents the mapping. Criterion 9 (external-dataset rank
//! check through the `analyze` command) lives in the CLI crate's test
//! suite and is ignored unless the dataset path is supplied.

mod common;

use std::time::{Duration, Instant};

use rand::Rng;
use tcz_core::{
    compress, compute_stats, decode_sparse, decompress, encode_sparse, normalize,
    sparse::{index_width, sparse_size_bytes},
    svd, Archive, BlockData, Error, PipelineConfig, RankSelection, Representation, SizeModel,
    TimeSeriesMatrix, DEFAULT_SWEEP_RATIOS,
};

const C1_MATRICES: usize = 100;
const C1_TOL_REL: f64 = 1e-8;
const C1_BUDGET: Duration = Duration::from_secs(30);

const C2_BUDGET: Duration = Duration::from_secs(1);

const C3_BUDGET: Duration = Duration::from_secs(10);

const C4_BLOCKS: usize = 1000;
const C4_BUDGET: Duration = Duration::from_secs(5);

const C5_MIN_BYTE_SAVING: f64 = 0.10;
const C5_BUDGET: Duration = Duration::from_secs(60);

const C6_MIN_PAYLOAD_REDUCTION: f64 = 0.60;
const C6_BUDGET: Duration = Duration::from_secs(60);

const C7_ARRAYS: usize = 100_000;
const C7_BUDGET: Duration = Duration::from_secs(30);

const C8_MUTATIONS: usize = 10_000;
const C8_BUDGET: Duration = Duration::from_secs(60);

fn finish(name: &str, start: Instant, budget: Duration) {
    let elapsed = start.elapsed();
    assert!(
        elapsed < budget,
        "{name} took {elapsed:?}, budget {budget:?}"
    );
    println!("{name}: PASS in {elapsed:?} (budget {budget:?})");
}

/// For every truncation depth, the squared Frobenius error of the rank-k
/// reconstruction equals the sum of the discarded squared singular values,
/// within 1e-8 of the squared input norm.
#[test]
fn criterion_1_truncation_error_matches_spectrum_tail() {
    let start = Instant::now();
    let mut rng = common::rng(0xACCE_0001);

    let mut shapes: Vec<(usize, usize)> = vec![(60, 200), (1, 200), (60, 1), (1, 1), (37, 36)];
    while shapes.len() < C1_MATRICES {
        shapes.push((rng.gen_range(1..=60), rng.gen_range(1..=200)));
    }

    for (case, &(m, t)) in shapes.iter().enumerate() {
        let x = common::random_matrix(&mut rng, m, t, 10.0);
        let fro_sq = x.frobenius_norm_sq();
        let tol = C1_TOL_REL * fro_sq;

        let f = svd(&x).unwrap();
        let (u, sigma, v) = (f.u(), f.sigma(), f.v());
        let kmax = f.k();

        // Peel one singular triplet off the residual per step so all kmax
        // truncation errors cost one pass each.
        let mut residual = x.values().to_vec();
        let mut tail_sq: f64 = sigma.iter().map(|s| s * s).sum();
        for k in 1..=kmax {
            let s = sigma[k - 1];
            for i in 0..m {
                let ui = u[i * kmax + (k - 1)] * s;
                for j in 0..t {
                    residual[i * t + j] -= ui * v[j * kmax + (k - 1)];
                }
            }
            tail_sq -= s * s;
            let residual_sq: f64 = residual.iter().map(|r| r * r).sum();
            assert!(
                (residual_sq - tail_sq.max(0.0)).abs() <= tol,
                "case {case} ({m}x{t}) k={k}: residual^2={residual_sq} tail={tail_sq} tol={tol}"
            );
        }
    }
    finish("criterion 1", start, C1_BUDGET);
}

/// With normalization and sparsity disabled, the archive stores exactly
/// (m + 1 + t) * k entries, for every tested shape and truncation depth.
#[test]
fn criterion_2_stored_entry_count_formula() {
    let start = Instant::now();
    let mut rng = common::rng(0xACCE_0002);
    let cfg = PipelineConfig {
        normalization: false,
        sparsity: false,
        ..PipelineConfig::default()
    };

    for &m in &[1usize, 2, 3, 5, 8, 12] {
        for &t in &[1usize, 2, 4, 7, 12] {
            let x = common::random_matrix(&mut rng, m, t, 5.0);
            for k in 1..=m.min(t) {
                let (archive, report) = compress(&x, RankSelection::Fixed(k), &cfg).unwrap();
                let expected = ((m + 1 + t) * k) as u64;
                assert_eq!(report.stored_entries, expected, "{m}x{t} k={k}");
                assert_eq!(svd::storage_entries(m, t, k), expected);
                // Raw payloads carry exactly one f64 per stored entry.
                let payload: u64 = [archive.u_block(), archive.sigma_block(), archive.v_block()]
                    .iter()
                    .map(|b| b.payload_len())
                    .sum();
                assert_eq!(payload, expected * 8, "{m}x{t} k={k} payload bytes");
            }
        }
    }

    // The closed form itself, over a wider grid than the compressed cases.
    for m in 1..=50 {
        for t in 1..=50 {
            for k in 1..=m.min(t) {
                assert_eq!(svd::storage_entries(m, t, k), ((m + 1 + t) * k) as u64);
            }
        }
    }
    finish("criterion 2", start, C2_BUDGET);
}

/// Per-block quantization slack for a stored block, as the full step
/// 2^(e - 31) at 32-bit width. Raw blocks are exact.
fn block_slack(block: &BlockData) -> f64 {
    match block {
        BlockData::Raw(_) => 0.0,
        BlockData::Dense(b) => common::pow2(b.shared_exponent - 31),
        BlockData::Sparse(s) => common::pow2(s.shared_exponent - 31),
    }
}

/// Elementwise reconstruction error bound composed from the three blocks'
/// quantization slacks plus the truncation tail: with |U|,|V| columns unit
/// norm and perturbations bounded entrywise by eu, es, ev,
///   |X̂ - X_k| <= ev*||X||_F + es*(1 + sqrt(k)*ev)
///               + eu*(||X||_F + sqrt(k)*es)*(1 + sqrt(k)*ev).
fn composed_bound(archive: &Archive, fro: f64, k: usize, tail: f64) -> f64 {
    let eu = block_slack(archive.u_block());
    let es = block_slack(archive.sigma_block());
    let ev = block_slack(archive.v_block());
    let rk = (k as f64).sqrt();
    ev * fro + es * (1.0 + rk * ev) + eu * (fro + rk * es) * (1.0 + rk * ev) + tail
}

/// At k = numerical rank and 32-bit mantissas, every element of the decoded
/// matrix is within the composed per-block bound, and integer matrices with
/// entries below 2^20 in magnitude are recovered exactly after rounding.
#[test]
fn criterion_3_full_fidelity_round_trip() {
    let start = Instant::now();
    let mut rng = common::rng(0xACCE_0003);

    let mut cases: Vec<(TimeSeriesMatrix, bool)> = Vec::new();
    for _ in 0..12 {
        let m = rng.gen_range(2..=60);
        let t = rng.gen_range(2..=120);
        cases.push((common::random_matrix(&mut rng, m, t, 100.0), false));
    }
    for _ in 0..6 {
        let m = rng.gen_range(4..=40);
        let t = rng.gen_range(4..=80);
        let r = rng.gen_range(1..=m.min(t).min(8));
        cases.push((common::integer_low_rank(&mut rng, m, t, r), true));
    }
    // Rank-one integer matrix pushing entries just under 2^20.
    let a: Vec<f64> = (0..50)
        .map(|_| {
            let v = rng.gen_range(1..=1023) as f64;
            if rng.gen_bool(0.5) {
                -v
            } else {
                v
            }
        })
        .collect();
    let b: Vec<f64> = (0..120)
        .map(|_| {
            let v = rng.gen_range(1..=1024) as f64;
            if rng.gen_bool(0.5) {
                -v
            } else {
                v
            }
        })
        .collect();
    let big: Vec<f64> = a
        .iter()
        .flat_map(|&ai| b.iter().map(move |&bj| ai * bj))
        .collect();
    cases.push((TimeSeriesMatrix::new(50, 120, big).unwrap(), true));

    for (case, (x, integer)) in cases.into_iter().enumerate() {
        let sigma_full = svd(&x).unwrap().sigma().to_vec();
        let rank = svd::numerical_rank(&sigma_full, 1e-10);
        let tail: f64 = sigma_full[rank..].iter().sum();
        let fro = x.frobenius_norm_sq().sqrt();

        for sparsity in [false, true] {
            let cfg = PipelineConfig {
                mantissa_bits: 32,
                normalization: true,
                sparsity,
                ..PipelineConfig::default()
            };
            let (archive, _) = compress(&x, RankSelection::Fixed(rank), &cfg).unwrap();
            let decoded = decompress(&archive).unwrap();

            let bound = composed_bound(&archive, fro, rank, tail) + 1e-9 * (1.0 + fro);
            let worst = svd::max_abs_error(&x, &decoded).unwrap();
            assert!(
                worst <= bound,
                "case {case} sparsity={sparsity}: error {worst} exceeds bound {bound}"
            );

            if integer {
                for (i, (&d, &orig)) in decoded.values().iter().zip(x.values()).enumerate() {
                    assert!(orig.abs() < (1u32 << 20) as f64, "precondition");
                    assert_eq!(
                        d.round(),
                        orig,
                        "case {case} sparsity={sparsity} element {i}: {d} rounds away from {orig}"
                    );
                }
            }
        }
    }
    finish("criterion 3", start, C3_BUDGET);
}

/// Coordinate encoding of quantized blocks is bit-exact through a round
/// trip, and the representation selector never chooses the larger layout.
#[test]
fn criterion_4_sparse_stage_lossless() {
    let start = Instant::now();
    let mut rng = common::rng(0xACCE_0004);

    for case in 0..C4_BLOCKS {
        let rows = rng.gen_range(1..=8u32);
        let cols = rng.gen_range(1..=8u32);
        let bits = rng.gen_range(4..=32u8);
        let zero_share = rng.gen_range(0.0..1.0);
        let values: Vec<f64> = (0..(rows * cols) as usize)
            .map(|_| {
                if rng.gen_bool(zero_share) {
                    0.0
                } else {
                    rng.gen_range(-1e4..1e4)
                }
            })
            .collect();
        let block = normalize(&values, bits).unwrap();

        let sparse = encode_sparse(&block, rows, cols).unwrap();
        let back = decode_sparse(&sparse).unwrap();
        assert_eq!(back, block, "case {case}: round trip not bit-identical");

        let dense_size = block.size_bytes();
        let sparse_size = sparse_size_bytes(sparse.nnz(), index_width(rows, cols), bits);
        match tcz_core::choose_representation(&block, rows, cols) {
            Representation::Sparse => assert!(sparse_size < dense_size, "case {case}"),
            Representation::Dense => assert!(dense_size <= sparse_size, "case {case}"),
        }
    }
    finish("criterion 4", start, C4_BUDGET);
}

/// On the sparse meter-shaped synthetic (80x4902, ~90% zeros, exponentially
/// decaying spectrum): the default sweep emits 8 rows; k never decreases as
/// the target ratio relaxes; Frobenius error never increases with k; and at
/// every row the full three-stage archive is at least 10% smaller than the
/// factor-only baseline at the same k.
#[test]
fn criterion_5_sweep_on_sparse_meter_shape() {
    let start = Instant::now();
    let x = common::meter_matrix();

    let stats = compute_stats(&x, 1e-10).unwrap();
    assert_eq!(stats.numerical_rank, 28, "generator rank drifted");
    assert!(
        (0.89..=0.92).contains(&stats.sparsity),
        "generator sparsity drifted: {}",
        stats.sparsity
    );
    // Exponentially decaying spectrum: strong leading decay over the
    // designed patterns.
    assert!(stats.normalized_spectrum[27] < 1e-2);

    let cfg = PipelineConfig::default();
    let table = tcz_core::sweep(&x, &DEFAULT_SWEEP_RATIOS, &cfg).unwrap();
    assert_eq!(table.rows.len(), 8, "default sweep must emit 8 rows");

    let baseline_cfg = PipelineConfig {
        normalization: false,
        sparsity: false,
        ..PipelineConfig::default()
    };
    let mut previous_err = f64::INFINITY;
    for pair in table.rows.windows(2) {
        assert!(
            pair[1].target_ratio < pair[0].target_ratio,
            "default targets must be strictly decreasing"
        );
        assert!(
            pair[1].k >= pair[0].k,
            "k decreased while the target ratio relaxed: {:?} -> {:?}",
            pair[0].k,
            pair[1].k
        );
    }
    for row in &table.rows {
        assert!(!row.best_effort, "target {} unattainable", row.target_ratio);

        let (tri_archive, tri) = compress(&x, RankSelection::Fixed(row.k), &cfg).unwrap();
        let decoded = decompress(&tri_archive).unwrap();
        let err = common::frobenius_error(&x, &decoded);
        assert!(
            err <= previous_err * (1.0 + 1e-9) + 1e-12,
            "Frobenius error rose from {previous_err} to {err} at k={}",
            row.k
        );
        previous_err = err;

        let (_, baseline) = compress(&x, RankSelection::Fixed(row.k), &baseline_cfg).unwrap();
        let limit = (1.0 - C5_MIN_BYTE_SAVING) * baseline.archive_bytes as f64;
        assert!(
            (tri.archive_bytes as f64) <= limit,
            "k={}: three-stage archive {}B not >=10% under baseline {}B",
            row.k,
            tri.archive_bytes,
            baseline.archive_bytes
        );
    }
    finish("criterion 5", start, C5_BUDGET);
}

/// On the dense grid-shaped synthetic (442x1440): quantizing factors to
/// 24-bit mantissas cuts factor payload bytes by at least 60% against the
/// 8-byte raw model, and the measured-byte ratio of the full pipeline beats
/// the entry-model ratio at every sweep row.
#[test]
fn criterion_6_dense_grid_normalization_gains() {
    let start = Instant::now();
    let x = common::microgrid_matrix();

    let stats = compute_stats(&x, 1e-10).unwrap();
    assert!(stats.sparsity < 0.01, "generator must be dense");

    let cfg = PipelineConfig::default();
    assert_eq!(cfg.mantissa_bits, 24);
    assert_eq!(cfg.raw_float_bytes, 8);

    // Normalization in isolation, at a mid-sweep operating point.
    let no_sparse = PipelineConfig {
        sparsity: false,
        ..PipelineConfig::default()
    };
    let (_, report) = compress(&x, RankSelection::TargetRatio(25.0), &no_sparse).unwrap();
    let raw_bytes = report.stage_bytes.svd as f64;
    let quantized_bytes = report.stage_bytes.normalized as f64;
    assert!(
        quantized_bytes <= (1.0 - C6_MIN_PAYLOAD_REDUCTION) * raw_bytes,
        "normalization saved only {:.1}%",
        100.0 * (1.0 - quantized_bytes / raw_bytes)
    );

    let table = tcz_core::sweep(&x, &DEFAULT_SWEEP_RATIOS, &cfg).unwrap();
    assert_eq!(table.rows.len(), 8);
    for row in &table.rows {
        assert!(
            row.achieved_ratio_bytes > row.achieved_ratio_entries,
            "k={}: byte ratio {} does not beat entry ratio {}",
            row.k,
            row.achieved_ratio_bytes,
            row.achieved_ratio_entries
        );
    }
    finish("criterion 6", start, C6_BUDGET);
}

/// 100k random arrays across all mantissa widths: decoded values never
/// stray more than half a quantization step, 2^(e - w), from the source.
#[test]
fn criterion_7_quantization_error_bound() {
    let start = Instant::now();
    let mut rng = common::rng(0xACCE_0007);

    for case in 0..C7_ARRAYS {
        let bits = rng.gen_range(4..=32u8);
        let len = rng.gen_range(1..=16);
        let values: Vec<f64> = (0..len)
            .map(|_| {
                if rng.gen_bool(0.1) {
                    return 0.0;
                }
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let p: i32 = rng.gen_range(-180..=180);
                sign * rng.gen_range(1.0..2.0) * common::pow2(p)
            })
            .collect();

        let block = normalize(&values, bits).unwrap();
        let half_step = common::pow2(block.shared_exponent - bits as i32);
        for (&v, d) in values.iter().zip(tcz_core::denormalize(&block)) {
            assert!(
                (v - d).abs() <= half_step,
                "case {case} bits={bits} e={}: |{v} - {d}| > {half_step}",
                block.shared_exponent
            );
        }
    }
    finish("criterion 7", start, C7_BUDGET);
}

/// 10k single-byte corruptions across archives of every representation mix:
/// each either fails with a designated integrity error or (if some byte
/// were outside all checked regions) still decodes to the identical matrix.
/// No mutation may silently change the decoded values.
#[test]
fn criterion_8_container_mutation_robustness() {
    let start = Instant::now();
    let mut rng = common::rng(0xACCE_0008);

    let mut archives: Vec<(Vec<u8>, Vec<f64>)> = Vec::new();
    let configs = [
        PipelineConfig {
            normalization: false,
            sparsity: false,
            ..PipelineConfig::default()
        },
        PipelineConfig {
            sparsity: false,
            ..PipelineConfig::default()
        },
        PipelineConfig {
            mantissa_bits: 16,
            ..PipelineConfig::default()
        },
        PipelineConfig {
            mantissa_bits: 8,
            size_model: SizeModel::MeasuredBytes,
            ..PipelineConfig::default()
        },
    ];
    for (i, cfg) in configs.iter().enumerate() {
        let m = 6 + i;
        let t = 9 + 2 * i;
        // Zero-heavy so sparse blocks appear; spread singular values so the
        // widened 32-bit sigma path is exercised at 8-bit widths.
        let mut x = common::random_matrix(&mut rng, m, t, 1000.0);
        let mut values = x.values().to_vec();
        for v in values.iter_mut() {
            if rng.gen_bool(0.6) {
                *v = 0.0;
            }
        }
        values[0] += 1e7;
        x = TimeSeriesMatrix::new(m, t, values).unwrap();

        let k = 1 + i % m.min(t);
        let (archive, _) = compress(&x, RankSelection::Fixed(k), cfg).unwrap();
        let clean = decompress(&archive).unwrap().values().to_vec();
        archives.push((archive.to_bytes(), clean));
    }

    let mut rejected = 0usize;
    for case in 0..C8_MUTATIONS {
        let (bytes, clean) = &archives[case % archives.len()];
        let mut mutated = bytes.clone();
        let pos = rng.gen_range(0..mutated.len());
        let mask = rng.gen_range(1..=255u8);
        mutated[pos] ^= mask;

        match Archive::from_bytes(&mutated) {
            Err(e) => {
                assert!(
                    matches!(
                        e,
                        Error::BadMagic { .. }
                            | Error::UnsupportedVersion { .. }
                            | Error::LengthMismatch { .. }
                            | Error::CrcMismatch { .. }
                            | Error::InvalidArchive { .. }
                            | Error::CorruptSparseBlock { .. }
                    ),
                    "case {case}: undesignated error {e:?} at byte {pos}"
                );
                rejected += 1;
            }
            Ok(parsed) => {
                let decoded = decompress(&parsed).unwrap();
                assert_eq!(
                    decoded.values(),
                    &clean[..],
                    "case {case}: byte {pos} xor {mask:#04x} silently changed the decode"
                );
            }
        }
    }
    // Every byte sits under a CRC, so corruption should essentially always
    // be rejected outright.
    assert!(
        rejected == C8_MUTATIONS,
        "only {rejected} mutations rejected"
    );
    finish("criterion 8", start, C8_BUDGET);
}
