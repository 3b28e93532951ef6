//! The cascaded codec end to end, plus the ratio-sweep harness.
//!
//! Compression runs three stages: truncate the SVD to rank k, quantize each
//! factor block to shared-exponent mantissas, and store mostly-zero blocks
//! as coordinate lists. Stage sizes are tracked per stage so the report can
//! show where the bytes went; the archive adds a fixed framing overhead on
//! top of stage 3.
//!
//! Two size models are supported when picking k for a target ratio.
//! `SizeModel::EntryCount` compares stored entries, `(m + 1 + t) * k`,
//! against the `m * t` dense entries; it ignores quantization and is the
//! model used for headline ratios. `SizeModel::MeasuredBytes` compares
//! actual archive bytes against `m * t * raw_float_bytes` and therefore
//! accounts for every stage and the container framing.

use std::fmt::Write as _;

use serde::Serialize;

use crate::archive::{Archive, BlockData, CONTAINER_OVERHEAD};
use crate::error::{Error, Result};
use crate::matrix::{TimeSeriesMatrix, DEFAULT_RANK_TOLERANCE};
use crate::normalize::{denormalize, normalize, pow2, NormalizedBlock};
use crate::sparse::{choose_representation, decode_sparse, encode_sparse, Representation};
use crate::svd::{self, numerical_rank, storage_entries, SvdFactors};

pub const DEFAULT_MANTISSA_BITS: u8 = 24;

/// Target ratios swept by the benchmark harness by default.
pub const DEFAULT_SWEEP_RATIOS: [f64; 8] = [78.0, 39.0, 25.0, 19.0, 15.0, 9.0, 5.0, 4.0];

/// How sizes are measured when resolving a target compression ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SizeModel {
    /// Stored factor entries versus dense matrix entries.
    #[serde(rename = "entries")]
    EntryCount,
    /// Archive bytes versus `m * t * raw_float_bytes`.
    #[serde(rename = "bytes")]
    MeasuredBytes,
}

/// How the retained rank is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankSelection {
    /// Use exactly this k.
    Fixed(usize),
    /// Largest k whose compression ratio still meets this target.
    TargetRatio(f64),
}

/// Stage settings shared by compression, k selection, and sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub mantissa_bits: u8,
    pub normalization: bool,
    pub sparsity: bool,
    pub size_model: SizeModel,
    /// Bytes per entry the input is assumed to occupy uncompressed (8 for
    /// f64, 4 for f32). Accounting only: archives always store raw blocks
    /// as f64.
    pub raw_float_bytes: u8,
    pub rank_tolerance: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mantissa_bits: DEFAULT_MANTISSA_BITS,
            normalization: true,
            sparsity: true,
            size_model: SizeModel::EntryCount,
            raw_float_bytes: 8,
            rank_tolerance: DEFAULT_RANK_TOLERANCE,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sparsity && !self.normalization {
            return Err(Error::Config(
                "sparsity encoding requires normalization".into(),
            ));
        }
        if self.normalization
            && !(crate::normalize::MIN_MANTISSA_BITS..=crate::normalize::MAX_MANTISSA_BITS)
                .contains(&self.mantissa_bits)
        {
            return Err(Error::MantissaWidth {
                bits: self.mantissa_bits,
            });
        }
        if self.raw_float_bytes != 4 && self.raw_float_bytes != 8 {
            return Err(Error::Config(format!(
                "raw float width must be 4 or 8 bytes, got {}",
                self.raw_float_bytes
            )));
        }
        if !(self.rank_tolerance.is_finite() && self.rank_tolerance >= 0.0) {
            return Err(Error::Config(format!(
                "rank tolerance must be finite and non-negative, got {}",
                self.rank_tolerance
            )));
        }
        Ok(())
    }
}

/// Result of resolving a target ratio to a rank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KChoice {
    pub k: usize,
    /// Ratio actually achieved at `k` under the configured size model.
    pub achieved_ratio: f64,
    /// True when even k = 1 misses the target and was returned anyway.
    pub best_effort: bool,
}

/// How one factor block ended up stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StoredRepresentation {
    Raw,
    Dense,
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockReport {
    pub representation: StoredRepresentation,
    /// Mantissa width of the stored block, 0 for raw.
    pub mantissa_bits: u8,
    /// Nonzero count, present only for sparse blocks.
    pub nnz: Option<u64>,
    /// Wire bytes of the block payload.
    pub payload_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockReports {
    pub u: BlockReport,
    pub sigma: BlockReport,
    pub v: BlockReport,
}

/// Standalone size of each stage's output, in bytes. Stage 1 counts factor
/// entries at `raw_float_bytes` each; stages 2 and 3 count the quantized
/// blocks in their dense and chosen representations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageBytes {
    pub svd: u64,
    pub normalized: u64,
    pub sparse: u64,
}

/// Everything measured while compressing one matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressionReport {
    pub m: usize,
    pub t: usize,
    pub k: usize,
    /// Numerical rank of the input at the configured tolerance.
    pub rank: usize,
    pub size_model: SizeModel,
    /// Target ratio that selected k, if one was given.
    pub target_ratio: Option<f64>,
    pub best_effort: bool,
    /// Shared mantissa width, 0 when normalization is off.
    pub mantissa_bits: u8,
    pub raw_float_bytes: u8,
    pub uncompressed_entries: u64,
    pub stored_entries: u64,
    pub uncompressed_bytes: u64,
    pub stage_bytes: StageBytes,
    pub archive_bytes: u64,
    pub container_overhead_bytes: u64,
    pub compression_ratio_entries: f64,
    pub compression_ratio_bytes: f64,
    pub mae: f64,
    pub max_abs_error: f64,
    /// Error of the rank truncation alone, before quantization.
    pub mae_svd_only: f64,
    pub blocks: BlockReports,
}

/// One sweep measurement at one target ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub target_ratio: f64,
    pub k: usize,
    pub achieved_ratio_entries: f64,
    pub achieved_ratio_bytes: f64,
    pub mae: f64,
    pub max_abs_error: f64,
    pub bytes_stage1: u64,
    pub bytes_stage2: u64,
    pub bytes_stage3: u64,
    pub k_over_rank: f64,
    pub best_effort: bool,
}

/// Sweep results over a list of target ratios, in input order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    /// Numerical rank of the swept matrix.
    pub rank: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// The trade-off table as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "target_ratio,k,achieved_ratio_entries,achieved_ratio_bytes,mae,max_abs_error,bytes_stage1,bytes_stage2,bytes_stage3\n",
        );
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.target_ratio,
                r.k,
                r.achieved_ratio_entries,
                r.achieved_ratio_bytes,
                r.mae,
                r.max_abs_error,
                r.bytes_stage1,
                r.bytes_stage2,
                r.bytes_stage3
            )
            .unwrap();
        }
        out
    }

    /// Companion curve of reconstruction error against relative rank.
    pub fn error_curve_csv(&self) -> String {
        let mut out = String::from("k,k_over_rank,mae\n");
        for r in &self.rows {
            writeln!(out, "{},{},{}", r.k, r.k_over_rank, r.mae).unwrap();
        }
        out
    }
}

/// Compresses a matrix into an archive plus a measurement report. The
/// report's `mae` is computed by decoding the archive that is returned, so
/// it matches what a reader will see exactly.
pub fn compress(
    x: &TimeSeriesMatrix,
    rank_selection: RankSelection,
    cfg: &PipelineConfig,
) -> Result<(Archive, CompressionReport)> {
    cfg.validate()?;
    let full = svd::svd(x)?;
    let rank = numerical_rank(full.sigma(), cfg.rank_tolerance);
    match rank_selection {
        RankSelection::Fixed(k) => {
            if k < 1 || k > full.k() {
                return Err(Error::KOutOfRange { k, max: full.k() });
            }
            compress_resolved(x, &full, k, rank, None, false, cfg)
        }
        RankSelection::TargetRatio(target) => {
            let mut cache = None;
            let choice = choose_k_from_factors(&full, target, cfg, &mut cache)?;
            compress_resolved(
                x,
                &full,
                choice.k,
                rank,
                Some(target),
                choice.best_effort,
                cfg,
            )
        }
    }
}

/// Decodes an archive back to the dense matrix it stores.
pub fn decompress(archive: &Archive) -> Result<TimeSeriesMatrix> {
    let u = decode_block(archive.u_block())?;
    let sigma = decode_block(archive.sigma_block())?;
    let v = decode_block(archive.v_block())?;
    let (m, t) = (archive.m(), archive.t());
    let values = svd::reconstruct_values(&u, &sigma, &v, m, t);
    TimeSeriesMatrix::new(m, t, values).map_err(|_| Error::InvalidArchive {
        reason: "archive decodes to non-finite values".into(),
    })
}

/// Resolves a target compression ratio to the largest rank that meets it
/// under the configured size model. Falls back to k = 1 (flagged
/// `best_effort`) when no rank reaches the target.
pub fn select_k_for_ratio(
    x: &TimeSeriesMatrix,
    target_ratio: f64,
    cfg: &PipelineConfig,
) -> Result<KChoice> {
    cfg.validate()?;
    let full = svd::svd(x)?;
    let mut cache = None;
    choose_k_from_factors(&full, target_ratio, cfg, &mut cache)
}

/// Runs the codec once per target ratio and tabulates the trade-off curve.
/// The SVD is computed once and shared across all targets.
pub fn sweep(x: &TimeSeriesMatrix, targets: &[f64], cfg: &PipelineConfig) -> Result<SweepTable> {
    cfg.validate()?;
    let full = svd::svd(x)?;
    let rank = numerical_rank(full.sigma(), cfg.rank_tolerance);
    let mut cache = None;
    let mut rows = Vec::with_capacity(targets.len());
    for &target in targets {
        let choice = choose_k_from_factors(&full, target, cfg, &mut cache)?;
        let (_, report) = compress_resolved(
            x,
            &full,
            choice.k,
            rank,
            Some(target),
            choice.best_effort,
            cfg,
        )?;
        rows.push(SweepRow {
            target_ratio: target,
            k: report.k,
            achieved_ratio_entries: report.compression_ratio_entries,
            achieved_ratio_bytes: report.compression_ratio_bytes,
            mae: report.mae,
            max_abs_error: report.max_abs_error,
            bytes_stage1: report.stage_bytes.svd,
            bytes_stage2: report.stage_bytes.normalized,
            bytes_stage3: report.stage_bytes.sparse,
            k_over_rank: report.k as f64 / rank.max(1) as f64,
            best_effort: report.best_effort,
        });
    }
    Ok(SweepTable { rank, rows })
}

fn decode_block(block: &BlockData) -> Result<Vec<f64>> {
    match block {
        BlockData::Raw(values) => Ok(values.clone()),
        BlockData::Dense(dense) => Ok(denormalize(dense)),
        BlockData::Sparse(sparse) => Ok(denormalize(&decode_sparse(sparse)?)),
    }
}

struct BuiltBlocks {
    u: BlockData,
    sigma: BlockData,
    v: BlockData,
    header_bits: u8,
    stage_bytes: StageBytes,
}

/// Quantizes and packs the factor blocks per the config, tracking the
/// standalone size after each stage.
fn build_blocks(factors: &SvdFactors, cfg: &PipelineConfig) -> Result<BuiltBlocks> {
    let (m, t) = factors.source_shape();
    let k = factors.k();
    if m > u32::MAX as usize || t > u32::MAX as usize {
        return Err(Error::InvalidArchive {
            reason: "matrix dimensions exceed u32".into(),
        });
    }
    let stage_svd = storage_entries(m, t, k) * cfg.raw_float_bytes as u64;

    if !cfg.normalization {
        return Ok(BuiltBlocks {
            u: BlockData::Raw(factors.u().to_vec()),
            sigma: BlockData::Raw(factors.sigma().to_vec()),
            v: BlockData::Raw(factors.v().to_vec()),
            header_bits: 0,
            stage_bytes: StageBytes {
                svd: stage_svd,
                normalized: stage_svd,
                sparse: stage_svd,
            },
        });
    }

    let w = cfg.mantissa_bits;
    let u_n = normalize(factors.u(), w)?;
    let v_n = normalize(factors.v(), w)?;
    // A spectrum spanning more than w - 4 doublings would quantize the small
    // singular values to garbage at the shared exponent of sigma_1; store
    // the sigma block at full 32-bit width in that case.
    let sigma = factors.sigma();
    let sigma_bits = if k > 1 && sigma[0] > sigma[k - 1] * pow2(w as i32 - 4) {
        32
    } else {
        w
    };
    let sigma_n = normalize(sigma, sigma_bits)?;
    let stage_normalized = u_n.size_bytes() + sigma_n.size_bytes() + v_n.size_bytes();

    let (u_block, u_bytes) = stage3_block(u_n, m, k, cfg.sparsity)?;
    let (sigma_block, sigma_bytes) = stage3_block(sigma_n, k, 1, cfg.sparsity)?;
    let (v_block, v_bytes) = stage3_block(v_n, t, k, cfg.sparsity)?;

    Ok(BuiltBlocks {
        u: u_block,
        sigma: sigma_block,
        v: v_block,
        header_bits: w,
        stage_bytes: StageBytes {
            svd: stage_svd,
            normalized: stage_normalized,
            sparse: u_bytes + sigma_bytes + v_bytes,
        },
    })
}

/// Applies the stage-3 representation choice to one quantized block,
/// returning the block and its standalone size.
fn stage3_block(
    block: NormalizedBlock,
    rows: usize,
    cols: usize,
    sparsity: bool,
) -> Result<(BlockData, u64)> {
    if sparsity && choose_representation(&block, rows as u32, cols as u32) == Representation::Sparse
    {
        let sparse = encode_sparse(&block, rows as u32, cols as u32)?;
        let size = sparse.size_bytes();
        Ok((BlockData::Sparse(sparse), size))
    } else {
        let size = block.size_bytes();
        Ok((BlockData::Dense(block), size))
    }
}

fn block_report(block: &BlockData) -> BlockReport {
    match block {
        BlockData::Raw(_) => BlockReport {
            representation: StoredRepresentation::Raw,
            mantissa_bits: 0,
            nnz: None,
            payload_bytes: block.payload_len(),
        },
        BlockData::Dense(dense) => BlockReport {
            representation: StoredRepresentation::Dense,
            mantissa_bits: dense.mantissa_bits,
            nnz: None,
            payload_bytes: block.payload_len(),
        },
        BlockData::Sparse(sparse) => BlockReport {
            representation: StoredRepresentation::Sparse,
            mantissa_bits: sparse.mantissa_bits,
            nnz: Some(sparse.entries.len() as u64),
            payload_bytes: block.payload_len(),
        },
    }
}

/// Archive size at rank k without serializing: framing plus payloads.
fn measured_archive_bytes(full: &SvdFactors, k: usize, cfg: &PipelineConfig) -> Result<u64> {
    let built = build_blocks(&full.truncate(k)?, cfg)?;
    Ok(CONTAINER_OVERHEAD as u64
        + built.u.payload_len()
        + built.sigma.payload_len()
        + built.v.payload_len())
}

/// Largest k meeting the target under the configured size model. The
/// entry-count ratio is strictly decreasing in k, so that scan stops at the
/// first miss; measured bytes are not guaranteed monotone, so every k is
/// tried. The measured sizes are cached for reuse across sweep targets.
fn choose_k_from_factors(
    full: &SvdFactors,
    target: f64,
    cfg: &PipelineConfig,
    measured_cache: &mut Option<Vec<u64>>,
) -> Result<KChoice> {
    if !(target.is_finite() && target > 0.0) {
        return Err(Error::Config(format!(
            "target ratio must be finite and positive, got {target}"
        )));
    }
    let (m, t) = full.source_shape();
    let k_max = full.k();

    let ratio_at: Box<dyn Fn(usize) -> f64> = match cfg.size_model {
        SizeModel::EntryCount => Box::new(move |k| svd::entry_ratio(m, t, k)),
        SizeModel::MeasuredBytes => {
            if measured_cache.is_none() {
                let mut sizes = Vec::with_capacity(k_max);
                for k in 1..=k_max {
                    sizes.push(measured_archive_bytes(full, k, cfg)?);
                }
                *measured_cache = Some(sizes);
            }
            let sizes = measured_cache.clone().unwrap();
            let uncompressed = (m as u64 * t as u64 * cfg.raw_float_bytes as u64) as f64;
            Box::new(move |k| uncompressed / sizes[k - 1] as f64)
        }
    };

    let mut chosen = None;
    for k in 1..=k_max {
        if ratio_at(k) >= target {
            chosen = Some(k);
        } else if cfg.size_model == SizeModel::EntryCount {
            break;
        }
    }
    Ok(match chosen {
        Some(k) => KChoice {
            k,
            achieved_ratio: ratio_at(k),
            best_effort: false,
        },
        None => KChoice {
            k: 1,
            achieved_ratio: ratio_at(1),
            best_effort: true,
        },
    })
}

/// Compresses at a fully resolved rank and assembles the report.
fn compress_resolved(
    x: &TimeSeriesMatrix,
    full: &SvdFactors,
    k: usize,
    rank: usize,
    target_ratio: Option<f64>,
    best_effort: bool,
    cfg: &PipelineConfig,
) -> Result<(Archive, CompressionReport)> {
    let (m, t) = x.shape();
    let truncated = full.truncate(k)?;
    let built = build_blocks(&truncated, cfg)?;
    let stage_bytes = built.stage_bytes;
    let archive = Archive::new(
        m,
        t,
        k,
        cfg.normalization,
        cfg.sparsity,
        built.header_bits,
        built.u,
        built.sigma,
        built.v,
    )?;
    let archive_bytes = archive.to_bytes().len() as u64;
    debug_assert_eq!(
        archive_bytes,
        CONTAINER_OVERHEAD as u64
            + archive.u_block().payload_len()
            + archive.sigma_block().payload_len()
            + archive.v_block().payload_len()
    );

    let decoded = decompress(&archive)?;
    let mae = svd::mae(x, &decoded)?;
    let max_abs_error = svd::max_abs_error(x, &decoded)?;
    let mae_svd_only = svd::mae(x, &truncated.reconstruct())?;

    let uncompressed_entries = m as u64 * t as u64;
    let stored_entries = storage_entries(m, t, k);
    let uncompressed_bytes = uncompressed_entries * cfg.raw_float_bytes as u64;
    let report = CompressionReport {
        m,
        t,
        k,
        rank,
        size_model: cfg.size_model,
        target_ratio,
        best_effort,
        mantissa_bits: built.header_bits,
        raw_float_bytes: cfg.raw_float_bytes,
        uncompressed_entries,
        stored_entries,
        uncompressed_bytes,
        stage_bytes,
        archive_bytes,
        container_overhead_bytes: CONTAINER_OVERHEAD as u64,
        compression_ratio_entries: uncompressed_entries as f64 / stored_entries as f64,
        compression_ratio_bytes: uncompressed_bytes as f64 / archive_bytes as f64,
        mae,
        max_abs_error,
        mae_svd_only,
        blocks: BlockReports {
            u: block_report(archive.u_block()),
            sigma: block_report(archive.sigma_block()),
            v: block_report(archive.v_block()),
        },
    };
    Ok((archive, report))
}
