//! Cascaded lossy compression for sensor-matrix time series.
//!
//! A reading matrix (m devices by t timestamps) is compressed in three
//! stages: a truncated SVD keeps the k strongest patterns, each factor
//! block is quantized to integer mantissas under one shared radix-2
//! exponent, and blocks that are mostly zero are stored as coordinate
//! lists. The result is framed in a CRC-checked `.tcz` container.
//!
//! Typical use:
//!
//! ```
//! use tcz_core::{compress, decompress, PipelineConfig, RankSelection, TimeSeriesMatrix};
//!
//! let x = TimeSeriesMatrix::new(2, 4, vec![1.0, 2.0, 3.0, 4.0, 2.0, 4.0, 6.0, 8.0])?;
//! let (archive, report) = compress(&x, RankSelection::Fixed(1), &PipelineConfig::default())?;
//! let decoded = decompress(&archive)?;
//! assert_eq!(decoded.shape(), (2, 4));
//! assert!(report.mae < 1e-4);
//! # Ok::<(), tcz_core::Error>(())
//! ```

pub mod archive;
pub mod error;
pub mod matrix;
pub mod normalize;
pub mod pipeline;
pub mod sparse;
pub mod svd;

pub use archive::{Archive, BlockData};
pub use error::{Error, Result};
pub use matrix::{
    compute_stats, CsvLayout, MatrixStats, Orientation, TimeSeriesMatrix, DEFAULT_RANK_TOLERANCE,
};
pub use normalize::{denormalize, normalize, NormalizedBlock};
pub use pipeline::{
    compress, decompress, select_k_for_ratio, sweep, BlockReport, BlockReports, CompressionReport,
    KChoice, PipelineConfig, RankSelection, SizeModel, StageBytes, StoredRepresentation, SweepRow,
    SweepTable, DEFAULT_MANTISSA_BITS, DEFAULT_SWEEP_RATIOS,
};
pub use sparse::{
    choose_representation, decode_sparse, encode_sparse, Representation, SparseBlock, SparseEntry,
};
pub use svd::{entry_ratio, mae, max_abs_error, numerical_rank, storage_entries, svd, SvdFactors};
