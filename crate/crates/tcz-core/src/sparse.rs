//! Coordinate-list encoding of quantized blocks that are mostly zero.
//!
//! A sparse block stores only the nonzero mantissas of a
//! [`NormalizedBlock`], each tagged with its (row, col) position in the
//! original rectangular layout. Encoding is lossless; whether it is smaller
//! than the dense layout depends on the nonzero count, so callers ask
//! [`choose_representation`] first.

use crate::error::{Error, Result};
use crate::normalize::{mantissa_byte_width, NormalizedBlock};

/// How a quantized block is laid out in the archive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Dense,
    Sparse,
}

/// One nonzero mantissa at (row, col).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SparseEntry {
    pub row: u32,
    pub col: u32,
    pub mantissa: i32,
}

/// Nonzero mantissas of a rows x cols quantized block, sorted by
/// (row, col).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseBlock {
    pub rows: u32,
    pub cols: u32,
    pub shared_exponent: i32,
    pub mantissa_bits: u8,
    pub entries: Vec<SparseEntry>,
}

impl SparseBlock {
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Bytes per row/col index: the smallest of 1, 2, 4 that holds the
    /// largest possible index.
    pub fn index_width(&self) -> u8 {
        index_width(self.rows, self.cols)
    }

    /// Serialized size: nnz triplets of two indices and one mantissa, plus
    /// 12 bytes of block overhead (shared exponent and entry count).
    pub fn size_bytes(&self) -> u64 {
        sparse_size_bytes(self.entries.len(), self.index_width(), self.mantissa_bits)
    }
}

pub fn index_width(rows: u32, cols: u32) -> u8 {
    let max_index = rows.max(cols).saturating_sub(1);
    if max_index <= 0xFF {
        1
    } else if max_index <= 0xFFFF {
        2
    } else {
        4
    }
}

pub fn sparse_size_bytes(nnz: usize, index_width: u8, mantissa_bits: u8) -> u64 {
    let per_entry = 2 * index_width as u64 + mantissa_byte_width(mantissa_bits) as u64;
    nnz as u64 * per_entry + 12
}

/// Picks the smaller serialization for a block laid out as rows x cols.
/// Ties go to dense, which decodes with less work.
pub fn choose_representation(block: &NormalizedBlock, rows: u32, cols: u32) -> Representation {
    let nnz = block.mantissas.iter().filter(|&&m| m != 0).count();
    let sparse = sparse_size_bytes(nnz, index_width(rows, cols), block.mantissa_bits);
    if sparse < block.size_bytes() {
        Representation::Sparse
    } else {
        Representation::Dense
    }
}

/// Extracts the nonzero mantissas of `block` interpreted as a row-major
/// rows x cols array.
pub fn encode_sparse(block: &NormalizedBlock, rows: u32, cols: u32) -> Result<SparseBlock> {
    if block.mantissas.len() != rows as usize * cols as usize {
        return Err(Error::BlockShape {
            len: block.mantissas.len(),
            rows: rows as usize,
            cols: cols as usize,
        });
    }
    let entries = block
        .mantissas
        .iter()
        .enumerate()
        .filter(|(_, &m)| m != 0)
        .map(|(i, &mantissa)| SparseEntry {
            row: (i / cols as usize) as u32,
            col: (i % cols as usize) as u32,
            mantissa,
        })
        .collect();
    Ok(SparseBlock {
        rows,
        cols,
        shared_exponent: block.shared_exponent,
        mantissa_bits: block.mantissa_bits,
        entries,
    })
}

/// Rebuilds the dense quantized block. Rejects out-of-range positions,
/// entries out of (row, col) order or duplicated, and explicit zeros, all
/// of which indicate a corrupt block.
pub fn decode_sparse(sparse: &SparseBlock) -> Result<NormalizedBlock> {
    let rows = sparse.rows as usize;
    let cols = sparse.cols as usize;
    let mut mantissas = vec![0i32; rows * cols];
    let mut previous: Option<(u32, u32)> = None;
    for entry in &sparse.entries {
        if entry.row >= sparse.rows || entry.col >= sparse.cols {
            return Err(Error::CorruptSparseBlock {
                reason: format!(
                    "entry ({}, {}) outside {rows}x{cols} block",
                    entry.row, entry.col
                ),
            });
        }
        let position = (entry.row, entry.col);
        if previous.is_some_and(|p| p >= position) {
            return Err(Error::CorruptSparseBlock {
                reason: format!(
                    "entries unsorted or duplicated at ({}, {})",
                    entry.row, entry.col
                ),
            });
        }
        if entry.mantissa == 0 {
            return Err(Error::CorruptSparseBlock {
                reason: format!("explicit zero at ({}, {})", entry.row, entry.col),
            });
        }
        previous = Some(position);
        mantissas[entry.row as usize * cols + entry.col as usize] = entry.mantissa;
    }
    Ok(NormalizedBlock {
        shared_exponent: sparse.shared_exponent,
        mantissa_bits: sparse.mantissa_bits,
        mantissas,
    })
}
