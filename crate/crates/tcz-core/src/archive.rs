//! The `.tcz` on-disk container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! header, 32 bytes:
//!   0..4    magic "TCZ1"
//!   4..6    version (currently 1)
//!   6..8    flags: bit 0 normalization, bit 1 sparsity
//!   8..12   m (device rows)
//!   12..16  t (timestamp columns)
//!   16..20  k (retained rank)
//!   20      mantissa bits (0 when normalization is off)
//!   21..28  reserved, must be zero
//!   28..32  CRC32 of bytes 0..28
//! three block descriptors (U, sigma, V), 17 bytes each:
//!   0       representation code
//!   1..5    shared exponent (0 for raw blocks)
//!   5..9    nonzero count (0 for non-sparse blocks)
//!   9..13   payload length in bytes
//!   13..17  CRC32 of descriptor bytes 0..13 followed by the payload
//! payloads for U, sigma, V, back to back
//! ```
//!
//! Every byte of the file is covered by exactly one CRC, so any single-byte
//! corruption is rejected rather than decoded. Encoding is canonical: equal
//! archives serialize to identical bytes.
//!
//! Representation codes: 0 raw f64, 1 dense mantissas at the header width,
//! 2 sparse mantissas at the header width, 3 dense at 32 bits, 4 sparse at
//! 32 bits. The 32-bit variants exist for the singular-value block, which
//! is stored wide when the spectrum spans more range than the shared
//! mantissa width can hold.

use crate::error::{Error, Result};
use crate::normalize::{
    mantissa_byte_width, NormalizedBlock, MAX_MANTISSA_BITS, MIN_MANTISSA_BITS,
};
use crate::sparse::{index_width, SparseBlock, SparseEntry};

pub const MAGIC: [u8; 4] = *b"TCZ1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 32;
pub const DESCRIPTOR_LEN: usize = 17;
/// Header plus three descriptors.
pub const CONTAINER_OVERHEAD: usize = HEADER_LEN + 3 * DESCRIPTOR_LEN;

/// Upper bound on m * t; rejects absurd headers before any allocation.
const MAX_CELLS: u64 = 1 << 31;

const FLAG_NORMALIZATION: u16 = 1;
const FLAG_SPARSITY: u16 = 1 << 1;

/// One stored factor block.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockData {
    /// Unquantized doubles, row-major.
    Raw(Vec<f64>),
    /// Dense quantized mantissas.
    Dense(NormalizedBlock),
    /// Sparse quantized mantissas.
    Sparse(SparseBlock),
}

impl BlockData {
    /// Logical entries in the block (cells, not bytes).
    pub fn len(&self) -> usize {
        match self {
            BlockData::Raw(values) => values.len(),
            BlockData::Dense(block) => block.len(),
            BlockData::Sparse(block) => block.rows as usize * block.cols as usize,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Wire size of this block's payload, without building it.
    pub fn payload_len(&self) -> u64 {
        match self {
            BlockData::Raw(values) => values.len() as u64 * 8,
            BlockData::Dense(block) => {
                block.len() as u64 * mantissa_byte_width(block.mantissa_bits) as u64
            }
            BlockData::Sparse(block) => {
                let per_entry = 2 * block.index_width() as u64
                    + mantissa_byte_width(block.mantissa_bits) as u64;
                block.entries.len() as u64 * per_entry
            }
        }
    }

    fn mantissa_bits(&self) -> Option<u8> {
        match self {
            BlockData::Raw(_) => None,
            BlockData::Dense(block) => Some(block.mantissa_bits),
            BlockData::Sparse(block) => Some(block.mantissa_bits),
        }
    }

    fn representation_code(&self, header_bits: u8) -> u8 {
        match self {
            BlockData::Raw(_) => 0,
            BlockData::Dense(block) if block.mantissa_bits == header_bits => 1,
            BlockData::Sparse(block) if block.mantissa_bits == header_bits => 2,
            BlockData::Dense(_) => 3,
            BlockData::Sparse(_) => 4,
        }
    }

    fn shared_exponent(&self) -> i32 {
        match self {
            BlockData::Raw(_) => 0,
            BlockData::Dense(block) => block.shared_exponent,
            BlockData::Sparse(block) => block.shared_exponent,
        }
    }

    fn nnz(&self) -> u32 {
        match self {
            BlockData::Sparse(block) => block.entries.len() as u32,
            _ => 0,
        }
    }

    fn payload(&self) -> Vec<u8> {
        match self {
            BlockData::Raw(values) => {
                let mut out = Vec::with_capacity(values.len() * 8);
                for v in values {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out
            }
            BlockData::Dense(block) => {
                let width = mantissa_byte_width(block.mantissa_bits);
                let mut out = Vec::with_capacity(block.len() * width);
                for &m in &block.mantissas {
                    out.extend_from_slice(&m.to_le_bytes()[..width]);
                }
                out
            }
            BlockData::Sparse(block) => {
                let iw = block.index_width() as usize;
                let mw = mantissa_byte_width(block.mantissa_bits);
                let mut out = Vec::with_capacity(block.entries.len() * (2 * iw + mw));
                for entry in &block.entries {
                    out.extend_from_slice(&entry.row.to_le_bytes()[..iw]);
                    out.extend_from_slice(&entry.col.to_le_bytes()[..iw]);
                    out.extend_from_slice(&entry.mantissa.to_le_bytes()[..mw]);
                }
                out
            }
        }
    }
}

/// A parsed (or to-be-written) archive: header fields plus the three factor
/// blocks of a rank-k SVD.
#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    m: u32,
    t: u32,
    k: u32,
    normalization: bool,
    sparsity: bool,
    mantissa_bits: u8,
    u: BlockData,
    sigma: BlockData,
    v: BlockData,
}

impl Archive {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        m: usize,
        t: usize,
        k: usize,
        normalization: bool,
        sparsity: bool,
        mantissa_bits: u8,
        u: BlockData,
        sigma: BlockData,
        v: BlockData,
    ) -> Result<Archive> {
        if m > u32::MAX as usize || t > u32::MAX as usize || k > u32::MAX as usize {
            return Err(Error::InvalidArchive {
                reason: "dimension exceeds u32".into(),
            });
        }
        let archive = Archive {
            m: m as u32,
            t: t as u32,
            k: k as u32,
            normalization,
            sparsity,
            mantissa_bits,
            u,
            sigma,
            v,
        };
        archive.validate()?;
        Ok(archive)
    }

    pub fn m(&self) -> usize {
        self.m as usize
    }

    pub fn t(&self) -> usize {
        self.t as usize
    }

    pub fn k(&self) -> usize {
        self.k as usize
    }

    pub fn normalization(&self) -> bool {
        self.normalization
    }

    pub fn sparsity(&self) -> bool {
        self.sparsity
    }

    pub fn mantissa_bits(&self) -> u8 {
        self.mantissa_bits
    }

    pub fn u_block(&self) -> &BlockData {
        &self.u
    }

    pub fn sigma_block(&self) -> &BlockData {
        &self.sigma
    }

    pub fn v_block(&self) -> &BlockData {
        &self.v
    }

    /// Shapes of the U, sigma, V blocks for this header.
    fn block_shapes(&self) -> [(u32, u32); 3] {
        [(self.m, self.k), (self.k, 1), (self.t, self.k)]
    }

    fn blocks(&self) -> [(&'static str, &BlockData); 3] {
        [("U", &self.u), ("sigma", &self.sigma), ("V", &self.v)]
    }

    fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidArchive { reason };
        if self.m == 0 || self.t == 0 {
            return Err(invalid("matrix dimensions must be positive".into()));
        }
        if self.m as u64 * self.t as u64 > MAX_CELLS {
            return Err(invalid(format!(
                "matrix of {} x {} cells is too large",
                self.m, self.t
            )));
        }
        if self.k == 0 || self.k > self.m.min(self.t) {
            return Err(invalid(format!(
                "rank {} out of range for a {} x {} matrix",
                self.k, self.m, self.t
            )));
        }
        if self.sparsity && !self.normalization {
            return Err(invalid("sparsity flag requires normalization".into()));
        }
        if self.normalization {
            if !(MIN_MANTISSA_BITS..=MAX_MANTISSA_BITS).contains(&self.mantissa_bits) {
                return Err(invalid(format!(
                    "mantissa width {} out of range",
                    self.mantissa_bits
                )));
            }
        } else if self.mantissa_bits != 0 {
            return Err(invalid(
                "mantissa width must be zero without normalization".into(),
            ));
        }

        for ((name, block), (rows, cols)) in self.blocks().iter().zip(self.block_shapes()) {
            let expected_len = rows as usize * cols as usize;
            if block.len() != expected_len {
                return Err(invalid(format!(
                    "{name} block holds {} entries, expected {expected_len}",
                    block.len()
                )));
            }
            match block {
                BlockData::Raw(_) => {
                    if self.normalization {
                        return Err(invalid(format!(
                            "{name} block is raw but normalization is on"
                        )));
                    }
                }
                BlockData::Dense(_) | BlockData::Sparse(_) => {
                    if !self.normalization {
                        return Err(invalid(format!(
                            "{name} block is quantized but normalization is off"
                        )));
                    }
                    let bits = block.mantissa_bits().unwrap();
                    if bits != self.mantissa_bits && bits != 32 {
                        return Err(invalid(format!(
                            "{name} block width {bits} is neither the header width nor 32"
                        )));
                    }
                    if let BlockData::Sparse(sparse) = block {
                        if !self.sparsity {
                            return Err(invalid(format!(
                                "{name} block is sparse but the sparsity flag is off"
                            )));
                        }
                        if (sparse.rows, sparse.cols) != (rows, cols) {
                            return Err(invalid(format!(
                                "{name} block shape {} x {} does not match {rows} x {cols}",
                                sparse.rows, sparse.cols
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Serializes to canonical bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(CONTAINER_OVERHEAD);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let mut flags = 0u16;
        if self.normalization {
            flags |= FLAG_NORMALIZATION;
        }
        if self.sparsity {
            flags |= FLAG_SPARSITY;
        }
        out.extend_from_slice(&flags.to_le_bytes());
        out.extend_from_slice(&self.m.to_le_bytes());
        out.extend_from_slice(&self.t.to_le_bytes());
        out.extend_from_slice(&self.k.to_le_bytes());
        out.push(self.mantissa_bits);
        out.extend_from_slice(&[0u8; 7]);
        let header_crc = crc32fast::hash(&out);
        out.extend_from_slice(&header_crc.to_le_bytes());

        let payloads: Vec<Vec<u8>> = self.blocks().iter().map(|(_, b)| b.payload()).collect();
        for ((_, block), payload) in self.blocks().iter().zip(&payloads) {
            let mut descriptor = [0u8; DESCRIPTOR_LEN - 4];
            descriptor[0] = block.representation_code(self.mantissa_bits);
            descriptor[1..5].copy_from_slice(&block.shared_exponent().to_le_bytes());
            descriptor[5..9].copy_from_slice(&block.nnz().to_le_bytes());
            descriptor[9..13].copy_from_slice(&(payload.len() as u32).to_le_bytes());
            let mut hasher = crc32fast::Hasher::new();
            hasher.update(&descriptor);
            hasher.update(payload);
            out.extend_from_slice(&descriptor);
            out.extend_from_slice(&hasher.finalize().to_le_bytes());
        }
        for payload in &payloads {
            out.extend_from_slice(payload);
        }
        out
    }

    /// Parses and fully checks an archive: magic, version, header CRC,
    /// total length, per-block CRCs, then structural consistency. Corrupt
    /// input always yields an error, never a silently wrong archive.
    pub fn from_bytes(bytes: &[u8]) -> Result<Archive> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::LengthMismatch {
                expected: HEADER_LEN as u64,
                found: bytes.len() as u64,
            });
        }
        if bytes[0..4] != MAGIC {
            return Err(Error::BadMagic {
                found: [bytes[0], bytes[1], bytes[2], bytes[3]],
            });
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::UnsupportedVersion { found: version });
        }
        let stored_header_crc = read_u32(&bytes[28..32]);
        if crc32fast::hash(&bytes[0..28]) != stored_header_crc {
            return Err(Error::CrcMismatch { section: "header" });
        }

        let flags = u16::from_le_bytes([bytes[6], bytes[7]]);
        if flags & !(FLAG_NORMALIZATION | FLAG_SPARSITY) != 0 {
            return Err(Error::InvalidArchive {
                reason: format!("unknown flag bits {flags:#06x}"),
            });
        }
        let normalization = flags & FLAG_NORMALIZATION != 0;
        let sparsity = flags & FLAG_SPARSITY != 0;
        let m = read_u32(&bytes[8..12]);
        let t = read_u32(&bytes[12..16]);
        let k = read_u32(&bytes[16..20]);
        let mantissa_bits = bytes[20];
        if bytes[21..28].iter().any(|&b| b != 0) {
            return Err(Error::InvalidArchive {
                reason: "reserved header bytes are not zero".into(),
            });
        }

        if bytes.len() < CONTAINER_OVERHEAD {
            return Err(Error::LengthMismatch {
                expected: CONTAINER_OVERHEAD as u64,
                found: bytes.len() as u64,
            });
        }
        struct RawDescriptor {
            code: u8,
            shared_exponent: i32,
            nnz: u32,
            payload_len: u32,
            crc: u32,
        }
        let mut descriptors = Vec::with_capacity(3);
        for i in 0..3 {
            let d = &bytes[HEADER_LEN + i * DESCRIPTOR_LEN..HEADER_LEN + (i + 1) * DESCRIPTOR_LEN];
            descriptors.push(RawDescriptor {
                code: d[0],
                shared_exponent: i32::from_le_bytes([d[1], d[2], d[3], d[4]]),
                nnz: read_u32(&d[5..9]),
                payload_len: read_u32(&d[9..13]),
                crc: read_u32(&d[13..17]),
            });
        }
        let expected_total = CONTAINER_OVERHEAD as u64
            + descriptors
                .iter()
                .map(|d| d.payload_len as u64)
                .sum::<u64>();
        if bytes.len() as u64 != expected_total {
            return Err(Error::LengthMismatch {
                expected: expected_total,
                found: bytes.len() as u64,
            });
        }

        let shapes = [(m, k), (k, 1u32), (t, k)];
        let names = ["U", "sigma", "V"];
        let mut blocks = Vec::with_capacity(3);
        let mut offset = CONTAINER_OVERHEAD;
        for i in 0..3 {
            let d = &descriptors[i];
            let payload = &bytes[offset..offset + d.payload_len as usize];
            offset += d.payload_len as usize;

            let descriptor_bytes =
                &bytes[HEADER_LEN + i * DESCRIPTOR_LEN..HEADER_LEN + i * DESCRIPTOR_LEN + 13];
            let mut hasher = crc32fast::Hasher::new();
            hasher.update(descriptor_bytes);
            hasher.update(payload);
            if hasher.finalize() != d.crc {
                return Err(Error::CrcMismatch { section: names[i] });
            }

            blocks.push(parse_block(
                names[i],
                d.code,
                d.shared_exponent,
                d.nnz,
                payload,
                shapes[i],
                mantissa_bits,
            )?);
        }

        let v = blocks.pop().unwrap();
        let sigma = blocks.pop().unwrap();
        let u = blocks.pop().unwrap();
        Archive::new(
            m as usize,
            t as usize,
            k as usize,
            normalization,
            sparsity,
            mantissa_bits,
            u,
            sigma,
            v,
        )
    }
}

fn read_u32(bytes: &[u8]) -> u32 {
    u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
}

/// Little-endian sign-extending read of `width` bytes.
fn read_int_le(bytes: &[u8], width: usize) -> i64 {
    let mut buf = [0u8; 8];
    buf[..width].copy_from_slice(&bytes[..width]);
    let shift = 64 - width as u32 * 8;
    ((u64::from_le_bytes(buf) << shift) as i64) >> shift
}

/// Little-endian zero-extending read of `width` bytes.
fn read_uint_le(bytes: &[u8], width: usize) -> u64 {
    let mut buf = [0u8; 8];
    buf[..width].copy_from_slice(&bytes[..width]);
    u64::from_le_bytes(buf)
}

fn parse_block(
    name: &'static str,
    code: u8,
    shared_exponent: i32,
    nnz: u32,
    payload: &[u8],
    shape: (u32, u32),
    header_bits: u8,
) -> Result<BlockData> {
    let invalid = |reason: String| Error::InvalidArchive { reason };
    let (rows, cols) = shape;
    let cells = rows as usize * cols as usize;
    let bits = match code {
        0..=2 => header_bits,
        3 | 4 => 32,
        _ => {
            return Err(invalid(format!(
                "{name} block has unknown representation code {code}"
            )))
        }
    };
    let is_sparse = matches!(code, 2 | 4);
    if !is_sparse && nnz != 0 {
        return Err(invalid(format!(
            "{name} block is not sparse but has a nonzero entry count"
        )));
    }

    match code {
        0 => {
            if payload.len() != cells * 8 {
                return Err(invalid(format!(
                    "{name} raw block payload is {} bytes, expected {}",
                    payload.len(),
                    cells * 8
                )));
            }
            if shared_exponent != 0 {
                return Err(invalid(format!(
                    "{name} raw block carries a shared exponent"
                )));
            }
            let values: Vec<f64> = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("{name} raw block holds non-finite values")));
            }
            Ok(BlockData::Raw(values))
        }
        1 | 3 => {
            let width = mantissa_byte_width(bits);
            if payload.len() != cells * width {
                return Err(invalid(format!(
                    "{name} dense block payload is {} bytes, expected {}",
                    payload.len(),
                    cells * width
                )));
            }
            let mut mantissas = Vec::with_capacity(cells);
            for chunk in payload.chunks_exact(width) {
                let value = read_int_le(chunk, width);
                check_mantissa_range(name, value, bits)?;
                mantissas.push(value as i32);
            }
            Ok(BlockData::Dense(NormalizedBlock {
                shared_exponent,
                mantissa_bits: bits,
                mantissas,
            }))
        }
        2 | 4 => {
            let iw = index_width(rows, cols) as usize;
            let mw = mantissa_byte_width(bits);
            let entry_len = 2 * iw + mw;
            if payload.len() != nnz as usize * entry_len {
                return Err(invalid(format!(
                    "{name} sparse block payload is {} bytes, expected {} for {nnz} entries",
                    payload.len(),
                    nnz as usize * entry_len
                )));
            }
            let mut entries = Vec::with_capacity(nnz as usize);
            for chunk in payload.chunks_exact(entry_len) {
                let row = read_uint_le(&chunk[0..iw], iw);
                let col = read_uint_le(&chunk[iw..2 * iw], iw);
                let mantissa = read_int_le(&chunk[2 * iw..], mw);
                check_mantissa_range(name, mantissa, bits)?;
                entries.push(SparseEntry {
                    row: row as u32,
                    col: col as u32,
                    mantissa: mantissa as i32,
                });
            }
            Ok(BlockData::Sparse(SparseBlock {
                rows,
                cols,
                shared_exponent,
                mantissa_bits: bits,
                entries,
            }))
        }
        _ => unreachable!(),
    }
}

fn check_mantissa_range(name: &'static str, value: i64, bits: u8) -> Result<()> {
    let top = 1i64 << (bits - 1);
    if value < -top || value >= top {
        return Err(Error::InvalidArchive {
            reason: format!("{name} block mantissa {value} exceeds {bits} bits"),
        });
    }
    Ok(())
}
