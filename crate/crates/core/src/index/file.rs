//! Index files.
//!
//! Little-endian throughout. Header (24 bytes):
//!
//! | offset | type  | field                                  |
//! |--------|-------|----------------------------------------|
//! | 0      | [u8;4]| magic `VIDX`                           |
//! | 4      | u32   | version (1)                            |
//! | 8      | u32   | kind: 0 flat, 1 ivf, 2 ivfpq           |
//! | 12     | u32   | dim                                    |
//! | 16     | u64   | rows covered                           |
//!
//! IVF section (kinds 1, 2): `nlist: u32`, `default_nprobe: u32`,
//! `seed: u64`, centroids `nlist * dim` f32, list lengths `nlist` u32,
//! then row ids (u32) list after list.
//!
//! PQ section (kind 2): `m: u32`, `ksub: u32`, `seed: u64`, centroids
//! `m * ksub * (dim / m)` f32, codes `rows * m` bytes in row order.

use std::path::Path;

use crate::matrix::EmbeddingMatrix;

use super::ivf::IvfIndex;
use super::pq::{PqCodebook, PqCodes};
use super::{search_flat, search_ivf, search_ivfpq, CandidateMask, Hit, IndexError};

pub const INDEX_MAGIC: [u8; 4] = *b"VIDX";
pub const INDEX_VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub enum SpaceIndex {
    Flat {
        dim: usize,
        rows: usize,
    },
    Ivf(IvfIndex),
    IvfPq {
        ivf: IvfIndex,
        codebook: PqCodebook,
        codes: PqCodes,
    },
}

impl SpaceIndex {
    pub fn flat(matrix: &EmbeddingMatrix) -> Self {
        Self::Flat {
            dim: matrix.dim(),
            rows: matrix.len(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Flat { .. } => "flat",
            Self::Ivf(_) => "ivf",
            Self::IvfPq { .. } => "ivfpq",
        }
    }

    fn kind_code(&self) -> u32 {
        match self {
            Self::Flat { .. } => 0,
            Self::Ivf(_) => 1,
            Self::IvfPq { .. } => 2,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Flat { dim, .. } => *dim,
            Self::Ivf(ivf) | Self::IvfPq { ivf, .. } => ivf.dim(),
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            Self::Flat { rows, .. } => *rows,
            Self::Ivf(ivf) | Self::IvfPq { ivf, .. } => ivf.num_rows(),
        }
    }

    pub fn is_exhaustive(&self) -> bool {
        matches!(self, Self::Flat { .. })
    }

    pub fn ivf(&self) -> Option<&IvfIndex> {
        match self {
            Self::Flat { .. } => None,
            Self::Ivf(ivf) | Self::IvfPq { ivf, .. } => Some(ivf),
        }
    }

    /// Top-`top` search. `nprobe` defaults to the index's stored value and
    /// is ignored by flat indexes.
    pub fn search(
        &self,
        matrix: &EmbeddingMatrix,
        query: &[f32],
        top: usize,
        nprobe: Option<usize>,
        mask: Option<&CandidateMask>,
    ) -> Result<Vec<Hit>, IndexError> {
        match self {
            Self::Flat { .. } => search_flat(matrix, query, top, mask),
            Self::Ivf(ivf) => search_ivf(ivf, matrix, query, top, nprobe.unwrap_or(ivf.default_nprobe()), mask),
            Self::IvfPq { ivf, codebook, codes } => search_ivfpq(
                ivf,
                codebook,
                codes,
                query,
                top,
                nprobe.unwrap_or(ivf.default_nprobe()),
                mask,
            ),
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, vs: &[f32]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_index(index: &SpaceIndex) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(&INDEX_MAGIC);
    out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
    out.extend_from_slice(&index.kind_code().to_le_bytes());
    put_u32(&mut out, index.dim());
    out.extend_from_slice(&(index.rows() as u64).to_le_bytes());
    if let Some(ivf) = index.ivf() {
        put_u32(&mut out, ivf.nlist());
        put_u32(&mut out, ivf.default_nprobe);
        out.extend_from_slice(&ivf.seed.to_le_bytes());
        put_f32s(&mut out, &ivf.centroids);
        for list in &ivf.lists {
            put_u32(&mut out, list.len());
        }
        for id in ivf.lists.iter().flatten() {
            out.extend_from_slice(&id.to_le_bytes());
        }
    }
    if let SpaceIndex::IvfPq { codebook, codes, .. } = index {
        put_u32(&mut out, codebook.m);
        put_u32(&mut out, codebook.ksub);
        out.extend_from_slice(&codebook.seed.to_le_bytes());
        put_f32s(&mut out, &codebook.centroids);
        out.extend_from_slice(&codes.codes);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, offset: usize, reason: impl Into<String>) -> IndexError {
        IndexError::Format {
            offset: offset as u64,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], IndexError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.err(self.bytes.len(), format!("truncated {what}"))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn count(&self, a: usize, b: usize) -> Result<usize, IndexError> {
        a.checked_mul(b)
            .ok_or_else(|| self.err(self.pos, "section size overflows"))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>, IndexError> {
        let bytes = self.take(self.count(n, 4)?, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

pub fn decode_index(bytes: &[u8]) -> Result<SpaceIndex, IndexError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "header")? != INDEX_MAGIC {
        return Err(r.err(0, "bad magic"));
    }
    let version = r.u32("header")?;
    if version != INDEX_VERSION {
        return Err(r.err(4, format!("unsupported version {version}")));
    }
    let kind = r.u32("header")?;
    if kind > 2 {
        return Err(r.err(8, format!("unknown kind {kind}")));
    }
    let dim = r.u32("header")? as usize;
    if dim == 0 {
        return Err(r.err(12, "dim is zero"));
    }
    let rows = usize::try_from(r.u64("header")?).map_err(|_| r.err(16, "row count too large"))?;

    let index = if kind == 0 {
        SpaceIndex::Flat { dim, rows }
    } else {
        let nlist_at = r.pos;
        let nlist = r.u32("ivf section")? as usize;
        if nlist == 0 {
            return Err(r.err(nlist_at, "nlist is zero"));
        }
        let default_nprobe = r.u32("ivf section")? as usize;
        let seed = r.u64("ivf section")?;
        let centroids = r.f32s(r.count(nlist, dim)?, "ivf centroids")?;
        let lens_at = r.pos;
        let lens: Vec<usize> = (0..nlist)
            .map(|_| r.u32("ivf list lengths").map(|v| v as usize))
            .collect::<Result<_, _>>()?;
        if lens.iter().sum::<usize>() != rows {
            return Err(r.err(lens_at, "list lengths do not sum to row count"));
        }
        let ids_at = r.pos;
        let mut seen = vec![false; rows];
        let mut lists = Vec::with_capacity(nlist);
        for len in lens {
            let mut list = Vec::with_capacity(len);
            for _ in 0..len {
                let at = r.pos;
                let id = r.u32("ivf ids")?;
                match seen.get_mut(id as usize) {
                    Some(s) if !*s => *s = true,
                    _ => return Err(r.err(at, format!("row id {id} out of range or repeated"))),
                }
                list.push(id);
            }
            lists.push(list);
        }
        debug_assert!(r.pos >= ids_at);
        let ivf = IvfIndex {
            dim,
            centroids,
            lists,
            seed,
            default_nprobe,
        };
        if kind == 1 {
            SpaceIndex::Ivf(ivf)
        } else {
            let m_at = r.pos;
            let m = r.u32("pq section")? as usize;
            if m == 0 || dim % m != 0 {
                return Err(r.err(m_at, format!("m={m} does not divide dim={dim}")));
            }
            let ksub_at = r.pos;
            let ksub = r.u32("pq section")? as usize;
            if ksub == 0 || ksub > super::PQ_KSUB {
                return Err(r.err(ksub_at, format!("ksub={ksub} out of range")));
            }
            let pq_seed = r.u64("pq section")?;
            let centroids = r.f32s(r.count(r.count(m, ksub)?, dim / m)?, "pq centroids")?;
            let codes_at = r.pos;
            let codes = r.take(r.count(rows, m)?, "pq codes")?.to_vec();
            if let Some(p) = codes.iter().position(|&c| c as usize >= ksub) {
                return Err(r.err(codes_at + p, format!("code {} not below ksub={ksub}", codes[p])));
            }
            SpaceIndex::IvfPq {
                ivf,
                codebook: PqCodebook {
                    dim,
                    m,
                    ksub,
                    seed: pq_seed,
                    centroids,
                },
                codes: PqCodes { m, codes },
            }
        }
    };
    if r.pos != bytes.len() {
        return Err(r.err(r.pos, "trailing bytes"));
    }
    Ok(index)
}

pub fn write_index(path: &Path, index: &SpaceIndex) -> Result<(), IndexError> {
    crate::store::write_atomic(path, &encode_index(index)).map_err(|e| IndexError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn read_index(path: &Path) -> Result<SpaceIndex, IndexError> {
    let bytes = std::fs::read(path).map_err(|e| IndexError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    decode_index(&bytes)
}
