//! `.cmap` file format.
//!
//! ```text
//! offset  size  content
//! 0       8     magic "HPCMAP01"
//! 8       8     header length H, u64 little-endian
//! 16      H     UTF-8 JSON header (CmapHeader)
//! 16+H    8*N   N = nx*ny*nz*npsi cell costs, f64 little-endian,
//!               yaw fastest then z, y, x; +inf marks an unreachable cell
//! ```
//!
//! The header carries the grid, the arm mount, the collection pose and the
//! SHA-256 of the payload bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CostTable, CostmapError, GridSpec};
use crate::kinematics::JointConfig;
use crate::layout::ArmMount;

pub const CMAP_MAGIC: &[u8; 8] = b"HPCMAP01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmapHeader {
    pub version: u32,
    pub spec: GridSpec,
    pub mount: ArmMount,
    pub start_config: JointConfig,
    pub shape: [usize; 4],
    pub payload_sha256: String,
}

fn payload_bytes(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn write_table(table: &CostTable, path: impl AsRef<Path>) -> Result<(), CostmapError> {
    let payload = payload_bytes(&table.values);
    let header = CmapHeader {
        version: 1,
        spec: table.spec.clone(),
        mount: table.mount,
        start_config: table.start_config,
        shape: table.spec.shape(),
        payload_sha256: sha256_hex(&payload),
    };
    let header = serde_json::to_vec(&header).map_err(|e| CostmapError::Format(e.to_string()))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CMAP_MAGIC)?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    w.write_all(&payload)?;
    w.flush()?;
    Ok(())
}

pub fn read_table(path: impl AsRef<Path>) -> Result<CostTable, CostmapError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CMAP_MAGIC {
        return Err(CostmapError::Format("bad magic".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut header = vec![0u8; len];
    r.read_exact(&mut header)?;
    let header: CmapHeader =
        serde_json::from_slice(&header).map_err(|e| CostmapError::Format(e.to_string()))?;
    if header.shape != header.spec.shape() {
        return Err(CostmapError::Format("shape does not match grid".into()));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != header.spec.len() * 8 {
        return Err(CostmapError::Format(format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            header.spec.len() * 8
        )));
    }
    if sha256_hex(&payload) != header.payload_sha256 {
        return Err(CostmapError::Checksum);
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    CostTable::from_parts(header.spec, header.mount, header.start_config, values)
}
