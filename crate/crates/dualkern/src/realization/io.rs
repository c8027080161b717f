//! Weight file format: a binary body with a `DKRN` magic header plus a JSON
//! sidecar (`<path>.json`) recording seed, β, and the skeleton hash.
//!
//! Layout (all little-endian):
//!   magic "DKRN" | version u32 | r u64 | k u64 | edge count u64
//!   edge count × (edge id u64, weight f64)
//!   (neuron id u64, bias f64) pairs for every non-input neuron

use super::{Network, RealizeError, WeightAssignment};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"DKRN";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightSidecar {
    pub seed: u64,
    pub beta: f64,
    pub skeleton_hash: String,
}

/// Write the weight body to `path` and the sidecar to `<path>.json`.
pub fn write_weights(
    path: &Path,
    net: &Network,
    w: &WeightAssignment,
) -> Result<(), RealizeError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(net.replication() as u64).to_le_bytes())?;
    out.write_all(&(net.outputs() as u64).to_le_bytes())?;
    out.write_all(&net.edge_count().to_le_bytes())?;
    for (id, weight) in w.weights().iter().enumerate() {
        out.write_all(&(id as u64).to_le_bytes())?;
        out.write_all(&weight.to_le_bytes())?;
    }
    let first = net.input_neuron_count() as u64;
    for (i, bias) in w.biases().iter().enumerate() {
        out.write_all(&(first + i as u64).to_le_bytes())?;
        out.write_all(&bias.to_le_bytes())?;
    }
    out.flush()?;
    let sidecar = WeightSidecar {
        seed: w.seed(),
        beta: w.beta(),
        skeleton_hash: format!("{:016x}", net.skeleton().hash()),
    };
    let json_path = sidecar_path(path);
    std::fs::write(json_path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".json");
    os.into()
}

/// Read a weight file written by [`write_weights`], checking it against the
/// network it claims to initialize.
pub fn read_weights(path: &Path, net: &Network) -> Result<WeightAssignment, RealizeError> {
    let mut input = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(RealizeError::Format(format!(
            "bad magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(RealizeError::Format(format!(
            "unsupported version {version}"
        )));
    }
    let r = read_u64(&mut input)?;
    let k = read_u64(&mut input)?;
    let edges = read_u64(&mut input)?;
    if r != net.replication() as u64 || k != net.outputs() as u64 || edges != net.edge_count() {
        return Err(RealizeError::Format(format!(
            "file is for (r={r}, k={k}, edges={edges}), network has (r={}, k={}, edges={})",
            net.replication(),
            net.outputs(),
            net.edge_count()
        )));
    }
    let mut weights = vec![0.0f64; edges as usize];
    for _ in 0..edges {
        let id = read_u64(&mut input)? as usize;
        let value = read_f64(&mut input)?;
        if id >= weights.len() {
            return Err(RealizeError::Format(format!("edge id {id} out of range")));
        }
        weights[id] = value;
    }
    let bias_count = net.neuron_count() - net.input_neuron_count();
    let first = net.input_neuron_count() as u64;
    let mut biases = vec![0.0f64; bias_count];
    for _ in 0..bias_count {
        let id = read_u64(&mut input)?;
        let value = read_f64(&mut input)?;
        let slot = id
            .checked_sub(first)
            .filter(|&i| (i as usize) < bias_count)
            .ok_or_else(|| RealizeError::Format(format!("neuron id {id} out of range")))?;
        biases[slot as usize] = value;
    }
    let sidecar: WeightSidecar =
        serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    let expect = format!("{:016x}", net.skeleton().hash());
    if sidecar.skeleton_hash != expect {
        return Err(RealizeError::Format(format!(
            "sidecar skeleton hash {} does not match network skeleton {expect}",
            sidecar.skeleton_hash
        )));
    }
    WeightAssignment::from_parts(net, weights, biases, sidecar.seed, sidecar.beta)
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}
