//! Streaming evaluation of normalized representations for a batch of inputs.
//!
//! Weights are regenerated on the fly from their edge ids instead of being
//! materialized, so replication factors in the tens of thousands stay cheap:
//! memory is O(|S|·r·batch) values and the weight draw is a single pass.
//! The arithmetic (edge order, scaling, bias placement, normalization) is
//! identical to [`forward`](super::forward) + [`representation`](super::representation),
//! so both paths produce bit-identical values for the same seed.

use super::{bias_seed, bias_value, check_shape, weight_seed, Network, RealizeError};
use crate::compkernel::InputPoint;
use crate::numeric::fill_normals;
use crate::skeleton::NodePayload;

/// Normalized representations for a batch of inputs, one row per input.
#[derive(Debug, Clone)]
pub struct RepMatrix {
    rows: usize,
    width: usize,
    data: Vec<f64>,
}

impl RepMatrix {
    pub fn from_rows(rows: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * width);
        Self { rows, width, data }
    }

    /// Split into the first `first` rows and the rest.
    pub fn split_rows(&self, first: usize) -> (RepMatrix, RepMatrix) {
        assert!(first <= self.rows);
        let cut = first * self.width;
        (
            RepMatrix {
                rows: first,
                width: self.width,
                data: self.data[..cut].to_vec(),
            },
            RepMatrix {
                rows: self.rows - first,
                width: self.width,
                data: self.data[cut..].to_vec(),
            },
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    /// `κ_w(x_i, x_j) = ⟨Ψ(x_i), Ψ(x_j)⟩`.
    pub fn pair_kernel(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Compute `Ψ_w(x)` for every input under the β-biased initialization keyed
/// by `seed`, without materializing the weight vector.
pub fn representations(
    net: &Network,
    seed: u64,
    beta: f64,
    inputs: &[InputPoint],
) -> Result<RepMatrix, RealizeError> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(RealizeError::BadBeta(beta));
    }
    for x in inputs {
        check_shape(net, x)?;
    }
    let m = inputs.len();
    let s = net.skeleton();
    let n = s.coordinate_count();
    let d = s.coordinate_dim();
    let r = net.replication();
    let seed_w = weight_seed(seed);
    let seed_b = bias_seed(seed);
    let shrink = (1.0 - beta).sqrt();

    // values[node]: group values laid out replica-major, m columns each
    let mut values: Vec<Option<Vec<f64>>> = vec![None; s.nodes().len()];
    for (i, slot) in values.iter_mut().enumerate().take(n) {
        let mut v = vec![0.0f64; d * m];
        for (col, x) in inputs.iter().enumerate() {
            for (c, &coor) in x.coordinate(i).iter().enumerate() {
                v[c * m + col] = coor;
            }
        }
        *slot = Some(v);
    }
    // free a node's values after its last consumer
    let mut remaining_uses = vec![0usize; s.nodes().len()];
    for node in s.nodes() {
        for &u in &node.incoming {
            remaining_uses[u] += 1;
        }
    }

    // Source tile that keeps ~32k values hot in cache while every replica
    // row accumulates against it; weights regenerate per (row, tile) chunk.
    let tile_len = (32_768 / m.max(1)).clamp(16, 4096);
    let mut chunk = vec![0.0f64; tile_len];
    for block in &net.blocks {
        let activation = match &s.node(block.node).payload {
            NodePayload::Internal { activation, .. } => activation.clone(),
            NodePayload::Input { .. } => unreachable!(),
        };
        // pre-activation accumulators for the whole group
        let mut pre = vec![0.0f64; r * m];
        let mut pos = 0usize;
        for seg in &block.segments {
            let scale = seg.sigma * shrink;
            let node = leading_node(net, seg.src_offset);
            let src = values[node].as_deref().expect("source values alive");
            let base = seg.src_offset - net.group_offset(node);
            let seg_vals = &src[base * m..(base + seg.len) * m];
            // Tiles advance in ascending source order and rows accumulate
            // left to right, so each (row, column) sees the same rounding
            // sequence as the per-edge loop in `forward`.
            let mut i0 = 0usize;
            while i0 < seg.len {
                let len = tile_len.min(seg.len - i0);
                let tile = &seg_vals[i0 * m..(i0 + len) * m];
                for j in 0..r {
                    let edge0 =
                        block.first_edge + (j * block.fan_in + pos + i0) as u64;
                    fill_normals(seed_w, edge0, &mut chunk[..len]);
                    let acc = &mut pre[j * m..(j + 1) * m];
                    // Four sources per pass: the accumulator row is touched
                    // once per quartet instead of once per source; the
                    // strictly left-associated chain keeps each column's
                    // rounding sequence identical to the per-edge loop in
                    // `forward`, so both paths stay bit-identical.
                    let mut i = 0usize;
                    while i + 4 <= len {
                        let w0 = chunk[i] * scale;
                        let w1 = chunk[i + 1] * scale;
                        let w2 = chunk[i + 2] * scale;
                        let w3 = chunk[i + 3] * scale;
                        let (v0, rest) = tile[i * m..(i + 4) * m].split_at(m);
                        let (v1, rest) = rest.split_at(m);
                        let (v2, v3) = rest.split_at(m);
                        let cols = acc.iter_mut().zip(v0).zip(v1).zip(v2).zip(v3);
                        for ((((a, &x0), &x1), &x2), &x3) in cols {
                            *a = (((*a + w0 * x0) + w1 * x1) + w2 * x2) + w3 * x3;
                        }
                        i += 4;
                    }
                    while i < len {
                        let w = chunk[i] * scale;
                        let vals = &tile[i * m..i * m + m];
                        for (a, &v) in acc.iter_mut().zip(vals) {
                            *a += w * v;
                        }
                        i += 1;
                    }
                }
                i0 += len;
            }
            pos += seg.len;
        }
        let mut out = pre;
        for j in 0..r {
            let bias = bias_value(seed_b, beta, block.neuron_offset + j);
            for slot in out[j * m..(j + 1) * m].iter_mut() {
                *slot = activation.eval(*slot + bias);
            }
        }
        for &u in &s.node(block.node).incoming {
            remaining_uses[u] -= 1;
            if remaining_uses[u] == 0 {
                values[u] = None;
            }
        }
        values[block.node] = Some(out);
    }

    let out_node = s.output();
    let rep = values[out_node].take().expect("output values computed");
    let norm = match &s.node(out_node).payload {
        NodePayload::Internal { activation, .. } => activation.gaussian_norm(),
        NodePayload::Input { .. } => 1.0,
    };
    let divisor = norm * (r as f64).sqrt();
    // transpose to input-major rows, applying the same per-element division
    // the explicit representation path uses
    let mut data = vec![0.0f64; m * r];
    for j in 0..r {
        for col in 0..m {
            data[col * r + j] = rep[j * m + col] / divisor;
        }
    }
    Ok(RepMatrix {
        rows: m,
        width: r,
        data,
    })
}

/// Map a neuron offset back to the skeleton node whose group starts there.
/// Offsets passed in always come from `Segment::src_offset`, which is a
/// group start by construction.
fn leading_node(net: &Network, offset: usize) -> usize {
    let s = net.skeleton();
    let n = s.coordinate_count();
    let d = s.coordinate_dim();
    if offset < n * d {
        offset / d
    } else {
        n + (offset - n * d) / net.replication()
    }
}
