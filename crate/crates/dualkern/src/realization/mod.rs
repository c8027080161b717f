//! Realize a skeleton into a concrete network, draw variance-normalized
//! random weights, and compute forward passes, normalized representations,
//! and empirical kernels.
//!
//! The `(r, k)`-fold realization replaces each input node with `d` input
//! neurons (node weight `1/d`), each internal node with `r` neurons carrying
//! its activation (node weight `δ_v/r`), and attaches `k` identity output
//! neurons (weight 1) fully connected to the replicas of the skeleton's
//! output node. Edge `v^i u^j` exists exactly when `uv` is a skeleton edge.
//!
//! Weight variances follow the node-weight rule: `d·δ(u)/δ(IN(v))` when the
//! source is an input neuron and `δ(u)/(‖σ_u‖²·δ(IN(v)))` otherwise, all
//! scaled by `(1−β)` under β-biased initialization, with bias variance `β`.

mod io;
mod stream;

pub use io::{read_weights, write_weights, WeightSidecar};
pub use stream::{representations, RepMatrix};

use crate::compkernel::InputPoint;
use crate::numeric::{derive_seed, fill_normals, normal_at};
use crate::skeleton::{NodePayload, Skeleton, Violation};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RealizeError {
    #[error("replication r must be ≥ 1")]
    BadReplication,
    #[error("output count k must be ≥ 1 (use realize_representation for k = 0)")]
    BadOutputs,
    #[error("skeleton fails validation: {0:?}")]
    InvalidSkeleton(Vec<Violation>),
    #[error("beta must lie in [0, 1], got {0}")]
    BadBeta(f64),
    #[error("input has shape (n={got_n}, d={got_d}), network expects (n={want_n}, d={want_d})")]
    ShapeMismatch {
        want_n: usize,
        want_d: usize,
        got_n: usize,
        got_d: usize,
    },
    #[error("weight vector has length {got}, network has {want} edges")]
    WeightCount { got: usize, want: usize },
    #[error("bias vector has length {got}, network has {want} non-input neurons")]
    BiasCount { got: usize, want: usize },
    #[error("weights file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One incoming group of a replicated node: a contiguous run of source
/// neurons together with the weight scale their edges share.
#[derive(Debug, Clone)]
struct Segment {
    src_offset: usize,
    len: usize,
    /// √(variance) per Def. of random weights, before the (1−β) factor.
    sigma: f64,
}

/// The replicated form of one internal skeleton node.
#[derive(Debug, Clone)]
struct NodeBlock {
    node: usize,
    first_edge: u64,
    /// In-edges per replica.
    fan_in: usize,
    /// First neuron id of this group.
    neuron_offset: usize,
    segments: Vec<Segment>,
}

/// A realized network `N(S, r, k)`; `k = 0` is the representation-only form.
#[derive(Debug, Clone)]
pub struct Network {
    skeleton: Skeleton,
    r: usize,
    k: usize,
    input_neurons: usize,
    neuron_count: usize,
    edge_count: u64,
    blocks: Vec<NodeBlock>,
    output_first_edge: u64,
}

impl Network {
    pub fn skeleton(&self) -> &Skeleton {
        &self.skeleton
    }

    pub fn replication(&self) -> usize {
        self.r
    }

    pub fn outputs(&self) -> usize {
        self.k
    }

    /// Width of the normalized representation (replicas of the output node).
    pub fn representation_width(&self) -> usize {
        self.r
    }

    pub fn neuron_count(&self) -> usize {
        self.neuron_count
    }

    pub fn input_neuron_count(&self) -> usize {
        self.input_neurons
    }

    pub fn edge_count(&self) -> u64 {
        self.edge_count
    }

    fn group_offset(&self, node: usize) -> usize {
        let n = self.skeleton.coordinate_count();
        let d = self.skeleton.coordinate_dim();
        if node < n {
            node * d
        } else {
            n * d + (node - n) * self.r
        }
    }

    /// Visit every edge as `(edge id, source neuron, target neuron)`, in
    /// canonical edge-id order.
    pub fn for_each_edge<F: FnMut(u64, usize, usize)>(&self, mut f: F) {
        for block in &self.blocks {
            let mut edge = block.first_edge;
            for j in 0..self.r {
                let dst = block.neuron_offset + j;
                for seg in &block.segments {
                    for i in 0..seg.len {
                        f(edge, seg.src_offset + i, dst);
                        edge += 1;
                    }
                }
            }
        }
        let out_node = self.skeleton.output();
        let rep_offset = self.group_offset(out_node);
        let mut edge = self.output_first_edge;
        for o in 0..self.k {
            let dst = self.neuron_count - self.k + o;
            for j in 0..self.r {
                f(edge, rep_offset + j, dst);
                edge += 1;
            }
        }
    }
}

fn effective_delta(s: &Skeleton, node: usize) -> f64 {
    match &s.node(node).payload {
        NodePayload::Input { .. } => 1.0,
        NodePayload::Internal { delta, .. } => *delta,
    }
}

fn build_network(s: &Skeleton, r: usize, k: usize) -> Result<Network, RealizeError> {
    if r == 0 {
        return Err(RealizeError::BadReplication);
    }
    let violations: Vec<Violation> = s
        .validate()
        .into_iter()
        .filter(|v| !v.is_warning())
        .collect();
    if !violations.is_empty() {
        return Err(RealizeError::InvalidSkeleton(violations));
    }
    let n = s.coordinate_count();
    let d = s.coordinate_dim();
    let input_neurons = n * d;
    let neuron_count = input_neurons + s.size() * r + k;
    let mut blocks = Vec::with_capacity(s.size());
    let mut next_edge = 0u64;
    for id in s.internal_ids() {
        let node = s.node(id);
        // δ(IN(v_j)) summed over all source neurons collapses to a sum of
        // effective node weights of the incoming skeleton nodes.
        let delta_in: f64 = node.incoming.iter().map(|&u| effective_delta(s, u)).sum();
        let mut segments = Vec::with_capacity(node.incoming.len());
        let mut fan_in = 0usize;
        for &u in &node.incoming {
            let (len, variance) = match &s.node(u).payload {
                NodePayload::Input { .. } => (d, (1.0 / d as f64) * d as f64 / delta_in),
                NodePayload::Internal { activation, delta } => {
                    let norm_sq = activation.gaussian_norm() * activation.gaussian_norm();
                    (r, (delta / r as f64) / (norm_sq * delta_in))
                }
            };
            segments.push(Segment {
                src_offset: offset_of(s, r, u),
                len,
                sigma: variance.sqrt(),
            });
            fan_in += len;
        }
        blocks.push(NodeBlock {
            node: id,
            first_edge: next_edge,
            fan_in,
            neuron_offset: input_neurons + (id - n) * r,
            segments,
        });
        next_edge += (fan_in as u64) * r as u64;
    }
    let output_first_edge = next_edge;
    let edge_count = next_edge + (k as u64) * r as u64;
    Ok(Network {
        skeleton: s.clone(),
        r,
        k,
        input_neurons,
        neuron_count,
        edge_count,
        blocks,
        output_first_edge,
    })
}

fn offset_of(s: &Skeleton, r: usize, node: usize) -> usize {
    let n = s.coordinate_count();
    let d = s.coordinate_dim();
    if node < n {
        node * d
    } else {
        n * d + (node - n) * r
    }
}

/// The `(r, k)`-fold realization.
pub fn realize(s: &Skeleton, r: usize, k: usize) -> Result<Network, RealizeError> {
    if k == 0 {
        return Err(RealizeError::BadOutputs);
    }
    build_network(s, r, k)
}

/// The representation-only realization `N(S, r)` (no output layer).
pub fn realize_representation(s: &Skeleton, r: usize) -> Result<Network, RealizeError> {
    build_network(s, r, 0)
}

/// Concrete Gaussian weights and biases for a network.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightAssignment {
    weights: Vec<f64>,
    /// Biases for non-input neurons, indexed by `neuron_id − input_neurons`.
    biases: Vec<f64>,
    seed: u64,
    beta: f64,
}

const WEIGHT_STREAM: u64 = 0x1;
const BIAS_STREAM: u64 = 0x2;

pub(crate) fn weight_seed(seed: u64) -> u64 {
    derive_seed(seed, WEIGHT_STREAM)
}

pub(crate) fn bias_seed(seed: u64) -> u64 {
    derive_seed(seed, BIAS_STREAM)
}

pub(crate) fn bias_value(seed_b: u64, beta: f64, neuron_id: usize) -> f64 {
    if beta == 0.0 {
        0.0
    } else {
        beta.sqrt() * normal_at(seed_b, neuron_id as u64)
    }
}

impl WeightAssignment {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn weight(&self, edge: u64) -> f64 {
        self.weights[edge as usize]
    }

    /// Multiply every edge weight by `c` (biases untouched).
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            weights: self.weights.iter().map(|w| c * w).collect(),
            biases: self.biases.clone(),
            seed: self.seed,
            beta: self.beta,
        }
    }

    /// Explicit weights, for hand-built test networks and file loading.
    pub fn from_parts(
        net: &Network,
        weights: Vec<f64>,
        biases: Vec<f64>,
        seed: u64,
        beta: f64,
    ) -> Result<Self, RealizeError> {
        if weights.len() != net.edge_count as usize {
            return Err(RealizeError::WeightCount {
                got: weights.len(),
                want: net.edge_count as usize,
            });
        }
        let want_biases = net.neuron_count - net.input_neurons;
        if biases.len() != want_biases {
            return Err(RealizeError::BiasCount {
                got: biases.len(),
                want: want_biases,
            });
        }
        Ok(Self {
            weights,
            biases,
            seed,
            beta,
        })
    }
}

/// Draw the β-biased random initialization for `net`. Each edge weight and
/// bias is a pure function of `(seed, id)`, so the draw is reproducible and
/// independent of evaluation order.
pub fn init_weights(net: &Network, seed: u64, beta: f64) -> Result<WeightAssignment, RealizeError> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(RealizeError::BadBeta(beta));
    }
    let seed_w = weight_seed(seed);
    let seed_b = bias_seed(seed);
    let shrink = (1.0 - beta).sqrt();
    let mut weights = vec![0.0f64; net.edge_count as usize];
    for block in &net.blocks {
        let span = block.fan_in * net.r;
        let start = block.first_edge as usize;
        fill_normals(seed_w, block.first_edge, &mut weights[start..start + span]);
        for j in 0..net.r {
            let mut pos = start + j * block.fan_in;
            for seg in &block.segments {
                let scale = seg.sigma * shrink;
                for w in &mut weights[pos..pos + seg.len] {
                    *w *= scale;
                }
                pos += seg.len;
            }
        }
    }
    if net.k > 0 {
        // output edges share variance 1/r under unit output node weight
        let start = net.output_first_edge as usize;
        let span = net.k * net.r;
        fill_normals(seed_w, net.output_first_edge, &mut weights[start..start + span]);
        let scale = (1.0 / net.r as f64).sqrt() * shrink;
        for w in &mut weights[start..start + span] {
            *w *= scale;
        }
    }
    let biases = (0..net.neuron_count - net.input_neurons)
        .map(|i| bias_value(seed_b, beta, net.input_neurons + i))
        .collect();
    Ok(WeightAssignment {
        weights,
        biases,
        seed,
        beta,
    })
}

fn check_shape(net: &Network, x: &InputPoint) -> Result<(), RealizeError> {
    let (n, d) = (
        net.skeleton.coordinate_count(),
        net.skeleton.coordinate_dim(),
    );
    if x.coordinate_count() != n || x.coordinate_dim() != d {
        return Err(RealizeError::ShapeMismatch {
            want_n: n,
            want_d: d,
            got_n: x.coordinate_count(),
            got_d: x.coordinate_dim(),
        });
    }
    Ok(())
}

/// All neuron values for one input, in neuron-id order.
fn forward_values(net: &Network, w: &WeightAssignment, x: &InputPoint) -> Vec<f64> {
    let d = net.skeleton.coordinate_dim();
    let mut values = vec![0.0f64; net.neuron_count];
    for i in 0..net.skeleton.coordinate_count() {
        values[i * d..(i + 1) * d].copy_from_slice(x.coordinate(i));
    }
    for block in &net.blocks {
        let activation = match &net.skeleton.node(block.node).payload {
            NodePayload::Internal { activation, .. } => activation,
            NodePayload::Input { .. } => unreachable!(),
        };
        for j in 0..net.r {
            let neuron = block.neuron_offset + j;
            let mut edge = block.first_edge as usize + j * block.fan_in;
            let mut acc = 0.0f64;
            for seg in &block.segments {
                for i in 0..seg.len {
                    acc += w.weights[edge] * values[seg.src_offset + i];
                    edge += 1;
                }
            }
            acc += w.biases[neuron - net.input_neurons];
            values[neuron] = activation.eval(acc);
        }
    }
    if net.k > 0 {
        let rep_offset = net.group_offset(net.skeleton.output());
        for o in 0..net.k {
            let neuron = net.neuron_count - net.k + o;
            let edge0 = net.output_first_edge as usize + o * net.r;
            let mut acc = 0.0f64;
            for (j, weight) in w.weights[edge0..edge0 + net.r].iter().enumerate() {
                acc += weight * values[rep_offset + j];
            }
            acc += w.biases[neuron - net.input_neurons];
            values[neuron] = acc;
        }
    }
    values
}

/// Propagate `x` through the network; returns the `k` output values.
pub fn forward(net: &Network, w: &WeightAssignment, x: &InputPoint) -> Result<Vec<f64>, RealizeError> {
    check_shape(net, x)?;
    let values = forward_values(net, w, x);
    Ok(values[net.neuron_count - net.k..].to_vec())
}

/// The normalized representation `Ψ_w(x)`: the output-node replicas, each
/// divided by `‖σ_v‖·√q`.
pub fn representation(
    net: &Network,
    w: &WeightAssignment,
    x: &InputPoint,
) -> Result<Vec<f64>, RealizeError> {
    check_shape(net, x)?;
    let values = forward_values(net, w, x);
    let out_node = net.skeleton.output();
    let offset = net.group_offset(out_node);
    let norm = match &net.skeleton.node(out_node).payload {
        NodePayload::Internal { activation, .. } => activation.gaussian_norm(),
        NodePayload::Input { .. } => 1.0,
    };
    let divisor = norm * (net.r as f64).sqrt();
    Ok(values[offset..offset + net.r]
        .iter()
        .map(|v| v / divisor)
        .collect())
}

/// `κ_w(x, y) = ⟨Ψ_w(x), Ψ_w(y)⟩`.
pub fn empirical_kernel(
    net: &Network,
    w: &WeightAssignment,
    x: &InputPoint,
    y: &InputPoint,
) -> Result<f64, RealizeError> {
    let px = representation(net, w, x)?;
    let py = representation(net, w, y)?;
    Ok(px.iter().zip(&py).map(|(a, b)| a * b).sum())
}
