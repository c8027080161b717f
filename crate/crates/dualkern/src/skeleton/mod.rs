//! Computation skeletons: DAGs whose non-input nodes carry activations,
//! with one output node. A skeleton compactly describes both a family of
//! networks (via replication) and one compositional kernel.

mod parse;

pub use parse::{parse_skeleton, ParseError};

use crate::activations::Activation;
use thiserror::Error;

pub type NodeId = usize;

#[derive(Debug, Error)]
pub enum SkeletonError {
    #[error("skeleton needs n ≥ 1 input coordinates, got {0}")]
    NoInputs(usize),
    #[error("coordinate dimension must be ≥ 1, got {0}")]
    BadDimension(usize),
    #[error("bias beta must lie in [0, 1], got {0}")]
    BetaOutOfRange(f64),
    #[error("conv width={width} stride={stride} incompatible with {inputs} incoming nodes")]
    ConvArithmetic {
        width: usize,
        stride: usize,
        inputs: usize,
    },
    #[error("conv stride={stride} exceeds width={width}, leaving unconsumed nodes (extra sinks)")]
    ConvLeavesGaps { width: usize, stride: usize },
    #[error("conv width and stride must be ≥ 1")]
    BadConvParams,
    #[error("node weight delta must be positive and finite, got {0}")]
    BadDelta(f64),
    #[error("internal activations must be normalized (‖σ‖ = {0})")]
    UnnormalizedActivation(f64),
    #[error("skeleton needs at least one layer")]
    Empty,
    #[error("final layer must be fc so the skeleton has a single output")]
    FinalLayerNotFc,
    #[error("incoming set references unknown node {0}")]
    UnknownNode(NodeId),
    #[error("internal node needs at least one incoming edge")]
    NoIncoming,
    #[error("skeleton has {0} sinks; exactly one output node is required")]
    SinkCount(usize),
    #[error("input coordinate {0} has no outgoing edge")]
    UnusedInput(usize),
    #[error("skeleton was built from an explicit graph and has no layer form")]
    NotLayered,
}

/// One layer of a layered skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub activation: Activation,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Fc,
    Conv { width: usize, stride: usize },
}

impl LayerSpec {
    pub fn fc(activation: Activation) -> Self {
        Self {
            kind: LayerKind::Fc,
            activation,
            delta: 1.0,
        }
    }

    pub fn conv(width: usize, stride: usize, activation: Activation) -> Self {
        Self {
            kind: LayerKind::Conv { width, stride },
            activation,
            delta: 1.0,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodePayload {
    /// Input node for coordinate `i` (a unit vector in R^d).
    Input { coordinate: usize },
    /// Internal node with an activation and a node weight δ.
    Internal { activation: Activation, delta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonNode {
    pub payload: NodePayload,
    /// Incoming neighbors, ascending.
    pub incoming: Vec<NodeId>,
}

/// A validated computation skeleton.
///
/// Nodes are stored in topological order: the `n` input nodes first, then
/// internal nodes, each referencing only earlier nodes; the last node is the
/// output.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    n: usize,
    d: usize,
    beta: f64,
    nodes: Vec<SkeletonNode>,
    layers: Option<Vec<LayerSpec>>,
}

/// Structural diagnostics reported by [`Skeleton::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Cycle,
    SinkCount { sinks: Vec<NodeId> },
    InternalWithoutIncoming { node: NodeId },
    UnusedInput { node: NodeId },
    UnnormalizedActivation { node: NodeId, norm: f64 },
    BetaOutOfRange { beta: f64 },
    BadDelta { node: NodeId, delta: f64 },
    /// Two nodes share an in-neighborhood; the skeleton is reducible.
    /// A warning, not an error.
    Irreducible { first: NodeId, second: NodeId },
}

impl Violation {
    pub fn is_warning(&self) -> bool {
        matches!(self, Violation::Irreducible { .. })
    }
}

impl Skeleton {
    /// Number of input coordinates.
    pub fn coordinate_count(&self) -> usize {
        self.n
    }

    /// Dimension of each input coordinate.
    pub fn coordinate_dim(&self) -> usize {
        self.d
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn nodes(&self) -> &[SkeletonNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &SkeletonNode {
        &self.nodes[id]
    }

    /// Ids of the internal (non-input) nodes, in topological order.
    pub fn internal_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.n..self.nodes.len()
    }

    pub fn is_input(&self, id: NodeId) -> bool {
        id < self.n
    }

    /// The single output node.
    pub fn output(&self) -> NodeId {
        self.nodes.len() - 1
    }

    /// Number of non-input nodes.
    pub fn size(&self) -> usize {
        self.nodes.len() - self.n
    }

    /// Longest input-to-output path, counted in internal nodes.
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            if let NodePayload::Internal { .. } = node.payload {
                depth[id] = 1 + node.incoming.iter().map(|&u| depth[u]).max().unwrap_or(0);
            }
        }
        depth[self.output()]
    }

    /// The layer list, when the skeleton was built layer by layer.
    pub fn layers(&self) -> Option<&[LayerSpec]> {
        self.layers.as_deref()
    }

    /// Serialize to the `.skel` text form. Only layered skeletons have one.
    pub fn to_dsl(&self) -> Result<String, SkeletonError> {
        let layers = self.layers.as_ref().ok_or(SkeletonError::NotLayered)?;
        let mut out = format!("inputs n={} dim={}\n", self.n, self.d);
        if self.beta != 0.0 {
            out.push_str(&format!("bias beta={}\n", self.beta));
        }
        for layer in layers {
            match layer.kind {
                LayerKind::Fc => out.push_str("fc"),
                LayerKind::Conv { width, stride } => {
                    out.push_str(&format!("conv width={width} stride={stride}"));
                }
            }
            out.push_str(&format!(" activation={}", layer.activation.token()));
            if layer.delta != 1.0 {
                out.push_str(&format!(" delta={}", layer.delta));
            }
            out.push('\n');
        }
        Ok(out)
    }

    /// FNV-1a hash of the canonical encoding; stable across runs and used to
    /// tie artifacts to the skeleton that produced them.
    pub fn hash(&self) -> u64 {
        let mut h = Fnv::new();
        h.word(self.n as u64);
        h.word(self.d as u64);
        h.word(self.beta.to_bits());
        for node in &self.nodes {
            match &node.payload {
                NodePayload::Input { coordinate } => {
                    h.word(1);
                    h.word(*coordinate as u64);
                }
                NodePayload::Internal { activation, delta } => {
                    h.word(2);
                    h.bytes(activation.token().as_bytes());
                    if let crate::activations::ActivationKind::Custom { coeffs } =
                        activation.kind()
                    {
                        for c in coeffs.iter() {
                            h.word(c.to_bits());
                        }
                    }
                    h.word(delta.to_bits());
                }
            }
            h.word(node.incoming.len() as u64);
            for &u in &node.incoming {
                h.word(u as u64);
            }
        }
        h.finish()
    }

    /// Assemble a skeleton without any structural checks. Intended for
    /// diagnostics testing; run [`Skeleton::validate`] on the result.
    pub fn from_parts_unchecked(
        n: usize,
        d: usize,
        beta: f64,
        nodes: Vec<SkeletonNode>,
    ) -> Skeleton {
        Skeleton {
            n,
            d,
            beta,
            nodes,
            layers: None,
        }
    }

    /// Check every structural invariant, returning diagnostics instead of
    /// failing. Irreducibility is reported as a warning.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(0.0..=1.0).contains(&self.beta) {
            out.push(Violation::BetaOutOfRange { beta: self.beta });
        }
        // Kahn's algorithm for acyclicity over the stored edge lists.
        let count = self.nodes.len();
        let mut outgoing: Vec<Vec<NodeId>> = vec![Vec::new(); count];
        let mut indegree = vec![0usize; count];
        for (id, node) in self.nodes.iter().enumerate() {
            for &u in &node.incoming {
                if u < count {
                    outgoing[u].push(id);
                    indegree[id] += 1;
                }
            }
        }
        let mut queue: Vec<NodeId> = (0..count).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop() {
            seen += 1;
            for &w in &outgoing[v] {
                indegree[w] -= 1;
                if indegree[w] == 0 {
                    queue.push(w);
                }
            }
        }
        if seen != count {
            out.push(Violation::Cycle);
        }
        let sinks: Vec<NodeId> = (0..count).filter(|&i| outgoing[i].is_empty()).collect();
        if sinks.len() != 1 {
            out.push(Violation::SinkCount { sinks });
        }
        for (id, node) in self.nodes.iter().enumerate() {
            match &node.payload {
                NodePayload::Input { .. } => {
                    if outgoing[id].is_empty() && count > self.n {
                        out.push(Violation::UnusedInput { node: id });
                    }
                }
                NodePayload::Internal { activation, delta } => {
                    if node.incoming.is_empty() {
                        out.push(Violation::InternalWithoutIncoming { node: id });
                    }
                    if !activation.is_normalized() {
                        out.push(Violation::UnnormalizedActivation {
                            node: id,
                            norm: activation.gaussian_norm(),
                        });
                    }
                    if !(delta.is_finite() && *delta > 0.0) {
                        out.push(Violation::BadDelta {
                            node: id,
                            delta: *delta,
                        });
                    }
                }
            }
        }
        // Reducibility: any two nodes with identical in-neighborhoods.
        for a in self.n..count {
            for b in a + 1..count {
                if !self.nodes[a].incoming.is_empty()
                    && self.nodes[a].incoming == self.nodes[b].incoming
                {
                    out.push(Violation::Irreducible {
                        first: a,
                        second: b,
                    });
                }
            }
        }
        out
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
    fn bytes(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    fn word(&mut self, w: u64) {
        self.bytes(&w.to_le_bytes());
    }
    fn finish(&self) -> u64 {
        self.0
    }
}

/// Builds layered skeletons (the form the DSL describes).
#[derive(Debug, Clone)]
pub struct SkeletonBuilder {
    n: usize,
    d: usize,
    beta: f64,
    nodes: Vec<SkeletonNode>,
    layers: Vec<LayerSpec>,
    /// Current frontier: the nodes the next layer consumes.
    frontier: Vec<NodeId>,
}

impl SkeletonBuilder {
    pub fn new(n: usize, d: usize) -> Result<Self, SkeletonError> {
        if n == 0 {
            return Err(SkeletonError::NoInputs(n));
        }
        if d == 0 {
            return Err(SkeletonError::BadDimension(d));
        }
        let nodes = (0..n)
            .map(|coordinate| SkeletonNode {
                payload: NodePayload::Input { coordinate },
                incoming: Vec::new(),
            })
            .collect();
        Ok(Self {
            n,
            d,
            beta: 0.0,
            nodes,
            layers: Vec::new(),
            frontier: (0..n).collect(),
        })
    }

    pub fn beta(mut self, beta: f64) -> Result<Self, SkeletonError> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(SkeletonError::BetaOutOfRange(beta));
        }
        self.beta = beta;
        Ok(self)
    }

    pub fn layer(mut self, spec: LayerSpec) -> Result<Self, SkeletonError> {
        if !spec.activation.is_normalized() {
            return Err(SkeletonError::UnnormalizedActivation(
                spec.activation.gaussian_norm(),
            ));
        }
        if !(spec.delta.is_finite() && spec.delta > 0.0) {
            return Err(SkeletonError::BadDelta(spec.delta));
        }
        let prev = self.frontier.clone();
        let next = match spec.kind {
            LayerKind::Fc => {
                let id = self.push_internal(&spec, prev);
                vec![id]
            }
            LayerKind::Conv { width, stride } => {
                if width == 0 || stride == 0 {
                    return Err(SkeletonError::BadConvParams);
                }
                // n = s(q − 1) + w must hold for an integer q ≥ 1
                if prev.len() < width || !(prev.len() - width).is_multiple_of(stride) {
                    return Err(SkeletonError::ConvArithmetic {
                        width,
                        stride,
                        inputs: prev.len(),
                    });
                }
                let q = (prev.len() - width) / stride + 1;
                if q >= 2 && stride > width {
                    return Err(SkeletonError::ConvLeavesGaps { width, stride });
                }
                let mut next = Vec::with_capacity(q);
                for i in 0..q {
                    let window: Vec<NodeId> =
                        (0..width).map(|j| prev[stride * i + j]).collect();
                    next.push(self.push_internal(&spec, window));
                }
                next
            }
        };
        self.frontier = next;
        self.layers.push(spec);
        Ok(self)
    }

    fn push_internal(&mut self, spec: &LayerSpec, incoming: Vec<NodeId>) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(SkeletonNode {
            payload: NodePayload::Internal {
                activation: spec.activation.clone(),
                delta: spec.delta,
            },
            incoming,
        });
        id
    }

    pub fn finish(self) -> Result<Skeleton, SkeletonError> {
        let Some(last) = self.layers.last() else {
            return Err(SkeletonError::Empty);
        };
        if last.kind != LayerKind::Fc {
            return Err(SkeletonError::FinalLayerNotFc);
        }
        Ok(Skeleton {
            n: self.n,
            d: self.d,
            beta: self.beta,
            nodes: self.nodes,
            layers: Some(self.layers),
        })
    }
}

/// Builds arbitrary-DAG skeletons (aggregation edges, skips) that the DSL
/// cannot express. Nodes may only reference already-added nodes, so the
/// result is acyclic by construction.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    n: usize,
    d: usize,
    beta: f64,
    nodes: Vec<SkeletonNode>,
}

impl GraphBuilder {
    pub fn new(n: usize, d: usize) -> Result<Self, SkeletonError> {
        if n == 0 {
            return Err(SkeletonError::NoInputs(n));
        }
        if d == 0 {
            return Err(SkeletonError::BadDimension(d));
        }
        let nodes = (0..n)
            .map(|coordinate| SkeletonNode {
                payload: NodePayload::Input { coordinate },
                incoming: Vec::new(),
            })
            .collect();
        Ok(Self {
            n,
            d,
            beta: 0.0,
            nodes,
        })
    }

    pub fn set_beta(&mut self, beta: f64) -> Result<&mut Self, SkeletonError> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(SkeletonError::BetaOutOfRange(beta));
        }
        self.beta = beta;
        Ok(self)
    }

    pub fn add_node(
        &mut self,
        activation: Activation,
        delta: f64,
        mut incoming: Vec<NodeId>,
    ) -> Result<NodeId, SkeletonError> {
        if incoming.is_empty() {
            return Err(SkeletonError::NoIncoming);
        }
        if let Some(&bad) = incoming.iter().find(|&&u| u >= self.nodes.len()) {
            return Err(SkeletonError::UnknownNode(bad));
        }
        if !activation.is_normalized() {
            return Err(SkeletonError::UnnormalizedActivation(
                activation.gaussian_norm(),
            ));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(SkeletonError::BadDelta(delta));
        }
        incoming.sort_unstable();
        incoming.dedup();
        let id = self.nodes.len();
        self.nodes.push(SkeletonNode {
            payload: NodePayload::Internal { activation, delta },
            incoming,
        });
        Ok(id)
    }

    pub fn finish(self) -> Result<Skeleton, SkeletonError> {
        let count = self.nodes.len();
        if count == self.n {
            return Err(SkeletonError::Empty);
        }
        let mut has_out = vec![false; count];
        for node in &self.nodes {
            for &u in &node.incoming {
                has_out[u] = true;
            }
        }
        let sinks: Vec<NodeId> = (0..count).filter(|&i| !has_out[i]).collect();
        if sinks.len() != 1 {
            return Err(SkeletonError::SinkCount(sinks.len()));
        }
        if sinks[0] != count - 1 {
            return Err(SkeletonError::SinkCount(sinks.len()));
        }
        if let Some(unused) = (0..self.n).find(|&i| !has_out[i]) {
            return Err(SkeletonError::UnusedInput(unused));
        }
        Ok(Skeleton {
            n: self.n,
            d: self.d,
            beta: self.beta,
            nodes: self.nodes,
            layers: None,
        })
    }
}
