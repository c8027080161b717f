//! Exact evaluation of the compositional kernel κ_S defined by a skeleton:
//! input nodes contribute coordinate inner products, and every internal node
//! applies its dual activation to the (bias-shifted) average of its
//! in-neighbors' kernels. Includes Gram matrix assembly, the input
//! encodings, and the collapsing-tower fixed point.

use crate::activations::{ActivationError, DualActivation};
use crate::numeric::CounterRng;
use crate::skeleton::{NodePayload, Skeleton};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("input point needs at least one coordinate")]
    EmptyPoint,
    #[error("coordinate {index} has dimension {got}, expected {expected}")]
    InconsistentDim {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("coordinate {index} has norm {norm}, not a unit vector")]
    NotUnit { index: usize, norm: f64 },
    #[error("scalar {0} lies outside [-1, 1]")]
    ScalarOutOfRange(f64),
    #[error("category {j} out of range for dimension {d}")]
    CategoryOutOfRange { j: usize, d: usize },
    #[error("input has shape (n={got_n}, d={got_d}), skeleton expects (n={want_n}, d={want_d})")]
    ShapeMismatch {
        want_n: usize,
        want_d: usize,
        got_n: usize,
        got_d: usize,
    },
    #[error("skeleton node {node} carries an unnormalized activation (‖σ‖ = {norm})")]
    UnnormalizedActivation { node: usize, norm: f64 },
    #[error("gram needs at least one input point")]
    NoPoints,
    #[error("tower iteration requires |rho| < 1, got {0}")]
    RhoAtBoundary(f64),
    #[error("tower did not converge in {iterations} iterations; last iterate {last}")]
    TowerNonConvergence { last: f64, iterations: usize },
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error(transparent)]
    Activation(#[from] ActivationError),
}

/// One input example: `n` coordinates, each a unit vector in R^d.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPoint {
    coords: Vec<Vec<f64>>,
    d: usize,
}

impl InputPoint {
    pub fn new(coords: Vec<Vec<f64>>) -> Result<Self, KernelError> {
        if coords.is_empty() {
            return Err(KernelError::EmptyPoint);
        }
        let d = coords[0].len();
        for (index, c) in coords.iter().enumerate() {
            if c.len() != d || d == 0 {
                return Err(KernelError::InconsistentDim {
                    index,
                    got: c.len(),
                    expected: d,
                });
            }
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(KernelError::NotUnit { index, norm });
            }
        }
        Ok(Self { coords, d })
    }

    /// Binary input in {±1}^n (coordinate dimension 1).
    pub fn from_signs(signs: &[f64]) -> Result<Self, KernelError> {
        Self::new(signs.iter().map(|&s| vec![s]).collect())
    }

    /// A uniformly random point on (S^{d−1})^n.
    pub fn random_unit(rng: &mut CounterRng, n: usize, d: usize) -> Self {
        let mut coords = Vec::with_capacity(n);
        for _ in 0..n {
            if d == 1 {
                let s = if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 };
                coords.push(vec![s]);
            } else {
                loop {
                    let v: Vec<f64> = (0..d).map(|_| rng.next_normal()).collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm > 1e-6 {
                        coords.push(v.iter().map(|x| x / norm).collect());
                        break;
                    }
                }
            }
        }
        Self {
            coords,
            d,
        }
    }

    pub fn coordinate_count(&self) -> usize {
        self.coords.len()
    }

    pub fn coordinate_dim(&self) -> usize {
        self.d
    }

    pub fn coordinate(&self, i: usize) -> &[f64] {
        &self.coords[i]
    }

    /// Flat view in coordinate-major order (the network input layout).
    pub fn flat(&self) -> Vec<f64> {
        self.coords.iter().flatten().copied().collect()
    }
}

/// Embed a scalar in [−1, 1] into the circle S¹.
pub fn encode_scalar(x: f64) -> Result<[f64; 2], KernelError> {
    if !(x.is_finite() && x.abs() <= 1.0) {
        return Err(KernelError::ScalarOutOfRange(x));
    }
    let t = std::f64::consts::FRAC_PI_2 * x;
    Ok([t.sin(), t.cos()])
}

/// Represent category `j ∈ {1..d}` as the standard basis vector e_j.
pub fn encode_categorical(j: usize, d: usize) -> Result<Vec<f64>, KernelError> {
    if j == 0 || j > d {
        return Err(KernelError::CategoryOutOfRange { j, d });
    }
    let mut e = vec![0.0; d];
    e[j - 1] = 1.0;
    Ok(e)
}

/// Reusable kernel evaluator: per-node duals are built once per skeleton.
pub struct KernelEvaluator<'a> {
    skeleton: &'a Skeleton,
    duals: Vec<DualActivation>,
}

impl<'a> KernelEvaluator<'a> {
    pub fn new(skeleton: &'a Skeleton) -> Result<Self, KernelError> {
        let mut duals = Vec::with_capacity(skeleton.size());
        for id in skeleton.internal_ids() {
            match &skeleton.node(id).payload {
                NodePayload::Internal { activation, .. } => {
                    if !activation.is_normalized() {
                        return Err(KernelError::UnnormalizedActivation {
                            node: id,
                            norm: activation.gaussian_norm(),
                        });
                    }
                    duals.push(activation.dual());
                }
                NodePayload::Input { .. } => unreachable!("internal_ids yields internal nodes"),
            }
        }
        Ok(Self { skeleton, duals })
    }

    pub fn skeleton(&self) -> &Skeleton {
        self.skeleton
    }

    fn check_shape(&self, p: &InputPoint) -> Result<(), KernelError> {
        let (n, d) = (
            self.skeleton.coordinate_count(),
            self.skeleton.coordinate_dim(),
        );
        if p.coordinate_count() != n || p.coordinate_dim() != d {
            return Err(KernelError::ShapeMismatch {
                want_n: n,
                want_d: d,
                got_n: p.coordinate_count(),
                got_d: p.coordinate_dim(),
            });
        }
        Ok(())
    }

    /// κ_S(x, y): one memoized pass over the DAG in topological order.
    pub fn eval(&self, x: &InputPoint, y: &InputPoint) -> Result<f64, KernelError> {
        self.check_shape(x)?;
        self.check_shape(y)?;
        // Identical arguments: every coordinate dot is ⟨x̂, x̂⟩ = 1 and every
        // normalized dual fixes 1, so κ(x, x) = 1 exactly. Evaluating the
        // recursion instead would square-root-amplify the rounding of
        // Σ x_i² − 1 through duals with unbounded slope at ρ = 1 (arccos0).
        if x == y {
            return Ok(1.0);
        }
        let n = self.skeleton.coordinate_count();
        let beta = self.skeleton.beta();
        let mut value = vec![0.0f64; self.skeleton.nodes().len()];
        for (id, node) in self.skeleton.nodes().iter().enumerate() {
            value[id] = match &node.payload {
                NodePayload::Input { coordinate } => {
                    let (a, b) = (x.coordinate(*coordinate), y.coordinate(*coordinate));
                    a.iter().zip(b).map(|(u, v)| u * v).sum()
                }
                NodePayload::Internal { .. } => {
                    let sum: f64 = node.incoming.iter().map(|&u| value[u]).sum();
                    let mean = sum / node.incoming.len() as f64;
                    let rho = ((1.0 - beta) * mean + beta).clamp(-1.0, 1.0);
                    self.duals[id - n].eval(rho)?
                }
            };
        }
        Ok(value[self.skeleton.output()])
    }
}

/// κ_S(x, y) for a single pair.
pub fn kernel_eval(s: &Skeleton, x: &InputPoint, y: &InputPoint) -> Result<f64, KernelError> {
    KernelEvaluator::new(s)?.eval(x, y)
}

/// A symmetric kernel matrix tied to the skeleton that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    dim: usize,
    data: Vec<f64>,
    skeleton_hash: u64,
}

impl GramMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn skeleton_hash(&self) -> u64 {
        self.skeleton_hash
    }

    pub fn from_parts(dim: usize, data: Vec<f64>, skeleton_hash: u64) -> Self {
        assert_eq!(data.len(), dim * dim);
        Self {
            dim,
            data,
            skeleton_hash,
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        crate::numeric::min_eigenvalue(self.data.clone(), self.dim)
    }

    /// `row,col,value` rows.
    pub fn to_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "row,col,value")?;
        for i in 0..self.dim {
            for j in 0..self.dim {
                writeln!(out, "{i},{j},{}", self.value(i, j))?;
            }
        }
        Ok(())
    }

    /// Dense binary form: u64 little-endian dimension header, then the
    /// row-major values as little-endian f64.
    pub fn to_binary<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        out.write_all(&(self.dim as u64).to_le_bytes())?;
        for v in &self.data {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn from_binary<R: std::io::Read>(input: &mut R) -> std::io::Result<Self> {
        let mut header = [0u8; 8];
        input.read_exact(&mut header)?;
        let dim = u64::from_le_bytes(header) as usize;
        let mut data = vec![0.0f64; dim * dim];
        let mut buf = [0u8; 8];
        for v in data.iter_mut() {
            input.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        Ok(Self {
            dim,
            data,
            skeleton_hash: 0,
        })
    }
}

/// Γ_ij = κ_S(x_i, x_j). The upper triangle is computed once (pairs in
/// parallel) and mirrored, so the result is exactly symmetric and
/// independent of the parallel schedule.
pub fn gram(s: &Skeleton, points: &[InputPoint]) -> Result<GramMatrix, KernelError> {
    if points.is_empty() {
        return Err(KernelError::NoPoints);
    }
    let evaluator = KernelEvaluator::new(s)?;
    let m = points.len();
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (i..m).map(move |j| (i, j)))
        .collect();
    let values: Vec<Result<f64, KernelError>> = pairs
        .par_iter()
        .map(|&(i, j)| evaluator.eval(&points[i], &points[j]))
        .collect();
    let mut data = vec![0.0; m * m];
    for (&(i, j), value) in pairs.iter().zip(values) {
        let v = value?;
        data[i * m + j] = v;
        data[j * m + i] = v;
    }
    Ok(GramMatrix {
        dim: m,
        data,
        skeleton_hash: s.hash(),
    })
}

/// α_m(ρ): the m-fold composition of the dual with itself.
pub fn tower_iterate(dual: &DualActivation, rho: f64, m: usize) -> Result<f64, KernelError> {
    if !(rho.is_finite() && rho.abs() < 1.0) {
        return Err(KernelError::RhoAtBoundary(rho));
    }
    let mut value = rho;
    for _ in 0..m {
        value = dual.eval(value.clamp(-1.0, 1.0))?;
    }
    Ok(value)
}

/// Result of a fixed-point search for the collapsing tower.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TowerFixedPoint {
    pub value: f64,
    pub iterations: usize,
}

/// Iterate the dual from ρ = 0.5 until successive iterates differ by less
/// than `tol`. The limit α_σ is independent of the start inside (−1, 1).
pub fn tower_fixed_point(
    dual: &DualActivation,
    tol: f64,
    max_iter: usize,
) -> Result<TowerFixedPoint, KernelError> {
    tower_fixed_point_from(dual, 0.5, tol, max_iter)
}

/// Fixed-point iteration from an explicit start.
pub fn tower_fixed_point_from(
    dual: &DualActivation,
    rho0: f64,
    tol: f64,
    max_iter: usize,
) -> Result<TowerFixedPoint, KernelError> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(KernelError::BadTolerance(tol));
    }
    if !(rho0.is_finite() && rho0.abs() < 1.0) {
        return Err(KernelError::RhoAtBoundary(rho0));
    }
    let mut value = rho0;
    for m in 1..=max_iter {
        let next = dual.eval(value.clamp(-1.0, 1.0))?;
        if (next - value).abs() < tol {
            return Ok(TowerFixedPoint {
                value: next,
                iterations: m,
            });
        }
        value = next;
    }
    Err(KernelError::TowerNonConvergence {
        last: value,
        iterations: max_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::Activation;
    use crate::skeleton::{parse_skeleton, GraphBuilder, LayerSpec, SkeletonBuilder};
    use std::f64::consts::PI;

    const S1_RELU_N2: &str = "inputs n=2 dim=1\nfc activation=relu\n";
    const S2_RELU: &str =
        "inputs n=4 dim=1\nconv width=2 stride=1 activation=relu\nfc activation=relu\n";

    #[test]
    fn encode_scalar_examples() {
        assert_eq!(encode_scalar(0.0).unwrap(), [0.0, 1.0]);
        let one = encode_scalar(1.0).unwrap();
        assert!((one[0] - 1.0).abs() < 1e-15 && one[1].abs() < 1e-15);
        let neg = encode_scalar(-1.0).unwrap();
        assert!((neg[0] + 1.0).abs() < 1e-15 && neg[1].abs() < 1e-15);
        assert!(encode_scalar(1.2).is_err());
        // every encoding is a unit vector
        for k in 0..=20 {
            let x = -1.0 + 0.1 * k as f64;
            let e = encode_scalar(x).unwrap();
            assert!((e[0] * e[0] + e[1] * e[1] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn encode_categorical_examples() {
        assert_eq!(encode_categorical(1, 3).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(encode_categorical(3, 3).unwrap(), vec![0.0, 0.0, 1.0]);
        assert_eq!(encode_categorical(2, 2).unwrap(), vec![0.0, 1.0]);
        assert!(encode_categorical(0, 3).is_err());
        assert!(encode_categorical(4, 3).is_err());
    }

    #[test]
    fn kernel_is_one_on_the_diagonal() {
        for text in [S1_RELU_N2, S2_RELU] {
            let s = parse_skeleton(text).unwrap();
            let mut rng = CounterRng::new(5, 0);
            for _ in 0..10 {
                let x = InputPoint::random_unit(&mut rng, s.coordinate_count(), 1);
                let v = kernel_eval(&s, &x, &x).unwrap();
                assert!((v - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn s1_relu_orthogonal_pair_gives_one_over_pi() {
        let s = parse_skeleton(S1_RELU_N2).unwrap();
        let x = InputPoint::from_signs(&[1.0, 1.0]).unwrap();
        let y = InputPoint::from_signs(&[1.0, -1.0]).unwrap();
        let v = kernel_eval(&s, &x, &y).unwrap();
        assert!((v - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn beta_one_collapses_the_kernel() {
        let s = parse_skeleton("inputs n=4 dim=1\nbias beta=1\nconv width=2 stride=1 activation=relu\nfc activation=relu\n").unwrap();
        let mut rng = CounterRng::new(9, 0);
        for _ in 0..10 {
            let x = InputPoint::random_unit(&mut rng, 4, 1);
            let y = InputPoint::random_unit(&mut rng, 4, 1);
            assert!((kernel_eval(&s, &x, &y).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_zero_matches_unbiased_kernel_exactly() {
        let plain = parse_skeleton(S2_RELU).unwrap();
        let biased = parse_skeleton(
            "inputs n=4 dim=1\nbias beta=0\nconv width=2 stride=1 activation=relu\nfc activation=relu\n",
        )
        .unwrap();
        let mut rng = CounterRng::new(17, 0);
        for _ in 0..50 {
            let x = InputPoint::random_unit(&mut rng, 4, 1);
            let y = InputPoint::random_unit(&mut rng, 4, 1);
            assert_eq!(
                kernel_eval(&plain, &x, &y).unwrap(),
                kernel_eval(&biased, &x, &y).unwrap()
            );
        }
    }

    #[test]
    fn symmetry_is_exact() {
        let s = parse_skeleton(S2_RELU).unwrap();
        let mut rng = CounterRng::new(23, 0);
        for _ in 0..20 {
            let x = InputPoint::random_unit(&mut rng, 4, 1);
            let y = InputPoint::random_unit(&mut rng, 4, 1);
            assert_eq!(
                kernel_eval(&s, &x, &y).unwrap(),
                kernel_eval(&s, &y, &x).unwrap()
            );
        }
    }

    /// Naive evaluator written straight from the definition: no memoization,
    /// no shared evaluator state.
    fn naive_kernel(s: &Skeleton, v: usize, x: &InputPoint, y: &InputPoint) -> f64 {
        let node = s.node(v);
        match &node.payload {
            NodePayload::Input { coordinate } => x
                .coordinate(*coordinate)
                .iter()
                .zip(y.coordinate(*coordinate))
                .map(|(a, b)| a * b)
                .sum(),
            NodePayload::Internal { activation, .. } => {
                let sum: f64 = node
                    .incoming
                    .iter()
                    .map(|&u| naive_kernel(s, u, x, y))
                    .sum();
                let mean = sum / node.incoming.len() as f64;
                let rho = (1.0 - s.beta()) * mean + s.beta();
                activation.dual().eval(rho.clamp(-1.0, 1.0)).unwrap()
            }
        }
    }

    fn random_small_skeleton(rng: &mut CounterRng) -> Skeleton {
        let n = 2 + rng.next_bounded(3) as usize;
        let mut g = GraphBuilder::new(n, 1).unwrap();
        let acts = [
            Activation::relu(),
            Activation::step(),
            Activation::identity(),
            Activation::exponential(1.0).unwrap(),
            Activation::sine(1.0).unwrap(),
            Activation::hermite(2),
        ];
        let internal = 1 + rng.next_bounded(4) as usize;
        let mut used = vec![false; n + internal];
        let mut count = n;
        for k in 0..internal {
            let incoming: Vec<usize> = if k + 1 == internal {
                // final node absorbs every current sink and unused input
                (0..count).filter(|&u| !used[u]).collect()
            } else {
                let fan = 1 + rng.next_bounded(count.min(3) as u64) as usize;
                let mut pool: Vec<usize> = (0..count).collect();
                rng.shuffle(&mut pool);
                pool.truncate(fan);
                pool
            };
            for &u in &incoming {
                used[u] = true;
            }
            let act = acts[rng.next_bounded(acts.len() as u64) as usize].clone();
            count = g.add_node(act, 1.0, incoming).unwrap() + 1;
        }
        g.finish().unwrap()
    }

    #[test]
    fn memoized_evaluation_matches_naive_recursion() {
        let mut rng = CounterRng::new(31, 0);
        let mut checked = 0;
        for _ in 0..60 {
            let s = random_small_skeleton(&mut rng);
            if s.size() > 5 {
                continue;
            }
            let x = InputPoint::random_unit(&mut rng, s.coordinate_count(), 1);
            let y = InputPoint::random_unit(&mut rng, s.coordinate_count(), 1);
            let fast = kernel_eval(&s, &x, &y).unwrap();
            let slow = naive_kernel(&s, s.output(), &x, &y);
            assert!((fast - slow).abs() < 1e-12, "fast {fast} slow {slow}");
            checked += 1;
        }
        assert!(checked > 20);
    }

    #[test]
    fn gram_examples_and_psd() {
        let s = parse_skeleton(S1_RELU_N2).unwrap();
        let x = InputPoint::from_signs(&[1.0, 1.0]).unwrap();
        let g = gram(&s, std::slice::from_ref(&x)).unwrap();
        assert_eq!(g.dim(), 1);
        assert!((g.value(0, 0) - 1.0).abs() < 1e-12);

        let y = InputPoint::from_signs(&[1.0, -1.0]).unwrap();
        let g = gram(&s, &[x, y]).unwrap();
        assert!((g.value(0, 1) - 1.0 / PI).abs() < 1e-15);
        assert_eq!(g.value(0, 1), g.value(1, 0));

        let s2 = parse_skeleton(S2_RELU).unwrap();
        let mut rng = CounterRng::new(41, 0);
        let points: Vec<InputPoint> = (0..20)
            .map(|_| InputPoint::random_unit(&mut rng, 4, 1))
            .collect();
        let g = gram(&s2, &points).unwrap();
        assert!(g.min_eigenvalue() >= -1e-8);
        for i in 0..20 {
            assert!((g.value(i, i) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gram_rejects_unnormalized_skeletons() {
        let raw = Activation::custom(vec![0.0, 2.0]).unwrap();
        let err = SkeletonBuilder::new(2, 1)
            .unwrap()
            .layer(LayerSpec::fc(raw))
            .unwrap_err();
        assert!(matches!(
            err,
            crate::skeleton::SkeletonError::UnnormalizedActivation(_)
        ));
        // and the evaluator itself refuses unchecked skeletons
        let nodes = vec![
            crate::skeleton::SkeletonNode {
                payload: NodePayload::Input { coordinate: 0 },
                incoming: vec![],
            },
            crate::skeleton::SkeletonNode {
                payload: NodePayload::Internal {
                    activation: Activation::custom(vec![0.0, 2.0]).unwrap(),
                    delta: 1.0,
                },
                incoming: vec![0],
            },
        ];
        let s = Skeleton::from_parts_unchecked(1, 1, 0.0, nodes);
        assert!(matches!(
            KernelEvaluator::new(&s),
            Err(KernelError::UnnormalizedActivation { .. })
        ));
    }

    #[test]
    fn gram_binary_round_trip() {
        let s = parse_skeleton(S2_RELU).unwrap();
        let mut rng = CounterRng::new(43, 0);
        let points: Vec<InputPoint> = (0..5)
            .map(|_| InputPoint::random_unit(&mut rng, 4, 1))
            .collect();
        let g = gram(&s, &points).unwrap();
        let mut bin = Vec::new();
        g.to_binary(&mut bin).unwrap();
        assert_eq!(bin.len(), 8 + 8 * 25);
        let back = GramMatrix::from_binary(&mut bin.as_slice()).unwrap();
        assert_eq!(back.dim(), 5);
        assert_eq!(back.data(), g.data());
        let mut csv = Vec::new();
        g.to_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 26);
        assert_eq!(text.lines().next().unwrap(), "row,col,value");
    }

    #[test]
    fn tower_identity_is_fixed_everywhere() {
        let d = Activation::identity().dual();
        for rho in [-0.9, -0.3, 0.0, 0.3, 0.9] {
            assert_eq!(tower_iterate(&d, rho, 25).unwrap(), rho);
        }
        let fp = tower_fixed_point_from(&d, 0.3, 1e-9, 10).unwrap();
        assert_eq!(fp.value, 0.3);
        assert_eq!(fp.iterations, 1);
    }

    #[test]
    fn tower_hermite2_squares_to_zero() {
        let d = Activation::hermite(2).dual();
        let v = tower_iterate(&d, 0.9, 10).unwrap();
        let expect = 0.9f64.powi(2i32.pow(10));
        assert!((v - expect).abs() < 1e-12 * expect);
        let fp = tower_fixed_point_from(&d, 0.9, 1e-9, 200).unwrap();
        assert!(fp.value.abs() < 1e-9);
    }

    #[test]
    fn tower_relu_collapses_to_one() {
        let d = Activation::relu().dual();
        for rho0 in [-0.5, 0.0, 0.5, 0.9] {
            let fp = tower_fixed_point_from(&d, rho0, 1e-10, 1_000_000).unwrap();
            assert!((fp.value - 1.0).abs() < 1e-6, "from {rho0}: {}", fp.value);
            // iterates increase monotonically after the first step
            let mut prev = tower_iterate(&d, rho0, 1).unwrap();
            for m in 2..40 {
                let cur = tower_iterate(&d, rho0, m).unwrap();
                assert!(cur >= prev - 1e-15);
                prev = cur;
            }
        }
    }

    #[test]
    fn tower_fixed_point_satisfies_fixed_point_equation() {
        let tol = 1e-9;
        for act in [
            Activation::relu(),
            Activation::step(),
            Activation::exponential(1.0).unwrap(),
            Activation::sine(1.0).unwrap(),
        ] {
            let d = act.dual();
            let fp = tower_fixed_point(&d, tol, 1_000_000).unwrap();
            let drift = (d.eval(fp.value.clamp(-1.0, 1.0)).unwrap() - fp.value).abs();
            assert!(drift < 10.0 * tol, "{}: drift {drift}", act.token());
        }
    }

    #[test]
    fn tower_rejects_boundary_and_reports_nonconvergence() {
        let d = Activation::relu().dual();
        assert!(matches!(
            tower_iterate(&d, 1.0, 3),
            Err(KernelError::RhoAtBoundary(_))
        ));
        match tower_fixed_point_from(&d, 0.5, 1e-13, 5) {
            Err(KernelError::TowerNonConvergence { last, iterations }) => {
                assert_eq!(iterations, 5);
                assert!(last > 0.5 && last < 1.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let s = parse_skeleton(S1_RELU_N2).unwrap();
        let x = InputPoint::from_signs(&[1.0, 1.0, 1.0]).unwrap();
        let y = InputPoint::from_signs(&[1.0, -1.0]).unwrap();
        assert!(matches!(
            kernel_eval(&s, &x, &y),
            Err(KernelError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn input_point_validation() {
        assert!(InputPoint::new(vec![]).is_err());
        assert!(InputPoint::new(vec![vec![0.5]]).is_err());
        assert!(InputPoint::new(vec![vec![1.0], vec![0.6, 0.8]]).is_err());
        let ok = InputPoint::new(vec![vec![0.6, 0.8], vec![1.0, 0.0]]).unwrap();
        assert_eq!(ok.coordinate_count(), 2);
        assert_eq!(ok.coordinate_dim(), 2);
        assert_eq!(ok.flat(), vec![0.6, 0.8, 1.0, 0.0]);
    }
}
