//! Communication graphs, mixing matrices and the block preconditioner.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NepError, Result};

/// Tolerance for the mixing-matrix structural checks.
pub const MIXING_TOL: f64 = 1e-12;

/// Undirected simple graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph; edges are normalized to `i < j` and deduplicated.
    /// Connectivity is not required here, see [`Graph::is_connected`].
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(NepError::Input("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(NepError::Input(format!(
                    "edge ({i}, {j}) out of range for {n} nodes"
                )));
            }
            if i == j {
                return Err(NepError::Input(format!(
                    "self edge ({i}, {i}) is not allowed"
                )));
            }
            set.insert((i.min(j), i.max(j)));
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        Ok(Self {
            n,
            edges,
            neighbors,
        })
    }

    /// Like [`Graph::new`] but rejects disconnected graphs.
    pub fn connected(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let g = Self::new(n, edges)?;
        if !g.is_connected() {
            return Err(NepError::Disconnected);
        }
        Ok(g)
    }

    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::connected(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        Self::connected(n, &edges)
    }

    /// Star with hub node 0.
    pub fn star(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (0, i)).collect();
        Self::connected(n, &edges)
    }

    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return Self::path(n);
        }
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        edges.push((n - 1, 0));
        Self::connected(n, &edges)
    }

    /// Erdős–Rényi `G(n, p)` resampled until connected.
    pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(NepError::Input(format!(
                "edge probability {p} outside [0, 1]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10_000 {
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.random::<f64>() < p {
                        edges.push((i, j));
                    }
                }
            }
            let g = Self::new(n, &edges)?;
            if g.is_connected() {
                return Ok(g);
            }
        }
        Err(NepError::Disconnected)
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i.min(j), i.max(j))).is_ok()
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }
}

/// Symmetric doubly stochastic weights with positive self loops.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    w: DMatrix<f64>,
}

/// Worst-case deviations from the mixing-matrix conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingCheck {
    pub asymmetry: f64,
    pub row_sum_error: f64,
    pub col_sum_error: f64,
    pub min_self_loop: f64,
}

impl MixingCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.asymmetry <= tol
            && self.row_sum_error <= tol
            && self.col_sum_error <= tol
            && self.min_self_loop > 0.0
    }
}

pub fn mixing_check(w: &DMatrix<f64>) -> MixingCheck {
    let n = w.nrows();
    let asymmetry = (w - w.transpose()).amax();
    let row_sum_error = (0..n)
        .map(|i| (w.row(i).sum() - 1.0).abs())
        .fold(0.0, f64::max);
    let col_sum_error = (0..n)
        .map(|j| (w.column(j).sum() - 1.0).abs())
        .fold(0.0, f64::max);
    let min_self_loop = (0..n).map(|i| w[(i, i)]).fold(f64::INFINITY, f64::min);
    MixingCheck {
        asymmetry,
        row_sum_error,
        col_sum_error,
        min_self_loop,
    }
}

impl MixingMatrix {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if w.nrows() != w.ncols() || w.nrows() == 0 {
            return Err(NepError::MixingMatrix(
                "matrix must be square and non-empty".into(),
            ));
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(NepError::MixingMatrix(
                "entries must be finite and nonnegative".into(),
            ));
        }
        let check = mixing_check(&w);
        if !check.passes(MIXING_TOL) {
            return Err(NepError::MixingMatrix(format!("{check:?}")));
        }
        Ok(Self { w })
    }

    /// Validates `w` and checks that its off-diagonal support is the edge set of `g`.
    pub fn for_graph(w: DMatrix<f64>, g: &Graph) -> Result<Self> {
        let mixing = Self::new(w)?;
        check_support(&mixing.w, g)?;
        Ok(mixing)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn size(&self) -> usize {
        self.w.nrows()
    }

    pub fn check(&self) -> MixingCheck {
        mixing_check(&self.w)
    }
}

fn check_support(w: &DMatrix<f64>, g: &Graph) -> Result<()> {
    let n = g.num_nodes();
    if w.nrows() != n {
        return Err(NepError::Dimension {
            what: "weight matrix side",
            expected: n,
            got: w.nrows(),
        });
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && (w[(i, j)] > 0.0) != g.has_edge(i, j) {
                return Err(NepError::MixingMatrix(format!(
                    "weight ({i}, {j}) = {} does not match the edge set",
                    w[(i, j)]
                )));
            }
        }
    }
    Ok(())
}

/// Metropolis weights: `w_ij = 1 / (1 + max(d_i, d_j))` on edges, self loops
/// absorb the remaining mass.
pub fn metropolis_weights(g: &Graph) -> Result<MixingMatrix> {
    if !g.is_connected() {
        return Err(NepError::Disconnected);
    }
    let n = g.num_nodes();
    let mut w = DMatrix::zeros(n, n);
    for &(i, j) in g.edges() {
        let v = 1.0 / (1.0 + g.degree(i).max(g.degree(j)) as f64);
        w[(i, j)] = v;
        w[(j, i)] = v;
    }
    for i in 0..n {
        let off: f64 = g.neighbors(i).iter().map(|&j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    MixingMatrix::for_graph(w, g)
}

/// Extreme nonzero eigenvalues of a graph Laplacian-like matrix.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SpectralGap {
    pub lambda2: f64,
    pub lambda_max: f64,
}

pub(crate) fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut vals: Vec<f64> = SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    vals.sort_by(f64::total_cmp);
    vals
}

fn laplacian_gap(l: &DMatrix<f64>) -> Result<SpectralGap> {
    if l.nrows() < 2 {
        return Err(NepError::Input(
            "spectral gap needs at least two agents".into(),
        ));
    }
    let vals = sorted_eigenvalues(l);
    let lambda2 = vals[1];
    if lambda2 <= 1e-12 {
        return Err(NepError::EffectivelyDisconnected { lambda2 });
    }
    Ok(SpectralGap {
        lambda2,
        lambda_max: *vals.last().unwrap(),
    })
}

/// `λ₂(I − W)` and `λ_max(I − W)`.
pub fn spectral_gap(w: &MixingMatrix) -> Result<SpectralGap> {
    let n = w.size();
    let l = DMatrix::identity(n, n) - w.matrix();
    let gap = laplacian_gap(&l)?;
    if gap.lambda_max > 2.0 + MIXING_TOL {
        return Err(NepError::Consistency(format!(
            "lambda_max(I - W) = {} exceeds 2",
            gap.lambda_max
        )));
    }
    Ok(gap)
}

/// The operator `B ⊗ I_n` applied without forming the Kronecker product.
#[derive(Debug, Clone, PartialEq)]
pub struct KroneckerOperator {
    base: DMatrix<f64>,
    block: usize,
}

impl KroneckerOperator {
    pub fn new(base: DMatrix<f64>, block: usize) -> Self {
        Self { base, block }
    }

    pub fn base(&self) -> &DMatrix<f64> {
        &self.base
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn dim(&self) -> usize {
        self.base.nrows() * self.block
    }

    pub fn apply(&self, v: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.apply_into(v, out.as_mut_slice());
        out
    }

    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        let (n_agents, n) = (self.base.nrows(), self.block);
        debug_assert_eq!(v.len(), n_agents * n);
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..n_agents {
            let dst = &mut out[i * n..(i + 1) * n];
            for j in 0..n_agents {
                let w = self.base[(i, j)];
                if w != 0.0 {
                    for (d, s) in dst.iter_mut().zip(&v[j * n..(j + 1) * n]) {
                        *d += w * s;
                    }
                }
            }
        }
    }

    /// Dense `B ⊗ I_n`; only meant for small cross-checks.
    pub fn dense(&self) -> DMatrix<f64> {
        self.base
            .kronecker(&DMatrix::<f64>::identity(self.block, self.block))
    }
}

/// Symmetric positive definite preconditioner `Φ = Φ_base ⊗ I_n`.
#[derive(Debug, Clone)]
pub struct Preconditioner {
    op: KroneckerOperator,
    inverse: KroneckerOperator,
    norm: f64,
    lambda_min: f64,
}

impl Preconditioner {
    fn from_base(base: DMatrix<f64>, n: usize) -> Result<Self> {
        let vals = sorted_eigenvalues(&base);
        let lambda_min = vals[0];
        let norm = *vals.last().unwrap();
        if !(lambda_min > 0.0) {
            return Err(NepError::MixingMatrix(format!(
                "preconditioner is not positive definite (lambda_min = {lambda_min:.3e})"
            )));
        }
        let inv = base
            .clone()
            .try_inverse()
            .ok_or_else(|| NepError::Consistency("singular preconditioner".into()))?;
        Ok(Self {
            op: KroneckerOperator::new(base, n),
            inverse: KroneckerOperator::new(inv, n),
            norm,
            lambda_min,
        })
    }

    pub fn apply(&self, v: &[f64]) -> DVector<f64> {
        self.op.apply(v)
    }

    /// `Φ⁻¹ v`.
    pub fn solve(&self, v: &[f64]) -> DVector<f64> {
        self.inverse.apply(v)
    }

    /// Spectral norm `‖Φ‖ = λ_max(Φ)`.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    /// `‖v‖_Φ = √(vᵀΦv)`.
    pub fn weighted_norm(&self, v: &[f64]) -> f64 {
        let pv = self.op.apply(v);
        pv.iter()
            .zip(v)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .max(0.0)
            .sqrt()
    }

    pub fn operator(&self) -> &KroneckerOperator {
        &self.op
    }
}

/// `Φ = I + W ⊗ I_n` for a doubly stochastic mixing matrix.
pub fn preconditioner(w: &MixingMatrix, n: usize) -> Result<Preconditioner> {
    let size = w.size();
    Preconditioner::from_base(DMatrix::identity(size, size) + w.matrix(), n)
}

/// Which pair of graph operators drives the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    /// `I − W` and `Φ = I + W` with `W` doubly stochastic.
    DoublyStochastic,
    /// `D − W` and `Φ = D + W` with `D` the weighted degree matrix.
    DegreeVariant,
}

/// Weight matrix `W` with its degree diagonal `D`; the solvers use the
/// disagreement operator `(D − W) ⊗ I_n` and the preconditioner `(D + W) ⊗ I_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    degrees: DVector<f64>,
    weights: DMatrix<f64>,
    mode: CouplingMode,
}

impl Coupling {
    pub fn doubly_stochastic(w: &MixingMatrix) -> Self {
        Self {
            degrees: DVector::from_element(w.size(), 1.0),
            weights: w.matrix().clone(),
            mode: CouplingMode::DoublyStochastic,
        }
    }

    pub fn mode(&self) -> CouplingMode {
        self.mode
    }

    pub fn num_agents(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn degrees(&self) -> &DVector<f64> {
        &self.degrees
    }

    /// `D − W`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.degrees) - &self.weights
    }

    /// `D + W`.
    pub fn phi_base(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.degrees) + &self.weights
    }

    pub fn laplacian_operator(&self, n: usize) -> KroneckerOperator {
        KroneckerOperator::new(self.laplacian(), n)
    }

    pub fn preconditioner(&self, n: usize) -> Result<Preconditioner> {
        Preconditioner::from_base(self.phi_base(), n)
    }

    /// Spectral gap of `D − W` (equals `I − W` in the doubly stochastic mode).
    pub fn spectral_gap(&self) -> Result<SpectralGap> {
        laplacian_gap(&self.laplacian())
    }
}

/// Operators for a symmetric nonnegative weighting that need not be doubly
/// stochastic. `D` is the weighted degree `diag(W 1)`, self loops included.
pub fn degree_variant(g: &Graph, w_raw: DMatrix<f64>) -> Result<Coupling> {
    let n = g.num_nodes();
    if w_raw.nrows() != n || w_raw.ncols() != n {
        return Err(NepError::Dimension {
            what: "raw weight matrix side",
            expected: n,
            got: w_raw.nrows(),
        });
    }
    if w_raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(NepError::Input(
            "raw weights must be finite and nonnegative".into(),
        ));
    }
    if (&w_raw - w_raw.transpose()).amax() > MIXING_TOL {
        return Err(NepError::Input("raw weight matrix is not symmetric".into()));
    }
    check_support(&w_raw, g)?;
    let degrees = DVector::from_iterator(n, (0..n).map(|i| w_raw.row(i).sum()));
    if degrees.iter().any(|d| *d <= 0.0) {
        return Err(NepError::Input(
            "every node needs positive weighted degree".into(),
        ));
    }
    Ok(Coupling {
        degrees,
        weights: w_raw,
        mode: CouplingMode::DegreeVariant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-14
    }

    #[test]
    fn metropolis_k2() {
        let w = metropolis_weights(&Graph::complete(2).unwrap()).unwrap();
        assert!(w.matrix().iter().all(|v| close(*v, 0.5)));
    }

    #[test]
    fn metropolis_path3_by_hand() {
        let w = metropolis_weights(&Graph::path(3).unwrap()).unwrap();
        let m = w.matrix();
        assert!(close(m[(0, 1)], 1.0 / 3.0) && close(m[(1, 2)], 1.0 / 3.0));
        assert!(close(m[(0, 0)], 2.0 / 3.0));
        assert!(close(m[(1, 1)], 1.0 / 3.0));
        assert!(close(m[(2, 2)], 2.0 / 3.0));
        assert_eq!(m[(0, 2)], 0.0);
    }

    #[test]
    fn metropolis_star_hub_self_loop() {
        let w = metropolis_weights(&Graph::star(5).unwrap()).unwrap();
        assert!(close(w.matrix()[(0, 0)], 0.2));
        assert!(w.matrix()[(0, 0)] > 0.0);
    }

    #[test]
    fn disconnected_graph_rejected() {
        let g = Graph::new(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(!g.is_connected());
        assert!(matches!(
            metropolis_weights(&g),
            Err(NepError::Disconnected)
        ));
        assert!(Graph::connected(4, &[(0, 1), (2, 3)]).is_err());
    }

    #[test]
    fn k2_spectral_gap_is_one() {
        let w = metropolis_weights(&Graph::complete(2).unwrap()).unwrap();
        let gap = spectral_gap(&w).unwrap();
        assert!((gap.lambda2 - 1.0).abs() < 1e-14);
        assert!((gap.lambda_max - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ones_in_kernel_of_i_minus_w() {
        let g = Graph::erdos_renyi(8, 0.4, 3).unwrap();
        let w = metropolis_weights(&g).unwrap();
        let l = DMatrix::identity(8, 8) - w.matrix();
        let ones = DVector::from_element(8, 1.0);
        assert!((l * ones).amax() < 1e-14);
        assert!(sorted_eigenvalues(&(DMatrix::identity(8, 8) - w.matrix()))[0].abs() < 1e-12);
    }

    #[test]
    fn near_identity_mixing_is_effectively_disconnected() {
        let eps = 1e-14;
        let w = DMatrix::from_row_slice(2, 2, &[1.0 - eps, eps, eps, 1.0 - eps]);
        let w = MixingMatrix::new(w).unwrap();
        assert!(matches!(
            spectral_gap(&w),
            Err(NepError::EffectivelyDisconnected { .. })
        ));
    }

    #[test]
    fn phi_norm_is_two_and_consensus_doubles() {
        let g = Graph::path(4).unwrap();
        let w = metropolis_weights(&g).unwrap();
        let phi = preconditioner(&w, 3).unwrap();
        assert!((phi.norm() - 2.0).abs() < 1e-12);
        let x = [0.3, -1.0, 2.5];
        let v: Vec<f64> = (0..4).flat_map(|_| x).collect();
        let pv = phi.apply(&v);
        for (a, b) in pv.iter().zip(&v) {
            assert!((a - 2.0 * b).abs() < 1e-14);
        }
    }

    #[test]
    fn phi_lambda_min_path3_matches_dense() {
        let w = metropolis_weights(&Graph::path(3).unwrap()).unwrap();
        let phi = preconditioner(&w, 2).unwrap();
        let dense = phi.operator().dense();
        let dense_min = sorted_eigenvalues(&dense)[0];
        let w_min = sorted_eigenvalues(w.matrix())[0];
        assert!((phi.lambda_min() - dense_min).abs() < 1e-12);
        assert!((phi.lambda_min() - (1.0 + w_min)).abs() < 1e-12);
    }

    #[test]
    fn degree_variant_k2_is_laplacian() {
        let g = Graph::complete(2).unwrap();
        let c = degree_variant(&g, g.adjacency()).unwrap();
        assert_eq!(c.degrees().as_slice(), &[1.0, 1.0]);
        assert_eq!(
            c.laplacian(),
            DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])
        );
        // without self loops D + W is singular on a bipartite graph
        assert!(c.preconditioner(1).is_err());
    }

    #[test]
    fn degree_variant_reduces_to_doubly_stochastic() {
        let g = Graph::cycle(5).unwrap();
        let w = metropolis_weights(&g).unwrap();
        let a = degree_variant(&g, w.matrix().clone()).unwrap();
        let b = Coupling::doubly_stochastic(&w);
        assert!((a.laplacian() - b.laplacian()).amax() < 1e-15);
        assert!((a.phi_base() - b.phi_base()).amax() < 1e-15);
    }

    #[test]
    fn degree_variant_path3_with_self_loops_is_positive_definite() {
        let g = Graph::path(3).unwrap();
        let raw = g.adjacency() + DMatrix::identity(3, 3);
        let c = degree_variant(&g, raw).unwrap();
        let phi = c.preconditioner(1).unwrap();
        let dense_min = sorted_eigenvalues(&c.phi_base())[0];
        assert!(dense_min > 0.0);
        assert!((phi.lambda_min() - dense_min).abs() < 1e-12);
    }

    #[test]
    fn degree_variant_rejects_asymmetric() {
        let g = Graph::complete(2).unwrap();
        let raw = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.7, 1.0]);
        assert!(matches!(degree_variant(&g, raw), Err(NepError::Input(_))));
    }

    #[test]
    fn erdos_renyi_is_seeded() {
        let a = Graph::erdos_renyi(12, 0.25, 42).unwrap();
        let b = Graph::erdos_renyi(12, 0.25, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.is_connected());
    }
}
