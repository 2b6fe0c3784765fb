use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NepError, Result};
use crate::game::{offsets_of, Game};

/// Stacked estimates `xb = col(xb_1, …, xb_N)`, `xb_i ∈ R^n`. Inside block `i`
/// the slot of agent `i` holds its own decision; the other slots hold its
/// estimates of the other agents.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    n: usize,
    data: DVector<f64>,
}

impl ExtendedState {
    pub fn zeros(dims: &[usize]) -> Self {
        let (offsets, n) = offsets_of(dims);
        Self {
            dims: dims.to_vec(),
            offsets,
            n,
            data: DVector::zeros(dims.len() * n),
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        let mut s = Self::zeros(dims);
        if data.len() != s.data.len() {
            return Err(NepError::Dimension {
                what: "extended state",
                expected: s.data.len(),
                got: data.len(),
            });
        }
        s.data = DVector::from_vec(data);
        Ok(s)
    }

    /// `1_N ⊗ x`.
    pub fn consensus(dims: &[usize], x: &[f64]) -> Result<Self> {
        let mut s = Self::zeros(dims);
        if x.len() != s.n {
            return Err(NepError::Dimension {
                what: "profile",
                expected: s.n,
                got: x.len(),
            });
        }
        for i in 0..dims.len() {
            s.block_mut(i).copy_from_slice(x);
        }
        Ok(s)
    }

    /// Own decisions `Proj_Ω_i(0)`, all estimates zero.
    pub fn initial<G: Game + ?Sized>(game: &G) -> Self {
        let mut s = Self::zeros(game.dims());
        for (i, set) in game.sets().iter().enumerate() {
            let zero = vec![0.0; game.dims()[i]];
            let own = set.project(&zero);
            s.own_mut(i).copy_from_slice(&own);
        }
        s
    }

    /// Estimates uniform on `[-scale, scale]`, own decisions projected onto their sets.
    pub fn random<G: Game + ?Sized>(game: &G, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Self::zeros(game.dims());
        for v in s.data.iter_mut() {
            *v = scale * (2.0 * rng.random::<f64>() - 1.0);
        }
        for (i, set) in game.sets().iter().enumerate() {
            let own = set.project(s.own(i));
            s.own_mut(i).copy_from_slice(&own);
        }
        s
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn num_agents(&self) -> usize {
        self.dims.len()
    }

    /// Dimension `n` of one block.
    pub fn block_dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice()
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.data.as_mut_slice()
    }

    pub fn data(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data.as_slice()[i * self.n..(i + 1) * self.n]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.n;
        &mut self.data.as_mut_slice()[i * n..(i + 1) * n]
    }

    /// `xb_{i,j}`: agent `i`'s copy of agent `j`'s decision.
    pub fn estimate(&self, i: usize, j: usize) -> &[f64] {
        let start = i * self.n + self.offsets[j];
        &self.data.as_slice()[start..start + self.dims[j]]
    }

    /// `x_i = R_i xb_i`.
    pub fn own(&self, i: usize) -> &[f64] {
        self.estimate(i, i)
    }

    pub fn own_mut(&mut self, i: usize) -> &mut [f64] {
        let start = i * self.n + self.offsets[i];
        let d = self.dims[i];
        &mut self.data.as_mut_slice()[start..start + d]
    }

    /// Whether flat coordinate `k` of the stacked vector is an own decision.
    pub fn is_own_coordinate(&self, k: usize) -> bool {
        let i = k / self.n;
        let local = k % self.n;
        local >= self.offsets[i] && local < self.offsets[i] + self.dims[i]
    }

    /// `R xb`, the stack of own decisions.
    pub fn own_profile(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for i in 0..self.num_agents() {
            out.rows_mut(self.offsets[i], self.dims[i])
                .copy_from_slice(self.own(i));
        }
        out
    }

    /// `Rᵀ R xb`: own decisions kept, estimates zeroed.
    pub fn own_part(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.data.len(),
            self.data
                .iter()
                .enumerate()
                .map(|(k, v)| if self.is_own_coordinate(k) { *v } else { 0.0 }),
        )
    }

    /// `Sᵀ S xb`: estimates kept, own decisions zeroed.
    pub fn estimate_part(&self) -> DVector<f64> {
        &self.data - self.own_part()
    }

    pub fn mean_block(&self) -> DVector<f64> {
        let agents = self.num_agents();
        let mut mean = DVector::zeros(self.n);
        for i in 0..agents {
            for (m, v) in mean.iter_mut().zip(self.block(i)) {
                *m += v;
            }
        }
        mean / agents as f64
    }

    /// `‖xb − 1 ⊗ mean‖`.
    pub fn consensus_error(&self) -> f64 {
        let mean = self.mean_block();
        let mut acc = 0.0;
        for i in 0..self.num_agents() {
            for (m, v) in mean.iter().zip(self.block(i)) {
                acc += (v - m) * (v - m);
            }
        }
        acc.sqrt()
    }

    pub fn is_consensus(&self, tol: f64) -> bool {
        let first = self.block(0);
        (1..self.num_agents()).all(|i| {
            self.block(i)
                .iter()
                .zip(first)
                .all(|(a, b)| (a - b).abs() <= tol)
        })
    }
}

/// `1_N ⊗ x` as a flat vector.
pub fn lift(x: &[f64], agents: usize) -> DVector<f64> {
    DVector::from_iterator(
        x.len() * agents,
        (0..agents).flat_map(|_| x.iter().copied()),
    )
}
