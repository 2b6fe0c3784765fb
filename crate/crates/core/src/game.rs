//! Game instances: feasible sets, pseudo-gradients and an exact equilibrium oracle.
//!
//! Agent `i` picks `x_i` in a box `Ω_i ⊂ R^{n_i}`. A quadratic game stores the cost
//!
//! ```text
//! J_i(x_i, x_{-i}) = x_iᵀ A_ii x_i + b_iᵀ x_i + Σ_{j≠i} x_iᵀ A_ij x_j
//! ```
//!
//! so its pseudo-gradient is affine, `F(x) = G x + g`, with `G_ii = 2 A_ii`,
//! `G_ij = A_ij` and `g = col(b_i)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{NepError, Result};

/// Axis-aligned box. Either bound of a coordinate may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(NepError::Dimension {
                what: "box upper bounds",
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (c, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(NepError::Input(format!(
                    "box coordinate {c} has lower {lo} > upper {hi}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    /// Same interval `[lo, hi]` on every coordinate.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn is_unbounded(&self) -> bool {
        self.lower.iter().all(|v| *v == f64::NEG_INFINITY)
            && self.upper.iter().all(|v| *v == f64::INFINITY)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    #[inline]
    pub fn clamp_coord(&self, c: usize, v: f64) -> f64 {
        v.max(self.lower[c]).min(self.upper[c])
    }

    pub fn project_in_place(&self, x: &mut [f64]) {
        for (c, v) in x.iter_mut().enumerate() {
            *v = self.clamp_coord(c, *v);
        }
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        self.project_in_place(&mut out);
        out
    }
}

/// Start offsets of each agent's block inside a stacked profile, plus the total.
pub(crate) fn offsets_of(dims: &[usize]) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(dims.len());
    let mut acc = 0;
    for d in dims {
        offsets.push(acc);
        acc += d;
    }
    (offsets, acc)
}

/// A game in which every agent can evaluate its own partial gradient at any
/// full profile (its own decision plus what it believes the others play).
pub trait Game: Sync {
    fn dims(&self) -> &[usize];

    fn sets(&self) -> &[BoxSet];

    /// `∇_{x_i} J_i` evaluated at the full profile `profile ∈ R^n`.
    fn agent_gradient(&self, agent: usize, profile: &[f64]) -> DVector<f64>;

    /// Lipschitz constant of `y ↦ ∇_y J_i(y, x_{-i})`, used to size inner
    /// projected-gradient steps.
    fn local_lipschitz(&self, agent: usize) -> f64;

    /// Exact minimizer of `J_i(y, x_{-i}) + (κ/2)‖y − c‖²` over `Ω_i` when one is
    /// available in closed form. `profile` supplies `x_{-i}`; its own block is ignored.
    fn local_prox_closed_form(
        &self,
        _agent: usize,
        _profile: &[f64],
        _kappa: f64,
        _center: &[f64],
    ) -> Option<DVector<f64>> {
        None
    }

    fn num_agents(&self) -> usize {
        self.dims().len()
    }

    fn total_dim(&self) -> usize {
        self.dims().iter().sum()
    }
}

/// `F(x) = col(∇_{x_i} J_i(x_i, x_{-i}))`.
pub fn pseudo_gradient<G: Game + ?Sized>(game: &G, x: &[f64]) -> Result<DVector<f64>> {
    let n = game.total_dim();
    if x.len() != n {
        return Err(NepError::Dimension {
            what: "strategy profile",
            expected: n,
            got: x.len(),
        });
    }
    let mut out = DVector::zeros(n);
    let mut off = 0;
    for (i, &d) in game.dims().iter().enumerate() {
        out.rows_mut(off, d).copy_from(&game.agent_gradient(i, x));
        off += d;
    }
    Ok(out)
}

/// Extended pseudo-gradient: agent `i`'s gradient evaluated at its own estimate
/// block `xb_i ∈ R^n` of the stacked vector `xb ∈ R^{N·n}`.
pub fn extended_pseudo_gradient<G: Game + ?Sized>(game: &G, xb: &[f64]) -> Result<DVector<f64>> {
    let n = game.total_dim();
    let agents = game.num_agents();
    if xb.len() != agents * n {
        return Err(NepError::Dimension {
            what: "extended state",
            expected: agents * n,
            got: xb.len(),
        });
    }
    let mut out = DVector::zeros(n);
    let mut off = 0;
    for (i, &d) in game.dims().iter().enumerate() {
        let block = &xb[i * n..(i + 1) * n];
        out.rows_mut(off, d)
            .copy_from(&game.agent_gradient(i, block));
        off += d;
    }
    Ok(out)
}

/// Natural residual `‖x − Proj_Ω(x − F(x))‖` of the equilibrium inclusion.
pub fn natural_residual<G: Game + ?Sized>(game: &G, x: &[f64]) -> Result<f64> {
    let f = pseudo_gradient(game, x)?;
    let mut acc = 0.0;
    let mut off = 0;
    for (set, &d) in game.sets().iter().zip(game.dims()) {
        for c in 0..d {
            let v = x[off + c];
            let r = v - set.clamp_coord(c, v - f[off + c]);
            acc += r * r;
        }
        off += d;
    }
    Ok(acc.sqrt())
}

/// Quadratic game with box sets.
#[derive(Debug, Clone)]
pub struct QuadraticGame {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    sets: Vec<BoxSet>,
    /// Cost coefficients `A` (block `(i, j)` is `A_ij`).
    cost: DMatrix<f64>,
    linear: DVector<f64>,
    /// Pseudo-gradient Jacobian `G`.
    jacobian: DMatrix<f64>,
    /// Per-agent flag: is `G_ii` diagonal.
    diagonal_hessian: Vec<bool>,
}

impl QuadraticGame {
    /// Builds a game from the assembled cost matrix `A ∈ R^{n×n}` and linear terms
    /// `b ∈ R^n`. Diagonal blocks must be symmetric positive definite.
    pub fn from_cost(
        dims: Vec<usize>,
        cost: DMatrix<f64>,
        linear: DVector<f64>,
        sets: Vec<BoxSet>,
    ) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(NepError::Input(
                "every agent needs a positive decision dimension".into(),
            ));
        }
        let (offsets, n) = offsets_of(&dims);
        if cost.nrows() != n || cost.ncols() != n {
            return Err(NepError::Dimension {
                what: "cost matrix side",
                expected: n,
                got: cost.nrows().max(cost.ncols()),
            });
        }
        if linear.len() != n {
            return Err(NepError::Dimension {
                what: "linear term",
                expected: n,
                got: linear.len(),
            });
        }
        if sets.len() != dims.len() {
            return Err(NepError::Dimension {
                what: "number of feasible sets",
                expected: dims.len(),
                got: sets.len(),
            });
        }
        for (i, (set, &d)) in sets.iter().zip(&dims).enumerate() {
            if set.dim() != d {
                return Err(NepError::Input(format!(
                    "feasible set of agent {i} has dimension {} instead of {d}",
                    set.dim()
                )));
            }
        }

        let mut jacobian = cost.clone();
        let mut diagonal_hessian = Vec::with_capacity(dims.len());
        for (i, (&off, &d)) in offsets.iter().zip(&dims).enumerate() {
            let aii = cost.view((off, off), (d, d)).into_owned();
            let scale = aii.amax().max(1.0);
            if (&aii - aii.transpose()).amax() > 1e-12 * scale {
                return Err(NepError::Input(format!(
                    "diagonal cost block A_{i}{i} is not symmetric"
                )));
            }
            if aii.clone().cholesky().is_none() {
                return Err(NepError::Input(format!(
                    "diagonal cost block A_{i}{i} is not positive definite"
                )));
            }
            jacobian
                .view_mut((off, off), (d, d))
                .copy_from(&(aii * 2.0));
            let gii = jacobian.view((off, off), (d, d));
            let diag = (0..d).all(|r| (0..d).all(|c| r == c || gii[(r, c)] == 0.0));
            diagonal_hessian.push(diag);
        }

        Ok(Self {
            dims,
            offsets,
            sets,
            cost,
            linear,
            jacobian,
            diagonal_hessian,
        })
    }

    /// Builds a game from individual blocks `A_ij` (absent blocks are zero).
    pub fn from_blocks(
        dims: Vec<usize>,
        blocks: &[(usize, usize, DMatrix<f64>)],
        linear: &[DVector<f64>],
        sets: Vec<BoxSet>,
    ) -> Result<Self> {
        let (offsets, n) = offsets_of(&dims);
        let agents = dims.len();
        let mut cost = DMatrix::zeros(n, n);
        for (i, j, m) in blocks {
            let (i, j) = (*i, *j);
            if i >= agents || j >= agents {
                return Err(NepError::Input(format!("block ({i}, {j}) out of range")));
            }
            if m.nrows() != dims[i] || m.ncols() != dims[j] {
                return Err(NepError::Input(format!(
                    "block ({i}, {j}) has shape {}x{}, expected {}x{}",
                    m.nrows(),
                    m.ncols(),
                    dims[i],
                    dims[j]
                )));
            }
            let mut view = cost.view_mut((offsets[i], offsets[j]), (dims[i], dims[j]));
            view += m;
        }
        if linear.len() != agents {
            return Err(NepError::Dimension {
                what: "linear terms",
                expected: agents,
                got: linear.len(),
            });
        }
        let mut b = DVector::zeros(n);
        for (i, bi) in linear.iter().enumerate() {
            if bi.len() != dims[i] {
                return Err(NepError::Dimension {
                    what: "linear term block",
                    expected: dims[i],
                    got: bi.len(),
                });
            }
            b.rows_mut(offsets[i], dims[i]).copy_from(bi);
        }
        Self::from_cost(dims, cost, b, sets)
    }

    /// Connectivity game on the plane-like space `R^d`:
    /// `J_i = q_i x_iᵀx_i + r_iᵀx_i + Σ_j m_ij ‖x_i − x_j‖²`.
    pub fn connectivity(
        q: &[f64],
        r: &[DVector<f64>],
        m: &DMatrix<f64>,
        sets: Vec<BoxSet>,
    ) -> Result<Self> {
        let agents = q.len();
        if agents == 0 || r.len() != agents || m.nrows() != agents || m.ncols() != agents {
            return Err(NepError::Input(
                "connectivity game parameters have inconsistent sizes".into(),
            ));
        }
        let d = r[0].len();
        let dims = vec![d; agents];
        let eye = DMatrix::<f64>::identity(d, d);
        let mut blocks = Vec::with_capacity(agents * agents);
        for i in 0..agents {
            let coupling: f64 = (0..agents).filter(|j| *j != i).map(|j| m[(i, j)]).sum();
            blocks.push((i, i, &eye * (q[i] + coupling)));
            for j in 0..agents {
                // −2 m_ij x_iᵀx_j from expanding the squared distance
                if j != i && m[(i, j)] != 0.0 {
                    blocks.push((i, j, &eye * (-2.0 * m[(i, j)])));
                }
            }
        }
        Self::from_blocks(dims, &blocks, r, sets)
    }

    pub fn jacobian(&self) -> &DMatrix<f64> {
        &self.jacobian
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.linear
    }

    pub fn cost_matrix(&self) -> &DMatrix<f64> {
        &self.cost
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn is_unconstrained(&self) -> bool {
        self.sets.iter().all(BoxSet::is_unbounded)
    }

    pub fn has_diagonal_hessian(&self, agent: usize) -> bool {
        self.diagonal_hessian[agent]
    }

    /// Same costs with different feasible sets.
    pub fn with_sets(&self, sets: Vec<BoxSet>) -> Result<Self> {
        Self::from_cost(
            self.dims.clone(),
            self.cost.clone(),
            self.linear.clone(),
            sets,
        )
    }

    /// `G_ii`, the Hessian of agent `i`'s cost in its own decision.
    pub fn own_hessian(&self, agent: usize) -> DMatrix<f64> {
        let (o, d) = (self.offsets[agent], self.dims[agent]);
        self.jacobian.view((o, o), (d, d)).into_owned()
    }

    /// Constant Jacobian of the extended pseudo-gradient, an `n × N·n` matrix
    /// whose row block `i` is `G_i·` placed under column block `i`.
    pub fn extended_jacobian(&self) -> DMatrix<f64> {
        let n = self.total_dim();
        let agents = self.num_agents();
        let mut out = DMatrix::zeros(n, agents * n);
        for i in 0..agents {
            let (o, d) = (self.offsets[i], self.dims[i]);
            out.view_mut((o, i * n), (d, n))
                .copy_from(&self.jacobian.view((o, 0), (d, n)));
        }
        out
    }
}

impl Game for QuadraticGame {
    fn dims(&self) -> &[usize] {
        &self.dims
    }

    fn sets(&self) -> &[BoxSet] {
        &self.sets
    }

    fn agent_gradient(&self, agent: usize, profile: &[f64]) -> DVector<f64> {
        let (o, d) = (self.offsets[agent], self.dims[agent]);
        let n = self.jacobian.ncols();
        let mut out = self.linear.rows(o, d).into_owned();
        for r in 0..d {
            let mut acc = 0.0;
            for c in 0..n {
                acc += self.jacobian[(o + r, c)] * profile[c];
            }
            out[r] += acc;
        }
        out
    }

    fn local_lipschitz(&self, agent: usize) -> f64 {
        let h = self.own_hessian(agent);
        SymmetricEigen::new(h).eigenvalues.max()
    }

    fn local_prox_closed_form(
        &self,
        agent: usize,
        profile: &[f64],
        kappa: f64,
        center: &[f64],
    ) -> Option<DVector<f64>> {
        let (o, d) = (self.offsets[agent], self.dims[agent]);
        let set = &self.sets[agent];
        let diagonal = self.diagonal_hessian[agent];
        if !diagonal && !set.is_unbounded() {
            return None;
        }
        // h = G_{i,-i} x_{-i} + b_i
        let n = self.jacobian.ncols();
        let mut rhs = DVector::zeros(d);
        for r in 0..d {
            let mut acc = self.linear[o + r];
            for c in 0..n {
                if c < o || c >= o + d {
                    acc += self.jacobian[(o + r, c)] * profile[c];
                }
            }
            rhs[r] = kappa * center[r] - acc;
        }
        if diagonal {
            // coordinate-separable objective: solve then clamp
            let mut y = DVector::zeros(d);
            for c in 0..d {
                let v = rhs[c] / (self.jacobian[(o + c, o + c)] + kappa);
                y[c] = set.clamp_coord(c, v);
            }
            Some(y)
        } else {
            let mut h = self.own_hessian(agent);
            for c in 0..d {
                h[(c, c)] += kappa;
            }
            h.cholesky().map(|ch| ch.solve(&rhs))
        }
    }
}

/// Game given by user-supplied partial-gradient callables. Carries no
/// closed-form structure; the solvers fall back to iterative inner solves.
pub struct GradientGame {
    dims: Vec<usize>,
    sets: Vec<BoxSet>,
    lipschitz: Vec<f64>,
    #[allow(clippy::type_complexity)]
    gradient: Box<dyn Fn(usize, &[f64]) -> Vec<f64> + Send + Sync>,
}

impl GradientGame {
    pub fn new<F>(
        dims: Vec<usize>,
        sets: Vec<BoxSet>,
        lipschitz: Vec<f64>,
        gradient: F,
    ) -> Result<Self>
    where
        F: Fn(usize, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        if sets.len() != dims.len() || lipschitz.len() != dims.len() {
            return Err(NepError::Input(
                "dims, sets and Lipschitz constants must have one entry per agent".into(),
            ));
        }
        if lipschitz.iter().any(|l| !(*l > 0.0)) {
            return Err(NepError::Input(
                "local Lipschitz constants must be positive".into(),
            ));
        }
        Ok(Self {
            dims,
            sets,
            lipschitz,
            gradient: Box::new(gradient),
        })
    }
}

impl std::fmt::Debug for GradientGame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GradientGame")
            .field("dims", &self.dims)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

impl Game for GradientGame {
    fn dims(&self) -> &[usize] {
        &self.dims
    }

    fn sets(&self) -> &[BoxSet] {
        &self.sets
    }

    fn agent_gradient(&self, agent: usize, profile: &[f64]) -> DVector<f64> {
        DVector::from_vec((self.gradient)(agent, profile))
    }

    fn local_lipschitz(&self, agent: usize) -> f64 {
        self.lipschitz[agent]
    }
}

/// Monotonicity and Lipschitz constants of a quadratic game.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameConstants {
    /// Strong monotonicity modulus of `F`.
    pub mu: f64,
    /// Lipschitz constant of `F`.
    pub theta0: f64,
    /// Lipschitz constant of the extended pseudo-gradient.
    pub theta: f64,
}

pub fn game_constants(game: &QuadraticGame) -> Result<GameConstants> {
    let g = game.jacobian();
    let sym = (g + g.transpose()) * 0.5;
    let mu = SymmetricEigen::new(sym).eigenvalues.min();
    if !(mu > 0.0) {
        return Err(NepError::NotStronglyMonotone { mu });
    }
    let theta0 = spectral_norm(g);
    // the extended Jacobian is block-structured: its Gram matrix is block
    // diagonal with blocks G_i· G_i·ᵀ
    let mut theta: f64 = 0.0;
    for (&o, &d) in game.offsets().iter().zip(game.dims()) {
        let rows = g.view((o, 0), (d, g.ncols())).into_owned();
        theta = theta.max(spectral_norm(&rows));
    }
    Ok(GameConstants { mu, theta0, theta })
}

pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Default iteration cap of the projected-gradient equilibrium oracle.
pub const NE_MAX_ITERS: usize = 1_000_000;

/// Computes the unique Nash equilibrium with natural residual at most `tol`.
pub fn solve_ne(game: &QuadraticGame, tol: f64) -> Result<DVector<f64>> {
    if !(tol > 0.0) {
        return Err(NepError::Input(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let consts = game_constants(game)?;
    let g = game.jacobian();
    let rhs = -game.offset();

    if game.is_unconstrained() {
        let lu = g.clone().lu();
        let mut x = lu
            .solve(&rhs)
            .ok_or_else(|| NepError::Consistency("singular pseudo-gradient Jacobian".into()))?;
        for _ in 0..3 {
            let r = &rhs - g * &x;
            if r.norm() <= tol {
                return Ok(x);
            }
            if let Some(dx) = lu.solve(&r) {
                x += dx;
            }
        }
        let residual = (g * &x - &rhs).norm();
        if residual <= tol {
            return Ok(x);
        }
        return Err(NepError::OracleFailure { iters: 3, residual });
    }

    // Projected fixed-point iteration x ← Proj(x − γF(x)); γ = μ/θ₀² contracts
    // for any strongly monotone affine F, symmetric or not.
    let step = consts.mu / (consts.theta0 * consts.theta0);
    let n = game.total_dim();
    let mut x = DVector::from_vec(project_profile(game, &vec![0.0; n]));
    let mut residual = f64::INFINITY;
    for it in 0..NE_MAX_ITERS {
        let f = g * &x + game.offset();
        residual = natural_residual(game, x.as_slice())?;
        if residual <= tol {
            return Ok(x);
        }
        if it % 50 == 49 {
            if let Some(polished) = polish_active_set(game, &x) {
                if natural_residual(game, polished.as_slice())? <= tol {
                    return Ok(polished);
                }
            }
        }
        let trial = &x - f * step;
        x = DVector::from_vec(project_profile(game, trial.as_slice()));
    }
    Err(NepError::OracleFailure {
        iters: NE_MAX_ITERS,
        residual,
    })
}

pub(crate) fn project_profile<G: Game + ?Sized>(game: &G, x: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    let mut off = 0;
    for (set, &d) in game.sets().iter().zip(game.dims()) {
        set.project_in_place(&mut out[off..off + d]);
        off += d;
    }
    out
}

/// Guess the active set from a near-solution and solve the reduced linear system.
fn polish_active_set(game: &QuadraticGame, x: &DVector<f64>) -> Option<DVector<f64>> {
    let g = game.jacobian();
    let f = g * x + game.offset();
    let n = x.len();
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    let mut off = 0;
    for (set, &d) in game.sets().iter().zip(game.dims()) {
        for c in 0..d {
            let trial = x[off + c] - f[off + c];
            if trial <= set.lower()[c] {
                fixed[off + c] = Some(set.lower()[c]);
            } else if trial >= set.upper()[c] {
                fixed[off + c] = Some(set.upper()[c]);
            }
        }
        off += d;
    }
    let free: Vec<usize> = (0..n).filter(|k| fixed[*k].is_none()).collect();
    let mut out = DVector::from_iterator(n, fixed.iter().map(|v| v.unwrap_or(0.0)));
    if !free.is_empty() {
        let m = free.len();
        let mut a = DMatrix::zeros(m, m);
        let mut b = DVector::zeros(m);
        for (r, &fr) in free.iter().enumerate() {
            let mut acc = -game.offset()[fr];
            for c in 0..n {
                if let Some(v) = fixed[c] {
                    acc -= g[(fr, c)] * v;
                }
            }
            b[r] = acc;
            for (cc, &fc) in free.iter().enumerate() {
                a[(r, cc)] = g[(fr, fc)];
            }
        }
        let sol = a.lu().solve(&b)?;
        for (r, &fr) in free.iter().enumerate() {
            out[fr] = sol[r];
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_game(a: f64, b: f64) -> QuadraticGame {
        QuadraticGame::from_cost(
            vec![1],
            DMatrix::from_element(1, 1, a),
            DVector::from_element(1, b),
            vec![BoxSet::unbounded(1)],
        )
        .unwrap()
    }

    fn two_agent_game() -> QuadraticGame {
        let eye = DMatrix::<f64>::identity(2, 2);
        QuadraticGame::from_blocks(
            vec![2, 2],
            &[
                (0, 0, eye.clone()),
                (1, 1, eye.clone()),
                (0, 1, &eye * 0.5),
                (1, 0, &eye * 0.5),
            ],
            &[DVector::zeros(2), DVector::zeros(2)],
            vec![BoxSet::unbounded(2), BoxSet::unbounded(2)],
        )
        .unwrap()
    }

    #[test]
    fn box_rejects_inverted_bounds() {
        assert!(BoxSet::new(vec![1.0], vec![0.0]).is_err());
        assert!(BoxSet::new(vec![0.0], vec![0.0, 1.0]).is_err());
        let b = BoxSet::new(vec![0.0, f64::NEG_INFINITY], vec![1.0, 2.0]).unwrap();
        assert_eq!(b.project(&[-3.0, 5.0]), vec![0.0, 2.0]);
        assert!(b.contains(&[0.5, -1e9]));
    }

    #[test]
    fn scalar_pseudo_gradient() {
        let game = scalar_game(1.0, 0.0);
        let f = pseudo_gradient(&game, &[3.0]).unwrap();
        assert_eq!(f[0], 6.0);
    }

    #[test]
    fn two_agent_pseudo_gradient_by_hand() {
        let game = two_agent_game();
        let f = pseudo_gradient(&game, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        for v in f.iter() {
            assert!((v - 2.5).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let game = two_agent_game();
        assert!(matches!(
            pseudo_gradient(&game, &[1.0]),
            Err(NepError::Dimension { .. })
        ));
        assert!(matches!(
            extended_pseudo_gradient(&game, &[1.0; 4]),
            Err(NepError::Dimension { .. })
        ));
    }

    #[test]
    fn non_symmetric_own_block_rejected() {
        let cost = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 1.0]);
        let err =
            QuadraticGame::from_cost(vec![2], cost, DVector::zeros(2), vec![BoxSet::unbounded(2)]);
        assert!(err.is_err());
    }

    #[test]
    fn decoupled_constants_equal() {
        let q = 1.7;
        let game = QuadraticGame::from_cost(
            vec![1, 1, 1],
            DMatrix::identity(3, 3) * q,
            DVector::zeros(3),
            vec![BoxSet::unbounded(1); 3],
        )
        .unwrap();
        let c = game_constants(&game).unwrap();
        for v in [c.mu, c.theta0, c.theta] {
            assert!((v - 2.0 * q).abs() < 1e-12);
        }
    }

    #[test]
    fn skew_coupling_leaves_mu_to_diagonal() {
        // A_12 = −A_21ᵀ cancels in the symmetric part
        let k = DMatrix::from_row_slice(2, 2, &[0.4, -1.3, 2.0, 0.7]);
        let a11 = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.5]);
        let a22 = DMatrix::identity(2, 2) * 0.8;
        let game = QuadraticGame::from_blocks(
            vec![2, 2],
            &[
                (0, 0, a11.clone()),
                (1, 1, a22.clone()),
                (0, 1, k.clone()),
                (1, 0, -k.transpose()),
            ],
            &[DVector::zeros(2), DVector::zeros(2)],
            vec![BoxSet::unbounded(2); 2],
        )
        .unwrap();
        let mu = game_constants(&game).unwrap().mu;
        let blockwise = SymmetricEigen::new(a11 * 2.0)
            .eigenvalues
            .min()
            .min(SymmetricEigen::new(a22 * 2.0).eigenvalues.min());
        assert!((mu - blockwise).abs() < 1e-12);
    }

    #[test]
    fn not_monotone_is_an_error() {
        let eye = DMatrix::<f64>::identity(1, 1);
        let game = QuadraticGame::from_blocks(
            vec![1, 1],
            &[
                (0, 0, eye.clone()),
                (1, 1, eye.clone()),
                (0, 1, &eye * 3.0),
                (1, 0, &eye * 3.0),
            ],
            &[DVector::zeros(1), DVector::zeros(1)],
            vec![BoxSet::unbounded(1); 2],
        )
        .unwrap();
        assert!(matches!(
            game_constants(&game),
            Err(NepError::NotStronglyMonotone { .. })
        ));
    }

    #[test]
    fn unconstrained_scalar_ne() {
        let game = scalar_game(1.0, 2.0);
        let x = solve_ne(&game, 1e-12).unwrap();
        assert!((x[0] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn box_ne_clamps_to_lower_bound() {
        // G diagonal, unconstrained minimizer at −1 in both coordinates
        let game = QuadraticGame::from_cost(
            vec![1, 1],
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![2.0, 2.0]),
            vec![BoxSet::uniform(1, 0.1, 0.5).unwrap(); 2],
        )
        .unwrap();
        let x = solve_ne(&game, 1e-12).unwrap();
        assert_eq!(x.as_slice(), &[0.1, 0.1]);
        assert!(natural_residual(&game, x.as_slice()).unwrap() < 1e-12);
    }

    #[test]
    fn nonpositive_tolerance_rejected() {
        assert!(solve_ne(&scalar_game(1.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn closed_form_prox_matches_stationarity() {
        // J(y) = y², κ = 2/α, center s: (2 + κ) y = κ s
        let game = scalar_game(1.0, 0.0);
        let (alpha, s) = (0.3, 1.7);
        let kappa = 2.0 / alpha;
        let y = game.local_prox_closed_form(0, &[0.0], kappa, &[s]).unwrap();
        assert!(((2.0 + kappa) * y[0] - kappa * s).abs() < 1e-14);
    }

    #[test]
    fn gradient_game_hook() {
        let game = GradientGame::new(
            vec![1, 1],
            vec![BoxSet::unbounded(1); 2],
            vec![2.0, 2.0],
            |i, x: &[f64]| vec![2.0 * x[i] + 0.5 * x[1 - i]],
        )
        .unwrap();
        let f = pseudo_gradient(&game, &[1.0, 1.0]).unwrap();
        assert_eq!(f.as_slice(), &[2.5, 2.5]);
        assert!(game
            .local_prox_closed_form(0, &[0.0, 0.0], 1.0, &[0.0])
            .is_none());
    }
}
