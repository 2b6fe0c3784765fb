use nalgebra::DVector;
use rayon::prelude::*;

use super::{
    check_inputs, resolvent_inclusion_residual, ExtendedState, Monitor, RunOutcome, SolverConfig,
    Step,
};
use crate::error::{NepError, Result};
use crate::game::Game;
use crate::network::Coupling;

/// How the local proximal subproblem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProxMethod {
    /// Closed form when the game offers one, projected gradient otherwise.
    #[default]
    Auto,
    /// Always use the projected-gradient inner solver.
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSolver {
    pub method: ProxMethod,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for InnerSolver {
    fn default() -> Self {
        Self {
            method: ProxMethod::Auto,
            tol: 1e-10,
            max_iters: 100_000,
        }
    }
}

/// Estimate half-step of every agent:
/// `xb_{i,-i} ← (d_i xb_{i,-i} + Σ_j w_ij xb_{j,-i}) / (2 d_i)`, reading only
/// the previous snapshot. Own decisions are copied through untouched.
pub fn pppa_consensus_update(xb: &ExtendedState, coupling: &Coupling) -> ExtendedState {
    let agents = xb.num_agents();
    let n = xb.block_dim();
    let w = coupling.weights();
    let deg = coupling.degrees();
    let mut out = xb.clone();
    for i in 0..agents {
        let (own_lo, own_hi) = (xb.offsets()[i], xb.offsets()[i] + xb.dims()[i]);
        let di = deg[i];
        for c in (0..n).filter(|c| *c < own_lo || *c >= own_hi) {
            let mut mix = 0.0;
            for j in 0..agents {
                let wij = w[(i, j)];
                if wij != 0.0 {
                    mix += wij * xb.block(j)[c];
                }
            }
            out.block_mut(i)[c] = 0.5 * (xb.block(i)[c] + mix / di);
        }
    }
    out
}

/// Proximal best response of agent `i`:
///
/// `argmin_{y ∈ Ω_i} J_i(y, xb⁺_{i,-i}) + (d_i/2α)‖y − x_i‖² + (d_i/2α)‖y − Σ_j w_ij xb_{j,i} / d_i‖²`
///
/// where `x_i` and `xb_{j,i}` come from the previous snapshot `old` and the
/// fresh estimates `xb⁺_{i,-i}` from `mixed`.
pub fn local_prox_step<G: Game + ?Sized>(
    game: &G,
    agent: usize,
    mixed: &ExtendedState,
    old: &ExtendedState,
    coupling: &Coupling,
    alpha: f64,
    inner: &InnerSolver,
) -> Result<DVector<f64>> {
    let d = game.dims()[agent];
    let di = coupling.degrees()[agent];
    let w = coupling.weights();

    // the two quadratic penalties merge into (κ/2)‖y − center‖²
    let kappa = 2.0 * di / alpha;
    let mut center = DVector::zeros(d);
    for j in 0..old.num_agents() {
        let wij = w[(agent, j)];
        if wij != 0.0 {
            for (c, v) in center.iter_mut().zip(old.estimate(j, agent)) {
                *c += wij * v;
            }
        }
    }
    for (c, x) in center.iter_mut().zip(old.own(agent)) {
        *c = 0.5 * (x + *c / di);
    }

    let mut profile = mixed.block(agent).to_vec();
    if inner.method == ProxMethod::Auto {
        if let Some(y) = game.local_prox_closed_form(agent, &profile, kappa, center.as_slice()) {
            return Ok(y);
        }
    }

    let set = &game.sets()[agent];
    let own_off = mixed.offsets()[agent];
    let step = 1.0 / (game.local_lipschitz(agent) + kappa);
    let mut y = old.own(agent).to_vec();
    set.project_in_place(&mut y);
    let mut residual = f64::INFINITY;
    for _ in 0..inner.max_iters {
        profile[own_off..own_off + d].copy_from_slice(&y);
        let grad = game.agent_gradient(agent, &profile);
        let mut moved = 0.0;
        for c in 0..d {
            let g = grad[c] + kappa * (y[c] - center[c]);
            let next = set.clamp_coord(c, y[c] - step * g);
            moved += (next - y[c]) * (next - y[c]);
            y[c] = next;
        }
        residual = moved.sqrt() / step;
        if residual <= inner.tol {
            return Ok(DVector::from_vec(y));
        }
    }
    Err(NepError::InnerSolve {
        agent,
        iters: inner.max_iters,
        residual,
    })
}

/// One synchronous round: estimate half-step, then every agent's proximal step.
pub fn pppa_step<G: Game + ?Sized>(
    game: &G,
    coupling: &Coupling,
    alpha: f64,
    xb: &ExtendedState,
    inner: &InnerSolver,
    parallel: bool,
) -> Result<ExtendedState> {
    let mut next = pppa_consensus_update(xb, coupling);
    let agents = xb.num_agents();
    let decisions: Vec<DVector<f64>> = if parallel {
        (0..agents)
            .into_par_iter()
            .map(|i| local_prox_step(game, i, &next, xb, coupling, alpha, inner))
            .collect::<Result<_>>()?
    } else {
        (0..agents)
            .map(|i| local_prox_step(game, i, &next, xb, coupling, alpha, inner))
            .collect::<Result<_>>()?
    };
    for (i, y) in decisions.iter().enumerate() {
        next.own_mut(i).copy_from_slice(y.as_slice());
    }
    Ok(next)
}

/// Runs the preconditioned proximal-point iteration from `x0`.
///
/// `reference` is the equilibrium profile `x*` when known; it drives the
/// distance columns of the trace and the stopping rule.
pub fn pppa_run<G: Game + ?Sized>(
    game: &G,
    coupling: &Coupling,
    config: &SolverConfig,
    x0: &ExtendedState,
    reference: Option<&[f64]>,
) -> Result<RunOutcome> {
    config.validate()?;
    check_inputs(game, coupling, x0, reference)?;
    let n = game.total_dim();
    let phi = coupling.preconditioner(n)?;
    let laplacian = coupling.laplacian_operator(n);
    let inner = config.inner();

    let mut monitor = Monitor::new(&phi, reference, game.num_agents(), config.record_time);
    let mut xb = x0.clone();
    let d0 = monitor.record(0, &xb, 0.0);
    if config.stop_tol > 0.0 && d0 <= config.stop_tol {
        return Ok(RunOutcome {
            trace: monitor.trace,
            state: xb,
            converged: true,
            diverged: None,
        });
    }

    let mut converged = false;
    let mut diverged = None;
    for k in 1..=config.max_iters {
        let next = pppa_step(game, coupling, config.alpha, &xb, &inner, config.parallel)?;
        let residual =
            resolvent_inclusion_residual(game, &laplacian, &phi, config.alpha, &xb, &next)?;
        let displacement = (next.data() - xb.data()).norm();
        xb = next;
        let dist = monitor.record(k, &xb, residual);
        match monitor.step(k, dist, displacement, config)? {
            Step::Continue => {}
            Step::Converged => {
                converged = true;
                break;
            }
            Step::Diverged(reason) => {
                diverged = Some(reason);
                break;
            }
        }
    }
    Ok(RunOutcome {
        trace: monitor.trace,
        state: xb,
        converged,
        diverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{BoxSet, QuadraticGame};
    use crate::network::{metropolis_weights, Graph, MixingMatrix};
    use nalgebra::DMatrix;

    fn k2() -> Coupling {
        Coupling::doubly_stochastic(&metropolis_weights(&Graph::complete(2).unwrap()).unwrap())
    }

    #[test]
    fn consensus_point_is_fixed_by_mixing() {
        let g = Graph::path(4).unwrap();
        let c = Coupling::doubly_stochastic(&metropolis_weights(&g).unwrap());
        let xb = ExtendedState::consensus(&[1, 2, 1, 1], &[0.3, -1.0, 2.0, 0.5, 7.0]).unwrap();
        let out = pppa_consensus_update(&xb, &c);
        assert_eq!(out, xb);
    }

    #[test]
    fn k2_half_step_by_hand() {
        let xb = ExtendedState::from_vec(&[1, 1], vec![0.4, 3.0, -1.0, 5.0]).unwrap();
        let out = pppa_consensus_update(&xb, &k2());
        // agent 0's estimate of agent 1: ½(x_{0,1} + ½x_{0,1} + ½x_{1,1})
        assert!((out.estimate(0, 1)[0] - 0.5 * (3.0 + 0.5 * 3.0 + 0.5 * 5.0)).abs() < 1e-15);
        assert!((out.estimate(1, 0)[0] - 0.5 * (-1.0 + -0.5 + 0.5 * 0.4)).abs() < 1e-15);
        assert_eq!(out.own(0), xb.own(0));
        assert_eq!(out.own(1), xb.own(1));
    }

    #[test]
    fn single_agent_mixing_is_identity() {
        let c = Coupling::doubly_stochastic(&MixingMatrix::new(DMatrix::identity(1, 1)).unwrap());
        let xb = ExtendedState::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(pppa_consensus_update(&xb, &c), xb);
    }

    #[test]
    fn scalar_prox_by_stationarity() {
        // J(y) = y², own decision s and neighbour copy s
        let game = QuadraticGame::from_cost(
            vec![1, 1],
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            vec![BoxSet::unbounded(1); 2],
        )
        .unwrap();
        let (alpha, s) = (0.2, 1.3);
        let xb = ExtendedState::consensus(&[1, 1], &[s, s]).unwrap();
        let c = k2();
        for method in [ProxMethod::Auto, ProxMethod::Iterative] {
            let inner = InnerSolver {
                method,
                tol: 1e-13,
                max_iters: 100_000,
            };
            let y = local_prox_step(&game, 0, &xb, &xb, &c, alpha, &inner).unwrap();
            assert!(
                ((2.0 + 2.0 / alpha) * y[0] - (2.0 / alpha) * s).abs() < 1e-11,
                "{method:?}"
            );
        }
    }

    #[test]
    fn huge_alpha_recovers_best_response() {
        // J_0(y, x_1) = y² + y x_1 + y: best response −(x_1 + 1)/2
        let eye = DMatrix::<f64>::identity(1, 1);
        let game = QuadraticGame::from_blocks(
            vec![1, 1],
            &[
                (0, 0, eye.clone()),
                (1, 1, eye.clone()),
                (0, 1, eye.clone()),
            ],
            &[DVector::from_element(1, 1.0), DVector::zeros(1)],
            vec![BoxSet::unbounded(1); 2],
        )
        .unwrap();
        let xb = ExtendedState::from_vec(&[1, 1], vec![4.0, 3.0, 0.0, 3.0]).unwrap();
        let mixed = pppa_consensus_update(&xb, &k2());
        let y =
            local_prox_step(&game, 0, &mixed, &xb, &k2(), 1e12, &InnerSolver::default()).unwrap();
        let expected = -(mixed.estimate(0, 1)[0] + 1.0) / 2.0;
        assert!((y[0] - expected).abs() < 1e-9);
    }

    #[test]
    fn inner_solver_cap_is_reported() {
        let game = QuadraticGame::from_cost(
            vec![2],
            DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]),
            DVector::from_vec(vec![1.0, -1.0]),
            vec![BoxSet::uniform(2, 0.0, 1.0).unwrap()],
        )
        .unwrap();
        let c = Coupling::doubly_stochastic(&MixingMatrix::new(DMatrix::identity(1, 1)).unwrap());
        let xb = ExtendedState::from_vec(&[2], vec![0.5, 0.5]).unwrap();
        let inner = InnerSolver {
            method: ProxMethod::Auto,
            tol: 1e-30,
            max_iters: 3,
        };
        assert!(matches!(
            local_prox_step(&game, 0, &xb, &xb, &c, 1.0, &inner),
            Err(NepError::InnerSolve { agent: 0, .. })
        ));
    }

    #[test]
    fn infeasible_start_rejected() {
        let game = QuadraticGame::from_cost(
            vec![1],
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            vec![BoxSet::uniform(1, 0.0, 1.0).unwrap()],
        )
        .unwrap();
        let c = Coupling::doubly_stochastic(&MixingMatrix::new(DMatrix::identity(1, 1)).unwrap());
        let xb = ExtendedState::from_vec(&[1], vec![2.0]).unwrap();
        assert!(pppa_run(&game, &c, &SolverConfig::new(0.1), &xb, None).is_err());
    }
}
