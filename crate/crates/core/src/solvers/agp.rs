use super::{
    augmented_map, check_inputs, normal_cone_violation, ExtendedState, Monitor, RunOutcome,
    SolverConfig, Step,
};
use crate::error::{NepError, Result};
use crate::game::Game;
use crate::network::{Coupling, KroneckerOperator};

/// `xb ← Proj_Ω(xb − γ F_a(xb))`; only own decisions are projected.
pub fn augmented_gradient_step<G: Game + ?Sized>(
    game: &G,
    laplacian: &KroneckerOperator,
    alpha: f64,
    gamma: f64,
    xb: &ExtendedState,
) -> Result<ExtendedState> {
    let fa = augmented_map(game, laplacian, alpha, xb.as_slice())?;
    let mut next = xb.clone();
    for (v, f) in next.as_mut_slice().iter_mut().zip(fa.iter()) {
        *v -= gamma * f;
    }
    for (i, set) in game.sets().iter().enumerate() {
        set.project_in_place(next.own_mut(i));
    }
    Ok(next)
}

/// Augmented gradient play from `x0` with step `gamma`. The inclusion column
/// of the trace holds the coordinate-wise violation of
/// `−F_a(xb) ∈ N_Ω(xb)` at each iterate.
pub fn augmented_gradient_run<G: Game + ?Sized>(
    game: &G,
    coupling: &Coupling,
    gamma: f64,
    config: &SolverConfig,
    x0: &ExtendedState,
    reference: Option<&[f64]>,
) -> Result<RunOutcome> {
    config.validate()?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(NepError::Config(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    check_inputs(game, coupling, x0, reference)?;
    let n = game.total_dim();
    let phi = coupling.preconditioner(n)?;
    let laplacian = coupling.laplacian_operator(n);

    let vi_residual = |xb: &ExtendedState| -> Result<f64> {
        let fa = augmented_map(game, &laplacian, config.alpha, xb.as_slice())?;
        Ok(normal_cone_violation(game, xb, (-fa).as_slice()))
    };

    let mut monitor = Monitor::new(&phi, reference, game.num_agents(), config.record_time);
    let mut xb = x0.clone();
    let d0 = monitor.record(0, &xb, vi_residual(&xb)?);
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
        let next = augmented_gradient_step(game, &laplacian, config.alpha, gamma, &xb)?;
        let displacement = (next.data() - xb.data()).norm();
        xb = next;
        let dist = monitor.record(k, &xb, vi_residual(&xb)?);
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
