//! Synchronous-round solvers on the stacked estimate vector.
//!
//! [`pppa_run`] is the preconditioned proximal-point iteration: each round the
//! agents exchange their blocks, mix the estimates of the others with a
//! half-step and then take a proximal best response on their own decision.
//! [`augmented_gradient_run`] is the projected forward step on the augmented
//! map `F_a`, kept as a baseline. It is the plain projected-gradient form, not
//! a reproduction of any particular published gradient scheme.

mod agp;
mod pppa;
mod state;
mod trace;

use std::time::Instant;

use nalgebra::DVector;

pub use agp::{augmented_gradient_run, augmented_gradient_step};
pub use pppa::{
    local_prox_step, pppa_consensus_update, pppa_run, pppa_step, InnerSolver, ProxMethod,
};
pub use state::{lift, ExtendedState};
pub use trace::{RunTrace, TraceRecord, CSV_HEADER};

use crate::error::{NepError, Result};
use crate::game::{extended_pseudo_gradient, Game};
use crate::network::{Coupling, KroneckerOperator, Preconditioner};

/// Iteration settings shared by both solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Proximal weight `α` (also scales the game term of `F_a`).
    pub alpha: f64,
    pub max_iters: usize,
    /// Stop once `‖xb − 1⊗x*‖ ≤ stop_tol` (or the iterate displacement when no
    /// reference is known). Zero disables early stopping.
    pub stop_tol: f64,
    pub inner_tol: f64,
    pub inner_max_iters: usize,
    pub prox: ProxMethod,
    /// Run the per-agent updates of a round on the rayon pool.
    pub parallel: bool,
    /// Record wall-clock time; when off the column is zero and traces are
    /// bit-reproducible.
    pub record_time: bool,
    /// Return a divergence error; when off the run stops early and the
    /// outcome carries the reason instead.
    pub fail_on_divergence: bool,
}

impl SolverConfig {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            max_iters: 10_000,
            stop_tol: 1e-10,
            inner_tol: 1e-10,
            inner_max_iters: 100_000,
            prox: ProxMethod::Auto,
            parallel: false,
            record_time: false,
            fail_on_divergence: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(NepError::Config(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.stop_tol >= 0.0) || !(self.inner_tol > 0.0) {
            return Err(NepError::Config("tolerances must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn inner(&self) -> InnerSolver {
        InnerSolver {
            method: self.prox,
            tol: self.inner_tol,
            max_iters: self.inner_max_iters,
        }
    }
}

/// Trace and final iterate of a run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: RunTrace,
    pub state: ExtendedState,
    /// Whether the stopping tolerance was met before `max_iters`.
    pub converged: bool,
    /// Set when the run was stopped by the divergence guard.
    pub diverged: Option<String>,
}

/// What the loop should do after an iterate was recorded.
pub(crate) enum Step {
    Continue,
    Converged,
    Diverged(String),
}

/// `F_a(xb) = α Rᵀ F(xb) + ((D − W) ⊗ I_n) xb`.
pub fn augmented_map<G: Game + ?Sized>(
    game: &G,
    laplacian: &KroneckerOperator,
    alpha: f64,
    xb: &[f64],
) -> Result<DVector<f64>> {
    let f = extended_pseudo_gradient(game, xb)?;
    let mut out = laplacian.apply(xb);
    let n = game.total_dim();
    let mut off = 0;
    for (i, &d) in game.dims().iter().enumerate() {
        for c in 0..d {
            out[i * n + off + c] += alpha * f[off + c];
        }
        off += d;
    }
    Ok(out)
}

/// Largest violation of `v ∈ N_Ω(xb)` coordinate-wise: estimates are free, so
/// `v` must vanish there; own coordinates need `v ≤ 0` at an active lower
/// bound, `v ≥ 0` at an active upper bound and `v = 0` in the interior.
pub fn normal_cone_violation<G: Game + ?Sized>(game: &G, xb: &ExtendedState, v: &[f64]) -> f64 {
    let n = xb.block_dim();
    let mut worst: f64 = 0.0;
    for (k, &vk) in v.iter().enumerate() {
        let i = k / n;
        let local = k % n;
        let own_off = xb.offsets()[i];
        let viol = if local >= own_off && local < own_off + xb.dims()[i] {
            let c = local - own_off;
            let set = &game.sets()[i];
            let x = xb.as_slice()[k];
            let at_lower = x <= set.lower()[c];
            let at_upper = x >= set.upper()[c];
            match (at_lower, at_upper) {
                (true, true) => 0.0,
                (true, false) => vk.max(0.0),
                (false, true) => (-vk).max(0.0),
                (false, false) => vk.abs(),
            }
        } else {
            vk.abs()
        };
        worst = worst.max(viol);
    }
    worst
}

/// Residual of the preconditioned resolvent step `prev → next`:
/// violation of `−Φ(next − prev) − F_a(next) ∈ N_Ω(next)`.
pub fn resolvent_inclusion_residual<G: Game + ?Sized>(
    game: &G,
    laplacian: &KroneckerOperator,
    phi: &Preconditioner,
    alpha: f64,
    prev: &ExtendedState,
    next: &ExtendedState,
) -> Result<f64> {
    let delta = next.data() - prev.data();
    let v =
        -(phi.apply(delta.as_slice()) + augmented_map(game, laplacian, alpha, next.as_slice())?);
    Ok(normal_cone_violation(game, next, v.as_slice()))
}

/// Shared per-iteration bookkeeping: metrics, stopping and divergence checks.
struct Monitor<'a> {
    phi: &'a Preconditioner,
    reference: Option<DVector<f64>>,
    start: Instant,
    record_time: bool,
    baseline: Option<f64>,
    above: usize,
    trace: RunTrace,
}

/// Consecutive iterations above the divergence threshold before giving up.
const DIVERGENCE_PATIENCE: usize = 50;
const DIVERGENCE_FACTOR: f64 = 10.0;

impl<'a> Monitor<'a> {
    fn new(
        phi: &'a Preconditioner,
        reference: Option<&[f64]>,
        agents: usize,
        record_time: bool,
    ) -> Self {
        Self {
            phi,
            reference: reference.map(|x| lift(x, agents)),
            start: Instant::now(),
            record_time,
            baseline: None,
            above: 0,
            trace: RunTrace::default(),
        }
    }

    fn distances(&self, xb: &ExtendedState) -> (f64, f64) {
        match &self.reference {
            Some(r) => {
                let diff = xb.data() - r;
                (diff.norm(), self.phi.weighted_norm(diff.as_slice()))
            }
            None => (f64::NAN, f64::NAN),
        }
    }

    fn record(&mut self, iter: usize, xb: &ExtendedState, inclusion_residual: f64) -> f64 {
        let (dist_to_ne, dist_phi) = self.distances(xb);
        let wall_time_us = if self.record_time {
            self.start.elapsed().as_micros() as u64
        } else {
            0
        };
        self.trace.records.push(TraceRecord {
            iter,
            dist_to_ne,
            dist_phi,
            consensus_err: xb.consensus_error(),
            inclusion_residual,
            wall_time_us,
        });
        dist_to_ne
    }

    fn step(
        &mut self,
        iter: usize,
        dist: f64,
        displacement: f64,
        config: &SolverConfig,
    ) -> Result<Step> {
        match self.check(iter, dist, displacement, config.stop_tol) {
            Ok(true) => Ok(Step::Converged),
            Ok(false) => Ok(Step::Continue),
            Err(e @ NepError::Divergence { .. }) if !config.fail_on_divergence => {
                Ok(Step::Diverged(e.to_string()))
            }
            Err(e) => Err(e),
        }
    }

    /// Returns `Ok(true)` once the stopping rule fires.
    fn check(&mut self, iter: usize, dist: f64, displacement: f64, stop_tol: f64) -> Result<bool> {
        let metric = if self.reference.is_some() {
            dist
        } else {
            displacement
        };
        if !metric.is_finite() || !displacement.is_finite() {
            return Err(NepError::Divergence {
                iter,
                detail: "non-finite iterate".into(),
            });
        }
        let base = *self.baseline.get_or_insert(metric);
        if base > 0.0 && metric > DIVERGENCE_FACTOR * base {
            self.above += 1;
            if self.above >= DIVERGENCE_PATIENCE {
                return Err(NepError::Divergence {
                    iter,
                    detail: format!(
                        "distance {metric:.3e} stayed above {DIVERGENCE_FACTOR}x its initial value {base:.3e} for {DIVERGENCE_PATIENCE} iterations"
                    ),
                });
            }
        } else {
            self.above = 0;
        }
        Ok(stop_tol > 0.0 && metric <= stop_tol)
    }
}

pub(crate) fn check_inputs<G: Game + ?Sized>(
    game: &G,
    coupling: &Coupling,
    x0: &ExtendedState,
    reference: Option<&[f64]>,
) -> Result<()> {
    if coupling.num_agents() != game.num_agents() {
        return Err(NepError::Dimension {
            what: "agents in the network",
            expected: game.num_agents(),
            got: coupling.num_agents(),
        });
    }
    if x0.dims() != game.dims() {
        return Err(NepError::Input(
            "initial state does not match the game dimensions".into(),
        ));
    }
    if let Some(r) = reference {
        if r.len() != game.total_dim() {
            return Err(NepError::Dimension {
                what: "reference equilibrium",
                expected: game.total_dim(),
                got: r.len(),
            });
        }
    }
    for (i, set) in game.sets().iter().enumerate() {
        if !set.contains(x0.own(i)) {
            return Err(NepError::Input(format!(
                "initial decision of agent {i} lies outside its feasible set"
            )));
        }
    }
    Ok(())
}
