//! Executable checks of the monotonicity and contraction properties behind the
//! convergence guarantee, evaluated on concrete instances and traces.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{NepError, Result};
use crate::game::{game_constants, pseudo_gradient, solve_ne, Game, QuadraticGame};
use crate::network::Coupling;
use crate::solvers::{augmented_map, lift, RunTrace};
use crate::tuning::{compute_alpha_max, restricted_monotonicity_matrix};

/// Margins below this count as violations.
pub const MARGIN_TOL: f64 = -1e-9;

/// Accuracy of the equilibrium used as the reference point of the probes.
const ORACLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotonicitySample {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

impl MonotonicitySample {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            margin: lhs - rhs,
        }
    }
}

fn min_margin(samples: &[MonotonicitySample]) -> f64 {
    samples
        .iter()
        .map(|s| s.margin)
        .fold(f64::INFINITY, f64::min)
}

/// Modulus `ρ` used by the probes: `λ_min(M)` even when `α ≥ α_max`, so the
/// probes can also be run outside the guaranteed range.
fn modulus(game: &QuadraticGame, coupling: &Coupling, alpha: f64) -> Result<(f64, bool)> {
    let c = game_constants(game)?;
    let gap = coupling.spectral_gap()?;
    let alpha_max = compute_alpha_max(c.mu, c.theta0, c.theta, gap.lambda2)?;
    let (a, b, d) = restricted_monotonicity_matrix(
        alpha,
        c.mu,
        c.theta0,
        c.theta,
        gap.lambda2,
        game.num_agents(),
    );
    let mean = 0.5 * (a + d);
    let rho = mean - (0.25 * (a - d) * (a - d) + b * b).sqrt();
    Ok((rho, alpha < alpha_max))
}

fn normal_vec(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| StandardNormal.sample(rng)))
}

/// Samples of `⟨x − y, F_a(x) − F_a(y)⟩ ≥ ρ_α ‖x − y‖²`.
#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityProbe {
    pub samples: usize,
    pub seed: u64,
    pub alpha: f64,
    pub rho_alpha: f64,
    /// Whether `α < α_max`; outside that range nothing is asserted.
    pub within_bound: bool,
    /// Pairs with `y = 1 ⊗ x*` (asserted).
    pub ne_lift: Vec<MonotonicitySample>,
    /// Pairs with `y` a random consensus point (reported only).
    pub consensus: Vec<MonotonicitySample>,
    pub min_ne_margin: f64,
    pub min_consensus_margin: f64,
    /// Largest deviation of the consensus-pair identity
    /// `⟨1⊗(a−b), F_a(1⊗a) − F_a(1⊗b)⟩ = α ⟨a − b, F(a) − F(b)⟩`.
    pub consensus_identity_error: f64,
    pub passed: bool,
}

pub fn probe_restricted_monotonicity(
    game: &QuadraticGame,
    coupling: &Coupling,
    alpha: f64,
    samples: usize,
    seed: u64,
) -> Result<MonotonicityProbe> {
    let (rho, within_bound) = modulus(game, coupling, alpha)?;
    let x_star = solve_ne(game, ORACLE_TOL)?;
    let agents = game.num_agents();
    let n = game.total_dim();
    let laplacian = coupling.laplacian_operator(n);
    let y_ne = lift(x_star.as_slice(), agents);
    let fa_ne = augmented_map(game, &laplacian, alpha, y_ne.as_slice())?;

    // draw everything up front so the result does not depend on scheduling
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> = (0..samples)
        .map(|_| {
            let x = &y_ne + normal_vec(&mut rng, agents * n);
            let x2 = normal_vec(&mut rng, agents * n);
            let a = normal_vec(&mut rng, n);
            let b = normal_vec(&mut rng, n);
            (x, x2, a, b)
        })
        .collect();

    let pair =
        |x: &DVector<f64>, y: &DVector<f64>, fy: &DVector<f64>| -> Result<MonotonicitySample> {
            let fx = augmented_map(game, &laplacian, alpha, x.as_slice())?;
            let diff = x - y;
            Ok(MonotonicitySample::new(
                diff.dot(&(fx - fy)),
                rho * diff.norm_squared(),
            ))
        };

    let results: Vec<(MonotonicitySample, MonotonicitySample, f64)> = draws
        .par_iter()
        .map(|(x, x2, a, b)| {
            let ne = pair(x, &y_ne, &fa_ne)?;
            let y_c = lift(b.as_slice(), agents);
            let fy_c = augmented_map(game, &laplacian, alpha, y_c.as_slice())?;
            let cons = pair(x2, &y_c, &fy_c)?;

            let xa = lift(a.as_slice(), agents);
            let lhs = pair(&xa, &y_c, &fy_c)?.lhs;
            let fa = pseudo_gradient(game, a.as_slice())?;
            let fb = pseudo_gradient(game, b.as_slice())?;
            let rhs = alpha * (a - b).dot(&(fa - fb));
            let scale = 1.0 + lhs.abs();
            Ok((ne, cons, (lhs - rhs).abs() / scale))
        })
        .collect::<Result<_>>()?;

    let ne_lift: Vec<_> = results.iter().map(|r| r.0).collect();
    let consensus: Vec<_> = results.iter().map(|r| r.1).collect();
    let consensus_identity_error = results.iter().map(|r| r.2).fold(0.0, f64::max);
    let min_ne_margin = min_margin(&ne_lift);
    let min_consensus_margin = min_margin(&consensus);
    Ok(MonotonicityProbe {
        samples,
        seed,
        alpha,
        rho_alpha: rho,
        within_bound,
        passed: !within_bound || min_ne_margin >= MARGIN_TOL,
        ne_lift,
        consensus,
        min_ne_margin,
        min_consensus_margin,
        consensus_identity_error,
    })
}

/// Samples of `⟨u − v, x − y⟩_Φ ≥ (ρ_α/‖Φ‖) ‖x − y‖²_Φ` for
/// `u ∈ Φ⁻¹A(x)`, `y = 1 ⊗ x*`, `v = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct PhiProbe {
    pub samples: usize,
    pub seed: u64,
    pub alpha: f64,
    pub modulus: f64,
    pub within_bound: bool,
    pub results: Vec<MonotonicitySample>,
    /// Samples with at least one active bound (nonzero normal-cone element).
    pub active_samples: usize,
    pub min_margin: f64,
    pub passed: bool,
}

/// Builds one point of `gra(Φ⁻¹A)`: a feasible `x` and `Φ (u)` where
/// `u = Φ⁻¹(F_a(x) + n)`, with `n` a normal-cone element at `x`.
fn phi_sample<G: Game + ?Sized>(
    game: &G,
    y: &DVector<f64>,
    rng: &mut ChaCha8Rng,
) -> (DVector<f64>, DVector<f64>, bool) {
    let agents = game.num_agents();
    let n = game.total_dim();
    let mut x = y + normal_vec(rng, agents * n);
    let mut normal = DVector::zeros(agents * n);
    let mut active = false;
    let mut off = 0;
    for (i, set) in game.sets().iter().enumerate() {
        for c in 0..game.dims()[i] {
            let k = i * n + off + c;
            let (lo, hi) = (set.lower()[c], set.upper()[c]);
            if lo.is_finite() && hi.is_finite() {
                let u: f64 = rng.random();
                let spike: f64 = StandardNormal.sample(rng);
                if u < 0.25 {
                    x[k] = lo;
                    normal[k] = -spike.abs();
                    active = true;
                } else if u < 0.5 {
                    x[k] = hi;
                    normal[k] = spike.abs();
                    active = true;
                } else {
                    x[k] = lo + (hi - lo) * rng.random::<f64>();
                }
            } else {
                x[k] = set.clamp_coord(c, x[k]);
                if x[k] == lo {
                    normal[k] = -f64::abs(StandardNormal.sample(rng));
                    active = true;
                } else if x[k] == hi {
                    normal[k] = f64::abs(StandardNormal.sample(rng));
                    active = true;
                }
            }
        }
        off += game.dims()[i];
    }
    (x, normal, active)
}

pub fn probe_phi_monotonicity(
    game: &QuadraticGame,
    coupling: &Coupling,
    alpha: f64,
    samples: usize,
    seed: u64,
) -> Result<PhiProbe> {
    let (rho, within_bound) = modulus(game, coupling, alpha)?;
    let x_star = solve_ne(game, ORACLE_TOL)?;
    let agents = game.num_agents();
    let n = game.total_dim();
    let laplacian = coupling.laplacian_operator(n);
    let phi = coupling.preconditioner(n)?;
    let modulus = rho / phi.norm();
    let y = lift(x_star.as_slice(), agents);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<_> = (0..samples)
        .map(|_| phi_sample(game, &y, &mut rng))
        .collect();

    let results: Vec<MonotonicitySample> = draws
        .par_iter()
        .map(|(x, normal, _)| {
            let u = phi
                .solve((augmented_map(game, &laplacian, alpha, x.as_slice())? + normal).as_slice());
            let diff = x - &y;
            let lhs = phi.apply(u.as_slice()).dot(&diff);
            let d_phi = phi.weighted_norm(diff.as_slice());
            Ok(MonotonicitySample::new(lhs, modulus * d_phi * d_phi))
        })
        .collect::<Result<_>>()?;
    let min_m = min_margin(&results);
    Ok(PhiProbe {
        samples,
        seed,
        alpha,
        modulus,
        within_bound,
        active_samples: draws.iter().filter(|d| d.2).count(),
        passed: !within_bound || min_m >= MARGIN_TOL,
        results,
        min_margin: min_m,
    })
}

/// Per-step and cumulative contraction of the Φ-distance column of a trace.
#[derive(Debug, Clone, Serialize)]
pub struct ContractionReport {
    pub rate: f64,
    pub steps_checked: usize,
    /// Iterations `k + 1` where `d_{k+1} > rate · d_k + 1e-9`.
    pub step_violations: Vec<usize>,
    /// Iterations `k` where `d_k > rate^k d_0 (1 + 1e-7)`.
    pub envelope_violations: Vec<usize>,
    /// Largest observed `d_{k+1} / d_k` over steps with `d_k > 1e-12`.
    pub max_ratio: f64,
    pub passed: bool,
}

pub const STEP_ABS_TOL: f64 = 1e-9;
pub const ENVELOPE_REL_TOL: f64 = 1e-7;

pub fn probe_contraction(trace: &RunTrace, rate: f64) -> ContractionReport {
    let d = trace.dist_phi();
    let mut step_violations = Vec::new();
    let mut envelope_violations = Vec::new();
    let mut max_ratio: f64 = 0.0;
    let d0 = d.first().copied().unwrap_or(0.0);
    let mut bound = d0;
    for k in 0..d.len() {
        if d[k] > bound * (1.0 + ENVELOPE_REL_TOL) {
            envelope_violations.push(k);
        }
        bound *= rate;
        if k + 1 < d.len() {
            if d[k + 1] > rate * d[k] + STEP_ABS_TOL {
                step_violations.push(k + 1);
            }
            if d[k] > 1e-12 {
                max_ratio = max_ratio.max(d[k + 1] / d[k]);
            }
        }
    }
    let steps_checked = d.len().saturating_sub(1);
    ContractionReport {
        rate,
        steps_checked,
        passed: step_violations.is_empty()
            && envelope_violations.is_empty()
            && d.iter().all(|v| v.is_finite()),
        step_violations,
        envelope_violations,
        max_ratio,
    }
}

/// Euclidean form of the guarantee:
/// `‖xb^k − xb*‖ ≤ constant · rate^k · ‖xb^0 − xb*‖`. Returns violating iterations.
pub fn check_euclidean_envelope(trace: &RunTrace, rate: f64, constant: f64) -> Vec<usize> {
    let d = trace.dist_to_ne();
    let d0 = d.first().copied().unwrap_or(0.0);
    let mut out = Vec::new();
    let mut bound = constant * d0;
    for (k, v) in d.iter().enumerate() {
        if *v > bound * (1.0 + ENVELOPE_REL_TOL) {
            out.push(k);
        }
        bound *= rate;
    }
    out
}

/// Combined output of the `check` command.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub restricted: MonotonicityProbe,
    pub phi: PhiProbe,
    pub passed: bool,
}

pub fn run_checks(
    game: &QuadraticGame,
    coupling: &Coupling,
    alpha: f64,
    samples: usize,
    seed: u64,
) -> Result<CheckReport> {
    if coupling.num_agents() != game.num_agents() {
        return Err(NepError::Dimension {
            what: "agents in the network",
            expected: game.num_agents(),
            got: coupling.num_agents(),
        });
    }
    let restricted = probe_restricted_monotonicity(game, coupling, alpha, samples, seed)?;
    let phi = probe_phi_monotonicity(game, coupling, alpha, samples, seed.wrapping_add(1))?;
    Ok(CheckReport {
        passed: restricted.passed && phi.passed,
        restricted,
        phi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::TraceRecord;

    fn trace_of(d: &[f64]) -> RunTrace {
        RunTrace {
            records: d
                .iter()
                .enumerate()
                .map(|(k, v)| TraceRecord {
                    iter: k,
                    dist_to_ne: *v,
                    dist_phi: *v,
                    consensus_err: 0.0,
                    inclusion_residual: 0.0,
                    wall_time_us: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn stationary_trace_passes() {
        let r = probe_contraction(&trace_of(&[0.0; 10]), 0.5);
        assert!(r.passed);
        assert_eq!(r.max_ratio, 0.0);
    }

    #[test]
    fn geometric_trace_passes_and_slow_one_fails() {
        let good: Vec<f64> = (0..30).map(|k| 0.5f64.powi(k)).collect();
        assert!(probe_contraction(&trace_of(&good), 0.5).passed);
        let slow: Vec<f64> = (0..30).map(|k| 0.9f64.powi(k)).collect();
        let r = probe_contraction(&trace_of(&slow), 0.5);
        assert!(!r.passed);
        assert_eq!(r.step_violations[0], 1);
        assert!((r.max_ratio - 0.9).abs() < 1e-12);
    }

    #[test]
    fn euclidean_envelope_uses_constant() {
        let d = [1.0, 1.2, 0.5];
        assert!(check_euclidean_envelope(&trace_of(&d), 0.9, 1.0).contains(&1));
        assert!(check_euclidean_envelope(&trace_of(&d), 0.9, 1.5).is_empty());
    }
}
