//! Step-size bound, restricted monotonicity modulus and theoretical rates.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{NepError, Result};
use crate::game::{game_constants, spectral_norm, Game, QuadraticGame};
use crate::network::Coupling;

/// Fraction of `α_max` used when no step is given.
pub const DEFAULT_ALPHA_FRACTION: f64 = 0.99;

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(NepError::Input(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// `α_max = 4 μ λ₂ / ((θ₀ + θ)² + 4 μ θ)`.
pub fn compute_alpha_max(mu: f64, theta0: f64, theta: f64, lambda2: f64) -> Result<f64> {
    require_positive("mu", mu)?;
    require_positive("theta0", theta0)?;
    require_positive("theta", theta)?;
    require_positive("lambda2", lambda2)?;
    let s = theta0 + theta;
    Ok(4.0 * mu * lambda2 / (s * s + 4.0 * mu * theta))
}

/// The symmetric 2×2 matrix whose smallest eigenvalue is the restricted
/// strong monotonicity modulus, returned as `(m11, m12, m22)`.
pub fn restricted_monotonicity_matrix(
    alpha: f64,
    mu: f64,
    theta0: f64,
    theta: f64,
    lambda2: f64,
    n_agents: usize,
) -> (f64, f64, f64) {
    let n = n_agents as f64;
    let m11 = alpha * mu / n;
    let m12 = -alpha * (theta0 + theta) / (2.0 * n.sqrt());
    let m22 = alpha * (lambda2 / alpha - theta);
    (m11, m12, m22)
}

/// Smaller eigenvalue of a symmetric 2×2 matrix.
fn min_eig_2x2(a: f64, b: f64, c: f64) -> f64 {
    let mean = 0.5 * (a + c);
    let radius = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let hi = mean + radius;
    let det = a * c - b * b;
    // det / λ_max avoids cancellation when the two eigenvalues differ in scale
    if hi > 0.0 && det > 0.0 {
        det / hi
    } else {
        mean - radius
    }
}

/// `ρ_α`, valid for `0 < α < α_max`.
pub fn compute_rho(
    alpha: f64,
    mu: f64,
    theta0: f64,
    theta: f64,
    lambda2: f64,
    n_agents: usize,
) -> Result<f64> {
    require_positive("alpha", alpha)?;
    if n_agents == 0 {
        return Err(NepError::Input("need at least one agent".into()));
    }
    let alpha_max = compute_alpha_max(mu, theta0, theta, lambda2)?;
    if alpha >= alpha_max {
        return Err(NepError::StepTooLarge { alpha, alpha_max });
    }
    let (a, b, c) = restricted_monotonicity_matrix(alpha, mu, theta0, theta, lambda2, n_agents);
    let rho = min_eig_2x2(a, b, c);
    if !(rho > 0.0) {
        return Err(NepError::Consistency(format!(
            "restricted monotonicity modulus {rho:.3e} is not positive for alpha {alpha:.3e} < alpha_max {alpha_max:.3e}"
        )));
    }
    Ok(rho)
}

/// Squared-norm rate of the preconditioned proximal-point iteration.
pub fn ppp_rate(mu_fa: f64, phi_norm: f64) -> f64 {
    let r = 1.0 / (1.0 + mu_fa / phi_norm);
    r * r
}

/// Expanded form of [`ppp_rate`] for `‖Φ‖ = 2`.
pub fn ppp_rate_expanded(mu_fa: f64) -> f64 {
    let t = 1.0 + 2.0 / mu_fa;
    1.0 + 1.0 / (t * t) - 2.0 / t
}

/// Upper bound `1 − 1/(1 + 2/μ)` on [`ppp_rate_expanded`].
pub fn ppp_rate_upper_bound(mu_fa: f64) -> f64 {
    1.0 - 1.0 / (1.0 + 2.0 / mu_fa)
}

/// `1 − μ²/θ²` for the restricted-monotone projected gradient scheme.
pub fn grane_rate(mu_fa: f64, theta_fa: f64) -> f64 {
    1.0 - 1.0 / (theta_fa * theta_fa / (mu_fa * mu_fa))
}

/// `1 − 1/(1 + θ/μ̄)`; only defined when the augmented map is strongly monotone.
pub fn acc_grane_rate(mu_bar_fa: f64, theta_fa: f64) -> Option<f64> {
    (mu_bar_fa > 0.0).then(|| 1.0 - 1.0 / (1.0 + theta_fa / mu_bar_fa))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rates {
    pub ppp: f64,
    pub grane: f64,
    /// `None` when the augmented map is not strongly monotone.
    pub acc_grane: Option<f64>,
}

/// The three per-iteration squared-norm contraction factors.
pub fn theoretical_rates(mu_fa: f64, phi_norm: f64, theta_fa: f64, mu_bar_fa: f64) -> Rates {
    Rates {
        ppp: ppp_rate(mu_fa, phi_norm),
        grane: grane_rate(mu_fa, theta_fa),
        acc_grane: acc_grane_rate(mu_bar_fa, theta_fa),
    }
}

/// Constant Jacobian of `F_a(x) = α Rᵀ F(x) + ((D − W) ⊗ I_n) x` for a quadratic game.
pub fn augmented_jacobian(game: &QuadraticGame, coupling: &Coupling, alpha: f64) -> DMatrix<f64> {
    let n = game.total_dim();
    let agents = game.num_agents();
    let mut jac = coupling.laplacian_operator(n).dense();
    let ext = game.extended_jacobian();
    for i in 0..agents {
        let (o, d) = (game.offsets()[i], game.dims()[i]);
        for r in 0..d {
            for c in 0..agents * n {
                jac[(i * n + o + r, c)] += alpha * ext[(o + r, c)];
            }
        }
    }
    jac
}

/// Lipschitz constant and (global) strong monotonicity modulus of `F_a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AugmentedConstants {
    pub theta_fa: f64,
    /// May be nonpositive: `F_a` is in general only restricted monotone.
    pub mu_bar_fa: f64,
}

pub fn augmented_constants(
    game: &QuadraticGame,
    coupling: &Coupling,
    alpha: f64,
) -> AugmentedConstants {
    let jac = augmented_jacobian(game, coupling, alpha);
    let sym = (&jac + jac.transpose()) * 0.5;
    AugmentedConstants {
        theta_fa: spectral_norm(&jac),
        mu_bar_fa: SymmetricEigen::new(sym).eigenvalues.min(),
    }
}

/// All constants needed to pick a step and compare guaranteed rates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningReport {
    pub n_agents: usize,
    pub mu: f64,
    pub theta0: f64,
    pub theta: f64,
    pub lambda2: f64,
    pub lambda_max_laplacian: f64,
    pub alpha_max: f64,
    pub alpha: f64,
    pub rho_alpha: f64,
    pub phi_norm: f64,
    pub lambda_min_phi: f64,
    pub theta_fa: f64,
    pub mu_bar_fa: f64,
    pub rate_ppp: f64,
    pub rate_grane: f64,
    pub rate_acc_grane: Option<f64>,
    /// Theory step `ρ_α / θ_Fa²` of the augmented gradient baseline.
    pub agp_step: f64,
    /// Lipschitz constant `α θ` of the scaled extended pseudo-gradient.
    pub alpha_f_lipschitz: f64,
    /// `λ_max(L) + λ₂(L)/2` and `λ_max(L) − λ₂(L)/2`, reported next to `θ_Fa`.
    pub theta_fa_upper_estimate: f64,
    pub theta_fa_lower_estimate: f64,
}

impl TuningReport {
    /// Builds the report; `alpha = None` selects `0.99 α_max`.
    pub fn new(game: &QuadraticGame, coupling: &Coupling, alpha: Option<f64>) -> Result<Self> {
        if coupling.num_agents() != game.num_agents() {
            return Err(NepError::Dimension {
                what: "agents in the network",
                expected: game.num_agents(),
                got: coupling.num_agents(),
            });
        }
        let consts = game_constants(game)?;
        let gap = coupling.spectral_gap()?;
        let alpha_max = compute_alpha_max(consts.mu, consts.theta0, consts.theta, gap.lambda2)?;
        let alpha = alpha.unwrap_or(DEFAULT_ALPHA_FRACTION * alpha_max);
        let n_agents = game.num_agents();
        let rho_alpha = compute_rho(
            alpha,
            consts.mu,
            consts.theta0,
            consts.theta,
            gap.lambda2,
            n_agents,
        )?;
        let phi = coupling.preconditioner(game.total_dim())?;
        let aug = augmented_constants(game, coupling, alpha);
        let rates = theoretical_rates(rho_alpha, phi.norm(), aug.theta_fa, aug.mu_bar_fa);
        Ok(Self {
            n_agents,
            mu: consts.mu,
            theta0: consts.theta0,
            theta: consts.theta,
            lambda2: gap.lambda2,
            lambda_max_laplacian: gap.lambda_max,
            alpha_max,
            alpha,
            rho_alpha,
            phi_norm: phi.norm(),
            lambda_min_phi: phi.lambda_min(),
            theta_fa: aug.theta_fa,
            mu_bar_fa: aug.mu_bar_fa,
            rate_ppp: rates.ppp,
            rate_grane: rates.grane,
            rate_acc_grane: rates.acc_grane,
            agp_step: rho_alpha / (aug.theta_fa * aug.theta_fa),
            alpha_f_lipschitz: alpha * consts.theta,
            theta_fa_upper_estimate: gap.lambda_max + gap.lambda2 / 2.0,
            theta_fa_lower_estimate: gap.lambda_max - gap.lambda2 / 2.0,
        })
    }

    /// Per-iteration contraction factor of the Φ-norm distance.
    pub fn phi_contraction(&self) -> f64 {
        1.0 / (1.0 + self.rho_alpha / self.phi_norm)
    }

    /// `√(‖Φ‖ / λ_min(Φ))`, the constant of the Euclidean envelope.
    pub fn envelope_constant(&self) -> f64 {
        (self.phi_norm / self.lambda_min_phi).sqrt()
    }
}

impl fmt::Display for TuningReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: [(&str, String); 20] = [
            ("agents", self.n_agents.to_string()),
            ("mu", format!("{:.6e}", self.mu)),
            ("theta0", format!("{:.6e}", self.theta0)),
            ("theta", format!("{:.6e}", self.theta)),
            ("lambda2(L)", format!("{:.6e}", self.lambda2)),
            (
                "lambda_max(L)",
                format!("{:.6e}", self.lambda_max_laplacian),
            ),
            ("alpha_max", format!("{:.6e}", self.alpha_max)),
            ("alpha", format!("{:.6e}", self.alpha)),
            ("rho_alpha", format!("{:.6e}", self.rho_alpha)),
            ("||Phi||", format!("{:.6e}", self.phi_norm)),
            ("lambda_min(Phi)", format!("{:.6e}", self.lambda_min_phi)),
            ("theta_Fa", format!("{:.6e}", self.theta_fa)),
            ("mu_bar_Fa", format!("{:.6e}", self.mu_bar_fa)),
            ("rate PPP", format!("{:.12}", self.rate_ppp)),
            ("rate GRANE", format!("{:.12}", self.rate_grane)),
            (
                "rate acc-GRANE",
                self.rate_acc_grane.map_or_else(
                    || "n/a (F_a not strongly monotone)".to_string(),
                    |r| format!("{r:.12}"),
                ),
            ),
            ("agp step", format!("{:.6e}", self.agp_step)),
            ("alpha*theta", format!("{:.6e}", self.alpha_f_lipschitz)),
            (
                "theta_Fa upper est.",
                format!("{:.6e}", self.theta_fa_upper_estimate),
            ),
            (
                "theta_Fa lower est.",
                format!("{:.6e}", self.theta_fa_lower_estimate),
            ),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in rows {
            writeln!(f, "{k:<width$}  {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::BoxSet;
    use crate::network::{metropolis_weights, Graph};
    use nalgebra::DVector;

    #[test]
    fn alpha_max_at_units() {
        assert_eq!(compute_alpha_max(1.0, 1.0, 1.0, 1.0).unwrap(), 0.5);
    }

    #[test]
    fn alpha_max_rejects_nonpositive() {
        assert!(compute_alpha_max(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(compute_alpha_max(1.0, 1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn alpha_max_increases_with_mu() {
        for &theta in &[0.5, 1.0, 3.0] {
            for &lambda2 in &[0.1, 1.0, 2.0] {
                let mut mu = 0.01;
                while mu < theta {
                    let a = compute_alpha_max(mu, theta * 1.5, theta, lambda2).unwrap();
                    let b = compute_alpha_max(2.0 * mu, theta * 1.5, theta, lambda2).unwrap();
                    assert!(b > a);
                    mu *= 1.7;
                }
            }
        }
    }

    #[test]
    fn rho_hand_solved_case() {
        let rho = compute_rho(0.25, 1.0, 1.0, 1.0, 2.0, 1).unwrap();
        let expected = 0.25 * (4.0 - 10f64.sqrt());
        assert!((rho - expected).abs() < 1e-12);
    }

    #[test]
    fn rho_vanishes_with_alpha() {
        assert!(compute_rho(1e-9, 1.0, 1.0, 1.0, 1.0, 3).unwrap() < 1e-8);
    }

    #[test]
    fn rho_rejects_large_alpha() {
        assert!(matches!(
            compute_rho(0.5, 1.0, 1.0, 1.0, 1.0, 1),
            Err(NepError::StepTooLarge { .. })
        ));
    }

    #[test]
    fn near_boundary_matrix_is_positive_definite() {
        let (mu, t0, t, l2, n) = (0.3, 2.0, 1.5, 0.7, 4);
        let amax = compute_alpha_max(mu, t0, t, l2).unwrap();
        for frac in [0.9, 0.99, 0.999, 0.999_999] {
            let (a, b, c) = restricted_monotonicity_matrix(frac * amax, mu, t0, t, l2, n);
            assert!(a * c - b * b > 0.0);
            assert!(a + c > 0.0);
        }
    }

    #[test]
    fn ppp_rate_unit_ratio() {
        assert_eq!(ppp_rate(2.0, 2.0), 0.25);
    }

    #[test]
    fn acc_grane_not_applicable() {
        assert!(acc_grane_rate(-0.1, 2.0).is_none());
        assert!(acc_grane_rate(0.0, 2.0).is_none());
    }

    #[test]
    fn augmented_jacobian_matches_finite_map() {
        let g = Graph::path(3).unwrap();
        let w = metropolis_weights(&g).unwrap();
        let coupling = Coupling::doubly_stochastic(&w);
        let game = QuadraticGame::from_cost(
            vec![1, 2, 1],
            DMatrix::from_fn(4, 4, |r, c| {
                if r == c {
                    2.0
                } else {
                    0.1 * (r + 2 * c) as f64
                }
            })
            .map_with_location(|r, c, v| {
                if (r == 1 || r == 2) && (c == 1 || c == 2) && r != c {
                    0.3
                } else {
                    v
                }
            }),
            DVector::from_vec(vec![0.5, -1.0, 0.2, 0.0]),
            vec![
                BoxSet::unbounded(1),
                BoxSet::unbounded(2),
                BoxSet::unbounded(1),
            ],
        )
        .unwrap();
        let alpha = 0.05;
        let jac = augmented_jacobian(&game, &coupling, alpha);
        let x = DVector::from_fn(12, |i, _| (i as f64 * 0.37).sin());
        let fa = crate::solvers::augmented_map(
            &game,
            &coupling.laplacian_operator(4),
            alpha,
            x.as_slice(),
        )
        .unwrap();
        let fa0 = crate::solvers::augmented_map(
            &game,
            &coupling.laplacian_operator(4),
            alpha,
            &[0.0; 12],
        )
        .unwrap();
        assert!((&jac * &x - (fa - fa0)).amax() < 1e-13);
    }
}
