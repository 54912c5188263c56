//! The conjugate of the control cost plus box indicator: a three-branch C^1
//! piecewise quadratic. It is the only place the control bounds enter the
//! dual problem.

use crate::error::{Error, Result};

/// Parameters of one node's conjugate: `R > 0`, linear term `r`, and bounds
/// (either may be infinite).
#[derive(Debug, Clone, Copy)]
pub struct PsiParams {
    pub r_quad: f64,
    pub r_lin: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl PsiParams {
    pub fn new(r_quad: f64, r_lin: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !(r_quad > 0.0) {
            return Err(Error::InvalidProblem(format!("psi needs R > 0 (got {r_quad})")));
        }
        if alpha > beta {
            return Err(Error::InfeasibleBoxes { node: 0, alpha, beta });
        }
        Ok(PsiParams { r_quad, r_lin, alpha, beta })
    }
}

/// `psi(v) = sup_{alpha <= u <= beta} (v - r) u - R/2 u^2`, evaluated by
/// branch: quadratic where the unconstrained maximizer is admissible, linear
/// continuation beyond either bound.
pub fn psi_eval(v: f64, p: &PsiParams) -> f64 {
    let w = (v - p.r_lin) / p.r_quad;
    if w < p.alpha {
        -0.5 * p.r_quad * p.alpha * p.alpha + (v - p.r_lin) * p.alpha
    } else if w > p.beta {
        -0.5 * p.r_quad * p.beta * p.beta + (v - p.r_lin) * p.beta
    } else {
        (v - p.r_lin) * (v - p.r_lin) / (2.0 * p.r_quad)
    }
}

/// Derivative of all three branches: the projected maximizer
/// `Pr_{[alpha,beta]}((v - r)/R)`, which is also the recovered control.
pub fn psi_deriv(v: f64, p: &PsiParams) -> f64 {
    ((v - p.r_lin) / p.r_quad).max(p.alpha).min(p.beta)
}

/// Generalized second derivative; at the breakpoints the interior-branch
/// value `1/R` is used.
pub fn psi_second(v: f64, p: &PsiParams) -> f64 {
    let w = (v - p.r_lin) / p.r_quad;
    if w < p.alpha || w > p.beta {
        0.0
    } else {
        1.0 / p.r_quad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(alpha: f64, beta: f64) -> PsiParams {
        PsiParams::new(1.0, 0.0, alpha, beta).unwrap()
    }

    #[test]
    fn branch_values() {
        let p = unit(-1.0, 1.0);
        assert!((psi_eval(0.5, &p) - 0.125).abs() < 1e-15);
        assert!((psi_eval(2.0, &p) - 1.5).abs() < 1e-15);
        // Breakpoint: interior and upper branch agree at w = beta.
        assert!((psi_eval(1.0, &p) - 0.5).abs() < 1e-15);
        let upper_branch: f64 = -0.5 * 1.0 + 1.0 * 1.0;
        assert!((upper_branch - 0.5).abs() < 1e-15);
    }

    #[test]
    fn derivative_is_projection() {
        let p = PsiParams::new(2.0, 1.0, -1.0, 1.0).unwrap();
        assert!((psi_deriv(2.0, &p) - 0.5).abs() < 1e-15);
        assert!((psi_deriv(10.0, &p) - 1.0).abs() < 1e-15);
        assert!((psi_deriv(-10.0, &p) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn unbounded_sides_degenerate_to_the_quadratic() {
        let p = PsiParams::new(3.0, -0.5, f64::NEG_INFINITY, f64::INFINITY).unwrap();
        for v in [-7.0, 0.0, 4.25] {
            assert!((psi_eval(v, &p) - (v + 0.5) * (v + 0.5) / 6.0).abs() < 1e-12);
            assert!((psi_deriv(v, &p) - (v + 0.5) / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_matches_finite_differences_away_from_breakpoints() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let fd_h = 1e-6;
        for _ in 0..100 {
            let r_quad = rng.gen_range(0.1..5.0);
            let r_lin = rng.gen_range(-2.0..2.0);
            let alpha = rng.gen_range(-3.0..0.0);
            let beta = alpha + rng.gen_range(0.5..4.0);
            let p = PsiParams::new(r_quad, r_lin, alpha, beta).unwrap();
            let v = rng.gen_range(-10.0..10.0);
            let w = (v - r_lin) / r_quad;
            if (w - alpha).abs() < 1e-3 || (w - beta).abs() < 1e-3 {
                continue;
            }
            let fd = (psi_eval(v + fd_h, &p) - psi_eval(v - fd_h, &p)) / (2.0 * fd_h);
            assert!((fd - psi_deriv(v, &p)).abs() < 1e-6);
        }
    }

    proptest! {
        /// Value and derivative continuity at both breakpoints, and convexity
        /// via nonnegative second differences.
        #[test]
        fn c1_at_breakpoints_and_convex(
            r_quad in 0.05f64..10.0,
            r_lin in -5.0f64..5.0,
            alpha in -5.0f64..0.0,
            width in 0.1f64..8.0,
            probe in -10.0f64..10.0,
        ) {
            let beta = alpha + width;
            let p = PsiParams::new(r_quad, r_lin, alpha, beta).unwrap();
            let eps = 1e-5;
            for bp in [alpha, beta] {
                // v such that (v - r)/R sits exactly at the breakpoint. A
                // value jump would make the second difference O(1); a kink
                // would make it O(eps); C^1 leaves at most eps^2 / R.
                let v = bp * r_quad + r_lin;
                let second = psi_eval(v - eps, &p) + psi_eval(v + eps, &p) - 2.0 * psi_eval(v, &p);
                prop_assert!(second.abs() <= eps * eps / r_quad + 1e-11);
                // One-sided derivatives approach the common value at the rate
                // the interior curvature allows.
                let d_below = psi_deriv(v - eps, &p);
                let d_above = psi_deriv(v + eps, &p);
                let d_at = psi_deriv(v, &p);
                prop_assert!((d_below - d_at).abs() <= eps / r_quad + 1e-12);
                prop_assert!((d_above - d_at).abs() <= eps / r_quad + 1e-12);
            }
            // Convexity: second difference nonnegative anywhere.
            let d = 1e-3;
            let second = psi_eval(probe - d, &p) + psi_eval(probe + d, &p) - 2.0 * psi_eval(probe, &p);
            prop_assert!(second >= -1e-12);
            // The derivative is a projection, hence within the bounds.
            let pd = psi_deriv(probe, &p);
            prop_assert!(pd >= alpha - 1e-12 && pd <= beta + 1e-12);
        }
    }
}
