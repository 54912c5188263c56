//! Second-order expansion of the nonlinear problem around a nominal
//! trajectory, producing an LQ subproblem in absolute variables.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lq::LqProblem;
use crate::problem::NlpProblem;
use crate::trajectory::Trajectory;

/// Expands cost and dynamics around `nominal`. Coefficients are frozen at
/// nodes and treated as constant per interval, matching the control
/// transcription.
pub fn build_subproblem(problem: &NlpProblem, nominal: &Trajectory) -> Result<LqProblem> {
    if nominal.state_dim() != problem.state_dim() {
        return Err(Error::DimensionMismatch(
            "nominal trajectory does not conform to problem dimensions".into(),
        ));
    }
    let grid = nominal.grid;
    let nodes = grid.n_nodes();
    let h = grid.h_step();

    let mut w = Vec::with_capacity(nodes);
    let mut omega = Vec::with_capacity(nodes);
    let mut r_quad = Vec::with_capacity(nodes);
    let mut r_lin = Vec::with_capacity(nodes);
    let mut a = Vec::with_capacity(nodes);
    let mut b = Vec::with_capacity(nodes);
    let mut c = Vec::with_capacity(nodes);
    let mut alpha = Vec::with_capacity(nodes);
    let mut beta = Vec::with_capacity(nodes);
    let mut offset = 0.0;

    for i in 0..nodes {
        let x_bar = nominal.state(i);
        let u_bar = nominal.controls[i];
        let t = grid.node_time(i);

        let hess = symmetrized_hessian(problem, &x_bar, i)?;
        let grad = (problem.f_grad)(&x_bar);
        let g2 = (problem.g_d2)(u_bar);
        if !(g2 > 0.0) {
            return Err(Error::StrongConvexityViolated { node: i, value: g2 });
        }
        let g1 = (problem.g_d1)(u_bar);

        let jac_x = (problem.h_jac_x)(&x_bar, u_bar);
        let jac_u = (problem.h_jac_u)(&x_bar, u_bar);
        let drift = (problem.h_eval)(&x_bar, u_bar) - &jac_x * &x_bar - &jac_u * u_bar;

        let omega_i = &grad - &hess * &x_bar;
        let r_lin_i = g1 - g2 * u_bar;

        // Constants of the quadratic model, integrated with the same
        // rectangle rule as the running cost (the last node carries none).
        if i < grid.n_intervals() {
            let f_val = (problem.f_eval)(&x_bar);
            let g_val = (problem.g_eval)(u_bar);
            let const_f = f_val - grad.dot(&x_bar) + 0.5 * (&hess * &x_bar).dot(&x_bar);
            let const_g = g_val - g1 * u_bar + 0.5 * g2 * u_bar * u_bar;
            offset += (const_f + const_g) * h;
        }

        for (what, bad) in [
            ("W", hess.iter().any(|v| !v.is_finite())),
            ("omega", omega_i.iter().any(|v| !v.is_finite())),
            ("R", !g2.is_finite()),
            ("r", !r_lin_i.is_finite()),
            ("A", jac_x.iter().any(|v| !v.is_finite())),
            ("B", jac_u.iter().any(|v| !v.is_finite())),
            ("c", drift.iter().any(|v| !v.is_finite())),
        ] {
            if bad {
                return Err(Error::NonFiniteCoefficient { node: i, what: what.into() });
            }
        }

        w.push(hess);
        omega.push(omega_i);
        r_quad.push(g2);
        r_lin.push(r_lin_i);
        a.push(jac_x);
        b.push(jac_u);
        c.push(drift);
        alpha.push((problem.alpha)(t));
        beta.push((problem.beta)(t));
    }

    Ok(LqProblem {
        grid,
        w,
        omega,
        r_quad,
        r_lin,
        a,
        b,
        c,
        alpha,
        beta,
        x0: problem.x0().clone(),
        e: problem.terminal_matrix().clone(),
        e_f: problem.terminal_value().clone(),
        objective_offset: offset,
    })
}

fn symmetrized_hessian(problem: &NlpProblem, x: &DVector<f64>, node: usize) -> Result<DMatrix<f64>> {
    let raw = (problem.f_hess)(x);
    let scale = raw.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let asym = (&raw - raw.transpose()).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if asym > 1e-8 * scale {
        return Err(Error::InvalidProblem(format!(
            "f_hess asymmetry {asym:.3e} exceeds tolerance at node {node}"
        )));
    }
    Ok((&raw + raw.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::lq::lq_objective;
    use crate::problem::{nlp_objective, rollout};

    fn quartic_control_problem(grid: TimeGrid) -> NlpProblem {
        // f = 1/2 (x1^2 + x2^2), g = 1/2 (u^4 + u^2), van der Pol dynamics.
        NlpProblem::builder(2, grid)
            .state_cost(
                |x| 0.5 * (x[0] * x[0] + x[1] * x[1]),
                |x| x.clone(),
                |x| DMatrix::identity(x.len(), x.len()),
            )
            .control_cost(
                |u| 0.5 * (u.powi(4) + u * u),
                |u| 2.0 * u.powi(3) + u,
                |u| 6.0 * u * u + 1.0,
            )
            .dynamics(
                |x, u| DVector::from_vec(vec![x[1], (1.0 - x[0] * x[0]) * x[1] - x[0] + u]),
                |x, _| {
                    DMatrix::from_row_slice(
                        2,
                        2,
                        &[0.0, 1.0, -2.0 * x[0] * x[1] - 1.0, 1.0 - x[0] * x[0]],
                    )
                },
                |_, _| DVector::from_vec(vec![0.0, 1.0]),
            )
            .initial_state(DVector::from_vec(vec![1.0, 0.0]))
            .constant_bounds(-0.25, 1.0)
            .build()
            .unwrap()
    }

    #[test]
    fn quartic_control_expansion_at_one() {
        // g = 1/2 (u^4 + u^2) at u = 1: g'' = 7, r = g' - g'' u = 3 - 7.
        let grid = TimeGrid::new(0.0, 2.4, 4).unwrap();
        let problem = quartic_control_problem(grid);
        let nominal = Trajectory::new(
            grid,
            DMatrix::from_element(5, 2, 0.5),
            DVector::from_element(5, 1.0),
        )
        .unwrap();
        let lq = build_subproblem(&problem, &nominal).unwrap();
        for i in 0..grid.n_nodes() {
            assert!((lq.r_quad[i] - 7.0).abs() < 1e-12);
            assert!((lq.r_lin[i] - (-4.0)).abs() < 1e-12);
        }
        lq.validate().unwrap();
    }

    #[test]
    fn quadratic_cost_expansion_is_exact() {
        // Quadratic f and g: W, omega, R, r are nominal-independent, and the
        // quadratic model reproduces the running cost exactly everywhere.
        let grid = TimeGrid::new(0.0, 1.0, 8).unwrap();
        let problem = NlpProblem::builder(1, grid)
            .state_cost(
                |x| 1.5 * x[0] * x[0] + 0.25 * x[0],
                |x| DVector::from_vec(vec![3.0 * x[0] + 0.25]),
                |_| DMatrix::from_element(1, 1, 3.0),
            )
            .control_cost(|u| 0.5 * u * u - u, |u| u - 1.0, |_| 1.0)
            .dynamics(
                |x, u| DVector::from_vec(vec![-x[0] + 2.0 * u + 0.5]),
                |_, _| DMatrix::from_element(1, 1, -1.0),
                |_, _| DVector::from_element(1, 2.0),
            )
            .initial_state(DVector::from_element(1, 1.0))
            .build()
            .unwrap();

        let nominal_a = rollout(&problem, &DVector::zeros(9), grid).unwrap();
        let nominal_b = rollout(&problem, &DVector::from_element(9, 0.7), grid).unwrap();
        let lq_a = build_subproblem(&problem, &nominal_a).unwrap();
        let lq_b = build_subproblem(&problem, &nominal_b).unwrap();
        for i in 0..grid.n_nodes() {
            assert_eq!(lq_a.w[i], lq_b.w[i]);
            assert_eq!(lq_a.r_quad[i], lq_b.r_quad[i]);
            assert_eq!(lq_a.a[i], lq_b.a[i]);
            assert_eq!(lq_a.b[i], lq_b.b[i]);
            assert!((&lq_a.omega[i] - &lq_b.omega[i]).amax() < 1e-12);
            assert!((lq_a.r_lin[i] - lq_b.r_lin[i]).abs() < 1e-12);
        }
        // The model equals the true cost for any trajectory, not just the nominal.
        let probe = rollout(&problem, &DVector::from_element(9, -0.3), grid).unwrap();
        let model = lq_objective(&lq_a, &probe).unwrap();
        let truth = nlp_objective(&problem, &probe).unwrap();
        assert!((model - truth).abs() <= 1e-12 * (1.0 + truth.abs()));
    }

    #[test]
    fn model_matches_cost_at_nominal_and_is_second_order() {
        let grid = TimeGrid::new(0.0, 2.4, 16).unwrap();
        let problem = quartic_control_problem(grid);
        let nominal = rollout(&problem, &DVector::from_element(17, 0.2), grid).unwrap();
        let lq = build_subproblem(&problem, &nominal).unwrap();

        let at_nominal = lq_objective(&lq, &nominal).unwrap();
        let truth = nlp_objective(&problem, &nominal).unwrap();
        assert!((at_nominal - truth).abs() <= 1e-10 * (1.0 + truth.abs()));

        // Model objective along the linearized dynamics vs true objective
        // along the nonlinear dynamics, under the same control perturbation:
        // the error is quadratic in the perturbation, so it shrinks ~4x when
        // the perturbation halves.
        let mut errs = Vec::new();
        for scale in [0.02, 0.01] {
            let u = &nominal.controls + DVector::from_element(17, scale);
            let model_traj = lq.rollout(&u).unwrap();
            let true_traj = rollout(&problem, &u, grid).unwrap();
            let err = (lq_objective(&lq, &model_traj).unwrap()
                - nlp_objective(&problem, &true_traj).unwrap())
            .abs();
            errs.push(err);
        }
        let ratio = errs[0] / errs[1];
        assert!((ratio - 4.0).abs() <= 0.5, "ratio = {ratio}");
    }
}
