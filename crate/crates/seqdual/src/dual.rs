//! The Fenchel dual of the LQ subproblem, with the dual state eliminated.
//!
//! The dual decision variables are the n-dimensional control `y` (one value
//! per node) and the terminal multiplier `eta`. The dual state `p` is never a
//! free variable: it is defined by the backward recursion
//!
//!   p_N = -E' eta,
//!   p_i = p_{i+1} + h (A_i' p_{i+1} - W_i y_i - omega_i),
//!
//! which is the exact algebraic adjoint of the primal forward stencil. With
//! that pairing the minimization-form dual value
//!
//!   D(y, eta) = x0' p_0 + e_f' eta
//!             + sum_i h ( 1/2 y_i' W_i y_i + p_{i+1}' c_i + psi_i(B_i' p_{i+1}) )
//!
//! satisfies exact weak duality against the transcribed primal, and its
//! negation equals the primal optimum at the solution, so recovered
//! objectives can be compared without discretization slack. The interval
//! terms read `p` at the right stencil node; that off-by-one against the
//! naive left-node discretization is what makes the discrete gap identity
//! exact.
//!
//! Minimization is a semismooth Newton method: `psi` is piecewise quadratic,
//! so the generalized Hessian is piecewise constant and the Newton system is
//! another stage-structured LQ problem, solved by the same value-function
//! sweeps as the primal path (run in reversed time, since `p` propagates
//! backward). Null directions of `W` do not affect the objective and are
//! pinned to zero by a small Tikhonov term so the Newton system stays
//! definite.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lq::{lq_objective, LqProblem};
use crate::psi::{psi_deriv, psi_eval, psi_second, PsiParams};
use crate::riccati::{backward, forward_from, LqStages};
use crate::trajectory::{CostateTrajectory, Trajectory};

/// Dual iterate: control `y` (row per node; the last row never enters the
/// objective), terminal multiplier, and the propagated dual state.
#[derive(Debug, Clone)]
pub struct DualVariables {
    pub y: DMatrix<f64>,
    pub eta: DVector<f64>,
    pub p: CostateTrajectory,
}

impl DualVariables {
    pub fn new(lq: &LqProblem, y: DMatrix<f64>, eta: DVector<f64>) -> Result<Self> {
        if y.nrows() != lq.grid.n_nodes() || y.ncols() != lq.state_dim() {
            return Err(Error::DimensionMismatch("dual control shape".into()));
        }
        if eta.len() != lq.terminal_rows() {
            return Err(Error::DimensionMismatch("dual terminal multiplier length".into()));
        }
        let p = propagate_dual_state(lq, &y, &eta)?;
        Ok(DualVariables { y, eta, p })
    }
}

/// Primal quantities read off a dual iterate via the saddle-point map.
#[derive(Debug, Clone)]
pub struct RecoveredPrimal {
    pub traj: Trajectory,
    pub costate: CostateTrajectory,
    pub duality_gap: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct DualSolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub armijo_c1: f64,
    pub backtrack: f64,
    /// Objective values below this signal an unbounded dual (infeasible
    /// primal data).
    pub unbounded_threshold: f64,
}

impl Default for DualSolverConfig {
    fn default() -> Self {
        DualSolverConfig {
            tol: 1e-8,
            max_iter: 200,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            unbounded_threshold: -1e15,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct DualIterationRecord {
    pub iter: usize,
    pub dual_value: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct DualSolveReport {
    pub iterations: usize,
    pub records: Vec<DualIterationRecord>,
    /// Minimization-form optimal value.
    pub dual_min: f64,
    /// The dual value in supremum form (the negation of `dual_min`).
    pub dual_sup: f64,
}

fn psi_params(lq: &LqProblem, i: usize) -> PsiParams {
    PsiParams {
        r_quad: lq.r_quad[i],
        r_lin: lq.r_lin[i],
        alpha: lq.alpha[i],
        beta: lq.beta[i],
    }
}

/// Backward propagation of the dual state from `(y, eta)`.
pub fn propagate_dual_state(
    lq: &LqProblem,
    y: &DMatrix<f64>,
    eta: &DVector<f64>,
) -> Result<CostateTrajectory> {
    let n = lq.state_dim();
    let horizon = lq.grid.n_intervals();
    let h = lq.grid.h_step();
    if y.nrows() != horizon + 1 || y.ncols() != n {
        return Err(Error::DimensionMismatch("dual control shape".into()));
    }
    if eta.len() != lq.terminal_rows() {
        return Err(Error::DimensionMismatch("eta length".into()));
    }
    let mut values = DMatrix::zeros(horizon + 1, n);
    let mut p = if lq.terminal_rows() > 0 {
        -(lq.e.transpose() * eta)
    } else {
        DVector::zeros(n)
    };
    values.row_mut(horizon).copy_from(&p.transpose());
    for i in (0..horizon).rev() {
        let yi = y.row(i).transpose();
        p = &p + h * (lq.a[i].transpose() * &p - &lq.w[i] * yi - &lq.omega[i]);
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteCoefficient { node: i, what: "dual state".into() });
        }
        values.row_mut(i).copy_from(&p.transpose());
    }
    CostateTrajectory::new(lq.grid, values)
}

/// Minimization-form dual value at a propagated iterate.
pub fn dual_objective(lq: &LqProblem, vars: &DualVariables) -> Result<f64> {
    let horizon = lq.grid.n_intervals();
    let h = lq.grid.h_step();
    if vars.y.nrows() != horizon + 1 || vars.y.ncols() != lq.state_dim() {
        return Err(Error::DimensionMismatch("dual control shape".into()));
    }
    let p0 = vars.p.value(0);
    let mut total = lq.x0.dot(&p0) + lq.e_f.dot(&vars.eta);
    for i in 0..horizon {
        let yi = vars.y.row(i).transpose();
        let p_right = vars.p.value(i + 1);
        let quad = 0.5 * (&lq.w[i] * &yi).dot(&yi);
        let v = lq.b[i].dot(&p_right);
        total += h * (quad + p_right.dot(&lq.c[i]) + psi_eval(v, &psi_params(lq, i)));
    }
    Ok(total)
}

/// Analytic gradient of the eliminated dual objective. Returns the gradient
/// in `y` (last row zero) and in `eta`, plus the control/state pair the
/// chain rule passes through (the recovered candidate primal).
pub fn dual_gradient(
    lq: &LqProblem,
    vars: &DualVariables,
) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>, Vec<DVector<f64>>)> {
    let n = lq.state_dim();
    let horizon = lq.grid.n_intervals();
    let h = lq.grid.h_step();

    // Recovered controls from the right-node dual state, then the forward
    // chain state, which is exactly the rollout under those controls.
    let mut controls = DVector::zeros(horizon + 1);
    for i in 0..horizon {
        let v = lq.b[i].dot(&vars.p.value(i + 1));
        controls[i] = psi_deriv(v, &psi_params(lq, i));
    }
    let v_last = lq.b[horizon].dot(&vars.p.value(horizon));
    controls[horizon] = psi_deriv(v_last, &psi_params(lq, horizon));

    let mut xs = Vec::with_capacity(horizon + 1);
    xs.push(lq.x0.clone());
    for i in 0..horizon {
        let (f, g, w) = lq.transition(i);
        let next = f * &xs[i] + g * controls[i] + w;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::DynamicsBlowUp { node: i + 1 });
        }
        xs.push(next);
    }

    let mut grad_y = DMatrix::zeros(horizon + 1, n);
    for i in 0..horizon {
        let yi = vars.y.row(i).transpose();
        let g = h * (&lq.w[i] * (yi - &xs[i]));
        grad_y.row_mut(i).copy_from(&g.transpose());
    }
    let grad_eta = if lq.terminal_rows() > 0 {
        &lq.e_f - &lq.e * &xs[horizon]
    } else {
        DVector::zeros(0)
    };
    Ok((grad_y, grad_eta, controls, xs))
}

/// Null-space projectors of each `W_i` (eigenvalues below `1e-10 * ||W||`).
fn null_projectors(lq: &LqProblem) -> Vec<DMatrix<f64>> {
    let n = lq.state_dim();
    lq.w
        .iter()
        .map(|w| {
            let eig = w.clone().symmetric_eigen();
            let scale = eig.eigenvalues.amax().max(1e-300);
            let mut proj = DMatrix::zeros(n, n);
            for (j, lam) in eig.eigenvalues.iter().enumerate() {
                if lam.abs() <= 1e-10 * scale.max(1.0) {
                    let v = eig.eigenvectors.column(j);
                    proj += v * v.transpose();
                }
            }
            proj
        })
        .collect()
}

const TIKHONOV_EPS: f64 = 1e-8;

/// Minimizes the eliminated dual by semismooth Newton with Armijo
/// backtracking, then recovers the primal via the saddle-point map.
pub fn solve_dual(
    lq: &LqProblem,
    cfg: &DualSolverConfig,
) -> Result<(DualVariables, RecoveredPrimal, DualSolveReport)> {
    lq.validate()?;
    let n = lq.state_dim();
    let horizon = lq.grid.n_intervals();
    let h = lq.grid.h_step();
    let k = lq.terminal_rows();
    let nulls = null_projectors(lq);

    let mut y = DMatrix::zeros(horizon + 1, n);
    let mut eta = DVector::zeros(k);
    let mut vars = DualVariables::new(lq, y.clone(), eta.clone())?;
    let mut records = Vec::new();

    let reg_value = |lq: &LqProblem, vars: &DualVariables, y: &DMatrix<f64>| -> Result<f64> {
        let mut v = dual_objective(lq, vars)?;
        for i in 0..horizon {
            let yi = y.row(i).transpose();
            let pn = &nulls[i] * yi;
            v += h * TIKHONOV_EPS * pn.norm_squared();
        }
        Ok(v)
    };

    let mut value = reg_value(lq, &vars, &y)?;
    let mut iterations = 0;
    loop {
        let (mut grad_y, grad_eta, controls, xs) = dual_gradient(lq, &vars)?;
        for i in 0..horizon {
            let yi = y.row(i).transpose();
            let extra = 2.0 * h * TIKHONOV_EPS * (&nulls[i] * yi);
            let mut row = grad_y.row_mut(i);
            row += extra.transpose();
        }
        let grad_norm = grad_y.amax().max(if k > 0 { grad_eta.amax() } else { 0.0 });
        if grad_norm <= cfg.tol {
            break;
        }
        if value < cfg.unbounded_threshold {
            return Err(Error::UnboundedDual(cfg.unbounded_threshold));
        }
        if iterations >= cfg.max_iter {
            return Err(Error::MaxIterations { iterations, residual: grad_norm });
        }
        iterations += 1;

        let (dy, deta) = newton_direction(lq, &vars, &y, &controls, &xs, &nulls)?;

        // Directional derivative for the Armijo test.
        let mut slope = 0.0;
        for i in 0..horizon {
            slope += grad_y.row(i).transpose().dot(&dy.row(i).transpose());
        }
        if k > 0 {
            slope += grad_eta.dot(&deta);
        }
        if slope >= 0.0 {
            // Not a descent direction (numerically flat); fall back to the
            // negative gradient.
            return Err(Error::KktFactorization(
                "dual Newton direction lost descent; problem data may be inconsistent".into(),
            ));
        }

        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-14 {
            let y_trial = &y + step * &dy;
            let eta_trial = &eta + step * &deta;
            let vars_trial = DualVariables::new(lq, y_trial.clone(), eta_trial.clone())?;
            let value_trial = reg_value(lq, &vars_trial, &y_trial)?;
            if value_trial <= value + cfg.armijo_c1 * step * slope {
                y = y_trial;
                eta = eta_trial;
                vars = vars_trial;
                value = value_trial;
                accepted = true;
                break;
            }
            step *= cfg.backtrack;
        }
        if !accepted {
            return Err(Error::MaxIterations { iterations, residual: grad_norm });
        }
        records.push(DualIterationRecord {
            iter: iterations,
            dual_value: value,
            grad_norm,
            step,
        });
    }

    let dual_min = dual_objective(lq, &vars)?;
    let recovered = recover_primal(lq, &vars)?;
    let report = DualSolveReport {
        iterations,
        records,
        dual_min,
        dual_sup: -dual_min,
    };
    Ok((vars, recovered, report))
}

/// Semismooth Newton direction via a reversed-time value-function sweep.
/// The dual state increment runs backward in physical time, so it is a
/// forward state in the reversed index; `W` plays the input matrix.
fn newton_direction(
    lq: &LqProblem,
    vars: &DualVariables,
    y: &DMatrix<f64>,
    controls: &DVector<f64>,
    xs: &[DVector<f64>],
    nulls: &[DMatrix<f64>],
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = lq.state_dim();
    let horizon = lq.grid.n_intervals();
    let h = lq.grid.h_step();
    let k = lq.terminal_rows();
    let eye = DMatrix::<f64>::identity(n, n);

    let mut f_st = Vec::with_capacity(horizon);
    let mut g_st = Vec::with_capacity(horizon);
    let mut w_st = Vec::with_capacity(horizon);
    let mut qm = Vec::with_capacity(horizon);
    let mut qv = Vec::with_capacity(horizon);
    let mut rm = Vec::with_capacity(horizon);
    let mut rv = Vec::with_capacity(horizon);

    for j in 0..horizon {
        let i = horizon - 1 - j;
        let curvature = psi_second(lq.b[i].dot(&vars.p.value(i + 1)), &psi_params(lq, i));
        qm.push(h * curvature * (&lq.b[i] * lq.b[i].transpose()));
        qv.push(h * (&lq.c[i] + &lq.b[i] * controls[i]));
        rm.push(h * (&lq.w[i] + 2.0 * TIKHONOV_EPS * &nulls[i]));
        let yi = y.row(i).transpose();
        rv.push(h * (&lq.w[i] * &yi + 2.0 * TIKHONOV_EPS * (&nulls[i] * &yi)));
        f_st.push(&eye + h * lq.a[i].transpose());
        g_st.push(-h * &lq.w[i]);
        w_st.push(DVector::zeros(n));
    }

    let stages = LqStages {
        f: f_st,
        g: g_st,
        w: w_st,
        q_mat: qm,
        q_vec: qv,
        r_mat: rm,
        r_vec: rv,
        qn_mat: DMatrix::zeros(n, n),
        qn_vec: lq.x0.clone(),
    };

    let sweep = backward(&stages)?;
    let deta = if k > 0 {
        // Minimize V_0(-E' deta) + e_f' deta over deta.
        let p0 = sweep.initial_value_hessian();
        let g0 = sweep.initial_value_gradient();
        let schur = &lq.e * (p0 * lq.e.transpose());
        let rhs = &lq.e * g0 - &lq.e_f;
        match schur.clone().lu().solve(&rhs) {
            Some(d) => d,
            None => {
                let jitter = DMatrix::identity(k, k) * 1e-12;
                (schur + jitter)
                    .lu()
                    .solve(&rhs)
                    .ok_or_else(|| Error::KktFactorization("singular dual eta system".into()))?
            }
        }
    } else {
        DVector::zeros(0)
    };

    let rho0 = if k > 0 { -(lq.e.transpose() * &deta) } else { DVector::zeros(n) };
    let sol = forward_from(&stages, &sweep, &rho0);

    let mut dy = DMatrix::zeros(horizon + 1, n);
    for j in 0..horizon {
        let i = horizon - 1 - j;
        dy.row_mut(i).copy_from(&sol.controls[j].transpose());
    }
    let _ = xs;
    Ok((dy, deta))
}

/// Saddle-point recovery: `lambda = -p`, controls from the projection rule,
/// states by forward rollout under the recovered controls so the returned
/// trajectory is dynamics-feasible even away from exact optimality.
pub fn recover_primal(lq: &LqProblem, vars: &DualVariables) -> Result<RecoveredPrimal> {
    let horizon = lq.grid.n_intervals();
    let mut controls = DVector::zeros(horizon + 1);
    for i in 0..horizon {
        let v = lq.b[i].dot(&vars.p.value(i + 1));
        controls[i] = psi_deriv(v, &psi_params(lq, i));
    }
    let v_last = lq.b[horizon].dot(&vars.p.value(horizon));
    controls[horizon] = psi_deriv(v_last, &psi_params(lq, horizon));

    let traj = lq.rollout(&controls)?;
    let costate = CostateTrajectory::new(lq.grid, -&vars.p.values)?;
    let dual_min = dual_objective(lq, vars)?;
    let primal_value = lq_objective(lq, &traj)?;
    let duality_gap = (primal_value - lq.objective_offset + dual_min).abs();
    Ok(RecoveredPrimal { traj, costate, duality_gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::{solve_box_qp, QpSolverConfig};
    use crate::testutil::{random_lq, scalar_integrator};
    use crate::transcribe::transcribe;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn propagation_zero_and_backward_sums() {
        // A = 0, W = 0, omega = 0, E = 0 keeps p identically zero.
        let lq = scalar_integrator(4);
        let y = DMatrix::zeros(5, 1);
        let p = propagate_dual_state(&lq, &y, &DVector::zeros(0)).unwrap();
        assert_eq!(p.values, DMatrix::zeros(5, 1));

        // W = 1, y = 1, h = 0.5 accumulates -h per interval from the end.
        let mut lq = scalar_integrator(2);
        lq.grid = crate::grid::TimeGrid::new(0.0, 1.0, 2).unwrap();
        for w in lq.w.iter_mut() {
            *w = DMatrix::from_element(1, 1, 1.0);
        }
        let y = DMatrix::from_element(3, 1, 1.0);
        let p = propagate_dual_state(&lq, &y, &DVector::zeros(0)).unwrap();
        assert_eq!(p.values[(2, 0)], 0.0);
        assert_eq!(p.values[(1, 0)], -0.5);
        assert_eq!(p.values[(0, 0)], -1.0);
    }

    #[test]
    fn propagation_matches_duplicate_loop_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lq = random_lq(&mut rng, 2, 50, true, true);
        let nodes = lq.grid.n_nodes();
        let y = DMatrix::from_fn(nodes, 2, |_, _| rng.gen_range(-1.0..1.0));
        let eta = DVector::from_fn(lq.terminal_rows(), |_, _| rng.gen_range(-1.0..1.0));
        let got = propagate_dual_state(&lq, &y, &eta).unwrap();

        // Independent recomputation.
        let h = lq.grid.h_step();
        let mut p = -(lq.e.transpose() * &eta);
        for i in (0..50).rev() {
            let pi = &p + h * (lq.a[i].transpose() * &p - &lq.w[i] * y.row(i).transpose()
                - &lq.omega[i]);
            assert!((got.value(i) - &pi).amax() < 1e-14 * (1.0 + pi.amax()));
            p = pi;
        }
    }

    #[test]
    fn zero_data_gives_zero_objective() {
        let mut lq = scalar_integrator(3);
        for b in lq.b.iter_mut() {
            *b = DVector::zeros(1);
        }
        lq.x0 = DVector::zeros(1);
        let vars = DualVariables::new(&lq, DMatrix::zeros(4, 1), DVector::zeros(0)).unwrap();
        assert_eq!(dual_objective(&lq, &vars).unwrap(), 0.0);
    }

    #[test]
    fn hand_solvable_instance_matches_grid_search() {
        // W active only at the first node, unbounded control, h = 1/2: the
        // dual value reduces to -h y0 + h y0^2 / 2, minimized at y0 = 1 with
        // value -1/4, matching the primal optimum 1/4 at u = 0.
        let mut lq = scalar_integrator(2);
        lq.w[0] = DMatrix::from_element(1, 1, 1.0);
        lq.x0 = DVector::from_element(1, 1.0);
        let mut best = (f64::INFINITY, 0.0);
        let mut probe = -2.0;
        while probe <= 3.0 {
            let mut y = DMatrix::zeros(3, 1);
            y[(0, 0)] = probe;
            let vars = DualVariables::new(&lq, y, DVector::zeros(0)).unwrap();
            let v = dual_objective(&lq, &vars).unwrap();
            if v < best.0 {
                best = (v, probe);
            }
            probe += 1e-4;
        }
        assert!((best.0 + 0.25).abs() < 1e-6);
        assert!((best.1 - 1.0).abs() < 1e-3);

        let (_, recovered, report) = solve_dual(&lq, &DualSolverConfig::default()).unwrap();
        assert!((report.dual_min + 0.25).abs() < 1e-9);
        assert!((report.dual_sup - 0.25).abs() < 1e-9);
        assert!(recovered.duality_gap < 1e-9);
        let qp = transcribe(&lq).unwrap();
        let primal = solve_box_qp(&qp, &QpSolverConfig::default()).unwrap();
        assert!((primal.objective - 0.25).abs() < 1e-9);
        assert!((recovered.traj.controls[0] - primal.traj.controls[0]).abs() < 1e-8);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..6 {
            let lq = random_lq(&mut rng, 2, 6, true, trial % 2 == 0);
            let nodes = lq.grid.n_nodes();
            let k = lq.terminal_rows();
            let y0 = DMatrix::from_fn(nodes, 2, |_, _| rng.gen_range(-1.0..1.0));
            let eta0 = DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0));
            let vars = DualVariables::new(&lq, y0.clone(), eta0.clone()).unwrap();
            let (grad_y, grad_eta, _, _) = dual_gradient(&lq, &vars).unwrap();

            let value = |y: &DMatrix<f64>, eta: &DVector<f64>| -> f64 {
                let vars = DualVariables::new(&lq, y.clone(), eta.clone()).unwrap();
                dual_objective(&lq, &vars).unwrap()
            };
            let e = 1e-6;
            for i in 0..nodes - 1 {
                for j in 0..2 {
                    let mut yp = y0.clone();
                    let mut ym = y0.clone();
                    yp[(i, j)] += e;
                    ym[(i, j)] -= e;
                    let fd = (value(&yp, &eta0) - value(&ym, &eta0)) / (2.0 * e);
                    assert!(
                        (fd - grad_y[(i, j)]).abs() <= 1e-6 * (1.0 + fd.abs()),
                        "trial {trial} dy[{i},{j}]: fd {fd} vs {}",
                        grad_y[(i, j)]
                    );
                }
            }
            for j in 0..k {
                let mut ep = eta0.clone();
                let mut em = eta0.clone();
                ep[j] += e;
                em[j] -= e;
                let fd = (value(&y0, &ep) - value(&y0, &em)) / (2.0 * e);
                assert!(
                    (fd - grad_eta[j]).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "trial {trial} deta[{j}]"
                );
            }
        }
    }

    #[test]
    fn newton_is_exact_on_smooth_instances() {
        // Without finite bounds psi is globally quadratic, so one Newton step
        // must reach the optimum.
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for trial in 0..4 {
            let lq = random_lq(&mut rng, 2, 12, false, trial % 2 == 0);
            let (_, _, report) = solve_dual(&lq, &DualSolverConfig::default()).unwrap();
            assert!(report.iterations <= 2, "trial {trial}: {} iterations", report.iterations);
        }
    }

    #[test]
    fn strong_duality_against_primal_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for trial in 0..12 {
            let lq = random_lq(&mut rng, 2, 5, true, trial % 3 == 0);
            let qp = transcribe(&lq).unwrap();
            let primal = solve_box_qp(&qp, &QpSolverConfig::default()).unwrap();
            let (_, recovered, report) = solve_dual(&lq, &DualSolverConfig::default()).unwrap();
            let scale = 1.0 + primal.objective.abs();
            assert!(
                (primal.objective - (report.dual_sup + lq.objective_offset)).abs()
                    <= 1e-6 * scale,
                "trial {trial}: primal {} vs dual {}",
                primal.objective,
                report.dual_sup
            );
            assert!(recovered.duality_gap <= 1e-6 * scale, "trial {trial}");
            let du = (&recovered.traj.controls - &primal.traj.controls).amax();
            assert!(du <= 1e-5, "trial {trial}: controls differ by {du}");
            // lambda = -p matches the primal costate.
            let dl = (&recovered.costate.values - &primal.costate.values).amax();
            assert!(dl <= 1e-5, "trial {trial}: costates differ by {dl}");
        }
    }

    #[test]
    fn weak_duality_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..10 {
            let lq = random_lq(&mut rng, 2, 6, true, false);
            let nodes = lq.grid.n_nodes();
            // Feasible primal point: rollout under admissible controls.
            let controls = DVector::from_fn(nodes, |i, _| {
                let lo = lq.alpha[i].max(-1.0);
                let hi = lq.beta[i].min(1.0);
                lo + (hi - lo) * rng.gen_range(0.0..1.0)
            });
            let traj = lq.rollout(&controls).unwrap();
            let primal_value = lq_objective(&lq, &traj).unwrap() - lq.objective_offset;
            // Arbitrary dual point.
            let y = DMatrix::from_fn(nodes, 2, |_, _| rng.gen_range(-2.0..2.0));
            let vars = DualVariables::new(&lq, y, DVector::zeros(0)).unwrap();
            let dual_value = dual_objective(&lq, &vars).unwrap();
            assert!(
                primal_value >= -dual_value - 1e-8 * (1.0 + primal_value.abs()),
                "trial {trial}: weak duality violated ({primal_value} < {})",
                -dual_value
            );
        }
    }

    #[test]
    fn singular_w_converges_with_pinned_null_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut lq = random_lq(&mut rng, 2, 8, true, false);
        // State weight only on the first component, as in Rayleigh-type costs.
        for w in lq.w.iter_mut() {
            *w = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        }
        let (vars, recovered, _) = solve_dual(&lq, &DualSolverConfig::default()).unwrap();
        // Null-space components of y stay at zero.
        for i in 0..lq.grid.n_nodes() {
            assert!(vars.y[(i, 1)].abs() < 1e-9);
        }
        let qp = transcribe(&lq).unwrap();
        let primal = solve_box_qp(&qp, &QpSolverConfig::default()).unwrap();
        assert!((primal.objective - lq_objective(&lq, &recovered.traj).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn recovery_of_zero_dual_state_projects_zero() {
        let mut lq = scalar_integrator(3);
        lq.alpha = vec![-1.0; 4];
        lq.beta = vec![1.0; 4];
        let vars = DualVariables::new(&lq, DMatrix::zeros(4, 1), DVector::zeros(0)).unwrap();
        let rec = recover_primal(&lq, &vars).unwrap();
        assert_eq!(rec.traj.controls, DVector::zeros(4));
    }
}
