//! Primal-dual interior-point solver for the transcribed box-constrained QP.
//!
//! One Newton step per barrier value with a fixed reduction factor; the Newton
//! systems inherit the transcription's stage structure, so each solve is a
//! backward/forward value-function sweep with cost linear in the horizon.
//! Problems without finite bounds collapse to a single equality-constrained
//! solve.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lq::{lq_objective, project_control, LqProblem};
use crate::riccati::{solve_lq, solve_lq_terminal, LqStages};
use crate::trajectory::{CostateTrajectory, Trajectory};
use crate::transcribe::{PrimalLqSolution, TranscribedQp};

#[derive(Debug, Clone, Copy)]
pub struct QpSolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Barrier reduction factor per iteration.
    pub sigma: f64,
    /// Fraction-to-boundary rule for primal and dual interiority.
    pub boundary_frac: f64,
}

impl Default for QpSolverConfig {
    fn default() -> Self {
        QpSolverConfig { tol: 1e-8, max_iter: 200, sigma: 0.2, boundary_frac: 0.995 }
    }
}

impl QpSolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidProblem("solver tol must be positive".into()));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::InvalidProblem("sigma must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

struct IpState {
    /// States x_0..x_N.
    x: Vec<DVector<f64>>,
    /// Active controls u_0..u_{N-1}.
    u: Vec<f64>,
    /// Dynamics-row multipliers nu_0..nu_{N-1}.
    nu: Vec<DVector<f64>>,
    /// Terminal-row multiplier.
    eta: DVector<f64>,
    /// Bound multipliers, present where the corresponding bound is finite.
    zl: Vec<f64>,
    zh: Vec<f64>,
}

pub fn solve_box_qp(qp: &TranscribedQp, cfg: &QpSolverConfig) -> Result<PrimalLqSolution> {
    cfg.validate()?;
    let lq = &qp.lq;
    let horizon = lq.grid.n_intervals();
    let h = lq.grid.h_step();

    for i in 0..horizon {
        if lq.alpha[i] > lq.beta[i] {
            return Err(Error::InfeasibleBoxes { node: i, alpha: lq.alpha[i], beta: lq.beta[i] });
        }
        if lq.alpha[i].is_finite() && lq.alpha[i] == lq.beta[i] {
            return Err(Error::InvalidProblem(format!(
                "degenerate box (alpha == beta) at node {i} is not supported"
            )));
        }
    }

    let has_bounds =
        (0..horizon).any(|i| lq.alpha[i].is_finite() || lq.beta[i].is_finite());

    let mut state = initial_point(lq);
    let mut mu_history = Vec::new();
    let bound_count: usize = (0..horizon)
        .map(|i| lq.alpha[i].is_finite() as usize + lq.beta[i].is_finite() as usize)
        .sum();

    let mut iterations = 0;
    loop {
        let res = residuals(lq, &state);
        let mu_meas = if bound_count > 0 { res.compl_sum / bound_count as f64 } else { 0.0 };
        let kkt_max = res.stat_max.max(res.feas_max).max(res.compl_max);
        if kkt_max <= cfg.tol {
            let mut kkt_max = kkt_max;
            if has_bounds {
                if let Some(polished) = polish_active_set(lq, &state) {
                    let res = residuals(lq, &polished);
                    let polished_max = res.stat_max.max(res.feas_max).max(res.compl_max);
                    if polished_max <= kkt_max {
                        state = polished;
                        kkt_max = polished_max;
                    }
                }
            }
            return finish(lq, state, kkt_max, iterations, mu_history);
        }
        if !kkt_max.is_finite() {
            return Err(Error::KktFactorization(format!(
                "iterate lost finiteness after {iterations} iterations"
            )));
        }
        if iterations >= cfg.max_iter {
            return Err(Error::MaxIterations { iterations, residual: kkt_max });
        }
        iterations += 1;
        mu_history.push(mu_meas);

        let mu_target = if has_bounds { cfg.sigma * mu_meas } else { 0.0 };
        let step = newton_step(lq, &state, mu_target)?;

        // Fraction-to-boundary on slacks and bound multipliers.
        let tau = cfg.boundary_frac;
        let mut alpha_max: f64 = 1.0;
        for i in 0..horizon {
            if lq.alpha[i].is_finite() {
                let slack = state.u[i] - lq.alpha[i];
                if step.du[i] < 0.0 {
                    alpha_max = alpha_max.min(-tau * slack / step.du[i]);
                }
                if step.dzl[i] < 0.0 {
                    alpha_max = alpha_max.min(-tau * state.zl[i] / step.dzl[i]);
                }
            }
            if lq.beta[i].is_finite() {
                let slack = lq.beta[i] - state.u[i];
                if step.du[i] > 0.0 {
                    alpha_max = alpha_max.min(tau * slack / step.du[i]);
                }
                if step.dzh[i] < 0.0 {
                    alpha_max = alpha_max.min(-tau * state.zh[i] / step.dzh[i]);
                }
            }
        }
        let alpha = alpha_max.min(1.0);

        for i in 0..=horizon {
            state.x[i] += alpha * &step.dx[i];
        }
        for i in 0..horizon {
            state.u[i] += alpha * step.du[i];
            state.nu[i] += alpha * &step.dnu[i];
            state.zl[i] += alpha * step.dzl[i];
            state.zh[i] += alpha * step.dzh[i];
        }
        state.eta += alpha * &step.deta;
        let _ = h;
    }
}

fn initial_point(lq: &LqProblem) -> IpState {
    let horizon = lq.grid.n_intervals();
    let n = lq.state_dim();
    let k = lq.terminal_rows();

    let mut u = Vec::with_capacity(horizon);
    for i in 0..horizon {
        let (lo, hi) = (lq.alpha[i], lq.beta[i]);
        let v = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => {
                if lo < 0.0 {
                    0.0
                } else {
                    lo + 1.0
                }
            }
            (false, true) => {
                if hi > 0.0 {
                    0.0
                } else {
                    hi - 1.0
                }
            }
            (false, false) => 0.0,
        };
        u.push(v);
    }

    let mut x = Vec::with_capacity(horizon + 1);
    x.push(lq.x0.clone());
    for i in 0..horizon {
        let (f, g, w) = lq.transition(i);
        let next = &f * &x[i] + g * u[i] + w;
        let next = if next.iter().all(|v| v.is_finite()) { next } else { DVector::zeros(n) };
        x.push(next);
    }

    IpState {
        x,
        u,
        nu: vec![DVector::zeros(n); horizon],
        eta: DVector::zeros(k),
        zl: (0..horizon).map(|i| if lq.alpha[i].is_finite() { 1.0 } else { 0.0 }).collect(),
        zh: (0..horizon).map(|i| if lq.beta[i].is_finite() { 1.0 } else { 0.0 }).collect(),
    }
}

struct Residuals {
    stat_max: f64,
    feas_max: f64,
    compl_max: f64,
    compl_sum: f64,
}

fn residuals(lq: &LqProblem, s: &IpState) -> Residuals {
    let horizon = lq.grid.n_intervals();
    let h = lq.grid.h_step();
    let mut stat_max: f64 = 0.0;
    let mut feas_max: f64 = 0.0;
    let mut compl_max: f64 = 0.0;
    let mut compl_sum: f64 = 0.0;

    for i in 0..horizon {
        let (f, g, w) = lq.transition(i);
        let r_dyn = &f * &s.x[i] + &g * s.u[i] + &w - &s.x[i + 1];
        feas_max = feas_max.max(r_dyn.amax());

        // Stationarity in x_j couples nu_{j-1} and nu_j; the j = 0 row is the
        // initial-condition multiplier and is satisfied by definition.
        if i >= 1 {
            let r = h * (&lq.w[i] * &s.x[i] + &lq.omega[i]) + f.transpose() * &s.nu[i]
                - &s.nu[i - 1];
            stat_max = stat_max.max(r.amax());
        }

        let mut r_u = h * (lq.r_quad[i] * s.u[i] + lq.r_lin[i]) + g.dot(&s.nu[i]);
        if lq.alpha[i].is_finite() {
            r_u -= s.zl[i];
            let c = s.zl[i] * (s.u[i] - lq.alpha[i]);
            compl_max = compl_max.max(c.abs());
            compl_sum += c;
        }
        if lq.beta[i].is_finite() {
            r_u += s.zh[i];
            let c = s.zh[i] * (lq.beta[i] - s.u[i]);
            compl_max = compl_max.max(c.abs());
            compl_sum += c;
        }
        stat_max = stat_max.max(r_u.abs());
    }

    // Terminal stationarity: nu_{N-1} = E' eta (zero when unconstrained).
    let r_term_stat = if lq.terminal_rows() > 0 {
        (lq.e.transpose() * &s.eta - &s.nu[horizon - 1]).amax()
    } else {
        s.nu[horizon - 1].amax()
    };
    stat_max = stat_max.max(r_term_stat);

    if lq.terminal_rows() > 0 {
        feas_max = feas_max.max((&lq.e * &s.x[horizon] - &lq.e_f).amax());
    }

    Residuals { stat_max, feas_max, compl_max, compl_sum }
}

struct NewtonStep {
    dx: Vec<DVector<f64>>,
    du: Vec<f64>,
    dnu: Vec<DVector<f64>>,
    deta: DVector<f64>,
    dzl: Vec<f64>,
    dzh: Vec<f64>,
}

fn newton_step(lq: &LqProblem, s: &IpState, mu_target: f64) -> Result<NewtonStep> {
    let horizon = lq.grid.n_intervals();
    let n = lq.state_dim();
    let h = lq.grid.h_step();

    let mut f_stages = Vec::with_capacity(horizon);
    let mut g_stages = Vec::with_capacity(horizon);
    let mut w_stages = Vec::with_capacity(horizon);
    let mut q_mat = Vec::with_capacity(horizon);
    let mut q_vec = Vec::with_capacity(horizon);
    let mut r_mat = Vec::with_capacity(horizon);
    let mut r_vec = Vec::with_capacity(horizon);

    for i in 0..horizon {
        let (f, g, w) = lq.transition(i);
        let r_dyn = &f * &s.x[i] + &g * s.u[i] + &w - &s.x[i + 1];

        let stat_x = if i >= 1 {
            h * (&lq.w[i] * &s.x[i] + &lq.omega[i]) + f.transpose() * &s.nu[i] - &s.nu[i - 1]
        } else {
            DVector::zeros(n)
        };

        let mut barrier = 0.0;
        let mut rhs_u = -(h * (lq.r_quad[i] * s.u[i] + lq.r_lin[i]) + g.dot(&s.nu[i]));
        if lq.alpha[i].is_finite() {
            let dl = s.u[i] - lq.alpha[i];
            barrier += s.zl[i] / dl;
            rhs_u += mu_target / dl;
        }
        if lq.beta[i].is_finite() {
            let dh = lq.beta[i] - s.u[i];
            barrier += s.zh[i] / dh;
            rhs_u -= mu_target / dh;
        }

        q_mat.push(h * &lq.w[i]);
        q_vec.push(stat_x);
        r_mat.push(DMatrix::from_element(1, 1, h * lq.r_quad[i] + barrier));
        r_vec.push(DVector::from_element(1, -rhs_u));
        f_stages.push(f);
        g_stages.push(DMatrix::from_column_slice(n, 1, g.as_slice()));
        w_stages.push(r_dyn);
    }

    // Terminal linear cost carries the x_N stationarity residual.
    let qn_vec = if lq.terminal_rows() > 0 {
        lq.e.transpose() * &s.eta - &s.nu[horizon - 1]
    } else {
        -s.nu[horizon - 1].clone()
    };

    let stages = LqStages {
        f: f_stages,
        g: g_stages,
        w: w_stages,
        q_mat,
        q_vec,
        r_mat,
        r_vec,
        qn_mat: DMatrix::zeros(n, n),
        qn_vec,
    };

    let dx0 = DVector::zeros(n);
    let sol = if lq.terminal_rows() > 0 {
        let target = &lq.e_f - &lq.e * &s.x[horizon];
        solve_lq_terminal(&stages, &dx0, &lq.e, &target)?
    } else {
        solve_lq(&stages, &dx0)?
    };

    let mut dzl = vec![0.0; horizon];
    let mut dzh = vec![0.0; horizon];
    for i in 0..horizon {
        let du = sol.controls[i][0];
        if lq.alpha[i].is_finite() {
            let dl = s.u[i] - lq.alpha[i];
            dzl[i] = mu_target / dl - s.zl[i] - s.zl[i] / dl * du;
        }
        if lq.beta[i].is_finite() {
            let dh = lq.beta[i] - s.u[i];
            dzh[i] = mu_target / dh - s.zh[i] + s.zh[i] / dh * du;
        }
    }

    Ok(NewtonStep {
        dx: sol.states,
        du: sol.controls.iter().map(|u| u[0]).collect(),
        dnu: sol.multipliers,
        deta: sol.terminal_multiplier,
        dzl,
        dzh,
    })
}

/// Crossover step: pin the bounds the converged interior point identifies as
/// active, re-solve the remaining equality-constrained problem exactly, and
/// accept the result only if primal and dual feasibility verify.
fn polish_active_set(lq: &LqProblem, s: &IpState) -> Option<IpState> {
    let horizon = lq.grid.n_intervals();
    let n = lq.state_dim();
    let h = lq.grid.h_step();

    #[derive(Clone, Copy, PartialEq)]
    enum Pin {
        No,
        Lower,
        Upper,
    }
    let pins: Vec<Pin> = (0..horizon)
        .map(|i| {
            if lq.alpha[i].is_finite() && s.u[i] - lq.alpha[i] < s.zl[i] {
                Pin::Lower
            } else if lq.beta[i].is_finite() && lq.beta[i] - s.u[i] < s.zh[i] {
                Pin::Upper
            } else {
                Pin::No
            }
        })
        .collect();

    let mut f_stages = Vec::with_capacity(horizon);
    let mut g_stages = Vec::with_capacity(horizon);
    let mut w_stages = Vec::with_capacity(horizon);
    let mut q_mat = Vec::with_capacity(horizon);
    let mut q_vec = Vec::with_capacity(horizon);
    let mut r_mat = Vec::with_capacity(horizon);
    let mut r_vec = Vec::with_capacity(horizon);
    for i in 0..horizon {
        let (f, g, w) = lq.transition(i);
        q_mat.push(h * &lq.w[i]);
        q_vec.push(h * &lq.omega[i]);
        match pins[i] {
            Pin::No => {
                r_mat.push(DMatrix::from_element(1, 1, h * lq.r_quad[i]));
                r_vec.push(DVector::from_element(1, h * lq.r_lin[i]));
                g_stages.push(DMatrix::from_column_slice(n, 1, g.as_slice()));
                w_stages.push(w);
            }
            Pin::Lower | Pin::Upper => {
                // Pinned control: decouple it (zero input column) and steer
                // its stage minimum onto the bound value.
                let bound = if pins[i] == Pin::Lower { lq.alpha[i] } else { lq.beta[i] };
                r_mat.push(DMatrix::from_element(1, 1, 1.0));
                r_vec.push(DVector::from_element(1, -bound));
                g_stages.push(DMatrix::zeros(n, 1));
                w_stages.push(w + &g * bound);
            }
        }
        f_stages.push(f);
    }

    let stages = LqStages {
        f: f_stages,
        g: g_stages,
        w: w_stages,
        q_mat,
        q_vec,
        r_mat,
        r_vec,
        qn_mat: DMatrix::zeros(n, n),
        qn_vec: DVector::zeros(n),
    };
    let sol = if lq.terminal_rows() > 0 {
        solve_lq_terminal(&stages, &lq.x0, &lq.e, &lq.e_f).ok()?
    } else {
        solve_lq(&stages, &lq.x0).ok()?
    };

    let tol = 1e-9;
    let mut out = IpState {
        x: sol.states,
        u: (0..horizon).map(|i| sol.controls[i][0]).collect(),
        nu: sol.multipliers,
        eta: sol.terminal_multiplier,
        zl: vec![0.0; horizon],
        zh: vec![0.0; horizon],
    };
    for i in 0..horizon {
        let (_, g, _) = lq.transition(i);
        match pins[i] {
            Pin::No => {
                let scale = 1.0 + out.u[i].abs();
                if out.u[i] < lq.alpha[i] - tol * scale || out.u[i] > lq.beta[i] + tol * scale {
                    return None;
                }
            }
            Pin::Lower | Pin::Upper => {
                let bound = if pins[i] == Pin::Lower { lq.alpha[i] } else { lq.beta[i] };
                out.u[i] = bound;
                // Stationarity: h(Ru + r) + G'nu - zl + zh = 0.
                let grad = h * (lq.r_quad[i] * bound + lq.r_lin[i]) + g.dot(&out.nu[i]);
                if pins[i] == Pin::Lower {
                    if grad < -tol * (1.0 + grad.abs()) {
                        return None;
                    }
                    out.zl[i] = grad.max(0.0);
                } else {
                    if -grad < -tol * (1.0 + grad.abs()) {
                        return None;
                    }
                    out.zh[i] = (-grad).max(0.0);
                }
            }
        }
    }
    Some(out)
}

fn finish(
    lq: &LqProblem,
    s: IpState,
    kkt_residual: f64,
    iterations: usize,
    mu_history: Vec<f64>,
) -> Result<PrimalLqSolution> {
    let horizon = lq.grid.n_intervals();
    let n = lq.state_dim();
    let h = lq.grid.h_step();

    let mut states = DMatrix::zeros(horizon + 1, n);
    for i in 0..=horizon {
        states.row_mut(i).copy_from(&s.x[i].transpose());
    }
    let mut controls = DVector::zeros(horizon + 1);
    for i in 0..horizon {
        controls[i] = s.u[i];
    }

    // Costate per node: lambda_{i+1} = nu_i, lambda_0 from the
    // initial-condition row.
    let mut costate = DMatrix::zeros(horizon + 1, n);
    let (f0, _, _) = lq.transition(0);
    let lam0 = f0.transpose() * &s.nu[0] + h * (&lq.w[0] * &s.x[0] + &lq.omega[0]);
    costate.row_mut(0).copy_from(&lam0.transpose());
    for i in 0..horizon {
        costate.row_mut(i + 1).copy_from(&s.nu[i].transpose());
    }

    // Cosmetic control at the last node, consistent with the projection rule.
    let lam_end = s.nu[horizon - 1].clone();
    let target = (-(lq.b[horizon].dot(&lam_end)) - lq.r_lin[horizon]) / lq.r_quad[horizon];
    controls[horizon] =
        project_control(target, lq.alpha[horizon], lq.beta[horizon]).unwrap_or(0.0);

    let traj = Trajectory::new(lq.grid, states, controls)?;
    let objective = lq_objective(lq, &traj)?;
    let costate = CostateTrajectory::new(lq.grid, costate)?;

    Ok(PrimalLqSolution {
        traj,
        costate,
        eta: s.eta,
        objective,
        kkt_residual,
        iterations,
        mu_history,
    })
}
