//! Exact desk-scale reference for the transcribed QP: enumerate every
//! lower/free/upper activity pattern of the controls, solve the resulting
//! equality-constrained systems densely, and keep the pattern that is both
//! primal and dual feasible. Exponential in the horizon, test-only by design.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lq::{lq_objective, project_control};
use crate::trajectory::{CostateTrajectory, Trajectory};
use crate::transcribe::{PrimalLqSolution, TranscribedQp};

const ENUMERATION_LIMIT: usize = 8;
const FEAS_TOL: f64 = 1e-7;

#[derive(Clone, Copy, PartialEq)]
enum Activity {
    Lower,
    Free,
    Upper,
}

pub fn dense_kkt_oracle(qp: &TranscribedQp) -> Result<PrimalLqSolution> {
    let horizon = qp.lq.grid.n_intervals();
    if horizon > ENUMERATION_LIMIT {
        return Err(Error::InstanceTooLarge {
            n_controls: horizon,
            limit: ENUMERATION_LIMIT,
        });
    }
    for i in 0..horizon {
        if qp.lq.alpha[i] > qp.lq.beta[i] {
            return Err(Error::InfeasibleBoxes {
                node: i,
                alpha: qp.lq.alpha[i],
                beta: qp.lq.beta[i],
            });
        }
    }

    let dense = qp.dense_form();
    let lq = &qp.lq;
    let n = lq.state_dim();
    let nx = qp.n_states();
    let nv = qp.n_variables();
    let ne = qp.n_equalities();

    let mut best: Option<(f64, PrimalLqSolution)> = None;
    let mut pattern = vec![Activity::Free; horizon];
    loop {
        // Skip patterns that pin a control to an infinite bound.
        let representable = pattern.iter().enumerate().all(|(i, a)| match a {
            Activity::Lower => dense.lower[i].is_finite(),
            Activity::Upper => dense.upper[i].is_finite(),
            Activity::Free => true,
        });
        if representable {
            if let Some(candidate) = try_pattern(qp, &dense, &pattern, n, nx, nv, ne) {
                let better = match &best {
                    Some((obj, _)) => candidate.0 < *obj - 1e-12,
                    None => true,
                };
                if better {
                    best = Some(candidate);
                }
            }
        }
        if !advance(&mut pattern) {
            break;
        }
    }

    best.map(|(_, sol)| sol).ok_or_else(|| {
        Error::KktFactorization("no activity pattern satisfied the optimality conditions".into())
    })
}

fn advance(pattern: &mut [Activity]) -> bool {
    for slot in pattern.iter_mut() {
        *slot = match *slot {
            Activity::Free => Activity::Lower,
            Activity::Lower => Activity::Upper,
            Activity::Upper => {
                *slot = Activity::Free;
                continue;
            }
        };
        return true;
    }
    false
}

fn try_pattern(
    qp: &TranscribedQp,
    dense: &crate::transcribe::DenseQp,
    pattern: &[Activity],
    n: usize,
    nx: usize,
    nv: usize,
    ne: usize,
) -> Option<(f64, PrimalLqSolution)> {
    let horizon = pattern.len();
    let active: Vec<usize> = (0..horizon)
        .filter(|&i| pattern[i] != Activity::Free)
        .collect();
    let na = active.len();
    let dim = nv + ne + na;

    // Quasidefinite regularization keeps the system solvable for zero-cost
    // instances and returns the minimum-norm point there.
    let reg = 1e-10;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (nv, nv)).copy_from(&dense.hess);
    for d in 0..nv {
        kkt[(d, d)] += reg;
    }
    kkt.view_mut((0, nv), (nv, ne)).copy_from(&dense.eq.transpose());
    kkt.view_mut((nv, 0), (ne, nv)).copy_from(&dense.eq);
    for (row, &i) in active.iter().enumerate() {
        kkt[(nx + i, nv + ne + row)] = 1.0;
        kkt[(nv + ne + row, nx + i)] = 1.0;
    }
    for d in nv..dim {
        kkt[(d, d)] -= reg;
    }

    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, nv).copy_from(&(-&dense.lin));
    rhs.rows_mut(nv, ne).copy_from(&dense.rhs);
    for (row, &i) in active.iter().enumerate() {
        rhs[nv + ne + row] = match pattern[i] {
            Activity::Lower => dense.lower[i],
            Activity::Upper => dense.upper[i],
            Activity::Free => unreachable!(),
        };
    }

    let sol = kkt.lu().solve(&rhs)?;

    // Primal feasibility of the free controls.
    for i in 0..horizon {
        if pattern[i] == Activity::Free {
            let u = sol[nx + i];
            if u < dense.lower[i] - FEAS_TOL || u > dense.upper[i] + FEAS_TOL {
                return None;
            }
        }
    }
    // Dual feasibility of the pinned controls. Stationarity reads
    // H u + q + G'nu - zl + zh = 0 and the active row enters as +m, so
    // zl = -m at a lower bound and zh = m at an upper bound.
    for (row, &i) in active.iter().enumerate() {
        let mult = sol[nv + ne + row];
        match pattern[i] {
            Activity::Lower => {
                if -mult < -FEAS_TOL {
                    return None;
                }
            }
            Activity::Upper => {
                if mult < -FEAS_TOL {
                    return None;
                }
            }
            Activity::Free => unreachable!(),
        }
    }

    let lq = &qp.lq;
    let h = lq.grid.h_step();
    let mut states = DMatrix::zeros(horizon + 1, n);
    for i in 0..=horizon {
        for j in 0..n {
            states[(i, j)] = sol[i * n + j];
        }
    }
    let mut controls = DVector::zeros(horizon + 1);
    for i in 0..horizon {
        controls[i] = sol[nx + i];
    }

    // Multipliers: rows n.. are the dynamics rows, written with the same
    // bracket as the stationarity convention, then the terminal rows.
    let nu: Vec<DVector<f64>> = (0..horizon)
        .map(|i| DVector::from(sol.rows(nv + n + i * n, n)))
        .collect();
    let eta = DVector::from(sol.rows(nv + n + horizon * n, lq.terminal_rows()));

    let mut costate = DMatrix::zeros(horizon + 1, n);
    let (f0, _, _) = lq.transition(0);
    let lam0 = f0.transpose() * &nu[0] + h * (&lq.w[0] * states.row(0).transpose() + &lq.omega[0]);
    costate.row_mut(0).copy_from(&lam0.transpose());
    for i in 0..horizon {
        costate.row_mut(i + 1).copy_from(&nu[i].transpose());
    }

    let lam_end = &nu[horizon - 1];
    let target = (-(lq.b[horizon].dot(lam_end)) - lq.r_lin[horizon]) / lq.r_quad[horizon];
    controls[horizon] = project_control(target, lq.alpha[horizon], lq.beta[horizon]).unwrap_or(0.0);

    let traj = Trajectory::new(lq.grid, states, controls).ok()?;
    let costate = CostateTrajectory::new(lq.grid, costate).ok()?;
    let objective = lq_objective(lq, &traj).ok()?;
    Some((
        objective,
        PrimalLqSolution {
            traj,
            costate,
            eta,
            objective,
            kkt_residual: 0.0,
            iterations: 0,
            mu_history: Vec::new(),
        },
    ))
}
