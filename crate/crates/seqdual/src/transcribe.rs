//! Forward-Euler transcription of the LQ subproblem into a box-constrained
//! convex QP, plus the primal-side optimality residuals.
//!
//! Decision layout: states `x_0..x_N` (flattened row-major), then controls
//! `u_0..u_{N-1}`. Equality rows: `x_0 = x0`, the `N` dynamics stencils
//! `x_{i+1} = (I + hA_i) x_i + hB_i u_i + h c_i`, then the terminal rows
//! `E x_N = e_f`. Box rows bound the `N` active controls.
//!
//! Costate convention: the reported costate holds one value per node,
//! `lambda_i ~ lambda(t_i)`, where `lambda_{i+1}` is the multiplier on
//! dynamics row `i` and `lambda_0` comes from the initial-condition row. With
//! this pairing the discrete optimum satisfies the backward-difference
//! adjoint stencil, `lambda_N = E' eta`, and the projection formula
//! `u_i = Pr((-B_i' lambda_{i+1} - r_i)/R_i)` exactly, not just to O(h).

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lq::{project_control, LqProblem};
use crate::trajectory::{CostateTrajectory, Trajectory};

/// The transcribed QP. Keeps the structured per-node form; dense matrices are
/// only materialized on demand (enumeration oracle, triplet dump).
#[derive(Debug, Clone)]
pub struct TranscribedQp {
    pub lq: LqProblem,
}

/// Primal subproblem solution with multipliers mapped to the costate
/// convention above.
#[derive(Debug, Clone)]
pub struct PrimalLqSolution {
    pub traj: Trajectory,
    pub costate: CostateTrajectory,
    pub eta: DVector<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    /// Inner iterations spent by the solver that produced this solution.
    pub iterations: usize,
    /// Complementarity measure per iteration; empty for direct solves.
    pub mu_history: Vec<f64>,
}

pub fn transcribe(lq: &LqProblem) -> Result<TranscribedQp> {
    lq.validate()?;
    let k = lq.terminal_rows();
    if k > 0 {
        let svd = lq.e.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smin <= 1e-12 * smax.max(1.0) {
            return Err(Error::RankDeficient(format!(
                "terminal rows have rank < {k} (singular values {smin:.3e}..{smax:.3e})"
            )));
        }
    }
    Ok(TranscribedQp { lq: lq.clone() })
}

impl TranscribedQp {
    pub fn n_states(&self) -> usize {
        self.lq.state_dim() * self.lq.grid.n_nodes()
    }

    pub fn n_controls(&self) -> usize {
        self.lq.grid.n_intervals()
    }

    pub fn n_variables(&self) -> usize {
        self.n_states() + self.n_controls()
    }

    pub fn n_equalities(&self) -> usize {
        let n = self.lq.state_dim();
        n + n * self.lq.grid.n_intervals() + self.lq.terminal_rows()
    }

    /// Dense Hessian, linear term, equality system, and finite bounds of the
    /// flattened QP. Intended for desk-scale verification only.
    pub fn dense_form(&self) -> DenseQp {
        let lq = &self.lq;
        let n = lq.state_dim();
        let horizon = lq.grid.n_intervals();
        let h = lq.grid.h_step();
        let nx = self.n_states();
        let nv = self.n_variables();
        let ne = self.n_equalities();

        let mut hess = DMatrix::zeros(nv, nv);
        let mut lin = DVector::zeros(nv);
        for i in 0..horizon {
            hess.view_mut((i * n, i * n), (n, n)).copy_from(&(h * &lq.w[i]));
            lin.rows_mut(i * n, n).copy_from(&(h * &lq.omega[i]));
            let off = nx + i;
            hess[(off, off)] = h * lq.r_quad[i];
            lin[off] = h * lq.r_lin[i];
        }

        let mut eq = DMatrix::zeros(ne, nv);
        let mut rhs = DVector::zeros(ne);
        eq.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
        rhs.rows_mut(0, n).copy_from(&lq.x0);
        for i in 0..horizon {
            let row = n + i * n;
            let (f, g, w) = lq.transition(i);
            eq.view_mut((row, i * n), (n, n)).copy_from(&f);
            eq.view_mut((row, (i + 1) * n), (n, n))
                .copy_from(&(-DMatrix::identity(n, n)));
            eq.view_mut((row, nx + i), (n, 1)).copy_from(&g);
            rhs.rows_mut(row, n).copy_from(&(-w));
        }
        let k = lq.terminal_rows();
        if k > 0 {
            let row = n + horizon * n;
            eq.view_mut((row, horizon * n), (k, n)).copy_from(&lq.e);
            rhs.rows_mut(row, k).copy_from(&lq.e_f);
        }

        DenseQp {
            hess,
            lin,
            eq,
            rhs,
            lower: lq.alpha[..horizon].to_vec(),
            upper: lq.beta[..horizon].to_vec(),
        }
    }

    /// Sparse triplet dump for external verification. Sections: `H`/`q` for
    /// the objective, `G`/`b` for the equality system, `lb`/`ub` for finite
    /// control bounds (indices into the flattened variable vector).
    pub fn write_triplets<W: Write>(&self, out: &mut W) -> Result<()> {
        let dense = self.dense_form();
        writeln!(out, "qp {} {}", self.n_variables(), self.n_equalities())?;
        for i in 0..dense.hess.nrows() {
            for j in 0..dense.hess.ncols() {
                let v = dense.hess[(i, j)];
                if v != 0.0 {
                    writeln!(out, "H {i} {j} {v:.16e}")?;
                }
            }
        }
        for (i, v) in dense.lin.iter().enumerate() {
            if *v != 0.0 {
                writeln!(out, "q {i} {v:.16e}")?;
            }
        }
        for i in 0..dense.eq.nrows() {
            for j in 0..dense.eq.ncols() {
                let v = dense.eq[(i, j)];
                if v != 0.0 {
                    writeln!(out, "G {i} {j} {v:.16e}")?;
                }
            }
        }
        for (i, v) in dense.rhs.iter().enumerate() {
            if *v != 0.0 {
                writeln!(out, "b {i} {v:.16e}")?;
            }
        }
        let nx = self.n_states();
        for (i, lo) in dense.lower.iter().enumerate() {
            if lo.is_finite() {
                writeln!(out, "lb {} {lo:.16e}", nx + i)?;
            }
        }
        for (i, hi) in dense.upper.iter().enumerate() {
            if hi.is_finite() {
                writeln!(out, "ub {} {hi:.16e}", nx + i)?;
            }
        }
        Ok(())
    }
}

/// Dense view of the transcription.
pub struct DenseQp {
    pub hess: DMatrix<f64>,
    pub lin: DVector<f64>,
    pub eq: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Sup norm over nodes of the discrete optimality residuals: costate stencil,
/// terminal costate condition, control projection condition, dynamics defect,
/// and boundary rows. Returns infinity on non-finite input.
pub fn primal_kkt_residual(lq: &LqProblem, sol: &PrimalLqSolution) -> f64 {
    let horizon = lq.grid.n_intervals();
    let h = lq.grid.h_step();
    let x = &sol.traj;
    let lam = &sol.costate;
    if x.states.iter().any(|v| !v.is_finite()) || lam.values.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let mut worst: f64 = 0.0;

    for i in 0..horizon {
        let xi = x.state(i);
        let li = lam.value(i);
        let ln = lam.value(i + 1);

        // (a) adjoint stencil: (l_{i+1} - l_i)/h + A_i' l_{i+1} + W_i x_i + w_i = 0
        let adj = (&ln - &li) / h + lq.a[i].transpose() * &ln + &lq.w[i] * &xi + &lq.omega[i];
        worst = worst.max(adj.amax());

        // (c) control projection against the costate at the right stencil node
        let target = (-(lq.b[i].dot(&ln)) - lq.r_lin[i]) / lq.r_quad[i];
        let projected = project_control(target, lq.alpha[i], lq.beta[i]).unwrap_or(f64::INFINITY);
        worst = worst.max((x.controls[i] - projected).abs());

        // (d) dynamics defect
        let xn = x.state(i + 1);
        let defect = (&xn - &xi) / h - (&lq.a[i] * &xi + &lq.b[i] * x.controls[i] + &lq.c[i]);
        worst = worst.max(defect.amax());
    }

    // (b) terminal costate condition
    let l_end = lam.value(horizon);
    let terminal = if lq.terminal_rows() > 0 {
        (&l_end - lq.e.transpose() * &sol.eta).amax()
    } else {
        l_end.amax()
    };
    worst = worst.max(terminal);

    // (e) boundary rows
    worst = worst.max((x.state(0) - &lq.x0).amax());
    if lq.terminal_rows() > 0 {
        worst = worst.max((&lq.e * x.state(horizon) - &lq.e_f).amax());
    }
    worst
}
