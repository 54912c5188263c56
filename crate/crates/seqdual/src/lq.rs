//! Time-varying linear-quadratic subproblem data: running cost
//! `1/2 x'Wx + w'x + R/2 u^2 + r u`, dynamics `x' = Ax + Bu + c`, box bounds
//! on `u`, and boundary data.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::trajectory::Trajectory;

/// Per-node coefficient bundle for the LQ subproblem.
///
/// `objective_offset` carries the constant terms dropped from a quadratic
/// expansion so that reported objective values stay on the scale of the
/// nonlinear problem.
#[derive(Debug, Clone)]
pub struct LqProblem {
    pub grid: TimeGrid,
    pub w: Vec<DMatrix<f64>>,
    pub omega: Vec<DVector<f64>>,
    pub r_quad: Vec<f64>,
    pub r_lin: Vec<f64>,
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DVector<f64>>,
    pub c: Vec<DVector<f64>>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub x0: DVector<f64>,
    pub e: DMatrix<f64>,
    pub e_f: DVector<f64>,
    pub objective_offset: f64,
}

impl LqProblem {
    pub fn state_dim(&self) -> usize {
        self.x0.len()
    }

    pub fn terminal_rows(&self) -> usize {
        self.e.nrows()
    }

    /// Validates shapes, positivity of `R`, and near-PSD symmetry of `W`.
    pub fn validate(&self) -> Result<()> {
        let nodes = self.grid.n_nodes();
        let n = self.state_dim();
        let len_ok = self.w.len() == nodes
            && self.omega.len() == nodes
            && self.r_quad.len() == nodes
            && self.r_lin.len() == nodes
            && self.a.len() == nodes
            && self.b.len() == nodes
            && self.c.len() == nodes
            && self.alpha.len() == nodes
            && self.beta.len() == nodes;
        if !len_ok {
            return Err(Error::DimensionMismatch(
                "per-node coefficient arrays must all have node-count length".into(),
            ));
        }
        if self.e.ncols() != n && self.e.nrows() > 0 {
            return Err(Error::DimensionMismatch("terminal matrix column count".into()));
        }
        if self.e.nrows() != self.e_f.len() {
            return Err(Error::DimensionMismatch("terminal rows vs e_f length".into()));
        }
        for i in 0..nodes {
            if self.r_quad[i] <= 0.0 {
                return Err(Error::StrongConvexityViolated { node: i, value: self.r_quad[i] });
            }
            if self.alpha[i] > self.beta[i] {
                return Err(Error::InfeasibleBoxes {
                    node: i,
                    alpha: self.alpha[i],
                    beta: self.beta[i],
                });
            }
            let w = &self.w[i];
            if w.nrows() != n || w.ncols() != n {
                return Err(Error::DimensionMismatch(format!("W shape at node {i}")));
            }
            let scale = w.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
            if (w - w.transpose()).iter().any(|v| v.abs() > 1e-9 * scale) {
                return Err(Error::InvalidProblem(format!("W not symmetric at node {i}")));
            }
            let eig_min = w.clone().symmetric_eigenvalues().min();
            if eig_min < -1e-10 * scale {
                return Err(Error::InvalidProblem(format!(
                    "W has negative eigenvalue {eig_min:.3e} at node {i}"
                )));
            }
            let finite = w.iter().all(|v| v.is_finite())
                && self.omega[i].iter().all(|v| v.is_finite())
                && self.a[i].iter().all(|v| v.is_finite())
                && self.b[i].iter().all(|v| v.is_finite())
                && self.c[i].iter().all(|v| v.is_finite())
                && self.r_quad[i].is_finite()
                && self.r_lin[i].is_finite();
            if !finite {
                return Err(Error::NonFiniteCoefficient { node: i, what: "LQ data".into() });
            }
        }
        Ok(())
    }

    /// Forward-Euler transition factors for interval `i`:
    /// `x_{i+1} = (I + hA_i) x_i + hB_i u_i + h c_i`.
    pub fn transition(&self, i: usize) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let n = self.state_dim();
        let h = self.grid.h_step();
        (
            DMatrix::identity(n, n) + h * &self.a[i],
            h * &self.b[i],
            h * &self.c[i],
        )
    }

    /// Forward-Euler simulation of the LQ dynamics under given node controls.
    pub fn rollout(&self, controls: &DVector<f64>) -> Result<Trajectory> {
        if controls.len() != self.grid.n_nodes() {
            return Err(Error::DimensionMismatch("controls length for LQ rollout".into()));
        }
        let n = self.state_dim();
        let mut states = DMatrix::zeros(self.grid.n_nodes(), n);
        let mut x = self.x0.clone();
        states.row_mut(0).copy_from(&x.transpose());
        for i in 0..self.grid.n_intervals() {
            let (f, g, w) = self.transition(i);
            x = f * x + g * controls[i] + w;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::DynamicsBlowUp { node: i + 1 });
            }
            states.row_mut(i + 1).copy_from(&x.transpose());
        }
        Trajectory::new(self.grid, states, controls.clone())
    }
}

/// Rectangle-rule quadratic cost along a trajectory, plus the expansion
/// offset.
pub fn lq_objective(lq: &LqProblem, traj: &Trajectory) -> Result<f64> {
    if traj.state_dim() != lq.state_dim() {
        return Err(Error::DimensionMismatch("trajectory vs LQ state dim".into()));
    }
    if traj.grid.n_nodes() != lq.grid.n_nodes() {
        return Err(Error::DimensionMismatch("trajectory vs LQ grid".into()));
    }
    let h = lq.grid.h_step();
    let mut total = 0.0;
    for i in 0..lq.grid.n_intervals() {
        let x = traj.state(i);
        let u = traj.controls[i];
        let quad = 0.5 * (&lq.w[i] * &x).dot(&x) + lq.omega[i].dot(&x);
        total += (quad + 0.5 * lq.r_quad[i] * u * u + lq.r_lin[i] * u) * h;
    }
    Ok(total + lq.objective_offset)
}

/// Projection onto `[lo, hi]`; either bound may be infinite.
pub fn project_control(v: f64, lo: f64, hi: f64) -> Result<f64> {
    if lo > hi {
        return Err(Error::InfeasibleBoxes { node: 0, alpha: lo, beta: hi });
    }
    Ok(v.max(lo).min(hi))
}
